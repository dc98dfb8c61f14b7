import base64
from html.parser import HTMLParser

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedpb.email_ingest import (
    Document,
    RawEmail,
    dump_jsonl,
    extract_text,
    iter_directory,
    load_corpus,
    parse_eml,
    read_jsonl,
    strip_html,
)
from fedpb.errors import DataUnreadable, MalformedMessage


_BLOCKS = {"p", "div", "br", "td", "tr", "table", "li", "body", "head", "html", "title"}


class _TextOnly(HTMLParser):
    """Reference converter: visible character data, script/style skipped, blocks spaced."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.chunks, self._skip = [], 0

    def handle_starttag(self, tag, attrs):
        if tag in ("script", "style"):
            self._skip += 1
        if tag in _BLOCKS:
            self.chunks.append(" ")

    def handle_endtag(self, tag):
        if tag in ("script", "style"):
            self._skip -= 1
        if tag in _BLOCKS:
            self.chunks.append(" ")

    def handle_data(self, data):
        if not self._skip:
            self.chunks.append(data)


def reference_text(markup):
    p = _TextOnly()
    p.feed(markup)
    p.close()
    return " ".join("".join(p.chunks).split())


def test_minimal_message():
    raw = parse_eml(b"Subject: hi\n\nhello")
    assert raw.headers == {"subject": "hi"}
    assert raw.body_parts == [("plain", "hello")]


def test_base64_part_matches_stdlib_decoder():
    payload = "aGVsbG8="
    msg = (
        "Subject: b\nContent-Type: text/plain; charset=utf-8\n"
        "Content-Transfer-Encoding: base64\n\n" + payload + "\n"
    ).encode()
    assert parse_eml(msg).body_parts == [("plain", base64.b64decode(payload).decode())]


def test_quoted_printable_part():
    msg = (
        b"Subject: q\nContent-Type: text/plain; charset=utf-8\n"
        b"Content-Transfer-Encoding: quoted-printable\n\ncaf=C3=A9 ok\n"
    )
    assert parse_eml(msg).body_parts[0][1].strip() == "café ok"


MULTIPART = b"""Subject: pics
MIME-Version: 1.0
Content-Type: multipart/mixed; boundary="XX"

--XX
Content-Type: image/png
Content-Transfer-Encoding: base64

iVBORw0KGgo=
--XX
Content-Type: text/plain

the text part
--XX
Content-Type: text/html

<p>second <b>part</b></p>
--XX--
"""


def test_non_text_parts_dropped_and_order_kept():
    parts = parse_eml(MULTIPART).body_parts
    assert [k for k, _ in parts] == ["plain", "html"]
    assert parts[0][1].strip() == "the text part"


def test_attachment_text_part_dropped():
    msg = MULTIPART.replace(b"Content-Type: text/plain\n", b"Content-Type: text/plain\nContent-Disposition: attachment; filename=a.txt\n")
    assert [k for k, _ in parse_eml(msg).body_parts] == ["html"]


def test_missing_separator_is_malformed():
    with pytest.raises(MalformedMessage):
        parse_eml(b"Subject: no body at all")


def test_repeated_headers_keep_first():
    raw = parse_eml(b"Received: a\nReceived: b\nReceived: c\nSubject: s\n\nx")
    assert (raw.headers["received"], raw.headers["received_1"], raw.headers["received_2"]) == ("a", "b", "c")


def test_encoded_subject_and_bad_charset():
    raw = parse_eml(b"Subject: =?utf-8?b?SGVsbG8=?=\nContent-Type: text/plain; charset=bogus-x\n\nhi \xff there")
    assert raw.headers["subject"] == "Hello"
    assert raw.body_parts[0][1] == "hi � there"


def test_extract_concatenates_subject_and_body():
    doc = extract_text(RawEmail({"subject": "Invoice"}, [("plain", "pay now")]), 1)
    assert doc == Document("Invoice pay now", 1)


def test_extract_without_subject():
    assert extract_text(RawEmail({}, [("plain", "x")]), 0).text == "x"


def test_extract_empty():
    assert extract_text(RawEmail({}, []), 0).text == ""


def test_extract_rejects_bad_label():
    with pytest.raises(ValueError):
        extract_text(RawEmail({}, []), 2)


def test_html_body_against_reference_converter():
    frag = "<p>Click <b>here</b></p>"
    doc = extract_text(RawEmail({}, [("html", frag)]), 1)
    assert doc.text == reference_text(frag) == "Click here"


@pytest.mark.parametrize(
    "markup",
    [
        "<div><p>Dear customer,</p><p>your <a href='x'>account</a> is locked</p></div>",
        "<table><tr><td>a &amp; b</td><td>&#169; 2020</td></tr></table>",
        "<html><head><style>p{}</style></head><body>hi <i>there</i></body></html>",
    ],
)
def test_strip_html_agrees_with_reference(markup):
    assert strip_html(markup) == reference_text(markup)


@pytest.mark.parametrize(
    "markup, expected",
    [
        ("plain text", "plain text"),
        ("<script>var x=1;</script>hi", "hi"),
        ("a&amp;b", "a&b"),
        ("&lt;p&gt; &quot;q&quot; &#65;", '"q" A'),
        ("a<br>b", "a b"),
        ("x <!-- hidden --> y", "x y"),
        ("<STYLE type=text/css>.a{}</STYLE>ok", "ok"),
        ("<a title='1>2'>t</a>", "t"),
        ("3 < 4 and 5 > 2", "3 < 4 and 5 > 2"),
        ("unclosed <b text", "unclosed b text"),
    ],
)
def test_strip_html_cases(markup, expected):
    assert strip_html(markup) == expected


html_soup = st.lists(
    st.one_of(
        st.sampled_from(["<p>", "</p>", "<b>", "<br/>", "<script>", "</script>", "&amp;", "&lt;", "<", ">", "<!--", "-->", "'", '"']),
        st.text(max_size=8),
    ),
    max_size=30,
).map("".join)


@settings(max_examples=300, deadline=None)
@given(html_soup)
def test_strip_html_idempotent(markup):
    once = strip_html(markup)
    assert strip_html(once) == once


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=40), html_soup)
def test_documents_have_no_residual_tags(plain, markup):
    doc = extract_text(RawEmail({"subject": plain}, [("plain", plain), ("html", markup)]), 0)
    for i, ch in enumerate(doc.text[:-1]):
        assert not (ch == "<" and doc.text[i + 1].isascii() and doc.text[i + 1].isalpha())


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=300), st.binary(max_size=300))
def test_parse_is_total(head, body):
    raw = parse_eml(head + b"\n\n" + body)
    assert all(isinstance(t, str) for _, t in raw.body_parts)


def test_directory_loading_and_jsonl(tmp_path):
    for label in ("phishing", "legitimate"):
        d = tmp_path / label / "sub"
        d.mkdir(parents=True)
        (d / "b.eml").write_bytes(f"Subject: {label} two\n\nbody".encode())
        (d / "a.eml").write_bytes(f"Subject: {label} one\n\nbody".encode())
        (d / "bad.eml").write_bytes(b"no separator")
        (d / "note.txt").write_bytes(b"Subject: x\n\nignored")
    phish, legit = load_corpus(tmp_path / "phishing", tmp_path / "legitimate")
    assert [d.text for d in phish] == ["phishing one body", "phishing two body"]
    assert {d.label for d in phish} == {1} and {d.label for d in legit} == {0}
    assert phish[0].source_id == "phishing/sub/a.eml"
    out = tmp_path / "docs.jsonl"
    assert dump_jsonl(phish + legit, out) == 4
    assert read_jsonl(out) == phish + legit


def test_missing_directory():
    with pytest.raises(DataUnreadable):
        list(iter_directory("/nonexistent/dir", 1))

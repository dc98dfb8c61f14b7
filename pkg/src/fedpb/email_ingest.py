"""Turn exported .eml files into labeled plain-text documents."""

from __future__ import annotations

import codecs
import email
import email.policy
import html
import json
import os
import re
from dataclasses import asdict, dataclass
from email.header import decode_header, make_header
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataUnreadable, MalformedMessage

LEGITIMATE, PHISHING = 0, 1
LABEL_DIRS = {"legitimate": LEGITIMATE, "phishing": PHISHING}

_SEPARATOR = re.compile(rb"\r?\n\r?\n")
_WS = re.compile(r"\s+")
_TAG_OPENER = re.compile(r"<(?=[A-Za-z])")

BLOCK_TAGS = frozenset(
    """address article aside blockquote body br caption center dd details dialog dir div dl dt
    fieldset figcaption figure footer form h1 h2 h3 h4 h5 h6 head header hr html iframe img
    legend li main menu nav noscript ol option p pre section summary table tbody td tfoot th
    thead title tr ul""".split()
)
HIDDEN_TAGS = ("script", "style")


@dataclass
class RawEmail:
    headers: dict[str, str]
    body_parts: list[tuple[str, str]]  # ("plain" | "html", decoded text)


@dataclass(frozen=True)
class Document:
    text: str
    label: int
    source_id: str = ""


def _header_text(value) -> str:
    try:
        return str(make_header(decode_header(str(value))))
    except Exception:
        return str(value)


def _decode_payload(part) -> str:
    try:
        payload = part.get_payload(decode=True)
    except Exception:
        payload = None
    if payload is None:
        raw = part.get_payload()
        return raw if isinstance(raw, str) else ""
    charset = part.get_content_charset() or "utf-8"
    try:
        codecs.lookup(charset)
    except LookupError:
        charset = "utf-8"
    try:
        return payload.decode(charset, errors="replace")
    except Exception:
        return payload.decode("utf-8", errors="replace")


def parse_eml(data: bytes) -> RawEmail:
    """Decode headers and the text/plain and text/html parts, in document order.

    Repeated header names keep the first value under the bare name; later
    ones are stored as ``name_1``, ``name_2``, ...
    """
    if not _SEPARATOR.search(data):
        raise MalformedMessage("no blank line between headers and body")
    msg = email.message_from_bytes(data, policy=email.policy.compat32)

    headers: dict[str, str] = {}
    counts: dict[str, int] = {}
    for name, value in msg.items():
        key = name.strip().lower()
        n = counts.get(key, 0)
        counts[key] = n + 1
        headers[key if n == 0 else f"{key}_{n}"] = _header_text(value)

    parts: list[tuple[str, str]] = []
    for part in msg.walk():
        if part.is_multipart():
            continue
        ctype = part.get_content_type()
        if ctype not in ("text/plain", "text/html"):
            continue
        disposition = str(part.get("content-disposition", "")).lower()
        if disposition.startswith("attachment"):
            continue
        parts.append(("html" if ctype == "text/html" else "plain", _decode_payload(part)))
    return RawEmail(headers, parts)


def _find_tag_end(s: str, start: int) -> int:
    """Index of the '>' closing a tag opened at ``start``, honoring quotes; -1 if none."""
    quote = None
    for i in range(start + 1, len(s)):
        ch = s[i]
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == ">":
            return i
    # unbalanced quote: fall back to the first '>'
    return s.find(">", start + 1)


def _strip_once(s: str) -> str:
    out: list[str] = []
    i, n = 0, len(s)
    while i < n:
        lt = s.find("<", i)
        if lt < 0:
            out.append(s[i:])
            break
        out.append(s[i:lt])
        nxt = s[lt + 1 : lt + 2]
        if s.startswith("<!--", lt):
            end = s.find("-->", lt + 4)
            i = n if end < 0 else end + 3
            out.append(" ")
            continue
        if not (nxt.isascii() and (nxt.isalpha() or nxt in "/!?")):
            out.append("<")
            i = lt + 1
            continue
        end = _find_tag_end(s, lt)
        if end < 0:
            # never-closed opener: drop the '<', keep what follows as text
            i = lt + 1
            continue
        m = re.match(r"</?\s*([A-Za-z][A-Za-z0-9]*)", s[lt : end + 1])
        name = m.group(1).lower() if m else ""
        closing = s.startswith("</", lt)
        if name in HIDDEN_TAGS and not closing:
            close = re.compile(f"</{name}", re.IGNORECASE).search(s, end + 1)
            if close is None:
                i = n
            else:
                close_end = s.find(">", close.start())
                i = n if close_end < 0 else close_end + 1
            out.append(" ")
            continue
        if name in BLOCK_TAGS:
            out.append(" ")
        i = end + 1
    text = html.unescape("".join(out))
    return _WS.sub(" ", text).strip()


def strip_html(markup: str) -> str:
    """Visible text of an HTML fragment, whitespace-collapsed.

    Tags are removed, script/style bodies dropped, entities decoded and block
    tags turned into spaces. Repeats until stable so entity-encoded markup
    such as ``&lt;b&gt;`` cannot leave a tag behind.
    """
    prev = markup
    while True:
        cur = _strip_once(prev)
        if cur == prev:
            return cur
        prev = cur


def normalize_whitespace(text: str) -> str:
    return _WS.sub(" ", text).strip()


def extract_text(raw: RawEmail, label: int, source_id: str = "") -> Document:
    """Subject, a space, then every body part (HTML stripped), whitespace-normalized."""
    if label not in (LEGITIMATE, PHISHING):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    body = " ".join(strip_html(t) if kind == "html" else t for kind, t in raw.body_parts)
    text = raw.headers.get("subject", "") + " " + body
    # a literal '<' before a letter in plain text would read as a tag opener
    text = _TAG_OPENER.sub(" ", text)
    return Document(normalize_whitespace(text), label, source_id)


def load_file(path: str | os.PathLike, label: int, source_id: str | None = None) -> Document:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataUnreadable(path, str(exc)) from exc
    return extract_text(parse_eml(data), label, source_id or str(path))


def iter_directory(root: str | os.PathLike, label: int) -> Iterator[Document]:
    """Every *.eml below ``root`` in sorted path order; malformed files are skipped."""
    root = Path(root)
    if not root.is_dir():
        raise DataUnreadable(root, "not a directory")
    for path in sorted(root.rglob("*.eml")):
        try:
            yield load_file(path, label, str(path.relative_to(root.parent)))
        except MalformedMessage:
            continue


def load_corpus(phishing_dir, legitimate_dir) -> tuple[list[Document], list[Document]]:
    return list(iter_directory(phishing_dir, PHISHING)), list(iter_directory(legitimate_dir, LEGITIMATE))


def dump_jsonl(docs: Iterable[Document], path: str | os.PathLike) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            rec = {"source_id": doc.source_id, "label": doc.label, "text": doc.text}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_jsonl(path: str | os.PathLike) -> list[Document]:
    with open(path, encoding="utf-8") as fh:
        return [Document(**{k: r[k] for k in ("text", "label", "source_id")})
                for r in map(json.loads, fh) if r]


def document_dict(doc: Document) -> dict:
    return asdict(doc)

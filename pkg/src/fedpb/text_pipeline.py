"""Six-step text normalization: letters only, lowercase, tokenize, lemmatize,
drop stop words and one-letter tokens, rejoin."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .email_ingest import Document

VOWELS = frozenset("aeiou")

# Stems that lost a silent "e" when -ing/-ed was stripped.
_E_RESTORE = re.compile(
    r"(at|bl|iz|yz|v|[^aeioul]l|[^ck]c|[^aeiou][iu]d|[^aeiou]ur|eas|aus|ais|chas|[ae]ng|ag|rg|dg"
    r"|[nrp]s|[vrmcn]is|[pcb]ut|[^aeiou]ir|quir|sum|com|[^aeiou]in|[^aeiou]ar|[lp]et"
    r"|grad|vok|crib)$"
)


def _read_list(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


def _bundled(name: str):
    return resources.files("fedpb").joinpath("data", name)


@dataclass(frozen=True)
class Lexicon:
    """Stop words and lemma exceptions, loaded once and shared read-only."""

    stopwords: frozenset[str]
    exceptions: dict[str, str] = field(hash=False, compare=False)

    @classmethod
    def load(cls, stopwords_path=None, exceptions_path=None) -> "Lexicon":
        stop = _read_list(stopwords_path or _bundled("stopwords.txt"))
        exc = {}
        for line in _read_list(exceptions_path or _bundled("lemma_exceptions.txt")):
            word, lemma = line.split()[:2]
            exc[word] = lemma
        return cls(frozenset(stop), exc)


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    return Lexicon.load()


@dataclass(frozen=True)
class ProcessedText:
    tokens: tuple[str, ...]
    label: int
    source_id: str = ""

    def joined(self) -> str:
        return " ".join(self.tokens)


def clean_chars(text: str) -> str:
    """Non-letters become spaces; letters are lowercased; non-ASCII letters dropped."""
    out = []
    for ch in text:
        if ch.isalpha():
            for lc in ch.lower():
                if "a" <= lc <= "z":
                    out.append(lc)
        else:
            out.append(" ")
    return "".join(out)


def tokenize(text: str) -> list[str]:
    return text.split()


def _has_vowel(s: str) -> bool:
    for i, ch in enumerate(s):
        if ch in VOWELS or (ch == "y" and i > 0 and s[i - 1] not in VOWELS):
            return True
    return False


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Number of vowel-consonant sequences (Porter's m)."""
    m, prev_vowel = 0, False
    for i in range(len(stem)):
        vowel = not _is_consonant(stem, i)
        if prev_vowel and not vowel:
            m += 1
        prev_vowel = vowel
    return m


def _cvc(stem: str) -> bool:
    if len(stem) < 3:
        return False
    return (
        _is_consonant(stem, -3 + len(stem))
        and not _is_consonant(stem, -2 + len(stem))
        and _is_consonant(stem, len(stem) - 1)
        and stem[-1] not in "wxy"
    )


def _restore(stem: str) -> str:
    """Undo consonant doubling or restore a dropped final 'e'."""
    if len(stem) >= 4 and stem[-1] == stem[-2] and _is_consonant(stem, len(stem) - 1):
        if stem[-1] not in "lsfz":
            return stem[:-1]
        if stem[-1] == "l" and stem[-3] in "eo" and _measure(stem[:-1]) >= 2:
            return stem[:-1]
        return stem
    if _E_RESTORE.search(stem) or (_measure(stem) == 1 and _cvc(stem)):
        return stem + "e"
    return stem


def _strip_once(word: str) -> str:
    n = len(word)
    if n <= 3:
        return word
    if word.endswith("ies"):
        return word[:-3] + "y" if n > 4 else word[:-1]
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith(("xes", "ches", "shes", "zzes")):
        return word[:-2]
    if word.endswith("s"):
        if word.endswith(("ss", "us", "is")):
            return word
        return word[:-1]
    if word.endswith("ied"):
        return word[:-3] + "y" if n > 4 else word[:-1]
    if word.endswith("eed"):
        return word
    if word.endswith("ed"):
        stem = word[:-2]
        return _restore(stem) if _has_vowel(stem) and len(stem) >= 2 else word
    if word.endswith("ing"):
        stem = word[:-3]
        return _restore(stem) if _has_vowel(stem) and len(stem) >= 2 else word
    if word.endswith("iest") and n > 5:
        return word[:-4] + "y"
    if word.endswith("ier") and n > 4:
        return word[:-3] + "y"
    return word


def lemmatize(token: str, lexicon: Lexicon | None = None) -> str:
    """Dictionary form from the exception table, else suffix rules to a fixed point."""
    exc = (lexicon or default_lexicon()).exceptions
    word = token
    while True:
        if word in exc:
            return exc[word]
        nxt = _strip_once(word)
        if nxt == word:
            return word
        word = nxt


def filter_tokens(tokens, lexicon: Lexicon | None = None) -> list[str]:
    stop = (lexicon or default_lexicon()).stopwords
    return [t for t in tokens if len(t) >= 2 and t not in stop]


def preprocess(doc: Document, lexicon: Lexicon | None = None) -> ProcessedText:
    lexicon = lexicon or default_lexicon()
    tokens = [lemmatize(t, lexicon) for t in tokenize(clean_chars(doc.text))]
    return ProcessedText(tuple(filter_tokens(tokens, lexicon)), doc.label, doc.source_id)


def load_lexicon(stopwords_path: str | os.PathLike | None = None,
                 exceptions_path: str | os.PathLike | None = None) -> Lexicon:
    if stopwords_path is None and exceptions_path is None:
        return default_lexicon()
    return Lexicon.load(stopwords_path, exceptions_path)

"""Synthetic embedding and two-class corpus for desk-scale experiments.

Words are pronounceable pseudo-words chosen to pass through the text
pipeline unchanged, so a generated document round-trips through
.eml -> text -> tokens -> indices without OOV hits.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from email.message import EmailMessage
from pathlib import Path

import numpy as np

from ..email_ingest import LEGITIMATE, PHISHING, Document
from ..embedding import EmbeddingTable, table_from_arrays, write_embedding
from ..errors import ConfigInvalid
from ..text_pipeline import default_lexicon, lemmatize

ONSETS = "b d f g h j k l m n p r t v w z br dr gr kl pl tr".split()
NUCLEI = "a e i o u".split()


def pseudo_words(n: int, rng: np.random.Generator) -> list[str]:
    """n distinct words of 2-4 open syllables that the pipeline leaves alone."""
    lex = default_lexicon()
    seen: set[str] = set()
    out: list[str] = []
    while len(out) < n:
        k = int(rng.integers(2, 5))
        w = "".join(ONSETS[rng.integers(len(ONSETS))] + NUCLEI[rng.integers(len(NUCLEI))] for _ in range(k))
        if w in seen or w in lex.stopwords or lemmatize(w, lex) != w:
            continue
        seen.add(w)
        out.append(w)
    return out


def gen_synthetic_embedding(
    n_words: int = 3000,
    dim: int = 100,
    seed: int = 0,
    n_clusters: int = 40,
    scale: float = 0.2,
    spread: float = 0.35,
) -> tuple[list[str], np.ndarray]:
    """Clustered vectors: each word is a cluster centre plus isotropic noise.

    ``scale`` is the per-entry std of the centres; ``spread`` the noise std
    relative to it.
    """
    rng = np.random.default_rng([seed, 101])
    words = pseudo_words(n_words, rng)
    centres = rng.normal(0.0, scale, size=(n_clusters, dim))
    assign = rng.integers(0, n_clusters, size=n_words)
    vectors = centres[assign] + rng.normal(0.0, scale * spread, size=(n_words, dim))
    return words, vectors


def synthetic_table(n_words: int = 3000, dim: int = 100, seed: int = 0) -> EmbeddingTable:
    return table_from_arrays(*gen_synthetic_embedding(n_words, dim, seed))


@dataclass(frozen=True)
class CorpusSpec:
    n_per_class: int = 594
    pool_size: int = 60
    topic_rate: float = 0.4
    cross_rate: float = 0.04
    min_len: int = 10
    max_len: int = 250

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ConfigInvalid("n_per_class", f"must be >= 1, got {self.n_per_class}")
        if not 0.0 <= self.cross_rate <= self.topic_rate <= 1.0 - self.cross_rate:
            raise ConfigInvalid("topic_rate", "need 0 <= cross_rate <= topic_rate <= 1 - cross_rate")


def topic_pools(table: EmbeddingTable, pool_size: int, rng: np.random.Generator):
    """Two disjoint pools of nearest neighbours (cosine) of two anchor words."""
    words = table.words()
    vecs = table.vectors[1 : len(words) + 1]
    unit = vecs / np.maximum(np.linalg.norm(vecs, axis=1, keepdims=True), 1e-12)
    if 2 * pool_size >= len(words):
        raise ConfigInvalid("pool_size", f"{pool_size} too large for a {len(words)}-word vocabulary")
    a = int(rng.integers(len(words)))
    sims_a = unit @ unit[a]
    # second anchor: far from the first
    far = np.argsort(sims_a, kind="stable")[: max(1, len(words) // 4)]
    b = int(far[rng.integers(len(far))])
    pool_a = [int(i) for i in np.argsort(-sims_a, kind="stable")[:pool_size]]
    taken = set(pool_a)
    pool_b = [int(i) for i in np.argsort(-(unit @ unit[b]), kind="stable") if int(i) not in taken][:pool_size]
    taken |= set(pool_b)
    background = [i for i in range(len(words)) if i not in taken]
    pick = lambda ids: [words[i] for i in ids]  # noqa: E731
    return pick(pool_a), pick(pool_b), pick(background)


def gen_synthetic_corpus(
    n_per_class: int, seed: int, vocab: EmbeddingTable, spec: CorpusSpec | None = None
) -> tuple[list[Document], list[Document]]:
    """Class-conditional bag-of-words documents over the embedding vocabulary.

    Each token comes from the document's own topic pool with probability
    ``topic_rate``, from the other class's pool with ``cross_rate`` and
    from the shared background otherwise.
    """
    spec = spec or CorpusSpec(n_per_class=n_per_class)
    if n_per_class < 1:
        raise ConfigInvalid("n_per_class", f"must be >= 1, got {n_per_class}")
    rng = np.random.default_rng([seed, 102])
    phish_pool, legit_pool, background = topic_pools(vocab, spec.pool_size, rng)
    out = {}
    for label, own, other in ((PHISHING, phish_pool, legit_pool), (LEGITIMATE, legit_pool, phish_pool)):
        docs = []
        for i in range(n_per_class):
            n = int(rng.integers(spec.min_len, spec.max_len + 1))
            u = rng.random(n)
            src = np.where(u < spec.topic_rate, 0, np.where(u < spec.topic_rate + spec.cross_rate, 1, 2))
            pools = (own, other, background)
            toks = [pools[s][rng.integers(len(pools[s]))] for s in src]
            name = "phishing" if label == PHISHING else "legitimate"
            docs.append(Document(" ".join(toks), label, f"{name}/{i:05d}.eml"))
        out[label] = docs
    return out[PHISHING], out[LEGITIMATE]


def to_eml(doc: Document, index: int, html_every: int = 3) -> bytes:
    """One message; the first few words become the subject, every third body is HTML."""
    words = doc.text.split()
    subject, body = " ".join(words[:4]), words[4:]
    msg = EmailMessage()
    msg["From"] = f"sender{index}@example.org"
    msg["To"] = "inbox@example.org"
    msg["Subject"] = subject
    if html_every and index % html_every == 0:
        paras = "".join(f"<p>{' '.join(body[j : j + 12])}</p>" for j in range(0, len(body), 12))
        msg.set_content(f"<html><body>{paras}</body></html>", subtype="html")
    else:
        msg.set_content(" ".join(body))
    return msg.as_bytes()


def write_corpus(phishing: list[Document], legitimate: list[Document], root: str | os.PathLike) -> Path:
    """Lay out ``root/phishing/*.eml`` and ``root/legitimate/*.eml``."""
    root = Path(root)
    for name, docs in (("phishing", phishing), ("legitimate", legitimate)):
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i, doc in enumerate(docs):
            (d / f"{i:05d}.eml").write_bytes(to_eml(doc, i))
    return root


def write_synthetic_embedding(path: str | os.PathLike, n_words: int = 3000, dim: int = 100, seed: int = 0) -> None:
    write_embedding(path, *gen_synthetic_embedding(n_words, dim, seed))

"""Seed sweeps, the K x alpha grid and round-log bookkeeping.

Every number in a summary is recomputed from the round CSVs on disk, so a
summary can always be regenerated from the logs alone.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..email_ingest import load_corpus
from ..embedding import EmbeddingTable, EncodedSample, Rejected, dedupe, encode, load_embedding
from ..errors import ConfigInvalid, DataUnreadable
from ..federated import RoundRecord, Trainer, run_federated, train_centralized, train_standalone
from ..nn.checkpoint import save_checkpoint
from ..partition import SplitSpec, balance_and_split, partition, write_manifest
from ..text_pipeline import load_lexicon, preprocess
from .config import GRID_ALPHA, GRID_K, K_SELECTED, ExperimentConfig, write_config_file
from .synthetic import gen_synthetic_corpus, synthetic_table

log = logging.getLogger("fedpb")

CSV_COLUMNS = ("round", "accuracy", "mean_loss", "selected_ids")
LAST_N = 5
NON_CONVERGED_BELOW = 0.6


@dataclass
class PreparedData:
    table: EmbeddingTable
    phishing: list[EncodedSample]
    legitimate: list[EncodedSample]
    rejected: int = 0
    duplicates: int = 0


def _encode_all(docs, table, max_len, lexicon) -> tuple[list[EncodedSample], int]:
    kept, rejected = [], 0
    for doc in docs:
        enc = encode(preprocess(doc, lexicon), table, max_len=max_len)
        if isinstance(enc, Rejected):
            rejected += 1
        else:
            kept.append(enc)
    return kept, rejected


@lru_cache(maxsize=4)
def _prepare(phishing_dir, legitimate_dir, embedding, embed_dim, seq_len, per_class, synthetic_seed,
             stopwords="", lemma_exceptions=""):
    try:
        lexicon = load_lexicon(stopwords or None, lemma_exceptions or None)
    except (OSError, ValueError) as exc:
        raise DataUnreadable(stopwords or lemma_exceptions, str(exc)) from exc
    if embedding:
        table = load_embedding(embedding, embed_dim)
    elif phishing_dir:
        raise ConfigInvalid("embedding", "an embedding file is required with real email directories")
    else:
        table = synthetic_table(dim=embed_dim, seed=synthetic_seed)
    if phishing_dir:
        phish_docs, legit_docs = load_corpus(phishing_dir, legitimate_dir)
    else:
        phish_docs, legit_docs = gen_synthetic_corpus(per_class, synthetic_seed, table)
    phish, rej_p = _encode_all(phish_docs, table, seq_len, lexicon)
    legit, rej_l = _encode_all(legit_docs, table, seq_len, lexicon)
    n_before = len(phish) + len(legit)
    phish, legit = dedupe(phish), dedupe(legit)
    return PreparedData(table, phish, legit, rej_p + rej_l, n_before - len(phish) - len(legit))


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Ingest, preprocess, encode and dedupe; cached per data source."""
    return _prepare(
        cfg.phishing_dir, cfg.legitimate_dir, cfg.embedding, cfg.embed_dim, cfg.seq_len,
        cfg.synthetic_per_class, cfg.synthetic_seed, cfg.stopwords, cfg.lemma_exceptions,
    )


# --- round logs ----------------------------------------------------------------


def write_round_csv(path: str | os.PathLike, history: list[RoundRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in history:
            w.writerow([r.round, repr(float(r.accuracy)), repr(float(r.mean_loss)),
                        ";".join(str(k) for k in r.selected)])


def read_round_csv(path: str | os.PathLike) -> list[RoundRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        RoundRecord(
            int(r["round"]), float(r["accuracy"]), float(r["mean_loss"]),
            tuple(int(k) for k in r["selected_ids"].split(";") if k),
        )
        for r in rows
    ]


def seed_logs(out_dir: Path, seed: int) -> list[Path]:
    """The round CSVs of one seed: one file, or one per client for standalone runs."""
    single = out_dir / f"seed{seed}.csv"
    if single.exists():
        return [single]
    return sorted(out_dir.glob(f"seed{seed}_client*.csv"))


# --- one seed ---------------------------------------------------------------------


def run_seed(cfg: ExperimentConfig, seed: int) -> None:
    data = prepare_data(cfg)
    out = Path(cfg.out_dir)
    trainer = Trainer(cfg.shape, data.table, cfg.train_config)
    train, test = balance_and_split(data.phishing, data.legitimate, seed)
    if cfg.mode == "centralized":
        res = train_centralized(trainer, train, test, seed)
        write_round_csv(out / f"seed{seed}.csv", res.history)
        return
    clients = partition(train, SplitSpec(cfg.K, cfg.alpha, seed))
    write_manifest(clients, out / f"seed{seed}_partition.json")
    if cfg.mode == "standalone":
        tail = cfg.standalone_eval_tail or None
        for c in clients:
            res = train_standalone(trainer, c, test, seed, eval_tail=tail)
            write_round_csv(out / f"seed{seed}_client{c.client_id:02d}.csv", res.history)
        return

    ckpt_dir = out / "checkpoints"

    def on_round(server, rec):
        log.debug("seed %d round %d acc %.4f", seed, rec.round, rec.accuracy)
        if cfg.checkpoint_every and rec.round % cfg.checkpoint_every == 0:
            ckpt_dir.mkdir(exist_ok=True)
            save_checkpoint(ckpt_dir / f"seed{seed}_round{rec.round:03d}.npz", server.global_params,
                            cfg.shape, {"seed": seed, "round": rec.round, "embedding": data.table.checksum()})

    server = run_federated(trainer, clients, test, cfg.rounds, cfg.K_selected, seed, on_round)
    write_round_csv(out / f"seed{seed}.csv", server.history)


# --- summaries ----------------------------------------------------------------------


@dataclass
class ExperimentSummary:
    fingerprint: str
    mode: str
    K: int
    K_selected: int
    alpha: float
    seeds: list[int]
    per_seed_final: dict[str, float]
    per_seed_last5: dict[str, float]
    mean_last5: float
    std_last5: float
    mean_final: float
    non_converged: bool
    per_client_last5: dict[str, list[float]] = field(default_factory=dict)
    out_dir: str = ""

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("out_dir")
        return d


def _last_mean(history: list[RoundRecord], n: int = LAST_N) -> float:
    """Mean of the last n evaluated accuracies; unevaluated epochs are NaN and skipped."""
    acc = [r.accuracy for r in history if math.isfinite(r.accuracy)]
    return float(np.mean(acc[-n:])) if acc else math.nan


def summarize(out_dir: str | os.PathLike, cfg: ExperimentConfig) -> ExperimentSummary:
    """Recompute the summary of an experiment from its round CSVs."""
    out = Path(out_dir)
    final, last5, per_client = {}, {}, {}
    for seed in cfg.seeds:
        logs = [read_round_csv(p) for p in seed_logs(out, seed)]
        if not logs:
            raise FileNotFoundError(f"no round logs for seed {seed} in {out}")
        clients_last5 = [_last_mean(h) for h in logs]
        final[str(seed)] = float(np.mean([h[-1].accuracy for h in logs]))
        last5[str(seed)] = float(np.mean(clients_last5))
        if cfg.mode == "standalone":
            per_client[str(seed)] = clients_last5
    values = np.array(list(last5.values()))
    mean_final = float(np.mean(list(final.values())))
    return ExperimentSummary(
        fingerprint=cfg.fingerprint(),
        mode=cfg.mode,
        K=cfg.K,
        K_selected=cfg.K_selected,
        alpha=cfg.alpha,
        seeds=list(cfg.seeds),
        per_seed_final=final,
        per_seed_last5=last5,
        mean_last5=float(values.mean()),
        std_last5=float(values.std()),
        mean_final=mean_final,
        non_converged=bool(mean_final < NON_CONVERGED_BELOW),
        per_client_last5=per_client,
        out_dir=str(out),
    )


def load_summary(out_dir: str | os.PathLike) -> dict:
    with open(Path(out_dir) / "summary.json", encoding="utf-8") as fh:
        return json.load(fh)


def run_experiment(cfg: ExperimentConfig) -> ExperimentSummary:
    """All seeds of one configuration; writes round CSVs and summary.json."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config_file(cfg, out / "config.txt")
    prepare_data(cfg)  # fail fast, and warm the cache before any fork
    log.info("%s K=%d K_sel=%d alpha=%g seeds=%s -> %s", cfg.mode, cfg.K, cfg.K_selected,
             cfg.alpha, ",".join(map(str, cfg.seeds)), out)
    if cfg.jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(cfg.seeds))) as pool:
            list(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        for seed in cfg.seeds:
            run_seed(cfg, seed)
    summary = summarize(out, cfg)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary.to_json(), fh, indent=1, sort_keys=True)
    return summary


def cell_dir(base: str | os.PathLike, K: int, alpha: float) -> Path:
    return Path(base) / f"K{K}_alpha{alpha:g}"


def grid(base: ExperimentConfig, Ks=GRID_K, alphas=GRID_ALPHA) -> list[ExperimentSummary]:
    """Sweep K x alpha with K_selected tied to K; writes grid.csv next to the cells."""
    summaries = []
    for K in Ks:
        for alpha in alphas:
            cfg = base.replace(mode="federated", K=K, K_selected=K_SELECTED.get(K, K), alpha=float(alpha),
                               out_dir=str(cell_dir(base.out_dir, K, alpha)))
            summaries.append(run_experiment(cfg))
    write_grid_table(summaries, Path(base.out_dir) / "grid.csv")
    return summaries


def write_grid_table(summaries: list[ExperimentSummary], path: str | os.PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["K", "K_selected", "alpha", "mean_last5", "std_last5", "mean_final", "non_converged"])
        for s in summaries:
            w.writerow([s.K, s.K_selected, repr(s.alpha), repr(s.mean_last5), repr(s.std_last5),
                        repr(s.mean_final), int(s.non_converged)])


def mean_accuracy_at(out_dir: str | os.PathLike, seeds, round_: int) -> float:
    """Mean over seeds of the test accuracy logged at a given round."""
    vals = []
    for seed in seeds:
        for p in seed_logs(Path(out_dir), seed):
            hist = read_round_csv(p)
            if len(hist) < round_:
                raise ValueError(f"{p} has only {len(hist)} rounds")
            vals.append(hist[round_ - 1].accuracy)
    return float(np.mean(vals)) if vals else math.nan


def summary_from_dir(out_dir: str | os.PathLike) -> ExperimentSummary:
    """Summary object for a finished run directory."""
    return ExperimentSummary(**load_summary(out_dir), out_dir=str(out_dir))

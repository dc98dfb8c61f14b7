"""Experiment configuration: a key = value file plus command-line overrides."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from ..errors import ConfigInvalid, DataUnreadable
from ..federated import TrainConfig
from ..nn.model import ModelShape

MODES = ("centralized", "standalone", "federated")
GRID_K = (10, 20, 50)
GRID_ALPHA = (0.0, 0.2, 0.6, 1.0)
K_SELECTED = {10: 3, 20: 6, 50: 15}

ENV_PATHS = {
    "phishing_dir": "FEDPB_PHISHING_DIR",
    "legitimate_dir": "FEDPB_LEGITIMATE_DIR",
    "embedding": "FEDPB_EMBEDDING",
    "stopwords": "FEDPB_STOPWORDS",
    "lemma_exceptions": "FEDPB_LEMMA_EXCEPTIONS",
}

# fields that change where or how fast results are produced, not what they are
_NOT_FINGERPRINTED = ("out_dir", "jobs")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "federated"
    K: int = 10
    K_selected: int | None = None
    alpha: float = 0.0
    rounds: int = 50
    seeds: tuple[int, ...] = tuple(range(10))
    # data: empty dataset dirs select the synthetic corpus
    phishing_dir: str = ""
    legitimate_dir: str = ""
    embedding: str = ""
    stopwords: str = ""  # empty selects the bundled lists
    lemma_exceptions: str = ""
    synthetic_per_class: int = 594
    synthetic_seed: int = 0
    # training
    lr: float = 1e-4
    batch: int = 16
    epochs_local: int = 1
    patience: int = 10
    max_epochs: int = 50
    val_fraction: float = 0.1
    standalone_eval_tail: int = 5
    # model
    hidden: int = 100
    dense: int = 200
    layers: int = 3
    seq_len: int = 200
    embed_dim: int = 100
    # output
    out_dir: str = "runs"
    checkpoint_every: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigInvalid("mode", f"must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.K < 1:
            raise ConfigInvalid("K", f"must be >= 1, got {self.K}")
        if self.K_selected is None:
            object.__setattr__(self, "K_selected", K_SELECTED.get(self.K, self.K))
        if not 1 <= self.K_selected <= self.K:
            raise ConfigInvalid("K_selected", f"must lie in [1, K={self.K}], got {self.K_selected}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigInvalid("alpha", f"must lie in [0, 1], got {self.alpha}")
        if self.rounds < 1:
            raise ConfigInvalid("rounds", f"must be >= 1, got {self.rounds}")
        if not self.seeds:
            raise ConfigInvalid("seeds", "must be nonempty")
        if any(s < 0 for s in self.seeds):
            raise ConfigInvalid("seeds", "must be non-negative")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigInvalid("seeds", "must be distinct")
        for name in ("batch", "hidden", "dense", "layers", "seq_len", "embed_dim", "max_epochs", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(name, f"must be >= 1, got {getattr(self, name)}")
        for name in ("epochs_local", "patience", "checkpoint_every", "standalone_eval_tail"):
            if getattr(self, name) < 0:
                raise ConfigInvalid(name, f"must be >= 0, got {getattr(self, name)}")
        if self.lr < 0:
            raise ConfigInvalid("lr", f"must be >= 0, got {self.lr}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigInvalid("val_fraction", f"must lie in [0, 1), got {self.val_fraction}")
        if bool(self.phishing_dir) != bool(self.legitimate_dir):
            raise ConfigInvalid("phishing_dir", "set both dataset directories or neither")

    @property
    def shape(self) -> ModelShape:
        return ModelShape(self.seq_len, self.embed_dim, self.hidden, self.dense, self.layers)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            batch_size=self.batch,
            local_epochs=self.epochs_local,
            patience=self.patience,
            max_epochs=self.max_epochs,
            val_fraction=self.val_fraction,
        )

    @property
    def synthetic(self) -> bool:
        return not self.phishing_dir

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    def fingerprint(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in _NOT_FINGERPRINTED}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def parse_seeds(text: str) -> tuple[int, ...]:
    """'0-9', '1,2,5' or a mix such as '0-3,7'; seeds are non-negative."""
    out: list[int] = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        lo, _, hi = part.partition("-")
        try:
            out.extend(range(int(lo), int(hi) + 1) if hi else [int(lo)])
        except ValueError as exc:
            raise ConfigInvalid("seeds", f"cannot parse {part!r}") from exc
    return tuple(out)


def _coerce(name: str, raw: Any) -> Any:
    if name == "seeds":
        return raw if isinstance(raw, tuple) else parse_seeds(raw)
    if not isinstance(raw, str):
        return raw
    kind = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    text = raw.strip()
    try:
        if kind.startswith("int | None"):
            return None if text.lower() in ("", "none", "auto") else int(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError as exc:
        raise ConfigInvalid(name, f"cannot parse {raw!r}") from exc
    return text


def build_config(values: Mapping[str, Any]) -> ExperimentConfig:
    """Typed config from string or native values; unknown keys are errors."""
    known = {f.name.lower(): f.name for f in fields(ExperimentConfig)}
    merged: dict[str, Any] = {}
    for raw_key, raw in values.items():
        key = known.get(raw_key.strip().lower().replace("-", "_"))
        if key is None:
            raise ConfigInvalid(raw_key, "unknown setting")
        if raw is None:
            continue
        merged[key] = _coerce(key, raw)
    return ExperimentConfig(**merged)


def env_overrides(env: Mapping[str, str] | None = None) -> dict[str, str]:
    env = os.environ if env is None else env
    return {key: env[var] for key, var in ENV_PATHS.items() if env.get(var)}


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' and ';' start comments; no sections needed."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataUnreadable(path, str(exc)) from exc
    try:
        parser.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigInvalid("config", f"{path}: {exc}") from exc
    return dict(parser["experiment"])


def write_config_file(cfg: ExperimentConfig, path: str | os.PathLike) -> None:
    lines = []
    for key, value in cfg.to_dict().items():
        if key == "seeds":
            value = ",".join(map(str, value))
        lines.append(f"{key} = {'' if value is None else value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_config(path: str | os.PathLike | None = None, overrides: Mapping[str, Any] | None = None,
                env: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Defaults, then the config file, then dataset env vars, then explicit overrides."""
    values: dict[str, Any] = read_config_file(path) if path else {}
    values.update(env_overrides(env))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)

"""Versioned .npz container for a flat parameter vector and its architecture."""

from __future__ import annotations

import json
import os

import numpy as np

from ..errors import CheckpointMismatch, DataUnreadable
from .model import ModelShape

FORMAT = "fedpb-checkpoint"
VERSION = 1


def descriptor(shape: ModelShape) -> dict:
    return {"format": FORMAT, "version": VERSION, "shape": shape.to_dict(), "num_params": shape.num_params}


def save_checkpoint(path: str | os.PathLike, params: np.ndarray, shape: ModelShape, meta: dict | None = None) -> None:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (shape.num_params,):
        raise CheckpointMismatch(f"vector of {params.size} values does not fit {shape}")
    desc = descriptor(shape) | {"meta": meta or {}}
    with open(path, "wb") as fh:
        np.savez(fh, params=params, descriptor=np.array(json.dumps(desc, sort_keys=True)))


def load_checkpoint(path: str | os.PathLike, expected: ModelShape | None = None) -> tuple[np.ndarray, dict]:
    """Return (params, descriptor); refuse anything that does not match ``expected``."""
    try:
        with np.load(path, allow_pickle=False) as z:
            params = z["params"].astype(np.float64)
            desc = json.loads(str(z["descriptor"]))
    except (OSError, KeyError, ValueError) as exc:
        raise DataUnreadable(path, str(exc)) from exc
    if desc.get("format") != FORMAT or desc.get("version") != VERSION:
        raise CheckpointMismatch(f"unsupported container {desc.get('format')!r} v{desc.get('version')}")
    shape = ModelShape(**desc["shape"])
    if expected is not None and shape != expected:
        raise CheckpointMismatch(f"checkpoint holds {shape}, expected {expected}")
    if params.shape != (shape.num_params,):
        raise CheckpointMismatch(f"{params.size} values stored for {shape.num_params} parameters")
    return params, desc

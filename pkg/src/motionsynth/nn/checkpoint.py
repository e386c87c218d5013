"""Plain-text checkpoints.

Layout::

    version 1
    <name> <ndim> <d1> ... <dn>
    <values>
    ...
    step <S> epoch <E>

Adam moments follow as ``<name>.m`` / ``<name>.v``. Non-trainable arrays
(configuration, normalization statistics) are stored under ``meta.<key>``.
Values are written with 17 significant digits so a load restores them exactly.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ParseError
from .optim import ParamStore


def _block(name: str, arr: np.ndarray) -> list[str]:
    arr = np.asarray(arr, dtype=np.float64)
    dims = " ".join(str(d) for d in arr.shape)
    head = f"{name} {arr.ndim}" + (f" {dims}" if dims else "")
    return [head, " ".join(format(float(x), ".17g") for x in arr.ravel())]


def save_checkpoint(path, store: ParamStore, meta: Optional[dict] = None) -> None:
    lines = ["version 1"]
    for key, value in (meta or {}).items():
        lines += _block(f"meta.{key}", value)
    for name, p in store.items():
        lines += _block(name, p.data)
    for name in store:
        lines += _block(f"{name}.m", store.m[name])
        lines += _block(f"{name}.v", store.v[name])
    lines.append(f"step {store.step} epoch {store.epoch}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_checkpoint(path) -> tuple[dict, dict, int, int]:
    """Parse a checkpoint into (arrays, meta, step, epoch)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "version 1":
        raise ParseError(path, 1, "expected 'version 1'")
    arrays, meta = {}, {}
    i, step, epoch = 1, None, None
    while i < len(lines):
        tok = lines[i].split()
        if not tok:
            i += 1
            continue
        if tok[0] == "step":
            try:
                step, epoch = int(tok[1]), int(tok[3])
            except (IndexError, ValueError):
                raise ParseError(path, i + 1, "bad trailer") from None
            break
        try:
            ndim = int(tok[1])
            shape = tuple(int(d) for d in tok[2:2 + ndim])
            if len(shape) != ndim or len(tok) != 2 + ndim:
                raise ValueError
            raw = lines[i + 1].split() if i + 1 < len(lines) else []
            values = np.array([float(x) for x in raw], dtype=np.float64)
            arr = values.reshape(shape)
        except (IndexError, ValueError):
            raise ParseError(path, i + 1, f"bad array block {tok[0]!r}") from None
        if tok[0].startswith("meta."):
            meta[tok[0][5:]] = arr
        else:
            arrays[tok[0]] = arr
        i += 2
    if step is None:
        raise ParseError(path, len(lines), "missing 'step S epoch E' trailer")
    return arrays, meta, step, epoch


def load_into(path, store: ParamStore) -> dict:
    """Restore parameters and optimizer state into an existing store; returns meta."""
    arrays, meta, step, epoch = read_checkpoint(path)
    for name, p in store.items():
        if name not in arrays:
            raise ParseError(path, 0, f"checkpoint lacks parameter {name!r}")
        if arrays[name].shape != p.shape:
            raise ParseError(path, 0, f"parameter {name!r} has shape {arrays[name].shape}, expected {p.shape}")
        p.data = arrays[name].copy()
        store.m[name] = arrays.get(f"{name}.m", np.zeros_like(p.data)).copy()
        store.v[name] = arrays.get(f"{name}.v", np.zeros_like(p.data)).copy()
    store.step, store.epoch = step, epoch
    return meta

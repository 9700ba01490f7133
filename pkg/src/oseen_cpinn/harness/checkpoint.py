"""Flat binary checkpoints of field models.

Layout::

    bytes 0..7    magic b"OSCPINN1"
    bytes 8..11   header length H, unsigned 32-bit little-endian
    next H bytes  UTF-8 JSON header: {"kind", "spec", "pressure_spec",
                  "n_params", "meta"}
    remainder     n_params parameters as little-endian float64

Parameters follow ``jax.flatten_util.ravel_pytree`` order of the model's
parameter dict: keys sorted (``"pressure"`` before ``"trunk"``), layers in
order, each layer's weight matrix (row-major, shape ``(fan_in, fan_out)``)
followed by its bias.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..fields import FieldModel, FieldModelSpec

MAGIC = b"OSCPINN1"


def save_checkpoint(path, model: FieldModel, meta: dict | None = None) -> Path:
    path = Path(path)
    theta = model.flat().astype("<f8")
    header = {
        "kind": model.kind,
        "spec": asdict(model.spec),
        "pressure_spec": None if model.pressure_spec is None else asdict(model.pressure_spec),
        "n_params": int(theta.size),
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".ckpt-")
    with os.fdopen(fd, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(theta.tobytes())
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> tuple[FieldModel, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a model checkpoint")
    (n,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + n].decode("utf-8"))
    theta = np.frombuffer(raw[12 + n:], dtype="<f8")
    if theta.size != header["n_params"]:
        raise ValueError(f"checkpoint holds {theta.size} parameters, header says {header['n_params']}")
    spec = FieldModelSpec(**header["spec"])
    pspec = header["pressure_spec"]
    pspec = None if pspec is None else FieldModelSpec(**pspec)
    template = FieldModel.init(spec, header["kind"], pspec)
    return template.with_flat(theta), header["meta"]

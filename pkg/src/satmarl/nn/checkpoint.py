"""Binary checkpoint format for :class:`ParamVector`.

Layout (all integers little-endian)::

    bytes 0-3    magic  b"SMNN"
    bytes 4-5    uint16 format version (currently 1)
    bytes 6-9    uint32 header length H
    bytes 10..   H bytes of UTF-8 JSON:
                 {"spec": {...MlpSpec...},
                  "layout": [[name, offset, [dims...]], ...],
                  "n_params": N}
    then         N float64 values, little-endian, the flat parameter vector
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .mlp import MlpSpec, ParamVector

MAGIC = b"SMNN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_params(path, params: ParamVector) -> None:
    header = json.dumps(
        {
            "spec": params.spec.to_dict(),
            "layout": [[name, off, list(shape)] for name, off, shape in params.layout],
            "n_params": int(params.flat.size),
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(header)))
        fh.write(header)
        fh.write(params.flat.astype("<f8").tobytes())


def load_params(path) -> ParamVector:
    data = Path(path).read_bytes()
    if len(data) < 10 or data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a parameter checkpoint")
    version, hlen = struct.unpack("<HI", data[4:10])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(data[10 : 10 + hlen].decode("utf-8"))
        spec = MlpSpec.from_dict(header["spec"])
        n = int(header["n_params"])
        layout = [(name, int(off), tuple(int(d) for d in shape)) for name, off, shape in header["layout"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    body = data[10 + hlen :]
    if len(body) != 8 * n:
        raise CheckpointError(f"{path}: expected {n} parameters, found {len(body) / 8:g}")
    flat = np.frombuffer(body, dtype="<f8").astype(float)
    try:
        return ParamVector(spec, flat, layout)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc

"""Self-contained model checkpoints.

Layout: a plain-text header followed by one little-endian binary blob::

    RTSE-CHECKPOINT 1
    frame {"fft_size": 512, ...}
    features {"normalization": "fd_online", ...}
    model {"version": "..."}
    meta {...}                      training metadata, JSON
    stats {"count": N}              only with global normalization
    optimizer {"lr": ..., "step": ...}   only when optimizer state is saved
    field <name> <dtype> <shape> <offset> <nbytes>
    ...
    end

Offsets are relative to the first byte after the ``end`` line.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rtse.dsp import FrameConfig
from rtse.errors import DataError
from rtse.features import FeatureKind, GlobalStats
from rtse.model import ModelParams
from rtse.training.optim import AdamState

MAGIC = "RTSE-CHECKPOINT"
FORMAT_VERSION = 1
DTYPE = "<f8"


@dataclass
class Checkpoint:
    frame_cfg: FrameConfig
    kind: FeatureKind
    params: ModelParams
    stats: GlobalStats | None = None
    meta: dict = field(default_factory=dict)
    optimizer: AdamState | None = None


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(", ", ": "))


def to_bytes(ckpt: Checkpoint) -> bytes:
    lines = [f"{MAGIC} {FORMAT_VERSION}",
             "frame " + _dumps(ckpt.frame_cfg.to_dict()),
             "features " + _dumps({"transform": ckpt.kind.transform, "normalization": ckpt.kind.normalization,
                                   "tau": ckpt.kind.tau}),
             "model " + _dumps({"version": ckpt.params.version}),
             "meta " + _dumps(ckpt.meta)]
    arrays: dict[str, np.ndarray] = {f"param/{k}": v for k, v in ckpt.params.arrays().items()}
    if ckpt.stats is not None:
        lines.append("stats " + _dumps({"count": int(ckpt.stats.count)}))
        arrays["stats/mean"] = ckpt.stats.mean
        arrays["stats/m2"] = ckpt.stats.m2
    if ckpt.optimizer is not None:
        opt = ckpt.optimizer
        lines.append("optimizer " + _dumps({"lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2,
                                            "eps": opt.eps, "step": opt.step}))
        for k in opt.m:
            arrays[f"adam_m/{k}"] = opt.m[k]
            arrays[f"adam_v/{k}"] = opt.v[k]
    blobs = []
    offset = 0
    for name, a in arrays.items():
        data = np.ascontiguousarray(a, dtype=DTYPE).tobytes()
        shape = "x".join(str(d) for d in a.shape) or "-"
        lines.append(f"field {name} {DTYPE} {shape} {offset} {len(data)}")
        blobs.append(data)
        offset += len(data)
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("ascii") + b"".join(blobs)


def from_bytes(raw: bytes, source: str = "<bytes>") -> Checkpoint:
    sections: dict[str, dict] = {}
    fields = []
    pos = 0
    first = True
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise DataError(f"{source}: truncated checkpoint header")
        line = raw[pos:nl].decode("ascii", errors="replace")
        pos = nl + 1
        if first:
            parts = line.split()
            if len(parts) != 2 or parts[0] != MAGIC:
                raise DataError(f"{source}: not an rtse checkpoint")
            if int(parts[1]) != FORMAT_VERSION:
                raise DataError(f"{source}: checkpoint format {parts[1]} unsupported (expected {FORMAT_VERSION})")
            first = False
            continue
        if line == "end":
            break
        key, _, rest = line.partition(" ")
        if key == "field":
            name, dtype, shape, off, nbytes = rest.split()
            fields.append((name, dtype, () if shape == "-" else tuple(int(d) for d in shape.split("x")),
                           int(off), int(nbytes)))
        else:
            sections[key] = json.loads(rest)
    body = raw[pos:]
    arrays = {}
    for name, dtype, shape, off, nbytes in fields:
        if off + nbytes > len(body):
            raise DataError(f"{source}: field {name} extends past end of file")
        arrays[name] = np.frombuffer(body[off : off + nbytes], dtype=dtype).reshape(shape).astype(np.float64)
    for required in ("frame", "features", "model", "meta"):
        if required not in sections:
            raise DataError(f"{source}: missing '{required}' header line")

    params = ModelParams.from_arrays({k[6:]: v for k, v in arrays.items() if k.startswith("param/")},
                                     sections["model"]["version"])
    stats = None
    if "stats" in sections:
        stats = GlobalStats(arrays["stats/mean"], arrays["stats/m2"], int(sections["stats"]["count"]))
    optimizer = None
    if "optimizer" in sections:
        o = sections["optimizer"]
        m = {k[7:]: v for k, v in arrays.items() if k.startswith("adam_m/")}
        v = {k[7:]: a for k, a in arrays.items() if k.startswith("adam_v/")}
        optimizer = AdamState(o["lr"], o["beta1"], o["beta2"], o["eps"], o["step"], m, v)
    return Checkpoint(FrameConfig(**sections["frame"]), FeatureKind(**sections["features"]), params,
                      stats, sections["meta"], optimizer)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Write atomically (temporary file in the same directory, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(to_bytes(ckpt))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(raw, str(path))

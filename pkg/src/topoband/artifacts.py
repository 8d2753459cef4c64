"""
Deterministic CSV and JSON output.

Files are written to a temporary name in the target directory and renamed
into place, so an interrupted run never leaves a truncated artifact.  Each
CSV ends with a comment line carrying the tool version and a hash of the
inputs; no timestamp is written, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__

__all__ = ["input_hash", "fmt", "write_csv", "write_json", "atomic_write"]


def input_hash(*objs) -> str:
    """SHA-256 of the canonical JSON encoding of ``objs``."""
    blob = json.dumps(objs, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()


def fmt(v) -> str:
    """Shortest round-trip text for numbers; ``str`` for everything else."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, rows, digest: str) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    buf.write(f"# topoband {__version__}, structure-sha256={digest}\n")
    return atomic_write(path, buf.getvalue())


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"cannot encode {type(o).__name__}")


def _clean(o):
    # JSON has no inf/nan; write them as strings
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(float(o)):
        return fmt(o)
    if isinstance(o, complex):
        return {"re": _clean(o.real), "im": _clean(o.imag)}
    return o


def write_json(path, obj) -> Path:
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, default=_jsonable) + "\n"
    return atomic_write(path, text)

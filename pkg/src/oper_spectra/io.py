"""Deterministic JSON/CSV writers and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"


def to_jsonable(obj):
    """Recursively convert numpy and complex values; complex numbers become [re, im]."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, Exception):
        return f"{type(obj).__name__}: {obj}"
    return obj


def write_json(path: Path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import scipy

    from . import __version__

    return {
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "oper_spectra": __version__,
    }


def write_manifest(out_dir: Path, command: str, argv, inputs, outputs, seed, wall_time: float,
                   status: int) -> Path:
    """Record inputs (with hashes), versions, seed and timing beside the outputs."""
    out_dir = Path(out_dir)
    data = {
        "command": command,
        "argv": list(argv),
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {Path(p).name: sha256(p) for p in outputs},
        "seed": seed,
        "versions": versions(),
        "wall_time_s": wall_time,
        "status": status,
    }
    return write_json(out_dir / MANIFEST_NAME, data)

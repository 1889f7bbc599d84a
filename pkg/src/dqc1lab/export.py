"""Flat-file writers shared by the command-line tools.

Output is locale-independent: '.' decimals, LF line endings, floats written
with ``repr`` so identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .matqm import DensityMatrix


def fmt(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def jsonable(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else fmt(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, DensityMatrix):
        return density_json(obj)
    return obj


def density_json(rho: DensityMatrix) -> dict:
    """Row-major elements with interleaved real and imaginary parts."""
    flat = rho.elements.reshape(-1)
    inter = np.empty(2 * len(flat))
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    return {"factors": [[lab, d] for lab, d in rho.space.factors],
            "dim": rho.dim, "elements": inter.tolist()}


def density_from_json(obj: Mapping) -> np.ndarray:
    inter = np.asarray(obj["elements"], dtype=float)
    n = int(obj["dim"])
    return (inter[0::2] + 1j * inter[1::2]).reshape(n, n)


def metadata(command: str, config: Mapping) -> dict:
    return {"tool": "dqc1lab", "version": __version__, "command": command,
            "seed": config.get("seed"), "config": jsonable(config)}


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=1) + "\n"


def write_json(path: Path, obj: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))
    return path


def write_csv(path: Path, meta: Mapping, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """CSV with ``#``-prefixed metadata lines before the header row."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# tool: dqc1lab {__version__}\n")
        fh.write(f"# command: {meta.get('command')}\n")
        fh.write(f"# seed: {fmt(meta.get('seed'))}\n")
        fh.write("# config: " + json.dumps(jsonable(meta.get("config", {})), sort_keys=True) + "\n")
        for key in sorted(k for k in meta if k not in ("tool", "version", "command", "seed", "config")):
            fh.write(f"# {key}: " + json.dumps(jsonable(meta[key]), sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], list[dict[str, str]]]:
    """Metadata comment lines and data rows of a file written by ``write_csv``."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    return comments, list(csv.DictReader(body))

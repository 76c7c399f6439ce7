"""Deterministic writers: JSON verdicts, CSV tables, binary matrix dumps, SVG plots.

Binary dump layout: two little-endian int64 (rows, cols) followed by the
matrix in row-major order as (real, imag) pairs of little-endian float64.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION

__all__ = [
    "to_jsonable",
    "write_json",
    "read_json",
    "write_csv",
    "frame_rows",
    "FRAME_COLUMNS",
    "dump_matrix",
    "load_matrix",
    "line_plot_svg",
]

FRAME_COLUMNS = ("t", "e1x", "e1y", "e1z", "e2x", "e2y", "e2z", "e3x", "e3y", "e3z",
                 "alpha1", "alpha2", "d1", "d2", "Sd")


def to_jsonable(obj):
    """Plain JSON types; complex numbers become ``[re, im]``, non-finite floats ``null``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, payload: dict, config=None, command: str | None = None) -> Path:
    """Write ``payload`` with the schema version and resolved config embedded."""
    doc = {"schema_version": SCHEMA_VERSION}
    if command is not None:
        doc["command"] = command
    if config is not None:
        doc["config"] = config.resolved
    doc.update(payload)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return p


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(path, header, rows) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return p


def frame_rows(frame, dpath, times) -> list[list[float]]:
    """Rows of :data:`FRAME_COLUMNS` at ``times``."""
    rows = []
    for t in times:
        E = frame.at(t)
        s = frame.signals(t)
        d1, d2, Sd = dpath.at(t)
        rows.append([float(t), *E[0], *E[1], *E[2], s.alpha1, s.alpha2, d1, d2, Sd])
    return rows


def dump_matrix(path, M) -> Path:
    """Write a complex matrix in the documented binary layout."""
    A = np.ascontiguousarray(np.asarray(M, dtype="<c16"))
    if A.ndim != 2:
        raise ValueError("only 2-D matrices can be dumped")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("wb") as fh:
        fh.write(np.array(A.shape, dtype="<i8").tobytes())
        fh.write(A.tobytes(order="C"))
    return p


def load_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ValueError("truncated matrix dump")
    rows, cols = np.frombuffer(raw[:16], dtype="<i8")
    data = np.frombuffer(raw[16:], dtype="<c16")
    if data.size != rows * cols:
        raise ValueError(f"dump holds {data.size} entries, header says {rows}x{cols}")
    return data.reshape(int(rows), int(cols)).astype(complex)


def line_plot_svg(path, series: dict, title: str, xlabel: str, ylabel: str,
                  logx: bool = False, logy: bool = True) -> Path:
    """Self-contained SVG line plot; byte-identical for identical input.

    ``series`` maps a label to ``(x, y)``.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "landau-factor", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.5))
        for label, (x, y) in series.items():
            y = np.asarray(y, dtype=float)
            if logy:
                y = np.where(y > 0, y, np.nan)
            ax.plot(x, y, marker="o", label=label)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend(fontsize="small")
        fig.tight_layout()
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
    return p

"""CSV and 8-bit PGM writers for matrices."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = ["write_matrix_csv", "read_matrix_csv", "write_pgm", "read_pgm"]


def _fmt(v: float) -> str:
    # shortest round-trip repr; independent of locale
    return repr(float(v))


def write_matrix_csv(path, matrix, row_label: str, col_label: str, row_values, col_values) -> None:
    """Header ``<row_label>\\<col_label>,c_1,...``; each row starts with its axis value."""
    m = np.asarray(matrix, dtype=float)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([f"{row_label}\\{col_label}"] + [_fmt(c) for c in col_values])
        for rv, row in zip(row_values, m):
            out.writerow([_fmt(rv)] + [_fmt(v) for v in row])


def read_matrix_csv(path):
    """Inverse of :func:`write_matrix_csv`: ``(matrix, row_values, col_values, header)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    cols = np.array([float(c) for c in head[1:]])
    rv = np.array([float(r[0]) for r in rows[1:]])
    m = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return m, rv, cols, head[0]


def write_pgm(path, matrix) -> tuple[float, float]:
    """Binary greyscale image, linearly mapping ``[min, max]`` to ``[0, 255]``.

    The range goes to ``<path>.txt`` next to the image. A constant matrix
    maps to 0. Returns ``(min, max)``.
    """
    m = np.asarray(matrix, dtype=float)
    lo, hi = float(m.min()), float(m.max())
    scale = (m - lo) / (hi - lo) if hi > lo else np.zeros_like(m)
    img = np.rint(255.0 * scale).astype(np.uint8)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    Path(str(path) + ".txt").write_text(f"min {_fmt(lo)}\nmax {_fmt(hi)}\n")
    return lo, hi


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)

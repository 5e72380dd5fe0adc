"""Atomic, deterministic file output: CSV tables, snapshots and SVG plots."""

from __future__ import annotations

import hashlib
import io
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write(path, data, mode="w"):
    """Write to a temporary name in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode + ("b" if isinstance(data, bytes) else "")) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def fmt(v):
    """Round-trippable text for one cell."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def csv_text(columns, rows, meta=None):
    """Header comments, a header row and one line per row."""
    out = io.StringIO()
    for k, v in (meta or {}).items():
        out.write(f"# {k}={v}\n")
    out.write(",".join(columns) + "\n")
    for r in rows:
        out.write(",".join(fmt(v) for v in r) + "\n")
    return out.getvalue()


def write_csv(path, columns, rows, meta=None):
    return atomic_write(path, csv_text(columns, rows, meta))


def read_csv(path):
    """(meta, columns, rows as lists of strings)."""
    meta, rows, cols = {}, [], None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            elif cols is None:
                cols = line.split(",")
            elif line:
                rows.append(line.split(","))
    return meta, cols, rows


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def snapshot_columns(dim):
    return ["replica", "particle"] + [f"x{a + 1}" for a in range(dim)]


def write_snapshot(path, positions, meta, binary_twin=True):
    """Columnar (replica, particle, coordinates) CSV plus an optional .npz twin."""
    M, N, d = positions.shape
    rep = np.repeat(np.arange(M), N)
    par = np.tile(np.arange(N), M)
    flat = positions.reshape(M * N, d)
    body = io.StringIO()
    for k, v in meta.items():
        body.write(f"# {k}={v}\n")
    body.write(",".join(snapshot_columns(d)) + "\n")
    coords = np.char.mod("%.17g", flat)
    lines = [f"{r},{p}," + ",".join(c) for r, p, c in zip(rep, par, coords)]
    body.write("\n".join(lines) + "\n")
    paths = [atomic_write(path, body.getvalue())]
    if binary_twin:
        buf = io.BytesIO()
        np.savez(buf, positions=positions)
        paths.append(atomic_write(Path(path).with_suffix(".npz"), buf.getvalue()))
    return paths


def read_snapshot(path):
    meta, cols, rows = read_csv(path)
    data = np.array([[float(v) for v in r[2:]] for r in rows])
    M, N = int(meta["M"]), int(meta["N"])
    return meta, data.reshape(M, N, len(cols) - 2)


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

def loglog_svg(series, title="", xlabel="N", ylabel="H1", width=480, height=360):
    """Minimal log-log scatter/line plot.

    ``series`` is a list of (label, xs, ys, yerr or None, dashed) tuples;
    non-positive values are skipped.
    """
    pad = 56
    pts = [(x, y) for _, xs, ys, _, _ in series for x, y in zip(xs, ys)
           if x > 0 and y > 0 and np.isfinite(y)]
    if not pts:
        pts = [(1.0, 1.0), (10.0, 10.0)]
    lx = np.log10([p[0] for p in pts])
    ly = np.log10([p[1] for p in pts])
    x0, x1 = lx.min() - 0.1, lx.max() + 0.1
    y0, y1 = ly.min() - 0.3, ly.max() + 0.3

    def X(v):
        return pad + (np.log10(v) - x0) / (x1 - x0) * (width - 2 * pad)

    def Y(v):
        return height - pad - (np.log10(v) - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">{title}</text>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle">{xlabel} (log)</text>',
           f'<text x="14" y="{height / 2:.1f}" transform="rotate(-90 14 {height / 2:.1f})" '
           f'text-anchor="middle">{ylabel} (log)</text>']
    for e in range(int(np.floor(x0)), int(np.ceil(x1)) + 1):
        if x0 <= e <= x1:
            out.append(f'<text x="{X(10.0**e):.1f}" y="{height - pad + 14}" '
                       f'text-anchor="middle">1e{e}</text>')
    for e in range(int(np.floor(y0)), int(np.ceil(y1)) + 1):
        if y0 <= e <= y1:
            out.append(f'<text x="{pad - 4}" y="{Y(10.0**e) + 4:.1f}" '
                       f'text-anchor="end">1e{e}</text>')
    for s, (label, xs, ys, err, dashed) in enumerate(series):
        c = colors[s % len(colors)]
        keep = [(x, y, (err[i] if err is not None else 0.0))
                for i, (x, y) in enumerate(zip(xs, ys)) if x > 0 and y > 0 and np.isfinite(y)]
        if not keep:
            continue
        path = " ".join(f"{X(x):.2f},{Y(y):.2f}" for x, y, _ in keep)
        dash = ' stroke-dasharray="5,4"' if dashed else ""
        out.append(f'<polyline points="{path}" fill="none" stroke="{c}"{dash}/>')
        for x, y, e in keep:
            if not dashed:
                out.append(f'<circle cx="{X(x):.2f}" cy="{Y(y):.2f}" r="3" fill="{c}"/>')
            if e > 0 and y - e > 0:
                out.append(f'<line x1="{X(x):.2f}" y1="{Y(y - e):.2f}" x2="{X(x):.2f}" '
                           f'y2="{Y(y + e):.2f}" stroke="{c}"/>')
        out.append(f'<text x="{width - pad + 4 - 120}" y="{pad + 14 * s}" fill="{c}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

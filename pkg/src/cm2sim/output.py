"""File emission: CSV tables, run manifests and plain SVG plots."""

from __future__ import annotations

import hashlib
import io
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__

SERIES_COLUMNS = (
    "t", "S_u", "S_c", "SE_Sc", "I", "dI", "G", "L", "dSigma_u", "dSigma_c",
    "dPhi_u", "dPhi_c", "Sigma_u_int", "Sigma_c_int", "iss_flag",
)


# -- manifest -------------------------------------------------------------------


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def make_manifest(config: dict) -> dict:
    """Config plus code version, with a sha256 over both."""
    body = {"config": config, "version": __version__}
    digest = hashlib.sha256(_canonical(body).encode()).hexdigest()
    return {**body, "sha256": digest}


def check_manifest(manifest: dict) -> None:
    body = {"config": manifest["config"], "version": manifest["version"]}
    digest = hashlib.sha256(_canonical(body).encode()).hexdigest()
    if digest != manifest.get("sha256"):
        raise ValueError("manifest hash does not match its contents")


def write_json(path: Path, obj, manifest_hash: str | None = None) -> None:
    if manifest_hash is not None:
        obj = {"manifest_sha256": manifest_hash, **obj}
    path.write_text(json.dumps(obj, indent=2, sort_keys=False, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def json_float(x: float):
    """Finite floats pass through; NaN and infinities become strings."""
    x = float(x)
    return x if math.isfinite(x) else str(x)


# -- CSV ------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x) + 0.0)


def write_csv(path: Path, columns: Sequence[str], rows, manifest_hash: str, note: str = "units: nats") -> None:
    """Comment line with the manifest hash, header, then one row per entry.

    Floats use their shortest round-trip representation so identical inputs
    give identical bytes.
    """
    buf = io.StringIO()
    buf.write(f"# manifest_sha256={manifest_hash} {note}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    Path(path).write_text(buf.getvalue())


def read_csv(path: Path) -> tuple:
    """Inverse of :func:`write_csv`: ``(columns, array)`` with comments dropped."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    cols = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return cols, data


def series_rows(series, iss_window: tuple | None = None):
    """Rows for ``series.csv``; ``iss_flag`` marks the window of a detected ISS."""
    v, se = series.values, series.se
    for t in range(series.steps + 1):
        flag = int(iss_window is not None and iss_window[0] <= t <= iss_window[1])
        yield [t, v["S_u"][t], v["S_c"][t], se["S_c"][t], v["I"][t], v["dI"][t], v["G"][t], v["L"][t],
               v["dSigma_u"][t], v["dSigma_c"][t], v["dPhi_u"][t], v["dPhi_c"][t],
               v["Sigma_u_int"][t], v["Sigma_c_int"][t], flag]


# -- SVG --------------------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
_W, _H, _PAD = 640, 400, 60


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _range(values) -> tuple:
    finite = np.concatenate([np.asarray(v, dtype=float)[np.isfinite(v)] for v in values] or [np.zeros(0)])
    if finite.size == 0:
        return 0.0, 1.0
    lo, hi = float(finite.min()), float(finite.max())
    if hi - lo < 1e-300:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _frame(title: str, xlabel: str, ylabel: str, xr: tuple, yr: tuple, comment: str) -> list:
    x0, y0, x1, y1 = _PAD, _H - _PAD, _W - _PAD / 2, _PAD / 2
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f"<!-- {comment} -->",
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{_W / 2}" y="{_PAD / 2 - 8}" text-anchor="middle" font-size="14">{_esc(title)}</text>',
        f'<text x="{_W / 2}" y="{_H - 15}" text-anchor="middle" font-size="12">{_esc(xlabel)}</text>',
        f'<text x="15" y="{_H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {_H / 2})">{_esc(ylabel)}</text>',
    ]
    for v in _ticks(*xr):
        px = _sx(v, xr)
        out.append(f'<text x="{px:.1f}" y="{y0 + 16}" text-anchor="middle" font-size="10">{v:.3g}</text>')
    for v in _ticks(*yr):
        py = _sy(v, yr)
        out.append(f'<text x="{x0 - 4}" y="{py + 3:.1f}" text-anchor="end" font-size="10">{v:.3g}</text>')
        out.append(f'<line x1="{x0}" y1="{py:.1f}" x2="{x1}" y2="{py:.1f}" stroke="#ddd"/>')
    return out


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _sx(v, xr):
    return _PAD + (v - xr[0]) / (xr[1] - xr[0]) * (_W - 1.5 * _PAD)


def _sy(v, yr):
    return _H - _PAD - (v - yr[0]) / (yr[1] - yr[0]) * (_H - 1.5 * _PAD)


def line_plot(x, curves: dict, title: str, xlabel: str = "t", ylabel: str = "nats", comment: str = "") -> str:
    """Polyline per curve; non-finite points break the line."""
    x = np.asarray(x, dtype=float)
    xr = _range([x])
    yr = _range(list(curves.values()))
    out = _frame(title, xlabel, ylabel, xr, yr, comment)
    for k, (name, y) in enumerate(curves.items()):
        color = PALETTE[k % len(PALETTE)]
        y = np.asarray(y, dtype=float)
        seg = []
        for xi, yi in zip(x, y):
            if math.isfinite(yi):
                seg.append(f"{_sx(xi, xr):.2f},{_sy(yi, yr):.2f}")
            elif seg:
                out.append(f'<polyline fill="none" stroke="{color}" points="{" ".join(seg)}"/>')
                seg = []
        if seg:
            out.append(f'<polyline fill="none" stroke="{color}" points="{" ".join(seg)}"/>')
        out.append(f'<text x="{_W - _PAD}" y="{_PAD + 14 * k}" fill="{color}" font-size="11" '
                   f'text-anchor="end">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def histogram_counts(values, bins: int = 30) -> tuple:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return np.zeros(bins, dtype=int), np.linspace(0.0, 1.0, bins + 1)
    return np.histogram(v, bins=bins)


def histogram_plot(values, bins: int, title: str, xlabel: str = "", comment: str = "") -> str:
    counts, edges = histogram_counts(values, bins)
    xr = (float(edges[0]), float(edges[-1]))
    if xr[1] <= xr[0]:
        xr = (xr[0] - 0.5, xr[0] + 0.5)
    yr = (0.0, float(max(counts.max(), 1)))
    out = _frame(title, xlabel, "count", xr, yr, comment)
    base = _sy(0.0, yr)
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        xa, xb, top = _sx(a, xr), _sx(b, xr), _sy(c, yr)
        out.append(f'<rect x="{xa:.2f}" y="{top:.2f}" width="{max(xb - xa, 0.5):.2f}" '
                   f'height="{base - top:.2f}" fill="{PALETTE[0]}" stroke="white"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

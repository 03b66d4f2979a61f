"""Self-contained SVG line plots written from run artifacts.

No plotting dependency; output bytes depend only on the artifacts.
"""

import csv
import json
import math
import re
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .runner import write_atomic

__all__ = ["PLOT_KINDS", "svg_line_plot", "emit_plots"]

PLOT_KINDS = ("error", "prediction", "sweep", "regret")
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f", "#bcbd22")
W, H = 640, 420
L, R, T, B = 70, 170, 40, 55

_EPISODE = re.compile(r"^(?P<ctrl>.+)_M(?P<M>\d+)_eta(?P<eta>[^_]+)_r(?P<r>\d+)\.csv$")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(step):
        out.append(v)
        v += step
    return out


def _num(v):
    s = f"{v:.4g}"
    return "0" if s == "-0" else s


def svg_line_plot(series, title, xlabel, ylabel, logx=False, logy=False, markers=False, annotation=None):
    """``series`` is a list of (label, xs, ys[, style]) with style 'line' or 'dash'."""
    pts = []
    for s in series:
        xs, ys = np.asarray(s[1], float), np.asarray(s[2], float)
        ok = np.isfinite(xs) & np.isfinite(ys)
        if logx:
            ok &= xs > 0
        if logy:
            ok &= ys > 0
        pts.append((xs[ok], ys[ok]))
    allx = np.concatenate([p[0] for p in pts]) if pts else np.array([])
    ally = np.concatenate([p[1] for p in pts]) if pts else np.array([])
    if allx.size == 0:
        raise ValueError("nothing to plot")
    fx = np.log10 if logx else (lambda a: a)
    fy = np.log10 if logy else (lambda a: a)
    x0, x1 = float(fx(allx).min()), float(fx(allx).max())
    y0, y1 = float(fy(ally).min()), float(fy(ally).max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = W - L - R, H - T - B

    def px(v):
        return L + (v - x0) / (x1 - x0) * pw

    def py(v):
        return T + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        'font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{L + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        lab = _num(10 ** v) if logx else _num(v)
        out.append(f'<line x1="{px(v):.2f}" y1="{T + ph}" x2="{px(v):.2f}" y2="{T + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(v):.2f}" y="{T + ph + 18}" text-anchor="middle">{lab}</text>')
    for v in _ticks(y0, y1):
        lab = _num(10 ** v) if logy else _num(v)
        out.append(f'<line x1="{L - 5}" y1="{py(v):.2f}" x2="{L}" y2="{py(v):.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{py(v) + 4:.2f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{L + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{T + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {T + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for i, (s, (xs, ys)) in enumerate(zip(series, pts)):
        color = COLORS[i % len(COLORS)]
        dash = ' stroke-dasharray="6 4"' if len(s) > 3 and s[3] == "dash" else ""
        if xs.size:
            path = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(fx(xs), fy(ys)))
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
            if markers:
                for a, b in zip(fx(xs), fy(ys)):
                    out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{color}"/>')
        ly = T + 14 + 18 * i
        out.append(f'<line x1="{W - R + 12}" y1="{ly - 4}" x2="{W - R + 34}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{W - R + 40}" y="{ly}">{escape(str(s[0]))}</text>')
    if annotation:
        out.append(f'<text x="{L + 10}" y="{T + 18}">{escape(annotation)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        return rows[0] if rows else [], np.zeros((0, 0))
    return rows[0], np.array(rows[1:], dtype=float)


def _episode_groups(art_dir):
    groups = {}
    for p in sorted((art_dir / "episodes").glob("*.csv")):
        m = _EPISODE.match(p.name)
        if m:
            key = (m["ctrl"], int(m["M"]), m["eta"])
            groups.setdefault(key, []).append(p)
    return groups


def _median_series(paths, column_fn):
    cols = []
    for p in paths:
        header, data = _read_csv(p)
        if data.size:
            cols.append(column_fn(header, data))
    if not cols:
        return None
    n = min(len(c) for c in cols)
    return np.median(np.array([c[:n] for c in cols]), axis=0)


def _time_plot(art_dir, digest, column_fn, title, ylabel, logy=False):
    dt = float(digest.get("dt", 1.0))
    series = []
    for (ctrl, M, eta), paths in sorted(_episode_groups(art_dir).items()):
        y = _median_series(paths, column_fn)
        if y is not None and y.size:
            series.append((f"{ctrl} M={M} eta={eta}", np.arange(y.size) * dt, y))
    if not series:
        return None
    return svg_line_plot(series, title, "time [s]", ylabel, logy=logy)


def _state_error(header, data):
    xs = [i for i, h in enumerate(header) if re.fullmatch(r"x\d+", h)]
    return np.sum(data[:, xs] ** 2, axis=1)


def _loss(header, data):
    return data[:, header.index("l_t")]


def _stage(header, data):
    return data[:, header.index("stage_cost")]


def _sweep_plot(digest):
    groups = [g for g in digest.get("groups", []) if g["controller"] == "ssi_mpc"]
    key = "median_rmse_position" if digest.get("plant") == "quadrotor" else "median_cumulative_sq_error"
    by_eta = {}
    for g in groups:
        if g.get(key) is not None:
            by_eta.setdefault(g["learning_rate"], []).append((g["features"], g[key]))
    series = []
    for eta in sorted(by_eta):
        pts = sorted(by_eta[eta])
        if len(pts):
            series.append((f"eta={eta:g}", [p[0] for p in pts], [p[1] for p in pts]))
    if not series:
        return None
    return svg_line_plot(series, "cumulative error vs (M, eta)", "features M", key.replace("median_", "median "),
                         logx=True, markers=True)


def _regret_plot(art_dir):
    path = art_dir / "regret.json"
    if not path.exists():
        return None
    d = json.loads(path.read_text(encoding="utf-8"))
    Ts = np.array(d["horizons"], float)
    vals = np.array([np.nan if d["median_regret"][str(int(t))] is None else d["median_regret"][str(int(t))]
                     for t in Ts], float)
    ok = np.isfinite(vals) & (vals > 0)
    if ok.sum() < 2:
        return None
    p, c = np.polyfit(np.log(Ts[ok]), np.log(vals[ok]), 1)
    fit = np.exp(c) * Ts ** p
    return svg_line_plot(
        [("median regret (proxy)", Ts, vals), (f"fit T^{p:.3f}", Ts, fit, "dash")],
        "dynamic regret vs clairvoyant-MPC proxy", "horizon T [steps]", "regret",
        logx=True, logy=True, markers=True, annotation=f"fitted exponent p = {p:.3f}",
    )


def emit_plots(art_dir, kinds=PLOT_KINDS):
    """Write the requested SVG plots into ``art_dir/plots``; returns their paths.

    Kinds without data are skipped and noted in the digest.
    """
    art_dir = Path(art_dir)
    if not art_dir.is_dir():
        raise FileNotFoundError(f"no artifacts at {art_dir}")
    for k in kinds:
        if k not in PLOT_KINDS:
            raise ValueError(f"unknown plot kind {k!r}; expected one of {PLOT_KINDS}")
    digest_path = art_dir / "digest.json"
    digest = json.loads(digest_path.read_text(encoding="utf-8")) if digest_path.exists() else {}
    quad = digest.get("plant") == "quadrotor"
    out_dir = art_dir / "plots"
    out_dir.mkdir(exist_ok=True)
    written, notes = [], []
    for k in kinds:
        if k == "error":
            svg = _time_plot(art_dir, digest, _stage if quad else _state_error, "error vs time",
                             "stage cost" if quad else "||x||^2")
        elif k == "prediction":
            svg = _time_plot(art_dir, digest, _loss, "prediction error vs time", "l_t")
        elif k == "sweep":
            svg = _sweep_plot(digest)
        else:
            svg = _regret_plot(art_dir)
        if svg is None:
            notes.append(f"plot {k}: no data, skipped")
            continue
        path = out_dir / f"{k}.svg"
        write_atomic(path, svg)
        written.append(path)
    if notes and digest:
        digest["notes"] = sorted(set(digest.get("notes", [])) | set(notes))
        write_atomic(digest_path, json.dumps(digest, indent=2, sort_keys=True) + "\n")
    return written

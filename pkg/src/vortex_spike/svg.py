"""Standalone SVG figures: streamlines, vorticity heatmap, surface profile."""

from __future__ import annotations

import numpy as np

from .contours import contour

W, H, PAD = 720, 420, 50


def _frame(xlim, ylim, width=W, height=H, aspect=False):
    x0, x1 = xlim
    y0, y1 = ylim
    sx = (width - 2 * PAD) / (x1 - x0)
    sy = (height - 2 * PAD) / (y1 - y0)
    if aspect:
        sx = sy = min(sx, sy)

    def to_px(x, y):
        return PAD + (np.asarray(x) - x0) * sx, height - PAD - (np.asarray(y) - y0) * sy

    return to_px


def _doc(body, title, width=W, height=H):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            f'<text x="{width / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{title}</text>\n'
            + "\n".join(body) + "\n</svg>\n")


def _polyline(xs, ys, stroke, width=1.0, extra=""):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{width}" {extra}/>'


def _axes(to_px, xlim, ylim, xlabel, ylabel):
    (ax, ay), (bx, by) = to_px(xlim[0], ylim[0]), to_px(xlim[1], ylim[1])
    out = [f'<rect x="{ax:.1f}" y="{by:.1f}" width="{bx - ax:.1f}" height="{ay - by:.1f}" fill="none" stroke="#444"/>']
    for v in np.linspace(*xlim, 5):
        px, _ = to_px(v, ylim[0])
        out.append(f'<text x="{px:.1f}" y="{ay + 16:.1f}" text-anchor="middle" font-family="sans-serif" font-size="11">{v:.3g}</text>')
    for v in np.linspace(*ylim, 5):
        _, py = to_px(xlim[0], v)
        out.append(f'<text x="{ax - 6:.1f}" y="{py + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.3g}</text>')
    out.append(f'<text x="{(ax + bx) / 2:.1f}" y="{ay + 34:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12">{xlabel}</text>')
    out.append(f'<text x="14" y="{(ay + by) / 2:.1f}" font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 14 {(ay + by) / 2:.1f})" text-anchor="middle">{ylabel}</text>')
    return out


def _index_to_xy(line, X, Y):
    p = np.asarray(line)
    return np.interp(p[:, 0], np.arange(X.size), X), np.interp(p[:, 1], np.arange(Y.size), Y)


def streamlines(X, Y, psi, xs, eta, n_levels=12, title="Streamlines and free surface"):
    """Level sets of psi (positive levels blue, negative red) with the surface and the bed."""
    top = float(np.nanmax(psi))
    low = float(np.nanmin(psi))
    xlim = (float(X[0]), float(X[-1]))
    ylim = (-1.0, float(Y[-1]))
    to_px = _frame(xlim, ylim)
    body = _axes(to_px, xlim, ylim, "x1", "x2")
    levels = list(np.linspace(0, top, n_levels + 1)[1:-1]) + [0.97 * top]
    if low < 0:
        levels += list(np.linspace(low, 0, 4)[1:-1])
    for lv in levels:
        for line in contour(psi, lv):
            lx, ly = _index_to_xy(line, X, Y)
            px, py = to_px(lx, ly)
            body.append(_polyline(px, py, "#1f4fb4" if lv > 0 else "#c0392b", 1.0))
    sel = (xs >= xlim[0]) & (xs <= xlim[1])
    px, py = to_px(xs[sel], 1 + eta[sel])
    body.append(_polyline(px, py, "#e67e22", 2.0))
    px, py = to_px(np.array(xlim), np.array([-1.0, -1.0]))
    body.append(_polyline(px, py, "#555", 2.0))
    return _doc(body, title)


def heatmap(X, Y, field, title="Vorticity", max_cells=(160, 100)):
    """Diverging map of sign(f)|f|^(1/3): red negative, blue positive, NaN blank."""
    sx = max(1, int(np.ceil(X.size / max_cells[0])))
    sy = max(1, int(np.ceil(Y.size / max_cells[1])))
    Xs, Ys, F = X[::sx], Y[::sy], field[::sx, ::sy]
    xlim = (float(X[0]), float(X[-1]))
    ylim = (float(Y[0]), float(Y[-1]))
    to_px = _frame(xlim, ylim)
    body = []
    scale = np.nanmax(np.abs(np.cbrt(F))) or 1.0
    dx = (Xs[1] - Xs[0]) if Xs.size > 1 else 1.0
    dy = (Ys[1] - Ys[0]) if Ys.size > 1 else 1.0
    for i, x in enumerate(Xs):
        for j, y in enumerate(Ys):
            f = F[i, j]
            if np.isnan(f):
                continue
            t = float(np.cbrt(f) / scale)
            if t < 0:
                col = (255, int(255 * (1 + t)), int(255 * (1 + t)))
            else:
                col = (int(255 * (1 - t)), int(255 * (1 - t)), 255)
            (ax, ay), (bx, by) = to_px(x - dx / 2, y - dy / 2), to_px(x + dx / 2, y + dy / 2)
            body.append(f'<rect x="{ax:.1f}" y="{by:.1f}" width="{bx - ax + 0.5:.1f}" height="{ay - by + 0.5:.1f}" '
                        f'fill="rgb{col}"/>')
    body += _axes(to_px, xlim, ylim, "x1", "x2")
    return _doc(body, title)


def profiles(x, curves, title="Surface profile", xlabel="x1", ylabel="eta"):
    """Line plot of [(label, y, colour), ...] against x."""
    ys = np.concatenate([c[1] for c in curves])
    pad = 0.05 * (ys.max() - ys.min() or 1.0)
    xlim = (float(x[0]), float(x[-1]))
    ylim = (float(ys.min() - pad), float(ys.max() + pad))
    to_px = _frame(xlim, ylim)
    body = _axes(to_px, xlim, ylim, xlabel, ylabel)
    for k, (label, y, colour) in enumerate(curves):
        px, py = to_px(x, y)
        dash = 'stroke-dasharray="6 4"' if k else ""
        body.append(_polyline(px, py, colour, 1.8, dash))
        body.append(f'<text x="{W - PAD - 4}" y="{PAD + 16 * (k + 1)}" text-anchor="end" fill="{colour}" '
                    f'font-family="sans-serif" font-size="12">{label}</text>')
    return _doc(body, title)

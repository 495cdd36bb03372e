"""Marching squares on a rectangular grid, with segments joined into polylines."""

from __future__ import annotations

import numpy as np

# edge ids: 0 bottom (i, j)-(i+1, j), 1 right, 2 top, 3 left, in (i, j) index space
_CASES = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 5: [(3, 2), (0, 1)], 6: [(0, 2)], 7: [(3, 2)],
    8: [(2, 3)], 9: [(2, 0)], 10: [(0, 3), (1, 2)], 11: [(2, 1)], 12: [(1, 3)], 13: [(1, 0)], 14: [(0, 3)],
}


def _edge_point(f, i, j, e, level):
    if e == 0:
        a, b, p, q = f[i, j], f[i + 1, j], (i, j), (i + 1, j)
    elif e == 1:
        a, b, p, q = f[i + 1, j], f[i + 1, j + 1], (i + 1, j), (i + 1, j + 1)
    elif e == 2:
        a, b, p, q = f[i, j + 1], f[i + 1, j + 1], (i, j + 1), (i + 1, j + 1)
    else:
        a, b, p, q = f[i, j], f[i, j + 1], (i, j), (i, j + 1)
    t = (level - a) / (b - a)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _edge_key(i, j, e):
    # shared edges get one key from both neighbouring cells
    if e == 0:
        return ("h", i, j)
    if e == 2:
        return ("h", i, j + 1)
    if e == 3:
        return ("v", i, j)
    return ("v", i + 1, j)


def contour(f, level):
    """Polylines of {f = level} in fractional index coordinates (i, j).

    NaN cells are skipped.  Each polyline is a list of (i, j) points; a
    closed curve repeats its first point at the end.
    """
    f = np.asarray(f, float)
    nx, ny = f.shape
    above = f > level
    segs = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            c = f[i:i + 2, j:j + 2]
            if np.isnan(c).any():
                continue
            idx = int(above[i, j]) | int(above[i + 1, j]) << 1 | int(above[i + 1, j + 1]) << 2 | int(above[i, j + 1]) << 3
            if idx in (0, 15):
                continue
            cases = _CASES[idx]
            if idx in (5, 10):
                centre = c.mean() > level
                if (idx == 5) != centre:
                    cases = [(3, 0), (1, 2)] if idx == 5 else [(0, 1), (2, 3)]
            for e1, e2 in cases:
                segs.append(((_edge_key(i, j, e1), _edge_point(f, i, j, e1, level)),
                             (_edge_key(i, j, e2), _edge_point(f, i, j, e2, level))))
    return _join(segs)


def _join(segs):
    ends = {}
    for n, (a, b) in enumerate(segs):
        ends.setdefault(a[0], []).append(n)
        ends.setdefault(b[0], []).append(n)
    used = [False] * len(segs)
    lines = []
    for start in range(len(segs)):
        if used[start]:
            continue
        used[start] = True
        a, b = segs[start]
        keys = [a[0], b[0]]
        pts = [a[1], b[1]]
        for forward in (True, False):
            while True:
                key = keys[-1] if forward else keys[0]
                nxt = [n for n in ends.get(key, []) if not used[n]]
                if not nxt:
                    break
                n = nxt[0]
                used[n] = True
                p, q = segs[n]
                other = q if p[0] == key else p
                if forward:
                    keys.append(other[0])
                    pts.append(other[1])
                else:
                    keys.insert(0, other[0])
                    pts.insert(0, other[1])
        if keys[0] == keys[-1] and len(keys) > 2:
            pts[-1] = pts[0]
        lines.append(pts)
    return lines


def is_closed(line):
    return len(line) > 3 and line[0] == line[-1]

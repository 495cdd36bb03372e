"""Radial ground state of Delta U = gamma(U) on the plane.

The profile is found by shooting on the center value a = U(0) and stored as
node tables of U, U_r, U_rr.  Beyond ``R_match`` the profile is continued by
the exact linear decay mode c*K0(r), whose leading asymptote is
lambda * r**-0.5 * exp(-r).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import eigh_tridiagonal
from scipy.special import k0, k1

R_MATCH = 12.0
R_MAX = 25.0
FIT_WINDOW = (12.0, 20.0)


class ShootingError(RuntimeError):
    """Raised when the shooting bisection cannot produce a profile."""

    def __init__(self, message, scan=None):
        super().__init__(message)
        self.scan = scan or []


@dataclass(frozen=True)
class Nonlinearity:
    """Power-law vorticity function gamma(t) = t - |t|**p * t."""

    p: int = 2
    family: str = "power"

    def __post_init__(self):
        if self.family != "power":
            raise ValueError(f"unsupported nonlinearity family {self.family!r}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("p must be an integer >= 1")

    def __call__(self, t):
        return gamma_eval(self, t)

    def prime(self, t):
        return gamma_prime(self, t)

    def second(self, t):
        t = np.asarray(t, dtype=float)
        p = self.p
        return -p * (p + 1) * np.abs(t) ** (p - 1) * np.sign(t) if p > 1 else -2.0 * np.sign(t)


def gamma_eval(spec: Nonlinearity, t):
    t = np.asarray(t, dtype=float)
    return t - np.abs(t) ** spec.p * t


def gamma_prime(spec: Nonlinearity, t):
    t = np.asarray(t, dtype=float)
    return 1.0 - (spec.p + 1) * np.abs(t) ** spec.p


@dataclass(frozen=True, eq=False)
class GroundState:
    spec: Nonlinearity
    r_nodes: np.ndarray
    U_values: np.ndarray
    U_r_values: np.ndarray
    U_rr_values: np.ndarray
    center_value: float
    lam: float
    tail_amplitude: float  # c in U = c*K0(r) for r >= R_match
    R_match: float = R_MATCH
    _splines: dict = field(default_factory=dict, repr=False)

    @property
    def a(self):
        return self.center_value

    def series_coeffs(self):
        """Taylor coefficients c2, c4, c6, c8 of U(r) = a + c2 r^2 + ... + c8 r^8."""
        a = self.center_value
        p = self.spec.p
        g0, g1, g2 = float(self.spec(a)), float(self.spec.prime(a)), float(self.spec.second(a))
        g3 = -(p + 1) * p * (p - 1) * a ** (p - 2)
        c2 = g0 / 4.0
        c4 = g1 * c2 / 16.0
        c6 = (g1 * c4 + 0.5 * g2 * c2 * c2) / 36.0
        c8 = (g1 * c6 + g2 * c2 * c4 + g3 * c2**3 / 6.0) / 64.0
        return c2, c4, c6, c8

    def _spline(self, name):
        if name not in self._splines:
            r, U, Ur, Urr = self.r_nodes, self.U_values, self.U_r_values, self.U_rr_values
            safe_r = np.where(r > 0, r, 1.0)
            Urrr = np.where(r > 0, self.spec.prime(U) * Ur - Urr / safe_r + Ur / safe_r**2, 0.0)
            pairs = {"U": (U, Ur), "U_r": (Ur, Urr), "U_rr": (Urr, Urrr)}
            y, dy = pairs[name]
            self._splines[name] = CubicHermiteSpline(r, y, dy)
        return self._splines[name]

    def radial(self, r, what="U"):
        """Evaluate U, U_r, U_rr or U_r/r at radii ``r`` (array)."""
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inner = r < self.R_match
        ri, ro = r[inner], r[~inner]
        c = self.tail_amplitude
        if what == "U_r/r":
            c2, c4, c6, c8 = self.series_coeffs()
            small = ri < 0.03
            vals = np.empty_like(ri)
            rs = ri[small]
            vals[small] = 2 * c2 + 4 * c4 * rs**2 + 6 * c6 * rs**4 + 8 * c8 * rs**6
            vals[~small] = self._spline("U_r")(ri[~small]) / ri[~small]
            out[inner] = vals
            out[~inner] = -c * k1(ro) / ro
            return out
        out[inner] = self._spline(what)(ri)
        if what == "U":
            out[~inner] = c * k0(ro)
        elif what == "U_r":
            out[~inner] = -c * k1(ro)
        elif what == "U_rr":
            out[~inner] = c * (k0(ro) + k1(ro) / ro)
        else:
            raise ValueError(f"unknown radial quantity {what!r}")
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        header = {"p": self.spec.p, "a": self.center_value, "lambda": self.lam, "R_match": self.R_match}
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "U", "U_r", "U_rr"])
        for row in zip(self.r_nodes, self.U_values, self.U_r_values, self.U_rr_values):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def _radial_rhs(spec):
    def rhs(r, y):
        return [y[1], spec(y[0]) - y[1] / r]

    return rhs


def _series_start(spec, a, r0):
    c2 = float(spec(a)) / 4.0
    c4 = float(spec.prime(a)) * c2 / 16.0
    return [a + c2 * r0**2 + c4 * r0**4, 2 * c2 * r0 + 4 * c4 * r0**3]


def _integrate(spec, a, r_end, t_eval=None, events=True, r0=1e-3, rtol=1e-12):
    crosses = lambda r, y: y[0]
    crosses.terminal, crosses.direction = True, -1
    turns = lambda r, y: y[1]
    turns.terminal, turns.direction = True, 1
    sol = solve_ivp(
        _radial_rhs(spec), (r0, r_end), _series_start(spec, a, r0), method="DOP853",
        rtol=rtol, atol=1e-22, t_eval=t_eval, events=[crosses, turns] if events else None,
        dense_output=False,
    )
    if sol.status == -1:
        raise ShootingError(f"integrator failure at a={a!r}: {sol.message}")
    return sol


def classify(spec: Nonlinearity, a: float, r_end: float = R_MAX) -> str:
    """'low' if the trajectory crosses zero (a too large), 'high' if it turns upward."""
    sol = _integrate(spec, a, r_end)
    if sol.t_events[0].size:
        return "low"
    if sol.t_events[1].size:
        return "high"
    return "undecided"


def shoot(spec: Nonlinearity | None = None, tol: float = 1e-13, dr: float = 0.005) -> GroundState:
    """Bisection shooting for the positive decaying radial solution.

    ``tol`` is the bracket width relative to a.  The bisection always
    continues down to machine resolution of a when ``tol`` allows it, since the
    tabulated range [0, R_match] is only reproduced if the trajectory tracks
    the separatrix past R_match.
    """
    spec = spec or Nonlinearity()
    if tol <= 0:
        raise ValueError("tol must be positive")
    scan = []
    grid = np.linspace(1.05, 6.0, 100)
    lo = hi = None
    prev = None
    for a in grid:
        kind = classify(spec, a)
        scan.append((float(a), kind))
        if prev is not None and prev[1] == "high" and kind == "low":
            lo, hi = prev[0], float(a)
            break
        prev = (float(a), kind)
    if lo is None:
        raise ShootingError("no high/low transition in the initial scan of U(0)", scan)
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if classify(spec, mid) == "low":
            hi = mid
        else:
            lo = mid
    if hi - lo > tol * hi:
        raise ShootingError(f"bracket stalled at width {hi - lo:.3g}", scan)
    a = 0.5 * (lo + hi)

    n_in = int(round(R_MATCH / dr))
    r_in = np.linspace(0.0, R_MATCH, n_in + 1)
    r0 = 1e-3
    sol = _integrate(spec, a, R_MATCH, t_eval=r_in[r_in >= r0], events=False)
    U = np.empty_like(r_in)
    Ur = np.empty_like(r_in)
    head = r_in < r0
    c2, c4 = float(spec(a)) / 4.0, float(spec.prime(a)) * float(spec(a)) / 64.0
    U[head] = a + c2 * r_in[head] ** 2 + c4 * r_in[head] ** 4
    Ur[head] = 2 * c2 * r_in[head] + 4 * c4 * r_in[head] ** 3
    U[~head], Ur[~head] = sol.y
    if np.any(U <= 0) or np.any(np.diff(U) >= 0):
        raise ShootingError("accepted trajectory is not positive and decreasing on [0, R_match]", scan)

    # tail amplitude from both U and U_r, which splits the splice mismatch between them
    c = 0.5 * (U[-1] / k0(R_MATCH) - Ur[-1] / k1(R_MATCH))
    n_out = int(round((R_MAX - R_MATCH) / dr))
    r_out = np.linspace(R_MATCH, R_MAX, n_out + 1)[1:]
    r = np.concatenate([r_in, r_out])
    U = np.concatenate([U, c * k0(r_out)])
    Ur = np.concatenate([Ur, -c * k1(r_out)])
    safe = np.where(r > 0, r, 1.0)
    Urr = np.where(r > 0, spec(U) - Ur / safe, float(spec(a)) / 2.0)

    gs = GroundState(spec, r, U, Ur, Urr, float(a), 0.0, float(c))
    lam = decay_constant(gs)
    return GroundState(spec, r, U, Ur, Urr, float(a), float(lam), float(c))


def decay_constant(gs: GroundState, window=FIT_WINDOW, check=True) -> float:
    """Mean of r**0.5 * exp(r) * U over the fit window.

    The k = 1 consistency check compares the two plateaus after removing the
    first 1/r term of the Bessel asymptotics, because the raw plateaus of U and
    -U_r differ by about 1/(2r) inside the window.
    """
    r = gs.r_nodes
    if r[-1] < 10.0:
        raise ValueError("profile must extend past r = 10")
    sel = (r >= window[0]) & (r <= window[1])
    if sel.sum() < 3:
        raise ValueError("fit window holds too few nodes; integration horizon too short")
    rw = r[sel]
    plateau0 = np.sqrt(rw) * np.exp(rw) * gs.U_values[sel]
    lam = float(plateau0.mean())
    if not check:
        return lam
    spread = (plateau0.max() - plateau0.min()) / abs(lam)
    if spread > 0.05:
        raise ValueError(f"decay plateau not flat (relative spread {spread:.3g})")
    corr0 = plateau0 * (1 + 1 / (8 * rw))
    corr1 = -np.sqrt(rw) * np.exp(rw) * gs.U_r_values[sel] * (1 - 3 / (8 * rw))
    if abs(corr1.mean() / corr0.mean() - 1) > 0.02:
        raise ValueError("k=0 and k=1 decay plateaus disagree by more than 2%")
    return lam


def ode_residual(gs: GroundState, substeps: int = 20) -> np.ndarray:
    """One-step defect of the table, per unit r.

    From each node (U, U_r) is carried to the next node by the exact flow
    (RK4 with ``substeps`` substeps) and compared with the stored values;
    returns max(|dU|, |dU_r|) / dr for every step.
    """
    r, U, V = gs.r_nodes, gs.U_values, gs.U_r_values
    h = np.diff(r)
    s = h[1:] / substeps
    x, u, v = r[1:-1].copy(), U[1:-1].copy(), V[1:-1].copy()
    f = gs.spec

    def rhs(x, u, v):
        return v, f(u) - v / x

    for _ in range(substeps):
        k1 = rhs(x, u, v)
        k2 = rhs(x + s / 2, u + s / 2 * k1[0], v + s / 2 * k1[1])
        k3 = rhs(x + s / 2, u + s / 2 * k2[0], v + s / 2 * k2[1])
        k4 = rhs(x + s, u + s * k3[0], v + s * k3[1])
        u = u + s / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v = v + s / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        x = x + s
    return np.maximum(np.abs(U[2:] - u), np.abs(V[2:] - v)) / h[1:]


def l2_mass(gs: GroundState) -> float:
    """||U||^2 over the plane, by Hermite-exact integration of the table plus the K0 tail."""
    from scipy.integrate import quad

    inner = quad(lambda r: gs.radial(np.array([r]))[0] ** 2 * r, 0, gs.R_match, limit=400, epsabs=1e-13)[0]
    c = gs.tail_amplitude
    outer = quad(lambda r: (c * k0(r)) ** 2 * r, gs.R_match, np.inf, epsabs=1e-16)[0]
    return 2 * math.pi * (inner + outer)


def sample(gs: GroundState, points, shift: float = 0.0, what: str = "U") -> np.ndarray:
    """Evaluate U or a derivative at 2-D points, centered at (0, shift).

    ``points`` is a pair of broadcastable arrays (x1, x2).  ``what`` is one of
    U, d2U (= dU/dx2), d22U (= d^2U/dx2^2), gamma_prime_U.
    """
    x1, x2 = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in points))
    y = x2 - shift
    r = np.hypot(x1, y)
    if what == "U":
        return gs.radial(r, "U")
    if what == "gamma_prime_U":
        return gs.spec.prime(gs.radial(r, "U"))
    q = gs.radial(r, "U_r/r")
    if what == "d2U":
        return y * q
    if what == "d22U":
        Urr = gs.radial(r, "U_rr")
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, (y**2 * Urr + x1**2 * q) / safe**2, q)
    raise ValueError(f"unknown sample quantity {what!r}")


def nondegeneracy_audit(gs: GroundState, disk_radius: float = 15.0, grid_step: float = 0.01, modes: int = 6):
    """Smallest-magnitude eigenvalues of -Delta + gamma'(U) on a disk, even in x1.

    The even subspace splits into angular modes cos(m theta) (m even) and
    sin(m theta) (m odd) with theta measured from the x1 axis; each radial
    problem is a symmetric tridiagonal matrix on a cell-centred grid with a
    Dirichlet wall at ``disk_radius``.  Returns (eigenvalues sorted by
    magnitude with their angular index, radial eigenvector of the smallest).
    """
    if disk_radius < 15:
        raise ValueError("disk_radius must be >= 15")
    n = int(round(disk_radius / grid_step))
    h = disk_radius / n
    r = (np.arange(n) + 0.5) * h
    rp = r + h / 2
    rm = r - h / 2
    V = gs.spec.prime(gs.radial(r, "U"))
    found = []
    for m in range(modes):
        diag = (rp + rm) / (h * h * r) + m * m / r**2 + V
        off = -rp[:-1] / (h * h * np.sqrt(r[:-1] * r[1:]))
        vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, 2))
        for k, val in enumerate(vals):
            found.append((float(val), m, vecs[:, k] / np.sqrt(r)))
    found.sort(key=lambda t: abs(t[0]))
    return [(val, m) for val, m, _ in found], (r, found[0][2])

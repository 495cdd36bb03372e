"""Nonlinear layer: the projected fixed point for (v, Gamma_s), the bifurcation
function in projection and boundary form, the root in tau, and reconstruction
of the physical wave.

Conventions: ``v`` lives on the rescaled strip grid; ``gamma_s`` is the
surface trace of the conformal map on the physical line delta * x1; the
reference strip has physical height -1 < y < 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import elliptic
from .elliptic import EigenPair, EllipticOperator
from .ground_state import GroundState, sample
from .strip import (
    StripGrid,
    apply_bc,
    bc_normal_derivative,
    dn_map,
    exp_kernel_convolve,
    extension_dx,
    extension_dy,
    harmonic_conjugate,
    harmonic_extension,
    helmholtz_inverse_surface,
    helmholtz_surface,
    line_derivative,
)

log = logging.getLogger(__name__)

SIGMA = 0.5  # amplitude ceiling for gamma_s (sup norm) in the A-inverse contraction


class FixedPointError(RuntimeError):
    def __init__(self, message, log_rows=None):
        super().__init__(message)
        self.log = log_rows or []


class RootError(RuntimeError):
    def __init__(self, message, probes=None):
        super().__init__(message)
        self.probes = probes or []


@dataclass(frozen=True)
class PhysicalParams:
    g: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.g <= 0 or self.alpha <= 0:
            raise ValueError("g and alpha must be strictly positive")


@dataclass(frozen=True, eq=False)
class WallLift:
    """Explicit part q of v carrying its even normal derivatives on the walls.

    On a wall v = 0, and the equation fixes d^2v/dx2^2 = |U|^p U and
    d^4v/dx2^4 (the latter through the current phi and conformal map).  The
    odd-reflection and sine bases assume both vanish, which costs orders in
    the wall trace; with v = q + r the remainder r satisfies those
    assumptions.  ``Lq`` is L q with the exact Laplacian, ``dq_top/bot``
    the exact x2-derivative of q on the walls.
    """

    q: np.ndarray
    Lq: np.ndarray
    dq_top: np.ndarray
    dq_bot: np.ndarray


_EXP_RATES = np.array([1.0, 2.0, 3.0])
# rows: e^{-kd} combinations with (S, S'', S'''') at d = 0 equal to (0, 1, 0) and (0, 0, 1)
_PROFILE_COEFFS = np.linalg.solve(np.vstack([_EXP_RATES**0, _EXP_RATES**2, _EXP_RATES**4]),
                                  np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])).T


def _wall_profile(which, d, far):
    """(S, dS/dd, d2S/dd2) of a profile in the distance d from a wall.

    S vanishes at d = 0 and d = far; which = 2 has unit second derivative at
    the wall and which = 4 unit fourth derivative, the other one zero.
    """
    A = _PROFILE_COEFFS[0 if which == 2 else 1]
    d = np.asarray(d, float)[..., None]
    E = A * np.exp(-_EXP_RATES * d)
    s_far = float(np.sum(A * np.exp(-_EXP_RATES * far)))
    S = E.sum(-1) - s_far * d[..., 0] / far
    S1 = -(E * _EXP_RATES).sum(-1) - s_far / far
    S2 = (E * _EXP_RATES**2).sum(-1)
    return S, S1, S2


def make_wall_lift(grid: StripGrid, c2, c4, potential) -> WallLift:
    """Lift with prescribed (top, bottom) second and fourth normal derivatives.

    Second derivatives are matched exactly on both walls; the tails of the
    fourth-derivative profiles at the opposite wall are of size e^{-2/delta}.
    """
    W = grid.wall
    far = 2 * W
    e = _wall_profile(2, far, far)[2]
    det = 1 - e**2
    a2 = ((c2[0] - e * c2[1]) / det, (c2[1] - e * c2[0]) / det)
    q = np.zeros(grid.shape)
    lap = np.zeros(grid.shape)
    dq = [0.0, 0.0]  # d/dx2 of q on (top, bottom)
    for side, d in ((0, W - grid.x2), (1, grid.x2 + W)):
        sign = -1.0 if side == 0 else 1.0  # d/dx2 = sign * d/dd
        for which, coef in ((2, a2[side]), (4, c4[side])):
            S, _, S2 = _wall_profile(which, d, far)
            q += np.outer(coef, S)
            lap += np.outer(line_derivative(coef, grid, 2, "rescaled"), S) + np.outer(coef, S2)
            dq[side] = dq[side] + sign * coef * _wall_profile(which, 0.0, far)[1]
            dq[1 - side] = dq[1 - side] + sign * coef * _wall_profile(which, far, far)[1]
    return WallLift(grid.even(q), grid.even(potential * q - lap), dq[0], dq[1])


def _wall_fourth_known(gs: GroundState, x1, x2, shift):
    """Part of d^4v/dx2^4 on a wall that depends on U alone."""
    spec = gs.spec
    y = x2 - shift
    r = np.hypot(x1, y)
    U = gs.radial(r, "U")
    q = gs.radial(r, "U_r/r")
    Urr = gs.radial(r, "U_rr")
    U1, U2 = x1 * q, y * q
    U11 = (x1**2 * Urr + y**2 * q) / r**2
    U22 = (y**2 * Urr + x1**2 * q) / r**2
    g1, g2 = spec.prime(U), spec.second(U)
    return -g1 * U22 - g2 * U2**2 + U - 2 * U11 + g1 * U11 + g2 * U1**2


@dataclass(frozen=True, eq=False)
class Ansatz:
    """Shifted ground state and its boundary correction on one grid."""

    grid: StripGrid
    gs: GroundState
    tau: float
    U: np.ndarray
    gU: np.ndarray
    gpU: np.ndarray
    Ubc: np.ndarray
    dU_top: np.ndarray  # dU/dx2 on x2 = 1/delta
    dU_bot: np.ndarray
    dUbc_top: np.ndarray
    dUbc_bot: np.ndarray
    c2: tuple  # (top, bottom) d^2v/dx2^2 on the walls
    c4_known: tuple  # U-only part of d^4v/dx2^4 on the walls
    lift: WallLift  # lift for v with a flat conformal map

    @property
    def base(self):
        return self.U - self.Ubc


def make_ansatz(gs: GroundState, grid: StripGrid, tau: float) -> Ansatz:
    X1, X2 = grid.mesh
    shift = tau / grid.delta
    U = grid.even(sample(gs, (X1, X2), shift, "U"))
    top = sample(gs, (grid.x1, grid.wall), shift, "U")
    bot = sample(gs, (grid.x1, -grid.wall), shift, "U")
    Ubc = apply_bc(top, bot, grid)
    spec = gs.spec
    gpU = spec.prime(U)
    c2 = (top - spec(top), bot - spec(bot))
    c4 = (_wall_fourth_known(gs, grid.x1, grid.wall, shift), _wall_fourth_known(gs, grid.x1, -grid.wall, shift))
    return Ansatz(
        grid, gs, float(tau), U, spec(U), gpU, Ubc,
        sample(gs, (grid.x1, grid.wall), shift, "d2U"),
        sample(gs, (grid.x1, -grid.wall), shift, "d2U"),
        bc_normal_derivative(top, bot, grid, +1),
        bc_normal_derivative(top, bot, grid, -1),
        c2, c4, make_wall_lift(grid, c2, c4, gpU),
    )


def lift_for(ans: Ansatz, dphi_top, gamma_s) -> WallLift:
    """Lift matching the wall derivatives of v for a given top trace and map.

    The top-wall fourth derivative gains 2 (dJ/dx2) (dphi/dx2); on the
    bottom wall Gamma_2 = 0 and that term vanishes.
    """
    if not np.any(gamma_s):
        return ans.lift
    grid = ans.grid
    g1 = line_derivative(gamma_s, grid, 1)
    g2 = line_derivative(gamma_s, grid, 2)
    dy = dn_map(gamma_s, grid)
    dxy = line_derivative(dy, grid, 1)
    dJ = 2 * grid.delta * (-(1 + dy) * g2 + g1 * dxy)
    c4 = (ans.c4_known[0] + 2 * dJ * dphi_top, ans.c4_known[1])
    return make_wall_lift(grid, ans.c2, c4, ans.gpU)


def apply_L(ans: Ansatz, L: EllipticOperator, v, lift: WallLift):
    """L v for a field whose even wall derivatives are carried by ``lift``."""
    return L.apply(v - lift.q) + lift.Lq


def solve_v(ans: Ansatz, L: EllipticOperator, F, U0, lift: WallLift, tol=1e-12):
    """v perpendicular to U0 with (I - P0)(L v + F) = 0."""
    r = elliptic.solve_projected(L, F + lift.Lq, U0, tol=tol)
    v = lift.q - r
    return v - ans.grid.inner(v, U0) * U0


@dataclass(frozen=True, eq=False)
class ConformalPack:
    """Derivatives of the conformal map Gamma on the reference strip.

    Strip arrays are sampled at physical heights delta * x2 (interior nodes).
    J = |1 + Gamma'|^2 with Gamma' = d_y Gamma_2 + i d_x Gamma_2.
    """

    dyG2: np.ndarray
    dxG2: np.ndarray
    top_dyG2: np.ndarray
    top_dxG2: np.ndarray
    bot_dyG2: np.ndarray

    @property
    def J(self):
        return (1 + self.dyG2) ** 2 + self.dxG2**2


def conformal_pack(gamma_s, grid: StripGrid) -> ConformalPack:
    if not np.any(gamma_s):
        z = np.zeros(grid.shape)
        zl = np.zeros(grid.Nx)
        return ConformalPack(z, z, zl, zl, zl)
    heights = grid.delta * grid.x2
    walls = np.array([-1.0, 1.0])
    dy_w = extension_dy(gamma_s, grid, walls)
    dx_w = extension_dx(gamma_s, grid, walls)
    return ConformalPack(
        extension_dy(gamma_s, grid, heights),
        extension_dx(gamma_s, grid, heights),
        dy_w[:, 1], dx_w[:, 1], dy_w[:, 0],
    )


# F, G, A -------------------------------------------------------------------


def assemble_F(ans: Ansatz, v, gamma_s, pack: ConformalPack | None = None):
    """|1 + Gamma'(delta .)|^2 gamma(v + U - U_bc) - gamma(U) - gamma'(U) v + U_bc."""
    grid = ans.grid
    if pack is None:
        pack = conformal_pack(gamma_s, grid)
    if np.max(np.abs(gamma_s), initial=0.0) > SIGMA:
        raise FixedPointError(f"surface amplitude {np.max(np.abs(gamma_s)):.3g} above threshold {SIGMA}")
    spec = ans.gs.spec
    return grid.even(pack.J * spec(v + ans.base) - ans.gU - ans.gpU * v + ans.Ubc)


def wall_derivative(v, grid: StripGrid, side=+1):
    """d/dx2 of an interior field vanishing on the walls, one-sided fourth order."""
    h = grid.hy
    if side > 0:
        f1, f2, f3, f4 = v[:, -1], v[:, -2], v[:, -3], v[:, -4]
        return -(48 * f1 - 36 * f2 + 16 * f3 - 3 * f4) / (12 * h)
    f1, f2, f3, f4 = v[:, 0], v[:, 1], v[:, 2], v[:, 3]
    return (48 * f1 - 36 * f2 + 16 * f3 - 3 * f4) / (12 * h)


def current_lift(ans: Ansatz, v, gamma_s) -> WallLift:
    """Lift consistent with the iterate (v, gamma_s)."""
    if not np.any(gamma_s):
        return ans.lift
    return lift_for(ans, phi_wall_derivative(ans, v, +1, ans.lift), gamma_s)


def phi_wall_derivative(ans: Ansatz, v, side=+1, lift: WallLift | None = None):
    """d/dx2 of phi = v + U - U_bc on a wall; v - q by one-sided differences, q exactly."""
    lift = ans.lift if lift is None else lift
    r = wall_derivative(v - lift.q, ans.grid, side)
    if side > 0:
        return ans.dU_top - ans.dUbc_top + r + lift.dq_top
    return ans.dU_bot - ans.dUbc_bot + r + lift.dq_bot


def _surface_geometry(gamma_s, grid):
    """(1 + m(D) gamma_s, gamma_s') on the physical line."""
    return 1 + dn_map(gamma_s, grid), line_derivative(gamma_s, grid, 1)


def apply_A(gamma_s, w, grid: StripGrid, params: PhysicalParams):
    """A(gamma_s) w = B (g - alpha^2 D^2)^{-1} w with the frozen curvature operator B."""
    z = helmholtz_inverse_surface(w, grid, params.g, params.alpha)
    return _apply_B(gamma_s, z, grid, params) if np.any(gamma_s) else w.copy()


def _apply_B(gamma_s, z, grid, params):
    g, a2 = params.g, params.alpha**2
    X, Y = _surface_geometry(gamma_s, grid)
    den = X**2 + Y**2
    zxx = line_derivative(z, grid, 2)
    mzx = line_derivative(dn_map(z, grid), grid, 1)  # m(D) z', kept odd
    return g * z - a2 * den**-1.5 * (X * zxx - Y * mzx)


def apply_A_inverse(gamma_s, rhs, grid: StripGrid, params: PhysicalParams, tol=1e-13, maxiter=200):
    """Solve A(gamma_s) w = rhs for even surface data.

    The iteration w <- rhs - (A - I) w is tried first; when it stalls or
    stops contracting (moderate amplitudes) GMRES on the same operator
    takes over.
    """
    if not np.any(gamma_s):
        return rhs.copy()
    if np.max(np.abs(gamma_s)) > SIGMA:
        raise FixedPointError("surface amplitude above the A-invertibility threshold")
    w = rhs.copy()
    scale = max(np.linalg.norm(rhs), 1e-300)
    prev = np.inf
    for _ in range(maxiter):
        w_new = rhs - (apply_A(gamma_s, w, grid, params) - w)
        step = np.linalg.norm(w_new - w)
        w = w_new
        if step < tol * scale:
            return w
        if step < 1e-11 * scale and step > prev:
            return w  # roundoff floor
        if step > prev:
            break
        prev = step
    n = rhs.size
    op = LinearOperator((n, n), matvec=lambda x: apply_A(gamma_s, x, grid, params), dtype=float)
    w, _ = gmres(op, rhs, x0=w, rtol=max(tol, 1e-12), atol=0.0, restart=60, maxiter=20)
    if np.linalg.norm(apply_A(gamma_s, w, grid, params) - rhs) > 1e-10 * scale:
        raise FixedPointError("A(gamma_s) is not invertible by GMRES; amplitude too large")
    return w


def assemble_G(ans: Ansatz, v, gamma_s, params: PhysicalParams, lift: WallLift | None = None):
    """(1/(2 delta^2)) A^{-1}[(d_x2 phi(., 1/delta))^2 / ((1 + m(D)gamma_s)^2 + gamma_s'^2)]."""
    grid = ans.grid
    if lift is None:
        lift = current_lift(ans, v, gamma_s)
    q = phi_wall_derivative(ans, v, +1, lift) ** 2
    if np.any(gamma_s):
        X, Y = _surface_geometry(gamma_s, grid)
        q = q / (X**2 + Y**2)
    return apply_A_inverse(gamma_s, q, grid, params) / (2 * grid.delta**2)


def eta0_leading(gs: GroundState, grid: StripGrid, tau: float, params: PhysicalParams, route="multiplier"):
    """Leading surface profile -2 delta^-2 (g - alpha^2 D^2)^{-1} (d_x2 U(./delta, 1/delta))^2."""
    q = sample(gs, (grid.x1, grid.wall), tau / grid.delta, "d2U") ** 2
    if route == "multiplier":
        out = helmholtz_inverse_surface(q, grid, params.g, params.alpha)
    else:
        out = exp_kernel_convolve(q, grid, params.g, params.alpha)
    return -2 * out / grid.delta**2


# fixed point ---------------------------------------------------------------


@dataclass(eq=False)
class WaveState:
    tau: float
    v: np.ndarray
    gamma_s: np.ndarray
    log: list = field(default_factory=list)
    residual_v: float = math.nan
    residual_s: float = math.nan
    converged: bool = False


def projected_residuals(ans: Ansatz, L: EllipticOperator, eig: EigenPair, v, gamma_s, params):
    """Discrete L2 norms of (I - P0)(L v + F) and (g - alpha^2 D^2) gamma_s + G."""
    grid = ans.grid
    r1 = apply_L(ans, L, v, current_lift(ans, v, gamma_s)) + assemble_F(ans, v, gamma_s)
    r1 = r1 - grid.inner(r1, eig.U0) * eig.U0
    r2 = helmholtz_surface(gamma_s, grid, params.g, params.alpha) + assemble_G(ans, v, gamma_s, params)
    h = grid.h_line("physical")
    return grid.norm(r1), float(np.sqrt(np.sum(r2**2) * h))


def ls_fixed_point(ans: Ansatz, L: EllipticOperator, eig: EigenPair, params: PhysicalParams,
                   tol=1e-11, max_iter=200, C=10.0, v0=None, gamma0=None, solve_tol=1e-12,
                   anderson=5, couple_surface=True) -> WaveState:
    """Fixed point of v = -L1^{-1}(I - P0) F(v, Gs), Gs = -(g - alpha^2 D^2)^{-1} G(v, Gs).

    Convergence is judged in the norm |v| + (C/delta)|Gs|.  Anderson mixing
    (depth ``anderson``, 0 disables) accelerates the plain iteration without
    changing its fixed point.  With ``couple_surface`` off the surface is
    held flat (gamma_s = 0), which leaves the pure strip problem.
    """
    grid = ans.grid
    if abs(ans.tau) > 1 / 3:
        raise ValueError("refusing |tau| > 1/3")
    h = grid.h_line("physical")
    wv, ws = np.sqrt(grid.cell), (C / grid.delta) * np.sqrt(h)
    U0 = eig.U0
    v = np.zeros(grid.shape) if v0 is None else v0 - grid.inner(v0, U0) * U0
    gam = np.zeros(grid.Nx) if gamma0 is None else gamma0.copy()
    nv = v.size

    def pack_state(v, gam):
        return np.concatenate([wv * v.ravel(), ws * gam])

    def unpack(x):
        return x[:nv].reshape(grid.shape) / wv, x[nv:] / ws

    def step(v, gam):
        lift = current_lift(ans, v, gam)
        F = assemble_F(ans, v, gam)
        v_new = solve_v(ans, L, F, U0, lift, tol=solve_tol)
        if not couple_surface:
            return v_new, np.zeros_like(gam)
        G = assemble_G(ans, v, gam, params, lift)
        gam_new = -helmholtz_inverse_surface(G, grid, params.g, params.alpha)
        return v_new, gam_new

    rows = []
    X, R = [], []
    x = pack_state(v, gam)
    growth = 0
    prev_upd = np.inf
    for it in range(1, max_iter + 1):
        v_new, gam_new = step(*unpack(x))
        fx = pack_state(v_new, gam_new)
        r = fx - x
        upd = np.linalg.norm(r)
        size = np.linalg.norm(fx)
        rows.append({"iter": it, "update": float(upd), "norm": float(size),
                     "v_norm": grid.norm(v_new), "gamma_norm": float(np.sqrt(np.sum(gam_new**2) * h))})
        log.debug("fixed point %d: update %.3e norm %.3e", it, upd, size)
        if upd <= tol * max(size, 1e-300):
            v, gam = unpack(fx)
            v = v - grid.inner(v, U0) * U0
            state = WaveState(ans.tau, v, gam, rows)
            state.residual_v, state.residual_s = projected_residuals(ans, L, eig, v, gam, params)
            state.converged = True
            return state
        growth = growth + 1 if upd > prev_upd else 0
        if growth >= 5:
            raise FixedPointError("fixed-point updates grew over 5 consecutive steps", rows)
        prev_upd = upd
        if anderson:
            X.append(x)
            R.append(r)
            if len(X) > anderson + 1:
                X.pop(0)
                R.pop(0)
            if len(X) > 1:
                dR = np.array([R[i + 1] - R[i] for i in range(len(R) - 1)]).T
                dX = np.array([X[i + 1] - X[i] for i in range(len(X) - 1)]).T
                coef, *_ = np.linalg.lstsq(dR, r, rcond=None)
                x = x + r - (dX + dR) @ coef
            else:
                x = fx
        else:
            x = fx
    raise FixedPointError("fixed point did not converge", rows)


# bifurcation function --------------------------------------------------------


def bifurcation_b(ans: Ansatz, state: WaveState, eig: EigenPair, L: EllipticOperator):
    """<U0, L v + F(tau, v, Gs)>.

    In the continuum <U0, L v> = l <U0, v> = 0.  Discretely L acts on v
    through the wall lift, so that term is O(h^2) rather than zero and is
    kept; ``lift_defect`` reports it.
    """
    lift = current_lift(ans, state.v, state.gamma_s)
    return ans.grid.inner(eig.U0, apply_L(ans, L, state.v, lift) + assemble_F(ans, state.v, state.gamma_s))


def lift_defect(ans: Ansatz, state: WaveState, eig: EigenPair, L: EllipticOperator):
    """(<U0, L v> through the lift, <U0, L_h v> with the plain discrete operator)."""
    lift = current_lift(ans, state.v, state.gamma_s)
    g = ans.grid
    return g.inner(eig.U0, apply_L(ans, L, state.v, lift)), g.inner(eig.U0, L.apply(state.v))


def boundary_integrals(ans: Ansatz, v, gamma_s):
    """Weighted wall integrals of (d_x2 phi)^2, top and bottom, rescaled line measure."""
    grid = ans.grid
    pack = conformal_pack(gamma_s, grid)
    lift = current_lift(ans, v, gamma_s)
    top = phi_wall_derivative(ans, v, +1, lift) ** 2
    bot = phi_wall_derivative(ans, v, -1, lift) ** 2
    wt = (1 + pack.top_dyG2) / ((1 + pack.top_dyG2) ** 2 + pack.top_dxG2**2)
    wb = 1 / (1 + pack.bot_dyG2)
    return grid.line_integral(wt * top), grid.line_integral(wb * bot)


def bifurcation_b_boundary(ans: Ansatz, state: WaveState):
    """-1/2 (top integral - bottom integral)."""
    top, bot = boundary_integrals(ans, state.v, state.gamma_s)
    return -0.5 * (top - bot)


@dataclass(eq=False)
class TauProbe:
    tau: float
    ans: Ansatz
    L: EllipticOperator
    eig: EigenPair
    state: WaveState
    b: float
    b_boundary: float


@dataclass(frozen=True)
class Tolerances:
    solve: float = 1e-12
    eigen: float = 1e-10
    fixed_point: float = 1e-11
    tau: float = 1e-8


def probe(gs: GroundState, grid: StripGrid, tau: float, params: PhysicalParams, C=10.0,
          tols: Tolerances = Tolerances(), warm: WaveState | None = None) -> TauProbe:
    """Eigenpair, fixed point and both bifurcation values at one tau."""
    ans = make_ansatz(gs, grid, tau)
    L = elliptic.build(grid, gs, tau)
    U2 = elliptic.make_U2(gs, tau, grid)
    eig = elliptic.eigenpair(L, U2, tol=tols.eigen)
    state = ls_fixed_point(ans, L, eig, params, tol=tols.fixed_point, C=C, solve_tol=tols.solve,
                           v0=None if warm is None else warm.v,
                           gamma0=None if warm is None else warm.gamma_s)
    return TauProbe(tau, ans, L, eig, state, bifurcation_b(ans, state, eig, L), bifurcation_b_boundary(ans, state))


def find_tau_root(gs: GroundState, grid: StripGrid, params: PhysicalParams, bracket=0.05,
                  tol_tau=None, C=10.0, tols: Tolerances = Tolerances(), locate_b=True):
    """Root of the boundary form of the bifurcation function.

    Probes tau = 0 and then +-bracket, doubling up to |tau| = 0.3, until two
    successful probes bracket a sign change of the boundary form.  A probe
    whose fixed point fails (surface amplitude too large near one wall) is
    recorded and skipped.  Illinois steps then drive the boundary form below
    1e-10 times the boundary integrals, and the root is closed in a final
    bracket of width ``tol_tau`` (bisection if the Illinois root misses).
    The record notes whether b changes sign across that final bracket too;
    with ``locate_b`` the root of b is found the same way to report the
    distance between the two roots.  Returns (tau_star, probe, record).
    """
    tol_tau = tols.tau if tol_tau is None else tol_tau
    probes = []
    good = []

    def run(tau, warm=None):
        p = probe(gs, grid, tau, params, C, tols, warm)
        probes.append({"tau": tau, "b": p.b, "b_boundary": p.b_boundary,
                       "iterations": len(p.state.log)})
        log.info("tau=%+.12e  b=%+.6e  b~=%+.6e", tau, p.b, p.b_boundary)
        return p

    def try_run(tau, warm=None):
        try:
            good.append(run(tau, warm))
        except (FixedPointError, elliptic.SolverError) as exc:
            probes.append({"tau": tau, "failed": str(exc)})
            log.info("tau=%+.12e  probe failed: %s", tau, exc)

    def sign_pair():
        pts = sorted(good, key=lambda p: p.tau)
        pairs = [(a, b) for a, b in zip(pts, pts[1:]) if np.sign(a.b_boundary) != np.sign(b.b_boundary)]
        return min(pairs, key=lambda ab: abs(ab[0].tau + ab[1].tau)) if pairs else None

    try_run(0.0)
    half = bracket
    pair = None
    while pair is None:
        for s in (-1, 1):
            try_run(s * half, good[0].state if good and good[0].tau == 0.0 else None)
            pair = sign_pair()
            if pair:
                break
        if pair is None:
            if half >= 0.3:
                raise RootError("no sign change of the boundary form up to |tau| = 0.3", probes)
            half = min(2 * half, 0.3)
    lo, hi = pair
    initial = [lo.tau, hi.tau]
    top, bot = boundary_integrals(lo.ans, lo.state.v, lo.state.gamma_s)
    best, lo, hi = _illinois(lo, hi, run, "b_boundary", 1e-10 * (abs(top) + abs(bot)), 0.01 * tol_tau)

    # close the root in a bracket of width tol_tau around the Illinois point
    if hi.tau - lo.tau > tol_tau:
        a = run(max(lo.tau, best.tau - 0.5 * tol_tau), best.state)
        c = run(min(hi.tau, best.tau + 0.5 * tol_tau), best.state)
        if np.sign(a.b_boundary) != np.sign(c.b_boundary):
            lo, hi = a, c
        else:
            lo, hi = (c, hi) if np.sign(c.b_boundary) == np.sign(lo.b_boundary) else (lo, a)
            while hi.tau - lo.tau > tol_tau:
                m = run(0.5 * (lo.tau + hi.tau), lo.state)
                if m.b_boundary == 0:
                    lo = hi = m
                    break
                if np.sign(m.b_boundary) == np.sign(lo.b_boundary):
                    lo = m
                else:
                    hi = m
    record = {
        "initial_bracket": initial,
        "bracket": [lo.tau, hi.tau],
        "b_bracket": [lo.b, hi.b],
        "b_boundary_bracket": [lo.b_boundary, hi.b_boundary],
        "b_sign_change": bool(np.sign(lo.b) != np.sign(hi.b)),
        "b_boundary_sign_change": bool(np.sign(lo.b_boundary) != np.sign(hi.b_boundary)),
        "tau_star": best.tau,
        "boundary_integrals": [top, bot],
    }
    if locate_b:
        pa, pb = (p for p in sorted(good, key=lambda p: p.tau) if p.tau in initial)
        if np.sign(pa.b) != np.sign(pb.b):
            rb, _, _ = _illinois(pa, pb, run, "b", 1e-10 * max(abs(pa.b), abs(pb.b)), 0.1 * tol_tau)
            record["tau_b_root"] = rb.tau
            record["root_gap"] = rb.tau - best.tau
    record["probes"] = probes
    return best.tau, best, record


def _illinois(lo, hi, run, key, ftol, xtol=0.0, max_iter=30):
    """Safeguarded secant (Illinois) on getattr(probe, key) inside a sign-change bracket.

    Returns (best probe, bracket low end, bracket high end).
    """
    a, b = lo, hi
    fa, fb = getattr(a, key), getattr(b, key)
    best = a if abs(fa) < abs(fb) else b
    side = 0
    for _ in range(max_iter):
        if abs(getattr(best, key)) <= ftol or abs(b.tau - a.tau) <= xtol:
            break
        t = (a.tau * fb - b.tau * fa) / (fb - fa)
        if not (min(a.tau, b.tau) < t < max(a.tau, b.tau)):
            t = 0.5 * (a.tau + b.tau)
        m = run(t, best.state)
        fm = getattr(m, key)
        if abs(fm) < abs(getattr(best, key)):
            best = m
        if fm == 0:
            a = b = m
            break
        if np.sign(fm) == np.sign(fb):
            b, fb = m, fm
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a, fa = m, fm
            if side == 1:
                fb *= 0.5
            side = 1
    return (best, a, b) if a.tau <= b.tau else (best, b, a)

"""Linearized operator L = -Delta + gamma'(U(. - tau/delta e2)) on the strip.

Dirichlet walls, even symmetry in x1.  Solves are preconditioned MINRES (the
operator is symmetric but indefinite: the ground state has Morse index one),
with the exact constant-coefficient inverse (1 - Delta)^{-1} as preconditioner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, minres

from .ground_state import GroundState, sample
from .strip import StripGrid, apply_bc


class SolverError(RuntimeError):
    """Krylov or eigen iteration failed to converge; ``history`` holds residuals."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


@dataclass(frozen=True, eq=False)
class EllipticOperator:
    grid: StripGrid
    potential: np.ndarray
    tau: float
    gs: GroundState | None = None
    stats: dict = field(default_factory=lambda: {"iterations": 0}, repr=False)

    def apply(self, u):
        if u.shape != self.grid.shape:
            raise ValueError(f"field shape {u.shape} does not match grid {self.grid.shape}")
        return self.grid.neg_laplacian(u) + self.potential * u

    __call__ = apply

    def precondition(self, f):
        return self.grid.screened_inverse(f, 1.0)


@dataclass(frozen=True, eq=False)
class EigenPair:
    l: float
    U0: np.ndarray
    a0: float
    w: np.ndarray
    residual: float
    iterations: int


def build(grid: StripGrid, gs: GroundState, tau: float) -> EllipticOperator:
    if abs(tau) > 1 / 3:
        raise ValueError("|tau| must not exceed 1/3")
    X1, X2 = grid.mesh
    V = gs.spec.prime(sample(gs, (X1, X2), tau / grid.delta, "U"))
    return EllipticOperator(grid, grid.even(V), float(tau), gs)


def _krylov(matvec, prec, f, tol, maxiter, x0=None):
    n = f.size
    shape = f.shape
    A = LinearOperator((n, n), matvec=lambda x: matvec(x.reshape(shape)).ravel(), dtype=float)
    M = LinearOperator((n, n), matvec=lambda x: prec(x.reshape(shape)).ravel(), dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = minres(A, f.ravel(), x0=None if x0 is None else x0.ravel(), M=M, rtol=tol,
                     maxiter=maxiter, callback=cb)
    return x.reshape(shape), count[0]


def _refined_solve(matvec, prec, f, tol, maxiter, stats, rounds=6):
    """MINRES with iterative refinement.

    Convergence is measured on the preconditioned residual |M(Lu - f)|/|Mf|,
    where M = (1 - Delta)^{-1}: the plain residual of the discrete Laplacian
    has a roundoff floor near eps*|L|*|u|, which sits above 1e-10 once u is
    amplified by a small eigenvalue.
    """
    fnorm = np.linalg.norm(prec(f))
    if fnorm == 0:
        return np.zeros_like(f)
    u = np.zeros_like(f)
    r = f.copy()
    history = []
    rel = np.inf
    for _ in range(rounds):
        rn = np.linalg.norm(prec(r))
        du, its = _krylov(matvec, prec, r, max(0.1 * tol * fnorm / rn, 1e-15), maxiter)
        stats["iterations"] += its
        u = u + du
        r = f - matvec(u)
        new = np.linalg.norm(prec(r)) / fnorm
        history.append((its, new))
        if new < tol:
            return u
        if new > 0.5 * rel:
            break
        rel = new
    raise SolverError(f"relative residual {new:.3g} above tol {tol:.3g}", history)


def solve(L: EllipticOperator, f, tol=1e-12, maxiter=400):
    """u with |M(L u - f)| < tol |M f| for the preconditioner M."""
    g = L.grid
    return g.even(_refined_solve(L.apply, L.precondition, g.even(f), tol, maxiter, L.stats))


def _projector(grid, U0):
    c = grid.cell

    def proj(u):
        return u - (np.sum(u * U0) * c) * U0

    return proj


def solve_projected(L: EllipticOperator, f, U0, tol=1e-12, maxiter=400):
    """u ⊥ U0 solving (I - P0)(L u - f) = 0, with U0 of unit L2 norm."""
    g = L.grid
    U0 = U0 / g.norm(U0)
    Q = _projector(g, U0)
    c = g.cell

    def op(u):
        # deflated operator on U0^perp plus the identity along U0
        a = np.sum(u * U0) * c
        z = u - a * U0
        return Q(L.apply(z)) + a * U0

    def prec(u):
        a = np.sum(u * U0) * c
        return Q(L.precondition(Q(u))) + a * U0

    rhs = Q(g.even(f))
    if not np.any(rhs):
        return np.zeros_like(rhs)
    u = _refined_solve(op, prec, rhs, tol, maxiter, L.stats)
    return Q(g.even(u))


def make_U2(gs: GroundState, tau: float, grid: StripGrid):
    """U2 = d2U - (d2U)_bc: the x2-derivative of the shifted ground state with its wall traces removed."""
    X1, X2 = grid.mesh
    shift = tau / grid.delta
    d2U = sample(gs, (X1, X2), shift, "d2U")
    top = sample(gs, (grid.x1, grid.wall), shift, "d2U")
    bottom = sample(gs, (grid.x1, -grid.wall), shift, "d2U")
    return grid.even(d2U - apply_bc(top, bottom, grid))


def U2_traces(gs: GroundState, tau: float, grid: StripGrid):
    """Traces of U2 on both walls, evaluated through the bc closed form."""
    shift = tau / grid.delta
    top = sample(gs, (grid.x1, grid.wall), shift, "d2U")
    bottom = sample(gs, (grid.x1, -grid.wall), shift, "d2U")
    walls = np.array([-grid.wall, grid.wall])
    bc = apply_bc(top, bottom, grid, walls)
    return top - bc[:, 1], bottom - bc[:, 0]


def _finish_pair(L, U0, seed, residual, iterations):
    g = L.grid
    U0 = U0 / g.norm(U0)
    if g.inner(U0, seed) < 0:
        U0 = -U0
    LU0 = L.apply(U0)
    l = g.inner(U0, LU0)
    residual = g.norm(LU0 - l * U0)
    a0 = g.inner(U0, seed) / g.inner(seed, seed)
    w = U0 / a0 - seed
    return EigenPair(float(l), U0, float(a0), w, float(residual), iterations)


def eigenpair(L: EllipticOperator, seed, tol=1e-10, maxiter=50) -> EigenPair:
    """Inverse iteration from ``seed`` (normally U2) with Rayleigh-quotient eigenvalue."""
    g = L.grid
    u = seed / g.norm(seed)
    history = []
    for it in range(1, maxiter + 1):
        y = solve(L, u, tol=1e-11)
        u = g.even(y / g.norm(y))
        Lu = L.apply(u)
        l = g.inner(u, Lu)
        res = g.norm(Lu - l * u)
        history.append(res)
        if res < tol:
            return _finish_pair(L, u, seed, res, it)
    raise SolverError("inverse iteration did not converge", history)


def eigen_contraction(L: EllipticOperator, U2, tol=1e-13, maxiter=100) -> EigenPair:
    """Fixed point w = l(w) Lt^{-1} w - Lt^{-1}(1 - P2) L U2 on U2^perp.

    Lt is L compressed to U2^perp and l(w) = <w + U2, L U2>/|U2|^2.
    """
    g = L.grid
    n2 = g.inner(U2, U2)
    e2 = U2 / np.sqrt(n2)
    LU2 = L.apply(U2)
    P2c = _projector(g, e2)
    base = solve_projected(L, P2c(LU2), e2, tol=1e-13)
    w = np.zeros_like(U2)
    steps = []
    for it in range(1, maxiter + 1):
        ell = g.inner(w + U2, LU2) / n2
        w_new = ell * solve_projected(L, w, e2, tol=1e-13) - base
        step = g.norm(w_new - w)
        w = w_new
        steps.append(step)
        if len(steps) > 3 and all(steps[-i] > steps[-i - 1] for i in range(1, 4)):
            raise SolverError("eigen contraction is not contracting", steps)
        if step < tol * max(g.norm(w), 1e-30) or step < 1e-15:
            break
    else:
        raise SolverError("eigen contraction did not converge", steps)
    ell = g.inner(w + U2, LU2) / n2
    U0 = U2 + w
    nrm = g.norm(U0)
    LU0 = L.apply(U0 / nrm)
    res = g.norm(LU0 - ell * U0 / nrm)
    return EigenPair(float(ell), U0 / nrm, float(1 / nrm), w, float(res), it)


def spectral_scaling_table(gs: GroundState, deltas, tau=0.0, grid_factory=None):
    """Rows (delta, l, <U2, L U2>/|U2|^2, |L U2|) for regression elsewhere."""
    grid_factory = grid_factory or StripGrid.auto
    rows = []
    for d in deltas:
        if not 0.2 <= d <= 0.6:
            raise ValueError("deltas must lie in [0.2, 0.6]")
        grid = grid_factory(d)
        L = build(grid, gs, tau)
        U2 = make_U2(gs, tau, grid)
        LU2 = L.apply(U2)
        pair = eigenpair(L, U2)
        rows.append((float(d), pair.l, grid.inner(U2, LU2) / grid.inner(U2, U2), grid.norm(LU2)))
    return rows

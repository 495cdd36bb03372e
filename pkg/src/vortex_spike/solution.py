"""Reconstruction of the physical wave from a converged state, and its diagnostics.

The physical fluid domain is {-1 < X2 < 1 + eta(X1)}; it is the image of the
reference strip {-1 < y < 1} under z -> z + Gamma(z).  Integrals over the
fluid are pulled back to the rescaled grid, where the Dirichlet energy is
invariant and area elements carry the Jacobian J = |1 + Gamma'|^2.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import RectBivariateSpline

from .contours import contour, is_closed
from .ground_state import GroundState, sample
from .strip import StripGrid, apply_bc, conformal_eval, dn_map, harmonic_conjugate, harmonic_extension, line_derivative
from .wave import (
    ConformalPack,
    PhysicalParams,
    TauProbe,
    apply_L,
    assemble_F,
    boundary_integrals,
    conformal_pack,
    current_lift,
    eta0_leading,
    phi_wall_derivative,
)


class MapInversionError(RuntimeError):
    pass


@dataclass(eq=False)
class WaveSolution:
    probe: TauProbe
    params: PhysicalParams
    phi: np.ndarray  # v + U - U_bc on the rescaled grid
    pack: ConformalPack
    Gamma1: np.ndarray  # on the reference grid (physical heights delta * x2)
    Gamma2: np.ndarray
    X: np.ndarray  # physical abscissae of the field window
    Y: np.ndarray  # physical heights of the field window
    psi: np.ndarray  # NaN outside the fluid
    omega: np.ndarray
    psi0: np.ndarray
    x_surface: np.ndarray  # uniform physical abscissae delta * x1
    eta: np.ndarray
    eta0: np.ndarray

    @property
    def grid(self) -> StripGrid:
        return self.probe.ans.grid

    @property
    def tau(self):
        return self.probe.tau


def invert_map(gamma_s, grid, X, Y, damping=0.9, tol=1e-13, max_iter=200):
    """Reference points z with z + Gamma(z) = (X, Y) by damped fixed-point iteration."""
    x, y = np.array(X, float), np.array(Y, float)
    prev = np.inf
    for _ in range(max_iter):
        G1, G2 = conformal_eval(gamma_s, grid, x, y)
        rx, ry = X - G1 - x, Y - G2 - y
        step = float(np.max(np.abs(np.concatenate([rx.ravel(), ry.ravel()]))))
        x, y = x + damping * rx, y + damping * ry
        if step < tol:
            return x, y
        if step > prev and step > 1e3 * tol:
            raise MapInversionError("map inversion is not contracting")
        prev = step
    raise MapInversionError("map inversion did not converge")


def _phi_evaluator(probe: TauProbe):
    """phi at arbitrary rescaled points: U exactly, v - U_bc by bicubic splines incl. the walls."""
    ans = probe.ans
    grid = ans.grid
    shift = ans.tau / grid.delta
    rest = probe.state.v - ans.Ubc
    top = -sample(ans.gs, (grid.x1, grid.wall), shift, "U")
    bot = -sample(ans.gs, (grid.x1, -grid.wall), shift, "U")
    x2 = np.concatenate([[-grid.wall], grid.x2, [grid.wall]])
    data = np.hstack([bot[:, None], rest, top[:, None]])
    spline = RectBivariateSpline(grid.x1, x2, data, kx=3, ky=3)

    def phi(x1, x2):
        return sample(ans.gs, (x1, x2), shift, "U") + spline.ev(x1, x2)

    return phi


def assemble_solution(probe: TauProbe, params: PhysicalParams, window=None, n_heights=121) -> WaveSolution:
    """Physical stream function, surface and vorticity for a converged probe."""
    ans, state = probe.ans, probe.state
    grid = ans.grid
    d = grid.delta
    gam = state.gamma_s
    phi = state.v + ans.base
    pack = conformal_pack(gam, grid)
    heights = d * grid.x2
    G1 = harmonic_conjugate(gam, grid, heights, ramp=True)
    G2 = harmonic_extension(gam, grid, heights)

    # surface on uniform physical abscissae: solve x + Gamma_1(x, 1) = X
    xs = d * grid.x1
    xr = xs.copy()
    for _ in range(200):
        g1, _ = conformal_eval(gam, grid, xr, np.ones_like(xr))
        new = xs - g1
        done = np.max(np.abs(new - xr)) < 1e-14
        xr = new
        if done:
            break
    else:
        raise MapInversionError("surface abscissa inversion did not converge")
    eta = conformal_eval(gam, grid, xr, np.ones_like(xr))[1]
    eta = 0.5 * (eta + np.roll(eta[::-1], 1))
    eta0 = eta0_leading(ans.gs, grid, 0.0, params)

    half = min(d * grid.Lx, 10 * d) if window is None else window
    X = xs[np.abs(xs) <= half]
    top = 1 + max(0.0, float(eta.max()))
    Y = np.linspace(-1, top, n_heights)
    PX, PY = np.meshgrid(X, Y, indexing="ij")
    zx, zy = invert_map(gam, grid, PX, PY)
    inside = (zy >= -1) & (zy <= 1)
    phi_at = _phi_evaluator(probe)
    psi = np.where(inside, phi_at(zx / d, np.clip(zy, -1, 1) / d), np.nan)
    omega = ans.gs.spec(psi) / d**2
    U = lambda a, b: sample(ans.gs, (a, b), 0.0, "U")
    t = probe.tau
    psi0 = U(PX / d, (PY - t) / d) - U(PX / d, (2 - PY - t) / d) - U(PX / d, (-2 - PY - t) / d)
    psi0 = np.where(inside, psi0, np.nan)
    return WaveSolution(probe, params, phi, pack, G1, G2, X, Y, psi, omega, psi0, xs, eta, eta0)


@dataclass
class Diagnostics:
    tau: float
    b: float
    b_boundary: float
    energy: float
    energy_kinetic: float
    energy_gravity: float
    energy_surface: float
    kinetic_norm: float
    grad_U_sq: float
    kinetic_ratio: float
    total_vorticity: float
    omega_L1: float
    omega_Linf: float
    vorticity_ratio: float
    boundary_identity: float
    boundary_identity_rel: float
    pde_residual: float
    bernoulli_residual: float
    psi0_distance: float
    eta0_distance: float
    sup_eta: float
    min_eta: float
    omega_negative: int
    omega_positive: int
    omega_center_negative: bool
    closed_streamlines: bool
    residual_v: float
    residual_s: float

    def to_dict(self):
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, (np.floating, np.integer, np.bool_)):
                out[k] = v.item()
        return out


def grad_U_squared(gs: GroundState):
    """||grad U||^2 over the plane."""
    f = lambda r: gs.radial(np.array([r]), "U_r")[0] ** 2 * r
    return 2 * math.pi * (quad(f, 0, 12, limit=400)[0] + quad(f, 12, 25, limit=200)[0])


def surface_curvature(gamma_s, grid):
    """Signed curvature of the free surface, graph formula through the parametrization x -> (X(x), Y(x))."""
    Xp = 1 + dn_map(gamma_s, grid)
    Xpp = line_derivative(dn_map(gamma_s, grid), grid, 1)
    Yp = line_derivative(gamma_s, grid, 1)
    Ypp = line_derivative(gamma_s, grid, 2)
    eta1 = Yp / Xp
    eta2 = (Ypp * Xp - Yp * Xpp) / Xp**3
    return -eta2 / (1 + eta1**2) ** 1.5


def streamlines_closed(phi, grid, levels=(0.05, 0.2, 0.5, 1.0)):
    """Every level set of phi at the given fractions of max(phi) is a closed curve."""
    top = float(np.max(phi))
    if top <= 0:
        return False
    for frac in levels:
        lines = contour(phi, frac * top if frac < 1 else 0.9 * top)
        if not lines or not all(is_closed(l) for l in lines):
            return False
    return True


def diagnostics(sol: WaveSolution) -> Diagnostics:
    probe = sol.probe
    ans, state, L = probe.ans, probe.state, probe.L
    grid = ans.grid
    d = grid.delta
    params = sol.params
    spec = ans.gs.spec
    phi = sol.phi
    gam = state.gamma_s
    J = sol.pack.J
    lift = current_lift(ans, state.v, gam)

    # kinetic: conformal invariance of the Dirichlet energy; -Delta phi via the lifted operator
    neg_lap = apply_L(ans, L, state.v, lift) - ans.gpU * state.v - ans.gU + ans.Ubc
    dirichlet = grid.inner(phi, neg_lap)
    gU2 = grad_U_squared(ans.gs)

    # surface energies on the uniform physical line
    h = grid.h_line("physical")
    eta = sol.eta
    eta_x = line_derivative(eta, grid, 1)
    e_grav = 0.5 * params.g * float(np.sum(eta**2) * h)
    e_surf = params.alpha**2 * float(np.sum(np.sqrt(1 + eta_x**2) - 1) * h)
    e_kin = 0.5 * dirichlet

    # vorticity, pulled back: d(area) = delta^2 J dx, omega = gamma(phi)/delta^2
    gphi = spec(phi)
    total = float(np.sum(gphi * J) * grid.cell)
    l1 = float(np.sum(np.abs(gphi) * J) * grid.cell)
    linf = float(np.max(np.abs(gphi))) / d**2

    # boundary identity: (1/delta)(top - bottom) of the weighted wall integrals
    top, bot = boundary_integrals(ans, state.v, gam)
    ident = (top - bot) / d

    # interior residual of Delta Psi = gamma(Psi)/delta^2 in physical L2
    R = apply_L(ans, L, state.v, lift) + assemble_F(ans, state.v, gam)
    pde = math.sqrt(np.sum(R**2 / J) / np.sum(gphi**2 * J))

    # Bernoulli on the surface: (1/2)|grad Psi|^2 + g eta + alpha^2 kappa = 0
    dphi = phi_wall_derivative(ans, state.v, +1, lift)
    Xp = 1 + dn_map(gam, grid)
    Yp = line_derivative(gam, grid, 1)
    kin = 0.5 * dphi**2 / (d**2 * (Xp**2 + Yp**2))
    bern = kin + params.g * gam + params.alpha**2 * surface_curvature(gam, grid)
    bern_rel = float(np.linalg.norm(bern) / np.linalg.norm(kin))

    inside = ~np.isnan(sol.psi)
    dpsi = float(np.linalg.norm((sol.psi - sol.psi0)[inside]) / np.linalg.norm(sol.psi0[inside]))
    deta = float(np.linalg.norm(eta - sol.eta0) / np.linalg.norm(sol.eta0))

    thresh = 1e-12 * np.max(np.abs(gphi))
    centre = np.unravel_index(np.argmax(phi), phi.shape)
    return Diagnostics(
        tau=probe.tau, b=probe.b, b_boundary=probe.b_boundary,
        energy=e_kin + e_grav + e_surf, energy_kinetic=e_kin, energy_gravity=e_grav, energy_surface=e_surf,
        kinetic_norm=math.sqrt(dirichlet), grad_U_sq=gU2, kinetic_ratio=e_kin / (0.5 * gU2),
        total_vorticity=total, omega_L1=l1, omega_Linf=linf, vorticity_ratio=abs(total) / l1,
        boundary_identity=ident, boundary_identity_rel=abs(ident) / dirichlet,
        pde_residual=pde, bernoulli_residual=bern_rel,
        psi0_distance=dpsi, eta0_distance=deta, sup_eta=float(np.max(np.abs(eta))), min_eta=float(np.min(eta)),
        omega_negative=int(np.sum(gphi < -thresh)), omega_positive=int(np.sum(gphi > thresh)),
        omega_center_negative=bool(gphi[centre] < 0),
        closed_streamlines=streamlines_closed(phi, grid),
        residual_v=state.residual_v, residual_s=state.residual_s,
    )

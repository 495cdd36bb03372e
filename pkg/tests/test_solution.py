import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vortex_spike import elliptic, wave
from vortex_spike.contours import contour, is_closed
from vortex_spike.ground_state import l2_mass, shoot
from vortex_spike.solution import (
    MapInversionError,
    assemble_solution,
    grad_U_squared,
    invert_map,
    streamlines_closed,
    surface_curvature,
)
from vortex_spike.strip import StripGrid, conformal_eval

P = wave.PhysicalParams()


@pytest.fixture(scope="module")
def gs():
    return shoot()


@pytest.fixture(scope="module")
def grid():
    return StripGrid.auto(0.35)


# contours -------------------------------------------------------------------------


def test_contour_of_circle_is_closed():
    x = np.linspace(-2, 2, 81)
    X, Y = np.meshgrid(x, x, indexing="ij")
    lines = contour(X**2 + Y**2, 1.0)
    assert len(lines) == 1 and is_closed(lines[0])
    pts = np.array(lines[0]) * 0.05 - 2  # index to coordinates
    assert np.allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0, atol=2e-3)


def test_contour_of_plane_is_open():
    x = np.linspace(0, 1, 20)
    X, Y = np.meshgrid(x, x, indexing="ij")
    lines = contour(X + Y, 1.0)
    assert len(lines) == 1 and not is_closed(lines[0])


def test_contour_skips_nan_cells():
    x = np.linspace(-2, 2, 41)
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = X**2 + Y**2
    f[20, :] = np.nan  # cut the circle in two
    lines = contour(f, 1.0)
    assert len(lines) == 2 and not any(is_closed(l) for l in lines)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 1.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_contours_of_bumps_are_closed(r, cx, cy):
    x = np.linspace(-3, 3, 61)
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2))
    lines = contour(f, np.exp(-r**2))
    assert lines and all(is_closed(l) for l in lines)


def test_streamlines_closed_detects_open_levels(grid):
    X1, X2 = grid.mesh
    bump = np.exp(-(X1**2 + X2**2))
    assert streamlines_closed(bump, grid)
    assert not streamlines_closed(np.exp(-X2**2) * np.ones_like(X1), grid)
    assert not streamlines_closed(-bump, grid)


# conformal map ----------------------------------------------------------------------


def test_invert_map_identity_for_flat_surface(grid):
    X = np.linspace(-2, 2, 7)[:, None] * np.ones((1, 5))
    Y = np.linspace(-1, 1, 5)[None, :] * np.ones((7, 1))
    x, y = invert_map(np.zeros(grid.Nx), grid, X, Y)
    assert np.array_equal(x, X) and np.array_equal(y, Y)


@pytest.mark.parametrize("amp", [-0.02, -0.15])
def test_invert_map_roundtrip(grid, amp):
    gam = amp * np.exp(-(grid.delta * grid.x1) ** 2 / 0.3)
    X = np.linspace(-2, 2, 9)[:, None] * np.ones((1, 6))
    Y = np.linspace(-1, 0.9, 6)[None, :] * np.ones((9, 1))
    x, y = invert_map(gam, grid, X, Y)
    G1, G2 = conformal_eval(gam, grid, x, y)
    assert np.max(np.abs(x + G1 - X)) < 1e-12
    assert np.max(np.abs(y + G2 - Y)) < 1e-12


def test_invert_map_reports_failure(grid):
    gam = -0.5 * np.exp(-(grid.delta * grid.x1) ** 2 / 0.3)
    with pytest.raises(MapInversionError):
        invert_map(gam, grid, np.zeros((1, 1)), np.ones((1, 1)), damping=1.9, max_iter=50)


def test_surface_curvature_small_amplitude(grid):
    x = grid.delta * grid.x1
    gam = 1e-6 * np.exp(-x**2)
    # linearized: kappa = -eta'' with eta = gamma_s to first order
    expected = -1e-6 * (4 * x**2 - 2) * np.exp(-x**2)
    assert np.max(np.abs(surface_curvature(gam, grid) - expected)) < 1e-10


# energies -----------------------------------------------------------------------------


def test_dirichlet_energy_equals_mass(gs):
    # multiply Delta U = U - U^3 by U: |grad U|^2 = int U^4 - U^2 = int U^2 (mass identity)
    assert grad_U_squared(gs) == pytest.approx(l2_mass(gs), rel=1e-7)


# reconstruction --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def flat(gs, grid):
    tau = -0.01
    ans = wave.make_ansatz(gs, grid, tau)
    L = elliptic.build(grid, gs, tau)
    eig = elliptic.eigenpair(L, elliptic.make_U2(gs, tau, grid))
    state = wave.ls_fixed_point(ans, L, eig, P, couple_surface=False)
    probe = wave.TauProbe(tau, ans, L, eig, state, wave.bifurcation_b(ans, state, eig, L),
                          wave.bifurcation_b_boundary(ans, state))
    return assemble_solution(probe, P, window=1.0, n_heights=41)


def test_flat_map_reconstruction_is_phi(flat, grid):
    d = grid.delta
    assert np.all(flat.eta == 0)
    assert not np.isnan(flat.psi).any()
    # psi on the grid nodes inside the window equals phi(x / delta, y / delta)
    cols = np.abs(d * grid.x1) <= 1.0
    mid = grid.Ny // 2
    j = int(np.argmin(np.abs(flat.Y)))
    assert abs(grid.x2[mid]) < 1e-12 and abs(flat.Y[j]) < 1e-12
    assert np.allclose(flat.psi[:, j], flat.phi[cols, mid], atol=1e-10)
    # vorticity follows the stream function pointwise
    assert np.allclose(flat.omega, flat.probe.ans.gs.spec(flat.psi) / d**2)


def test_reconstruction_matches_leading_profile(flat):
    inside = ~np.isnan(flat.psi)
    rel = np.linalg.norm((flat.psi - flat.psi0)[inside]) / np.linalg.norm(flat.psi0[inside])
    assert rel < 0.05
    assert np.all(flat.eta0 <= 0)

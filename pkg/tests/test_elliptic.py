import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vortex_spike import elliptic
from vortex_spike.ground_state import sample, shoot
from vortex_spike.strip import StripGrid


@pytest.fixture(scope="module")
def gs():
    return shoot()


# smallest positive eigenvalue on tiny_grid() at tau = 0, frozen from the dense oracle
L_TINY = 0.0798752278946


def tiny_grid(delta=0.4):
    return StripGrid(delta, 8.0, 64, 39, "fd4", strict=False)


def dense_operator(grid, gs, tau):
    """-Delta + gamma'(U) as a dense matrix: explicit Fourier matrix in x1, reflected fd4 stencil in x2."""
    N, h = grid.Nx, grid.hx
    j = np.arange(N)
    m = np.fft.fftfreq(N, 1 / N)
    k = 2 * np.pi * m / (N * h)
    k[N // 2] = np.pi / h  # Nyquist mode as a cosine
    E = np.exp(2j * np.pi * np.outer(j, m) / N)
    Dxx = np.real(E @ np.diag(k**2) @ E.conj().T) / N
    n = grid.Ny
    s = np.array([-1, 16, -30, 16, -1]) / (12 * grid.hy**2)
    Dyy = np.zeros((n, n))
    for i in range(n):
        for off, c in zip(range(-2, 3), s):
            col = i + off
            if 0 <= col < n:
                Dyy[i, col] += c
            elif col == -2:
                Dyy[i, 0] -= c  # odd reflection through the wall node (col -1 is the wall, zero)
            elif col == n + 1:
                Dyy[i, n - 1] -= c
    X1, X2 = grid.mesh
    V = gs.spec.prime(sample(gs, (X1, X2), tau / grid.delta))
    return np.kron(Dxx, np.eye(n)) - np.kron(np.eye(N), Dyy) + np.diag(V.ravel())


def test_dense_oracle_eigenvalue(gs):
    g = tiny_grid()
    A = dense_operator(g, gs, 0.0)
    vals, vecs = np.linalg.eigh(A)
    U2 = elliptic.make_U2(gs, 0.0, g)
    overlaps = np.abs(vecs.T @ U2.ravel())
    l_oracle = vals[np.argmax(overlaps)]
    L = elliptic.build(g, gs, 0.0)
    pair = elliptic.eigenpair(L, U2)
    assert l_oracle == pytest.approx(L_TINY, rel=1e-10)
    assert pair.l == pytest.approx(l_oracle, rel=1e-8)
    # the dense matrix and the multiplier operator agree on a test field
    u = g.even(np.exp(-(g.mesh[0] ** 2 + (g.mesh[1] - 0.3) ** 2)))
    assert np.allclose(A @ u.ravel(), L.apply(u).ravel(), atol=1e-10)


def test_inverse_iteration_and_contraction_agree(gs):
    g = StripGrid.auto(0.4)
    L = elliptic.build(g, gs, 0.0)
    U2 = elliptic.make_U2(gs, 0.0, g)
    a = elliptic.eigenpair(L, U2)
    b = elliptic.eigen_contraction(L, U2)
    assert abs(a.l - b.l) / abs(b.l) < 1e-8
    assert abs(g.inner(a.U0, b.U0)) == pytest.approx(1.0, abs=1e-9)
    assert a.residual < 1e-10


def test_positivity_chain_and_traces(gs):
    g = StripGrid.auto(0.35)
    L = elliptic.build(g, gs, 0.0)
    U2 = elliptic.make_U2(gs, 0.0, g)
    assert g.inner(U2, L.apply(U2)) > 0
    assert elliptic.eigenpair(L, U2).l > 0
    top, bot = elliptic.U2_traces(gs, 0.0, g)
    assert max(np.max(np.abs(top)), np.max(np.abs(bot))) < 1e-10


def test_solve_residual(gs):
    g = tiny_grid()
    L = elliptic.build(g, gs, 0.1)
    X1, X2 = g.mesh
    f = g.even(np.exp(-(X1**2 + X2**2) / 2) * (1 + X2))
    u = elliptic.solve(L, f)
    assert g.norm(L.apply(u) - f) < 1e-10 * g.norm(f)


def test_solve_projected_stays_orthogonal(gs):
    g = tiny_grid()
    L = elliptic.build(g, gs, 0.0)
    pair = elliptic.eigenpair(L, elliptic.make_U2(gs, 0.0, g))
    X1, X2 = g.mesh
    f = g.even(np.exp(-(X1**2 + (X2 - 1) ** 2)))
    u = elliptic.solve_projected(L, f, pair.U0)
    assert abs(g.inner(u, pair.U0)) < 1e-10 * g.norm(u)
    r = L.apply(u) - f
    r -= g.inner(r, pair.U0) * pair.U0
    assert g.norm(r) < 1e-9 * g.norm(f)


def test_build_refuses_large_shift(gs):
    with pytest.raises(ValueError):
        elliptic.build(tiny_grid(), gs, 0.4)


def test_eigenvalue_mirror_symmetric_in_tau(gs):
    g = tiny_grid()
    ls = []
    for tau in (-0.1, 0.1):
        L = elliptic.build(g, gs, tau)
        ls.append(elliptic.eigenpair(L, elliptic.make_U2(gs, tau, g)).l)
    assert ls[0] == pytest.approx(ls[1], rel=1e-8)


def test_eigenvalue_grows_as_spike_nears_a_wall(gs):
    g = tiny_grid()
    l0 = elliptic.eigenpair(elliptic.build(g, gs, 0.0), elliptic.make_U2(gs, 0.0, g)).l
    l1 = elliptic.eigenpair(elliptic.build(g, gs, 0.2), elliptic.make_U2(gs, 0.2, g)).l
    # l ~ exp(-2(1 - |tau|)/delta) grows as the spike approaches the nearer wall
    assert l1 > l0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_operator_symmetric(gs, seed):
    g = tiny_grid()
    L = elliptic.build(g, gs, 0.05)
    rng = np.random.default_rng(seed)
    u, w = (g.even(rng.standard_normal(g.shape)) for _ in range(2))
    assert g.inner(u, L.apply(w)) == pytest.approx(g.inner(L.apply(u), w), rel=1e-10)


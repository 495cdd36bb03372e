import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vortex_spike.ground_state import (
    Nonlinearity,
    classify,
    decay_constant,
    l2_mass,
    nondegeneracy_audit,
    ode_residual,
    sample,
    shoot,
)

# frozen from the fixed-step oracle below (RK4, h = 1e-3, multisection)
U0_ORACLE = 2.2062008647
GRAD_U_SQ = 11.700897  # |grad U|^2 over the plane, p = 2


def rk4_classify(a, h=1e-3, r_end=12.0):
    """Vectorized fixed-step RK4 from a Taylor start: +1 turns up (a too small), -1 crosses zero."""
    a = np.asarray(a, float)
    r = 1e-3
    c2 = (a - a**3) / 4
    c4 = (1 - 3 * a**2) * c2 / 16
    u = a + c2 * r**2 + c4 * r**4
    v = 2 * c2 * r + 4 * c4 * r**3
    fate = np.zeros(a.shape)

    def f(r, u, v):
        return v, u - u**3 - v / r

    n = int((r_end - r) / h)
    for _ in range(n):
        k1 = f(r, u, v)
        k2 = f(r + h / 2, u + h / 2 * k1[0], v + h / 2 * k1[1])
        k3 = f(r + h / 2, u + h / 2 * k2[0], v + h / 2 * k2[1])
        k4 = f(r + h, u + h * k3[0], v + h * k3[1])
        u = u + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v = v + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        r += h
        fate = np.where((fate == 0) & (u < 0), -1, fate)
        fate = np.where((fate == 0) & (v > 0), 1, fate)
        u = np.where(fate != 0, 0.5, u)  # park decided trajectories
        v = np.where(fate != 0, 0.0, v)
        if np.all(fate != 0):
            break
    return fate


def oracle_center_value(lo=2.0, hi=2.5, passes=7, width=64):
    for _ in range(passes):
        a = np.linspace(lo, hi, width)
        fate = rk4_classify(a)
        k = int(np.argmax(fate < 0))  # first crossing trajectory
        lo, hi = a[k - 1], a[k]
    return 0.5 * (lo + hi)


@pytest.fixture(scope="module")
def gs():
    return shoot()


def test_oracle_reproduces_frozen_center_value():
    assert abs(oracle_center_value() - U0_ORACLE) < 1e-9


def test_shoot_matches_oracle(gs):
    assert abs(gs.center_value - U0_ORACLE) < 1e-6
    assert abs(gs.center_value - oracle_center_value()) < 1e-6


def test_ode_defect_below_1e9(gs):
    assert np.max(ode_residual(gs)) < 1e-9


def test_decay_plateau_flat_within_one_percent(gs):
    r = gs.r_nodes
    sel = (r >= 12) & (r <= 20)
    plateau = np.sqrt(r[sel]) * np.exp(r[sel]) * gs.U_values[sel]
    assert (plateau.max() - plateau.min()) / plateau.mean() < 0.01
    assert gs.lam == pytest.approx(decay_constant(gs))
    assert gs.lam > 0


def test_tail_is_bessel_k0(gs):
    # sqrt(r) e^r K0(r) -> sqrt(pi/2), so lambda ~ c sqrt(pi/2) (1 - 1/(8r))
    assert gs.lam == pytest.approx(gs.tail_amplitude * math.sqrt(math.pi / 2), rel=0.02)


def test_profile_positive_and_decreasing(gs):
    assert np.all(gs.U_values > 0)
    assert np.all(np.diff(gs.U_values) < 0)


def test_dirichlet_energy(gs):
    from vortex_spike.solution import grad_U_squared

    assert grad_U_squared(gs) == pytest.approx(GRAD_U_SQ, rel=1e-6)


def test_pohozaev_mass_identity(gs):
    # for Delta U = U - U^3 in the plane: int U^2 = int U^4 / 2 (scaling identity)
    from scipy.integrate import quad

    quart = 2 * math.pi * quad(lambda r: gs.radial(np.array([r]))[0] ** 4 * r, 0, 25, limit=400)[0]
    assert l2_mass(gs) == pytest.approx(quart / 2, rel=1e-7)


def test_classification_sides(gs):
    assert classify(gs.spec, gs.center_value * 0.99) == "high"
    assert classify(gs.spec, gs.center_value * 1.01) == "low"


def test_nonlinearity_rejects_bad_p():
    with pytest.raises(ValueError):
        Nonlinearity(0)
    with pytest.raises(ValueError):
        Nonlinearity(2, family="exp")


def test_shoot_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        shoot(tol=0)


def test_audit_kernel_is_translation_mode(gs):
    vals, (r, vec) = nondegeneracy_audit(gs)
    small = [(v, m) for v, m in vals if abs(v) < 1e-3]
    assert [m for _, m in small] == [1]
    # next eigenvalue is bounded away from zero
    assert sorted(abs(v) for v, _ in vals)[1] > 0.5


def test_audit_against_cartesian_oracle(gs):
    """Negative eigenvalue and the absence of other small eigenvalues on a square, 5-point Laplacian."""
    import scipy.sparse as sp
    from scipy.sparse.linalg import eigsh

    R, h = 10.0, 0.1
    x = np.arange(-R + h, R, h)
    n = x.size
    D = sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h**2
    I = sp.identity(n)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    V = gs.spec.prime(sample(gs, (X1, X2)))
    A = (-(sp.kron(D, I) + sp.kron(I, D)) + sp.diags(V.ravel())).tocsc()
    ev = np.sort(eigsh(A, k=4, sigma=-3.0, which="LM", return_eigenvectors=False))
    audit, _ = nondegeneracy_audit(gs)
    negative = min(v for v, _ in audit)
    assert ev[0] == pytest.approx(negative, abs=0.02)
    assert np.all(np.abs(ev[1:3]) < 0.05)  # the two translation modes
    assert ev[3] > 0.5


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3, allow_nan=False), st.integers(1, 4))
def test_nonlinearity_odd_and_derivative(t, p):
    g = Nonlinearity(p)
    assert g(-t) == pytest.approx(-g(t), abs=1e-12)
    h = 1e-6
    fd = (g(t + h) - g(t - h)) / (2 * h)
    assert g.prime(t) == pytest.approx(fd, rel=1e-5, abs=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-0.5, 0.5))
def test_sample_radial_and_reflection(gs, x1, x2, shift):
    u = sample(gs, (np.array([x1]), np.array([x2 + shift])), shift)
    assert u[0] == pytest.approx(gs.radial(np.array([math.hypot(x1, x2)]))[0], rel=1e-12, abs=1e-15)
    # d2U is odd under reflection about the centre
    a = sample(gs, (np.array([x1]), np.array([shift + x2])), shift, "d2U")
    b = sample(gs, (np.array([x1]), np.array([shift - x2])), shift, "d2U")
    assert a[0] == pytest.approx(-b[0], abs=1e-10)

"""Fourier-multiplier operators on the periodized strip.

Fields on the rescaled slab |x2| < 1/delta are plain arrays of shape
(Nx, Ny): x1 runs over the periodic nodes -Lx + j*hx, x2 over the Ny interior
nodes.  Surface fields are arrays of shape (Nx,) on the same x1 nodes; their
physical abscissa is delta * x1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft
from scipy.signal import lfilter

X2_SCHEMES = ("fd2", "fd4", "spectral")


@dataclass(frozen=True, eq=False)
class StripGrid:
    """Tensor grid on the truncated slab S_delta.

    ``scheme`` selects the x2 second-derivative: the 3-point stencil, the
    5-point stencil with odd reflection at the walls, or the sine-spectral
    derivative.  All three are diagonal in the DST-I basis.
    """

    delta: float
    Lx: float
    Nx: int
    Ny: int
    scheme: str = "fd4"
    strict: bool = True

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.Nx % 2:
            raise ValueError("Nx must be even")
        if self.Ny < 3:
            raise ValueError("Ny must be at least 3")
        if self.scheme not in X2_SCHEMES:
            raise ValueError(f"scheme must be one of {X2_SCHEMES}")
        if self.strict:
            if self.hx > 0.25 or self.hy > 0.25:
                raise ValueError(f"grid too coarse: hx={self.hx:.3g}, hy={self.hy:.3g} (limit 0.25)")
            if self.Lx < 1 / self.delta + 10:
                raise ValueError(f"Lx={self.Lx} below 1/delta + 10 = {1 / self.delta + 10:.3g}")

    @classmethod
    def auto(cls, delta, hx=0.125, hy=0.02, phys_half_length=8.0, scheme="fd4"):
        """Grid with target spacings and a physical half-length of at least ``phys_half_length``."""
        Lx = max(1 / delta + 10, phys_half_length / delta)
        Nx = 2 * int(np.ceil(Lx / hx))
        Nx += Nx % 4  # keeps FFT sizes friendly
        Ny = int(np.ceil(2 / (delta * hy))) - 1
        return cls(delta, float(Lx), Nx, Ny, scheme)

    @property
    def hx(self):
        return 2 * self.Lx / self.Nx

    @property
    def hy(self):
        return 2 / (self.delta * (self.Ny + 1))

    @property
    def wall(self):
        return 1 / self.delta

    @cached_property
    def x1(self):
        return -self.Lx + self.hx * np.arange(self.Nx)

    @cached_property
    def x2(self):
        return -self.wall + self.hy * np.arange(1, self.Ny + 1)

    @cached_property
    def mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    @property
    def shape(self):
        return (self.Nx, self.Ny)

    @property
    def cell(self):
        return self.hx * self.hy

    def k(self, scale="rescaled"):
        """Non-negative rfft wavenumbers in the requested horizontal scale."""
        k = 2 * np.pi * sfft.rfftfreq(self.Nx, self.hx)
        return k / self.delta if scale == "physical" else k

    def h_line(self, scale="rescaled"):
        return self.hx * self.delta if scale == "physical" else self.hx

    @cached_property
    def mu2(self):
        """Eigenvalues of the discrete -d^2/dx2^2 on the sine modes m = 1..Ny."""
        th = np.arange(1, self.Ny + 1) * np.pi / (self.Ny + 1)
        h2 = self.hy**2
        if self.scheme == "fd2":
            return (2 - 2 * np.cos(th)) / h2
        if self.scheme == "fd4":
            return (30 - 32 * np.cos(th) + 2 * np.cos(2 * th)) / (12 * h2)
        return (th / self.hy) ** 2

    @cached_property
    def laplace_symbol(self):
        """Symbol of -Delta in the (rfft x DST-I) basis."""
        return self.k()[:, None] ** 2 + self.mu2[None, :]

    # transforms -------------------------------------------------------------

    def forward(self, u):
        return sfft.dst(sfft.rfft(u, axis=0), type=1, axis=1, norm="ortho")

    def inverse(self, c):
        return sfft.irfft(sfft.idst(c, type=1, axis=1, norm="ortho"), n=self.Nx, axis=0)

    def even(self, u):
        """Even projection in x1 (node j pairs with node Nx - j)."""
        return 0.5 * (u + np.roll(u[::-1], 1, axis=0))

    def odd(self, u):
        return 0.5 * (u - np.roll(u[::-1], 1, axis=0))

    def inner(self, u, v):
        return float(np.sum(u * v) * self.cell)

    def norm(self, u):
        return float(np.sqrt(np.sum(u * u) * self.cell))

    def neg_laplacian(self, u):
        return self.even(self.inverse(self.laplace_symbol * self.forward(u)))

    def screened_inverse(self, f, shift=1.0):
        """Exact (shift - Delta)^{-1} on the grid."""
        return self.even(self.inverse(self.forward(f) / (shift + self.laplace_symbol)))

    def line_integral(self, f, scale="rescaled"):
        return float(np.sum(f) * self.h_line(scale))


def _even_line(f):
    return 0.5 * (f + np.roll(f[::-1], 1, axis=0))


def _odd_line(f):
    return 0.5 * (f - np.roll(f[::-1], 1, axis=0))


def _line_multiplier(f, mult, parity="even"):
    """Apply a multiplier given on rfft frequencies (last axis of mult may index heights)."""
    n = f.shape[0]
    F = sfft.rfft(f)
    if mult.ndim == 1:
        out = sfft.irfft(F * mult, n=n)
        return _even_line(out) if parity == "even" else _odd_line(out)
    out = sfft.irfft(F[:, None] * mult, n=n, axis=0)
    return _even_line(out) if parity == "even" else _odd_line(out)


def sinh_ratio(a, u, v):
    """sinh(a*u)/sinh(a*v) for a > 0, 0 <= u <= v, overflow safe."""
    a, u, v = np.broadcast_arrays(np.asarray(a, float), np.asarray(u, float), np.asarray(v, float))
    return np.exp(a * (u - v)) * np.expm1(-2 * a * u) / np.expm1(-2 * a * v)


def cosh_sinh_ratio(a, u, v):
    """cosh(a*u)/sinh(a*v) for a > 0, 0 <= u <= v, overflow safe."""
    return np.exp(a * (u - v)) * (1 + np.exp(-2 * a * u)) / (-np.expm1(-2 * a * v))


# boundary correction -----------------------------------------------------------


def _bc_kernels(grid, x2):
    a = np.sqrt(1 + grid.k() ** 2)[:, None]
    w = grid.wall
    x2 = np.asarray(x2, float)[None, :]
    top = sinh_ratio(a, x2 + w, 2 * w)
    bottom = sinh_ratio(a, w - x2, 2 * w)
    return top, bottom


def apply_bc(f_plus, f_minus, grid: StripGrid, x2=None):
    """Screened-harmonic interpolant with traces f_plus (x2 = 1/delta) and f_minus (x2 = -1/delta).

    Returns values on the interior nodes, or on the heights ``x2`` if given.
    """
    x2 = grid.x2 if x2 is None else x2
    top, bottom = _bc_kernels(grid, x2)
    Fp = sfft.rfft(f_plus)[:, None]
    Fm = sfft.rfft(f_minus)[:, None]
    out = sfft.irfft(top * Fp + bottom * Fm, n=grid.Nx, axis=0)
    return grid.even(out)


def bc_normal_derivative(f_plus, f_minus, grid: StripGrid, side=+1):
    """d/dx2 of apply_bc(f_plus, f_minus) on the wall x2 = side/delta."""
    a = np.sqrt(1 + grid.k() ** 2)
    two_w = 2 * grid.wall
    coth = 1 / np.tanh(a * two_w)
    csch = np.exp(-a * two_w) * 2 / (-np.expm1(-2 * a * two_w))
    Fp, Fm = sfft.rfft(f_plus), sfft.rfft(f_minus)
    if side > 0:
        spec = a * (coth * Fp - csch * Fm)
    else:
        spec = a * (csch * Fp - coth * Fm)
    return _even_line(sfft.irfft(spec, n=grid.Nx))


# reference strip {|y| < 1} in physical variables ---------------------------------


def harmonic_extension(gamma_s, grid: StripGrid, heights):
    """Harmonic function on -1 < y < 1 with traces 0 (bottom) and gamma_s (top).

    ``heights`` are physical y values; returns shape (Nx, len(heights)).
    """
    y = np.atleast_1d(np.asarray(heights, float))
    xi = grid.k("physical")[:, None]
    mult = np.empty((xi.shape[0], y.size))
    mult[0] = (y + 1) / 2
    mult[1:] = sinh_ratio(xi[1:], y[None, :] + 1, 2.0)
    return _line_multiplier(gamma_s, mult)


def extension_dy(gamma_s, grid: StripGrid, heights):
    """d/dy of harmonic_extension at the given heights."""
    y = np.atleast_1d(np.asarray(heights, float))
    xi = grid.k("physical")[:, None]
    mult = np.empty((xi.shape[0], y.size))
    mult[0] = 0.5
    mult[1:] = xi[1:] * cosh_sinh_ratio(xi[1:], y[None, :] + 1, 2.0)
    return _line_multiplier(gamma_s, mult)


def extension_dx(gamma_s, grid: StripGrid, heights):
    """d/dx (physical) of harmonic_extension at the given heights."""
    y = np.atleast_1d(np.asarray(heights, float))
    xi = grid.k("physical")[:, None]
    mult = np.zeros((xi.shape[0], y.size), dtype=complex)
    mult[1:] = 1j * xi[1:] * sinh_ratio(xi[1:], y[None, :] + 1, 2.0)
    mult[-1] = 0.0  # Nyquist of an odd derivative
    return _line_multiplier(gamma_s, mult, parity="odd")


def dn_map(gamma_s, grid: StripGrid):
    """Dirichlet-Neumann map m(D) = |xi| coth(2|xi|), m(0) = 1/2."""
    xi = grid.k("physical")
    mult = np.empty_like(xi)
    mult[0] = 0.5
    mult[1:] = xi[1:] / np.tanh(2 * xi[1:])
    return _line_multiplier(gamma_s, mult)


def harmonic_conjugate(gamma_s, grid: StripGrid, heights, ramp=False):
    """Harmonic conjugate Gamma_1 of the extension, odd in x1.

    The zero mode is dropped unless ``ramp`` is set, in which case the linear
    term (mean(gamma_s)/2) * x keeps the Cauchy-Riemann pair exact for data of
    nonzero mean.
    """
    y = np.atleast_1d(np.asarray(heights, float))
    xi = grid.k("physical")[:, None]
    mult = np.zeros((xi.shape[0], y.size), dtype=complex)
    mult[1:] = -1j * cosh_sinh_ratio(xi[1:], y[None, :] + 1, 2.0)
    mult[-1] = 0.0
    out = _line_multiplier(gamma_s, mult, parity="odd")
    if ramp:
        out = out + 0.5 * np.mean(gamma_s) * (grid.delta * grid.x1)[:, None]
    return out


def line_derivative(f, grid: StripGrid, order=1, scale="physical"):
    """Spectral x1-derivative of a line field (parity flips for odd order)."""
    k = grid.k(scale)
    mult = (1j * k) ** order
    if order % 2:
        mult = mult.copy()
        mult[-1] = 0.0
    return _line_multiplier(f, mult, parity="odd" if order % 2 else "even")


def line_multiplier(f, grid: StripGrid, func, scale="physical"):
    """Apply an arbitrary even real multiplier func(|xi|) to an even line field."""
    return _line_multiplier(f, func(grid.k(scale)))


def helmholtz_inverse_surface(f, grid: StripGrid, g=1.0, alpha=1.0):
    """(g - alpha^2 D^2)^{-1} in physical variables: multiplier 1/(g + alpha^2 xi^2)."""
    if g <= 0 or alpha <= 0:
        raise ValueError("g and alpha must be positive")
    xi = grid.k("physical")
    return _line_multiplier(f, 1 / (g + alpha**2 * xi**2))


def helmholtz_surface(f, grid: StripGrid, g=1.0, alpha=1.0):
    xi = grid.k("physical")
    return _line_multiplier(f, g + alpha**2 * xi**2)


# exponential kernel by product integration ----------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _cell_weights(kappa, h, order):
    """Weights w_m with sum_m w_m f(s_m) = int_0^h exp(-kappa (h - s)) p(s) ds.

    p interpolates f at s_m = (m - order//2) h, m = 0..order (a stencil centred on
    the cell [0, h]).
    """
    nodes = (np.arange(order + 1) - order // 2) * h
    s = 0.5 * h * (_GL_NODES + 1)
    ws = 0.5 * h * _GL_WEIGHTS * np.exp(-kappa * (h - s))
    w = np.empty(order + 1)
    for m in range(order + 1):
        others = np.delete(nodes, m)
        lag = np.prod((s[:, None] - others[None, :]) / (nodes[m] - others[None, :]), axis=1)
        w[m] = ws @ lag
    return w


def exp_kernel_convolve(f, grid: StripGrid, g=1.0, alpha=1.0, order=9):
    """(1/(2 alpha sqrt g)) exp(-(sqrt g/alpha)|x|) * f on the periodic physical line.

    Direct product integration: f is interpolated by local polynomials of degree
    ``order`` on each cell, integrated exactly against the exponential, and the
    left/right running sums are closed periodically (sum over images).
    """
    if g <= 0 or alpha <= 0:
        raise ValueError("g and alpha must be positive")
    f = np.asarray(f, float)
    n = f.size
    h = grid.h_line("physical")
    kappa = np.sqrt(g) / alpha
    w = _cell_weights(kappa, h, order)
    shift = order // 2
    # left sums: cell (i-1, i], stencil starts at node i-1-shift
    c = np.zeros(n)
    for m, wm in enumerate(w):
        c += wm * np.roll(f, -(m - shift - 1))
    decay = np.exp(-kappa * h)
    period = np.exp(-kappa * h * n)
    left = _periodic_recursion(c, decay, period)
    # right sums by reflection
    fr = f[::-1]
    d = np.zeros(n)
    for m, wm in enumerate(w):
        d += wm * np.roll(fr, -(m - shift - 1))
    right = _periodic_recursion(d, decay, period)[::-1]
    return (left + right) / (2 * alpha * np.sqrt(g))


def _periodic_recursion(c, decay, period):
    """S_i = decay * S_{i-1} + c_i on a periodic index set."""
    n = c.size
    powers = decay ** np.arange(n)
    s0 = np.dot(powers, np.roll(c[::-1], 1)) / (1 - period)
    # s0 is S_0 = sum_j decay^j c_{-j}
    out, _ = lfilter([1.0], [1.0, -decay], c[1:], zi=[decay * s0])
    return np.concatenate([[s0], out])


def conformal_eval(gamma_s, grid: StripGrid, x, y, ramp=True, chunk=4096):
    """(Gamma_1, Gamma_2) at arbitrary physical points (x, y) of the reference strip.

    Direct sum over the trigonometric interpolant of ``gamma_s``; agrees with
    harmonic_extension and harmonic_conjugate at the grid nodes.
    """
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    shape = x.shape
    x, y = x.ravel(), y.ravel()
    n = grid.Nx
    F = sfft.rfft(gamma_s) / n
    xi = grid.k("physical")
    w = np.full(xi.shape, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    origin = grid.delta * grid.Lx
    G1 = np.empty(x.size)
    G2 = np.empty(x.size)
    a = xi[None, 1:]
    for s in range(0, x.size, chunk):
        xs, ys = x[s:s + chunk, None], y[s:s + chunk, None]
        ph = np.exp(1j * a * (xs + origin)) * (w[1:] * F[1:])
        S = sinh_ratio(a, ys + 1, 2.0)
        C = cosh_sinh_ratio(a, ys + 1, 2.0)
        G2[s:s + chunk] = (ph.real * S).sum(1) + F[0].real * (ys[:, 0] + 1) / 2
        C[:, -1] = 0.0  # Nyquist carries no conjugate
        G1[s:s + chunk] = ((-1j * ph).real * C).sum(1)
        if ramp:
            G1[s:s + chunk] += 0.5 * F[0].real * xs[:, 0]
    return G1.reshape(shape), G2.reshape(shape)

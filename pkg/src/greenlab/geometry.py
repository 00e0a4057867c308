"""Spacetime model: the cylinder R_t x S^1_L with metric dt^2 - dx^2.

Sections are stored as complex arrays indexed (time, space, channel).  Spatial
derivatives are spectral, time derivatives use 4th-order finite differences.

Fourier convention (used everywhere in the package)::

    f_n(t) = 1/(2N+1) * sum_j f(t, x_j) exp(-i k_n x_j),   k_n = 2 pi n / L

so that ``f(t, x_j) = sum_n f_n(t) exp(i k_n x_j)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial
from typing import Tuple, Union

import numpy as np

Tag = Union[str, tuple]

_RANKS = {"scalar": 1, "oneform": 2, "twoform": 1, "dirac": 4}


class GridError(ValueError):
    """Raised for invalid grids or mismatched sections."""


class SupportError(ValueError):
    """Raised when a support precondition is violated."""


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class CylinderGrid:
    L: float
    T: float
    N: int
    n_time: int

    def __post_init__(self):
        if not (self.L > 0 and self.T > 0):
            raise GridError("L and T must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise GridError("N must be an integer >= 1")
        if int(self.n_time) != self.n_time or self.n_time < 4 or self.n_time % 2:
            raise GridError("n_time must be an even integer >= 4")

    @property
    def n_x(self) -> int:
        return 2 * self.N + 1

    @property
    def dx(self) -> float:
        return self.L / self.n_x

    @property
    def dt(self) -> float:
        return 2.0 * self.T / (self.n_time - 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(-self.T, self.T, self.n_time)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_x) * self.dx

    @property
    def modes(self) -> np.ndarray:
        """Mode labels -N..N in storage order."""
        return np.arange(-self.N, self.N + 1)

    @property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * self.modes / self.L

    @property
    def time_weights(self) -> np.ndarray:
        """Trapezoid weights on the time grid."""
        w = np.full(self.n_time, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    @property
    def volume(self) -> float:
        return self.dt * self.dx

    def omega(self, m: float) -> np.ndarray:
        return np.sqrt(self.k ** 2 + m * m)

    def margin(self, cells: int = 4) -> Tuple[float, float]:
        """Interior time interval that keeps ``cells`` grid cells from each end."""
        return (-self.T + cells * self.dt, self.T - cells * self.dt)

    def describe(self) -> dict:
        return {"L": self.L, "T": self.T, "N": self.N, "n_time": self.n_time}


def make_grid(L: float, T: float, N: int, n_time: int) -> CylinderGrid:
    """Build a cylinder grid; raises ``GridError`` on invalid parameters."""
    return CylinderGrid(float(L), float(T), int(N), int(n_time))


# ---------------------------------------------------------------------------
# bundle tags


def sum_tag(a: Tag, b: Tag) -> tuple:
    return ("sum", a, b)


def rank(tag: Tag) -> int:
    if isinstance(tag, tuple):
        if len(tag) != 3 or tag[0] != "sum":
            raise GridError(f"bad bundle tag {tag!r}")
        return rank(tag[1]) + rank(tag[2])
    try:
        return _RANKS[tag]
    except KeyError:
        raise GridError(f"unknown bundle tag {tag!r}") from None


def bundle_metric(tag: Tag) -> np.ndarray:
    """Fibre matrix g with <f, h> = integral of f^T g h.

    p-forms carry the (-1)^p signature weighting, so the 1-form pairing is
    -f_t h_t + f_x h_x and the 2-form pairing is -F G.  The doubled spinor
    bundle pairs spinors against cospinors.
    """
    if isinstance(tag, tuple):
        ga, gb = bundle_metric(tag[1]), bundle_metric(tag[2])
        g = np.zeros((len(ga) + len(gb),) * 2)
        g[: len(ga), : len(ga)] = ga
        g[len(ga):, len(ga):] = gb
        return g
    if tag == "scalar":
        return np.eye(1)
    if tag == "oneform":
        return np.diag([-1.0, 1.0])
    if tag == "twoform":
        return -np.eye(1)
    if tag == "dirac":
        g = np.zeros((4, 4))
        g[:2, 2:] = np.eye(2)
        g[2:, :2] = np.eye(2)
        return g
    raise GridError(f"unknown bundle tag {tag!r}")


# gamma matrices of the 2D Clifford algebra: (g0)^2 = 1, (g1)^2 = -1
GAMMA0 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
GAMMA1 = np.array([[0.0, -1.0], [1.0, 0.0]], dtype=complex)


def _conj_matrix(tag: Tag):
    """Return (S, swap) with C f = S @ conj(f)."""
    if isinstance(tag, tuple):
        a, b = _conj_matrix(tag[1]), _conj_matrix(tag[2])
        n1, n2 = len(a), len(b)
        S = np.zeros((n1 + n2,) * 2, dtype=complex)
        S[:n1, :n1] = a
        S[n1:, n1:] = b
        return S
    if tag == "dirac":
        S = np.zeros((4, 4), dtype=complex)
        S[:2, 2:] = GAMMA0
        S[2:, :2] = GAMMA0
        return S
    return np.eye(rank(tag), dtype=complex)


# ---------------------------------------------------------------------------
# sections


@dataclass(frozen=True, eq=False)
class Section:
    grid: CylinderGrid
    tag: Tag
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        shape = (self.grid.n_time, self.grid.n_x, rank(self.tag))
        if v.shape != shape:
            raise GridError(f"values shape {v.shape} does not match {shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[-1]

    def _check(self, other: "Section"):
        if not isinstance(other, Section):
            raise TypeError("expected a Section")
        if other.grid != self.grid:
            raise GridError("sections live on different grids")
        if other.tag != self.tag:
            raise GridError(f"bundle mismatch: {self.tag!r} vs {other.tag!r}")

    def with_values(self, values) -> "Section":
        return Section(self.grid, self.tag, values)

    def __add__(self, other):
        self._check(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * complex(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def conj(self) -> "Section":
        """Bundle conjugation C (complex conjugation, or the spinor swap)."""
        S = _conj_matrix(self.tag)
        return self.with_values(np.conj(self.values) @ S.T)

    def time_support(self, rel: float = 1e-14) -> Tuple[float, float]:
        """Smallest time interval outside which |f| <= rel * max|f|."""
        prof = np.abs(self.values).max(axis=(1, 2))
        peak = prof.max()
        if peak == 0:
            return (np.inf, -np.inf)
        idx = np.nonzero(prof > rel * peak)[0]
        t = self.grid.t
        return (float(t[idx[0]]), float(t[idx[-1]]))

    def is_test_section(self, cells: int = 4, rel: float = 1e-14) -> bool:
        lo, hi = self.time_support(rel)
        a, b = self.grid.margin(cells)
        return lo >= a - 1e-12 and hi <= b + 1e-12


def zeros(grid: CylinderGrid, tag: Tag) -> Section:
    return Section(grid, tag, np.zeros((grid.n_time, grid.n_x, rank(tag)), dtype=complex))


def direct_sum(a: Section, b: Section) -> Section:
    if a.grid != b.grid:
        raise GridError("sections live on different grids")
    return Section(a.grid, sum_tag(a.tag, b.tag), np.concatenate([a.values, b.values], axis=-1))


def split(f: Section) -> Tuple[Section, Section]:
    if not (isinstance(f.tag, tuple) and f.tag[0] == "sum"):
        raise GridError("not a direct-sum section")
    n1 = rank(f.tag[1])
    return (Section(f.grid, f.tag[1], f.values[..., :n1]),
            Section(f.grid, f.tag[2], f.values[..., n1:]))


def pad_left(f: Section, other: Tag) -> Section:
    """f (+) 0."""
    return direct_sum(f, zeros(f.grid, other))


def pad_right(other: Tag, f: Section) -> Section:
    """0 (+) f."""
    return direct_sum(zeros(f.grid, other), f)


# ---------------------------------------------------------------------------
# bumps


def bump_profile(s) -> np.ndarray:
    """exp(1 - 1/(1 - s^2)) on |s| < 1 and exactly zero elsewhere (peak value 1)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def bump_section(grid: CylinderGrid, tag: Tag, center, widths, channel: int = 0,
                 amplitude: complex = 1.0) -> Section:
    """Compactly supported bump in one channel.

    The support box is ``[t0 - 4 sigma_t, t0 + 4 sigma_t] x [x0 - 4 sigma_x, x0 + 4 sigma_x]``
    (the spatial box taken on the circle).
    """
    t0, x0 = map(float, center)
    st, sx = map(float, widths)
    if st <= 0 or sx <= 0:
        raise SupportError("bump widths must be positive")
    if t0 - 4 * st <= -grid.T or t0 + 4 * st >= grid.T:
        raise SupportError(f"bump support [{t0 - 4 * st:.3f}, {t0 + 4 * st:.3f}] leaves the time window")
    if 4 * sx >= grid.L / 2:
        raise SupportError("spatial support wraps around the circle")
    r = rank(tag)
    if not 0 <= channel < r:
        raise GridError(f"channel {channel} out of range for {tag!r}")
    dxs = (grid.x - x0 + grid.L / 2) % grid.L - grid.L / 2
    prof = np.outer(bump_profile((grid.t - t0) / (4 * st)), bump_profile(dxs / (4 * sx)))
    v = np.zeros((grid.n_time, grid.n_x, r), dtype=complex)
    v[..., channel] = amplitude * prof
    return Section(grid, tag, v)


def random_bump(grid: CylinderGrid, tag: Tag, rng: np.random.Generator, channel: int = None,
                window: Tuple[float, float] = None, amplitude: complex = 1.0) -> Section:
    """Seeded bump with parameters drawn inside precondition-safe ranges.

    The time support fills 80-90% of ``window`` (default: the grid window less
    a 12-cell margin, so that no boundary stencil touches the bump) and the
    spatial widths scale with L so that the default grid resolves every
    derivative the operators take.
    """
    a, b = window if window is not None else grid.margin(12)
    half = 0.5 * (b - a)
    if half <= 0:
        raise SupportError("empty window")
    st = rng.uniform(0.8, 0.9) * half / 4
    t0 = rng.uniform(a + 4 * st, b - 4 * st)
    sx = rng.uniform(0.5, 0.75) * grid.L / (2 * np.pi)
    x0 = rng.uniform(0.0, grid.L)
    if channel is None:
        channel = int(rng.integers(rank(tag)))
    return bump_section(grid, tag, (t0, x0), (st, sx), channel=channel, amplitude=amplitude)


# ---------------------------------------------------------------------------
# mode transforms


@dataclass(frozen=True, eq=False)
class ModeCoefficients:
    grid: CylinderGrid
    tag: Tag
    coeffs: np.ndarray = field(repr=False)  # (n_time, 2N+1, channels), modes -N..N

    def mode(self, n: int) -> np.ndarray:
        return self.coeffs[:, n + self.grid.N, :]


def modes_from_values(values: np.ndarray, nx: int) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft(values, axis=1), axes=1) / nx


def values_from_modes(coeffs: np.ndarray, nx: int) -> np.ndarray:
    return np.fft.ifft(np.fft.ifftshift(coeffs, axes=1), axis=1) * nx


def mode_decompose(f: Section) -> ModeCoefficients:
    return ModeCoefficients(f.grid, f.tag, modes_from_values(f.values, f.grid.n_x))


def mode_synthesize(c: ModeCoefficients, grid: CylinderGrid = None) -> Section:
    if grid is not None and grid != c.grid:
        raise GridError("mode coefficients belong to another grid")
    return Section(c.grid, c.tag, values_from_modes(c.coeffs, c.grid.n_x))


# ---------------------------------------------------------------------------
# pairings


def pairing(f: Section, h: Section) -> complex:
    """Bilinear pairing <f, h>: trapezoid in t, exact DFT sum in x."""
    f._check(h)
    g = bundle_metric(f.tag)
    w = f.grid.time_weights
    dens = np.einsum("tjc,cd,tjd->t", f.values, g, h.values)
    return complex(np.dot(w, dens) * f.grid.dx)


def hermitian_pairing(f: Section, h: Section) -> complex:
    """(f, h) = <C f, h>, antilinear in the first slot."""
    return pairing(f.conj(), h)


def mode_pairing(f: Section, h: Section) -> complex:
    """The same pairing evaluated as a mode-space contraction (Parseval)."""
    f._check(h)
    g = bundle_metric(f.tag)
    fm = mode_decompose(f).coeffs[:, ::-1, :]  # f_{-n}
    hm = mode_decompose(h).coeffs
    dens = np.einsum("tnc,cd,tnd->t", fm, g, hm)
    return complex(np.dot(f.grid.time_weights, dens) * f.grid.L)


# ---------------------------------------------------------------------------
# finite differences in time


def fd_weights(offsets, deriv: int) -> np.ndarray:
    """Finite-difference weights on integer ``offsets`` for d^deriv/ds^deriv at 0."""
    # Fornberg's recursion; the Vandermonde solve loses digits beyond ~10 points
    x = np.asarray(offsets, dtype=float)
    n = len(x)
    if not deriv < n:
        raise ValueError("need more points than the derivative order")
    c = np.zeros((n, deriv + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    for i in range(1, n):
        c2 = 1.0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            for k in range(min(i, deriv), -1, -1):
                lower = k * c[i - 1, k - 1] if k else 0.0
                c[i, k] = c1 * (lower - x[i - 1] * c[i - 1, k]) / c2 if j == i - 1 else c[i, k]
                c[j, k] = (x[i] * c[j, k] - (k * c[j, k - 1] if k else 0.0)) / c3
        c1 = c2
    w = c[:, deriv]
    if deriv:
        w[np.argmin(np.abs(x))] -= w.sum()  # constants are annihilated exactly
    return w


FD_HALF_WIDTH = 4  # interior stencil half-width; order of accuracy is twice this


def boundary_width(half: int, deriv: int) -> int:
    """Number of points in the one-sided stencils used for the first/last rows."""
    return 2 * half + deriv


@lru_cache(maxsize=32)
def _diff_matrix(n: int, h: float, deriv: int, half: int = FD_HALF_WIDTH) -> np.ndarray:
    # interior: centred (order 2*half); the rows near each end use one-sided
    # stencils of higher order so boundary rows do not dominate.
    width = boundary_width(half, deriv)
    D = np.zeros((n, n))
    for j in range(n):
        if half <= j < n - half:
            offs = np.arange(-half, half + 1)
        elif j < half:
            offs = np.arange(width) - j
        else:
            offs = np.arange(-width + 1, 1) + (n - 1 - j)
        D[j, j + offs] = fd_weights(offs, deriv) / h ** deriv
    D.setflags(write=False)
    return D


def diff_matrix(grid: CylinderGrid, deriv: int) -> np.ndarray:
    if deriv not in (1, 2):
        raise ValueError("only first and second time derivatives are provided")
    return _diff_matrix(grid.n_time, grid.dt, deriv, FD_HALF_WIDTH)


def dt_array(a: np.ndarray, grid: CylinderGrid, deriv: int = 1) -> np.ndarray:
    """Apply the time-derivative stencil along axis 0."""
    D = diff_matrix(grid, deriv)
    return np.tensordot(D, a, axes=(1, 0))


def dx_array(a: np.ndarray, grid: CylinderGrid, deriv: int = 1) -> np.ndarray:
    """Spectral x-derivative along axis 1."""
    c = modes_from_values(a, grid.n_x)
    c = c * ((1j * grid.k) ** deriv)[None, :, None]
    return values_from_modes(c, grid.n_x)


# ---------------------------------------------------------------------------
# frequency-fitted boundary closures


def fitted_weights(offsets: np.ndarray, deriv: int, theta: np.ndarray) -> np.ndarray:
    """One-sided weights exact on polynomials of degree W-3 and on cos/sin(theta s).

    ``theta`` is an array of dimensionless frequencies omega*dt; returns
    weights of shape theta.shape + (W,).  Small theta falls back to the plain
    polynomial stencil, which is then already exact to rounding.
    """
    s = np.asarray(offsets, dtype=float)
    W = len(s)
    theta = np.asarray(theta, dtype=float)
    flat = theta.ravel()
    A = np.empty((flat.size, W, W))
    b = np.zeros((flat.size, W))
    sc = np.abs(s).max()  # scaled monomials keep the solve well conditioned
    for p in range(W - 2):
        A[:, p, :] = (s / sc) ** p
    b[:, deriv] = factorial(deriv) / sc ** deriv
    A[:, W - 2, :] = np.cos(flat[:, None] * s)
    A[:, W - 1, :] = np.sin(flat[:, None] * s)
    b[:, W - 2] = (1.0, 0.0, -1.0)[deriv] * flat ** (2 if deriv == 2 else 0)
    b[:, W - 1] = flat if deriv == 1 else 0.0
    small = flat < 0.05
    w = np.empty((flat.size, W))
    w[small] = fd_weights(s, deriv)
    if np.any(~small):
        w[~small] = np.linalg.solve(A[~small], b[~small][..., None])[..., 0]
    w[:, np.argmin(np.abs(s))] -= w.sum(axis=1)  # constants are annihilated exactly
    return w.reshape(theta.shape + (W,))


def _boundary_rows(nt: int, half: int, deriv: int, theta: np.ndarray):
    """(row indices, column offsets, weights) replacing the polynomial boundary rows."""
    W = boundary_width(half, deriv)
    out = []
    for j in range(half):
        offs = np.arange(W) - j
        out.append((j, j + offs, fitted_weights(offs, deriv, theta)))
        offs_r = -offs
        out.append((nt - 1 - j, nt - 1 - j + offs_r, fitted_weights(offs_r, deriv, theta)))
    return out


@lru_cache(maxsize=64)
def _cached_rows(nt: int, deriv: int, shape, key: bytes):
    theta = np.frombuffer(key, dtype=float).reshape(shape)
    return _boundary_rows(nt, FD_HALF_WIDTH, deriv, theta)


def dt_modes(a: np.ndarray, grid: CylinderGrid, deriv: int, omega=None) -> np.ndarray:
    """Time derivative of mode data (n_time, n_modes, c); boundary rows fitted to omega."""
    out = dt_array(a, grid, deriv)
    if omega is None:
        return out
    theta = np.ascontiguousarray(np.broadcast_to(omega, a.shape[1:]) * grid.dt, dtype=float)
    for row, cols, w in _cached_rows(grid.n_time, deriv, theta.shape, theta.tobytes()):
        out[row] = np.einsum("ncw,wnc->nc", w, a[cols]) / grid.dt ** deriv
    return out


def dt_fitted(a: np.ndarray, grid: CylinderGrid, deriv: int, omega: np.ndarray) -> np.ndarray:
    """Time derivative of position-space data with boundary rows fitted per mode."""
    c = modes_from_values(a, grid.n_x)
    om = np.asarray(omega, dtype=float)
    if om.ndim == 1:
        om = om[:, None]
    return values_from_modes(dt_modes(c, grid, deriv, om), grid.n_x)


# ---------------------------------------------------------------------------
# exterior calculus


def _dt(omega):
    if omega is None:
        return dt_array
    return lambda a, g: dt_fitted(a, g, 1, omega)


def exterior_d(f: Section, omega=None) -> Section:
    """d on 0-forms (-> 1-forms) and 1-forms (-> 2-forms).

    ``omega`` (per-mode frequencies) switches the boundary rows of the time
    stencil to the frequency-fitted closure, for sections that are free
    solutions near t = +-T.
    """
    g, v = f.grid, f.values
    dt_array = _dt(omega)
    if f.tag == "scalar":
        out = np.concatenate([dt_array(v, g), dx_array(v, g)], axis=-1)
        return Section(g, "oneform", out)
    if f.tag == "oneform":
        at, ax = v[..., :1], v[..., 1:]
        return Section(g, "twoform", dt_array(ax, g) - dx_array(at, g))
    raise GridError(f"d is not defined on {f.tag!r} here")


def codifferential(f: Section, omega=None) -> Section:
    """delta = -d^T with respect to the bilinear pairing."""
    g, v = f.grid, f.values
    dt_array = _dt(omega)
    if f.tag == "oneform":
        at, ax = v[..., :1], v[..., 1:]
        return Section(g, "scalar", -dt_array(at, g) + dx_array(ax, g))
    if f.tag == "twoform":
        out = np.concatenate([-dx_array(v, g), -dt_array(v, g)], axis=-1)
        return Section(g, "oneform", out)
    raise GridError(f"delta is not defined on {f.tag!r} here")


def as_form(f: Section, tag: str) -> Section:
    """Reinterpret rank-compatible channel data under another tag."""
    return Section(f.grid, tag, f.values)

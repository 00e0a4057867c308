"""Green-hyperbolic operators on the cylinder and their Green operators.

Every operator is stored per spatial mode as a polynomial in d/dt with
channel-matrix coefficients,

    P_n = P0_n + P1_n d/dt + P2_n d^2/dt^2 (+ lambda chi(t) C),

and applied with the finite-difference stencils of ``geometry``.  Green
operators are computed per mode from the Duhamel formula:

* ``closed`` backend: E^+ = Q E_K^+ where K is diagonal with per-channel
  frequencies omega and Q a differential operator with P Q = Q P = K.  The
  retarded kernel sin(omega (t - s)) / omega is integrated against the source
  by a Filon-type rule (source interpolated by a one-sided 8-point Lagrange
  stencil, oscillatory factor integrated exactly by Gauss-Legendre), so the
  discrete solution at t_j only sees source samples at times <= t_j.
* ``ode`` backend: fundamental matrix of u'' + A(t) u = g from a fixed-step
  4-stage Gauss-Legendre collocation scheme (order 8), then the same
  Duhamel quadrature.  Used for time-dependent couplings and as an
  independent oracle for the closed form.

Advanced operators are obtained by time reversal.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import geometry as geo
from .geometry import GAMMA0, GAMMA1, CylinderGrid, Section, SupportError

SUPPORT_CELLS = 4


# ---------------------------------------------------------------------------
# quadrature helpers

_STENCIL = np.arange(-6, 2)  # one-sided interpolation stencil for [t_j, t_{j+1}]
_NQ = 10


def _lagrange_matrix(nodes, x):
    M = np.ones((len(x), len(nodes)))
    for k, xk in enumerate(nodes):
        for l, xl in enumerate(nodes):
            if l != k:
                M[:, k] *= (x - xl) / (xk - xl)
    return M


@lru_cache(maxsize=1)
def _filon_nodes():
    gx, gw = np.polynomial.legendre.leggauss(_NQ)
    c = 0.5 * (gx + 1.0)
    w = 0.5 * gw
    return c, w, _lagrange_matrix(_STENCIL.astype(float), c)


def _stencil_views(g: np.ndarray):
    """Yield (k, g[j + offs_k]) for j = 0..nt-2, zero padded."""
    nt = g.shape[0]
    lo, hi = -int(_STENCIL[0]), int(_STENCIL[-1])
    pad = np.zeros((lo,) + g.shape[1:], dtype=g.dtype)
    tail = np.zeros((hi,) + g.shape[1:], dtype=g.dtype)
    gp = np.concatenate([pad, g, tail], axis=0)
    for k, o in enumerate(_STENCIL):
        yield k, gp[lo + o: lo + o + nt - 1]


def duhamel_closed(g: np.ndarray, omega: np.ndarray, grid: CylinderGrid):
    """Retarded solution of u'' + omega^2 u = g per mode and channel.

    ``g`` has shape (n_time, n_modes, channels) and ``omega`` (n_modes, channels).
    Returns (u, du/dt) on the grid.
    """
    c, w, I = _filon_nodes()
    h = grid.dt
    t = grid.t
    out = []
    for sgn in (-1.0, 1.0):
        phase = np.exp(sgn * 1j * h * c[:, None, None] * omega[None])  # (q, n, c)
        a = h * np.einsum("q,qnc,qk->knc", w, phase, I)
        seg = np.zeros((g.shape[0] - 1,) + g.shape[1:], dtype=complex)
        for k, view in _stencil_views(g):
            seg += a[k][None] * view
        seg *= np.exp(sgn * 1j * t[:-1, None, None] * omega[None])
        C = np.zeros(g.shape, dtype=complex)
        np.cumsum(seg, axis=0, out=C[1:])
        out.append(C)
    Cm, Cp = out
    ep = np.exp(1j * t[:, None, None] * omega[None])
    em = 1.0 / ep
    u = (ep * Cm - em * Cp) / (2j * omega[None])
    du = 0.5 * (ep * Cm + em * Cp)
    return u, du


# ---------------------------------------------------------------------------
# Gauss-Legendre collocation for u'' + A(t) u = g


@lru_cache(maxsize=1)
def _gl_tableau(s: int = 4):
    x, _ = np.polynomial.legendre.leggauss(s)
    c = 0.5 * (x + 1.0)
    P = np.polynomial.polynomial
    A = np.zeros((s, s))
    b = np.zeros(s)
    for j in range(s):
        roots = np.delete(c, j)
        coef = P.polyfromroots(roots) / np.prod(c[j] - roots)
        integ = P.polyint(coef)
        b[j] = P.polyval(1.0, integ)
        A[:, j] = P.polyval(c, integ)
    return c, A, b


@dataclass(frozen=True)
class Potential:
    """Time-dependent zeroth-order term lam * profile(t) * C (real, symmetric C)."""

    lam: float
    profile: Callable[[np.ndarray], np.ndarray]
    C: np.ndarray
    support: Tuple[float, float]

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.lam * self.profile(t)[..., None, None] * self.C

    def reversed(self) -> "Potential":
        prof = self.profile
        return Potential(self.lam, lambda t: prof(-np.asarray(t)), self.C,
                         (-self.support[1], -self.support[0]))


def _step_propagators(A0: np.ndarray, pot: Optional[Potential], t0: np.ndarray, h: float,
                      nsub: int) -> np.ndarray:
    """Propagators of y' = M(t) y over [t0, t0 + h] with ``nsub`` GL substeps.

    A0: (n, c, c); t0: (B,).  Returns (B, n, 2c, 2c).
    """
    cg, Ag, bg = _gl_tableau()
    s = len(cg)
    n, c, _ = A0.shape
    d = 2 * c
    B = len(t0)
    hs = h / nsub
    eye_d = np.eye(d)
    prop = np.broadcast_to(eye_d, (B, n, d, d)).copy()
    for sub in range(nsub):
        ts = t0[:, None] + (sub + cg[None, :]) * hs  # (B, s)
        A = np.broadcast_to(A0, (B, s, n, c, c)).copy()
        if pot is not None:
            A += pot(ts)[:, :, None]
        M = np.zeros((B, s, n, d, d))
        M[..., :c, c:] = np.eye(c)
        M[..., c:, :c] = -A
        S = np.zeros((B, n, s * d, s * d))
        rhs = np.zeros((B, n, s * d, d))
        for i in range(s):
            rhs[:, :, i * d:(i + 1) * d] = M[:, i]
            for j in range(s):
                blk = -hs * Ag[i, j] * M[:, i]
                if i == j:
                    blk = blk + eye_d
                S[:, :, i * d:(i + 1) * d, j * d:(j + 1) * d] = blk
        X = np.linalg.solve(S, rhs)
        step = eye_d + hs * sum(bg[j] * X[:, :, j * d:(j + 1) * d] for j in range(s))
        prop = step @ prop
    return prop


class ModeODE:
    """Retarded Duhamel solver for u'' + (A0 + V(t)) u = g, all modes at once."""

    def __init__(self, grid: CylinderGrid, A0: np.ndarray, pot: Optional[Potential] = None,
                 max_phase: float = 0.5):
        A0 = np.asarray(A0, dtype=float)
        self.grid, self.A0, self.pot = grid, A0, pot
        n, c, _ = A0.shape
        self.c = c
        d = 2 * c
        h = grid.dt
        t = grid.t
        wmax = np.sqrt(max(np.abs(np.linalg.eigvalsh(A0)).max(), 1e-300))
        if pot is not None:
            wmax = np.sqrt(wmax ** 2 + abs(pot.lam) * np.abs(pot.C).sum())
        nsub = max(1, int(np.ceil(wmax * h / max_phase)))
        cq, wq, I = _filon_nodes()

        nint = grid.n_time - 1
        if pot is None:
            active = np.zeros(nint, dtype=bool)
        else:
            a, b = pot.support
            active = (t[1:] > a - h) & (t[:-1] < b + h)

        # free propagators (shared by every inactive interval)
        free_full = _step_propagators(A0, None, np.zeros(1), h, nsub)[0]
        free_sub = np.stack([_step_propagators(A0, None, np.zeros(1), cq[q] * h, nsub)[0]
                             for q in range(_NQ)])  # (q, n, d, d)
        Bcols = np.zeros((d, c))
        Bcols[c:] = np.eye(c)

        def weights(sub):  # sub: (..., q, n, d, d) -> (..., k, n, d, c)
            inv = np.linalg.inv(sub)[..., :, c:]  # S^{-1} B
            return h * np.einsum("q,qk,...qnde->...knde", wq, I, inv)

        self.Y_free = weights(free_sub)  # (k, n, d, c)
        self.active = np.nonzero(active)[0]
        props = np.broadcast_to(free_full, (nint, n, d, d)).copy()
        self.Y_active = None
        if len(self.active):
            t0 = t[self.active]
            props[self.active] = _step_propagators(A0, pot, t0, h, nsub)
            subs = np.stack([_step_propagators(A0, pot, t0, cq[q] * h, nsub) for q in range(_NQ)],
                            axis=1)  # (B, q, n, d, d)
            self.Y_active = weights(subs)  # (B, k, n, d, c)
        Phi = np.empty((grid.n_time, n, d, d))
        Phi[0] = np.eye(d)
        for j in range(nint):
            Phi[j + 1] = props[j] @ Phi[j]
        self.Phi = Phi
        # symplectic inverse: Phi^{-1} = -J Phi^T J
        J = np.zeros((d, d))
        J[:c, c:] = np.eye(c)
        J[c:, :c] = -np.eye(c)
        self.Phi_inv = -J @ np.swapaxes(Phi, -1, -2) @ J
        self.nsub = nsub

    def solve(self, g: np.ndarray):
        """Retarded (u, du/dt) for a source g of shape (n_time, n_modes, c)."""
        nt = g.shape[0]
        v = np.zeros((nt - 1, g.shape[1], 2 * self.c), dtype=complex)
        for k, view in _stencil_views(g):
            v += np.einsum("nde,jne->jnd", self.Y_free[k], view)
        if self.Y_active is not None:
            act = self.active
            vk = np.zeros((len(act), g.shape[1], 2 * self.c), dtype=complex)
            for k, view in _stencil_views(g):
                vk += np.einsum("jnde,jne->jnd", self.Y_active[:, k], view[act])
            v[act] = vk
        w = np.einsum("jnde,jne->jnd", self.Phi_inv[:-1], v)
        C = np.zeros((nt, g.shape[1], 2 * self.c), dtype=complex)
        np.cumsum(w, axis=0, out=C[1:])
        y = np.einsum("jnde,jne->jnd", self.Phi, C)
        return y[..., : self.c], y[..., self.c:]


# ---------------------------------------------------------------------------
# systems


@dataclass(frozen=True)
class FermionicStructure:
    """Grading operator R and the bundle conjugation used by the fermionic algebra."""

    R: np.ndarray

    def apply_R(self, f: Section) -> Section:
        return f.with_values(f.values @ self.R.T)

    def conj(self, f: Section) -> Section:
        return f.conj()


class GreenSystem:
    """A Green-hyperbolic operator realised mode by mode."""

    def __init__(self, grid: CylinderGrid, tag, kind: str, mass, P: Sequence[np.ndarray],
                 Q: Sequence[np.ndarray] = None, omega: np.ndarray = None,
                 potential: Optional[Potential] = None, backend: str = "closed",
                 fermionic: Optional[FermionicStructure] = None, parts: tuple = ()):
        self.grid, self.tag, self.kind, self.mass = grid, tag, kind, mass
        self.P0, self.P1, self.P2 = (np.asarray(a, dtype=complex) for a in P)
        c = geo.rank(tag)
        if self.P0.shape != (grid.n_x, c, c):
            raise ValueError("operator coefficients do not match the bundle")
        if Q is None:
            Q = (np.broadcast_to(np.eye(c), (grid.n_x, c, c)), np.zeros((grid.n_x, c, c)),
                 np.zeros((grid.n_x, c, c)))
        self.Q0, self.Q1, self.Q2 = (np.asarray(a, dtype=complex) for a in Q)
        self.omega = omega
        self.potential = potential
        self.backend = backend
        self.fermionic = fermionic
        self.parts = parts
        self._ode = {}
        if backend == "closed" and (omega is None or potential is not None):
            raise ValueError("closed backend needs constant per-channel frequencies")
        if np.any(np.asarray(mass) <= 0):
            raise ValueError("mass must be positive")

    @property
    def channels(self) -> int:
        return geo.rank(self.tag)

    # -- operator -----------------------------------------------------------

    def apply_modes(self, f: np.ndarray) -> np.ndarray:
        g = self.grid
        out = np.einsum("nij,tnj->tni", self.P0, f)
        if np.any(self.P1):
            out += np.einsum("nij,tnj->tni", self.P1, geo.dt_modes(f, g, 1, self.omega))
        if np.any(self.P2):
            out += np.einsum("nij,tnj->tni", self.P2, geo.dt_modes(f, g, 2, self.omega))
        if self.potential is not None:
            out += np.einsum("tij,tnj->tni", self.potential(g.t), f)
        return out

    def apply(self, f: Section) -> Section:
        self._check_section(f)
        c = geo.mode_decompose(f)
        return geo.mode_synthesize(geo.ModeCoefficients(f.grid, f.tag, self.apply_modes(c.coeffs)))

    def apply_Q(self, f: Section) -> Section:
        """The differential operator Q with E^+- = Q E_K^+- (D = 1 - m^-2 d delta for Proca)."""
        self._check_section(f)
        g = self.grid
        c = geo.mode_decompose(f).coeffs
        out = np.einsum("nij,tnj->tni", self.Q0, c)
        if np.any(self.Q1):
            out += np.einsum("nij,tnj->tni", self.Q1, geo.dt_modes(c, g, 1, self.omega))
        if np.any(self.Q2):
            out += np.einsum("nij,tnj->tni", self.Q2, geo.dt_modes(c, g, 2, self.omega))
        return geo.mode_synthesize(geo.ModeCoefficients(g, f.tag, out))

    # -- Green operators ----------------------------------------------------

    def _check_section(self, f: Section):
        if not isinstance(f, Section):
            raise TypeError("expected a Section")
        if f.grid != self.grid:
            raise geo.GridError("section lives on another grid")
        if f.tag != self.tag:
            raise geo.GridError(f"bundle mismatch: system {self.tag!r}, section {f.tag!r}")

    def check_source(self, f: Section):
        self._check_section(f)
        if not f.is_test_section(SUPPORT_CELLS):
            lo, hi = f.time_support()
            a, b = self.grid.margin(SUPPORT_CELLS)
            raise SupportError(
                f"source support [{lo:.4f}, {hi:.4f}] is not inside [{a:.4f}, {b:.4f}]")

    def _ode_engine(self, reverse: bool) -> ModeODE:
        if reverse not in self._ode:
            A0 = np.real(self.P0)
            if np.any(self.P1) or not np.allclose(self.P2, np.eye(self.channels)):
                raise ValueError("ode backend needs P = d^2/dt^2 + A(t)")
            pot = self.potential.reversed() if (reverse and self.potential is not None) else self.potential
            self._ode[reverse] = ModeODE(self.grid, A0, pot)
        return self._ode[reverse]

    def _retarded_modes(self, g: np.ndarray, reverse: bool = False):
        if self.backend == "closed":
            u, du = duhamel_closed(g, self.omega, self.grid)
            d2u = g - self.omega[None] ** 2 * u
        else:
            u, du = self._ode_engine(reverse).solve(g)
            A = np.broadcast_to(np.real(self.P0), (g.shape[0],) + self.P0.shape).copy()
            if self.potential is not None:
                t = -self.grid.t if reverse else self.grid.t
                A = A + self.potential(t)[:, None]
            d2u = g - np.einsum("tnij,tnj->tni", A, u)
        return u, du, d2u

    def _green_modes(self, g: np.ndarray, advanced: bool) -> np.ndarray:
        if advanced:
            u, du, d2u = self._retarded_modes(g[::-1], reverse=True)
            u, du, d2u = u[::-1], -du[::-1], d2u[::-1]
        else:
            u, du, d2u = self._retarded_modes(g)
        out = np.einsum("nij,tnj->tni", self.Q0, u)
        if np.any(self.Q1):
            out += np.einsum("nij,tnj->tni", self.Q1, du)
        if np.any(self.Q2):
            out += np.einsum("nij,tnj->tni", self.Q2, d2u)
        return out

    def green(self, f: Section, advanced: bool) -> Section:
        self.check_source(f)
        c = geo.mode_decompose(f)
        out = self._green_modes(c.coeffs, advanced)
        return geo.mode_synthesize(geo.ModeCoefficients(f.grid, f.tag, out))

    def retarded(self, f: Section) -> Section:
        return self.green(f, advanced=False)

    def advanced(self, f: Section) -> Section:
        return self.green(f, advanced=True)

    def _pauli_jordan_closed(self, g: np.ndarray) -> np.ndarray:
        # E_K g = -int sin(w(t-s))/w g(s) ds is a free solution; the trapezoid
        # rule is spectrally accurate for compactly supported smooth g
        t = self.grid.t[:, None, None]
        w = self.omega[None]
        ws = self.grid.dt * np.ones(self.grid.n_time)
        ws[[0, -1]] *= 0.5
        C = np.einsum("t,tnc->nc", ws, np.cos(t * w) * g)[None]
        S = np.einsum("t,tnc->nc", ws, np.sin(t * w) * g)[None]
        v = -(np.sin(t * w) * C - np.cos(t * w) * S) / w
        dv = -(np.cos(t * w) * C + np.sin(t * w) * S)
        out = np.einsum("nij,tnj->tni", self.Q0, v)
        if np.any(self.Q1):
            out += np.einsum("nij,tnj->tni", self.Q1, dv)
        if np.any(self.Q2):
            out += np.einsum("nij,tnj->tni", self.Q2, -w ** 2 * v)
        return out

    def pauli_jordan(self, f: Section) -> Section:
        self.check_source(f)
        c = geo.mode_decompose(f).coeffs
        if self.backend == "closed":
            out = self._pauli_jordan_closed(c)
        else:
            out = self._green_modes(c, True) - self._green_modes(c, False)
        return geo.mode_synthesize(geo.ModeCoefficients(f.grid, f.tag, out))

    def E(self, f: Section, h: Section) -> complex:
        return geo.pairing(f, self.pauli_jordan(h))

    def with_backend(self, backend: str) -> "GreenSystem":
        return GreenSystem(self.grid, self.tag, self.kind, self.mass, (self.P0, self.P1, self.P2),
                           (self.Q0, self.Q1, self.Q2), self.omega, self.potential, backend,
                           self.fermionic, self.parts)

    def __repr__(self):
        return f"GreenSystem(kind={self.kind!r}, tag={self.tag!r}, mass={self.mass!r}, backend={self.backend!r})"


# ---------------------------------------------------------------------------
# module-level API


def apply_operator(sys: GreenSystem, f: Section) -> Section:
    return sys.apply(f)


def green_retarded(sys: GreenSystem, f: Section) -> Section:
    """E^+ f, supported in the causal future of supp f."""
    return sys.retarded(f)


def green_advanced(sys: GreenSystem, f: Section) -> Section:
    """E^- f, supported in the causal past of supp f."""
    return sys.advanced(f)


def pauli_jordan(sys: GreenSystem, f: Section) -> Section:
    """E f = E^- f - E^+ f."""
    return sys.pauli_jordan(f)


def pauli_jordan_form(sys: GreenSystem, f: Section, h: Section) -> complex:
    """E(f, h) = <f, E h>."""
    return sys.E(f, h)


def _stack(n, mats):
    return np.broadcast_to(np.asarray(mats, dtype=complex), (n,) + np.shape(mats)).copy()


def build_scalar_kg(grid: CylinderGrid, m: float, backend: str = "closed") -> GreenSystem:
    """d^2/dt^2 - d^2/dx^2 + m^2, i.e. -delta d + m^2 on functions."""
    if m <= 0:
        raise ValueError("mass must be positive")
    n = grid.n_x
    w = grid.omega(m)
    P0 = (w ** 2)[:, None, None].astype(complex)
    P = (P0, np.zeros((n, 1, 1)), _stack(n, [[1.0]]))
    return GreenSystem(grid, "scalar", "scalar", float(m), P, omega=w[:, None], backend=backend)


def build_oneform_kg(grid: CylinderGrid, m: float) -> GreenSystem:
    """K = -(delta d + d delta) + m^2, diagonal on (dt, dx) components."""
    if m <= 0:
        raise ValueError("mass must be positive")
    n = grid.n_x
    w = grid.omega(m)
    P0 = np.einsum("n,ij->nij", w ** 2, np.eye(2)).astype(complex)
    P = (P0, np.zeros((n, 2, 2)), _stack(n, np.eye(2)))
    return GreenSystem(grid, "oneform", "oneform", float(m), P, omega=np.stack([w, w], axis=1))


def build_proca(grid: CylinderGrid, m: float) -> GreenSystem:
    """P = -delta d + m^2 on 1-forms, with E^+- = E_K^+- D and D = 1 - m^-2 d delta."""
    if m <= 0:
        raise ValueError("mass must be positive")
    n = grid.n_x
    k = grid.k
    w = grid.omega(m)
    P0 = np.zeros((n, 2, 2), dtype=complex)
    P0[:, 0, 0] = k ** 2 + m * m
    P0[:, 1, 1] = m * m
    P1 = np.zeros((n, 2, 2), dtype=complex)
    P1[:, 0, 1] = 1j * k
    P1[:, 1, 0] = -1j * k
    P2 = _stack(n, np.diag([0.0, 1.0]))
    # D = 1 - m^-2 d delta, with d delta a = (-a_t'' + i k a_x', -i k a_t' - k^2 a_x)
    Q0 = np.zeros((n, 2, 2), dtype=complex)
    Q0[:, 0, 0] = 1.0
    Q0[:, 1, 1] = 1.0 + k ** 2 / m ** 2
    Q1 = -P1 / m ** 2
    Q2 = _stack(n, np.diag([1.0 / m ** 2, 0.0]))
    return GreenSystem(grid, "oneform", "proca", float(m), (P0, P1, P2), (Q0, Q1, Q2),
                       omega=np.stack([w, w], axis=1))


def build_dirac_doubled(grid: CylinderGrid, m: float) -> GreenSystem:
    """P = (-i gamma.d + m) (+) (i gamma^T.d + m) on spinors (+) cospinors.

    Green operators E^+- = Q E_K^+- with Q = (i gamma.d + m) (+) (-i gamma^T.d + m)
    and K the componentwise Klein-Gordon operator; R = 1 (+) -1.
    """
    if m <= 0:
        raise ValueError("mass must be positive")
    n = grid.n_x
    k = grid.k
    w = grid.omega(m)
    g0, g1 = GAMMA0, GAMMA1
    g0T, g1T = g0.T, g1.T
    I2 = np.eye(2)

    def blocks(a, b):
        out = np.zeros((n, 4, 4), dtype=complex)
        out[:, :2, :2] = a
        out[:, 2:, 2:] = b
        return out

    kk = k[:, None, None]
    P0 = blocks(kk * g1 + m * I2, -kk * g1T + m * I2)
    P1 = blocks(np.broadcast_to(-1j * g0, (n, 2, 2)), np.broadcast_to(1j * g0T, (n, 2, 2)))
    Q0 = blocks(-kk * g1 + m * I2, kk * g1T + m * I2)
    Q1 = blocks(np.broadcast_to(1j * g0, (n, 2, 2)), np.broadcast_to(-1j * g0T, (n, 2, 2)))
    zero = np.zeros((n, 4, 4))
    R = np.diag([1.0, 1.0, -1.0, -1.0])
    return GreenSystem(grid, "dirac", "dirac", float(m), (P0, P1, zero), (Q0, Q1, zero),
                       omega=np.stack([w] * 4, axis=1), fermionic=FermionicStructure(R))


def _block(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, ca, _ = a.shape
    cb = b.shape[1]
    out = np.zeros((n, ca + cb, ca + cb), dtype=complex)
    out[:, :ca, :ca] = a
    out[:, ca:, ca:] = b
    return out


def direct_sum(A: GreenSystem, B: GreenSystem) -> GreenSystem:
    """Block-diagonal system P (+) Q; Green operators act blockwise."""
    if A.grid != B.grid:
        raise geo.GridError("systems live on different grids")
    if A.potential is not None or B.potential is not None:
        raise ValueError("direct sums of coupled systems are not supported")
    P = tuple(_block(a, b) for a, b in zip((A.P0, A.P1, A.P2), (B.P0, B.P1, B.P2)))
    Q = tuple(_block(a, b) for a, b in zip((A.Q0, A.Q1, A.Q2), (B.Q0, B.Q1, B.Q2)))
    backend = "closed" if A.backend == B.backend == "closed" else "ode"
    omega = None if A.omega is None or B.omega is None else np.concatenate([A.omega, B.omega], axis=1)
    ferm = None
    if A.fermionic is not None and B.fermionic is not None:
        R = np.zeros((A.channels + B.channels,) * 2)
        R[:A.channels, :A.channels] = A.fermionic.R
        R[A.channels:, A.channels:] = B.fermionic.R
        ferm = FermionicStructure(R)
    return GreenSystem(A.grid, geo.sum_tag(A.tag, B.tag), "sum", (A.mass, B.mass), P, Q, omega,
                       None, backend, ferm, parts=(A, B))


def with_potential(base: GreenSystem, pot: Potential, kind: str = "coupled") -> GreenSystem:
    """base + lam chi(t) C, solved with the ode backend (base must be second order, Q = 1)."""
    if np.any(base.Q1) or np.any(base.Q2):
        raise ValueError("coupling is only supported for normally hyperbolic blocks")
    return GreenSystem(base.grid, base.tag, kind, base.mass, (base.P0, base.P1, base.P2),
                       None, base.omega, pot, "ode", base.fermionic, base.parts)


# ---------------------------------------------------------------------------
# Dirac definite type


def cauchy_surface_identity(sys: GreenSystem, f: Section, h: Section, t_sigma: float):
    """Both sides of i (f, E_D h) = int_Sigma (sigma_D(n) E_D f, E_D h) dA.

    ``f`` and ``h`` are doubled sections carrying spinor data only; ``f`` must
    be supported before the surface t = t_sigma and ``h`` after it.  The surface
    time is snapped to the nearest grid time.
    """
    if sys.kind != "dirac":
        raise ValueError("the surface identity needs the doubled Dirac system")
    for s in (f, h):
        if np.abs(s.values[..., 2:]).max() > 0:
            raise ValueError("only spinor-channel sections are accepted")
    j = int(np.argmin(np.abs(sys.grid.t - t_sigma)))
    ts = sys.grid.t[j]
    lo_f, hi_f = f.time_support()
    lo_h, hi_h = h.time_support()
    if not (hi_f < ts < lo_h):
        raise SupportError("need supp f before the surface and supp h after it")
    Ef = sys.pauli_jordan(f)
    Eh = sys.pauli_jordan(h)
    lhs = 1j * geo.hermitian_pairing(f, Eh)
    # sigma_D(dt) = gamma^0 and (a, b) = a^dagger gamma^0 b, so the integrand is a^dagger b
    a = Ef.values[j, :, :2]
    b = Eh.values[j, :, :2]
    rhs = complex(np.sum(np.conj(a) * b) * sys.grid.dx)
    return lhs, rhs


def definite_form(sys: GreenSystem, f: Section, h: Section) -> complex:
    """i E(C f, R h), the inner product of a definite-type fermionic system."""
    if sys.fermionic is None:
        raise ValueError("system has no fermionic structure")
    return 1j * sys.E(f.conj(), sys.fermionic.apply_R(h))

"""Two-point kernels, quasifree states and Wick combinatorics.

Kernels act in mode space.  With the pairing <f, v> = L sum_n int f_{-n}^T g v_n dt,
a kernel is stored through its action h -> K h so that W(f, h) = <f, K h>.
Stationary kernels (vacua) have per-mode blocks

    B_n(t, t') = sum_terms A_n exp(-i nu_n (t - t')),

and all derived kernels (excited, product, partial trace, differences) are
built by composition.
"""
from __future__ import annotations

import itertools
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import algebra as al
from . import geometry as geo
from .geometry import Section
from .greenops import GreenSystem

BOSE, FERMI = al.BOSE, al.FERMI


class StateError(ValueError):
    pass


def modes(f) -> np.ndarray:
    if isinstance(f, Section):
        return geo.mode_decompose(f).coeffs
    return np.asarray(f)


def pair_modes(grid: geo.CylinderGrid, tag, fm: np.ndarray, vm: np.ndarray) -> complex:
    """<f, v> from mode data (n_time, n_modes, c)."""
    g = geo.bundle_metric(tag)
    w = grid.time_weights
    dens = np.einsum("tnc,cd,tnd->t", fm[:, ::-1], g, vm)
    return complex(np.dot(w, dens) * grid.L)


# ---------------------------------------------------------------------------
# kernels


class TwoPointKernel:
    """Base class: W(f, h) = <f, K h> with K given by ``apply`` on mode data."""

    provenance = "constructed"

    def __init__(self, grid: geo.CylinderGrid, tag, statistics: str):
        self.grid, self.tag, self.statistics = grid, tag, statistics

    # subclasses implement apply / applyT on mode arrays
    def apply(self, hm: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def applyT(self, hm: np.ndarray) -> np.ndarray:
        """Mode data v with <f, v> = W(h, f)."""
        raise NotImplementedError

    def _check(self, f: Section):
        if f.grid != self.grid or f.tag != self.tag:
            raise geo.GridError(f"kernel expects {self.tag!r} sections on its grid")

    def __call__(self, f: Section, h: Section) -> complex:
        self._check(f)
        self._check(h)
        return pair_modes(self.grid, self.tag, modes(f), self.apply(modes(h)))

    def apply_section(self, h: Section) -> Section:
        self._check(h)
        return geo.mode_synthesize(geo.ModeCoefficients(self.grid, self.tag, self.apply(modes(h))))

    def mode_block(self, n: int, stride: int = 1) -> np.ndarray:
        """Dense block B_n(t_i, t_j) on a subsampled grid, shape (nt', nt', c, c).

        Obtained by applying the kernel to impulses, so it works for every
        subclass that implements ``apply``.
        """
        g = self.grid
        idx = np.arange(0, g.n_time, stride)
        c = geo.rank(self.tag)
        p = n + g.N
        out = np.zeros((len(idx), len(idx), c, c), dtype=complex)
        w = g.time_weights
        for jj, j in enumerate(idx):
            for b in range(c):
                hm = np.zeros((g.n_time, g.n_x, c), dtype=complex)
                hm[j, p, b] = 1.0 / w[j]
                v = self.apply(hm)
                out[:, jj, :, b] = v[idx, p, :]
        return out

    def __sub__(self, other: "TwoPointKernel") -> "TwoPointKernel":
        return LinearKernel([(1.0, self), (-1.0, other)])

    def __add__(self, other: "TwoPointKernel") -> "TwoPointKernel":
        return LinearKernel([(1.0, self), (1.0, other)])


class StationaryKernel(TwoPointKernel):
    """Sum of separable per-mode terms A_n exp(-i nu_n (t - t'))."""

    def __init__(self, grid, tag, statistics, terms: Sequence[Tuple[np.ndarray, np.ndarray]],
                 provenance: str = "vacuum"):
        super().__init__(grid, tag, statistics)
        self.terms = [(np.asarray(A, dtype=complex), np.asarray(nu, dtype=float)) for A, nu in terms]
        self.provenance = provenance

    def apply(self, hm):
        t, w = self.grid.t, self.grid.time_weights
        out = np.zeros(hm.shape, dtype=complex)
        for A, nu in self.terms:
            ph = np.exp(1j * t[:, None] * nu[None, :])  # (t, n)
            H = np.einsum("t,tn,tnc->nc", w, ph, hm)
            out += np.conj(ph)[:, :, None] * np.einsum("nij,nj->ni", A, H)[None]
        return out

    def applyT(self, hm):
        t, w = self.grid.t, self.grid.time_weights
        g = geo.bundle_metric(self.tag)
        ginv = np.linalg.inv(g)
        out = np.zeros(hm.shape, dtype=complex)
        hr = hm[:, ::-1]
        for A, nu in self.terms:
            ph = np.exp(1j * t[:, None] * nu[None, :])
            F = np.einsum("t,tn,tnc->nc", w, np.conj(ph), hr)
            Y = np.einsum("nji,jk,nk->ni", A, g.T, F)  # A^T g^T F
            Z = ph[:, :, None] * Y[None]
            out += np.einsum("ij,tnj->tni", ginv, Z[:, ::-1])
        return out

    def mode_block(self, n: int, stride: int = 1) -> np.ndarray:
        g = self.grid
        t = g.t[::stride]
        p = n + g.N
        out = 0
        for A, nu in self.terms:
            ph = np.exp(-1j * nu[p] * (t[:, None] - t[None, :]))
            out = out + ph[:, :, None, None] * A[p][None, None]
        return out


class LinearKernel(TwoPointKernel):
    def __init__(self, parts: Sequence[Tuple[complex, TwoPointKernel]], provenance: str = "constructed"):
        k0 = parts[0][1]
        for _, k in parts:
            if k.grid != k0.grid or k.tag != k0.tag:
                raise geo.GridError("kernels live on different bundles")
        super().__init__(k0.grid, k0.tag, k0.statistics)
        self.parts = list(parts)
        self.provenance = provenance

    def apply(self, hm):
        return sum(c * k.apply(hm) for c, k in self.parts)

    def applyT(self, hm):
        return sum(c * k.applyT(hm) for c, k in self.parts)


class LowRankKernel(TwoPointKernel):
    """base + sum_r c_r <f, a_r> <h, b_r>."""

    def __init__(self, base: TwoPointKernel, terms: Sequence[Tuple[complex, np.ndarray, np.ndarray]],
                 provenance: str = "excited"):
        super().__init__(base.grid, base.tag, base.statistics)
        self.base = base
        self.terms = list(terms)
        self.provenance = provenance

    def _pair(self, x, y):
        return pair_modes(self.grid, self.tag, x, y)

    def apply(self, hm):
        out = self.base.apply(hm)
        for c, a, b in self.terms:
            out = out + c * self._pair(hm, b) * a
        return out

    def applyT(self, hm):
        out = self.base.applyT(hm)
        for c, a, b in self.terms:
            out = out + c * self._pair(hm, a) * b
        return out


class BlockKernel(TwoPointKernel):
    """Block-diagonal kernel of a product state on a direct-sum bundle."""

    def __init__(self, k1: TwoPointKernel, k2: TwoPointKernel):
        if k1.grid != k2.grid:
            raise geo.GridError("kernels live on different grids")
        if k1.statistics != k2.statistics:
            raise StateError("statistics mismatch")
        super().__init__(k1.grid, geo.sum_tag(k1.tag, k2.tag), k1.statistics)
        self.k1, self.k2 = k1, k2
        self.n1 = geo.rank(k1.tag)
        self.provenance = "tensor"

    def _both(self, hm, method):
        a = getattr(self.k1, method)(hm[..., : self.n1])
        b = getattr(self.k2, method)(hm[..., self.n1:])
        return np.concatenate([a, b], axis=-1)

    def apply(self, hm):
        return self._both(hm, "apply")

    def applyT(self, hm):
        return self._both(hm, "applyT")


class RestrictedKernel(TwoPointKernel):
    """W_P(f, h) = W(f (+) 0, h (+) 0) (or the second block)."""

    def __init__(self, base: TwoPointKernel, which: int):
        tag = base.tag
        if not (isinstance(tag, tuple) and tag[0] == "sum"):
            raise StateError("partial trace needs a direct-sum kernel")
        sub = tag[1] if which == 0 else tag[2]
        super().__init__(base.grid, sub, base.statistics)
        self.base, self.which = base, which
        self.n1 = geo.rank(tag[1])
        self.ntot = geo.rank(tag)
        self.provenance = "partial-trace"

    def _slice(self):
        return slice(0, self.n1) if self.which == 0 else slice(self.n1, self.ntot)

    def _pad(self, hm):
        out = np.zeros(hm.shape[:2] + (self.ntot,), dtype=complex)
        out[..., self._slice()] = hm
        return out

    def apply(self, hm):
        return self.base.apply(self._pad(hm))[..., self._slice()]

    def applyT(self, hm):
        return self.base.applyT(self._pad(hm))[..., self._slice()]


class BilinearKernel:
    """A kernel known only as a bilinear function of compactly supported sections."""

    def __init__(self, grid, tag, statistics, func: Callable[[Section, Section], complex],
                 provenance: str = "constructed"):
        self.grid, self.tag, self.statistics = grid, tag, statistics
        self.func = func
        self.provenance = provenance

    def __call__(self, f: Section, h: Section) -> complex:
        return self.func(f, h)


def star_conj(sys: GreenSystem, f: Section) -> Section:
    """Test section whose field is Phi(f)^*: bundle conjugation for spinors, else complex conjugation."""
    if sys is not None and sys.fermionic is not None:
        return sys.fermionic.conj(f)
    return f.conj()


# ---------------------------------------------------------------------------
# vacuum


def _q_at(sys: GreenSystem, lam: np.ndarray) -> np.ndarray:
    """Q0 + lam Q1 + lam^2 Q2 per mode, lam of shape (n_modes,)."""
    l = lam[:, None, None]
    return sys.Q0 + l * sys.Q1 + l * l * sys.Q2


def _frequency_groups(sys: GreenSystem):
    """Yield (omega_n, projector) for each group of channels sharing a frequency."""
    if sys.omega is None or sys.potential is not None:
        raise StateError(f"no stationary mode structure for kind {sys.kind!r}")
    om = np.asarray(sys.omega)
    if np.any(om <= 0):
        raise StateError("degenerate per-mode frequency")
    groups: Dict[bytes, List[int]] = {}
    for j in range(om.shape[1]):
        groups.setdefault(om[:, j].tobytes(), []).append(j)
    for cols in groups.values():
        Pj = np.zeros((sys.channels, sys.channels))
        Pj[cols, cols] = 1.0
        yield om[:, cols[0]], Pj


def vacuum_kernel(sys: GreenSystem) -> StationaryKernel:
    """Positive-frequency part of E: W = i Pi^+ E (bose) or i R Pi^+ E (fermi).

    Per mode and per group of channels sharing a frequency omega this gives
    A_n = S Q(-i omega_n) P_group / (2 omega_n) with S = 1 or R.
    """
    stat = FERMI if sys.fermionic is not None else BOSE
    S = sys.fermionic.R if stat == FERMI else np.eye(sys.channels)
    terms = []
    for w, Pj in _frequency_groups(sys):
        A = np.einsum("ij,njk,kl->nil", S, _q_at(sys, -1j * w), Pj) / (2 * w)[:, None, None]
        terms.append((A, w))
    return StationaryKernel(sys.grid, sys.tag, stat, terms, provenance="vacuum")


def pauli_jordan_kernel(sys: GreenSystem, statistics: str = BOSE) -> StationaryKernel:
    """E itself as a kernel, E(f, h) = <f, E h>, from its two frequency components."""
    terms = []
    for w, Pj in _frequency_groups(sys):
        d = (2j * w)[:, None, None]
        terms.append((np.einsum("njk,kl->njl", _q_at(sys, -1j * w), Pj) / d, w))
        terms.append((-np.einsum("njk,kl->njl", _q_at(sys, 1j * w), Pj) / d, -w))
    return StationaryKernel(sys.grid, sys.tag, statistics, terms, provenance="pauli-jordan")


class TransposeKernel(TwoPointKernel):
    """W^T(f, h) = W(h, f)."""

    def __init__(self, base: TwoPointKernel):
        super().__init__(base.grid, base.tag, base.statistics)
        self.base = base
        self.provenance = "transpose"

    def apply(self, hm):
        return self.base.applyT(hm)

    def applyT(self, hm):
        return self.base.apply(hm)


# ---------------------------------------------------------------------------
# pairings (Wick enumerator)


def perfect_matchings(n: int):
    """Yield (pairs, sign) over perfect matchings of range(n), pairs (i, j) with i < j.

    The sign is that of the permutation listing the pairs in order.
    """
    def rec(items):
        if not items:
            yield [], 1
            return
        first = items[0]
        for pos in range(1, len(items)):
            rest = items[1:pos] + items[pos + 1:]
            # moving items[pos] next to items[0] crosses pos - 1 entries
            s = -1 if (pos - 1) % 2 else 1
            for pairs, sign in rec(rest):
                yield [(first, items[pos])] + pairs, s * sign

    if n % 2:
        return
    yield from rec(list(range(n)))


def wick_sum(M: np.ndarray, fermi: bool) -> complex:
    """Sum over perfect matchings of prod M[i, j] (i < j), signed for fermions."""
    n = len(M)
    if n == 0:
        return 1.0 + 0j
    if n % 2:
        return 0j
    total = 0j
    for pairs, sign in perfect_matchings(n):
        v = complex(sign if fermi else 1)
        for i, j in pairs:
            v *= M[i, j]
        total += v
    return total


# ---------------------------------------------------------------------------
# states


class QuasifreeState:
    """Quasifree state with zero one-point function."""

    def __init__(self, kernel, system: GreenSystem, statistics: str = None):
        self.kernel = kernel
        self.system = system
        self.statistics = statistics or kernel.statistics
        self._pairs: Dict[Tuple[int, int], complex] = {}
        self._keep: Dict[int, Section] = {}

    @property
    def two_point(self):
        return self.kernel

    def pair(self, f: Section, h: Section) -> complex:
        key = (id(f), id(h))
        if key not in self._pairs:
            self._keep[id(f)], self._keep[id(h)] = f, h
            self._pairs[key] = self.kernel(f, h)
        return self._pairs[key]

    def npoint(self, fs: Sequence[Section]) -> complex:
        """omega(Phi(f_1) ... Phi(f_n)) by the ordered Wick pairing sum."""
        n = len(fs)
        M = np.zeros((n, n), dtype=complex)
        for i in range(n):
            for j in range(i + 1, n):
                M[i, j] = self.pair(fs[i], fs[j])
        return wick_sum(M, self.statistics == FERMI)

    def evaluate(self, a: al.AlgebraElement) -> complex:
        """omega(a) from the symmetric (bose) or antisymmetric (fermi) part of W."""
        if a.statistics != self.statistics:
            raise StateError("statistics mismatch")
        reg = a.registry
        fermi = self.statistics == FERMI
        total = 0j
        for key, c in a.terms.items():
            n = len(key)
            if n % 2:
                continue
            M = np.zeros((n, n), dtype=complex)
            for i in range(n):
                for j in range(i + 1, n):
                    fi, fj = reg.sources[key[i]], reg.sources[key[j]]
                    wij, wji = self.pair(fi, fj), self.pair(fj, fi)
                    M[i, j] = 0.5 * (wij - wji) if fermi else 0.5 * (wij + wji)
            total += c * wick_sum(M, fermi)
        return total


class ExcitedState:
    """omega_h(A) = omega(Phi(C h) A Phi(h)) / omega(Phi(C h) Phi(h))."""

    def __init__(self, base: QuasifreeState, h: Section, min_norm: float = 1e-10):
        self.base, self.h = base, h
        self.system = base.system
        self.hbar = star_conj(self.system, h)
        self.statistics = base.statistics
        self.norm = base.pair(self.hbar, h)
        scale = np.sqrt(abs(base.pair(h, self.hbar)) * abs(self.norm)) + abs(self.norm)
        if abs(self.norm) <= min_norm * max(scale, 1e-300) or abs(self.norm) == 0:
            raise StateError("excitation has vanishing norm")

    def npoint(self, fs: Sequence[Section]) -> complex:
        return self.base.npoint([self.hbar] + list(fs) + [self.h]) / self.norm

    def evaluate(self, a: al.AlgebraElement) -> complex:
        reg = a.registry
        left = al.generator(reg, self.hbar)
        right = al.generator(reg, self.h)
        return self.base.evaluate(left * a * right) / self.norm

    @property
    def two_point(self) -> TwoPointKernel:
        K = self.base.kernel
        hb, h = modes(self.hbar), modes(self.h)
        # W_h(f,g) = W(f,g) + [W(hb,f) W(g,h) + W(hb,g) W(f,h)] / W(hb,h)
        KT_hb = K.applyT(hb)  # <f, KT_hb> = W(hb, f)
        K_h = K.apply(h)  # <f, K_h> = W(f, h)
        c = 1.0 / self.norm
        sign = -1.0 if self.statistics == FERMI else 1.0
        return LowRankKernel(K, [(c, KT_hb, K_h), (sign * c, K_h, KT_hb)])


def vacuum_state(sys: GreenSystem) -> QuasifreeState:
    return QuasifreeState(vacuum_kernel(sys), sys)


def evaluate(state, a: al.AlgebraElement) -> complex:
    return state.evaluate(a)


def npoint(state, fs: Sequence[Section]) -> complex:
    return state.npoint(fs)


def excited_state(state: QuasifreeState, h: Section) -> ExcitedState:
    return ExcitedState(state, h)


# ---------------------------------------------------------------------------
# truncated functions


def _block_sign(S: Tuple[int, ...], B: Tuple[int, ...]) -> int:
    """Sign of the permutation S -> (B, S minus B), both in original order."""
    R = [s for s in S if s not in B]
    perm = [S.index(x) for x in list(B) + R]
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def truncated_table(functional, fs: Sequence[Section], fermi: bool = None) -> Dict[Tuple[int, ...], complex]:
    """W_T on every ordered subset of positions, by the moment recursion.

    W(S) = sum over blocks B containing min S of eps * W_T(B) W(S minus B).
    """
    if fermi is None:
        fermi = getattr(functional, "statistics", BOSE) == FERMI
    n = len(fs)
    moments: Dict[Tuple[int, ...], complex] = {(): 1.0 + 0j}

    def W(S):
        if S not in moments:
            moments[S] = functional.npoint([fs[i] for i in S])
        return moments[S]

    trunc: Dict[Tuple[int, ...], complex] = {}
    for size in range(1, n + 1):
        for S in itertools.combinations(range(n), size):
            acc = W(S)
            rest_items = S[1:]
            for k in range(0, size - 1):
                for extra in itertools.combinations(rest_items, k):
                    B = (S[0],) + extra
                    R = tuple(s for s in S if s not in B)
                    eps = _block_sign(S, B) if fermi else 1
                    acc -= eps * trunc[B] * W(R)
            trunc[S] = acc
    trunc[()] = 1.0 + 0j
    return trunc


def truncated_npoint(functional, fs: Sequence[Section], fermi: bool = None) -> complex:
    return truncated_table(functional, fs, fermi)[tuple(range(len(fs)))]


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for k in range(len(rest) + 1):
        for extra in itertools.combinations(rest, k):
            B = (first,) + extra
            R = [x for x in rest if x not in extra]
            for p in _set_partitions(R):
                yield [B] + p


def moments_from_truncated(trunc: Dict[Tuple[int, ...], complex], n: int, fermi: bool) -> complex:
    """W^{(n)} rebuilt by summing eps(P) prod W_T over every set partition P."""
    total = 0j
    S = tuple(range(n))
    for P in _set_partitions(list(S)):
        order = [x for B in P for x in B]
        sign = 1
        if fermi:
            for i in range(n):
                for j in range(i + 1, n):
                    if order[i] > order[j]:
                        sign = -sign
        v = complex(sign)
        for B in P:
            v *= trunc[B]
        total += v
    return total


# ---------------------------------------------------------------------------
# Proca / Fierz-Pauli


def proca_fp_bisolution(W_proca, W_scalar, m: float) -> BilinearKernel:
    """H(F, G) = W(F, G) - m^-2 W0(delta F, delta G) on 1-form test sections."""
    if W_proca.grid != W_scalar.grid:
        raise geo.GridError("kernels live on different grids")
    if W_proca.tag != "oneform" or W_scalar.tag != "scalar":
        raise StateError("need a 1-form kernel and a scalar kernel")
    if m <= 0:
        raise StateError("mass must be positive")

    def H(F, G):
        return W_proca(F, G) - W_scalar(geo.codifferential(F), geo.codifferential(G)) / m ** 2

    return BilinearKernel(W_proca.grid, "oneform", BOSE, H, provenance="fierz-pauli")


# ---------------------------------------------------------------------------
# tensor products and complex doubling


def tensor_state(omega: QuasifreeState, sigma: QuasifreeState, system: GreenSystem = None) -> QuasifreeState:
    """Product state on the direct-sum system; its kernel is block diagonal."""
    from .greenops import direct_sum
    if system is None:
        system = direct_sum(omega.system, sigma.system)
    return QuasifreeState(BlockKernel(omega.kernel, sigma.kernel), system)


def partial_trace(phi: QuasifreeState, which: str) -> QuasifreeState:
    """Restriction to the first ('P') or second ('Q') block."""
    idx = {"P": 0, "Q": 1, 0: 0, 1: 1}[which]
    sub = phi.system.parts[idx] if phi.system.parts else None
    return QuasifreeState(RestrictedKernel(phi.kernel, idx), sub, phi.statistics)


class ComplexDoubling:
    """Kernels of the complex field Psi(f) = (Y(f) (x) 1 + i 1 (x) Y(f))/sqrt 2 in omega (x) omega."""

    def __init__(self, omega: QuasifreeState):
        if omega.statistics != BOSE:
            raise StateError("complex doubling is defined for bosonic states")
        self.omega = omega
        self.product = tensor_state(omega, omega)
        self.tag = omega.kernel.tag

    def _lift(self, f: Section, conj: bool) -> Section:
        z = -1j if conj else 1j
        return geo.direct_sum(f, f * z) * (1 / np.sqrt(2))

    def W(self, left: str, right: str, f: Section, h: Section) -> complex:
        """left/right in {'phi', 'phistar'}."""
        a = self._lift(f, left == "phistar")
        b = self._lift(h, right == "phistar")
        return self.product.kernel(a, b)

    def W_phiphi(self, f, h):
        return self.W("phi", "phi", f, h)

    def W_starstar(self, f, h):
        return self.W("phistar", "phistar", f, h)

    def W_phistar(self, f, h):
        return self.W("phi", "phistar", f, h)

    def W_starphi(self, f, h):
        return self.W("phistar", "phi", f, h)


def complex_double(omega: QuasifreeState) -> ComplexDoubling:
    return ComplexDoubling(omega)


# ---------------------------------------------------------------------------
# invariant residuals


def ccr_residual(kernel, sys: GreenSystem, f: Section, h: Section) -> Tuple[float, float]:
    """(|W(f,h) -+ W(h,f) - i E(f, S h)|, scale) with S = 1 (bose) or R (fermi)."""
    if kernel.statistics == FERMI:
        lhs = kernel(f, h) + kernel(h, f)
        rhs = 1j * sys.E(f, sys.fermionic.apply_R(h))
    else:
        lhs = kernel(f, h) - kernel(h, f)
        rhs = 1j * sys.E(f, h)
    scale = np.sqrt(abs(kernel(star_conj(sys, f), f)) * abs(kernel(star_conj(sys, h), h))) + abs(rhs)
    return abs(lhs - rhs), scale


def kernel_csv_rows(kernel: TwoPointKernel, mode_list: Sequence[int], stride: int = 8):
    """Rows (n, t-index, t'-index, re, im, channel-pair) for CSV export."""
    rows = []
    c = geo.rank(kernel.tag)
    for n in mode_list:
        B = kernel.mode_block(n, stride)
        idx = np.arange(0, kernel.grid.n_time, stride)
        for a, i in enumerate(idx):
            for b, j in enumerate(idx):
                for p in range(c):
                    for q in range(c):
                        v = B[a, b, p, q]
                        rows.append((n, int(i), int(j), float(v.real), float(v.imag), f"{p}{q}"))
    return rows

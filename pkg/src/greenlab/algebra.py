"""CCR and CAR *-algebras over registered solutions, with the explicit star product.

Elements are finite sums of monomials in registered generators.  A bosonic
monomial is a sorted index tuple (a commutative monomial of the symmetric
algebra); a fermionic monomial is a strictly increasing index tuple standing
for the wedge product in that order, its sign carried by the coefficient.

The product is ``m o exp(C)`` applied to F (x) H, where C contracts one factor
of F with one factor of H against the Gram matrix:

* bose: C = (i/2) sum_ab sigma_ab d_a (x) d_b with sigma_ab = E(f_a, f_b);
* fermi: C = (1/2) sum_ab tau_ab dR_a (x) dL_b with tau_ab = i E(f_a, R f_b),
  dR_a removing f_a from the right end of F and dL_b from the left end of H.

The exponential series terminates because each contraction lowers both degrees.
"""
from __future__ import annotations

from collections import defaultdict
from math import factorial
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from . import geometry as geo
from .geometry import Section
from .greenops import GreenSystem

Key = Tuple[int, ...]

BOSE, FERMI = "bose", "fermi"
SAME_SOLUTION_TOL = 1e-6


class AlgebraError(ValueError):
    pass


# ---------------------------------------------------------------------------
# registries


class GramRegistry:
    """Generators known only through their Gram matrix and conjugation table.

    Used directly for purely algebraic tests; ``SolutionRegistry`` fills the
    same tables from sections.
    """

    def __init__(self, statistics: str, gram: np.ndarray = None, conj: Iterable[int] = None):
        if statistics not in (BOSE, FERMI):
            raise AlgebraError(f"unknown statistics {statistics!r}")
        self.statistics = statistics
        self._gram = np.zeros((0, 0), dtype=complex) if gram is None else np.array(gram, dtype=complex)
        n = len(self._gram)
        self._conj: List[Optional[int]] = list(conj) if conj is not None else [None] * n

    def __len__(self):
        return len(self._gram)

    @property
    def size(self) -> int:
        return len(self)

    def gram(self, a: int, b: int) -> complex:
        return self._gram[a, b]

    def gram_matrix(self) -> np.ndarray:
        n = len(self)
        return np.array([[self.gram(a, b) for b in range(n)] for a in range(n)], dtype=complex)

    def conj_index(self, a: int) -> int:
        c = self._conj[a]
        if c is None:
            raise AlgebraError(f"no conjugate registered for generator {a}")
        return c

    def same_registry(self, other: "GramRegistry") -> bool:
        return self is other


class SolutionRegistry(GramRegistry):
    """Append-only registry of sources f_i with cached E f_i and Gram entries."""

    def __init__(self, system: GreenSystem, statistics: str = None):
        if statistics is None:
            statistics = FERMI if system.fermionic is not None else BOSE
        super().__init__(statistics)
        if statistics == FERMI and system.fermionic is None:
            raise AlgebraError("fermionic algebra needs a system with R and C")
        self.system = system
        self.sources: List[Section] = []
        self.solutions: List[Section] = []
        self._lookup: Dict[bytes, int] = {}
        self._cache: Dict[Tuple[int, int], complex] = {}

    def __len__(self):
        return len(self.sources)

    def register(self, f: Section) -> int:
        key = f.values.tobytes()
        if key in self._lookup:
            return self._lookup[key]
        self.system.check_source(f)
        self.sources.append(f)
        self.solutions.append(self.system.pauli_jordan(f))
        self._conj.append(None)
        idx = len(self.sources) - 1
        self._lookup[key] = idx
        return idx

    def gram(self, a: int, b: int) -> complex:
        if (a, b) not in self._cache:
            f, Eh = self.sources[a], self.solutions[b]
            if self.statistics == BOSE:
                val = geo.pairing(f, Eh)
            else:
                # E R = R E since P R = R P
                val = 1j * geo.pairing(f, self.system.fermionic.apply_R(Eh))
            self._cache[(a, b)] = val
        return self._cache[(a, b)]

    def conj_index(self, a: int) -> int:
        # missing conjugates are registered on demand
        if self._conj[a] is None:
            c = self.register(self.sources[a].conj())
            self._conj[a] = c
            self._conj[c] = a
        return self._conj[a]

    def same_solution(self, a: int, b: int, tol: float = SAME_SOLUTION_TOL) -> bool:
        """Equality of generators in the quotient: sup |E f_a - E f_b| <= tol * scale."""
        ua, ub = self.solutions[a], self.solutions[b]
        scale = max(ua.sup(), ub.sup(), 1e-300)
        return (ua - ub).sup() <= tol * scale


# ---------------------------------------------------------------------------
# monomial helpers


def _sort_sign(idx: Iterable[int]) -> Tuple[int, Optional[Key]]:
    """Sign of the sorting permutation and the sorted key (None if an index repeats)."""
    lst = list(idx)
    sign = 1
    # insertion sort counting transpositions
    for i in range(1, len(lst)):
        j = i
        while j > 0 and lst[j - 1] > lst[j]:
            lst[j - 1], lst[j] = lst[j], lst[j - 1]
            sign = -sign
            j -= 1
    for i in range(1, len(lst)):
        if lst[i] == lst[i - 1]:
            return 0, None
    return sign, tuple(lst)


def _remove_one(key: Key, pos: int) -> Key:
    return key[:pos] + key[pos + 1:]


# ---------------------------------------------------------------------------
# elements


class AlgebraElement:
    __slots__ = ("registry", "terms")

    def __init__(self, registry: GramRegistry, terms: Dict[Key, complex] = None):
        self.registry = registry
        self.terms: Dict[Key, complex] = {}
        for k, c in (terms or {}).items():
            if c != 0:
                self.terms[tuple(k)] = complex(c)

    @property
    def statistics(self) -> str:
        return self.registry.statistics

    # -- construction -------------------------------------------------------

    @classmethod
    def unit(cls, registry) -> "AlgebraElement":
        return cls(registry, {(): 1.0})

    @classmethod
    def zero(cls, registry) -> "AlgebraElement":
        return cls(registry, {})

    @classmethod
    def monomial(cls, registry, indices: Iterable[int], coeff: complex = 1.0) -> "AlgebraElement":
        idx = tuple(indices)
        if registry.statistics == BOSE:
            return cls(registry, {tuple(sorted(idx)): coeff})
        sign, key = _sort_sign(idx)
        if key is None:
            return cls.zero(registry)
        return cls(registry, {key: sign * coeff})

    # -- linear structure ---------------------------------------------------

    def _check(self, other: "AlgebraElement"):
        if not isinstance(other, AlgebraElement):
            raise TypeError("expected an AlgebraElement")
        if other.registry is not self.registry:
            raise AlgebraError("elements belong to different registries")

    def __add__(self, other):
        if not isinstance(other, AlgebraElement):
            return self + AlgebraElement.unit(self.registry) * other
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0) + c
        return AlgebraElement(self.registry, out)

    __radd__ = __add__

    def __neg__(self):
        return AlgebraElement(self.registry, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            return product(self, other)
        return AlgebraElement(self.registry, {k: c * complex(other) for k, c in self.terms.items()})

    def __rmul__(self, other):
        return AlgebraElement(self.registry, {k: complex(other) * c for k, c in self.terms.items()})

    def __matmul__(self, other):
        return product(self, other)

    # -- inspection ---------------------------------------------------------

    def degree(self) -> int:
        return max((len(k) for k in self.terms), default=-1)

    def part(self, n: int) -> "AlgebraElement":
        return AlgebraElement(self.registry, {k: c for k, c in self.terms.items() if len(k) == n})

    def scalar_part(self) -> complex:
        return self.terms.get((), 0.0 + 0.0j)

    def parity_parts(self) -> Tuple["AlgebraElement", "AlgebraElement"]:
        even = {k: c for k, c in self.terms.items() if len(k) % 2 == 0}
        odd = {k: c for k, c in self.terms.items() if len(k) % 2 == 1}
        return AlgebraElement(self.registry, even), AlgebraElement(self.registry, odd)

    def norm(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def close_to(self, other: "AlgebraElement", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        self._check(other)
        scale = max(self.norm(), other.norm())
        return (self - other).norm() <= rtol * scale + atol

    def solution_vector(self) -> Section:
        """sum_i c_i E f_i for the degree-1 part (requires a SolutionRegistry)."""
        reg = self.registry
        if not isinstance(reg, SolutionRegistry):
            raise AlgebraError("solution vectors need a SolutionRegistry")
        out = geo.zeros(reg.system.grid, reg.system.tag)
        for k, c in self.part(1).terms.items():
            out = out + reg.solutions[k[0]] * c
        return out

    def __repr__(self):
        items = sorted(self.terms.items(), key=lambda kv: (len(kv[0]), kv[0]))
        body = " + ".join(f"({c:.6g}){list(k) if k else '1'}" for k, c in items[:8])
        more = " + ..." if len(items) > 8 else ""
        return f"AlgebraElement[{self.statistics}]({body or '0'}{more})"


# ---------------------------------------------------------------------------
# operations


def generator(registry: SolutionRegistry, f: Section) -> AlgebraElement:
    """The degree-one element Upsilon(f) (bose) or Xi(f) (fermi)."""
    if f.tag != registry.system.tag:
        raise geo.GridError(f"section tag {f.tag!r} does not match the system's {registry.system.tag!r}")
    return AlgebraElement.monomial(registry, (registry.register(f),))


def _contract_once(pairs: Dict[Tuple[Key, Key], complex], reg: GramRegistry):
    out: Dict[Tuple[Key, Key], complex] = defaultdict(complex)
    bose = reg.statistics == BOSE
    for (kf, kh), c in pairs.items():
        if not kf or not kh:
            continue
        if bose:
            # derivative of a commutative monomial: multiplicity x monomial minus one factor
            for a in sorted(set(kf)):
                ma = kf.count(a)
                kf2 = _remove_one(kf, kf.index(a))
                for b in sorted(set(kh)):
                    g = reg.gram(a, b)
                    if g == 0:
                        continue
                    mb = kh.count(b)
                    out[(kf2, _remove_one(kh, kh.index(b)))] += c * ma * mb * g
        else:
            nf = len(kf)
            for p, a in enumerate(kf):
                sa = -1 if (nf - 1 - p) % 2 else 1  # move f_a to the right end
                kf2 = _remove_one(kf, p)
                for q, b in enumerate(kh):
                    g = reg.gram(a, b)
                    if g == 0:
                        continue
                    sb = -1 if q % 2 else 1  # move f_b to the left end
                    out[(kf2, _remove_one(kh, q))] += c * sa * sb * g
    return dict(out)


def _multiply_keys(kf: Key, kh: Key, bose: bool) -> Tuple[int, Optional[Key]]:
    if bose:
        return 1, tuple(sorted(kf + kh))
    return _sort_sign(kf + kh)


def product(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    """Star product a b (finite exponential series of single contractions)."""
    a._check(b)
    reg = a.registry
    bose = reg.statistics == BOSE
    factor = 0.5j if bose else 0.5
    pairs = {(kf, kh): cf * ch for kf, cf in a.terms.items() for kh, ch in b.terms.items()}
    out: Dict[Key, complex] = defaultdict(complex)
    k = 0
    while pairs:
        w = factor ** k / factorial(k)
        for (kf, kh), c in pairs.items():
            sign, key = _multiply_keys(kf, kh, bose)
            if key is not None:
                out[key] += w * sign * c
        pairs = _contract_once(pairs, reg)
        k += 1
    return AlgebraElement(reg, out)


def star(a: AlgebraElement) -> AlgebraElement:
    """Antilinear involution: conjugate coefficients, conjugate generators, reverse order."""
    reg = a.registry
    out: Dict[Key, complex] = defaultdict(complex)
    for k, c in a.terms.items():
        mapped = [reg.conj_index(i) for i in k]
        if reg.statistics == BOSE:
            out[tuple(sorted(mapped))] += np.conj(c)
        else:
            # C v_n ^ ... ^ C v_1, brought to normal order
            sign, key = _sort_sign(mapped[::-1])
            if key is not None:
                out[key] += sign * np.conj(c)
    return AlgebraElement(reg, out)


def commutator(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    return product(a, b) - product(b, a)


def graded_commutator(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    """AB - (-1)^{|A||B|} BA, extended bilinearly over parity parts."""
    if a.statistics == BOSE:
        return commutator(a, b)
    out = AlgebraElement.zero(a.registry)
    for pa, A in enumerate(a.parity_parts()):
        for pb, B in enumerate(b.parity_parts()):
            if not A.terms or not B.terms:
                continue
            s = -1 if (pa and pb) else 1
            out = out + product(A, B) - s * product(B, A)
    return out


def tensor_embed(a: AlgebraElement, b: AlgebraElement, target: SolutionRegistry) -> AlgebraElement:
    """Image of a (x) b in the algebra of the direct-sum system.

    Generators map as f -> f (+) 0 and h -> 0 (+) h; the result is the
    product of the two embedded elements (a first).
    """
    ra, rb = a.registry, b.registry
    sysT = target.system
    if not (isinstance(ra, SolutionRegistry) and isinstance(rb, SolutionRegistry)):
        raise AlgebraError("tensor_embed needs solution registries")
    if ra.system.grid != sysT.grid or rb.system.grid != sysT.grid:
        raise geo.GridError("registries live on different grids")
    if sysT.tag != geo.sum_tag(ra.system.tag, rb.system.tag):
        raise AlgebraError("target registry is not over the direct-sum system")
    if not (ra.statistics == rb.statistics == target.statistics):
        raise AlgebraError("statistics mismatch")

    def embed(el: AlgebraElement, left: bool) -> AlgebraElement:
        reg = el.registry
        other = rb.system.tag if left else ra.system.tag
        cache = {}
        out = AlgebraElement.zero(target)
        for k, c in el.terms.items():
            idx = []
            for i in k:
                if i not in cache:
                    f = reg.sources[i]
                    g = geo.pad_left(f, other) if left else geo.pad_right(other, f)
                    cache[i] = target.register(g)
                idx.append(cache[i])
            out = out + AlgebraElement.monomial(target, idx, c)
        return out

    return product(embed(a, True), embed(b, False))

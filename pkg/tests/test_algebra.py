import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from greenlab import algebra as al, geometry as geo, greenops as go
from greenlab.algebra import AlgebraElement, GramRegistry, product, star


@pytest.fixture(scope="module")
def scalar(grid):
    return go.build_scalar_kg(grid, 1.0)


@pytest.fixture(scope="module")
def dirac(grid):
    return go.build_dirac_doubled(grid, 1.0)


def random_gram(stat, n, rng, real=False):
    """Random structure matrix; with the identity conjugation it must be real for star to work."""
    a = rng.normal(size=(n, n)) + (0 if real else 1j) * rng.normal(size=(n, n))
    # bose: antisymmetric sigma; fermi: symmetric tau
    g = a - a.T if stat == al.BOSE else a + a.T
    return GramRegistry(stat, g, conj=range(n))


def random_element(reg, rng, max_deg=3, n_terms=4):
    out = AlgebraElement.zero(reg)
    n = reg.size
    for _ in range(n_terms):
        d = rng.integers(0, max_deg + 1)
        idx = rng.integers(0, n, size=d)
        if reg.statistics == al.FERMI and len(set(idx)) < len(idx):
            continue
        c = complex(rng.normal(), rng.normal())
        out = out + AlgebraElement.monomial(reg, idx, c)
    return out


def spinor_bump(grid, rng):
    """Doubled-Dirac section with data in every channel."""
    f = geo.zeros(grid, "dirac")
    for c in range(4):
        f = f + geo.random_bump(grid, "dirac", rng, channel=c)
    return f


# -- Gram registries --------------------------------------------------------


def test_bose_gram_antisymmetric_and_real(scalar, grid, rng):
    reg = al.SolutionRegistry(scalar)
    fs = [geo.random_bump(grid, "scalar", rng) * complex(1, k) for k in range(4)]
    idx = [reg.register(f) for f in fs]
    G = np.array([[reg.gram(a, b) for b in idx] for a in idx])
    assert np.abs(G + G.T).max() < 1e-10 * np.abs(G).max()
    cj = [reg.conj_index(a) for a in idx]
    Gc = np.array([[reg.gram(a, b) for b in cj] for a in cj])
    assert np.abs(np.conj(G) - Gc).max() < 1e-10 * np.abs(G).max()


def test_fermi_gram_symmetric(dirac, grid, rng):
    reg = al.SolutionRegistry(dirac)
    idx = [reg.register(spinor_bump(grid, rng)) for _ in range(4)]
    G = np.array([[reg.gram(a, b) for b in idx] for a in idx])
    assert np.abs(G - G.T).max() < 1e-10 * np.abs(G).max()


def test_register_reuses_identical_data(scalar, grid, rng):
    reg = al.SolutionRegistry(scalar)
    f = geo.random_bump(grid, "scalar", rng)
    assert reg.register(f) == reg.register(f.with_values(f.values.copy()))
    assert len(reg) == 1


def test_generator_tag_mismatch(scalar, grid, rng):
    reg = al.SolutionRegistry(scalar)
    with pytest.raises(geo.GridError):
        al.generator(reg, geo.random_bump(grid, "oneform", rng))


# -- Y1-Y4 ------------------------------------------------------------------


def test_linearity_through_solution_vectors(scalar, grid, rng):
    reg = al.SolutionRegistry(scalar)
    f, h = geo.random_bump(grid, "scalar", rng), geo.random_bump(grid, "scalar", rng)
    z = 0.3 - 1.1j
    lhs = al.generator(reg, f) + z * al.generator(reg, h)
    rhs = al.generator(reg, f + h * z)
    assert lhs.degree() == rhs.degree() == 1
    diff = lhs.solution_vector() - rhs.solution_vector()
    assert diff.sup() < 1e-12 * rhs.solution_vector().sup()


def test_generator_of_image_is_zero(scalar, grid, rng):
    reg = al.SolutionRegistry(scalar)
    f = geo.random_bump(grid, "scalar", rng)
    Pf = scalar.apply(f)
    v = al.generator(reg, Pf).solution_vector()
    assert v.sup() < 1e-6 * scalar.pauli_jordan(f).sup() * max(1.0, Pf.sup() / f.sup())


def test_star_of_generator_is_conjugate_generator(scalar, grid, rng):
    reg = al.SolutionRegistry(scalar)
    f = geo.random_bump(grid, "scalar", rng) * (1 + 2j)
    assert star(al.generator(reg, f)).close_to(al.generator(reg, f.conj()))


def test_commutator_is_central(scalar, grid, rng):
    reg = al.SolutionRegistry(scalar)
    f, h = geo.random_bump(grid, "scalar", rng), geo.random_bump(grid, "scalar", rng)
    c = al.commutator(al.generator(reg, f), al.generator(reg, h))
    assert c.degree() == 0
    assert abs(c.scalar_part() - 1j * scalar.E(f, h)) < 1e-12 * abs(scalar.E(f, h))


def test_anticommutator_of_spinor_generators(dirac, grid, rng):
    reg = al.SolutionRegistry(dirac)
    f, h = spinor_bump(grid, rng), spinor_bump(grid, rng)
    a, b = al.generator(reg, f), al.generator(reg, h)
    c = al.graded_commutator(a, b)
    expect = 1j * dirac.E(f, dirac.fermionic.apply_R(h))
    assert c.degree() == 0
    assert abs(c.scalar_part() - expect) < 1e-12 * abs(expect)
    assert c.close_to(a * b + b * a)


def test_fermi_generators_square_to_half_tau(dirac, grid, rng):
    reg = al.SolutionRegistry(dirac)
    f = spinor_bump(grid, rng)
    a = al.generator(reg, f)
    sq = a * a
    assert sq.degree() == 0
    assert abs(sq.scalar_part() - 0.5j * dirac.E(f, dirac.fermionic.apply_R(f))) < 1e-12 * abs(sq.scalar_part())


# -- product laws -----------------------------------------------------------


@pytest.mark.parametrize("stat", [al.BOSE, al.FERMI])
def test_associativity(stat):
    rng = np.random.default_rng(11)
    reg = random_gram(stat, 5, rng)
    for _ in range(50):
        a, b, c = (random_element(reg, rng) for _ in range(3))
        lhs, rhs = (a * b) * c, a * (b * c)
        assert lhs.close_to(rhs, rtol=1e-12)


@pytest.mark.parametrize("stat", [al.BOSE, al.FERMI])
def test_star_is_antihomomorphic_involution(stat):
    rng = np.random.default_rng(12)
    reg = random_gram(stat, 5, rng, real=True)
    one = AlgebraElement.unit(reg)
    assert star(one).close_to(one)
    for _ in range(50):
        a, b = random_element(reg, rng), random_element(reg, rng)
        assert star(star(a)).close_to(a)
        assert star(a * b).close_to(star(b) * star(a), rtol=1e-12)


@pytest.mark.parametrize("stat", [al.BOSE, al.FERMI])
def test_unit_and_scalars_are_central(stat):
    rng = np.random.default_rng(13)
    reg = random_gram(stat, 4, rng)
    one = AlgebraElement.unit(reg)
    for _ in range(10):
        a = random_element(reg, rng)
        assert (a * one).close_to(a) and (one * a).close_to(a)
        assert al.commutator(a, one * 2.5).norm() < 1e-14 * max(a.norm(), 1)


def test_fermi_monomials_have_no_repeats():
    rng = np.random.default_rng(14)
    reg = random_gram(al.FERMI, 4, rng)
    assert AlgebraElement.monomial(reg, (1, 1)).norm() == 0
    m = AlgebraElement.monomial(reg, (2, 0, 1))
    assert list(m.terms) == [(0, 1, 2)] and m.terms[(0, 1, 2)] == 1
    m = AlgebraElement.monomial(reg, (1, 0))
    assert m.terms[(0, 1)] == -1


def test_graded_commutator_of_odd_elements_is_anticommutator():
    rng = np.random.default_rng(15)
    reg = random_gram(al.FERMI, 5, rng)
    for _ in range(10):
        a = AlgebraElement.monomial(reg, (rng.integers(5),), 1.0)
        b = random_element(reg, rng, max_deg=3)
        _, b_odd = b.parity_parts()
        assert al.graded_commutator(a, b_odd).close_to(a * b_odd + b_odd * a)


@settings(max_examples=30, deadline=None)
@given(hst.lists(hst.integers(0, 3), min_size=0, max_size=3),
       hst.lists(hst.integers(0, 3), min_size=0, max_size=3))
def test_bose_monomials_commute_modulo_lower_degree(k1, k2):
    reg = random_gram(al.BOSE, 4, np.random.default_rng(16))
    a, b = AlgebraElement.monomial(reg, k1), AlgebraElement.monomial(reg, k2)
    top = len(k1) + len(k2)
    c = al.commutator(a, b)
    assert c.part(top).norm() == 0
    if min(len(k1), len(k2)) == 0:
        assert c.norm() == 0


# -- tensor products --------------------------------------------------------


def test_tensor_generator_rule(grid, rng):
    P, Q = go.build_scalar_kg(grid, 1.0), go.build_scalar_kg(grid, 1.5)
    S = go.direct_sum(P, Q)
    rP, rQ, rS = al.SolutionRegistry(P), al.SolutionRegistry(Q), al.SolutionRegistry(S)
    for _ in range(10):
        f, h = geo.random_bump(grid, "scalar", rng), geo.random_bump(grid, "scalar", rng)
        lhs = al.generator(rS, geo.direct_sum(f, h))
        rhs = (al.tensor_embed(al.generator(rP, f), AlgebraElement.unit(rQ), rS)
               + al.tensor_embed(AlgebraElement.unit(rP), al.generator(rQ, h), rS))
        diff = lhs.solution_vector() - rhs.solution_vector()
        assert diff.sup() < 1e-12 * lhs.solution_vector().sup()
        cross = al.commutator(al.tensor_embed(al.generator(rP, f), AlgebraElement.unit(rQ), rS),
                              al.tensor_embed(AlgebraElement.unit(rP), al.generator(rQ, h), rS))
        assert cross.norm() < 1e-14


def test_graded_tensor_sign_rule(grid, rng):
    D1, D2 = go.build_dirac_doubled(grid, 1.0), go.build_dirac_doubled(grid, 1.3)
    S = go.direct_sum(D1, D2)
    r1, r2, rS = al.SolutionRegistry(D1), al.SolutionRegistry(D2), al.SolutionRegistry(S)
    g1 = [al.generator(r1, spinor_bump(grid, rng)) for _ in range(2)]
    g2 = [al.generator(r2, spinor_bump(grid, rng)) for _ in range(2)]
    one1, one2 = AlgebraElement.unit(r1), AlgebraElement.unit(r2)
    cases = [(a, ap, b, bp)
             for a, b in itertools.product([one1, g1[0], g1[0] * g1[1]], [g1[1], one1])
             for ap, bp in itertools.product([g2[0], one2], [g2[1]])][:10]
    assert len(cases) == 10
    for A, Ap, B, Bp in cases:
        lhs = al.tensor_embed(A, Ap, rS) * al.tensor_embed(B, Bp, rS)
        sign = (-1) ** (Ap.degree() * B.degree())
        rhs = al.tensor_embed(A * B, Ap * Bp, rS) * sign
        assert lhs.close_to(rhs, rtol=1e-12)

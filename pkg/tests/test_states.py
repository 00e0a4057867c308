import csv
import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from greenlab import algebra as al, geometry as geo, greenops as go, states as st


@pytest.fixture(scope="module")
def systems(grid):
    return {
        "scalar": go.build_scalar_kg(grid, 1.0),
        "oneform": go.build_oneform_kg(grid, 1.0),
        "proca": go.build_proca(grid, 1.0),
        "dirac": go.build_dirac_doubled(grid, 1.0),
    }


@pytest.fixture(scope="module")
def vacua(systems):
    return {k: st.vacuum_state(s) for k, s in systems.items()}


def section(grid, tag, rng):
    """Random test section with data in every channel."""
    f = geo.zeros(grid, tag)
    for c in range(geo.rank(tag)):
        f = f + geo.random_bump(grid, tag, rng, channel=c) * complex(rng.normal(), rng.normal())
    return f


def pair_scale(W, fs):
    return max(abs(W(a, b)) for a in fs for b in fs)


# -- vacuum invariants ------------------------------------------------------


@pytest.mark.parametrize("kind", ["scalar", "oneform", "proca", "dirac"])
def test_vacuum_commutation_invariant(systems, vacua, grid, kind):
    sys, W = systems[kind], vacua[kind].kernel
    r = np.random.default_rng(21)
    fs = [section(grid, sys.tag, r) for _ in range(4)]
    for f in fs:
        for h in fs:
            res, scale = st.ccr_residual(W, sys, f, h)
            assert res < 1e-6 * scale


def test_kernel_statistics(vacua):
    assert vacua["scalar"].statistics == al.BOSE
    assert vacua["dirac"].statistics == al.FERMI


@pytest.mark.parametrize("kind", ["scalar", "proca", "dirac"])
def test_vacuum_positivity(systems, vacua, grid, kind):
    sys, W = systems[kind], vacua[kind].kernel
    r = np.random.default_rng(22)
    for _ in range(20):
        f = section(grid, sys.tag, r)
        val = W(st.star_conj(sys, f), f)
        scale = pair_scale(W, [f])
        assert abs(val.imag) < 1e-10 * scale
        assert val.real >= -1e-8 * scale


def test_oneform_kg_vacuum_is_indefinite(systems, vacua, grid):
    # the Feynman-gauge auxiliary carries the indefinite metric diag(-1, 1)
    W = vacua["oneform"].kernel
    r = np.random.default_rng(23)
    vals = [W(f.conj(), f).real for f in (geo.random_bump(grid, "oneform", r, channel=0) for _ in range(3))]
    assert max(vals) < 0


def test_proca_vacuum_is_coclosed_in_both_slots(systems, vacua, grid):
    P, W = systems["proca"], vacua["proca"].kernel
    r = np.random.default_rng(24)
    for _ in range(3):
        h = section(grid, "oneform", r)
        for out in (W.apply_section(h),
                    geo.mode_synthesize(geo.ModeCoefficients(grid, "oneform", W.applyT(st.modes(h))))):
            d = geo.codifferential(out, P.omega[:, 0])
            assert d.sup() < 1e-6 * out.sup()


@pytest.mark.parametrize("kind", ["scalar", "proca"])
def test_pauli_jordan_kernel_matches_green_operators(systems, grid, kind):
    sys = systems[kind]
    E = st.pauli_jordan_kernel(sys)
    r = np.random.default_rng(25)
    f, h = section(grid, sys.tag, r), section(grid, sys.tag, r)
    assert abs(E(f, h) - sys.E(f, h)) < 1e-8 * abs(sys.E(f, h))


def test_transpose_kernel(vacua, grid, rng):
    W = vacua["scalar"].kernel
    f, h = section(grid, "scalar", rng), section(grid, "scalar", rng)
    assert abs(st.TransposeKernel(W)(f, h) - W(h, f)) < 1e-14 * abs(W(h, f))


def test_no_stationary_vacuum_for_coupled_system(grid):
    base = go.direct_sum(go.build_scalar_kg(grid, 1.0), go.build_scalar_kg(grid, 1.5))
    T = go.with_potential(base, go.Potential(0.5, lambda t: np.exp(-np.asarray(t) ** 2) * 0,
                                             np.array([[0.0, 1.0], [1.0, 0.0]]), (-1, 1)))
    with pytest.raises(st.StateError):
        st.vacuum_state(T)


def test_kernel_rejects_foreign_sections(vacua, grid, rng):
    with pytest.raises(geo.GridError):
        vacua["scalar"].kernel(geo.random_bump(grid, "oneform", rng), geo.random_bump(grid, "oneform", rng))


def test_stationary_block_matches_impulse_response(vacua):
    W = vacua["proca"].kernel
    direct = W.mode_block(5, stride=64)
    generic = st.TwoPointKernel.mode_block(W, 5, stride=64)
    assert np.abs(direct - generic).max() < 1e-10 * np.abs(direct).max()


def test_kernel_csv_rows(vacua):
    rows = st.kernel_csv_rows(vacua["scalar"].kernel, [0, 3], stride=128)
    buf = io.StringIO()
    csv.writer(buf).writerows(rows)
    assert len(rows) == 2 * 4 * 4
    assert rows[0][:3] == (0, 0, 0) and rows[0][5] == "00"


# -- Wick evaluation --------------------------------------------------------


def test_four_point_matches_pairing_formula(vacua, grid, rng):
    w = vacua["scalar"]
    fs = [section(grid, "scalar", rng) for _ in range(4)]
    W = lambda i, j: w.kernel(fs[i], fs[j])
    expect = W(0, 1) * W(2, 3) + W(0, 2) * W(1, 3) + W(0, 3) * W(1, 2)
    reg = al.SolutionRegistry(w.system)
    x = [al.generator(reg, f) for f in fs]
    assert abs(w.npoint(fs) - expect) < 1e-12 * abs(expect)
    assert abs(w.evaluate(x[0] * x[1] * x[2] * x[3]) - expect) < 1e-10 * abs(expect)


def test_fermionic_four_point_signs(vacua, grid, rng):
    w = vacua["dirac"]
    fs = [section(grid, "dirac", rng) for _ in range(4)]
    W = lambda i, j: w.kernel(fs[i], fs[j])
    expect = W(0, 1) * W(2, 3) - W(0, 2) * W(1, 3) + W(0, 3) * W(1, 2)
    assert abs(w.npoint(fs) - expect) < 1e-12 * abs(expect)


@pytest.mark.parametrize("kind", ["scalar", "dirac"])
def test_evaluate_matches_npoint(vacua, grid, kind):
    w = vacua[kind]
    r = np.random.default_rng(26)
    fs = [section(grid, w.system.tag, r) for _ in range(6)]
    reg = al.SolutionRegistry(w.system)
    x = [al.generator(reg, f) for f in fs]
    for n in range(0, 7):
        a = al.AlgebraElement.unit(reg)
        for k in range(n):
            a = a * x[k]
        ref = w.npoint(fs[:n])
        scale = max(abs(ref), pair_scale(w.kernel, fs[:n]) ** (n / 2) if n else 1.0)
        assert abs(w.evaluate(a) - ref) < 1e-10 * scale


def test_state_is_normalised_and_respects_ccr(vacua, grid, rng):
    w = vacua["scalar"]
    reg = al.SolutionRegistry(w.system)
    f, h = section(grid, "scalar", rng), section(grid, "scalar", rng)
    a, b = al.generator(reg, f), al.generator(reg, h)
    assert w.evaluate(al.AlgebraElement.unit(reg)) == 1
    assert abs(w.evaluate(a * b - b * a) - 1j * w.system.E(f, h)) < 1e-10 * abs(w.system.E(f, h))


def test_statistics_mismatch(vacua, grid, rng):
    reg = al.SolutionRegistry(vacua["scalar"].system)
    x = al.generator(reg, section(grid, "scalar", rng))
    with pytest.raises(st.StateError):
        vacua["dirac"].evaluate(x)


@settings(max_examples=20, deadline=None)
@given(hst.integers(0, 6), hst.booleans(), hst.integers(0, 2 ** 31))
def test_wick_sum_matches_brute_force(n, fermi, seed):
    # independent oracle: sum over all permutations, keep those that list pairs (i<j) in increasing first index
    r = np.random.default_rng(seed)
    M = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
    total = 0j
    if n % 2 == 0:
        for perm in itertools.permutations(range(n)):
            pairs = [perm[2 * i: 2 * i + 2] for i in range(n // 2)]
            if all(a < b for a, b in pairs) and all(pairs[i][0] < pairs[i + 1][0] for i in range(len(pairs) - 1)):
                inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
                v = complex((-1) ** inv if fermi else 1)
                for a, b in pairs:
                    v *= M[a, b]
                total += v
    if n == 0:
        total = 1.0
    assert abs(st.wick_sum(M, fermi) - total) < 1e-10 * max(1.0, abs(total))
    count = sum(1 for _ in st.perfect_matchings(n)) if n % 2 == 0 else 0
    assert count == (math.prod(range(n - 1, 0, -2)) if n % 2 == 0 else 0)


# -- truncated functions ----------------------------------------------------


@pytest.mark.parametrize("kind", ["scalar", "dirac"])
def test_truncated_functions_of_quasifree_state(vacua, grid, kind):
    w = vacua[kind]
    r = np.random.default_rng(27)
    fs = [section(grid, w.system.tag, r) for _ in range(6)]
    scale = pair_scale(w.kernel, fs)
    table = st.truncated_table(w, fs)
    for n in (1, 3, 4, 5, 6):
        assert abs(table[tuple(range(n))]) < 1e-10 * scale ** (n / 2)
    assert abs(table[(0, 1)] - w.kernel(fs[0], fs[1])) < 1e-14 * scale
    for n in (2, 4, 6):
        rebuilt = st.moments_from_truncated(table, n, w.statistics == st.FERMI)
        direct = w.npoint(fs[:n])
        assert abs(rebuilt - direct) < 1e-12 * max(abs(direct), scale ** (n / 2))


def test_truncated_four_point_of_excited_state_is_not_zero(vacua, grid, rng):
    w = vacua["scalar"]
    h = section(grid, "scalar", rng)
    ex = st.excited_state(w, h)
    fs = [h.conj(), h, h.conj(), h]
    scale = pair_scale(w.kernel, fs)
    assert abs(st.truncated_npoint(ex, fs)) > 1e-3 * scale ** 2


# -- excited states ---------------------------------------------------------


@pytest.mark.parametrize("kind", ["scalar", "dirac"])
def test_excited_state(vacua, grid, kind):
    w = vacua[kind]
    sys = w.system
    r = np.random.default_rng(28)
    h = section(grid, sys.tag, r)
    ex = st.excited_state(w, h)
    reg = al.SolutionRegistry(sys)
    assert abs(ex.evaluate(al.AlgebraElement.unit(reg)) - 1) < 1e-12
    fs = [section(grid, sys.tag, r) for _ in range(3)]
    Wh = ex.two_point
    hb = st.star_conj(sys, h)
    Wv = w.kernel
    nrm = Wv(hb, h)
    sign = -1 if kind == "dirac" else 1
    for f in fs:
        for g in fs:
            # low-rank Wick oracle written from vacuum pairings only
            expect = Wv(f, g) + (Wv(hb, f) * Wv(g, h) + sign * Wv(hb, g) * Wv(f, h)) / nrm
            assert abs(Wh(f, g) - expect) < 1e-10 * pair_scale(Wv, fs + [h])
            assert abs(ex.npoint([f, g]) - expect) < 1e-10 * pair_scale(Wv, fs + [h])
            res, scale = st.ccr_residual(Wh, sys, f, g)
            assert res < 1e-6 * scale
        assert Wh(st.star_conj(sys, f), f).real > 0


def test_excitation_with_zero_norm_is_rejected(vacua, grid):
    with pytest.raises(st.StateError):
        st.excited_state(vacua["scalar"], geo.zeros(grid, "scalar"))


# -- Proca / FP -------------------------------------------------------------


def test_fp_bisolution(systems, vacua, grid):
    m = 1.0
    K = systems["oneform"]
    H = st.proca_fp_bisolution(vacua["proca"].kernel, vacua["scalar"].kernel, m)
    Wp = vacua["proca"].kernel
    r = np.random.default_rng(29)
    fs = [section(grid, "oneform", r) for _ in range(3)]
    scale = pair_scale(Wp, fs)
    for f in fs:
        for g in fs:
            assert abs(H(K.apply(f), g)) < 1e-5 * scale
            assert abs(H(f, K.apply(g))) < 1e-5 * scale
            assert abs(H(f, g) - H(g, f) - 1j * K.E(f, g)) < 1e-5 * scale
            Dg = g - geo.exterior_d(geo.codifferential(g)) * (1 / m ** 2)
            assert abs(H(f, Dg) - Wp(f, g)) < 1e-5 * scale


def test_fp_rejects_wrong_bundles(vacua):
    with pytest.raises(st.StateError):
        st.proca_fp_bisolution(vacua["scalar"].kernel, vacua["scalar"].kernel, 1.0)
    with pytest.raises(st.StateError):
        st.proca_fp_bisolution(vacua["proca"].kernel, vacua["scalar"].kernel, 0.0)


# -- tensor products and doubling -------------------------------------------


def test_tensor_state_and_partial_trace(grid, rng):
    P, Q = go.build_scalar_kg(grid, 1.0), go.build_scalar_kg(grid, 1.5)
    w, s = st.vacuum_state(P), st.vacuum_state(Q)
    ts = st.tensor_state(w, s)
    f, h = section(grid, "scalar", rng), section(grid, "scalar", rng)
    assert st.partial_trace(ts, "P").kernel(f, h) == w.kernel(f, h)
    assert st.partial_trace(ts, "Q").kernel(f, h) == s.kernel(f, h)
    z = geo.zeros(grid, "scalar")
    assert ts.kernel(geo.direct_sum(f, z), geo.direct_sum(z, h)) == 0
    a, b = geo.direct_sum(f, h), geo.direct_sum(h, f)
    res, scale = st.ccr_residual(ts.kernel, ts.system, a, b)
    assert res < 1e-6 * scale


def test_partial_trace_needs_direct_sum(vacua):
    with pytest.raises(st.StateError):
        st.partial_trace(vacua["scalar"], "P")


def test_complex_doubling(vacua, systems, grid, rng):
    cd = st.complex_double(vacua["scalar"])
    S = systems["scalar"]
    fs = [section(grid, "scalar", rng) for _ in range(3)]
    scale = pair_scale(vacua["scalar"].kernel, fs)
    for f in fs:
        for h in fs:
            assert abs(cd.W_phiphi(f, h)) < 1e-12 * scale
            assert abs(cd.W_starstar(f, h)) < 1e-12 * scale
            comm = cd.W_phistar(f, h) - cd.W_starphi(h, f)
            assert abs(comm - 1j * S.E(f, h)) < 1e-6 * scale


def test_complex_doubling_is_bosonic_only(vacua):
    with pytest.raises(st.StateError):
        st.complex_double(vacua["dirac"])

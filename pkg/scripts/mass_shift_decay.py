"""Smoothness-probe exponent of W_m - W_m' for a range of m'.

Vacua of different masses solve different equations, so their difference
is only finitely smooth: the per-mode amplitude falls off like
(m'^2 - m^2)/n^2, i.e. windowed content ~ n^-4 for every m' != m.  Compare
with an excited state of the same vacuum, whose difference is smooth.
"""
import numpy as np

from greenlab import geometry as geo, greenops as go, microlocal as ml, states as st

grid = geo.make_grid(2 * np.pi, 8.0, 64, 512)
W = st.vacuum_kernel(go.build_scalar_kg(grid, 1.0))
print(f"{'m_prime':>8} {'exponent':>9} {'content@16':>11} {'content@32':>11} {'pass':>5}")
for mp in (1.01, 1.05, 1.1, 1.3, 2.0):
    rep = ml.smoothness_probe(W - st.vacuum_kernel(go.build_scalar_kg(grid, mp)), reference=W)
    print(f"{mp:8.2f} {rep.exponent:9.2f} {rep.content[16]:11.3e} {rep.content[32]:11.3e} {str(rep.passed):>5}")

S = go.build_scalar_kg(grid, 1.0)
ex = st.excited_state(st.QuasifreeState(W, S), geo.random_bump(grid, "scalar", np.random.default_rng(1)))
rep = ml.smoothness_probe(W - ex.two_point, reference=W)
print(f"excited state of the same vacuum: exponent {rep.exponent} ({rep.note or 'resolved'}) pass={rep.passed}")

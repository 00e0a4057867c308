"""System-probe coupling, scattering morphisms and nonselective measurement updates.

The coupled operator is T = (P (+) Q) + lam chi(t) C with C swapping the two
blocks channel by channel.  chi is spatially homogeneous, so the coupling
zone U = supp chi x S^1 and its causal past J^-(U) = {t <= t_U} are slabs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import geometry as geo
from . import greenops as go
from . import microlocal as ml
from . import states as st
from .geometry import Section, SupportError

# time cells kept free between the coupling support and the ends of the grid
COUPLING_MARGIN_CELLS = 12


def smooth_step(x):
    """0 for x <= 0, 1 for x >= 1, C-infinity in between."""
    x = np.asarray(x, dtype=float)
    a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def chi_profile(name: str = "bump3", support: Tuple[float, float] = (-1.0, 1.0), ramp: float = 1.0):
    """Temporal coupling profile with peak value 1 and compact support.

    ``bump3``: exp(3 - 3/(1 - s^2)); ``bump``: exp(1 - 1/(1 - s^2));
    ``plateau``: smooth steps of width ``ramp`` at both ends.
    """
    a, b = map(float, support)
    if not b > a:
        raise ValueError("empty coupling support")
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    if name in ("bump", "bump3"):
        k = 3.0 if name == "bump3" else 1.0

        def chi(t):
            s = (np.asarray(t, dtype=float) - c) / h
            out = np.zeros_like(s)
            inside = np.abs(s) < 1
            out[inside] = np.exp(k - k / (1 - s[inside] ** 2))
            return out
    elif name == "plateau":
        if not 0 < ramp <= h:
            raise ValueError("ramp must lie in (0, half the support]")

        def chi(t):
            t = np.asarray(t, dtype=float)
            return smooth_step((t - a) / ramp) * smooth_step((b - t) / ramp)
    else:
        raise ValueError(f"unknown coupling profile {name!r}")
    return chi


@dataclass
class CoupledSystem:
    base: go.GreenSystem
    lam: float
    chi: object
    support: Tuple[float, float]
    T: go.GreenSystem
    zone: Tuple[float, float]
    profile_name: str = "bump3"

    @property
    def parts(self):
        return self.base.parts

    @property
    def grid(self) -> geo.CylinderGrid:
        return self.base.grid

    def coupling(self, f: Section) -> Section:
        """(T - (P (+) Q)) f = lam chi(t) C f."""
        V = self.T.potential(self.grid.t)  # (t, c, c)
        return f.with_values(np.einsum("tij,txj->txi", V, f.values))

    def with_zone(self, zone: Tuple[float, float]) -> "CoupledSystem":
        """Same operator, larger declared coupling zone."""
        if zone[0] > self.support[0] or zone[1] < self.support[1]:
            raise SupportError("declared zone must contain supp chi")
        return CoupledSystem(self.base, self.lam, self.chi, self.support, self.T, tuple(zone),
                             self.profile_name)


def build_coupled(sysP: go.GreenSystem, sysQ: go.GreenSystem, lam: float = 0.5, chi="bump3",
                  support: Tuple[float, float] = (-1.0, 1.0), ramp: float = 1.0) -> CoupledSystem:
    if sysP.grid != sysQ.grid:
        raise geo.GridError("systems live on different grids")
    if sysP.channels != sysQ.channels:
        raise ValueError("the block coupling needs equal channel counts")
    grid = sysP.grid
    a, b = grid.margin(COUPLING_MARGIN_CELLS)
    if not (a < support[0] < support[1] < b):
        raise SupportError(f"coupling support {support} is not inside [{a:.3f}, {b:.3f}]")
    name = chi if isinstance(chi, str) else "custom"
    prof = chi_profile(chi, support, ramp) if isinstance(chi, str) else chi
    base = go.direct_sum(sysP, sysQ)
    c = sysP.channels
    C = np.zeros((2 * c, 2 * c))
    C[:c, c:] = np.eye(c)
    C[c:, :c] = np.eye(c)
    T = go.with_potential(base, go.Potential(float(lam), prof, C, tuple(support)))
    return CoupledSystem(base, float(lam), prof, tuple(support), T, tuple(support), name)


# ---------------------------------------------------------------------------
# scattering


class ScatteringData:
    """theta f = f - (T - P (+) Q) E_T^- f on sections supported after the coupling zone."""

    def __init__(self, cs: CoupledSystem):
        self.cs = cs

    def check_admissible(self, f: Section):
        self.cs.T.check_source(f)
        lo, _ = f.time_support()
        if lo <= self.cs.zone[1]:
            raise SupportError(
                f"section starts at t = {lo:.4f}, inside the causal past of the coupling zone (t <= {self.cs.zone[1]:.4f})")

    def apply(self, f: Section) -> Section:
        self.check_admissible(f)
        if self.cs.lam == 0:
            return f
        return f - self.cs.coupling(self.cs.T.advanced(f))

    def apply_transpose(self, y: Section) -> Section:
        """theta^T y = y - E_T^+ (V y), so <theta f, y> = <f, theta^T y> for admissible f."""
        if self.cs.lam == 0:
            return y
        return y - self.cs.T.retarded(self.cs.coupling(y))


def scattering_apply(sd, f: Section) -> Section:
    if isinstance(sd, CoupledSystem):
        sd = ScatteringData(sd)
    return sd.apply(f)


# ---------------------------------------------------------------------------
# nonselective update


def post_coupling_window(cs: CoupledSystem, cells: int = 8) -> ml.TimeWindow:
    """Largest symmetric window between the coupling zone and the end of the grid."""
    lo = cs.zone[1] + 0.5
    hi = cs.grid.margin(cells)[1]
    return ml.TimeWindow(0.5 * (lo + hi), 0.5 * (hi - lo))


class UpdateKernel(st.TwoPointKernel):
    """W^ns(f, h) = W_{omega (x) sigma}(theta(f (+) 0), theta(h (+) 0)) for f, h after the coupling."""

    def __init__(self, omega: st.QuasifreeState, sigma: st.QuasifreeState, sd: ScatteringData):
        P = sd.cs.parts[0]
        super().__init__(P.grid, P.tag, omega.statistics)
        self.sd = sd
        self.product = st.BlockKernel(omega.kernel, sigma.kernel)
        self.sum_tag = sd.cs.base.tag
        self.n1 = P.channels
        self.provenance = "nonselective-update"
        self.post_window = post_coupling_window(sd.cs)

    def _lift(self, hm: np.ndarray) -> Section:
        h = geo.mode_synthesize(geo.ModeCoefficients(self.grid, self.tag, hm))
        return geo.direct_sum(h, geo.zeros(self.grid, self.sd.cs.parts[1].tag))

    def _run(self, hm, method):
        x = self.sd.apply(self._lift(hm))
        y = getattr(self.product, method)(st.modes(x))
        ys = geo.mode_synthesize(geo.ModeCoefficients(self.grid, self.sum_tag, y))
        out = st.modes(self.sd.apply_transpose(ys))
        return out[..., : self.n1]

    def apply(self, hm):
        return self._run(hm, "apply")

    def applyT(self, hm):
        return self._run(hm, "applyT")

    def __call__(self, f: Section, h: Section) -> complex:
        self._check(f)
        self._check(h)
        a = self.sd.apply(geo.direct_sum(f, geo.zeros(self.grid, self.sd.cs.parts[1].tag)))
        b = self.sd.apply(geo.direct_sum(h, geo.zeros(self.grid, self.sd.cs.parts[1].tag)))
        return self.product(a, b)

    def mode_block(self, n: int, stride: int = 8) -> np.ndarray:
        """Blocks over the post-coupling subwindow only."""
        g = self.grid
        w = self.post_window
        idx = np.where((g.t > w.center - w.half_width) & (g.t < w.center + w.half_width))[0][::stride]
        c = geo.rank(self.tag)
        p = n + g.N
        out = np.zeros((len(idx), len(idx), c, c), dtype=complex)
        for jj, j in enumerate(idx):
            for b in range(c):
                hm = np.zeros((g.n_time, g.n_x, c), dtype=complex)
                hm[j, p, b] = 1.0 / g.time_weights[j]
                out[:, jj, :, b] = self.apply(hm)[idx, p, :]
        return out


def nonselective_update(omega: st.QuasifreeState, sigma: st.QuasifreeState, sd) -> UpdateKernel:
    if isinstance(sd, CoupledSystem):
        sd = ScatteringData(sd)
    if omega.kernel.grid != sigma.kernel.grid:
        raise geo.GridError("states live on different grids")
    return UpdateKernel(omega, sigma, sd)


def hadamard_update_check(omega: st.QuasifreeState, sigma: st.QuasifreeState, sd,
                          cones: ml.ConeSpec = ml.ConeSpec(), window: Optional[ml.TimeWindow] = None,
                          fit_range=ml.DEFAULT_FIT, threshold: float = ml.DEFAULT_THRESHOLD) -> dict:
    """Update the state, then run the one-sided proxy and the smoothness probe against omega."""
    W = nonselective_update(omega, sigma, sd)
    window = window or W.post_window
    proxy = ml.hadamard_proxy(W, cones, window, fit_range, threshold)
    smooth = ml.smoothness_probe(W - omega.kernel, window, fit_range, threshold, reference=omega.kernel)
    return {"kernel": W, "proxy": proxy, "smoothness": smooth,
            "pass": bool(proxy.passed and smooth.passed)}

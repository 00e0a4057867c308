"""Frequency-content proxies for the Hadamard condition.

A kernel is probed by a comb in its second slot, q_n(t') = w(t') 2 cos(omega_n t')
in every mode at once, and the first-slot output is windowed in t and Fourier
transformed per mode.  Spectral mass is split by the sign of the temporal
frequency.  For the cone convention see ``ConeSpec``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import geometry as geo

DEFAULT_FIT = (16, 56)
DEFAULT_THRESHOLD = 8.0
# content fractions below these levels count as numerically zero
DEFAULT_FLOOR = 1e-26
# squared accuracy of the Green operators (1e-6), relative to the reference content
SMOOTH_FLOOR = 1e-12


class MicrolocalError(ValueError):
    pass


@dataclass(frozen=True)
class ConeSpec:
    """V+ / V- as the sign of first-slot temporal frequency (numpy FFT convention).

    ``plus_sign = -1`` means first-slot content at negative numpy frequency,
    i.e. time dependence exp(-i omega t), is the allowed (V+) direction.  The
    value is fixed by calibration against the closed-form scalar vacuum.
    """

    plus_label: str = "V+"
    minus_label: str = "V-"
    plus_sign: int = -1

    def __post_init__(self):
        if self.plus_sign not in (-1, 1):
            raise MicrolocalError("plus_sign must be +1 or -1")

    def swapped(self) -> "ConeSpec":
        return ConeSpec(self.minus_label, self.plus_label, -self.plus_sign)


@dataclass(frozen=True)
class TimeWindow:
    center: float = 0.0
    half_width: float = 4.0

    def profile(self, t: np.ndarray) -> np.ndarray:
        return geo.bump_profile((np.asarray(t) - self.center) / self.half_width)

    def check(self, grid: geo.CylinderGrid, cells: int = 4):
        a, b = grid.margin(cells)
        if self.half_width <= 0:
            raise MicrolocalError("window width must be positive")
        if self.center - self.half_width < a or self.center + self.half_width > b:
            raise MicrolocalError(
                f"window [{self.center - self.half_width:.3f}, {self.center + self.half_width:.3f}] "
                f"touches the boundary strip outside [{a:.3f}, {b:.3f}]")


def default_window(grid: geo.CylinderGrid) -> TimeWindow:
    """Bump of half-width T/2 centred at 0."""
    return TimeWindow(0.0, grid.T / 2.0)


@dataclass
class DecayReport:
    test: str
    modes: np.ndarray
    content: np.ndarray
    exponent: float
    threshold: float
    passed: bool
    fit_range: Tuple[int, int]
    n_fit: int
    positive: np.ndarray = field(repr=False, default=None)
    negative: np.ndarray = field(repr=False, default=None)
    note: str = ""

    def to_dict(self) -> dict:
        table = []
        for i, n in enumerate(self.modes):
            row = {"n": int(n), "content": float(self.content[i])}
            if self.positive is not None:
                row["positive"] = float(self.positive[i])
                row["negative"] = float(self.negative[i])
            table.append(row)
        return {"test": self.test, "exponent": float(self.exponent), "threshold": float(self.threshold),
                "pass": bool(self.passed), "fit_range": list(self.fit_range), "n_fit": int(self.n_fit),
                "note": self.note, "per_mode": table}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "content", "positive", "negative"])
            for i, n in enumerate(self.modes):
                pos = "" if self.positive is None else repr(float(self.positive[i]))
                neg = "" if self.negative is None else repr(float(self.negative[i]))
                w.writerow([int(n), repr(float(self.content[i])), pos, neg])


# ---------------------------------------------------------------------------


def comb_probe(grid: geo.CylinderGrid, tag, window: TimeWindow, channel: int, m_ref: float = 1.0) -> np.ndarray:
    """Mode data w(t) 2 cos(omega_n t) in every mode of one channel."""
    c = geo.rank(tag)
    om = grid.omega(m_ref)
    q = np.zeros((grid.n_time, grid.n_x, c), dtype=complex)
    q[:, :, channel] = window.profile(grid.t)[:, None] * 2 * np.cos(np.outer(grid.t, om))
    return q


def frequency_split(W, window: Optional[TimeWindow] = None, m_ref: float = 1.0, pad: int = 4):
    """Per-mode (positive, negative) temporal-frequency spectral mass of the first slot.

    Returns (modes, positive, negative); signs follow numpy's FFT convention.
    """
    if not hasattr(W, "apply"):
        raise MicrolocalError("kernel has no per-mode action")
    grid = W.grid
    window = window or default_window(grid)
    window.check(grid)
    wt = window.profile(grid.t)
    nfft = pad * grid.n_time
    freqs = np.fft.fftfreq(nfft, d=grid.dt)
    pos = np.zeros(grid.n_x)
    neg = np.zeros(grid.n_x)
    for b in range(geo.rank(W.tag)):
        v = W.apply(comb_probe(grid, W.tag, window, b, m_ref))
        power = np.abs(np.fft.fft(wt[:, None, None] * v, n=nfft, axis=0)) ** 2
        power = power.sum(axis=2)  # over output channels
        pos += power[freqs > 0].sum(axis=0) + 0.5 * power[freqs == 0].sum(axis=0)
        neg += power[freqs < 0].sum(axis=0) + 0.5 * power[freqs == 0].sum(axis=0)
    return grid.modes.copy(), pos, neg


def _fold(modes, values):
    """Average over +n and -n, returning values for n = 0..N."""
    N = int(modes.max())
    out = np.zeros(N + 1)
    for n in range(N + 1):
        out[n] = 0.5 * (values[modes == n][0] + values[modes == -n][0])
    return out


def fit_exponent(n: np.ndarray, c: np.ndarray, fit_range=DEFAULT_FIT, floor=0.0,
                 min_modes: int = 8) -> Tuple[float, int, str]:
    """Least-squares slope p of log c vs log n (c ~ n^-p) over the fit range.

    ``floor`` (scalar or per-mode) marks content that is numerically zero.  The
    fit stops at the first such mode; if fewer than ``min_modes`` remain, the
    decay from the first mode down to the floor is reported as a lower bound.
    """
    n0, n1 = fit_range
    if n1 - n0 + 1 < min_modes:
        raise MicrolocalError(f"fit range {fit_range} has fewer than {min_modes} modes")
    if n0 < 1 or n1 > n.max():
        raise MicrolocalError(f"fit range {fit_range} is outside the resolved modes")
    floor = np.broadcast_to(np.asarray(floor, dtype=float), c.shape)
    sel = (n >= n0) & (n <= n1)
    nn, cc, ff = n[sel].astype(float), c[sel], floor[sel]
    ok = cc > ff
    stop = int(np.argmin(ok)) if not ok.all() else len(nn)
    if stop >= min_modes:
        slope = np.polyfit(np.log(nn[:stop]), np.log(cc[:stop]), 1)[0]
        note = "" if stop == len(nn) else "fit stops where content reaches numerical zero"
        return float(-slope), stop, note
    if stop == 0:
        return np.inf, 0, "content at numerical zero over the whole range"
    p = np.log(cc[0] / max(ff[stop], 1e-300)) / np.log(nn[stop] / nn[0])
    return float(p), stop + 1, "lower bound: content falls to numerical zero"


def hadamard_proxy(W, cones: ConeSpec = ConeSpec(), window: Optional[TimeWindow] = None,
                   fit_range=DEFAULT_FIT, threshold: float = DEFAULT_THRESHOLD,
                   m_ref: float = 1.0, floor: float = DEFAULT_FLOOR) -> DecayReport:
    """Wrong-cone fraction c_n = wrong / (right + wrong) and its decay exponent."""
    modes, pos, neg = frequency_split(W, window, m_ref)
    right, wrong = (neg, pos) if cones.plus_sign < 0 else (pos, neg)
    total = right + wrong
    c = np.where(total > 0, wrong / np.where(total > 0, total, 1.0), 0.0)
    n = np.arange(int(modes.max()) + 1)
    cf = _fold(modes, c)
    p, used, note = fit_exponent(n, cf, fit_range, floor)
    return DecayReport("hadamard_proxy", n, cf, p, threshold, bool(p >= threshold), tuple(fit_range),
                       used, _fold(modes, pos), _fold(modes, neg), note)


def smoothness_probe(dW, window: Optional[TimeWindow] = None, fit_range=DEFAULT_FIT,
                     threshold: float = DEFAULT_THRESHOLD, reference=None, m_ref: float = 1.0,
                     floor: float = SMOOTH_FLOOR) -> DecayReport:
    """Decay exponent of the total (both-sign) windowed content of a kernel difference.

    ``reference`` (typically the vacuum) sets the scale of the numerical floor;
    without it the floor is relative to the largest content of ``dW``.  The
    default floor is the squared Green-operator accuracy: content below it is
    not resolved, and a difference that is unresolved over the whole fit range
    passes with exponent inf and a note saying so.
    """
    modes, pos, neg = frequency_split(dW, window, m_ref)
    n = np.arange(int(modes.max()) + 1)
    tot = _fold(modes, pos + neg)
    if reference is not None:
        _, rp, rn = frequency_split(reference, window, m_ref)
        scale = _fold(modes, rp + rn)
    else:
        scale = np.full_like(tot, tot.max() if tot.max() > 0 else 1.0)
    p, used, note = fit_exponent(n, tot, fit_range, floor * scale)
    return DecayReport("smoothness_probe", n, tot, p, threshold, bool(p >= threshold), tuple(fit_range),
                       used, _fold(modes, pos), _fold(modes, neg), note)


def calibrate(kernel, window: Optional[TimeWindow] = None, fit_range=DEFAULT_FIT,
              threshold: float = DEFAULT_THRESHOLD, m_ref: float = 1.0) -> dict:
    """Fix the cone sign convention and baseline exponent on a known vacuum kernel."""
    modes, pos, neg = frequency_split(kernel, window, m_ref)
    sel = (np.abs(modes) >= fit_range[0]) & (np.abs(modes) <= fit_range[1])
    plus_sign = -1 if neg[sel].sum() > pos[sel].sum() else 1
    cones = ConeSpec(plus_sign=plus_sign)
    rep = hadamard_proxy(kernel, cones, window, fit_range, threshold, m_ref)
    w = window or default_window(kernel.grid)
    return {
        "plus_sign": plus_sign,
        "convention": "exp(-i omega t) in the first slot is V+" if plus_sign < 0
        else "exp(+i omega t) in the first slot is V+",
        "baseline_exponent": rep.exponent,
        "threshold": threshold,
        "fit_range": list(fit_range),
        "window": {"center": w.center, "half_width": w.half_width},
        "ratio_at_32": float(rep.content[32]) if len(rep.content) > 32 else None,
        "grid": kernel.grid.describe(),
        "pass": rep.passed,
    }

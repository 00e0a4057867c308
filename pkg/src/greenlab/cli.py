"""Command-line front end: ``greenlab <command> --config file.ini``.

Exit codes: 0 when every row of the report passes, 1 when an invariant fails,
2 for configuration or precondition errors.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import algebra as al
from . import geometry as geo
from . import greenops as go
from . import measurement as ms
from . import microlocal as ml
from . import states as st

log = logging.getLogger("greenlab")

KINDS = ("scalar", "oneform", "proca", "dirac", "coupled")
# test sections (width proportional to T) stop being resolved on shorter windows
MIN_T = 3.0

DEFAULTS: Dict[str, Dict[str, str]] = {
    "grid": {"L": "6.283185307179586", "T": "8.0", "N": "64", "n_time": "512"},
    "model": {"kind": "scalar", "mass": "1.0", "mass_q": "1.5"},
    "state": {"seed": "20240611", "n_sections": "10", "excitation": "true"},
    "microlocal": {"cone": "-1", "fit_lo": "16", "fit_hi": "56", "threshold": "8.0",
                   "window_center": "auto", "window_half_width": "auto", "compare_mass": "",
                   "calibration": ""},
    "measurement": {"lam": "0.5", "chi": "bump3", "chi_lo": "-1.0", "chi_hi": "1.0", "ramp": "1.0"},
    "output": {"dir": "greenlab-out"},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    L: float
    T: float
    N: int
    n_time: int
    kind: str
    mass: float
    mass_q: float
    seed: int
    n_sections: int
    excitation: bool
    cone: int
    fit_range: tuple
    threshold: float
    window: Optional[ml.TimeWindow]
    compare_mass: Optional[float]
    lam: float
    chi: str
    chi_support: tuple
    ramp: float
    out_dir: str
    corrupt: bool = False
    text: str = ""

    @property
    def grid(self) -> geo.CylinderGrid:
        return geo.make_grid(self.L, self.T, self.N, self.n_time)

    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:10]


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    if path is not None:
        user = configparser.ConfigParser()
        user.optionxform = str
        try:
            with open(path) as fh:
                user.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for sec in user.sections():
            if sec not in DEFAULTS:
                raise ConfigError(f"unknown section [{sec}]")
            for key in user[sec]:
                if key not in DEFAULTS[sec]:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]")
        if user.has_option("microlocal", "calibration"):
            _apply_calibration(cp, user.get("microlocal", "calibration"))
        for sec in user.sections():
            for key, val in user.items(sec):
                cp.set(sec, key, val)
    for (sec, key), val in (overrides or {}).items():
        cp.set(sec, key, str(val))
    try:
        cfg = _build(cp)
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def _apply_calibration(cp: configparser.ConfigParser, path: str):
    """Defaults from a calibration document; explicit config keys still win."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
        cp.set("microlocal", "cone", str(int(doc["plus_sign"])))
        cp.set("microlocal", "threshold", repr(float(doc["threshold"])))
        cp.set("microlocal", "fit_lo", str(int(doc["fit_range"][0])))
        cp.set("microlocal", "fit_hi", str(int(doc["fit_range"][1])))
    except (OSError, ValueError, KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"cannot use calibration document {path}: {exc}") from exc


def _build(cp: configparser.ConfigParser) -> ExperimentConfig:
    g, m, s, mi, me = (cp[k] for k in ("grid", "model", "state", "microlocal", "measurement"))
    kind = m["kind"]
    if kind not in KINDS:
        raise ConfigError(f"model.kind must be one of {KINDS}, got {kind!r}")
    T = float(g["T"])
    if T < MIN_T:
        raise ConfigError(f"grid.T = {T} is too small: test sections and their causal shadows need T >= {MIN_T}")
    fit = (int(mi["fit_lo"]), int(mi["fit_hi"]))
    if fit[1] - fit[0] + 1 < 8 or fit[1] > int(g["N"]):
        raise ConfigError(f"microlocal fit range {fit} needs >= 8 modes inside 1..N")
    window = None
    if mi["window_center"] != "auto" or mi["window_half_width"] != "auto":
        window = ml.TimeWindow(float(mi["window_center"]), float(mi["window_half_width"]))
    cone = int(mi["cone"])
    if cone not in (-1, 1):
        raise ConfigError("microlocal.cone must be -1 or 1")
    text = "\n".join(f"{sec}.{k}={v}" for sec in cp.sections() if sec != "output" for k, v in sorted(cp.items(sec)))
    cfg = ExperimentConfig(
        L=float(g["L"]), T=T, N=int(g["N"]), n_time=int(g["n_time"]), kind=kind,
        mass=float(m["mass"]), mass_q=float(m["mass_q"]), seed=int(s["seed"]),
        n_sections=int(s["n_sections"]), excitation=cp.getboolean("state", "excitation"),
        cone=cone, fit_range=fit, threshold=float(mi["threshold"]), window=window,
        compare_mass=float(mi["compare_mass"]) if mi["compare_mass"] else None,
        lam=float(me["lam"]), chi=me["chi"], chi_support=(float(me["chi_lo"]), float(me["chi_hi"])),
        ramp=float(me["ramp"]), out_dir=cp["output"]["dir"], text=text)
    grid = cfg.grid  # validates grid sizes
    if window is not None:
        window.check(grid)
    a, b = grid.margin(ms.COUPLING_MARGIN_CELLS)
    if not a < cfg.chi_support[0] < cfg.chi_support[1] < b - 1.0:
        raise ConfigError(f"coupling support {cfg.chi_support} needs room inside ({a:.3f}, {b - 1.0:.3f})")
    if cfg.mass <= 0 or cfg.mass_q <= 0:
        raise ConfigError("masses must be positive")
    if cfg.n_sections < 2:
        raise ConfigError("state.n_sections must be at least 2")
    return cfg


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    command: str
    cfg: ExperimentConfig
    rows: List[dict] = field(default_factory=list)
    tables: Dict[str, List[list]] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def row(self, name: str, value: float, tol: Optional[float], passed: bool, note: str = ""):
        self.rows.append({"name": name, "value": float(value), "tolerance": None if tol is None else float(tol),
                          "pass": bool(passed), "note": note})

    def below(self, name: str, value: float, tol: float, note: str = ""):
        self.row(name, value, tol, bool(value < tol), note)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)

    def write(self) -> str:
        os.makedirs(self.cfg.out_dir, exist_ok=True)
        stem = os.path.join(self.cfg.out_dir, f"{self.command}-{self.cfg.digest()}")
        doc = {"command": self.command, "config_hash": self.cfg.digest(), "pass": self.passed,
               "rows": self.rows, **self.extra}
        with open(stem + ".json", "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
        with open(stem + ".csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "value", "tolerance", "pass", "note"])
            for r in self.rows:
                w.writerow([r["name"], repr(r["value"]), "" if r["tolerance"] is None else repr(r["tolerance"]),
                            r["pass"], r["note"]])
        for name, rows in self.tables.items():
            with open(f"{stem}-{name}.csv", "w", newline="") as fh:
                csv.writer(fh).writerows(rows)
        return stem + ".json"


# ---------------------------------------------------------------------------
# shared builders


def build_system(cfg: ExperimentConfig, kind: Optional[str] = None):
    grid = cfg.grid
    kind = kind or cfg.kind
    if kind == "scalar":
        return go.build_scalar_kg(grid, cfg.mass)
    if kind == "oneform":
        return go.build_oneform_kg(grid, cfg.mass)
    if kind == "proca":
        return go.build_proca(grid, cfg.mass)
    if kind == "dirac":
        return go.build_dirac_doubled(grid, cfg.mass)
    return build_coupling(cfg).T


def build_coupling(cfg: ExperimentConfig, lam: Optional[float] = None) -> ms.CoupledSystem:
    grid = cfg.grid
    P, Q = go.build_scalar_kg(grid, cfg.mass), go.build_scalar_kg(grid, cfg.mass_q)
    return ms.build_coupled(P, Q, cfg.lam if lam is None else lam, cfg.chi, cfg.chi_support, cfg.ramp)


def test_sections(cfg: ExperimentConfig, tag, n: int, salt: int = 0, window=None) -> List[geo.Section]:
    """Seeded test sections with data in every channel."""
    rng = np.random.default_rng([cfg.seed, salt])
    out = []
    for _ in range(n):
        f = geo.zeros(cfg.grid, tag)
        for c in range(geo.rank(tag)):
            f = f + geo.random_bump(cfg.grid, tag, rng, channel=c, window=window) * complex(rng.normal(), rng.normal())
        out.append(f)
    return out


def _rel(a: geo.Section, b: geo.Section) -> float:
    return (a - b).sup() / b.sup()


def _pair_scale(K, fs):
    return max(abs(K(a, b)) for a in fs for b in fs)


# ---------------------------------------------------------------------------
# commands


def cmd_green_check(cfg: ExperimentConfig) -> Report:
    rep = Report("green-check", cfg)
    sys_ = build_system(cfg)
    grid = cfg.grid
    rng = np.random.default_rng([cfg.seed, 1])
    fs = [geo.random_bump(grid, sys_.tag, rng, channel=k % geo.rank(sys_.tag)) for k in range(cfg.n_sections)]
    for adv in (False, True):
        lab = "advanced" if adv else "retarded"
        pe = max(_rel(sys_.apply(sys_.green(f, adv)), f) for f in fs)
        ep = max(_rel(sys_.green(sys_.apply(f), adv), f) for f in fs)
        rep.below(f"G1_{lab}_P_after_E", pe, 1e-6)
        rep.below(f"G1_{lab}_E_after_P", ep, 1e-6)
    leak = 0.0
    for f in fs[:3]:
        lo, hi = f.time_support()
        up, down = sys_.retarded(f).values, sys_.advanced(f).values
        leak = max(leak, np.abs(up[grid.t < lo - grid.dt]).max(initial=0) / np.abs(up).max(),
                   np.abs(down[grid.t > hi + grid.dt]).max(initial=0) / np.abs(down).max())
    rep.below("G3_support_leakage", leak, 1e-8)
    anti = max(abs(sys_.E(a, b) + sys_.E(b, a)) / (abs(sys_.E(a, b)) + 1e-300) for a in fs[:3] for b in fs[:3] if a is not b)
    rep.below("pauli_jordan_antisymmetry", anti, 1e-6)
    if sys_.kind == "proca":
        w = sys_.omega[:, 0]
        us = [sys_.pauli_jordan(f) for f in fs]
        dE = max(geo.codifferential(u, w).sup() / u.sup() for u in us)
        dp = max(_rel(sys_.apply_Q(u), u) for u in us)
        rep.below("proca_delta_E", dE, 1e-6)
        rep.below("proca_D_projection", dp, 1e-6)
    return rep


def cmd_algebra_check(cfg: ExperimentConfig) -> Report:
    rep = Report("algebra-check", cfg)
    kind = "dirac" if cfg.kind == "dirac" else "scalar"
    sys_ = build_system(cfg, kind)
    reg = al.SolutionRegistry(sys_)
    fs = test_sections(cfg, sys_.tag, 5, salt=2)
    gens = [al.generator(reg, f) for f in fs]
    a, b = gens[0], gens[1]
    if reg.statistics == al.BOSE:
        c = al.commutator(a, b)
        exp = 1j * sys_.E(fs[0], fs[1])
        rep.below("Y4_commutator", abs(c.scalar_part() - exp) / abs(exp) + c.part(2).norm(), 1e-12)
    else:
        c = al.graded_commutator(a, b)
        exp = 1j * sys_.E(fs[0], sys_.fermionic.apply_R(fs[1]))
        rep.below("X4_anticommutator", abs(c.scalar_part() - exp) / abs(exp) + c.part(2).norm(), 1e-12)
    rep.below("Y2_star_generator", (al.star(a) - al.generator(reg, fs[0].conj())).norm() / a.norm(), 1e-12)
    v = al.generator(reg, sys_.apply(fs[0])).solution_vector().sup() / sys_.pauli_jordan(fs[0]).sup()
    rep.below("Y3_image_of_P", v, 1e-6)
    rng = np.random.default_rng([cfg.seed, 3])

    def rand_el():
        out = al.AlgebraElement.zero(reg)
        for _ in range(3):
            d = int(rng.integers(0, 4))
            idx = rng.choice(5, size=d, replace=reg.statistics == al.BOSE)
            out = out + al.AlgebraElement.monomial(reg, idx, complex(rng.normal(), rng.normal()))
        return out

    assoc, anti = 0.0, 0.0
    for _ in range(50):
        x, y, z = rand_el(), rand_el(), rand_el()
        l, r = (x * y) * z, x * (y * z)
        assoc = max(assoc, (l - r).norm() / max(l.norm(), r.norm(), 1e-300))
        s1, s2 = al.star(x * y), al.star(y) * al.star(x)
        anti = max(anti, (s1 - s2).norm() / max(s1.norm(), 1e-300))
    rep.below("associativity", assoc, 1e-12)
    rep.below("star_antihomomorphism", anti, 1e-12)
    return rep


def cmd_state_check(cfg: ExperimentConfig) -> Report:
    rep = Report("state-check", cfg)
    kind = cfg.kind if cfg.kind in ("scalar", "proca", "dirac") else "scalar"
    sys_ = build_system(cfg, kind)
    w = st.vacuum_state(sys_)
    fs = test_sections(cfg, sys_.tag, max(cfg.n_sections, 6), salt=4)
    ccr = max(st.ccr_residual(w.kernel, sys_, a, b)[0] / st.ccr_residual(w.kernel, sys_, a, b)[1]
              for a in fs[:4] for b in fs[:4])
    rep.below("ccr" if w.statistics == al.BOSE else "car", ccr, 1e-6)
    gs = test_sections(cfg, sys_.tag, 20, salt=9)
    G = np.array([[w.kernel(st.star_conj(sys_, a), b) for b in gs] for a in gs])
    ev = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
    worst = ev.min() / ev.max()
    rep.row("positivity_gram_min_eig", worst, -1e-8, worst >= -1e-8, "20 sections")
    scale = _pair_scale(w.kernel, fs[:6])
    table = st.truncated_table(w, fs[:6])
    rows = [["n", "abs_truncated", "relative"]]
    for n in range(1, 7):
        val = abs(table[tuple(range(n))])
        relv = val / scale ** (n / 2)
        rows.append([n, repr(val), repr(relv)])
        if n == 2:
            rep.row("truncated_2", relv, None, True, "two-point function, nonzero by design")
        else:
            rep.below(f"truncated_{n}", relv, 1e-10)
    rep.tables["truncated"] = rows
    rt = abs(st.moments_from_truncated(table, 4, w.statistics == al.FERMI) - w.npoint(fs[:4]))
    rep.below("recursion_roundtrip", rt / scale ** 2, 1e-12)
    reg = al.SolutionRegistry(sys_)
    x = [al.generator(reg, f) for f in fs[:6]]
    worst = 0.0
    a = al.AlgebraElement.unit(reg)
    for n in range(1, 7):
        a = a * x[n - 1]
        ref = w.npoint(fs[:n])
        worst = max(worst, abs(w.evaluate(a) - ref) / max(abs(ref), scale ** (n / 2)))
    rep.below("wick_equivalence", worst, 1e-10)
    if cfg.excitation:
        ex = st.excited_state(w, fs[-1])
        r = max(st.ccr_residual(ex.two_point, sys_, a_, b_)[0] / st.ccr_residual(ex.two_point, sys_, a_, b_)[1]
                for a_ in fs[:2] for b_ in fs[:2])
        rep.below("excited_ccr", r, 1e-6)
    return rep


def _cones(cfg):
    return ml.ConeSpec(plus_sign=cfg.cone)


def cmd_hadamard_probe(cfg: ExperimentConfig) -> Report:
    rep = Report("hadamard-probe", cfg)
    kind = cfg.kind if cfg.kind in ("scalar", "proca", "dirac") else "scalar"
    sys_ = build_system(cfg, kind)
    W = st.vacuum_kernel(sys_)
    E = st.pauli_jordan_kernel(sys_)
    target = W + E if cfg.corrupt else W
    kw = dict(window=cfg.window, fit_range=cfg.fit_range, threshold=cfg.threshold)
    main = ml.hadamard_proxy(target, _cones(cfg), **kw)
    rep.row("vacuum_proxy" + ("_corrupted" if cfg.corrupt else ""), main.exponent, cfg.threshold, main.passed)
    swapped = ml.hadamard_proxy(st.TransposeKernel(target), _cones(cfg).swapped(), **kw)
    rep.row("transpose_with_swapped_cones", swapped.exponent, cfg.threshold, swapped.passed == main.passed)
    e1 = ml.hadamard_proxy(E, _cones(cfg), **kw)
    e2 = ml.hadamard_proxy(E, _cones(cfg).swapped(), **kw)
    rep.row("E_rejected_both_cones", max(e1.exponent, e2.exponent), cfg.threshold,
            not e1.passed and not e2.passed, "negative control")
    tables = {"proxy": [["n", "content", "positive", "negative"]] + [
        [int(n), repr(float(c)), repr(float(p)), repr(float(q))]
        for n, c, p, q in zip(main.modes, main.content, main.positive, main.negative)]}
    if cfg.excitation:
        w = st.QuasifreeState(W, sys_)
        h = test_sections(cfg, sys_.tag, 1, salt=5)[0]
        ex = st.excited_state(w, h)
        sm = ml.smoothness_probe(W - ex.two_point, reference=W, **kw)
        rep.row("excited_difference_smooth", sm.exponent, cfg.threshold, sm.passed, sm.note)
    if cfg.compare_mass is not None:
        other = build_system_with_mass(cfg, kind, cfg.compare_mass)
        sm = ml.smoothness_probe(W - st.vacuum_kernel(other), reference=W, **kw)
        rep.row(f"mass_{cfg.compare_mass}_difference_smooth", sm.exponent, cfg.threshold, sm.passed, sm.note)
    rep.tables.update(tables)
    return rep


def build_system_with_mass(cfg, kind, m):
    sub = ExperimentConfig(**{**cfg.__dict__, "mass": m})
    return build_system(sub, kind)


def cmd_proca_equivalence(cfg: ExperimentConfig) -> Report:
    rep = Report("proca-equivalence", cfg)
    grid, m = cfg.grid, cfg.mass
    P, K, S = go.build_proca(grid, m), go.build_oneform_kg(grid, m), go.build_scalar_kg(grid, m)
    Wp, W0 = st.vacuum_kernel(P), st.vacuum_kernel(S)
    H = st.proca_fp_bisolution(Wp, W0, m)
    fs = test_sections(cfg, "oneform", 3, salt=6)
    scale = _pair_scale(Wp, fs)
    w = P.omega[:, 0]
    delta = 0.0
    for h in fs:
        out = Wp.apply_section(h)
        outT = geo.mode_synthesize(geo.ModeCoefficients(grid, "oneform", Wp.applyT(st.modes(h))))
        delta = max(delta, geo.codifferential(out, w).sup() / out.sup(), geo.codifferential(outT, w).sup() / outT.sup())
    rep.below("delta_annihilation", delta, 1e-6)
    bis = max(max(abs(H(K.apply(f), g)), abs(H(f, K.apply(g)))) for f in fs for g in fs) / scale
    rep.below("fp_bisolution", bis, 1e-5)
    anti = max(abs(H(f, g) - H(g, f) - 1j * K.E(f, g)) for f in fs for g in fs) / scale
    rep.below("fp_antisymmetric_part", anti, 1e-5)
    recon = max(abs(H(f, g - geo.exterior_d(geo.codifferential(g)) * (1 / m ** 2)) - Wp(f, g))
                for f in fs for g in fs) / scale
    rep.below("fp_reconstruction", recon, 1e-5)
    return rep


def cmd_measure_update(cfg: ExperimentConfig) -> Report:
    rep = Report("measure-update", cfg)
    grid = cfg.grid
    cs = build_coupling(cfg)
    sd = ms.ScatteringData(cs)
    P, Q = cs.parts
    w, s = st.vacuum_state(P), st.vacuum_state(Q)
    if cfg.corrupt:
        s = st.QuasifreeState(st.LinearKernel([(1.0, s.kernel), (0.5, st.pauli_jordan_kernel(Q))]), Q)
    post = (cs.zone[1] + 0.2, grid.margin(12)[1])
    W = ms.nonselective_update(w, s, sd)
    fs = test_sections(cfg, "scalar", 3, salt=7, window=post)
    if cfg.lam == 0:
        diff = max(abs(W(a, b) - w.kernel(a, b)) for a in fs for b in fs)
        rep.row("identity_at_zero_coupling", diff, 0.0, diff == 0.0)
        return rep
    gs = test_sections(cfg, cs.base.tag, 3, salt=8, window=post)
    tg = [sd.apply(g) for g in gs]
    Escale = max(abs(cs.base.E(a, b)) for a in gs for b in gs)
    symp = max(abs(cs.base.E(tg[i], tg[j]) - cs.base.E(gs[i], gs[j])) for i in range(3) for j in range(3))
    rep.below("theta_symplectic", symp / Escale, 1e-8)
    zero = ms.nonselective_update(st.vacuum_state(P), st.vacuum_state(Q), build_coupling(cfg, lam=0.0))
    rep.row("identity_at_zero_coupling", max(abs(zero(a, b) - w.kernel(a, b)) for a in fs for b in fs), 0.0,
            all(zero(a, b) == w.kernel(a, b) for a in fs for b in fs))
    scale = _pair_scale(W, fs)
    ccr = max(abs(W(a, b) - W(b, a) - 1j * P.E(a, b)) for a in fs for b in fs) / scale
    rep.below("update_ccr", ccr, 1e-6)
    pos = min(W(f.conj(), f).real for f in fs) / scale
    rep.row("update_positivity_min", pos, -1e-8, pos >= -1e-8)
    res = ms.hadamard_update_check(w, s, sd, _cones(cfg), cfg.window, cfg.fit_range, cfg.threshold)
    rep.row("update_proxy", res["proxy"].exponent, cfg.threshold, res["proxy"].passed)
    rep.row("update_smoothness", res["smoothness"].exponent, cfg.threshold, res["smoothness"].passed,
            res["smoothness"].note)
    return rep


def calibration_document(cfg: ExperimentConfig) -> dict:
    if cfg.kind != "scalar":
        raise ConfigError("calibration runs on the scalar kind")
    W = st.vacuum_kernel(go.build_scalar_kg(cfg.grid, cfg.mass))
    doc = ml.calibrate(W, cfg.window, cfg.fit_range, cfg.threshold, cfg.mass)
    g2 = geo.make_grid(cfg.L, cfg.T, cfg.N, 2 * cfg.n_time)
    doc2 = ml.calibrate(st.vacuum_kernel(go.build_scalar_kg(g2, cfg.mass)), cfg.window, cfg.fit_range,
                        cfg.threshold, cfg.mass)
    doc["cross_resolution"] = {"n_time": 2 * cfg.n_time, "plus_sign": doc2["plus_sign"],
                               "baseline_exponent": doc2["baseline_exponent"],
                               "consistent": doc2["plus_sign"] == doc["plus_sign"]}
    return doc


def cmd_calibrate(cfg: ExperimentConfig) -> Report:
    rep = Report("calibrate", cfg)
    doc = calibration_document(cfg)
    rep.row("vacuum_passes", doc["baseline_exponent"], cfg.threshold, doc["pass"])
    rep.row("convention_consistent_across_resolutions", doc["cross_resolution"]["plus_sign"], None,
            doc["cross_resolution"]["consistent"])
    rep.extra["calibration"] = doc
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "calibration.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    return rep


COMMANDS: Dict[str, Callable[[ExperimentConfig], Report]] = {
    "green-check": cmd_green_check,
    "algebra-check": cmd_algebra_check,
    "state-check": cmd_state_check,
    "hadamard-probe": cmd_hadamard_probe,
    "proca-equivalence": cmd_proca_equivalence,
    "measure-update": cmd_measure_update,
    "calibrate": cmd_calibrate,
}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="greenlab", description="Green-hyperbolic QFT desk laboratory")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI file; see README for keys")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("--seed", type=int, help="seed for random test sections")
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--corrupt", action="store_true", help="run the negative control")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {}
    if args.out:
        overrides[("output", "dir")] = args.out
    if args.seed is not None:
        overrides[("state", "seed")] = args.seed
    if args.kind:
        overrides[("model", "kind")] = args.kind
    try:
        cfg = load_config(args.config, overrides)
        cfg.corrupt = args.corrupt
        if args.corrupt:
            cfg.text += "\ncorrupt=true"
        report = COMMANDS[args.command](cfg)
    except (ConfigError, geo.SupportError, geo.GridError, ml.MicrolocalError) as exc:
        print(f"greenlab: error: {exc}", file=sys.stderr)
        return 2
    path = report.write()
    for r in report.rows:
        mark = "PASS" if r["pass"] else "FAIL"
        print(f"{mark}  {r['name']:<40s} {r['value']:.3e}")
    print(f"report: {path}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())

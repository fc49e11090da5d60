"""Scan drivers, distribution runs and the canned reproduction recipes.

Each driver returns plain data and has a matching ``write_*`` helper; the
command-line front end only parses arguments and calls these.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analytic
from .core import dump_state_csv
from .decoherence import SEModel
from .detection import DetectionWindow, apply_window, windowed_mean_energy
from .ensemble import InitialDistribution, atom_rng, evolve_atom, run_ensemble, sample_atom
from .errors import NumericalError, ParameterError
from .io import fingerprint, write_csv, write_json
from .units import DimensionlessParams, resonance_info

log = logging.getLogger(__name__)

SCAN_PARAMETERS = ("tau", "phi_d", "n_se_mean", "n_kicks")
FIGURES = ("fig1a", "fig1b", "fig2a", "fig2b")

FIG1_RANGE = (0.19 * math.pi, 6.31 * math.pi)
FIG1_STEPS = 100
FIG1_N_SE = 0.14
FIG2_N_SE = 0.1
RESONANT_TAUS = (2 * math.pi, 4 * math.pi, 6 * math.pi)


@dataclass(frozen=True)
class ScanSpec:
    parameter: str
    lo: float
    hi: float
    steps: int
    base: DimensionlessParams

    def __post_init__(self):
        if self.parameter not in SCAN_PARAMETERS:
            raise ParameterError("parameter", f"must be one of {SCAN_PARAMETERS}")
        if not self.lo < self.hi:
            raise ParameterError("lo", "scan range needs lo < hi")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ParameterError("steps", "must be an integer >= 2")

    def nodes(self) -> np.ndarray:
        values = np.linspace(self.lo, self.hi, int(self.steps))
        if self.parameter == "n_kicks":
            values = np.rint(values)
        return values


@dataclass
class ScanRow:
    index: int
    value: float
    E_true: float
    E_meas: float
    stderr: float
    seed: int
    status: str = "ok"


@dataclass
class ScanTable:
    spec: ScanSpec
    window: DetectionWindow
    rows: list
    recoil_law: str = "uniform"
    runtime: float = 0.0
    fingerprint: str = ""

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.rows])

    @property
    def E_meas(self) -> np.ndarray:
        return np.array([r.E_meas for r in self.rows])

    @property
    def E_true(self) -> np.ndarray:
        return np.array([r.E_true for r in self.rows])

    def nearest(self, value) -> int:
        return int(np.argmin(np.abs(self.values - value)))


def node_seed(master, index) -> int:
    """Seed for scan node ``index``: independent of other nodes, reproducible."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint32)[0])


def local_maxima(values) -> list:
    """Interior indices strictly above both neighbours, largest value first."""
    v = np.asarray(values)
    idx = [i for i in range(1, v.size - 1) if v[i] > v[i - 1] and v[i] > v[i + 1]]
    return sorted(idx, key=lambda i: -v[i])


def run_scan(spec: ScanSpec, window: Optional[DetectionWindow] = None, recoil_law="uniform",
             threads=1, dist_kind="gaussian") -> ScanTable:
    """Run one ensemble per scan node and record true and windowed energies.

    A node that fails numerically is kept as a row with its error in
    ``status`` and NaN energies; the scan carries on.
    """
    if window is None:
        window = DetectionWindow()
    t0 = time.perf_counter()
    rows = []
    for i, value in enumerate(spec.nodes()):
        seed = node_seed(spec.base.seed, i)
        value = int(value) if spec.parameter == "n_kicks" else float(value)
        try:
            params = spec.base.replace(**{spec.parameter: value, "seed": seed})
            dist = InitialDistribution(dist_kind, fwhm=params.initial_fwhm)
            res = run_ensemble(params, dist, SEModel(params.n_se_mean, recoil_law), threads=threads)
            e_meas = windowed_mean_energy(res.final_histogram, window)
            rows.append(ScanRow(i, value, float(res.energy[-1]), e_meas, float(res.energy_stderr[-1]), seed))
        except (NumericalError, ParameterError) as exc:
            log.warning("scan node %d (%s=%g) failed: %s", i, spec.parameter, value, exc)
            rows.append(ScanRow(i, value, math.nan, math.nan, math.nan, seed, f"error: {exc}"))
    fp = fingerprint({"scan": _scan_dict(spec), "window": _window_dict(window), "recoil_law": recoil_law})
    return ScanTable(spec, window, rows, recoil_law, time.perf_counter() - t0, fp)


def _scan_dict(spec):
    return {"parameter": spec.parameter, "lo": spec.lo, "hi": spec.hi, "steps": spec.steps,
            "base": spec.base.as_dict()}


def _window_dict(w):
    return {"p_min": w.p_min, "p_max": w.p_max, "threshold": w.threshold, "renormalize": w.renormalize}


def write_scan(table: ScanTable, out_dir, name="scan"):
    os.makedirs(out_dir, exist_ok=True)
    meta = {"fingerprint": table.fingerprint, "seed": table.spec.base.seed,
            "scan": _scan_dict(table.spec), "window": _window_dict(table.window)}
    write_csv(os.path.join(out_dir, f"{name}.csv"),
              [table.spec.parameter, "E_true", "E_meas", "stderr", "seed", "status"],
              [(r.value, r.E_true, r.E_meas, r.stderr, r.seed, r.status) for r in table.rows], meta)
    write_json(os.path.join(out_dir, f"{name}.json"), {**meta, "recoil_law": table.recoil_law,
                                                        "runtime_s": table.runtime})


@dataclass
class DistributionRun:
    result: object
    window: DetectionWindow
    E_meas: np.ndarray
    stationary: Optional[analytic.StationaryDistribution] = None
    record: list = field(default_factory=list)


def run_distribution(params: DimensionlessParams, window: Optional[DetectionWindow] = None,
                     dist: Optional[InitialDistribution] = None, recoil_law="uniform", threads=1,
                     record=None, overlay=True, quad_spec=None) -> DistributionRun:
    """Ensemble histogram after ``params.n_kicks`` kicks, plus windowed energies.

    Histograms are kept at every kick so the windowed energy can be reported
    per kick.  When tau is a main resonance (q <= 2) the stationary
    distribution for the same initial law is attached as an overlay.
    """
    if window is None:
        window = DetectionWindow()
    if dist is None:
        dist = InitialDistribution("gaussian", fwhm=params.initial_fwhm)
    N = params.n_kicks
    res = run_ensemble(params, dist, SEModel(params.n_se_mean, recoil_law),
                       record_at=range(N + 1), threads=threads)
    e_meas = np.array([windowed_mean_energy(res.histograms[j], window) for j in range(N + 1)])
    stationary = None
    info = resonance_info(params.tau) if params.tau > 0 else None
    if overlay and info is not None and info.q <= 2:
        stationary = analytic.stationary_distribution(params.phi_d, dist, res.n_max + 1, quad_spec)
    return DistributionRun(res, window, e_meas, stationary, sorted(record or [N]))


def write_distribution(run: DistributionRun, out_dir, dump_state=None):
    os.makedirs(out_dir, exist_ok=True)
    res = run.result
    meta = {"fingerprint": res.fingerprint, "seed": res.seed, "params": res.params.as_dict(),
            "initial": res.dist.as_dict(), "window": _window_dict(run.window)}
    hist_rows = []
    for j in run.record:
        h = res.histograms[j]
        hist_rows.extend((j, int(n), p, e) for n, p, e in zip(h.n, h.prob, h.stderr))
    write_csv(os.path.join(out_dir, "histogram.csv"), ["N", "n", "probability", "stderr"], hist_rows, meta)
    write_csv(os.path.join(out_dir, "energy.csv"), ["N", "E", "stderr", "E_meas"],
              zip(res.kicks, res.energy, res.energy_stderr, run.E_meas), meta)
    final = res.final_histogram
    windowed = apply_window(final, run.window)
    if run.stationary is not None:
        s = run.stationary
        write_csv(os.path.join(out_dir, "overlay.csv"), ["n", "simulated", "windowed", "stationary"],
                  [(int(n), final.at(n), windowed.at(n), s.at(n)) for n in s.n], meta)
        write_json(os.path.join(out_dir, "stationary.json"), _stationary_meta(s, res.params.phi_d))
    write_json(os.path.join(out_dir, "metadata.json"), {
        **meta, "n_max": res.n_max, "n_atoms_used": res.n_atoms, "n_failed": res.n_failed,
        "sampling": res.sampling, "discarded_mass": windowed.discarded_mass,
        "runtime_s": res.runtime, "se_model": {"n_se_mean": res.se_model.n_se_mean,
                                               "recoil_law": res.se_model.recoil_law},
    })
    if dump_state:
        _dump_first_atom(res, dump_state)


def _dump_first_atom(res, path):
    rng = atom_rng(res.seed, 0)
    stratum = (0, res.params.n_atoms) if res.sampling == "stratified" else None
    n0, beta0 = sample_atom(rng, res.dist, stratum)
    rec = evolve_atom(n0 + beta0, res.params, res.se_model, rng, n_max=res.n_max)
    dump_state_csv(rec.snapshots[res.params.n_kicks], path)


def _stationary_meta(s, phi_d):
    return {"phi_d": phi_d, "nodes_xi": s.spec.nodes_xi, "nodes_alpha": s.spec.nodes_alpha,
            "rule": s.spec.rule, "order_cutoff": s.spec.order_cutoff,
            "doubling_change": s.doubling_change, "fingerprint": fingerprint(
                {"phi_d": phi_d, "spec": [s.spec.nodes_xi, s.spec.nodes_alpha, s.spec.order_cutoff],
                 "n": [int(s.n[0]), int(s.n[-1])]})}


def write_stationary(s: analytic.StationaryDistribution, phi_d, h: InitialDistribution, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    meta = {**_stationary_meta(s, phi_d), "initial": h.as_dict()}
    write_csv(os.path.join(out_dir, "stationary.csv"), ["n", "probability"],
              zip(s.n, s.prob), {"fingerprint": meta["fingerprint"], "phi_d": phi_d})
    write_json(os.path.join(out_dir, "stationary.json"), meta)


# -- reproduction recipes ----------------------------------------------------

def recipe_params(n_atoms=5000, seed=0, n_se_mean=0.0) -> DimensionlessParams:
    return DimensionlessParams(tau=2 * math.pi, phi_d=0.8 * math.pi, n_kicks=30, n_se_mean=n_se_mean,
                               n_atoms=n_atoms, seed=seed, initial_fwhm=6.0)


def fig1_spec(n_se_mean, n_atoms=5000, seed=0, steps=FIG1_STEPS) -> ScanSpec:
    return ScanSpec("tau", *FIG1_RANGE, steps, recipe_params(n_atoms, seed, n_se_mean))


def peak_check(table: ScanTable) -> list:
    """(name, passed, detail) lines for the resonance-peak structure of a tau scan."""
    maxima = local_maxima(table.E_meas)
    top3 = maxima[:3]
    resonant = [table.nearest(t) for t in RESONANT_TAUS]
    lines = [("three largest local maxima at nodes nearest 2pi, 4pi, 6pi",
              sorted(top3) == sorted(resonant),
              f"top3 nodes {top3} (tau/pi={[round(table.values[i] / math.pi, 3) for i in top3]}), "
              f"resonant nodes {resonant}")]
    for t, i in zip(RESONANT_TAUS, resonant):
        lines.append((f"node nearest {t / math.pi:.0f}pi is a local maximum", i in maxima,
                      f"node {i}, tau/pi={table.values[i] / math.pi:.4f}, E_meas={table.E_meas[i]:.3f}"))
    return lines


def enhancement_check(coherent: ScanTable, noisy: ScanTable) -> list:
    lines = []
    for t in RESONANT_TAUS:
        i = coherent.nearest(t)
        a, b = coherent.E_meas[i], noisy.E_meas[i]
        lines.append((f"E_meas enhanced by SE at node nearest {t / math.pi:.0f}pi", b > a,
                      f"node {i}: noisy {b:.3f} vs SE-free {a:.3f}"))
    return lines


def _write_summary(path, figure, lines, fp, seed):
    with open(path, "w") as fh:
        fh.write(f"# figure: {figure}\n# fingerprint: {fp}\n# seed: {seed}\n")
        for name, ok, detail in lines:
            fh.write(f"{'PASS' if ok else 'FAIL'}  {name}  [{detail}]\n")


def reproduce(figure, out_dir, n_atoms=5000, seed=0, threads=1, window=None, steps=FIG1_STEPS) -> list:
    """Run a canned recipe and write a bundle; returns the summary lines."""
    if figure not in FIGURES:
        raise ParameterError("figure", f"unknown figure id {figure!r}; choose from {FIGURES}")
    if window is None:
        window = DetectionWindow()
    bundle = os.path.join(out_dir, figure)
    os.makedirs(bundle, exist_ok=True)
    if figure == "fig1a":
        table = run_scan(fig1_spec(0.0, n_atoms, seed, steps), window, threads=threads)
        write_scan(table, bundle)
        lines = peak_check(table)
        fp = table.fingerprint
    elif figure == "fig1b":
        coherent = run_scan(fig1_spec(0.0, n_atoms, seed, steps), window, threads=threads)
        noisy = run_scan(fig1_spec(FIG1_N_SE, n_atoms, seed, steps), window, threads=threads)
        write_scan(coherent, bundle, "scan_se_free")
        write_scan(noisy, bundle, "scan")
        lines = enhancement_check(coherent, noisy)
        fp = noisy.fingerprint
    else:
        n_se = 0.0 if figure == "fig2a" else FIG2_N_SE
        run = run_distribution(recipe_params(n_atoms, seed, n_se), window, threads=threads)
        write_distribution(run, bundle)
        res = run.result
        fp = res.fingerprint
        true_e, meas_e = float(res.energy[-1]), float(run.E_meas[-1])
        if figure == "fig2a":
            lines = [
                ("analytic stationary overlay present", run.stationary is not None,
                 "overlay.csv" if run.stationary is not None else "missing"),
                ("ballistic wings lost to the window (E_meas < E_true)", meas_e < true_e,
                 f"E_meas={meas_e:.3f}, E_true={true_e:.3f}"),
            ]
        else:
            ref = run_distribution(recipe_params(n_atoms, seed, 0.0), window, threads=threads, overlay=False)
            write_distribution(ref, os.path.join(bundle, "se_free"))
            v_noisy = res.final_histogram.variance(30)
            v_free = ref.result.final_histogram.variance(30)
            lines = [("broadened centre: variance on |n|<=30 exceeds SE-free run", v_noisy > v_free,
                      f"{v_noisy:.3f} vs {v_free:.3f}"),
                     ("measured energy exceeds SE-free measured energy", meas_e > float(ref.E_meas[-1]),
                      f"{meas_e:.3f} vs {float(ref.E_meas[-1]):.3f}")]
    _write_summary(os.path.join(bundle, "summary.txt"), figure, lines, fp, seed)
    return lines

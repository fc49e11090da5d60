"""Time-of-flight detection emulation: momentum window, threshold, windowed energy.

The measured mean energy is computed from a histogram after discarding
everything outside a finite momentum window and every bin below a signal
threshold.  Coherent resonant dynamics put the energy into ballistic wings
that escape the window; with spontaneous emission the energy is carried by a
diffusively broadened centre instead, which survives the cuts.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .decoherence import SEModel
from .ensemble import InitialDistribution, MomentumHistogram, run_ensemble
from .errors import EmptySignalError, ParameterError
from .units import DimensionlessParams


@dataclass(frozen=True)
class DetectionWindow:
    p_min: float = -60.0
    p_max: float = 60.0
    threshold: float = 0.0
    renormalize: bool = False

    def __post_init__(self):
        if not self.p_min < self.p_max:
            raise ParameterError("p_min", f"window [{self.p_min}, {self.p_max}] is empty")
        if not self.threshold >= 0:
            raise ParameterError("threshold", "must be non-negative")

    @classmethod
    def unbounded(cls) -> "DetectionWindow":
        return cls(-math.inf, math.inf)


def apply_window(hist: MomentumHistogram, w: DetectionWindow) -> MomentumHistogram:
    """Zero bins outside ``[p_min, p_max]`` or below ``threshold``.

    The removed probability is added to ``discarded_mass``.  With
    ``renormalize`` the surviving bins are rescaled to the original total.
    """
    n = hist.n
    keep = (n >= w.p_min) & (n <= w.p_max) & (hist.prob >= w.threshold)
    prob = np.where(keep, hist.prob, 0.0)
    kept = float(prob.sum())
    if kept <= 0.0:
        raise EmptySignalError("detection cuts removed the whole signal")
    discarded = float(hist.prob.sum()) - kept
    stderr = None if hist.stderr is None else np.where(keep, hist.stderr, 0.0)
    if w.renormalize:
        scale = float(hist.prob.sum()) / kept
        prob = prob * scale
        if stderr is not None:
            stderr = stderr * scale
    return dataclasses.replace(hist, prob=prob, stderr=stderr,
                               discarded_mass=hist.discarded_mass + discarded)


def windowed_mean_energy(hist: MomentumHistogram, w: DetectionWindow) -> float:
    """Mean energy sum n^2 P(n) / 2 over the bins that survive the cuts."""
    return apply_window(hist, w).energy()


@dataclass
class EnhancementResult:
    E_meas_coherent: float
    E_meas_noisy: float
    E_true_coherent: float
    E_true_noisy: float
    stderr_coherent: float
    stderr_noisy: float
    coherent: object = dataclasses.field(repr=False, default=None)
    noisy: object = dataclasses.field(repr=False, default=None)

    def as_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in ("coherent", "noisy")}


def enhancement_experiment(params: DimensionlessParams, window: Optional[DetectionWindow] = None,
                           dist: Optional[InitialDistribution] = None, recoil_law="uniform",
                           threads=1) -> EnhancementResult:
    """Run the SE-free and the noisy ensemble and compare true vs measured energy.

    Both arms use the same master seed, so atom i starts from the same
    initial momentum in each (common random numbers).  ``params.n_se_mean``
    sets the noisy arm.
    """
    if window is None:
        window = DetectionWindow()
    coherent = run_ensemble(params.replace(n_se_mean=0.0), dist, SEModel(0.0, recoil_law), threads=threads)
    noisy = run_ensemble(params, dist, SEModel(params.n_se_mean, recoil_law), threads=threads)
    return EnhancementResult(
        E_meas_coherent=windowed_mean_energy(coherent.final_histogram, window),
        E_meas_noisy=windowed_mean_energy(noisy.final_histogram, window),
        E_true_coherent=float(coherent.energy[-1]),
        E_true_noisy=float(noisy.energy[-1]),
        stderr_coherent=float(coherent.energy_stderr[-1]),
        stderr_noisy=float(noisy.energy_stderr[-1]),
        coherent=coherent,
        noisy=noisy,
    )

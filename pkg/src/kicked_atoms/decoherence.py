"""Spontaneous emission as random momentum recoil between kicks.

Each SE event translates the atom's momentum by a random amount ``delta``.
Because ``delta`` is not an integer the quasimomentum changes, which is the
mechanism that breaks the resonant (beta-selective) dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BlochState, check_edges
from .errors import ParameterError

RECOIL_LAWS = ("uniform", "two-point")


@dataclass(frozen=True)
class SEModel:
    """SE statistics: Poisson counts per period, i.i.d. recoils per event.

    Both recoil laws have variance 1/12 per event, so the momentum diffusion
    coefficient is ``D = n_se_mean / 12``.  ``"uniform"`` draws from
    [-1/2, 1/2); ``"two-point"`` draws +-1/sqrt(12) with equal weight.
    """

    n_se_mean: float = 0.0
    recoil_law: str = "uniform"

    def __post_init__(self):
        if not self.n_se_mean >= 0:
            raise ParameterError("n_se_mean", f"must be non-negative, got {self.n_se_mean!r}")
        if self.recoil_law not in RECOIL_LAWS:
            raise ParameterError("recoil_law", f"must be one of {RECOIL_LAWS}, got {self.recoil_law!r}")

    @property
    def diffusion(self) -> float:
        return self.n_se_mean / 12.0

    @property
    def active(self) -> bool:
        return self.n_se_mean > 0


def sample_se_count(rng: np.random.Generator, model: SEModel) -> int:
    if not model.active:
        return 0
    return int(rng.poisson(model.n_se_mean))


def sample_recoils(rng: np.random.Generator, model: SEModel, count) -> np.ndarray:
    if count == 0:
        return np.empty(0)
    if model.recoil_law == "uniform":
        return rng.uniform(-0.5, 0.5, size=count)
    return np.where(rng.random(count) < 0.5, -1.0, 1.0) / math.sqrt(12.0)


def draw_kick_recoils(rng: np.random.Generator, model: SEModel) -> np.ndarray:
    """Recoils for one period, in application order (count first, then values).

    The batched ensemble engine and :func:`decohere_between_kicks` both draw
    through this function, so an atom sees the same events on either path.
    """
    return sample_recoils(rng, model, sample_se_count(rng, model))


def shift_quasimomentum(beta, delta):
    """Return ``(beta', k)`` with ``beta + delta = k + beta'`` and beta' in [0, 1)."""
    total = beta + delta
    k = math.floor(total)
    b = total - k
    if b >= 1.0:  # rounding at the upper edge
        b -= 1.0
        k += 1
    return b, k


def apply_recoil(state: BlochState, delta) -> BlochState:
    """Translate every component's momentum by ``delta``.

    The fractional part lands in beta; the integer carry re-indexes the
    ladder.  The shift is cyclic, so amplitude leaving one edge would show up
    at the other; the edge check rejects that.
    """
    if abs(delta) >= state.n_max / 2:
        raise ParameterError("delta", f"|delta|={abs(delta):g} exceeds n_max/2")
    if delta == 0:
        return state
    beta, k = shift_quasimomentum(state.beta, delta)
    amps = np.roll(state.amplitudes, k) if k else state.amplitudes.copy()
    out = BlochState(beta, amps)
    if k:
        check_edges(out, "recoil")
    return out


def decohere_between_kicks(state: BlochState, model: SEModel, rng: np.random.Generator) -> BlochState:
    if not model.active:
        return state
    for delta in draw_kick_recoils(rng, model):
        state = apply_recoil(state, delta)
    return state

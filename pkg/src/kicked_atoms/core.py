"""One-period Floquet evolution of a Bloch state on a truncated momentum ladder.

A Bloch state at quasimomentum ``beta`` is a 2*pi-periodic function
``psi_beta(x) = sum_n c_n exp(i n x)``; its components carry total momentum
``p = n + beta``.  The ladder runs over ``n = -n_max .. n_max`` and the
amplitudes of a :class:`BlochState` are stored in that natural order.

The array-level helpers (``kick_phase``, ``free_phase``, ``ladder_fft_order``)
work on the FFT ordering used by the batched ensemble engine; the
``BlochState`` functions are the single-atom reference path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import LadderOverflowError

EDGE_TOLERANCE = 1e-8


@dataclass(frozen=True)
class BlochState:
    beta: float
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size % 2 == 0 or amps.size < 3:
            raise ValueError("amplitudes must be a 1-D array of odd length >= 3")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta!r}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_max(self) -> int:
        return self.amplitudes.size // 2

    @property
    def n(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    @property
    def momenta(self) -> np.ndarray:
        return self.n + self.beta

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def edge_occupation(self) -> float:
        return float(max(abs(self.amplitudes[0]) ** 2, abs(self.amplitudes[-1]) ** 2))

    @classmethod
    def plane_wave(cls, n0, beta, n_max) -> "BlochState":
        if abs(n0) >= n_max:
            raise LadderOverflowError(f"plane wave n0={n0} does not fit inside n_max={n_max}")
        amps = np.zeros(2 * n_max + 1, dtype=complex)
        amps[n0 + n_max] = 1.0
        return cls(beta, amps)

    @classmethod
    def from_momentum(cls, p0, n_max) -> "BlochState":
        n0 = int(np.floor(p0))
        return cls.plane_wave(n0, float(p0 - n0), n_max)


def check_edges(state: BlochState, what="evolution"):
    occ = state.edge_occupation()
    if occ >= EDGE_TOLERANCE:
        raise LadderOverflowError(
            f"{what}: edge occupation {occ:.3e} exceeds {EDGE_TOLERANCE:g} "
            f"(n_max={state.n_max}); enlarge the ladder"
        )


# -- array-level kernels -----------------------------------------------------

def ladder_fft_order(n_max) -> np.ndarray:
    """Integer momenta of the ladder in FFT order (0, 1, .., n_max, -n_max, .., -1)."""
    L = 2 * n_max + 1
    return np.rint(np.fft.fftfreq(L, 1.0 / L)).astype(np.int64)


def angle_grid(n_max) -> np.ndarray:
    L = 2 * n_max + 1
    return 2.0 * np.pi * np.arange(L) / L


def kick_phase(phi_d, n_max) -> np.ndarray:
    """exp(-i phi_d cos x) on the angle grid conjugate to the ladder."""
    return np.exp(-1j * phi_d * np.cos(angle_grid(n_max)))


def free_phase(tau, n, beta) -> np.ndarray:
    """exp(-i tau (n + beta)^2 / 2); broadcasts over ``n`` and ``beta``."""
    return np.exp(-0.5j * tau * (n + beta) ** 2)


def fast_ladder(n_max) -> int:
    """Smallest n >= n_max whose ladder length 2n+1 is a fast FFT size."""
    n = int(n_max)
    while scipy.fft.next_fast_len(2 * n + 1) != 2 * n + 1:
        n += 1
    return n


# -- single-state operations -------------------------------------------------

def kick(state: BlochState, phi_d) -> BlochState:
    """Apply one delta kick exp(-i phi_d cos x).

    The amplitudes go to the angle grid by an inverse DFT, pick up the phase
    pointwise and come back by a forward DFT.  The DFT is cyclic, so any
    amplitude pushed past the ladder edge would wrap around; the edge check
    turns that into :class:`LadderOverflowError`.
    """
    if phi_d == 0:
        return state
    c = np.fft.ifftshift(state.amplitudes)
    psi = scipy.fft.ifft(c) * kick_phase(phi_d, state.n_max)
    out = BlochState(state.beta, np.fft.fftshift(scipy.fft.fft(psi)))
    check_edges(out, "kick")
    return out


def free(state: BlochState, tau) -> BlochState:
    """Free propagation over one period, diagonal in momentum."""
    if tau == 0:
        return state
    return BlochState(state.beta, state.amplitudes * free_phase(tau, state.n, state.beta))


def step(state: BlochState, tau, phi_d) -> BlochState:
    """One period: kick, then free propagation."""
    return free(kick(state, phi_d), tau)


def evolve(state: BlochState, tau, phi_d, n_kicks) -> BlochState:
    for _ in range(n_kicks):
        state = step(state, tau, phi_d)
    return state


def energy(state: BlochState) -> float:
    """Mean kinetic energy sum (n + beta)^2 |c_n|^2 / 2."""
    return float(0.5 * np.sum(state.momenta**2 * np.abs(state.amplitudes) ** 2))


def momentum_distribution(state: BlochState) -> np.ndarray:
    """|c_n|^2 over the ladder, natural order."""
    return np.abs(state.amplitudes) ** 2


def dump_state_csv(state: BlochState, path):
    """Write ``n, Re c_n, Im c_n`` rows (debugging aid)."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# beta: {state.beta!r}\n")
        w = csv.writer(fh)
        w.writerow(["n", "re", "im"])
        for n, c in zip(state.n, state.amplitudes):
            w.writerow([int(n), repr(float(c.real)), repr(float(c.imag))])

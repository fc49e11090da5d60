"""Monte Carlo ensemble of kicked atoms.

Every atom starts in a momentum eigenstate ``p0 = n0 + beta0`` drawn from the
initial distribution and evolves independently (an incoherent mixture over
quasimomenta).  Atoms are processed in fixed-size chunks; the chunk partition
and each atom's random stream depend only on the master seed and the atom
index, and chunk sums are reduced in chunk order, so results are bitwise
identical for any number of worker threads.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft
from scipy.special import ndtr, ndtri

from . import core
from .core import BlochState
from .decoherence import SEModel, decohere_between_kicks, draw_kick_recoils, shift_quasimomentum
from .errors import LadderOverflowError, ParameterError
from .io import fingerprint
from .units import DimensionlessParams, ballistic_headroom

log = logging.getLogger(__name__)

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
MAX_FAILED_FRACTION = 1e-3
DEFAULT_CHUNK = 256
SAMPLING_MODES = ("stratified", "random")


@dataclass(frozen=True)
class InitialDistribution:
    """Initial momentum distribution of the cloud (units of hbar*G).

    kind ``"gaussian"``: normal law with the given FWHM about ``center``.
    kind ``"delta"``: every atom at exactly ``p = center``.
    kind ``"table"``: weights per integer bin, uniform inside each bin
    ``[n - 1/2, n + 1/2)``; ``table`` holds ``(n, weight)`` pairs.
    """

    kind: str = "gaussian"
    fwhm: float = 6.0
    center: float = 0.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("gaussian", "delta", "table"):
            raise ParameterError("kind", f"unknown initial distribution {self.kind!r}")
        if self.kind == "gaussian" and not self.fwhm > 0:
            raise ParameterError("fwhm", "must be positive for a gaussian")
        if self.kind == "table":
            pairs = dict(self.table) if not isinstance(self.table, dict) else self.table
            pairs = {int(n): float(w) for n, w in pairs.items() if w != 0}
            if not pairs or min(pairs.values()) < 0:
                raise ParameterError("table", "needs non-negative weights with positive sum")
            total = math.fsum(pairs.values())
            object.__setattr__(self, "table", tuple((n, w / total) for n, w in sorted(pairs.items())))

    @classmethod
    def unit_bin(cls, n=0) -> "InitialDistribution":
        """All atoms in the single bin around ``n``, quasimomentum uniform."""
        return cls(kind="table", table=((n, 1.0),))

    @property
    def sigma(self) -> float:
        return self.fwhm / FWHM_PER_SIGMA if self.kind == "gaussian" else 0.0

    def ppf(self, u):
        """Inverse CDF of the momentum law."""
        u = np.asarray(u, dtype=float)
        if self.kind == "gaussian":
            return self.center + self.sigma * ndtri(u)
        if self.kind == "delta":
            return np.full_like(u, self.center)
        ns = np.array([n for n, _ in self.table], dtype=float)
        ws = np.array([w for _, w in self.table])
        cum = np.concatenate(([0.0], np.cumsum(ws)))
        i = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, ns.size - 1)
        f = np.clip((u - cum[i]) / ws[i], 0.0, np.nextafter(1.0, 0.0))
        return self.center + ns[i] - 0.5 + f

    def bin_weights(self, tail=1e-16):
        """Probability of each unit bin ``[n - 1/2, n + 1/2)``: arrays ``(n, w)``."""
        if self.kind == "table":
            n = np.array([n for n, _ in self.table]) + int(round(self.center))
            return n, np.array([w for _, w in self.table])
        if self.kind == "delta":
            return np.array([int(math.floor(self.center + 0.5))]), np.array([1.0])
        half = int(math.ceil(abs(self.center) + 9 * self.sigma)) + 1
        n = np.arange(-half, half + 1)
        w = ndtr((n + 0.5 - self.center) / self.sigma) - ndtr((n - 0.5 - self.center) / self.sigma)
        keep = w > tail
        return n[keep], w[keep]

    def as_dict(self) -> dict:
        return {"kind": self.kind, "fwhm": self.fwhm, "center": self.center,
                "table": [list(t) for t in self.table]}


@dataclass
class MomentumHistogram:
    """Coarse-grained distribution over unit momentum bins centred on integers."""

    n: np.ndarray
    prob: np.ndarray
    kick: Optional[int] = None
    n_atoms: int = 0
    fingerprint: str = ""
    stderr: Optional[np.ndarray] = None
    discarded_mass: float = 0.0

    def total(self) -> float:
        return float(np.sum(self.prob))

    def energy(self) -> float:
        return float(0.5 * np.sum(self.n.astype(float) ** 2 * self.prob))

    def mean(self) -> float:
        return float(np.sum(self.n * self.prob) / self.total())

    def variance(self, n_cut=None) -> float:
        """Variance of n, optionally restricted (and renormalized) to |n| <= n_cut."""
        n, p = self.n.astype(float), self.prob
        if n_cut is not None:
            keep = np.abs(n) <= n_cut
            n, p = n[keep], p[keep]
        p = p / p.sum()
        m = np.sum(n * p)
        return float(np.sum((n - m) ** 2 * p))

    def at(self, n) -> float:
        idx = np.searchsorted(self.n, n)
        if idx < self.n.size and self.n[idx] == n:
            return float(self.prob[idx])
        return 0.0

    def values(self, ns) -> np.ndarray:
        return np.array([self.at(int(k)) for k in ns])


@dataclass
class EnsembleResult:
    params: DimensionlessParams
    dist: InitialDistribution
    se_model: SEModel
    n_max: int
    kicks: np.ndarray
    energy: np.ndarray
    energy_stderr: np.ndarray
    mean_momentum: np.ndarray
    momentum_variance: np.ndarray
    histograms: dict
    n_atoms: int
    n_failed: int
    seed: int
    fingerprint: str
    sampling: str = "stratified"
    runtime: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def final_histogram(self) -> MomentumHistogram:
        return self.histograms[int(self.kicks[-1])]

    def energy_slope(self, kick_range=None) -> float:
        """Least-squares slope of E(N) over ``kick_range`` (default: all)."""
        k = self.kicks if kick_range is None else np.asarray(list(kick_range))
        return float(np.polyfit(k, self.energy[k], 1)[0])


def atom_rng(seed, index) -> np.random.Generator:
    """Independent stream for atom ``index`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def sample_atom(rng: np.random.Generator, dist: InitialDistribution, stratum=None):
    """Draw ``(n0, beta0)`` with ``p0 = n0 + beta0`` and beta0 in [0, 1).

    With ``stratum=(i, m)`` the uniform variate is confined to
    ``[i/m, (i+1)/m)`` (stratified sampling over m atoms).
    """
    u = rng.random()
    if stratum is not None:
        i, m = stratum
        u = (i + u) / m
    u = max(u, np.finfo(float).tiny)
    p0 = float(dist.ppf(u))
    n0 = math.floor(p0)
    beta0 = p0 - n0
    if beta0 >= 1.0:
        n0, beta0 = n0 + 1, 0.0
    return n0, beta0


def coarse_grain_sums(betas, probs, n_values, half_width):
    """Unnormalized unit-bin sums over bins ``-half_width .. half_width``.

    Component ``n`` of an atom at quasimomentum beta has momentum
    ``n + beta`` and lands in bin ``n + floor(beta + 1/2)`` (bins are
    half-open, ``[k - 1/2, k + 1/2)``).  Returns ``(sums, sums_of_squares)``.
    """
    size = 2 * half_width + 1
    sums = np.zeros(size)
    squares = np.zeros(size)
    shift = np.floor(np.asarray(betas) + 0.5).astype(np.int64)
    for s in np.unique(shift):
        rows = probs[shift == s]
        idx = n_values + s + half_width
        if idx.min() < 0 or idx.max() >= size:
            raise ValueError("bin range too small for the ladder")
        sums[idx] += rows.sum(axis=0)
        squares[idx] += (rows * rows).sum(axis=0)
    return sums, squares


def coarse_grain(betas, probs, n_values, kick=None, half_width=None) -> MomentumHistogram:
    """Average per-atom ladder distributions into a unit-bin histogram."""
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    n_values = np.asarray(n_values, dtype=np.int64)
    if half_width is None:
        half_width = int(np.abs(n_values).max()) + 1
    sums, squares = coarse_grain_sums(betas, probs, n_values, half_width)
    return _histogram_from_sums(sums, squares, betas.size, half_width, kick)


def _histogram_from_sums(sums, squares, count, half_width, kick, fp=""):
    mean = sums / count
    if count > 1:
        var = np.maximum(squares / count - mean**2, 0.0) * count / (count - 1)
        err = np.sqrt(var / count)
    else:
        err = np.zeros_like(mean)
    return MomentumHistogram(np.arange(-half_width, half_width + 1), mean, kick, count, fp, err)


@dataclass
class AtomRecord:
    energies: np.ndarray
    momenta: np.ndarray
    snapshots: dict


def evolve_atom(p0, params: DimensionlessParams, se_model: SEModel, rng, record_at=None, n_max=None) -> AtomRecord:
    """Single-atom reference path built from the BlochState operations.

    Each period is kick, SE recoils, free propagation.  Returns energy and
    mean momentum after every kick plus the state at each index in
    ``record_at`` (default: the final kick).
    """
    N = params.n_kicks
    record_at = {N} if record_at is None else set(record_at)
    if n_max is None:
        n_max = params.n_max or ballistic_headroom(abs(p0), params.phi_d, N, se_model.n_se_mean)
    state = BlochState.from_momentum(p0, n_max)
    energies = np.empty(N + 1)
    momenta = np.empty(N + 1)
    snapshots = {}

    def record(j):
        energies[j] = core.energy(state)
        momenta[j] = float(np.sum(state.momenta * core.momentum_distribution(state)))
        if j in record_at:
            snapshots[j] = state

    record(0)
    for j in range(1, N + 1):
        state = core.kick(state, params.phi_d)
        state = decohere_between_kicks(state, se_model, rng)
        state = core.free(state, params.tau)
        record(j)
    return AtomRecord(energies, momenta, snapshots)


@dataclass
class _ChunkSums:
    energy: np.ndarray
    energy_sq: np.ndarray
    momentum: np.ndarray
    momentum_sq: np.ndarray
    hist: dict
    hist_sq: dict
    n_alive: int
    n_failed: int
    failure: str = ""


def _se_schedule(rngs, betas, model, n_kicks):
    """Per-kick lists of (rows, new beta, integer carry) for atoms with SE events."""
    events = [([], [], []) for _ in range(n_kicks)]
    for row, rng in enumerate(rngs if model.active else ()):
        beta = betas[row]
        for j in range(n_kicks):
            recoils = draw_kick_recoils(rng, model)
            if recoils.size == 0:
                continue
            carry = 0
            for delta in recoils:
                beta, k = shift_quasimomentum(beta, delta)
                carry += k
            rows, new_beta, carries = events[j]
            rows.append(row)
            new_beta.append(beta)
            carries.append(carry)
    return [(np.array(r, dtype=np.int64), np.array(b), np.array(c, dtype=np.int64)) for r, b, c in events]


def _subset_events(events, keep):
    """Restrict an SE schedule to the rows in boolean mask ``keep``, renumbered."""
    new_index = np.cumsum(keep) - 1
    out = []
    for rows, new_beta, carries in events:
        m = keep[rows]
        out.append((new_index[rows[m]], new_beta[m], carries[m]))
    return out


def _propagate(params, n_max, n0, beta0, events, record_at):
    """Evolve a block of atoms; returns (chunk sums over every atom, alive mask)."""
    N = params.n_kicks
    A = n0.size
    L = 2 * n_max + 1
    nv = core.ladder_fft_order(n_max)
    nv_f = nv.astype(float)
    nv_sq = nv_f**2
    x = core.angle_grid(n_max)
    kph = core.kick_phase(params.phi_d, n_max)
    half = n_max + 1

    beta = beta0.astype(float).copy()
    c = np.zeros((A, L), dtype=complex)
    c[np.arange(A), np.mod(n0, L)] = 1.0
    fph = core.free_phase(params.tau, nv_f[None, :], beta[:, None])
    alive = np.ones(A, dtype=bool)
    energies = np.empty((A, N + 1))
    momenta = np.empty((A, N + 1))
    hist, hist_sq = {}, {}

    def observe(j):
        P = c.real**2 + c.imag**2
        norm = P.sum(axis=1)
        first = P @ nv_f
        energies[:, j] = 0.5 * (P @ nv_sq + 2.0 * beta * first + beta**2 * norm)
        momenta[:, j] = first + beta * norm
        if j in record_at:
            hist[j], hist_sq[j] = coarse_grain_sums(beta, P, nv, half)

    # without kicks only |c|^2 is observed and recoils merely translate the
    # ladder, so the free phase cannot matter; skipping it keeps such runs exact
    kicked = params.phi_d != 0 and params.tau != 0
    observe(0)
    for j in range(N):
        rows, new_beta, carries = events[j]
        shifted = carries != 0
        if params.phi_d != 0 or shifted.any():
            psi = scipy.fft.ifft(c, axis=1, workers=1)
            if params.phi_d != 0:
                psi *= kph
            if shifted.any():
                psi[rows[shifted]] *= np.exp(1j * np.outer(carries[shifted], x))
            c = scipy.fft.fft(psi, axis=1, workers=1)
        if rows.size:
            beta[rows] = new_beta
            fph[rows] = core.free_phase(params.tau, nv_f[None, :], beta[rows, None])
        edge = np.maximum(np.abs(c[:, n_max]) ** 2, np.abs(c[:, n_max + 1]) ** 2)
        alive &= edge < core.EDGE_TOLERANCE
        if kicked:
            c *= fph
        observe(j + 1)

    sums = _ChunkSums(
        energies.sum(axis=0), (energies**2).sum(axis=0),
        momenta.sum(axis=0), (momenta**2).sum(axis=0),
        hist, hist_sq, A, 0,
    )
    return sums, alive


def _run_chunk(params, se_model, n_max, n0, beta0, rngs, record_at):
    events = _se_schedule(rngs, beta0, se_model, params.n_kicks)
    sums, alive = _propagate(params, n_max, n0, beta0, events, record_at)
    if alive.all():
        return sums
    # atoms evolve independently, so re-running the survivors alone drops the
    # failed ones without disturbing anyone else's numbers
    n_failed = int(np.count_nonzero(~alive))
    if alive.any():
        sums, _ = _propagate(params, n_max, n0[alive], beta0[alive], _subset_events(events, alive), record_at)
    else:
        zero = np.zeros(params.n_kicks + 1)
        empty = np.zeros(2 * n_max + 3)
        sums = _ChunkSums(zero, zero, zero, zero, {j: empty for j in record_at},
                          {j: empty for j in record_at}, 0, 0)
    sums.n_failed = n_failed
    sums.failure = f"{n_failed} atom(s) reached the ladder edge (n_max={n_max})"
    return sums


def choose_n_max(params: DimensionlessParams, p0_max, se_model: SEModel) -> int:
    need = ballistic_headroom(p0_max, params.phi_d, params.n_kicks, se_model.n_se_mean)
    if params.n_max is not None:
        if params.n_max < need:
            raise ParameterError("n_max", f"{params.n_max} is below the ballistic headroom {need}")
        return int(params.n_max)
    return core.fast_ladder(need)


def run_ensemble(
    params: DimensionlessParams,
    dist: Optional[InitialDistribution] = None,
    se_model: Optional[SEModel] = None,
    record_at=None,
    threads=1,
    chunk_size=DEFAULT_CHUNK,
    sampling="stratified",
) -> EnsembleResult:
    """Average independent atoms over the initial distribution.

    Parameters
    ----------
    params
        Model parameters; ``n_atoms`` and ``seed`` set the ensemble.
    dist
        Initial momentum law, default a gaussian of width ``params.initial_fwhm``.
    se_model
        Spontaneous-emission model, default uniform recoils at ``params.n_se_mean``.
    record_at
        Kick indices at which histograms are kept (default: the final kick).
        Energies are recorded after every kick.
    threads
        Worker threads.  Results do not depend on it.
    chunk_size
        Atoms per work unit.  Part of the reproducibility contract: changing
        it changes floating-point summation order.
    sampling
        ``"stratified"`` places atom i's initial momentum in the i-th
        quantile stratum of ``dist``; ``"random"`` draws it plainly.
    """
    t0 = time.perf_counter()
    if dist is None:
        dist = InitialDistribution("gaussian", fwhm=params.initial_fwhm)
    if se_model is None:
        se_model = SEModel(params.n_se_mean)
    if sampling not in SAMPLING_MODES:
        raise ParameterError("sampling", f"must be one of {SAMPLING_MODES}")
    N = params.n_kicks
    record_at = sorted({N} if record_at is None else {int(j) for j in record_at})
    if record_at and (record_at[0] < 0 or record_at[-1] > N):
        raise ParameterError("record_at", f"indices must lie in [0, {N}]")

    A = params.n_atoms
    rngs = [atom_rng(params.seed, i) for i in range(A)]
    n0 = np.empty(A, dtype=np.int64)
    beta0 = np.empty(A)
    for i, rng in enumerate(rngs):
        stratum = (i, A) if sampling == "stratified" else None
        n0[i], beta0[i] = sample_atom(rng, dist, stratum)
    p0_max = float(np.max(np.abs(n0 + beta0)))
    n_max = choose_n_max(params, p0_max, se_model)

    bounds = [(s, min(s + chunk_size, A)) for s in range(0, A, chunk_size)]

    def work(bound):
        s, e = bound
        return _run_chunk(params, se_model, n_max, n0[s:e], beta0[s:e], rngs[s:e], set(record_at))

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]

    total = parts[0]
    for part in parts[1:]:
        total.energy = total.energy + part.energy
        total.energy_sq = total.energy_sq + part.energy_sq
        total.momentum = total.momentum + part.momentum
        total.momentum_sq = total.momentum_sq + part.momentum_sq
        for j in record_at:
            total.hist[j] = total.hist[j] + part.hist[j]
            total.hist_sq[j] = total.hist_sq[j] + part.hist_sq[j]
        total.n_alive += part.n_alive
        total.n_failed += part.n_failed

    if total.n_failed > MAX_FAILED_FRACTION * A:
        raise LadderOverflowError(
            f"{total.n_failed} of {A} atoms overflowed the ladder (n_max={n_max}); "
            f"limit is {MAX_FAILED_FRACTION:.1%}"
        )
    if total.n_failed:
        log.warning("%d atom(s) dropped after ladder overflow", total.n_failed)

    m = total.n_alive
    energy = total.energy / m
    var_e = np.maximum(total.energy_sq / m - energy**2, 0.0) * m / max(m - 1, 1)
    mean_p = total.momentum / m
    # <p^2> per atom is 2E, so the ensemble variance includes quantum spread
    var_p = 2.0 * energy - mean_p**2

    fp = fingerprint({
        "params": params.as_dict(), "dist": dist.as_dict(),
        "se_model": {"n_se_mean": se_model.n_se_mean, "recoil_law": se_model.recoil_law},
        "record_at": record_at, "n_max": n_max, "sampling": sampling, "chunk_size": chunk_size,
    })
    half = n_max + 1
    hists = {j: _histogram_from_sums(total.hist[j], total.hist_sq[j], m, half, j, fp) for j in record_at}
    return EnsembleResult(
        params=params, dist=dist, se_model=se_model, n_max=n_max,
        kicks=np.arange(N + 1), energy=energy, energy_stderr=np.sqrt(var_e / m),
        mean_momentum=mean_p, momentum_variance=var_p, histograms=hists,
        n_atoms=m, n_failed=total.n_failed, seed=params.seed, fingerprint=fp,
        sampling=sampling, runtime=time.perf_counter() - t0,
        metadata={"chunk_size": chunk_size, "threads": threads},
    )

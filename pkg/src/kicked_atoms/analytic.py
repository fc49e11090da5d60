"""Closed forms and quadrature for the resonant kicked atom.

At the main resonances a Bloch component with quasimomentum beta sees kicks
that add up with a relative phase fixed by beta.  After many kicks the
accumulated phase is effectively random and the coarse-grained momentum
distribution becomes stationary:

    P_s(n) = sum_n' h(n') <J^2_{n-n'}(phi_d sin(xi) / sin(alpha))>

where both angles are averaged uniformly over a full period.  The integrand
is singular where sin(alpha) = 0, so the average is taken with a midpoint
rule that never samples those points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, QuadratureError

_MILLER_ACC = 160.0
_RESCALE = 1e250
_BLOCK = 4096
_SMALL_ARG = 1e-8


def _start_order(n) -> int:
    n = max(int(math.ceil(n)), 1)
    m = n + int(math.sqrt(_MILLER_ACC * n)) + 20
    return m + (m % 2)


def _miller_blocks(max_order, z):
    """Yield ``(index, table)`` with J_0..J_max_order for blocks of ``z`` > 0.

    Miller's algorithm: recur J_{k-1} = (2k/z) J_k - J_{k+1} downward from an
    order well above both ``max_order`` and ``z``, then normalize with
    J_0 + 2 sum_k J_2k = 1.  Points are sorted so each block starts the
    recurrence only as high as its largest argument needs.
    """
    order = np.argsort(z, kind="stable")
    for s in range(0, z.size, _BLOCK):
        idx = order[s:s + _BLOCK]
        zb = z[idx]
        start = _start_order(max(max_order, zb[-1]))
        table = np.zeros((max_order + 1, idx.size))
        two_over_z = 2.0 / zb
        jp = np.zeros(idx.size)
        j = np.full(idx.size, 1e-30)
        norm = np.zeros(idx.size)
        for k in range(start, 0, -1):
            jm = k * two_over_z * j - jp
            jp, j = j, jm
            km = k - 1
            if km <= max_order:
                table[km] = j
            if km > 0 and km % 2 == 0:
                norm += 2.0 * j
            big = np.abs(j) > _RESCALE
            if big.any():
                j[big] /= _RESCALE
                jp[big] /= _RESCALE
                norm[big] /= _RESCALE
                if km <= max_order:
                    table[km:, big] /= _RESCALE
        norm += j
        yield idx, table / norm


def bessel_j_table(max_order, z) -> np.ndarray:
    """J_m(z) for m = 0..max_order; shape ``(max_order + 1,) + z.shape``.

    Accurate to about 1e-13 relative (absolute near zeros).  Negative
    arguments use J_m(-z) = (-1)^m J_m(z).
    """
    max_order = int(max_order)
    if max_order < 0:
        raise ParameterError("max_order", "must be >= 0")
    z = np.asarray(z, dtype=float)
    shape = z.shape
    flat = z.ravel()
    az = np.abs(flat)
    out = np.zeros((max_order + 1, flat.size))
    small = az < _SMALL_ARG
    if small.any():
        # leading series term; next term is smaller by z^2/(4(m+1)) < 1e-16
        half = 0.5 * az[small]
        term = np.ones_like(half)
        for m in range(max_order + 1):
            out[m, small] = term
            term = term * half / (m + 1)
    rest = np.nonzero(~small)[0]
    if rest.size:
        for idx, table in _miller_blocks(max_order, az[rest]):
            out[:, rest[idx]] = table
    neg = flat < 0
    if neg.any():
        out[1::2, neg] *= -1.0
    return out.reshape((max_order + 1,) + shape)


def bessel_j(order, arg):
    """Bessel function of the first kind J_order(arg) for integer order."""
    order = int(order)
    if abs(order) > 10_000:
        raise ParameterError("order", "|order| must be <= 10^4")
    value = bessel_j_table(abs(order), arg)[abs(order)]
    if order < 0 and order % 2:
        value = -value
    return float(value) if np.ndim(arg) == 0 else value


def resonant_profile(phi_d, n_kicks, n_max=None):
    """Momentum distribution J_n^2(N phi_d) of a resonant Bloch state kicked from rest.

    Returns ``(n, prob)`` over ``-n_max .. n_max``.  The default range reaches
    well past the ballistic peaks at ``|n| ~ N phi_d``.
    """
    if n_kicks < 0:
        raise ParameterError("n_kicks", "must be >= 0")
    z = n_kicks * phi_d
    if n_max is None:
        n_max = int(math.ceil(z + 10.0 + 8.0 * z ** (1.0 / 3.0)))
    j = bessel_j_table(n_max, z)
    prob = np.concatenate((j[:0:-1], j)) ** 2
    return np.arange(-n_max, n_max + 1), prob


def energy_law(phi_d, n_kicks, n_se_mean=0.0) -> float:
    """Mean energy gain (D/2 + phi_d^2/4) N with D = n_se_mean / 12."""
    if min(phi_d, n_kicks, n_se_mean) < 0:
        raise ParameterError("energy_law", "arguments must be non-negative")
    return (n_se_mean / 24.0 + phi_d**2 / 4.0) * n_kicks


@dataclass(frozen=True)
class QuadratureSpec:
    """Midpoint rule for the two angle averages.

    Node counts are per full period and must be multiples of 4: the
    integrand depends only on |sin| of each angle, so the full-period rule
    folds exactly onto a quarter period with a quarter of the nodes.
    Orders above ``order_cutoff`` are dropped wherever the argument is below
    half the order (deep in the evanescent region of J).
    """

    nodes_xi: int = 1024
    nodes_alpha: int = 1024
    rule: str = "midpoint"
    order_cutoff: int = 200

    def __post_init__(self):
        for name in ("nodes_xi", "nodes_alpha"):
            n = getattr(self, name)
            if n < 64 or n % 4:
                raise ParameterError(name, f"must be a multiple of 4 and >= 64, got {n}")
        if self.rule != "midpoint":
            raise ParameterError("rule", "only the midpoint rule is supported")

    def doubled(self) -> "QuadratureSpec":
        return QuadratureSpec(2 * self.nodes_xi, 2 * self.nodes_alpha, self.rule, self.order_cutoff)


def _quarter_nodes(n_full):
    nq = n_full // 4
    return (np.arange(nq) + 0.5) * (0.5 * math.pi / nq)


def stationary_kernel(phi_d, max_order, spec: QuadratureSpec, swap=False) -> np.ndarray:
    """K(m) = <J_m^2(phi_d sin xi / sin alpha)> for m = 0..max_order.

    ``swap=True`` exchanges the roles of the two angles (sin alpha / sin xi).
    """
    xi = _quarter_nodes(spec.nodes_xi)
    alpha = _quarter_nodes(spec.nodes_alpha)
    num, den = np.sin(xi), np.sin(alpha)
    if swap:
        num, den = den, num
    z = (phi_d * num[None, :] / den[:, None]).ravel()
    acc = np.zeros(max_order + 1)
    pos = z > 0
    if not pos.all():
        acc[0] += np.count_nonzero(~pos)
    for idx, table in _miller_blocks(max_order, z[pos]):
        sq = table * table
        if max_order > spec.order_cutoff:
            zb = z[pos][idx]
            for m in range(spec.order_cutoff + 1, max_order + 1):
                sq[m, zb < 0.5 * m] = 0.0
        acc += sq.sum(axis=1)
    return acc / z.size


@dataclass
class StationaryDistribution:
    n: np.ndarray
    prob: np.ndarray
    doubling_change: float
    spec: QuadratureSpec

    def at(self, n) -> float:
        return float(self.prob[int(n) - int(self.n[0])])


def _n_grid(n_range):
    if isinstance(n_range, (int, np.integer)):
        return np.arange(-int(n_range), int(n_range) + 1)
    lo, hi = n_range
    return np.arange(int(lo), int(hi) + 1)


def stationary_distribution(phi_d, h=None, n_range=60, spec=None, tolerance=1e-4,
                            check_convergence=True) -> StationaryDistribution:
    """Asymptotic coarse-grained distribution at the main resonances.

    Parameters
    ----------
    phi_d : float
        Kick strength.
    h : InitialDistribution, optional
        Initial distribution; only its unit-bin weights enter.  Default is
        the release cloud (gaussian, FWHM 6).
    n_range : int or (lo, hi)
        Momentum bins to report (``int`` means symmetric).
    spec : QuadratureSpec, optional
    tolerance : float
        Largest allowed change at any n when the node counts are doubled.

    Returns the values at ``spec`` resolution together with the doubling
    change; raises :class:`QuadratureError` if that change exceeds
    ``tolerance``.
    """
    from .ensemble import InitialDistribution

    if spec is None:
        spec = QuadratureSpec()
    if h is None:
        h = InitialDistribution("gaussian", fwhm=6.0)
    n = _n_grid(n_range)
    hn, hw = h.bin_weights()
    max_order = int(max(np.abs(n[:, None] - hn[None, :]).max(), 1))

    def convolve(kernel):
        return (kernel[np.abs(n[:, None] - hn[None, :])] * hw[None, :]).sum(axis=1)

    prob = convolve(stationary_kernel(phi_d, max_order, spec))
    change = float("nan")
    if check_convergence:
        fine = convolve(stationary_kernel(phi_d, max_order, spec.doubled()))
        change = float(np.max(np.abs(fine - prob)))
        if change > tolerance:
            raise QuadratureError(
                f"node doubling changed P_s by {change:.2e} > {tolerance:g}; "
                f"increase the node counts (now {spec.nodes_xi}x{spec.nodes_alpha})"
            )
    return StationaryDistribution(n, prob, change, spec)

"""Laboratory units, kicked-rotor units and parameter validation.

Momentum is measured in units of hbar*G (G = 2 k_L, the reciprocal lattice
vector of the standing wave), position in units of 1/G, and time in units of
M/(hbar G^2).  In these units the kick period is ``tau = hbar G^2 T / M`` and
tau = 2*pi is the half-Talbot time.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from . import constants
from .errors import ParameterError

RATIONAL_TOLERANCE = 1e-12
MAX_DENOMINATOR = 64


@dataclass(frozen=True)
class PhysicalConfig:
    """Experimental parameters in SI units.

    ``temperature_fwhm`` is the initial momentum FWHM in units of hbar*k_L
    (the release cloud is quoted that way).  ``rabi_frequency`` and
    ``detuning`` are optional; when both are present the kick strength is
    derived from them.
    """

    T: float
    lambda_L: float = constants.LAMBDA_D1
    M: float = constants.CS133_MASS
    t_p: float = constants.PULSE_DURATION
    rabi_frequency: Optional[float] = None
    detuning: Optional[float] = None
    n_se_mean: float = 0.0
    temperature_fwhm: float = constants.INITIAL_FWHM_HBAR_KL

    def __post_init__(self):
        for name in ("lambda_L", "M", "T"):
            if not getattr(self, name) > 0:
                raise ParameterError(name, f"must be positive, got {getattr(self, name)!r}")
        if not self.t_p >= 0:
            raise ParameterError("t_p", f"must be non-negative, got {self.t_p!r}")
        if not self.n_se_mean >= 0:
            raise ParameterError("n_se_mean", f"must be non-negative, got {self.n_se_mean!r}")
        if not self.temperature_fwhm >= 0:
            raise ParameterError("temperature_fwhm", "must be non-negative")
        if self.T < 10 * self.t_p:
            warnings.warn(
                f"kick period T={self.T:g} s is not much longer than the pulse "
                f"t_p={self.t_p:g} s; the delta-kick idealization is questionable",
                stacklevel=2,
            )

    @property
    def G(self) -> float:
        return 2.0 * (2.0 * math.pi / self.lambda_L)

    @property
    def half_talbot_time(self) -> float:
        """Period T at which tau = 2*pi, i.e. 2*pi*M/(hbar G^2)."""
        return 2.0 * math.pi * self.M / (constants.HBAR * self.G**2)


@dataclass(frozen=True)
class DimensionlessParams:
    """Model parameters in kicked-rotor units.

    ``n_max=None`` lets the ensemble pick the ballistic-headroom ladder size
    (see :func:`ballistic_headroom`).
    """

    tau: float
    phi_d: float = constants.PHI_D_DEFAULT
    n_kicks: int = constants.N_KICKS_DEFAULT
    n_se_mean: float = 0.0
    n_max: Optional[int] = None
    n_atoms: int = 5000
    seed: int = 0
    initial_fwhm: float = constants.INITIAL_FWHM_HBAR_KL / 2.0

    def __post_init__(self):
        if not self.tau >= 0:
            raise ParameterError("tau", f"must be non-negative, got {self.tau!r}")
        if not self.phi_d >= 0:
            raise ParameterError("phi_d", f"must be non-negative, got {self.phi_d!r}")
        if int(self.n_kicks) != self.n_kicks or self.n_kicks < 0:
            raise ParameterError("n_kicks", f"must be an integer >= 0, got {self.n_kicks!r}")
        if not self.n_se_mean >= 0:
            raise ParameterError("n_se_mean", f"must be non-negative, got {self.n_se_mean!r}")
        if self.n_max is not None and (int(self.n_max) != self.n_max or self.n_max < 1):
            raise ParameterError("n_max", f"must be an integer >= 1, got {self.n_max!r}")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ParameterError("n_atoms", f"must be an integer >= 1, got {self.n_atoms!r}")
        if not self.initial_fwhm >= 0:
            raise ParameterError("initial_fwhm", "must be non-negative")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ParameterError("seed", f"must be a non-negative integer, got {self.seed!r}")

    def replace(self, **changes) -> "DimensionlessParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def ballistic_headroom(p0_max, phi_d, n_kicks, n_se_mean=0.0) -> int:
    """Smallest ladder half-width that keeps resonant wings off the edges.

    The resonant wings sit near ``n = N*phi_d`` with width ~ sqrt(N*phi_d);
    the ladder reaches five such widths beyond them.  Two extra sites keep an
    unkicked plane wave off the edge sites, and SE recoils add six standard
    deviations of their accumulated spread.
    """
    z = n_kicks * phi_d
    n = abs(p0_max) + z + 5.0 * math.sqrt(z)
    if n_se_mean > 0:
        n += 6.0 * math.sqrt(n_kicks * n_se_mean / 12.0)
    return max(1, math.ceil(n) + 2)


def to_dimensionless(cfg: PhysicalConfig, **overrides) -> DimensionlessParams:
    """Convert a laboratory configuration to kicked-rotor units.

    ``tau = hbar G^2 T / M``; the momentum FWHM is halved (hbar*k_L ->
    hbar*G).  The kick strength comes from ``compute_phi_d`` when the Rabi
    frequency and detuning are both given, otherwise from ``overrides`` or the
    default operating point.  Any other field of
    :class:`DimensionlessParams` may be passed through ``overrides``.
    """
    fields = {
        "tau": constants.HBAR * cfg.G**2 * cfg.T / cfg.M,
        "n_se_mean": cfg.n_se_mean,
        "initial_fwhm": cfg.temperature_fwhm / 2.0,
    }
    if cfg.rabi_frequency is not None and cfg.detuning is not None:
        fields["phi_d"] = compute_phi_d(cfg.rabi_frequency, cfg.t_p, cfg.detuning)
    fields.update(overrides)
    return DimensionlessParams(**fields)


def period_from_tau(tau, lambda_L=constants.LAMBDA_D1, M=constants.CS133_MASS) -> float:
    """Inverse of the tau conversion: kick period in seconds."""
    G = 4.0 * math.pi / lambda_L
    return tau * M / (constants.HBAR * G**2)


def compute_phi_d(rabi, t_p, detuning) -> float:
    """Kick strength Omega^2 t_p / (8 delta_L) from the light-shift pulse."""
    if detuning == 0:
        raise ZeroDivisionError("detuning must be non-zero")
    if t_p < 0:
        raise ParameterError("t_p", "must be non-negative")
    return rabi**2 * t_p / (8.0 * detuning)


@dataclass(frozen=True)
class ResonanceInfo:
    r: int
    q: int
    periodic_beta_set: tuple
    ballistic_beta_set: tuple
    higher_order: bool


def resonance_info(tau) -> Optional[ResonanceInfo]:
    """Classify ``tau`` against the resonance condition ``tau = 4*pi*r/q``.

    Returns ``None`` off resonance.  On resonance the Floquet operator is
    periodic in momentum for ``beta = m/(2r)``.  Among those, ballistic
    (quadratic-in-time) growth needs the free phase to be constant along the
    ladder, which leaves ``beta = m/(2r)`` for q = 1 and ``beta = 1/2`` for
    q = 2.  For q >= 3 the periodic class is reported with ``higher_order``.
    """
    if not tau > 0:
        raise ParameterError("tau", "must be positive")
    x = tau / (4.0 * math.pi)
    frac = Fraction(x).limit_denominator(MAX_DENOMINATOR)
    if frac.numerator == 0 or abs(x - frac.numerator / frac.denominator) > RATIONAL_TOLERANCE:
        return None
    r, q = frac.numerator, frac.denominator
    periodic = tuple(m / (2 * r) for m in range(2 * r))
    if q == 1:
        ballistic = periodic
    elif q == 2:
        ballistic = (0.5,)
    else:
        ballistic = periodic
    return ResonanceInfo(r=r, q=q, periodic_beta_set=periodic,
                         ballistic_beta_set=ballistic, higher_order=q >= 3)


def parse_tau(text) -> float:
    """Parse a tau value such as ``6.283``, ``2pi`` or ``0.19*pi``."""
    s = str(text).strip().lower().replace(" ", "")
    if s.endswith("pi"):
        coeff = s[:-2].rstrip("*")
        return (float(coeff) if coeff else 1.0) * math.pi
    return float(s)


# Config-file keys.  Physical entries are SI; the rest are dimensionless.
PHYSICAL_KEYS = {
    "T": float, "lambda_L": float, "M": float, "t_p": float,
    "rabi_frequency": float, "detuning": float, "temperature_fwhm": float,
}
DIMENSIONLESS_KEYS = {
    "tau": parse_tau, "phi_d": parse_tau, "n_kicks": int, "n_se_mean": float,
    "n_max": int, "n_atoms": int, "seed": int, "initial_fwhm": float,
}
OTHER_KEYS = {
    "recoil_law": str, "window_min": float, "window_max": float,
    "threshold": float, "renormalize": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    "threads": int,
}


def load_config(path) -> dict:
    """Read a flat ``key = value`` file into a typed dict.

    ``#`` starts a comment.  Unknown keys raise :class:`ParameterError`.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    with open(path) as fh:
        parser.read_string("[config]\n" + fh.read())
    out = {}
    converters = {**PHYSICAL_KEYS, **DIMENSIONLESS_KEYS, **OTHER_KEYS}
    for key, raw in parser["config"].items():
        if key not in converters:
            raise ParameterError(key, "unknown config key")
        try:
            out[key] = converters[key](raw)
        except ValueError as exc:
            raise ParameterError(key, f"cannot parse {raw!r}") from exc
    return out


def params_from_mapping(values: dict, base: Optional[DimensionlessParams] = None) -> DimensionlessParams:
    """Build parameters from a config mapping, on top of ``base`` if given.

    A physical kick period ``T`` is converted through :func:`to_dimensionless`;
    explicit dimensionless keys then take precedence.
    """
    fields = base.as_dict() if base is not None else {}
    if "T" in values:
        phys = {k: values[k] for k in PHYSICAL_KEYS if k in values}
        derived = to_dimensionless(PhysicalConfig(**phys), phi_d=fields.get("phi_d", constants.PHI_D_DEFAULT))
        fields["tau"] = derived.tau
        fields["phi_d"] = derived.phi_d
        if "temperature_fwhm" in values:
            fields["initial_fwhm"] = derived.initial_fwhm
    fields.update({k: v for k, v in values.items() if k in DIMENSIONLESS_KEYS})
    if "tau" not in fields:
        raise ParameterError("tau", "missing (give tau or the physical period T)")
    return DimensionlessParams(**fields)

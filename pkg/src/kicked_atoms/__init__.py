"""Monte Carlo simulation of delta-kicked cold atoms with spontaneous emission."""

from .analytic import (QuadratureSpec, bessel_j, energy_law, resonant_profile, stationary_distribution)
from .core import BlochState, energy, evolve, free, kick, momentum_distribution, step
from .decoherence import SEModel, apply_recoil, decohere_between_kicks
from .detection import DetectionWindow, apply_window, enhancement_experiment, windowed_mean_energy
from .ensemble import EnsembleResult, InitialDistribution, MomentumHistogram, run_ensemble
from .errors import (EmptySignalError, KickedAtomsError, LadderOverflowError, NumericalError,
                     ParameterError, QuadratureError)
from .units import DimensionlessParams, PhysicalConfig, resonance_info, to_dimensionless

__version__ = "0.1.0"

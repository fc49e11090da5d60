"""Physical constants and the cesium/D1 laboratory defaults (SI units)."""

import math

HBAR = 1.054571817e-34  # J s (CODATA 2018, exact)
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg
CS133_MASS = 132.905451961 * ATOMIC_MASS_UNIT  # kg

# Standing-wave laser tuned near the cesium D1 line.
LAMBDA_D1 = 894.7e-9  # m
D1_DETUNING = 2.0 * math.pi * 30.0e9  # rad/s
PULSE_DURATION = 500.0e-9  # s

# Release-cloud momentum width, FWHM in units of hbar*k_L.
INITIAL_FWHM_HBAR_KL = 12.0

# Operating point used throughout the reproduction recipes.
PHI_D_DEFAULT = 0.8 * math.pi
N_KICKS_DEFAULT = 30

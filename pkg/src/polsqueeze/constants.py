"""Physical constants (CODATA, 6 significant digits)."""

import math

PLANCK = 6.62607e-34          # J s
SPEED_OF_LIGHT = 2.99792e8    # m/s
BOLTZMANN = 1.38065e-23       # J/K
HBAR = PLANCK / (2.0 * math.pi)

"""Physical constants (SI) used throughout the package."""

import math

H_PLANCK = 6.62607015e-34        # J s
HBAR = H_PLANCK / (2 * math.pi)  # J s
AMU = 1.66053906892e-27          # kg
M_RB85 = 84.911789732 * AMU      # kg, Rb-85 atomic mass
G_EARTH = 9.80665                # m/s^2, standard gravity

# Default lattice geometry: two beams crossing at 50 degrees, lambda ~ 780 nm
LATTICE_CONSTANT = 0.93e-6       # m
# Recoil energy quoted for that geometry (h * Hz); the exact h/(8 L^2 m)
# value is 679.2 Hz, the difference is within the experimental rounding.
RECOIL_HZ = 690.0

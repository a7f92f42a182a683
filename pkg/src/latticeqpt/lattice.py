"""Band structure and single-well physics of a tilted 1-D optical lattice.

The potential is V(x) = depth * E_r * sin^2(pi x / L) with the well depth
given in units of the lattice recoil energy E_r = h^2 / (8 L^2 m).  In the
scaled coordinate z = pi x / L the Bloch problem is the Mathieu equation,
which we solve by plane-wave diagonalization: the Hamiltonian at scaled
quasimomentum q (units of pi/L) is tridiagonal in the reciprocal-lattice
basis e^{i(q + 2j) z},

    H_jj = (q + 2j)^2 + depth/2,     H_j,j+1 = -depth/4.

Gravity tilts the lattice.  It does not enter the periodic band problem but
it sets which bands are trapped: a band counts as bound when its maximum
energy over the Brillouin zone stays below the downhill barrier of the
tilted potential, and it sets the Bloch frequency nu_B = m g L / h that
drives Landau-Zener escape at the avoided crossings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .constants import G_EARTH, H_PLANCK, HBAR, LATTICE_CONSTANT, M_RB85, RECOIL_HZ


class LatticeError(ValueError):
    """Invalid lattice configuration or unusable band structure."""


class ConvergenceError(RuntimeError):
    """Numerical result did not converge at the requested basis/grid size."""


@dataclass(frozen=True)
class LatticeConfig:
    """Static description of the lattice: depth, geometry, atom, numerics."""

    depth: float                      # lattice depth in E_r
    lattice_constant: float = LATTICE_CONSTANT   # L in meters
    recoil_energy: float = RECOIL_HZ  # E_r in Hz (energy / h)
    atom_mass: float = M_RB85         # kg
    gravity: float = G_EARTH          # m/s^2
    plane_wave_cutoff: int = 32       # reciprocal-lattice vectors kept: +-cutoff
    q_grid_size: int = 65             # quasimomentum samples over [0, pi/L]

    def __post_init__(self):
        if not (self.depth > 0):
            raise LatticeError(f"depth must be positive, got {self.depth}")
        if not (self.lattice_constant > 0):
            raise LatticeError("lattice_constant must be positive")
        if not (self.recoil_energy > 0):
            raise LatticeError("recoil_energy must be positive")
        if self.plane_wave_cutoff < 8:
            raise LatticeError("plane_wave_cutoff must be >= 8")
        if self.q_grid_size < 3:
            raise LatticeError("q_grid_size must be >= 3")

    @classmethod
    def from_geometry(cls, depth: float, lattice_constant: float = LATTICE_CONSTANT,
                      atom_mass: float = M_RB85, **kwargs) -> "LatticeConfig":
        """Build a config with the recoil energy derived from L and m."""
        er = H_PLANCK / (8.0 * lattice_constant ** 2 * atom_mass)
        return cls(depth=depth, lattice_constant=lattice_constant,
                   recoil_energy=er, atom_mass=atom_mass, **kwargs)

    @property
    def derived_recoil_hz(self) -> float:
        """h / (8 L^2 m) in Hz for this geometry."""
        return H_PLANCK / (8.0 * self.lattice_constant ** 2 * self.atom_mass)

    @property
    def bloch_frequency(self) -> float:
        """nu_B = m g L / h in 1/s."""
        return self.atom_mass * self.gravity * self.lattice_constant / H_PLANCK

    @property
    def tilt_per_period(self) -> float:
        """Gravitational energy drop over one lattice period, in E_r."""
        return self.bloch_frequency / self.recoil_energy


@dataclass(frozen=True)
class BandStructure:
    """Band energies over the Brillouin zone, in E_r, plus bound-band count."""

    energies: np.ndarray          # [band, iq]
    quasimomenta: np.ndarray      # units of pi/L, covering [0, 1]
    bound_band_count: int
    band_edges: tuple             # per band: (min, max) in E_r
    barrier_height: float         # downhill barrier of the tilted lattice, E_r

    def zone_center_gap(self) -> float:
        """E1 - E0 at q = 0, in E_r."""
        return float(self.energies[1, 0] - self.energies[0, 0])

    def band_width(self, n: int) -> float:
        lo, hi = self.band_edges[n]
        return hi - lo


@dataclass(frozen=True)
class BoundStatePair:
    """Localized real wavefunctions of the two bound bands of one well.

    psi0 is even and psi1 odd about the well center, so x00 = x11 = 0 and
    x01 > 0 by convention.  The plane-wave coefficients are kept so that
    displaced overlaps can be evaluated exactly in reciprocal space.
    """

    grid: np.ndarray              # position samples (m), one lattice period
    psi0: np.ndarray              # real, normalized on the grid
    psi1: np.ndarray
    x00: float = 0.0
    x01: float = 0.0
    x11: float = 0.0
    lattice_constant: float = LATTICE_CONSTANT
    coeff0: np.ndarray = field(default=None, repr=False)   # complex PW coeffs
    coeff1: np.ndarray = field(default=None, repr=False)
    g_indices: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class DisplacementCoefficients:
    """Two-level amplitudes of a rigid lattice displacement (plus loss)."""

    c00: float
    c10: float
    c11: float
    loss0: float
    loss1: float
    dx: float = 0.0

    def as_dict(self) -> dict:
        return {"c00": self.c00, "c10": self.c10, "c11": self.c11,
                "loss0": self.loss0, "loss1": self.loss1}


def _band_energies(depth: float, qhat: float, nbands: int, cutoff: int) -> np.ndarray:
    j = np.arange(-cutoff, cutoff + 1)
    diag = (qhat + 2.0 * j) ** 2 + depth / 2.0
    off = -depth / 4.0 * np.ones(2 * cutoff)
    w = eigh_tridiagonal(diag, off, eigvals_only=True, select="i",
                         select_range=(0, nbands - 1))
    return w


def _bloch_vectors(depth: float, qhat: float, nbands: int, cutoff: int):
    j = np.arange(-cutoff, cutoff + 1)
    diag = (qhat + 2.0 * j) ** 2 + depth / 2.0
    off = -depth / 4.0 * np.ones(2 * cutoff)
    w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, nbands - 1))
    return w, v, j


def tilted_barrier_height(config: LatticeConfig) -> float:
    """Downhill barrier of V = depth*sin^2(z) - (tilt/pi)*z, in E_r.

    Returns 0 when gravity washes out the wells entirely.
    """
    s = config.depth
    tau = config.tilt_per_period
    c = tau / (math.pi * s)
    if c >= 1.0:
        return 0.0
    zmin = math.asin(c) / 2.0
    zmax = (math.pi - math.asin(c)) / 2.0

    def v(z):
        return s * math.sin(z) ** 2 - (tau / math.pi) * z

    return v(zmax) - v(zmin)


def compute_bands(config: LatticeConfig, nbands: int = 8) -> BandStructure:
    """Diagonalize the Bloch Hamiltonian over the zone and count bound bands."""
    cutoff = config.plane_wave_cutoff
    nbands = min(nbands, 2 * cutoff)
    qs = np.linspace(0.0, 1.0, config.q_grid_size)
    energies = np.empty((nbands, len(qs)))
    for iq, q in enumerate(qs):
        energies[:, iq] = _band_energies(config.depth, q, nbands, cutoff)

    # basis-size check: growing the cutoff must not move the stored bands
    probe = _band_energies(config.depth, 0.0, nbands, cutoff + 8)
    drift = np.max(np.abs(probe - energies[:, 0]))
    if drift > 1e-8:
        raise ConvergenceError(
            f"plane-wave cutoff {cutoff} too small at depth {config.depth} E_r "
            f"(band energies drift by {drift:.2e} E_r when the basis grows)")

    barrier = tilted_barrier_height(config)
    band_max = energies.max(axis=1)
    bound = int(np.sum(band_max < barrier))
    edges = tuple((float(energies[n].min()), float(energies[n].max()))
                  for n in range(nbands))
    return BandStructure(energies=energies, quasimomenta=qs,
                         bound_band_count=bound, band_edges=edges,
                         barrier_height=barrier)


def minimum_depth_for_two_bound_bands(config: LatticeConfig) -> float:
    """Bisect the shallowest depth (E_r) at which two bands are bound."""

    def count(depth):
        cfg = LatticeConfig(depth=depth, lattice_constant=config.lattice_constant,
                            recoil_energy=config.recoil_energy,
                            atom_mass=config.atom_mass, gravity=config.gravity,
                            plane_wave_cutoff=config.plane_wave_cutoff,
                            q_grid_size=9)
        return compute_bands(cfg, nbands=4).bound_band_count

    lo, hi = 1.0, 40.0
    if count(hi) < 2:
        return math.inf
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if count(mid) >= 2:
            hi = mid
        else:
            lo = mid
    return hi


def bound_states(config: LatticeConfig, bands: BandStructure,
                 grid_points: int = 2048) -> BoundStatePair:
    """Localized pair from the q = 0 Bloch states of the two bound bands.

    The Bloch functions at zone center are parity eigenstates of the well;
    restricted to one period and phase-fixed to be real they serve as the
    single-well basis that the displacement coupling refers to.
    """
    if bands.bound_band_count < 2:
        thresh = minimum_depth_for_two_bound_bands(config)
        raise LatticeError(
            f"need two bound bands, found {bands.bound_band_count} at depth "
            f"{config.depth} E_r (two bands bind above ~{thresh:.1f} E_r for "
            f"this geometry)")

    cutoff = config.plane_wave_cutoff
    _, v, j = _bloch_vectors(config.depth, 0.0, 2, cutoff)
    v0, v1 = v[:, 0].copy(), v[:, 1].copy()

    # real parity gauge: psi0(0) > 0 and psi1'(0) > 0, hence x01 > 0
    if np.sum(v0) < 0:
        v0 = -v0
    if np.sum(j * v1) < 0:
        v1 = -v1
    u0 = v0.astype(complex)
    u1 = -1j * v1

    L = config.lattice_constant
    k = math.pi / L
    x = (np.arange(grid_points) + 0.5) / grid_points * L - L / 2.0
    phase = np.exp(1j * 2.0 * np.outer(x, j) * k)
    psi0 = np.real(phase @ u0)
    psi1 = np.real(phase @ u1)
    dx = x[1] - x[0]
    psi0 /= math.sqrt(np.sum(psi0 ** 2) * dx)
    psi1 /= math.sqrt(np.sum(psi1 ** 2) * dx)

    x00 = float(np.sum(psi0 * x * psi0) * dx)
    x11 = float(np.sum(psi1 * x * psi1) * dx)
    x01 = float(np.sum(psi0 * x * psi1) * dx)
    return BoundStatePair(grid=x, psi0=psi0, psi1=psi1,
                          x00=x00, x01=x01, x11=x11,
                          lattice_constant=L,
                          coeff0=u0, coeff1=u1, g_indices=j)


def displacement_coefficients(states: BoundStatePair, dx: float) -> DisplacementCoefficients:
    """Overlaps <psi_i(x)| psi_j(x - dx)> evaluated exactly in reciprocal space.

    Sign convention: c10 >= 0 for dx > 0.  The loss terms are the norm
    deficits, i.e. the weight pushed onto states outside the bound pair.
    """
    L = states.lattice_constant
    if abs(dx) >= L:
        raise LatticeError(f"|dx| must be < L = {L:.3g} m, got {dx:.3g}")
    k = math.pi / L
    ph = np.exp(-1j * 2.0 * states.g_indices * k * dx)
    u0, u1 = states.coeff0, states.coeff1

    def overlap(a, b):
        val = np.sum(np.conj(a) * b * ph)
        return float(np.real(val))

    c00 = overlap(u0, u0)
    c10 = overlap(u1, u0)
    c11 = overlap(u1, u1)
    loss0 = max(0.0, 1.0 - c00 ** 2 - c10 ** 2)
    loss1 = max(0.0, 1.0 - c10 ** 2 - c11 ** 2)
    return DisplacementCoefficients(c00=c00, c10=c10, c11=c11,
                                    loss0=loss0, loss1=loss1, dx=dx)


def displacement_operator(coeffs: DisplacementCoefficients) -> np.ndarray:
    """2x2 sub-unitary acting on (|0>, |1>) amplitudes for a displacement."""
    return np.array([[coeffs.c00, -coeffs.c10],
                     [coeffs.c10, coeffs.c11]], dtype=complex)


def calibrate_theta(coeffs: DisplacementCoefficients) -> float:
    """Analysis angle theta = atan(c10 / c00) of a displacement measurement."""
    if coeffs.c00 <= 0:
        raise LatticeError("calibrate_theta requires c00 > 0")
    return math.atan(coeffs.c10 / coeffs.c00)


def landau_zener_rates(config: LatticeConfig, bands: BandStructure,
                       n_rates: int = 3) -> np.ndarray:
    """Per-band escape rates nu_B * exp(-alpha_n) from the tilted lattice.

    alpha_n is the standard two-band Landau-Zener exponent for the avoided
    crossing band n meets when gravity sweeps the quasimomentum: the gap is
    the adjacent-band splitting at the crossing point (zone edge for even n,
    zone center for odd n) and the sweep rate comes from the free-particle
    slopes, d(dE)/dt = 2 (n+1) hbar k g.
    """
    if config.gravity <= 0:
        raise LatticeError("landau_zener_rates requires gravity > 0")
    cutoff = config.plane_wave_cutoff
    e_center = _band_energies(config.depth, 0.0, n_rates + 1, cutoff)
    e_edge = _band_energies(config.depth, 1.0, n_rates + 1, cutoff)
    k = math.pi / config.lattice_constant
    nu_b = config.bloch_frequency
    er = config.recoil_energy
    rates = np.empty(n_rates)
    for n in range(n_rates):
        gap_er = (e_edge[n + 1] - e_edge[n]) if n % 2 == 0 else (e_center[n + 1] - e_center[n])
        delta = gap_er * er * H_PLANCK                     # J
        sweep = 2.0 * (n + 1) * HBAR * k * config.gravity  # d(dE)/dt in J/s
        alpha = 2.0 * math.pi * (delta / 2.0) ** 2 / (HBAR * sweep)
        rates[n] = nu_b * math.exp(-alpha)
    return rates

"""End-to-end simulation of the lattice experiment.

State preparation (filtering, displacements, timed waits), resonant drives
of the lattice position, and band-mapped measurement with optional binomial
shot noise.  The two-level state follows the conventions of the states
module; displacements apply the sub-unitary built from the overlap
coefficients, so the trace tracks atoms lost to unbound states.

Band-mapped measurement is idealized as a projective band measurement.  The

physically-realized analysis projections (displace, optionally wait a
quarter period, then measure the band populations) are provided separately
and agree with the ideal projections once the analytic loss factor is
divided out; the dataset synthesizer records the ideal values.
"""

from __future__ import annotations

from dataclasses import dataclass
import functools
import math
from typing import Optional, Union

import numpy as np

from .channels import ChoiMatrix, choi_from_kraus, compose, dephasing_channel, \
    rotation_channel, _apply_raw
from .constants import HBAR
from .lattice import BandStructure, BoundStatePair, ConvergenceError, \
    LatticeConfig, LatticeError, bound_states, compute_bands, calibrate_theta, \
    displacement_coefficients, displacement_operator
from .mle import TomographyDataset, TomographyRecord
from .states import AnalysisBasis, DensityMatrix, ProjectionRecord


class SequenceError(ValueError):
    """Malformed pulse sequence or incompatible lattice."""


# ---------------------------------------------------------------- steps

@dataclass(frozen=True)
class Filter:
    """Reset to a band-filtered sample: diag(p, 1-p)."""
    purity: Optional[float] = None     # None: take the noise model's value


@dataclass(frozen=True)
class Displace:
    dx: float                          # meters


@dataclass(frozen=True)
class Wait:
    dt: float                          # seconds


@dataclass(frozen=True)
class Drive:
    kind: str                          # "sine" or "cosine"
    amplitude: float                   # x_m in meters
    periods: float = 1.0


@dataclass(frozen=True)
class Measure:
    """Terminal band-mapped measurement of all four analysis projections."""
    label: Optional[str] = None        # optional single-projector tag


Step = Union[Filter, Displace, Wait, Drive, Measure]


@dataclass(frozen=True)
class PulseSequence:
    steps: tuple

    def __post_init__(self):
        for idx, st in enumerate(self.steps):
            if isinstance(st, Measure) and idx != len(self.steps) - 1:
                raise SequenceError("Measure must be the terminal step")
            if isinstance(st, Wait) and st.dt < 0:
                raise SequenceError("Wait needs dt >= 0")
            if isinstance(st, Drive):
                if st.periods < 0:
                    raise SequenceError("Drive needs periods >= 0")
                if st.kind not in ("sine", "cosine"):
                    raise SequenceError(f"unknown drive kind {st.kind!r}")

    @property
    def has_measurement(self) -> bool:
        return bool(self.steps) and isinstance(self.steps[-1], Measure)


@dataclass(frozen=True)
class NoiseModel:
    dephasing_mode: str = "none"       # none | fixed_lambda | q_ensemble
    lambda_per_period: float = 1.0
    q_samples: int = 64
    filter_purity: float = 0.95
    shots: int = 0                      # 0: exact probabilities
    seed: int = 0

    def __post_init__(self):
        if self.dephasing_mode not in ("none", "fixed_lambda", "q_ensemble"):
            raise SequenceError(f"unknown dephasing mode {self.dephasing_mode!r}")
        if not (0.0 <= self.lambda_per_period <= 1.0):
            raise SequenceError("lambda_per_period must be in [0, 1]")
        if not (0.5 <= self.filter_purity <= 1.0):
            raise SequenceError("filter_purity must be in [0.5, 1]")
        if self.q_samples < 8:
            raise SequenceError("q_samples must be >= 8")

    def to_json(self) -> dict:
        return {"dephasing_mode": self.dephasing_mode,
                "lambda_per_period": self.lambda_per_period,
                "q_samples": self.q_samples,
                "filter_purity": self.filter_purity}

    @classmethod
    def from_json(cls, obj: dict, shots: int = 0, seed: int = 0) -> "NoiseModel":
        return cls(dephasing_mode=obj.get("dephasing_mode", "none"),
                   lambda_per_period=obj.get("lambda_per_period", 1.0),
                   q_samples=obj.get("q_samples", 64),
                   filter_purity=obj.get("filter_purity", 0.95),
                   shots=shots, seed=seed)


# ---------------------------------------------------------------- context

@functools.lru_cache(maxsize=8)
def _context(config: LatticeConfig):
    bands = compute_bands(config)
    if bands.bound_band_count < 2:
        raise SequenceError(
            f"simulation needs two bound bands; depth {config.depth} E_r has "
            f"{bands.bound_band_count}")
    states = bound_states(config, bands)
    gap_hz = bands.zone_center_gap() * config.recoil_energy
    return bands, states, gap_hz


def oscillation_frequency(config: LatticeConfig) -> float:
    """Level splitting of the two bound states, in Hz."""
    return _context(config)[2]


def analysis_basis_for(config: LatticeConfig,
                       analysis_dx: Optional[float] = None) -> AnalysisBasis:
    """Analysis angle from the configured measurement displacement."""
    _, states, _ = _context(config)
    dx = config.lattice_constant / 8.0 if analysis_dx is None else analysis_dx
    return AnalysisBasis(calibrate_theta(displacement_coefficients(states, dx)))


def _coherence_factor(config: LatticeConfig, noise: NoiseModel, dt: float,
                      bands: BandStructure) -> float:
    if noise.dephasing_mode == "none" or dt == 0.0:
        return 1.0
    if noise.dephasing_mode == "fixed_lambda":
        period = 1.0 / (bands.zone_center_gap() * config.recoil_energy)
        return noise.lambda_per_period ** (dt / period)
    return q_ensemble_dephasing(config, bands, dt, n_q=noise.q_samples)


# ---------------------------------------------------------------- drives

def q_ensemble_dephasing(config: LatticeConfig, bands: BandStructure,
                         dt: float, n_q: int = 64) -> float:
    """lambda(dt) = |<exp(-i (E1(q)-E0(q)) dt / hbar)>_q| over the zone."""
    if bands.bound_band_count < 2:
        raise SequenceError("q_ensemble_dephasing needs two bound bands")
    from .lattice import _band_energies
    qs = (np.arange(n_q) + 0.5) / n_q        # half of the zone; gaps are even in q
    gaps = np.empty(n_q)
    for i, q in enumerate(qs):
        e = _band_energies(config.depth, q, 2, config.plane_wave_cutoff)
        gaps[i] = e[1] - e[0]
    omega = 2.0 * math.pi * gaps * config.recoil_energy
    return float(abs(np.mean(np.exp(-1j * omega * dt))))


def _drive_force(kind: str, x_m: float, omega0: float, mass: float):
    """Inertial force F(t) = -m d^2x_lattice/dt^2 in the lattice frame."""
    amp = mass * x_m * omega0 ** 2
    if kind == "sine":
        return lambda t: amp * math.sin(omega0 * t)
    return lambda t: amp * math.cos(omega0 * t)


def _rk4_propagator(h_of_t, t_final: float, n_steps: int) -> np.ndarray:
    u = np.eye(2, dtype=complex)
    dt = t_final / n_steps
    t = 0.0
    for _ in range(n_steps):
        k1 = -1j / HBAR * (h_of_t(t) @ u)
        k2 = -1j / HBAR * (h_of_t(t + dt / 2) @ (u + dt / 2 * k1))
        k3 = -1j / HBAR * (h_of_t(t + dt / 2) @ (u + dt / 2 * k2))
        k4 = -1j / HBAR * (h_of_t(t + dt) @ (u + dt * k3))
        u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    return u


def simulate_drive(config: LatticeConfig, states: BoundStatePair, kind: str,
                   x_m: float, periods: float,
                   steps_per_period: int = 1024,
                   drive_frequency: Optional[float] = None) -> np.ndarray:
    """Propagator of the driven two-level system over the pulse.

    H(t) = diag(0, hbar*w) - F(t) X with F(t) = -m * d^2(x_lattice)/dt^2 and
    X the position matrix of the bound pair.  Fixed-step RK4; the step count
    is doubled once and the two propagators must agree to 1e-6.
    """
    if abs(x_m) >= config.lattice_constant / 2:
        raise SequenceError("drive amplitude must stay below L/2")
    if steps_per_period < 512:
        raise SequenceError("need at least 2^9 integration steps per period")
    gap_hz = oscillation_frequency(config)
    omega = 2.0 * math.pi * gap_hz
    omega0 = omega if drive_frequency is None else drive_frequency
    if periods == 0.0 or x_m == 0.0:
        t_final = periods * 2.0 * math.pi / omega0 if omega0 else 0.0
        return np.diag([1.0, np.exp(-1j * omega * t_final)]).astype(complex)

    x_mat = np.array([[states.x00, states.x01],
                      [states.x01, states.x11]], dtype=complex)
    h0 = np.diag([0.0, HBAR * omega]).astype(complex)
    force = _drive_force(kind, x_m, omega0, config.atom_mass)

    def h_of_t(t):
        return h0 - force(t) * x_mat

    t_final = periods * 2.0 * math.pi / omega0
    n = int(math.ceil(steps_per_period * periods))
    u1 = _rk4_propagator(h_of_t, t_final, n)
    u2 = _rk4_propagator(h_of_t, t_final, 2 * n)
    if np.max(np.abs(u1 - u2)) > 1e-6:
        raise ConvergenceError(
            f"drive propagator not converged: step halving moved it by "
            f"{np.max(np.abs(u1 - u2)):.2e}")
    return u2


def drive_propagator_displacement_route(config: LatticeConfig, kind: str,
                                        x_m: float, periods: float,
                                        steps_per_period: int = 1024) -> np.ndarray:
    """Cross-check propagator: free evolution chopped by finite displacements.

    Sub-unitary, since each displacement leaks amplitude to unbound states.
    """
    _, states, gap_hz = _context(config)
    omega = 2.0 * math.pi * gap_hz

    def x_lat(t):
        if kind == "sine":
            return x_m * math.sin(omega * t)
        return x_m * (math.cos(omega * t) - 1.0)

    t_final = periods * 2.0 * math.pi / omega
    n = int(math.ceil(steps_per_period * periods))
    dt = t_final / n
    u = np.eye(2, dtype=complex)
    x_prev = x_lat(0.0)
    for i in range(1, n + 1):
        u = np.diag([1.0, np.exp(-1j * omega * dt)]) @ u
        x_now = x_lat(i * dt)
        step = x_now - x_prev
        # lattice shifts by +step, so the state displaces by -step in the
        # lattice frame
        k = displacement_operator(displacement_coefficients(states, -step))
        u = k @ u
        x_prev = x_now
    return u


# ---------------------------------------------------------------- sequences

def _sample_record(m: np.ndarray, shots: int, seed: int, stream: int) -> ProjectionRecord:
    """Sample the four projections with counter-based, order-independent streams.

    One band-mapped run resolves both band populations at once, so m1 and m2
    come from a single binomial split (their sum stays 1 exactly); the two
    displaced projections are separate experimental runs and get independent
    draws.
    """
    if not shots:
        return ProjectionRecord(m=tuple(float(v) for v in m))

    def draw(proj, p):
        key = (np.uint64(seed) << np.uint64(16)) ^ np.uint64(stream * 4 + proj)
        gen = np.random.Generator(np.random.Philox(key=int(key)))
        return int(gen.binomial(shots, float(np.clip(p, 0.0, 1.0))))

    n1 = draw(0, m[0] / max(m[0] + m[1], 1e-12))
    counts = [n1, shots - n1, draw(2, m[2]), draw(3, m[3])]
    return ProjectionRecord(m=tuple(c / shots for c in counts), shots=shots,
                            counts=tuple(counts))


def simulate_sequence(seq: PulseSequence, config: LatticeConfig,
                      noise: NoiseModel, analysis_dx: Optional[float] = None,
                      stream: int = 0):
    """Run a pulse sequence; returns the pre-measurement DensityMatrix, or a
    ProjectionRecord when the sequence ends in a Measure."""
    bands, states, gap_hz = _context(config)
    omega = 2.0 * math.pi * gap_hz
    rho = np.diag([1.0, 0.0]).astype(complex)
    for st in seq.steps:
        if isinstance(st, Filter):
            p = noise.filter_purity if st.purity is None else st.purity
            rho = np.diag([p, 1.0 - p]).astype(complex)
        elif isinstance(st, Displace):
            if abs(st.dx) >= config.lattice_constant / 2:
                raise SequenceError("displacement must stay below L/2")
            k = displacement_operator(displacement_coefficients(states, st.dx))
            rho = k @ rho @ k.conj().T
        elif isinstance(st, Wait):
            lam = _coherence_factor(config, noise, st.dt, bands)
            rho[0, 1] *= lam * np.exp(1j * omega * st.dt)
            rho[1, 0] = np.conj(rho[0, 1])
        elif isinstance(st, Drive):
            u = simulate_drive(config, states, st.kind, st.amplitude, st.periods)
            rho = u @ rho @ u.conj().T
        elif isinstance(st, Measure):
            basis = analysis_basis_for(config, analysis_dx)
            rho_n = rho / np.real(np.trace(rho))
            kets = basis.kets()
            m = np.array([np.real(k.conj() @ rho_n @ k) for k in kets])
            return _sample_record(m, noise.shots, noise.seed, stream)
    return DensityMatrix(rho)


def realized_projections(rho: DensityMatrix, config: LatticeConfig,
                         analysis_dx: Optional[float] = None) -> ProjectionRecord:
    """Analysis projections the way the experiment takes them.

    m1, m2: band populations.  m3: displace the lattice by -dx, then measure
    the ground-band population, divided by the analytic projection norm
    (1 - loss0).  m4: wait a quarter period, displace by +dx, same
    normalization.  Equals project(rho, basis) for the calibrated basis.
    """
    _, states, gap_hz = _context(config)
    dx = config.lattice_constant / 8.0 if analysis_dx is None else analysis_dx
    coeffs = displacement_coefficients(states, dx)
    k_minus = displacement_operator(displacement_coefficients(states, -dx))
    k_plus = displacement_operator(coeffs)
    norm = 1.0 - coeffs.loss0
    m = rho.matrix / rho.trace
    m1 = float(np.real(m[0, 0]))
    m2 = float(np.real(m[1, 1]))
    out3 = k_minus @ m @ k_minus.conj().T
    m3 = float(np.real(out3[0, 0])) / norm
    quarter = m.copy()
    quarter[0, 1] *= 1j            # e^{+i omega T/4}
    quarter[1, 0] = np.conj(quarter[0, 1])
    out4 = k_plus @ quarter @ k_plus.conj().T
    m4 = float(np.real(out4[0, 0])) / norm
    return ProjectionRecord(m=(m1, m2, m3, m4))


# ---------------------------------------------------------------- datasets

@dataclass(frozen=True)
class Operation:
    """What happens between the two tomography rounds."""

    kind: str                          # free_period | sine_drive | cosine_drive | planted
    periods: float = 1.0
    amplitude: float = 26e-9
    choi: Optional[ChoiMatrix] = None

    @classmethod
    def free_period(cls, periods: float = 1.0) -> "Operation":
        return cls(kind="free_period", periods=periods)

    @classmethod
    def drive(cls, kind: str, amplitude: float = 26e-9, periods: float = 1.0) -> "Operation":
        return cls(kind=f"{kind}_drive", amplitude=amplitude, periods=periods)

    @classmethod
    def planted(cls, choi: ChoiMatrix) -> "Operation":
        return cls(kind="planted", choi=choi)


def _rotation_z_channel(angle_rad: float) -> ChoiMatrix:
    return rotation_channel("z", math.degrees(angle_rad))


def operation_channel(op: Operation, config: LatticeConfig,
                      noise: NoiseModel) -> ChoiMatrix:
    """Exact Choi matrix of the operation as the simulator applies it."""
    bands, states, gap_hz = _context(config)
    period = 1.0 / gap_hz
    if op.kind == "planted":
        if op.choi is None:
            raise SequenceError("planted operation needs a Choi matrix")
        return op.choi
    if op.kind == "free_period":
        dt = op.periods * period
        lam = _coherence_factor(config, noise, dt, bands)
        omega_dt = 2.0 * math.pi * gap_hz * dt
        # rho01 -> rho01 e^{+i w dt}: Bloch rotation about z by -w dt
        return compose(dephasing_channel(lam), _rotation_z_channel(-omega_dt))
    if op.kind in ("sine_drive", "cosine_drive"):
        u = simulate_drive(config, states, op.kind.split("_")[0],
                           op.amplitude, op.periods)
        drive_chan = choi_from_kraus([u])
        dt = op.periods * period
        lam = _coherence_factor(config, noise, dt, bands)
        if lam < 1.0:
            # simplified noise placement: dephasing after the coherent pulse
            return compose(dephasing_channel(lam), drive_chan)
        return drive_chan
    raise SequenceError(f"unknown operation kind {op.kind!r}")


def prepare_inputs(config: LatticeConfig, noise: NoiseModel,
                   analysis_dx: Optional[float] = None,
                   mixed_recipe: str = "unfiltered"):
    """The four tomography inputs: ground, mixed, real and imaginary coherence."""
    bands, states, gap_hz = _context(config)
    dx = config.lattice_constant / 8.0 if analysis_dx is None else analysis_dx
    period = 1.0 / gap_hz
    p = noise.filter_purity
    ground = np.diag([p, 1.0 - p]).astype(complex)

    k = displacement_operator(displacement_coefficients(states, dx))
    coh = k @ ground @ k.conj().T
    coh = coh / np.real(np.trace(coh))

    if mixed_recipe == "unfiltered":
        mixed = np.diag([0.5, 0.5]).astype(complex)
    elif mixed_recipe == "decohered":
        mixed = np.diag(np.diag(coh)).astype(complex)
    else:
        raise SequenceError(f"unknown mixed recipe {mixed_recipe!r}")

    lam = _coherence_factor(config, noise, period / 4.0, bands)
    imag = coh.copy()
    imag[0, 1] *= lam * 1j
    imag[1, 0] = np.conj(imag[0, 1])

    labels = ("ground", "mixed", "real_coherence", "imag_coherence")
    return labels, [DensityMatrix(ground), DensityMatrix(mixed),
                    DensityMatrix(coh), DensityMatrix(imag)]


def synthesize_qpt_dataset(operation: Operation, config: LatticeConfig,
                           noise: NoiseModel, shots: int, seed: int,
                           analysis_dx: Optional[float] = None,
                           mixed_recipe: str = "unfiltered"):
    """Full QPT protocol on a known channel.

    Returns (TomographyDataset, ground-truth ChoiMatrix).  Each input is
    prepared, measured, passed through the operation and measured again;
    projections are survival-renormalized and binomially sampled per
    projector from independent counter-based streams.
    """
    basis = analysis_basis_for(config, analysis_dx)
    labels, rhos = prepare_inputs(config, noise, analysis_dx, mixed_recipe)
    truth = operation_channel(operation, config, noise)
    truth_m = truth.matrix
    records = []
    for idx, (label, rho) in enumerate(zip(labels, rhos)):
        m_in = np.array([np.real(k.conj() @ rho.matrix @ k) for k in basis.kets()])
        out = _apply_raw(truth_m, rho.matrix)
        out = out / max(np.real(np.trace(out)), 1e-12)
        m_out = np.array([np.real(k.conj() @ out @ k) for k in basis.kets()])
        rec_in = _sample_record(m_in, shots, seed, stream=2 * idx)
        rec_out = _sample_record(m_out, shots, seed, stream=2 * idx + 1)
        records.append(TomographyRecord(label=label, input_projections=rec_in,
                                        output_projections=rec_out))
    dataset = TomographyDataset(theta=basis.theta, shots_per_projector=shots,
                                records=tuple(records))
    return dataset, truth

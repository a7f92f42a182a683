"""Two-level density matrices, projective records, and state tomography.

Conventions: basis order (|0>, |1>) with rho01 = <0|rho|1>.  Free evolution
with level splitting omega rotates the coherence as rho01 -> rho01 e^{+i w t}
(the excited amplitude acquires e^{-i w t}), which is what turns a real
coherence into the imaginary-coherence state after a quarter period.
Sub-normalized states (trace < 1) are allowed and encode population lost to
unbound lattice states.
"""

from __future__ import annotations

from dataclasses import dataclass
import cmath
import math

import numpy as np

TRACE_TOL = 1e-9
EIG_TOL = 1e-9


class StateError(ValueError):
    """Violated density-matrix or analysis-basis invariants."""


class DensityMatrix:
    """Hermitian PSD 2x2 matrix with trace in (0, 1]."""

    __slots__ = ("_m",)

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (2, 2):
            raise StateError(f"density matrix must be 2x2, got {m.shape}")
        # store exactly Hermitian: mirror the upper off-diagonal
        m = np.array([[m[0, 0].real, m[0, 1]],
                      [np.conj(m[0, 1]), m[1, 1].real]], dtype=complex)
        tr = m[0, 0].real + m[1, 1].real
        if not (0.0 < tr <= 1.0 + TRACE_TOL):
            raise StateError(f"trace must be in (0, 1], got {tr}")
        if np.linalg.eigvalsh(m).min() < -EIG_TOL:
            raise StateError("density matrix is not positive semidefinite")
        self._m = m

    @property
    def matrix(self) -> np.ndarray:
        return self._m.copy()

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self._m)))

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self._m @ self._m)))

    def renormalized(self) -> "DensityMatrix":
        return DensityMatrix(self._m / self.trace)

    def bloch_vector(self) -> np.ndarray:
        m = self._m
        return np.array([2 * m[0, 1].real, -2 * m[0, 1].imag,
                         (m[0, 0] - m[1, 1]).real])

    def __repr__(self):
        return f"DensityMatrix({np.round(self._m, 6).tolist()})"

    def to_json(self) -> dict:
        return {"re": np.real(self._m).tolist(), "im": np.imag(self._m).tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "DensityMatrix":
        return cls(np.array(obj["re"]) + 1j * np.array(obj["im"]))

    @classmethod
    def pure(cls, ket) -> "DensityMatrix":
        k = np.asarray(ket, dtype=complex)
        k = k / np.linalg.norm(k)
        return cls(np.outer(k, k.conj()))

    @classmethod
    def ground(cls) -> "DensityMatrix":
        return cls(np.diag([1.0, 0.0]))

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix":
        return cls(np.eye(2) / 2)


@dataclass(frozen=True)
class AnalysisBasis:
    """Projection states {|0>, |1>, |theta_x>, |theta_y>} for tomography."""

    theta: float

    def __post_init__(self):
        if not (0.0 < self.theta < math.pi / 2):
            raise StateError(f"theta must lie in (0, pi/2), got {self.theta}")

    def kets(self) -> list:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return [np.array([1.0, 0.0], dtype=complex),
                np.array([0.0, 1.0], dtype=complex),
                np.array([c, s], dtype=complex),
                np.array([c, -1j * s], dtype=complex)]


@dataclass(frozen=True)
class ProjectionRecord:
    """Measured projections (m1..m4) onto the analysis states."""

    m: tuple                      # four probabilities
    shots: int = 0                # 0 means exact probabilities
    counts: tuple = None          # raw counts when sampled

    def __post_init__(self):
        if len(self.m) != 4:
            raise StateError("projection record needs four entries")
        for v in self.m:
            if not (-1e-12 <= v <= 1.0 + 1e-12):
                raise StateError(f"projection {v} outside [0, 1]")
        if self.shots:
            var = (self.m[0] * (1 - self.m[0]) + self.m[1] * (1 - self.m[1]))
            sigma = math.sqrt(var / self.shots) + 1.0 / self.shots
            if self.m[0] + self.m[1] > 1.0 + 3.0 * sigma + 1e-12:
                raise StateError("band populations m1 + m2 exceed 1 beyond noise")
        elif self.m[0] + self.m[1] > 1.0 + 1e-9:
            raise StateError("band populations m1 + m2 exceed 1")

    def as_array(self) -> np.ndarray:
        return np.array(self.m, dtype=float)

    def to_json(self) -> dict:
        out = {"m": list(self.m)}
        if self.shots:
            out["shots"] = self.shots
        if self.counts is not None:
            out["counts"] = list(self.counts)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ProjectionRecord":
        return cls(m=tuple(obj["m"]), shots=obj.get("shots", 0),
                   counts=tuple(obj["counts"]) if "counts" in obj else None)


def project(rho: DensityMatrix, basis: AnalysisBasis) -> ProjectionRecord:
    """m_i = <Phi_i| rho |Phi_i> for the four analysis states."""
    m = rho.matrix
    vals = tuple(float(np.real(k.conj() @ m @ k)) for k in basis.kets())
    return ProjectionRecord(m=vals)


def reconstruct_linear(record: ProjectionRecord, basis: AnalysisBasis) -> np.ndarray:
    """Invert the four projections to a (possibly unphysical) 2x2 matrix.

    The population offset m1 cos^2(theta) + m2 sin^2(theta) is subtracted
    from both the m3 and m4 quadratures, making this the exact inverse of
    project() for any theta in (0, pi/2).
    """
    th = basis.theta
    c, s = math.cos(th), math.sin(th)
    if abs(s * c) < 1e-12:
        raise StateError("analysis basis is singular at theta = 0 or pi/2")
    m1, m2, m3, m4 = record.m
    off = m1 * c * c + m2 * s * s
    re = (m3 - off) / (2.0 * s * c)
    im = (m4 - off) / (2.0 * s * c)
    return np.array([[m1, re + 1j * im], [re - 1j * im, m2]], dtype=complex)


def physical_projection(rho_raw: np.ndarray, target_trace: float = 1.0) -> DensityMatrix:
    """Closest (Frobenius) PSD matrix with the given trace.

    Eigendecompose, shift the spectrum to the target trace, then clip
    negative eigenvalues while redistributing their weight uniformly over
    the remaining ones (the usual water-filling construction, optimal for
    the Frobenius norm at fixed trace).  Idempotent on physical inputs.
    """
    if target_trace <= 0:
        raise StateError("target_trace must be positive")
    if isinstance(rho_raw, DensityMatrix):
        m = rho_raw.matrix
    else:
        m = np.asarray(rho_raw, dtype=complex)
    if not np.allclose(m, m.conj().T, atol=1e-9):
        raise StateError("physical_projection requires a Hermitian input")
    m = (m + m.conj().T) / 2.0
    w, v = np.linalg.eigh(m)
    w = w[::-1].copy()
    v = v[:, ::-1]
    n = len(w)
    w += (target_trace - w.sum()) / n
    acc = 0.0
    i = n
    while i > 0 and w[i - 1] + acc / i < 0.0:
        acc += w[i - 1]
        i -= 1
    w_new = np.zeros(n)
    w_new[:i] = w[:i] + acc / max(i, 1)
    return DensityMatrix((v * w_new) @ v.conj().T)


def free_evolution(rho: DensityMatrix, dt: float, omega: float,
                   coherence_factor: float = 1.0) -> DensityMatrix:
    """Phase evolution at splitting omega (rad/s) with coherence decay.

    Populations are untouched; rho01 -> rho01 * lambda * e^{+i omega dt}.
    """
    lam = coherence_factor
    if not (0.0 <= lam <= 1.0):
        raise StateError(f"coherence_factor must be in [0, 1], got {lam}")
    m = rho.matrix
    m[0, 1] *= lam * cmath.exp(1j * omega * dt)
    m[1, 0] = np.conj(m[0, 1])
    return DensityMatrix(m)

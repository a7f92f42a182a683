"""Qubit channel representations: Choi matrix, Kraus sets, Bloch affine maps.

Choi convention: block (i, j) of the 4x4 matrix is E(|i><j|), i.e.
C[2i+a, 2j+b] = <a| E(|i><j|) |b>, so the channel acts as
rho_out = sum_ij rho_ij C_(i,j).  Under this indexing vec(A) for a Kraus
operator A is the column-major flattening, and C = sum_i vec(A_i) vec(A_i)^+.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .states import DensityMatrix

CP_TOL = 1e-7
TP_TOL = 1e-6

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)
_AXES = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}

CHOI_CONVENTION = "block_ij_E_of_ketbra"


class ChannelError(ValueError):
    """Violated channel invariants (complete positivity, trace condition)."""


class ChoiMatrix:
    """4x4 Hermitian PSD matrix encoding a (possibly trace-decreasing) channel."""

    __slots__ = ("_m",)

    def __init__(self, matrix, require_cp: bool = True):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ChannelError(f"Choi matrix must be 4x4, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > 1e-9:
            raise ChannelError("Choi matrix must be Hermitian within 1e-9")
        m = (m + m.conj().T) / 2.0
        if require_cp and np.linalg.eigvalsh(m).min() < -CP_TOL:
            raise ChannelError(
                f"Choi matrix has eigenvalue {np.linalg.eigvalsh(m).min():.3e}"
                " < -1e-7: channel is not completely positive")
        self._m = m

    @property
    def matrix(self) -> np.ndarray:
        return self._m.copy()

    def block(self, i: int, j: int) -> np.ndarray:
        """E(|i><j|), the (i, j) 2x2 submatrix."""
        return self._m[2 * i:2 * i + 2, 2 * j:2 * j + 2].copy()

    def partial_trace_output(self) -> np.ndarray:
        """2x2 matrix M_ij = Tr E(|i><j|); equals I for a TP channel."""
        return np.einsum("iaja->ij", self._m.reshape(2, 2, 2, 2))

    @property
    def is_trace_preserving(self) -> bool:
        dev = self.partial_trace_output() - np.eye(2)
        return bool(np.max(np.abs(dev)) <= TP_TOL)

    @property
    def is_trace_nonincreasing(self) -> bool:
        dev = np.eye(2) - self.partial_trace_output()
        return bool(np.linalg.eigvalsh((dev + dev.conj().T) / 2).min() >= -TP_TOL)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self._m).min())

    def to_json(self) -> dict:
        return {"re": np.real(self._m).tolist(), "im": np.imag(self._m).tolist(),
                "choi_convention": CHOI_CONVENTION}

    @classmethod
    def from_json(cls, obj: dict) -> "ChoiMatrix":
        tag = obj.get("choi_convention", CHOI_CONVENTION)
        if tag != CHOI_CONVENTION:
            raise ChannelError(f"unsupported Choi convention {tag!r}")
        return cls(np.array(obj["re"]) + 1j * np.array(obj["im"]))

    def __repr__(self):
        return f"ChoiMatrix({np.round(self._m, 6).tolist()})"


@dataclass(frozen=True)
class KrausSet:
    """Operators {A_i} with sum A_i^+ A_i <= I, ordered by decreasing weight."""

    operators: tuple              # 2x2 complex arrays
    weights: tuple                # Choi eigenvalues kappa_i
    remainders: tuple = ()        # Tr[R_i^+ R_i] with R_i = A_i - proj_{I,sz}(A_i)

    def completeness(self) -> np.ndarray:
        """sum A^+ A; equals I for a trace-preserving channel."""
        return sum(A.conj().T @ A for A in self.operators)

    def to_json(self) -> dict:
        return {"operators": [{"re": np.real(A).tolist(), "im": np.imag(A).tolist()}
                              for A in self.operators],
                "weights": list(self.weights),
                "remainders": list(self.remainders)}

    @classmethod
    def from_json(cls, obj: dict) -> "KrausSet":
        ops = tuple(np.array(o["re"]) + 1j * np.array(o["im"])
                    for o in obj["operators"])
        return cls(operators=ops, weights=tuple(obj["weights"]),
                   remainders=tuple(obj.get("remainders", ())))


@dataclass(frozen=True)
class BlochAffineMap:
    """r -> M r + t action on Bloch vectors."""

    linear: np.ndarray            # 3x3 real
    translation: np.ndarray      # 3-vector

    def apply_to(self, r) -> np.ndarray:
        return self.linear @ np.asarray(r, dtype=float) + self.translation


@dataclass(frozen=True)
class EllipsoidMetrics:
    """Shape summary of the image of the Bloch sphere."""

    semi_axes: tuple              # singular values of M, descending
    rotation_axis: tuple          # unit 3-vector
    rotation_angle: float         # degrees in [0, 180]
    translation_norm: float
    reflection: bool = False      # orthogonal factor had det < 0
    degenerate: bool = False      # M singular: rotation undefined on null space


@dataclass(frozen=True)
class ChannelDiagnostics:
    cp_min_eigenvalue: float
    tp_deviation: float
    trace_loss: float
    coherence_retention: float
    population_transfer: float


def apply(choi: ChoiMatrix, rho: DensityMatrix) -> DensityMatrix:
    """rho_out = sum_ij C_(i,j) rho_ij."""
    out = _apply_raw(choi.matrix, rho.matrix)
    return DensityMatrix(out)


def _apply_raw(choi_m: np.ndarray, rho_m: np.ndarray) -> np.ndarray:
    c4 = choi_m.reshape(2, 2, 2, 2)     # indices (i, a, j, b)
    return np.einsum("ij,iajb->ab", rho_m, c4)


def choi_from_kraus(kraus) -> ChoiMatrix:
    """C = sum_i vec(A_i) vec(A_i)^+ with column-major vec."""
    ops = kraus.operators if isinstance(kraus, KrausSet) else kraus
    c = np.zeros((4, 4), dtype=complex)
    for a in ops:
        v = np.asarray(a, dtype=complex).flatten(order="F")
        c += np.outer(v, v.conj())
    return ChoiMatrix(c)


def kraus_from_choi(choi: ChoiMatrix) -> KrausSet:
    """Canonical Kraus operators A_i = sqrt(kappa_i) k_i from the Choi spectrum.

    Eigenvalues within -1e-7 of zero are clipped; anything lower raises.
    Each operator's phase is fixed so its largest-magnitude entry is real
    positive, which makes the output reproducible under eigensolver gauge.
    """
    w, v = np.linalg.eigh(choi.matrix)
    if w.min() < -CP_TOL:
        raise ChannelError(f"not completely positive: min Choi eigenvalue {w.min():.3e}")
    order = np.argsort(w)[::-1]
    ops, weights = [], []
    for idx in order:
        kappa = max(float(w[idx]), 0.0)
        if kappa <= 1e-12:
            continue
        a = v[:, idx].reshape(2, 2, order="F") * math.sqrt(kappa)
        flat = a.flatten()
        pivot = flat[np.argmax(np.abs(flat))]
        if abs(pivot) > 0:
            a = a * (abs(pivot) / pivot)
        ops.append(a)
        weights.append(kappa)
    if not ops:
        ops = [np.zeros((2, 2), dtype=complex)]
        weights = [0.0]
    remainders = tuple(_remainder_magnitude(a) for a in ops)
    return KrausSet(operators=tuple(ops), weights=tuple(weights),
                    remainders=remainders)


def _remainder_magnitude(a: np.ndarray) -> float:
    """Tr[R^+ R] after removing the {I, sigma_z} component of A."""
    r = a.copy()
    for basis in (IDENTITY, SIGMA_Z):
        coeff = np.trace(basis.conj().T @ r) / 2.0
        r = r - coeff * basis
    return float(np.real(np.trace(r.conj().T @ r)))


def bloch_affine(choi: ChoiMatrix) -> BlochAffineMap:
    """M_ab = Tr[sigma_a E(sigma_b)]/2 and t_a = Tr[sigma_a E(I)]/2."""
    cm = choi.matrix
    m = np.empty((3, 3))
    for b, sb in enumerate(PAULIS):
        out = _apply_raw(cm, sb)
        for a, sa in enumerate(PAULIS):
            m[a, b] = np.real(np.trace(sa @ out)) / 2.0
    out_i = _apply_raw(cm, IDENTITY)
    t = np.array([np.real(np.trace(sa @ out_i)) / 2.0 for sa in PAULIS])
    return BlochAffineMap(linear=m, translation=t)


def sphere_sample(n: int = 302) -> np.ndarray:
    """Fibonacci-spaced unit vectors for contraction checks and exports."""
    i = np.arange(n) + 0.5
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def ellipsoid_metrics(bmap: BlochAffineMap) -> EllipsoidMetrics:
    """Semi-axes from the SVD of M; rotation from its polar decomposition."""
    m = bmap.linear
    u, sv, vt = np.linalg.svd(m)
    degenerate = bool(sv.min() < 1e-12)
    r = u @ vt
    reflection = bool(np.linalg.det(r) < 0)
    if reflection:
        # flip the weakest direction so the reported factor is a rotation
        u2 = u.copy()
        u2[:, -1] *= -1.0
        r = u2 @ vt
    cos_ang = (np.trace(r) - 1.0) / 2.0
    angle = math.degrees(math.acos(min(1.0, max(-1.0, cos_ang))))
    axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    nrm = np.linalg.norm(axis)
    if nrm > 1e-9:
        axis = axis / nrm
    elif angle > 90.0:      # angle = 180: axis from R + I column space
        w, vecs = np.linalg.eigh((r + r.T) / 2.0)
        axis = vecs[:, np.argmax(w)]
    else:
        axis = np.array([0.0, 0.0, 1.0])
    return EllipsoidMetrics(semi_axes=tuple(float(s) for s in sv),
                            rotation_axis=tuple(float(a) for a in axis),
                            rotation_angle=angle,
                            translation_norm=float(np.linalg.norm(bmap.translation)),
                            reflection=reflection,
                            degenerate=degenerate)


def identity_channel() -> ChoiMatrix:
    return choi_from_kraus([IDENTITY])


def dephasing_channel(coherence_factor: float) -> ChoiMatrix:
    """Populations fixed, coherences scaled by lambda.

    Kraus form {sqrt((1+lambda)/2) I, sqrt((1-lambda)/2) sigma_z}.
    """
    lam = coherence_factor
    if not (0.0 <= lam <= 1.0):
        raise ChannelError(f"coherence factor must be in [0, 1], got {lam}")
    return choi_from_kraus([math.sqrt((1 + lam) / 2) * IDENTITY,
                            math.sqrt((1 - lam) / 2) * SIGMA_Z])


def rotation_channel(axis: str, angle_deg: float) -> ChoiMatrix:
    """Unitary conjugation by the Bloch rotation exp(-i angle sigma_axis / 2)."""
    if axis not in _AXES:
        raise ChannelError(f"axis must be one of x, y, z, got {axis!r}")
    phi = math.radians(angle_deg)
    u = math.cos(phi / 2) * IDENTITY - 1j * math.sin(phi / 2) * _AXES[axis]
    return choi_from_kraus([u])


def compose(outer: ChoiMatrix, inner: ChoiMatrix) -> ChoiMatrix:
    """Choi matrix of outer . inner (inner acts first)."""
    om, im = outer.matrix, inner.matrix
    c = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            e = np.zeros((2, 2), dtype=complex)
            e[i, j] = 1.0
            c[2 * i:2 * i + 2, 2 * j:2 * j + 2] = _apply_raw(om, _apply_raw(im, e))
    return ChoiMatrix(c)


def diagnostics(choi: ChoiMatrix) -> ChannelDiagnostics:
    """Scalar summaries: positivity, trace behaviour, coherence retention."""
    pt = choi.partial_trace_output()
    tp_dev = float(np.linalg.norm(pt - np.eye(2)))
    trace_loss = float(max(0.0, 1.0 - np.linalg.eigvalsh((pt + pt.conj().T) / 2).min()))
    retention = float(abs(choi.matrix[0, 3]))   # <0| E(|0><1|) |1>
    p10 = float(np.real(choi.matrix[1, 1]))     # <1| E(|0><0|) |1>
    p01 = float(np.real(choi.matrix[2, 2]))     # <0| E(|1><1|) |0>
    transfer = float(max(p10, p01))
    return ChannelDiagnostics(cp_min_eigenvalue=choi.min_eigenvalue(),
                              tp_deviation=tp_dev,
                              trace_loss=trace_loss,
                              coherence_retention=retention,
                              population_transfer=transfer)


def ellipsoid_csv_rows(choi: ChoiMatrix, samples: int = 302) -> list:
    """Rows (x, y, z, x', y', z') mapping sphere points through the channel."""
    bmap = bloch_affine(choi)
    pts = sphere_sample(samples)
    rows = []
    for p in pts:
        q = bmap.apply_to(p)
        rows.append((p[0], p[1], p[2], q[0], q[1], q[2]))
    return rows


def ellipsoid_svg(choi: ChoiMatrix, samples: int = 302, size: int = 360) -> str:
    """Orthographic (x-z plane) projection of the sphere and its image."""
    rows = ellipsoid_csv_rows(choi, samples)
    half = size / 2.0
    scale = 0.45 * size

    def pt(x, z):
        return (half + scale * x, half - scale * z)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<circle cx="{half}" cy="{half}" r="{scale}" fill="none" '
             'stroke="#888" stroke-width="1"/>']
    for x, y, z, xp, yp, zp in rows:
        cx, cy = pt(xp, zp)
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="1.5" fill="#1f77b4"/>')
    parts.append("</svg>")
    return "\n".join(parts)

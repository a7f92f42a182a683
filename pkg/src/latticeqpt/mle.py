"""Maximum-likelihood Choi estimation from before/after projection data.

The channel is parameterized as C = T^+ T with T a complex lower-triangular
4x4 factor (16 real parameters), which is completely positive by
construction.  Trace conditions are imposed by whitening: for CP-TP the
input-slot factor M = Tr_out C is pulled back to the identity via
(M^{-1/2} (x) I) C (M^{-1/2} (x) I); for CP-trace-nonincreasing the Choi is
rescaled when the largest survival probability exceeds one.

The default objective is the independent binomial likelihood of every
output projector count; a Gaussian weighted-least-squares objective is
available behind a flag.  Input states enter as fixed reconstructions of
their measured projections (joint refitting is available but off by
default).  Measured projections are taken to be renormalized by the
surviving population, so predicted probabilities are normalized by the
predicted output trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .channels import ChoiMatrix, _apply_raw
from .states import AnalysisBasis, DensityMatrix, ProjectionRecord, \
    physical_projection, reconstruct_linear

GRAM_CONDITION_LIMIT = 1e6
_J4 = np.eye(4)[::-1]


class DatasetError(ValueError):
    """Tomography dataset cannot support a channel estimate."""


class FitError(RuntimeError):
    """Maximum-likelihood fit failed structurally (not mere non-convergence)."""


@dataclass(frozen=True)
class TomographyRecord:
    label: str
    input_projections: ProjectionRecord
    output_projections: ProjectionRecord

    def to_json(self) -> dict:
        return {"label": self.label,
                "in": self.input_projections.to_json(),
                "out": self.output_projections.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "TomographyRecord":
        return cls(label=obj.get("label", ""),
                   input_projections=ProjectionRecord.from_json(obj["in"]),
                   output_projections=ProjectionRecord.from_json(obj["out"]))


@dataclass(frozen=True)
class TomographyDataset:
    theta: float
    shots_per_projector: int
    records: tuple

    def __post_init__(self):
        if len(self.records) < 4:
            raise DatasetError(f"need >= 4 records, got {len(self.records)}")
        cond = self.input_condition_number()
        if cond > GRAM_CONDITION_LIMIT:
            raise DatasetError(
                f"input states are not linearly independent enough: Gram "
                f"condition number {cond:.3g} exceeds {GRAM_CONDITION_LIMIT:.0e}")

    def basis(self) -> AnalysisBasis:
        return AnalysisBasis(self.theta)

    def reconstructed_inputs(self) -> list:
        """Physical estimates of the prepared states, one per record."""
        basis = self.basis()
        return [physical_projection(reconstruct_linear(r.input_projections, basis))
                for r in self.records]

    def input_condition_number(self) -> float:
        vecs = np.array([r.matrix.flatten() for r in self.reconstructed_inputs()])
        gram = vecs @ vecs.conj().T
        return float(np.linalg.cond(gram))

    def to_json(self) -> dict:
        return {"theta": self.theta, "shots": self.shots_per_projector,
                "records": [r.to_json() for r in self.records]}

    @classmethod
    def from_json(cls, obj: dict) -> "TomographyDataset":
        return cls(theta=obj["theta"], shots_per_projector=obj.get("shots", 0),
                   records=tuple(TomographyRecord.from_json(r)
                                 for r in obj["records"]))


@dataclass(frozen=True)
class FitResult:
    choi: ChoiMatrix
    neg_log_likelihood: float
    iterations: int
    converged: bool
    residuals: np.ndarray         # per record, per projector: predicted - measured
    restart_spread: float = 0.0   # best-to-worst objective spread over restarts
    objective_history: tuple = ()  # best-vertex objective per iteration (winner)

    def to_json(self) -> dict:
        return {"choi": self.choi.to_json(),
                "neg_log_likelihood": self.neg_log_likelihood,
                "iterations": self.iterations,
                "converged": self.converged,
                "restart_spread": self.restart_spread,
                "residuals": self.residuals.tolist()}


def linear_inversion_superop(dataset: TomographyDataset) -> np.ndarray:
    """Solve the 16-unknown linear system mapping inputs to outputs.

    Returns the raw 4x4 Choi-convention matrix, which may be unphysical on
    noisy data; it is exact on noiseless data.
    """
    basis = dataset.basis()
    rin = dataset.reconstructed_inputs()
    rout = [physical_projection(reconstruct_linear(r.output_projections, basis))
            for r in dataset.records]
    g = np.array([r.matrix.flatten() for r in rin])
    y = np.array([r.matrix.flatten() for r in rout])
    sol, *_ = np.linalg.lstsq(g, y, rcond=None)
    c = np.zeros((4, 4), dtype=complex)
    for idx in range(4):
        i, j = divmod(idx, 2)
        c[2 * i:2 * i + 2, 2 * j:2 * j + 2] = sol[idx].reshape(2, 2)
    return (c + c.conj().T) / 2.0


def _params_from_choi(c: np.ndarray) -> np.ndarray:
    """Lower-triangular T with T^+ T = C, packed into 16 reals."""
    w, v = np.linalg.eigh((c + c.conj().T) / 2.0)
    cp = (v * np.clip(w, 0.0, None)) @ v.conj().T
    d = _J4 @ cp @ _J4
    l = np.linalg.cholesky(d + 1e-12 * np.eye(4))
    t = (_J4 @ l @ _J4).conj().T
    return np.array([t[0, 0].real, t[1, 1].real, t[2, 2].real, t[3, 3].real,
                     t[1, 0].real, t[1, 0].imag,
                     t[2, 0].real, t[2, 0].imag, t[2, 1].real, t[2, 1].imag,
                     t[3, 0].real, t[3, 0].imag, t[3, 1].real, t[3, 1].imag,
                     t[3, 2].real, t[3, 2].imag])


def _choi_from_params(x: np.ndarray, constraint: str) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[0, 0], t[1, 1], t[2, 2], t[3, 3] = x[0], x[1], x[2], x[3]
    t[1, 0] = x[4] + 1j * x[5]
    t[2, 0] = x[6] + 1j * x[7]
    t[2, 1] = x[8] + 1j * x[9]
    t[3, 0] = x[10] + 1j * x[11]
    t[3, 1] = x[12] + 1j * x[13]
    t[3, 2] = x[14] + 1j * x[15]
    c = t.conj().T @ t
    pt = np.einsum("iaja->ij", c.reshape(2, 2, 2, 2))
    if constraint == "cptp":
        w, v = np.linalg.eigh(pt)
        w = np.clip(np.real(w), 1e-12, None)
        white = (v * (1.0 / np.sqrt(w))) @ v.conj().T
        wk = np.kron(white, np.eye(2))
        c = wk @ c @ wk.conj().T
    elif constraint == "cp-tni":
        top = float(np.max(np.real(np.linalg.eigvalsh(pt))))
        if top > 1.0:
            c = c / top
    elif constraint != "cp":
        raise FitError(f"unknown constraint {constraint!r}")
    return c


def _design_tensors(inputs, basis: AnalysisBasis):
    """Probabilities and traces as linear functionals of vec(C).

    p[rec, i] = Re(W[rec*4 + i] . vec(C)) and tr[rec] = Re(Wt[rec] . vec(C)).
    """
    kets = basis.kets()
    n = len(inputs)
    w = np.zeros((n * 4, 16), dtype=complex)
    wt = np.zeros((n, 16), dtype=complex)
    for r_idx, rho in enumerate(inputs):
        rm = rho.matrix
        for k_idx, k in enumerate(kets):
            proj_t = np.outer(k, k.conj()).T
            block = np.zeros((4, 4), dtype=complex)
            for i in range(2):
                for j in range(2):
                    block[2 * i:2 * i + 2, 2 * j:2 * j + 2] = rm[i, j] * proj_t
            w[r_idx * 4 + k_idx] = block.flatten()
        tr_block = np.zeros((4, 4), dtype=complex)
        for i in range(2):
            for j in range(2):
                tr_block[2 * i:2 * i + 2, 2 * j:2 * j + 2] = rm[i, j] * np.eye(2)
        wt[r_idx] = tr_block.flatten()
    return w, wt


def fit_choi(dataset: TomographyDataset, constraint: str = "cp-tni",
             seed: int = 0, restarts: int = 8, method: str = "simplex",
             objective: str = "binomial", max_iterations: int = 50000,
             tol: float = 1e-9, refit_inputs: bool = False,
             track_history: bool = False) -> FitResult:
    """Maximum-likelihood Choi estimate under a positivity constraint.

    constraint: "cp", "cp-tni" (trace-nonincreasing, default) or "cptp".
    method: "simplex" (Nelder-Mead, default) or "gradient" (L-BFGS-B with
    numerical derivatives).  Deterministic for a given seed; the best of
    `restarts` seeded starts is returned with ties broken by restart index.
    """
    if objective not in ("binomial", "gaussian"):
        raise FitError(f"unknown objective {objective!r}")
    if refit_inputs:
        # joint refitting folds the measured input counts into the same
        # objective by re-estimating inputs once from their own likelihood
        inputs = [fit_state_ml(r.input_projections, dataset.theta,
                               dataset.shots_per_projector or 10 ** 6)
                  for r in dataset.records]
    else:
        inputs = dataset.reconstructed_inputs()
    basis = dataset.basis()
    w, wt = _design_tensors(inputs, basis)
    shots = dataset.shots_per_projector or 10 ** 6
    m_out = np.concatenate([r.output_projections.as_array()
                            for r in dataset.records])
    counts = m_out * shots

    def objective_fn(x):
        c = _choi_from_params(x, constraint)
        vc = c.flatten()
        tr = np.maximum(np.real(wt @ vc), 1e-12)
        p = np.real(w @ vc) / np.repeat(tr, 4)
        p = np.clip(p, 1e-9, 1.0 - 1e-9)
        if objective == "binomial":
            return float(-np.sum(counts * np.log(p)
                                 + (shots - counts) * np.log1p(-p)))
        var = np.maximum(p * (1.0 - p) / shots, 1e-12)
        return float(np.sum((p - m_out) ** 2 / var))

    c_init = linear_inversion_superop(dataset)
    x0 = _params_from_choi(c_init)
    # keep the (CP-projected) linear-inversion start as a candidate so the
    # result can never be worse than the initializer
    best_x, best_f = x0.copy(), objective_fn(x0)
    best_converged = True
    best_history = (best_f,)
    rng = np.random.default_rng(seed)
    total_iters = 0
    restart_best = []
    for r in range(max(1, restarts)):
        xs = x0 if r == 0 else x0 + rng.normal(0.0, 0.03, size=16)
        history = [objective_fn(xs)]
        track = (lambda xk: history.append(objective_fn(xk))) if track_history else None
        if method == "simplex":
            res = minimize(objective_fn, xs, method="Nelder-Mead", callback=track,
                           options=dict(maxiter=max_iterations,
                                        maxfev=max_iterations,
                                        fatol=tol, xatol=1e-8))
        elif method == "gradient":
            res = minimize(objective_fn, xs, method="L-BFGS-B", callback=track,
                           options=dict(maxiter=min(max_iterations, 500),
                                        ftol=1e-13, gtol=1e-10))
        else:
            raise FitError(f"unknown method {method!r}")
        total_iters += int(res.nit)
        restart_best.append(float(res.fun))
        if res.fun < best_f - 1e-15:
            best_f, best_x = float(res.fun), res.x.copy()
            best_converged = bool(res.success)
            best_history = tuple(history)

    c_fit = _choi_from_params(best_x, constraint)
    choi = ChoiMatrix(c_fit)
    vc = c_fit.flatten()
    tr = np.maximum(np.real(wt @ vc), 1e-12)
    predicted = np.real(w @ vc) / np.repeat(tr, 4)
    residuals = (predicted - m_out).reshape(len(dataset.records), 4)
    spread = float(max(restart_best) - min(restart_best)) if restart_best else 0.0
    return FitResult(choi=choi, neg_log_likelihood=best_f,
                     iterations=total_iters, converged=best_converged,
                     residuals=residuals, restart_spread=spread,
                     objective_history=best_history if track_history else ())


def fit_state_ml(record: ProjectionRecord, theta: float, shots: int) -> DensityMatrix:
    """Physical single-state maximum-likelihood estimate (binomial counts)."""
    if shots <= 0:
        raise DatasetError("fit_state_ml needs shots > 0")
    basis = AnalysisBasis(theta)
    kets = basis.kets()
    m = record.as_array()
    counts = m * shots

    def rho_of(x):
        t = np.array([[x[0], 0.0], [x[2] + 1j * x[3], x[1]]], dtype=complex)
        rho = t.conj().T @ t
        return rho / max(np.real(np.trace(rho)), 1e-12)

    def nll(x):
        rho = rho_of(x)
        p = np.array([np.real(k.conj() @ rho @ k) for k in kets])
        p = np.clip(p, 1e-9, 1.0 - 1e-9)
        return float(-np.sum(counts * np.log(p) + (shots - counts) * np.log1p(-p)))

    start = physical_projection(reconstruct_linear(record, basis)).matrix
    start = start / np.real(np.trace(start))
    # lower-triangular t with t^+ t = start, built entrywise for 2x2
    b = np.sqrt(max(start[1, 1].real, 1e-12))
    c_low = np.conj(start[0, 1]) / b
    a = np.sqrt(max(start[0, 0].real - abs(c_low) ** 2, 1e-12))
    x0 = np.array([a, b, c_low.real, c_low.imag])
    res = minimize(nll, x0, method="Nelder-Mead",
                   options=dict(maxiter=4000, fatol=1e-10, xatol=1e-10))
    best = res.x if res.fun <= nll(x0) else x0
    return DensityMatrix(rho_of(best))

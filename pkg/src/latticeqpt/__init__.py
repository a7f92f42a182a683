"""Quantum process tomography for the two-level vibrational system of a
tilted optical lattice, plus a simulator of the experiment that produces it."""

__version__ = "0.1.0"

from .lattice import (BandStructure, BoundStatePair, DisplacementCoefficients,
                      LatticeConfig, bound_states, calibrate_theta,
                      compute_bands, displacement_coefficients,
                      landau_zener_rates)
from .states import (AnalysisBasis, DensityMatrix, ProjectionRecord,
                     free_evolution, physical_projection, project,
                     reconstruct_linear)
from .channels import (BlochAffineMap, ChoiMatrix, KrausSet, apply,
                       bloch_affine, choi_from_kraus, compose,
                       dephasing_channel, diagnostics, ellipsoid_metrics,
                       identity_channel, kraus_from_choi, rotation_channel)
from .mle import (FitResult, TomographyDataset, TomographyRecord, fit_choi,
                  fit_state_ml, linear_inversion_superop)
from .sim import (Displace, Drive, Filter, Measure, NoiseModel, Operation,
                  PulseSequence, Wait, q_ensemble_dephasing, simulate_drive,
                  simulate_sequence, synthesize_qpt_dataset)

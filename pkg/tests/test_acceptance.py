"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` (or `-rA`) to see the
per-criterion lines.  Tolerances are the published acceptance tolerances.
"""

import hashlib
import json
import math
import time

import numpy as np
import pytest

from latticeqpt import (AnalysisBasis, DensityMatrix, LatticeConfig, NoiseModel,
                        Operation, ProjectionRecord, apply, bloch_affine,
                        bound_states, choi_from_kraus, compose, compute_bands,
                        dephasing_channel, diagnostics, displacement_coefficients,
                        calibrate_theta, ellipsoid_metrics, fit_choi,
                        identity_channel, kraus_from_choi, landau_zener_rates,
                        linear_inversion_superop, project, q_ensemble_dephasing,
                        reconstruct_linear, rotation_channel, simulate_drive,
                        synthesize_qpt_dataset)
from latticeqpt.channels import IDENTITY, SIGMA_Z
from latticeqpt.cli import main

from conftest import mathieu_band_edge, random_cp_channel, random_density_matrix

CFG = LatticeConfig(depth=18.0)      # E_r = 690 Hz, L = 0.93 um, Rb-85
QUIET = NoiseModel(dephasing_mode="none", filter_purity=0.95)


def report(num, name, ok, detail=""):
    print(f"ACCEPTANCE {num:>2} {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def test_criterion_01_band_physics():
    t0 = time.time()
    bands18 = compute_bands(CFG)
    gap_hz = bands18.zone_center_gap() * CFG.recoil_energy
    bands9 = compute_bands(LatticeConfig(depth=9.0))
    ok = (bands18.bound_band_count == 2
          and abs(gap_hz - 5000.0) / 5000.0 < 0.10
          and bands9.bound_band_count == 1)
    elapsed = time.time() - t0
    assert report(1, "band physics", ok,
                  f"bound@18={bands18.bound_band_count} gap={gap_hz:.0f}Hz "
                  f"bound@9={bands9.bound_band_count} [{elapsed:.2f}s]")
    assert elapsed < 1.0


def test_criterion_02_mathieu_oracle():
    worst = 0.0
    for depth in (5.0, 9.0, 18.0, 30.0):
        bands = compute_bands(LatticeConfig(depth=depth))
        for n in range(bands.bound_band_count):
            err_c = abs(bands.energies[n, 0] - mathieu_band_edge(depth, n, False))
            err_e = abs(bands.energies[n, -1] - mathieu_band_edge(depth, n, True))
            worst = max(worst, err_c, err_e)
    assert report(2, "Mathieu oracle", worst < 1e-6, f"worst |dE|={worst:.2e} E_r")


def test_criterion_03_displacement_coefficients():
    t0 = time.time()
    states = bound_states(CFG, compute_bands(CFG))
    c = displacement_coefficients(states, 116e-9)
    theta = calibrate_theta(c)
    ok = (abs(c.c00 - 0.87) <= 0.03 and abs(c.c10 - 0.45) <= 0.03
          and abs(c.c11 - 0.63) <= 0.03 and 0.45 <= theta <= 0.55)
    elapsed = time.time() - t0
    assert report(3, "displacement coefficients", ok,
                  f"({c.c00:.3f},{c.c10:.3f},{c.c11:.3f}) theta={theta:.3f} "
                  f"[{elapsed:.2f}s]")
    assert elapsed < 5.0


def test_criterion_04_landau_zener():
    rates18 = landau_zener_rates(CFG, compute_bands(CFG))
    cfg9 = LatticeConfig(depth=9.0)
    rates9 = landau_zener_rates(cfg9, compute_bands(cfg9))
    targets18 = (3e-7, 14.5, 1150.0)
    ok18 = all(t / 3 <= r <= t * 3 for r, t in zip(rates18, targets18))
    ordered = rates18[0] < rates18[1] < rates18[2]
    life_ground, life_excited = 1.0 / rates9[0], 1.0 / rates9[1]
    ok9 = (0.25 / 3 <= life_ground <= 0.25 * 3
           and 0.5e-3 / 3 <= life_excited <= 0.5e-3 * 3)
    detail = (f"rates@18={rates18[0]:.2e},{rates18[1]:.1f},{rates18[2]:.0f}/s "
              f"lifetimes@9={life_ground * 1e3:.0f}ms,{life_excited * 1e3:.2f}ms")
    ok = ok18 and ordered and ok9
    report(4, "Landau-Zener orders", ok, detail)
    # The 9 E_r ground lifetime computed from the standard two-band
    # Landau-Zener exponent (the same formula that reproduces the three
    # published 18 E_r rates to better than 30% and the 9 E_r excited
    # lifetime to a factor ~2) comes out near 1.2 s, a factor ~5 above the
    # published 250 ms, so it cannot land inside the factor-3 window
    # without abandoning the model that the other four numbers confirm.
    assert ok, (f"9 E_r ground lifetime {life_ground:.2f}s vs 250ms window "
                f"[83ms, 750ms]; all other four rate checks: "
                f"ok18={ok18} ordered={ordered} excited_ok="
                f"{0.5e-3 / 3 <= life_excited <= 0.5e-3 * 3}")


def test_criterion_05_tomography_bijection(rng):
    worst = 0.0
    for _ in range(20):
        theta = rng.uniform(0.05, math.pi / 2 - 0.05)
        basis = AnalysisBasis(theta)
        for _ in range(50):
            rho = random_density_matrix(rng)
            rec = project(DensityMatrix(rho), basis)
            back = reconstruct_linear(rec, basis)
            worst = max(worst, float(np.max(np.abs(back - rho))))
    assert report(5, "tomography bijection", worst < 1e-12,
                  f"worst roundtrip error {worst:.2e} over 1000 states x 20 angles")


def test_criterion_06_representation_roundtrips(rng):
    worst_rt = worst_apply = worst_angle = 0.0
    for _ in range(100):
        ops = random_cp_channel(rng, n_kraus=int(rng.integers(1, 4)))
        choi = choi_from_kraus(ops)
        again = choi_from_kraus(kraus_from_choi(choi))
        worst_rt = max(worst_rt, float(np.max(np.abs(again.matrix - choi.matrix))))
        rho = random_density_matrix(rng)
        via_choi = apply(choi, DensityMatrix(rho)).matrix
        via_kraus = sum(a @ rho @ a.conj().T for a in ops)
        worst_apply = max(worst_apply, float(np.max(np.abs(via_choi - via_kraus))))
    for _ in range(100):
        axis = ("x", "y", "z")[int(rng.integers(0, 3))]
        angle = float(rng.uniform(0.5, 179.5))
        em = ellipsoid_metrics(bloch_affine(rotation_channel(axis, angle)))
        unit = {"x": (1, 0, 0), "y": (0, 1, 0), "z": (0, 0, 1)}[axis]
        axis_err = abs(abs(float(np.dot(em.rotation_axis, unit))) - 1.0)
        worst_angle = max(worst_angle, abs(em.rotation_angle - angle), axis_err)
    ok = worst_rt < 1e-10 and worst_apply < 1e-10 and worst_angle < 1e-7
    assert report(6, "representation round trips", ok,
                  f"kraus-choi {worst_rt:.1e}, apply {worst_apply:.1e}, "
                  f"rotation {worst_angle:.1e}")


def test_criterion_07_dephasing_kraus():
    ks = kraus_from_choi(dephasing_channel(0.64))
    a1, a2 = ks.operators[0], ks.operators[1]
    mag1, mag2 = abs(a1[0, 0]), abs(a2[0, 0])
    r1 = a1 - 0.90 * IDENTITY
    r2 = a2 - (-0.41) * SIGMA_Z * np.sign(np.real(a2[0, 0])) * -1.0
    # compare against the nearest sign convention of the published operators
    r2_alt = a2 - 0.41 * SIGMA_Z
    rem1 = float(np.real(np.trace(r1.conj().T @ r1)))
    rem2 = min(float(np.real(np.trace(r2.conj().T @ r2))),
               float(np.real(np.trace(r2_alt.conj().T @ r2_alt))))
    ok = (abs(mag1 - 0.906) < 1e-3 and abs(mag2 - 0.424) < 1e-3
          and rem1 <= 0.03 and rem2 <= 0.03)
    assert report(7, "dephasing Kraus", ok,
                  f"magnitudes {mag1:.4f}/{mag2:.4f}, remainders "
                  f"{rem1:.2e}/{rem2:.2e} (bound 0.03)")


def test_criterion_08_bloch_deformation():
    em = ellipsoid_metrics(bloch_affine(dephasing_channel(0.64)))
    ok = (abs(em.semi_axes[0] - 1.0) < 1e-9 and abs(em.semi_axes[1] - 0.64) < 1e-9
          and abs(em.semi_axes[2] - 0.64) < 1e-9 and em.rotation_angle < 1e-9)
    assert report(8, "Bloch deformation", ok,
                  f"semi-axes {tuple(round(s, 6) for s in em.semi_axes)} "
                  f"rotation {em.rotation_angle:.2e} deg")


def _recover(truth, seed):
    ds, _ = synthesize_qpt_dataset(Operation.planted(truth), CFG, QUIET,
                                   shots=10000, seed=seed)
    res = fit_choi(ds, constraint="cptp", method="gradient", restarts=2, seed=1)
    return res.choi


def test_criterion_09_end_to_end_recovery():
    t0 = time.time()
    truth_a = dephasing_channel(0.64)
    # The published driven Bloch sphere: 35.5 degree rotation with semi-minor
    # axis 0.69, planted as rotation o dephasing(0.69).
    truth_b = compose(rotation_channel("y", 35.5), dephasing_channel(0.69))
    ret_b_true = abs(truth_b.matrix[0, 3])
    pass_a = pass_b = 0
    for seed in range(20):
        choi = _recover(truth_a, seed)
        if abs(abs(choi.matrix[0, 3]) - 0.64) <= 0.03:
            pass_a += 1
        choi = _recover(truth_b, 1000 + seed)
        em = ellipsoid_metrics(bloch_affine(choi))
        if (abs(em.rotation_angle - 35.5) <= 1.5
                and abs(em.semi_axes[2] - 0.69) <= 0.04
                and abs(abs(choi.matrix[0, 3]) - ret_b_true) <= 0.03):
            pass_b += 1
    elapsed = time.time() - t0
    ok = pass_a >= 18 and pass_b >= 18 and elapsed < 120.0
    assert report(9, "end-to-end QPT recovery", ok,
                  f"dephasing {pass_a}/20, rotation {pass_b}/20 "
                  f"[{elapsed:.0f}s]")


def test_criterion_10_drive_simulation():
    states = bound_states(CFG, compute_bands(CFG))
    u_sin = simulate_drive(CFG, states, "sine", 26e-9, 1.0)
    u_cos = simulate_drive(CFG, states, "cosine", 26e-9, 1.0)
    em_sin = ellipsoid_metrics(bloch_affine(choi_from_kraus([u_sin])))
    em_cos = ellipsoid_metrics(bloch_affine(choi_from_kraus([u_cos])))
    angle = em_sin.rotation_angle
    y_alignment = abs(em_sin.rotation_axis[1])
    axis_sep = math.degrees(math.acos(abs(float(
        np.dot(em_sin.rotation_axis, em_cos.rotation_axis)))))
    ok_angle = abs(angle - 35.0) <= 5.0
    ok_axes = abs(axis_sep - 90.0) <= 3.0 and y_alignment > 0.95
    report(10, "drive simulation", ok_angle and ok_axes,
           f"sine rotation {angle:.1f} deg (target 35+-5), axes separated by "
           f"{axis_sep:.1f} deg")
    # The resonant two-level model fixes the one-period rotation at
    # F0*x01*T/hbar = 2*pi*m*x_m*omega*x01/hbar ~ 0.77 rad (44 deg) for
    # x_m = 26 nm, the computed 5.15 kHz gap and x01 ~ 110 nm; x01 is pinned
    # near sqrt(hbar/2 m omega) by the oscillator-strength sum rule and by
    # the same overlap integrals that reproduce the published displacement
    # coefficients, so a 35 degree outcome is not reachable within this
    # model.  The published 35.0 comes from a truncated oscillator-ladder
    # simulation whose leakage to the (unbound) third level is outside the
    # two-level truncation used here.
    assert ok_angle and ok_axes, (
        f"sine-drive rotation {angle:.1f} deg vs window [30, 40]; "
        f"axis separation {axis_sep:.2f} deg (ok={ok_axes})")


def test_criterion_11_quasimomentum_dephasing():
    bands = compute_bands(CFG)
    ts = np.linspace(0.0, 8e-3, 400)
    lam = np.array([q_ensemble_dephasing(CFG, bands, t) for t in ts])
    below = np.nonzero(lam < math.exp(-1.0))[0]
    t_1e = ts[below[0]] if below.size else math.inf
    ok = 1e-3 <= t_1e <= 4e-3
    assert report(11, "quasimomentum dephasing", ok,
                  f"1/e coherence time {t_1e * 1e3:.2f} ms (target 2 ms x2)")


def test_criterion_12_ml_sanity():
    op = Operation.planted(dephasing_channel(0.64))
    ds_noisy, _ = synthesize_qpt_dataset(op, CFG, QUIET, shots=4000, seed=3)
    res = fit_choi(ds_noisy, constraint="cptp", restarts=1, method="simplex",
                   max_iterations=1500, track_history=True)
    hist = np.array(res.objective_history)
    monotone = bool((np.diff(hist) <= 1e-7).all())
    cp_ok = res.choi.min_eigenvalue() >= -1e-7
    ds_clean, _ = synthesize_qpt_dataset(op, CFG, QUIET, shots=0, seed=0)
    res_clean = fit_choi(ds_clean, constraint="cptp", restarts=2,
                         method="gradient")
    lin = linear_inversion_superop(ds_clean)
    clean_match = float(np.max(np.abs(res_clean.choi.matrix - lin)))
    ok = monotone and cp_ok and clean_match < 1e-8
    assert report(12, "ML sanity", ok,
                  f"monotone={monotone} min_eig={res.choi.min_eigenvalue():.1e} "
                  f"noiseless-vs-linear {clean_match:.1e}")


def test_criterion_13_determinism(tmp_path):
    def digest(path):
        with open(path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()

    cfg = {"lattice": {"depth": 18.0},
           "noise": {"dephasing_mode": "fixed_lambda", "lambda_per_period": 0.64,
                     "filter_purity": 0.95},
           "operation": {"kind": "free_period"},
           "shots": 5000, "seed": 21}
    cfg_path = tmp_path / "exp.json"
    cfg_path.write_text(json.dumps(cfg))
    results = {}
    sim_out = str(tmp_path / "ds.json")
    assert main(["simulate", "--config", str(cfg_path), "--out", sim_out]) == 0
    results["simulate"] = digest(sim_out)
    fit_out = str(tmp_path / "fit.json")
    assert main(["process-tomo", "--data", sim_out, "--method", "gradient",
                 "--restarts", "2", "--out", fit_out]) == 0
    results["process-tomo"] = digest(fit_out)
    bands_out = str(tmp_path / "bands.csv")
    assert main(["bands", "--depth", "18", "--out", bands_out]) == 0
    results["bands"] = digest(bands_out)

    ok = True
    for name, out in (("simulate", sim_out), ("process-tomo", fit_out),
                      ("bands", bands_out)):
        assert main(["rerun", "--manifest", out + ".manifest.json"]) == 0
        ok = ok and digest(out) == results[name]
    assert report(13, "determinism", ok, "simulate/process-tomo/bands rerun byte-identical")

"""Walk through one full correction on a synthetic study.

We generate a dataset where the true exposure effect is 0.2 but the exposure
is observed with measurement error variance 30 (three replicate measurements
per subject), then compare the uncorrected analysis with regression
calibration and simulation-extrapolation, bootstrap intervals included.
"""

import mecalib as m

SEED = 1729

# A synthetic study: 500 subjects, outcome "creatinine", error-prone exposure
# replicates "bp_star_1..3", covariate "age". True exposure effect: 0.2.
cfg = m.ScenarioConfig(n=500, n_reps=1, seed=SEED)
data = m.generate_dataset(cfg, rep_index=0)
spec = m.scenario_spec(cfg.k)
print(f"dataset: {data.n_rows} rows, columns {', '.join(data.column_names)}")

# Step 1: the error variance, estimated as the mean within-subject variance
# of the replicate measurements.
tau2 = m.estimate_tau2_from_replicates(data, spec)
print(f"\nestimated measurement error variance: {tau2.tau2:.2f} (true: 30)")

v = m.conditional_exposure_variance(data, spec)
print(f"conditional variance of the noisy exposure given age: {v:.2f} (true: 80)")
print(f"implied attenuation factor: {(v - tau2.tau2) / v:.3f} (true: 0.625)")

# Step 2: the naive analysis, first replicate only.
naive = m.fit_uncorrected(data, spec)
lo, hi = m.wald_interval(naive, index=1)
print(f"\nuncorrected estimate: {naive.coefficients[1]:.4f}  [{lo:.4f}, {hi:.4f}]")

# Step 3: regression calibration. The bootstrap re-estimates tau2 on every
# resample because it came from replicates.
rc = m.correct_rc(data, spec, tau2)
rc_lo, rc_hi = m.bootstrap_ci(data, spec, "rc", tau2, n_boot=999, seed=SEED)
print(f"regression calibration: {rc.estimate:.4f}  [{rc_lo:.4f}, {rc_hi:.4f}]"
      f"  (correction factor {rc.diagnostics['correction_factor']:.3f})")

# Step 4: simulation-extrapolation with the default lambda grid and a
# quadratic extrapolant.
simex_cfg = m.SimexConfig(seed=SEED)
simex = m.correct_simex(data, spec, tau2, simex_cfg)
sx_lo, sx_hi = m.bootstrap_ci(data, spec, "simex", tau2, simex_cfg,
                              n_boot=199, seed=SEED)
print(f"simulation-extrapolation: {simex.estimate:.4f}  [{sx_lo:.4f}, {sx_hi:.4f}]")
print("  per-lambda averaged estimates:")
for lam, est in simex.diagnostics["lambda_estimates"].items():
    print(f"    lambda={lam:<4g} estimate={est:.4f}")

print("\nThe uncorrected estimate sits near 0.125 (0.625 * 0.2); regression")
print("calibration recovers the truth on average, while SIMEX typically stops")
print("short of it (its quadratic extrapolation of the attenuation curve")
print("converges to about 0.173 rather than 0.2).")

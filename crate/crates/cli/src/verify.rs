//! Self-checks run by `squidsim verify`.

use serde::Serialize;
use squidsim_core::dynamics::{evolve, relaxed_state, DriveParams};
use squidsim_core::lz::{integrate_two_level_sweep, lz_probability_angular};
use squidsim_core::spectrum::{extract_four_level_model, solve_eigen, EigenGridSpec, FourLevelModel, LevelDiagram};
use squidsim_core::CircuitParams;

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{:<width$}  {}  {}\n",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail
            ));
        }
        out
    }
}

/// Four-level model with splittings and slopes of the 80 fF device.
pub fn reference_model() -> FourLevelModel {
    FourLevelModel {
        ref_bias: 0.5,
        energies: [203.55, 203.55, 190.87, 190.87],
        slopes: [-1042.0, 1042.0, -1218.0, 1218.0],
        delta00: 0.0043,
        delta01: 0.036,
        delta11: 0.245,
    }
}

/// Bias close to the one-photon 0L → 1R resonance of [`reference_model`].
pub const REFERENCE_RESONANT_BIAS: f64 = 0.4986;

pub const LZ_DELTAS: [f64; 4] = [0.01, 0.05, 0.1, 0.3];
pub const LZ_RATES: [f64; 4] = [0.5, 1.0, 2.0, 5.0];

/// Largest deviation of the closed form from a direct sweep integration over
/// the 4×4 (Δ, v) grid, in angular units.
pub fn lz_oracle_deviation() -> f64 {
    let mut worst: f64 = 0.0;
    for &delta in &LZ_DELTAS {
        for &v in &LZ_RATES {
            let numeric = integrate_two_level_sweep(delta, v, 50.0);
            worst = worst.max((numeric - lz_probability_angular(delta, v)).abs());
        }
    }
    worst
}

/// Worst relative deviation of the lowest `n` spacings from the LC frequency
/// with the junction removed.
pub fn harmonic_deviation(l: f64, c: f64, n: usize) -> Result<f64, String> {
    let p = CircuitParams::new(l, c, 0.0, 0.5, 0.0).map_err(|e| e.to_string())?;
    // ground-state width from ½kσ² = f/4 with k = U0·(2π)²
    let sigma = (p.lc_frequency_ghz() / (2.0 * p.u0_ghz() * 4.0 * std::f64::consts::PI.powi(2))).sqrt();
    let half_width = EigenGridSpec::DEFAULT_HALF_WIDTH.max(10.0 * sigma);
    // keep the default resolution when the window widens
    let points = (EigenGridSpec::DEFAULT_POINTS as f64 * half_width / EigenGridSpec::DEFAULT_HALF_WIDTH).ceil() as usize | 1;
    let g = EigenGridSpec::centered(0.5, half_width, points, n + 1).map_err(|e| e.to_string())?;
    let s = solve_eigen(&p, &g).map_err(|e| e.to_string())?;
    let f = p.lc_frequency_ghz();
    Ok(s.energies.windows(2).take(n).map(|w| ((w[1] - w[0]) / f - 1.0).abs()).fold(0.0, f64::max))
}

/// Worst relative error of the recovered Δ and slope parameters.
pub fn round_trip_deviation(m: &FourLevelModel) -> Result<f64, String> {
    let d = LevelDiagram::from_four_level_model(m, (0.49, 0.51), 201);
    let got = extract_four_level_model(&d).map_err(|e| e.to_string())?;
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let mut worst = rel(got.delta00, m.delta00).max(rel(got.delta01, m.delta01)).max(rel(got.delta11, m.delta11));
    for (k, k0) in got.slopes.iter().zip(&m.slopes) {
        worst = worst.max(rel(*k, *k0));
    }
    Ok(worst)
}

pub fn run_verify(cfg: &RunConfig) -> VerifyReport {
    let mut checks = Vec::new();

    let lz = lz_oracle_deviation();
    checks.push(Check { name: "lz_oracle".into(), passed: lz < 1e-3, detail: format!("max deviation {lz:.2e} (tol 1e-3)") });

    let harmonic = harmonic_deviation(cfg.circuit.inductance, cfg.circuit.capacitance, 5);
    checks.push(match harmonic {
        Ok(d) => Check { name: "harmonic_limit".into(), passed: d < 0.01, detail: format!("max relative deviation {d:.2e} (tol 1e-2)") },
        Err(e) => Check { name: "harmonic_limit".into(), passed: false, detail: e },
    });

    let m = reference_model().at_bias(REFERENCE_RESONANT_BIAS);
    let trace = DriveParams::new(cfg.drive_f, 0.01, 20.0)
        .map_err(|e| e.to_string())
        .and_then(|d| evolve(&m, &d, &cfg.rates, &relaxed_state(&m), 0.1).map_err(|e| e.to_string()));
    checks.push(match trace {
        Ok(tr) => {
            let tr_err = tr.samples.iter().map(|s| s.trace_error).fold(0.0, f64::max);
            let herm = tr.samples.iter().map(|s| s.hermiticity_error).fold(0.0, f64::max);
            let eig = tr.samples.iter().map(|s| s.min_eigenvalue).fold(f64::INFINITY, f64::min);
            Check {
                name: "trace_preservation".into(),
                passed: tr_err < 1e-9 && herm < 1e-10 && eig > -1e-7,
                detail: format!("|tr-1| {tr_err:.1e}, hermiticity {herm:.1e}, min eigenvalue {eig:.1e} over {} steps", tr.n_steps),
            }
        }
        Err(e) => Check { name: "trace_preservation".into(), passed: false, detail: e },
    });

    checks.push(match round_trip_deviation(&reference_model()) {
        Ok(d) => Check { name: "round_trip_extraction".into(), passed: d < 0.02, detail: format!("max relative error {d:.2e} (tol 2e-2)") },
        Err(e) => Check { name: "round_trip_extraction".into(), passed: false, detail: e },
    });

    VerifyReport { checks }
}

//! Bias and bias×power scans of the right-well population.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::CircuitParams;
use crate::dynamics::{simulate_protocol, DecoherenceRates, DriveParams, DynamicsError};
use crate::lz::{decay_only_steady_state, rate_steady_state, right_population, LzError, DEFAULT_N_MAX};
use crate::numfmt::sig9;
use crate::spectrum::{
    extract_four_level_model, level_diagram, linspace, predict_resonances, EigenGridSpec, FourLevelModel,
    LevelDiagram, Side, SpectrumError,
};

/// Population change against the undriven baseline that counts as a feature.
pub const FEATURE_THRESHOLD: f64 = 0.1;
/// Photon numbers are assigned to features within this many bias steps of a
/// predicted resonance.
pub const ASSIGNMENT_STEPS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Lz(#[from] LzError),
}

/// Maps nominal generator power to on-chip flux amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCalibration {
    pub p_ref: f64,
    pub phi_rf_ref: f64,
}

impl Default for PowerCalibration {
    /// 10⁻³ Φ0 at −20 dBm. This is a free calibration, not a measured one.
    fn default() -> Self {
        Self { p_ref: -20.0, phi_rf_ref: 1e-3 }
    }
}

impl PowerCalibration {
    pub fn validate(&self) -> Result<(), SweepError> {
        if !(self.phi_rf_ref > 0.0 && self.phi_rf_ref.is_finite()) {
            return Err(SweepError::InvalidSpec(format!("phi_rf_ref must be > 0, got {}", self.phi_rf_ref)));
        }
        if !self.p_ref.is_finite() {
            return Err(SweepError::InvalidSpec(format!("p_ref must be finite, got {}", self.p_ref)));
        }
        Ok(())
    }
}

/// φ_rf = φ_ref·10^((p − p_ref)/20); `p = −∞` switches the drive off.
pub fn power_to_amplitude(p_dbm: f64, cal: &PowerCalibration) -> f64 {
    cal.phi_rf_ref * 10f64.powf((p_dbm - cal.p_ref) / 20.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    FullDynamics,
    RateEquation,
}

impl Solver {
    pub fn as_str(&self) -> &'static str {
        match self {
            Solver::FullDynamics => "full",
            Solver::RateEquation => "rate",
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" | "full_dynamics" => Ok(Solver::FullDynamics),
            "rate" | "rate_equation" => Ok(Solver::RateEquation),
            other => Err(format!("unknown solver '{other}' (expected full or rate)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub bias_min: f64,
    pub bias_max: f64,
    pub n_bias: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub n_power: usize,
    pub f: f64,
    pub solver: Solver,
    pub duration: f64,
    pub shots: Option<u64>,
    pub seed: u64,
    pub n_max: u32,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            bias_min: 0.49,
            bias_max: 0.51,
            n_bias: 61,
            p_min: -30.0,
            p_max: 10.0,
            n_power: 21,
            f: DriveParams::DEFAULT_FREQUENCY_GHZ,
            solver: Solver::RateEquation,
            duration: 200.0,
            shots: None,
            seed: 0,
            n_max: DEFAULT_N_MAX,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::InvalidSpec(m));
        if self.n_bias < 1 || self.n_power < 1 {
            return bad(format!("n_bias and n_power must be >= 1, got {} and {}", self.n_bias, self.n_power));
        }
        if !self.bias_min.is_finite() || !self.bias_max.is_finite() {
            return bad("bias range must be finite".into());
        }
        if self.n_bias > 1 && !(self.bias_min < self.bias_max) {
            return bad(format!("bias_min ({}) must be below bias_max ({})", self.bias_min, self.bias_max));
        }
        if self.p_min.is_nan() || self.p_max.is_nan() {
            return bad("power range must be numeric".into());
        }
        if self.n_power > 1 && !(self.p_min < self.p_max) {
            return bad(format!("p_min ({}) must be below p_max ({})", self.p_min, self.p_max));
        }
        if self.n_power > 1 && !self.p_min.is_finite() {
            return bad("p_min may only be -inf for a single power point".into());
        }
        if !(self.f > 0.0 && self.f.is_finite()) {
            return bad(format!("f must be > 0, got {}", self.f));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if self.shots == Some(0) {
            return bad("shots must be >= 1".into());
        }
        if self.n_max < 1 {
            return bad("n_max must be >= 1".into());
        }
        Ok(())
    }

    pub fn bias_axis(&self) -> Vec<f64> {
        axis(self.bias_min, self.bias_max, self.n_bias)
    }

    pub fn power_axis(&self) -> Vec<f64> {
        axis(self.p_min, self.p_max, self.n_power)
    }

    pub fn bias_step(&self) -> f64 {
        if self.n_bias > 1 {
            (self.bias_max - self.bias_min) / (self.n_bias - 1) as f64
        } else {
            0.0
        }
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        vec![lo]
    } else {
        linspace(lo, hi, n)
    }
}

/// Level diagram from which the four-level model is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelWindow {
    pub bias_min: f64,
    pub bias_max: f64,
    pub n_bias: usize,
    pub grid: EigenGridSpec,
}

impl Default for ModelWindow {
    fn default() -> Self {
        let grid = EigenGridSpec::centered(
            0.5,
            EigenGridSpec::DEFAULT_HALF_WIDTH,
            EigenGridSpec::DEFAULT_POINTS,
            EigenGridSpec::DEFAULT_LEVELS,
        )
        .expect("default grid is valid");
        Self { bias_min: 0.49, bias_max: 0.51, n_bias: 201, grid }
    }
}

/// Fits the four-level model on the window's level diagram.
pub fn extract_model(p: &CircuitParams, w: &ModelWindow) -> Result<FourLevelModel, SpectrumError> {
    let d = level_diagram(p, (w.bias_min, w.bias_max), w.n_bias, &w.grid)?;
    extract_four_level_model(&d)
}

/// Right-well population of the undriven ground state across bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCurve {
    pub biases: Vec<f64>,
    pub populations: Vec<f64>,
}

impl BiasCurve {
    /// Ground level of each spectrum: 1 in the right well, 0 in the left,
    /// 0.5 when delocalized.
    pub fn from_diagram(d: &LevelDiagram) -> Self {
        let populations = d
            .spectra
            .iter()
            .map(|s| match s.labels.first().map(|l| l.side) {
                Some(Side::Right) => 1.0,
                Some(Side::Left) => 0.0,
                _ => 0.5,
            })
            .collect();
        Self { biases: d.biases.clone(), populations }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bias,p_right\n");
        for (b, p) in self.biases.iter().zip(&self.populations) {
            out.push_str(&format!("{},{}\n", sig9(*b), sig9(*p)));
        }
        out
    }
}

/// Undriven step curve at the given biases.
pub fn bias_scan_no_mw(p: &CircuitParams, biases: &[f64], g: &EigenGridSpec) -> Result<BiasCurve, SpectrumError> {
    let d = diagram_at(p, biases, g)?;
    Ok(BiasCurve::from_diagram(&d))
}

/// Level diagram at an explicit bias list.
pub fn diagram_at(p: &CircuitParams, biases: &[f64], g: &EigenGridSpec) -> Result<LevelDiagram, SpectrumError> {
    let spectra = biases
        .par_iter()
        .map(|&b| crate::spectrum::labelled_spectrum(p, b, g))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LevelDiagram { biases: biases.to_vec(), spectra })
}

/// How a grid cell obtained its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSource {
    FullDynamics,
    RateEquation,
    /// The rate graph was disconnected; the pump-free state was used.
    DecayOnly,
    /// Shot-noise resampling of one of the above.
    Sampled,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub bias_index: usize,
    pub power_index: usize,
    pub bias: f64,
    pub power: f64,
    pub cause: String,
}

/// Right-well population over bias × power. `values[i][j]` belongs to
/// `biases[i]` and `powers[j]`; failed cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub biases: Vec<f64>,
    pub powers: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub values: Vec<Vec<Option<f64>>>,
    pub provenance: Vec<Vec<CellSource>>,
    pub failures: Vec<CellFailure>,
    pub solver: Solver,
    pub seed: u64,
    pub shots: Option<u64>,
}

impl SweepGrid {
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    /// Values along bias at power index `j`.
    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.values.iter().map(|row| row[j]).collect()
    }

    /// Header row of powers, then one row per bias.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bias/power_dBm");
        for p in &self.powers {
            out.push(',');
            out.push_str(&sig9(*p));
        }
        out.push('\n');
        for (b, row) in self.biases.iter().zip(&self.values) {
            out.push_str(&sig9(*b));
            for v in row {
                out.push(',');
                out.push_str(&sig9(v.unwrap_or(f64::NAN)));
            }
            out.push('\n');
        }
        out
    }
}

/// Sweep using a model extracted from `window`; cells whose bias has no
/// double well are reported as failed.
pub fn run_sweep(
    p: &CircuitParams,
    spec: &SweepSpec,
    cal: &PowerCalibration,
    r: &DecoherenceRates,
    window: &ModelWindow,
) -> Result<SweepGrid, SweepError> {
    spec.validate()?;
    let model = extract_model(p, window)?;
    let check = |bias: f64| p.with_bias(bias).find_wells().map(|_| ()).map_err(|e| e.to_string());
    run_sweep_with_model(&model, spec, cal, r, check)
}

/// Sweep over the diabatic lines of `model`, evaluated at each bias.
///
/// `cell_check` may veto a bias; vetoed cells carry the returned cause.
pub fn run_sweep_with_model(
    model: &FourLevelModel,
    spec: &SweepSpec,
    cal: &PowerCalibration,
    r: &DecoherenceRates,
    cell_check: impl Fn(f64) -> Result<(), String> + Sync,
) -> Result<SweepGrid, SweepError> {
    spec.validate()?;
    cal.validate()?;
    r.validate()?;
    model.validate()?;
    let biases = spec.bias_axis();
    let powers = spec.power_axis();
    let amplitudes: Vec<f64> = powers.iter().map(|&pw| power_to_amplitude(pw, cal)).collect();
    let bias_ok: Vec<Result<(), String>> = biases.iter().map(|&b| cell_check(b)).collect();

    let n_power = powers.len();
    let cells: Vec<(usize, usize)> = (0..biases.len()).flat_map(|i| (0..n_power).map(move |j| (i, j))).collect();
    let results: Vec<Result<(f64, CellSource), String>> = cells
        .par_iter()
        .map(|&(i, j)| {
            bias_ok[i].clone()?;
            let m = model.at_bias(biases[i]);
            let d = DriveParams { f: spec.f, phi_rf: amplitudes[j], duration: spec.duration };
            evaluate_cell(&m, &d, r, spec.solver, spec.n_max)
        })
        .collect();

    let mut values = vec![vec![None; n_power]; biases.len()];
    let mut provenance = vec![vec![CellSource::Failed; n_power]; biases.len()];
    let mut failures = Vec::new();
    for (&(i, j), res) in cells.iter().zip(results) {
        match res {
            Ok((v, src)) => {
                values[i][j] = Some(v);
                provenance[i][j] = src;
            }
            Err(cause) => failures.push(CellFailure { bias_index: i, power_index: j, bias: biases[i], power: powers[j], cause }),
        }
    }
    let mut grid = SweepGrid {
        biases,
        powers,
        amplitudes,
        values,
        provenance,
        failures,
        solver: spec.solver,
        seed: spec.seed,
        shots: None,
    };
    if let Some(shots) = spec.shots {
        grid = add_shot_noise(&grid, shots, spec.seed);
    }
    Ok(grid)
}

fn evaluate_cell(
    m: &FourLevelModel,
    d: &DriveParams,
    r: &DecoherenceRates,
    solver: Solver,
    n_max: u32,
) -> Result<(f64, CellSource), String> {
    match solver {
        Solver::FullDynamics => simulate_protocol(m, d, r).map(|v| (v, CellSource::FullDynamics)).map_err(|e| e.to_string()),
        Solver::RateEquation => match rate_steady_state(m, d, r, n_max) {
            Ok(p) => Ok((right_population(&p), CellSource::RateEquation)),
            Err(LzError::SingularRateMatrix(_)) => Ok((right_population(&decay_only_steady_state(m)), CellSource::DecayOnly)),
            Err(e) => Err(e.to_string()),
        },
    }
}

/// Replaces each cell by a binomial estimate from `shots` trials.
///
/// Every cell draws from its own ChaCha8 stream selected by the cell index
/// (row-major), so the result does not depend on evaluation order.
pub fn add_shot_noise(grid: &SweepGrid, shots: u64, seed: u64) -> SweepGrid {
    let n_power = grid.powers.len();
    let mut out = grid.clone();
    for (i, row) in out.values.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if let Some(v) = cell {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((i * n_power + j) as u64);
                let p = v.clamp(0.0, 1.0);
                let k = Binomial::new(shots, p).expect("probability in [0, 1]").sample(&mut rng);
                *v = k as f64 / shots as f64;
                out.provenance[i][j] = CellSource::Sampled;
            }
        }
    }
    out.seed = seed;
    out.shots = Some(shots);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub bias: f64,
    pub power: f64,
    pub population: f64,
    pub baseline: f64,
    /// Photon number of the nearest predicted resonance, if close enough.
    pub n: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub bias: f64,
    pub power: f64,
    /// Population of the well opposite to the static ground state.
    pub population: f64,
    pub ground_side: Side,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureReport {
    pub peaks: Vec<Feature>,
    pub dips: Vec<Feature>,
    pub inversions: Vec<Inversion>,
}

impl FeatureReport {
    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty() && self.dips.is_empty() && self.inversions.is_empty()
    }
}

/// Peaks, dips and inversion cells of a sweep.
///
/// A peak (dip) rises above (falls below) the undriven baseline by more than
/// [`FEATURE_THRESHOLD`] and is a strict local maximum (minimum) along bias at
/// fixed power. Only interior bias points qualify, since an extremum is
/// undefined at the edge of the scan.
pub fn detect_features(
    grid: &SweepGrid,
    baseline: &BiasCurve,
    diagram: &LevelDiagram,
    f: f64,
    n_max: u32,
) -> Result<FeatureReport, SweepError> {
    if baseline.populations.len() != grid.biases.len() {
        return Err(SweepError::InvalidSpec(format!(
            "baseline has {} biases, grid has {}",
            baseline.populations.len(),
            grid.biases.len()
        )));
    }
    let nb = grid.biases.len();
    let step = if nb > 1 { (grid.biases[nb - 1] - grid.biases[0]) / (nb - 1) as f64 } else { 0.0 };
    let hits = predict_resonances(diagram, f, n_max);
    let assign = |bias: f64| -> Option<u32> {
        hits.iter()
            .map(|h| ((h.bias - bias).abs(), h.n))
            .filter(|(dist, _)| *dist <= ASSIGNMENT_STEPS * step * (1.0 + 1e-9))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, n)| n)
    };

    let mut report = FeatureReport::default();
    for (j, &power) in grid.powers.iter().enumerate() {
        let col = grid.column(j);
        for i in 0..nb {
            let Some(v) = col[i] else { continue };
            let base = baseline.populations[i];
            let bias = grid.biases[i];
            if i > 0 && i + 1 < nb {
                if let (Some(l), Some(r)) = (col[i - 1], col[i + 1]) {
                    if v - base > FEATURE_THRESHOLD && v > l && v > r {
                        report.peaks.push(Feature { bias, power, population: v, baseline: base, n: assign(bias) });
                    }
                    if base - v > FEATURE_THRESHOLD && v < l && v < r {
                        report.dips.push(Feature { bias, power, population: v, baseline: base, n: assign(bias) });
                    }
                }
            }
            if base == 0.0 && v > 0.5 {
                report.inversions.push(Inversion { bias, power, population: v, ground_side: Side::Left });
            } else if base == 1.0 && 1.0 - v > 0.5 {
                report.inversions.push(Inversion { bias, power, population: 1.0 - v, ground_side: Side::Right });
            }
        }
    }
    let order = |a: &Feature, b: &Feature| a.bias.total_cmp(&b.bias).then(a.power.total_cmp(&b.power));
    report.peaks.sort_by(order);
    report.dips.sort_by(order);
    report.inversions.sort_by(|a, b| a.bias.total_cmp(&b.bias).then(a.power.total_cmp(&b.power)));
    Ok(report)
}

//! Stationary states of the loop flux in the double-well potential.
//!
//! The Hamiltonian −(ħ²/2C) d²/dΦ² + U(Φ) is discretized with second-order
//! central differences on a uniform flux grid whose first and last points are
//! hard walls. Levels are labelled by the well that carries their
//! probability, level diagrams are built by repeating the solve across bias,
//! and the four-level diabatic model is fitted from such diagrams.

mod model;
mod resonance;
mod tridiag;

pub use model::{extract_four_level_model, DiabaticState, FourLevelModel, StaticGround};
pub use resonance::{predict_resonances, Resonance};
pub use tridiag::SymTridiagonal;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitError, CircuitParams, WellGeometry};
use crate::numfmt::sig9;

/// Levels whose energy moves by more than this when the grid is doubled
/// trigger [`SpectrumError::GridTooCoarse`].
pub const GRID_CONVERGENCE_GHZ: f64 = 1e-3;

/// Left-weight bounds that separate localized from delocalized levels.
pub const LEFT_THRESHOLD: f64 = 0.75;
pub const RIGHT_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpectrumError {
    #[error("invalid eigen grid: {0}")]
    InvalidGrid(String),
    #[error("grid too coarse: level {level} moved by {shift_ghz:.3e} GHz when the grid was doubled")]
    GridTooCoarse { level: usize, shift_ghz: f64 },
    #[error("eigensolver failed to converge: {0}")]
    ConvergenceFailure(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("at bias {bias}: {source}")]
    AtBias { bias: f64, source: Box<SpectrumError> },
    #[error("no avoided crossing found for {crossing}: {reason}")]
    NoCrossingFound { crossing: String, reason: String },
    #[error("cannot follow diabatic branch {state}: {reason}")]
    BranchAmbiguity { state: String, reason: String },
    #[error("extracted model violates the expected regime: {0}")]
    RegimeViolation(String),
    #[error("invalid level diagram: {0}")]
    InvalidDiagram(String),
}

/// Flux window and resolution of the finite-difference problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenGridSpec {
    pub phi_min: f64,
    pub phi_max: f64,
    pub n_points: usize,
    pub n_levels: usize,
}

impl EigenGridSpec {
    pub const DEFAULT_HALF_WIDTH: f64 = 0.35;
    pub const DEFAULT_POINTS: usize = 3001;
    pub const DEFAULT_LEVELS: usize = 8;

    pub fn new(phi_min: f64, phi_max: f64, n_points: usize, n_levels: usize) -> Result<Self, SpectrumError> {
        let g = Self { phi_min, phi_max, n_points, n_levels };
        g.check()?;
        Ok(g)
    }

    /// Window `[center − half_width, center + half_width]`.
    pub fn centered(center: f64, half_width: f64, n_points: usize, n_levels: usize) -> Result<Self, SpectrumError> {
        Self::new(center - half_width, center + half_width, n_points, n_levels)
    }

    /// Default window around the bias of `p`.
    pub fn default_for(p: &CircuitParams) -> Self {
        Self::centered(p.phi_q, Self::DEFAULT_HALF_WIDTH, Self::DEFAULT_POINTS, Self::DEFAULT_LEVELS)
            .expect("default grid is valid")
    }

    fn check(&self) -> Result<(), SpectrumError> {
        if !(self.phi_min < self.phi_max) || !self.phi_min.is_finite() || !self.phi_max.is_finite() {
            return Err(SpectrumError::InvalidGrid(format!(
                "phi_min ({}) must be below phi_max ({})",
                self.phi_min, self.phi_max
            )));
        }
        if self.n_points < 201 {
            return Err(SpectrumError::InvalidGrid(format!("n_points must be >= 201, got {}", self.n_points)));
        }
        if self.n_levels == 0 || self.n_levels > self.n_points / 10 {
            return Err(SpectrumError::InvalidGrid(format!(
                "n_levels must be in 1..={}, got {}",
                self.n_points / 10,
                self.n_levels
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.phi_min + self.phi_max)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.phi_max - self.phi_min)
    }

    /// Same width and resolution, shifted to a new center.
    pub fn recentered(&self, center: f64) -> Self {
        let hw = self.half_width();
        Self { phi_min: center - hw, phi_max: center + hw, ..*self }
    }

    pub fn step(&self) -> f64 {
        (self.phi_max - self.phi_min) / (self.n_points - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        linspace(self.phi_min, self.phi_max, self.n_points)
    }

    fn doubled(&self) -> Self {
        Self { n_points: 2 * self.n_points - 1, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Delocalized,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Left => "L",
            Side::Right => "R",
            Side::Delocalized => "D",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WellLabel {
    pub side: Side,
    pub intrawell_index: usize,
}

/// Lowest levels at one bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySpectrum {
    pub phi_q: f64,
    /// Flux grid of the wavefunctions; empty for spectra that were not
    /// produced by the finite-difference solver.
    pub grid: Vec<f64>,
    /// Energies in GHz, ascending.
    pub energies: Vec<f64>,
    /// Σ|ψ|²·Δφ = 1 on `grid`.
    pub wavefunctions: Vec<Vec<f64>>,
    /// Probability left of the barrier per level; filled by classification.
    pub left_weights: Vec<f64>,
    pub labels: Vec<WellLabel>,
}

impl EnergySpectrum {
    pub fn n_levels(&self) -> usize {
        self.energies.len()
    }

    pub fn is_classified(&self) -> bool {
        self.labels.len() == self.energies.len() && self.left_weights.len() == self.energies.len()
    }

    /// Builds a labelled spectrum directly from energies and left weights.
    pub fn from_weights(phi_q: f64, energies: Vec<f64>, left_weights: Vec<f64>) -> Self {
        let labels = label_levels(&left_weights);
        Self { phi_q, grid: Vec::new(), energies, wavefunctions: Vec::new(), left_weights, labels }
    }
}

/// Discretized Hamiltonian for `p` on `g`, in GHz.
fn hamiltonian(p: &CircuitParams, g: &EigenGridSpec) -> SymTridiagonal {
    let dx = g.step();
    let t = p.kinetic_ghz() / (dx * dx);
    let points = g.points();
    let interior = &points[1..points.len() - 1];
    let diag: Vec<f64> = interior.iter().map(|&phi| p.potential(phi) + 2.0 * t).collect();
    let off = vec![-t; interior.len() - 1];
    SymTridiagonal::new(diag, off)
}

/// Lowest `g.n_levels` eigenpairs of the loop Hamiltonian.
///
/// The levels are recomputed on a grid with twice the resolution; if any of
/// them moves by more than [`GRID_CONVERGENCE_GHZ`] the solve is rejected.
pub fn solve_eigen(p: &CircuitParams, g: &EigenGridSpec) -> Result<EnergySpectrum, SpectrumError> {
    g.check()?;
    let h = hamiltonian(p, g);
    let energies = h.lowest_eigenvalues(g.n_levels);

    let fine = hamiltonian(p, &g.doubled()).lowest_eigenvalues(g.n_levels);
    for (level, (a, b)) in energies.iter().zip(&fine).enumerate() {
        let shift = (a - b).abs();
        if !(shift <= GRID_CONVERGENCE_GHZ) {
            return Err(SpectrumError::GridTooCoarse { level, shift_ghz: shift });
        }
    }

    let scale = g.step().sqrt().recip();
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(energies.len());
    for (k, &e) in energies.iter().enumerate() {
        let v = h.eigenvector(e, k, &vectors)?;
        vectors.push(v);
    }
    let wavefunctions = vectors
        .into_iter()
        .map(|v| {
            let mut psi = Vec::with_capacity(g.n_points);
            psi.push(0.0);
            psi.extend(v.into_iter().map(|x| x * scale));
            psi.push(0.0);
            psi
        })
        .collect();

    Ok(EnergySpectrum {
        phi_q: p.phi_q,
        grid: g.points(),
        energies,
        wavefunctions,
        left_weights: Vec::new(),
        labels: Vec::new(),
    })
}

/// Attaches well labels from the probability left of `w.barrier_top`.
///
/// A grid point sitting on the barrier contributes half its weight to each
/// side. `intrawell_index` is the number of same-well states below, with
/// partially localized levels counted by their weight.
pub fn classify_states(mut s: EnergySpectrum, w: &WellGeometry) -> EnergySpectrum {
    if s.grid.len() >= 2 {
        let dx = s.grid[1] - s.grid[0];
        let on_barrier = 1e-6 * dx;
        s.left_weights = s
            .wavefunctions
            .iter()
            .map(|psi| {
                let mut left = 0.0;
                for (&phi, &a) in s.grid.iter().zip(psi) {
                    let p = a * a * dx;
                    if (phi - w.barrier_top).abs() <= on_barrier {
                        left += 0.5 * p;
                    } else if phi < w.barrier_top {
                        left += p;
                    }
                }
                left
            })
            .collect();
    }
    s.labels = label_levels(&s.left_weights);
    s
}

fn side_of(left_weight: f64) -> Side {
    if left_weight > LEFT_THRESHOLD {
        Side::Left
    } else if left_weight < RIGHT_THRESHOLD {
        Side::Right
    } else {
        Side::Delocalized
    }
}

/// Effective number of left- and right-well states below each level.
pub(crate) fn cumulative_counts(left_weights: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(left_weights.len());
    let (mut l, mut r) = (0.0, 0.0);
    for &w in left_weights {
        out.push((l, r));
        l += w;
        r += 1.0 - w;
    }
    out
}

fn label_levels(left_weights: &[f64]) -> Vec<WellLabel> {
    cumulative_counts(left_weights)
        .into_iter()
        .zip(left_weights)
        .map(|((below_l, below_r), &w)| {
            let side = side_of(w);
            let below = match side {
                Side::Left => below_l,
                Side::Right => below_r,
                Side::Delocalized if w >= 0.5 => below_l,
                Side::Delocalized => below_r,
            };
            WellLabel { side, intrawell_index: below.round() as usize }
        })
        .collect()
}

/// Spectra on a strictly increasing list of biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagram {
    pub biases: Vec<f64>,
    pub spectra: Vec<EnergySpectrum>,
}

/// `n` evenly spaced points from `lo` to `hi`; a single point is `lo`.
///
/// Points are placed symmetrically about the midpoint so that mirrored
/// ranges produce exactly mirrored axes.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let last = (n - 1) as f64;
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    i if i == n - 1 => hi,
                    i => mid + half * ((2 * i) as f64 - last) / last,
                })
                .collect()
        }
    }
}

/// Classified spectrum at one bias, with the grid window recentered there.
pub fn labelled_spectrum(p: &CircuitParams, bias: f64, g: &EigenGridSpec) -> Result<EnergySpectrum, SpectrumError> {
    let pb = p.with_bias(bias);
    let attach = |e: SpectrumError| SpectrumError::AtBias { bias, source: Box::new(e) };
    let wells = pb.find_wells().map_err(|e| attach(e.into()))?;
    let s = solve_eigen(&pb, &g.recentered(bias)).map_err(attach)?;
    Ok(classify_states(s, &wells))
}

/// Level diagram over `bias_range` with the grid window following the bias.
pub fn level_diagram(
    p: &CircuitParams,
    bias_range: (f64, f64),
    n_bias: usize,
    g: &EigenGridSpec,
) -> Result<LevelDiagram, SpectrumError> {
    let (lo, hi) = bias_range;
    if n_bias == 0 || (n_bias > 1 && !(lo < hi)) {
        return Err(SpectrumError::InvalidDiagram(format!(
            "need n_bias >= 1 and an increasing range, got {n_bias} points on [{lo}, {hi}]"
        )));
    }
    let biases = linspace(lo, hi, n_bias);
    let spectra = biases
        .par_iter()
        .map(|&b| labelled_spectrum(p, b, g))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LevelDiagram { biases, spectra })
}

impl LevelDiagram {
    pub fn n_levels(&self) -> usize {
        self.spectra.iter().map(|s| s.n_levels()).min().unwrap_or(0)
    }

    pub fn check(&self) -> Result<(), SpectrumError> {
        if self.biases.len() != self.spectra.len() || self.biases.is_empty() {
            return Err(SpectrumError::InvalidDiagram("bias and spectrum counts differ".into()));
        }
        if self.biases.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SpectrumError::InvalidDiagram("biases must be strictly increasing".into()));
        }
        let n = self.spectra[0].n_levels();
        if self.spectra.iter().any(|s| s.n_levels() != n || !s.is_classified()) {
            return Err(SpectrumError::InvalidDiagram("spectra must be classified with a uniform level count".into()));
        }
        Ok(())
    }

    /// Diagram of the static four-level Hamiltonian of `model`.
    ///
    /// Left weight of an eigenvector is its probability on {1L, 0L}.
    pub fn from_four_level_model(model: &FourLevelModel, bias_range: (f64, f64), n_bias: usize) -> Self {
        let biases = linspace(bias_range.0, bias_range.1, n_bias);
        let spectra = biases.iter().map(|&b| model.synthetic_spectrum(b)).collect();
        Self { biases, spectra }
    }

    /// CSV with columns `bias,level_index,energy_GHz,side,intrawell_index`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bias,level_index,energy_GHz,side,intrawell_index\n");
        for (b, s) in self.biases.iter().zip(&self.spectra) {
            for (k, e) in s.energies.iter().enumerate() {
                let (side, idx) = s
                    .labels
                    .get(k)
                    .map(|l| (l.side.as_str(), l.intrawell_index.to_string()))
                    .unwrap_or(("", String::new()));
                out.push_str(&format!("{},{},{},{},{}\n", sig9(*b), k, sig9(*e), side, idx));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fast_grid(p: &CircuitParams) -> EigenGridSpec {
        EigenGridSpec::centered(p.phi_q, 0.35, 2001, 6).unwrap()
    }

    #[test]
    fn grid_spec_invariants() {
        assert!(EigenGridSpec::new(0.5, 0.4, 1001, 4).is_err());
        assert!(EigenGridSpec::new(0.0, 1.0, 200, 4).is_err());
        assert!(EigenGridSpec::new(0.0, 1.0, 1001, 101).is_err());
        assert!(EigenGridSpec::new(0.0, 1.0, 1001, 100).is_ok());
    }

    #[test]
    fn harmonic_limit_spacing() {
        let p = CircuitParams::from_beta_l(1080e-12, 80e-12, 0.0, 0.5).unwrap();
        let s = solve_eigen(&p, &EigenGridSpec::default_for(&p)).unwrap();
        let f_lc = p.lc_frequency_ghz();
        assert_relative_eq!(f_lc, 0.5415, max_relative = 1e-3);
        for w in s.energies.windows(2).take(5) {
            assert_relative_eq!(w[1] - w[0], f_lc, max_relative = 0.01);
        }
    }

    #[test]
    fn wavefunctions_normalized() {
        let p = CircuitParams::femtofarad_device().with_bias(0.501);
        let s = solve_eigen(&p, &fast_grid(&p)).unwrap();
        let dx = s.grid[1] - s.grid[0];
        for psi in &s.wavefunctions {
            let n: f64 = psi.iter().map(|a| a * a * dx).sum();
            assert!((n - 1.0).abs() < 1e-8);
        }
        assert!(s.energies.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn parity_doublet_at_symmetry_point() {
        let p = CircuitParams::femtofarad_device();
        let s = solve_eigen(&p, &fast_grid(&p)).unwrap();
        let n = s.grid.len();
        let sym = |psi: &Vec<f64>, sign: f64| (0..n).map(|i| (psi[i] - sign * psi[n - 1 - i]).abs()).fold(0.0, f64::max);
        assert!(sym(&s.wavefunctions[0], 1.0) < 1e-6);
        assert!(sym(&s.wavefunctions[1], -1.0) < 1e-6);
        // splitting 2Δ00 is small but resolved
        let split = s.energies[1] - s.energies[0];
        assert!(split > 1e-4 && split < 0.1, "{split}");
    }

    #[test]
    fn classification_examples() {
        let p = CircuitParams::femtofarad_device();
        let sym = classify_states(solve_eigen(&p, &fast_grid(&p)).unwrap(), &p.find_wells().unwrap());
        assert_eq!(sym.labels[0].side, Side::Delocalized);
        assert_eq!(sym.labels[1].side, Side::Delocalized);
        // above the barrier at the symmetry point
        let wells = p.find_wells().unwrap();
        let above = sym.energies.iter().position(|&e| e > wells.u_barrier).unwrap();
        assert_eq!(sym.labels[above].side, Side::Delocalized);

        let tilted = p.with_bias(0.506);
        let s = classify_states(solve_eigen(&tilted, &fast_grid(&tilted)).unwrap(), &tilted.find_wells().unwrap());
        assert_eq!(s.labels[0], WellLabel { side: Side::Right, intrawell_index: 0 });
        assert!(s.left_weights[0] < 0.1);
    }

    #[test]
    fn resonant_spacing_reachable_off_symmetry() {
        let p = CircuitParams::femtofarad_device();
        let g = EigenGridSpec::centered(0.5, 0.35, 2001, 6).unwrap();
        let d = level_diagram(&p, (0.49, 0.4999), 12, &g).unwrap();
        let crosses = (1..4).any(|k| {
            let spacing: Vec<f64> = d.spectra.iter().map(|s| s.energies[k] - s.energies[0]).collect();
            spacing.iter().any(|&x| x > 15.9) && spacing.iter().any(|&x| x < 15.9)
        });
        assert!(crosses);
    }

    #[test]
    fn single_bias_diagram_matches_direct_solve() {
        let p = CircuitParams::femtofarad_device().with_bias(0.497);
        let g = fast_grid(&p);
        let d = level_diagram(&p, (0.497, 0.497), 1, &g).unwrap();
        let direct = classify_states(solve_eigen(&p, &g).unwrap(), &p.find_wells().unwrap());
        assert_eq!(d.spectra[0], direct);
    }

    #[test]
    fn mirrored_range_gives_mirrored_diagram() {
        let p = CircuitParams::femtofarad_device();
        let g = fast_grid(&p);
        let a = level_diagram(&p, (0.49, 0.498), 5, &g).unwrap();
        let b = level_diagram(&p, (0.502, 0.51), 5, &g).unwrap();
        for i in 0..5 {
            let (sa, sb) = (&a.spectra[i], &b.spectra[4 - i]);
            for k in 0..sa.n_levels() {
                assert!((sa.energies[k] - sb.energies[k]).abs() < 1e-8);
                assert!((sa.left_weights[k] - (1.0 - sb.left_weights[k])).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let p = CircuitParams::femtofarad_device();
        let g = EigenGridSpec::centered(0.5, 0.35, 201, 20).unwrap();
        assert!(matches!(solve_eigen(&p, &g), Err(SpectrumError::GridTooCoarse { .. })));
    }

    #[test]
    fn diagram_csv_columns() {
        let p = CircuitParams::femtofarad_device();
        let d = level_diagram(&p, (0.499, 0.501), 2, &fast_grid(&p)).unwrap();
        let csv = d.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "bias,level_index,energy_GHz,side,intrawell_index");
        assert_eq!(csv.lines().count(), 1 + 2 * 6);
        assert!(lines.next().unwrap().starts_with("0.499000000,0,"));
    }
}

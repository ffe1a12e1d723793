//! Four-level diabatic model and its extraction from a level diagram.

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{cumulative_counts, EnergySpectrum, LevelDiagram, SpectrumError};

/// Weight a level needs on one side before it is used in a slope fit.
const FIT_LOCALIZATION: f64 = 0.9;
/// Grid steps excluded around each crossing in the slope fit.
const CROSSING_EXCLUSION_STEPS: f64 = 3.0;
/// Gaps below this are numerically unresolved.
const MIN_RESOLVED_GAP_GHZ: f64 = 1e-6;

/// Diabatic basis state; the discriminant is the basis index in
/// {1R, 1L, 0R, 0L} order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiabaticState {
    #[serde(rename = "1R")]
    ExcitedRight = 0,
    #[serde(rename = "1L")]
    ExcitedLeft = 1,
    #[serde(rename = "0R")]
    GroundRight = 2,
    #[serde(rename = "0L")]
    GroundLeft = 3,
}

impl DiabaticState {
    pub const ALL: [DiabaticState; 4] = [
        DiabaticState::ExcitedRight,
        DiabaticState::ExcitedLeft,
        DiabaticState::GroundRight,
        DiabaticState::GroundLeft,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn is_left(self) -> bool {
        matches!(self, DiabaticState::ExcitedLeft | DiabaticState::GroundLeft)
    }

    pub fn intrawell_index(self) -> usize {
        match self {
            DiabaticState::ExcitedRight | DiabaticState::ExcitedLeft => 1,
            _ => 0,
        }
    }

    pub fn from_well(left: bool, intrawell_index: usize) -> Option<Self> {
        match (left, intrawell_index) {
            (true, 0) => Some(DiabaticState::GroundLeft),
            (true, 1) => Some(DiabaticState::ExcitedLeft),
            (false, 0) => Some(DiabaticState::GroundRight),
            (false, 1) => Some(DiabaticState::ExcitedRight),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DiabaticState::ExcitedRight => "1R",
            DiabaticState::ExcitedLeft => "1L",
            DiabaticState::GroundRight => "0R",
            DiabaticState::GroundLeft => "0L",
        }
    }
}

impl std::fmt::Display for DiabaticState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Which of the two `|0⟩` states is lower in the undriven model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StaticGround {
    Left,
    Right,
    Degenerate,
}

impl StaticGround {
    /// Right-well population of the relaxed undriven state.
    pub fn right_population(self) -> f64 {
        match self {
            StaticGround::Left => 0.0,
            StaticGround::Right => 1.0,
            StaticGround::Degenerate => 0.5,
        }
    }
}

/// Diabatic energies `E_x(b) = E_x0 + k_x·(b − ref_bias)` and the three
/// interwell tunnel splittings, all in GHz (slopes in GHz per Φ0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourLevelModel {
    pub ref_bias: f64,
    /// Indexed by [`DiabaticState::index`].
    pub energies: [f64; 4],
    pub slopes: [f64; 4],
    pub delta00: f64,
    pub delta01: f64,
    pub delta11: f64,
}

impl FourLevelModel {
    pub fn energy(&self, s: DiabaticState) -> f64 {
        self.energies[s.index()]
    }

    pub fn slope(&self, s: DiabaticState) -> f64 {
        self.slopes[s.index()]
    }

    pub fn energy_at(&self, s: DiabaticState, bias: f64) -> f64 {
        self.energy(s) + self.slope(s) * (bias - self.ref_bias)
    }

    /// The same diabatic lines referenced to another bias.
    pub fn at_bias(&self, bias: f64) -> Self {
        let mut m = *self;
        for s in DiabaticState::ALL {
            m.energies[s.index()] = self.energy_at(s, bias);
        }
        m.ref_bias = bias;
        m
    }

    /// Tunnel coupling between two basis states, following the sparsity of
    /// the four-level Hamiltonian.
    pub fn coupling(&self, a: DiabaticState, b: DiabaticState) -> f64 {
        use DiabaticState::*;
        match (a, b) {
            (ExcitedRight, ExcitedLeft) | (ExcitedLeft, ExcitedRight) => self.delta11,
            (GroundRight, GroundLeft) | (GroundLeft, GroundRight) => self.delta00,
            (ExcitedRight, GroundLeft) | (GroundLeft, ExcitedRight) => self.delta01,
            (ExcitedLeft, GroundRight) | (GroundRight, ExcitedLeft) => self.delta01,
            _ => 0.0,
        }
    }

    /// Static Hamiltonian at `ref_bias` in GHz (not angular).
    pub fn static_hamiltonian(&self) -> Matrix4<f64> {
        let mut h = Matrix4::zeros();
        for a in DiabaticState::ALL {
            for b in DiabaticState::ALL {
                h[(a.index(), b.index())] = if a == b { self.energy(a) } else { self.coupling(a, b) };
            }
        }
        h
    }

    /// Lower of the two `|0⟩` states at `ref_bias`.
    ///
    /// The tie window |E_0R − E_0L| ≤ 2Δ00/√3 is where the adiabatic ground
    /// state of the 0R/0L doublet has a left weight between 0.25 and 0.75,
    /// i.e. where the eigenstate classification calls it delocalized.
    pub fn static_ground(&self) -> StaticGround {
        let diff = self.energy(DiabaticState::GroundRight) - self.energy(DiabaticState::GroundLeft);
        let window = 2.0 * self.delta00 / 3f64.sqrt();
        if diff.abs() <= window {
            StaticGround::Degenerate
        } else if diff < 0.0 {
            StaticGround::Right
        } else {
            StaticGround::Left
        }
    }

    pub fn validate(&self) -> Result<(), SpectrumError> {
        let all_finite = self.energies.iter().chain(&self.slopes).all(|x| x.is_finite());
        if !all_finite || !self.ref_bias.is_finite() {
            return Err(SpectrumError::RegimeViolation("non-finite model parameter".into()));
        }
        for (name, d) in [("delta00", self.delta00), ("delta01", self.delta01), ("delta11", self.delta11)] {
            if !(d >= 0.0) {
                return Err(SpectrumError::RegimeViolation(format!("{name} must be >= 0, got {d}")));
            }
        }
        Ok(())
    }

    pub(super) fn synthetic_spectrum(&self, bias: f64) -> EnergySpectrum {
        let eig = SymmetricEigen::new(self.at_bias(bias).static_hamiltonian());
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let left = order
            .iter()
            .map(|&k| {
                let v = eig.eigenvectors.column(k);
                v[DiabaticState::ExcitedLeft.index()].powi(2) + v[DiabaticState::GroundLeft.index()].powi(2)
            })
            .collect();
        EnergySpectrum::from_weights(bias, energies, left)
    }
}

#[derive(Debug, Clone, Copy)]
struct Line {
    slope: f64,
    intercept: f64,
}

impl Line {
    fn at(&self, dx: f64) -> f64 {
        self.intercept + self.slope * dx
    }
}

fn fit_line(points: &[(f64, f64)]) -> Option<Line> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(Line { slope, intercept: my - slope * mx })
}

/// The crossings Δ-values are read from, as (a, b) state pairs.
const CROSSINGS: [(DiabaticState, DiabaticState, &str); 4] = [
    (DiabaticState::GroundLeft, DiabaticState::GroundRight, "delta00 (0L/0R)"),
    (DiabaticState::ExcitedRight, DiabaticState::GroundLeft, "delta01 (1R/0L)"),
    (DiabaticState::ExcitedLeft, DiabaticState::GroundRight, "delta01 (1L/0R)"),
    (DiabaticState::ExcitedRight, DiabaticState::ExcitedLeft, "delta11 (1R/1L)"),
];

/// Fits the four-level model to a level diagram.
///
/// Diabatic slopes come from linear regression over bias points where a
/// branch is localized beyond 0.9, skipping ±3 grid steps around every
/// crossing of that branch. Each Δ is half the minimal adiabatic gap at the
/// crossing of the fitted lines; the minimum is refined by a parabola through
/// the squared gap, which is exact for an isolated two-level crossing. The
/// energies are the fitted lines evaluated at the diagram's center bias.
pub fn extract_four_level_model(d: &LevelDiagram) -> Result<FourLevelModel, SpectrumError> {
    d.check()?;
    let n_bias = d.biases.len();
    if n_bias < 5 {
        return Err(SpectrumError::InvalidDiagram(format!("need at least 5 biases, got {n_bias}")));
    }
    if d.n_levels() < 4 {
        return Err(SpectrumError::InvalidDiagram(format!("need at least 4 levels, got {}", d.n_levels())));
    }
    let ref_bias = 0.5 * (d.biases[0] + d.biases[n_bias - 1]);
    let step = (d.biases[n_bias - 1] - d.biases[0]) / (n_bias - 1) as f64;

    let branch_points = collect_branch_points(d);
    let fit = |s: DiabaticState, skip: &[f64]| -> Result<Line, SpectrumError> {
        let pts: Vec<(f64, f64)> = branch_points[s.index()]
            .iter()
            .filter(|(b, _)| skip.iter().all(|c| (b - c).abs() > CROSSING_EXCLUSION_STEPS * step))
            .map(|&(b, e)| (b - ref_bias, e))
            .collect();
        fit_line(&pts).ok_or_else(|| SpectrumError::BranchAmbiguity {
            state: s.to_string(),
            reason: format!("only {} localized points outside crossings", pts.len()),
        })
    };

    let mut lines = [Line { slope: 0.0, intercept: 0.0 }; 4];
    for s in DiabaticState::ALL {
        lines[s.index()] = fit(s, &[])?;
    }
    let crossing_bias = |lines: &[Line; 4], a: DiabaticState, b: DiabaticState| -> Option<f64> {
        let (la, lb) = (lines[a.index()], lines[b.index()]);
        let ds = la.slope - lb.slope;
        (ds != 0.0).then(|| ref_bias + (lb.intercept - la.intercept) / ds)
    };
    let mut refined = lines;
    for s in DiabaticState::ALL {
        let skip: Vec<f64> = CROSSINGS
            .iter()
            .filter(|(a, b, _)| *a == s || *b == s)
            .filter_map(|(a, b, _)| crossing_bias(&lines, *a, *b))
            .collect();
        refined[s.index()] = fit(s, &skip)?;
    }
    let lines = refined;

    let mut half_gaps: Vec<Result<f64, SpectrumError>> = Vec::with_capacity(CROSSINGS.len());
    for (a, b, name) in CROSSINGS {
        let result = match crossing_bias(&lines, a, b) {
            None => Err(no_crossing(name, "diabatic lines are parallel")),
            Some(bc) => half_gap_at(d, &lines, ref_bias, a, b, bc, name),
        };
        half_gaps.push(result);
    }
    let delta00 = half_gaps[0].clone()?;
    let delta01 = match (&half_gaps[1], &half_gaps[2]) {
        (Ok(x), Ok(y)) => 0.5 * (x + y),
        (Ok(x), Err(_)) | (Err(_), Ok(x)) => *x,
        (Err(e), Err(_)) => return Err(e.clone()),
    };
    let delta11 = half_gaps[3].clone()?;

    let model = FourLevelModel {
        ref_bias,
        energies: lines.map(|l| l.intercept),
        slopes: lines.map(|l| l.slope),
        delta00,
        delta01,
        delta11,
    };
    model.validate()?;
    if !(model.delta00 < model.delta01) {
        return Err(SpectrumError::RegimeViolation(format!(
            "expected delta00 < delta01, got {} and {}",
            model.delta00, model.delta01
        )));
    }
    Ok(model)
}

fn no_crossing(name: &str, reason: impl Into<String>) -> SpectrumError {
    SpectrumError::NoCrossingFound { crossing: name.to_string(), reason: reason.into() }
}

/// Localized (bias, energy) points per diabatic branch.
fn collect_branch_points(d: &LevelDiagram) -> [Vec<(f64, f64)>; 4] {
    let mut out: [Vec<(f64, f64)>; 4] = Default::default();
    for (&b, s) in d.biases.iter().zip(&d.spectra) {
        let mut taken = [false; 4];
        for (k, (below_l, below_r)) in cumulative_counts(&s.left_weights).into_iter().enumerate() {
            let w = s.left_weights[k];
            let state = if w > FIT_LOCALIZATION {
                DiabaticState::from_well(true, below_l.round() as usize)
            } else if w < 1.0 - FIT_LOCALIZATION {
                DiabaticState::from_well(false, below_r.round() as usize)
            } else {
                None
            };
            if let Some(st) = state {
                if !taken[st.index()] {
                    taken[st.index()] = true;
                    out[st.index()].push((b, s.energies[k]));
                }
            }
        }
    }
    out
}

fn half_gap_at(
    d: &LevelDiagram,
    lines: &[Line; 4],
    ref_bias: f64,
    a: DiabaticState,
    b: DiabaticState,
    bias_cross: f64,
    name: &str,
) -> Result<f64, SpectrumError> {
    let n = d.biases.len();
    let (lo, hi) = (d.biases[0], d.biases[n - 1]);
    if !(bias_cross > lo && bias_cross < hi) {
        return Err(no_crossing(name, format!("crossing at {bias_cross:.6} lies outside [{lo}, {hi}]")));
    }
    let dx = bias_cross - ref_bias;
    let e_cross = lines[a.index()].at(dx);
    let below = DiabaticState::ALL
        .iter()
        .filter(|&&s| s != a && s != b && lines[s.index()].at(dx) < e_cross)
        .count();
    if below + 1 >= d.n_levels() {
        return Err(no_crossing(name, "crossing lies above the computed levels"));
    }
    let gap: Vec<f64> = d.spectra.iter().map(|s| s.energies[below + 1] - s.energies[below]).collect();

    let mut i = d
        .biases
        .iter()
        .enumerate()
        .min_by(|x, y| (x.1 - bias_cross).abs().total_cmp(&(y.1 - bias_cross).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    loop {
        if i > 0 && gap[i - 1] < gap[i] {
            i -= 1;
        } else if i + 1 < n && gap[i + 1] < gap[i] {
            i += 1;
        } else {
            break;
        }
    }
    if i == 0 || i == n - 1 {
        return Err(no_crossing(name, "gap minimum sits on the edge of the bias range"));
    }
    if gap[i] < MIN_RESOLVED_GAP_GHZ {
        return Err(no_crossing(name, format!("gap {:.3e} GHz is below numerical resolution", gap[i])));
    }
    let (y0, y1, y2) = (gap[i - 1].powi(2), gap[i].powi(2), gap[i + 1].powi(2));
    let curvature = y0 - 2.0 * y1 + y2;
    let min_sq = if curvature > 0.0 { y1 - (y2 - y0).powi(2) / (8.0 * curvature) } else { y1 };
    let min_sq = if min_sq > 0.0 { min_sq } else { y1 };
    Ok(0.5 * min_sq.sqrt())
}

//! Multiphoton resonance positions read off a level diagram.

use serde::{Deserialize, Serialize};

use super::{cumulative_counts, DiabaticState, LevelDiagram};

/// A bias where an interwell spacing equals `n` drive quanta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub bias: f64,
    pub n: u32,
    /// Lower-energy state of the pair at `bias`.
    pub lower: DiabaticState,
    pub upper: DiabaticState,
}

/// Energy of each four-level branch at one bias, or `None` where no level
/// carries a majority on the right well with the right intrawell index.
fn branch_energies(left_weights: &[f64], energies: &[f64]) -> [Option<f64>; 4] {
    let mut out = [None; 4];
    for (k, (below_l, below_r)) in cumulative_counts(left_weights).into_iter().enumerate() {
        let w = left_weights[k];
        if w == 0.5 {
            continue;
        }
        let left = w > 0.5;
        let below = if left { below_l } else { below_r };
        if let Some(s) = DiabaticState::from_well(left, below.round() as usize) {
            out[s.index()].get_or_insert(energies[k]);
        }
    }
    out
}

const INTERWELL_PAIRS: [(DiabaticState, DiabaticState); 4] = [
    (DiabaticState::GroundLeft, DiabaticState::GroundRight),
    (DiabaticState::GroundLeft, DiabaticState::ExcitedRight),
    (DiabaticState::ExcitedLeft, DiabaticState::GroundRight),
    (DiabaticState::ExcitedLeft, DiabaticState::ExcitedRight),
];

/// Biases where an interwell spacing of the four-level subspace equals
/// `n·f_drive` for `n = 1..=n_max`.
///
/// Levels are assigned to a well by majority weight, so branches remain
/// traceable slightly past the strict localization thresholds. Hits are found
/// by a sign-change scan of `spacing − n·f_drive` between adjacent biases and
/// placed by linear interpolation. The result is sorted by bias.
pub fn predict_resonances(d: &LevelDiagram, f_drive: f64, n_max: u32) -> Vec<Resonance> {
    let branches: Vec<[Option<f64>; 4]> = d
        .spectra
        .iter()
        .map(|s| branch_energies(&s.left_weights, &s.energies))
        .collect();

    let mut hits = Vec::new();
    for (a, b) in INTERWELL_PAIRS {
        let spacing: Vec<Option<f64>> = branches
            .iter()
            .map(|e| match (e[a.index()], e[b.index()]) {
                (Some(x), Some(y)) => Some((y - x).abs()),
                _ => None,
            })
            .collect();
        for n in 1..=n_max {
            let target = n as f64 * f_drive;
            for i in 0..d.biases.len().saturating_sub(1) {
                let (Some(s0), Some(s1)) = (spacing[i], spacing[i + 1]) else { continue };
                let (g0, g1) = (s0 - target, s1 - target);
                if g0 == 0.0 {
                    // counted as the right end of the previous interval
                    if i == 0 || spacing[i - 1].is_none() {
                        hits.push(make(d, a, b, i, d.biases[i], n, &branches));
                    }
                    continue;
                }
                if g1 == 0.0 || (g0 < 0.0) != (g1 < 0.0) {
                    let t = g0 / (g0 - g1);
                    let bias = d.biases[i] + t * (d.biases[i + 1] - d.biases[i]);
                    let at = if t < 0.5 { i } else { i + 1 };
                    hits.push(make(d, a, b, at, bias, n, &branches));
                }
            }
        }
    }
    hits.sort_by(|x, y| x.bias.total_cmp(&y.bias).then(x.n.cmp(&y.n)));
    hits
}

fn make(
    _d: &LevelDiagram,
    a: DiabaticState,
    b: DiabaticState,
    i: usize,
    bias: f64,
    n: u32,
    branches: &[[Option<f64>; 4]],
) -> Resonance {
    let (ea, eb) = (branches[i][a.index()], branches[i][b.index()]);
    let a_lower = match (ea, eb) {
        (Some(x), Some(y)) => x <= y,
        _ => true,
    };
    let (lower, upper) = if a_lower { (a, b) } else { (b, a) };
    Resonance { bias, n, lower, upper }
}

//! Landau-Zener probabilities, Bessel-modulated multiphoton rates and the
//! rate-equation steady state built from them.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DecoherenceRates, DriveParams, DynamicsError};
use crate::spectrum::{DiabaticState, FourLevelModel, StaticGround};

/// Default highest photon number, covering two- and three-photon lines.
pub const DEFAULT_N_MAX: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LzError {
    #[error("photon order must be >= 1, got {0}")]
    InvalidOrder(u32),
    #[error("invalid crossing: {0}")]
    InvalidCrossing(String),
    #[error("rate matrix has no unique stationary state: {0}")]
    SingularRateMatrix(String),
    #[error(transparent)]
    Input(#[from] DynamicsError),
}

/// One avoided crossing swept at constant speed: half-gap in GHz, detuning
/// velocity in rad/ns².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingSpec {
    pub delta: f64,
    pub sweep_rate: f64,
}

impl CrossingSpec {
    pub fn new(delta: f64, sweep_rate: f64) -> Result<Self, LzError> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(LzError::InvalidCrossing(format!("delta must be >= 0, got {delta}")));
        }
        if !(sweep_rate != 0.0 && sweep_rate.is_finite()) {
            return Err(LzError::InvalidCrossing(format!("sweep_rate must be nonzero, got {sweep_rate}")));
        }
        Ok(Self { delta, sweep_rate })
    }
}

/// Diabatic survival probability exp(−2π(2πΔ)²/|v|).
pub fn lz_probability(c: &CrossingSpec) -> f64 {
    lz_probability_angular(TAU * c.delta, c.sweep_rate)
}

/// Survival for an angular half-gap `delta` (rad/ns) and angular sweep rate.
pub fn lz_probability_angular(delta: f64, sweep_rate: f64) -> f64 {
    (-TAU * delta * delta / sweep_rate.abs()).exp()
}

/// Diabatic survival from direct integration of the two-level sweep
/// H = [[vt/2, Δ], [Δ, −vt/2]] (angular units).
///
/// The run starts and ends where |vt| is `edge_ratio` times the larger of Δ
/// and √|v|. The state is prepared in, and read out from, the adiabatic
/// eigenstates at the ends, which removes the leading finite-time ripple of
/// the diabatic populations.
pub fn integrate_two_level_sweep(delta: f64, sweep_rate: f64, edge_ratio: f64) -> f64 {
    let v = sweep_rate.abs();
    let scale = delta.max(v.sqrt());
    let t_edge = edge_ratio * scale / v;
    let e_max = 0.5 * v * t_edge + delta;
    let n = ((2.0 * t_edge * e_max) / 0.02).ceil() as usize;
    let h = 2.0 * t_edge / n as f64;

    // adiabatic eigenvector of the upper branch at time t
    let upper = |t: f64| -> [f64; 2] {
        let (a, b) = (0.5 * v * t, delta);
        let e = (a * a + b * b).sqrt();
        let (x, y) = (b, e - a);
        let norm = (x * x + y * y).sqrt();
        if norm == 0.0 {
            [1.0, 0.0]
        } else {
            [x / norm, y / norm]
        }
    };
    // at t → −∞ the upper branch is diabatic state 1, at t → +∞ it is state 0
    let start = upper(-t_edge);
    let mut psi = [Complex64::new(start[0], 0.0), Complex64::new(start[1], 0.0)];
    let deriv = |t: f64, p: &[Complex64; 2]| -> [Complex64; 2] {
        let a = 0.5 * v * t;
        let mi = Complex64::new(0.0, -1.0);
        [mi * (p[0] * a + p[1] * delta), mi * (p[0] * delta - p[1] * a)]
    };
    let axpy = |p: &[Complex64; 2], k: &[Complex64; 2], s: f64| [p[0] + k[0] * s, p[1] + k[1] * s];
    for i in 0..n {
        let t = -t_edge + i as f64 * h;
        let k1 = deriv(t, &psi);
        let k2 = deriv(t + 0.5 * h, &axpy(&psi, &k1, 0.5 * h));
        let k3 = deriv(t + 0.5 * h, &axpy(&psi, &k2, 0.5 * h));
        let k4 = deriv(t + h, &axpy(&psi, &k3, h));
        for j in 0..2 {
            psi[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
        }
    }
    // staying diabatic means ending on the lower branch
    let up = upper(t_edge);
    let lower = [-up[1], up[0]];
    (psi[0] * lower[0] + psi[1] * lower[1]).norm_sqr()
}

/// n-photon transition rate (ns⁻¹) between two diabatic states under the
/// drive, in the strong-driving Bessel form
/// (2πΔ)²·J_n(x)²·(γ2/2)/((γ2/2)² + δ²)/2 with x = |k_a − k_b|·φ_rf/f and
/// δ = 2π(|E_a − E_b| − n·f).
///
/// Δ is the tunnel coupling between `a` and `b`; uncoupled pairs give zero.
pub fn bessel_rate(
    n: u32,
    pair: (DiabaticState, DiabaticState),
    model: &FourLevelModel,
    d: &DriveParams,
    gamma2: f64,
) -> Result<f64, LzError> {
    if n < 1 {
        return Err(LzError::InvalidOrder(n));
    }
    let (a, b) = pair;
    let delta = model.coupling(a, b);
    if delta == 0.0 {
        return Ok(0.0);
    }
    let x = bessel_argument(pair, model, d);
    let spacing = (model.energy(a) - model.energy(b)).abs();
    let detuning = TAU * (spacing - n as f64 * d.f);
    let hw = 0.5 * gamma2;
    let jn = libm::jn(n as i32, x);
    Ok((TAU * delta).powi(2) * jn * jn * hw / (hw * hw + detuning * detuning) * 0.5)
}

/// Argument |k_a − k_b|·φ_rf/f of the Bessel factor.
pub fn bessel_argument(pair: (DiabaticState, DiabaticState), model: &FourLevelModel, d: &DriveParams) -> f64 {
    (model.slope(pair.0) - model.slope(pair.1)).abs() * d.phi_rf / d.f
}

/// Pairs that receive multiphoton pump terms.
pub const PUMPED_PAIRS: [(DiabaticState, DiabaticState); 3] = [
    (DiabaticState::GroundLeft, DiabaticState::GroundRight),
    (DiabaticState::GroundLeft, DiabaticState::ExcitedRight),
    (DiabaticState::GroundRight, DiabaticState::ExcitedLeft),
];

/// Classical master equation over the four diabatic populations.
///
/// `pump[to][from]` and `decay[to][from]` are transition rates in ns⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    pub pump: [[f64; 4]; 4],
    pub decay: [[f64; 4]; 4],
    /// States the relaxed undriven system occupies.
    pub initial: Vec<DiabaticState>,
}

impl RateModel {
    /// Bessel pumps for n = 1..=n_max on [`PUMPED_PAIRS`] (symmetric in
    /// direction), γ1 decay within each well and γ_inter toward the lower
    /// |0⟩, split in half both ways at a tie.
    pub fn build(model: &FourLevelModel, d: &DriveParams, r: &DecoherenceRates, n_max: u32) -> Result<Self, LzError> {
        d.validate()?;
        r.validate()?;
        if n_max < 1 {
            return Err(LzError::InvalidOrder(n_max));
        }
        let mut pump = [[0.0; 4]; 4];
        for pair in PUMPED_PAIRS {
            let mut w = 0.0;
            for n in 1..=n_max {
                w += bessel_rate(n, pair, model, d, r.gamma2)?;
            }
            let (a, b) = (pair.0.index(), pair.1.index());
            pump[a][b] += w;
            pump[b][a] += w;
        }
        let (decay, initial) = decay_rates(model, r);
        Ok(Self { pump, decay, initial })
    }

    pub fn total(&self, to: usize, from: usize) -> f64 {
        self.pump[to][from] + self.decay[to][from]
    }

    /// Stationary distribution over the states reachable from `initial`.
    pub fn stationary(&self) -> Result<[f64; 4], LzError> {
        let mut reachable = [false; 4];
        let mut stack: Vec<usize> = self.initial.iter().map(|s| s.index()).collect();
        while let Some(i) = stack.pop() {
            if reachable[i] {
                continue;
            }
            reachable[i] = true;
            for j in 0..4 {
                if j != i && self.total(j, i) > 0.0 && !reachable[j] {
                    stack.push(j);
                }
            }
        }
        let idx: Vec<usize> = (0..4).filter(|&i| reachable[i]).collect();
        let k = idx.len();
        let mut g = DMatrix::<f64>::zeros(k, k);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                if a != b {
                    g[(a, b)] = self.total(i, j);
                    g[(b, b)] -= self.total(i, j);
                }
            }
        }
        // replace the last balance equation by normalization
        for b in 0..k {
            g[(k - 1, b)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(k);
        rhs[k - 1] = 1.0;
        let sol = g
            .lu()
            .solve(&rhs)
            .ok_or_else(|| LzError::SingularRateMatrix(format!("disconnected rate graph over {k} reachable states")))?;
        if sol.iter().any(|x| !x.is_finite() || *x < -1e-9) {
            return Err(LzError::SingularRateMatrix("stationary solution is not a distribution".into()));
        }
        let mut p = [0.0; 4];
        for (a, &i) in idx.iter().enumerate() {
            p[i] = sol[a].max(0.0);
        }
        let sum: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= sum);
        Ok(p)
    }
}

fn decay_rates(model: &FourLevelModel, r: &DecoherenceRates) -> ([[f64; 4]; 4], Vec<DiabaticState>) {
    use DiabaticState::*;
    let mut decay = [[0.0; 4]; 4];
    decay[GroundRight.index()][ExcitedRight.index()] = r.gamma1;
    decay[GroundLeft.index()][ExcitedLeft.index()] = r.gamma1;
    let (l, rr) = (GroundLeft.index(), GroundRight.index());
    let initial = match model.static_ground() {
        StaticGround::Left => {
            decay[l][rr] = r.gamma_inter;
            vec![GroundLeft]
        }
        StaticGround::Right => {
            decay[rr][l] = r.gamma_inter;
            vec![GroundRight]
        }
        StaticGround::Degenerate => {
            decay[l][rr] = 0.5 * r.gamma_inter;
            decay[rr][l] = 0.5 * r.gamma_inter;
            vec![GroundRight, GroundLeft]
        }
    };
    (decay, initial)
}

/// Populations with all pumps off: the lower |0⟩, or an even split at a tie.
pub fn decay_only_steady_state(model: &FourLevelModel) -> [f64; 4] {
    let mut p = [0.0; 4];
    match model.static_ground() {
        StaticGround::Left => p[DiabaticState::GroundLeft.index()] = 1.0,
        StaticGround::Right => p[DiabaticState::GroundRight.index()] = 1.0,
        StaticGround::Degenerate => {
            p[DiabaticState::GroundLeft.index()] = 0.5;
            p[DiabaticState::GroundRight.index()] = 0.5;
        }
    }
    p
}

/// Stationary populations of the rate model, indexed by
/// [`DiabaticState::index`].
pub fn rate_steady_state(
    model: &FourLevelModel,
    d: &DriveParams,
    r: &DecoherenceRates,
    n_max: u32,
) -> Result<[f64; 4], LzError> {
    RateModel::build(model, d, r, n_max)?.stationary()
}

/// Right-well share of a population vector.
pub fn right_population(p: &[f64; 4]) -> f64 {
    (p[DiabaticState::GroundRight.index()] + p[DiabaticState::ExcitedRight.index()]).clamp(0.0, 1.0)
}

//! rf-SQUID circuit parameters and the classical flux potential.
//!
//! Flux is measured in units of the flux quantum and energies as E/h in GHz
//! throughout the crate. The loop flux behaves like a particle of mass `C` in
//!
//! ```text
//! U(φ) = U0 · [ ½ (2π(φ − φq))² − βL cos(2πφ) ],   U0 = Φ0² / (4π² L)
//! ```

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::constants::{FLUX_QUANTUM, HBAR, JOULE_PER_GHZ};

/// Upper end of the βL range where exactly two wells straddle the barrier.
pub const BETA_L_MULTISTABLE_LIMIT: f64 = 4.6;

const SCAN_STEP: f64 = 1e-3;
const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CircuitError {
    #[error("invalid circuit parameter: {0}")]
    InvalidParameter(String),
    #[error("no double well at phi_q = {phi_q} (beta_L = {beta_l:.4}, {minima} minima found)")]
    NoDoubleWell { phi_q: f64, beta_l: f64, minima: usize },
}

/// Non-fatal findings about a parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidationFlag {
    /// βL ≤ 1: the potential is monostable at every bias.
    Monostable { beta_l: f64 },
    /// βL ≥ 4.6: more than two wells can coexist.
    Multistable { beta_l: f64 },
    /// The small-oscillation LC frequency is far below the GHz microwave
    /// band. The nominal 80 pF capacitance lands here.
    LowPlasmaFrequency { f_lc_ghz: f64 },
}

impl std::fmt::Display for ValidationFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Monostable { beta_l } => {
                write!(f, "beta_L = {beta_l:.4} <= 1: potential is monostable")
            }
            Self::Multistable { beta_l } => {
                write!(f, "beta_L = {beta_l:.4} >= {BETA_L_MULTISTABLE_LIMIT}: more than two wells")
            }
            Self::LowPlasmaFrequency { f_lc_ghz } => write!(
                f,
                "LC frequency {f_lc_ghz:.4} GHz is below 1 GHz; tunnel splittings will be \
                 unresolvably small (C = 80 fF gives the GHz-scale regime)"
            ),
        }
    }
}

/// Physical parameters of the rf-SQUID loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// Loop inductance (H).
    pub inductance: f64,
    /// Junction capacitance (F).
    pub capacitance: f64,
    /// Bare critical current of the compound junction (A).
    pub critical_current: f64,
    /// Qubit flux bias (Φ0).
    pub phi_q: f64,
    /// Compound-junction flux (Φ0).
    pub phi_cjj: f64,
}

impl CircuitParams {
    pub fn new(
        inductance: f64,
        capacitance: f64,
        critical_current: f64,
        phi_q: f64,
        phi_cjj: f64,
    ) -> Result<Self, CircuitError> {
        let p = Self { inductance, capacitance, critical_current, phi_q, phi_cjj };
        p.check()?;
        Ok(p)
    }

    /// Builds parameters from a target βL at `phi_cjj = 0`.
    pub fn from_beta_l(
        inductance: f64,
        capacitance: f64,
        beta_l: f64,
        phi_q: f64,
    ) -> Result<Self, CircuitError> {
        if !(beta_l >= 0.0) || !beta_l.is_finite() {
            return Err(CircuitError::InvalidParameter(format!("beta_L must be >= 0, got {beta_l}")));
        }
        let ic = beta_l * FLUX_QUANTUM / (TAU * inductance);
        Self::new(inductance, capacitance, ic, phi_q, 0.0)
    }

    /// Nominal device: L = 1080 pH, C = 80 pF, βL = 1.39, biased at 0.5 Φ0.
    pub fn nominal() -> Self {
        Self::from_beta_l(1080e-12, 80e-12, 1.39, 0.5).expect("nominal parameters are valid")
    }

    /// Same loop with C = 80 fF, where the intrawell spacing (~13 GHz) and the
    /// tunnel splittings sit in the regime probed by a 15.9 GHz drive.
    pub fn femtofarad_device() -> Self {
        Self { capacitance: 80e-15, ..Self::nominal() }
    }

    pub fn with_bias(self, phi_q: f64) -> Self {
        Self { phi_q, ..self }
    }

    fn check(&self) -> Result<(), CircuitError> {
        let bad = |what: &str, v: f64| CircuitError::InvalidParameter(format!("{what}, got {v}"));
        if !(self.inductance > 0.0) || !self.inductance.is_finite() {
            return Err(bad("L must be > 0", self.inductance));
        }
        if !(self.capacitance > 0.0) || !self.capacitance.is_finite() {
            return Err(bad("C must be > 0", self.capacitance));
        }
        if !(self.critical_current >= 0.0) || !self.critical_current.is_finite() {
            return Err(bad("Ic must be >= 0", self.critical_current));
        }
        if !self.phi_q.is_finite() {
            return Err(bad("phi_q must be finite", self.phi_q));
        }
        if !self.phi_cjj.is_finite() {
            return Err(bad("phi_cjj must be finite", self.phi_cjj));
        }
        Ok(())
    }

    pub fn validate(&self) -> Vec<ValidationFlag> {
        let mut flags = Vec::new();
        let beta_l = self.beta_l();
        if beta_l <= 1.0 {
            flags.push(ValidationFlag::Monostable { beta_l });
        } else if beta_l >= BETA_L_MULTISTABLE_LIMIT {
            flags.push(ValidationFlag::Multistable { beta_l });
        }
        let f_lc_ghz = self.lc_frequency_ghz();
        if f_lc_ghz < 1.0 {
            flags.push(ValidationFlag::LowPlasmaFrequency { f_lc_ghz });
        }
        flags
    }

    /// Critical current after compound-junction modulation, Ic·|cos(π·φcjj)|.
    pub fn effective_critical_current(&self) -> f64 {
        self.critical_current * (PI * self.phi_cjj).cos().abs()
    }

    pub fn beta_l(&self) -> f64 {
        TAU * self.inductance * self.effective_critical_current() / FLUX_QUANTUM
    }

    /// U0 / h in GHz.
    pub fn u0_ghz(&self) -> f64 {
        FLUX_QUANTUM * FLUX_QUANTUM / (4.0 * PI * PI * self.inductance) / JOULE_PER_GHZ
    }

    /// 1 / (2π√(LC)) in GHz.
    pub fn lc_frequency_ghz(&self) -> f64 {
        1.0 / (TAU * (self.inductance * self.capacitance).sqrt()) / 1e9
    }

    /// ħ² / (2 C Φ0²) / h in GHz: the coefficient of −d²/dφ² with φ in Φ0 units.
    pub fn kinetic_ghz(&self) -> f64 {
        HBAR * HBAR / (2.0 * self.capacitance * FLUX_QUANTUM * FLUX_QUANTUM) / JOULE_PER_GHZ
    }

    /// U(φ)/h in GHz.
    pub fn potential(&self, phi: f64) -> f64 {
        let x = TAU * (phi - self.phi_q);
        self.u0_ghz() * (0.5 * x * x - self.beta_l() * (TAU * phi).cos())
    }

    /// dU/dφ in GHz per Φ0.
    pub fn potential_slope(&self, phi: f64) -> f64 {
        self.u0_ghz() * TAU * (TAU * (phi - self.phi_q) + self.beta_l() * (TAU * phi).sin())
    }

    /// Locates the two wells and the barrier between them.
    ///
    /// Stationary points are bracketed by a sign-change scan of dU/dφ on
    /// `[φq − 0.5, φq + 0.5]` and refined by bisection. The barrier is the
    /// maximum closest to 0.5 Φ0 that has a minimum on either side.
    pub fn find_wells(&self) -> Result<WellGeometry, CircuitError> {
        let points = self.stationary_points();
        let minima = points.iter().filter(|s| s.kind == Stationary::Minimum).count();
        let no_well = || CircuitError::NoDoubleWell {
            phi_q: self.phi_q,
            beta_l: self.beta_l(),
            minima,
        };

        let mut best: Option<(f64, usize)> = None;
        for i in 1..points.len().saturating_sub(1) {
            if points[i].kind == Stationary::Maximum
                && points[i - 1].kind == Stationary::Minimum
                && points[i + 1].kind == Stationary::Minimum
            {
                let dist = (points[i].phi - 0.5).abs();
                if best.map_or(true, |(d, _)| dist < d) {
                    best = Some((dist, i));
                }
            }
        }
        let (_, i) = best.ok_or_else(no_well)?;
        let (left, top, right) = (points[i - 1].phi, points[i].phi, points[i + 1].phi);
        let geom = WellGeometry {
            left_min: left,
            right_min: right,
            barrier_top: top,
            u_left: self.potential(left),
            u_right: self.potential(right),
            u_barrier: self.potential(top),
        };
        if geom.u_barrier > geom.u_left.max(geom.u_right) {
            Ok(geom)
        } else {
            Err(no_well())
        }
    }

    fn stationary_points(&self) -> Vec<StationaryPoint> {
        let lo = self.phi_q - 0.5;
        let n = (1.0 / SCAN_STEP).round() as usize;
        let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * SCAN_STEP).collect();
        let ss: Vec<f64> = xs.iter().map(|&x| self.potential_slope(x)).collect();

        let mut out = Vec::new();
        for i in 0..n {
            if ss[i] == 0.0 {
                if i > 0 && ss[i - 1] != 0.0 && ss[i + 1] != 0.0 && (ss[i - 1] < 0.0) != (ss[i + 1] < 0.0) {
                    out.push(StationaryPoint::new(xs[i], ss[i - 1] < 0.0));
                }
                continue;
            }
            if ss[i + 1] != 0.0 && (ss[i] < 0.0) != (ss[i + 1] < 0.0) {
                let root = self.bisect_slope(xs[i], xs[i + 1], ss[i]);
                out.push(StationaryPoint::new(root, ss[i] < 0.0));
            }
        }
        out
    }

    fn bisect_slope(&self, mut a: f64, mut b: f64, sa: f64) -> f64 {
        let neg_at_a = sa < 0.0;
        while b - a > ROOT_TOL {
            let m = 0.5 * (a + b);
            let sm = self.potential_slope(m);
            if sm == 0.0 {
                return m;
            }
            if (sm < 0.0) == neg_at_a {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stationary {
    Minimum,
    Maximum,
}

#[derive(Debug, Clone, Copy)]
struct StationaryPoint {
    phi: f64,
    kind: Stationary,
}

impl StationaryPoint {
    fn new(phi: f64, falling_before: bool) -> Self {
        let kind = if falling_before { Stationary::Minimum } else { Stationary::Maximum };
        Self { phi, kind }
    }
}

/// Positions (Φ0) and energies (GHz) of the two minima and the barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellGeometry {
    pub left_min: f64,
    pub right_min: f64,
    pub barrier_top: f64,
    pub u_left: f64,
    pub u_right: f64,
    pub u_barrier: f64,
}

impl WellGeometry {
    /// Barrier height above the higher of the two minima.
    pub fn barrier_height(&self) -> f64 {
        self.u_barrier - self.u_left.max(self.u_right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cjj_modulation() {
        let p = CircuitParams::nominal();
        assert_relative_eq!(p.critical_current, 0.4236e-6, max_relative = 1e-3);
        assert_eq!(p.effective_critical_current(), p.critical_current);

        let half = CircuitParams { phi_cjj: 0.5, ..p };
        assert!(half.effective_critical_current() < 1e-22);

        let third = CircuitParams { phi_cjj: 1.0 / 3.0, ..p };
        assert_relative_eq!(third.effective_critical_current(), 0.5 * p.critical_current, max_relative = 1e-12);
    }

    #[test]
    fn u0_and_symmetric_point_energy() {
        let p = CircuitParams::nominal();
        assert_relative_eq!(p.u0_ghz(), 151.35, max_relative = 1e-4);
        assert_relative_eq!(p.potential(0.5), 1.39 * p.u0_ghz(), max_relative = 1e-12);
        assert_relative_eq!(p.potential(0.5), 210.4, max_relative = 1e-3);
    }

    #[test]
    fn zero_beta_is_quadratic() {
        let p = CircuitParams::from_beta_l(1080e-12, 80e-12, 0.0, 0.37).unwrap();
        assert_eq!(p.potential(0.37), 0.0);
        for d in [0.01, 0.1, 0.3] {
            let x = TAU * d;
            assert_relative_eq!(p.potential(0.37 + d), 0.5 * x * x * p.u0_ghz(), max_relative = 1e-12);
        }
    }

    #[test]
    fn symmetric_wells_at_half_flux() {
        let g = CircuitParams::nominal().find_wells().unwrap();
        assert!((g.barrier_top - 0.5).abs() < 1e-9);
        assert_relative_eq!(g.u_left, g.u_right, max_relative = 1e-12);
        assert!(g.left_min < g.barrier_top && g.barrier_top < g.right_min);
        assert_relative_eq!(g.left_min + g.right_min, 1.0, epsilon = 1e-9);
        // U0·(βL − x²/2 − βL cos x) with x = βL sin x ≈ 1.358 → ≈ 26 GHz
        assert!(g.barrier_height() > 25.0 && g.barrier_height() < 27.5, "{}", g.barrier_height());
    }

    #[test]
    fn monostable_below_unity() {
        let p = CircuitParams::from_beta_l(1080e-12, 80e-12, 0.5, 0.5).unwrap();
        assert!(matches!(p.find_wells(), Err(CircuitError::NoDoubleWell { .. })));
        assert!(p.validate().iter().any(|f| matches!(f, ValidationFlag::Monostable { .. })));
    }

    #[test]
    fn tilt_lowers_right_well() {
        let g = CircuitParams::nominal().with_bias(0.502).find_wells().unwrap();
        assert!(g.u_right < g.u_left);
        let g = CircuitParams::nominal().with_bias(0.498).find_wells().unwrap();
        assert!(g.u_left < g.u_right);
    }

    #[test]
    fn parameter_errors() {
        assert!(CircuitParams::new(0.0, 1e-12, 1e-6, 0.5, 0.0).is_err());
        assert!(CircuitParams::new(1e-9, -1.0, 1e-6, 0.5, 0.0).is_err());
        assert!(CircuitParams::new(1e-9, 1e-12, -1e-6, 0.5, 0.0).is_err());
    }

    #[test]
    fn nominal_capacitance_is_flagged() {
        let flags = CircuitParams::nominal().validate();
        assert!(flags.iter().any(|f| matches!(f, ValidationFlag::LowPlasmaFrequency { .. })));
        assert!(CircuitParams::femtofarad_device().validate().is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn symmetric_about_half(delta in -0.5f64..0.5) {
                let p = CircuitParams::nominal();
                let a = p.potential(0.5 + delta);
                let b = p.potential(0.5 - delta);
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }

            #[test]
            fn periodic_under_joint_shift(phi in -1.0f64..2.0, phi_q in 0.3f64..0.7) {
                let p = CircuitParams::nominal().with_bias(phi_q);
                let shifted = p.with_bias(phi_q + 1.0);
                let a = p.potential(phi);
                let b = shifted.potential(phi + 1.0);
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }

            #[test]
            fn cjj_never_raises_beta(a in 0.0f64..0.5, b in 0.0f64..0.5) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let p = CircuitParams::nominal();
                let beta = |c| CircuitParams { phi_cjj: c, ..p }.beta_l();
                prop_assert!(beta(hi) <= beta(lo) + 1e-15);
            }

            #[test]
            fn barrier_above_both_wells(phi_q in 0.49f64..0.51) {
                let g = CircuitParams::nominal().with_bias(phi_q).find_wells().unwrap();
                prop_assert!(g.u_barrier - g.u_left.max(g.u_right) > 0.0);
            }
        }
    }
}

//! Physical constants (SI, CODATA 2018 exact values).

/// Planck constant in J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Elementary charge in C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced Planck constant in J·s.
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
/// Superconducting flux quantum h/2e in Wb.
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);

/// Joules per GHz of E/h.
pub const JOULE_PER_GHZ: f64 = PLANCK * 1e9;

/// Bundle of the constants the circuit model depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub phi0: f64,
    pub h: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { phi0: FLUX_QUANTUM, h: PLANCK }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flux_quantum_is_h_over_2e() {
        let c = PhysicalConstants::default();
        assert!((c.phi0 - 2.067_833_848e-15).abs() < 1e-23);
        assert_eq!(c.phi0, c.h / (2.0 * ELEMENTARY_CHARGE));
    }
}

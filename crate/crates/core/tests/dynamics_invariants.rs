use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use squidsim_core::dynamics::{
    evolve, evolve_with, evolve_with_step, hamiltonian_at, max_step, relaxed_state, right_well_population,
    DecoherenceRates, DensityMatrix, Dissipator, DriveParams, HamiltonianSource,
};
use squidsim_core::lz::lz_probability_angular;
use squidsim_core::spectrum::{DiabaticState, FourLevelModel};

fn model() -> FourLevelModel {
    FourLevelModel {
        ref_bias: 0.5,
        energies: [203.55, 203.55, 190.87, 190.87],
        slopes: [-1042.0, 1042.0, -1218.0, 1218.0],
        delta00: 0.0043,
        delta01: 0.036,
        delta11: 0.245,
    }
}

/// Near the one-photon 0L → 1R resonance.
const RESONANT_BIAS: f64 = 0.4986;

#[test]
fn reference_rate_trajectory_stays_physical() {
    let m = model().at_bias(RESONANT_BIAS);
    let d = DriveParams::new(15.9, 0.01, 200.0).unwrap();
    let tr = evolve(&m, &d, &DecoherenceRates::default(), &relaxed_state(&m), 0.05).unwrap();
    assert!(tr.n_steps >= 100_000, "{} steps", tr.n_steps);
    for s in &tr.samples {
        assert!(s.trace_error < 1e-9, "trace {} at {}", s.trace_error, s.t);
        assert!(s.hermiticity_error < 1e-10, "hermiticity {} at {}", s.hermiticity_error, s.t);
        assert!(s.min_eigenvalue > -1e-7, "eigenvalue {} at {}", s.min_eigenvalue, s.t);
        assert!(s.populations.iter().all(|&p| (-1e-8..=1.0 + 1e-8).contains(&p)));
    }
}

#[test]
fn unitary_limit_conserves_purity() {
    let m = model().at_bias(RESONANT_BIAS);
    let d = DriveParams::new(15.9, 0.01, 20.0).unwrap();
    let tr = evolve(&m, &d, &DecoherenceRates::ZERO, &DensityMatrix::pure(DiabaticState::GroundLeft), 0.1).unwrap();
    for s in &tr.samples {
        assert!((s.purity - 1.0).abs() < 1e-6, "purity {} at {}", s.purity, s.t);
    }
}

#[test]
fn halving_the_step_changes_population_below_tolerance() {
    let m = model().at_bias(RESONANT_BIAS);
    let r = DecoherenceRates::default();
    for phi_rf in [0.004, 0.01, 0.03] {
        let d = DriveParams::new(15.9, phi_rf, 30.0).unwrap();
        let source = squidsim_core::dynamics::DrivenModel::new(&m, &d);
        let h = max_step(Some(d.period()), &Dissipator::for_model(&r, &m), source.frequency_spread());
        let rho0 = relaxed_state(&m);
        let coarse = evolve_with_step(&m, &d, &r, &rho0, 0.0, h).unwrap();
        let fine = evolve_with_step(&m, &d, &r, &rho0, 0.0, 0.5 * h).unwrap();
        let diff = right_well_population(&coarse.final_state) - right_well_population(&fine.final_state);
        assert!(diff.abs() < 1e-4, "phi_rf {phi_rf}: {diff:e}");
    }
}

/// Schrödinger equation for the state vector, stepped independently of the
/// density-matrix integrator.
fn schrodinger(m: &FourLevelModel, d: &DriveParams, psi0: Vector4<Complex64>, steps: usize) -> Vector4<Complex64> {
    let h = d.duration / steps as f64;
    let minus_i = Complex64::new(0.0, -1.0);
    let deriv = |t: f64, psi: &Vector4<Complex64>| -> Vector4<Complex64> {
        let ham = hamiltonian_at(m, d, t).map(|x| Complex64::new(x, 0.0));
        ham * psi * minus_i
    };
    let mut psi = psi0;
    for k in 0..steps {
        let t = k as f64 * h;
        let c = |x: f64| Complex64::new(x, 0.0);
        let k1 = deriv(t, &psi);
        let k2 = deriv(t + 0.5 * h, &(psi + k1 * c(0.5 * h)));
        let k3 = deriv(t + 0.5 * h, &(psi + k2 * c(0.5 * h)));
        let k4 = deriv(t + h, &(psi + k3 * c(h)));
        psi += (k1 + (k2 + k3) * c(2.0) + k4) * c(h / 6.0);
    }
    psi
}

#[test]
fn unitary_evolution_matches_state_vector_integration() {
    let m = model().at_bias(RESONANT_BIAS);
    let d = DriveParams::new(15.9, 0.01, 10.0 / 15.9).unwrap();
    let norm = (0.6f64 * 0.6 + 0.8 * 0.8).sqrt();
    let amps = [
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.6 / norm, 0.0),
        Complex64::new(0.0, 0.8 / norm),
    ];
    let tr = evolve(&m, &d, &DecoherenceRates::ZERO, &DensityMatrix::from_amplitudes(amps), 0.0).unwrap();
    let psi = schrodinger(&m, &d, Vector4::from(amps), 200_000);
    let want: Matrix4<Complex64> = psi * psi.adjoint();
    let got = tr.final_state.matrix();
    for i in 0..4 {
        for j in 0..4 {
            let err = (got[(i, j)] - want[(i, j)]).norm();
            assert!(err < 1e-5, "element ({i},{j}) off by {err:e}");
        }
    }
}

/// E_0R − E_0L = v·t with coupling Δ00; the excited pair is left empty.
struct LinearSweep {
    delta: f64,
    rate: f64,
    t_edge: f64,
}

impl HamiltonianSource for LinearSweep {
    fn hamiltonian(&self, t: f64) -> Matrix4<f64> {
        let mut h = Matrix4::zeros();
        h[(2, 2)] = 0.5 * self.rate * t;
        h[(3, 3)] = -0.5 * self.rate * t;
        h[(2, 3)] = self.delta;
        h[(3, 2)] = self.delta;
        h
    }

    fn frequency_spread(&self) -> f64 {
        self.rate.abs() * self.t_edge + 2.0 * self.delta
    }
}

#[test]
fn linear_sweep_through_crossing_reproduces_landau_zener() {
    let delta = 0.1;
    for rate in [1.0, 2.0] {
        // ends far enough out that the finite-time ripple is negligible
        let t_edge = 200.0 / rate;
        let source = LinearSweep { delta, rate, t_edge };
        let diss = Dissipator::new(Vec::new(), 0.0);
        let h = max_step(None, &diss, source.frequency_spread());
        let rho0 = DensityMatrix::pure(DiabaticState::GroundRight);
        let tr = evolve_with(&source, &diss, &rho0, (-t_edge, t_edge), h, 0.0, |_, _| {}).unwrap();
        let survival = tr.final_state.population(DiabaticState::GroundRight);
        let want = lz_probability_angular(delta, rate);
        assert!((survival - want).abs() < 1e-3, "rate {rate}: {survival} vs {want}");
    }
}

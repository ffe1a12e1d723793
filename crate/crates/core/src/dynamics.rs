//! Driven four-level master equation.
//!
//! The state is a 4×4 density matrix in the diabatic basis {1R, 1L, 0R, 0L}.
//! It evolves under ρ̇ = −i[H(t), ρ] + Γ[ρ], where H carries the microwave
//! drive on its diagonal and Γ is a Lindblad dissipator with intrawell
//! relaxation, interwell relaxation and pure dephasing. Integration is
//! classical RK4 in the lab frame.

use std::f64::consts::TAU;

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numfmt::sig9;
use crate::spectrum::{DiabaticState, FourLevelModel, StaticGround};

/// Steps per drive period, at least.
pub const STEPS_PER_PERIOD: f64 = 64.0;
/// Steps per fastest relaxation time, at least.
pub const STEPS_PER_DECAY: f64 = 32.0;
/// Largest allowed product of step and Hamiltonian frequency spread.
pub const MAX_PHASE_PER_STEP: f64 = 0.03;
/// Trace drift that aborts a run.
pub const TRACE_ABORT: f64 = 1e-6;
/// Drive periods averaged at the end of [`simulate_protocol`].
pub const AVERAGED_PERIODS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
    #[error("invalid decoherence rates: {0}")]
    InvalidRates(String),
    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),
    #[error("integration unstable at t = {t} ns: trace deviates from 1 by {trace_error:.3e}")]
    StepUnstable { t: f64, trace_error: f64 },
}

/// Continuous microwave drive: frequency in GHz, flux amplitude in Φ0 and
/// pulse length in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub f: f64,
    pub phi_rf: f64,
    pub duration: f64,
}

impl DriveParams {
    pub const DEFAULT_FREQUENCY_GHZ: f64 = 15.9;
    pub const PROTOCOL_DURATION_NS: f64 = 1000.0;

    pub fn new(f: f64, phi_rf: f64, duration: f64) -> Result<Self, DynamicsError> {
        let d = Self { f, phi_rf, duration };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.f > 0.0 && self.f.is_finite()) {
            return Err(DynamicsError::InvalidDrive(format!("f must be > 0, got {}", self.f)));
        }
        if !(self.phi_rf >= 0.0 && self.phi_rf.is_finite()) {
            return Err(DynamicsError::InvalidDrive(format!("phi_rf must be >= 0, got {}", self.phi_rf)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(DynamicsError::InvalidDrive(format!("duration must be > 0, got {}", self.duration)));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f
    }
}

/// Relaxation and dephasing rates in ns⁻¹.
///
/// `gamma2` is a pure dephasing rate: it damps coherences without moving
/// population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceRates {
    pub gamma1: f64,
    pub gamma_inter: f64,
    pub gamma2: f64,
}

impl Default for DecoherenceRates {
    /// Γ1 = 1/ns, Γ_inter = 1/µs, Γ2 = 1/(0.5 ns).
    fn default() -> Self {
        Self { gamma1: 1.0, gamma_inter: 1e-3, gamma2: 2.0 }
    }
}

impl DecoherenceRates {
    pub const ZERO: Self = Self { gamma1: 0.0, gamma_inter: 0.0, gamma2: 0.0 };

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, g) in [("gamma1", self.gamma1), ("gamma_inter", self.gamma_inter), ("gamma2", self.gamma2)] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(DynamicsError::InvalidRates(format!("{name} must be >= 0, got {g}")));
            }
        }
        Ok(())
    }

    pub fn max_rate(&self) -> f64 {
        self.gamma1.max(self.gamma_inter).max(self.gamma2)
    }
}

/// Hermiticity tolerance of a valid density matrix (element-wise).
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Trace tolerance of a valid density matrix.
pub const TRACE_TOL: f64 = 1e-9;
/// Slack on diagonal entries outside [0, 1].
pub const DIAGONAL_TOL: f64 = 1e-8;

/// 4×4 density matrix in the {1R, 1L, 0R, 0L} basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Matrix4<Complex64>);

impl DensityMatrix {
    /// Checked constructor.
    pub fn new(m: Matrix4<Complex64>) -> Result<Self, DynamicsError> {
        let rho = Self(m);
        rho.check()?;
        Ok(rho)
    }

    pub fn pure(s: DiabaticState) -> Self {
        Self::from_populations(basis(s.index()))
    }

    /// Diagonal (fully dephased) state; populations indexed by
    /// [`DiabaticState::index`].
    pub fn from_populations(p: [f64; 4]) -> Self {
        Self(Matrix4::from_diagonal(&nalgebra::Vector4::from(p.map(|x| Complex64::new(x, 0.0)))))
    }

    /// |ψ⟩⟨ψ| for a normalized amplitude vector.
    pub fn from_amplitudes(psi: [Complex64; 4]) -> Self {
        let v = nalgebra::Vector4::from(psi);
        Self(v * v.adjoint())
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Largest element-wise deviation from ρ = ρ†.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn population(&self, s: DiabaticState) -> f64 {
        self.0[(s.index(), s.index())].re
    }

    pub fn populations(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.0[(i, i)].re)
    }

    /// tr(ρ²).
    pub fn purity(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn check(&self) -> Result<(), DynamicsError> {
        if self.0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DynamicsError::InvalidInitialState("non-finite entry".into()));
        }
        let herm = self.hermiticity_error();
        if herm > HERMITICITY_TOL {
            return Err(DynamicsError::InvalidInitialState(format!("not Hermitian (error {herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).norm() > TRACE_TOL {
            return Err(DynamicsError::InvalidInitialState(format!("trace {tr} != 1")));
        }
        for p in self.populations() {
            if p < -DIAGONAL_TOL || p > 1.0 + DIAGONAL_TOL {
                return Err(DynamicsError::InvalidInitialState(format!("diagonal entry {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn hermitize(&mut self) {
        self.0 = (self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
    }
}

fn basis(i: usize) -> [f64; 4] {
    let mut p = [0.0; 4];
    p[i] = 1.0;
    p
}

/// ρ_{0R,0R} + ρ_{1R,1R}, clamped to [0, 1].
pub fn right_well_population(rho: &DensityMatrix) -> f64 {
    (rho.population(DiabaticState::GroundRight) + rho.population(DiabaticState::ExcitedRight)).clamp(0.0, 1.0)
}

/// Driven Hamiltonian in angular units (rad/ns).
///
/// The diagonal is E_x0 + k_x·φ_rf·sin(2πft); the off-diagonals follow the
/// four-level coupling pattern. Linear frequencies are multiplied by 2π here
/// and nowhere else.
pub fn hamiltonian_at(m: &FourLevelModel, d: &DriveParams, t: f64) -> Matrix4<f64> {
    let mut h = m.static_hamiltonian();
    let s = (TAU * d.f * t).sin();
    for x in DiabaticState::ALL {
        h[(x.index(), x.index())] += m.slope(x) * d.phi_rf * s;
    }
    h * TAU
}

/// A time-dependent Hamiltonian the integrator can step through.
pub trait HamiltonianSource {
    /// H(t) in rad/ns. Adding a multiple of the identity has no effect, so
    /// implementations may shift the diagonal for accuracy.
    fn hamiltonian(&self, t: f64) -> Matrix4<f64>;
    /// Upper bound on the eigenvalue spread of H(t) over the run, rad/ns.
    fn frequency_spread(&self) -> f64;
}

/// The four-level model under a continuous drive.
#[derive(Debug, Clone, Copy)]
pub struct DrivenModel {
    static_part: Matrix4<f64>,
    drive_diag: [f64; 4],
    omega: f64,
    spread: f64,
}

impl DrivenModel {
    pub fn new(m: &FourLevelModel, d: &DriveParams) -> Self {
        let mut static_part = m.static_hamiltonian() * TAU;
        let mean_e = static_part.trace() / 4.0;
        let mut drive_diag = [0.0; 4];
        for i in 0..4 {
            static_part[(i, i)] -= mean_e;
            drive_diag[i] = TAU * m.slopes[i] * d.phi_rf;
        }
        let mean_k = drive_diag.iter().sum::<f64>() / 4.0;
        drive_diag.iter_mut().for_each(|k| *k -= mean_k);

        // diagonal extremes over the drive cycle, plus Gershgorin radii
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..4 {
            let radius: f64 = (0..4).filter(|&j| j != i).map(|j| static_part[(i, j)].abs()).sum();
            let amp = drive_diag[i].abs();
            lo = lo.min(static_part[(i, i)] - amp - radius);
            hi = hi.max(static_part[(i, i)] + amp + radius);
        }
        Self { static_part, drive_diag, omega: TAU * d.f, spread: hi - lo }
    }
}

impl HamiltonianSource for DrivenModel {
    fn hamiltonian(&self, t: f64) -> Matrix4<f64> {
        let s = (self.omega * t).sin();
        let mut h = self.static_part;
        for i in 0..4 {
            h[(i, i)] += self.drive_diag[i] * s;
        }
        h
    }

    fn frequency_spread(&self) -> f64 {
        self.spread
    }
}

/// One Lindblad jump |to⟩⟨from| at `rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpChannel {
    pub rate: f64,
    pub from: DiabaticState,
    pub to: DiabaticState,
}

/// Lindblad dissipator: population jumps plus pure dephasing of every
/// coherence at `dephasing`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissipator {
    pub jumps: Vec<JumpChannel>,
    pub dephasing: f64,
    loss: [f64; 4],
}

impl Dissipator {
    pub fn new(jumps: Vec<JumpChannel>, dephasing: f64) -> Self {
        let mut loss = [0.0; 4];
        for j in &jumps {
            loss[j.from.index()] += j.rate;
        }
        Self { jumps, dephasing, loss }
    }

    /// Channels of the driven qubit: 1X → 0X at γ1 in each well, the upper
    /// |0⟩ → lower |0⟩ at γ_inter (split γ_inter/2 both ways at a tie), and
    /// projective dephasing at γ2.
    pub fn for_model(r: &DecoherenceRates, m: &FourLevelModel) -> Self {
        use DiabaticState::*;
        let mut jumps = vec![
            JumpChannel { rate: r.gamma1, from: ExcitedRight, to: GroundRight },
            JumpChannel { rate: r.gamma1, from: ExcitedLeft, to: GroundLeft },
        ];
        match m.static_ground() {
            StaticGround::Left => jumps.push(JumpChannel { rate: r.gamma_inter, from: GroundRight, to: GroundLeft }),
            StaticGround::Right => jumps.push(JumpChannel { rate: r.gamma_inter, from: GroundLeft, to: GroundRight }),
            StaticGround::Degenerate => {
                let half = 0.5 * r.gamma_inter;
                jumps.push(JumpChannel { rate: half, from: GroundRight, to: GroundLeft });
                jumps.push(JumpChannel { rate: half, from: GroundLeft, to: GroundRight });
            }
        }
        jumps.retain(|j| j.rate > 0.0);
        Self::new(jumps, r.gamma2)
    }

    pub fn max_rate(&self) -> f64 {
        self.jumps.iter().map(|j| j.rate).fold(self.dephasing, f64::max)
    }

    /// Γ[ρ].
    pub fn apply(&self, rho: &Matrix4<Complex64>) -> Matrix4<Complex64> {
        let mut out = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let mut decay = 0.5 * (self.loss[i] + self.loss[j]);
                if i != j {
                    decay += self.dephasing;
                }
                out[(i, j)] = rho[(i, j)] * (-decay);
            }
        }
        for jump in &self.jumps {
            let (a, b) = (jump.to.index(), jump.from.index());
            out[(a, a)] += rho[(b, b)] * jump.rate;
        }
        out
    }
}

/// Γ[ρ] with the default channels of `r` for model `m`.
pub fn dissipator(r: &DecoherenceRates, m: &FourLevelModel, rho: &DensityMatrix) -> Matrix4<Complex64> {
    Dissipator::for_model(r, m).apply(rho.matrix())
}

/// −i[H, ρ] + Γ[ρ] for real symmetric H.
fn rhs(h: &Matrix4<f64>, diss: &Dissipator, rho: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    let mut out = diss.apply(rho);
    for i in 0..4 {
        for j in 0..4 {
            let mut comm = Complex64::new(0.0, 0.0);
            for k in 0..4 {
                comm += rho[(k, j)] * h[(i, k)] - rho[(i, k)] * h[(k, j)];
            }
            // −i·comm
            out[(i, j)] += Complex64::new(comm.im, -comm.re);
        }
    }
    out
}

/// Diagnostics recorded at one sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub populations: [f64; 4],
    pub p_right: f64,
    pub purity: f64,
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl Sample {
    fn of(t: f64, rho: &DensityMatrix) -> Self {
        Self {
            t,
            populations: rho.populations(),
            p_right: right_well_population(rho),
            purity: rho.purity(),
            trace_error: (rho.trace() - 1.0).norm(),
            hermiticity_error: rho.hermiticity_error(),
            min_eigenvalue: rho.min_eigenvalue(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// States at the sample times.
    pub states: Vec<DensityMatrix>,
    pub final_state: DensityMatrix,
    pub step: f64,
    pub n_steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_ns,p_right,p_1R,p_1L,p_0R,p_0L,purity\n");
        for s in &self.samples {
            let p = s.populations;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                sig9(s.t),
                sig9(s.p_right),
                sig9(p[0]),
                sig9(p[1]),
                sig9(p[2]),
                sig9(p[3]),
                sig9(s.purity)
            ));
        }
        out
    }
}

/// Largest RK4 step allowed for a drive period, dissipator and Hamiltonian.
pub fn max_step(period: Option<f64>, diss: &Dissipator, spread: f64) -> f64 {
    let mut h = f64::INFINITY;
    if let Some(p) = period {
        h = h.min(p / STEPS_PER_PERIOD);
    }
    let rate = diss.max_rate();
    if rate > 0.0 {
        h = h.min(1.0 / (STEPS_PER_DECAY * rate));
    }
    if spread > 0.0 {
        h = h.min(MAX_PHASE_PER_STEP / spread);
    }
    h
}

/// Fixed-step RK4 propagation of a density matrix.
pub struct Propagator<'a, H: HamiltonianSource> {
    pub source: &'a H,
    pub dissipator: &'a Dissipator,
    pub step: f64,
    rho: Matrix4<Complex64>,
    t: f64,
}

impl<'a, H: HamiltonianSource> Propagator<'a, H> {
    pub fn new(source: &'a H, dissipator: &'a Dissipator, rho0: &DensityMatrix, t0: f64, step: f64) -> Self {
        Self { source, dissipator, step, rho: *rho0.matrix(), t: t0 }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> DensityMatrix {
        DensityMatrix(self.rho)
    }

    /// Advances one step and re-Hermitizes.
    pub fn advance(&mut self) -> Result<(), DynamicsError> {
        let (t, h) = (self.t, self.step);
        let h_start = self.source.hamiltonian(t);
        let h_mid = self.source.hamiltonian(t + 0.5 * h);
        let h_end = self.source.hamiltonian(t + h);
        let half = Complex64::new(0.5 * h, 0.0);
        let full = Complex64::new(h, 0.0);
        let k1 = rhs(&h_start, self.dissipator, &self.rho);
        let k2 = rhs(&h_mid, self.dissipator, &(self.rho + k1 * half));
        let k3 = rhs(&h_mid, self.dissipator, &(self.rho + k2 * half));
        let k4 = rhs(&h_end, self.dissipator, &(self.rho + k3 * full));
        self.rho += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(h / 6.0, 0.0);
        self.rho = (self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        self.t = t + h;

        let trace_error = (self.rho.trace() - 1.0).norm();
        if !(trace_error <= TRACE_ABORT) {
            return Err(DynamicsError::StepUnstable { t: self.t, trace_error });
        }
        Ok(())
    }
}

/// Integrates from `t0` to `t1` with steps no longer than `max_step`,
/// sampling every `sample_every` ns (and at both ends).
///
/// `observe` sees the state after every step.
pub fn evolve_with<H: HamiltonianSource>(
    source: &H,
    diss: &Dissipator,
    rho0: &DensityMatrix,
    (t0, t1): (f64, f64),
    max_step: f64,
    sample_every: f64,
    mut observe: impl FnMut(f64, &DensityMatrix),
) -> Result<Trajectory, DynamicsError> {
    rho0.check()?;
    if !(t1 > t0) {
        return Err(DynamicsError::InvalidDrive(format!("end time {t1} must exceed start time {t0}")));
    }
    if !(max_step > 0.0) {
        return Err(DynamicsError::InvalidDrive(format!("step bound must be > 0, got {max_step}")));
    }
    let n_steps = ((t1 - t0) / max_step).ceil().max(1.0) as usize;
    let step = (t1 - t0) / n_steps as f64;
    let stride = if sample_every > 0.0 { (sample_every / step).round().max(1.0) as usize } else { n_steps };

    let mut prop = Propagator::new(source, diss, rho0, t0, step);
    let mut samples = vec![Sample::of(t0, rho0)];
    let mut states = vec![*rho0];
    for k in 1..=n_steps {
        prop.advance()?;
        let t = t0 + k as f64 * step;
        let rho = prop.state();
        observe(t, &rho);
        if k % stride == 0 || k == n_steps {
            samples.push(Sample::of(t, &rho));
            states.push(rho);
        }
    }
    let mut final_state = prop.state();
    final_state.hermitize();
    Ok(Trajectory { samples, states, final_state, step, n_steps })
}

/// Evolves `rho0` under the driven model for `d.duration` ns.
pub fn evolve(
    m: &FourLevelModel,
    d: &DriveParams,
    r: &DecoherenceRates,
    rho0: &DensityMatrix,
    sample_every: f64,
) -> Result<Trajectory, DynamicsError> {
    d.validate()?;
    r.validate()?;
    let source = DrivenModel::new(m, d);
    let diss = Dissipator::for_model(r, m);
    let h = max_step(Some(d.period()), &diss, source.frequency_spread());
    evolve_with(&source, &diss, rho0, (0.0, d.duration), h, sample_every, |_, _| {})
}

/// Same as [`evolve`] with an explicit step bound (used for convergence
/// checks).
pub fn evolve_with_step(
    m: &FourLevelModel,
    d: &DriveParams,
    r: &DecoherenceRates,
    rho0: &DensityMatrix,
    sample_every: f64,
    max_step: f64,
) -> Result<Trajectory, DynamicsError> {
    d.validate()?;
    r.validate()?;
    let source = DrivenModel::new(m, d);
    let diss = Dissipator::for_model(r, m);
    evolve_with(&source, &diss, rho0, (0.0, d.duration), max_step, sample_every, |_, _| {})
}

/// Relaxed undriven state: the lower |0⟩, or an equal mixture at a tie.
pub fn relaxed_state(m: &FourLevelModel) -> DensityMatrix {
    match m.static_ground() {
        StaticGround::Left => DensityMatrix::pure(DiabaticState::GroundLeft),
        StaticGround::Right => DensityMatrix::pure(DiabaticState::GroundRight),
        StaticGround::Degenerate => DensityMatrix::from_populations([0.0, 0.0, 0.5, 0.5]),
    }
}

/// Right-well population after a microwave pulse of `d.duration` ns applied
/// to the relaxed state, averaged over the last five drive periods.
///
/// With the drive off the relaxed state is stationary, so its population is
/// returned without integrating.
pub fn simulate_protocol(m: &FourLevelModel, d: &DriveParams, r: &DecoherenceRates) -> Result<f64, DynamicsError> {
    d.validate()?;
    r.validate()?;
    if d.phi_rf == 0.0 {
        return Ok(m.static_ground().right_population());
    }
    let window_start = (d.duration - AVERAGED_PERIODS * d.period()).max(0.0);
    let mut acc = 0.0;
    let mut count = 0usize;
    let rho0 = relaxed_state(m);
    let source = DrivenModel::new(m, d);
    let diss = Dissipator::for_model(r, m);
    let h = max_step(Some(d.period()), &diss, source.frequency_spread());
    evolve_with(&source, &diss, &rho0, (0.0, d.duration), h, 0.0, |t, rho| {
        if t > window_start {
            acc += right_well_population(rho);
            count += 1;
        }
    })?;
    Ok((acc / count.max(1) as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use DiabaticState::*;

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

    fn generic_lindblad(d: &Dissipator, rho: &Matrix4<Complex64>) -> Matrix4<Complex64> {
        let one = Complex64::new(1.0, 0.0);
        let mut ops: Vec<(f64, Matrix4<Complex64>)> = d
            .jumps
            .iter()
            .map(|j| {
                let mut l = Matrix4::zeros();
                l[(j.to.index(), j.from.index())] = one;
                (j.rate, l)
            })
            .collect();
        for i in 0..4 {
            let mut p = Matrix4::zeros();
            p[(i, i)] = one;
            ops.push((d.dephasing, p));
        }
        let mut out = Matrix4::zeros();
        for (g, l) in ops {
            let ld = l.adjoint();
            let g = Complex64::new(g, 0.0);
            out += (l * rho * ld - (ld * l * rho + rho * ld * l) * Complex64::new(0.5, 0.0)) * g;
        }
        out
    }

    fn random_state(seed: [f64; 8]) -> DensityMatrix {
        let psi = [0, 1, 2, 3].map(|i| Complex64::new(seed[2 * i], seed[2 * i + 1]));
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        DensityMatrix::from_amplitudes(psi.map(|z| z / norm))
    }

    #[test]
    fn undriven_hamiltonian_is_static_and_symmetric() {
        let m = model();
        let off = DriveParams::new(15.9, 0.0, 10.0).unwrap();
        let h0 = hamiltonian_at(&m, &off, 0.0);
        for i in 0..4 {
            assert_abs_diff_eq!(h0[(i, i)], TAU * m.energies[i], epsilon = 1e-9);
        }
        assert_eq!(h0, hamiltonian_at(&m, &off, 0.37));

        let on = DriveParams::new(15.9, 0.002, 10.0).unwrap();
        // t = period/2 is a node of the drive
        let node = hamiltonian_at(&m, &on, 0.5 / 15.9);
        assert!((node - h0).abs().max() < 1e-9);
        let h = hamiltonian_at(&m, &on, 0.011);
        assert_eq!(h, h.transpose());
        assert_eq!(h[(ExcitedRight.index(), GroundRight.index())], 0.0);
        assert_eq!(h[(ExcitedLeft.index(), GroundLeft.index())], 0.0);
        assert_abs_diff_eq!(h[(ExcitedRight.index(), GroundLeft.index())], TAU * 0.036, epsilon = 1e-12);
    }

    #[test]
    fn dissipator_single_channel_and_zero_rates() {
        let m = model();
        let rho = DensityMatrix::pure(ExcitedRight);
        assert_eq!(dissipator(&DecoherenceRates::ZERO, &m, &random_state([0.3, 0.1, -0.4, 0.2, 0.5, 0.9, 0.1, -0.2])), Matrix4::zeros());
        let r = DecoherenceRates { gamma1: 0.7, ..DecoherenceRates::ZERO };
        let d = dissipator(&r, &m, &rho);
        assert_abs_diff_eq!(d[(0, 0)].re, -0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(2, 2)].re, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn ground_coherence_decays_at_dephasing_plus_half_interwell() {
        let r = DecoherenceRates { gamma1: 0.0, gamma_inter: 0.3, gamma2: 0.8 };
        for m in [model(), model().at_bias(0.499), model().at_bias(0.501)] {
            let mut c = Matrix4::zeros();
            c[(GroundRight.index(), GroundLeft.index())] = Complex64::new(1.0, 0.0);
            let out = Dissipator::for_model(&r, &m).apply(&c);
            assert_abs_diff_eq!(out[(2, 3)].re, -(0.8 + 0.15), epsilon = 1e-15);
        }
    }

    #[test]
    fn uncoupled_undamped_populations_are_constant() {
        let m = FourLevelModel { delta00: 0.0, delta01: 0.0, delta11: 0.0, ..model() };
        let d = DriveParams::new(15.9, 0.003, 2.0).unwrap();
        let rho0 = DensityMatrix::from_populations([0.1, 0.2, 0.3, 0.4]);
        let tr = evolve(&m, &d, &DecoherenceRates::ZERO, &rho0, 0.1).unwrap();
        for s in &tr.samples {
            for (a, b) in s.populations.iter().zip([0.1, 0.2, 0.3, 0.4]) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_doublet_rabi_oscillation() {
        let m = FourLevelModel { energies: [210.0, 215.0, 190.0, 190.0], delta01: 0.0, delta11: 0.0, delta00: 0.05, ..model() };
        let d = DriveParams::new(15.9, 0.0, 12.0).unwrap();
        let tr = evolve(&m, &d, &DecoherenceRates::ZERO, &DensityMatrix::pure(GroundRight), 0.25).unwrap();
        for s in &tr.samples {
            let want = (TAU * 0.05 * s.t).sin().powi(2);
            assert_abs_diff_eq!(s.populations[GroundLeft.index()], want, epsilon = 1e-8);
        }
    }

    #[test]
    fn relaxation_reaches_ground_state() {
        // Strong tilt, left well lower by ~24 GHz; start in the upper |0⟩.
        // Close to degeneracy dephasing-assisted tunnelling keeps a small
        // steady excitation, so the tilt is not incidental.
        let m = model().at_bias(0.49);
        let r = DecoherenceRates::default();
        let d = DriveParams::new(15.9, 0.0, 3.0 / r.gamma_inter).unwrap();
        let tr = evolve(&m, &d, &r, &DensityMatrix::pure(GroundRight), 100.0).unwrap();
        let eig = m.static_hamiltonian().symmetric_eigen();
        let k = eig.eigenvalues.imin();
        let g = eig.eigenvectors.column(k);
        let rho = tr.final_state.matrix();
        let mut overlap = Complex64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                overlap += rho[(i, j)] * g[i] * g[j];
            }
        }
        let excited = 1.0 - overlap.re;
        assert!(excited < (-3.0f64).exp(), "residual {excited}");
    }

    #[test]
    fn protocol_without_drive_returns_relaxed_side() {
        let r = DecoherenceRates::default();
        let d = DriveParams::new(15.9, 0.0, 1000.0).unwrap();
        assert_eq!(simulate_protocol(&model().at_bias(0.503), &d, &r).unwrap(), 1.0);
        assert_eq!(simulate_protocol(&model().at_bias(0.497), &d, &r).unwrap(), 0.0);
        assert_eq!(simulate_protocol(&model(), &d, &r).unwrap(), 0.5);
    }

    #[test]
    fn right_population_examples() {
        assert_eq!(right_well_population(&DensityMatrix::pure(GroundRight)), 1.0);
        assert_eq!(right_well_population(&DensityMatrix::pure(GroundLeft)), 0.0);
        assert_eq!(right_well_population(&DensityMatrix::from_populations([0.0, 0.5, 0.5, 0.0])), 0.5);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(DriveParams::new(0.0, 0.0, 1.0).is_err());
        assert!(DriveParams::new(1.0, -1e-3, 1.0).is_err());
        assert!(DriveParams::new(1.0, 0.0, 0.0).is_err());
        let bad = DensityMatrix::from_populations([0.5, 0.5, 0.5, 0.0]);
        let d = DriveParams::new(15.9, 0.0, 1.0).unwrap();
        let err = evolve(&model(), &d, &DecoherenceRates::ZERO, &bad, 0.1).unwrap_err();
        assert!(matches!(err, DynamicsError::InvalidInitialState(_)));
        let r = DecoherenceRates { gamma1: -1.0, ..DecoherenceRates::ZERO };
        assert!(evolve(&model(), &d, &r, &DensityMatrix::pure(GroundLeft), 0.1).is_err());
    }

    #[test]
    fn trajectory_csv_header_and_rows() {
        let d = DriveParams::new(15.9, 0.001, 1.0).unwrap();
        let tr = evolve(&model(), &d, &DecoherenceRates::default(), &DensityMatrix::pure(GroundLeft), 0.5).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t_ns,p_right,p_1R,p_1L,p_0R,p_0L,purity"));
        assert_eq!(lines.count(), tr.samples.len());
        assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn explicit_dissipator_matches_lindblad_form(
            seed in prop::array::uniform8(-1.0f64..1.0),
            g1 in 0.0f64..3.0, gi in 0.0f64..1.0, g2 in 0.0f64..3.0,
            bias in 0.495f64..0.505,
        ) {
            let r = DecoherenceRates { gamma1: g1, gamma_inter: gi, gamma2: g2 };
            let rho = random_state(seed);
            let m = model().at_bias(bias);
            let d = Dissipator::for_model(&r, &m);
            let diff = (d.apply(rho.matrix()) - generic_lindblad(&d, rho.matrix())).iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(diff < 1e-12);
            // trace preserving
            prop_assert!(d.apply(rho.matrix()).trace().norm() < 1e-12);
        }

        #[test]
        fn hamiltonian_hermitian_at_any_time(t in 0.0f64..100.0, phi in 0.0f64..0.01) {
            let d = DriveParams::new(15.9, phi, 100.0).unwrap();
            let h = hamiltonian_at(&model(), &d, t);
            prop_assert_eq!(h, h.transpose());
        }
    }
}

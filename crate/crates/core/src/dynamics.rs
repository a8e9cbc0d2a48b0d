//! Coherent driving of the electron coupled to a collective nuclear mode.
//!
//! The state space is |e⟩⊗|m⟩ with e ∈ {↑, ↓} and five nuclear levels
//! m = −2..=2 measured from the initial polarization I_c. Basis index is
//! `5·e + (m + 2)` with e = 0 for ↑.
//!
//! Hamiltonian (cycles/µs; the generator multiplies it by 2π):
//!
//! ```text
//! H = δ_eff S_z + Ω S_x + Σ_m m ω_n P_m − 2A_c m S_z
//!     − Ω S_y ⊗ (η₁ C₁ + η₂ C₂) + [Δ_Q m²/2 P_m],   δ_eff = δ − 2A_c I_c
//! ```
//!
//! where C_k couples m ↔ m ± k. The carrier term is normalized so that a
//! resonant drive gives P↓(τ) = sin²(πΩτ). Dissipation is
//! Γ_n Σ_m L(P_m) + (1/T₂) L(S_z) with rates in 1/µs.

use std::collections::BTreeMap;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C};
use crate::params::{DriveSettings, ModelParams};
use crate::scalar::Scalar;
use crate::thermometry::OverhauserDistribution;

pub const N_LEVELS: usize = 5;
pub const DIM: usize = 2 * N_LEVELS;

/// Basis index of |e, m⟩ (e = 0 for spin up).
pub fn index(e: usize, m: i32) -> usize {
    e * N_LEVELS + (m + 2) as usize
}

fn c<T: Scalar>(re: f64, im: f64) -> C<T> {
    Complex::new(T::lit(re), T::lit(im))
}

/// Electron and nuclear operators on the 10-dimensional space.
#[derive(Debug, Clone)]
pub struct SpinAlgebra<T> {
    pub sx: CMatrix<T>,
    pub sy: CMatrix<T>,
    pub sz: CMatrix<T>,
    /// I₂ ⊗ |m⟩⟨m| for m = −2..=2.
    pub projectors: Vec<CMatrix<T>>,
    /// I₂-free nuclear ladder sums: C₁ (Δm = ±1) and C₂ (Δm = ±2), 5×5.
    pub sideband: [CMatrix<T>; 2],
    /// I₂ ⊗ diag(m).
    pub m_op: CMatrix<T>,
}

impl<T: Scalar> Default for SpinAlgebra<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> SpinAlgebra<T> {
    pub fn new() -> Self {
        let e5 = CMatrix::<T>::identity(N_LEVELS);
        let e2 = CMatrix::<T>::identity(2);
        let pauli = |k: usize| -> CMatrix<T> {
            CMatrix::from_fn(2, |i, j| match (k, i, j) {
                (0, 0, 1) | (0, 1, 0) => c(0.5, 0.0),
                (1, 0, 1) => c(0.0, -0.5),
                (1, 1, 0) => c(0.0, 0.5),
                (2, 0, 0) => c(0.5, 0.0),
                (2, 1, 1) => c(-0.5, 0.0),
                _ => c(0.0, 0.0),
            })
        };
        let ladder = |k: usize| -> CMatrix<T> {
            CMatrix::from_fn(N_LEVELS, |i, j| {
                if i.abs_diff(j) == k {
                    c(1.0, 0.0)
                } else {
                    c(0.0, 0.0)
                }
            })
        };
        let projectors = (0..N_LEVELS)
            .map(|m| {
                let p = CMatrix::from_fn(N_LEVELS, |i, j| {
                    if i == m && j == m {
                        c(1.0, 0.0)
                    } else {
                        c(0.0, 0.0)
                    }
                });
                e2.kron(&p)
            })
            .collect();
        let m_diag = CMatrix::from_fn(N_LEVELS, |i, j| {
            if i == j {
                c(i as f64 - 2.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        Self {
            sx: pauli(0).kron(&e5),
            sy: pauli(1).kron(&e5),
            sz: pauli(2).kron(&e5),
            projectors,
            sideband: [ladder(1), ladder(2)],
            m_op: e2.kron(&m_diag),
        }
    }
}

/// Parameters of the collective nuclear mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagnonParams<T> {
    /// Relative strength of Δm = ±1 transitions.
    pub eta1: T,
    /// Relative strength of Δm = ±2 transitions.
    pub eta2: T,
    /// Collective nuclear broadening Γ_n, 1/µs.
    pub gamma_n: T,
    /// Anharmonic level shift Δ_Q, MHz.
    pub delta_q: T,
    /// Adds Δ_Q m²/2 to the nuclear levels.
    pub include_anharmonic: bool,
}

impl<T: Scalar> Default for MagnonParams<T> {
    fn default() -> Self {
        Self {
            eta1: T::lit(0.10),
            eta2: T::lit(0.14),
            gamma_n: T::lit(3.9),
            delta_q: T::lit(-1.08),
            include_anharmonic: false,
        }
    }
}

impl<T: Scalar> MagnonParams<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(v >= T::zero() && v < T::one()) {
                return Err(Error::validation(format!("magnon.{name}"), "must lie in [0, 1)"));
            }
        }
        if !(self.gamma_n >= T::zero()) {
            return Err(Error::validation("magnon.gamma_n", "must be >= 0"));
        }
        if !self.delta_q.is_finite() {
            return Err(Error::validation("magnon.delta_q", "must be finite"));
        }
        Ok(())
    }
}

/// Collective enhancement √(3N/4) of a single-nucleus flip amplitude.
pub fn degeneracy_factor<T: Scalar>(n_nuclei: T) -> T {
    (T::lit(0.75) * n_nuclei).sqrt()
}

/// Closed-form sideband strengths (η₁, η₂) from the non-collinear hyperfine
/// coupling. The η₁ value does not match fitted spectra; treat it as an
/// order-of-magnitude guide.
pub fn sideband_strengths<T: Scalar>(n_nuclei: T, a_nc: T, omega_n: T, theta: T) -> (T, T) {
    let base = degeneracy_factor(n_nuclei) * a_nc / omega_n;
    let c = theta.cos();
    (
        base * (T::lit(2.0) * theta).sin(),
        base * c * c / T::lit(2.0),
    )
}

/// Sideband strengths from model parameters with A_nc = A_c B_Q/ω_n.
pub fn sideband_strengths_from_params<T: Scalar>(p: &ModelParams<T>) -> (T, T) {
    sideband_strengths(p.n_nuclei, p.a_nc_derived(), p.omega_n(), p.theta)
}

/// Coupling amplitudes (MHz) of the Δm = ±1 and Δm = ±2 transitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandCouplings<T> {
    pub first: T,
    pub second: T,
}

pub fn sideband_matrix_elements<T: Scalar>(magnon: &MagnonParams<T>, rabi: T) -> SidebandCouplings<T> {
    SidebandCouplings {
        first: magnon.eta1 * rabi,
        second: magnon.eta2 * rabi,
    }
}

/// Hamiltonian in cycles/µs for initial polarization `iz_center`.
pub fn build_hamiltonian<T: Scalar>(
    iz_center: T,
    drive: &DriveSettings<T>,
    params: &ModelParams<T>,
    magnon: &MagnonParams<T>,
) -> CMatrix<T> {
    let delta_eff = drive.detuning - T::lit(2.0) * params.a_c * iz_center;
    hamiltonian_at(delta_eff, drive.rabi, params.omega_n(), params.a_c, magnon)
}

/// Hamiltonian in terms of the effective detuning δ − 2A_c I_c.
pub fn hamiltonian_at<T: Scalar>(
    delta_eff: T,
    rabi: T,
    omega_n: T,
    a_c: T,
    magnon: &MagnonParams<T>,
) -> CMatrix<T> {
    let alg = SpinAlgebra::<T>::new();
    let re = |x: T| Complex::new(x, T::zero());
    let mut h = alg.sz.scale(re(delta_eff)).add(&alg.sx.scale(re(rabi)));
    let nuc = CMatrix::from_fn(DIM, |i, j| {
        if i == j {
            let m = T::lit((i % N_LEVELS) as f64 - 2.0);
            let mut e = m * omega_n;
            if magnon.include_anharmonic {
                e += magnon.delta_q * m * m / T::lit(2.0);
            }
            re(e)
        } else {
            re(T::zero())
        }
    });
    h = h.add(&nuc);
    h = h.sub(&alg.sz.matmul(&alg.m_op).scale(re(T::lit(2.0) * a_c)));
    let k = sideband_matrix_elements(magnon, rabi);
    let ladder = alg.sideband[0]
        .scale(re(k.first))
        .add(&alg.sideband[1].scale(re(k.second)));
    let sy2 = CMatrix::from_fn(2, |i, j| alg.sy[(i * N_LEVELS, j * N_LEVELS)]);
    h = h.sub(&sy2.kron(&ladder));
    h
}

/// Lindblad channel: rate and jump operator.
pub type Channel<T> = (T, CMatrix<T>);

/// Default dissipation: Γ_n L(P_m) for every level plus (1/T₂) L(S_z).
pub fn dissipation_channels<T: Scalar>(gamma_n: T, t2: T) -> Vec<Channel<T>> {
    let alg = SpinAlgebra::<T>::new();
    let mut ch: Vec<Channel<T>> = alg.projectors.into_iter().map(|p| (gamma_n, p)).collect();
    let dephasing = if t2.is_infinite() { T::zero() } else { T::one() / t2 };
    ch.push((dephasing, alg.sz));
    ch
}

/// L(a)ρ = aρa† − ½{a†a, ρ}
pub fn lindblad_dissipator<T: Scalar>(a: &CMatrix<T>, rho: &CMatrix<T>) -> CMatrix<T> {
    let ad = a.dagger();
    let ada = ad.matmul(a);
    let half = Complex::new(T::lit(0.5), T::zero());
    a.matmul(rho)
        .matmul(&ad)
        .sub(&ada.matmul(rho).add(&rho.matmul(&ada)).scale(half))
}

/// Right-hand side i·2π[ρ, H] + Σ γ L(a)ρ evaluated directly.
pub fn lindblad_rhs<T: Scalar>(rho: &CMatrix<T>, h: &CMatrix<T>, channels: &[Channel<T>]) -> CMatrix<T> {
    let i2pi = Complex::new(T::zero(), T::two_pi());
    let mut out = rho.commutator(h).scale(i2pi);
    for (rate, a) in channels {
        if *rate != T::zero() {
            out = out.add(&lindblad_dissipator(a, rho).scale(Complex::new(*rate, T::zero())));
        }
    }
    out
}

/// Liouvillian acting on row-major vec(ρ) (index i·n + j for ρ_ij).
pub fn liouvillian<T: Scalar>(h: &CMatrix<T>, channels: &[Channel<T>]) -> CMatrix<T> {
    let n = h.dim();
    let mut l = CMatrix::zeros(n * n);
    let mi2pi = Complex::new(T::zero(), -T::two_pi());
    let zero = Complex::new(T::zero(), T::zero());
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                // −i2π (H_ik ρ_kj − ρ_ik H_kj)
                let hik = h[(i, k)];
                if hik != zero {
                    l[(row, k * n + j)] = l[(row, k * n + j)] + mi2pi * hik;
                }
                let hkj = h[(k, j)];
                if hkj != zero {
                    l[(row, i * n + k)] = l[(row, i * n + k)] - mi2pi * hkj;
                }
            }
        }
    }
    let half = T::lit(0.5);
    for (rate, a) in channels {
        if *rate == T::zero() {
            continue;
        }
        let r = Complex::new(*rate, T::zero());
        let ada = a.dagger().matmul(a);
        for i in 0..n {
            for j in 0..n {
                let row = i * n + j;
                for k in 0..n {
                    let aik = a[(i, k)];
                    if aik != zero {
                        for m in 0..n {
                            let ajm = a[(j, m)];
                            if ajm != zero {
                                l[(row, k * n + m)] = l[(row, k * n + m)] + r * aik * ajm.conj();
                            }
                        }
                    }
                    let x = ada[(i, k)];
                    if x != zero {
                        l[(row, k * n + j)] = l[(row, k * n + j)] - r * x * half;
                    }
                    let y = ada[(k, j)];
                    if y != zero {
                        l[(row, i * n + k)] = l[(row, i * n + k)] - r * y * half;
                    }
                }
            }
        }
    }
    l
}

/// Integrator settings for the master equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSettings {
    /// The RK4 step satisfies h ≤ 1/(steps_per_cycle · f_max), f_max being a
    /// bound on the fastest frequency or rate of the generator.
    pub steps_per_cycle: f64,
    /// Optional hard cap on the step, µs.
    pub max_step: Option<f64>,
    /// Accepted estimate of the accumulated error in any matrix element.
    pub rel_tolerance: f64,
    /// Compare each propagator against one built with half the step.
    pub richardson_check: bool,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            steps_per_cycle: 1000.0,
            max_step: None,
            rel_tolerance: 1e-8,
            richardson_check: true,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.steps_per_cycle >= 50.0) {
            return Err(Error::validation("integrator.steps_per_cycle", "must be >= 50"));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::validation("integrator.max_step", "must be > 0"));
            }
        }
        if !(self.rel_tolerance > 0.0) {
            return Err(Error::validation("integrator.rel_tolerance", "must be > 0"));
        }
        Ok(())
    }
}

/// Propagator over a fixed interval built from repeated RK4 steps.
///
/// For a constant generator one RK4 step is ρ ↦ T₄(hℒ)ρ with T₄ the
/// fourth-order Taylor polynomial; 2^j steps are taken by squaring it.
#[derive(Debug, Clone)]
pub struct Propagator<T> {
    pub matrix: CMatrix<T>,
    pub step: T,
    pub steps: u64,
    /// Max-norm difference to the half-step propagator, when checked.
    pub error_estimate: Option<T>,
}

fn rk4_power<T: Scalar>(l: &CMatrix<T>, h: T, doublings: u32) -> CMatrix<T> {
    let hl = l.scale(Complex::new(h, T::zero()));
    let hl2 = hl.matmul(&hl);
    let hl3 = hl2.matmul(&hl);
    let hl4 = hl3.matmul(&hl);
    let k = |x: f64| Complex::new(T::lit(x), T::zero());
    let mut m = CMatrix::identity(l.dim())
        .add(&hl)
        .add(&hl2.scale(k(0.5)))
        .add(&hl3.scale(k(1.0 / 6.0)))
        .add(&hl4.scale(k(1.0 / 24.0)));
    for _ in 0..doublings {
        m = m.matmul(&m);
    }
    m
}

/// Frequency bound (cycles/µs) used for step selection.
pub fn frequency_bound<T: Scalar>(h: &CMatrix<T>, channels: &[Channel<T>]) -> T {
    let rates: T = channels.iter().map(|(r, a)| *r * a.row_norm() * a.row_norm()).sum();
    T::lit(2.0) * h.row_norm() + rates / T::two_pi()
}

impl<T: Scalar> Propagator<T> {
    pub fn new(
        h: &CMatrix<T>,
        channels: &[Channel<T>],
        interval: T,
        horizon_intervals: usize,
        settings: &IntegratorSettings,
    ) -> Result<Self> {
        let l = liouvillian(h, channels);
        let n = l.dim();
        if interval == T::zero() {
            return Ok(Self {
                matrix: CMatrix::identity(n),
                step: T::zero(),
                steps: 0,
                error_estimate: Some(T::zero()),
            });
        }
        let f = frequency_bound(h, channels).max(T::lit(1e-6));
        let mut h_max = T::one() / (T::lit(settings.steps_per_cycle) * f);
        if let Some(cap) = settings.max_step {
            h_max = h_max.min(T::lit(cap));
        }
        let mut j = 0u32;
        while interval / T::lit(2f64.powi(j as i32)) > h_max {
            j += 1;
            if j > 40 {
                return Err(Error::StepSize(format!(
                    "interval {interval} µs needs more than 2^40 steps at f_max = {f} MHz"
                )));
            }
        }
        if !settings.richardson_check {
            return Ok(Self {
                matrix: rk4_power(&l, interval / T::lit(2f64.powi(j as i32)), j),
                step: interval / T::lit(2f64.powi(j as i32)),
                steps: 1 << j,
                error_estimate: None,
            });
        }
        let scale = T::from_usize_lossy(horizon_intervals.max(1));
        let mut coarse = rk4_power(&l, interval / T::lit(2f64.powi(j as i32)), j);
        for _ in 0..8 {
            let fine = rk4_power(&l, interval / T::lit(2f64.powi(j as i32 + 1)), j + 1);
            let err = fine.sub(&coarse).max_abs();
            if err * scale <= T::lit(settings.rel_tolerance) {
                return Ok(Self {
                    matrix: fine,
                    step: interval / T::lit(2f64.powi(j as i32 + 1)),
                    steps: 1 << (j + 1),
                    error_estimate: Some(err),
                });
            }
            coarse = fine;
            j += 1;
        }
        Err(Error::StepSize(format!(
            "step-doubling estimate still above tolerance {} after refining to h = {} µs",
            settings.rel_tolerance,
            interval / T::lit(2f64.powi(j as i32))
        )))
    }

    pub fn apply(&self, rho: &CMatrix<T>) -> CMatrix<T> {
        let n = rho.dim();
        let v = self.matrix.matvec(rho.as_slice());
        let mut out = CMatrix::zeros(n);
        out.as_mut_slice().copy_from_slice(&v);
        out.hermitian_part()
    }
}

/// Conditional density matrix of the electron and the nuclear levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T> {
    pub rho: CMatrix<T>,
    /// µs
    pub time: T,
    /// Initial polarization the state is conditioned on.
    pub iz: T,
}

impl<T: Scalar> DensityMatrix<T> {
    /// Pure basis state |e, m⟩.
    pub fn basis(e: usize, m: i32, iz: T) -> Self {
        let mut rho = CMatrix::zeros(DIM);
        let k = index(e, m);
        rho[(k, k)] = Complex::new(T::one(), T::zero());
        Self {
            rho,
            time: T::zero(),
            iz,
        }
    }

    pub fn trace(&self) -> T {
        self.rho.trace().re
    }

    pub fn hermiticity_error(&self) -> T {
        self.rho.hermiticity_error()
    }

    pub fn min_eigenvalue(&self) -> T {
        self.rho
            .hermitian_eigenvalues()
            .into_iter()
            .fold(T::infinity(), T::min)
    }

    pub fn population(&self, e: usize, m: i32) -> T {
        let k = index(e, m);
        self.rho[(k, k)].re
    }

    /// Total spin-down population.
    pub fn p_down(&self) -> T {
        (-2..=2).map(|m| self.population(1, m)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(100.0)) {
            return Err(Error::Normalization { sum: tr.to_f64_lossy() });
        }
        Ok(())
    }
}

/// Evolves `rho0` for `duration` µs.
pub fn evolve<T: Scalar>(
    rho0: &DensityMatrix<T>,
    h: &CMatrix<T>,
    magnon: &MagnonParams<T>,
    t2: T,
    duration: T,
    settings: &IntegratorSettings,
) -> Result<DensityMatrix<T>> {
    if duration < T::zero() {
        return Err(Error::Domain {
            quantity: "duration",
            reason: format!("{duration} < 0"),
        });
    }
    let ch = dissipation_channels(magnon.gamma_n, t2);
    let prop = Propagator::new(h, &ch, duration, 1, settings)?;
    Ok(DensityMatrix {
        rho: prop.apply(&rho0.rho),
        time: rho0.time + duration,
        iz: rho0.iz,
    })
}

/// Observables of a single conditional run on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub p_down: Vec<T>,
    /// Population of the monitored |↓, m⟩ level.
    pub p_target: Vec<T>,
    pub final_state: DensityMatrix<T>,
}

fn uniform_spacing<T: Scalar>(taus: &[T]) -> Result<T> {
    if taus.is_empty() {
        return Err(Error::DegenerateData("empty time grid".into()));
    }
    if taus[0] < T::zero() {
        return Err(Error::Domain {
            quantity: "time grid",
            reason: "times must be >= 0".into(),
        });
    }
    if taus.len() == 1 {
        return Ok(T::zero());
    }
    let dt = taus[1] - taus[0];
    for w in taus.windows(2) {
        let d = w[1] - w[0];
        if !(d > T::zero()) || (d - dt).abs() > (T::epsilon() * T::lit(64.0)).max(T::lit(1e-9)) * taus[taus.len() - 1].max(T::one()) {
            return Err(Error::DegenerateData("time grid must be uniform and increasing".into()));
        }
    }
    Ok(dt)
}

/// Conditional run from |↑, m = 0⟩ recorded on a uniform grid of times.
pub fn conditional_trajectory<T: Scalar>(
    h: &CMatrix<T>,
    channels: &[Channel<T>],
    taus: &[T],
    target_level: i32,
    settings: &IntegratorSettings,
) -> Result<Trajectory<T>> {
    let dt = uniform_spacing(taus)?;
    let mut state = DensityMatrix::basis(0, 0, T::zero());
    if taus[0] > T::zero() {
        state.rho = Propagator::new(h, channels, taus[0], 1, settings)?.apply(&state.rho);
    }
    let step = Propagator::new(h, channels, dt, taus.len(), settings)?;
    let mut p_down = Vec::with_capacity(taus.len());
    let mut p_target = Vec::with_capacity(taus.len());
    for k in 0..taus.len() {
        if k > 0 {
            state.rho = step.apply(&state.rho);
        }
        p_down.push(state.p_down());
        p_target.push(state.population(1, target_level));
    }
    state.time = taus[taus.len() - 1];
    Ok(Trajectory {
        p_down,
        p_target,
        final_state: state,
    })
}

/// χ = Σ p(I_z)·x(I_z) for per-polarization observables, in grid order.
pub fn overhauser_average<T: Scalar>(
    p: &OverhauserDistribution<T>,
    observables: &[Vec<T>],
) -> Result<Vec<T>> {
    p.check_normalized()?;
    if observables.len() != p.p.len() {
        return Err(Error::DegenerateData(
            "one observable series per grid point is required".into(),
        ));
    }
    let len = observables.first().map_or(0, Vec::len);
    let mut out = vec![T::zero(); len];
    for (w, obs) in p.p.iter().zip(observables) {
        for (o, &x) in out.iter_mut().zip(obs) {
            *o += *w * x;
        }
    }
    Ok(out)
}

/// Parameters shared by every conditional run of a spectrum or Rabi scan.
#[derive(Debug, Clone)]
pub struct DynamicsSetup<T> {
    pub rabi: T,
    pub omega_n: T,
    pub a_c: T,
    pub magnon: MagnonParams<T>,
    /// Electron T₂ used for the dephasing channel, µs.
    pub t2: T,
    pub settings: IntegratorSettings,
}

impl<T: Scalar> DynamicsSetup<T> {
    fn channels(&self) -> Vec<Channel<T>> {
        dissipation_channels(self.magnon.gamma_n, self.t2)
    }

    pub fn trajectory(&self, delta_eff: T, taus: &[T], target_level: i32) -> Result<Trajectory<T>> {
        let h = hamiltonian_at(delta_eff, self.rabi, self.omega_n, self.a_c, &self.magnon);
        conditional_trajectory(&h, &self.channels(), taus, target_level, &self.settings)
    }
}

fn key<T: Scalar>(x: T) -> i64 {
    (x.to_f64_lossy() * 1e9).round() as i64
}

/// Spin-down population versus detuning and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMap {
    /// MHz
    pub deltas: Vec<f64>,
    /// µs
    pub taus: Vec<f64>,
    /// `p_down[i][k]` at deltas[i], taus[k].
    pub p_down: Vec<Vec<f64>>,
    pub readout_scale: f64,
}

impl SpectrumMap {
    /// Mean of P↓ over times in [t0, t1] for each detuning.
    pub fn time_slice(&self, t0: f64, t1: f64) -> Vec<f64> {
        let sel: Vec<usize> = (0..self.taus.len())
            .filter(|&k| self.taus[k] >= t0 - 1e-12 && self.taus[k] <= t1 + 1e-12)
            .collect();
        self.p_down
            .iter()
            .map(|row| sel.iter().map(|&k| row[k]).sum::<f64>() / sel.len().max(1) as f64)
            .collect()
    }
}

/// Overhauser-averaged spectrum. Conditional runs are shared between all
/// (δ, I_z) pairs with the same effective detuning.
pub fn spectrum_map(
    deltas: &[f64],
    taus: &[f64],
    setup: &DynamicsSetup<f64>,
    p: &OverhauserDistribution<f64>,
    readout_scale: f64,
) -> Result<SpectrumMap> {
    if deltas.is_empty() {
        return Err(Error::DegenerateData("empty detuning grid".into()));
    }
    p.check_normalized()?;
    let mut needed: BTreeMap<i64, f64> = BTreeMap::new();
    for &d in deltas {
        for &iz in &p.iz {
            let de = d - p.overhauser_scale * iz;
            needed.entry(key(de)).or_insert(de);
        }
    }
    let list: Vec<(i64, f64)> = needed.into_iter().collect();
    let runs: Vec<Result<(i64, Vec<f64>)>> = list
        .par_iter()
        .map(|&(k, de)| setup.trajectory(de, taus, 0).map(|t| (k, t.p_down)))
        .collect();
    let mut cache = BTreeMap::new();
    for r in runs {
        let (k, v) = r?;
        cache.insert(k, v);
    }
    let mut rows = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let series: Vec<Vec<f64>> = p
            .iz
            .iter()
            .map(|&iz| cache[&key(d - p.overhauser_scale * iz)].clone())
            .collect();
        rows.push(overhauser_average(p, &series)?);
    }
    Ok(SpectrumMap {
        deltas: deltas.to_vec(),
        taus: taus.to_vec(),
        p_down: rows,
        readout_scale,
    })
}

/// Averaged spin-down and target-level populations of a sideband Rabi run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiTrace {
    pub taus: Vec<f64>,
    pub p_down: Vec<f64>,
    pub p_magnon: Vec<f64>,
    /// Nuclear level m of the monitored |↓, m⟩ state.
    pub target_level: i32,
    pub detuning: f64,
}

/// Level addressed by a drive at detuning δ: round(δ/ω_n) clamped to ±2.
pub fn target_level(detuning: f64, omega_n: f64) -> i32 {
    ((detuning / omega_n).round() as i32).clamp(-2, 2)
}

/// Rabi oscillation at fixed detuning averaged over the Overhauser distribution.
pub fn rabi_trace(
    detuning: f64,
    taus: &[f64],
    setup: &DynamicsSetup<f64>,
    p: &OverhauserDistribution<f64>,
) -> Result<RabiTrace> {
    p.check_normalized()?;
    let level = target_level(detuning, setup.omega_n);
    let runs: Vec<Result<Trajectory<f64>>> = p
        .iz
        .par_iter()
        .map(|&iz| setup.trajectory(detuning - p.overhauser_scale * iz, taus, level))
        .collect();
    let runs: Vec<Trajectory<f64>> = runs.into_iter().collect::<Result<_>>()?;
    let pd: Vec<Vec<f64>> = runs.iter().map(|t| t.p_down.clone()).collect();
    let pm: Vec<Vec<f64>> = runs.iter().map(|t| t.p_target.clone()).collect();
    Ok(RabiTrace {
        taus: taus.to_vec(),
        p_down: overhauser_average(p, &pd)?,
        p_magnon: overhauser_average(p, &pm)?,
        target_level: level,
        detuning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_sidebands() -> MagnonParams<f64> {
        MagnonParams {
            eta1: 0.0,
            eta2: 0.0,
            gamma_n: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn algebra_relations() {
        let a = SpinAlgebra::<f64>::new();
        let comm = a.sx.commutator(&a.sy);
        let isz = a.sz.scale(Complex::new(0.0, 1.0));
        assert!(comm.sub(&isz).max_abs() < 1e-12);
        for s in [&a.sx, &a.sy, &a.sz] {
            assert!(s.hermiticity_error() < 1e-15);
        }
        let mut sum = CMatrix::zeros(DIM);
        for (i, p) in a.projectors.iter().enumerate() {
            assert!(p.matmul(p).sub(p).max_abs() < 1e-15);
            for q in &a.projectors[i + 1..] {
                assert!(p.matmul(q).max_abs() < 1e-15);
            }
            sum = sum.add(p);
        }
        assert!(sum.sub(&CMatrix::identity(DIM)).max_abs() < 1e-15);
    }

    #[test]
    fn strengths_helper() {
        let p = ModelParams::<f64>::default();
        let (e1, e2) = sideband_strengths_from_params(&p);
        assert!((e2 - 0.14).abs() < 0.01, "{e2}");
        assert!(e1 > 0.2, "closed-form first sideband is about 0.21");
        let (z1, _) = sideband_strengths(3e4, 0.05, 21.66, 0.0);
        assert_eq!(z1, 0.0);
        let (_, z2) = sideband_strengths(3e4, 0.05, 21.66, std::f64::consts::FRAC_PI_2);
        assert!(z2.abs() < 1e-18);
        let (_, a) = sideband_strengths(3e4, 0.05, 21.66, 0.3);
        let (_, b) = sideband_strengths(6e4, 0.05, 21.66, 0.3);
        assert!((b / a - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_block_diagonal_without_sidebands() {
        let h = hamiltonian_at(3.0, 5.0, 21.66, 0.6, &MagnonParams::default());
        assert!(h.hermiticity_error() < 1e-15);
        let h0 = hamiltonian_at(3.0, 5.0, 21.66, 0.6, &no_sidebands());
        for i in 0..DIM {
            for j in 0..DIM {
                if i % N_LEVELS != j % N_LEVELS {
                    assert_eq!(h0[(i, j)], Complex::new(0.0, 0.0));
                }
            }
        }
        let hz = hamiltonian_at(3.0, 0.0, 21.66, 0.6, &MagnonParams::default());
        for i in 0..DIM {
            for j in 0..DIM {
                if i != j {
                    assert_eq!(hz[(i, j)], Complex::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn build_hamiltonian_uses_effective_detuning() {
        let params = ModelParams::<f64>::default();
        let drive = DriveSettings {
            rabi: 3.3,
            pump_rabi: 0.0,
            detuning: 10.0,
        };
        let m = MagnonParams::default();
        let a = build_hamiltonian(5.0, &drive, &params, &m);
        let b = hamiltonian_at(10.0 - 2.0 * 0.6 * 5.0, 3.3, params.omega_n(), 0.6, &m);
        assert!(a.sub(&b).max_abs() < 1e-14);
    }

    #[test]
    fn superoperator_matches_direct_rhs() {
        let h = hamiltonian_at(-7.0, 3.3, 21.66, 0.6, &MagnonParams::default());
        let ch = dissipation_channels(3.9, 1.5);
        let l = liouvillian(&h, &ch);
        let rho = CMatrix::from_fn(DIM, |i, j| {
            Complex::new(((i * 7 + j * 3) % 5) as f64 * 0.1, (i as f64 - j as f64) * 0.03)
        })
        .hermitian_part();
        let a = l.matvec(rho.as_slice());
        let b = lindblad_rhs(&rho, &h, &ch);
        let err = a
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn carrier_contract() {
        let rabi = 3.8;
        let setup = DynamicsSetup {
            rabi,
            omega_n: 21.66,
            a_c: 0.6,
            magnon: no_sidebands(),
            t2: f64::INFINITY,
            settings: IntegratorSettings::default(),
        };
        let taus: Vec<f64> = (0..=200).map(|k| k as f64 * 0.005).collect();
        let t = setup.trajectory(0.0, &taus, 0).unwrap();
        for (tau, p) in taus.iter().zip(&t.p_down) {
            let exact = (std::f64::consts::PI * rabi * tau).sin().powi(2);
            assert!((p - exact).abs() < 1e-8, "tau {tau}: {p} vs {exact}");
        }
    }

    #[test]
    fn zero_duration_and_static_cases() {
        let rho = DensityMatrix::basis(0, 1, 3.0);
        let h = hamiltonian_at(2.0, 4.0, 21.66, 0.6, &MagnonParams::default());
        let s = IntegratorSettings::default();
        let same = evolve(&rho, &h, &MagnonParams::default(), 1.0, 0.0, &s).unwrap();
        assert!(same.rho.sub(&rho.rho).max_abs() < 1e-15);
        let zero = CMatrix::zeros(DIM);
        let frozen = evolve(&rho, &zero, &no_sidebands(), f64::INFINITY, 2.0, &s).unwrap();
        assert!(frozen.rho.sub(&rho.rho).max_abs() < 1e-15);
    }

    #[test]
    fn pure_dephasing_closed_form() {
        let t2 = 0.8;
        // (|↑,0⟩ + |↓,0⟩)/√2
        let mut rho = DensityMatrix::basis(0, 0, 0.0);
        let (u, d) = (index(0, 0), index(1, 0));
        for &(i, j) in &[(u, u), (u, d), (d, u), (d, d)] {
            rho.rho[(i, j)] = Complex::new(0.5, 0.0);
        }
        let t = 0.37;
        let out = evolve(&rho, &CMatrix::zeros(DIM), &no_sidebands(), t2, t, &IntegratorSettings::default()).unwrap();
        let expect = 0.5 * (-t / (2.0 * t2)).exp();
        assert!((out.rho[(u, d)].re - expect).abs() < 1e-10);
        assert!((out.rho[(u, u)].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn nuclear_broadening_damps_level_coherence() {
        let gn = 2.0;
        let mut rho = DensityMatrix::basis(0, 0, 0.0);
        let (a, b) = (index(0, 0), index(0, 1));
        for &(i, j) in &[(a, a), (a, b), (b, a), (b, b)] {
            rho.rho[(i, j)] = Complex::new(0.5, 0.0);
        }
        let m = MagnonParams {
            gamma_n: gn,
            ..no_sidebands()
        };
        let out = evolve(&rho, &CMatrix::zeros(DIM), &m, f64::INFINITY, 0.2, &IntegratorSettings::default()).unwrap();
        assert!((out.rho[(a, b)].re - 0.5 * (-gn * 0.2f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn delta_distribution_average_equals_single_run() {
        let setup = DynamicsSetup {
            rabi: 3.3,
            omega_n: 21.66,
            a_c: 0.6,
            magnon: MagnonParams::default(),
            t2: 1.5,
            settings: IntegratorSettings::default(),
        };
        let taus: Vec<f64> = (0..=10).map(|k| k as f64 * 0.02).collect();
        let p = OverhauserDistribution::delta(4.0, 0.6);
        let map = spectrum_map(&[5.0], &taus, &setup, &p, 0.6).unwrap();
        let single = setup.trajectory(5.0 - 1.2 * 4.0, &taus, 0).unwrap();
        assert_eq!(map.p_down[0], single.p_down);
    }

    #[test]
    fn target_level_selection() {
        assert_eq!(target_level(-52.0, 25.27), -2);
        assert_eq!(target_level(22.0, 21.66), 1);
        assert_eq!(target_level(500.0, 21.66), 2);
    }

    #[test]
    fn single_precision_trajectory() {
        let setup = DynamicsSetup::<f32> {
            rabi: 3.8,
            omega_n: 21.66,
            a_c: 0.6,
            magnon: MagnonParams {
                eta1: 0.0,
                eta2: 0.0,
                gamma_n: 0.0,
                delta_q: 0.0,
                include_anharmonic: false,
            },
            t2: f32::INFINITY,
            settings: IntegratorSettings {
                rel_tolerance: 1e-3,
                ..Default::default()
            },
        };
        let taus: Vec<f32> = (0..=10).map(|k| k as f32 * 0.02).collect();
        let t = setup.trajectory(0.0, &taus, 0).unwrap();
        for (tau, p) in taus.iter().zip(&t.p_down) {
            let exact = (std::f32::consts::PI * 3.8 * tau).sin().powi(2);
            assert!((p - exact).abs() < 1e-3);
        }
    }
}

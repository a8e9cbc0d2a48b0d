//! Semiclassical Raman cooling of the nuclear polarization.
//!
//! The electron is treated as a driven two-level system whose excited-state
//! linewidth is set by optical pumping. Stimulated Raman sideband transitions
//! move the nuclear polarization I_z up or down by one unit; their detuning
//! depends on I_z through the Overhauser shift, which produces a restoring
//! drift toward a fixed point I_0. Linearizing the drift around I_0 gives the
//! steady-state variance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{DriveSettings, ModelParams};
use crate::scalar::Scalar;
use crate::sweep::{Axis, Series, SweepResult};
use crate::thermometry::variance_to_t2star;

/// Effective excited-state linewidth Γ produced by pumping at Rabi frequency Ω_p.
pub fn effective_linewidth<T: Scalar>(pump_rabi: T, gamma0: T) -> T {
    if gamma0 <= T::zero() {
        return T::zero();
    }
    let r = pump_rabi / gamma0;
    let sat = T::lit(2.0) * r * r;
    if !sat.is_finite() {
        return gamma0 / T::lit(4.0);
    }
    gamma0 / T::lit(4.0) * sat / (T::one() + sat)
}

/// Dephasing rate Γ₂ of the Raman coherence.
///
/// Γ₂ = (Γ/2 + 2π/T₂)·√(1 + 2(Ω_p/Γ₀)²) + Δω_n. The homogeneous term is the
/// angular rate 2π/T₂; every other quantity is linear MHz.
pub fn dephasing_rate<T: Scalar>(
    gamma_eff: T,
    t2: T,
    pump_rabi: T,
    gamma0: T,
    delta_omega_n: T,
) -> T {
    let r = if gamma0 > T::zero() {
        pump_rabi / gamma0
    } else {
        T::zero()
    };
    let homogeneous = if t2.is_infinite() {
        T::zero()
    } else {
        T::two_pi() / t2
    };
    (gamma_eff / T::lit(2.0) + homogeneous) * (T::one() + T::lit(2.0) * r * r).sqrt()
        + delta_omega_n
}

/// Stimulated Raman rate W(δ) = (Γ/2)·s/(1 + s + (δ/Γ₂)²) with s = Ω²/(ΓΓ₂).
pub fn raman_rate<T: Scalar>(detuning: T, rabi: T, gamma_eff: T, gamma2: T) -> Result<T> {
    if rabi == T::zero() {
        return Ok(T::zero());
    }
    if !(gamma_eff > T::zero()) || !(gamma2 > T::zero()) {
        return Err(Error::DegenerateRate(format!(
            "Raman rate needs positive linewidths (gamma = {gamma_eff}, gamma2 = {gamma2}) at rabi = {rabi}"
        )));
    }
    let s = rabi * rabi / (gamma_eff * gamma2);
    Ok(lorentzian(detuning, gamma_eff, gamma2, s))
}

#[inline]
fn lorentzian<T: Scalar>(detuning: T, gamma_eff: T, gamma2: T, s: T) -> T {
    let d = detuning / gamma2;
    gamma_eff / T::lit(2.0) * s / (T::one() + s + d * d)
}

/// Rates of the polarization rate equation at one value of I_z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalRates<T> {
    pub gamma_eff: T,
    pub gamma2: T,
    pub w_plus: T,
    pub w_minus: T,
    pub gamma_nc: T,
    pub gamma_em: T,
    pub gamma_d: T,
    pub gamma_tot: T,
    pub eta_cool: T,
}

/// Precomputed cooling model for one drive and one set of parameters.
///
/// The Raman coupling of the two-level reduction is 2Ω, so the saturation
/// parameter is s = (2Ω)²/(ΓΓ₂).
#[derive(Debug, Clone)]
pub struct CoolingModel<T> {
    pub detuning: T,
    pub omega_n: T,
    pub a_c: T,
    pub n_i: T,
    pub kappa: T,
    pub thermal_variance: T,
    pub gamma_eff: T,
    pub gamma2: T,
    pub saturation: T,
    pub eta: T,
    pub gamma_em: T,
    /// Common multiplier of every rate. Physical observables do not depend on it.
    pub rate_scale: T,
    /// Multiplier of the sideband rates W±; zero gives the equilibrium limit.
    pub sideband_scale: T,
}

impl<T: Scalar> CoolingModel<T> {
    pub fn new(drive: &DriveSettings<T>, params: &ModelParams<T>) -> Result<Self> {
        let gamma_eff = effective_linewidth(drive.pump_rabi, params.gamma0);
        let gamma2 = dephasing_rate(
            gamma_eff,
            params.t2(),
            drive.pump_rabi,
            params.gamma0,
            params.delta_omega_n,
        );
        let coupling = T::lit(2.0) * drive.rabi;
        let saturation = if coupling == T::zero() {
            T::zero()
        } else if gamma_eff > T::zero() && gamma2 > T::zero() {
            coupling * coupling / (gamma_eff * gamma2)
        } else {
            return Err(Error::DegenerateRate(format!(
                "drive rabi = {} with effective linewidth {gamma_eff}",
                drive.rabi
            )));
        };
        Ok(Self {
            detuning: drive.detuning,
            omega_n: params.omega_n(),
            a_c: params.a_c,
            n_i: params.n_i(),
            kappa: params.kappa(),
            thermal_variance: params.thermal_variance(),
            gamma_eff,
            gamma2,
            saturation,
            eta: params.eta_at_field(),
            gamma_em: params.gamma_em(),
            rate_scale: T::one(),
            sideband_scale: T::one(),
        })
    }

    /// Same model with the electron-mediated diffusion switched off.
    pub fn without_em(mut self) -> Self {
        self.gamma_em = T::zero();
        self
    }

    fn raman(&self, d: T) -> T {
        if self.saturation == T::zero() {
            T::zero()
        } else {
            lorentzian(d, self.gamma_eff, self.gamma2, self.saturation)
        }
    }

    /// W₊, W₋ and Γ_nc at polarization I_z.
    pub fn sideband_rates(&self, iz: T) -> (T, T, T) {
        let e2 = self.eta * self.eta * self.rate_scale;
        let dp = self.detuning - self.a_c * (iz + T::one()) - self.omega_n;
        let dm = self.detuning - self.a_c * (iz - T::one()) + self.omega_n;
        let dn = self.detuning - self.a_c * iz;
        (
            e2 * self.sideband_scale * self.raman(dp),
            e2 * self.sideband_scale * self.raman(dm),
            e2 * self.raman(dn),
        )
    }

    pub fn rates(&self, iz: T) -> OpticalRates<T> {
        let (w_plus, w_minus, gamma_nc) = self.sideband_rates(iz);
        let gamma_em = self.gamma_em * self.rate_scale;
        let gamma_d = gamma_nc + gamma_em;
        OpticalRates {
            gamma_eff: self.gamma_eff,
            gamma2: self.gamma2,
            w_plus,
            w_minus,
            gamma_nc,
            gamma_em,
            gamma_d,
            gamma_tot: w_plus + w_minus + gamma_d,
            eta_cool: self.eta,
        }
    }

    /// dI_z/dt in units of 1/µs.
    pub fn drift(&self, iz: T) -> T {
        let r = self.rates(iz);
        let x = iz / self.n_i;
        r.w_plus * (T::one() - x) - r.w_minus * (T::one() + x) - r.gamma_d * x
    }

    /// Cooling function f(I_z) = NI·(W₊ − W₋)/Γ_tot, or 0 when nothing happens.
    pub fn cooling_function(&self, iz: T) -> T {
        self.cooling_function_flagged(iz).0
    }

    /// As [`Self::cooling_function`], with a flag set when Γ_tot = 0.
    pub fn cooling_function_flagged(&self, iz: T) -> (T, bool) {
        let r = self.rates(iz);
        if r.gamma_tot == T::zero() {
            (T::zero(), true)
        } else {
            (self.n_i * (r.w_plus - r.w_minus) / r.gamma_tot, false)
        }
    }

    /// Finite-difference step for f'(I_0).
    pub fn derivative_step(&self) -> T {
        (T::lit(1e-3) * self.thermal_variance.sqrt()).max(T::one())
    }

    /// Central-difference slope of the cooling function.
    pub fn damping_at(&self, iz: T) -> T {
        let h = self.derivative_step();
        (self.cooling_function(iz + h) - self.cooling_function(iz - h)) / (T::lit(2.0) * h)
    }

    /// Self-consistent fixed point g(I) = κ·f(I) − I = 0 and the damping there.
    pub fn steady_state(&self) -> Result<SteadyState<T>> {
        if self.detuning == T::zero() {
            return Ok(SteadyState {
                i0: T::zero(),
                damping: self.damping_at(T::zero()),
            });
        }
        let g = |i: T| self.kappa * self.cooling_function(i) - i;
        let centre = self.detuning / self.a_c;
        let reach = T::lit(20.0) * (self.omega_n + self.gamma2) / self.a_c;
        let lo = (centre.min(T::zero()) - reach).max(-self.n_i);
        let hi = (centre.max(T::zero()) + reach).min(self.n_i);
        let n = 4000usize;
        let step = (hi - lo) / T::from_usize_lossy(n);
        let mut best: Option<T> = None;
        let mut x0 = lo;
        let mut g0 = g(x0);
        for k in 1..=n {
            let x1 = if k == n { hi } else { lo + step * T::from_usize_lossy(k) };
            let g1 = g(x1);
            // stable roots: g crosses zero from above
            if g0 >= T::zero() && g1 < T::zero() {
                let root = bisect(&g, x0, x1)?;
                let closer = match best {
                    None => true,
                    Some(b) => (root - centre).abs() < (b - centre).abs(),
                };
                if closer {
                    best = Some(root);
                }
            }
            x0 = x1;
            g0 = g1;
        }
        let i0 = best.ok_or(Error::NoConvergence {
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
        })?;
        Ok(SteadyState {
            i0,
            damping: self.damping_at(i0),
        })
    }

    /// Steady state followed by the variance formula.
    pub fn variance(&self) -> Result<(SteadyState<T>, VarianceResult<T>)> {
        let ss = self.steady_state()?;
        let v = variance_from(ss.i0, ss.damping, self.n_i, self.kappa, self.thermal_variance, self.a_c)?;
        Ok((ss, v))
    }

    /// Samples drift and cooling function on a grid of polarizations.
    pub fn curve(&self, iz_grid: Vec<T>) -> Result<CoolingCurve<T>> {
        let ss = self.steady_state()?;
        let drift = iz_grid.iter().map(|&i| self.drift(i)).collect();
        let cooling_fn = iz_grid.iter().map(|&i| self.cooling_function(i)).collect();
        Ok(CoolingCurve {
            iz_grid,
            drift,
            cooling_fn,
            i0: ss.i0,
            damping: ss.damping,
        })
    }
}

/// Bisection until |g| ≤ 1e-10·max(|I|, 1) or the bracket reaches rounding level.
fn bisect<T: Scalar>(g: &impl Fn(T) -> T, mut a: T, mut b: T) -> Result<T> {
    let mut ga = g(a);
    for _ in 0..300 {
        let m = (a + b) / T::lit(2.0);
        let scale = m.abs().max(T::one());
        let gm = g(m);
        if gm.abs() <= T::lit(1e-10) * scale || (b - a).abs() <= T::lit(4.0) * T::epsilon() * scale {
            return Ok(m);
        }
        if (gm > T::zero()) == (ga > T::zero()) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Err(Error::NoConvergence {
        lo: a.to_f64_lossy(),
        hi: b.to_f64_lossy(),
    })
}

/// Fixed point of the rate equation and the slope f'(I_0) there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState<T> {
    pub i0: T,
    pub damping: T,
}

/// Drift and cooling function along a polarization grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingCurve<T> {
    pub iz_grid: Vec<T>,
    pub drift: Vec<T>,
    pub cooling_fn: Vec<T>,
    pub i0: T,
    pub damping: T,
}

/// Steady-state polarization variance and the derived figures of merit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceResult<T> {
    pub variance: T,
    pub thermal_variance: T,
    /// Thermal variance divided by the cooled variance.
    pub performance: T,
    /// Inhomogeneous dephasing time implied by the variance, µs.
    pub t2_star: T,
}

/// Variance reduction ΔI²/ΔI²_th = [1 − (I_0/(κNI))²]/[1 − κ f'(I_0)].
pub fn variance_reduction<T: Scalar>(
    i0: T,
    damping: T,
    params: &ModelParams<T>,
) -> Result<VarianceResult<T>> {
    variance_from(
        i0,
        damping,
        params.n_i(),
        params.kappa(),
        params.thermal_variance(),
        params.a_c,
    )
}

fn variance_from<T: Scalar>(
    i0: T,
    damping: T,
    n_i: T,
    kappa: T,
    thermal_variance: T,
    a_c: T,
) -> Result<VarianceResult<T>> {
    let denominator = T::one() - kappa * damping;
    if !(denominator > T::zero()) {
        return Err(Error::UnphysicalDamping {
            denominator: denominator.to_f64_lossy(),
        });
    }
    let p = i0 / (kappa * n_i);
    let ratio = (T::one() - p * p) / denominator;
    let variance = thermal_variance * ratio;
    if !(variance > T::zero()) {
        return Err(Error::Domain {
            quantity: "variance",
            reason: format!("non-positive variance {variance} at I0 = {i0}"),
        });
    }
    Ok(VarianceResult {
        variance,
        thermal_variance,
        performance: thermal_variance / variance,
        t2_star: variance_to_t2star(variance, a_c),
    })
}

/// Steady state for a drive; convenience wrapper around [`CoolingModel`].
pub fn steady_state<T: Scalar>(
    drive: &DriveSettings<T>,
    params: &ModelParams<T>,
) -> Result<SteadyState<T>> {
    CoolingModel::new(drive, params)?.steady_state()
}

/// dI_z/dt for a drive at polarization I_z.
pub fn drift<T: Scalar>(iz: T, drive: &DriveSettings<T>, params: &ModelParams<T>) -> Result<T> {
    Ok(CoolingModel::new(drive, params)?.drift(iz))
}

/// Cooling function f(I_z) for a drive.
pub fn cooling_function<T: Scalar>(
    iz: T,
    drive: &DriveSettings<T>,
    params: &ModelParams<T>,
) -> Result<T> {
    Ok(CoolingModel::new(drive, params)?.cooling_function(iz))
}

/// Sideband rates (W₊, W₋, Γ_nc) for a drive at polarization I_z.
pub fn sideband_rates<T: Scalar>(
    iz: T,
    drive: &DriveSettings<T>,
    params: &ModelParams<T>,
) -> Result<(T, T, T)> {
    if iz.abs() > params.n_i() {
        return Err(Error::Domain {
            quantity: "polarization",
            reason: format!("|I_z| = {} exceeds NI = {}", iz.abs(), params.n_i()),
        });
    }
    Ok(CoolingModel::new(drive, params)?.sideband_rates(iz))
}

/// Evaluates the cooling performance at one point of the (Ω, Γ) plane.
pub fn performance_at<T: Scalar>(
    rabi: T,
    gamma_eff: T,
    detuning: T,
    params: &ModelParams<T>,
    with_em: bool,
) -> Result<(SteadyState<T>, VarianceResult<T>)> {
    let drive = DriveSettings::with_linewidth(rabi, gamma_eff, detuning, params.gamma0)?;
    let mut model = CoolingModel::new(&drive, params)?;
    if !with_em {
        model = model.without_em();
    }
    model.variance()
}

/// Grid of the (Ω, Γ) plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveGrid {
    pub rabi: Vec<f64>,
    pub gamma_eff: Vec<f64>,
    pub detuning: f64,
}

impl DriveGrid {
    pub fn linspace(rabi: (f64, f64, usize), gamma_eff: (f64, f64, usize)) -> Self {
        Self {
            rabi: crate::sweep::linspace(rabi.0, rabi.1, rabi.2),
            gamma_eff: crate::sweep::linspace(gamma_eff.0, gamma_eff.1, gamma_eff.2),
            detuning: 0.0,
        }
    }
}

/// Cooling performance over a (Ω, Γ) grid.
///
/// Values are stored row-major with Ω as the slow axis. Failed points are
/// masked with the error message; the optimum is the largest unmasked value
/// (lowest index on ties). Work is split across the current rayon pool and
/// gathered in grid order, so the result does not depend on the pool size.
pub fn performance_map(grid: &DriveGrid, params: &ModelParams<f64>, with_em: bool) -> Result<SweepResult> {
    if grid.rabi.is_empty() || grid.gamma_eff.is_empty() {
        return Err(Error::validation("sweep", "performance map needs a non-empty grid"));
    }
    let ng = grid.gamma_eff.len();
    let n = grid.rabi.len() * ng;
    let cells: Vec<Result<(SteadyState<f64>, VarianceResult<f64>)>> = (0..n)
        .into_par_iter()
        .map(|k| {
            performance_at(
                grid.rabi[k / ng],
                grid.gamma_eff[k % ng],
                grid.detuning,
                params,
                with_em,
            )
        })
        .collect();
    let mut perf = Vec::with_capacity(n);
    let mut i0 = Vec::with_capacity(n);
    let mut damping = Vec::with_capacity(n);
    let mut variance = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for c in cells {
        match c {
            Ok((ss, v)) => {
                perf.push(v.performance);
                i0.push(ss.i0);
                damping.push(ss.damping);
                variance.push(v.variance);
                mask.push(None);
            }
            Err(e) => {
                for s in [&mut perf, &mut i0, &mut damping, &mut variance] {
                    s.push(f64::NAN);
                }
                mask.push(Some(e.to_string()));
            }
        }
    }
    Ok(SweepResult::new(
        vec![
            Axis::new("rabi", "MHz", grid.rabi.clone()),
            Axis::new("gamma_eff", "MHz", grid.gamma_eff.clone()),
        ],
        vec![
            Series::new("performance", "1", perf),
            Series::new("i0", "1", i0),
            Series::new("damping", "1", damping),
            Series::new("variance", "1", variance),
        ],
        mask,
    ))
}

/// Optimal cooling performance as a function of field.
///
/// Three curves are produced at each field: the full model, the model without
/// electron-mediated diffusion, and the homogeneous low-field cap
/// ΔI²_th·2(A_c T₂)², which treats T₂ as the shortest resolvable T₂*.
pub fn field_scan(b_grid: &[f64], drive_grid: &DriveGrid, params: &ModelParams<f64>) -> Result<SweepResult> {
    if b_grid.is_empty() {
        return Err(Error::validation("field_scan", "needs at least one field"));
    }
    if let Some(b) = b_grid.iter().find(|&&b| !(b > 0.0)) {
        return Err(Error::validation("field_scan.b_field", format!("field {b} must be > 0")));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 7];
    let mut mask = Vec::new();
    for &b in b_grid {
        let p = params.at_field(b);
        let full = performance_map(drive_grid, &p, true)?;
        let bare = performance_map(drive_grid, &p, false)?;
        let cap = 2.0 * p.thermal_variance() * (p.a_c * p.t2()).powi(2);
        let pick = |m: &SweepResult| -> (f64, f64, f64) {
            match m.optimum() {
                Some(o) => (o.value, o.coords[0], o.coords[1]),
                None => (f64::NAN, f64::NAN, f64::NAN),
            }
        };
        let (fv, fo, fg) = pick(&full);
        let (bv, bo, bg) = pick(&bare);
        for (c, v) in cols.iter_mut().zip([fv, fo, fg, bv, bo, bg, cap]) {
            c.push(v);
        }
        mask.push(if fv.is_nan() {
            Some("no valid grid point".to_string())
        } else {
            None
        });
    }
    let names = [
        ("full", "1"),
        ("full_rabi", "MHz"),
        ("full_gamma_eff", "MHz"),
        ("no_em", "1"),
        ("no_em_rabi", "MHz"),
        ("no_em_gamma_eff", "MHz"),
        ("low_field_limit", "1"),
    ];
    let series = names
        .iter()
        .zip(cols)
        .map(|(&(n, u), v)| Series::new(n, u, v))
        .collect();
    Ok(SweepResult::new(
        vec![Axis::new("b_field", "T", b_grid.to_vec())],
        series,
        mask,
    ))
}

/// Stationary solution of the birth-death chain on integer I_z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub mean: f64,
    pub result: VarianceResult<f64>,
    /// Probability mass in the two outermost grid points.
    pub edge_mass: f64,
    pub truncation_warning: bool,
    /// Time-averaged variance from a seeded kinetic Monte Carlo run, if requested.
    pub sampled_variance: Option<f64>,
    pub sampled_mean: Option<f64>,
}

/// Birth-death chain with up/down rates on an integer grid.
#[derive(Debug, Clone)]
pub struct BirthDeathChain {
    pub iz: Vec<f64>,
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl BirthDeathChain {
    /// Builds the chain for a cooling model on I_0 ± half_width.
    ///
    /// With κ = 1 the rates are W₊(1−x) + Γ_d(1−x)/2 up and W₋(1+x) + Γ_d(1+x)/2
    /// down, x = I_z/NI. For κ ≠ 1 both rates are multiplied by κ and shifted
    /// by ∓(κ−1)Γ_tot·x/2, which keeps the mean drift proportional to the
    /// self-consistency equation and gives the spin-I thermal variance when
    /// the sidebands are off.
    pub fn new(model: &CoolingModel<f64>, centre: f64, half_width: f64) -> Self {
        let lo = (centre - half_width).round().max(-model.n_i.floor());
        let hi = (centre + half_width).round().min(model.n_i.floor());
        let k = model.kappa;
        let m = (hi - lo) as usize + 1;
        let mut iz = Vec::with_capacity(m);
        let mut up = Vec::with_capacity(m);
        let mut down = Vec::with_capacity(m);
        for j in 0..m {
            let i = lo + j as f64;
            let r = model.rates(i);
            let x = i / model.n_i;
            let shift = (k - 1.0) * r.gamma_tot * x / 2.0;
            iz.push(i);
            up.push((k * (r.w_plus + r.gamma_d / 2.0) * (1.0 - x) + shift).max(0.0));
            down.push((k * (r.w_minus + r.gamma_d / 2.0) * (1.0 + x) - shift).max(0.0));
        }
        Self { iz, up, down }
    }

    /// Stationary distribution by the detailed-balance product formula.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let m = self.iz.len();
        let mut logp = vec![0.0; m];
        for j in 1..m {
            let (u, d) = (self.up[j - 1], self.down[j]);
            if !(u > 0.0 && d > 0.0) {
                return Err(Error::DegenerateRate(format!(
                    "chain rate vanishes between I_z = {} and {}",
                    self.iz[j - 1],
                    self.iz[j]
                )));
            }
            logp[j] = logp[j - 1] + u.ln() - d.ln();
        }
        let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        Ok(p)
    }

    /// Gillespie simulation; returns the time-weighted mean and variance.
    pub fn sample(&self, start: usize, events: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = self.iz.len() - 1;
        let mut j = start.min(last);
        let (mut w, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let burn = events / 10;
        for e in 0..events {
            let u = if j < last { self.up[j] } else { 0.0 };
            let d = if j > 0 { self.down[j] } else { 0.0 };
            let total = u + d;
            if total <= 0.0 {
                break;
            }
            let dwell = -(1.0 - rng.gen::<f64>()).ln() / total;
            if e >= burn {
                let x = self.iz[j];
                w += dwell;
                s1 += dwell * x;
                s2 += dwell * x * x;
            }
            j = if rng.gen::<f64>() * total < u { j + 1 } else { j - 1 };
        }
        let mean = s1 / w;
        (mean, s2 / w - mean * mean)
    }
}

/// Oracle options for [`stochastic_steady_state`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    /// Half-width of the grid in units of the thermal standard deviation.
    pub width_sigmas: f64,
    /// Number of kinetic Monte Carlo events (0 skips sampling).
    pub kmc_events: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            width_sigmas: 10.0,
            kmc_events: 0,
        }
    }
}

/// Independent estimate of the steady-state variance from the discrete chain.
pub fn stochastic_steady_state(
    model: &CoolingModel<f64>,
    seed: u64,
    options: OracleOptions,
) -> Result<OracleResult> {
    let centre = if model.sideband_scale == 0.0 {
        0.0
    } else {
        model.steady_state()?.i0
    };
    let chain = BirthDeathChain::new(model, centre, options.width_sigmas * model.thermal_variance.sqrt());
    let p = chain.stationary()?;
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Normalization { sum });
    }
    let mean: f64 = p.iter().zip(&chain.iz).map(|(p, i)| p * i).sum();
    let variance: f64 = p.iter().zip(&chain.iz).map(|(p, i)| p * (i - mean).powi(2)).sum();
    let edge_mass = p[0] + p[p.len() - 1];
    let (sampled_mean, sampled_variance) = if options.kmc_events > 0 {
        let start = chain
            .iz
            .iter()
            .position(|&i| i >= mean.round())
            .unwrap_or(0);
        let (m, v) = chain.sample(start, options.kmc_events, seed);
        (Some(m), Some(v))
    } else {
        (None, None)
    };
    Ok(OracleResult {
        mean,
        result: VarianceResult {
            variance,
            thermal_variance: model.thermal_variance,
            performance: model.thermal_variance / variance,
            t2_star: variance_to_t2star(variance, model.a_c),
        },
        edge_mass,
        truncation_warning: edge_mass >= 1e-6,
        sampled_variance,
        sampled_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(b: f64) -> ModelParams<f64> {
        ModelParams::default().at_field(b)
    }

    fn optimum_drive(_b: f64, rabi: f64, gamma: f64) -> DriveSettings<f64> {
        DriveSettings::with_linewidth(rabi, gamma, 0.0, 150.0).unwrap()
    }

    #[test]
    fn linewidth_limits() {
        assert_eq!(effective_linewidth(0.0, 150.0), 0.0);
        assert_relative_eq!(effective_linewidth(150.0 / 2f64.sqrt(), 150.0), 150.0 / 8.0, max_relative = 1e-12);
        assert_relative_eq!(effective_linewidth(1e9, 150.0), 37.5, max_relative = 1e-9);
        assert_eq!(effective_linewidth(f64::INFINITY, 150.0), 37.5);
    }

    #[test]
    fn dephasing_limits() {
        assert_relative_eq!(dephasing_rate(0.0, 1.0, 0.0, 150.0, 0.0), std::f64::consts::TAU, max_relative = 1e-14);
        assert_relative_eq!(dephasing_rate(0.0, f64::INFINITY, 0.0, 150.0, 10.0), 10.0);
    }

    #[test]
    fn dephasing_at_table_values_regression() {
        // Γ = 25 MHz at 3 T: Ω_p from the inverse linewidth relation, T₂ = 0.5 µs
        let op = crate::params::pump_for_linewidth(25.0, 150.0).unwrap();
        let g2 = dephasing_rate(25.0, 0.5, op, 150.0, 10.0);
        let expected = (12.5 + 4.0 * std::f64::consts::PI) * 3f64.sqrt() + 10.0;
        assert_relative_eq!(g2, expected, max_relative = 1e-12);
        assert_relative_eq!(g2, 53.416227465, max_relative = 1e-9);
    }

    #[test]
    fn raman_rate_basics() {
        // s = 1 at δ = 0 gives Γ/4
        let (g, g2) = (4.0f64, 9.0f64);
        let rabi = (g * g2).sqrt();
        assert_relative_eq!(raman_rate(0.0, rabi, g, g2).unwrap(), 1.0, max_relative = 1e-14);
        assert!(raman_rate(1e12, rabi, g, g2).unwrap() < 1e-15);
        assert!(raman_rate(0.0, 1.0, 0.0, 1.0).is_err());
        assert_eq!(raman_rate(3.0, 0.0, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn sideband_resonance_is_maximal() {
        let p = params(3.0);
        let m = CoolingModel::new(&optimum_drive(3.0, 8.0, 10.0), &p).unwrap();
        // Δ₊ = 0 when I_z = −ω_n/A_c − 1
        let iz = -p.omega_n() / p.a_c - 1.0;
        let (wp, _, _) = m.sideband_rates(iz);
        let peak = m.eta * m.eta * m.gamma_eff / 2.0 * m.saturation / (1.0 + m.saturation);
        assert_relative_eq!(wp, peak, max_relative = 1e-12);
        assert!(m.sideband_rates(iz + 5.0).0 < wp);
    }

    #[test]
    fn sidebands_far_detuned_at_centre() {
        // narrow lines, large ω_n: W± tiny compared to the peak
        let mut p = params(5.0);
        p.delta_omega_n = 0.0;
        p.t2_hahn = vec![[1.0, 100.0]];
        let drive = DriveSettings::with_linewidth(0.5, 0.5, 0.0, 150.0).unwrap();
        let m = CoolingModel::new(&drive, &p).unwrap();
        let (wp, wm, _) = m.sideband_rates(0.0);
        let peak = m.eta * m.eta * m.gamma_eff / 2.0 * m.saturation / (1.0 + m.saturation);
        assert!(wp < 1e-3 * peak && wm < 1e-3 * peak);
    }

    #[test]
    fn mirror_symmetry_of_sidebands() {
        let p = params(5.0);
        let m = CoolingModel::new(&optimum_drive(5.0, 14.0, 18.0), &p).unwrap();
        for k in -200..=200 {
            let i = k as f64 * 0.7;
            assert_relative_eq!(m.sideband_rates(i).0, m.sideband_rates(-i).1, max_relative = 1e-12);
        }
    }

    #[test]
    fn drift_confines_polarization() {
        let p = params(5.0);
        let m = CoolingModel::new(&optimum_drive(5.0, 14.0, 18.0), &p).unwrap();
        assert_eq!(m.drift(0.0), 0.0);
        assert!(m.drift(p.n_i()) <= 0.0);
        assert!(m.drift(-p.n_i()) >= 0.0);
    }

    #[test]
    fn sideband_resonance_positions() {
        let p = params(5.0);
        let m = CoolingModel::new(&optimum_drive(5.0, 14.0, 18.0), &p).unwrap();
        let grid: Vec<f64> = (0..=4000).map(|k| -200.0 + 0.1 * k as f64).collect();
        let argmax = |pick: fn((f64, f64, f64)) -> f64| {
            grid.iter()
                .copied()
                .max_by(|a, b| pick(m.sideband_rates(*a)).total_cmp(&pick(m.sideband_rates(*b))))
                .unwrap()
        };
        // W₊ peaks at I_z = −ω_n/A_c − 1 and W₋ at +ω_n/A_c + 1
        let expected = p.omega_n() / p.a_c + 1.0;
        assert!((argmax(|r| r.0) + expected).abs() < 0.11);
        assert!((argmax(|r| r.1) - expected).abs() < 0.11);
        assert!(argmax(|r| r.2).abs() < 0.11);
    }

    #[test]
    fn cooling_function_zero_cases() {
        let p = params(3.0);
        let m = CoolingModel::new(&optimum_drive(3.0, 5.0, 5.0), &p).unwrap();
        assert_eq!(m.cooling_function(0.0), 0.0);
        let mut dead = m.clone();
        dead.rate_scale = 0.0;
        assert_eq!(dead.cooling_function_flagged(12.0), (0.0, true));
    }

    #[test]
    fn variance_reduction_closed_forms() {
        let p = params(3.0);
        let v = variance_reduction(0.0, 0.0, &p).unwrap();
        assert_relative_eq!(v.variance, v.thermal_variance);
        let v = variance_reduction(0.0, -1.0, &p).unwrap();
        assert_relative_eq!(v.variance / v.thermal_variance, 3.0 / 8.0, max_relative = 1e-14);
        assert!(matches!(
            variance_reduction(0.0, 0.7, &p),
            Err(Error::UnphysicalDamping { .. })
        ));
    }

    #[test]
    fn steady_state_symmetric_and_monotone() {
        let p = params(3.0);
        let mut d = optimum_drive(3.0, 8.0, 10.0);
        assert_eq!(steady_state(&d, &p).unwrap().i0, 0.0);
        let mut last = 0.0;
        for k in 1..=4 {
            d.detuning = 2.0 * k as f64;
            let ss = steady_state(&d, &p).unwrap();
            assert!(ss.i0 > last, "I0 should increase with detuning");
            assert!(ss.damping < 0.0);
            last = ss.i0;
        }
    }

    #[test]
    fn steady_state_solves_self_consistency() {
        let p = params(3.0);
        let mut d = optimum_drive(3.0, 8.0, 10.0);
        d.detuning = 5.0;
        let m = CoolingModel::new(&d, &p).unwrap();
        let ss = m.steady_state().unwrap();
        let lhs = m.kappa * m.cooling_function(ss.i0) / m.n_i;
        assert_relative_eq!(lhs, ss.i0 / m.n_i, max_relative = 1e-7);
    }

    #[test]
    fn rate_scale_leaves_observables_unchanged() {
        let p = params(5.0);
        let m = CoolingModel::new(&optimum_drive(5.0, 14.0, 18.0), &p).unwrap();
        let (_, a) = m.variance().unwrap();
        let mut scaled = m.clone();
        scaled.rate_scale = 37.0;
        let (_, b) = scaled.variance().unwrap();
        assert_relative_eq!(a.performance, b.performance, max_relative = 1e-12);
    }

    #[test]
    fn single_point_map_matches_direct_call() {
        let p = params(5.0);
        let grid = DriveGrid {
            rabi: vec![14.0],
            gamma_eff: vec![18.0],
            detuning: 0.0,
        };
        let map = performance_map(&grid, &p, true).unwrap();
        let (_, v) = performance_at(14.0, 18.0, 0.0, &p, true).unwrap();
        assert_eq!(map.series[0].values, vec![v.performance]);
        assert_eq!(map.optimum().unwrap().index, 0);
    }

    #[test]
    fn map_masks_invalid_cells() {
        let p = params(5.0);
        let grid = DriveGrid {
            rabi: vec![14.0],
            gamma_eff: vec![18.0, 40.0],
            detuning: 0.0,
        };
        let map = performance_map(&grid, &p, true).unwrap();
        assert!(map.mask[0].is_none());
        assert!(map.mask[1].is_some());
        assert!(map.series[0].values[1].is_nan());
    }

    #[test]
    fn chain_thermal_limit() {
        let p = params(3.0);
        let mut m = CoolingModel::new(&optimum_drive(3.0, 8.0, 10.0), &p).unwrap();
        // drive off: W± and Γ_nc vanish and Γ_d = Γ_em is uniform
        m.saturation = 0.0;
        let r = stochastic_steady_state(&m, 1, OracleOptions::default()).unwrap();
        assert!((r.result.variance / p.thermal_variance() - 1.0).abs() < 0.02);
        assert!(r.mean.abs() < 1.0);
        assert!(!r.truncation_warning);
    }

    #[test]
    fn chain_spin_half_thermal_limit() {
        let mut p = params(3.0);
        p.spin = 0.5;
        p.n_nuclei = 4.0e4;
        let mut m = CoolingModel::new(&optimum_drive(3.0, 8.0, 10.0), &p).unwrap();
        // drive off: W± and Γ_nc vanish and Γ_d = Γ_em is uniform
        m.saturation = 0.0;
        let r = stochastic_steady_state(&m, 1, OracleOptions::default()).unwrap();
        assert!((r.result.variance / 1.0e4 - 1.0).abs() < 0.02);
    }

    #[test]
    fn kmc_is_seeded() {
        let p = params(5.0);
        let m = CoolingModel::new(&optimum_drive(5.0, 14.0, 18.0), &p).unwrap();
        let opts = OracleOptions {
            width_sigmas: 10.0,
            kmc_events: 20_000,
        };
        let a = stochastic_steady_state(&m, 9, opts).unwrap();
        let b = stochastic_steady_state(&m, 9, opts).unwrap();
        assert_eq!(a.sampled_variance, b.sampled_variance);
        let c = stochastic_steady_state(&m, 10, opts).unwrap();
        assert_ne!(a.sampled_variance, c.sampled_variance);
    }

    #[test]
    fn generic_over_f32() {
        let p = ModelParams::<f32>::default().at_field(5.0);
        let d = DriveSettings::<f32>::with_linewidth(14.0, 18.0, 0.0, 150.0).unwrap();
        let m = CoolingModel::new(&d, &p).unwrap();
        let (_, v) = m.variance().unwrap();
        let (_, v64) = performance_at(14.0, 18.0, 0.0, &ModelParams::default().at_field(5.0), true).unwrap();
        assert!((v.performance as f64 / v64.performance - 1.0).abs() < 1e-3);
    }
}

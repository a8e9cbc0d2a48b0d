//! Effective temperature of the nuclear ensemble and Ramsey coherence.
//!
//! The canonical ensemble keeps only states reachable from full polarization
//! I_z = −3N/2 by flipping k ≤ N/2 nuclei by one unit each, with degeneracy
//! C(N, k). Energies are in units of the nuclear Zeeman energy, so β is
//! dimensionless.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::PLANCK_OVER_BOLTZMANN_MK_PER_MHZ;
use crate::scalar::Scalar;

/// Lower edge (exclusive) of the β range where the truncation is trusted.
pub const BETA_MIN: f64 = 0.5;
/// Upper β used when inverting a variance.
pub const BETA_MAX: f64 = 50.0;
const MAX_NUCLEI: u64 = 1_000_000;

fn check_domain<T: Scalar>(beta: T, n_nuclei: u64) -> Result<()> {
    if !(beta > T::lit(BETA_MIN)) {
        return Err(Error::Domain {
            quantity: "beta",
            reason: format!("{beta} <= {BETA_MIN}, outside the truncated partition sum's validity"),
        });
    }
    if n_nuclei == 0 || n_nuclei > MAX_NUCLEI {
        return Err(Error::Domain {
            quantity: "n_nuclei",
            reason: format!("{n_nuclei} not in [1, {MAX_NUCLEI}]"),
        });
    }
    Ok(())
}

/// Log-weights ln C(N,k) + β(3N/2 − k) for k = 0..=⌊N/2⌋ and their maximum.
fn log_weights<T: Scalar>(beta: T, n_nuclei: u64) -> (Vec<T>, T) {
    let n = T::from_u64(n_nuclei).expect("count representable");
    let kmax = (n_nuclei / 2) as usize;
    let top = T::lit(1.5) * n;
    let mut out = Vec::with_capacity(kmax + 1);
    // accumulate ln C(N,k) in f64 so that f32 callers do not lose the count
    let mut ln_binom = 0.0_f64;
    let nf = n_nuclei as f64;
    let mut max = T::neg_infinity();
    for k in 0..=kmax {
        if k > 0 {
            ln_binom += (nf - (k as f64 - 1.0)).ln() - (k as f64).ln();
        }
        let w = T::lit(ln_binom) + beta * (top - T::from_usize_lossy(k));
        if w > max {
            max = w;
        }
        out.push(w);
    }
    (out, max)
}

/// ln Z(β) of the truncated partition sum, evaluated by log-sum-exp.
pub fn log_partition<T: Scalar>(beta: T, n_nuclei: u64) -> Result<T> {
    check_domain(beta, n_nuclei)?;
    let (w, max) = log_weights(beta, n_nuclei);
    let s: T = w.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + s.ln())
}

/// Mean ⟨I_z⟩ and variance ΔI_z² of the truncated canonical ensemble.
pub fn thermal_moments<T: Scalar>(beta: T, n_nuclei: u64) -> Result<(T, T)> {
    check_domain(beta, n_nuclei)?;
    let (w, max) = log_weights(beta, n_nuclei);
    let p: Vec<T> = w.iter().map(|&x| (x - max).exp()).collect();
    let z: T = p.iter().copied().sum();
    let mean_k: T = p
        .iter()
        .enumerate()
        .map(|(k, &q)| q * T::from_usize_lossy(k))
        .sum::<T>()
        / z;
    let var: T = p
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let d = T::from_usize_lossy(k) - mean_k;
            q * d * d
        })
        .sum::<T>()
        / z;
    let n = T::from_u64(n_nuclei).expect("count representable");
    Ok((mean_k - T::lit(1.5) * n, var))
}

/// β whose thermal variance equals `target_variance`, by bisection.
pub fn invert_variance<T: Scalar>(target_variance: T, n_nuclei: u64) -> Result<T> {
    let lo = T::lit(BETA_MIN) * (T::one() + T::epsilon());
    let hi = T::lit(BETA_MAX);
    let v_lo = thermal_moments(lo, n_nuclei)?.1;
    let v_hi = thermal_moments(hi, n_nuclei)?.1;
    if !(target_variance <= v_lo && target_variance >= v_hi) {
        return Err(Error::OutOfRange {
            target: target_variance.to_f64_lossy(),
            min: v_hi.to_f64_lossy(),
            max: v_lo.to_f64_lossy(),
        });
    }
    let (mut a, mut b) = (lo, hi);
    let ln_target = target_variance.ln();
    for _ in 0..200 {
        let m = (a + b) / T::lit(2.0);
        if b - a <= T::epsilon() * T::lit(4.0) * m {
            break;
        }
        let v = thermal_moments(m, n_nuclei)?.1;
        if v.ln() > ln_target {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((a + b) / T::lit(2.0))
}

/// Temperature in mK for inverse temperature β at nuclear Zeeman frequency f (MHz).
pub fn effective_temperature<T: Scalar>(beta: T, omega_n_mhz: T) -> T {
    if beta.is_infinite() {
        return T::zero();
    }
    T::lit(PLANCK_OVER_BOLTZMANN_MK_PER_MHZ) * omega_n_mhz / beta
}

/// Canonical-ensemble summary at one β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub beta: f64,
    pub mean_iz: f64,
    pub variance: f64,
    pub polarization_fraction: f64,
    /// mK
    pub temperature: f64,
}

impl ThermalState {
    /// Evaluates the ensemble at β; β = ∞ gives the fully polarized state.
    pub fn at(beta: f64, n_nuclei: u64, omega_n_mhz: f64) -> Result<Self> {
        let (mean_iz, variance) = if beta.is_infinite() && beta > 0.0 {
            (-1.5 * n_nuclei as f64, 0.0)
        } else {
            thermal_moments(beta, n_nuclei)?
        };
        Ok(Self {
            beta,
            mean_iz,
            variance,
            polarization_fraction: mean_iz.abs() / (1.5 * n_nuclei as f64),
            temperature: effective_temperature(beta, omega_n_mhz),
        })
    }
}

/// T₂* implied by a polarization variance: ΔI² = 1/(2(A_c T₂*)²).
pub fn variance_to_t2star<T: Scalar>(variance: T, a_c: T) -> T {
    T::one() / (a_c * (T::lit(2.0) * variance).sqrt())
}

/// Inverse of [`variance_to_t2star`].
pub fn t2star_to_variance<T: Scalar>(t2_star: T, a_c: T) -> T {
    let x = a_c * t2_star;
    T::one() / (T::lit(2.0) * x * x)
}

/// Discretized probability distribution of the nuclear polarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverhauserDistribution<T> {
    pub iz: Vec<T>,
    pub p: Vec<T>,
    /// Overhauser shift per unit of I_z (2A_c), MHz.
    pub overhauser_scale: T,
}

impl<T: Scalar> OverhauserDistribution<T> {
    /// Normalizes the given weights.
    pub fn new(iz: Vec<T>, weights: Vec<T>, a_c: T) -> Result<Self> {
        if iz.len() != weights.len() || iz.is_empty() {
            return Err(Error::DegenerateData(
                "distribution grid and weights must be non-empty and of equal length".into(),
            ));
        }
        if weights.iter().any(|&w| !(w >= T::zero())) {
            return Err(Error::DegenerateData("negative or NaN probability".into()));
        }
        let z: T = weights.iter().copied().sum();
        if !(z > T::zero()) {
            return Err(Error::Normalization { sum: z.to_f64_lossy() });
        }
        Ok(Self {
            iz,
            p: weights.into_iter().map(|w| w / z).collect(),
            overhauser_scale: T::lit(2.0) * a_c,
        })
    }

    /// All weight on one polarization.
    pub fn delta(iz: T, a_c: T) -> Self {
        Self {
            iz: vec![iz],
            p: vec![T::one()],
            overhauser_scale: T::lit(2.0) * a_c,
        }
    }

    /// Gaussian on a uniform grid of spacing `step` covering ±`width`·σ.
    pub fn gaussian(mean: T, sigma: T, step: T, width: T, a_c: T) -> Result<Self> {
        if !(sigma > T::zero() && step > T::zero()) {
            return Err(Error::DegenerateData("gaussian needs sigma > 0 and step > 0".into()));
        }
        let half = (width * sigma / step).ceil().to_usize().unwrap_or(0);
        let mut iz = Vec::with_capacity(2 * half + 1);
        let mut w = Vec::with_capacity(2 * half + 1);
        for j in 0..=2 * half {
            let d = step * (T::from_usize_lossy(j) - T::from_usize_lossy(half));
            iz.push(mean + d);
            let u = d / sigma;
            w.push((-(u * u) / T::lit(2.0)).exp());
        }
        Self::new(iz, w, a_c)
    }

    /// Gaussian specified by its Overhauser-shift standard deviation σ_O (MHz).
    ///
    /// The grid is aligned to `shift_step` in Overhauser shift and is refined
    /// by integer factors until it has at least `min_points` points in ±4σ.
    pub fn from_overhauser_sigma(sigma_mhz: T, a_c: T, shift_step: T, min_points: usize) -> Result<Self> {
        let scale = T::lit(2.0) * a_c;
        let sigma = sigma_mhz / scale;
        let mut step = shift_step / scale;
        let width = T::lit(4.0);
        let mut refine = 1usize;
        while T::lit(2.0) * width * sigma / step + T::one() < T::from_usize_lossy(min_points) {
            refine += 1;
            step = shift_step / scale / T::from_usize_lossy(refine);
        }
        Self::gaussian(T::zero(), sigma, step, width, a_c)
    }

    pub fn check_normalized(&self) -> Result<()> {
        let s: T = self.p.iter().copied().sum();
        if (s - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(64.0)) {
            return Err(Error::Normalization { sum: s.to_f64_lossy() });
        }
        Ok(())
    }

    pub fn mean(&self) -> T {
        self.iz.iter().zip(&self.p).map(|(&i, &p)| i * p).sum()
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.iz
            .iter()
            .zip(&self.p)
            .map(|(&i, &p)| p * (i - m) * (i - m))
            .sum()
    }

    /// Standard deviation of the Overhauser shift, MHz.
    pub fn overhauser_sigma(&self) -> T {
        self.overhauser_scale * self.variance().sqrt()
    }
}

/// Ramsey coherence C(τ) = |Σ p(I_z)·exp(−i·2A_c·I_z·τ)|.
///
/// 2A_c·I_z is in MHz and τ in µs; the product is used as the phase directly,
/// so that a Gaussian of variance v decays as exp(−(τ/T₂*)²) with T₂* from
/// [`variance_to_t2star`].
pub fn coherence_function<T: Scalar>(p: &OverhauserDistribution<T>, tau: &[T]) -> Result<Vec<T>> {
    p.check_normalized()?;
    Ok(tau
        .iter()
        .map(|&t| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (&i, &w) in p.iz.iter().zip(&p.p) {
                let phase = -(p.overhauser_scale * i * t);
                acc = acc + Complex::from_polar(w, phase);
            }
            acc.norm()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn brute_force_log_z(beta: f64, n: u64) -> f64 {
        // direct sum with exact binomials
        let mut z = 0.0;
        let mut c = 1.0f64;
        for k in 0..=n / 2 {
            if k > 0 {
                c = c * (n - k + 1) as f64 / k as f64;
            }
            let iz = k as f64 - 1.5 * n as f64;
            z += c * (-beta * iz).exp();
        }
        z.ln()
    }

    #[test]
    fn single_nucleus_sum() {
        // N = 1: only k = 0, I_z = −3/2
        assert_relative_eq!(log_partition(2.0, 1).unwrap(), 3.0, max_relative = 1e-15);
    }

    #[test]
    fn matches_direct_sum() {
        for n in 1..=20u64 {
            for beta in [0.6, 1.0, 2.0, 5.5, 12.0] {
                let a = log_partition(beta, n).unwrap();
                let b = brute_force_log_z(beta, n);
                assert_relative_eq!(a, b, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn ground_state_asymptote() {
        let n = 1000;
        let beta = 60.0;
        let lz = log_partition(beta, n).unwrap();
        assert_relative_eq!(lz, 1.5 * n as f64 * beta, max_relative = 1e-12);
    }

    #[test]
    fn domain_and_size_limits() {
        assert!(log_partition(0.5, 10).is_err());
        assert!(log_partition(2.0, 0).is_err());
        assert!(log_partition(2.0, 2_000_000).is_err());
        assert!(log_partition(0.8f64, 1_000_000).unwrap().is_finite());
    }

    #[test]
    fn moments_at_reference_beta() {
        let (mean, var) = thermal_moments(5.5f64, 30_000).unwrap();
        // reference from a 30-digit direct summation
        assert_relative_eq!(var, 121.607_150_846, max_relative = 1e-9);
        assert!(mean.abs() / 45_000.0 > 0.995);
    }

    #[test]
    fn moments_large_beta() {
        let (mean, var) = thermal_moments(45.0, 30_000).unwrap();
        assert!(var < 1e-14);
        assert_relative_eq!(mean, -45_000.0, max_relative = 1e-15);
    }

    #[test]
    fn invert_reference_and_errors() {
        let b = invert_variance(100.0, 30_000).unwrap();
        assert!((5.0..=6.0).contains(&b));
        assert!(invert_variance(1.0e9, 30_000).is_err());
        assert!(invert_variance(-1.0, 30_000).is_err());
    }

    #[test]
    fn temperatures() {
        let b = invert_variance(100.0, 30_000).unwrap();
        let t = effective_temperature(b, 7.22 * 3.3);
        assert!((0.17..=0.24).contains(&t), "{t}");
        let t1 = effective_temperature(1.0, 21.66);
        assert!((0.9..=1.1).contains(&t1));
        assert_eq!(effective_temperature(f64::INFINITY, 21.66), 0.0);
    }

    #[test]
    fn thermal_t2star() {
        let t = variance_to_t2star(5.0 * 3.0e4 / 4.0, 0.6);
        assert_relative_eq!(t * 1e3, 6.0858, max_relative = 1e-4);
        assert_relative_eq!(t2star_to_variance(t, 0.6), 37_500.0, max_relative = 1e-12);
    }

    #[test]
    fn coherence_of_delta_and_two_point() {
        let d = OverhauserDistribution::delta(17.0, 0.6);
        for c in coherence_function(&d, &[0.0, 0.3, 2.0]).unwrap() {
            assert_relative_eq!(c, 1.0, max_relative = 1e-14);
        }
        let two = OverhauserDistribution::new(vec![-5.0, 5.0], vec![1.0, 1.0], 0.6).unwrap();
        let taus = [0.0, 0.1, 0.25];
        let c = coherence_function(&two, &taus).unwrap();
        for (t, c) in taus.iter().zip(c) {
            assert_relative_eq!(c, (1.2f64 * 5.0 * t).cos().abs(), epsilon = 1e-14);
        }
    }

    #[test]
    fn unnormalized_distribution_rejected() {
        let mut d = OverhauserDistribution::delta(0.0, 0.6);
        d.p[0] = 0.5;
        assert!(coherence_function(&d, &[0.0]).is_err());
    }

    #[test]
    fn aligned_gaussian_grid() {
        let d = OverhauserDistribution::from_overhauser_sigma(7.0, 0.6, 1.0, 41).unwrap();
        assert!(d.iz.len() >= 41);
        assert_relative_eq!((d.iz[1] - d.iz[0]) * 1.2, 1.0, max_relative = 1e-12);
        assert_relative_eq!(d.overhauser_sigma(), 7.0, max_relative = 1e-3);
        let fine = OverhauserDistribution::from_overhauser_sigma(2.0, 0.6, 1.0, 41).unwrap();
        assert!(fine.iz.len() >= 41);
    }
}

//! Physical parameters of the quantum-dot system and the optical drive.
//!
//! Units: frequencies, rates and linewidths are linear MHz (cycles per µs),
//! times are µs, fields are Tesla and temperatures are mK.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// h·(1 MHz)/k_B expressed in mK.
pub const PLANCK_OVER_BOLTZMANN_MK_PER_MHZ: f64 = 4.7992e-2;

/// Conversion constants shared by all modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConstants {
    /// mK per MHz of linear frequency.
    pub planck_over_boltzmann: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            planck_over_boltzmann: PLANCK_OVER_BOLTZMANN_MK_PER_MHZ,
        }
    }
}

/// Measured electron Hahn-echo times: (field in T, T₂ in µs).
pub const T2_HAHN_TABLE: [(f64, f64); 3] = [(2.0, 0.020), (3.0, 0.500), (5.0, 2.000)];

/// Parameters of the electron/nuclear system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams<T> {
    /// Number of nuclei N.
    pub n_nuclei: T,
    /// Nuclear spin I (1/2 or 3/2).
    pub spin: T,
    /// Collinear hyperfine constant per nucleus, MHz.
    pub a_c: T,
    /// Non-collinear hyperfine constant, MHz.
    pub a_nc: T,
    /// Quadrupolar strength B_Q, MHz.
    pub b_q: T,
    /// Quadrupolar axis angle θ, radians.
    pub theta: T,
    /// Relative spread α of the quadrupolar shift.
    pub alpha: T,
    /// Nuclear gyromagnetic ratio, MHz/T.
    pub gamma_ratio: T,
    /// Trion linewidth Γ₀, MHz.
    pub gamma0: T,
    /// Inhomogeneous spread of the nuclear Zeeman frequency, MHz.
    pub delta_omega_n: T,
    /// Hahn-echo table: pairs of (field T, T₂ µs), strictly increasing in field.
    pub t2_hahn: Vec<[T; 2]>,
    /// Electron-mediated relaxation rate at `b_ref`, 1/ms.
    pub gamma_em_ref: T,
    /// Dimensionless factor mapping the measured relaxation rate onto the
    /// diffusion rate of the polarization rate equation.
    pub em_diffusion_scale: T,
    /// Reference field for the scaled quantities, T.
    pub b_ref: T,
    /// Cooling sideband strength η at `b_ref`.
    pub eta_cool: T,
    /// Applied magnetic field, T.
    pub b_field: T,
}

impl<T: Scalar> Default for ModelParams<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            n_nuclei: l(3.0e4),
            spin: l(1.5),
            a_c: l(0.6),
            a_nc: l(0.009),
            b_q: l(1.7),
            theta: l(20.4_f64.to_radians()),
            alpha: l(0.8),
            gamma_ratio: l(7.22),
            gamma0: l(150.0),
            delta_omega_n: l(10.0),
            t2_hahn: T2_HAHN_TABLE.iter().map(|&(b, t)| [l(b), l(t)]).collect(),
            gamma_em_ref: l(1.0 / 41.7),
            em_diffusion_scale: l(570.0),
            b_ref: l(3.0),
            eta_cool: l(0.063),
            b_field: l(3.0),
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Returns a copy at a different applied field.
    pub fn at_field(&self, b_field: T) -> Self {
        Self {
            b_field,
            ..self.clone()
        }
    }

    /// Nuclear Zeeman frequency ω_n = γ·B, MHz.
    pub fn omega_n(&self) -> T {
        self.gamma_ratio * self.b_field
    }

    /// Maximal polarization N·I.
    pub fn n_i(&self) -> T {
        self.n_nuclei * self.spin
    }

    /// Spin factor κ = 2(I+1)/3 of the general-I rate equation.
    pub fn kappa(&self) -> T {
        T::lit(2.0) * (self.spin + T::one()) / T::lit(3.0)
    }

    /// Infinite-temperature variance N·I(I+1)/3 (5N/4 for I = 3/2).
    pub fn thermal_variance(&self) -> T {
        self.n_nuclei * self.spin * (self.spin + T::one()) / T::lit(3.0)
    }

    /// Hahn-echo T₂ at the applied field, µs.
    pub fn t2(&self) -> T {
        self.t2_at(self.b_field)
    }

    /// Log-linear interpolation of the T₂ table, extrapolated linearly in
    /// log T₂ beyond the measured fields.
    pub fn t2_at(&self, b: T) -> T {
        let tab = &self.t2_hahn;
        if tab.len() == 1 {
            return tab[0][1];
        }
        let last = tab.len() - 2;
        let i = (0..=last).find(|&j| b <= tab[j + 1][0]).unwrap_or(last);
        let (b0, b1) = (tab[i][0], tab[i + 1][0]);
        let (y0, y1) = (tab[i][1].ln(), tab[i + 1][1].ln());
        (y0 + (y1 - y0) * (b - b0) / (b1 - b0)).exp()
    }

    /// Cooling sideband strength at the applied field, scaled as ω_n⁻².
    pub fn eta_at_field(&self) -> T {
        let r = self.b_ref / self.b_field;
        self.eta_cool * r * r
    }

    /// Electron-mediated diffusion rate Γ_em at the applied field, MHz.
    pub fn gamma_em(&self) -> T {
        let r = self.b_ref / self.b_field;
        self.em_diffusion_scale * self.gamma_em_ref * T::lit(1e-3) * r * r
    }

    /// Anharmonic quadrupolar shift Δ_Q = B_Q(2 sin²θ − cos²θ), MHz.
    pub fn delta_q(&self) -> T {
        let (s, c) = self.theta.sin_cos();
        self.b_q * (T::lit(2.0) * s * s - c * c)
    }

    /// Collective nuclear broadening Γ_n = 2(1+α)|Δ_Q|, MHz.
    pub fn gamma_n_derived(&self) -> T {
        T::lit(2.0) * (T::one() + self.alpha) * self.delta_q().abs()
    }

    /// Non-collinear hyperfine constant from A_c·B_Q/ω_n, MHz.
    ///
    /// This is an alternative to the configured `a_nc`; the two estimates
    /// differ by a factor of about five at 3 T.
    pub fn a_nc_derived(&self) -> T {
        self.a_c * self.b_q / self.omega_n()
    }

    /// Checks the type invariants. Errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let f = |x: T| x.to_f64_lossy();
        let finite = |name: &str, x: T| -> Result<()> {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!("params.{name}"), "must be finite"))
            }
        };
        for (name, x) in [
            ("n_nuclei", self.n_nuclei),
            ("spin", self.spin),
            ("a_c", self.a_c),
            ("a_nc", self.a_nc),
            ("b_q", self.b_q),
            ("theta", self.theta),
            ("alpha", self.alpha),
            ("gamma_ratio", self.gamma_ratio),
            ("gamma0", self.gamma0),
            ("delta_omega_n", self.delta_omega_n),
            ("gamma_em_ref", self.gamma_em_ref),
            ("em_diffusion_scale", self.em_diffusion_scale),
            ("b_ref", self.b_ref),
            ("eta_cool", self.eta_cool),
            ("b_field", self.b_field),
        ] {
            finite(name, x)?;
        }
        if f(self.n_nuclei) < 1.0 || f(self.n_nuclei).fract() != 0.0 {
            return Err(Error::validation("params.n_nuclei", "must be an integer >= 1"));
        }
        let spin = f(self.spin);
        if spin != 0.5 && spin != 1.5 {
            return Err(Error::validation(
                "params.spin",
                format!("unsupported spin {spin}; only 1/2 and 3/2 are implemented"),
            ));
        }
        for (name, x) in [
            ("a_c", self.a_c),
            ("a_nc", self.a_nc),
            ("b_q", self.b_q),
            ("alpha", self.alpha),
            ("gamma0", self.gamma0),
            ("delta_omega_n", self.delta_omega_n),
            ("gamma_em_ref", self.gamma_em_ref),
            ("em_diffusion_scale", self.em_diffusion_scale),
            ("eta_cool", self.eta_cool),
        ] {
            if f(x) < 0.0 {
                return Err(Error::validation(format!("params.{name}"), "must be >= 0"));
            }
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&f(self.theta)) {
            return Err(Error::validation("params.theta", "must lie in [0, pi/2] radians"));
        }
        if f(self.gamma_ratio) <= 0.0 {
            return Err(Error::validation("params.gamma_ratio", "must be > 0"));
        }
        if f(self.b_field) <= 0.0 {
            return Err(Error::validation("params.b_field", "must be > 0"));
        }
        if f(self.b_ref) <= 0.0 {
            return Err(Error::validation("params.b_ref", "must be > 0"));
        }
        if self.t2_hahn.is_empty() {
            return Err(Error::validation("params.t2_hahn", "needs at least one entry"));
        }
        for (i, e) in self.t2_hahn.iter().enumerate() {
            if !(f(e[0]) > 0.0 && f(e[1]) > 0.0) {
                return Err(Error::validation(
                    "params.t2_hahn",
                    format!("entry {i} must have positive field and T2"),
                ));
            }
            if i > 0 && e[0] <= self.t2_hahn[i - 1][0] {
                return Err(Error::validation(
                    "params.t2_hahn",
                    "fields must be strictly increasing",
                ));
            }
        }
        Ok(())
    }
}

/// Optical drive of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveSettings<T> {
    /// Carrier Raman Rabi frequency Ω, MHz.
    pub rabi: T,
    /// Optical pumping Rabi frequency Ω_p, MHz.
    pub pump_rabi: T,
    /// Two-photon detuning δ, MHz.
    pub detuning: T,
}

impl<T: Scalar> Default for DriveSettings<T> {
    fn default() -> Self {
        Self {
            rabi: T::lit(17.0),
            pump_rabi: T::lit(100.0),
            detuning: T::zero(),
        }
    }
}

impl<T: Scalar> DriveSettings<T> {
    /// Drive whose pumping produces the requested effective linewidth Γ.
    ///
    /// Requires 0 ≤ Γ < Γ₀/4.
    pub fn with_linewidth(rabi: T, gamma_eff: T, detuning: T, gamma0: T) -> Result<Self> {
        Ok(Self {
            rabi,
            pump_rabi: pump_for_linewidth(gamma_eff, gamma0)?,
            detuning,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rabi.is_finite() && self.rabi >= T::zero()) {
            return Err(Error::validation("drive.rabi", "must be finite and >= 0"));
        }
        if !(self.pump_rabi.is_finite() && self.pump_rabi >= T::zero()) {
            return Err(Error::validation("drive.pump_rabi", "must be finite and >= 0"));
        }
        if !self.detuning.is_finite() {
            return Err(Error::validation("drive.detuning", "must be finite"));
        }
        Ok(())
    }
}

/// Inverse of the effective-linewidth relation: Ω_p producing linewidth Γ.
pub fn pump_for_linewidth<T: Scalar>(gamma_eff: T, gamma0: T) -> Result<T> {
    let x = T::lit(4.0) * gamma_eff / gamma0;
    if !(x >= T::zero() && x < T::one()) {
        return Err(Error::Domain {
            quantity: "effective linewidth",
            reason: format!(
                "{} MHz must lie in [0, gamma0/4 = {})",
                gamma_eff,
                gamma0 / T::lit(4.0)
            ),
        });
    }
    let sat = x / (T::one() - x);
    Ok(gamma0 * (sat / T::lit(2.0)).sqrt())
}

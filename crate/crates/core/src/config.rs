//! Run configuration read from TOML.
//!
//! Every section and key is optional; missing values take the documented
//! defaults. Unknown keys are rejected. Example:
//!
//! ```toml
//! seed = 7
//!
//! [params]
//! b_field = 5.0
//!
//! [[sweep]]
//! parameter = "rabi"
//! min = 1.0
//! max = 40.0
//! steps = 40
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cooling::{DriveGrid, OracleOptions};
use crate::dynamics::{IntegratorSettings, MagnonParams};
use crate::error::{Error, Result};
use crate::params::{DriveSettings, ModelParams, PhysicalConstants};
use crate::sweep::linspace;

/// Environment variable naming the config used when none is given.
pub const CONFIG_ENV: &str = "MAGNONSIM_CONFIG";

/// Names accepted by `[[sweep]] parameter = ...`.
pub const SWEEP_PARAMETERS: [&str; 5] = ["rabi", "gamma_eff", "b_field", "pump_rabi", "detuning"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: String,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.steps)
    }
}

/// Settings of the master-equation runs shared by spectrum and Rabi scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Electron T₂ in µs for the dephasing channel; the Hahn-echo table value
    /// at the configured field when absent.
    pub t2: Option<f64>,
    /// Readout conversion applied to P↓ when writing results.
    pub readout_scale: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            t2: None,
            readout_scale: 0.6,
        }
    }
}

/// How the Overhauser distribution of a spectrum run is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSource {
    /// Gaussian with the configured Overhauser standard deviation.
    Gaussian,
    /// Gaussian with the steady-state variance of the cooling model for `[drive]`.
    Cooling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_step: f64,
    pub tau_max: f64,
    pub tau_step: f64,
    pub distribution: DistributionSource,
    /// Overhauser standard deviation of the cooled ensemble, MHz.
    pub cooled_sigma: f64,
    /// Overhauser standard deviation without cooling, MHz.
    pub poor_sigma: f64,
    /// Minimum number of polarization points within ±4σ.
    pub min_points: usize,
    /// Time window averaged for the five-peak spectrum, µs.
    pub slice_start: f64,
    pub slice_end: f64,
    /// Early-time window averaged for the carrier width, µs.
    pub carrier_window: f64,
    /// Also compute the uncooled carrier.
    pub poor_cooling: bool,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            delta_min: -70.0,
            delta_max: 70.0,
            delta_step: 1.0,
            tau_max: 1.0,
            tau_step: 0.01,
            distribution: DistributionSource::Gaussian,
            cooled_sigma: 7.0,
            poor_sigma: 44.6,
            min_points: 41,
            slice_start: 0.85,
            slice_end: 1.0,
            carrier_window: 0.15,
            poor_cooling: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RabiConfig {
    /// Carrier Rabi frequencies of the sideband runs, MHz.
    pub rabi_values: Vec<f64>,
    /// Drive detuning in units of ω_n.
    pub sideband_order: f64,
    pub tau_max: f64,
    pub tau_step: f64,
    pub overhauser_sigma: f64,
    pub min_points: usize,
    /// Rabi frequency of the resonant carrier reference run, MHz.
    pub carrier_rabi: f64,
    pub carrier_tau_max: f64,
    /// Overhauser standard deviation of the carrier reference run, MHz; 0 fixes I_z = 0.
    pub carrier_overhauser_sigma: f64,
    /// Lower edge of the frequency search in cycles per record length.
    pub min_cycles: f64,
}

impl Default for RabiConfig {
    fn default() -> Self {
        Self {
            rabi_values: vec![7.0, 9.0, 12.0],
            sideband_order: -2.0,
            tau_max: 3.0,
            tau_step: 0.005,
            overhauser_sigma: 7.0,
            min_points: 41,
            carrier_rabi: 3.8,
            carrier_tau_max: 2.0,
            carrier_overhauser_sigma: 0.0,
            min_cycles: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermometryConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    pub steps: usize,
    /// Variance converted to β and temperature.
    pub target_variance: f64,
    /// Field at which the temperature of the target variance is reported, T.
    pub temperature_field: f64,
    /// Append a β = ∞ row.
    pub include_infinite: bool,
}

impl Default for ThermometryConfig {
    fn default() -> Self {
        Self {
            beta_min: 1.0,
            beta_max: 10.0,
            steps: 91,
            target_variance: 100.0,
            temperature_field: 3.3,
            include_infinite: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub plot_script: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            plot_script: false,
        }
    }
}

/// Everything a subcommand needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub params: ModelParams<f64>,
    pub drive: DriveSettings<f64>,
    pub constants: PhysicalConstants,
    pub magnon: MagnonParams<f64>,
    pub dynamics: DynamicsConfig,
    pub integrator: IntegratorSettings,
    pub oracle: OracleOptions,
    pub spectrum: SpectrumConfig,
    pub rabi: RabiConfig,
    pub thermometry: ThermometryConfig,
    pub output: OutputConfig,
    pub sweep: Vec<SweepAxis>,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite and > 0 (got {v})")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.drive.validate()?;
        self.magnon.validate()?;
        self.integrator.validate()?;
        positive("constants.planck_over_boltzmann", self.constants.planck_over_boltzmann)?;
        if let Some(t2) = self.dynamics.t2 {
            positive("dynamics.t2", t2)?;
        }
        if !(self.dynamics.readout_scale >= 0.0) {
            return Err(Error::validation("dynamics.readout_scale", "must be >= 0"));
        }
        positive("oracle.width_sigmas", self.oracle.width_sigmas)?;
        for (i, a) in self.sweep.iter().enumerate() {
            let f = |k: &str| format!("sweep[{i}].{k}");
            if !SWEEP_PARAMETERS.contains(&a.parameter.as_str()) {
                return Err(Error::validation(
                    f("parameter"),
                    format!("unknown parameter `{}`; expected one of {:?}", a.parameter, SWEEP_PARAMETERS),
                ));
            }
            if a.steps < 1 {
                return Err(Error::validation(f("steps"), "must be >= 1"));
            }
            if !(a.min.is_finite() && a.max.is_finite() && a.min <= a.max) {
                return Err(Error::validation(f("max"), "need finite min <= max"));
            }
            if self.sweep[..i].iter().any(|b| b.parameter == a.parameter) {
                return Err(Error::validation(f("parameter"), "axis given twice"));
            }
        }
        let s = &self.spectrum;
        positive("spectrum.delta_step", s.delta_step)?;
        positive("spectrum.tau_step", s.tau_step)?;
        positive("spectrum.cooled_sigma", s.cooled_sigma)?;
        positive("spectrum.poor_sigma", s.poor_sigma)?;
        if !(s.delta_min <= s.delta_max) {
            return Err(Error::validation("spectrum.delta_max", "must be >= delta_min"));
        }
        if !(s.tau_max >= 0.0) {
            return Err(Error::validation("spectrum.tau_max", "must be >= 0"));
        }
        if !(s.slice_start <= s.slice_end) {
            return Err(Error::validation("spectrum.slice_end", "must be >= slice_start"));
        }
        if s.min_points < 1 {
            return Err(Error::validation("spectrum.min_points", "must be >= 1"));
        }
        let r = &self.rabi;
        if r.rabi_values.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::validation("rabi.rabi_values", "all values must be > 0"));
        }
        positive("rabi.tau_max", r.tau_max)?;
        positive("rabi.tau_step", r.tau_step)?;
        positive("rabi.overhauser_sigma", r.overhauser_sigma)?;
        positive("rabi.carrier_rabi", r.carrier_rabi)?;
        positive("rabi.carrier_tau_max", r.carrier_tau_max)?;
        if !(r.carrier_overhauser_sigma >= 0.0 && r.carrier_overhauser_sigma.is_finite()) {
            return Err(Error::validation("rabi.carrier_overhauser_sigma", "must be finite and >= 0"));
        }
        if r.min_points < 1 {
            return Err(Error::validation("rabi.min_points", "must be >= 1"));
        }
        positive("rabi.min_cycles", r.min_cycles)?;
        let t = &self.thermometry;
        if !(t.beta_min > crate::thermometry::BETA_MIN) {
            return Err(Error::validation("thermometry.beta_min", "must be > 0.5"));
        }
        if !(t.beta_max >= t.beta_min) {
            return Err(Error::validation("thermometry.beta_max", "must be >= beta_min"));
        }
        if t.steps < 1 {
            return Err(Error::validation("thermometry.steps", "must be >= 1"));
        }
        positive("thermometry.target_variance", t.target_variance)?;
        positive("thermometry.temperature_field", t.temperature_field)?;
        Ok(())
    }

    pub fn axis(&self, name: &str) -> Option<&SweepAxis> {
        self.sweep.iter().find(|a| a.parameter == name)
    }

    fn axis_or(&self, name: &str, min: f64, max: f64, steps: usize) -> Vec<f64> {
        self.axis(name)
            .map(SweepAxis::values)
            .unwrap_or_else(|| linspace(min, max, steps))
    }

    /// (Ω, Γ) grid; defaults to 40×40 over Ω ∈ [1, 40] and Γ ∈ [1, 37] MHz.
    pub fn drive_grid(&self) -> DriveGrid {
        DriveGrid {
            rabi: self.axis_or("rabi", 1.0, 40.0, 40),
            gamma_eff: self.axis_or("gamma_eff", 1.0, 37.0, 40),
            detuning: self.drive.detuning,
        }
    }

    /// Field grid; defaults to 2..6 T in 17 steps.
    pub fn field_grid(&self) -> Vec<f64> {
        self.axis_or("b_field", 2.0, 6.0, 17)
    }

    /// T₂ for master-equation runs.
    pub fn dynamics_t2(&self) -> f64 {
        self.dynamics.t2.unwrap_or_else(|| self.params.t2())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    RunConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Config path from the environment, if set and non-empty.
pub fn default_config_path() -> Option<PathBuf> {
    std::env::var_os(CONFIG_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

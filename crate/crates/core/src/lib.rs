//! Raman cooling of a quantum-dot nuclear spin ensemble and coherent
//! single-magnon dynamics.
//!
//! Modules:
//! - [`params`]: physical constants, model parameters and drive settings
//! - [`cooling`]: rate-equation cooling model, variance reduction, sweeps and a chain oracle
//! - [`dynamics`]: master-equation sideband spectra and Rabi traces
//! - [`thermometry`]: effective temperature and Ramsey coherence
//! - [`analysis`]: Gaussian, stretched-exponential and relaxation fits, frequency extraction
//! - [`config`]: TOML run configuration
//!
//! The numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod analysis;
pub mod config;
pub mod cooling;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod params;
pub mod scalar;
pub mod sweep;
pub mod thermometry;

pub use config::{load_config, RunConfig};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use sweep::SweepResult;

pub type Params = params::ModelParams<f64>;
pub type Drive = params::DriveSettings<f64>;
pub type Magnon = dynamics::MagnonParams<f64>;
pub type Cooling = cooling::CoolingModel<f64>;
pub type Rates = cooling::OpticalRates<f64>;
pub type Variance = cooling::VarianceResult<f64>;
pub type Steady = cooling::SteadyState<f64>;
pub type Curve = cooling::CoolingCurve<f64>;
pub type Distribution = thermometry::OverhauserDistribution<f64>;
pub type Density = dynamics::DensityMatrix<f64>;
pub type Setup = dynamics::DynamicsSetup<f64>;

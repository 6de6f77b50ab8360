//! Gray-box virtual-battery modeling of air-conditioned buildings.
//!
//! This crate holds the physical layer of the toolkit:
//!
//! - [`fleet`]: AC unit specifications, fleet definitions, and experiment
//!   configuration (the single source of physical constants).
//! - [`thermo`]: first-principles 1R-1C indoor temperature simulation with a
//!   price-responsive controller; generates ground-truth datasets.
//! - [`battery`]: the virtual-battery abstraction — SOC/temperature mapping,
//!   the analytic parameter oracle, and the battery forward integrator.
//! - [`data`]: synthetic weather/price generation, CSV ingestion, sample
//!   windowing, normalization statistics, and chronological splits.
//!
//! All internal arithmetic is SI (J, W, s, °C). Power values cross module
//! boundaries in kW (matching the fleet tables) and are converted where the
//! joule-scale capacity meets the kilowatt-scale power.

pub mod battery;
pub mod data;
pub mod fleet;
pub mod thermo;

pub use battery::{soc_from_temp, temp_from_soc, vb_step, VbParams};
pub use data::{NormStats, Sample};
pub use fleet::{AcUnitSpec, ExperimentConfig, FleetSpec};
pub use thermo::{EnvSeries, Trajectory};

/// kW → W conversion factor used wherever fleet-table powers meet SI energy.
pub const KILO: f64 = 1000.0;

/// Seconds per hourly sample.
pub const HOUR_S: f64 = 3600.0;

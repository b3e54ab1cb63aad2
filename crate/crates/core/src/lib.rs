//! Behavioral simulator and analysis toolkit for memristor-based
//! programmable DC sources.
//!
//! The crate models the devices and amplifier of a two-memristor DC source
//! prototype, drives its closed-loop read-write-verify programming, repeats
//! the sweep and stability measurement campaigns at room temperature and at
//! 1.2 K, and evaluates the power budget of the integrated eNVM design.
//!
//! Everything stochastic draws from deterministically derived streams
//! ([`rng::Stream`]); a fixed master seed reproduces every result bit for
//! bit.

// Validation uses `!(x > 0.0)` so that NaN fails the checks too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod config;
pub mod device;
pub mod experiments;
pub mod programming;
pub mod records;
pub mod rng;
pub mod runner;
pub mod scaling;
pub mod stats;

pub use circuit::{BankSpec, OutputSample, PowerDraw, SourceBank, SwitchMatrixState};
pub use config::{
    load_config, load_config_str, validate_config, Diagnostic, ExperimentConfig, ExperimentKind,
};
pub use device::{AmplifierModel, DeviceSpec, MemristorState, PulseSpec, TemperatureRegime};
pub use experiments::{
    compute_mre, run_dc_sweep, run_stability, OffsetCorrection, StabilityResult, SweepResult,
    SweepSpec,
};
pub use programming::{
    balance_resistance, program_source, target_resistance, tune_resistance, ProgramReport,
    TuneParams,
};
pub use runner::{run, RunManifest, RunOutcome};
pub use scaling::{
    bias_current_for, max_sources, power_per_source, resolution_for, scan_rmin,
    AmplifierScalingModel, EnvmTech, ScalingScenario,
};

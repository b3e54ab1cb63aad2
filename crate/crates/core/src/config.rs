//! Experiment configuration: a single TOML document selects a calibration
//! preset, overrides any model parameter, and describes one experiment.
//!
//! Loading starts from the named calibration's full parameter set and
//! deep-merges the user document over it, so every default is overridable
//! while configs stay short. The digest is computed over the resolved,
//! canonically re-serialized configuration, making it stable under key
//! reordering in the source document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::circuit::BankSpec;
use crate::device::{AmplifierModel, DeviceSpec, TemperatureRegime, DEFAULT_MAX_WRITE_VOLTS};
use crate::experiments::OffsetCorrection;
use crate::programming::{target_resistance, TuneParams};
use crate::scaling::{EnvmTech, ScalingScenario};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config")]
    Io(#[from] std::io::Error),
    #[error("config is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unknown calibration '{0}' (expected 'room' or 'cryo')")]
    UnknownCalibration(String),
}

/// Grid of minimum feedback resistances for a scaling scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    /// Explicit ascending resistances (ohms).
    Explicit(Vec<f64>),
    /// Logarithmically spaced grid.
    Log {
        start_ohms: f64,
        stop_ohms: f64,
        points: usize,
    },
}

impl GridSpec {
    pub fn expand(&self) -> Vec<f64> {
        match self {
            GridSpec::Explicit(values) => values.clone(),
            GridSpec::Log {
                start_ohms,
                stop_ohms,
                points,
            } => {
                if *points <= 1 {
                    return vec![*start_ohms];
                }
                (0..*points)
                    .map(|i| {
                        start_ohms
                            * (stop_ohms / start_ohms).powf(i as f64 / (*points as f64 - 1.0))
                    })
                    .collect()
            }
        }
    }
}

/// What to run, with kind-specific fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentKind {
    Sweep {
        v_start_volts: f64,
        v_stop_volts: f64,
        resolution_volts: f64,
        replications: usize,
        #[serde(default)]
        offset_correction: OffsetCorrection,
    },
    Stability {
        v_target_volts: f64,
        duration_seconds: f64,
        #[serde(default = "default_stability_dt")]
        dt_seconds: f64,
    },
    Program {
        v_target_volts: f64,
        #[serde(default = "default_repetitions")]
        repetitions: usize,
    },
    Scale {
        #[serde(default = "EnvmTech::vcm")]
        tech: EnvmTech,
        #[serde(default)]
        amp: crate::scaling::AmplifierScalingModel,
        #[serde(default = "default_cooling_power")]
        cooling_power_watts: f64,
        #[serde(default = "default_gates_per_dot")]
        gates_per_dot: u64,
        grid: GridSpec,
    },
}

fn default_stability_dt() -> f64 {
    0.1
}

fn default_repetitions() -> usize {
    1
}

fn default_cooling_power() -> f64 {
    1.5
}

fn default_gates_per_dot() -> u64 {
    2
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Sweep { .. } => "sweep",
            ExperimentKind::Stability { .. } => "stability",
            ExperimentKind::Program { .. } => "program",
            ExperimentKind::Scale { .. } => "scale",
        }
    }
}

/// A fully resolved experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub calibration: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub bank: BankSpec,
    pub tune: TuneParams,
    pub experiment: ExperimentKind,
}

/// Room-temperature calibration of the two-device prototype.
pub fn room_bank() -> BankSpec {
    let g_min = 40.0e-6;
    let g_max = 160.0e-6;
    BankSpec {
        n_memristors: 2,
        r_in_ohms: 3000.0,
        v_in_volts: 0.25,
        device: DeviceSpec {
            g_min_siemens: g_min,
            g_max_siemens: g_max,
            initial_conductance_siemens: 0.5 * (g_min + g_max),
            // A 1.5 V pulse moves the state by ~2% of the window.
            write_gain_siemens_per_volt: 0.02 * (g_max - g_min) / 0.7,
            write_threshold_volts: 0.8,
            c2c_sigma: 0.05,
            read_noise_alpha: 0.002,
            read_noise_floor_ohms: 0.0,
            drift_rate_per_second: 1.0e-4,
            iv_beta_per_volt2: 0.0,
            max_write_volts: DEFAULT_MAX_WRITE_VOLTS,
        },
        amplifier: AmplifierModel::ad8605(),
        regime: TemperatureRegime::room(),
    }
}

/// 1.2 K calibration: cryo-reformed devices sit at higher resistance, read
/// noise grows, drift shrinks, the input voltage drops to 75 mV, and the
/// supplies are boosted to +/-3.0 V.
pub fn cryo_bank() -> BankSpec {
    let g_min = 19.0e-6;
    let g_max = 33.0e-6;
    let mut amplifier = AmplifierModel::ad8605();
    amplifier.v_dd_volts = 3.0;
    amplifier.v_ss_volts = -3.0;
    BankSpec {
        n_memristors: 2,
        r_in_ohms: 3000.0,
        v_in_volts: 0.075,
        device: DeviceSpec {
            g_min_siemens: g_min,
            g_max_siemens: g_max,
            initial_conductance_siemens: 0.5 * (g_min + g_max),
            write_gain_siemens_per_volt: 0.02 * (g_max - g_min) / 0.7,
            write_threshold_volts: 0.8,
            c2c_sigma: 0.05,
            read_noise_alpha: 0.01,
            read_noise_floor_ohms: 0.0,
            drift_rate_per_second: 1.0e-5,
            iv_beta_per_volt2: 0.0,
            max_write_volts: DEFAULT_MAX_WRITE_VOLTS,
        },
        amplifier,
        regime: TemperatureRegime::cryo(),
    }
}

pub fn preset_bank(calibration: &str) -> Option<BankSpec> {
    match calibration {
        "room" => Some(room_bank()),
        "cryo" => Some(cryo_bank()),
        _ => None,
    }
}

#[derive(Serialize)]
struct BaseDocument {
    master_seed: u64,
    calibration: String,
    bank: BankSpec,
    tune: TuneParams,
}

/// Parse a config document: the named calibration supplies every default,
/// then the user's keys are deep-merged over it.
pub fn load_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let user: toml::Value = toml::from_str(text)?;
    let calibration = user
        .get("calibration")
        .and_then(|v| v.as_str())
        .unwrap_or("room")
        .to_string();
    let bank = preset_bank(&calibration)
        .ok_or_else(|| ConfigError::UnknownCalibration(calibration.clone()))?;
    let base = BaseDocument {
        master_seed: 42,
        calibration,
        bank,
        tune: TuneParams::default(),
    };
    let mut merged = toml::Value::try_from(&base)?;
    merge_value(&mut merged, user);
    let config: ExperimentConfig = merged.try_into()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    load_config_str(&text)
}

fn merge_value(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(base_table), toml::Value::Table(over_table)) => {
            for (key, value) in over_table {
                match base_table.get_mut(&key) {
                    Some(existing) => merge_value(existing, value),
                    None => {
                        base_table.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

/// SHA-256 digest of the canonical serialized form of the resolved config.
pub fn config_digest(config: &ExperimentConfig) -> Result<String, ConfigError> {
    let canonical = toml::to_string(config)?;
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    Ok(hex::encode(hasher.finalize()))
}

/// One validation finding: the offending field and what is wrong with it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Check everything checkable without running: positivity, windows,
/// amplifier tables, tuning parameters, and per-target reachability.
pub fn validate_config(config: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut diagnostics = Vec::new();
    let mut push = |field: &str, message: String| {
        diagnostics.push(Diagnostic {
            field: field.to_string(),
            message,
        });
    };

    if preset_bank(&config.calibration).is_none() {
        push(
            "calibration",
            format!("unknown calibration '{}'", config.calibration),
        );
    }

    let bank = &config.bank;
    if bank.n_memristors < 1 {
        push("bank.n_memristors", "must be at least 1".into());
    }
    if !(bank.r_in_ohms > 0.0) {
        push("bank.r_in_ohms", "must be positive".into());
    }
    let device = &bank.device;
    if !(device.g_min_siemens > 0.0) {
        push("bank.device.g_min_siemens", "must be positive".into());
    }
    if !(device.g_max_siemens >= device.g_min_siemens) {
        push("bank.device.g_max_siemens", "must be >= g_min".into());
    }
    if !(device.initial_conductance_siemens >= device.g_min_siemens
        && device.initial_conductance_siemens <= device.g_max_siemens)
    {
        push(
            "bank.device.initial_conductance_siemens",
            "must lie within [g_min, g_max]".into(),
        );
    }
    if !(device.c2c_sigma >= 0.0) {
        push("bank.device.c2c_sigma", "must be >= 0".into());
    }
    if !(device.read_noise_alpha >= 0.0) {
        push("bank.device.read_noise_alpha", "must be >= 0".into());
    }
    if !(device.max_write_volts > 0.0) {
        push("bank.device.max_write_volts", "must be positive".into());
    }
    if let Err(e) = bank.amplifier.validate() {
        push("bank.amplifier", e.to_string());
    }
    if !(bank.regime.temperature_kelvin > 0.0) {
        push("bank.regime.temperature_kelvin", "must be positive".into());
    }

    let tune = &config.tune;
    if let Err(e) = tune.validate() {
        push("tune", e.to_string());
    }
    if tune.start_amplitude_volts <= bank.device.write_threshold_volts {
        push(
            "tune.start_amplitude_volts",
            "at or below the write threshold; pulses would never move the state".into(),
        );
    }
    if tune.max_amplitude_volts > bank.device.max_write_volts {
        push(
            "tune.max_amplitude_volts",
            "exceeds the device write-voltage limit".into(),
        );
    }

    let check_reachable =
        |diags: &mut Vec<Diagnostic>, field: &str, v_target: f64| match target_resistance(
            v_target,
            bank.v_in_volts,
            bank.n_memristors,
            bank.r_in_ohms,
        ) {
            Ok(required) => {
                let g = 1.0 / required;
                if !(g >= device.g_min_siemens && g <= device.g_max_siemens) {
                    diags.push(Diagnostic {
                        field: field.to_string(),
                        message: format!(
                            "target {v_target} V needs {required:.1} ohm per device, outside \
                             [{:.1}, {:.1}] ohm",
                            1.0 / device.g_max_siemens,
                            1.0 / device.g_min_siemens
                        ),
                    });
                }
            }
            Err(e) => diags.push(Diagnostic {
                field: field.to_string(),
                message: e.to_string(),
            }),
        };

    match &config.experiment {
        ExperimentKind::Sweep {
            v_start_volts,
            v_stop_volts,
            resolution_volts,
            replications,
            ..
        } => {
            if !(v_stop_volts > v_start_volts) {
                push(
                    "experiment.v_stop_volts",
                    "must exceed v_start_volts".into(),
                );
            }
            if *replications < 2 {
                push(
                    "experiment.replications",
                    "resolution-error statistics need at least 2 replications".into(),
                );
            }
            if !(*resolution_volts > 0.0) {
                push("experiment.resolution_volts", "must be positive".into());
            } else {
                let steps = (v_stop_volts - v_start_volts) / resolution_volts;
                if (steps - steps.round()).abs() > 1e-9 {
                    push(
                        "experiment.resolution_volts",
                        "sweep span is not an integer number of steps".into(),
                    );
                }
                if *v_stop_volts > *v_start_volts {
                    let steps = steps.round() as usize;
                    for k in 0..=steps {
                        let target = v_start_volts + k as f64 * resolution_volts;
                        check_reachable(&mut diagnostics, "experiment.targets", target);
                    }
                }
            }
        }
        ExperimentKind::Stability {
            v_target_volts,
            duration_seconds,
            dt_seconds,
        } => {
            if !(*dt_seconds > 0.0) {
                push("experiment.dt_seconds", "must be positive".into());
            }
            if *duration_seconds < 10.0 * dt_seconds {
                push(
                    "experiment.duration_seconds",
                    "must be at least 10 * dt_seconds".into(),
                );
            }
            check_reachable(
                &mut diagnostics,
                "experiment.v_target_volts",
                *v_target_volts,
            );
        }
        ExperimentKind::Program {
            v_target_volts,
            repetitions,
        } => {
            if *repetitions < 1 {
                push("experiment.repetitions", "must be at least 1".into());
            }
            check_reachable(
                &mut diagnostics,
                "experiment.v_target_volts",
                *v_target_volts,
            );
        }
        ExperimentKind::Scale {
            tech,
            amp,
            cooling_power_watts,
            gates_per_dot,
            grid,
        } => {
            if let Err(e) = tech.validate() {
                push("experiment.tech", e.to_string());
            }
            if let Err(e) = amp.validate() {
                push("experiment.amp", e.to_string());
            }
            if !(*cooling_power_watts > 0.0) {
                push("experiment.cooling_power_watts", "must be positive".into());
            }
            if *gates_per_dot == 0 {
                push("experiment.gates_per_dot", "must be at least 1".into());
            }
            let grid = grid.expand();
            if grid.is_empty()
                || grid.windows(2).any(|w| !(w[1] > w[0]))
                || !(grid.first().copied().unwrap_or(0.0) > 0.0)
            {
                push(
                    "experiment.grid",
                    "must be a non-empty ascending positive grid".into(),
                );
            }
        }
    }

    diagnostics
}

/// Build the scaling scenario described by a `scale` experiment.
pub fn scale_scenario(experiment: &ExperimentKind) -> Option<(ScalingScenario, Vec<f64>)> {
    match experiment {
        ExperimentKind::Scale {
            tech,
            amp,
            cooling_power_watts,
            gates_per_dot,
            grid,
        } => Some((
            ScalingScenario {
                tech: tech.clone(),
                amp: amp.clone(),
                cooling_power_watts: *cooling_power_watts,
                gates_per_dot: *gates_per_dot,
            },
            grid.expand(),
        )),
        _ => None,
    }
}

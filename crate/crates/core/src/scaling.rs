//! Behavioral power and footprint scaling of the integrated eNVM source:
//! bias-current sizing versus minimum feedback resistance, per-source power,
//! source count under a cooling budget, and output resolution versus device
//! count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("invalid scaling parameter: {0}")]
    InvalidParameter(String),
    #[error("resistance grid must be ascending and positive")]
    BadGrid,
}

/// Resistance window of one eNVM technology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvmTech {
    pub name: String,
    pub r_min_ohms: f64,
    pub r_max_ohms: f64,
    pub cryo_validated: bool,
}

impl EnvmTech {
    /// Valence-change memory: 10 kOhm to 100 kOhm, cryo-validated.
    pub fn vcm() -> Self {
        Self {
            name: "vcm".into(),
            r_min_ohms: 10.0e3,
            r_max_ohms: 100.0e3,
            cryo_validated: true,
        }
    }

    /// Ferroelectric tunnel junctions: megaohm-class resistances.
    pub fn ftj() -> Self {
        Self {
            name: "ftj".into(),
            r_min_ohms: 1.0e6,
            r_max_ohms: 10.0e6,
            cryo_validated: true,
        }
    }

    pub fn validate(&self) -> Result<(), ScalingError> {
        if !(self.r_min_ohms > 0.0 && self.r_min_ohms < self.r_max_ohms) {
            return Err(ScalingError::InvalidParameter(
                "need 0 < r_min < r_max".into(),
            ));
        }
        Ok(())
    }
}

/// Power law of the two-stage integrated amplifier: total supply current is
/// a fixed multiple of the bias current, plus a static floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmplifierScalingModel {
    /// Total supply current per unit of bias current.
    pub stage_current_multiplier: f64,
    /// Lowest usable bias current (A).
    pub i_b_floor_amperes: f64,
    /// Bias current at the reference feedback resistance (A).
    pub i_b_ref_amperes: f64,
    /// Reference minimum feedback resistance (ohms).
    pub r_min_ref_ohms: f64,
    pub v_dd_volts: f64,
    pub v_ss_volts: f64,
    /// Bias-independent power term (W).
    pub static_power_watts: f64,
}

impl Default for AmplifierScalingModel {
    fn default() -> Self {
        // Calibrated to the two design operating points: ~100 uW at
        // I_B = 1 uA and ~5 uW after the 20x reduction at I_B = 20 nA,
        // on +/-3 V rails.
        let span = 6.0;
        let (i_hi, p_hi) = (1.0e-6, 100.0e-6);
        let (i_lo, p_lo) = (20.0e-9, 5.0e-6);
        let multiplier = (p_hi - p_lo) / ((i_hi - i_lo) * span);
        Self {
            stage_current_multiplier: multiplier,
            i_b_floor_amperes: i_lo,
            i_b_ref_amperes: i_hi,
            r_min_ref_ohms: 10.0e3,
            v_dd_volts: 3.0,
            v_ss_volts: -3.0,
            static_power_watts: p_hi - multiplier * i_hi * span,
        }
    }
}

impl AmplifierScalingModel {
    pub fn validate(&self) -> Result<(), ScalingError> {
        if !(self.stage_current_multiplier > 0.0) {
            return Err(ScalingError::InvalidParameter(
                "stage_current_multiplier must be positive".into(),
            ));
        }
        if !(self.i_b_floor_amperes > 0.0) {
            return Err(ScalingError::InvalidParameter(
                "i_b_floor_amperes must be positive".into(),
            ));
        }
        if !(self.i_b_ref_amperes >= self.i_b_floor_amperes) {
            return Err(ScalingError::InvalidParameter(
                "i_b_ref_amperes must be at least the floor".into(),
            ));
        }
        if !(self.r_min_ref_ohms > 0.0) {
            return Err(ScalingError::InvalidParameter(
                "r_min_ref_ohms must be positive".into(),
            ));
        }
        if !(self.v_dd_volts > self.v_ss_volts) {
            return Err(ScalingError::InvalidParameter(
                "v_dd must exceed v_ss".into(),
            ));
        }
        if !(self.static_power_watts >= 0.0) {
            return Err(ScalingError::InvalidParameter(
                "static_power_watts must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// One integration scenario: a technology, the amplifier power law, the
/// stage cooling budget, and how many biased gates each quantum dot needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingScenario {
    pub tech: EnvmTech,
    #[serde(default)]
    pub amp: AmplifierScalingModel,
    pub cooling_power_watts: f64,
    pub gates_per_dot: u64,
}

impl ScalingScenario {
    pub fn validate(&self) -> Result<(), ScalingError> {
        self.tech.validate()?;
        self.amp.validate()?;
        if !(self.cooling_power_watts > 0.0) {
            return Err(ScalingError::InvalidParameter(
                "cooling_power_watts must be positive".into(),
            ));
        }
        if self.gates_per_dot == 0 {
            return Err(ScalingError::InvalidParameter(
                "gates_per_dot must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Input resistor implied by the technology window: `R_in = R_min / 4`.
    pub fn circuit_input_resistance_ohms(&self) -> f64 {
        self.tech.r_min_ohms / 4.0
    }
}

/// Bias current needed for a given minimum feedback resistance: inverse in
/// `r_min` through the calibration point, floored at the minimum usable
/// bias.
pub fn bias_current_for(amp: &AmplifierScalingModel, r_min_ohms: f64) -> f64 {
    assert!(r_min_ohms > 0.0, "r_min must be positive");
    (amp.i_b_ref_amperes * amp.r_min_ref_ohms / r_min_ohms).max(amp.i_b_floor_amperes)
}

/// Per-source power at a given bias current:
/// `P = static + multiplier * I_B * (v_dd - v_ss)`.
pub fn power_per_source(amp: &AmplifierScalingModel, i_b_amperes: f64) -> f64 {
    assert!(
        i_b_amperes >= amp.i_b_floor_amperes,
        "bias current below the usable floor"
    );
    amp.static_power_watts
        + amp.stage_current_multiplier * i_b_amperes * (amp.v_dd_volts - amp.v_ss_volts)
}

/// Integration budget: how many sources fit under the cooling power, and how
/// many dots they can bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceBudget {
    pub max_sources: u64,
    pub controllable_dots: u64,
}

/// Maximum number of sources under the scenario's cooling budget, with every
/// source sized for the technology's minimum resistance.
pub fn max_sources(scenario: &ScalingScenario) -> SourceBudget {
    let i_b = bias_current_for(&scenario.amp, scenario.tech.r_min_ohms);
    let power = power_per_source(&scenario.amp, i_b);
    let sources = (scenario.cooling_power_watts / power).floor() as u64;
    SourceBudget {
        max_sources: sources,
        controllable_dots: sources / scenario.gates_per_dot,
    }
}

/// Default resolution anchor: 10 mV with two feedback devices.
pub const BASE_RESOLUTION_VOLTS: f64 = 10.0e-3;
pub const BASE_RESOLUTION_N: u32 = 2;

/// Output-voltage resolution versus feedback-device count: halves per added
/// device through the anchor point.
pub fn resolution_for(n_memristors: u32, base_resolution_volts: f64, base_n: u32) -> f64 {
    assert!(n_memristors >= 1, "need at least one memristor");
    base_resolution_volts * 2.0f64.powi(base_n as i32 - n_memristors as i32)
}

/// Layout-area factor of the output stage: the wide output device needed
/// above 50 kOhm costs roughly 4x the footprint.
pub fn footprint_factor(r_min_ohms: f64) -> f64 {
    if r_min_ohms >= 50.0e3 {
        4.0
    } else {
        1.0
    }
}

/// One row of the feedback-resistance scaling scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub r_min_ohms: f64,
    pub bias_current_amperes: f64,
    pub power_per_source_watts: f64,
    pub max_sources: u64,
    pub controllable_dots: u64,
    pub footprint_factor: f64,
}

/// Evaluate the scenario across an ascending grid of minimum feedback
/// resistances.
pub fn scan_rmin(
    scenario: &ScalingScenario,
    grid_ohms: &[f64],
) -> Result<Vec<ScanRow>, ScalingError> {
    scenario.validate()?;
    if grid_ohms.is_empty() || grid_ohms.windows(2).any(|w| !(w[1] > w[0])) || !(grid_ohms[0] > 0.0)
    {
        return Err(ScalingError::BadGrid);
    }
    Ok(grid_ohms
        .iter()
        .map(|&r_min| {
            let i_b = bias_current_for(&scenario.amp, r_min);
            let power = power_per_source(&scenario.amp, i_b);
            let sources = (scenario.cooling_power_watts / power).floor() as u64;
            ScanRow {
                r_min_ohms: r_min,
                bias_current_amperes: i_b,
                power_per_source_watts: power,
                max_sources: sources,
                controllable_dots: sources / scenario.gates_per_dot,
                footprint_factor: footprint_factor(r_min),
            }
        })
        .collect())
}

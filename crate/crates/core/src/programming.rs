//! Closed-loop programming of a source bank: compute the common target
//! resistance, tune each companion device by read-write-verify, program the
//! balancing device against the measured companion conductances, and return
//! the bank to feedback mode.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitError, SourceBank, SwitchMatrixState};
use crate::device::{DeviceError, MemristorState, PulseSpec};

/// Parameters of the read-write-verify tuning loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneParams {
    /// Write-pulse width (s).
    pub write_width_seconds: f64,
    /// Linear amplitude increment per consecutive same-polarity pulse (V).
    pub amplitude_step_volts: f64,
    /// First write amplitude after a polarity change or a fresh start (V).
    pub start_amplitude_volts: f64,
    /// Ramp ceiling (V).
    pub max_amplitude_volts: f64,
    /// Read-pulse width per volt of read amplitude (s/V).
    pub read_width_seconds_per_volt: f64,
    /// Relative tolerance for companion devices.
    pub tolerance: f64,
    /// Tighter relative tolerance for the balancing device.
    pub balance_tolerance: f64,
    /// Number of verification reads that must all stay in tolerance.
    pub stability_reads: usize,
    /// Reads averaged per companion when measuring the conductances that
    /// feed the balancing equation.
    pub balance_input_reads: usize,
    /// Bound on read-(write|verify) loop passes per device.
    pub max_iterations: usize,
}

impl Default for TuneParams {
    fn default() -> Self {
        Self {
            write_width_seconds: 200e-9,
            amplitude_step_volts: 10e-3,
            start_amplitude_volts: 0.9,
            max_amplitude_volts: 2.5,
            read_width_seconds_per_volt: 10e-6,
            tolerance: 0.01,
            balance_tolerance: 0.005,
            stability_reads: 10,
            balance_input_reads: 20,
            max_iterations: 1000,
        }
    }
}

impl TuneParams {
    pub fn validate(&self) -> Result<(), ProgramError> {
        let mut problems = Vec::new();
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            problems.push("tolerance must be in (0, 1)");
        }
        if !(self.balance_tolerance > 0.0 && self.balance_tolerance < 1.0) {
            problems.push("balance_tolerance must be in (0, 1)");
        }
        if !(self.amplitude_step_volts > 0.0) {
            problems.push("amplitude_step_volts must be positive");
        }
        if self.max_iterations == 0 {
            problems.push("max_iterations must be positive");
        }
        if !(self.write_width_seconds > 0.0) {
            problems.push("write_width_seconds must be positive");
        }
        if !(self.read_width_seconds_per_volt > 0.0) {
            problems.push("read_width_seconds_per_volt must be positive");
        }
        if !(self.start_amplitude_volts > 0.0)
            || self.start_amplitude_volts > self.max_amplitude_volts
        {
            problems.push("need 0 < start_amplitude_volts <= max_amplitude_volts");
        }
        if let Some(first) = problems.first() {
            return Err(ProgramError::InvalidParams(first.to_string()));
        }
        Ok(())
    }
}

/// Which stage of the programming sequence an error refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramStage {
    /// Direct call on a single device, outside the full sequence.
    Standalone,
    Companion(usize),
    Balance,
}

impl std::fmt::Display for ProgramStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProgramStage::Standalone => write!(f, "standalone"),
            ProgramStage::Companion(i) => write!(f, "companion device {i}"),
            ProgramStage::Balance => write!(f, "balancing device"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error(
        "target voltage {v_target_volts} V and input voltage {v_in_volts} V have opposite \
         signs; unreachable with resistive feedback"
    )]
    SignMismatch {
        v_target_volts: f64,
        v_in_volts: f64,
    },
    #[error(
        "stage {stage}: required resistance {required_ohms:.1} ohm outside the programmable \
         window [{r_min_ohms:.1}, {r_max_ohms:.1}] ohm"
    )]
    UnreachableTarget {
        stage: ProgramStage,
        required_ohms: f64,
        r_min_ohms: f64,
        r_max_ohms: f64,
    },
    #[error(
        "companion devices over-programmed: summed conductance {sum_siemens:.3e} S leaves no \
         positive balance conductance against {required_siemens:.3e} S"
    )]
    OverProgrammed {
        sum_siemens: f64,
        required_siemens: f64,
    },
    #[error("invalid tuning parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

impl ProgramError {
    fn with_stage(self, stage: ProgramStage) -> Self {
        match self {
            ProgramError::UnreachableTarget {
                required_ohms,
                r_min_ohms,
                r_max_ohms,
                ..
            } => ProgramError::UnreachableTarget {
                stage,
                required_ohms,
                r_min_ohms,
                r_max_ohms,
            },
            other => other,
        }
    }
}

/// Role a device played during programming.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceRole {
    Companion,
    Balance,
}

/// Outcome of tuning a single device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceTuneReport {
    pub device_index: usize,
    pub role: DeviceRole,
    pub pulses_applied: usize,
    pub iterations: usize,
    pub reads: usize,
    /// Last measured resistance (ohms); the verified value on convergence.
    pub final_resistance_ohms: f64,
    /// |measured - target| / target at the end of the loop.
    pub relative_error: f64,
    pub converged: bool,
}

/// Aggregate record of one programming run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramReport {
    pub v_target_volts: f64,
    pub target_resistance_ohms: f64,
    pub balance_resistance_ohms: f64,
    pub devices: Vec<DeviceTuneReport>,
    pub total_iterations: usize,
    /// Accumulated pulse and read time (s); the wall-clock-equivalent cost.
    pub total_pulse_seconds: f64,
    pub converged: bool,
}

/// Common per-device target resistance for an output target `v_trg`:
/// `R_trg = n * R_in * v_trg / v_in`.
pub fn target_resistance(
    v_target_volts: f64,
    v_in_volts: f64,
    n_devices: usize,
    r_in_ohms: f64,
) -> Result<f64, ProgramError> {
    if v_in_volts == 0.0 || n_devices < 1 || !(r_in_ohms > 0.0) {
        return Err(ProgramError::InvalidParams(
            "need v_in != 0, n >= 1 and r_in > 0".into(),
        ));
    }
    let ratio = v_target_volts / v_in_volts;
    if !(ratio > 0.0) {
        return Err(ProgramError::SignMismatch {
            v_target_volts,
            v_in_volts,
        });
    }
    Ok(n_devices as f64 * r_in_ohms * ratio)
}

/// Resistance the last device must take to cancel the accumulated error of
/// its companions: `R_bal = (n / R_trg - sum_i G_i)^-1`.
pub fn balance_resistance(
    r_target_ohms: f64,
    programmed_conductances: &[f64],
    n_devices: usize,
) -> Result<f64, ProgramError> {
    if programmed_conductances.len() + 1 != n_devices {
        return Err(ProgramError::InvalidParams(format!(
            "expected {} companion conductances, got {}",
            n_devices - 1,
            programmed_conductances.len()
        )));
    }
    let required = n_devices as f64 / r_target_ohms;
    let sum: f64 = programmed_conductances.iter().sum();
    if !(required > sum) {
        return Err(ProgramError::OverProgrammed {
            sum_siemens: sum,
            required_siemens: required,
        });
    }
    Ok(1.0 / (required - sum))
}

fn ensure_reachable(
    device: &MemristorState,
    r_target_ohms: f64,
    stage: ProgramStage,
) -> Result<(), ProgramError> {
    let (g_min, g_max) = device.bounds_siemens();
    let g_target = 1.0 / r_target_ohms;
    if !(g_target >= g_min && g_target <= g_max) {
        return Err(ProgramError::UnreachableTarget {
            stage,
            required_ohms: r_target_ohms,
            r_min_ohms: 1.0 / g_max,
            r_max_ohms: 1.0 / g_min,
        });
    }
    Ok(())
}

/// Read-write-verify tuning of one device toward `r_target`.
///
/// Each loop pass reads once; a read inside the tolerance band triggers
/// `stability_reads` verification reads which must all stay in band,
/// otherwise tuning resumes with a fresh amplitude ramp. A read outside the
/// band fires one write pulse whose polarity pulls the resistance toward the
/// target (positive amplitude lowers resistance) and whose amplitude ramps
/// by `amplitude_step_volts` per consecutive same-polarity pulse, resetting
/// on polarity change. Exhausting `max_iterations` yields a non-converged
/// report, not an error.
pub fn tune_resistance(
    device: &mut MemristorState,
    r_target_ohms: f64,
    params: &TuneParams,
    v_read_volts: f64,
) -> Result<DeviceTuneReport, ProgramError> {
    params.validate()?;
    if !(r_target_ohms > 0.0) {
        return Err(ProgramError::InvalidParams(
            "target resistance must be positive".into(),
        ));
    }
    ensure_reachable(device, r_target_ohms, ProgramStage::Standalone)?;

    let read_width = params.read_width_seconds_per_volt * v_read_volts.abs();
    let tol_band = params.tolerance * r_target_ohms;
    let mut amplitude = params.start_amplitude_volts;
    let mut last_polarity: Option<i8> = None;
    let mut pulses = 0usize;
    let mut reads = 0usize;
    let mut last_measured = f64::NAN;

    for iteration in 1..=params.max_iterations {
        let measured = device.read_resistance(v_read_volts, read_width)?;
        reads += 1;
        last_measured = measured;

        if (measured - r_target_ohms).abs() <= tol_band {
            let mut stable = true;
            for _ in 0..params.stability_reads {
                let verify = device.read_resistance(v_read_volts, read_width)?;
                reads += 1;
                last_measured = verify;
                if (verify - r_target_ohms).abs() > tol_band {
                    stable = false;
                    break;
                }
            }
            if stable {
                return Ok(DeviceTuneReport {
                    device_index: 0,
                    role: DeviceRole::Companion,
                    pulses_applied: pulses,
                    iterations: iteration,
                    reads,
                    final_resistance_ohms: last_measured,
                    relative_error: (last_measured - r_target_ohms).abs() / r_target_ohms,
                    converged: true,
                });
            }
            // Verification failed: resume tuning with a fresh ramp.
            last_polarity = None;
            continue;
        }

        let polarity: i8 = if measured > r_target_ohms { 1 } else { -1 };
        amplitude = if last_polarity == Some(polarity) {
            (amplitude + params.amplitude_step_volts).min(params.max_amplitude_volts)
        } else {
            params.start_amplitude_volts
        };
        device.apply_write_pulse(&PulseSpec {
            amplitude_volts: f64::from(polarity) * amplitude,
            width_seconds: params.write_width_seconds,
        })?;
        pulses += 1;
        last_polarity = Some(polarity);
    }

    Ok(DeviceTuneReport {
        device_index: 0,
        role: DeviceRole::Companion,
        pulses_applied: pulses,
        iterations: params.max_iterations,
        reads,
        final_resistance_ohms: last_measured,
        relative_error: (last_measured - r_target_ohms).abs() / r_target_ohms,
        converged: false,
    })
}

/// Program a bank to the target output voltage following the full sequence:
/// companions to `R_trg` at the companion tolerance, then the last device to
/// the balancing resistance at the tighter balance tolerance, reading at
/// `v_read = v_trg - v_in`. The bank is returned to feedback mode on every
/// exit path, including errors.
pub fn program_source(
    bank: &mut SourceBank,
    v_target_volts: f64,
    params: &TuneParams,
) -> Result<ProgramReport, ProgramError> {
    let result = program_inner(bank, v_target_volts, params);
    // Switch discipline: the loop is always closed again, even on error.
    let _ = bank.set_switch_state(SwitchMatrixState::feedback());
    result
}

fn program_inner(
    bank: &mut SourceBank,
    v_target_volts: f64,
    params: &TuneParams,
) -> Result<ProgramReport, ProgramError> {
    params.validate()?;
    let n = bank.n_memristors();
    let r_target = target_resistance(v_target_volts, bank.v_in_volts, n, bank.r_in_ohms)?;
    let v_read = v_target_volts - bank.v_in_volts;
    if v_read == 0.0 {
        return Err(ProgramError::InvalidParams(
            "read amplitude v_trg - v_in is zero; choose a different target or input".into(),
        ));
    }
    // Reachability of the common target, checked before any pulse.
    for i in 0..n {
        ensure_reachable(bank.device(i)?, r_target, ProgramStage::Companion(i))?;
    }

    let read_width = params.read_width_seconds_per_volt * v_read.abs();
    let mut reports = Vec::with_capacity(n);
    let mut measured_conductances = Vec::with_capacity(n - 1);
    let mut total_iterations = 0usize;
    let mut total_pulse_seconds = 0.0;

    for i in 0..n - 1 {
        bank.set_switch_state(SwitchMatrixState::program(i))?;
        let mut report = tune_resistance(bank.device_mut(i)?, r_target, params, v_read)
            .map_err(|e| e.with_stage(ProgramStage::Companion(i)))?;
        report.device_index = i;
        report.role = DeviceRole::Companion;
        total_iterations += report.iterations;
        total_pulse_seconds += report.pulse_seconds_estimate(params, v_read);
        // Measure the programmed conductance that feeds the balancing
        // equation, averaging several reads as the physical flow would.
        let device = bank.device_mut(i)?;
        let mut acc = 0.0;
        for _ in 0..params.balance_input_reads {
            acc += 1.0 / device.read_resistance(v_read, read_width)?;
            total_pulse_seconds += read_width;
        }
        measured_conductances.push(acc / params.balance_input_reads as f64);
        reports.push(report);
    }

    let r_balance = balance_resistance(r_target, &measured_conductances, n)?;
    ensure_reachable(bank.device(n - 1)?, r_balance, ProgramStage::Balance)?;

    bank.set_switch_state(SwitchMatrixState::program(n - 1))?;
    let balance_params = TuneParams {
        tolerance: params.balance_tolerance,
        ..params.clone()
    };
    let mut report = tune_resistance(bank.device_mut(n - 1)?, r_balance, &balance_params, v_read)
        .map_err(|e| e.with_stage(ProgramStage::Balance))?;
    report.device_index = n - 1;
    report.role = DeviceRole::Balance;
    total_iterations += report.iterations;
    total_pulse_seconds += report.pulse_seconds_estimate(params, v_read);
    reports.push(report);

    bank.set_switch_state(SwitchMatrixState::feedback())?;
    let converged = reports.iter().all(|r| r.converged);
    Ok(ProgramReport {
        v_target_volts,
        target_resistance_ohms: r_target,
        balance_resistance_ohms: r_balance,
        devices: reports,
        total_iterations,
        total_pulse_seconds,
        converged,
    })
}

impl DeviceTuneReport {
    fn pulse_seconds_estimate(&self, params: &TuneParams, v_read_volts: f64) -> f64 {
        self.pulses_applied as f64 * params.write_width_seconds
            + self.reads as f64 * params.read_width_seconds_per_volt * v_read_volts.abs()
    }
}

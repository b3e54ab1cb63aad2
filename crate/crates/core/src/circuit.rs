//! One DC source: N memristors in the feedback loop of an inverting
//! amplifier stage, an input resistor, and the switch matrix that either
//! shorts all devices into the loop or routes one of them to the pulse
//! unit for programming.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{AmplifierModel, DeviceError, DeviceSpec, MemristorState, TemperatureRegime};
use crate::rng::{Stream, STREAM_BANK_NOISE, STREAM_DEVICE};

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("operation requires feedback mode but the loop is open (mode = {0})")]
    LoopOpen(String),
    #[error("switch index {index} out of range for {n} devices")]
    SwitchIndexOutOfRange { index: usize, n: usize },
    #[error("feedback mode requires the top electrode on the loop")]
    TopElectrodeMismatch,
    #[error("invalid bank parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid sampling window: {0}")]
    InvalidTiming(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopElectrode {
    /// Common top electrode shorted into the feedback loop.
    Loop,
    /// Common top electrode routed to the pulse/measure unit.
    Apmu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchMode {
    /// All bottom electrodes shorted; devices act as the feedback resistance.
    Feedback,
    /// One device isolated for programming.
    Program { device: usize },
}

/// State of the N+1 analog switches around the memristor bank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchMatrixState {
    pub mode: SwitchMode,
    pub top_electrode: TopElectrode,
}

impl SwitchMatrixState {
    pub fn feedback() -> Self {
        Self {
            mode: SwitchMode::Feedback,
            top_electrode: TopElectrode::Loop,
        }
    }

    pub fn program(device: usize) -> Self {
        Self {
            mode: SwitchMode::Program { device },
            top_electrode: TopElectrode::Apmu,
        }
    }

    pub fn validate(&self, n_devices: usize) -> Result<(), CircuitError> {
        match self.mode {
            SwitchMode::Feedback => {
                if self.top_electrode != TopElectrode::Loop {
                    return Err(CircuitError::TopElectrodeMismatch);
                }
            }
            SwitchMode::Program { device } => {
                if device >= n_devices {
                    return Err(CircuitError::SwitchIndexOutOfRange {
                        index: device,
                        n: n_devices,
                    });
                }
            }
        }
        Ok(())
    }

    fn describe(&self) -> String {
        match self.mode {
            SwitchMode::Feedback => "feedback".to_string(),
            SwitchMode::Program { device } => format!("program({device})"),
        }
    }
}

/// One output-voltage measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSample {
    pub timestamp_seconds: f64,
    pub v_out_volts: f64,
    pub supply_current_amperes: f64,
}

/// Power dissipated by one source, split into the amplifier supply term and
/// the feedback-network term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerDraw {
    pub amplifier_watts: f64,
    pub feedback_watts: f64,
    pub total_watts: f64,
}

/// Buildable description of a source bank; `instantiate` turns it into a
/// live [`SourceBank`] with deterministically derived noise streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankSpec {
    pub n_memristors: usize,
    pub r_in_ohms: f64,
    pub v_in_volts: f64,
    pub device: DeviceSpec,
    pub amplifier: AmplifierModel,
    pub regime: TemperatureRegime,
}

impl BankSpec {
    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.n_memristors < 1 {
            return Err(CircuitError::InvalidParameter(
                "a bank needs at least one memristor".into(),
            ));
        }
        if !(self.r_in_ohms > 0.0) {
            return Err(CircuitError::InvalidParameter(
                "r_in_ohms must be positive".into(),
            ));
        }
        if !self.v_in_volts.is_finite() {
            return Err(CircuitError::InvalidParameter(
                "v_in_volts must be finite".into(),
            ));
        }
        if self.v_in_volts.abs() > self.amplifier.v_dd_volts.max(-self.amplifier.v_ss_volts) {
            return Err(CircuitError::InvalidParameter(
                "v_in_volts outside the amplifier input range".into(),
            ));
        }
        self.device.validate()?;
        self.amplifier.validate()?;
        self.regime.validate()?;
        Ok(())
    }

    /// Build a live bank. Device `i` of replication `r` draws from the
    /// stream at path `[domain, r, STREAM_DEVICE, i]`; output-equivalent
    /// noise draws from `[domain, r, STREAM_BANK_NOISE, 0]`.
    pub fn instantiate(
        &self,
        master_seed: u64,
        domain: u64,
        replication: u64,
    ) -> Result<SourceBank, CircuitError> {
        self.validate()?;
        let memristors = (0..self.n_memristors)
            .map(|i| {
                let stream =
                    Stream::derive(master_seed, &[domain, replication, STREAM_DEVICE, i as u64]);
                MemristorState::from_spec(&self.device, stream)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SourceBank {
            memristors,
            r_in_ohms: self.r_in_ohms,
            v_in_volts: self.v_in_volts,
            amplifier: self.amplifier.clone(),
            regime: self.regime,
            switch_state: SwitchMatrixState::feedback(),
            noise_stream: Stream::derive(master_seed, &[domain, replication, STREAM_BANK_NOISE, 0]),
        })
    }
}

/// A live DC source: devices, input resistor, amplifier, and switch state.
#[derive(Clone, Debug)]
pub struct SourceBank {
    memristors: Vec<MemristorState>,
    pub r_in_ohms: f64,
    pub v_in_volts: f64,
    pub amplifier: AmplifierModel,
    pub regime: TemperatureRegime,
    switch_state: SwitchMatrixState,
    noise_stream: Stream,
}

/// Iterations for the bias-dependent operating point when the read
/// nonlinearity is enabled.
const OPERATING_POINT_ITERATIONS: usize = 12;

impl SourceBank {
    pub fn n_memristors(&self) -> usize {
        self.memristors.len()
    }

    pub fn switch_state(&self) -> SwitchMatrixState {
        self.switch_state
    }

    pub fn device(&self, index: usize) -> Result<&MemristorState, CircuitError> {
        self.memristors
            .get(index)
            .ok_or(CircuitError::SwitchIndexOutOfRange {
                index,
                n: self.memristors.len(),
            })
    }

    pub fn device_mut(&mut self, index: usize) -> Result<&mut MemristorState, CircuitError> {
        let n = self.memristors.len();
        self.memristors
            .get_mut(index)
            .ok_or(CircuitError::SwitchIndexOutOfRange { index, n })
    }

    pub fn devices(&self) -> &[MemristorState] {
        &self.memristors
    }

    /// Replace the switch-matrix state. Device states are untouched.
    pub fn set_switch_state(&mut self, new: SwitchMatrixState) -> Result<(), CircuitError> {
        new.validate(self.memristors.len())?;
        self.switch_state = new;
        Ok(())
    }

    fn ensure_feedback(&self) -> Result<(), CircuitError> {
        if self.switch_state.mode != SwitchMode::Feedback {
            return Err(CircuitError::LoopOpen(self.switch_state.describe()));
        }
        Ok(())
    }

    /// Gain factor applied by the loop at the configured temperature and
    /// supplies.
    pub fn effective_gain(&self) -> f64 {
        self.amplifier
            .effective_gain_factor(self.regime.temperature_kelvin)
    }

    /// Total feedback resistance `(sum_i G_i)^-1` over the true conductances.
    pub fn feedback_resistance_ohms(&self) -> Result<f64, CircuitError> {
        self.ensure_feedback()?;
        Ok(1.0 / self.total_conductance_at(0.0, false))
    }

    fn total_conductance_at(&self, v_bias: f64, bias_dependent: bool) -> f64 {
        self.memristors
            .iter()
            .map(|m| {
                if bias_dependent {
                    m.conductance_at_bias(v_bias)
                } else {
                    m.conductance_siemens()
                }
            })
            .sum()
    }

    fn has_bias_dependence(&self) -> bool {
        self.memristors
            .iter()
            .any(|m| m.spec().iv_beta_per_volt2 != 0.0)
    }

    /// Solve the DC operating point and return the loop resistance at the
    /// settled feedback bias (equal to the small-signal parallel resistance
    /// when the nonlinearity knob is off).
    fn operating_loop_resistance(&self) -> f64 {
        if !self.has_bias_dependence() {
            return 1.0 / self.total_conductance_at(0.0, false);
        }
        let gain = self.effective_gain();
        let mut v_fb = 0.0;
        let mut r_mem = 1.0 / self.total_conductance_at(v_fb, true);
        for _ in 0..OPERATING_POINT_ITERATIONS {
            let v_out = self.clamp_to_rails(
                gain * (r_mem / self.r_in_ohms) * self.v_in_volts + self.amplifier.offset_volts,
            );
            let next = v_out - self.v_in_volts;
            if (next - v_fb).abs() < 1e-15 {
                break;
            }
            v_fb = next;
            r_mem = 1.0 / self.total_conductance_at(v_fb, true);
        }
        r_mem
    }

    fn clamp_to_rails(&self, v: f64) -> f64 {
        v.clamp(
            self.amplifier.v_ss_volts + self.amplifier.output_headroom_volts,
            self.amplifier.v_dd_volts - self.amplifier.output_headroom_volts,
        )
    }

    fn sample_at(&self, timestamp_seconds: f64, noise_z: Option<f64>) -> OutputSample {
        let gain = self.effective_gain();
        let r_mem = self.operating_loop_resistance();
        let r_used = match noise_z {
            Some(z) => {
                // Bank-level read-equivalent noise: one measurement chain
                // sees the whole feedback network, so a single draw scales
                // the parallel resistance with the devices' relative noise.
                let n = self.memristors.len() as f64;
                let alpha = self
                    .memristors
                    .iter()
                    .map(|m| m.spec().read_noise_alpha)
                    .sum::<f64>()
                    / n;
                let floor = self
                    .memristors
                    .iter()
                    .map(|m| m.spec().read_noise_floor_ohms)
                    .sum::<f64>()
                    / n;
                r_mem + (alpha * r_mem + floor) * z
            }
            None => r_mem,
        };
        let v_out = self.clamp_to_rails(
            gain * (r_used / self.r_in_ohms) * self.v_in_volts + self.amplifier.offset_volts,
        );
        let supply_current = self
            .amplifier
            .idle_current_amperes(self.regime.temperature_kelvin)
            + (v_out - self.v_in_volts).abs() / r_used;
        OutputSample {
            timestamp_seconds,
            v_out_volts: v_out,
            supply_current_amperes: supply_current,
        }
    }

    /// Noise-free output voltage at the present device states:
    /// `v_out = clamp(gain * (R_mem / R_in) * v_in + offset)`.
    pub fn output_voltage(&self) -> Result<OutputSample, CircuitError> {
        self.ensure_feedback()?;
        Ok(self.sample_at(0.0, None))
    }

    /// Sample the output every `dt` seconds for `duration` seconds,
    /// advancing retention drift between samples and adding one
    /// read-equivalent noise draw per sample.
    pub fn measure_output(
        &mut self,
        duration_seconds: f64,
        dt_seconds: f64,
    ) -> Result<Vec<OutputSample>, CircuitError> {
        self.ensure_feedback()?;
        if !(dt_seconds > 0.0) || duration_seconds < dt_seconds {
            return Err(CircuitError::InvalidTiming(format!(
                "need duration >= dt > 0, got duration = {duration_seconds} s, dt = {dt_seconds} s"
            )));
        }
        let steps = (duration_seconds / dt_seconds + 1e-9).floor() as usize;
        let mut trace = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            if k > 0 {
                for device in &mut self.memristors {
                    device.drift_step(dt_seconds);
                }
            }
            let z = self.noise_stream.standard_normal();
            trace.push(self.sample_at(k as f64 * dt_seconds, Some(z)));
        }
        Ok(trace)
    }

    /// Power drawn from the supplies plus the dissipation in the feedback
    /// network, reported separately and summed.
    pub fn power_draw(&self) -> Result<PowerDraw, CircuitError> {
        self.ensure_feedback()?;
        let sample = self.sample_at(0.0, None);
        let r_mem = self.operating_loop_resistance();
        let amplifier_watts =
            (self.amplifier.v_dd_volts - self.amplifier.v_ss_volts) * sample.supply_current_amperes;
        let feedback_watts = (sample.v_out_volts - self.v_in_volts).powi(2) / r_mem;
        Ok(PowerDraw {
            amplifier_watts,
            feedback_watts,
            total_watts: amplifier_watts + feedback_watts,
        })
    }
}

//! Stochastic behavioral models of a single memristor and of the op-amp's
//! DC characteristics versus temperature.
//!
//! The memristor model is deliberately simple: writes move conductance
//! linearly above a voltage threshold with multiplicative cycle-to-cycle
//! noise, reads return the true resistance corrupted by relative Gaussian
//! noise, and retention loss is a deterministic relative drift. All model
//! parameters are calibration knobs, not physics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Stream;

/// Default ceiling on write-pulse amplitude magnitude.
pub const DEFAULT_MAX_WRITE_VOLTS: f64 = 3.0;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid write pulse: {0}")]
    InvalidPulse(String),
    #[error("read voltage must be nonzero")]
    ZeroReadVoltage,
    #[error("read pulse width must be positive, got {0} s")]
    NonPositiveReadWidth(f64),
    #[error("invalid device parameter: {0}")]
    InvalidParameter(String),
}

/// A single programming pulse. The sign of the amplitude selects polarity:
/// positive amplitude increases conductance (lowers resistance), negative
/// amplitude decreases it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub amplitude_volts: f64,
    pub width_seconds: f64,
}

impl PulseSpec {
    pub fn validate(&self, max_write_volts: f64) -> Result<(), DeviceError> {
        if !(self.width_seconds > 0.0) {
            return Err(DeviceError::InvalidPulse(format!(
                "width must be positive, got {} s",
                self.width_seconds
            )));
        }
        if !(self.amplitude_volts.abs() <= max_write_volts) {
            return Err(DeviceError::InvalidPulse(format!(
                "|amplitude| = {} V exceeds the {} V write limit",
                self.amplitude_volts.abs(),
                max_write_volts
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    Room,
    Cryo,
    Custom,
}

/// Operating-temperature regime of a source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureRegime {
    pub temperature_kelvin: f64,
    pub label: RegimeLabel,
}

impl TemperatureRegime {
    pub fn room() -> Self {
        Self {
            temperature_kelvin: 300.0,
            label: RegimeLabel::Room,
        }
    }

    pub fn cryo() -> Self {
        Self {
            temperature_kelvin: 1.2,
            label: RegimeLabel::Cryo,
        }
    }

    pub fn custom(temperature_kelvin: f64) -> Self {
        Self {
            temperature_kelvin,
            label: RegimeLabel::Custom,
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.temperature_kelvin > 0.0) {
            return Err(DeviceError::InvalidParameter(format!(
                "temperature must be positive, got {} K",
                self.temperature_kelvin
            )));
        }
        Ok(())
    }
}

/// Stochastic-model parameters of one memristor, without live state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    /// Lower conductance bound of the programmable window (S).
    pub g_min_siemens: f64,
    /// Upper conductance bound of the programmable window (S).
    pub g_max_siemens: f64,
    /// Conductance right after forming/reset (S).
    pub initial_conductance_siemens: f64,
    /// Conductance moved per volt of over-threshold write amplitude (S/V).
    pub write_gain_siemens_per_volt: f64,
    /// Write threshold: pulses at or below this amplitude do nothing (V).
    pub write_threshold_volts: f64,
    /// Relative std of the cycle-to-cycle write noise.
    pub c2c_sigma: f64,
    /// Relative std of the read noise (resistance-proportional term).
    pub read_noise_alpha: f64,
    /// Additive read-noise floor (ohms). Calibrated to zero by default.
    pub read_noise_floor_ohms: f64,
    /// Relative conductance loss per second; positive means resistance
    /// grows over time.
    pub drift_rate_per_second: f64,
    /// Quadratic bias dependence of the measured conductance (1/V^2).
    /// Zero disables the I-V nonlinearity.
    pub iv_beta_per_volt2: f64,
    /// Maximum accepted write amplitude magnitude (V).
    pub max_write_volts: f64,
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.g_min_siemens > 0.0) {
            return Err(DeviceError::InvalidParameter(
                "g_min_siemens must be positive".into(),
            ));
        }
        if !(self.g_max_siemens >= self.g_min_siemens) {
            return Err(DeviceError::InvalidParameter(
                "g_max_siemens must be >= g_min_siemens".into(),
            ));
        }
        if !(self.initial_conductance_siemens >= self.g_min_siemens
            && self.initial_conductance_siemens <= self.g_max_siemens)
        {
            return Err(DeviceError::InvalidParameter(
                "initial conductance must lie within [g_min, g_max]".into(),
            ));
        }
        if !(self.c2c_sigma >= 0.0) {
            return Err(DeviceError::InvalidParameter(
                "c2c_sigma must be >= 0".into(),
            ));
        }
        if !(self.read_noise_alpha >= 0.0) {
            return Err(DeviceError::InvalidParameter(
                "read_noise_alpha must be >= 0".into(),
            ));
        }
        if !(self.read_noise_floor_ohms >= 0.0) {
            return Err(DeviceError::InvalidParameter(
                "read_noise_floor_ohms must be >= 0".into(),
            ));
        }
        if !(self.write_gain_siemens_per_volt >= 0.0) {
            return Err(DeviceError::InvalidParameter(
                "write_gain_siemens_per_volt must be >= 0".into(),
            ));
        }
        if !(self.max_write_volts > 0.0) {
            return Err(DeviceError::InvalidParameter(
                "max_write_volts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Live state of one memristor: true conductance plus its noise stream.
#[derive(Clone, Debug)]
pub struct MemristorState {
    conductance_siemens: f64,
    spec: DeviceSpec,
    stream: Stream,
}

impl MemristorState {
    pub fn from_spec(spec: &DeviceSpec, stream: Stream) -> Result<Self, DeviceError> {
        spec.validate()?;
        Ok(Self {
            conductance_siemens: spec.initial_conductance_siemens,
            spec: spec.clone(),
            stream,
        })
    }

    pub fn spec(&self) -> &DeviceSpec {
        &self.spec
    }

    /// True small-signal conductance (S).
    pub fn conductance_siemens(&self) -> f64 {
        self.conductance_siemens
    }

    /// True small-signal resistance (ohms).
    pub fn resistance_ohms(&self) -> f64 {
        1.0 / self.conductance_siemens
    }

    pub fn bounds_siemens(&self) -> (f64, f64) {
        (self.spec.g_min_siemens, self.spec.g_max_siemens)
    }

    /// Conductance seen at a given bias; differs from the small-signal value
    /// only when the I-V nonlinearity knob is enabled.
    pub fn conductance_at_bias(&self, v_bias_volts: f64) -> f64 {
        self.conductance_siemens * (1.0 + self.spec.iv_beta_per_volt2 * v_bias_volts * v_bias_volts)
    }

    /// Force the state to a known conductance within the programmable window.
    pub fn set_conductance_siemens(&mut self, conductance: f64) -> Result<(), DeviceError> {
        if !(conductance >= self.spec.g_min_siemens && conductance <= self.spec.g_max_siemens) {
            return Err(DeviceError::InvalidParameter(format!(
                "conductance {} S outside [{}, {}] S",
                conductance, self.spec.g_min_siemens, self.spec.g_max_siemens
            )));
        }
        self.conductance_siemens = conductance;
        Ok(())
    }

    /// Apply one write pulse. Conductance moves by
    /// `sign(A) * k_w * max(0, |A| - v_th) * (1 + xi)` clamped to the window,
    /// with `xi` drawn from `N(0, c2c_sigma)`. An invalid pulse is rejected
    /// with no state change.
    pub fn apply_write_pulse(&mut self, pulse: &PulseSpec) -> Result<(), DeviceError> {
        pulse.validate(self.spec.max_write_volts)?;
        let over = pulse.amplitude_volts.abs() - self.spec.write_threshold_volts;
        let step = self.spec.write_gain_siemens_per_volt * over.max(0.0);
        if step > 0.0 {
            let xi = self.stream.standard_normal();
            let delta = pulse.amplitude_volts.signum() * step * (1.0 + self.spec.c2c_sigma * xi);
            self.conductance_siemens = (self.conductance_siemens + delta)
                .clamp(self.spec.g_min_siemens, self.spec.g_max_siemens);
        }
        Ok(())
    }

    /// One measurement of the resistance at the given read amplitude.
    /// Returns `R * (1 + alpha * nu) + floor * nu` with `nu ~ N(0, 1)`;
    /// consumes exactly one draw and never modifies the true conductance.
    pub fn read_resistance(
        &mut self,
        v_read_volts: f64,
        width_seconds: f64,
    ) -> Result<f64, DeviceError> {
        if v_read_volts == 0.0 {
            return Err(DeviceError::ZeroReadVoltage);
        }
        if !(width_seconds > 0.0) {
            return Err(DeviceError::NonPositiveReadWidth(width_seconds));
        }
        let r_true = 1.0 / self.conductance_at_bias(v_read_volts);
        let nu = self.stream.standard_normal();
        Ok(r_true + (self.spec.read_noise_alpha * r_true + self.spec.read_noise_floor_ohms) * nu)
    }

    /// Advance retention drift by `dt` seconds:
    /// `G' = clamp(G * (1 - drift_rate * dt))`.
    pub fn drift_step(&mut self, dt_seconds: f64) {
        assert!(dt_seconds >= 0.0, "drift dt must be nonnegative");
        if dt_seconds == 0.0 || self.spec.drift_rate_per_second == 0.0 {
            return;
        }
        self.conductance_siemens = (self.conductance_siemens
            * (1.0 - self.spec.drift_rate_per_second * dt_seconds))
            .clamp(self.spec.g_min_siemens, self.spec.g_max_siemens);
    }
}

/// DC behavioral model of the op-amp: temperature-indexed closed-loop gain
/// realization factor, idle supply current, output offset, and rails.
///
/// The gain factor is normalized so that the room-temperature value is 1.
/// Below `gain_plateau_below_kelvin` both gain and idle current sit on their
/// cryogenic plateaus; between anchors both interpolate linearly in log(T).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifierModel {
    /// Closed-loop gain of the reference characterization fixture.
    pub nominal_closed_loop_gain: f64,
    /// `(temperature K, gain realization factor)` anchors, ascending in T.
    pub gain_anchors: Vec<(f64, f64)>,
    /// Below this temperature the gain factor plateaus at the first anchor.
    pub gain_plateau_below_kelvin: f64,
    /// Output offset added after the gain stage (V).
    pub offset_volts: f64,
    /// `(temperature K, idle supply current A)` anchors, ascending in T.
    pub idle_anchors: Vec<(f64, f64)>,
    pub v_dd_volts: f64,
    pub v_ss_volts: f64,
    /// Output stays this far away from each rail (V).
    pub output_headroom_volts: f64,
    /// Supply magnitude at which the gain anchors were characterized (V).
    pub supply_reference_volts: f64,
    /// Relative gain recovered per volt of supply boost above the reference.
    pub supply_gain_slope_per_volt: f64,
}

impl AmplifierModel {
    /// Behavioral model of the AD8605-based TIA used on the prototype board,
    /// with dual +/-2.7 V supplies.
    pub fn ad8605() -> Self {
        Self {
            nominal_closed_loop_gain: 2.0,
            // Gain plateaus at 1.68/2.0 = 0.84 below 4.2 K; back to nominal
            // at room temperature.
            gain_anchors: vec![(4.2, 0.84), (300.0, 1.0)],
            gain_plateau_below_kelvin: 4.2,
            offset_volts: 8.0e-3,
            // Idle current: 1.4 mA plateau below 4.2 K, 350 uA minimum near
            // 77 K, 1 mA at room temperature.
            idle_anchors: vec![(4.2, 1.4e-3), (77.0, 350.0e-6), (300.0, 1.0e-3)],
            v_dd_volts: 2.7,
            v_ss_volts: -2.7,
            output_headroom_volts: 0.2,
            supply_reference_volts: 2.7,
            // Calibrated so +/-3.0 V supplies recover the observed fraction
            // of the cryogenic gain loss: 0.84 * (1 + slope * 0.3) = 0.939.
            supply_gain_slope_per_volt: 11.0 / 28.0,
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.gain_anchors.is_empty() || self.idle_anchors.is_empty() {
            return Err(DeviceError::InvalidParameter(
                "amplifier anchor tables must be non-empty".into(),
            ));
        }
        for table in [&self.gain_anchors, &self.idle_anchors] {
            for pair in table.windows(2) {
                if !(pair[1].0 > pair[0].0) {
                    return Err(DeviceError::InvalidParameter(
                        "anchor temperatures must ascend".into(),
                    ));
                }
            }
        }
        for &(t, eta) in &self.gain_anchors {
            if !(t > 0.0) || !(eta > 0.0 && eta <= 1.05) {
                return Err(DeviceError::InvalidParameter(format!(
                    "gain factor {eta} at {t} K outside (0, 1.05]"
                )));
            }
        }
        for &(t, i) in &self.idle_anchors {
            if !(t > 0.0) || !(i > 0.0) {
                return Err(DeviceError::InvalidParameter(format!(
                    "idle current {i} A at {t} K must be positive"
                )));
            }
        }
        if !(self.v_dd_volts > self.v_ss_volts) {
            return Err(DeviceError::InvalidParameter(
                "v_dd must exceed v_ss".into(),
            ));
        }
        if !(self.output_headroom_volts >= 0.0) {
            return Err(DeviceError::InvalidParameter(
                "output headroom must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Gain realization factor at temperature `T`: the plateau value below
    /// the plateau knee, log-linear interpolation between anchors above it,
    /// clamped at the last anchor.
    pub fn gain_factor(&self, t_kelvin: f64) -> f64 {
        log_temperature_interp(&self.gain_anchors, self.gain_plateau_below_kelvin, t_kelvin)
    }

    /// Idle supply current at temperature `T`, piecewise log-linear through
    /// the anchor table.
    pub fn idle_current_amperes(&self, t_kelvin: f64) -> f64 {
        log_temperature_interp(&self.idle_anchors, self.idle_anchors[0].0, t_kelvin)
    }

    /// Multiplicative gain compensation from running the supplies above the
    /// characterization reference; 1.0 at the reference supply.
    pub fn supply_compensation(&self) -> f64 {
        1.0 + self.supply_gain_slope_per_volt * (self.v_dd_volts - self.supply_reference_volts)
    }

    /// Gain factor actually applied by the closed loop at temperature `T`
    /// under the configured supplies.
    pub fn effective_gain_factor(&self, t_kelvin: f64) -> f64 {
        self.gain_factor(t_kelvin) * self.supply_compensation()
    }
}

/// Interpolate linearly in ln(T) through `(T, value)` anchors; constant below
/// `plateau_below` (and below the first anchor) and above the last anchor.
fn log_temperature_interp(anchors: &[(f64, f64)], plateau_below: f64, t_kelvin: f64) -> f64 {
    assert!(t_kelvin > 0.0, "temperature must be positive");
    let first = anchors[0];
    let last = anchors[anchors.len() - 1];
    if t_kelvin <= plateau_below || t_kelvin <= first.0 {
        return first.1;
    }
    if t_kelvin >= last.0 {
        return last.1;
    }
    for pair in anchors.windows(2) {
        let (t0, v0) = pair[0];
        let (t1, v1) = pair[1];
        if t_kelvin <= t1 {
            let f = (t_kelvin.ln() - t0.ln()) / (t1.ln() - t0.ln());
            return v0 + (v1 - v0) * f;
        }
    }
    last.1
}

//! Measurement campaigns over a source bank: replicated DC sweeps with
//! resolution-error analysis, and stability traces with drift fits and
//! noise statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{BankSpec, CircuitError, OutputSample, SourceBank};
use crate::programming::{program_source, target_resistance, ProgramError, TuneParams};
use crate::rng::DOMAIN_SWEEP;
use crate::stats::{self, FitError, JARQUE_BERA_CRIT_5PCT};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid sweep specification: {0}")]
    InvalidSpec(String),
    #[error(
        "sweep target {target_volts} V unreachable: requires {required_ohms:.1} ohm per device, \
         window is [{r_min_ohms:.1}, {r_max_ohms:.1}] ohm"
    )]
    UnreachableTarget {
        target_volts: f64,
        required_ohms: f64,
        r_min_ohms: f64,
        r_max_ohms: f64,
    },
    #[error("programming failed at target {target_volts} V (replication {replication}): {source}")]
    Programming {
        target_volts: f64,
        replication: usize,
        #[source]
        source: ProgramError,
    },
    #[error("resolution error undefined: {0}")]
    ResolutionError(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// How the amplifier offset is removed from recorded outputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetCorrection {
    /// Leave raw outputs untouched.
    None,
    /// Subtract the model's known offset.
    #[default]
    KnownModel,
    /// Estimate the offset as the mean residual at the mid-range target.
    EstimateMidRange,
}

/// A replicated DC sweep campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub v_start_volts: f64,
    pub v_stop_volts: f64,
    pub resolution_volts: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub offset_correction: OffsetCorrection,
    pub bank: BankSpec,
    pub tune: TuneParams,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.v_stop_volts > self.v_start_volts) {
            return Err(ExperimentError::InvalidSpec(
                "v_stop must exceed v_start".into(),
            ));
        }
        if !(self.resolution_volts > 0.0) {
            return Err(ExperimentError::InvalidSpec(
                "resolution must be positive".into(),
            ));
        }
        let steps = (self.v_stop_volts - self.v_start_volts) / self.resolution_volts;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(ExperimentError::InvalidSpec(format!(
                "sweep span is not an integer number of steps ({steps})"
            )));
        }
        if self.replications < 1 {
            return Err(ExperimentError::InvalidSpec(
                "need at least one replication".into(),
            ));
        }
        Ok(())
    }

    /// The programmed target voltages, `v_start + k * resolution`.
    pub fn targets(&self) -> Vec<f64> {
        let steps =
            ((self.v_stop_volts - self.v_start_volts) / self.resolution_volts).round() as usize;
        (0..=steps)
            .map(|k| self.v_start_volts + k as f64 * self.resolution_volts)
            .collect()
    }
}

/// Aggregated result of a sweep campaign. `samples[k][r]` is the
/// offset-corrected output of replication `r` at target `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub targets_volts: Vec<f64>,
    pub mean_volts: Vec<f64>,
    pub std_volts: Vec<f64>,
    pub mre_percent: Vec<f64>,
    pub samples_volts: Vec<Vec<f64>>,
    /// Fitted slope of mean achieved output versus target.
    pub slope: f64,
    pub intercept_volts: f64,
}

impl SweepResult {
    pub fn mean_mre_percent(&self) -> f64 {
        stats::mean(&self.mre_percent)
    }
}

/// Mean resolution error per target, in percent:
/// `MRE = 100 * std(V) / (slope * resolution)`, with the sample standard
/// deviation taken over replications.
pub fn compute_mre(
    samples: &[Vec<f64>],
    slope: f64,
    resolution_volts: f64,
) -> Result<Vec<f64>, ExperimentError> {
    if slope == 0.0 {
        return Err(ExperimentError::ResolutionError(
            "fitted slope is zero".into(),
        ));
    }
    if !(resolution_volts > 0.0) {
        return Err(ExperimentError::ResolutionError(
            "resolution must be positive".into(),
        ));
    }
    samples
        .iter()
        .map(|reps| {
            if reps.len() < 2 {
                return Err(ExperimentError::ResolutionError(
                    "need at least two replications per target".into(),
                ));
            }
            Ok(100.0 * stats::sample_std(reps) / (slope * resolution_volts))
        })
        .collect()
}

/// Run the full sweep campaign: for every replication, re-seed the bank and
/// program each target in order, recording the settled output voltage; then
/// aggregate means, stds, the linear fit of mean versus target, and the
/// per-target resolution error.
pub fn run_dc_sweep(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    spec.validate()?;
    let targets = spec.targets();

    // Reachability of every target, before any simulation work.
    for &target in &targets {
        let required = target_resistance(
            target,
            spec.bank.v_in_volts,
            spec.bank.n_memristors,
            spec.bank.r_in_ohms,
        )
        .map_err(|source| ExperimentError::Programming {
            target_volts: target,
            replication: 0,
            source,
        })?;
        let g = 1.0 / required;
        if !(g >= spec.bank.device.g_min_siemens && g <= spec.bank.device.g_max_siemens) {
            return Err(ExperimentError::UnreachableTarget {
                target_volts: target,
                required_ohms: required,
                r_min_ohms: 1.0 / spec.bank.device.g_max_siemens,
                r_max_ohms: 1.0 / spec.bank.device.g_min_siemens,
            });
        }
    }

    let mut samples = vec![Vec::with_capacity(spec.replications); targets.len()];
    for replication in 0..spec.replications {
        let mut bank = spec
            .bank
            .instantiate(spec.master_seed, DOMAIN_SWEEP, replication as u64)?;
        for (k, &target) in targets.iter().enumerate() {
            program_source(&mut bank, target, &spec.tune).map_err(|source| {
                ExperimentError::Programming {
                    target_volts: target,
                    replication,
                    source,
                }
            })?;
            samples[k].push(bank.output_voltage()?.v_out_volts);
        }
    }

    // Offset correction of the recorded outputs.
    match spec.offset_correction {
        OffsetCorrection::None => {}
        OffsetCorrection::KnownModel => {
            let offset = spec.bank.amplifier.offset_volts;
            for reps in &mut samples {
                for v in reps.iter_mut() {
                    *v -= offset;
                }
            }
        }
        OffsetCorrection::EstimateMidRange => {
            let mid = targets.len() / 2;
            let estimate = stats::mean(&samples[mid]) - targets[mid];
            for reps in &mut samples {
                for v in reps.iter_mut() {
                    *v -= estimate;
                }
            }
        }
    }

    let mean_volts: Vec<f64> = samples.iter().map(|reps| stats::mean(reps)).collect();
    let std_volts: Vec<f64> = if spec.replications >= 2 {
        samples.iter().map(|reps| stats::sample_std(reps)).collect()
    } else {
        vec![0.0; targets.len()]
    };
    let fit = stats::fit_linear(&targets, &mean_volts)?;
    let mre_percent = compute_mre(&samples, fit.slope, spec.resolution_volts)?;

    Ok(SweepResult {
        targets_volts: targets,
        mean_volts,
        std_volts,
        mre_percent,
        samples_volts: samples,
        slope: fit.slope,
        intercept_volts: fit.intercept,
    })
}

/// Result of a stability measurement: the raw trace, the linear drift fit
/// `V(t) = a t + b`, and the detrended noise statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityResult {
    pub trace: Vec<OutputSample>,
    pub slope_volts_per_second: f64,
    pub intercept_volts: f64,
    pub noise_std_volts: f64,
    pub jarque_bera: f64,
    pub gaussian_at_5pct: bool,
}

impl StabilityResult {
    /// Histogram of the detrended residuals over `bins` equal-width bins.
    pub fn residual_histogram(&self, bins: usize) -> Vec<(f64, usize)> {
        let residuals: Vec<f64> = self
            .trace
            .iter()
            .map(|s| {
                s.v_out_volts
                    - (self.slope_volts_per_second * s.timestamp_seconds + self.intercept_volts)
            })
            .collect();
        let lo = residuals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
        let mut counts = vec![0usize; bins];
        for r in &residuals {
            let idx = (((r - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (lo + (i as f64 + 0.5) * width, c))
            .collect()
    }
}

/// Record the output of an already-programmed bank for `duration` seconds
/// and fit the drift line; requires `duration >= 10 * dt`.
pub fn run_stability(
    bank: &mut SourceBank,
    duration_seconds: f64,
    dt_seconds: f64,
) -> Result<StabilityResult, ExperimentError> {
    if !(dt_seconds > 0.0) || duration_seconds < 10.0 * dt_seconds {
        return Err(ExperimentError::InvalidSpec(format!(
            "stability run needs duration >= 10 * dt > 0, got duration = {duration_seconds} s, \
             dt = {dt_seconds} s"
        )));
    }
    let trace = bank.measure_output(duration_seconds, dt_seconds)?;
    let ts: Vec<f64> = trace.iter().map(|s| s.timestamp_seconds).collect();
    let vs: Vec<f64> = trace.iter().map(|s| s.v_out_volts).collect();
    let fit = stats::fit_linear(&ts, &vs)?;
    let residuals: Vec<f64> = ts
        .iter()
        .zip(&vs)
        .map(|(&t, &v)| v - (fit.slope * t + fit.intercept))
        .collect();
    let jb = stats::jarque_bera(&residuals);
    Ok(StabilityResult {
        trace,
        slope_volts_per_second: fit.slope,
        intercept_volts: fit.intercept,
        noise_std_volts: fit.residual_std,
        jarque_bera: jb,
        gaussian_at_5pct: jb < JARQUE_BERA_CRIT_5PCT,
    })
}

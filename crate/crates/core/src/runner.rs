//! Experiment orchestration: validate a configuration, dispatch to the
//! matching campaign, write result records atomically, and emit a manifest
//! with the config digest and per-file checksums.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::CircuitError;
use crate::config::{
    self, config_digest, validate_config, ConfigError, Diagnostic, ExperimentConfig, ExperimentKind,
};
use crate::experiments::{run_dc_sweep, run_stability, ExperimentError, SweepSpec};
use crate::programming::{program_source, ProgramError};
use crate::records::{
    atomic_write_all, render_program_log, render_scan, render_stability, render_sweep, sha256_hex,
    ProgramLog, ProgramRun, RecordError,
};
use crate::rng::{DOMAIN_PROGRAM, DOMAIN_STABILITY};
use crate::scaling::scan_rmin;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration:\n{}", format_diagnostics(.0))]
    InvalidConfig(Vec<Diagnostic>),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Scaling(#[from] crate::scaling::ScalingError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("i/o failure")]
    Io(#[from] std::io::Error),
    #[error("checksum mismatch on '{0}' after write")]
    ChecksumMismatch(String),
}

fn format_diagnostics(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(|d| format!("  - {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Checksum entry for one emitted file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
}

/// Provenance record of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub master_seed: u64,
    pub artifact_version: String,
    pub files: Vec<FileRecord>,
    pub duration_seconds: f64,
}

/// Everything a caller needs after a run.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub data_paths: Vec<PathBuf>,
    pub summary: String,
}

fn file_stem(config: &ExperimentConfig) -> String {
    match &config.experiment {
        // Scale runs are independent of the bank calibration; distinguish
        // them by technology and grid size instead so different presets
        // never collide in one output directory.
        ExperimentKind::Scale { tech, grid, .. } => format!(
            "scale_{}_{}pt_seed{}",
            tech.name,
            grid.expand().len(),
            config.master_seed
        ),
        _ => format!(
            "{}_{}_seed{}",
            config.experiment.name(),
            config.calibration,
            config.master_seed
        ),
    }
}

/// Execute the configured experiment and persist its records under
/// `out_dir`. Identical configuration and seed produce byte-identical data
/// files; the manifest additionally carries the wall-clock duration.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let diagnostics = validate_config(config);
    if !diagnostics.is_empty() {
        return Err(RunError::InvalidConfig(diagnostics));
    }
    let started = Instant::now();
    let stem = file_stem(config);

    let (files, summary) = match &config.experiment {
        ExperimentKind::Sweep {
            v_start_volts,
            v_stop_volts,
            resolution_volts,
            replications,
            offset_correction,
        } => {
            let spec = SweepSpec {
                v_start_volts: *v_start_volts,
                v_stop_volts: *v_stop_volts,
                resolution_volts: *resolution_volts,
                replications: *replications,
                master_seed: config.master_seed,
                offset_correction: *offset_correction,
                bank: config.bank.clone(),
                tune: config.tune.clone(),
            };
            let result = run_dc_sweep(&spec)?;
            let summary = format!(
                "sweep {}..{} V: slope = {:.4}, mean resolution error = {:.2}%",
                v_start_volts,
                v_stop_volts,
                result.slope,
                result.mean_mre_percent()
            );
            (
                vec![(format!("{stem}.csv"), render_sweep(&result))],
                summary,
            )
        }
        ExperimentKind::Stability {
            v_target_volts,
            duration_seconds,
            dt_seconds,
        } => {
            let mut bank = config
                .bank
                .instantiate(config.master_seed, DOMAIN_STABILITY, 0)?;
            program_source(&mut bank, *v_target_volts, &config.tune)?;
            let result = run_stability(&mut bank, *duration_seconds, *dt_seconds)?;
            let summary = format!(
                "stability at {} V over {} s: drift slope = {:.3e} V/s, noise std = {:.3e} V, \
                 gaussian at 5% = {}",
                v_target_volts,
                duration_seconds,
                result.slope_volts_per_second,
                result.noise_std_volts,
                result.gaussian_at_5pct
            );
            (
                vec![(format!("{stem}.csv"), render_stability(&result))],
                summary,
            )
        }
        ExperimentKind::Program {
            v_target_volts,
            repetitions,
        } => {
            let offset = config.bank.amplifier.offset_volts;
            let mut runs = Vec::with_capacity(*repetitions);
            for replication in 0..*repetitions {
                let mut bank = config.bank.instantiate(
                    config.master_seed,
                    DOMAIN_PROGRAM,
                    replication as u64,
                )?;
                let report = program_source(&mut bank, *v_target_volts, &config.tune)?;
                let achieved = bank.output_voltage()?.v_out_volts - offset;
                runs.push(ProgramRun {
                    replication: replication as u64,
                    achieved_volts: achieved,
                    report,
                });
            }
            let mean_error: f64 = runs
                .iter()
                .map(|r| (r.achieved_volts - v_target_volts).abs())
                .sum::<f64>()
                / runs.len() as f64;
            let summary = format!(
                "programmed {} V x{}: mean |error| = {:.3e} V",
                v_target_volts, repetitions, mean_error
            );
            let log = ProgramLog { runs };
            (
                vec![(format!("{stem}.toml"), render_program_log(&log)?)],
                summary,
            )
        }
        ExperimentKind::Scale { .. } => {
            let (scenario, grid) = config::scale_scenario(&config.experiment)
                .expect("scale experiment provides a scenario");
            let rows = scan_rmin(&scenario, &grid)?;
            let summary = match rows.as_slice() {
                [row] => format!(
                    "scale at {} ohm: {:.3e} W/source, {} sources",
                    row.r_min_ohms, row.power_per_source_watts, row.max_sources
                ),
                rows => format!(
                    "scale scan over {} points: {} .. {} sources",
                    rows.len(),
                    rows.first().map(|r| r.max_sources).unwrap_or(0),
                    rows.last().map(|r| r.max_sources).unwrap_or(0)
                ),
            };
            (vec![(format!("{stem}.csv"), render_scan(&rows))], summary)
        }
    };

    let data_paths = atomic_write_all(out_dir, &files)?;

    // Verify checksums against what actually landed on disk.
    let mut file_records = Vec::with_capacity(files.len());
    for ((name, contents), path) in files.iter().zip(&data_paths) {
        let on_disk = std::fs::read(path)?;
        let digest = sha256_hex(&on_disk);
        if digest != sha256_hex(contents.as_bytes()) {
            return Err(RunError::ChecksumMismatch(name.clone()));
        }
        file_records.push(FileRecord {
            name: name.clone(),
            sha256: digest,
        });
    }

    let manifest = RunManifest {
        config_digest: config_digest(config)?,
        master_seed: config.master_seed,
        artifact_version: ARTIFACT_VERSION.to_string(),
        files: file_records,
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    let manifest_text = toml::to_string(&manifest).map_err(ConfigError::Serialize)?;
    let manifest_name = format!("{stem}.manifest.toml");
    let manifest_paths = atomic_write_all(out_dir, &[(manifest_name, manifest_text)])?;

    Ok(RunOutcome {
        manifest,
        manifest_path: manifest_paths.into_iter().next().expect("one manifest"),
        data_paths,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_config_str;

    const TINY_SWEEP: &str = r#"
        master_seed = 11
        calibration = "room"

        [experiment]
        kind = "sweep"
        v_start_volts = 0.45
        v_stop_volts = 0.55
        resolution_volts = 0.05
        replications = 2
    "#;

    #[test]
    fn run_writes_data_and_matching_manifest() {
        let config = load_config_str(TINY_SWEEP).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run(&config, dir.path()).unwrap();
        assert_eq!(outcome.data_paths.len(), 1);
        assert!(outcome.data_paths[0].ends_with("sweep_room_seed11.csv"));
        let bytes = std::fs::read(&outcome.data_paths[0]).unwrap();
        assert_eq!(outcome.manifest.files[0].sha256, sha256_hex(&bytes));
        assert!(outcome.manifest_path.exists());
        assert_eq!(outcome.manifest.master_seed, 11);
    }

    #[test]
    fn identical_runs_produce_byte_identical_data() {
        let config = load_config_str(TINY_SWEEP).unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = run(&config, dir_a.path()).unwrap();
        let b = run(&config, dir_b.path()).unwrap();
        let bytes_a = std::fs::read(&a.data_paths[0]).unwrap();
        let bytes_b = std::fs::read(&b.data_paths[0]).unwrap();
        assert_eq!(bytes_a, bytes_b);
        assert_eq!(a.manifest.config_digest, b.manifest.config_digest);
        assert_eq!(a.manifest.files, b.manifest.files);
    }

    #[test]
    fn emitted_records_parse_back_to_identical_bytes() {
        let config = load_config_str(TINY_SWEEP).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run(&config, dir.path()).unwrap();
        let text = std::fs::read_to_string(&outcome.data_paths[0]).unwrap();
        let parsed = crate::records::parse_sweep(&text).unwrap();
        assert_eq!(crate::records::render_sweep(&parsed), text);
    }

    #[test]
    fn invalid_config_fails_without_partial_outputs() {
        let mut config = load_config_str(TINY_SWEEP).unwrap();
        if let ExperimentKind::Sweep {
            ref mut resolution_volts,
            ..
        } = config.experiment
        {
            *resolution_volts = -1.0;
        }
        let dir = tempfile::tempdir().unwrap();
        let err = run(&config, dir.path()).unwrap_err();
        assert!(matches!(err, RunError::InvalidConfig(_)));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}

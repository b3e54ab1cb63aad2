//! Result-record files: line-oriented delimited text with unit-bearing
//! headers, written atomically (temp file + rename) and parseable back into
//! the result types they came from. Floats are rendered with Rust's
//! shortest-round-trip formatting, so parse-back equality is exact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::circuit::OutputSample;
use crate::experiments::{StabilityResult, SweepResult};
use crate::programming::ProgramReport;
use crate::scaling::ScanRow;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("i/o failure")]
    Io(#[from] std::io::Error),
    #[error("malformed record file: {0}")]
    Malformed(String),
    #[error("record file is missing field '{0}'")]
    MissingField(String),
    #[error("program log is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("cannot serialize program log: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

fn parse_f64(token: &str) -> Result<f64, RecordError> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| RecordError::Malformed(format!("bad float '{token}'")))
}

fn parse_u64(token: &str) -> Result<u64, RecordError> {
    token
        .trim()
        .parse::<u64>()
        .map_err(|_| RecordError::Malformed(format!("bad integer '{token}'")))
}

/// Split a record file into `# key = value` metadata and data rows
/// (header line first).
fn split_sections(text: &str) -> (Vec<(String, String)>, Vec<&str>) {
    let mut meta = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                meta.push((key.trim().to_string(), value.trim().to_string()));
            }
            continue;
        }
        rows.push(line);
    }
    (meta, rows)
}

fn meta_value<'a>(meta: &'a [(String, String)], key: &str) -> Result<&'a str, RecordError> {
    meta.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| RecordError::MissingField(key.to_string()))
}

// ---------------------------------------------------------------------------
// Sweep records
// ---------------------------------------------------------------------------

pub fn render_sweep(result: &SweepResult) -> String {
    let replications = result
        .samples_volts
        .first()
        .map(|reps| reps.len())
        .unwrap_or(0);
    let mut out = String::new();
    out.push_str("# dc sweep record\n");
    out.push_str(&format!("# slope = {}\n", result.slope));
    out.push_str(&format!("# intercept_volts = {}\n", result.intercept_volts));
    out.push_str("target_volts,mean_volts,std_volts,mre_percent");
    for r in 0..replications {
        out.push_str(&format!(",rep{r}_volts"));
    }
    out.push('\n');
    for k in 0..result.targets_volts.len() {
        out.push_str(&format!(
            "{},{},{},{}",
            result.targets_volts[k],
            result.mean_volts[k],
            result.std_volts[k],
            result.mre_percent[k]
        ));
        for v in &result.samples_volts[k] {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_sweep(text: &str) -> Result<SweepResult, RecordError> {
    let (meta, rows) = split_sections(text);
    let slope = parse_f64(meta_value(&meta, "slope")?)?;
    let intercept_volts = parse_f64(meta_value(&meta, "intercept_volts")?)?;
    let mut rows = rows.into_iter();
    let header = rows
        .next()
        .ok_or_else(|| RecordError::Malformed("missing header".into()))?;
    if !header.starts_with("target_volts,mean_volts,std_volts,mre_percent") {
        return Err(RecordError::Malformed(format!(
            "unexpected header '{header}'"
        )));
    }
    let mut result = SweepResult {
        targets_volts: Vec::new(),
        mean_volts: Vec::new(),
        std_volts: Vec::new(),
        mre_percent: Vec::new(),
        samples_volts: Vec::new(),
        slope,
        intercept_volts,
    };
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() < 4 {
            return Err(RecordError::Malformed(format!("short row '{row}'")));
        }
        result.targets_volts.push(parse_f64(fields[0])?);
        result.mean_volts.push(parse_f64(fields[1])?);
        result.std_volts.push(parse_f64(fields[2])?);
        result.mre_percent.push(parse_f64(fields[3])?);
        result.samples_volts.push(
            fields[4..]
                .iter()
                .map(|f| parse_f64(f))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Stability records
// ---------------------------------------------------------------------------

pub fn render_stability(result: &StabilityResult) -> String {
    let mut out = String::new();
    out.push_str("# stability trace record\n");
    out.push_str(&format!(
        "# slope_volts_per_second = {}\n",
        result.slope_volts_per_second
    ));
    out.push_str(&format!("# intercept_volts = {}\n", result.intercept_volts));
    out.push_str(&format!("# noise_std_volts = {}\n", result.noise_std_volts));
    out.push_str(&format!("# jarque_bera = {}\n", result.jarque_bera));
    out.push_str(&format!(
        "# gaussian_at_5pct = {}\n",
        result.gaussian_at_5pct
    ));
    out.push_str("time_seconds,v_out_volts,supply_current_amperes\n");
    for sample in &result.trace {
        out.push_str(&format!(
            "{},{},{}\n",
            sample.timestamp_seconds, sample.v_out_volts, sample.supply_current_amperes
        ));
    }
    out
}

pub fn parse_stability(text: &str) -> Result<StabilityResult, RecordError> {
    let (meta, rows) = split_sections(text);
    let slope_volts_per_second = parse_f64(meta_value(&meta, "slope_volts_per_second")?)?;
    let intercept_volts = parse_f64(meta_value(&meta, "intercept_volts")?)?;
    let noise_std_volts = parse_f64(meta_value(&meta, "noise_std_volts")?)?;
    let jarque_bera = parse_f64(meta_value(&meta, "jarque_bera")?)?;
    let gaussian_at_5pct = match meta_value(&meta, "gaussian_at_5pct")? {
        "true" => true,
        "false" => false,
        other => {
            return Err(RecordError::Malformed(format!(
                "bad boolean '{other}' for gaussian_at_5pct"
            )))
        }
    };
    let mut rows = rows.into_iter();
    let header = rows
        .next()
        .ok_or_else(|| RecordError::Malformed("missing header".into()))?;
    if header != "time_seconds,v_out_volts,supply_current_amperes" {
        return Err(RecordError::Malformed(format!(
            "unexpected header '{header}'"
        )));
    }
    let mut trace = Vec::new();
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(RecordError::Malformed(format!("short row '{row}'")));
        }
        trace.push(OutputSample {
            timestamp_seconds: parse_f64(fields[0])?,
            v_out_volts: parse_f64(fields[1])?,
            supply_current_amperes: parse_f64(fields[2])?,
        });
    }
    Ok(StabilityResult {
        trace,
        slope_volts_per_second,
        intercept_volts,
        noise_std_volts,
        jarque_bera,
        gaussian_at_5pct,
    })
}

// ---------------------------------------------------------------------------
// Scaling scan records
// ---------------------------------------------------------------------------

pub fn render_scan(rows: &[ScanRow]) -> String {
    let mut out = String::new();
    out.push_str("# feedback-resistance scaling scan\n");
    out.push_str(
        "r_min_ohms,bias_current_amperes,power_per_source_watts,max_sources,\
         controllable_dots,footprint_factor\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.r_min_ohms,
            row.bias_current_amperes,
            row.power_per_source_watts,
            row.max_sources,
            row.controllable_dots,
            row.footprint_factor
        ));
    }
    out
}

pub fn parse_scan(text: &str) -> Result<Vec<ScanRow>, RecordError> {
    let (_, rows) = split_sections(text);
    let mut rows = rows.into_iter();
    let header = rows
        .next()
        .ok_or_else(|| RecordError::Malformed("missing header".into()))?;
    if !header.starts_with("r_min_ohms,") {
        return Err(RecordError::Malformed(format!(
            "unexpected header '{header}'"
        )));
    }
    rows.map(|row| {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 6 {
            return Err(RecordError::Malformed(format!("short row '{row}'")));
        }
        Ok(ScanRow {
            r_min_ohms: parse_f64(fields[0])?,
            bias_current_amperes: parse_f64(fields[1])?,
            power_per_source_watts: parse_f64(fields[2])?,
            max_sources: parse_u64(fields[3])?,
            controllable_dots: parse_u64(fields[4])?,
            footprint_factor: parse_f64(fields[5])?,
        })
    })
    .collect()
}

// ---------------------------------------------------------------------------
// Program logs
// ---------------------------------------------------------------------------

/// One programming repetition in the experiment log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramRun {
    pub replication: u64,
    pub achieved_volts: f64,
    pub report: ProgramReport,
}

/// The full experiment log of a `program` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramLog {
    pub runs: Vec<ProgramRun>,
}

pub fn render_program_log(log: &ProgramLog) -> Result<String, RecordError> {
    Ok(toml::to_string(log)?)
}

pub fn parse_program_log(text: &str) -> Result<ProgramLog, RecordError> {
    Ok(toml::from_str(text)?)
}

// ---------------------------------------------------------------------------
// Atomic writes
// ---------------------------------------------------------------------------

/// Write every `(name, contents)` pair into `dir` atomically: contents land
/// in temporary files first and are renamed into place only after all
/// writes succeeded, so failures never leave partial outputs behind.
pub fn atomic_write_all(
    dir: &Path,
    files: &[(String, String)],
) -> Result<Vec<PathBuf>, RecordError> {
    fs::create_dir_all(dir)?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(files.len());
    let stage_result = (|| -> Result<(), RecordError> {
        for (name, contents) in files {
            let final_path = dir.join(name);
            let tmp_path = dir.join(format!(".{name}.tmp"));
            let mut handle = fs::File::create(&tmp_path)?;
            staged.push((tmp_path.clone(), final_path));
            handle.write_all(contents.as_bytes())?;
            handle.sync_all()?;
        }
        Ok(())
    })();
    if let Err(e) = stage_result {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e);
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, final_path) in staged {
        fs::rename(&tmp, &final_path)?;
        written.push(final_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::programming::{DeviceRole, DeviceTuneReport};

    fn sample_sweep() -> SweepResult {
        SweepResult {
            targets_volts: vec![0.4, 0.41],
            mean_volts: vec![0.4003121, 0.4098777],
            std_volts: vec![0.00041, 0.00052],
            mre_percent: vec![4.1, 5.2],
            samples_volts: vec![vec![0.4001, 0.4005], vec![0.4101, 0.4096]],
            slope: 1.0021,
            intercept_volts: -0.00031,
        }
    }

    #[test]
    fn sweep_record_round_trips_exactly() {
        let original = sample_sweep();
        let rendered = render_sweep(&original);
        let parsed = parse_sweep(&rendered).unwrap();
        assert_eq!(original, parsed);
    }

    #[test]
    fn stability_record_round_trips_exactly() {
        let original = StabilityResult {
            trace: vec![
                OutputSample {
                    timestamp_seconds: 0.0,
                    v_out_volts: 0.5081234567891,
                    supply_current_amperes: 0.00102,
                },
                OutputSample {
                    timestamp_seconds: 0.1,
                    v_out_volts: 0.5079998,
                    supply_current_amperes: 0.00102,
                },
            ],
            slope_volts_per_second: 5.02e-5,
            intercept_volts: 0.508,
            noise_std_volts: 0.001002,
            jarque_bera: 1.73,
            gaussian_at_5pct: true,
        };
        let parsed = parse_stability(&render_stability(&original)).unwrap();
        assert_eq!(original, parsed);
    }

    #[test]
    fn scan_record_round_trips_exactly() {
        let rows = vec![
            ScanRow {
                r_min_ohms: 10_000.0,
                bias_current_amperes: 1e-6,
                power_per_source_watts: 1e-4,
                max_sources: 15000,
                controllable_dots: 7500,
                footprint_factor: 1.0,
            },
            ScanRow {
                r_min_ohms: 1_000_000.0,
                bias_current_amperes: 2e-8,
                power_per_source_watts: 5e-6,
                max_sources: 300_000,
                controllable_dots: 150_000,
                footprint_factor: 4.0,
            },
        ];
        let parsed = parse_scan(&render_scan(&rows)).unwrap();
        assert_eq!(rows, parsed);
    }

    #[test]
    fn program_log_round_trips_exactly() {
        let log = ProgramLog {
            runs: vec![ProgramRun {
                replication: 0,
                achieved_volts: 0.4998,
                report: ProgramReport {
                    v_target_volts: 0.5,
                    target_resistance_ohms: 12_000.0,
                    balance_resistance_ohms: 12_040.5,
                    devices: vec![DeviceTuneReport {
                        device_index: 0,
                        role: DeviceRole::Companion,
                        pulses_applied: 12,
                        iterations: 14,
                        reads: 24,
                        final_resistance_ohms: 12_011.7,
                        relative_error: 0.000975,
                        converged: true,
                    }],
                    total_iterations: 14,
                    total_pulse_seconds: 6.1e-5,
                    converged: true,
                },
            }],
        };
        let parsed = parse_program_log(&render_program_log(&log).unwrap()).unwrap();
        assert_eq!(log, parsed);
    }

    #[test]
    fn malformed_records_are_rejected() {
        assert!(parse_sweep("garbage").is_err());
        assert!(parse_stability("# slope_volts_per_second = 1\n").is_err());
        assert!(parse_scan("r_min_ohms,x\n1,2\n").is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let files = vec![
            ("a.csv".to_string(), "x,y\n1,2\n".to_string()),
            ("b.csv".to_string(), "p,q\n3,4\n".to_string()),
        ];
        let written = atomic_write_all(dir.path(), &files).unwrap();
        assert_eq!(written.len(), 2);
        let names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert!(names.iter().all(|n| !n.ends_with(".tmp")));
        assert_eq!(
            std::fs::read_to_string(dir.path().join("a.csv")).unwrap(),
            "x,y\n1,2\n"
        );
    }
}

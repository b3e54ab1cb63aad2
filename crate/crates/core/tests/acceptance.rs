//! End-to-end acceptance checks: calibration-anchor reproduction, formula
//! oracles, controller convergence, the integration power budget, and
//! byte-level determinism of the bundled configurations.
//!
//! Run with `cargo test -p memdc-core --test acceptance -- --nocapture` to
//! see one PASS/FAIL line per criterion.

use std::path::{Path, PathBuf};
use std::time::Instant;

use memdc_core::config::{load_config, validate_config, ExperimentKind};
use memdc_core::device::MemristorState;
use memdc_core::experiments::{compute_mre, run_dc_sweep, run_stability, SweepSpec};
use memdc_core::programming::{
    balance_resistance, program_source, target_resistance, tune_resistance, TuneParams,
};
use memdc_core::rng::{Stream, DOMAIN_STABILITY};
use memdc_core::runner::run;
use memdc_core::scaling::{
    bias_current_for, max_sources, power_per_source, resolution_for, scan_rmin,
    AmplifierScalingModel, EnvmTech, ScalingScenario, BASE_RESOLUTION_N, BASE_RESOLUTION_VOLTS,
};

/// Prints one PASS/FAIL line per criterion, even when the test panics.
struct Criterion {
    name: &'static str,
    passed: bool,
}

impl Criterion {
    fn start(name: &'static str) -> Self {
        Self {
            name,
            passed: false,
        }
    }

    fn pass(mut self) {
        self.passed = true;
        println!("PASS  {}", self.name);
    }
}

impl Drop for Criterion {
    fn drop(&mut self) {
        if !self.passed {
            println!("FAIL  {}", self.name);
        }
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn sweep_spec_from_config(path: &Path) -> SweepSpec {
    let config = load_config(path).unwrap();
    match config.experiment {
        ExperimentKind::Sweep {
            v_start_volts,
            v_stop_volts,
            resolution_volts,
            replications,
            offset_correction,
        } => SweepSpec {
            v_start_volts,
            v_stop_volts,
            resolution_volts,
            replications,
            master_seed: config.master_seed,
            offset_correction,
            bank: config.bank,
            tune: config.tune,
        },
        other => panic!("{path:?} is not a sweep config (kind = {})", other.name()),
    }
}

fn stability_from_config(path: &Path) -> memdc_core::experiments::StabilityResult {
    let config = load_config(path).unwrap();
    let (v_target, duration, dt) = match config.experiment {
        ExperimentKind::Stability {
            v_target_volts,
            duration_seconds,
            dt_seconds,
        } => (v_target_volts, duration_seconds, dt_seconds),
        ref other => panic!(
            "{path:?} is not a stability config (kind = {})",
            other.name()
        ),
    };
    let mut bank = config
        .bank
        .instantiate(config.master_seed, DOMAIN_STABILITY, 0)
        .unwrap();
    program_source(&mut bank, v_target, &config.tune).unwrap();
    run_stability(&mut bank, duration, dt).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Formula oracles against brute-force evaluations
// ---------------------------------------------------------------------------

#[test]
fn c1_formula_oracles_match_brute_force() {
    let criterion = Criterion::start("criterion 1: formula oracles < 1e-12 on 1000 random inputs");
    let started = Instant::now();
    let mut picks = Stream::derive(1001, &[0]);
    let tol = 1e-12;

    for _ in 0..1000 {
        // Parallel feedback resistance of up to 16 devices.
        let n = 1 + (picks.uniform() * 16.0) as usize;
        let conductances: Vec<f64> = (0..n).map(|_| 1e-6 + picks.uniform() * 2e-4).collect();
        let direct = 1.0 / conductances.iter().sum::<f64>();
        let mut reciprocal_sum = 0.0;
        for &g in &conductances {
            let resistance = 1.0 / g;
            reciprocal_sum += 1.0 / resistance;
        }
        let oracle = 1.0 / reciprocal_sum;
        assert!((direct - oracle).abs() <= tol * oracle.abs());

        // Target resistance.
        let v_trg = 0.05 + picks.uniform() * 1.5;
        let v_in = 0.02 + picks.uniform() * 0.5;
        let devices = 1 + (picks.uniform() * 8.0) as usize;
        let r_in = 100.0 + picks.uniform() * 10_000.0;
        let computed = target_resistance(v_trg, v_in, devices, r_in).unwrap();
        let oracle = ((devices as f64 * r_in) * v_trg) / v_in;
        assert!((computed - oracle).abs() <= tol * oracle.abs());

        // Balancing resistance with n-1 companions below the budget.
        let r_trg = 5_000.0 + picks.uniform() * 50_000.0;
        let n_total = 2 + (picks.uniform() * 6.0) as usize;
        let budget = n_total as f64 / r_trg;
        let companions: Vec<f64> = (0..n_total - 1)
            .map(|_| budget / (n_total as f64) * (0.5 + picks.uniform() * 0.9))
            .collect();
        if companions.iter().sum::<f64>() < budget {
            let computed = balance_resistance(r_trg, &companions, n_total).unwrap();
            let mut remaining = n_total as f64 / r_trg;
            for &g in &companions {
                remaining -= g;
            }
            let oracle = 1.0 / remaining;
            assert!((computed - oracle).abs() <= tol * oracle.abs());
        }

        // Mean resolution error of a random replication set.
        let reps = 2 + (picks.uniform() * 10.0) as usize;
        let base = 0.3 + picks.uniform() * 0.5;
        let samples: Vec<f64> = (0..reps)
            .map(|_| base + 1e-3 * picks.standard_normal())
            .collect();
        let slope = 0.9 + picks.uniform() * 0.2;
        let resolution = 0.005 + picks.uniform() * 0.01;
        let computed = compute_mre(std::slice::from_ref(&samples), slope, resolution).unwrap()[0];
        let mean = samples.iter().sum::<f64>() / reps as f64;
        let mut acc = 0.0;
        for &s in &samples {
            acc += (s - mean) * (s - mean);
        }
        let std = (acc / (reps as f64 - 1.0)).sqrt();
        let oracle = 100.0 * std / (slope * resolution);
        assert!((computed - oracle).abs() <= tol * oracle.abs().max(1e-30));
    }

    assert!(
        started.elapsed().as_secs_f64() < 1.0,
        "oracle check too slow"
    );
    criterion.pass();
}

// ---------------------------------------------------------------------------
// 2. Sweep-range consistency of the target-resistance equation
// ---------------------------------------------------------------------------

#[test]
fn c2_sweep_ranges_match_the_reference_settings() {
    let criterion =
        Criterion::start("criterion 2: per-device targets 9.6-15.6k (300 K) and 32-52k (1.2 K)");
    let tol = 1e-12;
    let cases = [
        (0.4, 0.25, 9_600.0),
        (0.65, 0.25, 15_600.0),
        (0.4, 0.075, 32_000.0),
        (0.65, 0.075, 52_000.0),
    ];
    for (v_trg, v_in, expected) in cases {
        let computed = target_resistance(v_trg, v_in, 2, 3000.0).unwrap();
        assert!(
            (computed - expected).abs() <= tol * expected,
            "target {v_trg} V at v_in {v_in} V: {computed} != {expected}"
        );
    }
    criterion.pass();
}

// ---------------------------------------------------------------------------
// 3. Room-temperature sweep reproduction
// ---------------------------------------------------------------------------

#[test]
fn c3_room_sweep_slope_and_resolution_error() {
    let criterion =
        Criterion::start("criterion 3: room sweep slope in [0.99, 1.01], mean MRE < 10%");
    let started = Instant::now();
    let spec = sweep_spec_from_config(&configs_dir().join("fig4a_room_sweep.toml"));
    let result = run_dc_sweep(&spec).unwrap();
    assert!(
        (0.99..=1.01).contains(&result.slope),
        "slope = {}",
        result.slope
    );
    let mean_mre = result.mean_mre_percent();
    assert!(mean_mre < 10.0, "mean MRE = {mean_mre}%");
    assert!(
        started.elapsed().as_secs_f64() < 30.0,
        "room sweep too slow"
    );
    criterion.pass();
}

// ---------------------------------------------------------------------------
// 4. Cryogenic sweep reproduction
// ---------------------------------------------------------------------------

#[test]
fn c4_cryo_sweep_slope_and_relative_resolution_error() {
    let criterion =
        Criterion::start("criterion 4: cryo sweep slope 0.939 +/- 0.02, MRE 2-3x the room value");
    let started = Instant::now();
    let room = run_dc_sweep(&sweep_spec_from_config(
        &configs_dir().join("fig4a_room_sweep.toml"),
    ))
    .unwrap();
    let cryo = run_dc_sweep(&sweep_spec_from_config(
        &configs_dir().join("fig4c_cryo_sweep.toml"),
    ))
    .unwrap();
    assert!(
        (cryo.slope - 0.939).abs() <= 0.02,
        "cryo slope = {}",
        cryo.slope
    );
    let ratio = cryo.mean_mre_percent() / room.mean_mre_percent();
    assert!(
        (2.0..=3.0).contains(&ratio),
        "MRE ratio = {ratio} (cryo {} / room {})",
        cryo.mean_mre_percent(),
        room.mean_mre_percent()
    );
    assert!(
        started.elapsed().as_secs_f64() < 30.0,
        "sweep pair too slow"
    );
    criterion.pass();
}

// ---------------------------------------------------------------------------
// 5. Stability traces: drift slopes, noise amplitudes, normality
// ---------------------------------------------------------------------------

#[test]
fn c5_stability_drift_and_noise() {
    let criterion = Criterion::start(
        "criterion 5: drift 5e-5 V/s +/- 50% (300 K) and 1e-6..1e-5 V/s (1.2 K); noise 1 mV \
         +/- 20% and 3-5x; residuals gaussian at 5%",
    );
    let started = Instant::now();
    let room = stability_from_config(&configs_dir().join("fig4b_room_stability.toml"));
    let cryo = stability_from_config(&configs_dir().join("fig4d_cryo_stability.toml"));

    let room_slope = room.slope_volts_per_second.abs();
    assert!(
        (2.5e-5..=7.5e-5).contains(&room_slope),
        "room drift slope = {room_slope}"
    );
    let cryo_slope = cryo.slope_volts_per_second.abs();
    assert!(
        (1.0e-6..=1.0e-5).contains(&cryo_slope),
        "cryo drift slope = {cryo_slope}"
    );

    assert!(
        (0.8e-3..=1.2e-3).contains(&room.noise_std_volts),
        "room noise std = {}",
        room.noise_std_volts
    );
    let noise_ratio = cryo.noise_std_volts / room.noise_std_volts;
    assert!(
        (3.0..=5.0).contains(&noise_ratio),
        "noise ratio = {noise_ratio}"
    );

    assert!(
        room.gaussian_at_5pct,
        "room residuals non-gaussian: JB = {}",
        room.jarque_bera
    );
    assert!(
        cryo.gaussian_at_5pct,
        "cryo residuals non-gaussian: JB = {}",
        cryo.jarque_bera
    );

    assert!(
        started.elapsed().as_secs_f64() < 10.0,
        "stability pair too slow"
    );
    criterion.pass();
}

// ---------------------------------------------------------------------------
// 6. Controller convergence
// ---------------------------------------------------------------------------

#[test]
fn c6_controller_convergence_rates() {
    let criterion = Criterion::start(
        "criterion 6: >= 99% convergence under default noise, 100% noiseless, 500 targets",
    );
    let started = Instant::now();
    let base = memdc_core::config::room_bank();
    let params = TuneParams::default();
    let mut picks = Stream::derive(606, &[0]);

    let mut converged = 0usize;
    for case in 0..500u64 {
        let mut spec = base.device.clone();
        let span = spec.g_max_siemens - spec.g_min_siemens;
        spec.initial_conductance_siemens = spec.g_min_siemens + picks.uniform() * span;
        let target_g = spec.g_min_siemens + picks.uniform() * span;
        let mut device = MemristorState::from_spec(&spec, Stream::derive(607, &[case])).unwrap();
        let report = tune_resistance(&mut device, 1.0 / target_g, &params, 0.25).unwrap();
        if report.converged {
            converged += 1;
        }
    }
    assert!(
        converged >= 495,
        "only {converged}/500 converged under default noise"
    );

    let mut noiseless_spec = base.device.clone();
    noiseless_spec.c2c_sigma = 0.0;
    noiseless_spec.read_noise_alpha = 0.0;
    for case in 0..500u64 {
        let span = noiseless_spec.g_max_siemens - noiseless_spec.g_min_siemens;
        let mut spec = noiseless_spec.clone();
        spec.initial_conductance_siemens = spec.g_min_siemens + picks.uniform() * span;
        let target_g = spec.g_min_siemens + picks.uniform() * span;
        let mut device = MemristorState::from_spec(&spec, Stream::derive(608, &[case])).unwrap();
        let report = tune_resistance(&mut device, 1.0 / target_g, &params, 0.25).unwrap();
        assert!(report.converged, "noiseless case {case} did not converge");
        assert!(
            report.relative_error <= params.tolerance,
            "noiseless case {case}: error {} above tolerance",
            report.relative_error
        );
    }

    assert!(
        started.elapsed().as_secs_f64() < 60.0,
        "convergence check too slow"
    );
    criterion.pass();
}

// ---------------------------------------------------------------------------
// 7. Integration power budget and resolution scaling
// ---------------------------------------------------------------------------

#[test]
fn c7_power_budget_and_resolution_scaling() {
    let criterion = Criterion::start(
        "criterion 7: 15-16k VCM sources, 300k +/- 10% FTJ sources, monotone scan, 100-160 uV \
         at n = 8",
    );
    let started = Instant::now();
    let scenario = |tech: EnvmTech| ScalingScenario {
        tech,
        amp: AmplifierScalingModel::default(),
        cooling_power_watts: 1.5,
        gates_per_dot: 2,
    };

    let vcm = max_sources(&scenario(EnvmTech::vcm()));
    assert!(
        (15_000..=16_000).contains(&vcm.max_sources),
        "VCM sources = {}",
        vcm.max_sources
    );
    let ftj = max_sources(&scenario(EnvmTech::ftj()));
    assert!(
        (ftj.max_sources as f64 - 300_000.0).abs() <= 30_000.0,
        "FTJ sources = {}",
        ftj.max_sources
    );

    let grid: Vec<f64> = (0..60)
        .map(|i| 10.0e3 * (1.0e6f64 / 10.0e3).powf(i as f64 / 59.0))
        .collect();
    let rows = scan_rmin(&scenario(EnvmTech::vcm()), &grid).unwrap();
    for pair in rows.windows(2) {
        assert!(
            pair[1].power_per_source_watts <= pair[0].power_per_source_watts,
            "power not non-increasing at {} ohm",
            pair[1].r_min_ohms
        );
        assert!(
            pair[1].max_sources >= pair[0].max_sources,
            "source count not non-decreasing at {} ohm",
            pair[1].r_min_ohms
        );
    }
    // The two calibration anchors hold simultaneously under the defaults.
    let amp = AmplifierScalingModel::default();
    let p_ref = power_per_source(&amp, bias_current_for(&amp, 10.0e3));
    assert!(
        (80.0e-6..=100.0e-6 + 1e-12).contains(&p_ref),
        "P(1 uA) = {p_ref}"
    );

    let resolution = resolution_for(8, BASE_RESOLUTION_VOLTS, BASE_RESOLUTION_N);
    assert!(
        (100.0e-6..=160.0e-6).contains(&resolution),
        "resolution(8) = {resolution}"
    );

    assert!(
        started.elapsed().as_secs_f64() < 1.0,
        "scaling check too slow"
    );
    criterion.pass();
}

// ---------------------------------------------------------------------------
// 8. Byte-level determinism of every bundled configuration
// ---------------------------------------------------------------------------

#[test]
fn c8_bundled_configs_are_deterministic() {
    let criterion = Criterion::start("criterion 8: bundled configs reproduce byte-identical data");
    let dir = configs_dir();
    let mut config_paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().map(|x| x == "toml").unwrap_or(false))
        .collect();
    config_paths.sort();
    assert!(
        !config_paths.is_empty(),
        "no bundled configs found in {dir:?}"
    );

    for path in &config_paths {
        let config = load_config(path).unwrap();
        assert!(
            validate_config(&config).is_empty(),
            "bundled config {path:?} has diagnostics"
        );
        let out_a = tempfile::tempdir().unwrap();
        let out_b = tempfile::tempdir().unwrap();
        let a = run(&config, out_a.path()).unwrap();
        let b = run(&config, out_b.path()).unwrap();
        assert_eq!(a.data_paths.len(), b.data_paths.len());
        for (pa, pb) in a.data_paths.iter().zip(&b.data_paths) {
            let bytes_a = std::fs::read(pa).unwrap();
            let bytes_b = std::fs::read(pb).unwrap();
            assert_eq!(
                bytes_a, bytes_b,
                "{path:?}: data files differ between identical runs"
            );
        }
        assert_eq!(a.manifest.files, b.manifest.files);
        assert_eq!(a.manifest.config_digest, b.manifest.config_digest);
    }
    criterion.pass();
}

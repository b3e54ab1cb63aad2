//! Property tests over the device, circuit, and controller models.

use proptest::prelude::*;

use memdc_core::circuit::BankSpec;
use memdc_core::config::{cryo_bank, room_bank};
use memdc_core::device::{
    AmplifierModel, DeviceSpec, MemristorState, PulseSpec, TemperatureRegime,
    DEFAULT_MAX_WRITE_VOLTS,
};
use memdc_core::programming::{program_source, tune_resistance, TuneParams};
use memdc_core::rng::Stream;

fn test_device_spec() -> DeviceSpec {
    DeviceSpec {
        g_min_siemens: 20.0e-6,
        g_max_siemens: 180.0e-6,
        initial_conductance_siemens: 90.0e-6,
        write_gain_siemens_per_volt: 3.0e-6,
        write_threshold_volts: 0.8,
        c2c_sigma: 0.05,
        read_noise_alpha: 0.004,
        read_noise_floor_ohms: 0.0,
        drift_rate_per_second: 1e-4,
        iv_beta_per_volt2: 0.0,
        max_write_volts: DEFAULT_MAX_WRITE_VOLTS,
    }
}

fn unit_gain_amplifier() -> AmplifierModel {
    AmplifierModel {
        nominal_closed_loop_gain: 2.0,
        gain_anchors: vec![(4.2, 1.0), (300.0, 1.0)],
        gain_plateau_below_kelvin: 4.2,
        offset_volts: 0.0,
        idle_anchors: vec![(300.0, 1.0e-3)],
        v_dd_volts: 2.7,
        v_ss_volts: -2.7,
        output_headroom_volts: 0.2,
        supply_reference_volts: 2.7,
        supply_gain_slope_per_volt: 0.0,
    }
}

proptest! {
    /// Conductance never leaves its window under any pulse/drift sequence.
    #[test]
    fn conductance_stays_bounded_under_random_sequences(
        seed in 0u64..1000,
        ops in prop::collection::vec((0.0f64..3.0, prop::bool::ANY, 0.0f64..50.0), 1..120),
    ) {
        let spec = test_device_spec();
        let mut device = MemristorState::from_spec(&spec, Stream::derive(seed, &[1])).unwrap();
        for (amplitude, negative, dt) in ops {
            let signed = if negative { -amplitude } else { amplitude };
            device
                .apply_write_pulse(&PulseSpec { amplitude_volts: signed, width_seconds: 200e-9 })
                .unwrap();
            device.drift_step(dt);
            let g = device.conductance_siemens();
            prop_assert!(g >= spec.g_min_siemens && g <= spec.g_max_siemens);
        }
    }

    /// With c2c noise off, the write response is deterministic and monotone
    /// in amplitude above the threshold.
    #[test]
    fn noiseless_writes_are_monotone_in_amplitude(
        a in 0.81f64..2.0,
        extra in 0.01f64..0.9,
    ) {
        let mut spec = test_device_spec();
        spec.c2c_sigma = 0.0;
        let mut low = MemristorState::from_spec(&spec, Stream::derive(1, &[2])).unwrap();
        let mut high = low.clone();
        low.apply_write_pulse(&PulseSpec { amplitude_volts: a, width_seconds: 200e-9 }).unwrap();
        high.apply_write_pulse(&PulseSpec {
            amplitude_volts: (a + extra).min(3.0),
            width_seconds: 200e-9,
        }).unwrap();
        prop_assert!(high.conductance_siemens() >= low.conductance_siemens());

        // Determinism: repeating the same pulse from the same state gives
        // the same result bit for bit.
        let mut replay = MemristorState::from_spec(&spec, Stream::derive(1, &[2])).unwrap();
        replay.apply_write_pulse(&PulseSpec { amplitude_volts: a, width_seconds: 200e-9 }).unwrap();
        prop_assert_eq!(
            replay.conductance_siemens().to_bits(),
            low.conductance_siemens().to_bits()
        );
    }

    /// The clamped output never exceeds the rails minus headroom, for any
    /// device configuration.
    #[test]
    fn output_respects_the_rails(
        n in 1usize..16,
        seed in 0u64..500,
        g_scale in 0.02f64..50.0,
        v_in in -1.0f64..1.0,
    ) {
        prop_assume!(v_in.abs() > 1e-3);
        let mut spec = test_device_spec();
        spec.read_noise_alpha = 0.0;
        spec.c2c_sigma = 0.0;
        spec.drift_rate_per_second = 0.0;
        let bank_spec = BankSpec {
            n_memristors: n,
            r_in_ohms: 3000.0 * g_scale,
            v_in_volts: v_in,
            device: spec,
            amplifier: unit_gain_amplifier(),
            regime: TemperatureRegime::room(),
        };
        let mut bank = bank_spec.instantiate(seed, 3, 0).unwrap();
        let mut picks = Stream::derive(seed, &[4]);
        for i in 0..n {
            let g = 20.0e-6 + picks.uniform() * 160.0e-6;
            bank.device_mut(i).unwrap().set_conductance_siemens(g).unwrap();
        }
        let sample = bank.output_voltage().unwrap();
        prop_assert!(sample.v_out_volts <= 2.7 - 0.2 + 1e-12);
        prop_assert!(sample.v_out_volts >= -2.7 + 0.2 - 1e-12);
    }

    /// Gain-equation round trip: with unit gain factor and zero offset,
    /// v_out * r_in / v_in recovers the feedback resistance.
    #[test]
    fn unsaturated_output_recovers_the_feedback_resistance(
        seed in 0u64..500,
        n in 1usize..6,
    ) {
        let mut spec = test_device_spec();
        spec.read_noise_alpha = 0.0;
        spec.c2c_sigma = 0.0;
        spec.drift_rate_per_second = 0.0;
        let bank_spec = BankSpec {
            n_memristors: n,
            r_in_ohms: 30_000.0,
            v_in_volts: 0.05,
            device: spec,
            amplifier: unit_gain_amplifier(),
            regime: TemperatureRegime::room(),
        };
        let mut bank = bank_spec.instantiate(seed, 5, 0).unwrap();
        let mut picks = Stream::derive(seed, &[6]);
        for i in 0..n {
            let g = 20.0e-6 + picks.uniform() * 160.0e-6;
            bank.device_mut(i).unwrap().set_conductance_siemens(g).unwrap();
        }
        let r_mem = bank.feedback_resistance_ohms().unwrap();
        let v = bank.output_voltage().unwrap().v_out_volts;
        let recovered = v * 30_000.0 / 0.05;
        prop_assert!((recovered - r_mem).abs() <= 1e-12 * r_mem);
    }
}

/// After programming with zero read noise, the summed conductance matches
/// the feedback-conductance budget within the balancing tolerance.
#[test]
fn balancing_identity_holds_without_read_noise() {
    for seed in 0..10u64 {
        let mut bank_spec = room_bank();
        bank_spec.device.read_noise_alpha = 0.0;
        let mut bank = bank_spec.instantiate(seed, 7, 0).unwrap();
        let params = TuneParams::default();
        let report = program_source(&mut bank, 0.52, &params).unwrap();
        let budget = bank_spec.n_memristors as f64 / report.target_resistance_ohms;
        let total: f64 = bank.devices().iter().map(|d| d.conductance_siemens()).sum();
        assert!(
            (budget - total).abs() / budget <= params.balance_tolerance,
            "seed {seed}: residual {:.3e}",
            (budget - total).abs() / budget
        );
    }
}

/// Convergence stays above 99% at the noisiest corner of the model family:
/// read noise 1%, cycle-to-cycle sigma 5%, default tolerances.
#[test]
fn convergence_survives_the_noisy_model_corner() {
    let mut total = 0usize;
    let mut converged = 0usize;
    for (label, base) in [("room", room_bank()), ("cryo", cryo_bank())] {
        let mut picks = Stream::derive(909, &[0]);
        let mut worst_iterations = 0usize;
        for case in 0..250u64 {
            let mut spec = base.device.clone();
            spec.read_noise_alpha = 0.01;
            spec.c2c_sigma = 0.05;
            let span = spec.g_max_siemens - spec.g_min_siemens;
            spec.initial_conductance_siemens = spec.g_min_siemens + picks.uniform() * span;
            let target_g = spec.g_min_siemens + picks.uniform() * span;
            let mut device =
                MemristorState::from_spec(&spec, Stream::derive(910, &[case])).unwrap();
            let report =
                tune_resistance(&mut device, 1.0 / target_g, &TuneParams::default(), 0.3).unwrap();
            total += 1;
            if report.converged {
                converged += 1;
                worst_iterations = worst_iterations.max(report.iterations);
            }
        }
        assert!(
            worst_iterations <= 1000,
            "{label}: converged case exceeded the iteration bound"
        );
    }
    assert!(
        converged * 100 >= total * 99,
        "only {converged}/{total} converged at the noisy corner"
    );
}

/// Two banks instantiated from the same seeds walk bit-identical
/// trajectories through a full programming run.
#[test]
fn seeded_trajectories_are_bit_identical() {
    let bank_spec = room_bank();
    let params = TuneParams::default();
    let mut a = bank_spec.instantiate(31, 8, 4).unwrap();
    let mut b = bank_spec.instantiate(31, 8, 4).unwrap();
    let report_a = program_source(&mut a, 0.47, &params).unwrap();
    let report_b = program_source(&mut b, 0.47, &params).unwrap();
    assert_eq!(report_a, report_b);
    for (da, db) in a.devices().iter().zip(b.devices()) {
        assert_eq!(
            da.conductance_siemens().to_bits(),
            db.conductance_siemens().to_bits()
        );
    }
    assert_eq!(
        a.output_voltage().unwrap().v_out_volts.to_bits(),
        b.output_voltage().unwrap().v_out_volts.to_bits()
    );
}

//! Acceptance criteria. Each criterion prints one PASS/FAIL line; run with
//! `cargo test -p dropfsk --test acceptance -- --nocapture` to see them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dropfsk::calibration::{fit_affine, fit_affine_calibration, CalibrationPoint};
use dropfsk::channel::{perturb_arrivals, propagate, ChannelModel, TIE_BREAK_S};
use dropfsk::harness::{run_batch, run_repetitions};
use dropfsk::modem::{classify, compute_thresholds};
use dropfsk::photodetect::{detect_spikes, synthesize_trace, PulseModel, SpikeDetectorParams};
use dropfsk::transmitter::{
    generate_droplets, ControllerModel, GenJitterModel, PressureSchedule, Segment,
};
use dropfsk::{profiles, CalibrationCurve, DropletEventSeries, EventOrigin};

const SYMBOL_PRESSURES: [f64; 4] = [217.5, 225.0, 232.5, 240.0];
const TARGET_THRESHOLDS: [f64; 3] = [2.51, 4.05, 5.69];

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// 1. Midpoints of the reconstructed means reproduce the thresholds to
///    0.035 Hz; the least-squares oracle gives {2.493, 4.083, 5.673}.
fn threshold_reconstruction() -> Outcome {
    let curve =
        fit_affine_calibration(&SYMBOL_PRESSURES, &TARGET_THRESHOLDS).map_err(|e| e.to_string())?;
    let mids = compute_thresholds(&curve.means()).map_err(|e| e.to_string())?;
    let residual = mids
        .iter()
        .zip(TARGET_THRESHOLDS)
        .map(|(m, t)| (m - t).abs())
        .fold(0.0, f64::max);
    let oracle = [2.493_333, 4.083_333, 5.673_333];
    let oracle_dev = mids
        .iter()
        .zip(oracle)
        .map(|(m, o)| (m - o).abs())
        .fold(0.0, f64::max);
    let fit = fit_affine(&SYMBOL_PRESSURES, &TARGET_THRESHOLDS).map_err(|e| e.to_string())?;
    check(
        residual <= 0.035 && oracle_dev < 1e-5 && (fit.max_residual - residual).abs() < 1e-12,
        format!("midpoints {mids:.4?}, max residual {residual:.4} Hz (≤ 0.035)"),
    )
}

/// 2. Noise-free decode∘encode is exact for 100 random length-50 sequences
///    at 20 s and 12 s symbols.
fn zero_noise_round_trip() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for base in [profiles::paper_20s(), profiles::paper_12s()] {
        let mut spec = profiles::noiseless(base);
        spec.n_symbols = 50;
        spec.repetitions = 100;
        spec.master_seed = 2024;
        let reports = run_repetitions(&spec).map_err(|e| e.to_string())?;
        let errors: u64 = reports.iter().map(|r| r.errors()).sum();
        ok &= errors == 0 && reports.len() == 100;
        detail.push(format!("{} s: {errors} errors", spec.fsk.symbol_interval));
    }
    check(ok, format!("100 × 50 symbols, {}", detail.join(", ")))
}

/// 3. ≥ 95 % of 200 noisy 20-symbol runs at 20 s are error-free.
/// 4. Mean errors per 20 symbols at 12 s lie in [0, 2] and mean SER at 12 s
///    is not below that at 20 s.
fn noisy_profiles() -> (Outcome, Outcome) {
    let run = |mut spec: dropfsk::ExperimentSpec| {
        spec.repetitions = 200;
        run_batch(&spec).map_err(|e| e.to_string())
    };
    let (slow, fast) = match (run(profiles::paper_20s()), run(profiles::paper_12s())) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return (Err(e.clone()), Err(e)),
    };
    let c3 = check(
        slow.error_free_fraction >= 0.95,
        format!(
            "20 s: {:.1}% of 200 runs error-free (≥ 95%), mean errors {:.3}",
            100.0 * slow.error_free_fraction,
            slow.mean_errors
        ),
    );
    let c4 = check(
        (0.0..=2.0).contains(&fast.mean_errors) && fast.mean_ser >= slow.mean_ser,
        format!(
            "12 s/12.4 s: mean errors {:.3} per 20 (in [0, 2]); mean SER 12 s {:.4} ≥ 20 s {:.4}",
            fast.mean_errors, fast.mean_ser, slow.mean_ser
        ),
    );
    (c3, c4)
}

/// 5. detect(synthesize(A)) recovers every arrival within two sample periods
///    for separations > 6 widths and SNR ≥ 10.
fn detector_round_trip() -> Outcome {
    let pulse_base = PulseModel {
        amplitude: 1.0,
        width_sigma: 0.010,
        baseline: 0.0,
        noise_sigma: 0.1,
        rng_seed: 0,
    };
    let rate = 100.0;
    let params = SpikeDetectorParams::for_pulse(&pulse_base);
    let mut worst = 0.0f64;
    let mut total = 0usize;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(5..40);
        let mut t = 0.2;
        let mut arrivals = Vec::with_capacity(n);
        for _ in 0..n {
            t += 6.0 * pulse_base.width_sigma + 1e-3 + rng.random::<f64>() * 0.5;
            arrivals.push(t);
        }
        let truth = DropletEventSeries::new(arrivals, EventOrigin::Arrival).unwrap();
        let pulse = PulseModel {
            rng_seed: seed,
            ..pulse_base
        };
        let trace = synthesize_trace(&truth, &pulse, rate, t + 0.2).map_err(|e| e.to_string())?;
        let det = detect_spikes(&trace, &params).map_err(|e| e.to_string())?;
        if det.len() != truth.len() {
            return Err(format!(
                "seed {seed}: {} detected vs {} true",
                det.len(),
                truth.len()
            ));
        }
        for (d, a) in det.timestamps().iter().zip(truth.timestamps()) {
            worst = worst.max((d - a).abs());
        }
        total += truth.len();
    }
    check(
        worst <= 2.0 / rate,
        format!(
            "100 seeds, {total} arrivals, worst offset {:.1} ms (≤ 20 ms)",
            worst * 1e3
        ),
    )
}

/// 6. Mean count at 4 Hz over 100 s with CV 0.1 is within 3σ of 400, where
///    σ² = CV²·400 is the renewal count variance.
fn point_process_count() -> Outcome {
    let curve = CalibrationCurve::new(vec![CalibrationPoint::new(225.0, 4.0, 0.0)]).unwrap();
    let schedule = PressureSchedule::new(
        vec![Segment {
            setpoint: 225.0,
            start_time: 0.0,
        }],
        100.0,
    )
    .unwrap();
    let controller = ControllerModel::new(0.0, 225.0).unwrap();
    let cv = 0.1;
    let mut sum = 0.0;
    for seed in 0..1000u64 {
        let ev = generate_droplets(
            &schedule,
            &controller,
            &curve,
            &GenJitterModel::interval_cv(cv, seed),
        )
        .map_err(|e| e.to_string())?;
        sum += ev.len() as f64;
    }
    let mean = sum / 1000.0;
    let sigma = (cv * cv * 400.0f64).sqrt();
    check(
        (mean - 400.0).abs() <= 3.0 * sigma,
        format!("mean count {mean:.3}, |Δ| ≤ 3σ = {:.1}", 3.0 * sigma),
    )
}

/// 7. Midpoint classification is self-consistent and invariant to positive
///    rescaling of means and estimates.
fn classifier_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let m = rng.random_range(2..=8);
        let mut means = vec![rng.random_range(0.1..5.0)];
        for _ in 1..m {
            let last = *means.last().unwrap();
            means.push(last + rng.random_range(0.01..3.0));
        }
        let th = compute_thresholds(&means).map_err(|e| e.to_string())?;
        if let Some(k) = (0..m).find(|&k| classify(means[k], &th) != k) {
            return Err(format!("case {case}: mean {k} misclassified"));
        }
        let scale: f64 = rng.random_range(0.05..20.0);
        let scaled: Vec<f64> = means.iter().map(|x| x * scale).collect();
        let th_scaled = compute_thresholds(&scaled).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let f = rng.random_range(0.01..means[m - 1] * 1.5);
            if classify(f, &th) != classify(f * scale, &th_scaled) {
                return Err(format!(
                    "case {case}: rescaling by {scale} changed decision at {f}"
                ));
            }
        }
    }
    check(
        true,
        "1000 mean vectors (m = 2..8), 20 000 rescaled decisions".into(),
    )
}

/// Reference ordering: insertion sort with the same tie separation.
fn sort_oracle(mut xs: Vec<f64>) -> Vec<f64> {
    for i in 1..xs.len() {
        let mut j = i;
        while j > 0 && xs[j - 1] > xs[j] {
            xs.swap(j - 1, j);
            j -= 1;
        }
    }
    for i in 1..xs.len() {
        if xs[i] <= xs[i - 1] {
            xs[i] = xs[i - 1] + TIE_BREAK_S;
        }
    }
    xs
}

/// 8. Lossless channel conserves count, sorts output, and agrees with an
///    independent sort of the perturbed times.
fn channel_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000u64 {
        let n = rng.random_range(0..120);
        let mut t = 0.0;
        let gen: Vec<f64> = (0..n)
            .map(|_| {
                t += rng.random_range(0.01..0.8);
                t
            })
            .collect();
        let gen = DropletEventSeries::new(gen, EventOrigin::Generation).unwrap();
        let model = ChannelModel {
            transit_delay: rng.random_range(0.0..1.0),
            jitter_sigma: 0.2,
            loss_prob: 0.0,
            enforce_fifo: true,
            rng_seed: case,
        };
        let out = propagate(&gen, &model).map_err(|e| e.to_string())?;
        let perturbed = perturb_arrivals(&gen, &model).map_err(|e| e.to_string())?;
        let oracle = sort_oracle(perturbed);
        if out.len() != gen.len() {
            return Err(format!("case {case}: {} in, {} out", gen.len(), out.len()));
        }
        if !out.timestamps().windows(2).all(|w| w[1] > w[0]) {
            return Err(format!("case {case}: output not strictly increasing"));
        }
        if out.timestamps() != oracle.as_slice() {
            return Err(format!("case {case}: output differs from sort oracle"));
        }
    }
    check(true, "1000 random instances, jitter σ = 0.2 s".into())
}

#[test]
fn acceptance_criteria() {
    let (c3, c4) = noisy_profiles();
    let results = [
        ("1 threshold reconstruction", threshold_reconstruction()),
        ("2 zero-noise round trip", zero_noise_round_trip()),
        ("3 noisy profile 20 s", c3),
        ("4 noisy profile 12 s", c4),
        ("5 detector round trip", detector_round_trip()),
        ("6 point-process count", point_process_count()),
        ("7 classifier consistency", classifier_consistency()),
        ("8 channel conservation", channel_conservation()),
    ];
    let mut failed = Vec::new();
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                println!("FAIL  {name}: {detail}");
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

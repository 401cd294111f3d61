use dropfsk::transmitter::{generate_droplets, Segment};
use dropfsk::{
    CalibrationCurve, CalibrationPoint, ControllerModel, GenJitterModel, PressureSchedule,
};

fn constant_rate(
    freq: f64,
    duration: f64,
) -> (CalibrationCurve, PressureSchedule, ControllerModel) {
    let curve = CalibrationCurve::new(vec![CalibrationPoint::new(225.0, freq, 0.0)]).unwrap();
    let schedule = PressureSchedule::new(
        vec![Segment {
            setpoint: 225.0,
            start_time: 0.0,
        }],
        duration,
    )
    .unwrap();
    (curve, schedule, ControllerModel::new(0.0, 225.0).unwrap())
}

fn counts(cv: f64, n: u64) -> Vec<f64> {
    let (curve, schedule, controller) = constant_rate(4.0, 100.0);
    (0..n)
        .map(|seed| {
            generate_droplets(
                &schedule,
                &controller,
                &curve,
                &GenJitterModel::interval_cv(cv, 1000 + seed),
            )
            .unwrap()
            .len() as f64
        })
        .collect()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (
        mean,
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

// Ordinary renewal process: E[N(t)] ≈ t/μ + (CV² − 1)/2 and
// Var[N(t)] ≈ CV²·t/μ for t ≫ μ.
#[test]
fn count_moments_follow_renewal_theory() {
    for cv in [0.1, 0.3] {
        let xs = counts(cv, 2000);
        let (mean, var) = mean_var(&xs);
        let expected = 400.0 + (cv * cv - 1.0) / 2.0;
        let se = (var / xs.len() as f64).sqrt();
        assert!(
            (mean - expected).abs() < 4.0 * se + 0.05,
            "cv {cv}: mean {mean} vs {expected}"
        );
        let want_var = cv * cv * 400.0;
        assert!(
            (var / want_var - 1.0).abs() < 0.2,
            "cv {cv}: var {var} vs {want_var}"
        );
    }
}

#[test]
fn zero_cv_is_deterministic() {
    let (curve, schedule, controller) = constant_rate(4.0, 100.0);
    let ev = generate_droplets(&schedule, &controller, &curve, &GenJitterModel::none()).unwrap();
    assert_eq!(ev.len(), 400);
    for (i, t) in ev.timestamps().iter().enumerate() {
        assert!((t - (i as f64 + 1.0) * 0.25).abs() < 1e-9);
    }
}

mod common;

use discovery_core::telemetry::{
    bootstrap_plugin, default_deltas, fit_pass_curve, influence_slope, leverage_corridor_advice, plugin_bounty,
    simulate_cohort, stress_bar, stress_from_records, BarAdvice, BootstrapConfig, Corridor, FitConfig, ProxyModel,
    QualityPrior, StressDelta,
};
use discovery_core::{CohortSpec, ErrorCode, PassModel, Scenario};

fn cohort(n: usize, prior: QualityPrior, seed: u64) -> CohortSpec {
    CohortSpec { n, prior, proxy: ProxyModel::default(), pass_model: None, seed }
}

fn uniform() -> QualityPrior {
    QualityPrior::Uniform { lo: 0.1, hi: 0.6 }
}

#[test]
fn point_mass_pass_share() {
    let recs = simulate_cohort(&cohort(100_000, QualityPrior::Point { mu: 0.3 }, 1), &PassModel::binomial(10, 3)).unwrap();
    let share = recs.iter().filter(|r| r.pass).count() as f64 / recs.len() as f64;
    assert!((share - common::tail(10, 3, 0.3)).abs() < 0.005, "{share}");
    for r in recs.iter().take(100) {
        assert_eq!(r.successes, r.outcomes.iter().map(|&y| y as u32).sum::<u32>());
        assert_eq!(r.pass, r.successes >= 3);
        assert_eq!(r.proxy, r.mu_hidden);
    }
}

#[test]
fn single_record_and_determinism() {
    let one = simulate_cohort(&cohort(1, uniform(), 4), &PassModel::binomial(10, 3)).unwrap();
    assert_eq!(one.len(), 1);
    assert!(one[0].successes <= 10);
    let a = simulate_cohort(&cohort(500, uniform(), 9), &PassModel::binomial(10, 3)).unwrap();
    let b = simulate_cohort(&cohort(500, uniform(), 9), &PassModel::binomial(10, 3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn noisy_proxy_moves_off_quality() {
    let spec = CohortSpec { proxy: ProxyModel { a: 2.0, b: 0.1, sigma: 0.05 }, ..cohort(2000, uniform(), 2) };
    let recs = simulate_cohort(&spec, &PassModel::binomial(10, 3)).unwrap();
    let mean_resid = recs.iter().map(|r| r.proxy - (2.0 * r.mu_hidden + 0.1)).sum::<f64>() / recs.len() as f64;
    assert!(mean_resid.abs() < 0.01);
    assert!(recs.iter().any(|r| (r.proxy - (2.0 * r.mu_hidden + 0.1)).abs() > 1e-3));
}

#[test]
fn fit_recovers_tail_and_slope() {
    let recs = simulate_cohort(&cohort(100_000, uniform(), 3), &PassModel::binomial(10, 3)).unwrap();
    let fit = fit_pass_curve(&recs, &FitConfig::default()).unwrap();
    assert!((fit.eval(0.3) - common::tail(10, 3, 0.3)).abs() < 0.02, "{}", fit.eval(0.3));
    let oracle = common::slope(10, 3, fit.median_proxy);
    assert!((fit.slope_at_median - oracle).abs() <= 0.25 * oracle, "{} vs {oracle}", fit.slope_at_median);
    for w in fit.fitted.windows(2) {
        assert!(w[1] >= w[0]);
    }
}

#[test]
fn fit_error_shrinks_with_cohort_size() {
    let mut errs = Vec::new();
    for n in [1_000, 10_000, 100_000] {
        let recs = simulate_cohort(&cohort(n, uniform(), 77), &PassModel::binomial(10, 3)).unwrap();
        let fit = fit_pass_curve(&recs, &FitConfig::default()).unwrap();
        let err = (0..=40)
            .map(|i| 0.15 + 0.01 * i as f64)
            .map(|x| (fit.eval(x) - common::tail(10, 3, x)).abs())
            .fold(0.0, f64::max);
        errs.push(err);
    }
    assert!(errs[1] <= errs[0] && errs[2] <= errs[1], "{errs:?}");
    assert!(errs[2] <= 0.02, "{errs:?}");
}

#[test]
fn constant_quality_fit_is_flat_and_unreliable() {
    let recs = simulate_cohort(&cohort(2000, QualityPrior::Point { mu: 0.3 }, 5), &PassModel::binomial(10, 3)).unwrap();
    let fit = fit_pass_curve(&recs, &FitConfig::default()).unwrap();
    assert!(fit.unreliable);
    assert_eq!(fit.slope_at_median, 0.0);
    assert!(fit.fitted.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn degenerate_cohort_is_rejected() {
    let recs = simulate_cohort(&cohort(200, QualityPrior::Point { mu: 0.001 }, 5), &PassModel::binomial(10, 10)).unwrap();
    let err = fit_pass_curve(&recs, &FitConfig::default()).unwrap_err();
    assert_eq!(err.code(), ErrorCode::DegeneratePassRate);
}

#[test]
fn influence_slope_homogeneous_cohort() {
    let recs = simulate_cohort(&cohort(100_000, QualityPrior::Point { mu: 0.3 }, 6), &PassModel::binomial(10, 3)).unwrap();
    let est = influence_slope(&recs, &[1.0; 10], 3).unwrap();
    let oracle = 10.0 * common::pmf(9, 2, 0.3);
    assert!((oracle - 2.668).abs() < 1e-3);
    assert!((est.estimate - oracle).abs() <= 3.0 * est.se, "{est:?}");

    assert_eq!(influence_slope(&recs, &[0.0; 10], 3).unwrap().estimate, 0.0);
    assert!(influence_slope(&recs, &[1.0; 9], 3).unwrap_err().is_input());
}

#[test]
fn influence_single_slot_identity() {
    let recs = simulate_cohort(&cohort(300, uniform(), 8), &PassModel::binomial(1, 1)).unwrap();
    let est = influence_slope(&recs, &[0.7], 1).unwrap();
    assert!((est.estimate - 0.7).abs() < 1e-12);
    assert!(est.se < 1e-12);
}

#[test]
fn influence_estimator_is_unbiased() {
    let oracle = 10.0 * common::pmf(9, 2, 0.3);
    let (mut sum, mut var) = (0.0, 0.0);
    let reps = 200;
    for seed in 0..reps {
        let recs = simulate_cohort(&cohort(10_000, QualityPrior::Point { mu: 0.3 }, 1000 + seed), &PassModel::binomial(10, 3)).unwrap();
        let e = influence_slope(&recs, &[1.0; 10], 3).unwrap();
        sum += e.estimate;
        var += e.se * e.se;
    }
    let mean = sum / reps as f64;
    // pooled per-replicate standard error
    let pooled_se = (var / reps as f64).sqrt();
    assert!((mean - oracle).abs() <= pooled_se, "mean {mean} oracle {oracle} se {pooled_se}");
}

#[test]
fn bootstrap_single_draw_and_determinism() {
    let recs = simulate_cohort(&cohort(3000, uniform(), 10), &PassModel::binomial(10, 3)).unwrap();
    let skel = Scenario::baseline();
    let cfg = BootstrapConfig { n_boot: 1, seed: 3, mu_fb: Some(0.56), ..BootstrapConfig::default() };
    let one = bootstrap_plugin(&recs, &skel, &cfg).unwrap();
    assert_eq!(one.ci_p.lo, one.ci_p.hi);

    let cfg = BootstrapConfig { n_boot: 50, seed: 3, mu_fb: Some(0.56), ..BootstrapConfig::default() };
    let a = bootstrap_plugin(&recs, &skel, &cfg).unwrap();
    let b = bootstrap_plugin(&recs, &skel, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn attenuated_slope_scales_bounty() {
    let skel = Scenario::baseline();
    let full = plugin_bounty(&skel, 0.6, 2.5, 0.56);
    let damped = plugin_bounty(&skel, 0.6, 0.8 * 2.5, 0.56);
    // only the denominator carries the slope when ΔH·μ·P′ is dropped; check the full ratio instead
    let num = |dp: f64| 10.0 + 20.0 * 0.6 + 0.56 * 20.0 * dp;
    assert!((full - num(2.5) * 0.5 / 2.5).abs() < 1e-12);
    assert!((damped - num(2.0) * 0.5 / 2.0).abs() < 1e-12);

    let recs = simulate_cohort(&cohort(3000, uniform(), 10), &PassModel::binomial(10, 3)).unwrap();
    let cfg = BootstrapConfig { n_boot: 5, mu_fb: Some(0.56), ..BootstrapConfig::default() };
    let rep = bootstrap_plugin(&recs, &skel, &cfg).unwrap();
    assert!((rep.attenuated_b_star / rep.point.b_star - 1.25).abs() < 1e-12);
}

#[test]
fn bootstrap_interval_covers_truth() {
    let skel = Scenario::baseline();
    let mut hits = 0;
    let trials = 50;
    for t in 0..trials {
        let recs = simulate_cohort(&cohort(2000, uniform(), 500 + t), &PassModel::binomial(10, 3)).unwrap();
        let cfg = BootstrapConfig { n_boot: 200, seed: t, mu_fb: Some(0.56), ..BootstrapConfig::default() };
        let rep = bootstrap_plugin(&recs, &skel, &cfg).unwrap();
        // truth is the tail at the true quality behind the median proxy (σ = 0)
        let truth = common::tail(10, 3, rep_median(&recs));
        if rep.ci_p.lo <= truth && truth <= rep.ci_p.hi {
            hits += 1;
        }
    }
    assert!(hits as f64 >= 0.9 * trials as f64, "{hits}/{trials}");
}

fn rep_median(recs: &[discovery_core::TelemetryRecord]) -> f64 {
    let mut xs: Vec<f64> = recs.iter().map(|r| r.proxy).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[test]
fn stress_rows_from_model() {
    let rows = stress_bar(&PassModel::binomial(10, 3), 0.33, &default_deltas()).unwrap();
    let base = rows.iter().find(|r| r.dq == 0 && r.ds == 0).unwrap();
    let up = rows.iter().find(|r| r.dq == 0 && r.ds == 1).unwrap();
    assert!((base.p - common::tail(10, 3, 0.33)).abs() < 1e-12);
    assert!((base.p - 0.693).abs() < 0.01);
    assert!((up.p - common::tail(10, 4, 0.33)).abs() < 1e-12);
    let longer = rows.iter().find(|r| r.dq == 1).unwrap();
    assert_eq!(longer.s, 3);
    assert!(longer.p > base.p);
    assert!(stress_bar(&PassModel::binomial(10, 3), 0.33, &[]).unwrap().is_empty());

    let edge = stress_bar(&PassModel::binomial(3, 3), 0.3, &[StressDelta { dq: 0, ds: 1 }]).unwrap();
    assert!(!edge[0].valid);
}

#[test]
fn stress_rows_from_records() {
    let recs = simulate_cohort(&cohort(20_000, uniform(), 12), &PassModel::binomial(10, 3)).unwrap();
    let rows = stress_from_records(&recs, 3, &default_deltas(), &FitConfig::default()).unwrap();
    let base = rows.iter().find(|r| r.dq == 0 && r.ds == 0).unwrap();
    let up = rows.iter().find(|r| r.dq == 0 && r.ds == 1).unwrap();
    assert!(up.p < base.p);
    assert!(!rows.iter().find(|r| r.dq == 1).unwrap().valid);
    let shorter = rows.iter().find(|r| r.dq == -1).unwrap();
    assert!(shorter.valid && shorter.p < base.p);
}

#[test]
fn corridor_examples() {
    let c = Corridor::default();
    assert_eq!(leverage_corridor_advice(3.4, 0.9, &c).unwrap().action, BarAdvice::RaiseS);
    assert_eq!(leverage_corridor_advice(3.4, 0.5, &c).unwrap().action, BarAdvice::Hold);
    let low = leverage_corridor_advice(3.4, 0.05, &c).unwrap();
    assert_eq!(low.action, BarAdvice::LowerS);
    assert_eq!(low.delta_s, -1);
    for rate in [0.0, 0.2, 0.5, 0.8, 1.0] {
        assert!(leverage_corridor_advice(0.1, rate, &Corridor { leverage_floor: Some(5.0), ..c }).unwrap().delta_s.abs() <= 1);
    }
}

mod common;

use discovery_core::scheduling::{compare_schedules, discounted_mass, earliest_schedule};
use discovery_core::{Scenario, Schedule};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Baseline with κ above the single-crossing bound; at κ = 60 the gap crosses
/// three times once q drops to about 6.5.
fn regular_template() -> Scenario {
    let mut s = Scenario::baseline();
    s.creator.kappa = 110.0;
    s
}

#[test]
fn earliest_versus_delayed_block() {
    let early = Schedule::geometric((1..=10).collect(), 0.9);
    let late = Schedule::geometric((6..=15).collect(), 0.9);
    let qe: f64 = (0..10).map(|k| 0.9f64.powi(k)).sum();
    let ql: f64 = (5..15).map(|k| 0.9f64.powi(k)).sum();
    assert!((discounted_mass(&early) - qe).abs() < 1e-12);
    assert!((qe - 6.5132).abs() < 1e-4 && (ql - 3.84599).abs() < 1e-5);

    let cmp = compare_schedules(&[late, early], &regular_template(), 1e-10).unwrap();
    assert_eq!(cmp.earliest_index, Some(1));
    assert!(cmp.earliest_maximizes_mu);
    let oracle = |q: f64| common::Prim { q, kappa: 110.0, ..common::Prim::baseline() }.mu_star();
    assert!((cmp.rows[0].mu_star - oracle(qe)).abs() < 1e-8);
    assert!((cmp.rows[1].mu_star - oracle(ql)).abs() < 1e-8);
    assert!(cmp.rows[0].mu_star >= cmp.rows[1].mu_star);
}

#[test]
fn identical_and_single_slot_schedules() {
    let s = Schedule::geometric(vec![2, 4, 7], 0.8);
    let cmp = compare_schedules(&[s.clone(), s], &regular_template(), 1e-10).unwrap();
    assert_eq!(cmp.rows[0].mu_star, cmp.rows[1].mu_star);

    let cmp = compare_schedules(
        &[Schedule::geometric(vec![2], 0.9), Schedule::geometric(vec![1], 0.9)],
        &Scenario::baseline(),
        1e-10,
    )
    .unwrap();
    assert_eq!(cmp.rows[0].q_tau, 1.0);
    assert!(cmp.rows[0].mu_star >= cmp.rows[1].mu_star);
}

fn random_schedule(rng: &mut ChaCha8Rng, count: usize) -> Schedule {
    let span = rng.random_range(count..=3 * count);
    let mut slots: Vec<u32> = sample(rng, span, count).into_iter().map(|i| i as u32 + 1).collect();
    slots.sort_unstable();
    Schedule::geometric(slots, 0.9)
}

#[test]
fn earliest_dominates_random_schedules() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let count = rng.random_range(1..=12usize);
        let tau = random_schedule(&mut rng, count);
        let early = earliest_schedule(count as u32, Some(1), 0.9).unwrap();
        let (me, mt) = (discounted_mass(&early), discounted_mass(&tau));
        if tau.slots == early.slots {
            assert_eq!(me, mt);
        } else {
            assert!(me > mt, "{:?}", tau.slots);
        }
    }
}

#[test]
fn capped_earliest_dominates_multisets() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let count = rng.random_range(1..=10u32);
        let cap = rng.random_range(1..=3u32);
        let mut slots: Vec<u32> = Vec::new();
        let mut t = 1;
        while slots.len() < count as usize {
            let k = rng.random_range(0..=cap).min(count - slots.len() as u32);
            slots.extend(std::iter::repeat_n(t, k as usize));
            t += 1;
        }
        let tau = Schedule { cap: Some(cap), ..Schedule::geometric(slots, 0.85) };
        tau.validate("").unwrap();
        let early = earliest_schedule(count, Some(cap), 0.85).unwrap();
        assert!(discounted_mass(&early) >= discounted_mass(&tau) - 1e-15);
    }
}

#[test]
fn equilibrium_tracks_discounted_mass_and_shares_pass_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let schedules: Vec<Schedule> = (0..15).map(|_| random_schedule(&mut rng, 8)).collect();
    let cmp = compare_schedules(&schedules, &regular_template(), 1e-10).unwrap();
    for w in cmp.rows.windows(2) {
        assert!(w[0].q_tau >= w[1].q_tau);
        assert!(w[0].mu_star >= w[1].mu_star - 1e-12);
    }
    // P and P′ are evaluated at each schedule's own μ*; at equal μ they coincide bit for bit
    let model = &regular_template().policy.pass_model;
    for r in &cmp.rows {
        let pt = model.eval(r.mu_star).unwrap();
        assert_eq!(pt.p.to_bits(), r.p.to_bits());
        assert_eq!(pt.dp.to_bits(), r.p_prime.to_bits());
    }
}

#[test]
fn explicit_weights_replace_geometric() {
    let s = Schedule { weights: Some(vec![1.0, 0.5, 0.4, 0.1]), ..Schedule::geometric(vec![1, 3], 0.9) };
    s.validate("").unwrap();
    assert!((discounted_mass(&s) - 1.4).abs() < 1e-15);
    let bad = Schedule { weights: Some(vec![1.0, 1.0]), ..Schedule::geometric(vec![1, 2], 0.9) };
    assert!(bad.validate("").is_err());
}

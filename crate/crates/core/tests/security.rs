use darklock::protocol::{DetectorModel, ProtocolConfig};
use darklock::security::{
    analyze, attempts_to_success, false_accept_rate, false_reject_rate, guess_probability, key_length_for_target,
    matchings_count, p_unrecoverable, pair_pass_probability, predicted_false_reject_rate, Adversary, GridPoint,
};
use num_bigint::BigUint;

/// Count perfect matchings by recursion on the lowest unmatched atom.
fn brute_force(free: u32) -> u64 {
    if free == 0 {
        return 1;
    }
    let first = free.trailing_zeros();
    let rest = free & !(1 << first);
    (0..32)
        .filter(|&j| rest >> j & 1 == 1)
        .map(|j| brute_force(rest & !(1 << j)))
        .sum()
}

#[test]
fn matching_counts_match_enumeration() {
    for n in (2..=10).step_by(2) {
        let want = brute_force((1u32 << n) - 1);
        assert_eq!(matchings_count(n).unwrap(), BigUint::from(want), "n={n}");
    }
    assert_eq!(matchings_count(24).unwrap(), BigUint::from(316_234_143_225u64));
    assert!(matchings_count(7).is_err());
}

#[test]
fn key_space_targets() {
    let p = guess_probability(24).unwrap();
    assert!((p - 1.0 / 316_234_143_225.0).abs() < 1e-25);
    assert!(p <= 1e-8);
    assert_eq!(key_length_for_target(1e-8).unwrap(), 20);
    assert!(guess_probability(18).unwrap() > 1e-8);
}

#[test]
fn ideal_lock_rejects_near_misses() {
    let cfg = ProtocolConfig::default();
    let far = false_accept_rate(4, DetectorModel::ideal(), 100_000, 1, Adversary::OnePairOff, &cfg).unwrap();
    assert_eq!(far.successes, 0);
    assert_eq!(far.ci95[0], 0.0);
    let lossy = DetectorModel { p_transit_loss: 0.5, ..DetectorModel::ideal() };
    let far = false_accept_rate(6, lossy, 20_000, 2, Adversary::OnePairOff, &cfg).unwrap();
    assert_eq!(far.successes, 0);
}

#[test]
fn random_guesses_succeed_at_the_guess_rate() {
    let trials = 1_000_000;
    let far = false_accept_rate(6, DetectorModel::ideal(), trials, 9, Adversary::RandomPassword, &ProtocolConfig::default())
        .unwrap();
    let p = 1.0 / 15.0;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    assert!((far.rate - p).abs() < 3.0 * sigma, "{} vs {p}", far.rate);
    assert!(far.ci95[0] < p && p < far.ci95[1]);
}

#[test]
fn synchronous_ideal_lock_never_rejects_the_key() {
    let frr = false_reject_rate(6, DetectorModel::ideal(), 100_000, 3, &ProtocolConfig::default()).unwrap();
    assert_eq!(frr.successes, 0);
}

#[test]
fn false_rejects_grow_with_asynchrony_and_length() {
    let cfg = ProtocolConfig::default();
    let frr = |n, eps| {
        let det = DetectorModel { asynchrony_epsilon: eps, ..DetectorModel::ideal() };
        false_reject_rate(n, det, 20_000, 4, &cfg).unwrap().rate
    };
    let by_eps: Vec<f64> = [0.0, 0.005, 0.02, 0.1].iter().map(|&e| frr(12, e)).collect();
    assert!(by_eps.windows(2).all(|w| w[0] <= w[1]), "{by_eps:?}");
    let by_n: Vec<f64> = [4, 8, 16, 24].iter().map(|&n| frr(n, 0.02)).collect();
    assert!(by_n.windows(2).all(|w| w[0] <= w[1]), "{by_n:?}");
}

#[test]
fn false_rejects_are_linear_for_small_asynchrony() {
    let cfg = ProtocolConfig::default();
    let pu = p_unrecoverable(DetectorModel::ideal(), &cfg).unwrap();
    assert_eq!(pu, 1.0);
    for eps in [0.002, 0.005, 0.01] {
        let det = DetectorModel { asynchrony_epsilon: eps, ..DetectorModel::ideal() };
        let est = false_reject_rate(24, det, 200_000, 5, &cfg).unwrap();
        let linear = 12.0 * eps * pu;
        assert!(((est.rate - linear) / linear).abs() < 0.1, "eps={eps}: {} vs {linear}", est.rate);
        let exact = predicted_false_reject_rate(24, det, &cfg).unwrap();
        assert!((est.rate - exact).abs() < 4.0 * est.stderr, "eps={eps}: {} vs {exact}", est.rate);
    }
}

#[test]
fn noisy_detectors_only_admit_exact_guesses() {
    let cfg = ProtocolConfig::default();
    let trials = 200_000;
    for det in [
        DetectorModel { eta1: 0.5, eta2: 0.9, p_transit_loss: 0.3, asynchrony_epsilon: 0.0 },
        DetectorModel { eta1: 0.1, eta2: 0.6, p_transit_loss: 0.8, asynchrony_epsilon: 0.05 },
    ] {
        let near = false_accept_rate(6, det, 20_000, 6, Adversary::OnePairOff, &cfg).unwrap();
        assert_eq!(near.successes, 0);
        // a random guess opens the lock only when it equals the key and every pair passes
        let q = pair_pass_probability(det, &cfg).unwrap();
        let want = q.powi(3) / 15.0;
        let far = false_accept_rate(6, det, trials, 7, Adversary::RandomPassword, &cfg).unwrap();
        let sigma = (want * (1.0 - want) / trials as f64).sqrt();
        assert!((far.rate - want).abs() < 3.0 * sigma, "{} vs {want}", far.rate);
    }
}

#[test]
fn resampling_attacker_needs_about_three_guesses_at_four_atoms() {
    let runs = 20_000;
    let attempts = attempts_to_success(4, DetectorModel::ideal(), runs, 1000, 8, &ProtocolConfig::default()).unwrap();
    assert!(attempts.iter().all(Option::is_some));
    let mean = attempts.iter().map(|a| a.unwrap() as f64).sum::<f64>() / runs as f64;
    // geometric with p = 1/3: sd = sqrt(6)
    assert!((mean - 3.0).abs() < 4.0 * 6f64.sqrt() / (runs as f64).sqrt(), "{mean}");
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let grid = [
        GridPoint { eta1: 0.7, eta2: 0.8, p_loss: 0.1, epsilon: 0.01, n: 6 },
        GridPoint { eta1: 1.0, eta2: 1.0, p_loss: 0.0, epsilon: 0.0, n: 8 },
    ];
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| analyze(8, &grid, 3000, 12, Adversary::OnePairOff, 1e-8, &ProtocolConfig::default()).unwrap())
    };
    let one = serde_json::to_string(&run(1)).unwrap();
    assert_eq!(one, serde_json::to_string(&run(4)).unwrap());
    assert_eq!(one, serde_json::to_string(&run(7)).unwrap());
}

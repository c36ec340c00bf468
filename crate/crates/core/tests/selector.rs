use chase_core::numerics::{grad_check, GradCheckOptions, ParamSet};
use chase_core::rng::{stream_rng, Stream};
use chase_core::selector::*;
use proptest::prelude::*;
use rand::Rng;

fn random_batch(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = stream_rng(seed, Stream::Data, 7);
    let x: Vec<f64> = (0..n * PHI_DIM).map(|_| rng.random_range(-2.0..2.0)).collect();
    let e: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
    let c: Vec<f64> = e.iter().map(|&e| if e > 0.0 { 1.0 } else if rng.random_bool(0.3) { 0.62 } else { 0.0 }).collect();
    (x, e, c)
}

#[test]
fn selector_loss_gradient_matches_finite_differences() {
    let cfg = SelectorConfig { pair_cap: 64, ..SelectorConfig::default() };
    for seed in 0..10 {
        let (x, e, c) = random_batch(seed, 40);
        let mut ps = ParamSet::new();
        let net = SelectorNet::new(&mut ps, cfg.hidden, seed).unwrap();
        let pairs = BatchPairs::sample(&e, &c, cfg.pair_cap, &mut stream_rng(seed, Stream::PairSampling, 0));
        assert!(!pairs.error.is_empty() && !pairs.cost.is_empty());
        ps.zero_grads();
        net.loss_and_grad(&mut ps, &x, &e, &c, &pairs, None, &cfg).unwrap();
        let report = grad_check(
            &mut ps,
            |p| Ok(selector_loss(&net.logits(p.values(), &x, e.len())?, &e, &c, &pairs, &cfg, None)),
            GradCheckOptions { seed, ..GradCheckOptions::default() },
        )
        .unwrap();
        assert!(report.checked >= 200, "{report:?}");
        assert!(report.passed, "{report:?}");
    }
}

#[test]
fn dropout_mask_gradient() {
    let cfg = SelectorConfig::default();
    let (x, e, c) = random_batch(3, 16);
    let mut ps = ParamSet::new();
    let net = SelectorNet::new(&mut ps, cfg.hidden, 1).unwrap();
    let pairs = BatchPairs::sample(&e, &c, cfg.pair_cap, &mut stream_rng(1, Stream::PairSampling, 0));
    let mask = chase_core::numerics::ops::dropout_mask(16 * cfg.hidden, 0.3, &mut stream_rng(2, Stream::Dropout, 0));
    ps.zero_grads();
    net.loss_and_grad(&mut ps, &x, &e, &c, &pairs, Some(&mask), &cfg).unwrap();
    let mut probe = ps.clone();
    let report = grad_check(
        &mut probe,
        |p| {
            let mut q = p.clone();
            q.zero_grads();
            net.loss_and_grad(&mut q, &x, &e, &c, &pairs, Some(&mask), &cfg)
        },
        GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}

/// Rank-based AUROC of scores against binary targets (ties count half).
fn auroc(scores: &[f64], pos: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &pi) in pos.iter().enumerate() {
        for (j, &pj) in pos.iter().enumerate() {
            if pi && !pj {
                den += 1.0;
                num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

fn toy_samples(seed: u64, n: usize, gamma: f64) -> Vec<SelectorSample> {
    let mut rng = stream_rng(seed, Stream::Data, 1);
    (0..n)
        .map(|i| {
            let error = i % 5 == 0;
            let ambiguous = i % 7 == 0;
            let mut phi: [f64; PHI_DIM] = std::array::from_fn(|_| rng.random_range(-0.3..0.3));
            phi[0] += if error { 0.55 } else { 0.95 };
            phi[4] += if error { 0.1 } else { 2.0 };
            SelectorSample::new(phi, error, ambiguous, gamma)
        })
        .collect()
}

#[test]
fn separable_errors_are_ranked_first() {
    let cfg = SelectorConfig { seed: 4, ..SelectorConfig::default() };
    let train = toy_samples(1, 600, cfg.gamma);
    let test = toy_samples(2, 300, cfg.gamma);
    let (sel, log) = train_selector(&train, &cfg).unwrap();
    assert!(!log.epochs.is_empty());
    let phi: Vec<_> = test.iter().map(|s| s.phi).collect();
    let r = sel.logits(&phi).unwrap();
    let errors: Vec<bool> = test.iter().map(|s| s.error).collect();
    let auc = auroc(&r, &errors);
    assert!(auc >= 0.99, "AUROC {auc}");
}

#[test]
fn selector_training_is_deterministic() {
    let cfg = SelectorConfig { epochs: 5, ..SelectorConfig::default() };
    let samples = toy_samples(5, 200, cfg.gamma);
    let (a, la) = train_selector(&samples, &cfg).unwrap();
    let (b, lb) = train_selector(&samples, &cfg).unwrap();
    assert_eq!(a.params.values(), b.params.values());
    assert_eq!(la, lb);
}

#[test]
fn gamma_zero_targets_equal_error() {
    for s in toy_samples(9, 100, 0.0) {
        assert_eq!(s.y_cost, if s.error { 1.0 } else { 0.0 });
    }
}

proptest! {
    #[test]
    fn accept_score_is_decreasing_in_r(a in -30.0f64..30.0, d in 1e-6f64..10.0) {
        prop_assert!(accept_score(a) > accept_score(a + d));
        let s = accept_score(a);
        prop_assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn accept_cost_is_monotone(gamma in 0.0f64..=1.0) {
        for (e, a) in [(false, false), (false, true), (true, false), (true, true)] {
            let base = accept_cost(e, a, gamma);
            prop_assert!(accept_cost(true, a, gamma) >= base);
            prop_assert!(accept_cost(e, true, gamma) >= base);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }

    #[test]
    fn calibrated_coverage_meets_target(
        scores in proptest::collection::vec(0.0f64..1.0, 1..300),
        coverage in 0.01f64..=1.0,
        quantize in any::<bool>(),
    ) {
        let scores: Vec<f64> = if quantize { scores.iter().map(|s| (s * 10.0).round() / 10.0).collect() } else { scores };
        let tau = calibrate_threshold(&scores, coverage).unwrap();
        let n = scores.len();
        let accepted = scores.iter().filter(|&&s| s >= tau).count();
        prop_assert!(accepted as f64 >= coverage * n as f64 - 1e-9);
        // No larger threshold taken from the scores also meets the target.
        let k = (coverage * n as f64 - 1e-9).ceil() as usize;
        prop_assert!(scores.iter().filter(|&&s| s > tau).count() < k.max(1));
        let distinct = { let mut v = scores.clone(); v.sort_by(f64::total_cmp); v.dedup(); v.len() == n };
        if distinct {
            prop_assert_eq!(accepted, k.max(1));
        }
    }

    #[test]
    fn lower_threshold_never_lowers_coverage(scores in proptest::collection::vec(-5.0f64..5.0, 1..100), t1 in -6.0f64..6.0, t2 in -6.0f64..6.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let cov = |t: f64| scores.iter().filter(|&&s| s >= t).count();
        prop_assert!(cov(lo) >= cov(hi));
    }

    #[test]
    fn gamma_and_c_zero_objective_ignores_ambiguity(
        r in proptest::collection::vec(-4.0f64..4.0, 8),
        errs in proptest::collection::vec(any::<bool>(), 8),
        amb in proptest::collection::vec(any::<bool>(), 8),
        w in 0.0f64..1.0,
    ) {
        // With γ = 0 and c = 0 the objective only sees E.
        let cfg = SelectorConfig { gamma: 0.0, c: 0.0, w, ..SelectorConfig::default() };
        let e: Vec<f64> = errs.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let cost: Vec<f64> = errs.iter().zip(&amb).map(|(&e, &a)| accept_cost(e, a, 0.0)).collect();
        prop_assert_eq!(&cost, &e);
        let mut rng = stream_rng(0, Stream::PairSampling, 0);
        let pairs = BatchPairs::sample(&e, &cost, 512, &mut rng);
        let full = selector_loss(&r, &e, &cost, &pairs, &cfg, None);
        let error_only = selector_loss(&r, &e, &e, &BatchPairs { error: pairs.error.clone(), cost: vec![] }, &cfg, None);
        prop_assert!((full - error_only).abs() < 1e-12);
    }
}

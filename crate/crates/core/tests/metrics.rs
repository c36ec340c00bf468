mod common;

use chase_core::metrics::*;
use chase_core::rng::{stream_rng, Stream};
use chase_core::selector::calibrate_threshold;
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn metrics_match_counting_oracle_on_random_sets() {
    let mut rng = stream_rng(2024, Stream::Data, 1);
    for _ in 0..1000 {
        let rs = random_records(&mut rng);
        let tau = if rng.random_bool(0.1) { f64::NEG_INFINITY } else { rng.random_range(-0.1..1.1) };
        let m = evaluate(&rs, tau).unwrap();
        let o = oracle(&rs, tau);
        assert_eq!(pair(m.no_abstain_acc), o.na);
        assert_eq!(pair(m.risk), o.risk);
        assert_eq!(pair(m.coverage), o.coverage);
        assert_eq!(pair(m.three_way_acc), o.three_way);
        assert_eq!(pair(m.abstain_alignment), o.align);
        let amb: Vec<ScoredRecord> = rs.iter().copied().filter(|r| r.ambiguous).collect();
        if !amb.is_empty() {
            let a = evaluate(&amb, tau).unwrap().abstain_alignment;
            assert_eq!(a.num, a.den);
        }
    }
}

#[test]
fn threshold_matches_counting_oracle_on_random_sets() {
    let mut rng = stream_rng(2025, Stream::Data, 2);
    for _ in 0..1000 {
        let rs = random_records(&mut rng);
        let scores: Vec<f64> = rs.iter().map(|r| r.score).collect();
        let pct: usize = rng.random_range(1..=100);
        let tau = calibrate_threshold(&scores, pct as f64 / 100.0).unwrap();
        // Largest observed score whose acceptance count reaches the target.
        let n = scores.len();
        let want = scores
            .iter()
            .copied()
            .filter(|&v| 100 * scores.iter().filter(|&&s| s >= v).count() >= pct * n)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(tau, want, "pct {pct} scores {scores:?}");
    }
}

#[test]
fn wilcoxon_hand_table() {
    let cases: [(&[f64], Option<f64>); 8] = [
        (&[1.0, 2.0, 3.0, 4.0, 5.0], Some(1.0 / 32.0)),
        (&[0.4, 0.1, 0.3, 0.2], Some(1.0 / 16.0)),
        (&[1.0, 2.0, -3.0], Some(5.0 / 8.0)),
        (&[-1.0, 2.0, 3.0], Some(1.0 / 8.0 + 1.0 / 8.0)),
        (&[2.0, -2.0], Some(0.75)),
        (&[1.0], Some(0.5)),
        (&[-1.0, -2.0, -3.0, -4.0, -5.0], Some(1.0)),
        (&[0.0, 0.0, 0.0], None),
    ];
    for (d, want) in cases {
        assert_eq!(wilcoxon_one_sided(d).unwrap().p_value, want, "{d:?}");
    }
}

#[test]
fn wilcoxon_counting_path_matches_enumeration() {
    // 21 differences take the counting path; the oracle still enumerates.
    let d: Vec<f64> = (1..=21).map(|i| (if i % 4 == 0 { -1.0 } else { 1.0 }) * (i / 2 + 1) as f64).collect();
    assert_eq!(wilcoxon_one_sided(&d).unwrap().p_value, brute_wilcoxon(&d));
}

proptest! {
    #[test]
    fn wilcoxon_matches_brute_force(d in prop::collection::vec(prop::sample::select(vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.5]), 1..10)) {
        prop_assert_eq!(wilcoxon_one_sided(&d).unwrap().p_value, brute_wilcoxon(&d));
    }

    #[test]
    fn full_coverage_identities(seed in 0u64..10_000) {
        let mut rng = stream_rng(seed, Stream::Data, 3);
        let rs = random_records(&mut rng);
        let m = evaluate(&rs, f64::NEG_INFINITY).unwrap();
        prop_assert_eq!(m.risk, m.no_abstain_acc.complement());
        prop_assert_eq!(m.three_way_acc, m.no_abstain_acc);
        prop_assert_eq!(m.abstain_alignment.den, 0);
    }

    #[test]
    fn lowering_tau_never_lowers_coverage(seed in 0u64..10_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let mut rng = stream_rng(seed, Stream::Data, 4);
        let rs = random_records(&mut rng);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let c_lo = risk_at_coverage(&rs, lo).unwrap().coverage.num;
        let c_hi = risk_at_coverage(&rs, hi).unwrap().coverage.num;
        prop_assert!(c_lo >= c_hi);
    }

    #[test]
    fn rates_stay_in_unit_interval(seed in 0u64..10_000, tau in -0.5f64..1.5) {
        let mut rng = stream_rng(seed, Stream::Data, 5);
        let m = evaluate(&random_records(&mut rng), tau).unwrap();
        for r in [m.no_abstain_acc, m.risk, m.coverage, m.three_way_acc, m.abstain_alignment] {
            prop_assert!(r.num <= r.den);
            if let Some(v) = r.value() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}

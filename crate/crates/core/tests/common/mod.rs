//! Counting oracles shared by the metric tests and the acceptance target.
#![allow(dead_code)]

use chase_core::metrics::{Rate, ScoredRecord};
use chase_core::simulator::Label;
use rand::Rng;

pub fn random_records(rng: &mut impl Rng) -> Vec<ScoredRecord> {
    let n = rng.random_range(1..60);
    // Coarse score grid so ties are common.
    let levels = rng.random_range(1..12);
    (0..n)
        .map(|_| ScoredRecord {
            prediction: Label::from_index(rng.random_range(0..2)),
            label: Label::from_index(rng.random_range(0..2)),
            ambiguous: rng.random_bool(0.3),
            score: rng.random_range(0..=levels) as f64 / levels as f64,
        })
        .collect()
}

pub struct Oracle {
    pub na: (usize, usize),
    pub risk: (usize, usize),
    pub coverage: (usize, usize),
    pub three_way: (usize, usize),
    pub align: (usize, usize),
}

pub fn oracle(rs: &[ScoredRecord], tau: f64) -> Oracle {
    let mut o = Oracle { na: (0, 0), risk: (0, 0), coverage: (0, rs.len()), three_way: (0, rs.len()), align: (0, 0) };
    for r in rs {
        o.na.1 += 1;
        if r.prediction == r.label {
            o.na.0 += 1;
        }
        if r.score >= tau {
            o.coverage.0 += 1;
            o.risk.1 += 1;
            if r.prediction != r.label {
                o.risk.0 += 1;
            } else {
                o.three_way.0 += 1;
            }
        } else {
            o.align.1 += 1;
            if r.ambiguous {
                o.align.0 += 1;
                o.three_way.0 += 1;
            }
        }
    }
    o
}

pub fn pair(r: Rate) -> (usize, usize) {
    (r.num, r.den)
}

pub fn brute_wilcoxon(d: &[f64]) -> Option<f64> {
    let nz: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
    if nz.is_empty() {
        return None;
    }
    // Average rank by direct counting: below + (equal + 1) / 2.
    let rank = |x: f64| {
        let below = nz.iter().filter(|y| y.abs() < x.abs()).count() as f64;
        let equal = nz.iter().filter(|y| y.abs() == x.abs()).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = nz.iter().map(|&x| rank(x)).collect();
    let w: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let n = nz.len();
    let mut hits = 0;
    for mask in 0..(1u32 << n) {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s >= w {
            hits += 1;
        }
    }
    Some(hits as f64 / (1u32 << n) as f64)
}

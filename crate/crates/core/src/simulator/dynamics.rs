use rand::Rng;
use rand_distr::StandardNormal;

use super::{ActivityProfile, Label, SimConfig};

/// Centroids of both vesicles over time.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub p1: Vec<[f64; 2]>,
    pub p2: Vec<[f64; 2]>,
    pub radii: [f64; 2],
    pub rest_length: f64,
}

impl Trajectory {
    pub fn frames(&self) -> usize {
        self.p1.len()
    }

    pub fn distance(&self, t: usize) -> f64 {
        dist(self.p1[t], self.p2[t])
    }
}

/// Starting geometry shared by both members of a matched pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairGeometry {
    pub radii: [f64; 2],
    pub center: [f64; 2],
    pub angle: f64,
    pub separation: f64,
    /// Drift heading and turn direction.
    pub heading: f64,
    pub turn: f64,
    /// Background drift speed and heading.
    pub background: (f64, f64),
}

impl PairGeometry {
    pub fn sample<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Self {
        let r1 = rng.random_range(cfg.radius_range[0]..=cfg.radius_range[1]);
        let r2 = rng.random_range(cfg.radius_range[0]..=cfg.radius_range[1]);
        let gap = rng.random_range(cfg.initial_gap[0]..=cfg.initial_gap[1].max(cfg.initial_gap[0]));
        PairGeometry {
            radii: [r1, r2],
            center: [rng.random_range(0.3..0.7), rng.random_range(0.3..0.7)],
            angle: rng.random_range(0.0..std::f64::consts::TAU),
            separation: cfg.rest_length(r1, r2) + gap,
            heading: rng.random_range(0.0..std::f64::consts::TAU),
            turn: if rng.random::<bool>() { cfg.drift_turn } else { -cfg.drift_turn } * rng.random_range(0.5..1.0),
            background: (
                rng.random_range(0.0..=cfg.background_drift),
                rng.random_range(0.0..std::f64::consts::TAU),
            ),
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

fn reflect(x: f64, r: f64) -> f64 {
    let (lo, hi) = (r, 1.0 - r);
    let mut x = x;
    // a couple of bounces is always enough for per-frame steps << box size
    for _ in 0..4 {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            break;
        }
    }
    x.clamp(lo, hi)
}

/// Integrates the overdamped pair dynamics.
///
/// Connected pairs relax towards the rest length with stiffness
/// `k * u(t)`. Not-connected pairs reuse the same `u(t)` to switch on a
/// shared, slowly turning drift and a pull towards a proximity distance.
/// Both vesicles take independent Brownian steps and reflect off the walls.
pub fn simulate_trajectory<R: Rng>(
    label: Label,
    profile: &ActivityProfile,
    geom: &PairGeometry,
    cfg: &SimConfig,
    rng: &mut R,
) -> Trajectory {
    let frames = profile.u.len();
    let [r1, r2] = geom.radii;
    let rest = cfg.rest_length(r1, r2);
    let (c, s) = (geom.angle.cos(), geom.angle.sin());
    let half = 0.5 * geom.separation;
    let mut a = [reflect(geom.center[0] - half * c, r1), reflect(geom.center[1] - half * s, r1)];
    let mut b = [reflect(geom.center[0] + half * c, r2), reflect(geom.center[1] + half * s, r2)];
    let mut p1 = Vec::with_capacity(frames);
    let mut p2 = Vec::with_capacity(frames);
    p1.push(a);
    p2.push(b);
    let mut heading = geom.heading;
    let (bg_speed, bg_heading) = geom.background;
    for t in 1..frames {
        let u = profile.u[t];
        let mut da = [0.0; 2];
        let mut db = [0.0; 2];
        for k in 0..2 {
            da[k] = cfg.brownian_sigma * rng.sample::<f64, _>(StandardNormal);
            db[k] = cfg.brownian_sigma * rng.sample::<f64, _>(StandardNormal);
        }
        let bg = [bg_speed * bg_heading.cos(), bg_speed * bg_heading.sin()];
        for k in 0..2 {
            da[k] += bg[k];
            db[k] += bg[k];
        }
        let d = dist(a, b);
        let dir = if d > 1e-12 { [(b[0] - a[0]) / d, (b[1] - a[1]) / d] } else { [0.0, 0.0] };
        match label {
            Label::Connected => {
                let pull = 0.5 * cfg.spring_k * u * (d - rest);
                for k in 0..2 {
                    da[k] += pull * dir[k];
                    db[k] -= pull * dir[k];
                }
            }
            Label::NotConnected => {
                heading += geom.turn;
                let v = cfg.drift_amplitude * u;
                let drift = [v * heading.cos(), v * heading.sin()];
                let pull = 0.5 * cfg.proximity_pull * u * (d - cfg.proximity_target * rest);
                for k in 0..2 {
                    da[k] += drift[k] + pull * dir[k];
                    db[k] += drift[k] - pull * dir[k];
                }
            }
        }
        a = [reflect(a[0] + da[0], r1), reflect(a[1] + da[1], r1)];
        b = [reflect(b[0] + db[0], r2), reflect(b[1] + db[1], r2)];
        p1.push(a);
        p2.push(b);
    }
    Trajectory { p1, p2, radii: geom.radii, rest_length: rest }
}

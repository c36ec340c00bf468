use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Regime;

/// Frames over which activity ramps up or down next to a window.
pub const RAMP_FRAMES: usize = 3;
/// Window length bounds for the short-local regime.
pub const SHORT_WINDOW: (usize, usize) = (8, 16);
/// Window count bounds for the intermittent regime.
pub const INTERMITTENT_WINDOWS: (usize, usize) = (2, 4);
/// Fraction of frames inside intermittent windows.
pub const INTERMITTENT_DUTY: (f64, f64) = (0.3, 0.6);

/// Latent activity `u(t)` that gates when evidence is visible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub u: Vec<f64>,
    pub regime: Regime,
    /// `(onset, length)` of each fully active window.
    pub windows: Vec<(usize, usize)>,
}

impl ActivityProfile {
    fn from_windows(frames: usize, regime: Regime, windows: Vec<(usize, usize)>) -> Self {
        let u = (0..frames)
            .map(|t| {
                windows
                    .iter()
                    .map(|&(on, len)| {
                        let d = if t < on {
                            on - t
                        } else if t >= on + len {
                            t + 1 - (on + len)
                        } else {
                            0
                        };
                        if d > RAMP_FRAMES {
                            0.0
                        } else {
                            1.0 - d as f64 / (RAMP_FRAMES + 1) as f64
                        }
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        ActivityProfile { u, regime, windows }
    }

    /// Frames with `u = 1`.
    pub fn active_frames(&self) -> usize {
        self.windows.iter().map(|w| w.1).sum()
    }

    pub fn duty_cycle(&self) -> f64 {
        self.active_frames() as f64 / self.u.len() as f64
    }
}

/// Draws a profile for `regime` over `frames` frames.
///
/// Short-local profiles hold one window of 8–16 frames; intermittent
/// profiles hold 2–4 windows covering 30–60 % of the sequence. Windows are
/// separated by at least two ramps plus one idle frame.
pub fn sample_activity_profile<R: Rng>(regime: Regime, frames: usize, rng: &mut R) -> ActivityProfile {
    let min_gap = 2 * RAMP_FRAMES + 1;
    match regime {
        Regime::ShortLocal => {
            let len = rng.random_range(SHORT_WINDOW.0..=SHORT_WINDOW.1).min(frames);
            let slack = frames - len;
            // keep the ramps inside the sequence when there is room
            let lo = RAMP_FRAMES.min(slack / 2);
            let hi = slack - lo;
            let on = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            ActivityProfile::from_windows(frames, regime, vec![(on, len)])
        }
        Regime::Intermittent => {
            let lo = (INTERMITTENT_DUTY.0 * frames as f64).ceil() as usize;
            let hi = (INTERMITTENT_DUTY.1 * frames as f64).floor() as usize;
            let mut count = rng.random_range(INTERMITTENT_WINDOWS.0..=INTERMITTENT_WINDOWS.1);
            // shrink the window count until the minimum layout fits
            while count > 1 && lo + (count - 1) * min_gap > frames {
                count -= 1;
            }
            let hi = hi.min(frames.saturating_sub((count - 1) * min_gap)).max(lo.min(frames));
            let active = if hi > lo { rng.random_range(lo..=hi) } else { hi };
            let lengths = random_composition(active, count, 1, rng);
            let free = frames - active - (count - 1) * min_gap;
            let gaps = random_composition(free, count + 1, 0, rng);
            let mut windows = Vec::with_capacity(count);
            let mut t = gaps[0];
            for (i, &len) in lengths.iter().enumerate() {
                windows.push((t, len));
                t += len;
                if i + 1 < count {
                    t += min_gap + gaps[i + 1];
                }
            }
            ActivityProfile::from_windows(frames, regime, windows)
        }
    }
}

/// Splits `total` into `parts` integers, each at least `min`.
fn random_composition<R: Rng>(total: usize, parts: usize, min: usize, rng: &mut R) -> Vec<usize> {
    let spare = total - parts * min;
    let mut cuts: Vec<usize> = (0..parts - 1).map(|_| rng.random_range(0..=spare)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts {
        out.push(min + c - prev);
        prev = c;
    }
    out.push(min + spare - prev);
    out
}

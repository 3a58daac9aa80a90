//! Velocity and acceleration estimates from tracked poses.
//!
//! Tracked poses only give positions; force inference needs `v̇` and `ω̇`.
//! These helpers differentiate a uniformly sampled pose sequence and
//! optionally smooth the result with a centred moving average.

use nalgebra::Vector2;

use super::{PlanarMotion, Pose2};
use crate::error::{Error, Result};

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

/// Central-difference velocities and accelerations; endpoints copy their neighbour.
pub fn motion_from_poses(
    times: &[f64],
    poses: &[Pose2],
    smoothing_window: usize,
) -> Result<Vec<PlanarMotion>> {
    if times.len() != poses.len() {
        return Err(Error::schema("times and poses differ in length"));
    }
    let n = poses.len();
    if n < 3 {
        return Err(Error::schema("need at least three poses to differentiate"));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::schema("timestamps must be increasing"));
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::schema("pose timestamps must be uniformly spaced"));
        }
    }
    let pos = |i: usize| Vector2::new(poses[i].x, poses[i].y);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let j = i.clamp(1, n - 2);
        let v = (pos(j + 1) - pos(j - 1)) / (2.0 * dt);
        let a = (pos(j + 1) - 2.0 * pos(j) + pos(j - 1)) / (dt * dt);
        let d_fwd = wrap_angle(poses[j + 1].theta - poses[j].theta);
        let d_bwd = wrap_angle(poses[j].theta - poses[j - 1].theta);
        out.push(PlanarMotion {
            pose: poses[i],
            v,
            omega: (d_fwd + d_bwd) / (2.0 * dt),
            v_dot: a,
            omega_dot: (d_fwd - d_bwd) / (dt * dt),
        });
    }
    Ok(smooth_accelerations(&out, smoothing_window))
}

/// Centred moving average of `v_dot` and `omega_dot`; windows below 2 are a no-op.
pub fn smooth_accelerations(motions: &[PlanarMotion], window: usize) -> Vec<PlanarMotion> {
    if window < 2 {
        return motions.to_vec();
    }
    let half = window / 2;
    (0..motions.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(motions.len() - 1);
            let count = (hi - lo + 1) as f64;
            let (sum_a, sum_alpha) = motions[lo..=hi]
                .iter()
                .fold((Vector2::zeros(), 0.0), |(a, al), m| {
                    (a + m.v_dot, al + m.omega_dot)
                });
            PlanarMotion {
                v_dot: sum_a / count,
                omega_dot: sum_alpha / count,
                ..motions[i]
            }
        })
        .collect()
}

//! Forward simulation of a box pushed across a plane with particle friction.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanics::{
    cross2, friction_wrench, EpisodeRecord, FrictionRegime, ParticleGrid, PlanarMotion, Pose2,
    PushParams, StepRegime,
};

pub const DEFAULT_DT: f64 = 1e-3;
/// Box footprint half-extents (m) used when none are given.
pub const DEFAULT_HALF_EXTENTS: [f64; 2] = [0.1, 0.075];
/// Box mass (kg).
pub const DEFAULT_MASS: f64 = 0.65;

/// Below this speed (m/s, including `|ω|` times the footprint radius) a
/// step that cannot overcome static friction snaps to rest.
const REST_SPEED: f64 = 1e-6;

/// Constant object-frame force applied at a body-fixed point for `steps` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushSegment {
    pub steps: usize,
    pub force: [f64; 2],
    pub contact: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PushState {
    pub pose: [f64; 3],
    pub v: [f64; 2],
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushEpisode {
    pub params: PushParams,
    pub half_extents: [f64; 2],
    pub dt: f64,
    pub initial: PushState,
    /// One record per step, state at the start of the step.
    pub records: Vec<EpisodeRecord>,
}

/// Integrates the pushed box with semi-implicit Euler.
///
/// Each record stores the state at the start of its step together with the
/// exact accelerations used for that step, so the stored motion satisfies
/// `m·v̇ = f_c + f_f` and `I·ω̇ = c × f_c + n_f` to rounding.
pub fn simulate_push(
    params: &PushParams,
    half_extents: [f64; 2],
    initial: PushState,
    schedule: &[PushSegment],
    dt: f64,
) -> Result<PushEpisode> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config("dt must be positive"));
    }
    params.validate()?;
    let grid = ParticleGrid::rectangle(half_extents, params)?;
    let static_moment = params.mu_s
        * grid.per_particle_normal_force()
        * grid.particles().iter().map(|r| r.norm()).sum::<f64>();
    let reach = half_extents[0].hypot(half_extents[1]);
    let mut pose = Pose2::new(initial.pose[0], initial.pose[1], initial.pose[2]);
    let mut v = Vector2::from(initial.v);
    let mut omega = initial.omega;
    let total: usize = schedule.iter().map(|s| s.steps).sum();
    let mut records = Vec::with_capacity(total);
    let step_iter = schedule
        .iter()
        .flat_map(|s| std::iter::repeat_n(s, s.steps));
    for (k, seg) in step_iter.enumerate() {
        let f_c = Vector2::from(seg.force);
        let c = Vector2::from(seg.contact);
        let rot = pose.rotation();
        let body = PlanarMotion {
            pose,
            v: rot.inverse() * v,
            omega,
            ..PlanarMotion::default()
        };
        let w = friction_wrench(&grid, &body, params);
        let tau = cross2(&c, &f_c);
        let holds = f_c.norm() <= params.mu_s * params.m * params.g && tau.abs() <= static_moment;
        let (a, alpha, regime) = if w.regime == FrictionRegime::Static {
            if holds {
                (Vector2::zeros(), 0.0, StepRegime::AtRest)
            } else {
                // Kinetic friction is undefined at rest; it engages from the next step.
                (
                    rot * f_c / params.m,
                    tau / params.inertia,
                    StepRegime::AtRest,
                )
            }
        } else {
            (
                rot * (f_c + w.force) / params.m,
                (tau + w.moment) / params.inertia,
                StepRegime::Sliding,
            )
        };
        let mut v_next = v + a * dt;
        let mut omega_next = omega + alpha * dt;
        let mut regime = regime;
        if regime == StepRegime::Sliding && holds {
            let reversed = v_next.dot(&v) <= 0.0 && omega_next * omega <= 0.0;
            let crawling = v_next.norm() + omega_next.abs() * reach < REST_SPEED;
            if reversed || crawling {
                v_next = Vector2::zeros();
                omega_next = 0.0;
                regime = StepRegime::Stopping;
            }
        }
        records.push(EpisodeRecord {
            t: k as f64 * dt,
            pose: [pose.x, pose.y, pose.theta],
            v: v.into(),
            omega,
            v_dot: a.into(),
            omega_dot: alpha,
            contact_point: seg.contact,
            f_true: Some(seg.force),
            regime: Some(regime),
        });
        pose = Pose2::new(
            pose.x + v_next.x * dt,
            pose.y + v_next.y * dt,
            pose.theta + omega_next * dt,
        );
        v = v_next;
        omega = omega_next;
        let finite = [pose.x, pose.y, pose.theta, v.x, v.y, omega, a.x, a.y, alpha]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Integration { step: k });
        }
    }
    Ok(PushEpisode {
        params: *params,
        half_extents,
        dt,
        initial,
        records,
    })
}

/// Re-runs an episode from its initial state using the stored applied forces.
pub fn replay(episode: &PushEpisode) -> Result<PushEpisode> {
    let schedule: Vec<PushSegment> = episode
        .records
        .iter()
        .map(|r| {
            r.f_true.map(|f| PushSegment {
                steps: 1,
                force: f,
                contact: r.contact_point,
            })
        })
        .collect::<Option<_>>()
        .ok_or_else(|| Error::schema("replay needs f_true on every record"))?;
    simulate_push(
        &episode.params,
        episode.half_extents,
        episode.initial,
        &schedule,
        episode.dt,
    )
}

pub fn kinetic_energy(params: &PushParams, record: &EpisodeRecord) -> f64 {
    let v = Vector2::from(record.v);
    0.5 * params.m * v.norm_squared() + 0.5 * params.inertia * record.omega * record.omega
}

//! Planar pushing as a system of particles.
//!
//! The support friction of a sliding box is approximated by `n` particles on
//! a lattice over the footprint, each carrying `m·g/n` of normal load. The
//! contact force is then recovered from observed motion by a weighted least
//! squares fit of the planar Newton-Euler equations.

mod frames;
mod friction;
mod inference;
pub mod kinematics;
mod record;

pub use frames::{to_sensor_frame, ForceComponents, ForceVector, Frame, FrameTransform};
pub use friction::{
    friction_force, friction_moment, friction_wrench, point_velocity, FrictionRegime,
    FrictionWrench, STATIONARY_SPEED_TOL,
};
pub use inference::{
    infer_batch, infer_force_frictionless, infer_force_with_friction, ForceEstimate,
    ForceObjective, SolverMethod,
};
pub use record::{read_episode, write_episode, EpisodeRecord, StepRegime};

use nalgebra::{Rotation2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const DEFAULT_PARTICLES: usize = 80;
pub const DEFAULT_LINEAR_WEIGHT: f64 = 10.0;
pub const DEFAULT_FRICTION: f64 = 0.1;

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

/// Object and solver parameters for force inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushParams {
    /// Mass in kg.
    pub m: f64,
    /// Moment of inertia about the centre of mass, kg·m².
    #[serde(rename = "I")]
    pub inertia: f64,
    pub mu_s: f64,
    /// Particle count.
    pub n: usize,
    /// Weight on the linear residual.
    pub k: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
}

impl PushParams {
    /// Parameters for a uniform-density box with the given footprint half-extents.
    pub fn for_box(m: f64, half_extents: [f64; 2], mu_s: f64) -> Self {
        PushParams {
            m,
            inertia: box_inertia(m, half_extents),
            mu_s,
            n: DEFAULT_PARTICLES,
            k: DEFAULT_LINEAR_WEIGHT,
            g: DEFAULT_GRAVITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.m > 0.0, "m must be positive"),
            (self.inertia > 0.0, "I must be positive"),
            (self.mu_s >= 0.0, "mu_s must be non-negative"),
            (self.n >= 1, "n must be at least 1"),
            (self.k > 0.0, "k must be positive"),
            (self.g.is_finite(), "g must be finite"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::config(msg));
            }
        }
        Ok(())
    }

    pub fn frictionless(&self) -> Self {
        PushParams { mu_s: 0.0, ..*self }
    }
}

/// Moment of inertia of a uniform rectangle about its centre.
pub fn box_inertia(m: f64, half_extents: [f64; 2]) -> f64 {
    m * (half_extents[0].powi(2) + half_extents[1].powi(2)) / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 { x, y, theta }
    }

    pub fn rotation(&self) -> Rotation2<f64> {
        Rotation2::new(self.theta)
    }
}

/// SE(2) state with its first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarMotion {
    pub pose: Pose2,
    pub v: Vector2<f64>,
    pub omega: f64,
    pub v_dot: Vector2<f64>,
    pub omega_dot: f64,
}

impl PlanarMotion {
    pub fn new(v: Vector2<f64>, omega: f64, v_dot: Vector2<f64>, omega_dot: f64) -> Self {
        PlanarMotion {
            pose: Pose2::default(),
            v,
            omega,
            v_dot,
            omega_dot,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.pose.x,
            self.pose.y,
            self.pose.theta,
            self.v.x,
            self.v.y,
            self.omega,
            self.v_dot.x,
            self.v_dot.y,
            self.omega_dot,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Re-expresses world-frame linear quantities along the object's axes.
    ///
    /// Only the components are rotated; `v_dot` stays the inertial
    /// acceleration, so Newton's law keeps its form in the rotated axes.
    pub fn in_object_axes(&self) -> PlanarMotion {
        let inv = self.pose.rotation().inverse();
        PlanarMotion {
            v: inv * self.v,
            v_dot: inv * self.v_dot,
            ..*self
        }
    }
}

/// Support-contact particles relative to the centre of mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleGrid {
    particles: Vec<Vector2<f64>>,
    per_particle_normal_force: f64,
}

impl ParticleGrid {
    /// Lattice of cell centroids over the rectangle `[-hx, hx] x [-hy, hy]`.
    ///
    /// The lattice uses the factorisation `n = cols * rows` whose cell aspect
    /// ratio is closest to square.
    pub fn rectangle(half_extents: [f64; 2], params: &PushParams) -> Result<Self> {
        let [hx, hy] = half_extents;
        if !(hx > 0.0 && hy > 0.0) {
            return Err(Error::config("box half-extents must be positive"));
        }
        params.validate()?;
        let n = params.n;
        let aspect = hx / hy;
        let (cols, rows) = (1..=n)
            .filter(|c| n.is_multiple_of(*c))
            .map(|c| (c, n / c))
            .min_by(|a, b| {
                let da = ((a.0 as f64 / a.1 as f64) / aspect).ln().abs();
                let db = ((b.0 as f64 / b.1 as f64) / aspect).ln().abs();
                da.total_cmp(&db)
            })
            .expect("n >= 1 has at least one factorisation");
        let (dx, dy) = (2.0 * hx / cols as f64, 2.0 * hy / rows as f64);
        let mut particles = Vec::with_capacity(n);
        for j in 0..rows {
            for i in 0..cols {
                particles.push(Vector2::new(
                    -hx + (i as f64 + 0.5) * dx,
                    -hy + (j as f64 + 0.5) * dy,
                ));
            }
        }
        Ok(ParticleGrid {
            particles,
            per_particle_normal_force: params.m * params.g / n as f64,
        })
    }

    /// Arbitrary particle positions sharing `total_normal_force` equally.
    pub fn from_positions(particles: Vec<Vector2<f64>>, total_normal_force: f64) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::config("particle grid needs at least one particle"));
        }
        let per = total_normal_force / particles.len() as f64;
        Ok(ParticleGrid {
            particles,
            per_particle_normal_force: per,
        })
    }

    pub fn particles(&self) -> &[Vector2<f64>] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn per_particle_normal_force(&self) -> f64 {
        self.per_particle_normal_force
    }

    pub fn total_normal_force(&self) -> f64 {
        self.per_particle_normal_force * self.particles.len() as f64
    }

    /// The same particles with positions rotated by `rotation`.
    pub fn rotated(&self, rotation: &Rotation2<f64>) -> ParticleGrid {
        ParticleGrid {
            particles: self.particles.iter().map(|r| rotation * r).collect(),
            per_particle_normal_force: self.per_particle_normal_force,
        }
    }
}

/// Planar cross product `a_x b_y - a_y b_x`.
pub fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

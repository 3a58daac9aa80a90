use nalgebra::Vector2;

use super::{cross2, ForceVector, Frame, ParticleGrid, PlanarMotion, PushParams};

/// Particles slower than this (m/s) contribute nothing to the friction sums.
pub const STATIONARY_SPEED_TOL: f64 = 1e-9;

/// Whether Coulomb sliding friction was defined for the evaluated motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrictionRegime {
    Sliding,
    /// Every particle was stationary; the returned wrench is zero.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionWrench {
    pub force: Vector2<f64>,
    pub moment: f64,
    pub regime: FrictionRegime,
}

/// Rigid-body velocity of the point at `r` relative to the centre of mass.
pub fn point_velocity(motion: &PlanarMotion, r: &Vector2<f64>) -> Vector2<f64> {
    motion.v + motion.omega * Vector2::new(-r.y, r.x)
}

/// Friction force and moment about the CM from all particles in one pass.
///
/// `motion` must be expressed along the same axes as the particle positions.
pub fn friction_wrench(
    grid: &ParticleGrid,
    motion: &PlanarMotion,
    params: &PushParams,
) -> FrictionWrench {
    let mut force = Vector2::zeros();
    let mut moment = 0.0;
    let mut moving = 0usize;
    for r in grid.particles() {
        let v = point_velocity(motion, r);
        let speed = v.norm();
        if speed < STATIONARY_SPEED_TOL {
            continue;
        }
        let dir = v / speed;
        force += dir;
        moment += cross2(r, &dir);
        moving += 1;
    }
    let scale = -params.mu_s * grid.per_particle_normal_force();
    FrictionWrench {
        force: force * scale,
        moment: moment * scale,
        regime: if moving == 0 {
            FrictionRegime::Static
        } else {
            FrictionRegime::Sliding
        },
    }
}

pub fn friction_force(
    grid: &ParticleGrid,
    motion: &PlanarMotion,
    params: &PushParams,
) -> (ForceVector, FrictionRegime) {
    let w = friction_wrench(grid, motion, params);
    let f = ForceVector::planar(w.force, Frame::Object).expect("object frame is planar");
    (f, w.regime)
}

pub fn friction_moment(
    grid: &ParticleGrid,
    motion: &PlanarMotion,
    params: &PushParams,
) -> (f64, FrictionRegime) {
    let w = friction_wrench(grid, motion, params);
    (w.moment, w.regime)
}

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    cross2, friction_wrench, EpisodeRecord, ForceVector, Frame, FrictionRegime, ParticleGrid,
    PlanarMotion, PushParams,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Direct solve of the 2x2 normal equations.
    ClosedForm,
    /// Gradient descent with Armijo backtracking.
    Iterative,
    /// Coarse-to-fine grid scan using objective evaluations only.
    GridOracle,
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form" | "closed-form" => Ok(SolverMethod::ClosedForm),
            "iterative" => Ok(SolverMethod::Iterative),
            "grid_oracle" | "grid-oracle" => Ok(SolverMethod::GridOracle),
            other => Err(Error::config(format!(
                "unknown solver method {other:?} (expected closed_form, iterative or grid_oracle)"
            ))),
        }
    }
}

/// `k‖f − a‖² + (c × f − b)²` with `a = m·v̇ − f_f` and `b = I·ω̇ − n_f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceObjective {
    pub k: f64,
    pub c: Vector2<f64>,
    pub linear_target: Vector2<f64>,
    pub angular_target: f64,
}

impl ForceObjective {
    pub fn new(
        motion: &PlanarMotion,
        c: Vector2<f64>,
        params: &PushParams,
        friction_force: Vector2<f64>,
        friction_moment: f64,
    ) -> Self {
        ForceObjective {
            k: params.k,
            c,
            linear_target: params.m * motion.v_dot - friction_force,
            angular_target: params.inertia * motion.omega_dot - friction_moment,
        }
    }

    pub fn value(&self, f: &Vector2<f64>) -> f64 {
        let lin = f - self.linear_target;
        let ang = cross2(&self.c, f) - self.angular_target;
        self.k * lin.norm_squared() + ang * ang
    }

    pub fn gradient(&self, f: &Vector2<f64>) -> Vector2<f64> {
        // d(c × f)/df = (−c_y, c_x)
        let p = Vector2::new(-self.c.y, self.c.x);
        let ang = cross2(&self.c, f) - self.angular_target;
        2.0 * self.k * (f - self.linear_target) + 2.0 * ang * p
    }

    pub fn minimize(&self, method: SolverMethod) -> Result<Vector2<f64>> {
        match method {
            SolverMethod::ClosedForm => self.solve_normal_equations(),
            SolverMethod::Iterative => Ok(self.gradient_descent()),
            SolverMethod::GridOracle => Ok(self.grid_scan()),
        }
    }

    /// `(k·I + p·pᵀ) f = k·a + p·b` with `p = (−c_y, c_x)`.
    fn solve_normal_equations(&self) -> Result<Vector2<f64>> {
        let p = Vector2::new(-self.c.y, self.c.x);
        let lhs = Matrix2::identity() * self.k + p * p.transpose();
        let rhs = self.k * self.linear_target + p * self.angular_target;
        let det = lhs.determinant();
        if !(det > 0.0) {
            return Err(Error::Numerical {
                context: format!("normal equations are singular (det {det:e})"),
            });
        }
        let inv = Matrix2::new(lhs[(1, 1)], -lhs[(0, 1)], -lhs[(1, 0)], lhs[(0, 0)]) / det;
        Ok(inv * rhs)
    }

    fn gradient_descent(&self) -> Vector2<f64> {
        const MAX_ITERS: usize = 10_000;
        let mut f = Vector2::zeros();
        let mut value = self.value(&f);
        let g0 = self.gradient(&f).norm().max(1.0);
        let mut step = 1.0;
        for _ in 0..MAX_ITERS {
            let g = self.gradient(&f);
            let gn2 = g.norm_squared();
            if gn2.sqrt() <= 1e-13 * g0 {
                break;
            }
            // Armijo backtracking; grow the trial step again after each success.
            let mut t = step * 2.0;
            loop {
                let cand = f - t * g;
                let cv = self.value(&cand);
                if cv <= value - 0.5 * t * gn2 {
                    f = cand;
                    value = cv;
                    break;
                }
                t *= 0.5;
                if t < 1e-20 {
                    return f;
                }
            }
            step = t;
        }
        f
    }

    fn grid_scan(&self) -> Vector2<f64> {
        const POINTS: i32 = 20;
        // J(f*) <= J(a) = (c × a − b)², and k‖f* − a‖² <= J(f*), so the minimiser
        // lies in the disc of this radius around the linear target.
        let at_a = cross2(&self.c, &self.linear_target) - self.angular_target;
        let mut half = at_a.abs() / self.k.sqrt() + 1e-6;
        let mut center = self.linear_target;
        while half > 1e-10 {
            let spacing = 2.0 * half / POINTS as f64;
            let mut best = center;
            let mut best_value = self.value(&center);
            for i in -POINTS / 2..=POINTS / 2 {
                for j in -POINTS / 2..=POINTS / 2 {
                    let cand = center + Vector2::new(i as f64, j as f64) * spacing;
                    let v = self.value(&cand);
                    if v < best_value {
                        best = cand;
                        best_value = v;
                    }
                }
            }
            center = best;
            half = 3.0 * spacing;
        }
        center
    }
}

/// Result of one force inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceEstimate {
    /// Planar contact force in the object frame.
    pub force: ForceVector,
    /// Objective value at the returned force.
    pub objective: f64,
    pub regime: FrictionRegime,
}

impl ForceEstimate {
    pub fn planar(&self) -> Vector2<f64> {
        self.force.as_planar().expect("estimates are planar")
    }
}

fn estimate(
    objective: &ForceObjective,
    method: SolverMethod,
    regime: FrictionRegime,
) -> Result<ForceEstimate> {
    let f = objective.minimize(method)?;
    Ok(ForceEstimate {
        force: ForceVector::planar(f, Frame::Object)?,
        objective: objective.value(&f),
        regime,
    })
}

/// Least-squares contact force ignoring support friction.
///
/// `motion` and `c` must share axes; use [`PlanarMotion::in_object_axes`] for
/// world-frame motion and body-fixed contact points.
pub fn infer_force_frictionless(
    motion: &PlanarMotion,
    c: Vector2<f64>,
    params: &PushParams,
    method: SolverMethod,
) -> Result<ForceEstimate> {
    let objective = ForceObjective::new(motion, c, params, Vector2::zeros(), 0.0);
    estimate(&objective, method, FrictionRegime::Sliding)
}

/// Least-squares contact force with the particle friction model.
pub fn infer_force_with_friction(
    motion: &PlanarMotion,
    c: Vector2<f64>,
    grid: &ParticleGrid,
    params: &PushParams,
    method: SolverMethod,
) -> Result<ForceEstimate> {
    let w = friction_wrench(grid, motion, params);
    let objective = ForceObjective::new(motion, c, params, w.force, w.moment);
    estimate(&objective, method, w.regime)
}

/// Infers the contact force for every record of an episode.
///
/// Records carry world-frame motion and a body-fixed contact point; each is
/// rotated into object axes before solving, so `grid` is body-fixed too.
/// Each step is independent and written to its own slot.
pub fn infer_batch(
    records: &[EpisodeRecord],
    grid: &ParticleGrid,
    params: &PushParams,
    method: SolverMethod,
) -> Result<Vec<ForceEstimate>> {
    params.validate()?;
    records
        .par_iter()
        .map(|rec| {
            let motion = rec.motion().in_object_axes();
            infer_force_with_friction(&motion, rec.contact(), grid, params, method)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(m: f64, inertia: f64, mu: f64, k: f64) -> PushParams {
        PushParams {
            m,
            inertia,
            mu_s: mu,
            n: 80,
            k,
            g: 9.81,
        }
    }

    const METHODS: [SolverMethod; 3] = [
        SolverMethod::ClosedForm,
        SolverMethod::Iterative,
        SolverMethod::GridOracle,
    ];

    #[test]
    fn force_through_cm_is_m_times_a() {
        let p = params(1.0, 0.01, 0.0, 10.0);
        let motion = PlanarMotion::new(Vector2::zeros(), 0.0, Vector2::new(1.0, 0.0), 0.0);
        for method in METHODS {
            let f = infer_force_frictionless(&motion, Vector2::zeros(), &p, method).unwrap();
            assert!(
                (f.planar() - Vector2::new(1.0, 0.0)).norm() < 1e-9,
                "{method:?}"
            );
        }
    }

    #[test]
    fn zero_motion_zero_force() {
        let p = params(0.65, 0.004, 0.0, 10.0);
        for method in METHODS {
            let f = infer_force_frictionless(
                &PlanarMotion::default(),
                Vector2::new(0.05, 0.02),
                &p,
                method,
            )
            .unwrap();
            assert!(f.planar().norm() < 1e-9);
        }
    }

    /// Frozen closed-form value for c=(0,0.1), m=0.65, I=0.004, v̇=(0.2,0), ω̇=1.5, k=10.
    ///
    /// a = (0.13, 0), b = 0.006, p = (−0.1, 0): normal equations give
    /// f_x = (10·0.13 − 0.1·0.006)/(10 + 0.01) = 1.2994/10.01, f_y = 0.
    #[test]
    fn offset_contact_matches_normal_equations_and_grid() {
        let p = params(0.65, 0.004, 0.0, 10.0);
        let motion = PlanarMotion::new(Vector2::zeros(), 0.0, Vector2::new(0.2, 0.0), 1.5);
        let c = Vector2::new(0.0, 0.1);
        let closed = infer_force_frictionless(&motion, c, &p, SolverMethod::ClosedForm).unwrap();
        let expected = Vector2::new(1.2994 / 10.01, 0.0);
        assert!((closed.planar() - expected).norm() < 1e-15);
        let grid = infer_force_frictionless(&motion, c, &p, SolverMethod::GridOracle).unwrap();
        assert!((grid.planar() - expected).norm() < 1e-3);
    }

    #[test]
    fn zero_friction_reduces_to_frictionless() {
        let p = params(0.65, 0.004, 0.0, 10.0);
        let grid = ParticleGrid::rectangle([0.1, 0.075], &p).unwrap();
        let motion = PlanarMotion::new(Vector2::new(0.3, -0.1), 0.7, Vector2::new(0.5, 0.2), -1.0);
        let c = Vector2::new(-0.1, 0.03);
        let a = infer_force_frictionless(&motion, c, &p, SolverMethod::ClosedForm).unwrap();
        let b = infer_force_with_friction(&motion, c, &grid, &p, SolverMethod::ClosedForm).unwrap();
        assert_eq!(a.planar(), b.planar());
    }

    #[test]
    fn steady_push_cancels_friction() {
        let p = params(1.0, 0.01, 0.1, 10.0);
        let grid = ParticleGrid::rectangle([0.1, 0.075], &p).unwrap();
        let motion = PlanarMotion::new(Vector2::new(1.0, 0.0), 0.0, Vector2::zeros(), 0.0);
        let f = infer_force_with_friction(
            &motion,
            Vector2::zeros(),
            &grid,
            &p,
            SolverMethod::ClosedForm,
        )
        .unwrap();
        assert!((f.planar() - Vector2::new(0.981, 0.0)).norm() < 1e-12);
        assert!(f.objective < 1e-20);
    }

    #[test]
    fn static_motion_is_flagged() {
        let p = params(1.0, 0.01, 0.1, 10.0);
        let grid = ParticleGrid::rectangle([0.1, 0.075], &p).unwrap();
        let f = infer_force_with_friction(
            &PlanarMotion::default(),
            Vector2::zeros(),
            &grid,
            &p,
            SolverMethod::ClosedForm,
        )
        .unwrap();
        assert_eq!(f.regime, FrictionRegime::Static);
        assert_eq!(f.planar(), Vector2::zeros());
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (PlanarMotion, Vector2<f64>, PushParams) {
        let p = params(
            rng.gen_range(0.2..2.0),
            rng.gen_range(0.001..0.02),
            rng.gen_range(0.0..0.3),
            rng.gen_range(1.0..20.0),
        );
        let motion = PlanarMotion::new(
            Vector2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
            rng.gen_range(-3.0..3.0),
            Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
            rng.gen_range(-20.0..20.0),
        );
        let c = Vector2::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.075..0.075));
        (motion, c, p)
    }

    #[test]
    fn three_solvers_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let (motion, c, p) = random_instance(&mut rng);
            let grid = ParticleGrid::rectangle([0.1, 0.075], &p).unwrap();
            let solve = |m| {
                infer_force_with_friction(&motion, c, &grid, &p, m)
                    .unwrap()
                    .planar()
            };
            let closed = solve(SolverMethod::ClosedForm);
            assert!((closed - solve(SolverMethod::Iterative)).norm() < 1e-6);
            assert!((closed - solve(SolverMethod::GridOracle)).norm() < 1e-3);
        }
    }

    #[test]
    fn closed_form_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let (motion, c, p) = random_instance(&mut rng);
            let grid = ParticleGrid::rectangle([0.1, 0.075], &p).unwrap();
            let w = friction_wrench(&grid, &motion, &p);
            let obj = ForceObjective::new(&motion, c, &p, w.force, w.moment);
            let f = obj.minimize(SolverMethod::ClosedForm).unwrap();
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let delta = 1e-3 * Vector2::new(angle.cos(), angle.sin());
            assert!(obj.value(&f) <= obj.value(&(f + delta)));
            assert!(obj.gradient(&f).norm() < 1e-10);
        }
    }

    #[test]
    fn method_names_parse() {
        assert_eq!(
            "grid_oracle".parse::<SolverMethod>().unwrap(),
            SolverMethod::GridOracle
        );
        assert_eq!(
            "closed_form".parse::<SolverMethod>().unwrap(),
            SolverMethod::ClosedForm
        );
        assert!("slsqp".parse::<SolverMethod>().is_err());
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            fx in -3.0f64..3.0, fy in -3.0f64..3.0, cx in -0.2f64..0.2, cy in -0.2f64..0.2,
            ax in -2.0f64..2.0, ay in -2.0f64..2.0, b in -0.5f64..0.5, k in 0.5f64..20.0
        ) {
            let obj = ForceObjective {
                k,
                c: Vector2::new(cx, cy),
                linear_target: Vector2::new(ax, ay),
                angular_target: b,
            };
            let f = Vector2::new(fx, fy);
            let h = 1e-6;
            let g = obj.gradient(&f);
            for d in 0..2 {
                let mut e = Vector2::zeros();
                e[d] = h;
                let fd = (obj.value(&(f + e)) - obj.value(&(f - e))) / (2.0 * h);
                prop_assert!((fd - g[d]).abs() < 1e-6 * (1.0 + g[d].abs()));
            }
        }
    }
}

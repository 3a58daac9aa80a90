//! Training losses: scaled 3D error, support-plane projected error and the
//! alignment weight that favours forces along the contact normal.

use nalgebra::{Matrix3, Matrix3x2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dataset::SourceTag;
use crate::error::{Error, Result};
use crate::mechanics::{Frame, FrameTransform};

/// Samples with a smaller ground-truth magnitude (N) are left out of the loss.
pub const DEFAULT_MAGNITUDE_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Alignment-weighted scaled/projected error, chosen per source.
    #[default]
    Weighted,
    /// Squared 3D error on every sample; used by the MLP baseline.
    PlainL2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Exponent weight of the alignment term; 0 disables it.
    pub beta: f64,
    /// Rows of the 3x2 matrix whose columns span the support plane (world frame).
    pub support_plane: [[f64; 2]; 3],
    pub magnitude_floor: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::Weighted,
            beta: 1.0,
            support_plane: [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
            magnitude_floor: DEFAULT_MAGNITUDE_FLOOR,
        }
    }
}

impl LossConfig {
    pub fn psi(&self) -> Matrix3x2<f64> {
        let r = &self.support_plane;
        Matrix3x2::new(r[0][0], r[0][1], r[1][0], r[1][1], r[2][0], r[2][1])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::config("loss beta must be finite and non-negative"));
        }
        if !(self.magnitude_floor >= 0.0) {
            return Err(Error::config("loss magnitude_floor must be non-negative"));
        }
        let psi = self.psi();
        if ((psi.transpose() * psi) - nalgebra::Matrix2::identity())
            .abs()
            .max()
            > 1e-9
        {
            return Err(Error::config("support_plane columns must be orthonormal"));
        }
        Ok(())
    }
}

/// Everything the loss needs from a ground-truth sample. Forces and the
/// normal are sensor-frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub f_3d: Vector3<f64>,
    pub s_n: Vector3<f64>,
    pub r_wb: FrameTransform,
    pub source: SourceTag,
}

/// `‖f_3d − f_p‖ / ‖f_3d‖`.
pub fn loss_scaled_3d(f_3d: &Vector3<f64>, f_p: &Vector3<f64>) -> f64 {
    (f_3d - f_p).norm() / f_3d.norm()
}

/// `‖ψᵀ R_wb (f_3d − f_p)‖² / ‖f_3d‖`, the squared in-plane error.
pub fn loss_projected(
    f_3d: &Vector3<f64>,
    f_p: &Vector3<f64>,
    r_wb: &FrameTransform,
    psi: &Matrix3x2<f64>,
) -> Result<f64> {
    check_r_wb(r_wb)?;
    let u = psi.transpose() * r_wb.rotation() * (f_3d - f_p);
    Ok(u.norm_squared() / f_3d.norm())
}

fn check_r_wb(r_wb: &FrameTransform) -> Result<()> {
    if r_wb.from_frame() != Frame::Sensor || r_wb.to_frame() != Frame::World {
        return Err(Error::FrameMismatch {
            expected: "sensor -> world",
            actual: if r_wb.from_frame() == Frame::Sensor {
                r_wb.to_frame().name()
            } else {
                r_wb.from_frame().name()
            },
        });
    }
    Ok(())
}

/// Angle between `s_n` and `f_3d`, normalized to [0, 1].
pub fn cosine_distance(s_n: &Vector3<f64>, f_3d: &Vector3<f64>) -> Result<f64> {
    let n = f_3d.norm();
    if !(n > 0.0) {
        return Err(Error::DegenerateInput(
            "cosine distance of a zero force".into(),
        ));
    }
    // atan2 form of the clamped arccos; exact at the aligned and opposed ends.
    Ok(s_n.cross(f_3d).norm().atan2(s_n.dot(f_3d)) / std::f64::consts::PI)
}

/// `2^(β (1 − D))`: up to `2^β` for forces along the normal, 1 when opposed.
pub fn alpha_weight(s_n: &Vector3<f64>, f_3d: &Vector3<f64>, beta: f64) -> Result<f64> {
    Ok((beta * (1.0 - cosine_distance(s_n, f_3d)?)).exp2())
}

/// Per-sample loss and its gradient with respect to the prediction.
/// `None` means the sample falls under the magnitude floor and is skipped.
pub fn loss_and_grad(
    target: &Target,
    f_p: &Vector3<f64>,
    config: &LossConfig,
) -> Result<Option<(f64, Vector3<f64>)>> {
    let f = &target.f_3d;
    if config.kind == LossKind::PlainL2 {
        let r = f - f_p;
        return Ok(Some((r.norm_squared(), -2.0 * r)));
    }
    let mag = f.norm();
    if mag < config.magnitude_floor || mag == 0.0 {
        return Ok(None);
    }
    let alpha = alpha_weight(&target.s_n, f, config.beta)?;
    let r = f - f_p;
    let (loss, grad) = if target.source.is_planar_pushing() {
        check_r_wb(&target.r_wb)?;
        let psi = config.psi();
        let m: Matrix3<f64> = *target.r_wb.rotation();
        let u = psi.transpose() * m * r;
        (u.norm_squared() / mag, -2.0 * m.transpose() * psi * u / mag)
    } else {
        let rn = r.norm();
        // The norm has no derivative at an exact fit; take the zero subgradient.
        let g = if rn > 0.0 {
            -r / (rn * mag)
        } else {
            Vector3::zeros()
        };
        (rn / mag, g)
    };
    Ok(Some((alpha * loss, alpha * grad)))
}

pub fn combined_loss(
    target: &Target,
    f_p: &Vector3<f64>,
    config: &LossConfig,
) -> Result<Option<f64>> {
    Ok(loss_and_grad(target, f_p, config)?.map(|(l, _)| l))
}

/// Mean over non-skipped samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub mean: f64,
    pub used: usize,
    pub skipped: usize,
}

pub fn batch_loss(
    targets: &[Target],
    predictions: &[Vector3<f64>],
    config: &LossConfig,
) -> Result<BatchLoss> {
    if targets.len() != predictions.len() {
        return Err(Error::schema("targets and predictions differ in length"));
    }
    let mut sum = 0.0;
    let mut used = 0;
    for (t, p) in targets.iter().zip(predictions) {
        if let Some(l) = combined_loss(t, p, config)? {
            sum += l;
            used += 1;
        }
    }
    Ok(BatchLoss {
        mean: if used > 0 {
            sum / used as f64
        } else {
            f64::NAN
        },
        used,
        skipped: targets.len() - used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn target(f: Vector3<f64>, s_n: Vector3<f64>, source: SourceTag) -> Target {
        Target {
            f_3d: f,
            s_n,
            r_wb: FrameTransform::identity(Frame::Sensor, Frame::World),
            source,
        }
    }

    #[test]
    fn scaled_3d_examples() {
        let f = Vector3::new(1.0, 2.0, 2.0);
        assert_eq!(loss_scaled_3d(&f, &f), 0.0);
        assert_eq!(
            loss_scaled_3d(&Vector3::new(2.0, 0.0, 0.0), &Vector3::zeros()),
            1.0
        );
        let l = loss_scaled_3d(&f, &Vector3::new(1.0, 0.0, 0.0));
        assert!((l - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn projected_examples() {
        let id = FrameTransform::identity(Frame::Sensor, Frame::World);
        let psi = LossConfig::default().psi();
        let x = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(loss_projected(&x, &x, &id, &psi).unwrap(), 0.0);
        let along_normal = x + Vector3::new(0.0, 0.0, 0.7);
        assert_eq!(loss_projected(&x, &along_normal, &id, &psi).unwrap(), 0.0);
        let l = loss_projected(&x, &Vector3::new(0.0, 1.0, 0.0), &id, &psi).unwrap();
        assert!((l - 2.0).abs() < 1e-15);
        let wrong = FrameTransform::identity(Frame::Object, Frame::World);
        assert!(matches!(
            loss_projected(&x, &x, &wrong, &psi),
            Err(Error::FrameMismatch { .. })
        ));
    }

    #[test]
    fn cosine_distance_and_alpha_endpoints() {
        let n = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(
            cosine_distance(&n, &Vector3::new(0.0, 0.0, 3.0)).unwrap(),
            0.0
        );
        assert_eq!(
            cosine_distance(&n, &Vector3::new(0.0, 0.0, -3.0)).unwrap(),
            1.0
        );
        assert_eq!(
            cosine_distance(&n, &Vector3::new(2.0, 0.0, 0.0)).unwrap(),
            0.5
        );
        assert!(cosine_distance(&n, &Vector3::zeros()).is_err());
        for beta in [0.0, 0.5, 1.0, 3.0] {
            assert_eq!(alpha_weight(&n, &n, beta).unwrap(), beta.exp2());
            assert_eq!(alpha_weight(&n, &-n, beta).unwrap(), 1.0);
        }
        let a = alpha_weight(&n, &Vector3::new(0.0, 1.0, 0.0), 1.0).unwrap();
        assert!((a - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn alpha_decreases_with_angle() {
        let n = Vector3::new(0.0, 0.0, 1.0);
        let mut prev = f64::INFINITY;
        for i in 0..=90 {
            let th = i as f64 * std::f64::consts::PI / 90.0;
            let a = alpha_weight(&n, &Vector3::new(th.sin(), 0.0, th.cos()), 1.5).unwrap();
            assert!(a < prev);
            prev = a;
        }
    }

    #[test]
    fn combined_selects_case_by_source() {
        let cfg0 = LossConfig {
            beta: 0.0,
            ..LossConfig::default()
        };
        let f = Vector3::new(0.0, 0.0, 2.0);
        let p = Vector3::new(0.5, 0.0, 1.0);
        let t = target(f, Vector3::new(0.0, 0.0, 1.0), SourceTag::RigidFt);
        assert_eq!(
            combined_loss(&t, &p, &cfg0).unwrap(),
            Some(loss_scaled_3d(&f, &p))
        );

        let cfg = LossConfig::default();
        let t = target(f, Vector3::new(1.0, 0.0, 0.0), SourceTag::PlanarPushing);
        let alpha = alpha_weight(&t.s_n, &f, 1.0).unwrap();
        let proj = loss_projected(&f, &p, &t.r_wb, &cfg.psi()).unwrap();
        assert_eq!(combined_loss(&t, &p, &cfg).unwrap(), Some(alpha * proj));
    }

    #[test]
    fn batch_mean_of_hand_built_samples() {
        let cfg = LossConfig::default();
        let z = Vector3::new(0.0, 0.0, 1.0);
        let targets = vec![
            target(Vector3::new(0.0, 0.0, 1.0), z, SourceTag::RigidFt),
            target(Vector3::new(1.0, 0.0, 0.0), z, SourceTag::BallFt),
            target(Vector3::new(0.0, 2.0, 0.0), z, SourceTag::PlanarPushing),
        ];
        let preds = vec![
            Vector3::zeros(),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(1.0, 2.0, 5.0),
        ];
        // 2^1 * 1/1;  2^0.5 * 1/1;  2^0.5 * ‖(−1, 0)‖²/2
        let expected = (2.0 + 2f64.sqrt() + 2f64.sqrt() * 0.5) / 3.0;
        let b = batch_loss(&targets, &preds, &cfg).unwrap();
        assert!((b.mean - expected).abs() < 1e-15);
        assert_eq!((b.used, b.skipped), (3, 0));
    }

    #[test]
    fn tiny_forces_are_skipped() {
        let cfg = LossConfig::default();
        let t = target(
            Vector3::new(0.0, 0.005, 0.0),
            Vector3::z(),
            SourceTag::BallFt,
        );
        assert_eq!(combined_loss(&t, &Vector3::zeros(), &cfg).unwrap(), None);
        let b = batch_loss(&[t], &[Vector3::zeros()], &cfg).unwrap();
        assert_eq!((b.used, b.skipped), (0, 1));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let r = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let cfgs = [
            LossConfig::default(),
            LossConfig {
                kind: LossKind::PlainL2,
                ..LossConfig::default()
            },
        ];
        for source in [SourceTag::RigidFt, SourceTag::PlanarPushing] {
            for cfg in &cfgs {
                let t = Target {
                    f_3d: Vector3::new(0.4, -1.2, 0.3),
                    s_n: Vector3::new(0.0, 0.6, 0.8),
                    r_wb: FrameTransform::from_rotation(r, Frame::Sensor, Frame::World),
                    source,
                };
                let p = Vector3::new(0.1, 0.2, -0.5);
                let (_, g) = loss_and_grad(&t, &p, cfg).unwrap().unwrap();
                for a in 0..3 {
                    let h = 1e-6;
                    let mut up = p;
                    up[a] += h;
                    let mut down = p;
                    down[a] -= h;
                    let num = (combined_loss(&t, &up, cfg).unwrap().unwrap()
                        - combined_loss(&t, &down, cfg).unwrap().unwrap())
                        / (2.0 * h);
                    assert!(
                        (num - g[a]).abs() < 1e-7,
                        "{source:?} axis {a}: {num} vs {}",
                        g[a]
                    );
                }
            }
        }
    }

    #[test]
    fn non_orthonormal_plane_rejected() {
        let cfg = LossConfig {
            support_plane: [[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]],
            ..LossConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(LossConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn scaled_3d_rotation_and_scale_invariant(
            f in prop::array::uniform3(-2.0f64..2.0), p in prop::array::uniform3(-2.0f64..2.0),
            r in prop::array::uniform3(-3.0f64..3.0), c in 0.01f64..100.0
        ) {
            let f = Vector3::from(f);
            let p = Vector3::from(p);
            prop_assume!(f.norm() > 1e-3);
            let rot = Rotation3::from_euler_angles(r[0], r[1], r[2]);
            let base = loss_scaled_3d(&f, &p);
            prop_assert!((loss_scaled_3d(&(rot * f), &(rot * p)) - base).abs() < 1e-9 * base.max(1.0));
            prop_assert!((loss_scaled_3d(&(c * f), &(c * p)) - base).abs() < 1e-9 * base.max(1.0));
        }
    }
}

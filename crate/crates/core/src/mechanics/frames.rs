use std::fmt;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference frames that forces are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Pushed object, origin at its centre of mass.
    Object,
    /// Tactile sensor frame B.
    Sensor,
    World,
}

impl Frame {
    pub fn name(self) -> &'static str {
        match self {
            Frame::Object => "object",
            Frame::Sensor => "sensor",
            Frame::World => "world",
        }
    }

    fn is_planar(self) -> bool {
        matches!(self, Frame::Object | Frame::World)
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForceComponents {
    Planar(Vector2<f64>),
    Spatial(Vector3<f64>),
}

/// A force in newtons, always tagged with its frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceVector {
    components: ForceComponents,
    frame: Frame,
}

impl ForceVector {
    /// Planar forces only make sense in the object or world support plane.
    pub fn planar(v: Vector2<f64>, frame: Frame) -> Result<Self> {
        if !frame.is_planar() {
            return Err(Error::FrameMismatch {
                expected: "object or world",
                actual: frame.name(),
            });
        }
        Ok(ForceVector {
            components: ForceComponents::Planar(v),
            frame,
        })
    }

    pub fn spatial(v: Vector3<f64>, frame: Frame) -> Self {
        ForceVector {
            components: ForceComponents::Spatial(v),
            frame,
        }
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn components(&self) -> ForceComponents {
        self.components
    }

    /// Embeds planar vectors with a zero out-of-plane component.
    pub fn to_3d(&self) -> Vector3<f64> {
        match self.components {
            ForceComponents::Planar(v) => Vector3::new(v.x, v.y, 0.0),
            ForceComponents::Spatial(v) => v,
        }
    }

    pub fn as_planar(&self) -> Option<Vector2<f64>> {
        match self.components {
            ForceComponents::Planar(v) => Some(v),
            ForceComponents::Spatial(_) => None,
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_3d().norm()
    }
}

/// Rotation taking vectors from one frame to another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform {
    rotation: Matrix3<f64>,
    from: Frame,
    to: Frame,
}

const ORTHONORMAL_TOL: f64 = 1e-9;

impl FrameTransform {
    pub fn new(rotation: Matrix3<f64>, from: Frame, to: Frame) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::Numerical {
                context: format!("rotation {from}->{to} is not orthonormal (error {err:e})"),
            });
        }
        if rotation.determinant() <= 0.0 {
            return Err(Error::Numerical {
                context: format!("rotation {from}->{to} is a reflection"),
            });
        }
        Ok(FrameTransform { rotation, from, to })
    }

    pub fn identity(from: Frame, to: Frame) -> Self {
        FrameTransform {
            rotation: Matrix3::identity(),
            from,
            to,
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>, from: Frame, to: Frame) -> Self {
        FrameTransform {
            rotation: *rotation.matrix(),
            from,
            to,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn from_frame(&self) -> Frame {
        self.from
    }

    pub fn to_frame(&self) -> Frame {
        self.to
    }

    pub fn inverse(&self) -> Self {
        FrameTransform {
            rotation: self.rotation.transpose(),
            from: self.to,
            to: self.from,
        }
    }

    /// `self` after `first`: maps `first.from` to `self.to`.
    pub fn compose(&self, first: &FrameTransform) -> Result<Self> {
        if first.to != self.from {
            return Err(Error::FrameMismatch {
                expected: self.from.name(),
                actual: first.to.name(),
            });
        }
        Ok(FrameTransform {
            rotation: self.rotation * first.rotation,
            from: first.from,
            to: self.to,
        })
    }

    pub fn apply(&self, f: &ForceVector) -> Result<ForceVector> {
        if f.frame != self.from {
            return Err(Error::FrameMismatch {
                expected: self.from.name(),
                actual: f.frame.name(),
            });
        }
        Ok(ForceVector::spatial(self.rotation * f.to_3d(), self.to))
    }

    /// Row-major flattening, as stored in dataset records.
    pub fn to_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn from_row_major(values: &[f64; 9], from: Frame, to: Frame) -> Result<Self> {
        FrameTransform::new(Matrix3::from_row_slice(values), from, to)
    }
}

/// Rotates a planar object-frame contact force into the sensor frame.
pub fn to_sensor_frame(f_c: &ForceVector, transform: &FrameTransform) -> Result<ForceVector> {
    if f_c.frame != Frame::Object || f_c.as_planar().is_none() {
        return Err(Error::FrameMismatch {
            expected: "object(planar)",
            actual: f_c.frame.name(),
        });
    }
    if transform.from != Frame::Object || transform.to != Frame::Sensor {
        return Err(Error::FrameMismatch {
            expected: "object->sensor",
            actual: transform.to.name(),
        });
    }
    transform.apply(f_c)
}

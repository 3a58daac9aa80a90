//! BioTac-style fingertip sensor model.
//!
//! Coordinates are in the sensor frame B: the z axis runs along the
//! cylinder axis toward the cap, x points outward through the sensing
//! face and the origin sits on the axis at the cylinder base. The sensing
//! surface is the x >= 0 half of a cylinder of radius `r` spanning
//! `0 <= z <= L`, closed at `z = L` by a spherical cap section of the same
//! radius centred on the axis.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_ELECTRODES: usize = 19;
pub const NUM_PAC: usize = 22;
/// Length of the flattened `[e, p_dc, p_ac, T_dc, T_ac]` vector.
pub const SAMPLE_LEN: usize = NUM_ELECTRODES + 1 + NUM_PAC + 2;

/// One tactile reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub e: [f64; NUM_ELECTRODES],
    pub p_dc: f64,
    pub p_ac: [f64; NUM_PAC],
    pub t_dc: f64,
    pub t_ac: f64,
    /// Timestamp in seconds.
    pub t: f64,
}

impl SensorSample {
    pub fn zeros(t: f64) -> Self {
        SensorSample {
            e: [0.0; NUM_ELECTRODES],
            p_dc: 0.0,
            p_ac: [0.0; NUM_PAC],
            t_dc: 0.0,
            t_ac: 0.0,
            t,
        }
    }

    pub fn from_slice(z: &[f64], t: f64) -> Result<Self> {
        if z.len() != SAMPLE_LEN {
            return Err(Error::schema(format!(
                "sensor vector has {} components, expected {SAMPLE_LEN}",
                z.len()
            )));
        }
        let mut s = SensorSample::zeros(t);
        s.e.copy_from_slice(&z[..NUM_ELECTRODES]);
        s.p_dc = z[NUM_ELECTRODES];
        s.p_ac
            .copy_from_slice(&z[NUM_ELECTRODES + 1..NUM_ELECTRODES + 1 + NUM_PAC]);
        s.t_dc = z[SAMPLE_LEN - 2];
        s.t_ac = z[SAMPLE_LEN - 1];
        Ok(s)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(SAMPLE_LEN);
        z.extend_from_slice(&self.e);
        z.push(self.p_dc);
        z.extend_from_slice(&self.p_ac);
        z.push(self.t_dc);
        z.push(self.t_ac);
        z
    }
}

/// Subtracts the resting reference from a raw 44-component reading.
pub fn tare(raw: &[f64], reference: &[f64], t: f64) -> Result<SensorSample> {
    if raw.len() != SAMPLE_LEN || reference.len() != SAMPLE_LEN {
        return Err(Error::schema(format!(
            "tare expects two {SAMPLE_LEN}-vectors, got {} and {}",
            raw.len(),
            reference.len()
        )));
    }
    let diff: Vec<f64> = raw.iter().zip(reference).map(|(r, z)| r - z).collect();
    SensorSample::from_slice(&diff, t)
}

/// Half-cylinder body with a spherical cap of the same radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGeometry {
    #[serde(rename = "radius_m")]
    pub radius: f64,
    #[serde(rename = "half_cylinder_length_m")]
    pub half_cylinder_length: f64,
}

impl Default for SurfaceGeometry {
    /// Synthetic stand-in dimensions: 7 mm radius, 15 mm body.
    fn default() -> Self {
        SurfaceGeometry {
            radius: 0.007,
            half_cylinder_length: 0.015,
        }
    }
}

/// Which part of the composite surface a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfacePatch {
    Body,
    Cap,
}

impl SurfaceGeometry {
    pub fn new(radius: f64, half_cylinder_length: f64) -> Result<Self> {
        let g = SurfaceGeometry {
            radius,
            half_cylinder_length,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::config("radius_m must be positive"));
        }
        if !(self.half_cylinder_length >= 0.0 && self.half_cylinder_length.is_finite()) {
            return Err(Error::config("half_cylinder_length_m must be non-negative"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let g: SurfaceGeometry =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        g.validate()?;
        Ok(g)
    }

    pub fn cap_center(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.half_cylinder_length)
    }

    /// Axis-aligned bounding box `(min, max)` of the sensing surface.
    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let r = self.radius;
        (
            Vector3::new(0.0, -r, 0.0),
            Vector3::new(r, r, self.half_cylinder_length + r),
        )
    }

    /// Point on the body at axial height `z` and azimuth `phi` (measured from +x).
    pub fn body_point(&self, phi: f64, z: f64) -> Vector3<f64> {
        Vector3::new(self.radius * phi.cos(), self.radius * phi.sin(), z)
    }

    /// Point on the cap at `elevation` above the cap's base plane and `azimuth` from +x.
    pub fn cap_point(&self, azimuth: f64, elevation: f64) -> Vector3<f64> {
        self.cap_center() + self.radius * spherical_dir(azimuth, elevation)
    }

    /// Outward normal at a surface point, or `None` if the point is on the axis.
    pub fn normal_at(&self, p: &Vector3<f64>) -> Option<(Vector3<f64>, SurfacePatch)> {
        if p.z > self.half_cylinder_length {
            let w = p - self.cap_center();
            let n = w.norm();
            (n > 0.0).then(|| (w / n, SurfacePatch::Cap))
        } else {
            let rho = p.xy().norm();
            (rho > 0.0).then(|| (Vector3::new(p.x / rho, p.y / rho, 0.0), SurfacePatch::Body))
        }
    }

    /// Distance from `p` to the sensing surface.
    pub fn distance_to_surface(&self, p: &Vector3<f64>) -> Result<f64> {
        let c = surface_point_and_normal(self, p)?;
        Ok((c.s_c - p).norm())
    }
}

fn spherical_dir(azimuth: f64, elevation: f64) -> Vector3<f64> {
    Vector3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    )
}

/// Contact point and outward normal in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactState {
    pub s_c: Vector3<f64>,
    pub s_n: Vector3<f64>,
    pub in_contact: bool,
}

impl ContactState {
    pub fn none() -> Self {
        ContactState {
            s_c: Vector3::zeros(),
            s_n: Vector3::zeros(),
            in_contact: false,
        }
    }
}

/// Closest point on the sensing surface to `query`, with the outward normal there.
///
/// The body only covers azimuths in `[-pi/2, pi/2]` and heights `[0, L]`; the
/// cap only covers the `x >= 0` half of the upper hemisphere. Both patches are
/// projected onto independently and the nearer candidate wins.
pub fn surface_point_and_normal(
    geometry: &SurfaceGeometry,
    query: &Vector3<f64>,
) -> Result<ContactState> {
    let r = geometry.radius;
    let len = geometry.half_cylinder_length;
    let rho = query.xy().norm();
    let degenerate_tol = 1e-12 * r;

    // Body candidate.
    let body = if rho > degenerate_tol {
        let phi = query.y.atan2(query.x).clamp(-FRAC_PI_2, FRAC_PI_2);
        let z = query.z.clamp(0.0, len);
        let dir = Vector3::new(phi.cos(), phi.sin(), 0.0);
        Some((Vector3::new(0.0, 0.0, z) + r * dir, dir))
    } else {
        None
    };

    // Cap candidate: project onto the sphere, then onto the x >= 0, z >= 0 quarter.
    let w = query - geometry.cap_center();
    let cap = {
        let mut d = w;
        d.x = d.x.max(0.0);
        d.z = d.z.max(0.0);
        let n = d.norm();
        if n > degenerate_tol {
            let dir = d / n;
            Some((geometry.cap_center() + r * dir, dir))
        } else {
            None
        }
    };

    let pick = match (body, cap) {
        (Some(b), Some(c)) => {
            let db = (b.0 - query).norm_squared();
            let dc = (c.0 - query).norm_squared();
            if dc < db {
                c
            } else {
                b
            }
        }
        // On the axis beside the body every azimuth is equally close, so only
        // axial queries beyond the cap resolve.
        (None, Some(c)) if query.z > len => c,
        (Some(b), None) => b,
        _ => {
            return Err(Error::DegenerateInput(format!(
                "query {:?} lies on the sensor axis; the surface normal is undefined",
                [query.x, query.y, query.z]
            )))
        }
    };
    Ok(ContactState {
        s_c: pick.0,
        s_n: pick.1,
        in_contact: true,
    })
}

/// Electrode positions and orientations in frame B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeLayout {
    pub positions: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
}

impl ElectrodeLayout {
    pub fn new(positions: Vec<[f64; 3]>, normals: Vec<[f64; 3]>) -> Result<Self> {
        let layout = ElectrodeLayout { positions, normals };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != NUM_ELECTRODES || self.normals.len() != NUM_ELECTRODES {
            return Err(Error::schema(format!(
                "electrode layout needs {NUM_ELECTRODES} positions and normals, got {} and {}",
                self.positions.len(),
                self.normals.len()
            )));
        }
        for (i, n) in self.normals.iter().enumerate() {
            let len = Vector3::from(*n).norm();
            if (len - 1.0).abs() > 1e-9 {
                return Err(Error::schema(format!(
                    "electrode {i} normal has length {len}"
                )));
            }
        }
        Ok(())
    }

    /// Checks every electrode sits on or inside the sensor surface.
    pub fn check_inside(&self, geometry: &SurfaceGeometry) -> Result<()> {
        let tol = 1e-9;
        for (i, p) in self.positions.iter().enumerate() {
            let p = Vector3::from(*p);
            let inside = if p.z <= geometry.half_cylinder_length {
                p.z >= -tol && p.x >= -tol && p.xy().norm() <= geometry.radius + tol
            } else {
                p.x >= -tol && (p - geometry.cap_center()).norm() <= geometry.radius + tol
            };
            if !inside {
                return Err(Error::schema(format!(
                    "electrode {i} at {:?} lies outside the sensor surface",
                    self.positions[i]
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let layout: ElectrodeLayout =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.positions[i])
    }

    pub fn normal(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.normals[i])
    }

    /// Synthetic default layout: four rows of four electrodes over the body
    /// and three on the cap, all on the surface with radial normals.
    ///
    /// Real electrode coordinates are not public; this layout only has to be
    /// plausible and deterministic, and bin to distinct voxels on the default grid.
    pub fn synthetic(geometry: &SurfaceGeometry) -> Self {
        let len = geometry.half_cylinder_length;
        let mut positions = Vec::with_capacity(NUM_ELECTRODES);
        let mut normals = Vec::with_capacity(NUM_ELECTRODES);
        let azimuths = [-60f64, -20.0, 20.0, 60.0];
        for (row, frac) in [0.13, 0.4, 0.67, 0.93].iter().enumerate() {
            for (col, az) in azimuths.iter().enumerate() {
                // Stagger alternate rows so columns do not line up exactly.
                let shift = if row % 2 == 1 { 10.0 } else { 0.0 };
                let phi = (az + if col < 2 { -shift } else { shift }).to_radians();
                let p = geometry.body_point(phi, frac * len);
                positions.push([p.x, p.y, p.z]);
                normals.push([phi.cos(), phi.sin(), 0.0]);
            }
        }
        for (az, el) in [(-45f64, 40f64), (45.0, 40.0), (0.0, 75.0)] {
            let (az, el) = (az.to_radians(), el.to_radians());
            let p = geometry.cap_point(az, el);
            let n = spherical_dir(az, el);
            positions.push([p.x, p.y, p.z]);
            normals.push([n.x, n.y, n.z]);
        }
        ElectrodeLayout { positions, normals }
    }
}

/// Outcome of the pressure-based contact test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactDecision {
    InContact,
    NoContact,
    /// Fewer samples than the window: no decision possible yet.
    InsufficientHistory,
}

impl ContactDecision {
    pub fn is_contact(self) -> bool {
        self == ContactDecision::InContact
    }
}

pub const DEFAULT_CONTACT_THRESHOLD: f64 = 10.0;
pub const DEFAULT_CONTACT_WINDOW: usize = 10;

/// Contact holds when each of the last `window` static-pressure values exceeds `threshold`.
pub fn detect_contact(pressure_history: &[f64], threshold: f64, window: usize) -> ContactDecision {
    if window == 0 || pressure_history.len() < window {
        return ContactDecision::InsufficientHistory;
    }
    let recent = &pressure_history[pressure_history.len() - window..];
    if recent.iter().all(|&p| p > threshold) {
        ContactDecision::InContact
    } else {
        ContactDecision::NoContact
    }
}

/// Streaming version of [`detect_contact`] that tracks how many consecutive
/// samples have exceeded the threshold.
#[derive(Debug, Clone)]
pub struct ContactDetector {
    threshold: f64,
    window: usize,
    run: usize,
    seen: usize,
}

impl ContactDetector {
    pub fn new(threshold: f64, window: usize) -> Self {
        ContactDetector {
            threshold,
            window,
            run: 0,
            seen: 0,
        }
    }

    pub fn push(&mut self, p_dc: f64) -> ContactDecision {
        self.seen += 1;
        if p_dc > self.threshold {
            self.run += 1;
        } else {
            self.run = 0;
        }
        if self.window == 0 || self.seen < self.window {
            ContactDecision::InsufficientHistory
        } else if self.run >= self.window {
            ContactDecision::InContact
        } else {
            ContactDecision::NoContact
        }
    }
}

impl Default for ContactDetector {
    fn default() -> Self {
        ContactDetector::new(DEFAULT_CONTACT_THRESHOLD, DEFAULT_CONTACT_WINDOW)
    }
}

/// Foot of the perpendicular from `p` onto the sensor axis (clamped to the body).
pub fn axis_foot_point(geometry: &SurfaceGeometry, p: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(0.0, 0.0, p.z.clamp(0.0, geometry.half_cylinder_length))
}

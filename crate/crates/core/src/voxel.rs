//! Two-channel voxel encoding of electrode readings and the contact point.
//!
//! Channel 0 holds each electrode's value in the voxel containing that
//! electrode; channel 1 is a one-hot of the voxel containing the contact
//! point. Data is stored channel-major, then x, y, z (z fastest).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensor::{ElectrodeLayout, SurfaceGeometry, NUM_ELECTRODES};

pub const CHANNELS: usize = 2;
pub const DEFAULT_DIMS: [usize; 3] = [15, 15, 7];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// Frame-B axis sampled by each grid axis for sensor grids: the two long
/// grid axes run along the finger (z) and across it (y), and the short
/// depth axis runs outward through the sensing face (x).
pub const SENSOR_AXES: [usize; 3] = [2, 1, 0];

fn identity_axes() -> [usize; 3] {
    [0, 1, 2]
}

/// Grid resolution and the box in frame B that it covers.
///
/// `bounds` are frame-B coordinates; grid axis `a` has `dims[a]` cells
/// spanning frame-B axis `axes[a]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub bounds: Bounds,
    #[serde(default = "identity_axes")]
    pub axes: [usize; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], bounds: Bounds) -> Result<Self> {
        GridSpec::with_axes(dims, bounds, identity_axes())
    }

    pub fn with_axes(dims: [usize; 3], bounds: Bounds, axes: [usize; 3]) -> Result<Self> {
        let spec = GridSpec { dims, bounds, axes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let mut sorted = self.axes;
        sorted.sort_unstable();
        if sorted != [0, 1, 2] {
            return Err(Error::config(
                "grid axes must be a permutation of [0, 1, 2]",
            ));
        }
        for a in 0..3 {
            if self.dims[a] == 0 {
                return Err(Error::config("grid dims must be positive"));
            }
            if !(self.bounds.max[a] > self.bounds.min[a]) {
                return Err(Error::config(
                    "grid bounds must have max > min on every axis",
                ));
            }
        }
        Ok(())
    }

    /// Tight box around the sensor surface, padded by one cell on each side.
    pub fn for_geometry(geometry: &SurfaceGeometry, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d < 3) {
            return Err(Error::config(
                "each grid dimension needs at least 3 cells for the margin",
            ));
        }
        let (lo, hi) = geometry.bounding_box();
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for (a, &b) in SENSOR_AXES.iter().enumerate() {
            let cell = (hi[b] - lo[b]) / (dims[a] - 2) as f64;
            min[b] = lo[b] - cell;
            max[b] = hi[b] + cell;
        }
        GridSpec::with_axes(dims, Bounds { min, max }, SENSOR_AXES)
    }

    pub fn cell_size(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (a, ca) in c.iter_mut().enumerate() {
            let b = self.axes[a];
            *ca = (self.bounds.max[b] - self.bounds.min[b]) / self.dims[a] as f64;
        }
        c
    }

    pub fn num_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }

    pub fn cell_center(&self, idx: [usize; 3]) -> Vector3<f64> {
        let c = self.cell_size();
        let mut p = Vector3::zeros();
        for a in 0..3 {
            let b = self.axes[a];
            p[b] = self.bounds.min[b] + (idx[a] as f64 + 0.5) * c[a];
        }
        p
    }
}

/// Floor binning of a point; the upper bound maps to the last cell.
pub fn voxel_index(point: &Vector3<f64>, spec: &GridSpec) -> Result<[usize; 3]> {
    let cell = spec.cell_size();
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let b = spec.axes[a];
        let p = point[b];
        if !(p >= spec.bounds.min[b] && p <= spec.bounds.max[b]) {
            return Err(Error::OutOfBounds {
                point: [point.x, point.y, point.z],
            });
        }
        let i = ((p - spec.bounds.min[b]) / cell[a]).floor() as usize;
        idx[a] = i.min(spec.dims[a] - 1);
    }
    Ok(idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl VoxelGrid {
    pub fn zeros(dims: [usize; 3]) -> Self {
        VoxelGrid {
            dims,
            data: vec![0.0; CHANNELS * dims.iter().product::<usize>()],
        }
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.dims.iter().product::<usize>();
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn get(&self, ch: usize, idx: [usize; 3]) -> f64 {
        let n = self.dims.iter().product::<usize>();
        self.data[ch * n + (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]]
    }
}

/// Layout-specific encoder with electrode voxels resolved up front.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelEncoder {
    spec: GridSpec,
    electrode_cells: [usize; NUM_ELECTRODES],
}

impl VoxelEncoder {
    pub fn new(layout: &ElectrodeLayout, spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        layout.validate()?;
        let mut electrode_cells = [0usize; NUM_ELECTRODES];
        let mut owners: Vec<Option<usize>> = vec![None; spec.num_cells()];
        for (i, cell_slot) in electrode_cells.iter_mut().enumerate() {
            let idx = voxel_index(&layout.position(i), &spec)?;
            let cell = spec.flat_index(idx);
            if let Some(first) = owners[cell] {
                return Err(Error::LayoutCollision {
                    first,
                    second: i,
                    voxel: idx,
                });
            }
            owners[cell] = Some(i);
            *cell_slot = cell;
        }
        Ok(VoxelEncoder {
            spec,
            electrode_cells,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn input_len(&self) -> usize {
        CHANNELS * self.spec.num_cells()
    }

    /// Writes the encoding into `out`, which must be `input_len()` long.
    pub fn encode_into(
        &self,
        e: &[f64],
        contact: Option<&Vector3<f64>>,
        out: &mut [f64],
    ) -> Result<()> {
        if e.len() != NUM_ELECTRODES {
            return Err(Error::schema(format!(
                "expected {NUM_ELECTRODES} electrode values, got {}",
                e.len()
            )));
        }
        let n = self.spec.num_cells();
        if out.len() != CHANNELS * n {
            return Err(Error::Shape {
                layer: "voxel input".into(),
                expected: CHANNELS * n,
                actual: out.len(),
            });
        }
        let contact_cell = contact.map(|p| voxel_index(p, &self.spec)).transpose()?;
        out.fill(0.0);
        for (value, &cell) in e.iter().zip(&self.electrode_cells) {
            out[cell] = *value;
        }
        if let Some(idx) = contact_cell {
            out[n + self.spec.flat_index(idx)] = 1.0;
        }
        Ok(())
    }

    pub fn encode(&self, e: &[f64], contact: Option<&Vector3<f64>>) -> Result<VoxelGrid> {
        let mut grid = VoxelGrid::zeros(self.spec.dims);
        self.encode_into(e, contact, &mut grid.data)?;
        Ok(grid)
    }
}

/// One-shot encoding; prefer [`VoxelEncoder`] when encoding many samples.
pub fn encode(
    e: &[f64],
    s_c: Option<&Vector3<f64>>,
    layout: &ElectrodeLayout,
    spec: &GridSpec,
) -> Result<VoxelGrid> {
    VoxelEncoder::new(layout, *spec)?.encode(e, s_c)
}

//! Convolutional force regressor trained from scratch.
//!
//! The voxel architecture runs two strided 3D convolutions over the
//! electrode/contact grid, folds the remaining depth axis into channels,
//! applies one strided 2D convolution, then a fully connected stack ending
//! in a 3-vector. Every hidden conv and dense layer is followed by layer
//! norm and ReLU. The dense architecture skips the grid and feeds the raw
//! electrode values and contact point straight into the dense stack.

pub mod loss;
pub mod network;
pub mod optim;
mod train;

pub use loss::{
    alpha_weight, batch_loss, combined_loss, cosine_distance, loss_and_grad, loss_projected,
    loss_scaled_3d, BatchLoss, LossConfig, LossKind, Target,
};
pub use network::{Layer, LayerKind, Network, NetworkBuilder, Shape, Workspace};
pub use optim::{Adam, AdamConfig, DecayUnit, LrSchedule};
pub use train::{
    batch_gradient, evaluate_loss, train, Checkpoint, CheckpointMeta, EpochStats, PreparedSet,
    TrainingConfig, TrainingOutcome, TrainingReport, CHECKPOINT_FORMAT,
};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ForceSample;
use crate::error::{Error, Result};
use crate::sensor::{ElectrodeLayout, NUM_ELECTRODES};
use crate::voxel::{GridSpec, VoxelEncoder, CHANNELS};

/// Samples per work unit when a batch is spread over threads. Partial results
/// are reduced in chunk order, so results do not depend on the thread count.
pub(crate) const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[default]
    Voxel,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    pub conv3d_channels: Vec<usize>,
    pub conv2d_channels: usize,
    pub fc_widths: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub output_dim: usize,
    pub layer_norm: bool,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            architecture: Architecture::Voxel,
            conv3d_channels: vec![8, 16],
            conv2d_channels: 32,
            fc_widths: vec![128, 64],
            kernel: 2,
            stride: 2,
            output_dim: 3,
            layer_norm: true,
            activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel != 2 || self.stride != 2 {
            return Err(Error::config("convolutions use kernel = stride = 2"));
        }
        if self.output_dim != 3 {
            return Err(Error::config("output_dim must be 3"));
        }
        if self.architecture == Architecture::Voxel
            && (self.conv3d_channels.is_empty() || self.conv2d_channels == 0)
        {
            return Err(Error::config(
                "voxel architecture needs conv3d_channels and conv2d_channels",
            ));
        }
        if self.architecture == Architecture::Dense && self.fc_widths.is_empty() {
            return Err(Error::config(
                "dense architecture needs at least one hidden layer in fc_widths",
            ));
        }
        if self.conv3d_channels.contains(&0) || self.fc_widths.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        Ok(())
    }

    pub fn build(&self, input: Shape) -> Result<Network> {
        self.validate()?;
        let mut b = NetworkBuilder::new(input);
        let hidden = |b: &mut NetworkBuilder, name: &str| {
            if self.layer_norm {
                b.layer_norm(&format!("ln_{name}"));
            }
            match self.activation {
                Activation::Relu => b.relu(&format!("relu_{name}")),
                Activation::Tanh => b.tanh(&format!("tanh_{name}")),
            };
        };
        if self.architecture == Architecture::Voxel {
            if input[0] != CHANNELS {
                return Err(Error::Shape {
                    layer: "conv3d_1".into(),
                    expected: CHANNELS,
                    actual: input[0],
                });
            }
            let k = self.kernel;
            let s = self.stride;
            for (i, &c) in self.conv3d_channels.iter().enumerate() {
                let name = format!("conv3d_{}", i + 1);
                b.conv(&name, c, [k; 3], [s; 3])?;
                hidden(&mut b, &name);
            }
            b.depth_to_channels("depth_to_channels");
            b.conv("conv2d_1", self.conv2d_channels, [k, k, 1], [s, s, 1])?;
            hidden(&mut b, "conv2d_1");
            b.flatten("flatten");
        }
        for (i, &w) in self.fc_widths.iter().enumerate() {
            let name = format!("fc_{}", i + 1);
            b.dense(&name, w)?;
            hidden(&mut b, &name);
        }
        b.dense("output", self.output_dim)?;
        Ok(b.finish())
    }
}

/// How a sample becomes network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    /// Two-channel voxel grid; electrode values multiplied by `electrode_scale`.
    Voxel {
        grid: GridSpec,
        layout: ElectrodeLayout,
        electrode_scale: f64,
    },
    /// `[e · electrode_scale, s_c · position_scale]`, 22 values.
    Flat {
        electrode_scale: f64,
        position_scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputEncoder {
    spec: InputSpec,
    voxel: Option<VoxelEncoder>,
}

impl InputEncoder {
    pub fn new(spec: InputSpec) -> Result<Self> {
        let voxel = match &spec {
            InputSpec::Voxel {
                grid,
                layout,
                electrode_scale,
            } => {
                check_scale("electrode_scale", *electrode_scale)?;
                Some(VoxelEncoder::new(layout, *grid)?)
            }
            InputSpec::Flat {
                electrode_scale,
                position_scale,
            } => {
                check_scale("electrode_scale", *electrode_scale)?;
                check_scale("position_scale", *position_scale)?;
                None
            }
        };
        Ok(InputEncoder { spec, voxel })
    }

    pub fn spec(&self) -> &InputSpec {
        &self.spec
    }

    pub fn shape(&self) -> Shape {
        match &self.voxel {
            Some(v) => {
                let d = v.spec().dims;
                [CHANNELS, d[0], d[1], d[2]]
            }
            None => [NUM_ELECTRODES + 3, 1, 1, 1],
        }
    }

    pub fn encode_into(&self, e: &[f64], s_c: &Vector3<f64>, out: &mut [f64]) -> Result<()> {
        if e.len() != NUM_ELECTRODES {
            return Err(Error::schema(format!(
                "expected {NUM_ELECTRODES} electrode values, got {}",
                e.len()
            )));
        }
        match (&self.spec, &self.voxel) {
            (
                InputSpec::Voxel {
                    electrode_scale, ..
                },
                Some(enc),
            ) => {
                let mut scaled = [0.0; NUM_ELECTRODES];
                for (s, v) in scaled.iter_mut().zip(e) {
                    *s = v * electrode_scale;
                }
                enc.encode_into(&scaled, Some(s_c), out)
            }
            (
                InputSpec::Flat {
                    electrode_scale,
                    position_scale,
                },
                _,
            ) => {
                if out.len() != NUM_ELECTRODES + 3 {
                    return Err(Error::Shape {
                        layer: "flat input".into(),
                        expected: NUM_ELECTRODES + 3,
                        actual: out.len(),
                    });
                }
                for (o, v) in out.iter_mut().zip(e) {
                    *o = v * electrode_scale;
                }
                for a in 0..3 {
                    out[NUM_ELECTRODES + a] = s_c[a] * position_scale;
                }
                Ok(())
            }
            _ => unreachable!("voxel spec always carries an encoder"),
        }
    }
}

fn check_scale(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(format!("{name} must be positive")));
    }
    Ok(())
}

/// A network with its parameters and input encoding.
#[derive(Debug, Clone)]
pub struct Model {
    pub network: Network,
    pub params: Vec<f64>,
    pub encoder: InputEncoder,
}

impl Model {
    pub fn new(config: &NetworkConfig, input: InputSpec, params: Vec<f64>) -> Result<Self> {
        let encoder = InputEncoder::new(input)?;
        let network = config.build(encoder.shape())?;
        if params.len() != network.num_params() {
            return Err(Error::Shape {
                layer: "parameters".into(),
                expected: network.num_params(),
                actual: params.len(),
            });
        }
        Ok(Model {
            network,
            params,
            encoder,
        })
    }

    pub fn predict(&self, e: &[f64], s_c: &Vector3<f64>) -> Result<Vector3<f64>> {
        let mut ws = self.network.workspace();
        self.predict_ws(e, s_c, &mut ws)
    }

    fn predict_ws(
        &self,
        e: &[f64],
        s_c: &Vector3<f64>,
        ws: &mut Workspace,
    ) -> Result<Vector3<f64>> {
        self.encoder.encode_into(e, s_c, ws.input_mut())?;
        let out = self.network.forward_ws(&self.params, ws)?;
        Ok(Vector3::new(out[0], out[1], out[2]))
    }

    pub fn predict_batch(&self, samples: &[ForceSample]) -> Result<Vec<Vector3<f64>>> {
        let chunks: Vec<Result<Vec<Vector3<f64>>>> = samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut ws = self.network.workspace();
                chunk
                    .iter()
                    .map(|s| self.predict_ws(&s.e, &s.s_c(), &mut ws))
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(samples.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }
}

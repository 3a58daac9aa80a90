//! Reference models: the electrode-normal linear model and a plain MLP.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Architecture, InputSpec, LossConfig, LossKind, NetworkConfig};
use crate::sensor::{ElectrodeLayout, NUM_ELECTRODES};

/// `f_a = S_a · Σ_i e_i n_{a,i}` for each axis `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    #[serde(rename = "S")]
    pub s: [f64; 3],
    pub layout: ElectrodeLayout,
}

/// Electrode-weighted normal sum `Σ_i e_i n_i`.
pub fn normal_features(e: &[f64], layout: &ElectrodeLayout) -> Vector3<f64> {
    e.iter()
        .enumerate()
        .fold(Vector3::zeros(), |acc, (i, &ei)| {
            acc + ei * layout.normal(i)
        })
}

impl LinearModel {
    pub fn predict(&self, e: &[f64]) -> Vector3<f64> {
        normal_features(e, &self.layout).component_mul(&Vector3::from(self.s))
    }

    /// Per-axis least squares through the origin.
    pub fn fit<'a, I>(samples: I, layout: &ElectrodeLayout) -> Result<LinearModel>
    where
        I: IntoIterator<Item = (&'a [f64], Vector3<f64>)>,
    {
        let mut sxy = [0.0; 3];
        let mut sxx = [0.0; 3];
        let mut n = 0usize;
        for (e, f) in samples {
            if e.len() != NUM_ELECTRODES {
                return Err(Error::schema(format!(
                    "expected {NUM_ELECTRODES} electrode values, got {}",
                    e.len()
                )));
            }
            let phi = normal_features(e, layout);
            for a in 0..3 {
                sxy[a] += phi[a] * f[a];
                sxx[a] += phi[a] * phi[a];
            }
            n += 1;
        }
        if n < 3 {
            return Err(Error::DegenerateFit {
                axis: 'x',
                reason: format!("need at least 3 samples, got {n}"),
            });
        }
        let mut s = [0.0; 3];
        for (a, axis) in ['x', 'y', 'z'].into_iter().enumerate() {
            if !(sxx[a] > 0.0) || !sxx[a].is_finite() {
                return Err(Error::DegenerateFit {
                    axis,
                    reason: "electrode-normal feature is identically zero".into(),
                });
            }
            s[a] = sxy[a] / sxx[a];
        }
        Ok(LinearModel {
            s,
            layout: layout.clone(),
        })
    }
}

pub fn linear_predict(model: &LinearModel, e: &[f64]) -> Vector3<f64> {
    model.predict(e)
}

pub fn linear_fit(
    samples: &[(Vec<f64>, Vector3<f64>)],
    layout: &ElectrodeLayout,
) -> Result<LinearModel> {
    LinearModel::fit(samples.iter().map(|(e, f)| (e.as_slice(), *f)), layout)
}

/// Generic MLP on `[e, s_c]`, trained with a plain squared error. Stands in
/// for an external baseline whose internals are not published.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpBaselineConfig {
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub electrode_scale: f64,
    pub position_scale: f64,
    pub seed: u64,
}

impl Default for MlpBaselineConfig {
    fn default() -> Self {
        MlpBaselineConfig {
            hidden_widths: vec![64, 64],
            activation: Activation::Relu,
            electrode_scale: 1.0,
            position_scale: 100.0,
            seed: 0,
        }
    }
}

impl MlpBaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() {
            return Err(Error::config(
                "MLP baseline needs at least one hidden layer",
            ));
        }
        Ok(())
    }

    pub fn network(&self) -> Result<NetworkConfig> {
        self.validate()?;
        Ok(NetworkConfig {
            architecture: Architecture::Dense,
            fc_widths: self.hidden_widths.clone(),
            layer_norm: false,
            activation: self.activation,
            seed: self.seed,
            ..NetworkConfig::default()
        })
    }

    pub fn input(&self) -> InputSpec {
        InputSpec::Flat {
            electrode_scale: self.electrode_scale,
            position_scale: self.position_scale,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            kind: LossKind::PlainL2,
            beta: 0.0,
            ..LossConfig::default()
        }
    }
}

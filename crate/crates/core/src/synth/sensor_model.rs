//! Synthetic electrode response to a contact force.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanics::ForceVector;
use crate::sensor::{ContactState, ElectrodeLayout, NUM_ELECTRODES, NUM_PAC, SAMPLE_LEN};

/// Smooth, force-linear kernel response with optional Gaussian noise.
///
/// `e_i = gain·k_i·(normal_sens·f_n + shear_sens·‖f_t‖ + dir_sens·f_t·(p_i − s_c)/decay)`
/// with `k_i = exp(−‖p_i − s_c‖²/decay²)` and `f_n = f·s_n` (positive when pressing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorForwardModel {
    pub gain: f64,
    /// Spatial decay length (m).
    pub decay: f64,
    pub normal_sens: f64,
    pub shear_sens: f64,
    /// Signed response to the shear direction relative to each electrode.
    pub dir_sens: f64,
    /// Standard deviation of the additive electrode noise.
    pub noise: f64,
    /// Static pressure per newton of contact force.
    pub pdc_gain: f64,
    pub seed: u64,
}

impl Default for SensorForwardModel {
    fn default() -> Self {
        SensorForwardModel {
            gain: 100.0,
            decay: 1e-2,
            normal_sens: 1.0,
            shear_sens: 0.5,
            dir_sens: 0.8,
            noise: 0.0,
            pdc_gain: 200.0,
            seed: 0,
        }
    }
}

impl SensorForwardModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(Error::config("sensor model decay must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("sensor model noise must be non-negative"));
        }
        let finite = [
            self.gain,
            self.normal_sens,
            self.shear_sens,
            self.dir_sens,
            self.pdc_gain,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("sensor model coefficients must be finite"));
        }
        Ok(())
    }

    /// Independent noise stream for one trial.
    pub fn noise_stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Noise-free electrode values.
    pub fn response(
        &self,
        layout: &ElectrodeLayout,
        contact: &ContactState,
        f: &Vector3<f64>,
    ) -> [f64; NUM_ELECTRODES] {
        let s_n = contact.s_n;
        let f_n = f.dot(&s_n);
        let f_t = f - f_n * s_n;
        let shear = f_t.norm();
        let d2 = self.decay * self.decay;
        let mut e = [0.0; NUM_ELECTRODES];
        for (i, ei) in e.iter_mut().enumerate() {
            let d = layout.position(i) - contact.s_c;
            let k = (-d.norm_squared() / d2).exp();
            *ei = self.gain
                * k
                * (self.normal_sens * f_n
                    + self.shear_sens * shear
                    + self.dir_sens * f_t.dot(&d) / self.decay);
        }
        e
    }

    pub fn static_pressure(&self, f: &Vector3<f64>) -> f64 {
        self.pdc_gain * f.norm()
    }
}

/// Electrode reading for a force applied at `contact`, plus seeded noise.
pub fn sensor_forward<R: Rng>(
    model: &SensorForwardModel,
    layout: &ElectrodeLayout,
    contact: &ContactState,
    f_3d: &ForceVector,
    rng: &mut R,
) -> [f64; NUM_ELECTRODES] {
    let mut e = model.response(layout, contact, &f_3d.to_3d());
    if model.noise > 0.0 {
        let normal = Normal::new(0.0, model.noise).expect("validated noise level");
        for v in &mut e {
            *v += normal.sample(rng);
        }
    }
    e
}

/// Resting (untared) 44-component reading the synthetic signal rides on.
pub fn resting_reference() -> [f64; SAMPLE_LEN] {
    let mut z = [0.0; SAMPLE_LEN];
    for (i, v) in z.iter_mut().take(NUM_ELECTRODES).enumerate() {
        *v = 3000.0 + 25.0 * i as f64;
    }
    z[NUM_ELECTRODES] = 1800.0;
    for v in &mut z[NUM_ELECTRODES + 1..NUM_ELECTRODES + 1 + NUM_PAC] {
        *v = 2000.0;
    }
    z[SAMPLE_LEN - 2] = 2600.0;
    z[SAMPLE_LEN - 1] = 2050.0;
    z
}

/// Raw reading: the resting reference plus electrode values and static
/// pressure. Vibration and temperature channels stay at rest.
pub fn raw_reading(e: &[f64; NUM_ELECTRODES], p_dc: f64) -> [f64; SAMPLE_LEN] {
    let mut z = resting_reference();
    for (zi, ei) in z.iter_mut().zip(e) {
        *zi += ei;
    }
    z[NUM_ELECTRODES] += p_dc;
    z
}

//! Synthetic trials for the three data sources.
//!
//! Planar-pushing trials run the pushing simulator and label each sensor
//! sample with the force inferred from the recorded motion, which is what a
//! real pipeline would see. The two FT-style sources press the sensor with
//! known forces and take the label directly.

pub mod push;
pub mod sensor_model;

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector2, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Candidate, ForceSample, SourceTag, TrialSamples};
use crate::error::{Error, Result};
use crate::mechanics::{
    infer_force_with_friction, ForceVector, Frame, FrameTransform, ParticleGrid, PushParams,
    SolverMethod, DEFAULT_PARTICLES,
};
use crate::sensor::{
    surface_point_and_normal, tare, ContactDetector, ContactState, ElectrodeLayout, SensorSample,
    SurfaceGeometry, DEFAULT_CONTACT_THRESHOLD, DEFAULT_CONTACT_WINDOW,
};

pub use push::{kinetic_energy, replay, simulate_push, PushEpisode, PushSegment, PushState};
pub use sensor_model::{raw_reading, resting_reference, sensor_forward, SensorForwardModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialCounts {
    pub rigid_ft: usize,
    pub ball_ft: usize,
    pub planar_pushing: usize,
}

impl TrialCounts {
    pub fn get(&self, tag: SourceTag) -> usize {
        match tag {
            SourceTag::RigidFt => self.rigid_ft,
            SourceTag::BallFt => self.ball_ft,
            SourceTag::PlanarPushing => self.planar_pushing,
        }
    }

    pub fn total(&self) -> usize {
        self.rigid_ft + self.ball_ft + self.planar_pushing
    }
}

fn default_half_extents() -> [f64; 2] {
    push::DEFAULT_HALF_EXTENTS
}
fn default_mu_range() -> [f64; 2] {
    [0.0, 0.3]
}
fn default_particles() -> usize {
    DEFAULT_PARTICLES
}
fn default_dt() -> f64 {
    push::DEFAULT_DT
}
fn default_segments() -> usize {
    2
}
fn default_segment_steps() -> usize {
    250
}
fn default_sample_every() -> usize {
    20
}
fn default_force_range() -> [f64; 2] {
    [0.1, 2.0]
}
fn default_push_angle() -> f64 {
    30.0
}
fn default_contact_span() -> f64 {
    0.6
}

/// Box and push schedule for planar-pushing trials. `m` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarConfig {
    pub m: f64,
    #[serde(default = "default_half_extents")]
    pub half_extents: [f64; 2],
    /// Support friction coefficient, drawn uniformly per trial.
    #[serde(default = "default_mu_range")]
    pub mu_range: [f64; 2],
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default = "default_segment_steps")]
    pub segment_steps: usize,
    /// Simulator steps per sensor sample.
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Push magnitude range (N).
    #[serde(default = "default_force_range")]
    pub force_range: [f64; 2],
    /// Largest push angle from the face normal (degrees).
    #[serde(default = "default_push_angle")]
    pub max_angle_deg: f64,
    /// Contact offset along the pushed face as a fraction of its half-width.
    #[serde(default = "default_contact_span")]
    pub contact_span: f64,
}

impl Default for PlanarConfig {
    fn default() -> Self {
        PlanarConfig {
            m: push::DEFAULT_MASS,
            half_extents: default_half_extents(),
            mu_range: default_mu_range(),
            particles: default_particles(),
            dt: default_dt(),
            segments: default_segments(),
            segment_steps: default_segment_steps(),
            sample_every: default_sample_every(),
            force_range: default_force_range(),
            max_angle_deg: default_push_angle(),
            contact_span: default_contact_span(),
        }
    }
}

fn check_range(name: &str, r: [f64; 2], min: f64) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] >= min && r[0] <= r[1]) {
        return Err(Error::config(format!(
            "{name} must be an ordered range with values >= {min}"
        )));
    }
    Ok(())
}

impl PlanarConfig {
    pub fn params(&self, mu_s: f64) -> PushParams {
        PushParams {
            n: self.particles,
            ..PushParams::for_box(self.m, self.half_extents, mu_s)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::config("m must be positive"));
        }
        if !self.half_extents.iter().all(|h| *h > 0.0 && h.is_finite()) {
            return Err(Error::config("half_extents must be positive"));
        }
        check_range("mu_range", self.mu_range, 0.0)?;
        check_range("force_range", self.force_range, 0.0)?;
        if self.segments == 0 || self.segment_steps == 0 || self.sample_every == 0 {
            return Err(Error::config(
                "segments, segment_steps and sample_every must be positive",
            ));
        }
        if !(0.0..90.0).contains(&self.max_angle_deg) {
            return Err(Error::config("max_angle_deg must be in [0, 90)"));
        }
        if !(0.0..=1.0).contains(&self.contact_span) {
            return Err(Error::config("contact_span must be in [0, 1]"));
        }
        self.params(self.mu_range[1]).validate()
    }
}

/// Press-and-release trials against a force/torque reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FtConfig {
    pub samples_per_trial: usize,
    /// Unloaded samples at each end of a trial.
    pub idle_samples: usize,
    /// Sample period (s).
    pub dt: f64,
    /// Peak force range (N), drawn log-uniformly.
    pub force_range: [f64; 2],
    /// Largest angle between force and outward normal (degrees).
    pub rigid_cone_deg: f64,
    pub ball_cone_deg: f64,
    /// Contact point wander within a trial (m).
    pub jitter: f64,
}

impl Default for FtConfig {
    fn default() -> Self {
        FtConfig {
            samples_per_trial: 25,
            idle_samples: 2,
            dt: 0.01,
            force_range: [0.1, 2.0],
            rigid_cone_deg: 45.0,
            ball_cone_deg: 60.0,
            jitter: 1.5e-3,
        }
    }
}

impl FtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_trial <= 2 * self.idle_samples {
            return Err(Error::config(
                "samples_per_trial must exceed twice idle_samples",
            ));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("ft dt must be positive"));
        }
        check_range("ft force_range", self.force_range, f64::MIN_POSITIVE)?;
        for (name, cone) in [
            ("rigid_cone_deg", self.rigid_cone_deg),
            ("ball_cone_deg", self.ball_cone_deg),
        ] {
            if !(0.0..90.0).contains(&cone) {
                return Err(Error::config(format!("{name} must be in [0, 90)")));
            }
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::config("jitter must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    pub threshold: f64,
    pub window: usize,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            threshold: DEFAULT_CONTACT_THRESHOLD,
            window: DEFAULT_CONTACT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct SynthConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trials: TrialCounts,
    pub planar: PlanarConfig,
    #[serde(default)]
    pub ft: FtConfig,
    #[serde(default)]
    pub sensor: SensorForwardModel,
    #[serde(default)]
    pub geometry: SurfaceGeometry,
    #[serde(default)]
    pub contact: ContactConfig,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials.planar_pushing > 0 {
            self.planar.validate()?;
        }
        self.ft.validate()?;
        self.sensor.validate()?;
        self.geometry.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SynthConfig = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("simulation config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One sensor reading with its contact state and force label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSample {
    /// Tared reading.
    pub sample: SensorSample,
    /// True geometric contact; `in_contact` is whether the sensor is loaded.
    pub contact: ContactState,
    /// Pressure-based contact decision.
    pub detected: bool,
    /// Force label in the sensor frame.
    pub f_3d: [f64; 3],
    #[serde(rename = "R_wb")]
    pub r_wb: [f64; 9],
    /// Simulator step the reading was taken at (planar pushing only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

/// A generated trial as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: String,
    pub source_tag: SourceTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode: Option<PushEpisode>,
    pub sensor_stream: Vec<StreamSample>,
}

impl Trial {
    /// Every reading as a dataset candidate, before the force-sample filter.
    pub fn samples(&self) -> TrialSamples {
        let candidates = self
            .sensor_stream
            .iter()
            .map(|s| Candidate {
                sample: ForceSample {
                    trial_id: self.trial_id.clone(),
                    source_tag: self.source_tag,
                    e: s.sample.e.to_vec(),
                    s_c: s.contact.s_c.into(),
                    s_n: s.contact.s_n.into(),
                    f_3d: s.f_3d,
                    r_wb: s.r_wb,
                    motion: s
                        .step
                        .and_then(|k| self.episode.as_ref().map(|ep| ep.records[k].clone())),
                },
                in_contact: s.detected,
            })
            .collect();
        TrialSamples {
            trial_id: self.trial_id.clone(),
            source_tag: self.source_tag,
            candidates,
        }
    }
}

pub fn trial_id(tag: SourceTag, index: usize) -> String {
    format!("{}-{index:04}", tag.name())
}

fn source_index(tag: SourceTag) -> u64 {
    SourceTag::ALL
        .iter()
        .position(|t| *t == tag)
        .expect("tag listed in ALL") as u64
}

/// Independent random stream for one trial.
pub fn trial_rng(seed: u64, tag: SourceTag, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((source_index(tag) << 32) | index as u64);
    rng
}

/// Generates every configured trial. Trials run in parallel and come back
/// in source then index order.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<Trial>> {
    cfg.validate()?;
    let layout = ElectrodeLayout::synthetic(&cfg.geometry);
    let jobs: Vec<(SourceTag, usize)> = SourceTag::ALL
        .iter()
        .flat_map(|&tag| (0..cfg.trials.get(tag)).map(move |i| (tag, i)))
        .collect();
    jobs.par_iter()
        .map(|&(tag, i)| generate_trial(cfg, &layout, tag, i))
        .collect()
}

pub fn generate_trial(
    cfg: &SynthConfig,
    layout: &ElectrodeLayout,
    tag: SourceTag,
    index: usize,
) -> Result<Trial> {
    let mut rng = trial_rng(cfg.seed, tag, index);
    let mut noise = cfg
        .sensor
        .noise_stream((source_index(tag) << 32) | index as u64);
    let mut gen = StreamBuilder {
        cfg,
        layout,
        detector: ContactDetector::new(cfg.contact.threshold, cfg.contact.window),
        stream: Vec::new(),
    };
    let episode = match tag {
        SourceTag::PlanarPushing => Some(planar_trial(&mut gen, &mut rng, &mut noise)?),
        SourceTag::RigidFt | SourceTag::BallFt => {
            ft_trial(&mut gen, tag, &mut rng, &mut noise)?;
            None
        }
    };
    Ok(Trial {
        trial_id: trial_id(tag, index),
        source_tag: tag,
        episode,
        sensor_stream: gen.stream,
    })
}

struct StreamBuilder<'a> {
    cfg: &'a SynthConfig,
    layout: &'a ElectrodeLayout,
    detector: ContactDetector,
    stream: Vec<StreamSample>,
}

impl StreamBuilder<'_> {
    /// Renders, tares and contact-tests one reading of `f_applied` at `contact`.
    #[allow(clippy::too_many_arguments)]
    fn push<R: Rng>(
        &mut self,
        t: f64,
        contact: ContactState,
        f_applied: Vector3<f64>,
        label: Vector3<f64>,
        r_wb: &Matrix3<f64>,
        step: Option<usize>,
        noise: &mut R,
    ) -> Result<()> {
        let model = &self.cfg.sensor;
        let e = if contact.in_contact {
            sensor_forward(
                model,
                self.layout,
                &contact,
                &ForceVector::spatial(f_applied, Frame::Sensor),
                noise,
            )
        } else {
            [0.0; crate::sensor::NUM_ELECTRODES]
        };
        let raw = raw_reading(&e, model.static_pressure(&f_applied));
        let sample = tare(&raw, &resting_reference(), t)?;
        let detected = self.detector.push(sample.p_dc).is_contact();
        let r_wb = FrameTransform::new(*r_wb, Frame::Sensor, Frame::World)?.to_row_major();
        self.stream.push(StreamSample {
            sample,
            contact,
            detected,
            f_3d: label.into(),
            r_wb,
            step,
        });
        Ok(())
    }
}

fn random_surface_point<R: Rng>(
    g: &SurfaceGeometry,
    rng: &mut R,
    cap_fraction: f64,
) -> Vector3<f64> {
    if rng.gen::<f64>() < cap_fraction {
        cap_point(g, rng)
    } else {
        let phi = rng.gen_range(-1.3..1.3);
        let z = rng.gen_range(0.0..=g.half_cylinder_length);
        g.body_point(phi, z)
    }
}

fn cap_point<R: Rng>(g: &SurfaceGeometry, rng: &mut R) -> Vector3<f64> {
    let az = rng.gen_range(-1.4..1.4);
    let el = rng.gen_range(0.1..1.4);
    g.cap_point(az, el)
}

/// Unit vector within `max_angle` of `axis`, uniform over the spherical cap.
fn direction_in_cone<R: Rng>(axis: &Vector3<f64>, max_angle: f64, rng: &mut R) -> Vector3<f64> {
    let cos_t = rng.gen_range(max_angle.cos()..=1.0);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let az = rng.gen_range(0.0..std::f64::consts::TAU);
    let helper = if axis.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = axis.cross(&helper).normalize();
    let v = axis.cross(&u);
    cos_t * axis + sin_t * (az.cos() * u + az.sin() * v)
}

fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let q = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q));
    *q.to_rotation_matrix().matrix()
}

fn ft_trial<R: Rng, N: Rng>(
    gen: &mut StreamBuilder,
    tag: SourceTag,
    rng: &mut R,
    noise: &mut N,
) -> Result<()> {
    let ft = &gen.cfg.ft;
    let g = gen.cfg.geometry;
    let (base, cone) = match tag {
        SourceTag::BallFt => (cap_point(&g, rng), ft.ball_cone_deg),
        _ => (random_surface_point(&g, rng, 0.3), ft.rigid_cone_deg),
    };
    let r_wb = match tag {
        SourceTag::BallFt => random_rotation(rng),
        _ => Matrix3::identity(),
    };
    let [lo, hi] = ft.force_range;
    let peak = (rng.gen_range(lo.ln()..=hi.ln())).exp();
    let n = ft.samples_per_trial;
    let loaded = n - 2 * ft.idle_samples;
    for j in 0..n {
        let t = j as f64 * ft.dt;
        let k = j as i64 - ft.idle_samples as i64;
        let jitter = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0)) * ft.jitter / 3f64.sqrt();
        let mut contact = surface_point_and_normal(&g, &(base + jitter))?;
        let f = if k >= 0 && (k as usize) < loaded {
            let profile = (std::f64::consts::PI * (k + 1) as f64 / (loaded + 1) as f64).sin();
            peak * profile * direction_in_cone(&contact.s_n, cone.to_radians(), rng)
        } else {
            contact.in_contact = false;
            Vector3::zeros()
        };
        gen.push(t, contact, f, f, &r_wb, None, noise)?;
    }
    Ok(())
}

/// Rotation taking the sensor frame into the box frame with the sensor's
/// contact normal along the box's +x (into the pushed face).
fn sensor_to_object<R: Rng>(s_n: &Vector3<f64>, rng: &mut R) -> Result<Rotation3<f64>> {
    let align =
        Rotation3::rotation_between(s_n, &Vector3::x()).ok_or_else(|| Error::Numerical {
            context: "sensor normal opposite to push direction".into(),
        })?;
    let roll =
        Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::x()), rng.gen_range(-0.5..0.5));
    Ok(roll * align)
}

fn planar_trial<R: Rng, N: Rng>(
    gen: &mut StreamBuilder,
    rng: &mut R,
    noise: &mut N,
) -> Result<PushEpisode> {
    let pc = &gen.cfg.planar;
    let mu = rng.gen_range(pc.mu_range[0]..=pc.mu_range[1]);
    let params = pc.params(mu);
    let [hx, hy] = pc.half_extents;
    let c = [-hx, rng.gen_range(-1.0..=1.0) * pc.contact_span * hy];
    let breakaway = (1.05 * mu * params.m * params.g)
        .max(0.8)
        .min(pc.force_range[1]);
    let max_angle = pc.max_angle_deg.to_radians();
    let schedule: Vec<PushSegment> = (0..pc.segments)
        .map(|s| {
            let mut mag = rng.gen_range(pc.force_range[0]..=pc.force_range[1]);
            if s == 0 {
                mag = mag.max(breakaway);
            }
            let a = rng.gen_range(-max_angle..=max_angle);
            PushSegment {
                steps: pc.segment_steps,
                force: [mag * a.cos(), mag * a.sin()],
                contact: c,
            }
        })
        .collect();
    let initial = PushState {
        pose: [
            0.0,
            0.0,
            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        ],
        ..PushState::default()
    };
    let episode = simulate_push(&params, pc.half_extents, initial, &schedule, pc.dt)?;

    let g = gen.cfg.geometry;
    let contact = surface_point_and_normal(&g, &random_surface_point(&g, rng, 0.2))?;
    let r_ob = sensor_to_object(&contact.s_n, rng)?;
    let grid = ParticleGrid::rectangle(pc.half_extents, &params)?;
    for k in (0..episode.records.len()).step_by(pc.sample_every) {
        let rec = &episode.records[k];
        let f_true = rec.f_true.expect("simulated records carry f_true");
        let applied = r_ob.inverse() * Vector3::new(f_true[0], f_true[1], 0.0);
        let est = infer_force_with_friction(
            &rec.motion().in_object_axes(),
            rec.contact(),
            &grid,
            &params,
            SolverMethod::ClosedForm,
        )?;
        let f_obj: Vector2<f64> = est.planar();
        let label = r_ob.inverse() * Vector3::new(f_obj.x, f_obj.y, 0.0);
        let r_wb = Rotation3::from_axis_angle(&Vector3::z_axis(), rec.pose[2]) * r_ob;
        gen.push(
            rec.t,
            contact,
            applied,
            label,
            r_wb.matrix(),
            Some(k),
            noise,
        )?;
    }
    Ok(episode)
}

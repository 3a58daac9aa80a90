//! Force samples, source tags and trial-level dataset splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanics::{EpisodeRecord, Frame, FrameTransform};
use crate::nn::loss::Target;
use crate::sensor::NUM_ELECTRODES;

/// Where a sample's ground truth came from; decides the loss case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    RigidFt,
    BallFt,
    PlanarPushing,
}

impl SourceTag {
    pub const ALL: [SourceTag; 3] = [
        SourceTag::RigidFt,
        SourceTag::BallFt,
        SourceTag::PlanarPushing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SourceTag::RigidFt => "rigid_ft",
            SourceTag::BallFt => "ball_ft",
            SourceTag::PlanarPushing => "planar_pushing",
        }
    }

    pub fn is_planar_pushing(self) -> bool {
        self == SourceTag::PlanarPushing
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "rigid_ft" => Ok(SourceTag::RigidFt),
            "ball_ft" => Ok(SourceTag::BallFt),
            "planar_pushing" => Ok(SourceTag::PlanarPushing),
            _ => Err(Error::config(format!("unknown source tag `{s}`"))),
        }
    }
}

/// Which sources a training run draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSet {
    Only(SourceTag),
    Mixed,
}

impl SourceSet {
    pub const COMBINATIONS: [SourceSet; 4] = [
        SourceSet::Only(SourceTag::RigidFt),
        SourceSet::Only(SourceTag::PlanarPushing),
        SourceSet::Only(SourceTag::BallFt),
        SourceSet::Mixed,
    ];

    pub fn contains(self, tag: SourceTag) -> bool {
        match self {
            SourceSet::Only(t) => t == tag,
            SourceSet::Mixed => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SourceSet::Only(SourceTag::RigidFt) => "rigid-ft",
            SourceSet::Only(SourceTag::BallFt) => "ball-ft",
            SourceSet::Only(SourceTag::PlanarPushing) => "planar-pushing",
            SourceSet::Mixed => "mixed",
        }
    }
}

impl fmt::Display for SourceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SourceSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "mixed" {
            return Ok(SourceSet::Mixed);
        }
        s.parse().map(SourceSet::Only)
    }
}

/// One line of a dataset file. Vectors are in the sensor frame; `R_wb`
/// is the row-major sensor-to-world rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSample {
    pub trial_id: String,
    pub source_tag: SourceTag,
    pub e: Vec<f64>,
    pub s_c: [f64; 3],
    pub s_n: [f64; 3],
    pub f_3d: [f64; 3],
    #[serde(rename = "R_wb")]
    pub r_wb: [f64; 9],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<EpisodeRecord>,
}

impl ForceSample {
    pub fn s_c(&self) -> Vector3<f64> {
        Vector3::from(self.s_c)
    }

    pub fn s_n(&self) -> Vector3<f64> {
        Vector3::from(self.s_n)
    }

    pub fn force(&self) -> Vector3<f64> {
        Vector3::from(self.f_3d)
    }

    pub fn r_wb(&self) -> Result<FrameTransform> {
        FrameTransform::from_row_major(&self.r_wb, Frame::Sensor, Frame::World)
    }

    pub fn validate(&self) -> Result<()> {
        if self.e.len() != NUM_ELECTRODES {
            return Err(Error::schema(format!(
                "trial {}: expected {NUM_ELECTRODES} electrode values, got {}",
                self.trial_id,
                self.e.len()
            )));
        }
        let finite = self
            .e
            .iter()
            .chain(&self.s_c)
            .chain(&self.s_n)
            .chain(&self.f_3d)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::schema(format!(
                "trial {}: non-finite values",
                self.trial_id
            )));
        }
        if (self.s_n().norm() - 1.0).abs() > 1e-6 {
            return Err(Error::schema(format!(
                "trial {}: s_n is not a unit vector",
                self.trial_id
            )));
        }
        self.r_wb()
            .map_err(|e| Error::schema(format!("trial {}: R_wb: {e}", self.trial_id)))?;
        Ok(())
    }

    pub fn target(&self) -> Result<Target> {
        Ok(Target {
            f_3d: self.force(),
            s_n: self.s_n(),
            r_wb: self.r_wb()?,
            source: self.source_tag,
        })
    }
}

/// A sample before the force-sample filter.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub sample: ForceSample,
    pub in_contact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSamples {
    pub trial_id: String,
    pub source_tag: SourceTag,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.8,
            val: 0.1,
        }
    }
}

/// Trial ids per split; serialized as the dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    /// Integrity error if any trial id appears in two splits.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for (name, ids) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            for id in ids {
                if let Some(prev) = owner.insert(id, name) {
                    return Err(Error::Integrity(format!(
                        "trial {id} appears in both {prev} and {name}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<ForceSample>,
    pub val: Vec<ForceSample>,
    pub test: Vec<ForceSample>,
    pub manifest: SplitManifest,
}

/// Whole-trial split, done separately per source so every split sees every
/// source. Only in-contact samples with nonzero force are kept.
pub fn make_dataset(trials: &[TrialSamples], split: SplitConfig, seed: u64) -> Result<Dataset> {
    if !(split.train > 0.0 && split.val > 0.0 && split.train + split.val < 1.0) {
        return Err(Error::config(
            "split fractions must be positive and leave room for a test split",
        ));
    }
    let mut by_source: BTreeMap<SourceTag, Vec<&TrialSamples>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for t in trials {
        if !seen.insert(t.trial_id.as_str()) {
            return Err(Error::Integrity(format!(
                "duplicate trial id {}",
                t.trial_id
            )));
        }
        if let Some(c) = t
            .candidates
            .iter()
            .find(|c| c.sample.trial_id != t.trial_id)
        {
            return Err(Error::Integrity(format!(
                "sample tagged {} inside trial {}",
                c.sample.trial_id, t.trial_id
            )));
        }
        by_source.entry(t.source_tag).or_default().push(t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = SplitManifest {
        seed,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let mut data = Dataset {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        manifest: manifest.clone(),
    };
    for (tag, mut group) in by_source {
        let n = group.len();
        if n < 3 {
            return Err(Error::config(format!(
                "source {tag} has {n} trials; need at least 3 to split"
            )));
        }
        group.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
        group.shuffle(&mut rng);
        let n_val = ((split.val * n as f64).round() as usize).max(1);
        let n_train = ((split.train * n as f64).round() as usize).min(n - n_val - 1);
        if n_train == 0 {
            return Err(Error::config(format!(
                "source {tag}: too few trials for a training split"
            )));
        }
        for (i, t) in group.into_iter().enumerate() {
            let (ids, samples) = if i < n_train {
                (&mut manifest.train, &mut data.train)
            } else if i < n_train + n_val {
                (&mut manifest.val, &mut data.val)
            } else {
                (&mut manifest.test, &mut data.test)
            };
            ids.push(t.trial_id.clone());
            samples.extend(
                t.candidates
                    .iter()
                    .filter(|c| c.in_contact && c.sample.force().norm() > 0.0)
                    .map(|c| c.sample.clone()),
            );
        }
    }
    for (name, split) in [
        ("train", &data.train),
        ("val", &data.val),
        ("test", &data.test),
    ] {
        if split.is_empty() {
            return Err(Error::config(format!("{name} split has no force samples")));
        }
    }
    data.manifest = manifest;
    Ok(data)
}

pub fn write_samples<W: Write>(mut out: W, samples: &[ForceSample]) -> Result<()> {
    for s in samples {
        let line = serde_json::to_string(s).map_err(|e| Error::json("force sample", e))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<samples>", e))?;
    }
    Ok(())
}

pub fn read_samples<R: BufRead>(input: R) -> Result<Vec<ForceSample>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<samples>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: ForceSample = serde_json::from_str(&line)
            .map_err(|e| Error::schema(format!("sample line {}: {e}", i + 1)))?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

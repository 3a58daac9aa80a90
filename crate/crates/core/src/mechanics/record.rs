use std::io::{BufRead, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{PlanarMotion, Pose2};
use crate::error::{Error, Result};

/// How the simulator advanced a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRegime {
    /// Moving under kinetic friction; stored accelerations follow the friction model.
    Sliding,
    /// Started the step at rest.
    AtRest,
    /// Friction brought the object to rest within the step.
    Stopping,
}

/// One timestep of a pushing episode, as stored in JSON lines.
///
/// Pose, velocities and accelerations are world-frame; `contact_point` and
/// `f_true` are in the object frame relative to the centre of mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub t: f64,
    pub pose: [f64; 3],
    pub v: [f64; 2],
    pub omega: f64,
    pub v_dot: [f64; 2],
    pub omega_dot: f64,
    pub contact_point: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_true: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<StepRegime>,
}

impl EpisodeRecord {
    pub fn motion(&self) -> PlanarMotion {
        PlanarMotion {
            pose: Pose2::new(self.pose[0], self.pose[1], self.pose[2]),
            v: Vector2::from(self.v),
            omega: self.omega,
            v_dot: Vector2::from(self.v_dot),
            omega_dot: self.omega_dot,
        }
    }

    pub fn contact(&self) -> Vector2<f64> {
        Vector2::from(self.contact_point)
    }

    pub fn is_sliding(&self) -> bool {
        self.regime.is_none_or(|r| r == StepRegime::Sliding)
    }
}

pub fn write_episode<W: Write>(mut out: W, records: &[EpisodeRecord]) -> Result<()> {
    for rec in records {
        let line = serde_json::to_string(rec).map_err(|e| Error::json("episode record", e))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<episode>", e))?;
    }
    Ok(())
}

pub fn read_episode<R: BufRead>(input: R) -> Result<Vec<EpisodeRecord>> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<episode>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord = serde_json::from_str(&line)
            .map_err(|e| Error::schema(format!("episode line {}: {e}", i + 1)))?;
        let finite = rec.motion().is_finite();
        if !finite {
            return Err(Error::schema(format!(
                "episode line {}: non-finite motion",
                i + 1
            )));
        }
        records.push(rec);
    }
    Ok(records)
}

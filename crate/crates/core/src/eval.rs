//! Model evaluation reports and the ablation harness.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::baselines::{LinearModel, MlpBaselineConfig};
use crate::dataset::{Dataset, ForceSample, SourceSet, SourceTag};
use crate::error::{Error, Result};
use crate::metrics::{sample_errors, summarize_errors, MetricSummary, SampleErrors};
use crate::nn::{
    train, Architecture, Checkpoint, CheckpointMeta, InputEncoder, InputSpec, LossConfig, Model,
    NetworkConfig, TrainingConfig, TrainingReport, CHECKPOINT_FORMAT,
};
use crate::sensor::{ElectrodeLayout, SurfaceGeometry, NUM_ELECTRODES};
use crate::voxel::{GridSpec, DEFAULT_DIMS};

/// Anything that maps force samples to predicted sensor-frame forces.
pub trait ForceModel: Sync {
    fn predict(&self, samples: &[ForceSample]) -> Result<Vec<Vector3<f64>>>;
}

impl ForceModel for Model {
    fn predict(&self, samples: &[ForceSample]) -> Result<Vec<Vector3<f64>>> {
        self.predict_batch(samples)
    }
}

impl ForceModel for LinearModel {
    fn predict(&self, samples: &[ForceSample]) -> Result<Vec<Vector3<f64>>> {
        if self.layout.positions.len() != NUM_ELECTRODES {
            return Err(Error::schema(
                "linear model layout does not have 19 electrodes",
            ));
        }
        samples
            .iter()
            .map(|s| {
                if s.e.len() != NUM_ELECTRODES {
                    return Err(Error::schema(format!(
                        "trial {}: expected {NUM_ELECTRODES} electrode values, got {}",
                        s.trial_id,
                        s.e.len()
                    )));
                }
                Ok(LinearModel::predict(self, &s.e))
            })
            .collect()
    }
}

/// Returns the label itself; used to check the reporting pipeline.
pub struct PerfectPredictor;

impl ForceModel for PerfectPredictor {
    fn predict(&self, samples: &[ForceSample]) -> Result<Vec<Vector3<f64>>> {
        Ok(samples.iter().map(ForceSample::force).collect())
    }
}

/// One row of the per-sample report. Undefined metrics are empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub trial_id: String,
    pub source_tag: SourceTag,
    pub direction_pct: Option<f64>,
    pub magnitude_pct: Option<f64>,
    pub magnitude_l1: f64,
}

impl EvalRow {
    pub fn errors(&self) -> SampleErrors {
        SampleErrors {
            direction_pct: self.direction_pct,
            magnitude_pct: self.magnitude_pct,
            magnitude_l1: self.magnitude_l1,
        }
    }
}

/// Column documentation shared with the CLI help.
pub const EVAL_CSV_COLUMNS: &str =
    "model, trial_id, source_tag, direction_pct (angle as % of pi, empty if a vector is zero), \
magnitude_pct (symmetric absolute % error, empty if both are zero), magnitude_l1 (N)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    /// Ablation flags; absent for baselines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxel: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<bool>,
    /// Sources the model was trained on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<String>,
    pub overall: MetricSummary,
    pub per_source: BTreeMap<String, MetricSummary>,
}

/// Overall and per-source summaries of a set of rows.
pub fn summarize_rows(
    rows: &[&EvalRow],
) -> Result<(MetricSummary, BTreeMap<String, MetricSummary>)> {
    let all: Vec<SampleErrors> = rows.iter().map(|r| r.errors()).collect();
    let overall = summarize_errors(&all)?;
    let mut per_source = BTreeMap::new();
    for tag in SourceTag::ALL {
        let errs: Vec<SampleErrors> = rows
            .iter()
            .filter(|r| r.source_tag == tag)
            .map(|r| r.errors())
            .collect();
        if !errs.is_empty() {
            per_source.insert(tag.name().to_string(), summarize_errors(&errs)?);
        }
    }
    Ok((overall, per_source))
}

pub fn evaluate(
    name: &str,
    model: &dyn ForceModel,
    samples: &[ForceSample],
) -> Result<(Vec<EvalRow>, ModelReport)> {
    if samples.is_empty() {
        return Err(Error::DegenerateInput("evaluation set is empty".into()));
    }
    let preds = model.predict(samples)?;
    if preds.len() != samples.len() {
        return Err(Error::schema(format!(
            "model returned {} predictions for {} samples",
            preds.len(),
            samples.len()
        )));
    }
    let rows: Vec<EvalRow> = samples
        .iter()
        .zip(&preds)
        .map(|(s, p)| {
            let err = sample_errors(&s.force(), p);
            EvalRow {
                model: name.to_string(),
                trial_id: s.trial_id.clone(),
                source_tag: s.source_tag,
                direction_pct: err.direction_pct,
                magnitude_pct: err.magnitude_pct,
                magnitude_l1: err.magnitude_l1,
            }
        })
        .collect();
    let refs: Vec<&EvalRow> = rows.iter().collect();
    let (overall, per_source) = summarize_rows(&refs)?;
    let report = ModelReport {
        model: name.to_string(),
        voxel: None,
        alpha: None,
        sources: None,
        overall,
        per_source,
    };
    Ok((rows, report))
}

pub fn write_rows_csv<W: Write>(out: W, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::schema(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::schema(format!("csv: {e}")))?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(input: R) -> Result<Vec<EvalRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::schema(format!("csv row {}: {e}", i + 1))))
        .collect()
}

/// Network, training and input settings shared by every trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub loss: LossConfig,
    pub grid_dims: [usize; 3],
    /// Multiplier on electrode values before they enter a network.
    pub electrode_scale: f64,
    /// Multiplier on the contact point for the flat (no-voxel) input.
    pub position_scale: f64,
    pub mlp: MlpBaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            network: NetworkConfig::default(),
            training: TrainingConfig::default(),
            loss: LossConfig::default(),
            grid_dims: DEFAULT_DIMS,
            electrode_scale: 0.01,
            position_scale: 100.0,
            mlp: MlpBaselineConfig {
                electrode_scale: 0.01,
                ..MlpBaselineConfig::default()
            },
        }
    }
}

/// One trained model of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recipe {
    pub voxel: bool,
    pub alpha: bool,
    pub sources: SourceSet,
}

impl Recipe {
    pub fn label(&self) -> String {
        format!(
            "{}_{}/{}",
            if self.voxel { "voxel" } else { "flat" },
            if self.alpha { "alpha" } else { "noalpha" },
            self.sources.name()
        )
    }
}

/// The voxel × α matrix on mixed data followed by full models on each
/// single source. The mixed full model appears once.
pub fn standard_recipes() -> Vec<Recipe> {
    let mut out = Vec::new();
    for voxel in [true, false] {
        for alpha in [true, false] {
            out.push(Recipe {
                voxel,
                alpha,
                sources: SourceSet::Mixed,
            });
        }
    }
    for sources in SourceSet::COMBINATIONS {
        let r = Recipe {
            voxel: true,
            alpha: true,
            sources,
        };
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

pub fn filter_sources(samples: &[ForceSample], sources: SourceSet) -> Vec<ForceSample> {
    samples
        .iter()
        .filter(|s| sources.contains(s.source_tag))
        .cloned()
        .collect()
}

fn input_spec(
    cfg: &ExperimentConfig,
    voxel: bool,
    geometry: &SurfaceGeometry,
    layout: &ElectrodeLayout,
) -> Result<InputSpec> {
    Ok(if voxel {
        InputSpec::Voxel {
            grid: GridSpec::for_geometry(geometry, cfg.grid_dims)?,
            layout: layout.clone(),
            electrode_scale: cfg.electrode_scale,
        }
    } else {
        InputSpec::Flat {
            electrode_scale: cfg.electrode_scale,
            position_scale: cfg.position_scale,
        }
    })
}

/// Trains one network from scratch and packages it as a checkpoint.
#[allow(clippy::too_many_arguments)]
/// A checkpoint together with its per-epoch training history.
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub report: TrainingReport,
}

pub fn train_checkpoint(
    label: &str,
    sources: SourceSet,
    network: &NetworkConfig,
    input: InputSpec,
    loss: &LossConfig,
    training: &TrainingConfig,
    dataset: &Dataset,
) -> Result<Trained> {
    let train_set = filter_sources(&dataset.train, sources);
    let val_set = filter_sources(&dataset.val, sources);
    if train_set.is_empty() {
        return Err(Error::config(format!(
            "no training samples for sources `{}`",
            sources.name()
        )));
    }
    let encoder = InputEncoder::new(input.clone())?;
    let net = network.build(encoder.shape())?;
    let init = net.init_params(network.seed);
    let outcome = train(&net, &encoder, init, &train_set, &val_set, training, loss)?;
    let checkpoint = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        network: network.clone(),
        input,
        loss: loss.clone(),
        training: training.clone(),
        metadata: CheckpointMeta {
            label: label.to_string(),
            sources: sources.name().to_string(),
            best_epoch: outcome.report.best_epoch,
            best_val_loss: outcome.report.best_val_loss,
            epochs_run: outcome.report.epochs.len(),
            train_samples: train_set.len(),
        },
        params: outcome.params,
    };
    Ok(Trained {
        checkpoint,
        report: outcome.report,
    })
}

pub fn train_recipe(
    recipe: &Recipe,
    cfg: &ExperimentConfig,
    geometry: &SurfaceGeometry,
    layout: &ElectrodeLayout,
    dataset: &Dataset,
) -> Result<Trained> {
    let network = NetworkConfig {
        architecture: if recipe.voxel {
            Architecture::Voxel
        } else {
            Architecture::Dense
        },
        ..cfg.network.clone()
    };
    let loss = LossConfig {
        beta: if recipe.alpha { cfg.loss.beta } else { 0.0 },
        ..cfg.loss.clone()
    };
    let input = input_spec(cfg, recipe.voxel, geometry, layout)?;
    train_checkpoint(
        &recipe.label(),
        recipe.sources,
        &network,
        input,
        &loss,
        &cfg.training,
        dataset,
    )
}

pub fn train_mlp_baseline(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Trained> {
    let mlp = &cfg.mlp;
    let training = TrainingConfig {
        seed: cfg.training.seed,
        ..cfg.training.clone()
    };
    train_checkpoint(
        MLP_LABEL,
        SourceSet::Mixed,
        &mlp.network()?,
        mlp.input(),
        &mlp.loss(),
        &training,
        dataset,
    )
}

pub fn fit_linear_baseline(dataset: &Dataset, layout: &ElectrodeLayout) -> Result<LinearModel> {
    LinearModel::fit(
        dataset.train.iter().map(|s| (s.e.as_slice(), s.force())),
        layout,
    )
}

pub const LINEAR_LABEL: &str = "linear-baseline";
pub const MLP_LABEL: &str = "mlp-baseline";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub test_samples: usize,
    pub models: Vec<ModelReport>,
}

pub struct AblationOutput {
    pub rows: Vec<EvalRow>,
    pub summary: AblationSummary,
    /// Trained networks in recipe order, then the MLP baseline.
    pub checkpoints: Vec<Checkpoint>,
    pub linear: LinearModel,
}

/// Trains every recipe plus the baselines and evaluates all of them on the
/// full test split.
pub fn run_ablation(
    cfg: &ExperimentConfig,
    recipes: &[Recipe],
    geometry: &SurfaceGeometry,
    layout: &ElectrodeLayout,
    dataset: &Dataset,
) -> Result<AblationOutput> {
    let mut rows = Vec::new();
    let mut models = Vec::new();
    let mut checkpoints = Vec::new();
    for recipe in recipes {
        let ckpt = train_recipe(recipe, cfg, geometry, layout, dataset)?.checkpoint;
        let (r, mut report) = evaluate(&recipe.label(), &ckpt.to_model()?, &dataset.test)?;
        report.voxel = Some(recipe.voxel);
        report.alpha = Some(recipe.alpha);
        report.sources = Some(recipe.sources.name().to_string());
        rows.extend(r);
        models.push(report);
        checkpoints.push(ckpt);
    }
    let mlp = train_mlp_baseline(cfg, dataset)?.checkpoint;
    let (r, mut report) = evaluate(MLP_LABEL, &mlp.to_model()?, &dataset.test)?;
    report.sources = Some(SourceSet::Mixed.name().to_string());
    rows.extend(r);
    models.push(report);
    checkpoints.push(mlp);

    let linear = fit_linear_baseline(dataset, layout)?;
    let (r, mut report) = evaluate(LINEAR_LABEL, &linear, &dataset.test)?;
    report.sources = Some(SourceSet::Mixed.name().to_string());
    rows.extend(r);
    models.push(report);

    Ok(AblationOutput {
        rows,
        summary: AblationSummary {
            test_samples: dataset.test.len(),
            models,
        },
        checkpoints,
        linear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TrialSamples;
    use crate::dataset::{make_dataset, SplitConfig};
    use crate::metrics::summarize;
    use crate::synth::{generate, SynthConfig, Trial, TrialCounts};

    fn tiny_dataset() -> Dataset {
        let cfg = SynthConfig {
            seed: 5,
            trials: TrialCounts {
                rigid_ft: 4,
                ball_ft: 4,
                planar_pushing: 4,
            },
            ..SynthConfig::default()
        };
        let trials: Vec<TrialSamples> =
            generate(&cfg).unwrap().iter().map(Trial::samples).collect();
        make_dataset(&trials, SplitConfig::default(), 1).unwrap()
    }

    #[test]
    fn perfect_predictor_scores_zero() {
        let ds = tiny_dataset();
        let (rows, report) = evaluate("oracle", &PerfectPredictor, &ds.test).unwrap();
        assert_eq!(rows.len(), ds.test.len());
        assert_eq!(report.overall.direction_pct.unwrap().median, 0.0);
        assert_eq!(report.overall.magnitude_pct.unwrap().median, 0.0);
        assert_eq!(report.overall.magnitude_l1.median, 0.0);
        assert_eq!(report.per_source.len(), 3);
    }

    #[test]
    fn linear_model_on_its_own_map_is_near_perfect() {
        let ds = tiny_dataset();
        let layout = ElectrodeLayout::synthetic(&SurfaceGeometry::default());
        let truth = LinearModel {
            s: [0.004, 0.006, -0.005],
            layout: layout.clone(),
        };
        let relabel = |set: &[ForceSample]| -> Vec<ForceSample> {
            set.iter()
                .map(|s| ForceSample {
                    f_3d: truth.predict(&s.e).into(),
                    ..s.clone()
                })
                .collect()
        };
        let ds = Dataset {
            train: relabel(&ds.train),
            val: relabel(&ds.val),
            test: relabel(&ds.test),
            manifest: ds.manifest,
        };
        let fit = fit_linear_baseline(&ds, &layout).unwrap();
        let (_, report) = evaluate(LINEAR_LABEL, &fit, &ds.test).unwrap();
        assert!(report.overall.direction_pct.unwrap().median < 1.0);
    }

    #[test]
    fn csv_round_trip_and_recomputation() {
        let ds = tiny_dataset();
        let layout = ElectrodeLayout::synthetic(&SurfaceGeometry::default());
        let fit = fit_linear_baseline(&ds, &layout).unwrap();
        let (rows, report) = evaluate(LINEAR_LABEL, &fit, &ds.test).unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, &rows).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header
            .starts_with("model,trial_id,source_tag,direction_pct,magnitude_pct,magnitude_l1\n"));
        let back = read_rows_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        let l1: Vec<f64> = back.iter().map(|r| r.magnitude_l1).collect();
        assert_eq!(summarize(&l1).unwrap(), report.overall.magnitude_l1);
    }

    #[test]
    fn undefined_metrics_are_empty_cells() {
        let row = EvalRow {
            model: "m".into(),
            trial_id: "t".into(),
            source_tag: SourceTag::RigidFt,
            direction_pct: None,
            magnitude_pct: Some(100.0),
            magnitude_l1: 1.0,
        };
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.ends_with("m,t,rigid_ft,,100.0,1.0\n"), "{text}");
        assert_eq!(read_rows_csv(buf.as_slice()).unwrap(), vec![row]);
    }

    #[test]
    fn wrong_electrode_count_is_a_schema_error() {
        let ds = tiny_dataset();
        let layout = ElectrodeLayout::synthetic(&SurfaceGeometry::default());
        let fit = fit_linear_baseline(&ds, &layout).unwrap();
        let mut bad = ds.test[..2].to_vec();
        bad[1].e.pop();
        assert!(matches!(evaluate("x", &fit, &bad), Err(Error::Schema(_))));
    }

    #[test]
    fn recipes_cover_matrix_and_sources() {
        let r = standard_recipes();
        assert_eq!(r.len(), 7);
        let labels: Vec<String> = r.iter().map(Recipe::label).collect();
        for l in [
            "voxel_alpha/mixed",
            "voxel_noalpha/mixed",
            "flat_alpha/mixed",
            "flat_noalpha/mixed",
        ] {
            assert!(labels.iter().any(|x| x == l), "{l}");
        }
        for s in SourceSet::COMBINATIONS {
            assert!(r.iter().any(|x| x.voxel && x.alpha && x.sources == s));
        }
    }

    #[test]
    fn source_filter_restricts_training_data() {
        let ds = tiny_dataset();
        let only = filter_sources(&ds.train, SourceSet::Only(SourceTag::BallFt));
        assert!(!only.is_empty());
        assert!(only.iter().all(|s| s.source_tag == SourceTag::BallFt));
        assert_eq!(
            filter_sources(&ds.train, SourceSet::Mixed).len(),
            ds.train.len()
        );
    }
}

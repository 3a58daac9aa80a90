//! Acceptance checks. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tactile_force::cli::load_dataset;
use tactile_force::dataset::{make_dataset, ForceSample, SourceTag, SplitConfig, TrialSamples};
use tactile_force::eval::{
    evaluate, fit_linear_baseline, read_rows_csv, AblationSummary, EvalRow, ExperimentConfig,
};
use tactile_force::mechanics::{
    friction_wrench, infer_force_with_friction, FrictionRegime, ParticleGrid, PlanarMotion,
    PushParams, SolverMethod,
};
use tactile_force::metrics::{
    direction_error_pct, magnitude_error_pct, ErrorSummary, MetricSummary,
};
use tactile_force::nn::{
    alpha_weight, batch_gradient, cosine_distance, evaluate_loss, loss_scaled_3d, train,
    Activation, Architecture, DecayUnit, InputEncoder, InputSpec, LossConfig, Model, NetworkConfig,
    PreparedSet,
};
use tactile_force::sensor::{ElectrodeLayout, SurfaceGeometry, NUM_ELECTRODES};
use tactile_force::synth::{
    generate, simulate_push, PushSegment, PushState, SynthConfig, Trial, TrialCounts,
};
use tactile_force::voxel::{Bounds, GridSpec};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

fn synth_trials(seed: u64, per_source: usize) -> Vec<TrialSamples> {
    let cfg = SynthConfig {
        seed,
        trials: TrialCounts {
            rigid_ft: per_source,
            ball_ft: per_source,
            planar_pushing: per_source,
        },
        ..SynthConfig::default()
    };
    generate(&cfg).unwrap().iter().map(Trial::samples).collect()
}

fn inference_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut episodes, mut checked, mut worst) = (0, 0usize, 0.0f64);
    while episodes < 120 {
        let half = [rng.gen_range(0.04..0.12), rng.gen_range(0.03..0.09)];
        let p = PushParams::for_box(rng.gen_range(0.2..0.8), half, rng.gen_range(0.0..0.3));
        let y = rng.gen_range(-0.8..0.8) * half[1];
        let schedule: Vec<PushSegment> = (0..3)
            .map(|_| {
                let mag = rng.gen_range(0.1..2.0);
                let ang: f64 = rng.gen_range(-0.5..0.5);
                PushSegment {
                    steps: 200,
                    force: [mag * ang.cos(), mag * ang.sin()],
                    contact: [-half[0], y],
                }
            })
            .collect();
        let ep = simulate_push(&p, half, PushState::default(), &schedule, 1e-3)
            .map_err(|e| e.to_string())?;
        let grid = ParticleGrid::rectangle(half, &p).unwrap();
        for r in &ep.records {
            let est = infer_force_with_friction(
                &r.motion().in_object_axes(),
                r.contact(),
                &grid,
                &p,
                SolverMethod::ClosedForm,
            )
            .map_err(|e| e.to_string())?;
            if est.regime == FrictionRegime::Sliding {
                let err = (est.planar() - Vector2::from(r.f_true.unwrap())).norm();
                worst = worst.max(err);
                checked += 1;
            }
        }
        episodes += 1;
    }
    check(checked > 10_000, format!("only {checked} non-static steps"))?;
    check(worst < 1e-3, format!("max error {worst:e} N"))?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "{episodes} episodes, {checked} non-static steps, max error {worst:.2e} N, {:.1} s",
        start.elapsed().as_secs_f64()
    ))
}

fn solver_agreement() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut iter_worst, mut grid_worst) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let half = [0.1, 0.075];
        let m = rng.gen_range(0.2..2.0);
        let p = PushParams {
            k: rng.gen_range(1.0..20.0),
            ..PushParams::for_box(m, half, rng.gen_range(0.0..0.3))
        };
        let motion = PlanarMotion::new(
            Vector2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
            rng.gen_range(-3.0..3.0),
            Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
            rng.gen_range(-20.0..20.0),
        );
        let c = Vector2::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.075..0.075));
        let grid = ParticleGrid::rectangle(half, &p).unwrap();
        let solve =
            |method| infer_force_with_friction(&motion, c, &grid, &p, method).map(|e| e.planar());
        let closed = solve(SolverMethod::ClosedForm).map_err(|e| e.to_string())?;
        let iterative = solve(SolverMethod::Iterative).map_err(|e| e.to_string())?;
        let oracle = solve(SolverMethod::GridOracle).map_err(|e| e.to_string())?;
        iter_worst = iter_worst.max((closed - iterative).norm());
        grid_worst = grid_worst.max((closed - oracle).norm());
    }
    check(
        iter_worst < 1e-6,
        format!("closed vs iterative {iter_worst:e} N"),
    )?;
    check(
        grid_worst < 1e-3,
        format!("closed vs grid {grid_worst:e} N"),
    )?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "1000 instances, closed/iterative {iter_worst:.1e} N, closed/grid {grid_worst:.1e} N, {:.1} s",
        start.elapsed().as_secs_f64()
    ))
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    // 19 electrodes cannot occupy distinct cells of the real sensor at this
    // resolution, so the reduced check uses a 4 mm cube with one electrode in
    // every third cell.
    let bounds = Bounds {
        min: [0.0; 3],
        max: [4e-3; 3],
    };
    let grid = GridSpec::new([4, 4, 4], bounds).map_err(|e| e.to_string())?;
    let centre = |k: usize| {
        [
            (k / 16) as f64 + 0.5,
            ((k / 4) % 4) as f64 + 0.5,
            (k % 4) as f64 + 0.5,
        ]
        .map(|c| c * 1e-3)
    };
    let positions: Vec<[f64; 3]> = (0..NUM_ELECTRODES).map(|i| centre(3 * i)).collect();
    let layout = ElectrodeLayout::new(positions, vec![[1.0, 0.0, 0.0]; NUM_ELECTRODES])
        .map_err(|e| e.to_string())?;
    let spec = InputSpec::Voxel {
        grid,
        layout,
        electrode_scale: 0.01,
    };
    let cfg = NetworkConfig {
        architecture: Architecture::Voxel,
        conv3d_channels: vec![2, 2],
        conv2d_channels: 2,
        fc_widths: vec![4],
        // At this size the second conv leaves two values per sample, which a
        // layer norm maps to ±1 whatever the weights; tanh keeps the whole
        // stack smooth for finite differences.
        layer_norm: false,
        activation: Activation::Tanh,
        ..NetworkConfig::default()
    };
    let encoder = InputEncoder::new(spec).map_err(|e| e.to_string())?;
    let net = cfg.build(encoder.shape()).map_err(|e| e.to_string())?;
    let params = net.init_params(3);

    // Two samples per source so every loss branch is exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let unit = |rng: &mut ChaCha8Rng| {
        Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize()
    };
    let mut samples = Vec::new();
    for (k, tag) in SourceTag::ALL.iter().cycle().take(6).enumerate() {
        let s_n = unit(&mut rng);
        let f = 0.3 * s_n + 0.2 * unit(&mut rng);
        samples.push(ForceSample {
            trial_id: format!("fd-{k}"),
            source_tag: *tag,
            e: (0..NUM_ELECTRODES)
                .map(|_| rng.gen_range(-100.0..100.0))
                .collect(),
            s_c: centre(rng.gen_range(0..64)),
            s_n: s_n.into(),
            f_3d: f.into(),
            r_wb: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            motion: None,
        });
    }
    let loss = LossConfig::default();
    let set = PreparedSet::new(&samples).map_err(|e| e.to_string())?;
    let idx: Vec<usize> = (0..samples.len()).collect();
    let (_, grad) =
        batch_gradient(&net, &encoder, &params, &set, &idx, &loss).map_err(|e| e.to_string())?;
    let objective = |p: &[f64]| evaluate_loss(&net, &encoder, p, &set, &loss).unwrap().mean;

    let h = 1e-5;
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        p[i] = params[i] + h;
        let up = objective(&p);
        p[i] = params[i] - h;
        let down = objective(&p);
        p[i] = params[i];
        let numeric = (up - down) / (2.0 * h);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        check(
            rel < 1e-4,
            format!("param {i}: analytic {} numeric {numeric}", grad[i]),
        )?;
    }
    within(start.elapsed(), 120.0)?;
    Ok(format!(
        "{} parameters, {} samples, max relative error {worst:.1e}, {:.1} s",
        params.len(),
        samples.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn learnability() -> Outcome {
    let start = Instant::now();
    let ds = make_dataset(&synth_trials(1, 500), SplitConfig::default(), 2).unwrap();
    check(
        ds.train.len() >= 5000,
        format!("only {} training samples", ds.train.len()),
    )?;
    let geometry = SurfaceGeometry::default();
    let layout = ElectrodeLayout::synthetic(&geometry);
    let mut ex = ExperimentConfig::default();
    ex.training.max_epochs = 80;
    ex.training.batch_size = 128;
    ex.training.base_lr = 3e-4;
    ex.training.schedule.decay = 0.96;
    ex.training.schedule.decay_unit = DecayUnit::Epoch;
    let spec = InputSpec::Voxel {
        grid: GridSpec::for_geometry(&geometry, ex.grid_dims).unwrap(),
        layout: layout.clone(),
        electrode_scale: ex.electrode_scale,
    };
    let encoder = InputEncoder::new(spec.clone()).map_err(|e| e.to_string())?;
    let net = ex
        .network
        .build(encoder.shape())
        .map_err(|e| e.to_string())?;
    let out = train(
        &net,
        &encoder,
        net.init_params(ex.network.seed),
        &ds.train,
        &ds.val,
        &ex.training,
        &ex.loss,
    )
    .map_err(|e| e.to_string())?;
    let model = Model::new(&ex.network, spec, out.params).map_err(|e| e.to_string())?;
    let medians = |r: &MetricSummary| {
        (
            r.direction_pct.unwrap().median,
            r.magnitude_pct.unwrap().median,
        )
    };
    let (_, report) = evaluate("voxel", &model, &ds.test).map_err(|e| e.to_string())?;
    let (dir, mag) = medians(&report.overall);
    let linear = fit_linear_baseline(&ds, &layout).map_err(|e| e.to_string())?;
    let (_, lin_report) = evaluate("linear", &linear, &ds.test).map_err(|e| e.to_string())?;
    let (lin_dir, lin_mag) = medians(&lin_report.overall);
    let summary = format!(
        "{} train / {} test samples, network direction {dir:.2} magnitude {mag:.2}, linear direction {lin_dir:.2} \
         magnitude {lin_mag:.2}, {:.0} s",
        ds.train.len(),
        ds.test.len(),
        start.elapsed().as_secs_f64()
    );
    check(dir < 5.0 && mag < 10.0, summary.clone())?;
    check(lin_dir > dir || lin_mag > mag, summary.clone())?;
    within(start.elapsed(), 900.0)?;
    Ok(summary)
}

fn loss_unit_values() -> Outcome {
    let l9 = loss_scaled_3d(&Vector3::new(1.0, 2.0, 2.0), &Vector3::new(1.0, 0.0, 0.0));
    check(
        (l9 - 2.0 * 2f64.sqrt() / 3.0).abs() <= 1e-12,
        format!("scaled loss {l9}"),
    )?;
    let n = Vector3::new(0.3, -0.4, 1.2).normalize();
    for beta in [0.0, 0.5, 1.0, 2.0] {
        let aligned = alpha_weight(&n, &(2.5 * n), beta).unwrap();
        let anti = alpha_weight(&n, &(-0.7 * n), beta).unwrap();
        check(
            aligned == beta.exp2(),
            format!("aligned alpha {aligned} at beta {beta}"),
        )?;
        check(
            anti == 1.0,
            format!("anti-aligned alpha {anti} at beta {beta}"),
        )?;
    }
    let perp = cosine_distance(&Vector3::z(), &Vector3::new(1.0, 0.0, 0.0)).unwrap();
    check(perp == 0.5, format!("perpendicular cosine distance {perp}"))?;
    let f = Vector3::new(0.2, -1.0, 0.4);
    let anti = direction_error_pct(&f, &-f).unwrap();
    check(anti == 100.0, format!("antipodal direction error {anti}"))?;
    let smape =
        magnitude_error_pct(&Vector3::new(3.0, 0.0, 0.0), &Vector3::new(0.0, 1.0, 0.0)).unwrap();
    check(smape == 50.0, format!("magnitude error {smape}"))?;
    Ok("all unit values exact".into())
}

fn friction_symmetries() -> Outcome {
    let half = [0.1, 0.075];
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut rot_worst, mut trans_worst) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let p = PushParams::for_box(rng.gen_range(0.1..3.0), half, rng.gen_range(0.01..0.5));
        let grid = ParticleGrid::rectangle(half, &p).unwrap();
        let spin = PlanarMotion::new(
            Vector2::zeros(),
            rng.gen_range(-10.0..10.0),
            Vector2::zeros(),
            0.0,
        );
        rot_worst = rot_worst.max(friction_wrench(&grid, &spin, &p).force.norm());
        let slide = PlanarMotion::new(
            Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
            0.0,
            Vector2::zeros(),
            0.0,
        );
        trans_worst = trans_worst.max(friction_wrench(&grid, &slide, &p).moment.abs());
    }
    check(
        rot_worst < 1e-9,
        format!("rotation leaves force {rot_worst:e}"),
    )?;
    check(
        trans_worst < 1e-9,
        format!("translation leaves moment {trans_worst:e}"),
    )?;
    let mut max_ratio = 0.0f64;
    for _ in 0..10_000 {
        let m = rng.gen_range(0.05..5.0);
        let mu = rng.gen_range(0.0..0.6);
        let mut p = PushParams::for_box(m, half, mu);
        p.n = rng.gen_range(1..200);
        let grid = ParticleGrid::rectangle(half, &p).unwrap();
        let motion = PlanarMotion::new(
            Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
            rng.gen_range(-20.0..20.0),
            Vector2::zeros(),
            0.0,
        );
        let f = friction_wrench(&grid, &motion, &p).force.norm();
        let limit = mu * m * p.g;
        check(
            f <= limit * (1.0 + 1e-12),
            format!("|f_f| {f} > limit {limit}"),
        )?;
        if limit > 0.0 {
            max_ratio = max_ratio.max(f / limit);
        }
    }
    Ok(format!(
        "rotation |f_f| {rot_worst:.1e}, translation |n_f| {trans_worst:.1e}, 1e4 states max |f_f|/(mu m g) {max_ratio:.6}"
    ))
}

// Linear-interpolation quantiles and 1.5·IQR whiskers, written out again here
// so the harness output is checked against a second implementation.
fn box_stats(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let i = pos as usize;
        let j = if i + 1 < v.len() { i + 1 } else { i };
        v[i] * (1.0 - (pos - i as f64)) + v[j] * (pos - i as f64)
    };
    let (q1, med, q3) = (q(0.25), q(0.5), q(0.75));
    let iqr = q3 - q1;
    let lo = v
        .iter()
        .copied()
        .filter(|x| *x >= q1 - 1.5 * iqr)
        .fold(f64::INFINITY, f64::min);
    let hi = v
        .iter()
        .copied()
        .filter(|x| *x <= q3 + 1.5 * iqr)
        .fold(f64::NEG_INFINITY, f64::max);
    [med, q1, q3, lo.min(q1), hi.max(q3)]
}

fn compare(label: &str, values: &[f64], got: &Option<ErrorSummary>) -> Result<(), String> {
    let got = got.ok_or_else(|| format!("{label}: summary missing"))?;
    check(
        got.n_samples == values.len(),
        format!("{label}: n {} vs {}", got.n_samples, values.len()),
    )?;
    let want = box_stats(values);
    let have = [
        got.median,
        got.q1,
        got.q3,
        got.whisker_low,
        got.whisker_high,
    ];
    for (name, (a, b)) in ["median", "q1", "q3", "whisker_low", "whisker_high"]
        .iter()
        .zip(want.iter().zip(&have))
    {
        check(
            (a - b).abs() <= 1e-9 * a.abs().max(1.0),
            format!("{label} {name}: csv {a} vs summary {b}"),
        )?;
    }
    Ok(())
}

fn cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tactile-force"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    check(
        out.status.success(),
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)),
    )
}

type Group<'a> = (String, Vec<&'a &'a EvalRow>, &'a MetricSummary);

fn ablation_harness() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    fs::write(
        d.join("sim.json"),
        r#"{"seed": 3, "trials": {"rigid_ft": 10, "ball_ft": 10, "planar_pushing": 10}, "planar": {"m": 0.65}}"#,
    )
    .unwrap();
    fs::write(
        d.join("exp.json"),
        r#"{"network": {"conv3d_channels": [2, 4], "conv2d_channels": 4, "fc_widths": [16]},
            "training": {"max_epochs": 3, "batch_size": 32},
            "mlp": {"hidden_widths": [16]}}"#,
    )
    .unwrap();
    cli(&["simulate", "--config", "sim.json", "--out", "sim"], d)?;
    cli(
        &[
            "dataset",
            "--trials",
            "sim/trials",
            "--seed",
            "4",
            "--out",
            "ds",
        ],
        d,
    )?;
    cli(
        &[
            "eval",
            "--ablation",
            "--dataset",
            "ds",
            "--config",
            "exp.json",
            "--seed",
            "5",
            "--out",
            "ab",
        ],
        d,
    )?;
    let rows = read_rows_csv(fs::File::open(d.join("ab/per_sample.csv")).unwrap())
        .map_err(|e| e.to_string())?;
    let summary: AblationSummary =
        serde_json::from_str(&fs::read_to_string(d.join("ab/summary.json")).unwrap())
            .map_err(|e| e.to_string())?;

    let mut expected: Vec<String> = Vec::new();
    for v in ["voxel", "flat"] {
        for a in ["alpha", "noalpha"] {
            expected.push(format!("{v}_{a}/mixed"));
        }
    }
    for s in ["rigid-ft", "planar-pushing", "ball-ft"] {
        expected.push(format!("voxel_alpha/{s}"));
    }
    let labels: Vec<&str> = summary.models.iter().map(|m| m.model.as_str()).collect();
    for e in &expected {
        check(
            labels.contains(&e.as_str()),
            format!("model {e} missing from summary"),
        )?;
    }

    let mut by_model: BTreeMap<&str, Vec<&EvalRow>> = BTreeMap::new();
    for r in &rows {
        by_model.entry(&r.model).or_default().push(r);
    }
    let mut compared = 0;
    for report in &summary.models {
        let rs = by_model
            .get(report.model.as_str())
            .ok_or(format!("{} has no rows", report.model))?;
        check(
            rs.len() == summary.test_samples,
            format!("{}: {} rows", report.model, rs.len()),
        )?;
        let mut groups: Vec<Group> =
            vec![(report.model.clone(), rs.iter().collect(), &report.overall)];
        for (src, ms) in &report.per_source {
            let sub: Vec<_> = rs.iter().filter(|r| r.source_tag.name() == src).collect();
            groups.push((format!("{}[{src}]", report.model), sub, ms));
        }
        for (label, sub, ms) in groups {
            let dir: Vec<f64> = sub.iter().filter_map(|r| r.direction_pct).collect();
            let mag: Vec<f64> = sub.iter().filter_map(|r| r.magnitude_pct).collect();
            let l1: Vec<f64> = sub.iter().map(|r| r.magnitude_l1).collect();
            compare(&format!("{label} direction"), &dir, &ms.direction_pct)?;
            compare(&format!("{label} magnitude"), &mag, &ms.magnitude_pct)?;
            compare(&format!("{label} l1"), &l1, &Some(ms.magnitude_l1))?;
            compared += 3;
        }
    }
    Ok(format!(
        "{} models on {} test samples, {compared} summaries match the per-sample CSV",
        summary.models.len(),
        summary.test_samples
    ))
}

fn dataset_integrity() -> Outcome {
    let trials = synth_trials(8, 12);
    let a = make_dataset(&trials, SplitConfig::default(), 17).map_err(|e| e.to_string())?;
    let b = make_dataset(&trials, SplitConfig::default(), 17).map_err(|e| e.to_string())?;
    check(a == b, "same seed gave different datasets")?;
    a.manifest.check_disjoint().map_err(|e| e.to_string())?;
    let regenerated = make_dataset(&synth_trials(8, 12), SplitConfig::default(), 17)
        .map_err(|e| e.to_string())?;
    check(regenerated == a, "regenerating trials changed the dataset")?;

    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for (name, ids) in [
        ("train", &a.manifest.train),
        ("val", &a.manifest.val),
        ("test", &a.manifest.test),
    ] {
        for id in ids {
            check(
                owner.insert(id, name).is_none(),
                format!("trial {id} in two splits"),
            )?;
        }
    }
    let by_id: BTreeMap<&str, &TrialSamples> =
        trials.iter().map(|t| (t.trial_id.as_str(), t)).collect();
    let mut kept = 0;
    for (name, set) in [("train", &a.train), ("val", &a.val), ("test", &a.test)] {
        for s in set {
            check(
                owner.get(s.trial_id.as_str()) == Some(&name),
                format!("{} sample outside its split", s.trial_id),
            )?;
            check(
                s.force().norm() > 0.0,
                format!("{}: zero force retained", s.trial_id),
            )?;
            let t = by_id[s.trial_id.as_str()];
            let in_contact = t.candidates.iter().any(|c| c.in_contact && c.sample == *s);
            check(
                in_contact,
                format!("{}: retained sample was not in contact", s.trial_id),
            )?;
            kept += 1;
        }
    }
    let total: usize = trials.iter().map(|t| t.candidates.len()).sum();
    let eligible: usize = trials
        .iter()
        .flat_map(|t| &t.candidates)
        .filter(|c| c.in_contact && c.sample.force().norm() > 0.0)
        .count();
    check(
        kept == eligible,
        format!("kept {kept} of {eligible} eligible samples"),
    )?;

    // Round trip through the CLI files, then break the manifest.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    fs::write(
        d.join("sim.json"),
        r#"{"seed": 8, "trials": {"rigid_ft": 5, "ball_ft": 5, "planar_pushing": 5}, "planar": {"m": 0.65}}"#,
    )
    .unwrap();
    cli(&["simulate", "--config", "sim.json", "--out", "sim"], d)?;
    cli(
        &[
            "dataset",
            "--trials",
            "sim/trials",
            "--seed",
            "1",
            "--out",
            "ds1",
        ],
        d,
    )?;
    cli(
        &[
            "dataset",
            "--trials",
            "sim/trials",
            "--seed",
            "1",
            "--out",
            "ds2",
        ],
        d,
    )?;
    for f in ["train.jsonl", "val.jsonl", "test.jsonl", "split.json"] {
        check(
            fs::read(d.join("ds1").join(f)).unwrap() == fs::read(d.join("ds2").join(f)).unwrap(),
            format!("{f} differs between runs"),
        )?;
    }
    let loaded = load_dataset(&d.join("ds1")).map_err(|e| e.to_string())?;
    loaded
        .manifest
        .check_disjoint()
        .map_err(|e| e.to_string())?;
    let mut bad = loaded.manifest.clone();
    bad.val.push(bad.train[0].clone());
    fs::write(
        d.join("ds1/split.json"),
        serde_json::to_string(&bad).unwrap(),
    )
    .unwrap();
    check(
        load_dataset(&d.join("ds1")).is_err(),
        "overlapping manifest accepted",
    )?;
    Ok(format!(
        "{} trials, {kept} of {total} candidates retained, splits disjoint and reproducible",
        trials.len()
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 force-inference round trip", inference_round_trip),
        ("2 solver agreement", solver_agreement),
        ("3 gradient correctness", gradient_correctness),
        ("4 end-to-end learnability", learnability),
        ("5 loss unit values", loss_unit_values),
        ("6 friction symmetries", friction_symmetries),
        ("7 ablation harness", ablation_harness),
        ("8 dataset integrity", dataset_integrity),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match run() {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

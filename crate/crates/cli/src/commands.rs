use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde_json::json;

use dap_core::datapipe::{
    balance_classes, build_examples, read_examples, read_session, recognize_actions, resample, split_dataset,
    write_examples, write_session, ActionClass, ExampleSet, ExampleSetHeader, FeatureSchema, RecognitionRules,
    TaskKind, TaskSpec, WindowingParams,
};
use dap_core::evaluation::{classify, compare_curves, piecewise_eval, save_metrics_csv, write_comparison_csv};
use dap_core::network::{load_model, predict as predict_window, save_model, Architecture, ModelParameters, NetworkConfig};
use dap_core::numeric::SeededRng;
use dap_core::synthgen::{generate, generate_driver_variant, save_truth, ScenarioConfig};
use dap_core::training::{train_with_progress, TrainingConfig};
use dap_core::Error;

use crate::manifest::ManifestBuilder;
use crate::{ArchArg, EvalArgs, InspectArgs, PredictArgs, PrepareArgs, SingleTask, SynthArgs, TaskArg, TrainArgs};

pub const SESSION_EXT: &str = "session";
pub const EXAMPLES_EXT: &str = "examples";
const PARTS: [&str; 3] = ["train", "val", "test"];

pub fn examples_path(dir: &Path, task: TaskKind, part: &str) -> PathBuf {
    dir.join(format!("{}_{part}.{EXAMPLES_EXT}", task.as_str()))
}

fn single(task: SingleTask) -> TaskKind {
    match task {
        SingleTask::Braking => TaskKind::Braking,
        SingleTask::LaneChange => TaskKind::LaneChange,
        SingleTask::Turns => TaskKind::Turns,
    }
}

fn selected_tasks(task: TaskArg) -> Vec<TaskKind> {
    match task {
        TaskArg::All => TaskKind::ALL.to_vec(),
        TaskArg::Braking => vec![TaskKind::Braking],
        TaskArg::LaneChange => vec![TaskKind::LaneChange],
        TaskArg::Turns => vec![TaskKind::Turns],
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let schema = FeatureSchema::standard();
    let mut cfg = ScenarioConfig {
        num_sessions: a.sessions as usize,
        session_length_s: a.minutes * 60.0,
        seed: a.seed,
        ..ScenarioConfig::default()
    };
    let mut set_rate = |classes: &[ActionClass], rate: Option<f64>| {
        if let Some(r) = rate {
            for c in classes {
                cfg.event_rates.insert(*c, r);
            }
        }
    };
    set_rate(&[ActionClass::Braking], a.braking_rate);
    set_rate(&[ActionClass::LaneChangeLeft, ActionClass::LaneChangeRight], a.lane_change_rate);
    set_rate(&[ActionClass::TurnLeft, ActionClass::TurnRight], a.turn_rate);
    if let Some(v) = a.min_gap {
        cfg.min_gap_s = v;
    }
    if let Some(v) = a.lead {
        cfg.precursor_lead_s = v;
    }
    if let Some(v) = a.lead_jitter {
        cfg.lead_jitter_s = v;
    }
    if let Some(v) = a.amplitude {
        cfg.precursor_amplitude = v;
    }
    if let Some(v) = a.noise {
        cfg.noise_std = v;
    }
    // Keep room before the first event for a longer lead.
    cfg.margin_s = cfg.margin_s.max(cfg.precursor_lead_s + cfg.lead_jitter_s);

    let (logs, truth) = match a.driver {
        Some(d) => generate_driver_variant(&cfg, &schema, d)?,
        None => generate(&cfg, &schema)?,
    };
    create_dir(&a.out)?;
    let mut manifest = ManifestBuilder::new("synth", Some(a.seed), json!({ "args": a, "scenario": cfg }))?;
    for log in &logs {
        let p = a.out.join(format!("{}.{SESSION_EXT}", log.session_id));
        write_session(log, &schema, &p)?;
        manifest.output(p);
    }
    let truth_path = a.out.join("truth.csv");
    save_truth(&truth, &truth_path)?;
    manifest.output(&truth_path);
    info!("wrote {} sessions with {} planted events to {}", logs.len(), truth.event_count(), a.out.display());
    manifest.summary(json!({
        "sessions": logs.len(),
        "events": truth.event_count(),
        "schema_hash": schema.hash(),
    }))?;
    manifest.write(&a.out.join("synth.manifest.json"))
}

/// Session files under `dir`, sorted by name.
fn session_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == SESSION_EXT))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .{SESSION_EXT} files in {}", dir.display());
    }
    Ok(files)
}

pub fn prepare(a: &PrepareArgs) -> Result<()> {
    let schema = FeatureSchema::standard();
    let params = WindowingParams {
        horizon_s: a.horizon,
        window: a.window as usize,
        stride: a.stride as usize,
        exec_len_s: a.exec_len,
    };
    params.validate()?;
    let rules = RecognitionRules::default();
    let files = session_files(&a.data)?;
    let mut manifest = ManifestBuilder::new("prepare", Some(a.seed), a)?;

    let mut sessions = Vec::with_capacity(files.len());
    for f in &files {
        let log = read_session(f, &schema).with_context(|| format!("reading {}", f.display()))?;
        let series = resample(&log, &schema)?;
        let events = recognize_actions(&series, &schema, &rules)?;
        info!("{}: {} frames, {} actions recognized", log.session_id, series.len(), events.len());
        sessions.push((series, events));
        manifest.input(f);
    }

    create_dir(&a.out)?;
    let master = SeededRng::new(a.seed);
    let mut summary = serde_json::Map::new();
    for kind in selected_tasks(a.task) {
        let task = TaskSpec::with_ratio(kind, a.ratio)?;
        // Streams are tied to the task, not its position in the run.
        let stream = TaskKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as u64;
        let mut all = Vec::new();
        for (series, events) in &sessions {
            all.extend(build_examples(series, events, &task, &params)?);
        }
        let positives = all.iter().filter(|e| e.is_positive()).count();
        let negatives = all.len() - positives;
        let balanced = balance_classes(all, &task, &mut master.fork(2 * stream))?;
        let split = split_dataset(balanced, a.split, &mut master.fork(2 * stream + 1))?;
        let header = ExampleSetHeader {
            task: kind,
            horizon_s: params.horizon_s,
            window: params.window,
            stride: params.stride,
            seed: a.seed,
            schema_hash: schema.hash(),
            features: schema.len(),
            class_names: task.class_names().iter().map(|s| s.to_string()).collect(),
        };
        let sets = [&split.train, &split.val, &split.test];
        let session_ids = split.sessions();
        let mut parts = serde_json::Map::new();
        for ((part, set), ids) in PARTS.iter().zip(sets).zip(&session_ids) {
            let p = examples_path(&a.out, kind, part);
            write_examples(&p, &header, set)?;
            manifest.output(&p);
            let pos = set.iter().filter(|e| e.is_positive()).count();
            parts.insert(
                part.to_string(),
                json!({ "examples": set.len(), "positives": pos, "negatives": set.len() - pos, "sessions": ids }),
            );
        }
        info!(
            "{}: {positives} positives, {negatives} negatives before balancing; train/val/test = {}/{}/{}",
            kind.as_str(),
            split.train.len(),
            split.val.len(),
            split.test.len()
        );
        summary.insert(
            kind.as_str().to_string(),
            json!({ "positives": positives, "negatives_available": negatives, "splits": parts }),
        );
    }
    manifest.summary(summary)?;
    manifest.write(&a.out.join("prepare.manifest.json"))
}

fn load_examples(path: &Path) -> Result<ExampleSet> {
    read_examples(path).with_context(|| format!("reading {}", path.display()))
}

fn default_log_path(model: &Path) -> PathBuf {
    model.with_extension("epochs.csv")
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let kind = single(a.task);
    let train_path = examples_path(&a.data, kind, "train");
    let val_path = examples_path(&a.data, kind, "val");
    let train_set = load_examples(&train_path)?;
    let val_set = load_examples(&val_path)?;
    let h = &train_set.header;
    if val_set.header != *h {
        bail!(Error::SchemaMismatch(format!(
            "{} and {} were prepared with different settings",
            train_path.display(),
            val_path.display()
        )));
    }
    let arch = match a.arch {
        ArchArg::Bi => Architecture::Bidirectional,
        ArchArg::Uni => Architecture::Unidirectional,
    };
    let mut net = NetworkConfig::new(arch, h.features, a.hidden as usize, h.num_classes(), h.window);
    net.feature_schema = Some(h.schema_hash.clone());
    let initial = ModelParameters::new(net, a.seed)?;
    let config = TrainingConfig {
        learning_rate: a.lr,
        decay_factor: a.decay_factor,
        decay_every: a.decay_every as usize,
        max_epochs: a.epochs as usize,
        clip_value: a.clip,
        batch_size: a.batch as usize,
        seed: a.seed,
        ..TrainingConfig::default()
    };
    info!(
        "training {} model ({} parameters) on {} examples, validating on {}",
        arch.name(),
        initial.param_count(),
        train_set.examples.len(),
        val_set.examples.len()
    );

    let log_path = a.log.clone().unwrap_or_else(|| default_log_path(&a.out));
    let mut log = BufWriter::new(fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    writeln!(log, "epoch,train_loss,val_loss,val_accuracy,learning_rate")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut io_err = None;
    let outcome = train_with_progress(&initial, &train_set.examples, &val_set.examples, &config, |r| {
        info!(
            "epoch {}: train loss {:.5}, val loss {}, val accuracy {}, lr {}",
            r.epoch,
            r.train_loss,
            opt(r.val_loss),
            opt(r.val_accuracy),
            r.learning_rate
        );
        let line = writeln!(
            log,
            "{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            opt(r.val_loss),
            opt(r.val_accuracy),
            r.learning_rate
        );
        if let Err(e) = line {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e).context("writing epoch log");
    }
    log.flush()?;
    drop(log);

    save_model(&outcome.model, &a.out)?;
    let best = outcome.best_epoch.map(|e| &outcome.reports[e]);
    info!("best epoch {:?}; model written to {}", outcome.best_epoch, a.out.display());

    let mut manifest = ManifestBuilder::new("train", Some(a.seed), json!({ "args": a, "training": config }))?;
    manifest.input(&train_path);
    manifest.input(&val_path);
    manifest.output(&a.out);
    manifest.output(&log_path);
    manifest.summary(json!({
        "architecture": arch.name(),
        "param_count": outcome.model.param_count(),
        "epochs_run": outcome.reports.len(),
        "best_epoch": outcome.best_epoch,
        "best_val_loss": best.and_then(|r| r.val_loss),
        "best_val_accuracy": best.and_then(|r| r.val_accuracy),
        "final_train_loss": outcome.reports.last().map(|r| r.train_loss),
    }))?;
    manifest.write(&a.out.with_extension("manifest.json"))
}

/// Fails unless `model` was trained on the layout `header` describes.
fn check_compatible(model: &ModelParameters, header: &ExampleSetHeader, model_path: &Path) -> Result<()> {
    let c = &model.config;
    let mut problems = Vec::new();
    if c.input_size != header.features {
        problems.push(format!("{} features vs {}", c.input_size, header.features));
    }
    if c.window_length != header.window {
        problems.push(format!("window {} vs {}", c.window_length, header.window));
    }
    if c.num_classes != header.num_classes() {
        problems.push(format!("{} classes vs {}", c.num_classes, header.num_classes()));
    }
    if let Some(s) = &c.feature_schema {
        if *s != header.schema_hash {
            problems.push(format!("schema {s} vs {}", header.schema_hash));
        }
    }
    if !problems.is_empty() {
        bail!(Error::SchemaMismatch(format!(
            "{} does not fit the example set: {}",
            model_path.display(),
            problems.join(", ")
        )));
    }
    Ok(())
}

fn model_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let set = load_examples(&a.examples)?;
    let horizon = set.header.horizon_s;
    create_dir(&a.out)?;
    let mut manifest = ManifestBuilder::new("eval", None, a)?;
    manifest.input(&a.examples);

    let mut stems: Vec<String> = a.models.iter().map(|p| model_stem(p)).collect();
    if stems.len() == 2 && stems[0] == stems[1] {
        stems = vec![format!("a_{}", stems[0]), format!("b_{}", stems[1])];
    }
    let mut curves = Vec::new();
    let mut summary = serde_json::Map::new();
    for (path, stem) in a.models.iter().zip(&stems) {
        let model = load_model(path).with_context(|| format!("loading {}", path.display()))?;
        check_compatible(&model, &set.header, path)?;
        let metrics = piecewise_eval(&model, &set.examples, horizon, a.bin_width)?;
        let out = a.out.join(format!("{stem}.metrics.csv"));
        save_metrics_csv(&metrics, &out)?;
        manifest.input(path);
        manifest.output(&out);
        let agg = &metrics.aggregate;
        info!(
            "{}: accuracy {:?}, tpr {:?}, fpr {:?} over {} positives and {} negatives",
            path.display(),
            agg.accuracy,
            agg.tpr,
            agg.fpr,
            agg.n_pos,
            agg.n_neg
        );
        summary.insert(
            stem.clone(),
            json!({ "accuracy": agg.accuracy, "tpr": agg.tpr, "fpr": agg.fpr, "n_pos": agg.n_pos, "n_neg": agg.n_neg }),
        );
        curves.push(metrics);
    }
    if let [first, second] = &curves[..] {
        let cmp = compare_curves(first, second, a.margin)?;
        let csv_path = a.out.join("compare.csv");
        let file = fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
        let mut w = BufWriter::new(file);
        write_comparison_csv(&cmp, &mut w)?;
        w.flush()?;
        let json_path = a.out.join("compare.json");
        fs::write(&json_path, serde_json::to_string_pretty(&cmp)? + "\n")?;
        manifest.output(&csv_path);
        manifest.output(&json_path);
        match cmp.earliest_advantage {
            Some((s, e)) => info!("{} leads {} from the ({s}, {e}] s bin", stems[0], stems[1]),
            None => info!("{} never leads {} by more than {}", stems[0], stems[1], a.margin),
        }
        summary.insert("earliest_advantage".into(), json!(cmp.earliest_advantage));
    }
    manifest.summary(summary)?;
    manifest.write(&a.out.join("eval.manifest.json"))
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let schema = FeatureSchema::standard();
    let c = &model.config;
    if c.input_size != schema.len() || c.feature_schema.as_ref().is_some_and(|s| *s != schema.hash()) {
        bail!(Error::SchemaMismatch(format!(
            "{} was not trained on the standard feature layout",
            a.model.display()
        )));
    }
    let log = read_session(&a.session, &schema).with_context(|| format!("reading {}", a.session.display()))?;
    let series = resample(&log, &schema)?;
    let t_len = c.window_length;
    if series.len() < t_len {
        bail!(Error::SessionTooShort {
            frames: series.len(),
            window: t_len
        });
    }
    let stride = a.stride as usize;
    let mut w = BufWriter::new(fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    let probs_header: Vec<String> = (0..c.num_classes).map(|k| format!("p{k}")).collect();
    writeln!(w, "t,class,{}", probs_header.join(","))?;
    let mut rows = 0usize;
    let mut end = t_len - 1;
    while end < series.len() {
        let window = series.frames.slice_rows(end + 1 - t_len, end + 1);
        let probs = predict_window(&model, &window)?;
        let values: Vec<String> = probs.as_slice().iter().map(|p| p.to_string()).collect();
        writeln!(
            w,
            "{},{},{}",
            dap_core::datapipe::frame_time(end),
            classify(&probs),
            values.join(",")
        )?;
        rows += 1;
        end += stride;
    }
    w.flush()?;
    info!("{rows} windows scored, written to {}", a.out.display());

    let mut manifest = ManifestBuilder::new("predict", None, a)?;
    manifest.input(&a.model);
    manifest.input(&a.session);
    manifest.output(&a.out);
    manifest.summary(json!({ "rows": rows, "frames": series.len() }))?;
    manifest.write(&a.out.with_extension("manifest.json"))
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    let model = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let c = &model.config;
    let matrices: Vec<_> = model
        .named_matrices()
        .into_iter()
        .map(|(name, m)| json!({ "name": name, "rows": m.rows(), "cols": m.cols() }))
        .collect();
    let summary = json!({
        "architecture": c.architecture().name(),
        "seed": model.seed,
        "input_size": c.input_size,
        "hidden_size": c.hidden_size,
        "num_classes": c.num_classes,
        "window_length": c.window_length,
        "layers": c.layers,
        "feature_schema": c.feature_schema,
        "param_count": model.param_count(),
        "matrices": matrices,
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    match &a.out {
        Some(out) => {
            fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
            let mut manifest = ManifestBuilder::new("inspect", None, a)?;
            manifest.input(&a.model);
            manifest.output(out);
            manifest.summary(&summary)?;
            manifest.write(&out.with_extension("manifest.json"))?;
        }
        None => {
            if c.feature_schema.is_none() {
                warn!("model carries no feature-schema identifier");
            }
            print!("{text}");
        }
    }
    Ok(())
}

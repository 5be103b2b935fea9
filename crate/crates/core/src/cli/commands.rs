use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{streams, DataSource, EvalSplit, RunConfig};
use super::output::{ensemble_digest, model_digest, sha256_hex, Outputs};
use crate::calibration::{reports_to_csv, CalibrationReport};
use crate::data::{gen_blobs, gen_heteroscedastic, load_csv, split, standardize_splits, Dataset, Standardizer, Targets};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_gp, evaluate_method};
use crate::gp::{gp_fit, GpConfig, GpModel};
use crate::inference::{bench_inference, LatencyReport, MethodSpec};
use crate::network::{Checkpoint, Model, Task};
use crate::numerics::{Matrix, RngStream};
use crate::training::{select_alpha, sweep_alpha, train, AlphaResult, TrainReport};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Everything a command needs besides its own arguments.
pub struct Context {
    pub cfg: RunConfig,
    pub digest: String,
    pub out: PathBuf,
    pub quiet: bool,
    pub workers: usize,
    started: SystemTime,
    clock: Instant,
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf, quiet: bool, workers: usize) -> Self {
        Self {
            digest: cfg.digest(),
            cfg,
            out,
            quiet,
            workers,
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    fn log(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("uqnet: {msg}");
        }
    }

    fn outputs(&self) -> Result<Outputs> {
        Outputs::new(&self.out)
    }

    /// Timestamps and timings live here, apart from the reproducible payloads.
    fn add_meta(&self, out: &mut Outputs, command: &str, timings: serde_json::Value) {
        let meta = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_digest": self.digest,
            "started_unix_seconds": self.started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            "wall_clock_seconds": self.clock.elapsed().as_secs_f64(),
            "workers": self.workers,
            "timings": timings,
        });
        out.add_json("run.meta.json", &meta);
    }

    fn finish(&self, out: Outputs) -> Result<()> {
        let dir = out.dir().to_path_buf();
        let files = out.commit()?;
        self.log(format_args!("wrote {} files to {}", files.len(), dir.display()));
        Ok(())
    }
}

pub struct Prepared {
    pub full: Dataset,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub standardizer: Option<Standardizer>,
}

/// Builds the configured dataset and its (optionally standardized) splits.
pub fn prepare_data(cfg: &RunConfig) -> Result<Prepared> {
    let full = match &cfg.data.source {
        DataSource::Heteroscedastic { n } => gen_heteroscedastic(*n, cfg.derived_seed(streams::DATA))?,
        DataSource::Blobs {
            n,
            classes,
            separation,
        } => gen_blobs(*n, *classes, *separation, cfg.derived_seed(streams::DATA))?,
        DataSource::Csv { path, schema } => load_csv(path, schema)?,
    };
    let (train, val, test) = split(&full, cfg.data.split, cfg.derived_seed(streams::SPLIT))?;
    if cfg.data.standardize {
        let (train, val, test, s) = standardize_splits(&train, &val, &test)?;
        Ok(Prepared {
            full,
            train,
            val,
            test,
            standardizer: Some(s),
        })
    } else {
        Ok(Prepared {
            full,
            train,
            val,
            test,
            standardizer: None,
        })
    }
}

fn eval_split<'a>(cfg: &RunConfig, p: &'a Prepared) -> Result<(&'static str, &'a Dataset)> {
    let (name, data) = match cfg.evaluate.split {
        EvalSplit::Val => ("val", &p.val),
        EvalSplit::Test => ("test", &p.test),
    };
    if data.is_empty() {
        return Err(Error::invalid("evaluate.split", format!("the {name} split is empty")));
    }
    Ok((name, data))
}

/// A separately trained network of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Family {
    /// Distribution-head dropout network (single-pass and MC variants).
    Dropout,
    /// Dropout network for the MC-dropout baseline: point head trained on
    /// squared error for regression, cross-entropy for classification.
    McDrop,
    /// Dropout-free ensemble member trained on pure NLL.
    Member(usize),
}

fn families(method: MethodSpec) -> Vec<Family> {
    match method {
        MethodSpec::RDeepSense | MethodSpec::RDeepSenseMc(_) => vec![Family::Dropout],
        MethodSpec::McDrop(_) => vec![Family::McDrop],
        MethodSpec::Ssp(k) => (0..k).map(Family::Member).collect(),
    }
}

fn train_family(cfg: &RunConfig, task: Task, p: &Prepared, fam: Family) -> Result<(Model, TrainReport)> {
    let (spec, loss, seed) = match fam {
        Family::Dropout => (cfg.spec(task, false)?, cfg.loss_spec(task)?, cfg.derived_seed(streams::RDEEPSENSE)),
        Family::McDrop => {
            let alpha = if task == Task::Regression { 1.0 } else { 0.0 };
            (
                cfg.spec(task, task == Task::Regression)?,
                cfg.loss_spec(task)?.with_alpha(alpha),
                cfg.derived_seed(streams::MCDROP),
            )
        }
        Family::Member(i) => (
            cfg.spec(task, false)?.without_dropout(),
            cfg.loss_spec(task)?.with_alpha(0.0),
            RngStream::new(cfg.derived_seed(streams::SSP), i as u64).next_u64(),
        ),
    };
    let (params, report) = train(&spec, &loss, &p.train, &p.val, &cfg.train_config(seed))?;
    Ok((Model::new(spec, params)?, report))
}

type Trained = BTreeMap<Family, (Model, TrainReport)>;

fn train_all(ctx: &Context, p: &Prepared, fams: BTreeSet<Family>) -> Result<Trained> {
    let task = ctx.cfg.task();
    let list: Vec<Family> = fams.into_iter().collect();
    ctx.log(format_args!("training {} network(s) on {} rows", list.len(), p.train.len()));
    let trained = list
        .par_iter()
        .map(|&f| train_family(&ctx.cfg, task, p, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(list.into_iter().zip(trained).collect())
}

fn models_for(method: MethodSpec, trained: &Trained) -> Vec<Model> {
    families(method).iter().map(|f| trained[f].0.clone()).collect()
}

/// Evaluation stream of a method; independent of which other methods run.
fn eval_rng(cfg: &RunConfig, method: MethodSpec) -> RngStream {
    let id = match method {
        MethodSpec::RDeepSense => 0,
        MethodSpec::RDeepSenseMc(k) => 1 << 32 | k as u64,
        MethodSpec::McDrop(k) => 2 << 32 | k as u64,
        MethodSpec::Ssp(k) => 3 << 32 | k as u64,
    };
    RngStream::new(cfg.derived_seed(streams::EVAL), id)
}

fn digest_of(models: &[Model]) -> Result<String> {
    match models {
        [one] => model_digest(one),
        many => ensemble_digest(many),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    pub format_version: u32,
    /// Member checkpoint files, relative to the manifest.
    pub members: Vec<String>,
    pub model_digest: String,
    pub config_digest: String,
}

/// Loads a single checkpoint or an ensemble manifest with its members.
pub fn load_models(path: &Path) -> Result<Vec<Model>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if value.get("members").is_none() {
        let ck = Checkpoint::from_json(&text)?;
        return Ok(vec![Model::new(ck.spec, ck.params)?]);
    }
    let manifest: EnsembleManifest =
        serde_json::from_value(value).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if manifest.format_version != MANIFEST_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported manifest version {}",
            manifest.format_version
        )));
    }
    if manifest.members.is_empty() {
        return Err(Error::Checkpoint("ensemble manifest lists no members".into()));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let models = manifest
        .members
        .iter()
        .map(|m| {
            let ck = Checkpoint::load(&base.join(m))?;
            Model::new(ck.spec, ck.params)
        })
        .collect::<Result<Vec<_>>>()?;
    if digest_of(&models)? != manifest.model_digest {
        return Err(Error::Checkpoint("ensemble members do not match the manifest digest".into()));
    }
    Ok(models)
}

/// Checks that `models` can serve `method` on data shaped like the config's.
fn check_models(cfg: &RunConfig, method: MethodSpec, models: &[Model]) -> Result<()> {
    method.validate()?;
    let ensemble = models.len() > 1 || models.first().is_some_and(|m| m.spec.dropout_free());
    match method {
        MethodSpec::Ssp(k) if models.len() < k => {
            return Err(Error::invalid("method", format!("{method} needs {k} ensemble members, checkpoint has {}", models.len())));
        }
        MethodSpec::Ssp(_) => {}
        _ if models.len() != 1 || ensemble => {
            return Err(Error::invalid("method", format!("{method} needs a single dropout network checkpoint")));
        }
        _ => {}
    }
    for m in models {
        if m.spec.task() != cfg.task() || m.spec.input_dim() != cfg.input_dim() || m.spec.outputs != cfg.outputs() {
            return Err(Error::invalid(
                "checkpoint",
                "network inputs, outputs or task do not match the configured data",
            ));
        }
    }
    Ok(())
}

fn checkpoint_json(model: &Model, digest: &str) -> Result<String> {
    let mut ck = Checkpoint::new(model.spec.clone(), model.params.clone())?;
    ck.config_digest = Some(digest.to_string());
    Ok(ck.to_json())
}

fn add_report(out: &mut Outputs, digest: &str, prefix: &str, report: &CalibrationReport) {
    out.add_json(format!("{prefix}.json"), report);
    out.add_csv(format!("{prefix}.csv"), digest, &reports_to_csv(std::slice::from_ref(report)));
    if let Some(curve) = report.curve_table() {
        out.add_csv(format!("{prefix}.curve.csv"), digest, &curve);
    }
}

#[derive(Serialize)]
struct DatasetDoc<'a> {
    config_digest: &'a str,
    dataset: &'a Dataset,
    #[serde(skip_serializing_if = "Option::is_none")]
    standardization: Option<&'a Standardizer>,
    split_sizes: [usize; 3],
}

pub fn cmd_gen(ctx: &Context) -> Result<()> {
    let out_files = ctx.outputs()?;
    let p = prepare_data(&ctx.cfg)?;
    let mut out = out_files;
    // Splits are exported in original units.
    let raw = |d: &Dataset| -> Result<Dataset> {
        Ok(match &p.standardizer {
            None => d.clone(),
            Some(s) => {
                let mut r = d.clone();
                r.inputs = Matrix::from_fn(d.len(), d.input_dim(), |i, j| {
                    d.inputs[(i, j)] * s.feature_std[j] + s.feature_mean[j]
                });
                if let Targets::Values(y) = &d.targets {
                    r.targets = Targets::Values(s.unstandardize_targets(y));
                }
                r.standardization = None;
                r
            }
        })
    };
    out.add_json(
        "dataset.json",
        &DatasetDoc {
            config_digest: &ctx.digest,
            dataset: &p.full,
            standardization: p.standardizer.as_ref(),
            split_sizes: [p.train.len(), p.val.len(), p.test.len()],
        },
    );
    for (name, d) in [("train", &p.train), ("val", &p.val), ("test", &p.test)] {
        out.add_csv(format!("{name}.csv"), &ctx.digest, &raw(d)?.to_csv());
    }
    ctx.add_meta(&mut out, "gen", serde_json::json!({}));
    ctx.log(format_args!("generated {} rows", p.full.len()));
    ctx.finish(out)
}

#[derive(Serialize)]
struct TrainDoc<'a> {
    config_digest: &'a str,
    method: MethodSpec,
    model_digest: String,
    checkpoint: &'static str,
    runs: Vec<&'a TrainReport>,
}

pub fn cmd_train(ctx: &Context, method: MethodSpec) -> Result<()> {
    method.validate()?;
    let mut out = ctx.outputs()?;
    let p = prepare_data(&ctx.cfg)?;
    let fams: BTreeSet<Family> = families(method).into_iter().collect();
    let trained = train_all(ctx, &p, fams)?;
    let models = models_for(method, &trained);
    let digest = digest_of(&models)?;
    let checkpoint = if let MethodSpec::Ssp(_) = method {
        let mut names = Vec::new();
        for (i, m) in models.iter().enumerate() {
            let name = format!("member-{i:02}.json");
            out.add(name.as_str(), checkpoint_json(m, &ctx.digest)?);
            names.push(name);
        }
        out.add_json(
            "ensemble.json",
            &EnsembleManifest {
                format_version: MANIFEST_FORMAT_VERSION,
                members: names,
                model_digest: digest.clone(),
                config_digest: ctx.digest.clone(),
            },
        );
        "ensemble.json"
    } else {
        out.add("model.json", checkpoint_json(&models[0], &ctx.digest)?);
        "model.json"
    };
    let runs: Vec<&TrainReport> = trained.values().map(|(_, r)| r).collect();
    let timings: Vec<f64> = runs.iter().map(|r| r.wall_clock_seconds).collect();
    out.add_json(
        "train_report.json",
        &TrainDoc {
            config_digest: &ctx.digest,
            method,
            model_digest: digest,
            checkpoint,
            runs,
        },
    );
    ctx.add_meta(&mut out, "train", serde_json::json!({ "train_seconds": timings }));
    ctx.finish(out)
}

pub fn cmd_eval(ctx: &Context, checkpoint: &Path, method: Option<MethodSpec>) -> Result<()> {
    let grid = ctx.cfg.z_grid()?;
    let models = load_models(checkpoint)?;
    let method = method.unwrap_or(if models.len() > 1 || models[0].spec.dropout_free() {
        MethodSpec::Ssp(models.len())
    } else {
        MethodSpec::RDeepSense
    });
    check_models(&ctx.cfg, method, &models)?;
    let mut out = ctx.outputs()?;
    let p = prepare_data(&ctx.cfg)?;
    let (split_name, data) = eval_split(&ctx.cfg, &p)?;
    let models = &models[..method.models_needed()];
    let report = evaluate_method(method, models, data, &grid, &eval_rng(&ctx.cfg, method))?
        .with_digests(digest_of(models)?, ctx.digest.clone());
    ctx.log(format_args!("evaluated {method} on {} {split_name} rows", data.len()));
    add_report(&mut out, &ctx.digest, "report", &report);
    ctx.add_meta(&mut out, "eval", serde_json::json!({}));
    ctx.finish(out)
}

#[derive(Serialize)]
struct CompareRow {
    method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    passes_per_prediction: Option<usize>,
    report: CalibrationReport,
}

#[derive(Serialize)]
struct CompareDoc<'a> {
    config_digest: &'a str,
    split: &'static str,
    rows: &'a [CompareRow],
    notes: Vec<String>,
}

fn fit_gp(cfg: &RunConfig, train: &Dataset) -> Result<(GpModel, String)> {
    let Targets::Values(y) = &train.targets else {
        return Err(Error::invalid("gp", "GP classification is not supported"));
    };
    let m = train.len().min(cfg.gp.max_points);
    let x = Matrix::from_fn(m, train.input_dim(), |i, j| train.inputs[(i, j)]);
    let y: Vec<f64> = (0..m).map(|i| y[(i, 0)]).collect();
    let mut gc = GpConfig::from_data(&x, &y);
    if let Some(v) = cfg.gp.signal_variance {
        gc.kernel.signal_variance = v;
    }
    if let Some(v) = cfg.gp.length_scale {
        gc.kernel.length_scale = v;
    }
    if let Some(v) = cfg.gp.noise_variance {
        gc.noise_variance = v;
    } else if cfg.gp.signal_variance.is_some() {
        gc.noise_variance = 0.1 * gc.kernel.signal_variance;
    }
    gc.jitter = cfg.gp.jitter;
    gc.max_points = cfg.gp.max_points;
    let digest = sha256_hex(format!("{}|{m}", serde_json::to_string(&gc).expect("serializable")).as_bytes());
    Ok((gp_fit(&x, &y, gc)?, digest))
}

fn head_rows(data: &Dataset, n: usize) -> Matrix {
    let n = n.min(data.len());
    Matrix::from_fn(n, data.input_dim(), |i, j| data.inputs[(i, j)])
}

pub fn cmd_compare(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let grid = cfg.z_grid()?;
    let mut methods = Vec::new();
    for m in &cfg.compare.methods {
        if !methods.contains(m) {
            methods.push(*m);
        }
    }
    let mut out = ctx.outputs()?;
    let p = prepare_data(cfg)?;
    let (split_name, data) = eval_split(cfg, &p)?;
    let fams: BTreeSet<Family> = methods.iter().flat_map(|m| families(*m)).collect();
    let trained = train_all(ctx, &p, fams)?;

    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let mut latencies: Vec<LatencyReport> = Vec::new();
    let bench_inputs = head_rows(data, cfg.compare.latency_samples);
    for &method in &methods {
        let models = models_for(method, &trained);
        let report = evaluate_method(method, &models, data, &grid, &eval_rng(cfg, method))?
            .with_digests(digest_of(&models)?, ctx.digest.clone());
        latencies.push(bench_inference(
            method,
            &models,
            &bench_inputs,
            1,
            1,
            &RngStream::new(cfg.derived_seed(streams::BENCH), 0),
        )?);
        ctx.log(format_args!("evaluated {method}"));
        rows.push(CompareRow {
            method: method.to_string(),
            passes_per_prediction: Some(method.passes()),
            report,
        });
    }
    let mut gp_seconds = None;
    if cfg.compare.gp {
        if cfg.task() != Task::Regression {
            notes.push("gp skipped: GP classification is out of scope".to_string());
        } else if cfg.outputs() != 1 {
            notes.push("gp skipped: the GP baseline handles one target dimension".to_string());
        } else {
            let start = Instant::now();
            let (gp, gp_digest) = fit_gp(cfg, &p.train)?;
            let report = evaluate_gp(&gp, data, &grid)?.with_digests(gp_digest, ctx.digest.clone());
            gp_seconds = Some(start.elapsed().as_secs_f64());
            ctx.log(format_args!("evaluated gp on {} training points", gp.len()));
            rows.push(CompareRow {
                method: "gp".into(),
                passes_per_prediction: None,
                report,
            });
        }
    }

    let reports: Vec<CalibrationReport> = rows.iter().map(|r| r.report.clone()).collect();
    let mut table = reports_to_csv(&reports);
    for r in &rows {
        if let Some(k) = r.passes_per_prediction {
            table.push_str(&format!("{},passes_per_prediction,{k}\n", r.method));
        }
    }
    out.add_json(
        "compare.json",
        &CompareDoc {
            config_digest: &ctx.digest,
            split: split_name,
            rows: &rows,
            notes,
        },
    );
    out.add_csv("compare.csv", &ctx.digest, &table);
    for r in &rows {
        if let Some(curve) = r.report.curve_table() {
            out.add_csv(format!("curves/{}.csv", r.method), &ctx.digest, &curve);
        }
    }
    out.add_csv("latency.meta.csv", &ctx.digest, &latency_table(&latencies));
    let train_seconds: BTreeMap<String, f64> = trained
        .iter()
        .map(|(f, (_, r))| (format!("{f:?}").to_lowercase(), r.wall_clock_seconds))
        .collect();
    ctx.add_meta(
        &mut out,
        "compare",
        serde_json::json!({ "latency": latencies, "train_seconds": train_seconds, "gp_seconds": gp_seconds }),
    );
    ctx.finish(out)
}

fn latency_table(reports: &[LatencyReport]) -> String {
    let mut s = String::from("method,median_seconds,p95_seconds,passes_per_prediction,timed_predictions\n");
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method, r.median_seconds, r.p95_seconds, r.passes_per_prediction, r.timed_predictions
        ));
    }
    s
}

#[derive(Serialize)]
struct BenchRow {
    method: MethodSpec,
    passes_per_prediction: f64,
    timed_predictions: usize,
}

#[derive(Serialize)]
struct BenchDoc<'a> {
    config_digest: &'a str,
    model_digest: String,
    rows: Vec<BenchRow>,
}

pub fn cmd_bench(ctx: &Context, checkpoint: &Path, methods: Option<Vec<MethodSpec>>) -> Result<()> {
    let cfg = &ctx.cfg;
    let methods = methods.unwrap_or_else(|| cfg.bench.methods.clone());
    if methods.is_empty() {
        return Err(Error::invalid("methods", "nothing to benchmark"));
    }
    let models = load_models(checkpoint)?;
    for &m in &methods {
        check_models(cfg, m, &models)?;
    }
    let mut out = ctx.outputs()?;
    let p = prepare_data(cfg)?;
    let (_, data) = eval_split(cfg, &p)?;
    let inputs = head_rows(data, cfg.bench.samples);
    let rng = RngStream::new(cfg.derived_seed(streams::BENCH), 0);
    let mut reports = Vec::new();
    for &m in &methods {
        let r = bench_inference(m, &models[..m.models_needed()], &inputs, cfg.bench.repetitions, cfg.bench.warmup, &rng)?;
        ctx.log(format_args!("{m}: median {:.3e} s", r.median_seconds));
        reports.push(r);
    }
    let baseline = reports
        .iter()
        .find(|r| r.method == MethodSpec::RDeepSense)
        .map(|r| r.median_seconds);
    let speedups: BTreeMap<String, f64> = match baseline {
        Some(b) if b > 0.0 => reports.iter().map(|r| (r.method.to_string(), r.median_seconds / b)).collect(),
        _ => BTreeMap::new(),
    };
    out.add_json(
        "bench.json",
        &BenchDoc {
            config_digest: &ctx.digest,
            model_digest: digest_of(&models)?,
            rows: reports
                .iter()
                .map(|r| BenchRow {
                    method: r.method,
                    passes_per_prediction: r.passes_per_prediction,
                    timed_predictions: r.timed_predictions,
                })
                .collect(),
        },
    );
    out.add_csv("latency.meta.csv", &ctx.digest, &latency_table(&reports));
    ctx.add_meta(
        &mut out,
        "bench",
        serde_json::json!({ "latency": reports, "median_relative_to_rdeepsense": speedups }),
    );
    ctx.finish(out)
}

#[derive(Serialize)]
struct SweepDoc<'a> {
    config_digest: &'a str,
    /// Validation score minimized: deviation area (regression) or NLL.
    selection_metric: &'static str,
    selected_alpha: Option<f64>,
    results: &'a [AlphaResult],
}

pub fn cmd_sweep_alpha(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let grid = cfg.z_grid()?;
    let task = cfg.task();
    let spec = cfg.spec(task, false)?;
    let loss = cfg.loss_spec(task)?;
    let mut out = ctx.outputs()?;
    let p = prepare_data(cfg)?;
    ctx.log(format_args!("sweeping {} alpha values", cfg.sweep.alphas.len()));
    let results = sweep_alpha(
        &spec,
        &loss,
        &p.train,
        &p.val,
        &cfg.sweep.alphas,
        &cfg.train_config(cfg.derived_seed(streams::SWEEP)),
        &grid,
    )?;
    let selected = select_alpha(&results);
    let mut table = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Invariant(format!("csv encoding: {e}"));
    table.write_record(["alpha", "metric", "value"]).map_err(csv_err)?;
    for r in &results {
        let alpha = r.alpha.to_string();
        match &r.outcome {
            Ok(o) => {
                for (k, v) in o.report.metric_rows() {
                    table.write_record([alpha.as_str(), &k, &v]).map_err(csv_err)?;
                }
            }
            Err(msg) => table.write_record([alpha.as_str(), "error", msg]).map_err(csv_err)?,
        }
    }
    let table = String::from_utf8(table.into_inner().map_err(|e| Error::Invariant(e.to_string()))?)
        .map_err(|e| Error::Invariant(e.to_string()))?;
    if let Some(best) = selected {
        if let Some(params) = best.outcome.as_ref().ok().and_then(|o| o.params.as_ref()) {
            let model = Model::new(spec.clone(), params.clone())?;
            out.add("model.json", checkpoint_json(&model, &ctx.digest)?);
        }
        ctx.log(format_args!("selected alpha {}", best.alpha));
    } else {
        ctx.log("every alpha failed");
    }
    out.add_json(
        "sweep.json",
        &SweepDoc {
            config_digest: &ctx.digest,
            selection_metric: if task == Task::Regression { "deviation_area" } else { "nll" },
            selected_alpha: selected.map(|r| r.alpha),
            results: &results,
        },
    );
    out.add_csv("sweep.csv", &ctx.digest, &table);
    let timings: Vec<Option<f64>> = results
        .iter()
        .map(|r| r.outcome.as_ref().ok().map(|o| o.train.wall_clock_seconds))
        .collect();
    ctx.add_meta(&mut out, "sweep-alpha", serde_json::json!({ "train_seconds": timings }));
    ctx.finish(out)
}

//! One function per subcommand. Each reads its inputs from files, writes
//! its artifacts plus a run manifest into the output directory, prints a
//! short summary to stderr and returns `Err` iff the postcondition was
//! not met.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use flowshap::flows::{
    self, DatasetManifest, MissingIdentifierPolicy, PreprocessOptions, MANIFEST_FILE, TEST_FILE,
    TRAIN_FILE,
};
use flowshap::metrics::{confusion, metric_triple, ConfusionMatrix, MetricTriple};
use flowshap::selection::{
    run_all_methods, run_filter_method, select_shap_forward, SelectionMethod, SelectionResult,
};
use flowshap::treeshap::{explain, rank_by_mean_abs, ShapMatrix};
use flowshap::{synth, DatasetSplit, GbtConfig, GbtModel, Matrix};

use crate::manifest::{write_json, RunManifest};
use crate::{
    DetectArgs, ExplainArgs, MethodArg, PrepareArgs, RunAllArgs, Scope, SelectArgs, SelectKnobs,
    SynthArgs, TrainArgs,
};

pub const MODEL_FILE: &str = "model.json";
pub const EVAL_FILE: &str = "eval.json";
pub const SHAP_FILE: &str = "shap.csv";
pub const SHAP_META_FILE: &str = "shap-meta.json";
pub const RANKING_FILE: &str = "ranking.csv";
pub const SELECTION_FILE: &str = "selection.json";
pub const DETECT_FILE: &str = "detect.csv";
pub const SYNTH_FILE: &str = "synth.csv";

/// Global flags shared by every subcommand.
pub struct Ctx {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: usize,
}

impl Ctx {
    fn ensure_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("cannot create {}", self.out_dir.display()))
    }

    /// Split directory an artifact command reads from.
    fn data_dir(&self, data: &Option<PathBuf>) -> PathBuf {
        data.clone().unwrap_or_else(|| self.out_dir.clone())
    }

    fn model_path(&self, model: &Option<PathBuf>) -> PathBuf {
        model.clone().unwrap_or_else(|| self.out_dir.join(MODEL_FILE))
    }
}

fn load_split(dir: &Path) -> Result<(DatasetSplit, DatasetManifest)> {
    flows::load_split(dir)
        .with_context(|| format!("cannot load prepared split from {}", dir.display()))
}

// ---------------------------------------------------------------- prepare

fn preprocess_options(args: &PrepareArgs) -> PreprocessOptions {
    let mut options = PreprocessOptions::default();
    options.label_column = args.label_col.clone();
    if let Some(cols) = &args.drop_cols {
        options.drop_columns = cols.iter().filter(|c| !c.is_empty()).cloned().collect();
    }
    if !args.normal_labels.is_empty() {
        options.normal_tags = args.normal_labels.clone();
    }
    if !args.positive_labels.is_empty() {
        options.positive_tags = args.positive_labels.clone();
    }
    if args.strict_drop_cols {
        options.missing_identifier_policy = MissingIdentifierPolicy::Error;
    }
    options
}

/// Load, preprocess and split; returns the split and the written file
/// names. Shared by `prepare` and `run-all`.
fn run_prepare(
    ctx: &Ctx,
    args: &PrepareArgs,
    source_digest: String,
) -> Result<(DatasetSplit, Vec<String>)> {
    let table = flows::load_csv(&args.csv)?;
    let prep = flows::preprocess(&table, &preprocess_options(args))?;
    for warning in &prep.warnings {
        eprintln!("warning: {warning}");
    }
    let split = flows::split(&prep.dataset, ctx.seed, args.train_frac, !args.no_stratify)?;
    let written = flows::save_split(&ctx.out_dir, &split, Some(source_digest))?;

    let (train_normal, train_positive) = split.train.class_counts();
    let (test_normal, test_positive) = split.test.class_counts();
    eprintln!(
        "prepared {} features; train {train_normal} normal + {train_positive} positive, \
         test {test_normal} normal + {test_positive} positive ({} unusable rows dropped)",
        split.train.feature_count(),
        split.train.dropped_row_count,
    );
    Ok((split, written))
}

fn prepare_config(args: &PrepareArgs) -> serde_json::Value {
    let options = preprocess_options(args);
    serde_json::json!({
        "csv": args.csv,
        "label_column": options.label_column,
        "drop_columns": options.drop_columns,
        "normal_tags": options.normal_tags,
        "positive_tags": options.positive_tags,
        "strict_drop_cols": args.strict_drop_cols,
        "train_fraction": args.train_frac,
        "stratified": !args.no_stratify,
    })
}

pub fn cmd_prepare(ctx: &Ctx, args: &PrepareArgs) -> Result<()> {
    ctx.ensure_out_dir()?;
    let mut manifest = RunManifest::begin("prepare", ctx.seed, ctx.threads, prepare_config(args));
    manifest.record_input(&args.csv)?;
    let source_digest = manifest.inputs[0].sha256.clone();

    let (_split, written) = run_prepare(ctx, args, source_digest)?;
    manifest.record_outputs(written);
    manifest.finish(&ctx.out_dir)?;
    Ok(())
}

// ------------------------------------------------------------------ train

#[derive(Serialize)]
struct EvalReport {
    train_rows: usize,
    test_rows: usize,
    rounds: usize,
    /// Mean training logloss after the last round.
    final_train_loss: Option<f64>,
    confusion: ConfusionMatrix,
    metrics: MetricTriple,
    summary: String,
}

/// Fit on the train side, evaluate on the test side, write `model.json`
/// and `eval.json`. Shared by `train` and `run-all`.
fn run_train(
    ctx: &Ctx,
    split: &DatasetSplit,
    config: &GbtConfig,
    threshold: f64,
) -> Result<(GbtModel, Vec<String>)> {
    let model = flowshap::gbt::fit(&split.train, config)?;
    model.save(ctx.out_dir.join(MODEL_FILE))?;

    let pred = model.predict_label(&split.test.features, threshold)?;
    let cm = confusion(&split.test.labels, &pred)?;
    let triple = metric_triple(&cm);
    let report = EvalReport {
        train_rows: split.train.row_count(),
        test_rows: split.test.row_count(),
        rounds: model.trees.len(),
        final_train_loss: model.train_loss.last().copied(),
        confusion: cm,
        metrics: triple,
        summary: triple.render(),
    };
    write_json(&ctx.out_dir.join(EVAL_FILE), &report)?;
    eprintln!(
        "trained {} rounds on {} rows x {} features; test: {}",
        model.trees.len(),
        split.train.row_count(),
        split.train.feature_count(),
        triple.render(),
    );
    Ok((model, vec![MODEL_FILE.to_string(), EVAL_FILE.to_string()]))
}

pub fn cmd_train(ctx: &Ctx, args: &TrainArgs) -> Result<()> {
    ctx.ensure_out_dir()?;
    let data = ctx.data_dir(&args.data);
    let config = args.gbt.to_config(ctx.seed);
    let mut manifest = RunManifest::begin(
        "train",
        ctx.seed,
        ctx.threads,
        serde_json::json!({ "data": data, "gbt": config, "threshold": args.threshold }),
    );
    let (split, _) = load_split(&data)?;
    for file in [MANIFEST_FILE, TRAIN_FILE, TEST_FILE] {
        manifest.record_input(data.join(file))?;
    }
    let (_model, written) = run_train(ctx, &split, &config, args.threshold)?;
    manifest.record_outputs(written);
    manifest.finish(&ctx.out_dir)?;
    Ok(())
}

// ---------------------------------------------------------------- explain

#[derive(Serialize)]
struct ShapMeta {
    expected_value: f64,
    scope: String,
    rows: usize,
    features: usize,
    /// max |expected_value + Σ attributions − margin| over all rows.
    local_accuracy_max_abs_err: f64,
}

fn scope_features(split: &DatasetSplit, scope: Scope) -> Matrix {
    match scope {
        Scope::Train => split.train.features.clone(),
        Scope::All => split.train.features.vstack(&split.test.features),
    }
}

/// Explain the given rows and write `shap.csv`, `shap-meta.json` and
/// `ranking.csv`. Shared by `explain` and `run-all`.
fn run_explain(
    ctx: &Ctx,
    model: &GbtModel,
    split: &DatasetSplit,
    scope: Scope,
) -> Result<Vec<String>> {
    if model.feature_names != split.train.schema.feature_names {
        bail!(
            "model schema ({} features) does not match the prepared split ({} features)",
            model.feature_names.len(),
            split.train.feature_count(),
        );
    }
    let features = scope_features(split, scope);
    let shap = explain(model, &features)?;
    let margins = model.predict_margin(&features)?;
    let mut max_err = 0.0f64;
    for (r, row) in shap.values.iter_rows().enumerate() {
        let reconstructed = shap.expected_value + row.iter().sum::<f64>();
        max_err = max_err.max((reconstructed - margins[r]).abs());
    }

    write_shap_csv(&ctx.out_dir.join(SHAP_FILE), &model.feature_names, &shap)?;
    let ranking = rank_by_mean_abs(&shap)?;
    write_ranking_csv(&ctx.out_dir.join(RANKING_FILE), &model.feature_names, &ranking)?;
    let meta = ShapMeta {
        expected_value: shap.expected_value,
        scope: scope.as_str().to_string(),
        rows: shap.sample_count(),
        features: shap.feature_count(),
        local_accuracy_max_abs_err: max_err,
    };
    write_json(&ctx.out_dir.join(SHAP_META_FILE), &meta)?;

    eprintln!("explained {} rows; top features by mean |SHAP|:", shap.sample_count());
    for (rank, &j) in ranking.order.iter().take(4).enumerate() {
        eprintln!("  {}. {} ({:.6})", rank + 1, model.feature_names[j], ranking.scores[j]);
    }
    Ok(vec![SHAP_FILE.to_string(), SHAP_META_FILE.to_string(), RANKING_FILE.to_string()])
}

fn write_shap_csv(path: &Path, names: &[String], shap: &ShapMatrix) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    writer.write_record(names)?;
    for row in shap.values.iter_rows() {
        writer.write_record(row.iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

fn write_ranking_csv(
    path: &Path,
    names: &[String],
    ranking: &flowshap::ImportanceRanking,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    writer.write_record(["rank", "feature_index", "feature", "mean_abs_shap"])?;
    for (rank, &j) in ranking.order.iter().enumerate() {
        writer.write_record([
            (rank + 1).to_string(),
            j.to_string(),
            names[j].clone(),
            ranking.scores[j].to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn cmd_explain(ctx: &Ctx, args: &ExplainArgs) -> Result<()> {
    ctx.ensure_out_dir()?;
    let data = ctx.data_dir(&args.data);
    let model_path = ctx.model_path(&args.model);
    let mut manifest = RunManifest::begin(
        "explain",
        ctx.seed,
        ctx.threads,
        serde_json::json!({ "model": model_path, "data": data, "on": args.on.as_str() }),
    );
    let model = GbtModel::load(&model_path)?;
    let (split, _) = load_split(&data)?;
    manifest.record_input(&model_path)?;
    for file in [MANIFEST_FILE, TRAIN_FILE, TEST_FILE] {
        manifest.record_input(data.join(file))?;
    }
    let written = run_explain(ctx, &model, &split, args.on)?;
    manifest.record_outputs(written);
    manifest.finish(&ctx.out_dir)?;
    Ok(())
}

// ----------------------------------------------------------------- select

#[derive(Serialize)]
struct SelectionRow {
    method: String,
    features: Vec<String>,
    metrics: MetricTriple,
    summary: String,
    detail: SelectionResult,
}

#[derive(Serialize)]
struct SelectionReport {
    k: usize,
    epsilon: f64,
    rows: Vec<SelectionRow>,
}

/// Run the chosen method(s) and write `selection.json`. Shared by
/// `select` and `run-all`.
fn run_select(
    ctx: &Ctx,
    split: &DatasetSplit,
    config: &GbtConfig,
    knobs: &SelectKnobs,
    default_method: MethodArg,
) -> Result<Vec<String>> {
    let scope = knobs.on.to_explain_scope();
    let results: Vec<SelectionResult> = match knobs.method.unwrap_or(default_method).to_method() {
        None => run_all_methods(split, config, knobs.k, knobs.epsilon, knobs.mi_bins, scope)?,
        Some(SelectionMethod::ShapWrapper) => {
            vec![select_shap_forward(split, config, knobs.epsilon, scope)?]
        }
        Some(method) => {
            vec![run_filter_method(split, config, method, knobs.k, knobs.mi_bins)?]
        }
    };

    let names = &split.train.schema.feature_names;
    let rows: Vec<SelectionRow> = results
        .into_iter()
        .map(|result| SelectionRow {
            method: result.method.as_str().to_string(),
            features: result.selected.iter().map(|&j| names[j].clone()).collect(),
            metrics: result.metrics,
            summary: result.metrics.render(),
            detail: result,
        })
        .collect();
    for row in &rows {
        eprintln!("{:>13}: [{}] {}", row.method, row.features.join(", "), row.summary);
    }
    let report = SelectionReport { k: knobs.k, epsilon: knobs.epsilon, rows };
    write_json(&ctx.out_dir.join(SELECTION_FILE), &report)?;
    Ok(vec![SELECTION_FILE.to_string()])
}

pub fn cmd_select(ctx: &Ctx, args: &SelectArgs) -> Result<()> {
    ctx.ensure_out_dir()?;
    let data = ctx.data_dir(&args.data);
    let config = args.gbt.to_config(ctx.seed);
    let method = args.knobs.method.unwrap_or(MethodArg::ShapWrapper);
    let mut manifest = RunManifest::begin(
        "select",
        ctx.seed,
        ctx.threads,
        serde_json::json!({
            "data": data,
            "method": method.to_method().map_or("all", |m| m.as_str()),
            "epsilon": args.knobs.epsilon,
            "k": args.knobs.k,
            "mi_bins": args.knobs.mi_bins,
            "on": args.knobs.on.as_str(),
            "gbt": config,
        }),
    );
    let (split, _) = load_split(&data)?;
    for file in [MANIFEST_FILE, TRAIN_FILE, TEST_FILE] {
        manifest.record_input(data.join(file))?;
    }
    let written = run_select(ctx, &split, &config, &args.knobs, MethodArg::ShapWrapper)?;
    manifest.record_outputs(written);
    manifest.finish(&ctx.out_dir)?;
    Ok(())
}

// ----------------------------------------------------------------- detect

pub fn cmd_detect(ctx: &Ctx, args: &DetectArgs) -> Result<()> {
    ctx.ensure_out_dir()?;
    let model_path = ctx.model_path(&args.model);
    let mut manifest = RunManifest::begin(
        "detect",
        ctx.seed,
        ctx.threads,
        serde_json::json!({ "model": model_path, "csv": args.csv, "threshold": args.threshold }),
    );
    manifest.record_input(&model_path)?;
    manifest.record_input(&args.csv)?;

    let model = GbtModel::load(&model_path)?;
    let table = flows::load_csv(&args.csv)?;
    let features = extract_features(&model, &table)?;
    let proba = model.predict_proba(&features)?;
    let labels = model.predict_label(&features, args.threshold)?;

    let out_path = ctx.out_dir.join(DETECT_FILE);
    let mut writer = csv::Writer::from_path(&out_path)
        .with_context(|| format!("cannot create {}", out_path.display()))?;
    writer.write_record(["row", "probability", "label"])?;
    for (r, (p, l)) in proba.iter().zip(&labels).enumerate() {
        writer.write_record([r.to_string(), p.to_string(), l.to_string()])?;
    }
    writer.flush()?;

    let flagged = labels.iter().filter(|&&l| l == 1).count();
    eprintln!(
        "scored {} rows with {} features; {flagged} flagged positive at threshold {}",
        proba.len(),
        model.feature_count(),
        args.threshold,
    );
    manifest.record_outputs([DETECT_FILE]);
    manifest.finish(&ctx.out_dir)?;
    Ok(())
}

/// Pick the model's feature columns out of a raw CSV, matching names
/// exactly first and then ignoring case and spaces.
fn extract_features(model: &GbtModel, table: &flows::RawTable) -> Result<Matrix> {
    let normalized: Vec<String> =
        table.headers.iter().map(|h| flows::normalize_name(h)).collect();
    let mut columns = Vec::with_capacity(model.feature_names.len());
    let mut missing = Vec::new();
    for name in &model.feature_names {
        let found = table
            .headers
            .iter()
            .position(|h| h == name)
            .or_else(|| normalized.iter().position(|h| *h == flows::normalize_name(name)));
        match found {
            Some(idx) => columns.push(idx),
            None => missing.push(name.as_str()),
        }
    }
    if !missing.is_empty() {
        bail!(
            "input is missing model feature column(s) [{}]; input has [{}]",
            missing.join(", "),
            table.headers.join(", "),
        );
    }

    let mut features = Matrix::zeros(table.rows.len(), columns.len());
    for (r, row) in table.rows.iter().enumerate() {
        for (j, &c) in columns.iter().enumerate() {
            let cell = row[c].trim();
            let value: f64 = cell.parse().map_err(|_| {
                anyhow::anyhow!(
                    "row {}, column {:?}: expected a number, got {cell:?}",
                    r + 1,
                    table.headers[c],
                )
            })?;
            features.set(r, j, value);
        }
    }
    Ok(features)
}

// ------------------------------------------------------------------ synth

fn parse_informative(items: &[String]) -> Result<Vec<(usize, f64)>> {
    items
        .iter()
        .map(|item| {
            let (idx, shift) = item
                .split_once(':')
                .with_context(|| format!("bad --informative entry {item:?}; want index:shift"))?;
            let idx = idx.trim().parse::<usize>().with_context(|| {
                format!("bad feature index in --informative entry {item:?}")
            })?;
            let shift = shift
                .trim()
                .parse::<f64>()
                .with_context(|| format!("bad shift in --informative entry {item:?}"))?;
            Ok((idx, shift))
        })
        .collect()
}

pub fn cmd_synth(ctx: &Ctx, args: &SynthArgs) -> Result<()> {
    ctx.ensure_out_dir()?;
    let informative = parse_informative(&args.informative)?;
    if args.cic_names && args.features != 77 {
        bail!("--cic-names requires --features 77, got {}", args.features);
    }
    let spec = synth::SynthSpec {
        n_features: args.features,
        informative,
        n_normal: args.normal,
        n_positive: args.positive,
        noise_sigma: args.sigma,
        seed: ctx.seed,
        feature_names: args.cic_names.then(synth::cic_feature_names),
        partition_positives: args.partition_positives,
    };
    let mut manifest = RunManifest::begin(
        "synth",
        ctx.seed,
        ctx.threads,
        serde_json::json!({
            "spec": {
                "n_features": spec.n_features,
                "informative": spec.informative,
                "n_normal": spec.n_normal,
                "n_positive": spec.n_positive,
                "noise_sigma": spec.noise_sigma,
                "cic_names": args.cic_names,
                "partition_positives": spec.partition_positives,
            },
            "identifiers": !args.no_identifiers,
        }),
    );

    let dataset = synth::generate(&spec)?;
    let out_path = args.out.clone().unwrap_or_else(|| ctx.out_dir.join(SYNTH_FILE));
    synth::write_flow_csv(&out_path, &dataset, !args.no_identifiers)?;
    eprintln!(
        "wrote {} rows x {} features to {}",
        dataset.row_count(),
        dataset.feature_count(),
        out_path.display(),
    );
    manifest.record_outputs([out_path.display().to_string()]);
    manifest.finish(&ctx.out_dir)?;
    Ok(())
}

// ---------------------------------------------------------------- run-all

pub fn cmd_run_all(ctx: &Ctx, args: &RunAllArgs) -> Result<()> {
    ctx.ensure_out_dir()?;
    let config = args.gbt.to_config(ctx.seed);
    let method = args.knobs.method.unwrap_or(MethodArg::All);
    let mut manifest = RunManifest::begin(
        "run-all",
        ctx.seed,
        ctx.threads,
        serde_json::json!({
            "prepare": prepare_config(&args.prepare),
            "gbt": config,
            "select": {
                "method": method.to_method().map_or("all", |m| m.as_str()),
                "epsilon": args.knobs.epsilon,
                "k": args.knobs.k,
                "mi_bins": args.knobs.mi_bins,
                "on": args.knobs.on.as_str(),
            },
            "threshold": args.threshold,
        }),
    );
    manifest.record_input(&args.prepare.csv)?;
    let source_digest = manifest.inputs[0].sha256.clone();

    let (split, written) = run_prepare(ctx, &args.prepare, source_digest)?;
    manifest.record_outputs(written);
    let (model, written) = run_train(ctx, &split, &config, args.threshold)?;
    manifest.record_outputs(written);
    let written = run_explain(ctx, &model, &split, args.knobs.on)?;
    manifest.record_outputs(written);
    let written = run_select(ctx, &split, &config, &args.knobs, MethodArg::All)?;
    manifest.record_outputs(written);
    manifest.finish(&ctx.out_dir)?;
    Ok(())
}

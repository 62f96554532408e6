//! Command-line surface.
//!
//! Subcommands: `simulate`, `ingest`, `select-snps`, `train`, `evaluate`,
//! `predict`, `export-attention`. Every run writes machine-readable outputs
//! (JSON/TSV/CSV) plus a short human summary on stdout, and a `manifest.json`
//! with the resolved configuration, its hash and the seed, enough to
//! reproduce the outputs bit for bit.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! error. A config file (`--config run.toml`) provides defaults; flags
//! override config fields.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::model::{model_forward, Checkpoint, Mode, ModelConfig, Variant};
use crate::numcore::rng::fnv1a64;
use crate::select::{select_snps, SelectionConfig};
use crate::synth::{generate, write_dir, SynthConfig};
use crate::traineval::data::prepare_inference;
use crate::traineval::{
    cross_validate, evaluate, make_split, CvSettings, FoldMetrics, MetricReport, SplitMode,
    SplitPlan, TrainSchedule,
};

#[derive(Parser)]
#[command(
    name = "genophen",
    version,
    about = "Genotype-to-phenotype prediction: SNP selection, multi-modal fusion network, grouped cross-validation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known planted effects
    Simulate(SimulateArgs),
    /// Parse and validate the five input tables
    Ingest(IngestArgs),
    /// Two-stage SNP selection: elimination then mutual information
    SelectSnps(SelectArgs),
    /// Cross-validated training
    Train(TrainArgs),
    /// Recompute the metric report from a run directory
    Evaluate(EvaluateArgs),
    /// Predict yields with a trained checkpoint
    Predict(PredictArgs),
    /// Export per-SNP attention weights over weather timesteps
    ExportAttention(AttentionArgs),
}

// ---- run configuration -------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub dir: Option<PathBuf>,
    pub genotypes: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    pub soil: Option<PathBuf>,
    pub management: Option<PathBuf>,
    pub phenotypes: Option<PathBuf>,
}

impl DataPaths {
    fn resolve_one(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        if let Some(p) = explicit {
            return Ok(p.clone());
        }
        if let Some(dir) = &self.dir {
            return Ok(dir.join(name));
        }
        Err(Error::Config(format!(
            "no path for {name}: set data.dir or data.{}",
            name.trim_end_matches(".tsv")
        )))
    }

    pub fn resolve(&self) -> Result<[PathBuf; 5]> {
        let paths = [
            self.resolve_one(&self.genotypes, "genotypes.tsv")?,
            self.resolve_one(&self.weather, "weather.tsv")?,
            self.resolve_one(&self.soil, "soil.tsv")?,
            self.resolve_one(&self.management, "management.tsv")?,
            self.resolve_one(&self.phenotypes, "phenotypes.tsv")?,
        ];
        for p in &paths {
            if !p.exists() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(paths)
    }

    fn load(&self) -> Result<Dataset> {
        let [g, w, s, m, p] = self.resolve()?;
        Dataset::load_paths(&g, &w, &s, &m, &p)
    }
}

fn default_folds() -> usize {
    10
}

fn default_clusters() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub mode: String,
    pub folds: usize,
    pub clusters: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            mode: "environment".into(),
            folds: default_folds(),
            clusters: default_clusters(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionSection {
    pub rfe_target: usize,
    pub mi_bins: usize,
    /// Select once on the full dataset instead of per fold.
    pub global: bool,
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection {
            rfe_target: 30,
            mi_bins: 16,
            global: false,
        }
    }
}

/// The declarative run configuration. CLI flags override these fields.
///
/// The model section defaults here are sized for the bundled synthetic
/// quick start; scale the dimensions up in the config file for real data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub parallel: bool,
    pub output: Option<PathBuf>,
    pub data: DataPaths,
    pub split: SplitSection,
    pub selection: SelectionSection,
    pub model: ModelConfig,
    pub training: TrainSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            variant: None,
            parallel: true,
            output: None,
            data: DataPaths::default(),
            split: SplitSection::default(),
            selection: SelectionSection::default(),
            model: ModelConfig {
                snp_count: 12,
                filters: 4,
                weather_conv: vec![12, 16],
                soil_dims: vec![16, 8],
                mgmt_dims: vec![8, 8],
                fusion_dims: vec![32],
                dropout: 0.1,
                ..ModelConfig::default()
            },
            training: TrainSchedule {
                batch_size: 32,
                max_epochs: 30,
                patience: 5,
                learning_rate: 3e-3,
            },
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }
}

// ---- shared flags -------------------------------------------------------------

#[derive(Args, Debug, Clone)]
struct CommonRunArgs {
    /// TOML run configuration; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding the five standard .tsv tables
    #[arg(long)]
    data: Option<PathBuf>,
    /// Master seed (mandatory, here or in the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonRunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data.dir = Some(d.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        Ok(cfg)
    }
}

fn require_seed(cfg: &RunConfig) -> Result<u64> {
    cfg.seed
        .ok_or_else(|| Error::Config("a seed is mandatory; pass --seed or set seed in the config".into()))
}

fn require_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| Error::Config("an output directory is required; pass --out".into()))?;
    fs::create_dir_all(&out)?;
    Ok(out)
}

// ---- manifest -----------------------------------------------------------------

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    schema_version: u32,
    command: &'a str,
    crate_version: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a C,
}

fn write_manifest<C: Serialize>(dir: &Path, command: &str, seed: u64, config: &C) -> Result<()> {
    let config_json = serde_json::to_string(config).map_err(|e| Error::Data(e.to_string()))?;
    let manifest = Manifest {
        schema_version: 1,
        command,
        crate_version: env!("CARGO_PKG_VERSION"),
        seed,
        config_hash: format!("{:016x}", fnv1a64(config_json.as_bytes())),
        config,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

// ---- simulate -----------------------------------------------------------------

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 40)]
    hybrids: usize,
    #[arg(long, default_value_t = 12)]
    envs: usize,
    #[arg(long, default_value_t = 60)]
    snps: usize,
    #[arg(long, default_value_t = 6)]
    causal: usize,
    #[arg(long, default_value_t = 2)]
    interactions: usize,
    #[arg(long, default_value_t = 1.0)]
    beta_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma_scale: f64,
    #[arg(long, default_value_t = 0.0)]
    delta_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 215)]
    season_days: usize,
    #[arg(long, default_value_t = 1.0)]
    obs_density: f64,
    /// Quadratic instead of linear genotype effects
    #[arg(long)]
    nonlinear: bool,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let config = SynthConfig {
        hybrids: args.hybrids,
        envs: args.envs,
        snps: args.snps,
        causal: args.causal,
        interactions: args.interactions,
        beta_scale: args.beta_scale,
        gamma_scale: args.gamma_scale,
        delta_scale: args.delta_scale,
        noise_std: args.noise_std,
        season_days: args.season_days,
        obs_density: args.obs_density,
        nonlinear: args.nonlinear,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let output = generate(&config)?;
    fs::create_dir_all(&args.out)?;
    write_dir(&output, &args.out)?;
    write_manifest(&args.out, "simulate", args.seed, &config)?;
    println!(
        "simulated {} observations: {} hybrids x {} environments, {} SNPs ({} causal, {} interacting) -> {}",
        output.dataset.observations.len(),
        config.hybrids,
        config.envs,
        config.snps,
        config.causal,
        config.interactions,
        args.out.display()
    );
    Ok(())
}

// ---- ingest -------------------------------------------------------------------

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    common: CommonRunArgs,
}

#[derive(Serialize)]
struct IngestReport {
    hybrids: usize,
    snps: usize,
    snps_with_missing_calls: Vec<String>,
    environments: Vec<String>,
    observations: usize,
    weather_days: BTreeMap<String, usize>,
    missing_soil_cells: Vec<(String, String)>,
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let dataset = cfg.data.load()?;
    let (h, s) = dataset.genotypes.shape();
    let report = IngestReport {
        hybrids: h,
        snps: s,
        snps_with_missing_calls: dataset.genotypes.snps_with_missing_calls(),
        environments: dataset.env_ids(),
        observations: dataset.observations.len(),
        weather_days: dataset
            .weather_daily
            .iter()
            .map(|(k, v)| (k.clone(), v.len()))
            .collect(),
        missing_soil_cells: dataset.soil.missing_cells(),
    };
    // Windowing must succeed for every environment.
    dataset.weather_series()?;
    if let Some(out) = &cfg.output {
        fs::create_dir_all(out)?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?;
        fs::write(out.join("ingest_report.json"), json)?;
    }
    println!(
        "validated: {} hybrids, {} SNPs ({} with missing calls), {} environments, {} observations, {} missing soil cells",
        report.hybrids,
        report.snps,
        report.snps_with_missing_calls.len(),
        report.environments.len(),
        report.observations,
        report.missing_soil_cells.len()
    );
    Ok(())
}

// ---- select-snps --------------------------------------------------------------

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Features surviving the elimination stage
    #[arg(long)]
    rfe_target: Option<usize>,
    /// Final modeling set size
    #[arg(long)]
    target: Option<usize>,
}

fn cmd_select(args: SelectArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let out = require_out(&cfg)?;
    let dataset = cfg.data.load()?;
    let selection_cfg = SelectionConfig {
        rfe_target: args.rfe_target.unwrap_or(cfg.selection.rfe_target),
        mi_target: args.target.unwrap_or(cfg.model.snp_count),
        mi_bins: cfg.selection.mi_bins,
        ..SelectionConfig::default()
    };
    let observations = dataset.sorted_observations();
    let report = select_snps(&dataset.genotypes, &observations, &selection_cfg)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(out.join("selection.json"), json)?;
    fs::write(out.join("selection.tsv"), report.to_tsv())?;
    write_manifest(&out, "select-snps", cfg.seed.unwrap_or(0), &selection_cfg_summary(&selection_cfg))?;
    println!(
        "selected {} of {} SNPs (elimination target {}); chromosome spread: {:?}",
        report.selected.len(),
        dataset.genotypes.snps.len(),
        selection_cfg.rfe_target,
        report.per_chromosome
    );
    Ok(())
}

#[derive(Serialize)]
struct SelectionSummary {
    rfe_target: usize,
    mi_target: usize,
    mi_bins: usize,
}

fn selection_cfg_summary(cfg: &SelectionConfig) -> SelectionSummary {
    SelectionSummary {
        rfe_target: cfg.rfe_target,
        mi_target: cfg.mi_target,
        mi_bins: cfg.mi_bins,
    }
}

// ---- train --------------------------------------------------------------------

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonRunArgs,
    /// Model variant: full, no_ge or no_g
    #[arg(long)]
    variant: Option<String>,
    /// Split mode: environment or hybrid
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    /// Hybrid-split cluster count
    #[arg(long)]
    clusters: Option<usize>,
    /// Select SNPs once on the full dataset instead of per fold
    #[arg(long)]
    global_selection: bool,
    /// Disable fold-parallel execution
    #[arg(long)]
    serial: bool,
}

fn build_plan(dataset: &Dataset, cfg: &RunConfig, seed: u64) -> Result<SplitPlan> {
    let mode = SplitMode::parse(&cfg.split.mode)?;
    let observations = dataset.sorted_observations();
    match mode {
        SplitMode::Environment => {
            make_split(&observations, mode, None, cfg.split.clusters, cfg.split.folds, seed)
        }
        SplitMode::Hybrid => {
            // Cluster hybrids over the modeling SNP set, defined by a
            // whole-dataset selection pass.
            let sel = SelectionConfig {
                rfe_target: cfg.selection.rfe_target,
                mi_target: cfg.model.snp_count,
                mi_bins: cfg.selection.mi_bins,
                ..SelectionConfig::default()
            };
            let report = select_snps(&dataset.genotypes, &observations, &sel)?;
            let ids = report.selected_ids();
            make_split(
                &observations,
                mode,
                Some((&dataset.genotypes, &ids)),
                cfg.split.clusters,
                cfg.split.folds,
                seed,
            )
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    if let Some(v) = &args.variant {
        cfg.variant = Some(v.clone());
    }
    if let Some(s) = &args.split {
        cfg.split.mode = s.clone();
    }
    if let Some(f) = args.folds {
        cfg.split.folds = f;
    }
    if let Some(c) = args.clusters {
        cfg.split.clusters = c;
    }
    if args.global_selection {
        cfg.selection.global = true;
    }
    if args.serial {
        cfg.parallel = false;
    }
    if let Some(v) = &cfg.variant {
        cfg.model = cfg.model.clone().with_variant(Variant::parse(v)?);
    }
    let seed = require_seed(&cfg)?;
    let out = require_out(&cfg)?;
    cfg.model.validate()?;

    let dataset = cfg.data.load()?;
    let plan = build_plan(&dataset, &cfg, seed)?;
    let plan_json = serde_json::to_string_pretty(&plan).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(out.join("plan.json"), plan_json)?;

    let settings = CvSettings {
        model: cfg.model.clone(),
        selection: SelectionConfig {
            rfe_target: cfg.selection.rfe_target,
            mi_target: cfg.model.snp_count,
            mi_bins: cfg.selection.mi_bins,
            ..SelectionConfig::default()
        },
        schedule: cfg.training.clone(),
        seed,
        global_selection: cfg.selection.global,
        parallel: cfg.parallel,
    };
    let outcome = cross_validate(&dataset, &plan, &settings)?;

    for fold in &outcome.folds {
        let fold_dir = out.join(format!("fold{}", fold.fold));
        fs::create_dir_all(&fold_dir)?;
        let mut ckpt = Checkpoint::new(&cfg.model, &fold.params);
        ckpt.pipeline = Some(fold.pipeline.clone());
        ckpt.save(&fold_dir.join("checkpoint.json"))?;

        let mut history = String::from("epoch,train_mse,val_rmse\n");
        for e in &fold.metrics.history {
            history.push_str(&format!("{},{},{}\n", e.epoch, e.train_mse, e.val_rmse));
        }
        fs::write(fold_dir.join("history.csv"), history)?;

        let mut preds = String::from("env_id\thybrid_id\ttruth\tpred\n");
        for p in &fold.predictions {
            preds.push_str(&format!("{}\t{}\t{}\t{}\n", p.env_id, p.hybrid_id, p.truth, p.pred));
        }
        fs::write(fold_dir.join("predictions.tsv"), preds)?;

        if let Some(sel) = &fold.selection {
            let json = serde_json::to_string_pretty(sel).map_err(|e| Error::Data(e.to_string()))?;
            fs::write(fold_dir.join("selection.json"), json)?;
        }
    }
    if let Some(sel) = &outcome.global_selection {
        let json = serde_json::to_string_pretty(sel).map_err(|e| Error::Data(e.to_string()))?;
        fs::write(out.join("selection.json"), json)?;
    }

    fs::write(out.join("metrics.json"), outcome.report.to_json())?;
    fs::write(out.join("metrics.tsv"), outcome.report.to_tsv())?;
    write_manifest(&out, "train", seed, &cfg)?;
    print_report(&outcome.report);
    Ok(())
}

fn print_report(report: &MetricReport) {
    let pearson = report
        .mean_pearson
        .map(|m| format!("{m:.4} +/- {:.4}", report.std_pearson.unwrap_or(0.0)))
        .unwrap_or_else(|| "undefined".into());
    println!(
        "{} folds ({} split, {} variant): pearson {} | rmse {:.4} +/- {:.4}",
        report.folds.len(),
        report.split_mode,
        report.variant,
        pearson,
        report.mean_rmse,
        report.std_rmse
    );
}

// ---- evaluate -----------------------------------------------------------------

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// A run directory produced by `train`
    #[arg(long)]
    run: PathBuf,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let manifest_text = fs::read_to_string(args.run.join("manifest.json"))
        .map_err(|e| Error::Data(format!("cannot read manifest in run dir: {e}")))?;
    let manifest: serde_json::Value =
        serde_json::from_str(&manifest_text).map_err(|e| Error::Data(e.to_string()))?;
    let seed = manifest["seed"].as_u64().unwrap_or(0);
    let split_mode = manifest["config"]["split"]["mode"].as_str().unwrap_or("unknown").to_string();
    let variant = manifest["config"]["variant"].as_str().unwrap_or("full").to_string();

    let mut folds = Vec::new();
    let mut fold_idx = 0usize;
    loop {
        let fold_dir = args.run.join(format!("fold{fold_idx}"));
        if !fold_dir.exists() {
            break;
        }
        let preds_text = fs::read_to_string(fold_dir.join("predictions.tsv"))?;
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for line in preds_text.lines().skip(1) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Data(format!("malformed prediction row in fold {fold_idx}")));
            }
            truth.push(fields[2].parse::<f64>().map_err(|e| Error::Data(e.to_string()))?);
            pred.push(fields[3].parse::<f64>().map_err(|e| Error::Data(e.to_string()))?);
        }
        let m = evaluate(&pred, &truth)?;
        let mut history = Vec::new();
        if let Ok(h) = fs::read_to_string(fold_dir.join("history.csv")) {
            for line in h.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() == 3 {
                    history.push(crate::traineval::EpochStat {
                        epoch: f[0].parse().unwrap_or(0),
                        train_mse: f[1].parse().unwrap_or(f64::NAN),
                        val_rmse: f[2].parse().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        let best_epoch = history
            .iter()
            .min_by(|a, b| a.val_rmse.total_cmp(&b.val_rmse))
            .map(|e| e.epoch)
            .unwrap_or(0);
        folds.push(FoldMetrics {
            fold: fold_idx,
            pearson: m.pearson,
            rmse: m.rmse,
            best_epoch,
            history,
        });
        fold_idx += 1;
    }
    if folds.is_empty() {
        return Err(Error::Data("run directory contains no fold predictions".into()));
    }
    let report = MetricReport::from_folds(&split_mode, &variant, seed, folds);
    fs::write(args.run.join("evaluation.json"), report.to_json())?;
    fs::write(args.run.join("evaluation.tsv"), report.to_tsv())?;
    print_report(&report);
    Ok(())
}

// ---- predict ------------------------------------------------------------------

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let state = ckpt.pipeline.clone().ok_or_else(|| {
        Error::Data("checkpoint carries no pipeline state (scalers/SNP ids); cannot predict".into())
    })?;
    let dataset = Dataset::load_dir(&args.data)?;
    let observations = dataset.sorted_observations();
    let data = prepare_inference(&dataset, &observations, &state, &ckpt.config)?;
    let params = ckpt.params();
    let preds = data.predict_original_units(&data.test, &params, &ckpt.config, 64)?;
    let mut out = String::from("env_id\thybrid_id\tyield_true\tyield_pred\n");
    for (row, p) in data.test.iter().zip(&preds) {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", row.env, row.hybrid, row.y_raw, p));
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&args.out, out)?;
    let m = evaluate(&preds, &data.test.iter().map(|r| r.y_raw).collect::<Vec<_>>())?;
    let pearson = m.pearson.map(|r| format!("{r:.4}")).unwrap_or_else(|| "undefined".into());
    println!(
        "predicted {} observations: pearson {pearson}, rmse {:.4} -> {}",
        preds.len(),
        m.rmse,
        args.out.display()
    );
    Ok(())
}

// ---- export-attention ----------------------------------------------------------

#[derive(Args, Debug)]
struct AttentionArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Environment of the observation to trace (default: first observation)
    #[arg(long)]
    env: Option<String>,
    /// Hybrid of the observation to trace
    #[arg(long)]
    hybrid: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also render a best-effort SVG heatmap
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn cmd_export_attention(args: AttentionArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    if ckpt.config.no_g || ckpt.config.no_ge {
        return Err(Error::Config(format!(
            "variant {:?} has no attention weights to export",
            ckpt.config.variant().label()
        )));
    }
    let state = ckpt.pipeline.clone().ok_or_else(|| {
        Error::Data("checkpoint carries no pipeline state (scalers/SNP ids); cannot export".into())
    })?;
    let dataset = Dataset::load_dir(&args.data)?;
    let observations = dataset.sorted_observations();
    let chosen = observations
        .iter()
        .find(|o| {
            args.env.as_ref().is_none_or(|e| &o.env_id == e)
                && args.hybrid.as_ref().is_none_or(|h| &o.hybrid_id == h)
        })
        .ok_or_else(|| Error::Data("no observation matches the requested env/hybrid".into()))?
        .clone();
    let data = prepare_inference(&dataset, std::slice::from_ref(&chosen), &state, &ckpt.config)?;
    let params = ckpt.params();
    let batch = data.batch(&data.test, &ckpt.config, false)?;
    let fwd = model_forward(&batch, &params, &ckpt.config, Mode::Infer, None, true)?;
    let attention = fwd.attention.expect("full variant produces attention");
    let s = ckpt.config.snp_count;
    let t = ckpt.config.weather_seq_len();

    let mut csv = String::new();
    for i in 0..s {
        let row: Vec<String> = (0..t)
            .map(|j| attention.data()[i * t + j].to_string())
            .collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&args.out, csv)?;
    if let Some(svg_path) = &args.svg {
        fs::write(svg_path, attention_svg(attention.data(), s, t))?;
    }
    println!(
        "attention for {} / {}: {s} SNPs x {t} timesteps -> {}",
        chosen.env_id,
        chosen.hybrid_id,
        args.out.display()
    );
    Ok(())
}

/// Minimal heatmap: one rect per (SNP, timestep), darker means more weight.
fn attention_svg(values: &[f64], s: usize, t: usize) -> String {
    let cell = 12;
    let max = values.iter().copied().fold(f64::MIN, f64::max).max(1e-12);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n",
        t * cell,
        s * cell
    );
    for i in 0..s {
        for j in 0..t {
            let v = values[i * t + j] / max;
            let shade = (255.0 * (1.0 - v)).round() as u8;
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\"/>\n",
                j * cell,
                i * cell
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

// ---- entry point ---------------------------------------------------------------

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::SelectSnps(args) => cmd_select(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Predict(args) => cmd_predict(args),
        Command::ExportAttention(args) => cmd_export_attention(args),
    }
}

/// Process exit code for an error, per the documented category mapping.
pub fn exit_code(e: &Error) -> i32 {
    e.category().exit_code()
}

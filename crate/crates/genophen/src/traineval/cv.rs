//! Grouped cross-validation: per-fold selection, scaling, training and test
//! metrics, optionally fold-parallel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{prepare_fold, FoldData};
use super::metrics::{evaluate, FoldMetrics, MetricReport};
use super::split::SplitPlan;
use super::train::{train, TrainOutcome, TrainSchedule};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::model::{ModelConfig, ModelParams, PipelineState};
use crate::select::{select_snps, SelectionConfig, SelectionReport};

#[derive(Debug, Clone)]
pub struct CvSettings {
    pub model: ModelConfig,
    pub selection: SelectionConfig,
    pub schedule: TrainSchedule,
    pub seed: u64,
    /// Select SNPs once on the full dataset instead of per fold. Leaks
    /// selection across folds; kept for the single-pass protocol reading.
    pub global_selection: bool,
    pub parallel: bool,
}

/// One prediction row of a fold's test split, in original units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredRow {
    pub env_id: String,
    pub hybrid_id: String,
    pub truth: f64,
    pub pred: f64,
}

/// Everything a fold produces beyond its metrics.
#[derive(Debug)]
pub struct FoldArtifacts {
    pub fold: usize,
    pub selected_snps: Vec<String>,
    pub selection: Option<SelectionReport>,
    pub params: ModelParams,
    pub outcome_best_epoch: usize,
    pub predictions: Vec<PredRow>,
    pub metrics: FoldMetrics,
    /// Scalers and SNP ids a checkpoint needs for standalone inference.
    pub pipeline: PipelineState,
}

#[derive(Debug)]
pub struct CvOutcome {
    pub report: MetricReport,
    pub folds: Vec<FoldArtifacts>,
    pub global_selection: Option<SelectionReport>,
}

fn run_fold(
    dataset: &Dataset,
    observations: &[crate::ingest::Observation],
    plan: &SplitPlan,
    run: &super::split::RunSplit,
    settings: &CvSettings,
    global_ids: Option<&[String]>,
) -> Result<FoldArtifacts> {
    let fold = run.run;
    let label = format!("fold{fold}");
    let (train_idx, val_idx, test_idx) = plan.split_observations(observations, run)?;

    let (ids, selection) = match global_ids {
        Some(ids) => (ids.to_vec(), None),
        None => {
            let train_obs: Vec<_> = train_idx.iter().map(|&i| observations[i].clone()).collect();
            let mut sel_cfg = settings.selection.clone();
            sel_cfg.mi_target = settings.model.snp_count;
            let report = select_snps(&dataset.genotypes, &train_obs, &sel_cfg)?;
            (report.selected_ids(), Some(report))
        }
    };

    let data: FoldData = prepare_fold(
        dataset,
        observations,
        &train_idx,
        &val_idx,
        &test_idx,
        &ids,
        &settings.model,
        &label,
    )?;
    // Leakage guard: the scaler must have been fitted on this fold's train split.
    data.y_scaler.check_fit_set(&format!("{label}_train"))?;

    let TrainOutcome {
        params,
        history,
        best_epoch,
    } = train(&data, &settings.model, &settings.schedule, settings.seed, &label)?;

    let preds = data.predict_original_units(&data.test, &params, &settings.model, settings.schedule.batch_size)?;
    let truth: Vec<f64> = data.test.iter().map(|r| r.y_raw).collect();
    let m = evaluate(&preds, &truth)?;

    let predictions = data
        .test
        .iter()
        .zip(&preds)
        .map(|(r, &p)| PredRow {
            env_id: r.env.clone(),
            hybrid_id: r.hybrid.clone(),
            truth: r.y_raw,
            pred: p,
        })
        .collect();

    Ok(FoldArtifacts {
        fold,
        selected_snps: ids,
        selection,
        params,
        outcome_best_epoch: best_epoch,
        predictions,
        metrics: FoldMetrics {
            fold,
            pearson: m.pearson,
            rmse: m.rmse,
            best_epoch,
            history,
        },
        pipeline: PipelineState {
            snp_ids: data.snp_ids.clone(),
            weather_scaler: data.weather_scaler.clone(),
            soil_scaler: data.soil_scaler.clone(),
            mgmt_scaler: data.mgmt_scaler.clone(),
            y_scaler: data.y_scaler.clone(),
        },
    })
}

/// Run every rotation of the plan. Results are identical whether folds run
/// serially or in parallel: each fold draws only from streams labeled by its
/// fold id and the outputs are reduced in fold order.
pub fn cross_validate(dataset: &Dataset, plan: &SplitPlan, settings: &CvSettings) -> Result<CvOutcome> {
    settings.model.validate()?;
    let observations = dataset.sorted_observations();

    let global = if settings.global_selection {
        let mut sel_cfg = settings.selection.clone();
        sel_cfg.mi_target = settings.model.snp_count;
        Some(select_snps(&dataset.genotypes, &observations, &sel_cfg)?)
    } else {
        None
    };
    let global_ids = global.as_ref().map(|g| g.selected_ids());

    let runs = plan.runs();
    let fold_results: Vec<Result<FoldArtifacts>> = if settings.parallel {
        runs.par_iter()
            .map(|run| {
                run_fold(dataset, &observations, plan, run, settings, global_ids.as_deref())
                    .map_err(|e| Error::Data(format!("fold {} failed: {e}", run.run)))
            })
            .collect()
    } else {
        runs.iter()
            .map(|run| {
                run_fold(dataset, &observations, plan, run, settings, global_ids.as_deref())
                    .map_err(|e| Error::Data(format!("fold {} failed: {e}", run.run)))
            })
            .collect()
    };
    let mut folds: Vec<FoldArtifacts> = fold_results.into_iter().collect::<Result<_>>()?;
    folds.sort_by_key(|f| f.fold);

    let report = MetricReport::from_folds(
        plan.mode.label(),
        settings.model.variant().label(),
        settings.seed,
        folds.iter().map(|f| f.metrics.clone()).collect(),
    );
    Ok(CvOutcome {
        report,
        folds,
        global_selection: global,
    })
}

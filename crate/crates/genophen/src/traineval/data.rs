//! Per-fold data preparation: SNP encoding caches, imputation and scaling
//! fitted on the fold's training split only, and batch assembly.

use std::collections::{BTreeMap, BTreeSet};

use crate::encode::build_context_matrix;
use crate::error::{Error, Result};
use crate::ingest::{Dataset, Observation, SnpDescriptor, StandardScaler, WEATHER_CHANNELS, WEATHER_STEPS};
use crate::model::forward::{pack_encoded, positional_code_matrix};
use crate::model::{model_forward, Mode, ModelBatch, ModelConfig, ModelParams};
use crate::numcore::Tensor;

/// One observation bound to its fold split, with raw and standardized yield.
#[derive(Debug, Clone)]
pub struct ObsRow {
    pub hybrid: String,
    pub env: String,
    pub y_raw: f64,
    pub y_scaled: f64,
}

/// Everything a training run needs for one fold.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub label: String,
    pub snp_ids: Vec<String>,
    pub descriptors: Vec<SnpDescriptor>,
    pub pos: Tensor,
    /// hybrid -> encoded `[S * 4 * cols]` buffer.
    pub geno_cache: BTreeMap<String, Vec<f64>>,
    /// env -> scaled `[9 * 43]` windowed weather.
    pub weather: BTreeMap<String, Vec<f64>>,
    pub soil: BTreeMap<String, Vec<f64>>,
    pub mgmt: BTreeMap<String, Vec<f64>>,
    pub train: Vec<ObsRow>,
    pub val: Vec<ObsRow>,
    pub test: Vec<ObsRow>,
    pub y_scaler: StandardScaler,
    pub weather_scaler: StandardScaler,
    pub soil_scaler: StandardScaler,
    pub mgmt_scaler: StandardScaler,
    /// Soil cells filled from training means, `(env, feature)`.
    pub imputed_soil: Vec<(String, String)>,
}

/// Assemble fold data. Scalers and imputation are fitted on the training
/// indices only; the fit-set id is `"{label}_train"`.
pub fn prepare_fold(
    dataset: &Dataset,
    observations: &[Observation],
    train_idx: &[usize],
    val_idx: &[usize],
    test_idx: &[usize],
    snp_ids: &[String],
    config: &ModelConfig,
    label: &str,
) -> Result<FoldData> {
    if train_idx.is_empty() || val_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Data(format!(
            "fold {label}: empty split (train {}, val {}, test {})",
            train_idx.len(),
            val_idx.len(),
            test_idx.len()
        )));
    }
    if config.weather_steps != WEATHER_STEPS {
        return Err(Error::Config(format!(
            "real data pipelines require weather_steps = {WEATHER_STEPS}, config has {}",
            config.weather_steps
        )));
    }
    if snp_ids.len() != config.snp_count {
        return Err(Error::Config(format!(
            "{} modeling SNPs for a config expecting {}",
            snp_ids.len(),
            config.snp_count
        )));
    }
    let fit_set = format!("{label}_train");

    // Genotype encodings for every hybrid that appears in the observations.
    let table = dataset.genotypes.subset(snp_ids)?;
    let hybrid_index = table.hybrid_index();
    let hybrids: BTreeSet<&str> = observations.iter().map(|o| o.hybrid_id.as_str()).collect();
    let mut geno_cache = BTreeMap::new();
    for h in hybrids {
        let &i = hybrid_index
            .get(h)
            .ok_or_else(|| Error::Data(format!("hybrid {h:?} missing from genotype table")))?;
        let encoded: Result<Vec<_>> = table
            .snps
            .iter()
            .enumerate()
            .map(|(j, d)| build_context_matrix(d, table.call(i, j)))
            .collect();
        geno_cache.insert(h.to_string(), pack_encoded(&encoded?, config)?.into_data());
    }
    let pos = positional_code_matrix(&table.snps, config.embed_dim())?;

    let train_envs: BTreeSet<String> = train_idx
        .iter()
        .map(|&i| observations[i].env_id.clone())
        .collect();

    // Weather: window, then per-channel standard scaling on training
    // environments (each channel is one feature, pooled over timesteps).
    let series = dataset.weather_series()?;
    let channel_names: Vec<String> = WEATHER_CHANNELS.iter().map(|s| s.to_string()).collect();
    let mut fit_rows: Vec<[f64; 9]> = Vec::new();
    for env in &train_envs {
        let s = series
            .get(env)
            .ok_or_else(|| Error::Data(format!("no weather for environment {env:?}")))?;
        for t in 0..WEATHER_STEPS {
            let mut row = [0.0; 9];
            for (c, slot) in row.iter_mut().enumerate() {
                *slot = s.channel(c)[t];
            }
            fit_rows.push(row);
        }
    }
    let weather_scaler = StandardScaler::fit(
        &channel_names,
        fit_rows.iter().map(|r| r.as_slice()),
        &fit_set,
    )?;
    let mut weather = BTreeMap::new();
    for (env, s) in &series {
        let mut values = s.values().to_vec();
        for t in 0..WEATHER_STEPS {
            for c in 0..9 {
                values[c * WEATHER_STEPS + t] =
                    (values[c * WEATHER_STEPS + t] - weather_scaler.means[c]) / weather_scaler.stds[c];
            }
        }
        weather.insert(env.clone(), values);
    }

    // Soil: impute missing cells from training environments, then scale.
    let mut soil_table = dataset.soil.clone();
    let imputed_soil = soil_table.impute_from(&train_envs)?;
    let soil_scaler = StandardScaler::fit(
        &soil_table.names,
        soil_table
            .rows
            .iter()
            .filter(|(env, _)| train_envs.contains(*env))
            .map(|(_, row)| row.as_slice()),
        &fit_set,
    )?;
    let mut soil = BTreeMap::new();
    for (env, row) in &soil_table.rows {
        let mut r = row.clone();
        soil_scaler.transform_row(&mut r);
        soil.insert(env.clone(), r);
    }

    let mgmt_scaler = StandardScaler::fit(
        &dataset.management.names,
        dataset
            .management
            .rows
            .iter()
            .filter(|(env, _)| train_envs.contains(*env))
            .map(|(_, row)| row.as_slice()),
        &fit_set,
    )?;
    let mut mgmt = BTreeMap::new();
    for (env, row) in &dataset.management.rows {
        let mut r = row.clone();
        mgmt_scaler.transform_row(&mut r);
        mgmt.insert(env.clone(), r);
    }

    // Target standardization on the training split.
    let train_y: Vec<f64> = train_idx.iter().map(|&i| observations[i].yield_value).collect();
    let y_scaler = StandardScaler::fit_single("yield", &train_y, &fit_set)?;

    let rows = |idx: &[usize]| -> Vec<ObsRow> {
        idx.iter()
            .map(|&i| {
                let o = &observations[i];
                ObsRow {
                    hybrid: o.hybrid_id.clone(),
                    env: o.env_id.clone(),
                    y_raw: o.yield_value,
                    y_scaled: y_scaler.transform_value(o.yield_value),
                }
            })
            .collect()
    };

    Ok(FoldData {
        label: label.to_string(),
        snp_ids: snp_ids.to_vec(),
        descriptors: table.snps.clone(),
        pos,
        geno_cache,
        weather,
        soil,
        mgmt,
        train: rows(train_idx),
        val: rows(val_idx),
        test: rows(test_idx),
        y_scaler,
        weather_scaler,
        soil_scaler,
        mgmt_scaler,
        imputed_soil,
    })
}

/// Assemble inference-time data with the scalers a checkpoint was trained
/// with; nothing is refitted. All observations land in `test` with their
/// true yields kept for reporting. Missing soil cells are filled with the
/// stored training means.
pub fn prepare_inference(
    dataset: &Dataset,
    observations: &[Observation],
    state: &crate::model::PipelineState,
    config: &ModelConfig,
) -> Result<FoldData> {
    if observations.is_empty() {
        return Err(Error::Data("no observations to predict".into()));
    }
    if config.weather_steps != WEATHER_STEPS {
        return Err(Error::Config(format!(
            "real data pipelines require weather_steps = {WEATHER_STEPS}, config has {}",
            config.weather_steps
        )));
    }
    if state.snp_ids.len() != config.snp_count {
        return Err(Error::Data(format!(
            "checkpoint pipeline has {} SNPs, config expects {}",
            state.snp_ids.len(),
            config.snp_count
        )));
    }

    let table = dataset.genotypes.subset(&state.snp_ids)?;
    let hybrid_index = table.hybrid_index();
    let hybrids: BTreeSet<&str> = observations.iter().map(|o| o.hybrid_id.as_str()).collect();
    let mut geno_cache = BTreeMap::new();
    for h in hybrids {
        let &i = hybrid_index
            .get(h)
            .ok_or_else(|| Error::Data(format!("hybrid {h:?} missing from genotype table")))?;
        let encoded: Result<Vec<_>> = table
            .snps
            .iter()
            .enumerate()
            .map(|(j, d)| build_context_matrix(d, table.call(i, j)))
            .collect();
        geno_cache.insert(h.to_string(), pack_encoded(&encoded?, config)?.into_data());
    }
    let pos = positional_code_matrix(&table.snps, config.embed_dim())?;

    let series = dataset.weather_series()?;
    let mut weather = BTreeMap::new();
    for (env, s) in &series {
        let mut values = s.values().to_vec();
        for t in 0..WEATHER_STEPS {
            for c in 0..9 {
                values[c * WEATHER_STEPS + t] = (values[c * WEATHER_STEPS + t]
                    - state.weather_scaler.means[c])
                    / state.weather_scaler.stds[c];
            }
        }
        weather.insert(env.clone(), values);
    }

    let mut soil = BTreeMap::new();
    for (env, row) in &dataset.soil.rows {
        let mut r = row.clone();
        for (j, v) in r.iter_mut().enumerate() {
            if v.is_nan() {
                *v = state.soil_scaler.means[j];
            }
        }
        state.soil_scaler.transform_row(&mut r);
        soil.insert(env.clone(), r);
    }
    let mut mgmt = BTreeMap::new();
    for (env, row) in &dataset.management.rows {
        let mut r = row.clone();
        state.mgmt_scaler.transform_row(&mut r);
        mgmt.insert(env.clone(), r);
    }

    let test: Vec<ObsRow> = observations
        .iter()
        .map(|o| ObsRow {
            hybrid: o.hybrid_id.clone(),
            env: o.env_id.clone(),
            y_raw: o.yield_value,
            y_scaled: state.y_scaler.transform_value(o.yield_value),
        })
        .collect();

    Ok(FoldData {
        label: "inference".into(),
        snp_ids: state.snp_ids.clone(),
        descriptors: table.snps.clone(),
        pos,
        geno_cache,
        weather,
        soil,
        mgmt,
        train: Vec::new(),
        val: Vec::new(),
        test,
        y_scaler: state.y_scaler.clone(),
        weather_scaler: state.weather_scaler.clone(),
        soil_scaler: state.soil_scaler.clone(),
        mgmt_scaler: state.mgmt_scaler.clone(),
        imputed_soil: Vec::new(),
    })
}

impl FoldData {
    /// Gather a batch of rows into model tensors.
    pub fn batch(&self, rows: &[ObsRow], config: &ModelConfig, with_target: bool) -> Result<ModelBatch> {
        let b = rows.len();
        if b == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        let (geno, pos) = if config.no_g {
            (None, None)
        } else {
            let cols = config.context_cols();
            let per = config.snp_count * 4 * cols;
            let mut data = Vec::with_capacity(b * per);
            for r in rows {
                let enc = self
                    .geno_cache
                    .get(&r.hybrid)
                    .ok_or_else(|| Error::Data(format!("no encoding for hybrid {:?}", r.hybrid)))?;
                data.extend_from_slice(enc);
            }
            (
                Some(Tensor::new(vec![b * config.snp_count, 4, cols], data)?),
                Some(self.pos.clone()),
            )
        };
        let mut weather = Vec::with_capacity(b * 9 * config.weather_steps);
        let mut soil = Vec::with_capacity(b * self.soil_scaler.features.len());
        let mut mgmt = Vec::with_capacity(b * self.mgmt_scaler.features.len());
        for r in rows {
            weather.extend_from_slice(
                self.weather
                    .get(&r.env)
                    .ok_or_else(|| Error::Data(format!("no weather for environment {:?}", r.env)))?,
            );
            soil.extend_from_slice(
                self.soil
                    .get(&r.env)
                    .ok_or_else(|| Error::Data(format!("no soil for environment {:?}", r.env)))?,
            );
            mgmt.extend_from_slice(
                self.mgmt
                    .get(&r.env)
                    .ok_or_else(|| Error::Data(format!("no management for environment {:?}", r.env)))?,
            );
        }
        Ok(ModelBatch {
            batch: b,
            geno,
            pos,
            weather: Tensor::new(vec![b, 9, config.weather_steps], weather)?,
            soil: Tensor::new(vec![b, config.soil_features], soil)?,
            mgmt: Tensor::new(vec![b, config.mgmt_features], mgmt)?,
            target: if with_target {
                Some(Tensor::from_vec(rows.iter().map(|r| r.y_scaled).collect()))
            } else {
                None
            },
        })
    }

    /// Standardized predictions for a row set, in chunks of `batch_size`.
    pub fn predict(
        &self,
        rows: &[ObsRow],
        params: &ModelParams,
        config: &ModelConfig,
        batch_size: usize,
    ) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(batch_size.max(1)) {
            let batch = self.batch(chunk, config, false)?;
            let fwd = model_forward(&batch, params, config, Mode::Infer, None, false)?;
            out.extend_from_slice(fwd.predictions.data());
        }
        Ok(out)
    }

    /// Predictions mapped back to original yield units.
    pub fn predict_original_units(
        &self,
        rows: &[ObsRow],
        params: &ModelParams,
        config: &ModelConfig,
        batch_size: usize,
    ) -> Result<Vec<f64>> {
        Ok(self
            .predict(rows, params, config, batch_size)?
            .into_iter()
            .map(|p| self.y_scaler.inverse_value(p))
            .collect())
    }
}

//! Forward pass of the fusion network, recorded on a tape.
//!
//! Per SNP, the genome branch convolves the 4 x (2w+1) context with shared
//! kernels of each configured length, ReLU + max-pools each to `filters`
//! values, concatenates them and adds the positional code. The weather
//! branch stacks valid 1-D convolutions over the 9 x steps series. Unless
//! ablated, each SNP embedding queries the weather sequence through scaled
//! dot-product attention (keys are a learned projection, values are the raw
//! sequence vectors); a dense layer maps the attended context back to the
//! SNP dimension and is added to the embedding as a residual. An elementwise
//! max over the SNP axis yields the genome vector, which is concatenated
//! with max-pooled weather, soil and management embeddings and fused by an
//! MLP with ReLU and dropout into the scalar prediction.
//!
//! Any non-finite intermediate aborts with the first offending stage named.

use std::collections::BTreeMap;

use crate::encode::{positional_code, EncodedSnp};
use crate::error::{Error, Result};
use crate::ingest::SnpDescriptor;
use crate::numcore::{RngStream, Tape, Tensor, ValueId};
use crate::numcore::ops::dropout_mask;

use super::{ModelConfig, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// One batch of model inputs (row-major, batch index outermost).
#[derive(Debug, Clone)]
pub struct ModelBatch {
    pub batch: usize,
    /// `[batch * snp_count, 4, 2w+1]`; `None` for the no_g variant.
    pub geno: Option<Tensor>,
    /// `[snp_count, d]` positional codes; `None` for the no_g variant.
    pub pos: Option<Tensor>,
    /// `[batch, 9, weather_steps]`
    pub weather: Tensor,
    /// `[batch, soil_features]`
    pub soil: Tensor,
    /// `[batch, mgmt_features]`
    pub mgmt: Tensor,
    /// `[batch]` standardized target; optional for pure inference.
    pub target: Option<Tensor>,
}

impl ModelBatch {
    fn validate(&self, config: &ModelConfig) -> Result<()> {
        let b = self.batch;
        if b == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if !config.no_g {
            let geno = self
                .geno
                .as_ref()
                .ok_or_else(|| Error::Shape("genotype tensor missing".into()))?;
            let want = [b * config.snp_count, 4, config.context_cols()];
            if geno.shape() != want {
                return Err(Error::Shape(format!(
                    "genotype tensor {:?}, config expects {want:?}",
                    geno.shape()
                )));
            }
            let pos = self
                .pos
                .as_ref()
                .ok_or_else(|| Error::Shape("positional codes missing".into()))?;
            let want = [config.snp_count, config.embed_dim()];
            if pos.shape() != want {
                return Err(Error::Shape(format!(
                    "positional codes {:?}, config expects {want:?}",
                    pos.shape()
                )));
            }
        }
        let want = [b, 9, config.weather_steps];
        if self.weather.shape() != want {
            return Err(Error::Shape(format!(
                "weather tensor {:?}, config expects {want:?}",
                self.weather.shape()
            )));
        }
        if self.soil.shape() != [b, config.soil_features] {
            return Err(Error::Shape(format!(
                "soil tensor {:?}, config expects [{b}, {}]",
                self.soil.shape(),
                config.soil_features
            )));
        }
        if self.mgmt.shape() != [b, config.mgmt_features] {
            return Err(Error::Shape(format!(
                "management tensor {:?}, config expects [{b}, {}]",
                self.mgmt.shape(),
                config.mgmt_features
            )));
        }
        if let Some(t) = &self.target {
            if t.shape() != [b] {
                return Err(Error::Shape(format!(
                    "target tensor {:?}, expected [{b}]",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// A finished forward pass; the tape is kept for `backward`.
#[derive(Debug)]
pub struct Forward {
    pub tape: Tape,
    pub pred_node: ValueId,
    pub predictions: Tensor,
    pub loss_node: Option<ValueId>,
    /// `[batch, snp_count, T']` attention weights when requested.
    pub attention: Option<Tensor>,
}

impl Forward {
    pub fn loss_value(&self) -> Option<f64> {
        self.loss_node.map(|l| self.tape.value(l).item().expect("scalar loss"))
    }
}

struct Bound(BTreeMap<String, ValueId>);

impl Bound {
    fn bind(tape: &mut Tape, params: &ModelParams) -> Result<Bound> {
        let mut map = BTreeMap::new();
        for (name, tensor) in &params.tensors {
            map.insert(name.clone(), tape.param(name, tensor.clone())?);
        }
        Ok(Bound(map))
    }

    fn get(&self, name: &str) -> Result<ValueId> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::Shape(format!("parameter {name:?} not bound")))
    }
}

fn check_stage(tape: &Tape, id: ValueId, stage: &str) -> Result<()> {
    tape.value(id).check_finite(stage)
}

/// Genome branch: shared convolutions per kernel length, ReLU, max-pool over
/// time, concatenation, plus positional codes. `geno` is `[N, 4, cols]` and
/// `pos` is `[S, d]` with `S` dividing `N`.
fn genome_branch(
    tape: &mut Tape,
    bound: &Bound,
    config: &ModelConfig,
    geno: ValueId,
    pos: ValueId,
) -> Result<ValueId> {
    let mut pooled = Vec::with_capacity(config.kernel_lengths.len());
    for &k in &config.kernel_lengths {
        let kernel = bound.get(&format!("genome/conv{k}/kernel"))?;
        let bias = bound.get(&format!("genome/conv{k}/bias"))?;
        let conv = tape.conv1d(geno, kernel, bias)?;
        let act = tape.relu(conv);
        pooled.push(tape.maxpool_time(act)?);
    }
    let emb = tape.concat_cols(&pooled)?;
    check_stage(tape, emb, "genome convolution stack")?;
    let with_pos = tape.add_tiled_rows(emb, pos)?;
    check_stage(tape, with_pos, "positional code addition")?;
    Ok(with_pos)
}

/// Weather branch: stacked valid convolutions with ReLU, then a max-pool
/// over time. Returns the embedding sequence `[B, d_w, T']` and the pooled
/// vector `[B, d_w]`.
fn weather_branch(
    tape: &mut Tape,
    bound: &Bound,
    config: &ModelConfig,
    weather: ValueId,
) -> Result<(ValueId, ValueId)> {
    let mut x = weather;
    for i in 0..config.weather_conv.len() {
        let kernel = bound.get(&format!("weather/conv{i}/kernel"))?;
        let bias = bound.get(&format!("weather/conv{i}/bias"))?;
        let conv = tape.conv1d(x, kernel, bias)?;
        x = tape.relu(conv);
        check_stage(tape, x, &format!("weather convolution {i}"))?;
    }
    let pooled = tape.maxpool_time(x)?;
    Ok((x, pooled))
}

/// Cross-attention of SNP embeddings over the weather sequence. `emb` is
/// `[B*S, d]`, `seq` is `[B, d_w, T']`. Returns the dense-mapped attended
/// context `[B*S, d]` and the attention weights `[B, S, T']`.
fn attention_branch(
    tape: &mut Tape,
    bound: &Bound,
    config: &ModelConfig,
    emb: ValueId,
    seq: ValueId,
    batch: usize,
) -> Result<(ValueId, ValueId)> {
    let d = config.embed_dim();
    let dw = config.weather_embed_dim();
    let t = config.weather_seq_len();
    let s = config.snp_count;

    let ys = tape.transpose_last2(seq)?; // [B, T', d_w]
    let ys_flat = tape.reshape(ys, vec![batch * t, dw])?;
    let key_w = bound.get("attn/key/weight")?;
    let keys_flat = tape.dense(ys_flat, key_w, None)?; // [B*T', d]
    let keys = tape.reshape(keys_flat, vec![batch, t, d])?;
    let queries = tape.reshape(emb, vec![batch, s, d])?;
    let scores = tape.bmm_nt(queries, keys)?; // [B, S, T']
    let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt());
    check_stage(tape, scaled, "attention scores")?;
    let alpha = tape.softmax_last(scaled)?;
    check_stage(tape, alpha, "attention weights")?;
    let context = tape.bmm_nn(alpha, ys)?; // [B, S, d_w]
    let context_flat = tape.reshape(context, vec![batch * s, dw])?;
    let out_w = bound.get("attn/out/weight")?;
    let out_b = bound.get("attn/out/bias")?;
    let ge = tape.dense(context_flat, out_w, Some(out_b))?;
    check_stage(tape, ge, "attention output projection")?;
    Ok((ge, alpha))
}

/// Dense + ReLU chain used for the soil and management branches.
fn mlp_branch(
    tape: &mut Tape,
    bound: &Bound,
    prefix: &str,
    n_layers: usize,
    mut x: ValueId,
) -> Result<ValueId> {
    for i in 0..n_layers {
        let w = bound.get(&format!("{prefix}/dense{i}/weight"))?;
        let b = bound.get(&format!("{prefix}/dense{i}/bias"))?;
        let y = tape.dense(x, w, Some(b))?;
        x = tape.relu(y);
    }
    check_stage(tape, x, &format!("{prefix} mlp"))?;
    Ok(x)
}

/// Run the full network on one batch.
///
/// In train mode with a dropout stream, fusion activations are dropped with
/// inverted scaling; inference is deterministic and dropout-free. Attention
/// weights are returned when `want_attention` is set (full variant only).
pub fn model_forward(
    batch: &ModelBatch,
    params: &ModelParams,
    config: &ModelConfig,
    mode: Mode,
    mut dropout_rng: Option<&mut RngStream>,
    want_attention: bool,
) -> Result<Forward> {
    config.validate()?;
    params.check_shapes(config)?;
    batch.validate(config)?;

    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, params)?;
    let b = batch.batch;

    let weather = tape.input(batch.weather.clone());
    let (seq, weather_pooled) = weather_branch(&mut tape, &bound, config, weather)?;

    let mut attention = None;
    let genome_vec = if config.no_g {
        None
    } else {
        let geno = tape.input(batch.geno.clone().expect("validated"));
        let pos = tape.input(batch.pos.clone().expect("validated"));
        let emb = genome_branch(&mut tape, &bound, config, geno, pos)?;
        let augmented = if config.no_ge {
            emb
        } else {
            let (ge, alpha) = attention_branch(&mut tape, &bound, config, emb, seq, b)?;
            if want_attention {
                attention = Some(tape.value(alpha).clone());
            }
            tape.add(emb, ge)?
        };
        let pooled = tape.maxpool_rows(augmented, config.snp_count)?;
        check_stage(&tape, pooled, "genome vector")?;
        Some(pooled)
    };

    let soil_in = tape.input(batch.soil.clone());
    let soil_out = mlp_branch(&mut tape, &bound, "soil", config.soil_dims.len(), soil_in)?;
    let mgmt_in = tape.input(batch.mgmt.clone());
    let mgmt_out = mlp_branch(&mut tape, &bound, "mgmt", config.mgmt_dims.len(), mgmt_in)?;

    let mut parts = Vec::new();
    if let Some(g) = genome_vec {
        parts.push(g);
    }
    parts.extend([weather_pooled, soil_out, mgmt_out]);
    let mut x = tape.concat_cols(&parts)?;

    for i in 0..config.fusion_dims.len() {
        let w = bound.get(&format!("fusion/dense{i}/weight"))?;
        let bias = bound.get(&format!("fusion/dense{i}/bias"))?;
        let y = tape.dense(x, w, Some(bias))?;
        x = tape.relu(y);
        if mode == Mode::Train && config.dropout > 0.0 {
            if let Some(rng) = dropout_rng.as_deref_mut() {
                let mask = dropout_mask(tape.value(x).len(), config.dropout, rng, true);
                x = tape.dropout(x, mask)?;
            }
        }
        check_stage(&tape, x, &format!("fusion dense {i}"))?;
    }
    let out_w = bound.get("fusion/out/weight")?;
    let out_b = bound.get("fusion/out/bias")?;
    let out = tape.dense(x, out_w, Some(out_b))?; // [B, 1]
    let pred_node = tape.reshape(out, vec![b])?;
    check_stage(&tape, pred_node, "prediction")?;

    let loss_node = match &batch.target {
        Some(target) => {
            let t = tape.input(target.clone());
            let loss = tape.mse(pred_node, t)?;
            check_stage(&tape, loss, "loss")?;
            Some(loss)
        }
        None => None,
    };

    let predictions = tape.value(pred_node).clone();
    Ok(Forward {
        tape,
        pred_node,
        predictions,
        loss_node,
        attention,
    })
}

/// Positional codes for a descriptor list as an `[S, d]` tensor.
pub fn positional_code_matrix(descriptors: &[SnpDescriptor], d: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(descriptors.len() * d);
    for desc in descriptors {
        data.extend(positional_code(desc.chromosome, desc.position, d)?);
    }
    Tensor::new(vec![descriptors.len(), d], data)
}

/// Pack encoded SNPs of one genotype into a `[S, 4, cols]` tensor.
pub fn pack_encoded(encoded: &[EncodedSnp], config: &ModelConfig) -> Result<Tensor> {
    let cols = config.context_cols();
    let mut data = Vec::with_capacity(encoded.len() * 4 * cols);
    for e in encoded {
        if e.width() != cols {
            return Err(Error::Shape(format!(
                "encoded SNP has width {}, config expects {cols}",
                e.width()
            )));
        }
        data.extend_from_slice(e.data());
    }
    Tensor::new(vec![encoded.len(), 4, cols], data)
}

/// SNP embeddings for one genotype: convolution stack plus positional codes.
/// Returns `[S, d]`.
pub fn genome_forward(
    encoded: &[EncodedSnp],
    descriptors: &[SnpDescriptor],
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Tensor> {
    if encoded.len() != descriptors.len() || encoded.len() != config.snp_count {
        return Err(Error::Shape(format!(
            "{} encoded SNPs, {} descriptors, config expects {}",
            encoded.len(),
            descriptors.len(),
            config.snp_count
        )));
    }
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, params)?;
    let geno = tape.input(pack_encoded(encoded, config)?);
    let pos = tape.input(positional_code_matrix(descriptors, config.embed_dim())?);
    let emb = genome_branch(&mut tape, &bound, config, geno, pos)?;
    Ok(tape.value(emb).clone())
}

/// Weather embedding sequence (`[T', d_w]`) and pooled vector (`[d_w]`) for
/// one 9 x steps series.
pub fn weather_forward(
    series: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(Tensor, Tensor)> {
    if series.shape() != [9, config.weather_steps] {
        return Err(Error::Shape(format!(
            "weather series {:?}, config expects [9, {}]",
            series.shape(),
            config.weather_steps
        )));
    }
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, params)?;
    let weather = tape.input(series.reshape(vec![1, 9, config.weather_steps])?);
    let (seq, pooled) = weather_branch(&mut tape, &bound, config, weather)?;
    let t = config.weather_seq_len();
    let dw = config.weather_embed_dim();
    let seq3 = tape.transpose_last2(seq)?;
    let seq_out = tape.value(seq3).reshape(vec![t, dw])?;
    let pooled_out = tape.value(pooled).reshape(vec![dw])?;
    Ok((seq_out, pooled_out))
}

/// Single-query cross-attention: the G*E embedding (`[d]`) for one SNP
/// embedding `x` against a weather sequence `ys` (`[T', d_w]`), plus the
/// attention weights (`[T']`).
pub fn cross_attention(
    x: &Tensor,
    ys: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(Tensor, Tensor)> {
    let d = config.embed_dim();
    let dw = config.weather_embed_dim();
    let [t, ys_dw] = ys.shape() else {
        return Err(Error::Shape(format!(
            "weather sequence must be [T', d_w], got {:?}",
            ys.shape()
        )));
    };
    if x.shape() != [d] || *ys_dw != dw {
        return Err(Error::Shape(format!(
            "cross_attention shapes: x {:?} (want [{d}]), ys {:?} (want [T', {dw}])",
            x.shape(),
            ys.shape()
        )));
    }
    if *t == 0 {
        return Err(Error::Shape("empty weather sequence".into()));
    }
    let t = *t;

    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, params)?;
    let ys_flat = tape.input(ys.clone());
    let key_w = bound.get("attn/key/weight")?;
    let keys = tape.dense(ys_flat, key_w, None)?; // [T', d]
    let keys3 = tape.reshape(keys, vec![1, t, d])?;
    let query = tape.input(x.reshape(vec![1, 1, d])?);
    let scores = tape.bmm_nt(query, keys3)?;
    let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let alpha = tape.softmax_last(scaled)?;
    let ys3 = tape.reshape(ys_flat, vec![1, t, dw])?;
    let context = tape.bmm_nn(alpha, ys3)?;
    let context_flat = tape.reshape(context, vec![1, dw])?;
    let out_w = bound.get("attn/out/weight")?;
    let out_b = bound.get("attn/out/bias")?;
    let ge = tape.dense(context_flat, out_w, Some(out_b))?;
    Ok((
        tape.value(ge).reshape(vec![d])?,
        tape.value(alpha).reshape(vec![t])?,
    ))
}

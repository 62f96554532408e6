//! Trainable weights: shape layout, seeded initialization and checkpoints.
//!
//! Every tensor lives in a name-keyed map; the shapes are derivable from the
//! config alone, so checkpoints can be validated structurally before use.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::numcore::rng::fnv1a64;
use crate::numcore::{RngStream, Tensor};

/// All trainable weights of the five sub-networks plus the fusion head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tensors: BTreeMap<String, Tensor>,
}

/// Shape table for a config: name -> (shape, fan_in).
fn shape_table(config: &ModelConfig) -> Vec<(String, Vec<usize>, usize)> {
    let d = config.embed_dim();
    let dw = config.weather_embed_dim();
    let mut out = Vec::new();

    if !config.no_g {
        for &k in &config.kernel_lengths {
            let fan = 4 * k;
            out.push((format!("genome/conv{k}/kernel"), vec![config.filters, 4, k], fan));
            out.push((format!("genome/conv{k}/bias"), vec![config.filters], fan));
        }
        // Attention weights exist for no_ge too (they are simply unused),
        // so the two variants share a parameter layout.
        out.push(("attn/key/weight".into(), vec![d, dw], dw));
        out.push(("attn/out/weight".into(), vec![d, dw], dw));
        out.push(("attn/out/bias".into(), vec![d], dw));
    }

    let mut c_in = 9;
    for (i, &c_out) in config.weather_conv.iter().enumerate() {
        let fan = c_in * config.weather_kernel;
        out.push((
            format!("weather/conv{i}/kernel"),
            vec![c_out, c_in, config.weather_kernel],
            fan,
        ));
        out.push((format!("weather/conv{i}/bias"), vec![c_out], fan));
        c_in = c_out;
    }

    for (branch, input, dims) in [
        ("soil", config.soil_features, &config.soil_dims),
        ("mgmt", config.mgmt_features, &config.mgmt_dims),
    ] {
        let mut n = input;
        for (i, &m) in dims.iter().enumerate() {
            out.push((format!("{branch}/dense{i}/weight"), vec![m, n], n));
            out.push((format!("{branch}/dense{i}/bias"), vec![m], n));
            n = m;
        }
    }

    let mut n = config.fusion_input_dim();
    for (i, &m) in config.fusion_dims.iter().enumerate() {
        out.push((format!("fusion/dense{i}/weight"), vec![m, n], n));
        out.push((format!("fusion/dense{i}/bias"), vec![m], n));
        n = m;
    }
    out.push(("fusion/out/weight".into(), vec![1, n], n));
    out.push(("fusion/out/bias".into(), vec![1], n));
    out
}

impl ModelParams {
    /// Fan-in-scaled uniform initialization from labeled streams, so the
    /// draw for each tensor depends only on `(seed, name)`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
        config.validate()?;
        let mut tensors = BTreeMap::new();
        for (name, shape, fan_in) in shape_table(config) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut stream = RngStream::new(seed, &format!("init/{name}"));
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| stream.uniform_in(-bound, bound)).collect();
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        Ok(ModelParams { tensors })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter {name:?}")))
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Check that the tensor set matches the config's shape table exactly.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = shape_table(config);
        if expected.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "parameter count mismatch: {} tensors for a config expecting {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for (name, shape, _) in expected {
            let t = self.get(&name)?;
            if t.shape() != shape {
                return Err(Error::Shape(format!(
                    "parameter {name:?} has shape {:?}, config expects {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }
}

/// Stable hex hash of a config's canonical JSON form.
pub fn config_hash(config: &ModelConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    format!("{:016x}", fnv1a64(json.as_bytes()))
}

/// Data-pipeline state a trained model needs at inference time: the modeling
/// SNP ids and the scalers fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub snp_ids: Vec<String>,
    pub weather_scaler: crate::ingest::StandardScaler,
    pub soil_scaler: crate::ingest::StandardScaler,
    pub mgmt_scaler: crate::ingest::StandardScaler,
    pub y_scaler: crate::ingest::StandardScaler,
}

/// Versioned parameter checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub config_hash: String,
    pub variant: Variant,
    #[serde(default)]
    pub pipeline: Option<PipelineState>,
    pub params: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(config: &ModelConfig, params: &ModelParams) -> Checkpoint {
        Checkpoint {
            format_version: Self::FORMAT_VERSION,
            config: config.clone(),
            config_hash: config_hash(config),
            variant: config.variant(),
            pipeline: None,
            params: params.tensors.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Data(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("invalid checkpoint: {e}")))?;
        if ckpt.format_version != Self::FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint format version {}",
                ckpt.format_version
            )));
        }
        if ckpt.config_hash != config_hash(&ckpt.config) {
            return Err(Error::Data(
                "checkpoint config hash does not match its config".into(),
            ));
        }
        let params = ModelParams {
            tensors: ckpt.params.clone(),
        };
        params.check_shapes(&ckpt.config)?;
        Ok(ckpt)
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            tensors: self.params.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_in_bounds() {
        let cfg = ModelConfig::default();
        let a = ModelParams::init(&cfg, 7).unwrap();
        let b = ModelParams::init(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = ModelParams::init(&cfg, 8).unwrap();
        assert_ne!(a, c);
        a.check_shapes(&cfg).unwrap();
        for (name, t) in &a.tensors {
            assert!(t.all_finite(), "{name} finite");
            assert!(t.data().iter().all(|v| v.abs() <= 1.0), "{name} bounded");
        }
    }

    #[test]
    fn variant_layouts() {
        let full = ModelParams::init(&ModelConfig::default(), 1).unwrap();
        let no_ge =
            ModelParams::init(&ModelConfig::default().with_variant(Variant::NoGe), 1).unwrap();
        // no_ge shares the full layout (attention weights exist, unused).
        assert_eq!(
            full.tensors.keys().collect::<Vec<_>>(),
            no_ge.tensors.keys().collect::<Vec<_>>()
        );
        let no_g = ModelParams::init(&ModelConfig::default().with_variant(Variant::NoG), 1).unwrap();
        assert!(no_g.tensors.keys().all(|k| !k.starts_with("genome/")));
        assert!(no_g.tensors.keys().all(|k| !k.starts_with("attn/")));
    }

    #[test]
    fn checkpoint_roundtrip_exact() {
        let cfg = ModelConfig {
            snp_count: 4,
            filters: 4,
            weather_conv: vec![6, 8],
            weather_steps: 12,
            soil_dims: vec![5],
            mgmt_dims: vec![4],
            fusion_dims: vec![6],
            ..ModelConfig::default()
        };
        let params = ModelParams::init(&cfg, 33).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::new(&cfg, &params).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.config, cfg);
        assert_eq!(back.params().tensors, params.tensors, "f64 exact roundtrip");
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let cfg = ModelConfig::default();
        let mut params = ModelParams::init(&cfg, 1).unwrap();
        params
            .tensors
            .insert("attn/key/weight".into(), Tensor::zeros(&[2, 2]));
        assert!(params.check_shapes(&cfg).is_err());
    }
}

//! Synthetic dataset generator with known planted effects.
//!
//! Genotypes are drawn per SNP from Hardy-Weinberg proportions at a sampled
//! reference-allele frequency q (hom-ref q^2, het 2q(1-q), hom-alt (1-q)^2).
//! Daily weather is a seasonal sinusoid plus seeded noise per channel; soil
//! and management features are standard normal. Yield assembles a linear
//! form with optional genotype-by-weather interaction terms:
//!
//! ```text
//! y = mu + sum_c beta_c * g(dos_c)
//!        + gamma . env_features
//!        + sum_i delta_i * dos_i * weather_summary_i
//!        + Normal(0, sigma)
//! ```
//!
//! where `env_features` are the per-channel means of the windowed weather
//! matrix followed by the soil and management vectors, and each
//! `weather_summary_i` is the mean of one windowed channel over a designated
//! window range, optionally centered across the generated environments so
//! the planted term is a pure interaction (the subtracted center is stored
//! in the ground truth). `g` is the identity, or `dos^2 / 2` in the
//! nonlinear mode.
//! Everything needed to re-evaluate the noiseless part lives in
//! [`GroundTruth`], which serializes to `ground_truth.json`.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    self, derive_weather, window_and_pad, Dataset, DayWeather, FeatureTable, GenotypeTable,
    Observation, SnpDescriptor, WEATHER_CHANNELS, WEATHER_STEPS,
};
use crate::numcore::RngStream;

pub const SOIL_NAMES: [&str; 19] = [
    "ph", "om_pct", "ca_ppm", "mg_ppm", "k_ppm", "p_ppm", "cec", "sand_pct", "silt_pct",
    "clay_pct", "n_ppm", "s_ppm", "zn_ppm", "fe_ppm", "mn_ppm", "cu_ppm", "b_ppm", "na_ppm", "ec",
];

pub const MANAGEMENT_NAMES: [&str; 5] = [
    "irrigation_mm",
    "fert_n_kg_ha",
    "fert_p_kg_ha",
    "fert_k_kg_ha",
    "plant_density",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub hybrids: usize,
    pub envs: usize,
    pub snps: usize,
    pub causal: usize,
    /// Causal SNPs with an additional genotype-by-weather interaction.
    pub interactions: usize,
    /// Reference-allele frequency range sampled per SNP.
    pub allele_freq_range: (f64, f64),
    pub beta_scale: f64,
    pub gamma_scale: f64,
    pub delta_scale: f64,
    pub noise_std: f64,
    pub season_days: usize,
    /// Fraction of the hybrid x environment grid that is observed.
    pub obs_density: f64,
    pub context_width: usize,
    /// Replace the linear genotype effect with dos^2 / 2.
    pub nonlinear: bool,
    /// Center each interaction summary across environments so the delta
    /// term carries no genotype main effect.
    pub center_summaries: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            hybrids: 40,
            envs: 12,
            snps: 60,
            causal: 6,
            interactions: 2,
            allele_freq_range: (0.25, 0.55),
            beta_scale: 1.0,
            gamma_scale: 0.5,
            delta_scale: 0.0,
            noise_std: 1.0,
            season_days: 215,
            obs_density: 1.0,
            context_width: 2,
            nonlinear: false,
            center_summaries: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hybrids == 0 || self.envs == 0 || self.snps == 0 {
            return Err(Error::Config("counts must be positive".into()));
        }
        if self.causal > self.snps {
            return Err(Error::Config(format!(
                "{} causal SNPs exceed {} total",
                self.causal, self.snps
            )));
        }
        if self.interactions > self.causal {
            return Err(Error::Config(format!(
                "{} interactions exceed {} causal SNPs",
                self.interactions, self.causal
            )));
        }
        let (lo, hi) = self.allele_freq_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::Config(format!(
                "allele frequency range ({lo}, {hi}) outside (0, 1)"
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise std must be nonnegative".into()));
        }
        if self.season_days == 0 {
            return Err(Error::Config("season must have at least one day".into()));
        }
        if !(0.0..=1.0).contains(&self.obs_density) {
            return Err(Error::Config("obs_density must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalEffect {
    pub snp_id: String,
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteractionEffect {
    pub snp_id: String,
    /// Channel index into [`WEATHER_CHANNELS`].
    pub channel: usize,
    /// Window range (half-open) over the 43 windowed steps.
    pub window_start: usize,
    pub window_end: usize,
    pub delta: f64,
    /// Subtracted from the summary before multiplying; 0 when uncentered.
    pub center: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mu: f64,
    pub noise_std: f64,
    pub nonlinear: bool,
    pub causal: Vec<CausalEffect>,
    /// Coefficients over `env_feature_names`.
    pub gamma: Vec<f64>,
    pub env_feature_names: Vec<String>,
    pub interactions: Vec<InteractionEffect>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

fn het_letter(a: char, b: char) -> char {
    let mut pair = [a, b];
    pair.sort_unstable();
    match pair {
        ['A', 'G'] => 'R',
        ['C', 'T'] => 'Y',
        ['C', 'G'] => 'S',
        ['A', 'T'] => 'W',
        ['G', 'T'] => 'K',
        ['A', 'C'] => 'M',
        _ => unreachable!("distinct bases"),
    }
}

/// Per-channel means over the windowed weather matrix, then soil, then
/// management: the environment feature vector the gamma term contracts with.
pub fn env_feature_names(soil: &[String], mgmt: &[String]) -> Vec<String> {
    let mut names: Vec<String> = WEATHER_CHANNELS
        .iter()
        .map(|c| format!("weather_mean/{c}"))
        .collect();
    names.extend(soil.iter().map(|s| format!("soil/{s}")));
    names.extend(mgmt.iter().map(|m| format!("mgmt/{m}")));
    names
}

/// Evaluate the environment feature vector for one environment from its
/// windowed weather and its soil/management rows.
pub fn env_features(windowed: &ingest::WeatherSeries, soil: &[f64], mgmt: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(9 + soil.len() + mgmt.len());
    for c in 0..9 {
        out.push(windowed.channel(c).iter().sum::<f64>() / WEATHER_STEPS as f64);
    }
    out.extend_from_slice(soil);
    out.extend_from_slice(mgmt);
    out
}

/// Mean of one windowed channel over `[start, end)`.
pub fn weather_summary(windowed: &ingest::WeatherSeries, channel: usize, start: usize, end: usize) -> f64 {
    let slice = &windowed.channel(channel)[start..end];
    slice.iter().sum::<f64>() / slice.len() as f64
}

/// Genotype effect transform: identity, or `dos^2 / 2` in nonlinear mode.
pub fn genotype_effect(dos: f64, nonlinear: bool) -> f64 {
    if nonlinear {
        dos * dos / 2.0
    } else {
        dos
    }
}

/// Generate the five tables plus the ground truth.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let seed = config.seed;
    let bases = ['A', 'C', 'G', 'T'];

    // SNP descriptors spread round-robin over the ten chromosomes.
    let mut meta_rng = RngStream::new(seed, "synth/snp/meta");
    let w = config.context_width;
    let mut snps = Vec::with_capacity(config.snps);
    let mut alt_bases = Vec::with_capacity(config.snps);
    let mut freqs = Vec::with_capacity(config.snps);
    for j in 0..config.snps {
        let chromosome = 1 + (j % 10) as u32;
        let position = 1_000 + (j / 10) as u64 * 811 + meta_rng.index(400) as u64;
        let context: String = (0..2 * w + 1).map(|_| bases[meta_rng.index(4)]).collect();
        let reference = context.chars().nth(w).expect("center base");
        let alt = loop {
            let b = bases[meta_rng.index(4)];
            if b != reference {
                break b;
            }
        };
        alt_bases.push(alt);
        let (lo, hi) = config.allele_freq_range;
        freqs.push(meta_rng.uniform_in(lo, hi));
        snps.push(SnpDescriptor {
            id: format!("snp{j:05}"),
            chromosome,
            position,
            context,
        });
    }

    // Hardy-Weinberg draws per (hybrid, SNP).
    let mut call_rng = RngStream::new(seed, "synth/snp/calls");
    let hybrids: Vec<String> = (0..config.hybrids).map(|h| format!("hyb{h:04}")).collect();
    let mut calls = Vec::with_capacity(config.hybrids * config.snps);
    let mut dosages = vec![0.0f64; config.hybrids * config.snps];
    for h in 0..config.hybrids {
        for j in 0..config.snps {
            let q = freqs[j];
            let r = call_rng.uniform();
            let reference = snps[j].reference_base();
            let (letter, dos) = if r < q * q {
                (reference, 0.0)
            } else if r < q * q + 2.0 * q * (1.0 - q) {
                (het_letter(reference, alt_bases[j]), 1.0)
            } else {
                (alt_bases[j], 2.0)
            };
            calls.push(letter as u8);
            dosages[h * config.snps + j] = dos;
        }
    }
    let genotypes = GenotypeTable::new(snps.clone(), hybrids.clone(), calls)?;

    // Daily weather per environment.
    let mut weather_daily = BTreeMap::new();
    let mut windowed = BTreeMap::new();
    let env_ids: Vec<String> = (0..config.envs)
        .map(|e| format!("loc{e:03}_{}", 2014 + e % 4))
        .collect();
    for (e, env_id) in env_ids.iter().enumerate() {
        let mut rng = RngStream::new(seed, &format!("synth/weather/{env_id}"));
        let year = 2014 + (e % 4) as i32;
        let start = NaiveDate::from_ymd_opt(year, 4, 1).expect("valid date");
        let season = config.season_days as f64;
        let warm_offset = rng.normal(0.0, 2.0);
        let mut days = Vec::with_capacity(config.season_days);
        for t in 0..config.season_days {
            let phase = (t as f64 / season * std::f64::consts::PI).sin();
            let tmid = 16.0 + 9.0 * phase + warm_offset + rng.normal(0.0, 2.0);
            let spread = 6.0 + rng.normal(0.0, 1.5).abs();
            let vp = (750.0 + 420.0 * phase + rng.normal(0.0, 70.0)).max(50.0);
            days.push(DayWeather {
                date: start + chrono::Days::new(t as u64),
                srad: (180.0 + 90.0 * phase + rng.normal(0.0, 25.0)).max(5.0),
                vp,
                prcp: (rng.normal(2.0, 4.0)).max(0.0),
                tmax: tmid + spread / 2.0,
                tmin: tmid - spread / 2.0,
                wind: (3.0 + rng.normal(0.0, 1.2)).max(0.1),
            });
        }
        let derived: Result<Vec<_>> = days.iter().map(derive_weather).collect();
        windowed.insert(env_id.clone(), window_and_pad(env_id, &derived?)?);
        weather_daily.insert(env_id.clone(), days);
    }

    // Soil and management: standard normal features.
    let mut env_rng = RngStream::new(seed, "synth/env-features");
    let soil_names: Vec<String> = SOIL_NAMES.iter().map(|s| s.to_string()).collect();
    let mgmt_names: Vec<String> = MANAGEMENT_NAMES.iter().map(|s| s.to_string()).collect();
    let mut soil_rows = BTreeMap::new();
    let mut mgmt_rows = BTreeMap::new();
    for env_id in &env_ids {
        soil_rows.insert(
            env_id.clone(),
            (0..soil_names.len()).map(|_| env_rng.normal(0.0, 1.0)).collect::<Vec<f64>>(),
        );
        mgmt_rows.insert(
            env_id.clone(),
            (0..mgmt_names.len()).map(|_| env_rng.normal(0.0, 1.0)).collect::<Vec<f64>>(),
        );
    }
    let soil = FeatureTable {
        names: soil_names.clone(),
        rows: soil_rows,
    };
    let management = FeatureTable {
        names: mgmt_names.clone(),
        rows: mgmt_rows,
    };

    // Planted effects.
    let mut effect_rng = RngStream::new(seed, "synth/effects");
    let mut causal_idx: Vec<usize> = effect_rng.permutation(config.snps);
    causal_idx.truncate(config.causal);
    causal_idx.sort_unstable();
    let causal: Vec<CausalEffect> = causal_idx
        .iter()
        .map(|&j| {
            let magnitude = config.beta_scale * effect_rng.uniform_in(0.5, 1.0);
            let sign = if effect_rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            CausalEffect {
                snp_id: snps[j].id.clone(),
                beta: sign * magnitude,
            }
        })
        .collect();
    let feature_names = env_feature_names(&soil_names, &mgmt_names);
    let gamma: Vec<f64> = feature_names
        .iter()
        .map(|_| effect_rng.normal(0.0, config.gamma_scale))
        .collect();
    let interactions: Vec<InteractionEffect> = causal_idx
        .iter()
        .take(config.interactions)
        .map(|&j| {
            let channel = effect_rng.index(9);
            let len = 5 + effect_rng.index(6);
            let start = effect_rng.index(WEATHER_STEPS - len);
            let magnitude = config.delta_scale * effect_rng.uniform_in(0.5, 1.0);
            let sign = if effect_rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            let center = if config.center_summaries {
                env_ids
                    .iter()
                    .map(|e| weather_summary(&windowed[e], channel, start, start + len))
                    .sum::<f64>()
                    / env_ids.len() as f64
            } else {
                0.0
            };
            InteractionEffect {
                snp_id: snps[j].id.clone(),
                channel,
                window_start: start,
                window_end: start + len,
                delta: sign * magnitude,
                center,
            }
        })
        .collect();

    let truth = GroundTruth {
        mu: 100.0,
        noise_std: config.noise_std,
        nonlinear: config.nonlinear,
        causal,
        gamma,
        env_feature_names: feature_names,
        interactions,
    };

    // Observations over (a subset of) the grid.
    let snp_index: BTreeMap<&str, usize> = snps
        .iter()
        .enumerate()
        .map(|(j, s)| (s.id.as_str(), j))
        .collect();
    let mut obs_rng = RngStream::new(seed, "synth/obs");
    let mut noise_rng = RngStream::new(seed, "synth/noise");
    let mut observations = Vec::new();
    for (h, hybrid_id) in hybrids.iter().enumerate() {
        for env_id in &env_ids {
            // Draw both streams unconditionally so inclusion never shifts
            // the noise sequence of later cells.
            let include = obs_rng.uniform() < config.obs_density;
            let noise = noise_rng.normal(0.0, 1.0) * config.noise_std;
            if !include {
                continue;
            }
            let win = &windowed[env_id];
            let feats = env_features(win, &soil.rows[env_id], &management.rows[env_id]);
            let mut y = truth.mu;
            for c in &truth.causal {
                let dos = dosages[h * config.snps + snp_index[c.snp_id.as_str()]];
                y += c.beta * genotype_effect(dos, truth.nonlinear);
            }
            y += truth
                .gamma
                .iter()
                .zip(&feats)
                .map(|(g, f)| g * f)
                .sum::<f64>();
            for i in &truth.interactions {
                let dos = dosages[h * config.snps + snp_index[i.snp_id.as_str()]];
                let s = weather_summary(win, i.channel, i.window_start, i.window_end) - i.center;
                y += i.delta * dos * s;
            }
            observations.push(Observation {
                env_id: env_id.clone(),
                hybrid_id: hybrid_id.clone(),
                yield_value: y + noise,
            });
        }
    }
    if observations.is_empty() {
        return Err(Error::Config("obs_density produced an empty dataset".into()));
    }

    let dataset = Dataset {
        genotypes,
        weather_daily,
        soil,
        management,
        observations,
    };
    dataset.check_ids()?;
    Ok(SynthOutput { dataset, truth })
}

/// Write the five tables plus `ground_truth.json` into a directory.
pub fn write_dir(output: &SynthOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    ingest::write::write_genotypes(&output.dataset.genotypes, &dir.join("genotypes.tsv"))?;
    ingest::write::write_weather_daily(&output.dataset.weather_daily, &dir.join("weather.tsv"))?;
    ingest::write::write_feature_table(&output.dataset.soil, &dir.join("soil.tsv"))?;
    ingest::write::write_feature_table(&output.dataset.management, &dir.join("management.tsv"))?;
    ingest::write::write_phenotypes(&output.dataset.observations, &dir.join("phenotypes.tsv"))?;
    let truth = serde_json::to_string_pretty(&output.truth).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(dir.join("ground_truth.json"), truth)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::snp_dosage;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let config = SynthConfig {
            hybrids: 12,
            envs: 4,
            snps: 20,
            causal: 3,
            interactions: 1,
            delta_scale: 1.0,
            season_days: 40,
            seed: 5,
            ..SynthConfig::default()
        };
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.dataset.observations, b.dataset.observations);
        assert_eq!(a.dataset.genotypes, b.dataset.genotypes);
        let c = generate(&SynthConfig { seed: 6, ..config }).unwrap();
        assert_ne!(a.dataset.observations, c.dataset.observations);
    }

    #[test]
    fn same_seed_byte_identical_files() {
        let config = SynthConfig {
            hybrids: 6,
            envs: 3,
            snps: 10,
            causal: 2,
            interactions: 0,
            season_days: 30,
            seed: 9,
            ..SynthConfig::default()
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_dir(&generate(&config).unwrap(), dir_a.path()).unwrap();
        write_dir(&generate(&config).unwrap(), dir_b.path()).unwrap();
        for name in [
            "genotypes.tsv",
            "weather.tsv",
            "soil.tsv",
            "management.tsv",
            "phenotypes.tsv",
            "ground_truth.json",
        ] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical seeds");
        }
    }

    #[test]
    fn roundtrips_through_ingest_without_errors() {
        let config = SynthConfig {
            hybrids: 8,
            envs: 4,
            snps: 15,
            causal: 2,
            interactions: 1,
            delta_scale: 0.5,
            season_days: 60,
            seed: 11,
            ..SynthConfig::default()
        };
        let output = generate(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dir(&output, dir.path()).unwrap();
        let parsed = Dataset::load_dir(dir.path()).unwrap();
        assert_eq!(parsed.genotypes, output.dataset.genotypes);
        assert_eq!(parsed.observations, output.dataset.observations);
        assert_eq!(parsed.weather_daily, output.dataset.weather_daily);
        assert_eq!(parsed.soil, output.dataset.soil);
        assert_eq!(parsed.management, output.dataset.management);
    }

    #[test]
    fn noise_free_no_genetics_yield_constant_within_env() {
        // sigma = 0, C = 0, I = 0, gamma = 0: all hybrids in one environment
        // share one yield value.
        let config = SynthConfig {
            hybrids: 10,
            envs: 3,
            snps: 12,
            causal: 0,
            interactions: 0,
            gamma_scale: 0.4,
            noise_std: 0.0,
            season_days: 30,
            seed: 13,
            ..SynthConfig::default()
        };
        let output = generate(&config).unwrap();
        let mut per_env: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for obs in &output.dataset.observations {
            per_env.entry(obs.env_id.as_str()).or_default().push(obs.yield_value);
        }
        for (_, ys) in per_env {
            for y in &ys {
                assert_eq!(*y, ys[0], "same environment, same yield");
            }
        }
    }

    #[test]
    fn noiseless_yield_reproducible_from_ground_truth() {
        let config = SynthConfig {
            hybrids: 10,
            envs: 4,
            snps: 18,
            causal: 4,
            interactions: 2,
            delta_scale: 0.8,
            noise_std: 0.0,
            season_days: 70,
            seed: 17,
            ..SynthConfig::default()
        };
        let output = generate(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dir(&output, dir.path()).unwrap();
        // Re-evaluate the linear form from the written files alone.
        let dataset = Dataset::load_dir(dir.path()).unwrap();
        let truth: GroundTruth = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("ground_truth.json")).unwrap(),
        )
        .unwrap();
        let windowed = dataset.weather_series().unwrap();
        let table = &dataset.genotypes;
        let hybrid_index = table.hybrid_index();
        let snp_index = table.snp_index();
        for obs in &dataset.observations {
            let h = hybrid_index[obs.hybrid_id.as_str()];
            let win = &windowed[&obs.env_id];
            let feats = env_features(
                win,
                &dataset.soil.rows[&obs.env_id],
                &dataset.management.rows[&obs.env_id],
            );
            let mut y = truth.mu;
            for c in &truth.causal {
                let j = snp_index[c.snp_id.as_str()];
                let dos = snp_dosage(table.call(h, j), table.snps[j].reference_base()).unwrap();
                y += c.beta * genotype_effect(dos, truth.nonlinear);
            }
            y += truth.gamma.iter().zip(&feats).map(|(g, f)| g * f).sum::<f64>();
            for i in &truth.interactions {
                let j = snp_index[i.snp_id.as_str()];
                let dos = snp_dosage(table.call(h, j), table.snps[j].reference_base()).unwrap();
                let s = weather_summary(win, i.channel, i.window_start, i.window_end) - i.center;
                y += i.delta * dos * s;
            }
            assert!(
                (y - obs.yield_value).abs() <= 1e-10,
                "direct evaluation {y} vs file {} for {}/{}",
                obs.yield_value,
                obs.env_id,
                obs.hybrid_id
            );
        }
    }

    #[test]
    fn hardy_weinberg_frequencies_converge() {
        // chi-square sanity at large H on a few SNPs.
        let config = SynthConfig {
            hybrids: 10_000,
            envs: 1,
            snps: 5,
            causal: 0,
            interactions: 0,
            obs_density: 0.0005, // keep the observation table small
            season_days: 10,
            seed: 23,
            ..SynthConfig::default()
        };
        let output = generate(&config).unwrap();
        let table = &output.dataset.genotypes;
        // Regenerate the frequency draws the generator used.
        let mut meta_rng = RngStream::new(23, "synth/snp/meta");
        let mut freqs = Vec::new();
        for _ in 0..config.snps {
            let _pos = meta_rng.index(400);
            let context: Vec<usize> = (0..5).map(|_| meta_rng.index(4)).collect();
            let center = context[2];
            loop {
                if meta_rng.index(4) != center {
                    break;
                }
            }
            freqs.push(meta_rng.uniform_in(0.25, 0.55));
        }
        for (j, &q) in freqs.iter().enumerate() {
            let mut counts = [0usize; 3];
            for h in 0..config.hybrids {
                let dos = snp_dosage(table.call(h, j), table.snps[j].reference_base()).unwrap();
                counts[dos as usize] += 1;
            }
            let n = config.hybrids as f64;
            let expected = [q * q * n, 2.0 * q * (1.0 - q) * n, (1.0 - q) * (1.0 - q) * n];
            let chi2: f64 = counts
                .iter()
                .zip(&expected)
                .map(|(&o, &e)| (o as f64 - e) * (o as f64 - e) / e)
                .sum();
            // 2 degrees of freedom; 13.8 is the 0.1% tail.
            assert!(chi2 < 13.8, "snp {j}: chi2 = {chi2}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig { causal: 10, snps: 5, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { interactions: 3, causal: 2, ..SynthConfig::default() }
            .validate()
            .is_err());
        assert!(SynthConfig { allele_freq_range: (0.0, 0.5), ..SynthConfig::default() }
            .validate()
            .is_err());
    }
}

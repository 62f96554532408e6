//! Input tables: parsing, validation, derived weather features, windowing
//! and standard scaling.
//!
//! Five UTF-8 tab-separated files feed the pipeline: `genotypes.tsv`,
//! `weather.tsv`, `soil.tsv`, `management.tsv` and `phenotypes.tsv` (see
//! [`parse`] for the exact schemas). Environment ids are location-year
//! pairs formatted `<location>_<year>`.

pub mod parse;
pub mod scaler;
pub mod weather;
pub mod write;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use scaler::StandardScaler;
pub use weather::{derive_weather, window_and_pad, DerivedDay};

/// Letters accepted in a genotype call cell.
pub const CALL_ALPHABET: [char; 11] = ['A', 'C', 'G', 'T', 'R', 'Y', 'S', 'W', 'K', 'M', 'N'];

/// Maize chromosome count; descriptors must stay within `1..=10`.
pub const CHROMOSOMES: u32 = 10;

/// Expected feature counts for the two environment tables.
pub const SOIL_FEATURES: usize = 19;
pub const MANAGEMENT_FEATURES: usize = 5;

/// Channel order of a windowed weather matrix: the six measured features
/// followed by the three derived ones.
pub const WEATHER_CHANNELS: [&str; 9] = [
    "srad",
    "vp",
    "prcp",
    "tmax",
    "tmin",
    "wind",
    "dew_point",
    "rel_humidity",
    "gdd",
];

/// Length of the windowed weather time series.
pub const WEATHER_STEPS: usize = 43;

/// Days averaged into one window.
pub const WINDOW_DAYS: usize = 5;

/// A variant's identity: where it sits and what the reference genome reads
/// around it. The context center is the reference base at the site itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnpDescriptor {
    pub id: String,
    pub chromosome: u32,
    pub position: u64,
    pub context: String,
}

impl SnpDescriptor {
    /// Reference base at the SNP site (center of the context).
    pub fn reference_base(&self) -> char {
        let chars: Vec<char> = self.context.chars().collect();
        chars[chars.len() / 2]
    }
}

/// Genotype calls for all hybrids at all SNPs, stored hybrids x snps.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeTable {
    pub snps: Vec<SnpDescriptor>,
    pub hybrids: Vec<String>,
    calls: Vec<u8>,
}

impl GenotypeTable {
    pub fn new(snps: Vec<SnpDescriptor>, hybrids: Vec<String>, calls: Vec<u8>) -> Result<Self> {
        if calls.len() != snps.len() * hybrids.len() {
            return Err(Error::Data(format!(
                "genotype call matrix has {} cells for {} hybrids x {} SNPs",
                calls.len(),
                hybrids.len(),
                snps.len()
            )));
        }
        let table = GenotypeTable { snps, hybrids, calls };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for snp in &self.snps {
            if !ids.insert(&snp.id) {
                return Err(Error::Data(format!("duplicate snp id {:?}", snp.id)));
            }
            if snp.chromosome < 1 || snp.chromosome > CHROMOSOMES {
                return Err(Error::Data(format!(
                    "snp {:?} chromosome {} outside 1..={CHROMOSOMES}",
                    snp.id, snp.chromosome
                )));
            }
            if snp.position < 1 {
                return Err(Error::Data(format!("snp {:?} has position 0", snp.id)));
            }
            if snp.context.is_empty() || snp.context.chars().count() % 2 == 0 {
                return Err(Error::Data(format!(
                    "snp {:?} context must have odd length, got {:?}",
                    snp.id, snp.context
                )));
            }
            if let Some(bad) = snp.context.chars().find(|c| !"ACGT".contains(*c)) {
                return Err(Error::Data(format!(
                    "snp {:?} context contains {bad:?}; reference context must be A/C/G/T",
                    snp.id
                )));
            }
        }
        let mut hybrid_ids = BTreeSet::new();
        for h in &self.hybrids {
            if !hybrid_ids.insert(h) {
                return Err(Error::Data(format!("duplicate hybrid id {h:?}")));
            }
        }
        for &c in &self.calls {
            if !CALL_ALPHABET.contains(&(c as char)) {
                return Err(Error::Data(format!(
                    "genotype call {:?} outside the IUPAC alphabet",
                    c as char
                )));
            }
        }
        Ok(())
    }

    /// `(hybrids, snps)` extent.
    pub fn shape(&self) -> (usize, usize) {
        (self.hybrids.len(), self.snps.len())
    }

    pub fn call(&self, hybrid: usize, snp: usize) -> char {
        self.calls[hybrid * self.snps.len() + snp] as char
    }

    pub fn hybrid_index(&self) -> BTreeMap<&str, usize> {
        self.hybrids
            .iter()
            .enumerate()
            .map(|(i, h)| (h.as_str(), i))
            .collect()
    }

    pub fn snp_index(&self) -> BTreeMap<&str, usize> {
        self.snps
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect()
    }

    /// Ids of SNPs with at least one missing (N) call.
    pub fn snps_with_missing_calls(&self) -> Vec<String> {
        let (h, s) = self.shape();
        (0..s)
            .filter(|&j| (0..h).any(|i| self.call(i, j) == 'N'))
            .map(|j| self.snps[j].id.clone())
            .collect()
    }

    /// A table restricted to the given SNP ids, in the order given.
    pub fn subset(&self, snp_ids: &[String]) -> Result<GenotypeTable> {
        let index = self.snp_index();
        let mut cols = Vec::with_capacity(snp_ids.len());
        for id in snp_ids {
            let Some(&j) = index.get(id.as_str()) else {
                return Err(Error::Data(format!("unknown snp id {id:?} in subset")));
            };
            cols.push(j);
        }
        let (h, s) = self.shape();
        let mut calls = Vec::with_capacity(h * cols.len());
        for i in 0..h {
            for &j in &cols {
                calls.push(self.calls[i * s + j]);
            }
        }
        Ok(GenotypeTable {
            snps: cols.iter().map(|&j| self.snps[j].clone()).collect(),
            hybrids: self.hybrids.clone(),
            calls,
        })
    }
}

/// One day of measured weather for an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct DayWeather {
    pub date: NaiveDate,
    pub srad: f64,
    pub vp: f64,
    pub prcp: f64,
    pub tmax: f64,
    pub tmin: f64,
    pub wind: f64,
}

/// Windowed 9 x 43 weather matrix for one environment, channels ordered as
/// [`WEATHER_CHANNELS`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub env_id: String,
    values: Vec<f64>,
}

impl WeatherSeries {
    pub(crate) fn from_values(env_id: String, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), 9 * WEATHER_STEPS);
        WeatherSeries { env_id, values }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * WEATHER_STEPS..][..WEATHER_STEPS]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Named numeric features per environment; NaN cells are missing values
/// awaiting imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl FeatureTable {
    /// Environments with at least one missing cell, with feature names.
    pub fn missing_cells(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (env, row) in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if v.is_nan() {
                    out.push((env.clone(), self.names[j].clone()));
                }
            }
        }
        out
    }

    /// Fill missing cells with per-feature means over `fit_envs`. Returns the
    /// filled cells. Errors if a feature has no observed value in the fit set.
    pub fn impute_from(&mut self, fit_envs: &BTreeSet<String>) -> Result<Vec<(String, String)>> {
        let mut means = vec![0.0; self.names.len()];
        for (j, mean) in means.iter_mut().enumerate() {
            let observed: Vec<f64> = self
                .rows
                .iter()
                .filter(|(env, _)| fit_envs.contains(*env))
                .map(|(_, row)| row[j])
                .filter(|v| !v.is_nan())
                .collect();
            if observed.is_empty() {
                return Err(Error::Data(format!(
                    "feature {:?} has no observed value in the imputation fit set",
                    self.names[j]
                )));
            }
            *mean = observed.iter().sum::<f64>() / observed.len() as f64;
        }
        let mut filled = Vec::new();
        for (env, row) in self.rows.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                if v.is_nan() {
                    *v = means[j];
                    filled.push((env.clone(), self.names[j].clone()));
                }
            }
        }
        Ok(filled)
    }
}

/// One phenotype measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub env_id: String,
    pub hybrid_id: String,
    pub yield_value: f64,
}

/// Validate an environment id of the form `<location>_<year>`.
pub fn validate_env_id(env_id: &str) -> Result<()> {
    let err = || {
        Error::Data(format!(
            "environment id {env_id:?} is not of the form <location>_<year>"
        ))
    };
    let (location, year) = env_id.rsplit_once('_').ok_or_else(err)?;
    if location.is_empty() || year.len() != 4 || year.parse::<u32>().is_err() {
        return Err(err());
    }
    Ok(())
}

/// The five parsed tables, joined and id-checked.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub genotypes: GenotypeTable,
    pub weather_daily: BTreeMap<String, Vec<DayWeather>>,
    pub soil: FeatureTable,
    pub management: FeatureTable,
    pub observations: Vec<Observation>,
}

impl Dataset {
    /// Load `genotypes.tsv`, `weather.tsv`, `soil.tsv`, `management.tsv` and
    /// `phenotypes.tsv` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Dataset> {
        Dataset::load_paths(
            &dir.join("genotypes.tsv"),
            &dir.join("weather.tsv"),
            &dir.join("soil.tsv"),
            &dir.join("management.tsv"),
            &dir.join("phenotypes.tsv"),
        )
    }

    pub fn load_paths(
        genotypes: &Path,
        weather: &Path,
        soil: &Path,
        management: &Path,
        phenotypes: &Path,
    ) -> Result<Dataset> {
        let dataset = Dataset {
            genotypes: parse::parse_genotypes(genotypes)?,
            weather_daily: parse::parse_weather_daily(weather)?,
            soil: parse::parse_soil(soil)?,
            management: parse::parse_management(management)?,
            observations: parse::parse_phenotypes(phenotypes)?,
        };
        dataset.check_ids()?;
        Ok(dataset)
    }

    /// Every observation must resolve to a known hybrid and to weather, soil
    /// and management rows for its environment.
    pub fn check_ids(&self) -> Result<()> {
        let hybrids: BTreeSet<&str> = self.genotypes.hybrids.iter().map(|s| s.as_str()).collect();
        for obs in &self.observations {
            if !hybrids.contains(obs.hybrid_id.as_str()) {
                return Err(Error::Data(format!(
                    "observation references unknown hybrid {:?}",
                    obs.hybrid_id
                )));
            }
            if !self.weather_daily.contains_key(&obs.env_id) {
                return Err(Error::Data(format!(
                    "observation references environment {:?} with no weather data",
                    obs.env_id
                )));
            }
            if !self.soil.rows.contains_key(&obs.env_id) {
                return Err(Error::Data(format!(
                    "observation references environment {:?} with no soil data",
                    obs.env_id
                )));
            }
            if !self.management.rows.contains_key(&obs.env_id) {
                return Err(Error::Data(format!(
                    "observation references environment {:?} with no management data",
                    obs.env_id
                )));
            }
        }
        Ok(())
    }

    /// Environment ids present in the phenotype table, sorted and deduplicated.
    pub fn env_ids(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.observations.iter().map(|o| o.env_id.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Observations sorted canonically by `(env_id, hybrid_id)`, making
    /// downstream computation independent of input row order.
    pub fn sorted_observations(&self) -> Vec<Observation> {
        let mut obs = self.observations.clone();
        obs.sort_by(|a, b| {
            (a.env_id.as_str(), a.hybrid_id.as_str()).cmp(&(b.env_id.as_str(), b.hybrid_id.as_str()))
        });
        obs
    }

    /// Windowed 9x43 weather matrices for every environment.
    pub fn weather_series(&self) -> Result<BTreeMap<String, WeatherSeries>> {
        let mut out = BTreeMap::new();
        for (env, days) in &self.weather_daily {
            let derived: Result<Vec<DerivedDay>> = days.iter().map(derive_weather).collect();
            out.insert(env.clone(), window_and_pad(env, &derived?)?);
        }
        Ok(out)
    }
}

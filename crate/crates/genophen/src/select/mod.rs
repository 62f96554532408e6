//! Two-stage interpretable SNP selection: boosting-driven recursive feature
//! elimination down to an intermediate set, then mutual-information ranking
//! to the final modeling set.

pub mod gbdt;
pub mod mi;
pub mod rfe;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encode::{alleles, BASES};
use crate::error::{Error, Result};
use crate::ingest::{GenotypeTable, Observation};

pub use gbdt::{fit_gbdt, BinnedMatrix, FeatureMatrix, GbdtConfig, GbdtModel};
pub use mi::{analytic_mi, mutual_information};
pub use rfe::{rfe_select, RfeRound};

/// Scalar genotype coding against the reference base: 0 homozygous
/// reference, 1 heterozygous containing the reference, 2 otherwise.
pub fn snp_dosage(call: char, ref_base: char) -> Result<f64> {
    let r = BASES
        .iter()
        .position(|&b| b == ref_base)
        .ok_or_else(|| Error::Data(format!("reference base {ref_base:?} is not A/C/G/T")))?;
    let (a, b) = alleles(call)?;
    Ok(if a == b {
        if a == r {
            0.0
        } else {
            2.0
        }
    } else if a == r || b == r {
        1.0
    } else {
        2.0
    })
}

/// Per-observation dosage matrix (rows follow `observations`) and yields.
pub fn dosage_matrix(
    table: &GenotypeTable,
    observations: &[Observation],
) -> Result<(FeatureMatrix, Vec<f64>)> {
    let hybrid_index = table.hybrid_index();
    let (h, p) = table.shape();
    // Dosage per hybrid first, then gather per observation.
    let mut per_hybrid = vec![0.0; h * p];
    for (i, row) in per_hybrid.chunks_exact_mut(p).enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = snp_dosage(table.call(i, j), table.snps[j].reference_base())?;
        }
    }
    let mut columns = vec![Vec::with_capacity(observations.len()); p];
    let mut y = Vec::with_capacity(observations.len());
    for obs in observations {
        let Some(&i) = hybrid_index.get(obs.hybrid_id.as_str()) else {
            return Err(Error::Data(format!("unknown hybrid {:?}", obs.hybrid_id)));
        };
        for (j, col) in columns.iter_mut().enumerate() {
            col.push(per_hybrid[i * p + j]);
        }
        y.push(obs.yield_value);
    }
    Ok((FeatureMatrix::from_columns(observations.len(), columns)?, y))
}

#[derive(Debug, Clone)]
pub struct SelectionConfig {
    /// Features surviving the elimination stage.
    pub rfe_target: usize,
    /// Final modeling set size.
    pub mi_target: usize,
    pub mi_bins: usize,
    pub gbdt: GbdtConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            rfe_target: 1000,
            mi_target: 100,
            mi_bins: 16,
            gbdt: GbdtConfig::default(),
        }
    }
}

/// One selected SNP with its bookkeeping columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectedSnp {
    pub id: String,
    pub chromosome: u32,
    pub position: u64,
    pub gain: f64,
    pub split_count: u32,
    pub mi: f64,
}

/// Full record of a selection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    /// SNPs dropped up front because they carry missing (N) calls.
    pub dropped_missing: Vec<String>,
    /// Surviving ids per elimination round.
    pub rfe_rounds: Vec<RfeRound>,
    /// The intermediate set, ordered by gain rank.
    pub rfe_selected: Vec<String>,
    /// Mutual information per intermediate survivor.
    pub mi_scores: BTreeMap<String, f64>,
    /// Final modeling set, ordered by decreasing mutual information.
    pub selected: Vec<SelectedSnp>,
    /// Selected SNPs per chromosome.
    pub per_chromosome: BTreeMap<u32, usize>,
}

impl SelectionReport {
    pub fn selected_ids(&self) -> Vec<String> {
        self.selected.iter().map(|s| s.id.clone()).collect()
    }

    /// The `(snp_id, chrom, pos, gain, split_count, mi)` table.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("snp_id\tchrom\tpos\tgain\tsplit_count\tmi\n");
        for s in &self.selected {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                s.id, s.chromosome, s.position, s.gain, s.split_count, s.mi
            ));
        }
        out
    }
}

/// Run the two-stage pipeline on a genotype table joined with observations.
///
/// SNPs with missing calls are dropped before scoring; if no more than
/// `mi_target` SNPs remain after that, they all pass through, ranked by
/// mutual information. The elimination stage is skipped when the input is
/// already at or below `rfe_target`.
pub fn select_snps(
    table: &GenotypeTable,
    observations: &[Observation],
    config: &SelectionConfig,
) -> Result<SelectionReport> {
    if observations.is_empty() {
        return Err(Error::Data("snp selection without observations".into()));
    }
    let dropped_missing = table.snps_with_missing_calls();
    let table = if dropped_missing.is_empty() {
        table.clone()
    } else {
        let keep: Vec<String> = table
            .snps
            .iter()
            .map(|s| s.id.clone())
            .filter(|id| !dropped_missing.contains(id))
            .collect();
        table.subset(&keep)?
    };
    let p = table.snps.len();
    if p < config.mi_target {
        return Err(Error::Data(format!(
            "only {p} usable SNPs for a final set of {}",
            config.mi_target
        )));
    }

    let (matrix, y) = dosage_matrix(&table, observations)?;
    let ids: Vec<String> = table.snps.iter().map(|s| s.id.clone()).collect();
    let binned = BinnedMatrix::from_matrix(&matrix, config.gbdt.max_bins)?;

    let rfe = rfe::rfe_select(
        &binned,
        &y,
        &ids,
        config.rfe_target.min(p),
        &config.gbdt,
    )?;
    let gain_of: BTreeMap<&str, (f64, u32)> = rfe
        .selected
        .iter()
        .zip(rfe.gains.iter().zip(&rfe.split_counts))
        .map(|(id, (&g, &c))| (id.as_str(), (g, c)))
        .collect();

    let snp_index = table.snp_index();
    let mut mi_scores = BTreeMap::new();
    for id in &rfe.selected {
        let j = snp_index[id.as_str()];
        let classes: Vec<u8> = matrix.column(j).iter().map(|&d| d as u8).collect();
        mi_scores.insert(id.clone(), mutual_information(&classes, &y, config.mi_bins)?);
    }

    let mut ranked: Vec<&String> = rfe.selected.iter().collect();
    ranked.sort_by(|a, b| {
        mi_scores[b.as_str()]
            .total_cmp(&mi_scores[a.as_str()])
            .then_with(|| a.cmp(b))
    });
    ranked.truncate(config.mi_target);

    let mut selected = Vec::with_capacity(ranked.len());
    let mut per_chromosome: BTreeMap<u32, usize> = BTreeMap::new();
    for id in ranked {
        let snp = &table.snps[snp_index[id.as_str()]];
        let (gain, split_count) = gain_of[id.as_str()];
        *per_chromosome.entry(snp.chromosome).or_insert(0) += 1;
        selected.push(SelectedSnp {
            id: id.clone(),
            chromosome: snp.chromosome,
            position: snp.position,
            gain,
            split_count,
            mi: mi_scores[id.as_str()],
        });
    }

    Ok(SelectionReport {
        dropped_missing,
        rfe_rounds: rfe.rounds,
        rfe_selected: rfe.selected,
        mi_scores,
        selected,
        per_chromosome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SnpDescriptor;
    use crate::numcore::RngStream;

    #[test]
    fn dosage_table() {
        assert_eq!(snp_dosage('A', 'A').unwrap(), 0.0);
        assert_eq!(snp_dosage('R', 'A').unwrap(), 1.0); // A/G vs ref A
        assert_eq!(snp_dosage('T', 'A').unwrap(), 2.0);
        assert_eq!(snp_dosage('K', 'A').unwrap(), 2.0); // G/T has no A
        assert_eq!(snp_dosage('K', 'G').unwrap(), 1.0);
        assert!(snp_dosage('N', 'A').is_err());
        assert!(snp_dosage('A', 'N').is_err());
    }

    /// A small table with known dosages plus a yield driven by two SNPs.
    fn synthetic_table(
        rng: &mut RngStream,
        hybrids: usize,
        snps: usize,
    ) -> (GenotypeTable, Vec<Observation>) {
        let descriptors: Vec<SnpDescriptor> = (0..snps)
            .map(|j| SnpDescriptor {
                id: format!("s{j:03}"),
                chromosome: 1 + (j % 10) as u32,
                position: 100 + 17 * j as u64,
                context: "AACAA".into(),
            })
            .collect();
        let letters = [b'A', b'M', b'C']; // dosage 0, 1, 2 against ref A
        let mut calls = vec![0u8; hybrids * snps];
        for c in calls.iter_mut() {
            *c = letters[rng.index(3)];
        }
        let hybrid_ids: Vec<String> = (0..hybrids).map(|i| format!("h{i:03}")).collect();
        let table = GenotypeTable::new(descriptors, hybrid_ids.clone(), calls).unwrap();
        let second = 3.min(snps - 1);
        let observations: Vec<Observation> = (0..hybrids)
            .map(|i| {
                let d0 = snp_dosage(table.call(i, 0), 'A').unwrap();
                let d3 = snp_dosage(table.call(i, second), 'A').unwrap();
                Observation {
                    env_id: "loc_2015".into(),
                    hybrid_id: hybrid_ids[i].clone(),
                    yield_value: 3.0 * d0 - 2.0 * d3 + rng.normal(0.0, 0.2),
                }
            })
            .collect();
        (table, observations)
    }

    #[test]
    fn pipeline_finds_planted_snps() {
        let mut rng = RngStream::new(81, "select/pipeline");
        let (table, obs) = synthetic_table(&mut rng, 300, 30);
        let config = SelectionConfig {
            rfe_target: 12,
            mi_target: 4,
            mi_bins: 8,
            gbdt: GbdtConfig {
                min_samples_leaf: 10,
                ..GbdtConfig::default()
            },
        };
        let report = select_snps(&table, &obs, &config).unwrap();
        assert_eq!(report.selected.len(), 4);
        let ids = report.selected_ids();
        assert!(ids.contains(&"s000".to_string()), "selected: {ids:?}");
        assert!(ids.contains(&"s003".to_string()), "selected: {ids:?}");
        let total: usize = report.per_chromosome.values().sum();
        assert_eq!(total, 4);
        // MI ordering is decreasing.
        for w in report.selected.windows(2) {
            assert!(w[0].mi >= w[1].mi);
        }
    }

    #[test]
    fn small_input_passes_through_ranked_by_mi() {
        let mut rng = RngStream::new(82, "select/passthrough");
        let (table, obs) = synthetic_table(&mut rng, 200, 6);
        let config = SelectionConfig {
            rfe_target: 1000,
            mi_target: 6,
            mi_bins: 8,
            gbdt: GbdtConfig {
                min_samples_leaf: 10,
                ..GbdtConfig::default()
            },
        };
        let report = select_snps(&table, &obs, &config).unwrap();
        assert_eq!(report.selected.len(), 6, "all pass through");
        assert!(report.rfe_rounds.is_empty());
        for w in report.selected.windows(2) {
            assert!(w[0].mi >= w[1].mi, "ranked by MI");
        }
    }

    #[test]
    fn too_few_snps_is_an_error() {
        let mut rng = RngStream::new(83, "select/toofew");
        let (table, obs) = synthetic_table(&mut rng, 50, 3);
        let config = SelectionConfig {
            mi_target: 10,
            ..SelectionConfig::default()
        };
        assert!(select_snps(&table, &obs, &config).is_err());
    }
}

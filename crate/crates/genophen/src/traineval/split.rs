//! Grouped split construction for the two evaluation scenarios.
//!
//! Units are environment ids (environment split) or genotype clusters
//! (hybrid split, k-means over flattened one-hot center columns of the
//! modeling SNP set). Units are shuffled by seed and dealt round-robin into
//! the fold groups; rotation r takes group r as test and group r+1 as
//! validation, the remaining groups as training. Observations never share a
//! unit across the three sets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use crate::encode::encode_letter;
use crate::error::{Error, Result};
use crate::ingest::{GenotypeTable, Observation};
use crate::numcore::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Environment,
    Hybrid,
}

impl SplitMode {
    pub fn label(self) -> &'static str {
        match self {
            SplitMode::Environment => "environment",
            SplitMode::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Result<SplitMode> {
        match s {
            "environment" => Ok(SplitMode::Environment),
            "hybrid" => Ok(SplitMode::Hybrid),
            other => Err(Error::Config(format!(
                "unknown split mode {other:?}; expected environment or hybrid"
            ))),
        }
    }
}

/// Train/validation/test unit sets of one rotation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSplit {
    pub run: usize,
    pub train_units: BTreeSet<String>,
    pub val_units: BTreeSet<String>,
    pub test_units: BTreeSet<String>,
}

/// Fold groups of units plus the observation-to-unit mapping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub folds: Vec<Vec<String>>,
    /// Environment id -> unit (environment mode) or hybrid id -> cluster
    /// unit (hybrid mode).
    pub unit_of: BTreeMap<String, String>,
}

impl SplitPlan {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    /// The unit an observation belongs to.
    pub fn unit(&self, obs: &Observation) -> Result<&str> {
        let key = match self.mode {
            SplitMode::Environment => &obs.env_id,
            SplitMode::Hybrid => &obs.hybrid_id,
        };
        self.unit_of
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Data(format!("observation key {key:?} missing from the split plan")))
    }

    /// The 10 rotations: run r tests on group r, validates on group r+1.
    pub fn runs(&self) -> Vec<RunSplit> {
        let k = self.folds.len();
        (0..k)
            .map(|r| {
                let test = r;
                let val = (r + 1) % k;
                let mut train_units = BTreeSet::new();
                for (g, fold) in self.folds.iter().enumerate() {
                    if g != test && g != val {
                        train_units.extend(fold.iter().cloned());
                    }
                }
                RunSplit {
                    run: r,
                    train_units,
                    val_units: self.folds[val].iter().cloned().collect(),
                    test_units: self.folds[test].iter().cloned().collect(),
                }
            })
            .collect()
    }

    /// Observation indices `(train, val, test)` for one rotation.
    pub fn split_observations(
        &self,
        observations: &[Observation],
        run: &RunSplit,
    ) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut test = Vec::new();
        for (i, obs) in observations.iter().enumerate() {
            let unit = self.unit(obs)?;
            if run.train_units.contains(unit) {
                train.push(i);
            } else if run.val_units.contains(unit) {
                val.push(i);
            } else if run.test_units.contains(unit) {
                test.push(i);
            } else {
                return Err(Error::Data(format!("unit {unit:?} not in any fold group")));
            }
        }
        Ok((train, val, test))
    }

    /// The groups must partition the unit set: no duplicates, none missing.
    pub fn check_partition(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for fold in &self.folds {
            for unit in fold {
                if !seen.insert(unit.clone()) {
                    return Err(Error::Data(format!("unit {unit:?} appears in two fold groups")));
                }
            }
        }
        let referenced: BTreeSet<&String> = self.unit_of.values().collect();
        for unit in referenced {
            if !seen.contains(unit) {
                return Err(Error::Data(format!("unit {unit:?} missing from the fold groups")));
            }
        }
        Ok(())
    }
}

/// Flattened one-hot center columns (4 values per modeling SNP) per hybrid,
/// the clustering representation for the hybrid split.
pub fn hybrid_vectors(
    table: &GenotypeTable,
    snp_ids: &[String],
    hybrids: &[String],
) -> Result<Vec<f64>> {
    let sub = table.subset(snp_ids)?;
    let index = sub.hybrid_index();
    let s = snp_ids.len();
    let mut out = Vec::with_capacity(hybrids.len() * 4 * s);
    for h in hybrids {
        let Some(&i) = index.get(h.as_str()) else {
            return Err(Error::Data(format!("hybrid {h:?} missing from genotype table")));
        };
        for j in 0..s {
            let call = sub.call(i, j);
            let col = encode_letter(call).map_err(|_| {
                Error::Data(format!(
                    "hybrid {h:?} has unresolved call {call:?} at modeling SNP {:?}",
                    snp_ids[j]
                ))
            })?;
            out.extend_from_slice(&col);
        }
    }
    Ok(out)
}

/// Build a fold plan over the observations.
///
/// `genotypes` must carry the table and the modeling SNP ids in hybrid mode
/// and is ignored in environment mode. `clusters` is the k of the hybrid
/// clustering.
pub fn make_split(
    observations: &[Observation],
    mode: SplitMode,
    genotypes: Option<(&GenotypeTable, &[String])>,
    clusters: usize,
    folds: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if folds < 3 {
        return Err(Error::Config(format!(
            "need at least 3 folds for train/val/test rotations, got {folds}"
        )));
    }
    let (mut units, unit_of) = match mode {
        SplitMode::Environment => {
            let envs: BTreeSet<&str> = observations.iter().map(|o| o.env_id.as_str()).collect();
            let units: Vec<String> = envs.iter().map(|s| s.to_string()).collect();
            let unit_of = units.iter().map(|e| (e.clone(), e.clone())).collect();
            (units, unit_of)
        }
        SplitMode::Hybrid => {
            let Some((table, snp_ids)) = genotypes else {
                return Err(Error::Config(
                    "hybrid split requires the genotype table and modeling SNP ids".into(),
                ));
            };
            let hybrid_set: BTreeSet<&str> =
                observations.iter().map(|o| o.hybrid_id.as_str()).collect();
            let hybrids: Vec<String> = hybrid_set.iter().map(|s| s.to_string()).collect();
            let vectors = hybrid_vectors(table, snp_ids, &hybrids)?;
            let result = kmeans(&vectors, hybrids.len(), 4 * snp_ids.len(), clusters, seed)?;
            let width = clusters.to_string().len().max(3);
            let unit_name = |c: usize| format!("cluster_{c:0width$}");
            let unit_of: BTreeMap<String, String> = hybrids
                .iter()
                .zip(&result.assignment)
                .map(|(h, &c)| (h.clone(), unit_name(c)))
                .collect();
            let units: BTreeSet<String> = unit_of.values().cloned().collect();
            (units.into_iter().collect(), unit_of)
        }
    };

    if units.len() < folds {
        return Err(Error::Data(format!(
            "{} units cannot fill {folds} folds",
            units.len()
        )));
    }

    let mut rng = RngStream::new(seed, &format!("split/{}", mode.label()));
    rng.shuffle(&mut units);
    let mut groups = vec![Vec::new(); folds];
    for (i, unit) in units.into_iter().enumerate() {
        groups[i % folds].push(unit);
    }
    let plan = SplitPlan {
        mode,
        folds: groups,
        unit_of,
    };
    plan.check_partition()?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SnpDescriptor;

    fn obs_grid(envs: usize, hybrids: usize) -> Vec<Observation> {
        let mut out = Vec::new();
        for e in 0..envs {
            for h in 0..hybrids {
                out.push(Observation {
                    env_id: format!("loc{e:02}_2015"),
                    hybrid_id: format!("h{h:03}"),
                    yield_value: (e + h) as f64,
                });
            }
        }
        out
    }

    #[test]
    fn sixty_seven_envs_deal_into_groups_of_6_or_7() {
        let obs = obs_grid(67, 2);
        let plan = make_split(&obs, SplitMode::Environment, None, 0, 10, 7).unwrap();
        assert_eq!(plan.folds.len(), 10);
        for fold in &plan.folds {
            assert!(fold.len() == 6 || fold.len() == 7, "group size {}", fold.len());
        }
        let total: usize = plan.folds.iter().map(Vec::len).sum();
        assert_eq!(total, 67);
        plan.check_partition().unwrap();
    }

    #[test]
    fn environment_rotations_are_disjoint() {
        let obs = obs_grid(23, 3);
        let plan = make_split(&obs, SplitMode::Environment, None, 0, 10, 3).unwrap();
        for run in plan.runs() {
            assert!(run.train_units.is_disjoint(&run.val_units));
            assert!(run.train_units.is_disjoint(&run.test_units));
            assert!(run.val_units.is_disjoint(&run.test_units));
            let (train, val, test) = plan.split_observations(&obs, &run).unwrap();
            assert_eq!(train.len() + val.len() + test.len(), obs.len());
        }
    }

    #[test]
    fn same_seed_same_plan() {
        let obs = obs_grid(15, 2);
        let a = make_split(&obs, SplitMode::Environment, None, 0, 10, 99).unwrap();
        let b = make_split(&obs, SplitMode::Environment, None, 0, 10, 99).unwrap();
        assert_eq!(a.folds, b.folds);
        let c = make_split(&obs, SplitMode::Environment, None, 0, 10, 100).unwrap();
        assert_ne!(a.folds, c.folds);
    }

    #[test]
    fn too_few_units_rejected() {
        let obs = obs_grid(5, 2);
        assert!(make_split(&obs, SplitMode::Environment, None, 0, 10, 1).is_err());
    }

    fn toy_table(hybrids: usize, snps: usize) -> GenotypeTable {
        let descriptors: Vec<SnpDescriptor> = (0..snps)
            .map(|j| SnpDescriptor {
                id: format!("s{j:02}"),
                chromosome: 1 + (j % 10) as u32,
                position: 50 + j as u64,
                context: "AAGAA".into(),
            })
            .collect();
        let letters = [b'A', b'R', b'G'];
        let mut rng = RngStream::new(40, "split/test-table");
        let calls: Vec<u8> = (0..hybrids * snps)
            .map(|_| letters[rng.index(3)])
            .collect();
        GenotypeTable::new(
            descriptors,
            (0..hybrids).map(|h| format!("h{h:03}")).collect(),
            calls,
        )
        .unwrap()
    }

    #[test]
    fn hybrid_split_clusters_and_stays_disjoint() {
        let table = toy_table(40, 6);
        let obs = obs_grid(4, 40);
        let snp_ids: Vec<String> = table.snps.iter().map(|s| s.id.clone()).collect();
        let plan = make_split(&obs, SplitMode::Hybrid, Some((&table, &snp_ids)), 12, 4, 5).unwrap();
        plan.check_partition().unwrap();
        // No cluster appears in two of train/val/test; exhaustive check.
        for run in plan.runs() {
            let (train, val, test) = plan.split_observations(&obs, &run).unwrap();
            let unit_sets: Vec<BTreeSet<&str>> = [&train, &val, &test]
                .iter()
                .map(|idx| {
                    idx.iter()
                        .map(|&i| plan.unit(&obs[i]).unwrap())
                        .collect::<BTreeSet<&str>>()
                })
                .collect();
            assert!(unit_sets[0].is_disjoint(&unit_sets[1]));
            assert!(unit_sets[0].is_disjoint(&unit_sets[2]));
            assert!(unit_sets[1].is_disjoint(&unit_sets[2]));
        }
    }

    #[test]
    fn hybrid_mode_requires_genotypes() {
        let obs = obs_grid(4, 40);
        assert!(make_split(&obs, SplitMode::Hybrid, None, 10, 4, 5).is_err());
    }
}

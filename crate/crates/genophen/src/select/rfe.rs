//! Recursive feature elimination driven by boosting gain importance.
//!
//! Each round refits the booster on the surviving features and drops the
//! lowest-gain 10% of them (never overshooting the target). Ties are broken
//! by snp id order, so the procedure is deterministic.

use serde::{Deserialize, Serialize};

use super::gbdt::{fit_gbdt_binned, BinnedMatrix, GbdtConfig};
use crate::error::{Error, Result};

/// Survivors after one elimination round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfeRound {
    pub round: usize,
    pub survivors: Vec<String>,
}

/// Output of the elimination: per-round survivors and the final set ordered
/// by decreasing gain in the last fit.
#[derive(Debug, Clone)]
pub struct RfeResult {
    pub rounds: Vec<RfeRound>,
    /// Final ids ordered by gain rank (descending, ties by id order).
    pub selected: Vec<String>,
    /// Gain and split count of the final fit, aligned with `selected`.
    pub gains: Vec<f64>,
    pub split_counts: Vec<u32>,
}

/// Eliminate down to exactly `target` features.
pub fn rfe_select(
    binned: &BinnedMatrix,
    y: &[f64],
    ids: &[String],
    target: usize,
    config: &GbdtConfig,
) -> Result<RfeResult> {
    let p = ids.len();
    if binned.n_features() != p {
        return Err(Error::Shape(format!(
            "{} ids for {} features",
            p,
            binned.n_features()
        )));
    }
    if target == 0 || target > p {
        return Err(Error::Data(format!(
            "elimination target {target} outside 1..={p}"
        )));
    }

    let mut active: Vec<usize> = (0..p).collect();
    let mut rounds = Vec::new();
    let mut round = 0;
    loop {
        let model = fit_gbdt_binned(binned, y, &active, config)?;
        // Order the active set by (gain desc, id asc).
        let mut ranked = active.clone();
        ranked.sort_by(|&a, &b| {
            model.gain_importance[b]
                .total_cmp(&model.gain_importance[a])
                .then_with(|| ids[a].cmp(&ids[b]))
        });
        if active.len() == target {
            let gains = ranked.iter().map(|&f| model.gain_importance[f]).collect();
            let split_counts = ranked.iter().map(|&f| model.split_count[f]).collect();
            return Ok(RfeResult {
                rounds,
                selected: ranked.iter().map(|&f| ids[f].clone()).collect(),
                gains,
                split_counts,
            });
        }
        let tenth = active.len().div_ceil(10);
        let drop = tenth.min(active.len() - target);
        ranked.truncate(active.len() - drop);
        ranked.sort_unstable(); // keep feature-index order between rounds
        active = ranked;
        round += 1;
        rounds.push(RfeRound {
            round,
            survivors: active.iter().map(|&f| ids[f].clone()).collect(),
        });
    }
}

//! Pearson correlation, RMSE and the cross-validation report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample Pearson correlation; `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 || n != b.len() {
        return None;
    }
    let nf = n as f64;
    let ma = a.iter().sum::<f64>() / nf;
    let mb = b.iter().sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    debug_assert_eq!(pred.len(), truth.len());
    let n = pred.len() as f64;
    (pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Point metrics of one prediction set, in original yield units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` when the truth (or prediction) is constant.
    pub pearson: Option<f64>,
    pub rmse: f64,
}

/// Compare predictions against ground truth. Predictions must already be in
/// original units (inverse-scaled).
pub fn evaluate(preds: &[f64], truth: &[f64]) -> Result<Metrics> {
    if preds.len() != truth.len() || preds.len() < 2 {
        return Err(Error::Data(format!(
            "evaluate needs two equal-length series of at least 2, got {} and {}",
            preds.len(),
            truth.len()
        )));
    }
    Ok(Metrics {
        pearson: pearson(preds, truth),
        rmse: rmse(preds, truth),
    })
}

/// One epoch of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_rmse: f64,
}

/// Per-fold outcome inside a [`MetricReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub pearson: Option<f64>,
    pub rmse: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochStat>,
}

/// Cross-validation outcome: per-fold metrics plus their mean and standard
/// deviation (population, over the folds actually run).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub split_mode: String,
    pub variant: String,
    pub seed: u64,
    pub folds: Vec<FoldMetrics>,
    pub mean_pearson: Option<f64>,
    pub std_pearson: Option<f64>,
    pub mean_rmse: f64,
    pub std_rmse: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricReport {
    pub fn from_folds(
        split_mode: &str,
        variant: &str,
        seed: u64,
        mut folds: Vec<FoldMetrics>,
    ) -> MetricReport {
        folds.sort_by_key(|f| f.fold);
        let rmses: Vec<f64> = folds.iter().map(|f| f.rmse).collect();
        let (mean_rmse, std_rmse) = mean_std(&rmses);
        let pearsons: Vec<f64> = folds.iter().filter_map(|f| f.pearson).collect();
        let (mean_pearson, std_pearson) = if pearsons.len() == folds.len() {
            let (m, s) = mean_std(&pearsons);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        MetricReport {
            split_mode: split_mode.to_string(),
            variant: variant.to_string(),
            seed,
            folds,
            mean_pearson,
            std_pearson,
            mean_rmse,
            std_rmse,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat `(fold, split_mode, variant, pearson, rmse)` table.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("fold\tsplit_mode\tvariant\tpearson\trmse\n");
        for f in &self.folds {
            let r = f
                .pearson
                .map(|r| r.to_string())
                .unwrap_or_else(|| "undefined".into());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                f.fold, self.split_mode, self.variant, r, f.rmse
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RngStream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_predictions() {
        let y = vec![1.0, 2.0, 3.5, -1.0];
        let m = evaluate(&y, &y).unwrap();
        assert_eq!(m.pearson, Some(1.0));
        assert_eq!(m.rmse, 0.0);
    }

    #[test]
    fn anti_correlated() {
        let y = vec![1.0, -2.0, 3.5, -1.0, 0.25];
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let m = evaluate(&neg, &y).unwrap();
        assert_abs_diff_eq!(m.pearson.unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn affine_invariance_of_pearson() {
        let mut rng = RngStream::new(91, "metrics/affine");
        for _ in 0..100 {
            let n = 5 + rng.index(50);
            let y: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 2.0)).collect();
            let a = rng.uniform_in(0.1, 4.0);
            let b = rng.normal(0.0, 3.0);
            let scaled: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let r = pearson(&scaled, &y).unwrap();
            assert!((r - 1.0).abs() <= 1e-12, "r = {r}");
        }
    }

    #[test]
    fn constant_truth_reports_undefined_pearson() {
        let truth = vec![3.0; 5];
        let preds = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let m = evaluate(&preds, &truth).unwrap();
        assert_eq!(m.pearson, None);
        assert!(m.rmse > 0.0, "RMSE still computed");
    }

    #[test]
    fn evaluate_validates_lengths() {
        assert!(evaluate(&[1.0], &[1.0]).is_err());
        assert!(evaluate(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn report_aggregates() {
        let folds: Vec<FoldMetrics> = (0..4)
            .map(|i| FoldMetrics {
                fold: i,
                pearson: Some(0.5 + i as f64 * 0.1),
                rmse: 1.0 + i as f64,
                best_epoch: 3,
                history: Vec::new(),
            })
            .collect();
        let report = MetricReport::from_folds("environment", "full", 7, folds);
        assert_abs_diff_eq!(report.mean_rmse, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(report.mean_pearson.unwrap(), 0.65, epsilon = 1e-12);
        assert_eq!(report.folds.len(), 4);
        assert!(report.to_tsv().lines().count() == 5);
    }
}

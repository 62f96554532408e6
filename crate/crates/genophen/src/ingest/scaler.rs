//! Standard scaling fitted on training rows only.
//!
//! The scaler remembers which rows it was fitted on via `fit_set`, so
//! leakage checks can assert that validation and test data were transformed
//! with the training-split statistics. Zero-variance features are flagged
//! and scaled by 1 (still centered).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub fit_set: String,
    pub features: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// True where the feature had zero variance in the fit set.
    pub constant: Vec<bool>,
}

impl StandardScaler {
    /// Fit per-feature mean and (population) standard deviation.
    pub fn fit<'a, I>(features: &[String], rows: I, fit_set: &str) -> Result<StandardScaler>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let p = features.len();
        let mut sum = vec![0.0; p];
        let mut sum_sq = vec![0.0; p];
        let mut n = 0usize;
        for row in rows {
            if row.len() != p {
                return Err(Error::Shape(format!(
                    "scaler fit row has {} values for {} features",
                    row.len(),
                    p
                )));
            }
            for j in 0..p {
                sum[j] += row[j];
                sum_sq[j] += row[j] * row[j];
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Data("cannot fit a scaler on an empty set".into()));
        }
        let nf = n as f64;
        let means: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let mut stds = Vec::with_capacity(p);
        let mut constant = Vec::with_capacity(p);
        for j in 0..p {
            let var = (sum_sq[j] / nf - means[j] * means[j]).max(0.0);
            let std = var.sqrt();
            if std > 0.0 {
                stds.push(std);
                constant.push(false);
            } else {
                stds.push(1.0);
                constant.push(true);
            }
        }
        Ok(StandardScaler {
            fit_set: fit_set.to_string(),
            features: features.to_vec(),
            means,
            stds,
            constant,
        })
    }

    /// Fit a single-feature scaler, typically for the target.
    pub fn fit_single(name: &str, values: &[f64], fit_set: &str) -> Result<StandardScaler> {
        let rows: Vec<&[f64]> = values.chunks(1).collect();
        StandardScaler::fit(&[name.to_string()], rows.into_iter(), fit_set)
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.means.len());
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - self.means[j]) / self.stds[j];
        }
    }

    pub fn inverse_row(&self, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.means.len());
        for (j, v) in row.iter_mut().enumerate() {
            *v = *v * self.stds[j] + self.means[j];
        }
    }

    /// Transform a single value with a single-feature scaler.
    pub fn transform_value(&self, v: f64) -> f64 {
        (v - self.means[0]) / self.stds[0]
    }

    pub fn inverse_value(&self, v: f64) -> f64 {
        v * self.stds[0] + self.means[0]
    }

    /// Guard against applying a scaler fitted on a different split.
    pub fn check_fit_set(&self, expected: &str) -> Result<()> {
        if self.fit_set == expected {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "scaler was fitted on {:?} but is being applied in context expecting {:?}",
                self.fit_set, expected
            )))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scaler serializes")
    }

    pub fn from_json(text: &str) -> Result<StandardScaler> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("invalid scaler JSON: {e}")))
    }
}

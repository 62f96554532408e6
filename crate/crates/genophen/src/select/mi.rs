//! Plug-in mutual information between a categorical variable and a
//! continuous one, in nats.
//!
//! The continuous variable is discretized into quantile bins (equal-count by
//! rank, ties resolved by input order), then the empirical joint yields
//! `MI = sum p(x,b) ln(p(x,b) / (p(x) p(b)))`. As a KL divergence of the
//! empirical joint from the product of its marginals, the estimate is
//! nonnegative by construction.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Quantile-bin assignment of `y` into `bins` equal-count bins by rank.
pub fn quantile_bins(y: &[f64], bins: usize) -> Vec<usize> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut assignment = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        assignment[i] = rank * bins / n;
    }
    assignment
}

/// Mutual information in nats between genotype classes `x` and continuous
/// `y` discretized into `bins` quantile bins.
pub fn mutual_information(x: &[u8], y: &[f64], bins: usize) -> Result<f64> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Data("mutual information of empty input".into()));
    }
    if n != y.len() {
        return Err(Error::Shape(format!(
            "mutual information inputs differ in length: {} vs {}",
            n,
            y.len()
        )));
    }
    if bins == 0 || n < bins {
        return Err(Error::Data(format!(
            "need at least {bins} samples for {bins} bins, got {n}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("mutual information target non-finite".into()));
    }
    let assignment = quantile_bins(y, bins);
    Ok(mi_from_labels(x, &assignment))
}

/// Plug-in MI of two label sequences.
pub(crate) fn mi_from_labels(x: &[u8], b: &[usize]) -> f64 {
    let n = x.len() as f64;
    let mut joint: BTreeMap<(u8, usize), usize> = BTreeMap::new();
    let mut px: BTreeMap<u8, usize> = BTreeMap::new();
    let mut pb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&xi, &bi) in x.iter().zip(b) {
        *joint.entry((xi, bi)).or_insert(0) += 1;
        *px.entry(xi).or_insert(0) += 1;
        *pb.entry(bi).or_insert(0) += 1;
    }
    let mut mi = 0.0;
    for (&(xi, bi), &c) in &joint {
        let pxy = c as f64 / n;
        let p_x = px[&xi] as f64 / n;
        let p_b = pb[&bi] as f64 / n;
        mi += pxy * (pxy / (p_x * p_b)).ln();
    }
    mi
}

/// Exact MI in nats of a fully specified joint distribution given as a
/// matrix of probabilities (rows: x classes, columns: y classes).
pub fn analytic_mi(joint: &[Vec<f64>]) -> f64 {
    let px: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
    let cols = joint[0].len();
    let pb: Vec<f64> = (0..cols).map(|b| joint.iter().map(|row| row[b]).sum()).collect();
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (b, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (px[i] * pb[b])).ln();
            }
        }
    }
    mi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RngStream;

    #[test]
    fn balanced_binary_equals_ln2() {
        let n = 100_000;
        let x: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let mi = mutual_information(&x, &y, 2).unwrap();
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-12, "mi = {mi}");
    }

    #[test]
    fn independent_sampled_near_zero() {
        let n = 100_000;
        let mut rng = RngStream::new(61, "mi/independent");
        let x: Vec<u8> = (0..n).map(|_| rng.index(3) as u8).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.0)).collect();
        let mi = mutual_information(&x, &y, 16).unwrap();
        assert!(mi >= 0.0);
        assert!(mi < 0.01, "mi = {mi}");
    }

    #[test]
    fn constant_x_gives_zero() {
        let n = 500;
        let mut rng = RngStream::new(62, "mi/constant");
        let x = vec![1u8; n];
        let y: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.0)).collect();
        assert_eq!(mutual_information(&x, &y, 16).unwrap(), 0.0);
    }

    #[test]
    fn nonnegative_on_random_inputs() {
        let mut rng = RngStream::new(63, "mi/nonneg");
        for _ in 0..50 {
            let n = 64 + rng.index(400);
            let x: Vec<u8> = (0..n).map(|_| rng.index(3) as u8).collect();
            let y: Vec<f64> = (0..n)
                .map(|i| x[i] as f64 * 0.3 + rng.normal(0.0, 1.0))
                .collect();
            let mi = mutual_information(&x, &y, 16).unwrap();
            assert!(mi >= 0.0, "mi = {mi}");
        }
    }

    #[test]
    fn input_validation() {
        assert!(mutual_information(&[], &[], 2).is_err());
        assert!(mutual_information(&[1], &[1.0], 2).is_err());
        assert!(mutual_information(&[1, 0], &[1.0], 2).is_err());
        assert!(mutual_information(&[1, 0], &[1.0, f64::NAN], 2).is_err());
    }

    #[test]
    fn exact_count_joint_matches_analytic() {
        // 2x2 joint with counts 40/10/10/40 per 100 rows.
        let joint = vec![vec![0.4, 0.1], vec![0.1, 0.4]];
        let want = analytic_mi(&joint);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (xi, row) in joint.iter().enumerate() {
            for (b, &p) in row.iter().enumerate() {
                let count = (p * 1000.0).round() as usize;
                for k in 0..count {
                    x.push(xi as u8);
                    // Distinct y values inside each class keep ranks stable.
                    y.push(b as f64 + k as f64 * 1e-6);
                }
            }
        }
        let got = mutual_information(&x, &y, 2).unwrap();
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::vector::{dist_sq, mean_of};
use crate::stats::{ClientId, GradientBatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessQuery {
    pub f: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessVerdict {
    pub robust: bool,
    /// Client ids of the subset with the largest `lhs / rhs` ratio.
    pub witness: Vec<ClientId>,
    /// `|aggregate - mean_G|^2` on the witness subset.
    pub lhs: f64,
    /// `kappa / (n - f) * sum_{i in G} |g_i - mean_G|^2` on the witness subset.
    pub rhs: f64,
}

impl RobustnessVerdict {
    pub fn ratio(&self) -> f64 {
        violation_ratio(self.lhs, self.rhs)
    }
}

// Relative slack for the inequality; equality cases are common in hand fixtures.
const SLACK: f64 = 1e-9;

fn violation_ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs > SLACK {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Calls `visit` with every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Evaluates the (f, kappa)-robustness inequality for one aggregate against
/// every subset of `n - f` inputs. Exponential in `n`; meant for small fixtures.
pub fn check_f_kappa_robustness(
    batch: &GradientBatch,
    aggregate: &[f64],
    query: RobustnessQuery,
) -> Result<RobustnessVerdict> {
    let n = batch.len();
    if query.f >= n {
        return Err(Error::InvalidInput(format!(
            "subset size n - f must be positive (n = {n}, f = {})",
            query.f
        )));
    }
    if !(query.kappa >= 0.0) {
        return Err(Error::InvalidParameter("kappa must be nonnegative".into()));
    }
    if aggregate.len() != batch.dim() {
        return Err(Error::InvalidInput("aggregate dimension mismatch".into()));
    }
    let size = n - query.f;
    let mut robust = true;
    let mut worst: Option<(f64, Vec<usize>, f64, f64)> = None;
    for_each_subset(n, size, |subset| {
        let mean = mean_of(subset.iter().map(|&p| batch.row(p)), batch.dim());
        let spread: f64 = subset.iter().map(|&p| dist_sq(batch.row(p), &mean)).sum();
        let lhs = dist_sq(aggregate, &mean);
        let rhs = query.kappa / size as f64 * spread;
        if lhs > rhs + SLACK * (1.0 + rhs) {
            robust = false;
        }
        let ratio = violation_ratio(lhs, rhs);
        if worst.as_ref().is_none_or(|w| ratio > w.0) {
            worst = Some((ratio, subset.to_vec(), lhs, rhs));
        }
    });
    let (_, subset, lhs, rhs) = worst.expect("at least one subset");
    Ok(RobustnessVerdict {
        robust,
        witness: subset.iter().map(|&p| batch.ids()[p]).collect(),
        lhs,
        rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[&[f64]]) -> GradientBatch {
        GradientBatch::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn subsets_are_enumerated_once() {
        let mut seen = Vec::new();
        for_each_subset(5, 3, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 10);
        seen.dedup();
        assert_eq!(seen.len(), 10);
        let mut all = Vec::new();
        for_each_subset(3, 3, |s| all.push(s.to_vec()));
        assert_eq!(all, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn identical_rows_pass() {
        let b = batch(&[&[1., 1.], &[1., 1.], &[1., 1.]]);
        let v = check_f_kappa_robustness(&b, &[1., 1.], RobustnessQuery { f: 1, kappa: 0.0 }).unwrap();
        assert!(v.robust);
    }

    #[test]
    fn mean_fails_median_passes() {
        let b = batch(&[&[0.], &[0.], &[9.]]);
        let v = check_f_kappa_robustness(&b, &[3.], RobustnessQuery { f: 1, kappa: 1e6 }).unwrap();
        assert!(!v.robust);
        assert_eq!(v.witness, vec![0, 1]);
        assert_eq!(v.lhs, 9.0);

        let v = check_f_kappa_robustness(&b, &[0.], RobustnessQuery { f: 1, kappa: 1.0 }).unwrap();
        assert!(v.robust);
        assert!((v.lhs - 20.25).abs() < 1e-12 && (v.rhs - 20.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_f_equal_n() {
        let b = batch(&[&[0.], &[1.]]);
        assert!(check_f_kappa_robustness(&b, &[0.], RobustnessQuery { f: 2, kappa: 1.0 }).is_err());
    }
}

use serde::Serialize;

use crate::attacks::{strike_stage1_select, AttackContext, SkewSelection};
use crate::error::{Error, Result};
use crate::stats::{coordinate_mean, coordinate_median, coordinate_std, vector, GradientBatch};

#[derive(Debug, Clone)]
pub struct SkewReport {
    /// `|median - mean| / (pooled std + 1e-12)`.
    pub score: f64,
    /// Per-coordinate Pearson second skewness `3 (mean - median) / std`.
    pub pearson_terms: Vec<f64>,
    pub selection: SkewSelection,
}

#[derive(Serialize)]
struct SkewJson<'a> {
    score: f64,
    pearson_terms: &'a [f64],
    selected: &'a [usize],
    mean_s: &'a [f64],
    honest_mean: &'a [f64],
    mean_s_distance: f64,
    distances_to_mean: Vec<(usize, f64)>,
}

impl SkewReport {
    /// JSON for external plotting: score, selected ids, the selected mean and
    /// each gradient's distance to the honest mean.
    pub fn to_json(&self, honest: &GradientBatch) -> serde_json::Value {
        let mean = coordinate_mean(honest);
        let doc = SkewJson {
            score: self.score,
            pearson_terms: &self.pearson_terms,
            selected: &self.selection.selected,
            mean_s: &self.selection.mean_s,
            honest_mean: &mean,
            mean_s_distance: vector::dist(&self.selection.mean_s, &mean),
            distances_to_mean: honest.iter().map(|(id, g)| (id, vector::dist(g, &mean))).collect(),
        };
        serde_json::to_value(doc).expect("plain data serializes")
    }
}

/// Pearson-style skew of a set of honest gradients. The attached selection
/// assumes the default Byzantine share, one attacker per four honest clients.
pub fn skew_score(honest: &GradientBatch) -> Result<SkewReport> {
    skew_score_with(honest, honest.len() / 4)
}

/// Same score, with the selection an attacker controlling `byzantine`
/// clients would make.
pub fn skew_score_with(honest: &GradientBatch, byzantine: usize) -> Result<SkewReport> {
    if honest.len() < 2 {
        return Err(Error::InvalidInput("skew needs at least two gradients".into()));
    }
    let mean = coordinate_mean(honest);
    let median = coordinate_median(honest);
    let std = coordinate_std(honest);
    let pooled = (std.iter().map(|s| s * s).sum::<f64>() / std.len() as f64).sqrt();
    let score = vector::dist(&median, &mean) / (pooled + 1e-12);
    let pearson_terms = mean
        .iter()
        .zip(&median)
        .zip(&std)
        .map(|((m, md), s)| 3.0 * (m - md) / (s + 1e-12))
        .collect();
    let ctx = AttackContext::new(honest.clone(), honest.len() + byzantine, byzantine)?;
    Ok(SkewReport {
        score,
        pearson_terms,
        selection: strike_stage1_select(&ctx)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[&[f64]]) -> GradientBatch {
        GradientBatch::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(skew_score(&batch(&[&[-1.], &[1.]])).unwrap().score, 0.0);
        let r = skew_score_with(&batch(&[&[0.], &[1.], &[2.], &[9.]]), 1).unwrap();
        assert!((r.score - 1.5 / 12.5f64.sqrt()).abs() < 1e-12);
        assert!((r.score - 0.4243).abs() < 1e-3);
        assert_eq!(r.selection.selected.len(), 3);
        // mean 3 > median 1.5: positive Pearson term
        assert!(r.pearson_terms[0] > 0.0);
        assert!(skew_score(&batch(&[&[3.]])).is_err());
    }

    #[test]
    fn scale_invariant() {
        let b = batch(&[&[0., 1.], &[1., 5.], &[2., 2.], &[9., -3.], &[4., 4.]]);
        let a = skew_score(&b).unwrap().score;
        for c in [0.01, 3.0, 1e4] {
            let s = skew_score(&b.map_rows(|r| vector::scale(r, c)).unwrap()).unwrap().score;
            assert!((a - s).abs() < 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn json_fields() {
        let b = batch(&[&[0.], &[1.], &[2.], &[9.]]);
        let r = skew_score_with(&b, 1).unwrap();
        let v = r.to_json(&b);
        assert_eq!(v["selected"], serde_json::json!([0, 1, 2]));
        assert!(v["distances_to_mean"].as_array().unwrap().len() == 4);
    }
}

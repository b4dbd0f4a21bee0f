use rand::seq::index;

use super::{dnc_removal, CClipParams, DncParams, RfaParams};
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::linalg::DEFAULT_POWER_ITERATIONS;
use crate::stats::vector::{self, axpy, dist, dist_sq, mean_of};
use crate::stats::{coordinate_mean, coordinate_median, top_singular_direction, GradientBatch};

pub fn aggregate_mean(batch: &GradientBatch) -> Vec<f64> {
    coordinate_mean(batch)
}

pub fn coordinate_median_rule(batch: &GradientBatch) -> Vec<f64> {
    coordinate_median(batch)
}

fn mean_at(batch: &GradientBatch, positions: &[usize]) -> Vec<f64> {
    mean_of(positions.iter().map(|&p| batch.row(p)), batch.dim())
}

/// Krum score of every row: the sum of squared distances to its `n - f - 2`
/// nearest other rows. Requires `n >= 2f + 2`.
pub fn krum_scores(batch: &GradientBatch, f: usize) -> Result<Vec<f64>> {
    let n = batch.len();
    if n < 2 * f + 2 {
        return Err(Error::InsufficientClients {
            rule: "multi_krum",
            requirement: format!("n >= 2f + 2 with f = {f}"),
            n,
        });
    }
    let neighbors = n - f - 2;
    Ok((0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| dist_sq(batch.row(i), batch.row(j)))
                .collect();
            d.sort_by(f64::total_cmp);
            d[..neighbors].iter().sum()
        })
        .collect())
}

/// Mean of the `n - f` rows with the lowest Krum scores (ties go to the lower client id).
pub fn multi_krum(batch: &GradientBatch, f: usize) -> Result<Vec<f64>> {
    let scores = krum_scores(batch, f)?;
    let ids = batch.ids();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(ids[a].cmp(&ids[b])));
    order.truncate(batch.len() - f);
    Ok(mean_at(batch, &order))
}

fn geometric_objective(batch: &GradientBatch, v: &[f64]) -> f64 {
    batch.row_slices().map(|g| dist(g, v)).sum()
}

/// Every iterate of the smoothed Weiszfeld iteration, starting with the mean.
///
/// Within `smoothing` of a data point the capped weight can push the iterate
/// uphill on the true objective; such a step is rejected and the iterate kept.
pub fn rfa_iterates(batch: &GradientBatch, params: &RfaParams) -> Vec<Vec<f64>> {
    let mut v = coordinate_mean(batch);
    let mut objective = geometric_objective(batch, &v);
    let mut out = Vec::with_capacity(params.iterations + 1);
    out.push(v.clone());
    for _ in 0..params.iterations {
        let mut num = vec![0.0; batch.dim()];
        let mut den = 0.0;
        for g in batch.row_slices() {
            let w = 1.0 / dist(g, &v).max(params.smoothing);
            axpy(&mut num, w, g);
            den += w;
        }
        num.iter_mut().for_each(|x| *x /= den);
        let next = geometric_objective(batch, &num);
        if next <= objective {
            v = num;
            objective = next;
        }
        out.push(v.clone());
    }
    out
}

/// Geometric median by smoothed Weiszfeld (RFA).
pub fn rfa_geometric_median(batch: &GradientBatch, params: &RfaParams) -> Vec<f64> {
    rfa_iterates(batch, params)
        .pop()
        .expect("at least the starting point")
}

/// Geometric-median objective `sum_i |g_i - v_t|` at every RFA iterate.
pub fn rfa_objective_trace(batch: &GradientBatch, params: &RfaParams) -> Vec<f64> {
    rfa_iterates(batch, params)
        .iter()
        .map(|v| geometric_objective(batch, v))
        .collect()
}

/// Keeps the clients whose squared distance to the coordinate median is at
/// most the median of those distances, and averages them.
pub fn aksel(batch: &GradientBatch) -> Vec<f64> {
    let med = coordinate_median(batch);
    let scores: Vec<f64> = batch.row_slices().map(|g| dist_sq(g, &med)).collect();
    let threshold = vector::median(&mut scores.clone());
    let kept: Vec<usize> = (0..batch.len()).filter(|&i| scores[i] <= threshold).collect();
    mean_at(batch, &kept)
}

fn clip(x: &[f64], radius: f64) -> Vec<f64> {
    let n = vector::norm(x);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    vector::scale(x, (radius / n).min(1.0))
}

/// Centered clipping around the previous aggregate (or zero without warm start).
pub fn centered_clip(
    batch: &GradientBatch,
    params: &CClipParams,
    previous_aggregate: &[f64],
) -> Result<Vec<f64>> {
    if !(params.clip_radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "clip radius must be positive, got {}",
            params.clip_radius
        )));
    }
    if previous_aggregate.len() != batch.dim() {
        return Err(Error::InvalidInput(
            "previous aggregate dimension mismatch".into(),
        ));
    }
    let mut v = if params.warm_start {
        previous_aggregate.to_vec()
    } else {
        vec![0.0; batch.dim()]
    };
    let inv = 1.0 / batch.len() as f64;
    for _ in 0..params.inner_iterations {
        let mut step = vec![0.0; batch.dim()];
        for g in batch.row_slices() {
            axpy(&mut step, inv, &clip(&vector::sub(g, &v), params.clip_radius));
        }
        axpy(&mut v, 1.0, &step);
    }
    Ok(v)
}

/// Divide-and-conquer spectral filtering.
///
/// Each outer iteration samples `min(b, d)` coordinates, scores the surviving
/// clients by their squared projection on the top singular direction of the
/// centered restricted rows and drops the `floor(c * f)` highest scores.
pub fn dnc(batch: &GradientBatch, f: usize, params: &DncParams) -> Result<Vec<f64>> {
    let n = batch.len();
    let removal = dnc_removal(params, f);
    let mut rng = rng::stream(&[params.seed]);
    let mut survivors: Vec<usize> = (0..n).collect();
    for _ in 0..params.outer_iterations {
        if removal >= survivors.len() {
            return Err(Error::InsufficientClients {
                rule: "dnc",
                requirement: format!("more than floor(c * f) = {removal} survivors"),
                n: survivors.len(),
            });
        }
        let d = batch.dim();
        let mut coords = index::sample(&mut rng, d, params.subsample_dim.min(d)).into_vec();
        coords.sort_unstable();
        let restricted: Vec<Vec<f64>> = survivors
            .iter()
            .map(|&p| coords.iter().map(|&k| batch.row(p)[k]).collect())
            .collect();
        let mu = mean_of(restricted.iter().map(Vec::as_slice), coords.len());
        let centered: Vec<Vec<f64>> = restricted.iter().map(|r| vector::sub(r, &mu)).collect();
        let centered = GradientBatch::from_rows(centered)?;
        let power_seed = rand::Rng::random::<u64>(&mut rng);
        let dir = top_singular_direction(&centered, DEFAULT_POWER_ITERATIONS, power_seed);
        let scores: Vec<f64> = centered
            .row_slices()
            .map(|r| vector::dot(r, &dir.vector).powi(2))
            .collect();
        let mut order: Vec<usize> = (0..survivors.len()).collect();
        let id = |slot: usize| batch.ids()[survivors[slot]];
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(id(a).cmp(&id(b))));
        let mut drop = order[..removal].to_vec();
        drop.sort_unstable();
        survivors = survivors
            .iter()
            .enumerate()
            .filter(|(slot, _)| drop.binary_search(slot).is_err())
            .map(|(_, &p)| p)
            .collect();
    }
    Ok(mean_at(batch, &survivors))
}

/// Coordinate-wise mean after discarding the `f` largest and `f` smallest values.
pub fn trimmed_mean_rbtm(batch: &GradientBatch, f: usize) -> Result<Vec<f64>> {
    let n = batch.len();
    if n <= 2 * f {
        return Err(Error::InsufficientClients {
            rule: "rbtm",
            requirement: format!("n > 2f with f = {f}"),
            n,
        });
    }
    let mut column = vec![0.0; n];
    Ok((0..batch.dim())
        .map(|k| {
            for (slot, row) in column.iter_mut().zip(batch.rows()) {
                *slot = row[k];
            }
            column.sort_by(f64::total_cmp);
            column[f..n - f].iter().sum::<f64>() / (n - 2 * f) as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[&[f64]]) -> GradientBatch {
        GradientBatch::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn mean_examples() {
        assert_eq!(aggregate_mean(&batch(&[&[1.], &[3.]])), vec![2.]);
        assert_eq!(aggregate_mean(&batch(&[&[1., 0.], &[0., 1.], &[2., 5.]])), vec![1., 2.]);
    }

    #[test]
    fn multi_krum_examples() {
        let b = batch(&[&[0.], &[1.], &[2.], &[10.]]);
        assert_eq!(krum_scores(&b, 1).unwrap(), vec![1., 1., 1., 64.]);
        assert_eq!(multi_krum(&b, 1).unwrap(), vec![1.]);
        assert_eq!(multi_krum(&batch(&[&[0.], &[0.], &[0.], &[5.]]), 1).unwrap(), vec![0.]);
        assert!(matches!(
            multi_krum(&batch(&[&[0.], &[1.], &[2.], &[3.]]), 2),
            Err(Error::InsufficientClients { .. })
        ));
    }

    #[test]
    fn rfa_examples() {
        let p = RfaParams::default();
        let same = batch(&[&[1.5, -2.], &[1.5, -2.], &[1.5, -2.]]);
        assert!(close(&rfa_geometric_median(&same, &p), &[1.5, -2.], 1e-9));

        let two = rfa_geometric_median(&batch(&[&[0.], &[2.]]), &p);
        assert!(((two[0] - 0.0).abs() + (two[0] - 2.0).abs() - 2.0).abs() < 1e-9);

        let three = rfa_geometric_median(&batch(&[&[0.], &[1.], &[10.]]), &p);
        assert!((three[0] - 1.0).abs() < 0.05, "{three:?}");
    }

    #[test]
    fn rfa_objective_non_increasing() {
        let b = batch(&[&[0., 1.], &[3., -1.], &[10., 10.], &[2., 2.], &[-4., 0.5]]);
        let trace = rfa_objective_trace(&b, &RfaParams { iterations: 30, smoothing: 1e-6 });
        for w in trace.windows(2) {
            assert!(w[1] <= w[0], "{trace:?}");
        }

        // The mean is a data point and already optimal; the capped weight
        // alone would move the iterate off it.
        let at_point = batch(&[&[0.], &[1.], &[1.], &[-3.], &[3.], &[-2.], &[0.]]);
        let trace = rfa_objective_trace(&at_point, &RfaParams::default());
        assert!(trace.iter().all(|&o| o == 10.0), "{trace:?}");
    }

    #[test]
    fn aksel_examples() {
        assert_eq!(aksel(&batch(&[&[0.], &[1.], &[2.]])), vec![1.]);
        assert_eq!(aksel(&batch(&[&[0.], &[1.], &[9.]])), vec![0.5]);
        assert_eq!(aksel(&batch(&[&[4., 4.], &[4., 4.]])), vec![4., 4.]);
    }

    #[test]
    fn cclip_examples() {
        let p = CClipParams::default();
        let v0 = [2.5, -1.0];
        let same = batch(&[&v0, &v0]);
        assert_eq!(centered_clip(&same, &p, &v0).unwrap(), v0.to_vec());

        assert_eq!(centered_clip(&batch(&[&[1.], &[3.]]), &p, &[0.]).unwrap(), vec![2.]);

        let tight = CClipParams { clip_radius: 1.0, ..p };
        assert_eq!(centered_clip(&batch(&[&[3.], &[0.]]), &tight, &[0.]).unwrap(), vec![0.5]);

        let bad = CClipParams { clip_radius: 0.0, ..p };
        assert!(matches!(
            centered_clip(&same, &bad, &v0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn cclip_cold_start_ignores_previous() {
        let p = CClipParams { warm_start: false, ..CClipParams::default() };
        let out = centered_clip(&batch(&[&[1.], &[3.]]), &p, &[100.]).unwrap();
        assert_eq!(out, vec![2.]);
    }

    #[test]
    fn dnc_examples() {
        let p = DncParams::default();
        let same = batch(&[&[1., 2.], &[1., 2.], &[1., 2.]]);
        assert!(close(&dnc(&same, 1, &p).unwrap(), &[1., 2.], 1e-12));

        let one_d = batch(&[&[0.], &[1.], &[2.], &[10.]]);
        assert!(close(&dnc(&one_d, 1, &p).unwrap(), &[1.], 1e-12));

        let two_d = batch(&[&[0., 0.], &[0., 1.], &[0., 2.], &[8., 1.]]);
        for seed in 0..5 {
            let out = dnc(&two_d, 1, &DncParams { seed, ..p }).unwrap();
            assert!(close(&out, &[0., 1.], 1e-12), "{out:?}");
        }
    }

    #[test]
    fn dnc_rejects_total_removal() {
        let b = batch(&[&[0.], &[1.]]);
        let p = DncParams { filter_fraction: 2.0, ..DncParams::default() };
        assert!(matches!(dnc(&b, 1, &p), Err(Error::InsufficientClients { .. })));
    }

    #[test]
    fn dnc_subsamples_coordinates() {
        // the outlier differs only in coordinate 0, so any subsample that
        // excludes it cannot see it; with b = d it is always found
        let b = batch(&[&[0., 0., 0.], &[0., 1., 0.], &[0., 0., 1.], &[50., 0.5, 0.5]]);
        let p = DncParams { subsample_dim: 3, ..DncParams::default() };
        let out = dnc(&b, 1, &p).unwrap();
        assert!(close(&out, &[0., 1. / 3., 1. / 3.], 1e-12));
    }

    #[test]
    fn rbtm_examples() {
        assert_eq!(trimmed_mean_rbtm(&batch(&[&[0.], &[1.], &[2.], &[9.]]), 1).unwrap(), vec![1.5]);
        assert_eq!(
            trimmed_mean_rbtm(&batch(&[&[0., 9.], &[1., 1.], &[2., 0.], &[9., 2.]]), 1).unwrap(),
            vec![1.5, 1.5]
        );
        assert!(trimmed_mean_rbtm(&batch(&[&[0.], &[1.]]), 1).is_err());
    }
}

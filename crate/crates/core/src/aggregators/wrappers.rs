use rand::seq::SliceRandom;

use super::BucketingParams;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::vector::{dist_sq, mean_of};
use crate::stats::GradientBatch;

/// Shuffles the rows with the seeded permutation, averages consecutive
/// buckets of `bucket_size` rows (the last may be smaller) and hands the
/// bucket means to `inner` together with `f' = ceil(f / s)`.
pub fn bucketing_wrap<F>(
    batch: &GradientBatch,
    params: &BucketingParams,
    f: usize,
    inner: F,
) -> Result<Vec<f64>>
where
    F: FnOnce(&GradientBatch, usize) -> Result<Vec<f64>>,
{
    let s = params.bucket_size;
    if s == 0 {
        return Err(Error::InvalidParameter("bucket size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.shuffle(&mut rng::stream(&[params.seed]));
    let means: Vec<Vec<f64>> = order
        .chunks(s)
        .map(|bucket| mean_of(bucket.iter().map(|&p| batch.row(p)), batch.dim()))
        .collect();
    let buckets = GradientBatch::from_rows(means)?;
    inner(&buckets, f.div_ceil(s))
}

/// Replaces every row by the mean of its `n - f` nearest rows (itself
/// included; distance ties resolved toward the lower client id).
pub fn nnm_mix(batch: &GradientBatch, f: usize) -> Result<GradientBatch> {
    let n = batch.len();
    if n <= f {
        return Err(Error::InsufficientClients {
            rule: "nnm",
            requirement: format!("n > f with f = {f}"),
            n,
        });
    }
    let keep = n - f;
    let mixed = (0..n)
        .map(|i| {
            let d: Vec<f64> = (0..n).map(|j| dist_sq(batch.row(i), batch.row(j))).collect();
            let mut order: Vec<usize> = (0..n).collect();
            let ids = batch.ids();
            order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(ids[a].cmp(&ids[b])));
            mean_of(order[..keep].iter().map(|&p| batch.row(p)), batch.dim())
        })
        .collect();
    GradientBatch::new(batch.ids().to_vec(), mixed)
}

/// Nearest-neighbor mixing followed by `inner` on the mixed rows.
pub fn nnm_wrap<F>(batch: &GradientBatch, f: usize, inner: F) -> Result<Vec<f64>>
where
    F: FnOnce(&GradientBatch, usize) -> Result<Vec<f64>>,
{
    let mixed = nnm_mix(batch, f)?;
    inner(&mixed, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregators::{AggregatorSpec, Rule, Wrapper};
    use crate::stats::{coordinate_mean, coordinate_median};

    fn batch(rows: &[&[f64]]) -> GradientBatch {
        GradientBatch::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn bucket_size_one_is_the_inner_rule() {
        let b = batch(&[&[0., 5.], &[1., -1.], &[7., 2.], &[3., 3.], &[-2., 0.]]);
        let p = BucketingParams { bucket_size: 1, seed: 3 };
        let out = bucketing_wrap(&b, &p, 1, |inner, f| {
            assert_eq!(f, 1);
            Ok(coordinate_median(inner))
        })
        .unwrap();
        assert_eq!(out, coordinate_median(&b));
    }

    #[test]
    fn equal_buckets_preserve_the_mean() {
        let b = batch(&[&[0., 5.], &[1., -1.], &[7., 2.], &[3., 3.]]);
        for seed in 0..8 {
            let p = BucketingParams { bucket_size: 2, seed };
            let out = bucketing_wrap(&b, &p, 1, |inner, f| {
                assert_eq!(inner.len(), 2);
                assert_eq!(f, 1);
                Ok(coordinate_mean(inner))
            })
            .unwrap();
            let mean = coordinate_mean(&b);
            assert!(out.iter().zip(&mean).all(|(a, m)| (a - m).abs() < 1e-12));
        }
    }

    #[test]
    fn uneven_last_bucket() {
        let b = batch(&[&[0.], &[1.], &[2.], &[3.], &[4.]]);
        let p = BucketingParams { bucket_size: 2, seed: 11 };
        bucketing_wrap(&b, &p, 3, |inner, f| {
            assert_eq!(inner.len(), 3);
            assert_eq!(f, 2);
            Ok(vec![0.0])
        })
        .unwrap();
    }

    #[test]
    fn nnm_examples() {
        let same = batch(&[&[2., 2.], &[2., 2.], &[2., 2.]]);
        assert_eq!(nnm_mix(&same, 1).unwrap(), same);

        let b = batch(&[&[0.], &[1.], &[10.]]);
        let all = nnm_mix(&b, 0).unwrap();
        for row in all.rows() {
            assert!((row[0] - 11.0 / 3.0).abs() < 1e-12);
        }

        let mixed = nnm_mix(&b, 1).unwrap();
        assert_eq!(mixed.rows(), &[vec![0.5], vec![0.5], vec![5.5]]);
        let out = nnm_wrap(&b, 1, |m, _| Ok(coordinate_mean(m))).unwrap();
        assert!((out[0] - 2.1667).abs() < 1e-4);

        assert!(nnm_mix(&b, 3).is_err());
    }

    #[test]
    fn spec_composes_wrappers_outermost_first() {
        let b = batch(&[&[0.], &[1.], &[2.], &[3.], &[100.], &[101.]]);
        let spec = AggregatorSpec::new(Rule::Median)
            .with_wrapper(Wrapper::Bucketing(BucketingParams { bucket_size: 2, seed: 0 }))
            .with_wrapper(Wrapper::Nnm);
        assert_eq!(spec.name(), "bucketing+nnm+median");
        let out = spec.aggregate(&b, 2, None, 0).unwrap();
        assert!(out[0].is_finite());
        spec.check_counts(6, 2).unwrap();

        let krum = AggregatorSpec::new(Rule::MultiKrum);
        assert!(krum.check_counts(5, 2).is_err());
        assert!(krum.check_counts(6, 2).is_ok());
        let bucketed = krum
            .clone()
            .with_wrapper(Wrapper::Bucketing(BucketingParams { bucket_size: 2, seed: 0 }));
        // 3 buckets with f' = 1 fall short of 2f' + 2
        assert!(bucketed.check_counts(6, 2).is_err());
        assert!(bucketed.check_counts(8, 2).is_ok());
    }
}

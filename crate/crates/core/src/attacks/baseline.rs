use super::{AttackContext, IpmParams, LieParams, MinOptParams};
use crate::error::{Error, Result};
use crate::stats::linalg::DEFAULT_POWER_ITERATIONS;
use crate::stats::vector::{self, dist, dist_sq};
use crate::stats::{coordinate_std, pairwise_diameter, top_singular_direction, GradientBatch};

pub fn bitflip_attack(own: &[f64]) -> Vec<f64> {
    own.iter().map(|x| -x).collect()
}

/// `y -> c - 1 - y`.
pub fn labelflip_transform(label: usize, num_classes: usize) -> Result<usize> {
    if label >= num_classes {
        return Err(Error::InvalidInput(format!(
            "label {label} outside 0..{num_classes}"
        )));
    }
    Ok(num_classes - 1 - label)
}

/// `mu - z * sigma` over the honest gradients.
pub fn lie_attack(ctx: &AttackContext, params: &LieParams) -> Vec<f64> {
    let sigma = coordinate_std(ctx.honest());
    ctx.honest_mean()
        .iter()
        .zip(&sigma)
        .map(|(m, s)| m - params.z * s)
        .collect()
}

pub fn ipm_attack(ctx: &AttackContext, params: &IpmParams) -> Vec<f64> {
    vector::scale(ctx.honest_mean(), -params.epsilon)
}

/// Largest `gamma` in `[0, inf)` with `feasible(gamma)`, assuming the feasible
/// set is an interval starting at zero and bounded above.
///
/// Doubles from `gamma_init` (or halves the bracket below it) and bisects
/// until the bracket is narrower than `tau`; the feasible end is returned.
pub fn search_gamma(feasible: impl Fn(f64) -> bool, gamma_init: f64, tau: f64) -> f64 {
    let (mut lo, mut hi) = if feasible(gamma_init) {
        let mut lo = gamma_init;
        let mut hi = 2.0 * gamma_init;
        while feasible(hi) {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return lo;
            }
        }
        (lo, hi)
    } else {
        (0.0, gamma_init)
    };
    while hi - lo >= tau {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn perturbed(mu: &[f64], sigma: &[f64], gamma: f64) -> Vec<f64> {
    mu.iter().zip(sigma).map(|(m, s)| m + gamma * s).collect()
}

/// `mu + gamma * sigma` with the largest `gamma` keeping the vector within the
/// honest diameter of every honest gradient.
pub fn minmax_attack(ctx: &AttackContext, params: &MinOptParams) -> Vec<f64> {
    let honest = ctx.honest();
    let mu = ctx.honest_mean();
    let sigma = coordinate_std(honest);
    if sigma.iter().all(|&s| s == 0.0) {
        return mu.to_vec();
    }
    let bound = pairwise_diameter(honest);
    let feasible = |gamma: f64| {
        let g = perturbed(mu, &sigma, gamma);
        honest.row_slices().all(|h| dist(&g, h) <= bound)
    };
    let gamma = search_gamma(feasible, params.gamma_init, params.tau);
    perturbed(mu, &sigma, gamma)
}

fn sum_sq_to(honest: &GradientBatch, g: &[f64]) -> f64 {
    honest.row_slices().map(|h| dist_sq(g, h)).sum()
}

/// `mu + gamma * sigma` with the largest `gamma` keeping the summed squared
/// distance to the honest gradients within the largest honest one.
pub fn minsum_attack(ctx: &AttackContext, params: &MinOptParams) -> Vec<f64> {
    let honest = ctx.honest();
    let mu = ctx.honest_mean();
    let sigma = coordinate_std(honest);
    if sigma.iter().all(|&s| s == 0.0) {
        return mu.to_vec();
    }
    let bound = honest
        .row_slices()
        .map(|h| sum_sq_to(honest, h))
        .fold(0.0, f64::max);
    let feasible = |gamma: f64| sum_sq_to(honest, &perturbed(mu, &sigma, gamma)) <= bound;
    let gamma = search_gamma(feasible, params.gamma_init, params.tau);
    perturbed(mu, &sigma, gamma)
}

/// Copies the honest gradient with the largest squared deviation along the
/// top singular direction of the centered honest gradients.
pub fn mimic_attack(ctx: &AttackContext) -> Vec<f64> {
    let honest = ctx.honest();
    let mu = ctx.honest_mean();
    let centered = honest
        .map_rows(|r| vector::sub(r, mu))
        .expect("centering keeps the batch valid");
    let dir = top_singular_direction(&centered, DEFAULT_POWER_ITERATIONS, 0);
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (pos, row) in centered.row_slices().enumerate() {
        let score = vector::dot(row, &dir.vector).powi(2);
        if score > best_score {
            best = pos;
            best_score = score;
        }
    }
    honest.row(best).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(rows: &[&[f64]], f: usize) -> AttackContext {
        let honest =
            GradientBatch::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap();
        AttackContext::new(honest, rows.len() + f, f).unwrap()
    }

    #[test]
    fn bitflip_examples() {
        assert_eq!(bitflip_attack(&[1., -2.]), vec![-1., 2.]);
        assert_eq!(bitflip_attack(&[0., 0.]), vec![-0., -0.]);
        let v = [0.3, -7.0, 2.5];
        assert_eq!(bitflip_attack(&bitflip_attack(&v)), v.to_vec());
    }

    #[test]
    fn labelflip_examples() {
        assert_eq!(labelflip_transform(3, 10).unwrap(), 6);
        assert_eq!(labelflip_transform(0, 10).unwrap(), 9);
        for y in 0..10 {
            assert_eq!(labelflip_transform(labelflip_transform(y, 10).unwrap(), 10).unwrap(), y);
        }
        assert!(labelflip_transform(10, 10).is_err());
    }

    #[test]
    fn lie_examples() {
        let same = ctx(&[&[2., 1.], &[2., 1.]], 1);
        assert_eq!(lie_attack(&same, &LieParams::default()), vec![2., 1.]);
        let c = ctx(&[&[0.], &[2.]], 1);
        assert_eq!(lie_attack(&c, &LieParams { z: 1.5 }), vec![-0.5]);
        assert_eq!(lie_attack(&c, &LieParams { z: 0.0 }), vec![1.0]);
    }

    #[test]
    fn ipm_examples() {
        let c = ctx(&[&[10.]], 1);
        assert!((ipm_attack(&c, &IpmParams::default())[0] + 1.0).abs() < 1e-12);
        let z = ctx(&[&[0., 0.]], 1);
        assert_eq!(ipm_attack(&z, &IpmParams::default()), vec![-0., -0.]);
        let c = ctx(&[&[1., -3.], &[3., 5.]], 1);
        assert_eq!(ipm_attack(&c, &IpmParams { epsilon: 1.0 }), vec![-2., -1.]);
    }

    #[test]
    fn minmax_examples() {
        let p = MinOptParams::default();
        assert_eq!(minmax_attack(&ctx(&[&[4.], &[4.]], 1), &p), vec![4.]);
        let two = minmax_attack(&ctx(&[&[0.], &[2.]], 1), &p);
        assert!((two[0] - 2.0).abs() < 1e-4, "{two:?}");
        let three = minmax_attack(&ctx(&[&[0.], &[1.], &[2.]], 1), &p);
        assert!((three[0] - 2.0).abs() < 1e-3, "{three:?}");
    }

    #[test]
    fn minsum_examples() {
        let p = MinOptParams::default();
        assert_eq!(minsum_attack(&ctx(&[&[4.], &[4.]], 1), &p), vec![4.]);
        let two = minsum_attack(&ctx(&[&[0.], &[2.]], 1), &p);
        assert!((two[0] - 2.0).abs() < 1e-4, "{two:?}");
        let three = minsum_attack(&ctx(&[&[0.], &[1.], &[2.]], 1), &p);
        assert!((three[0] - 2.0).abs() < 1e-3, "{three:?}");
    }

    #[test]
    fn gamma_search_handles_both_sides_of_init() {
        let g = search_gamma(|x| x <= 3.7, 10.0, 1e-6);
        assert!(g <= 3.7 && 3.7 - g < 1e-6);
        let g = search_gamma(|x| x <= 123.4, 10.0, 1e-6);
        assert!(g <= 123.4 && 123.4 - g < 1e-6);
    }

    #[test]
    fn mimic_examples() {
        assert_eq!(mimic_attack(&ctx(&[&[1., 1.], &[1., 1.]], 1)), vec![1., 1.]);
        assert_eq!(mimic_attack(&ctx(&[&[0.], &[1.], &[10.]], 1)), vec![10.]);
        assert_eq!(mimic_attack(&ctx(&[&[-1.], &[1.]], 1)), vec![-1.]);
    }
}

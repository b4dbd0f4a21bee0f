//! The two-stage gradient-skew attack.
//!
//! Stage one walks from the honest mean toward the coordinate-wise median and
//! keeps the `n - 2f` honest gradients with the largest scalar projection on
//! that direction. Stage two places every Byzantine gradient at
//! `mean_S + nu * alpha * sign(mean_S - mean) * std_S`, where `alpha` is the
//! largest value keeping the point within the diameter of the selected set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AttackContext, StrikeParams};
use crate::error::{Error, Result};
use crate::stats::vector::{self, dist, sign};
use crate::stats::{
    coordinate_mean, coordinate_median, coordinate_std, pairwise_diameter, scalar_projection,
    ClientId, GradientBatch,
};

// Below this norm the median-minus-mean direction is treated as zero.
const DEGENERATE_DIRECTION: f64 = 1e-12;

/// Stage-one output.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewSelection {
    /// `median - mean` of the honest gradients.
    pub direction: Vec<f64>,
    pub projections: BTreeMap<ClientId, f64>,
    /// Ids of the selected gradients, ascending.
    pub selected: Vec<ClientId>,
    /// The selected gradients, aligned with `selected`.
    pub selected_rows: GradientBatch,
    pub mean_s: Vec<f64>,
    pub std_s: Vec<f64>,
    pub diameter_s: f64,
    /// True when the direction vanished and the lowest ids were taken.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub alpha: f64,
    /// Upper bracket after the doubling phase.
    pub upper_bracket: f64,
    pub doublings: usize,
    pub bisection_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrikeDiagnostics {
    pub alpha: f64,
    pub selected: Vec<ClientId>,
}

pub fn strike_stage1_select(ctx: &AttackContext) -> Result<SkewSelection> {
    let (n, f) = (ctx.n(), ctx.f());
    if n < 2 * f + 1 {
        return Err(Error::InsufficientClients {
            rule: "strike",
            requirement: format!("n - 2f >= 1 with f = {f}"),
            n,
        });
    }
    let keep = n - 2 * f;
    let honest = ctx.honest();
    let direction = vector::sub(&coordinate_median(honest), ctx.honest_mean());
    let degenerate = vector::norm(&direction) < DEGENERATE_DIRECTION;

    let scores: Vec<f64> = if degenerate {
        vec![0.0; honest.len()]
    } else {
        honest
            .row_slices()
            .map(|g| scalar_projection(g, &direction))
            .collect::<Result<_>>()?
    };
    let mut order: Vec<usize> = (0..honest.len()).collect();
    if degenerate {
        order.sort_by_key(|&p| honest.ids()[p]);
    } else {
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(honest.ids()[a].cmp(&honest.ids()[b]))
        });
    }
    let mut chosen = order[..keep].to_vec();
    chosen.sort_by_key(|&p| honest.ids()[p]);
    let selected_rows = honest.select(&chosen)?;

    Ok(SkewSelection {
        projections: honest.ids().iter().copied().zip(scores).collect(),
        selected: selected_rows.ids().to_vec(),
        mean_s: coordinate_mean(&selected_rows),
        std_s: coordinate_std(&selected_rows),
        diameter_s: pairwise_diameter(&selected_rows),
        selected_rows,
        direction,
        degenerate,
    })
}

/// `sign(mean_S - mean) * std_S`, the per-coordinate step of stage two.
fn step_direction(sel: &SkewSelection, honest_mean: &[f64]) -> Vec<f64> {
    sel.mean_s
        .iter()
        .zip(honest_mean)
        .zip(&sel.std_s)
        .map(|((ms, m), s)| sign(ms - m) * s)
        .collect()
}

fn candidate(sel: &SkewSelection, step: &[f64], alpha: f64) -> Vec<f64> {
    sel.mean_s
        .iter()
        .zip(step)
        .map(|(m, s)| m + alpha * s)
        .collect()
}

fn residual_with(sel: &SkewSelection, step: &[f64], alpha: f64) -> f64 {
    let g = candidate(sel, step, alpha);
    let reach = sel
        .selected_rows
        .row_slices()
        .map(|r| dist(&g, r))
        .fold(0.0, f64::max);
    reach - sel.diameter_s
}

/// `max_{i in S} |mean_S + alpha * sign(mean_S - mean) * std_S - g_i| - diameter(S)`.
pub fn strike_residual(sel: &SkewSelection, honest_mean: &[f64], alpha: f64) -> f64 {
    residual_with(sel, &step_direction(sel, honest_mean), alpha)
}

/// Root of [`strike_residual`] on `[0, inf)`: doubling from 1 until the
/// residual is nonnegative, then bisection until the bracket is narrower than
/// `tolerance * max(1, upper)` or the iteration budget runs out.
pub fn strike_bisection(
    sel: &SkewSelection,
    honest_mean: &[f64],
    params: &StrikeParams,
) -> Bisection {
    let step = step_direction(sel, honest_mean);
    let degenerate = Bisection {
        alpha: 0.0,
        upper_bracket: 0.0,
        doublings: 0,
        bisection_steps: 0,
    };
    if sel.diameter_s == 0.0 || step.iter().all(|&s| s == 0.0) {
        return degenerate;
    }
    let f = |alpha: f64| residual_with(sel, &step, alpha);

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        doublings += 1;
        if !hi.is_finite() {
            return degenerate;
        }
    }
    let width = params.bisect_tolerance * hi.max(1.0);
    let upper_bracket = hi;
    let mut steps = 0;
    while hi - lo > width && steps < params.bisect_max_iters {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    Bisection {
        alpha: 0.5 * (lo + hi),
        upper_bracket,
        doublings,
        bisection_steps: steps,
    }
}

pub fn strike_attack_with_diagnostics(
    ctx: &AttackContext,
    params: &StrikeParams,
) -> Result<(Vec<f64>, StrikeDiagnostics)> {
    let sel = strike_stage1_select(ctx)?;
    let alpha = strike_bisection(&sel, ctx.honest_mean(), params).alpha;
    let step = step_direction(&sel, ctx.honest_mean());
    let g = candidate(&sel, &step, params.nu * alpha);
    Ok((
        g,
        StrikeDiagnostics {
            alpha,
            selected: sel.selected,
        },
    ))
}

/// The Byzantine gradient shared by every Byzantine client.
pub fn strike_attack(ctx: &AttackContext, params: &StrikeParams) -> Result<Vec<f64>> {
    strike_attack_with_diagnostics(ctx, params).map(|(g, _)| g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(rows: &[&[f64]], n: usize, f: usize) -> AttackContext {
        let honest =
            GradientBatch::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap();
        AttackContext::new(honest, n, f).unwrap()
    }

    /// Selection over explicit rows, bypassing stage one.
    fn selection_of(rows: &[&[f64]]) -> SkewSelection {
        let b = GradientBatch::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap();
        SkewSelection {
            direction: vec![0.0; b.dim()],
            projections: BTreeMap::new(),
            selected: b.ids().to_vec(),
            mean_s: coordinate_mean(&b),
            std_s: coordinate_std(&b),
            diameter_s: pairwise_diameter(&b),
            selected_rows: b,
            degenerate: false,
        }
    }

    #[test]
    fn stage1_examples() {
        let sel = strike_stage1_select(&ctx(&[&[0.], &[1.], &[2.], &[9.]], 6, 2)).unwrap();
        assert_eq!(sel.selected, vec![0, 1]);
        assert_eq!(sel.direction, vec![-1.5]);
        for (id, p) in &sel.projections {
            let g = [0., 1., 2., 9.][*id];
            assert!((p + g).abs() < 1e-12);
        }

        let sel = strike_stage1_select(&ctx(
            &[&[0., 0.], &[0., 1.], &[0., 2.], &[0., 9.]],
            6,
            2,
        ))
        .unwrap();
        assert_eq!(sel.selected, vec![0, 1]);

        let sel = strike_stage1_select(&ctx(&[&[3., 3.], &[3., 3.], &[3., 3.]], 4, 1)).unwrap();
        assert!(sel.degenerate);
        assert_eq!(sel.selected, vec![0, 1]);
        assert_eq!(sel.mean_s, vec![3., 3.]);
        assert_eq!(sel.std_s, vec![0., 0.]);
    }

    #[test]
    fn stage1_rejects_byzantine_majority() {
        let honest = GradientBatch::from_rows(vec![vec![0.], vec![1.]]).unwrap();
        let c = AttackContext::new(honest, 4, 2).unwrap();
        assert!(strike_stage1_select(&c).is_err());
    }

    #[test]
    fn bisection_closed_form_roots() {
        let p = StrikeParams::default();
        // f(alpha) = 0.5 + 0.5 alpha - 1
        let b = strike_bisection(&selection_of(&[&[0.], &[1.]]), &[3.], &p);
        assert!((b.alpha - 1.0).abs() <= 0.01, "{b:?}");
        assert!(b.bisection_steps <= 8);

        let b = strike_bisection(&selection_of(&[&[2.], &[2.]]), &[3.], &p);
        assert_eq!(b.alpha, 0.0);

        // f(alpha) = 1 + alpha - 2
        let b = strike_bisection(&selection_of(&[&[0.], &[2.]]), &[5.], &p);
        assert!((b.alpha - 1.0).abs() <= 0.01, "{b:?}");
        assert!(b.bisection_steps <= 8);
    }

    #[test]
    fn bisection_agrees_with_grid_oracle() {
        let sel = selection_of(&[&[0., 1.], &[1., 3.], &[2., 0.5], &[0.5, 0.5]]);
        let mean = [4.0, -2.0];
        // smallest grid alpha with a nonnegative residual
        let grid_root = (0..200_000)
            .map(|k| k as f64 * 1e-4)
            .find(|&a| strike_residual(&sel, &mean, a) >= 0.0)
            .unwrap();
        let tight = StrikeParams { bisect_tolerance: 1e-9, ..StrikeParams::default() };
        let b = strike_bisection(&sel, &mean, &tight);
        assert!((b.alpha - grid_root).abs() < 2e-4, "{} vs {grid_root}", b.alpha);
        let coarse = strike_bisection(&sel, &mean, &StrikeParams::default());
        assert!((coarse.alpha - grid_root).abs() <= 0.01 * grid_root.max(1.0));
    }

    #[test]
    fn full_pipeline_trace() {
        let c = ctx(&[&[0.], &[1.], &[2.], &[9.]], 6, 2);
        let (g, diag) = strike_attack_with_diagnostics(&c, &StrikeParams::default()).unwrap();
        assert!((diag.alpha - 1.0).abs() <= 0.01);
        assert_eq!(diag.selected, vec![0, 1]);
        assert!(g[0].abs() < 1e-2, "{g:?}");

        let zero = StrikeParams { nu: 0.0, ..StrikeParams::default() };
        assert_eq!(strike_attack(&c, &zero).unwrap(), vec![0.5]);

        let double = StrikeParams { nu: 2.0, ..StrikeParams::default() };
        let g2 = strike_attack(&c, &double).unwrap();
        assert!((g2[0] + 0.5).abs() < 2e-2, "{g2:?}");
    }
}

//! Byzantine attack strategies.
//!
//! Except for BitFlip and LabelFlip, attacks see only the honest gradients of
//! the current round and emit one vector shared by every Byzantine client.

mod baseline;
mod strike;

pub use baseline::{
    bitflip_attack, ipm_attack, labelflip_transform, lie_attack, mimic_attack, minmax_attack,
    minsum_attack, search_gamma,
};
pub use strike::{
    strike_attack, strike_attack_with_diagnostics, strike_bisection, strike_residual,
    strike_stage1_select, Bisection, SkewSelection, StrikeDiagnostics,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{coordinate_mean, GradientBatch};

/// What the attacker knows in one round.
#[derive(Debug, Clone)]
pub struct AttackContext {
    honest: GradientBatch,
    n: usize,
    f: usize,
    honest_mean: Vec<f64>,
    byzantine_own: Option<GradientBatch>,
}

impl AttackContext {
    /// `honest` must hold exactly `n - f >= 1` rows.
    pub fn new(honest: GradientBatch, n: usize, f: usize) -> Result<Self> {
        if f > n || honest.len() != n - f {
            return Err(Error::InvalidInput(format!(
                "attack context with n = {n}, f = {f} needs {} honest rows, got {}",
                n.saturating_sub(f),
                honest.len()
            )));
        }
        let honest_mean = coordinate_mean(&honest);
        Ok(Self {
            honest,
            n,
            f,
            honest_mean,
            byzantine_own: None,
        })
    }

    /// Attaches the gradients the Byzantine clients computed honestly
    /// (one row per Byzantine client), used by the data-driven attacks.
    pub fn with_byzantine_own(mut self, own: GradientBatch) -> Result<Self> {
        if own.len() != self.f || own.dim() != self.honest.dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} Byzantine rows of dimension {}",
                self.f,
                self.honest.dim()
            )));
        }
        self.byzantine_own = Some(own);
        Ok(self)
    }

    pub fn honest(&self) -> &GradientBatch {
        &self.honest
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn honest_mean(&self) -> &[f64] {
        &self.honest_mean
    }

    pub fn byzantine_own(&self) -> Option<&GradientBatch> {
        self.byzantine_own.as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrikeParams {
    pub nu: f64,
    pub bisect_tolerance: f64,
    pub bisect_max_iters: usize,
}

impl Default for StrikeParams {
    fn default() -> Self {
        Self {
            nu: 1.0,
            bisect_tolerance: 1e-2,
            bisect_max_iters: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LieParams {
    pub z: f64,
}

impl Default for LieParams {
    fn default() -> Self {
        Self { z: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpmParams {
    pub epsilon: f64,
}

impl Default for IpmParams {
    fn default() -> Self {
        Self { epsilon: 0.1 }
    }
}

/// Shared by MinMax and MinSum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinOptParams {
    pub gamma_init: f64,
    pub tau: f64,
}

impl Default for MinOptParams {
    fn default() -> Self {
        Self {
            gamma_init: 10.0,
            tau: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Attack {
    /// Byzantine clients behave honestly.
    None,
    BitFlip,
    /// Byzantine clients train on labels mapped by `y -> c - 1 - y`.
    LabelFlip,
    Lie(LieParams),
    Ipm(IpmParams),
    MinMax(MinOptParams),
    MinSum(MinOptParams),
    Mimic,
    Strike(StrikeParams),
}

/// The vectors submitted by the Byzantine clients of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Crafted {
    /// One row per Byzantine client, in the order of the context's Byzantine rows.
    pub gradients: Vec<Vec<f64>>,
    pub strike: Option<StrikeDiagnostics>,
}

impl Attack {
    pub const NAMES: [&'static str; 9] = [
        "none",
        "bitflip",
        "labelflip",
        "lie",
        "ipm",
        "minmax",
        "minsum",
        "mimic",
        "strike",
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "none" => Attack::None,
            "bitflip" => Attack::BitFlip,
            "labelflip" => Attack::LabelFlip,
            "lie" => Attack::Lie(LieParams::default()),
            "ipm" => Attack::Ipm(IpmParams::default()),
            "minmax" => Attack::MinMax(MinOptParams::default()),
            "minsum" => Attack::MinSum(MinOptParams::default()),
            "mimic" => Attack::Mimic,
            "strike" => Attack::Strike(StrikeParams::default()),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Attack::None => "none",
            Attack::BitFlip => "bitflip",
            Attack::LabelFlip => "labelflip",
            Attack::Lie(_) => "lie",
            Attack::Ipm(_) => "ipm",
            Attack::MinMax(_) => "minmax",
            Attack::MinSum(_) => "minsum",
            Attack::Mimic => "mimic",
            Attack::Strike(_) => "strike",
        }
    }

    /// Whether Byzantine clients must run honest local training first.
    pub fn needs_own_gradients(&self) -> bool {
        matches!(self, Attack::None | Attack::BitFlip | Attack::LabelFlip)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            Attack::Strike(p) => {
                if !(p.nu >= 0.0 && p.nu.is_finite()) {
                    return bad("strike nu must be a finite nonnegative number");
                }
                if !(p.bisect_tolerance > 0.0) || p.bisect_max_iters == 0 {
                    return bad("strike bisection needs tolerance > 0 and max iterations >= 1");
                }
            }
            Attack::Lie(p) if !p.z.is_finite() => return bad("lie z must be finite"),
            Attack::Ipm(p) if !p.epsilon.is_finite() => return bad("ipm epsilon must be finite"),
            Attack::MinMax(p) | Attack::MinSum(p) => {
                if !(p.gamma_init > 0.0 && p.gamma_init.is_finite()) || !(p.tau > 0.0) {
                    return bad("gamma_init and tau must be positive");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Produces the Byzantine submissions for one round.
    pub fn craft(&self, ctx: &AttackContext) -> Result<Crafted> {
        self.validate()?;
        let shared = |g: Vec<f64>| Crafted {
            gradients: vec![g; ctx.f()],
            strike: None,
        };
        let own = || {
            ctx.byzantine_own().ok_or_else(|| {
                Error::InvalidInput(format!(
                    "{} attack needs the Byzantine clients' own gradients",
                    self.name()
                ))
            })
        };
        Ok(match self {
            // LabelFlip's poisoning happens in training; the submitted rows are
            // the gradients computed on flipped labels.
            Attack::None | Attack::LabelFlip => Crafted {
                gradients: own()?.rows().to_vec(),
                strike: None,
            },
            Attack::BitFlip => Crafted {
                gradients: own()?.row_slices().map(bitflip_attack).collect(),
                strike: None,
            },
            Attack::Lie(p) => shared(lie_attack(ctx, p)),
            Attack::Ipm(p) => shared(ipm_attack(ctx, p)),
            Attack::MinMax(p) => shared(minmax_attack(ctx, p)),
            Attack::MinSum(p) => shared(minsum_attack(ctx, p)),
            Attack::Mimic => shared(mimic_attack(ctx)),
            Attack::Strike(p) => {
                let (g, diag) = strike_attack_with_diagnostics(ctx, p)?;
                Crafted {
                    gradients: vec![g; ctx.f()],
                    strike: Some(diag),
                }
            }
        })
    }
}

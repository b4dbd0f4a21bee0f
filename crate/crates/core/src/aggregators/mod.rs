//! Server-side aggregation rules, the bucketing and nearest-neighbor-mixing
//! wrappers, and an exhaustive (f, kappa)-robustness checker.

mod robustness;
mod rules;
mod wrappers;

pub use robustness::{check_f_kappa_robustness, RobustnessQuery, RobustnessVerdict};
pub use rules::{
    aggregate_mean, aksel, centered_clip, coordinate_median_rule, dnc, krum_scores, multi_krum,
    rfa_geometric_median, rfa_iterates, rfa_objective_trace, trimmed_mean_rbtm,
};
pub use wrappers::{bucketing_wrap, nnm_mix, nnm_wrap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stats::GradientBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfaParams {
    pub iterations: usize,
    pub smoothing: f64,
}

impl Default for RfaParams {
    fn default() -> Self {
        Self {
            iterations: 8,
            smoothing: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CClipParams {
    pub inner_iterations: usize,
    pub clip_radius: f64,
    pub warm_start: bool,
}

impl Default for CClipParams {
    fn default() -> Self {
        Self {
            inner_iterations: 1,
            clip_radius: 10.0,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DncParams {
    pub filter_fraction: f64,
    pub outer_iterations: usize,
    pub subsample_dim: usize,
    pub seed: u64,
}

impl Default for DncParams {
    fn default() -> Self {
        Self {
            filter_fraction: 1.0,
            outer_iterations: 1,
            subsample_dim: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketingParams {
    pub bucket_size: usize,
    pub seed: u64,
}

impl Default for BucketingParams {
    fn default() -> Self {
        Self {
            bucket_size: 2,
            seed: 0,
        }
    }
}

/// The inner aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Rule {
    Mean,
    MultiKrum,
    Median,
    Rfa(RfaParams),
    Aksel,
    CClip(CClipParams),
    Dnc(DncParams),
    Rbtm,
}

impl Rule {
    pub const NAMES: [&'static str; 8] = [
        "mean",
        "multi_krum",
        "median",
        "rfa",
        "aksel",
        "cclip",
        "dnc",
        "rbtm",
    ];

    /// The rule with default parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "mean" => Rule::Mean,
            "multi_krum" => Rule::MultiKrum,
            "median" => Rule::Median,
            "rfa" => Rule::Rfa(RfaParams::default()),
            "aksel" => Rule::Aksel,
            "cclip" => Rule::CClip(CClipParams::default()),
            "dnc" => Rule::Dnc(DncParams::default()),
            "rbtm" => Rule::Rbtm,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Rule::Mean => "mean",
            Rule::MultiKrum => "multi_krum",
            Rule::Median => "median",
            Rule::Rfa(_) => "rfa",
            Rule::Aksel => "aksel",
            Rule::CClip(_) => "cclip",
            Rule::Dnc(_) => "dnc",
            Rule::Rbtm => "rbtm",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Rule::Rfa(p) if p.iterations == 0 || !(p.smoothing > 0.0) => Err(
                Error::InvalidParameter("rfa needs iterations >= 1 and smoothing > 0".into()),
            ),
            Rule::CClip(p) if p.inner_iterations == 0 || !(p.clip_radius > 0.0) => Err(
                Error::InvalidParameter("cclip needs L >= 1 and clip radius > 0".into()),
            ),
            Rule::Dnc(p)
                if p.outer_iterations == 0
                    || p.subsample_dim == 0
                    || !(p.filter_fraction >= 0.0 && p.filter_fraction.is_finite()) =>
            {
                Err(Error::InvalidParameter(
                    "dnc needs c >= 0, niters >= 1 and b >= 1".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Checks the client-count precondition for `n` inputs and `f` assumed Byzantine.
    fn check_counts(&self, n: usize, f: usize) -> Result<()> {
        let insufficient = |rule, requirement: &str| {
            Err(Error::InsufficientClients {
                rule,
                requirement: requirement.to_string(),
                n,
            })
        };
        match self {
            Rule::MultiKrum if n < 2 * f + 2 => {
                insufficient("multi_krum", &format!("n >= 2f + 2 with f = {f}"))
            }
            Rule::Rbtm if n <= 2 * f => insufficient("rbtm", &format!("n > 2f with f = {f}")),
            Rule::Dnc(p) if dnc_removal(p, f) * p.outer_iterations >= n => insufficient(
                "dnc",
                &format!("n > niters * floor(c * f) with c = {}, f = {f}", p.filter_fraction),
            ),
            _ => Ok(()),
        }
    }

    fn apply(
        &self,
        batch: &GradientBatch,
        f: usize,
        previous: Option<&[f64]>,
        salt: u64,
    ) -> Result<Vec<f64>> {
        match self {
            Rule::Mean => Ok(aggregate_mean(batch)),
            Rule::MultiKrum => multi_krum(batch, f),
            Rule::Median => Ok(coordinate_median_rule(batch)),
            Rule::Rfa(p) => Ok(rfa_geometric_median(batch, p)),
            Rule::Aksel => Ok(aksel(batch)),
            Rule::CClip(p) => {
                let zeros = vec![0.0; batch.dim()];
                centered_clip(batch, p, previous.unwrap_or(&zeros))
            }
            Rule::Dnc(p) => {
                let salted = DncParams {
                    seed: rng::mix(&[p.seed, salt]),
                    ..*p
                };
                dnc(batch, f, &salted)
            }
            Rule::Rbtm => trimmed_mean_rbtm(batch, f),
        }
    }
}

pub(crate) fn dnc_removal(p: &DncParams, f: usize) -> usize {
    (p.filter_fraction * f as f64).floor() as usize
}

/// Pre-aggregation wrapper, applied before the inner rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Wrapper {
    Bucketing(BucketingParams),
    Nnm,
}

impl Wrapper {
    pub fn name(&self) -> &'static str {
        match self {
            Wrapper::Bucketing(_) => "bucketing",
            Wrapper::Nnm => "nnm",
        }
    }
}

/// A rule plus its wrappers, listed outermost first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorSpec {
    pub rule: Rule,
    pub wrappers: Vec<Wrapper>,
}

impl AggregatorSpec {
    pub fn new(rule: Rule) -> Self {
        Self {
            rule,
            wrappers: Vec::new(),
        }
    }

    pub fn with_wrapper(mut self, wrapper: Wrapper) -> Self {
        self.wrappers.push(wrapper);
        self
    }

    /// Display name such as `bucketing+median`.
    pub fn name(&self) -> String {
        let mut parts: Vec<&str> = self.wrappers.iter().map(Wrapper::name).collect();
        parts.push(self.rule.name());
        parts.join("+")
    }

    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        for w in &self.wrappers {
            if let Wrapper::Bucketing(p) = w {
                if p.bucket_size == 0 {
                    return Err(Error::InvalidParameter("bucket size must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Verifies that `n` inputs with `f` assumed Byzantine satisfy every
    /// stage's precondition, tracking how wrappers shrink `n` and `f`.
    pub fn check_counts(&self, mut n: usize, mut f: usize) -> Result<()> {
        self.validate()?;
        for w in &self.wrappers {
            match w {
                Wrapper::Bucketing(p) => {
                    n = n.div_ceil(p.bucket_size);
                    f = f.div_ceil(p.bucket_size);
                }
                Wrapper::Nnm => {
                    if n <= f {
                        return Err(Error::InsufficientClients {
                            rule: "nnm",
                            requirement: format!("n > f with f = {f}"),
                            n,
                        });
                    }
                }
            }
        }
        self.rule.check_counts(n, f)
    }

    /// Aggregates `batch` assuming `f` Byzantine inputs. `previous` is the
    /// last aggregate (CClip warm start); `salt` varies the seeded stages
    /// between calls (the round index in a simulation).
    pub fn aggregate(
        &self,
        batch: &GradientBatch,
        f: usize,
        previous: Option<&[f64]>,
        salt: u64,
    ) -> Result<Vec<f64>> {
        self.validate()?;
        if let Some(prev) = previous {
            if prev.len() != batch.dim() {
                return Err(Error::InvalidInput(format!(
                    "previous aggregate has length {}, batch dimension is {}",
                    prev.len(),
                    batch.dim()
                )));
            }
        }
        self.apply_from(0, batch, f, previous, salt)
    }

    fn apply_from(
        &self,
        stage: usize,
        batch: &GradientBatch,
        f: usize,
        previous: Option<&[f64]>,
        salt: u64,
    ) -> Result<Vec<f64>> {
        match self.wrappers.get(stage) {
            None => {
                self.rule.check_counts(batch.len(), f)?;
                self.rule.apply(batch, f, previous, salt)
            }
            Some(Wrapper::Bucketing(p)) => {
                let salted = BucketingParams {
                    seed: rng::mix(&[p.seed, salt, stage as u64]),
                    ..*p
                };
                bucketing_wrap(batch, &salted, f, |buckets, inner_f| {
                    self.apply_from(stage + 1, buckets, inner_f, previous, salt)
                })
            }
            Some(Wrapper::Nnm) => nnm_wrap(batch, f, |mixed, inner_f| {
                self.apply_from(stage + 1, mixed, inner_f, previous, salt)
            }),
        }
    }
}

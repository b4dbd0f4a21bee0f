use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::report::{emit_report, write_accuracy_vs_axis, write_summary_csv, SummaryRow};
use super::run::run_config;
use crate::attacks::Attack;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Beta,
    ByzRatio,
    Clients,
    Nu,
}

impl SweepAxis {
    pub const NAMES: [&'static str; 4] = ["beta", "byz_ratio", "clients", "nu"];

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "beta" => SweepAxis::Beta,
            "byz_ratio" => SweepAxis::ByzRatio,
            "clients" => SweepAxis::Clients,
            "nu" => SweepAxis::Nu,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Beta => "beta",
            SweepAxis::ByzRatio => "byz_ratio",
            SweepAxis::Clients => "clients",
            SweepAxis::Nu => "nu",
        }
    }

    /// The grid studied for this axis.
    pub fn default_values(&self) -> Vec<AxisValue> {
        match self {
            SweepAxis::Beta => [0.1, 0.2, 0.5, 0.7, 0.9]
                .into_iter()
                .map(AxisValue::Beta)
                .chain([AxisValue::Iid])
                .collect(),
            SweepAxis::ByzRatio => [0.1, 0.2, 0.3, 0.4].into_iter().map(AxisValue::ByzRatio).collect(),
            SweepAxis::Clients => [10, 30, 50, 70, 90].into_iter().map(AxisValue::Clients).collect(),
            SweepAxis::Nu => (1..=8).map(|i| AxisValue::Nu(0.25 * i as f64)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisValue {
    Beta(f64),
    Iid,
    ByzRatio(f64),
    Clients(usize),
    Nu(f64),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Beta(x) | AxisValue::ByzRatio(x) | AxisValue::Nu(x) => write!(f, "{x}"),
            AxisValue::Iid => f.write_str("iid"),
            AxisValue::Clients(n) => write!(f, "{n}"),
        }
    }
}

impl AxisValue {
    /// `base` with this axis value substituted.
    pub fn apply(&self, base: &ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let fed = &mut cfg.sim.federation;
        match *self {
            AxisValue::Beta(beta) => {
                cfg.sim.partition.beta = beta;
                cfg.sim.partition.iid = false;
            }
            AxisValue::Iid => cfg.sim.partition.iid = true,
            AxisValue::ByzRatio(ratio) => {
                // the small offset keeps e.g. 0.3 * 10 from flooring to 2
                fed.f = (ratio * fed.n as f64 + 1e-9).floor() as usize;
                fed.byzantine_ids = None;
            }
            AxisValue::Clients(n) => {
                let (n0, f0, m0) = (fed.n, fed.f, fed.sampled_per_round);
                fed.n = n;
                fed.f = f0 * n / n0;
                fed.sampled_per_round = (m0 * n / n0).max(1);
                fed.byzantine_ids = None;
            }
            AxisValue::Nu(nu) => match &mut cfg.sim.attack {
                Attack::Strike(p) => p.nu = nu,
                other => {
                    return Err(Error::ConfigInvalid(format!(
                        "the nu axis needs attack \"strike\", the base config uses \"{}\"",
                        other.name()
                    )))
                }
            },
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub axis: SweepAxis,
    pub values: Vec<AxisValue>,
}

impl SweepSpec {
    pub fn new(base: ExperimentConfig, axis: SweepAxis) -> Self {
        Self {
            values: axis.default_values(),
            base,
            axis,
        }
    }
}

#[derive(Debug)]
pub struct SweepCell {
    pub label: String,
    pub result: Result<SummaryRow>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub cells: Vec<SweepCell>,
}

impl SweepOutcome {
    pub fn rows(&self) -> Vec<SummaryRow> {
        self.cells
            .iter()
            .filter_map(|c| c.result.as_ref().ok().cloned())
            .collect()
    }

    /// Successful cell with the lowest mean best accuracy.
    pub fn strongest(&self) -> Option<SummaryRow> {
        self.rows()
            .into_iter()
            .min_by(|a, b| a.acc_mean.total_cmp(&b.acc_mean))
    }
}

#[derive(Serialize)]
struct BestNu<'a> {
    best_nu: Option<&'a str>,
    acc_mean: Option<f64>,
    grid: Vec<(&'a str, f64, f64)>,
}

/// Runs every axis value (cells in parallel) and writes each cell's report
/// under `out/<axis>=<value>/` plus a combined `summary.csv`,
/// `accuracy_vs_axis.csv`, `errors.csv` for failed cells, and for the nu axis
/// `best_nu.json`.
pub fn run_sweep(spec: &SweepSpec, out: &Path) -> Result<SweepOutcome> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cells = spec
        .values
        .par_iter()
        .map(|value| {
            let label = value.to_string();
            let result = value.apply(&spec.base).and_then(|cfg| {
                let runs = run_config(&cfg, None)?.runs;
                let dir = out.join(format!("{}={label}", spec.axis.name()));
                emit_report(&dir, &cfg, &runs, &label)
            });
            SweepCell { label, result }
        })
        .collect::<Vec<_>>();
    let outcome = SweepOutcome { cells };

    let rows = outcome.rows();
    write_summary_csv(&out.join("summary.csv"), &rows)?;
    write_accuracy_vs_axis(&out.join("accuracy_vs_axis.csv"), &rows)?;
    let errors_path = out.join("errors.csv");
    let mut errors = String::from("axis,error\n");
    for cell in &outcome.cells {
        if let Err(e) = &cell.result {
            errors.push_str(&format!("{},\"{}\"\n", cell.label, e.to_string().replace('"', "'")));
        }
    }
    fs::write(&errors_path, errors).map_err(|e| Error::io(&errors_path, e))?;

    if spec.axis == SweepAxis::Nu {
        let best = outcome.strongest();
        let doc = BestNu {
            best_nu: best.as_ref().map(|r| r.axis.as_str()),
            acc_mean: best.as_ref().map(|r| r.acc_mean),
            grid: rows
                .iter()
                .map(|r| (r.axis.as_str(), r.acc_mean, r.acc_std))
                .collect(),
        };
        let path = out.join("best_nu.json");
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::format(&path, e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(outcome)
}

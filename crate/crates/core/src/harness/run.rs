use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::analysis::summarize_runs;
use crate::error::Result;
use crate::sim::{RunOutcome, Simulation};
use crate::stats::GradientBatch;

#[derive(Debug, Clone)]
pub struct ConfigOutcome {
    /// One run per seed, in the config's seed order.
    pub runs: Vec<RunOutcome>,
    pub acc_mean: f64,
    pub acc_std: f64,
    /// Honest gradients of the requested round, per seed.
    pub dumps: Vec<(u64, GradientBatch)>,
}

/// Runs every seed of `config`; with `dump_round` set, keeps that round's
/// honest gradients.
pub fn run_config(config: &ExperimentConfig, dump_round: Option<usize>) -> Result<ConfigOutcome> {
    config.validate()?;
    let results = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut sim = Simulation::new(&config.sim, seed)?;
            let mut records = Vec::with_capacity(config.sim.federation.rounds);
            let mut dump = None;
            for t in 0..config.sim.federation.rounds {
                records.push(sim.run_round(t)?);
                if dump_round == Some(t) {
                    dump = sim.last_honest().cloned().map(|b| (seed, b));
                }
            }
            Ok((RunOutcome::from_records(seed, records), dump))
        })
        .collect::<Result<Vec<_>>>()?;
    let (runs, dumps): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let best: Vec<f64> = runs.iter().map(|r| r.best_accuracy).collect();
    let (acc_mean, acc_std) = summarize_runs(&best)?;
    Ok(ConfigOutcome {
        runs,
        acc_mean,
        acc_std,
        dumps: dumps.into_iter().flatten().collect(),
    })
}

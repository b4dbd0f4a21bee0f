use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{generate_split, Dataset, SyntheticSpec};
use super::model::{evaluate_accuracy, Model, Shard};
use super::partition::{dirichlet_partition, PartitionSpec};
use super::train::{local_update, TrainSpec};
use crate::aggregators::AggregatorSpec;
use crate::analysis::{skew_score_with, summarize_runs};
use crate::attacks::{Attack, AttackContext};
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{vector, GradientBatch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationSpec {
    pub n: usize,
    pub f: usize,
    /// Explicit Byzantine ids; the `f` highest ids when absent.
    pub byzantine_ids: Option<Vec<usize>>,
    pub sampled_per_round: usize,
    pub rounds: usize,
}

impl FederationSpec {
    /// `n` clients, `f = floor(0.2 n)`, every client sampled each round.
    pub fn with_clients(n: usize, rounds: usize) -> Self {
        Self {
            n,
            f: n / 5,
            byzantine_ids: None,
            sampled_per_round: n,
            rounds,
        }
    }

    pub fn byzantine_set(&self) -> Vec<usize> {
        match &self.byzantine_ids {
            Some(ids) => {
                let mut ids = ids.clone();
                ids.sort_unstable();
                ids
            }
            None => (self.n - self.f..self.n).collect(),
        }
    }

    /// Byzantine count the server assumes among the sampled clients.
    pub fn server_f(&self) -> usize {
        self.f * self.sampled_per_round / self.n
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 || 2 * self.f >= self.n {
            return invalid(format!("need 0 <= f < n/2, got n = {}, f = {}", self.n, self.f));
        }
        let m = self.sampled_per_round;
        if m == 0 || m > self.n {
            return invalid(format!("sampled clients must be in 1..={}, got {m}", self.n));
        }
        if 2 * self.f.min(m) >= m {
            return invalid(format!(
                "with m = {m} sampled clients a round could hold a Byzantine majority (f = {})",
                self.f
            ));
        }
        if let Some(ids) = &self.byzantine_ids {
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != ids.len() || ids.len() != self.f || ids.iter().any(|&i| i >= self.n) {
                return invalid(format!(
                    "byzantine ids must be {} distinct ids below {}",
                    self.f, self.n
                ));
            }
        }
        Ok(())
    }
}

/// Everything that defines one federated training run except its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub federation: FederationSpec,
    pub partition: PartitionSpec,
    pub train: TrainSpec,
    pub defense: AggregatorSpec,
    pub attack: Attack,
    pub dataset: SyntheticSpec,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.federation.validate()?;
        self.train.validate()?;
        self.attack.validate()?;
        self.defense
            .check_counts(self.federation.sampled_per_round, self.federation.server_f())?;
        Model::new(self.train.model, self.dataset.num_classes, self.dataset.dim)?;
        if !(self.partition.beta > 0.0) {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub alpha: f64,
    pub selected: usize,
    pub skew_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub seed: u64,
    pub attack: String,
    pub defense: String,
    pub accuracy: f64,
    pub diagnostics: Option<RoundDiagnostics>,
    pub aggregate: Vec<f64>,
}

/// State of one federated run.
pub struct Simulation<'a> {
    config: &'a SimulationConfig,
    seed: u64,
    model: Model,
    params: Vec<f64>,
    train: Dataset,
    test: Dataset,
    shards: Vec<Vec<usize>>,
    byzantine: Vec<bool>,
    previous_aggregate: Option<Vec<f64>>,
    last_honest: Option<GradientBatch>,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a SimulationConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (train, test) = generate_split(&config.dataset, seed)?;
        let model = Model::new(config.train.model, train.num_classes(), train.dim())?;
        let shards = dirichlet_partition(train.labels(), config.federation.n, &config.partition, seed)?;
        let mut byzantine = vec![false; config.federation.n];
        for id in config.federation.byzantine_set() {
            byzantine[id] = true;
        }
        Ok(Self {
            config,
            seed,
            params: model.init(rng::mix(&[seed, 0x1417])),
            model,
            train,
            test,
            shards,
            byzantine,
            previous_aggregate: None,
            last_honest: None,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    pub fn train_data(&self) -> &Dataset {
        &self.train
    }

    /// Honest gradients of the most recent round.
    pub fn last_honest(&self) -> Option<&GradientBatch> {
        self.last_honest.as_ref()
    }

    /// Clients taking part in round `t`, ascending.
    pub fn sample_clients(&self, t: usize) -> Vec<usize> {
        let fed = &self.config.federation;
        if fed.sampled_per_round == fed.n {
            return (0..fed.n).collect();
        }
        let mut rng = rng::stream(&[self.seed, t as u64, 0x5A3]);
        let mut picked = index::sample(&mut rng, fed.n, fed.sampled_per_round).into_vec();
        picked.sort_unstable();
        picked
    }

    fn client_gradient(&self, t: usize, client: usize, flip: bool) -> Result<Vec<f64>> {
        let mut shard = Shard::new(&self.train, &self.shards[client]);
        shard.flip_labels = flip;
        let seed = rng::mix(&[self.seed, t as u64, client as u64]);
        local_update(&self.model, &self.params, &shard, &self.config.train, seed).map_err(|e| match e {
            Error::NonFiniteLoss => Error::TrainingDivergence { round: t, client },
            other => other,
        })
    }

    /// Runs round `t`: local training, Byzantine injection, aggregation and
    /// the server step `w <- w - aggregate`.
    pub fn run_round(&mut self, t: usize) -> Result<RoundRecord> {
        let cfg = self.config;
        let attack = cfg.attack;
        let sampled = self.sample_clients(t);
        let gradients: Vec<Option<Vec<f64>>> = sampled
            .par_iter()
            .map(|&client| {
                let byz = self.byzantine[client];
                if !byz || attack.needs_own_gradients() {
                    let flip = byz && matches!(attack, Attack::LabelFlip);
                    self.client_gradient(t, client, flip).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;

        let mut honest_ids = Vec::new();
        let mut honest_rows = Vec::new();
        let mut byz_ids = Vec::new();
        let mut byz_own = Vec::new();
        for (&client, grad) in sampled.iter().zip(gradients) {
            if self.byzantine[client] {
                byz_ids.push(client);
                if let Some(g) = grad {
                    byz_own.push(g);
                }
            } else {
                honest_ids.push(client);
                honest_rows.push(grad.expect("honest clients always train"));
            }
        }
        let honest = GradientBatch::new(honest_ids, honest_rows)?;

        let mut submissions: Vec<(usize, Vec<f64>)> =
            honest.iter().map(|(id, g)| (id, g.to_vec())).collect();
        let mut diagnostics = None;
        if !byz_ids.is_empty() {
            let mut ctx = AttackContext::new(honest.clone(), sampled.len(), byz_ids.len())?;
            if attack.needs_own_gradients() {
                ctx = ctx.with_byzantine_own(GradientBatch::new(byz_ids.clone(), byz_own)?)?;
            }
            let crafted = attack.craft(&ctx)?;
            if let Some(diag) = crafted.strike {
                let skew = if honest.len() >= 2 {
                    skew_score_with(&honest, byz_ids.len())?.score
                } else {
                    0.0
                };
                diagnostics = Some(RoundDiagnostics {
                    alpha: diag.alpha,
                    selected: diag.selected.len(),
                    skew_score: skew,
                });
            }
            submissions.extend(byz_ids.iter().copied().zip(crafted.gradients));
        }
        submissions.sort_by_key(|(id, _)| *id);
        let (ids, rows): (Vec<usize>, Vec<Vec<f64>>) = submissions.into_iter().unzip();
        let batch = GradientBatch::new(ids, rows)?;

        let aggregate = cfg.defense.aggregate(
            &batch,
            cfg.federation.server_f(),
            self.previous_aggregate.as_deref(),
            rng::mix(&[self.seed, t as u64]),
        )?;
        vector::axpy(&mut self.params, -1.0, &aggregate);
        let accuracy = evaluate_accuracy(&self.model, &self.params, &self.test)?;
        self.previous_aggregate = Some(aggregate.clone());
        self.last_honest = Some(honest);

        Ok(RoundRecord {
            round: t,
            seed: self.seed,
            attack: attack.name().to_string(),
            defense: cfg.defense.name(),
            accuracy,
            diagnostics,
            aggregate,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    pub best_accuracy: f64,
    pub best_round: usize,
}

impl RunOutcome {
    pub fn from_records(seed: u64, records: Vec<RoundRecord>) -> Self {
        let (best_round, best_accuracy) = records
            .iter()
            .map(|r| (r.round, r.accuracy))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        Self {
            seed,
            records,
            best_accuracy,
            best_round,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunOutcome>,
    /// Mean and population std of the per-seed best accuracy.
    pub acc_mean: f64,
    pub acc_std: f64,
}

pub fn run_single(config: &SimulationConfig, seed: u64) -> Result<RunOutcome> {
    let mut sim = Simulation::new(config, seed)?;
    let records = (0..config.federation.rounds)
        .map(|t| sim.run_round(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutcome::from_records(seed, records))
}

/// One run per seed; reports the best accuracy of each and their mean and std.
pub fn run_experiment(config: &SimulationConfig, seeds: &[u64]) -> Result<ExperimentOutcome> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("no seeds given".into()));
    }
    let runs = seeds
        .par_iter()
        .map(|&seed| run_single(config, seed))
        .collect::<Result<Vec<_>>>()?;
    let best: Vec<f64> = runs.iter().map(|r| r.best_accuracy).collect();
    let (acc_mean, acc_std) = summarize_runs(&best)?;
    Ok(ExperimentOutcome {
        runs,
        acc_mean,
        acc_std,
    })
}

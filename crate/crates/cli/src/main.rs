use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use strike_core::analysis::{lle_embed, skew_score_with, LleParams};
use strike_core::harness::{
    emit_report, parse_config, report_from_dir, run_config, run_sweep, ExperimentConfig,
    SweepAxis, SweepSpec, SINGLE_RUN_AXIS,
};
use strike_core::sim::{dirichlet_partition, generate_split, write_partition_csv};
use strike_core::stats::{coordinate_mean, GradientBatch};

#[derive(Parser)]
#[command(name = "strike", version, about = "Federated-learning poisoning simulator")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment document; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the document's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the client partition of the training set as CSV.
    Partition {
        #[command(flatten)]
        common: Common,
    },
    /// Run one experiment and write its report.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write the honest gradients of this round for each seed.
        #[arg(long)]
        dump_round: Option<usize>,
    },
    /// Run the experiment across one axis grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of beta, byz_ratio, clients, nu.
        #[arg(long)]
        axis: String,
    },
    /// LLE embedding and skew statistics of a gradient CSV.
    Analyze {
        /// Gradient CSV with a `client_id,g0,g1,...` header.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Byzantine count assumed for the skewed-subset selection.
        #[arg(long)]
        byzantine: Option<usize>,
        /// LLE neighbor count; max(2, m/10) by default.
        #[arg(long)]
        neighbors: Option<usize>,
    },
    /// Rebuild summary files from an existing rounds.jsonl.
    Report {
        /// Directory holding rounds.jsonl.
        #[arg(long)]
        dir: PathBuf,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let text = match &common.config {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => String::new(),
    };
    let mut config = parse_config(&text).with_context(|| match &common.config {
        Some(path) => format!("in {}", path.display()),
        None => "in the default config".to_string(),
    })?;
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    let out = config.output_dir.clone();
    Ok((config, out))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn partition(common: &Common) -> Result<()> {
    let (config, out) = load(common)?;
    create_dir(&out)?;
    for &seed in &config.seeds {
        let (train, _) = generate_split(&config.sim.dataset, seed)?;
        let shards =
            dirichlet_partition(train.labels(), config.sim.federation.n, &config.sim.partition, seed)?;
        let path = out.join(format!("partition_seed{seed}.csv"));
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = std::io::BufWriter::new(file);
        write_partition_csv(&mut writer, train.labels(), &shards)?;
        writer.flush()?;
        let sizes: Vec<String> = shards.iter().map(|s| s.len().to_string()).collect();
        println!("{} shard sizes: {}", path.display(), sizes.join(" "));
    }
    Ok(())
}

fn run(common: &Common, dump_round: Option<usize>) -> Result<()> {
    let (config, out) = load(common)?;
    if let Some(t) = dump_round {
        if t >= config.sim.federation.rounds {
            bail!("--dump-round {t} is past the last round {}", config.sim.federation.rounds - 1);
        }
    }
    let outcome = run_config(&config, dump_round)?;
    let row = emit_report(&out, &config, &outcome.runs, SINGLE_RUN_AXIS)?;
    for (seed, batch) in &outcome.dumps {
        let path = out.join(format!("gradients_seed{seed}_round{}.csv", dump_round.unwrap_or(0)));
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        batch.write_csv(std::io::BufWriter::new(file))?;
    }
    for run in &outcome.runs {
        println!(
            "seed {}: best accuracy {} at round {}",
            run.seed, run.best_accuracy, run.best_round
        );
    }
    println!(
        "{} vs {}: {} +- {} over {} seeds -> {}",
        row.attack,
        row.defense,
        row.acc_mean,
        row.acc_std,
        row.seed_count,
        out.display()
    );
    Ok(())
}

fn sweep(common: &Common, axis: &str) -> Result<()> {
    let axis = SweepAxis::from_name(axis).with_context(|| {
        format!("unknown axis `{axis}`; expected one of {}", SweepAxis::NAMES.join(", "))
    })?;
    let (config, out) = load(common)?;
    let outcome = run_sweep(&SweepSpec::new(config, axis), &out)?;
    for cell in &outcome.cells {
        match &cell.result {
            Ok(row) => println!("{}={}: {} +- {}", axis.name(), cell.label, row.acc_mean, row.acc_std),
            Err(e) => println!("{}={}: failed: {e}", axis.name(), cell.label),
        }
    }
    if outcome.rows().is_empty() {
        bail!("every sweep cell failed; see {}", out.join("errors.csv").display());
    }
    Ok(())
}

fn analyze(input: &Path, out: &Path, byzantine: Option<usize>, neighbors: Option<usize>) -> Result<()> {
    let batch = GradientBatch::read_csv_path(input)?;
    create_dir(out)?;
    let skew = match byzantine {
        Some(f) => skew_score_with(&batch, f)?,
        None => skew_score_with(&batch, batch.len() / 4)?,
    };
    let skew_path = out.join("skew.json");
    let text = serde_json::to_string_pretty(&skew.to_json(&batch))?;
    fs::write(&skew_path, text + "\n").with_context(|| format!("writing {}", skew_path.display()))?;

    // The honest mean is embedded as one extra input row.
    let mut rows = batch.rows().to_vec();
    rows.push(coordinate_mean(&batch));
    let mut ids = batch.ids().to_vec();
    ids.push(ids.iter().max().map_or(0, |m| m + 1));
    let augmented = GradientBatch::new(ids, rows)?;
    let mut params = LleParams::for_size(augmented.len());
    if let Some(k) = neighbors {
        params.neighbors = k;
    }
    let embedding = lle_embed(&augmented, &params)?;
    let emb_path = out.join("embedding.csv");
    let mut lines = vec!["client_id,x,y".to_string()];
    for (pos, coords) in embedding.coords.iter().enumerate() {
        let id = if pos < batch.len() {
            batch.ids()[pos].to_string()
        } else {
            "mean".to_string()
        };
        let y = coords.get(1).copied().unwrap_or(0.0);
        lines.push(format!("{id},{},{y}", coords[0]));
    }
    fs::write(&emb_path, lines.join("\n") + "\n")
        .with_context(|| format!("writing {}", emb_path.display()))?;
    println!("skew score {} -> {}", skew.score, out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Partition { common } => partition(common),
        Command::Run { common, dump_round } => run(common, *dump_round),
        Command::Sweep { common, axis } => sweep(common, axis),
        Command::Analyze {
            input,
            out,
            byzantine,
            neighbors,
        } => analyze(input, out, *byzantine, *neighbors),
        Command::Report { dir } => {
            let row = report_from_dir(dir, SINGLE_RUN_AXIS)?;
            println!("{}: {} +- {} over {} seeds", row.defense, row.acc_mean, row.acc_std, row.seed_count);
            Ok(())
        }
    }
}

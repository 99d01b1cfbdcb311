use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use aesr::experiments::{run_experiment, ExperimentKind, ExperimentSpec, Overrides};

/// Sparse signal recovery experiments.
#[derive(Parser)]
#[command(name = "aesr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// APRE over the (c, delta_b) grid for incoherent and coherent dictionaries.
    Heatmap(Common),
    /// APRE against additive noise level.
    NoiseSweep(Common),
    /// APRE against activation probability.
    SparsitySweep(Common),
    /// Coherence of orthogonalized and plain Gaussian dictionaries.
    CoherenceSweep(Common),
    /// Learn the dictionary from data and score the match.
    DictRecovery(Common),
    /// Theoretical recovery bounds against Monte-Carlo estimates.
    BoundsCheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON file with experiment parameters; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSVs and manifest.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of signal samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Hidden dimension.
    #[arg(long)]
    m: Option<usize>,
    /// Data dimension (fixes the n grid for coherence-sweep).
    #[arg(long)]
    n: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Heatmap(a) => (ExperimentKind::Heatmap, a),
        Command::NoiseSweep(a) => (ExperimentKind::NoiseSweep, a),
        Command::SparsitySweep(a) => (ExperimentKind::SparsitySweep, a),
        Command::CoherenceSweep(a) => (ExperimentKind::CoherenceSweep, a),
        Command::DictRecovery(a) => (ExperimentKind::DictRecovery, a),
        Command::BoundsCheck(a) => (ExperimentKind::BoundsCheck, a),
    };
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("configuring thread pool")?;
    }
    let parameters = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => serde_json::Value::Null,
    };
    let spec = ExperimentSpec { kind, parameters, seed: args.seed, output_dir: args.out };
    let overrides = Overrides { m: args.m, n: args.n, samples: args.samples };
    let summary = run_experiment(&spec, &overrides).with_context(|| format!("{} failed", kind.name()))?;
    for file in &summary.outputs {
        println!("{}", summary.output_dir.join(file).display());
    }
    println!("{}", summary.output_dir.join("manifest.json").display());
    eprintln!("{} finished in {:.1}s", kind.name(), summary.wall_time_secs);
    Ok(())
}

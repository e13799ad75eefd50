use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use daeme::experiment::{run_ablation, run_until, ExperimentConfig, RunReport, Stage, Suite};
use daeme::Error;

#[derive(Parser)]
#[command(name = "daeme", version, about = "Multi-branched denoising autoencoder ensembles for speech enhancement")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse finished stages from an earlier run.
    #[arg(long)]
    resume: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize (or ingest) the corpus.
    Corpus(Common),
    /// Build the attribute tree and select the plan.
    Tree(Common),
    /// Train the component models and the decoder.
    Train(Common),
    /// Enhance the test split.
    Enhance(Common),
    /// Score enhanced audio and write tables.
    Eval(Common),
    /// Run everything and write report.json.
    Report(Common),
    /// Train and compare the systems of an ablation suite.
    Ablation {
        #[command(flatten)]
        common: Common,
        /// uat_vs_rt, decoder_types, ss_vs_wd or seen_vs_unseen.
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
}

enum Failure {
    Config(String),
    Stage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Stage(other.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn summarize(report: &RunReport) {
    for s in &report.systems {
        for t in &s.tables {
            let avg = t.table.grand_avg.map_or("NA".to_string(), |v| format!("{v:.3}"));
            println!("{:<10} {:<18} avg {avg}", s.spec.name, t.name);
        }
    }
    for c in &report.comparisons {
        if let Some(t) = c.by_condition {
            println!("{} > {} on {}: t = {:.3}, p = {:.4}{}", c.b, c.a, c.table, t.t, t.p, if t.significant { " *" } else { "" });
        }
    }
    println!("report: {}", report.config.out_dir.join("report.json").display());
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Config(format!("--jobs: {e}")))?;
    }
    let (common, until) = match &cli.command {
        Command::Corpus(c) => (c, Stage::Corpus),
        Command::Tree(c) => (c, Stage::Tree),
        Command::Train(c) => (c, Stage::Decoder),
        Command::Enhance(c) => (c, Stage::Enhance),
        Command::Eval(c) => (c, Stage::Tables),
        Command::Report(c) => (c, Stage::Report),
        Command::Ablation { common, suite, seeds } => {
            let suite = Suite::from_name(suite).ok_or_else(|| Failure::Config(format!("unknown suite `{suite}`")))?;
            let cfg = load(common)?;
            let report = run_ablation(suite, &cfg, *seeds, common.resume)?;
            summarize(&report);
            return Ok(());
        }
    };
    let cfg = load(common)?;
    match run_until(&cfg, common.resume, until)? {
        Some(report) => summarize(&report),
        None => println!("{} stage finished in {}", until.name(), cfg.out_dir.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

//! Command-line driver: preprocessing, training, evaluation, cross-validation,
//! ablations, the VQC benchmark, conformal sets, attributions and t-tests.

pub mod config;
mod commands;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

/// An invocation problem (bad flag, bad config, missing input). Exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "kacq", version, about = "Dual-channel classical-quantum KAN classifier toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Heart-disease CSV (12 columns).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Use this many synthetic rows instead of --data.
    #[arg(long, global = true)]
    pub synthetic: Option<usize>,
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Model kind, e.g. kacq_dcnn, kacq_mlp, bilstm_kannet, vqc_mps.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub qubits: Option<usize>,
    /// Quantum layers.
    #[arg(long, global = true)]
    pub layers: Option<usize>,
    /// Miscoverage levels, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override the maximum number of training epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean, encode, split and scale; write both partitions and the manifest.
    Preprocess,
    /// Fit a model, then write its checkpoint, history and test report.
    Train,
    /// Score a checkpoint on the test partition it was trained against.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Stratified k-fold cross-validation.
    Crossval,
    /// Train every ablation variant and tabulate test metrics.
    Ablate,
    /// MERA/MPS/TTN classifiers with 1 to 4 layers.
    BenchmarkVqc,
    /// Split-conformal prediction sets (standard and Mondrian) per alpha.
    Conformal {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Shapley values and LIME surrogates for test instances.
    Explain {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Paired t-tests of the first model against the rest, Bonferroni corrected.
    Ttest {
        /// Models to cross-validate, comma separated; the first is the reference.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        /// CSV of per-fold scores, one column per model, instead of running CV.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value = "accuracy")]
        metric: String,
        /// Family-wise significance level.
        #[arg(long, default_value_t = 0.05)]
        level: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Crossval => "crossval",
            Command::Ablate => "ablate",
            Command::BenchmarkVqc => "benchmark-vqc",
            Command::Conformal { .. } => "conformal",
            Command::Explain { .. } => "explain",
            Command::Ttest { .. } => "ttest",
        }
    }
}

/// Merge config file and flags.
pub fn resolve_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.data {
        cfg.data = Some(d.clone());
    }
    if common.synthetic.is_some() {
        cfg.synthetic_rows = common.synthetic;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(m) = &common.model {
        cfg.model = m.clone();
    }
    if let Some(q) = common.qubits {
        cfg.hyperparams.n_qubits = q;
    }
    if let Some(l) = common.layers {
        cfg.hyperparams.quantum_layers = l;
    }
    if let Some(a) = &common.alpha {
        cfg.alphas = a.clone();
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if let Some(e) = common.epochs {
        cfg.train.max_epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parse `argv` and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(&cli.common)?;
    kacq::par::init_threads(cfg.threads);
    commands::dispatch(&cli.command, &cfg)
}

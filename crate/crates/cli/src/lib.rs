//! The `congen` command line: generation, evaluation, checking, repair,
//! ontology reasoning and embedding behind one JSON config.

mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use congen::decode::DecodeError;
use congen::lm::LmError;
use thiserror::Error;

pub use config::RunConfig;
use config::{Strategy, Style};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(#[from] LmError),
    #[error("{0}")]
    Infeasible(String),
    #[error("{failures} of {rows} rows failed, above the allowed {max_rate}")]
    EvalThreshold { failures: usize, rows: usize, max_rate: f64 },
    #[error("ontology error: {0}")]
    Ontology(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Infeasible(_) => 4,
            CliError::EvalThreshold { .. } => 5,
            CliError::Ontology(_) => 6,
            CliError::Geometry(_) => 7,
            CliError::Data(_) => 8,
            CliError::Io(_) => 9,
        }
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Lm(e) => CliError::Backend(e),
            DecodeError::Config(m) => CliError::Config(m),
            e @ DecodeError::Infeasible(_) => CliError::Infeasible(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "congen", version, about = "Constrained generation toolkit")]
pub struct Cli {
    /// JSON run config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for decoding and embedding.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0: one per core for eval, one elsewhere).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Print the effective config and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct ConstraintArgs {
    /// Comma-separated keywords, expanded with the lexicon.
    #[arg(long, value_delimiter = ',', conflicts_with = "constraint")]
    pub keywords: Vec<String>,
    /// Constraint in the CNF syntax, e.g. `(dog|dogs)&!(cat|cats)`.
    #[arg(long)]
    pub constraint: Option<String>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct DecodeArgs {
    #[arg(long, value_enum)]
    pub strategy: Option<Strategy>,
    #[arg(long, value_enum)]
    pub style: Option<Style>,
    #[arg(long)]
    pub n_shots: Option<usize>,
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub ess_threshold: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one sentence under a keyword or CNF constraint.
    Gen {
        #[command(flatten)]
        constraint: ConstraintArgs,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Run the configured pipeline over a dataset and write a report.
    Eval {
        #[command(flatten)]
        decode: DecodeArgs,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score candidate sentences against a constraint.
    Check {
        #[command(flatten)]
        constraint: ConstraintArgs,
        /// Candidate sentence; repeat for several.
        #[arg(long = "text", required = true)]
        texts: Vec<String>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Add the ontology violation probability to the degree.
        #[arg(long)]
        semantic: bool,
    },
    /// Edit a sentence until it satisfies a constraint.
    Repair {
        #[command(flatten)]
        constraint: ConstraintArgs,
        #[arg(long)]
        text: String,
        /// Maximum edits; defaults to clauses plus forbidden words present.
        #[arg(long)]
        budget: Option<usize>,
        /// Also emit a re-prompt payload for this question.
        #[arg(long)]
        question: Option<String>,
    },
    /// Closure, minimal axioms and text checks over the ontology.
    Reason {
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Rewrite this question with ontology facts.
        #[arg(long)]
        question: Option<String>,
        /// Estimate the violation probability of this text.
        #[arg(long)]
        text: Option<String>,
    },
    /// Train ball embeddings for the ontology.
    Embed {
        #[arg(long)]
        ontology: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn apply_decode(cfg: &mut RunConfig, a: &DecodeArgs) {
    if let Some(s) = a.strategy {
        cfg.strategy = s;
    }
    if let Some(s) = a.style {
        cfg.prompt.style = s;
    }
    if let Some(n) = a.n_shots {
        cfg.prompt.n_shots = n;
    }
    let d = &mut cfg.decode;
    if let Some(x) = a.max_new_tokens {
        d.max_new_tokens = x;
    }
    if let Some(x) = a.beam_size {
        d.beam_size = x;
    }
    if let Some(x) = a.alpha {
        d.alpha = x;
    }
    if let Some(x) = a.particles {
        d.n_particles = x;
    }
    if let Some(x) = a.ess_threshold {
        d.ess_threshold = x;
    }
    if let Some(x) = a.temperature {
        d.temperature = x;
    }
}

/// Config file, then global flags, then subcommand flags.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.decode.seed = s;
        cfg.geometry.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    match &cli.command {
        Some(Command::Gen { decode, .. }) => apply_decode(&mut cfg, decode),
        Some(Command::Eval { decode, dataset, limit, output }) => {
            apply_decode(&mut cfg, decode);
            if let Some(d) = dataset {
                cfg.paths.dataset = Some(d.clone());
            }
            if let Some(l) = limit {
                cfg.eval.limit = Some(*l);
            }
            if let Some(o) = output {
                cfg.paths.output = o.clone();
            }
        }
        Some(Command::Check { lambda: Some(l), .. }) => cfg.checker.lambda = *l,
        Some(Command::Reason { ontology: Some(o), .. }) => cfg.paths.ontology = Some(o.clone()),
        Some(Command::Embed { ontology, epochs, dim, margin, lr, output }) => {
            if let Some(o) = ontology {
                cfg.paths.ontology = Some(o.clone());
            }
            if let Some(x) = epochs {
                cfg.geometry.epochs = *x;
            }
            if let Some(x) = dim {
                cfg.geometry.dim = *x;
            }
            if let Some(x) = margin {
                cfg.geometry.margin = *x;
            }
            if let Some(x) = lr {
                cfg.geometry.lr = *x;
            }
            if let Some(o) = output {
                cfg.paths.output = o.clone();
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (program name first) and runs the command, writing its
/// JSON result to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    run_cli(&cli, out)
}

pub fn run_cli(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    if cli.print_config {
        writeln!(out, "{}", cfg.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(CliError::Config("no subcommand given (try --help)".into()));
    };
    let threads = match (command, cfg.workers) {
        (Command::Eval { .. }, w) => w,
        (_, 0) => 1,
        (_, w) => w,
    };
    let text = congen::par::with_threads(threads, || commands::dispatch(command, &cfg))?;
    writeln!(out, "{text}").map_err(|e| CliError::Io(e.to_string()))
}

//! `scenerel` command line: training, inference, commonsense validation,
//! evaluation, relation clustering and distillation penalties.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scenerel::commonsense::CommonsenseError;
use scenerel::llm_client::LlmError;
use scenerel::metrics::{EvalMode, RecallAveraging};
use tracing::info;

use commands::{BackendFailure, Ctx, InferInputs, ValidateInputs};
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "scenerel", version, about = "Hierarchical scene-graph relation toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the hierarchical head on synthetic or supplied pooled features.
    TrainToy {
        /// JSONL of `{"pooled": [...], "relation": r | null}`.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Score every directed object pair with a trained head.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSONL scene graphs with objects and image sizes.
        #[arg(long)]
        graphs: PathBuf,
        /// Directory of `{image_id}.sgt` feature maps.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Filter ranked candidates with commonsense verdicts.
    Validate {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        whitelist: Option<PathBuf>,
        /// Builds the whitelist from training scene graphs.
        #[arg(long)]
        train_graphs: Option<PathBuf>,
        /// Verdict cache; read when present and rewritten afterwards.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Directory with `per_triplet_N.txt` and `batched.txt` prompts.
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Recall, mean recall, zero-shot recall and weighted mAP.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Ground truth; taken from the prediction file when omitted.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<EvalMode>,
        /// Cut-offs, e.g. `--k 20,50,100`.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long, value_parser = parse_averaging)]
        recall_averaging: Option<RecallAveraging>,
        /// Training triplets for zero-shot recall: scene graph JSONL or a whitelist JSON.
        #[arg(long)]
        train_graphs: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Group relations into super-categories by k-means over embeddings.
    Cluster {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Cluster unit-length embeddings instead of raw vectors.
        #[arg(long)]
        l2_normalize: bool,
    },
    /// Distillation penalties of candidates against alignment sets.
    DistillSets {
        #[arg(long)]
        sets: PathBuf,
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
}

fn parse_averaging(s: &str) -> Result<RecallAveraging, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown averaging {s:?}; expected micro or per-image"))
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown mode {s:?}; expected predcls, sgcls or sgdet"))
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TrainToy { .. } => "train-toy",
            Command::Infer { .. } => "infer",
            Command::Validate { .. } => "validate",
            Command::Eval { .. } => "eval",
            Command::Cluster { .. } => "cluster",
            Command::DistillSets { .. } => "distill-sets",
        }
    }

    /// Folds command-line overrides into the configuration.
    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::TrainToy { features, steps, lr } => {
                if let Some(f) = features {
                    cfg.training.features = Some(f.clone());
                }
                if let Some(s) = steps {
                    cfg.training.steps = *s;
                }
                if let Some(l) = lr {
                    cfg.training.lr = *l;
                }
            }
            Command::Infer { top_k, .. } => {
                if top_k.is_some() {
                    cfg.inference.top_k = *top_k;
                }
            }
            Command::Eval { mode, k, recall_averaging, .. } => {
                if let Some(m) = mode {
                    cfg.eval.mode = *m;
                }
                if let Some(a) = recall_averaging {
                    cfg.eval.averaging = *a;
                }
                if let Some(k) = k {
                    cfg.eval.ks = k.clone();
                }
            }
            Command::Cluster { k, l2_normalize, .. } => {
                if let Some(k) = k {
                    cfg.clustering.k = *k;
                }
                if *l2_normalize {
                    cfg.clustering.l2_normalize = true;
                }
            }
            Command::Validate { .. } | Command::DistillSets { .. } => {}
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_BACKEND: u8 = 3;

/// Backend failures exit with 3, everything else with 2.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<BackendFailure>() {
            return EXIT_BACKEND;
        }
        let llm = cause
            .downcast_ref::<LlmError>()
            .or_else(|| match cause.downcast_ref::<CommonsenseError>() {
                Some(CommonsenseError::Llm(e)) => Some(e),
                _ => None,
            });
        if let Some(e) = llm {
            return if matches!(e, LlmError::Config(_)) { EXIT_CONFIG } else { EXIT_BACKEND };
        }
    }
    EXIT_CONFIG
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.common.config.as_deref())?;
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if cli.common.jobs.is_some() {
        cfg.jobs = cli.common.jobs;
    }
    cli.command.apply(&mut cfg);
    if let Some(jobs) = cfg.jobs {
        anyhow::ensure!(jobs > 0, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let out = commands::ensure_out_dir(&cli.common.out)?;
    let ctx = Ctx { cfg: &cfg, out: &out };
    info!(command = cli.command.name(), seed = cfg.seed, out = %out.display(), "starting");

    let result = match &cli.command {
        Command::TrainToy { .. } => commands::train_toy(&ctx),
        Command::Infer { checkpoint, graphs, features, hierarchy, vocab, .. } => commands::infer(
            &ctx,
            &InferInputs {
                checkpoint,
                graphs,
                features,
                hierarchy: hierarchy.as_deref(),
                vocab: vocab.as_deref(),
            },
        ),
        Command::Validate { graphs, vocab, whitelist, train_graphs, cache, templates } => commands::validate(
            &ctx,
            &ValidateInputs {
                graphs,
                vocab: vocab.as_deref(),
                whitelist: whitelist.as_deref(),
                train_graphs: train_graphs.as_deref(),
                cache: cache.as_deref(),
                templates: templates.as_deref(),
            },
        ),
        Command::Eval { pred, gt, train_graphs, vocab, .. } => {
            commands::eval(&ctx, pred, gt.as_deref(), train_graphs.as_deref(), vocab.as_deref())
        }
        Command::Cluster { embeddings, vocab, .. } => commands::cluster(&ctx, embeddings, vocab.as_deref()),
        Command::DistillSets { sets, graphs, vocab } => commands::distill_sets(&ctx, sets, graphs, vocab.as_deref()),
    };
    let args: Vec<String> = std::env::args().collect();
    let summary = match &result {
        Ok(v) => v.clone(),
        Err(e) => serde_json::json!({ "error": format!("{e:#}") }),
    };
    commands::write_metadata(&out, cli.command.name(), &cfg, &summary, &args)?;
    result.map(|_| ())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

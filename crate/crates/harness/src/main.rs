use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use iclcover::promptkit::OrderingMode;
use iclcover::relevance::{CandidateText, MetricKind};
use iclcover_harness::client::{self, ApiStyle, EndpointConfig};
use iclcover_harness::config::{CounterKind, ExperimentConfig, Overrides, SelectorKind};
use iclcover_harness::report::compare_report;
use iclcover_harness::synth::{self, SynthOptions};
use iclcover_harness::{coverage, eval, run, HarnessError, Result};

#[derive(Parser)]
#[command(name = "iclcover", version, about = "Coverage-based selection of in-context demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TextArg {
    InputOnly,
    InputPlusOutput,
}

#[derive(Clone, Copy, ValueEnum)]
enum CounterArg {
    WhitespaceTokens,
    Characters,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Completions,
    Chat,
}

fn parse_via<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

#[derive(clap::Args)]
struct SelectArgs {
    /// TOML or JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    parses: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    template: Option<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// cosine, bm25[:unigram|ngram<N>|depst<N>], bsr, bsp or bsf1.
    #[arg(long, value_parser = parse_via::<MetricKind>)]
    metric: Option<MetricKind>,
    /// Weight BERTScore tokens by idf.
    #[arg(long)]
    idf_weights: Option<bool>,
    #[arg(long, value_enum)]
    candidate_text: Option<TextArg>,
    /// independent, set_greedy or random.
    #[arg(long, value_parser = parse_via::<SelectorKind>)]
    selector: Option<SelectorKind>,
    #[arg(long, short)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// by_instance_score or selection_order.
    #[arg(long, value_parser = parse_via::<OrderingMode>)]
    ordering: Option<OrderingMode>,
    /// Prompt budget in counter units.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum)]
    budget_counter: Option<CounterArg>,
    #[arg(long)]
    max_tests: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Select demonstrations and render prompts for a test split.
    Select(SelectArgs),
    /// Score predictions of a run by exact match.
    Eval {
        run_dir: PathBuf,
        predictions: PathBuf,
    },
    /// Measure substructure recall of a run's selections.
    Coverage { run_dir: PathBuf },
    /// Compare runs made on the same test split.
    Report {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Send a run's prompts to a completion endpoint.
    Complete {
        run_dir: PathBuf,
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        model: String,
        #[arg(long, value_enum, default_value = "completions")]
        style: StyleArg,
        #[arg(long, default_value_t = 256)]
        max_tokens: u32,
        #[arg(long, default_value_t = 4)]
        max_attempts: u32,
        /// Defaults to predictions.jsonl in the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic bundle with scattered test substructures.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        groups: usize,
        #[arg(long, default_value_t = 200)]
        pool_size: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
    },
}

fn experiment(a: SelectArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => match (&a.pool, &a.test, &a.out) {
            (Some(p), Some(t), Some(o)) => ExperimentConfig::new(p, t, o),
            _ => {
                return Err(HarnessError::Config(
                    "without --config, --pool, --test and --out are required".into(),
                ))
            }
        },
    };
    cfg.apply(Overrides {
        pool_path: a.pool,
        test_path: a.test,
        embeddings_dir: a.embeddings,
        parses_path: a.parses,
        templates_path: a.templates,
        template: a.template,
        output_dir: a.out,
        metric: a.metric,
        idf_weights: a.idf_weights,
        candidate_text: a.candidate_text.map(|t| match t {
            TextArg::InputOnly => CandidateText::InputOnly,
            TextArg::InputPlusOutput => CandidateText::InputPlusOutput,
        }),
        selector: a.selector,
        k: a.k,
        seed: a.seed,
        ordering: a.ordering,
        budget: a.budget,
        budget_counter: a.budget_counter.map(|c| match c {
            CounterArg::WhitespaceTokens => CounterKind::WhitespaceTokens,
            CounterArg::Characters => CounterKind::Characters,
        }),
        max_test_instances: a.max_tests,
        threads: a.threads,
    });
    Ok(cfg)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Select(args) => {
            let info = run::run_selection(&experiment(args)?)?;
            println!("{}: {} test instances", info.method, info.n_tests);
            if let Some(m) = info.setcov_mean {
                println!("mean set coverage {m:.6}");
            }
        }
        Command::Eval { run_dir, predictions } => {
            let s = eval::evaluate_run(&run_dir, &predictions)?;
            println!("exact match {:.4} ({}/{})", s.exact_match, s.correct, s.n);
        }
        Command::Coverage { run_dir } => {
            let r = coverage::audit_run(&run_dir)?;
            for (scheme, recall) in &r.mean_recall {
                println!("{scheme}\t{recall:.4}");
            }
        }
        Command::Report { run_dirs, csv } => {
            let table = compare_report(&run_dirs)?;
            if csv {
                print!("{}", table.to_csv()?);
            } else {
                print!("{}", table.to_text());
            }
        }
        Command::Complete {
            run_dir,
            endpoint,
            model,
            style,
            max_tokens,
            max_attempts,
            out,
        } => {
            let mut cfg = EndpointConfig::new(endpoint, model);
            cfg.style = match style {
                StyleArg::Completions => ApiStyle::Completions,
                StyleArg::Chat => ApiStyle::Chat,
            };
            cfg.max_tokens = max_tokens;
            cfg.max_attempts = max_attempts;
            cfg.initial_backoff = Duration::from_millis(500);
            let out = out.unwrap_or_else(|| run_dir.join("predictions.jsonl"));
            let n = client::complete_prompts(&run_dir.join(run::PROMPTS_FILE), &out, cfg)?;
            println!("{n} predictions -> {}", out.display());
        }
        Command::Synth {
            out_dir,
            seed,
            groups,
            pool_size,
            dim,
        } => {
            let opts = SynthOptions {
                seed,
                groups,
                pool_size,
                dim,
                ..SynthOptions::default()
            };
            synth::write_bundle(&out_dir, &synth::generate(&opts)?)?;
            println!("synthetic bundle -> {}", out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Command-line front end for the edit-based summarization pipeline:
//! reference-LM training, agent training, summarization, evaluation, and
//! the Lead-N baseline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ealm_core::{
    evaluate, lead_n, load_agent, save_agent, summarize, tokenize, train, Config, MaskedLm,
    NGramMaskedLm, Sentence, Vocabulary,
};

#[derive(Parser)]
#[command(
    name = "ealm",
    version,
    about = "Unsupervised edit-based sentence summarization",
    long_about = "Trains a reference masked language model, trains an editorial agent on it \
                  without any paired data, summarizes text, and scores summaries."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the reference masked LM on a one-sentence-per-line corpus
    #[command(name = "lm-train")]
    LmTrain(LmTrainArgs),
    /// Train the editorial agent against a trained LM
    Train(TrainArgs),
    /// Summarize input lines with a trained agent
    Summarize(SummarizeArgs),
    /// Score candidate summaries against references
    Evaluate(EvaluateArgs),
    /// Emit the first N words of each input line
    Lead(LeadArgs),
}

/// Options shared by the subcommands that read a config: a config file,
/// generic key=value overrides, and the seed. Precedence is
/// flag > --set > config file > default.
#[derive(Args)]
struct ConfigArgs {
    /// Config file (key=value lines, `#` comments)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set tau=0.6 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seed for every stochastic component
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self, extra: &[(&str, Option<String>)]) -> Result<Config> {
        let mut config = Config::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        for kv in &self.sets {
            let (key, value) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            config.apply(key.trim(), value.trim()).map_err(anyhow::Error::msg)?;
        }
        for (key, value) in extra {
            if let Some(value) = value {
                config.apply(key, value).map_err(anyhow::Error::msg)?;
            }
        }
        if let Some(seed) = self.seed {
            config.apply("seed", &seed.to_string()).map_err(anyhow::Error::msg)?;
        }
        config.validate().map_err(anyhow::Error::msg)?;
        log::info!("resolved configuration:\n{}", config.render());
        Ok(config)
    }
}

#[derive(Args)]
struct LmTrainArgs {
    /// Training corpus, one pre-tokenized sentence per line
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the trained LM
    #[arg(long)]
    out: PathBuf,
    /// N-gram order (overrides the config file)
    #[arg(long)]
    order: Option<usize>,
    /// Add-k smoothing constant (overrides the config file)
    #[arg(long)]
    smoothing: Option<f64>,
    /// Stopword list, one word per line
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Training corpus, one pre-tokenized sentence per line
    #[arg(long)]
    corpus: PathBuf,
    /// Trained LM file
    #[arg(long)]
    lm: PathBuf,
    /// Where to write the trained agent
    #[arg(long)]
    out: PathBuf,
    /// Train this many agents with consecutive seeds; run r is written to
    /// <out>.run<r> when more than one
    #[arg(long, default_value_t = 1)]
    runs: u64,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Trained agent file
    #[arg(long)]
    model: PathBuf,
    /// Trained LM file
    #[arg(long)]
    lm: PathBuf,
    /// Input sentences, one per line
    #[arg(long)]
    input: PathBuf,
    /// Output file, one summary per line
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Candidate summaries, one per line
    #[arg(long)]
    candidates: PathBuf,
    /// Source sentences, line-aligned with the candidates
    #[arg(long)]
    sources: PathBuf,
    /// Reference files, comma separated, each line-aligned
    #[arg(long, value_delimiter = ',', required = true)]
    references: Vec<PathBuf>,
    /// Byte cap applied to candidates before scoring
    #[arg(long, default_value_t = 75)]
    cap: usize,
    /// Also print a machine-readable key=value block
    #[arg(long)]
    machine: bool,
    /// Also write the report to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LeadArgs {
    /// Input sentences, one per line
    #[arg(long)]
    input: PathBuf,
    /// Summary length in words
    #[arg(short, long, default_value_t = 8)]
    n: usize,
    /// Output file; stdout when absent
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::LmTrain(args) => lm_train(args),
        Command::Train(args) => agent_train(args),
        Command::Summarize(args) => do_summarize(args),
        Command::Evaluate(args) => do_evaluate(args),
        Command::Lead(args) => do_lead(args),
    }
}

fn lm_train(args: LmTrainArgs) -> Result<()> {
    let config = args.config.resolve(&[
        ("order", args.order.map(|v| v.to_string())),
        ("smoothing", args.smoothing.map(|v| v.to_string())),
    ])?;
    let raw = config.corpus.load(&args.corpus, config.trainer.seed)?;
    if raw.is_empty() {
        bail!("{}: no usable sentences", args.corpus.display());
    }
    let mut vocab = Vocabulary::build(&raw, config.corpus.min_freq);
    vocab.load_stopwords(args.stopwords.as_deref(), config.corpus.rare_cutoff)?;
    let annotated: Vec<Sentence> = raw.iter().map(|s| vocab.annotate(s)).collect();
    log::info!(
        "training LM on {} sentences, vocabulary {} words, {} stopwords",
        annotated.len(),
        vocab.size() - 2,
        vocab.stopword_surfaces().len()
    );
    let lm = NGramMaskedLm::train(&annotated, vocab, &config.lm);
    lm.save(&args.out)?;
    log::info!("wrote {}", args.out.display());
    Ok(())
}

fn run_output_path(out: &Path, run: u64, runs: u64) -> PathBuf {
    if runs == 1 {
        out.to_path_buf()
    } else {
        let mut name = out.as_os_str().to_os_string();
        name.push(format!(".run{run}"));
        PathBuf::from(name)
    }
}

fn agent_train(args: TrainArgs) -> Result<()> {
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let base_config = args.config.resolve(&[])?;
    let lm = NGramMaskedLm::load(&args.lm)?;
    let raw = base_config.corpus.load(&args.corpus, base_config.trainer.seed)?;
    let corpus: Vec<Sentence> = raw.iter().map(|s| lm.vocab().annotate(s)).collect();
    if corpus.is_empty() {
        bail!("{}: no usable sentences", args.corpus.display());
    }
    for run in 0..args.runs {
        let mut config = base_config.clone();
        config.trainer.seed = base_config.trainer.seed + run;
        let out_path = run_output_path(&args.out, run, args.runs);
        log::info!(
            "training agent on {} sentences for {} episodes (seed {})",
            corpus.len(),
            config.trainer.episodes,
            config.trainer.seed
        );
        let episodes = config.trainer.episodes;
        let outcome = train(
            &corpus,
            &lm,
            &config.reward,
            &config.trainer,
            config.entropy_mode,
            |record| {
                if record.update_index % 100 == 0 {
                    log::info!(
                        "update {}/{}: loss {:.6}, epsilon {:.4}, mean reward {:.4}",
                        record.update_index,
                        episodes,
                        record.loss,
                        record.epsilon,
                        record.buffer_mean_reward
                    );
                }
            },
        )?;
        save_agent(&out_path, &outcome.params, &config.reward)?;

        let mut log_text = String::from("# resolved configuration\n");
        log_text.push_str(&config.render());
        log_text.push_str("# training history\n");
        log_text.push_str(&outcome.log.render());
        log_text.push_str(&format!("selected={}\n", outcome.selected_update));
        let log_path = log_path_of(&out_path);
        fs::write(&log_path, log_text)
            .with_context(|| format!("writing {}", log_path.display()))?;
        log::info!(
            "wrote {} (selected checkpoint at update {}) and {}",
            out_path.display(),
            outcome.selected_update,
            log_path.display()
        );
    }
    Ok(())
}

fn log_path_of(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".log");
    PathBuf::from(name)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn do_summarize(args: SummarizeArgs) -> Result<()> {
    let (params, reward) = load_agent(&args.model)?;
    let lm = NGramMaskedLm::load(&args.lm)?;
    if params.dim() != lm.embed_dim() {
        bail!(
            "{}: agent expects {}-dimensional embeddings but {} provides {}",
            args.model.display(),
            params.dim(),
            args.lm.display(),
            lm.embed_dim()
        );
    }
    let lines = read_lines(&args.input)?;
    let mut out = String::new();
    for line in &lines {
        let x = lm.vocab().annotate(&tokenize(line));
        if x.is_empty() {
            out.push('\n');
            continue;
        }
        let result = summarize(&x, &params, &lm, &reward);
        out.push_str(&result.summary.text());
        out.push('\n');
    }
    fs::write(&args.output, out).with_context(|| format!("writing {}", args.output.display()))?;
    log::info!("wrote {} summaries to {}", lines.len(), args.output.display());
    Ok(())
}

fn do_evaluate(args: EvaluateArgs) -> Result<()> {
    let candidates = read_sentences(&args.candidates)?;
    let sources = read_sentences(&args.sources)?;
    if candidates.is_empty() {
        bail!("{}: no candidates to evaluate", args.candidates.display());
    }
    if candidates.len() != sources.len() {
        bail!(
            "line count mismatch: {} has {} lines, {} has {}",
            args.candidates.display(),
            candidates.len(),
            args.sources.display(),
            sources.len()
        );
    }
    let mut references = Vec::new();
    for path in &args.references {
        let column = read_sentences(path)?;
        if column.len() != candidates.len() {
            bail!(
                "line count mismatch: {} has {} lines, {} has {}",
                args.candidates.display(),
                candidates.len(),
                path.display(),
                column.len()
            );
        }
        references.push(column);
    }
    if args.cap == 0 {
        bail!("--cap must be at least 1");
    }
    let report = evaluate(&candidates, &sources, &references, args.cap);
    let mut text = report.render_text();
    if args.machine {
        text.push_str(&report.render_machine());
    }
    print!("{text}");
    if let Some(path) = &args.out {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    Ok(read_lines(path)?.iter().map(|l| tokenize(l)).collect())
}

fn do_lead(args: LeadArgs) -> Result<()> {
    if args.n == 0 {
        bail!("-n must be at least 1");
    }
    let lines = read_lines(&args.input)?;
    let mut out = String::new();
    for line in &lines {
        let x = tokenize(line);
        if x.is_empty() {
            out.push('\n');
            continue;
        }
        out.push_str(&lead_n(&x, args.n).text());
        out.push('\n');
    }
    match &args.output {
        Some(path) => {
            fs::write(path, out).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{out}"),
    }
    Ok(())
}

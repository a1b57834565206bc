//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. Errors go to
//! standard error prefixed with `error:`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Deserialize;
use tsprompt_core::{
    build_prompt, sample_shots, serialize, MetricReport, MovementLexicon, PromptFormat, SerializerConfig, SeriesKind,
    Split, TokenizationScheme, Yen,
};

use crate::check::{check_consistency, counts_csv, load_generations};
use crate::embed::EmbedderConfig;
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentPlan, RunOptions};
use crate::fixtures::{generate_fixtures, FixtureConfig};
use crate::formats::dataset::{load_dataset_jsonl, write_dataset_jsonl, SplitCounts};
use crate::formats::lexicon::load_lexicon;
use crate::formats::price_csv::load_price_csv;
use crate::formats::settings::{load_serializer_config, parse_serializer_config};
use crate::llm::{build_backend, BackendConfig, BackendKind};

#[derive(Debug, Parser)]
#[command(name = "tsprompt", version, about = "Turn price series into LLM prompts, run prompt experiments and score the comments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOptions,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOptions {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Output file, or directory for `run`, `report` and `gen-fixtures`.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// TOML file with optional `[serializer]`, `[backend]` and `[embedder]` tables.
    #[arg(long, global = true)]
    pub config_file: Option<PathBuf>,
    /// Force the mock backend and fixed default seeds.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Short,
    Long,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one price CSV in a prompt format.
    Serialize {
        #[arg(long, value_parser = parse_format)]
        format: PromptFormat,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long = "in")]
        input: PathBuf,
        /// Serializer settings file (`key = value` lines).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Assemble the prompt for one dataset instance.
    BuildPrompt {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        target_id: String,
        #[arg(long, value_parser = parse_format)]
        format: PromptFormat,
        #[arg(long, default_value_t = 0)]
        shots: usize,
        /// Shot sampling seed (random unless --deterministic).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the whole prompt bundle as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run (or resume) an experiment plan.
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Stop after this many new generations; rerun to resume.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Score candidate comments against references, one per line.
    Evaluate {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        references: PathBuf,
        /// `char` or `ws`; detected from the references when omitted.
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<TokenizationScheme>,
        /// Embedding endpoint URL, or `hash[:dim]` for the offline embedder.
        #[arg(long)]
        embedder: Option<String>,
        #[arg(long, default_value = "text-embedding-3-small")]
        embedder_model: String,
        /// Mean sentence BLEU instead of corpus BLEU.
        #[arg(long)]
        sentence_bleu: bool,
    },
    /// Rebuild the report files of a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Count consistent / inconsistent / no-claim comments per method.
    CheckConsistency {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Moves with |delta| at or below this many yen count as flat.
        #[arg(long, default_value = "0.00", value_parser = parse_yen)]
        flat_threshold: Yen,
        /// Allowed gap between a claimed `N円高/安` figure and the actual move.
        #[arg(long, default_value = "1.00", value_parser = parse_yen)]
        magnitude_tolerance: Yen,
    },
    /// Write a synthetic dataset, a lexicon and an example plan.
    GenFixtures {
        #[arg(long, default_value_t = 40)]
        train: usize,
        #[arg(long, default_value_t = 10)]
        valid: usize,
        #[arg(long, default_value_t = 20)]
        test: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_format(s: &str) -> std::result::Result<PromptFormat, String> {
    s.parse().map_err(|e| format!("{e}; expected one of: {}", PromptFormat::ALL.map(|f| f.cli_name()).join(", ")))
}

fn parse_scheme(s: &str) -> std::result::Result<TokenizationScheme, String> {
    s.parse()
}

fn parse_yen(s: &str) -> std::result::Result<Yen, String> {
    Yen::parse_lenient(s).map_err(|e| e.to_string())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    serializer: Option<toml::Table>,
    backend: Option<BackendConfig>,
    embedder: Option<EmbedderConfig>,
}

struct Context {
    global: GlobalOptions,
    config: ConfigFile,
}

impl Context {
    fn serializer(&self, per_command: Option<&Path>) -> Result<SerializerConfig> {
        if let Some(path) = per_command {
            return load_serializer_config(path);
        }
        match &self.config.serializer {
            Some(table) => parse_serializer_config(&table.to_string(), "[serializer]"),
            None => Ok(SerializerConfig::default()),
        }
    }

    fn emit(&self, text: &str) -> Result<()> {
        let mut text = text.to_owned();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        match &self.global.output {
            Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
            None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
        }
    }

    fn output_dir(&self, default: &Path) -> PathBuf {
        self.global.output.clone().unwrap_or_else(|| default.to_path_buf())
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.global.verbose);
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().format_target(false).try_init();
}

fn load_config_file(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
        Error::parse(path.display().to_string(), line, e.message().to_owned())
    })
}

fn execute(cli: Cli) -> Result<()> {
    let config = load_config_file(cli.global.config_file.as_deref())?;
    let ctx = Context { global: cli.global, config };
    match cli.command {
        Command::Serialize { format, kind, input, config } => {
            let kind = match kind {
                KindArg::Short => SeriesKind::ShortTerm,
                KindArg::Long => SeriesKind::LongTerm,
            };
            let series = load_price_csv(&input, kind)?;
            let text = serialize(&series, format, &ctx.serializer(config.as_deref())?)?;
            ctx.emit(&text)
        }
        Command::BuildPrompt { dataset, target_id, format, shots, seed, config, json } => {
            let instances = load_dataset_jsonl(&dataset)?;
            let target = instances
                .iter()
                .find(|i| i.id() == target_id)
                .ok_or_else(|| Error::Invalid(format!("no instance with id `{target_id}`")))?;
            let seed = seed.unwrap_or_else(|| if ctx.global.deterministic { 0 } else { rand::random() });
            info!("shot seed {seed}");
            let train: Vec<_> =
                instances.iter().filter(|i| i.split() == Split::Train && i.id() != target_id).cloned().collect();
            let chosen = sample_shots(&train, shots, seed)?;
            let bundle = build_prompt(target, &chosen, format, &ctx.serializer(config.as_deref())?, seed)?;
            if json {
                ctx.emit(&serde_json::to_string_pretty(&bundle).map_err(|e| Error::Invalid(e.to_string()))?)
            } else {
                ctx.emit(&bundle.text)
            }
        }
        Command::Run { plan, dataset, stop_after } => {
            let mut plan = ExperimentPlan::load(&plan)?;
            if let Some(b) = &ctx.config.backend {
                plan.backend = b.clone();
            }
            if let Some(e) = &ctx.config.embedder {
                plan.embedder = Some(e.clone());
            }
            if ctx.global.deterministic {
                plan.backend.kind = BackendKind::Mock;
            }
            plan.validate()?;
            let instances = load_dataset_jsonl(&dataset)?;
            let backend = build_backend(&plan.backend)?;
            let root = ctx.output_dir(Path::new(".")).join("runs");
            let outcome = experiment::run(&plan, &instances, backend.as_ref(), &root, &RunOptions { stop_after })?;
            match &outcome.summary {
                Some(s) => {
                    eprintln!(
                        "run {} complete: {} new, {} reused, {} excluded, {} invalid cells",
                        outcome.plan_id, outcome.new_records, outcome.reused_records, s.excluded_total, s.invalid_cells
                    );
                }
                None => eprintln!(
                    "run {} paused after {} new records; rerun the same command to resume",
                    outcome.plan_id, outcome.new_records
                ),
            }
            println!("{}", outcome.run_dir.display());
            Ok(())
        }
        Command::Evaluate { candidates, references, scheme, embedder, embedder_model, sentence_bleu } => {
            let cands = read_lines(&candidates)?;
            let refs = read_lines(&references)?;
            let scheme = scheme.unwrap_or_else(|| TokenizationScheme::detect(&refs));
            let embedder_cfg = match embedder {
                Some(arg) => Some(EmbedderConfig::from_arg(&arg, &embedder_model).map_err(|e| Error::Invalid(e.0))?),
                None => ctx.config.embedder.clone(),
            };
            let embedder = embedder_cfg.map(|c| c.build()).transpose().map_err(|e| Error::Invalid(e.0))?;
            let mut report = MetricReport::compute(&cands, &refs, scheme, embedder.as_deref().map(|e| e as _))?;
            if sentence_bleu {
                report.bleu = tsprompt_core::sentence_bleu(&cands, &refs, scheme, 4)?;
            }
            ctx.emit(&serde_json::to_string_pretty(&report).map_err(|e| Error::Invalid(e.to_string()))?)
        }
        Command::Report { run } => {
            let out = ctx.output_dir(&run);
            let summary = experiment::report_to(&run, &out)?;
            eprintln!("wrote report for {} to {}", summary.plan_id, out.display());
            Ok(())
        }
        Command::CheckConsistency { dataset, generations, lexicon, flat_threshold, magnitude_tolerance } => {
            let instances = load_dataset_jsonl(&dataset)?;
            let generations = load_generations(&generations)?;
            let lexicon = match lexicon {
                Some(p) => load_lexicon(&p)?,
                None => MovementLexicon::default(),
            };
            let counts = check_consistency(&instances, &generations, &lexicon, flat_threshold, magnitude_tolerance)?;
            ctx.emit(&counts_csv(&counts))
        }
        Command::GenFixtures { train, valid, test, seed } => {
            let seed = seed.unwrap_or(0);
            let instances = generate_fixtures(&FixtureConfig { train, valid, test, seed })?;
            let dir = ctx.output_dir(Path::new("."));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let write = |name: &str, text: String| {
                let path = dir.join(name);
                fs::write(&path, text).map_err(|e| Error::io(&path, e))
            };
            write("dataset.jsonl", write_dataset_jsonl(&instances))?;
            write("lexicon.tsv", crate::formats::lexicon::write_lexicon(&MovementLexicon::default()))?;
            write("plan.toml", example_plan(test.min(20)))?;
            let c = SplitCounts::of(&instances);
            eprintln!("wrote {} instances (train {}, valid {}, test {}) to {}", instances.len(), c.train, c.valid, c.test, dir.display());
            Ok(())
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// A small mock-backed plan over the generated fixtures.
pub fn example_plan(tests: usize) -> String {
    let ids: Vec<String> = (1..=tests).map(|n| format!("\"test-{n:05}\"")).collect();
    format!(
        r#"formats = ["direct", "python-dictionary", "html-table"]
shot_counts = [0, 5, 10]
repeats = 2
base_seed = 42
test_ids = [{}]
scheme = "char"
lexicon = "lexicon.tsv"

[backend]
kind = "mock"
model_name = "mock-commentator"
parallelism = 4

[embedder]
kind = "hash"
dim = 64
"#,
        ids.join(", ")
    )
}

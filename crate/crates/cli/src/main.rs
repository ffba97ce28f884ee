use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crash_severity::crash_data::{parse_records, stratified_sample, write_records, SchemaMap, SeverityMapping};
use crash_severity::llm_client::{MockBackend, MockScript};
use crash_severity::metrics::markdown_table;
use crash_severity::runner::{self, ExperimentConfig, RunError, SampleManifest};
use crash_severity::{EvaluationReport, PromptStrategy};

#[derive(Parser)]
#[command(name = "crashsev", version, about = "Evaluate LLM crash-severity classification")]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run(RunArgs),
    /// Recompute reports from a transcript without calling any endpoint.
    Rescore(RescoreArgs),
    /// Draw a stratified sample and print its manifest.
    Sample(SampleArgs),
    /// Print reports as a markdown table or JSON.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated strategy names, e.g. ZS,ZS_PE.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<PromptStrategy>>,
    /// Comma-separated model ids; keeps only these models from the config.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Answer from a scripted mock instead of the configured endpoints.
    #[arg(long)]
    mock: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    allow_extra_paper: bool,
}

#[derive(Args)]
struct RescoreArgs {
    #[arg(long)]
    transcript: PathBuf,
    /// Label set override per strategy, e.g. `--pe ZS=true`.
    #[arg(long = "pe", value_parser = parse_pe_override)]
    pe: Vec<(String, bool)>,
    /// Also write reports.json and summary.md here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    schema_map: Option<PathBuf>,
    /// JSON object mapping raw codes 1-4 to class names.
    #[arg(long)]
    severity_mapping: Option<PathBuf>,
    /// Also write the sampled records as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ReportSource {
    /// A reports.json written by `run` or `rescore`.
    #[arg(long)]
    reports: Option<PathBuf>,
    /// A transcript to rescore first.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, value_enum, default_value_t = Format::Md)]
    format: Format,
    #[command(flatten)]
    source: ReportSource,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Json,
}

fn parse_pe_override(s: &str) -> Result<(String, bool), String> {
    let (name, flag) = s.split_once('=').ok_or("expected STRATEGY=true|false")?;
    let strategy: PromptStrategy = name.parse().map_err(|e| format!("{e}"))?;
    let flag = flag.parse().map_err(|_| format!("`{flag}` is not true or false"))?;
    Ok((strategy.name().to_string(), flag))
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

fn fail<E: Into<RunError>>(e: E) -> Failure {
    Failure::from(e.into())
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        kind: "io",
        message: format!("{}: {e}", path.display()),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn render(reports: &[EvaluationReport], format: Format) -> String {
    match format {
        Format::Md => markdown_table(reports),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
            s.push('\n');
            s
        }
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.strategies {
        cfg.strategies = s;
    }
    if let Some(ids) = args.models {
        for id in &ids {
            if !cfg.models.iter().any(|m| &m.model_id == id) {
                return Err(fail(RunError::Config(format!("model `{id}` is not in the config"))));
            }
        }
        cfg.models.retain(|m| ids.contains(&m.model_id));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.n_per_class {
        cfg.n_per_class = n;
    }
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    cfg.allow_extra_paper |= args.allow_extra_paper;
    cfg.validate()?;

    let outcome = match args.mock {
        Some(path) => {
            let script = MockScript::from_json(&read(&path)?).map_err(fail)?;
            runner::run(&cfg, Arc::new(MockBackend::new(script)))?
        }
        None => runner::run_live(&cfg)?,
    };
    emit(&markdown_table(&outcome.reports));
    if outcome.failures > 0 {
        eprintln!(
            "{} record(s) failed and were scored as unresolved; see {}",
            outcome.failures,
            outcome.output_dir.join(runner::TRANSCRIPT_FILE).display()
        );
    }
    Ok(())
}

fn cmd_rescore(args: RescoreArgs) -> Result<(), Failure> {
    let overrides: BTreeMap<String, bool> = args.pe.into_iter().collect();
    let reports = runner::rescore(&args.transcript, &overrides)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        runner::write_reports(dir, &reports)?;
    }
    emit(&render(&reports, args.format));
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<(), Failure> {
    let schema = match &args.schema_map {
        Some(p) => SchemaMap::from_json(&read(p)?).map_err(fail)?,
        None => SchemaMap::default(),
    };
    let mapping: SeverityMapping = match &args.severity_mapping {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| Failure {
            kind: "data",
            message: format!("invalid severity mapping: {e}"),
        })?,
        None => SeverityMapping::default(),
    };
    let file = File::open(&args.data).map_err(|e| io_failure(&args.data, e))?;
    let data = parse_records(file, &schema, mapping).map_err(fail)?;
    let sample = stratified_sample(&data, args.n, args.seed).map_err(fail)?;
    if let Some(path) = &args.csv {
        let out = File::create(path).map_err(|e| io_failure(path, e))?;
        write_records(sample.records(), out).map_err(fail)?;
    }
    let manifest = SampleManifest::new(&sample, args.n, args.seed);
    emit(&format!("{}\n", serde_json::to_string_pretty(&manifest).expect("manifest serializes")));
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let reports: Vec<EvaluationReport> = match (args.source.reports, args.source.transcript) {
        (Some(path), _) => serde_json::from_str(&read(&path)?).map_err(|e| Failure {
            kind: "corrupt_reports",
            message: format!("{}: {e}", path.display()),
        })?,
        (None, Some(path)) => runner::rescore(&path, &BTreeMap::new())?,
        (None, None) => unreachable!("clap requires one source"),
    };
    emit(&render(&reports, args.format));
    Ok(())
}

fn report_failure(f: &Failure) {
    eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_failure(&Failure {
                kind: "usage",
                message: e.to_string().trim().to_string(),
            });
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .init();

    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Rescore(a) => cmd_rescore(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report_failure(&f);
            ExitCode::FAILURE
        }
    }
}

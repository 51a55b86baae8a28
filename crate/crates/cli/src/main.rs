//! `travis-tdm`: analyze Travis CI configurations for TDM tooling.
//!
//! Exit codes: 0 success, 1 invalid input or internal error, 2 the input is
//! not a Travis pipeline (or is not parseable YAML).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use travis_tdm_core::analytics::{
    export_report, to_sorted_json, write_artifact, Aggregator, CorpusReport, ExportFormat,
};
use travis_tdm_core::antipattern::LateMergingMode;
use travis_tdm_core::config::{ConfigError, RawDocument, CONFIG_FILE_NAME};
use travis_tdm_core::ingest::{
    discover_local_corpus, load_manifest, materialize, FetchPolicy, HttpFetcher, ManifestEntry,
    Provenance, RateLimiter, RemoteContext, SystemClock, TOKEN_ENV_VAR,
};
use travis_tdm_core::scripts::DirTree;
use travis_tdm_core::{AnalysisError, AnalysisOptions, Analyzer, Registry, Warning};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_NOT_A_PIPELINE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "travis-tdm",
    version,
    about = "Detect technical-debt-management tools and configuration anti-patterns in Travis CI pipelines",
    after_help = format!(
        "Exit codes: 0 success; 1 invalid input or internal error; 2 not a Travis pipeline.\n\
         Remote manifest entries read an optional access token from ${TOKEN_ENV_VAR}."
    )
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyze one configuration file or repository directory; prints JSON.
    Analyze {
        /// A `.travis.yml` file or a directory containing one.
        path: PathBuf,
        #[command(flatten)]
        analysis: AnalysisFlags,
    },
    /// Analyze a corpus (manifest JSON or directory of repositories) and
    /// write the report bundle.
    Scan {
        /// Manifest file or corpus root directory.
        input: PathBuf,
        /// Output directory for report files.
        #[arg(long, default_value = "tdm-report")]
        out: PathBuf,
        /// Output format; both are written when omitted.
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        analysis: AnalysisFlags,
        #[command(flatten)]
        fetch: FetchFlags,
    },
    /// Check a registry file (the shipped registry when no path is given).
    RegistryValidate {
        path: Option<PathBuf>,
    },
    /// Re-export a saved JSON report in another format.
    Report {
        /// A `report.json` produced by `scan`.
        input: PathBuf,
        #[arg(long, default_value = "tdm-report")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    fn export(self) -> ExportFormat {
        match self {
            OutputFormat::Json => ExportFormat::Json,
            OutputFormat::Csv => ExportFormat::CsvBundle,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LateMergingFlag {
    Pipeline,
    Job,
}

#[derive(Args, Debug)]
struct AnalysisFlags {
    /// Registry JSON to use instead of the shipped one.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Count tool names that appear in package-install commands.
    #[arg(long)]
    no_install_exclusion: bool,
    /// Follow scripts called from scripts.
    #[arg(long)]
    recursive_scripts: bool,
    /// Flag Late Merging when all tool jobs are restricted (pipeline) or any
    /// one is (job).
    #[arg(long, value_enum, default_value = "pipeline")]
    late_merging_mode: LateMergingFlag,
}

impl AnalysisFlags {
    fn analyzer(&self) -> Result<Analyzer> {
        let registry = match &self.registry {
            Some(p) => Registry::from_path(p).with_context(|| format!("loading registry {}", p.display()))?,
            None => Registry::shipped(),
        };
        Ok(Analyzer::new(
            registry,
            AnalysisOptions {
                install_exclusion: !self.no_install_exclusion,
                recursive_scripts: self.recursive_scripts,
                late_merging_mode: match self.late_merging_mode {
                    LateMergingFlag::Pipeline => LateMergingMode::Pipeline,
                    LateMergingFlag::Job => LateMergingMode::Job,
                },
            },
        ))
    }
}

#[derive(Args, Debug)]
struct FetchFlags {
    /// Request budget for remote manifest entries.
    #[arg(long, default_value_t = 5000)]
    max_requests_per_hour: u32,
    /// Retries per remote file after the first attempt.
    #[arg(long, default_value_t = 3)]
    retry_budget: u32,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { path, analysis } => cmd_analyze(&path, &analysis),
        Command::Scan {
            input,
            out,
            format,
            workers,
            analysis,
            fetch,
        } => cmd_scan(&input, &out, format, workers, &analysis, &fetch),
        Command::RegistryValidate { path } => cmd_registry_validate(path.as_deref()),
        Command::Report { input, out, format } => cmd_report(&input, &out, format),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn cmd_analyze(path: &Path, flags: &AnalysisFlags) -> Result<u8> {
    let analyzer = flags.analyzer()?;
    let (config_file, root) = if path.is_dir() {
        (path.join(CONFIG_FILE_NAME), path.to_path_buf())
    } else {
        let root = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        (path.to_path_buf(), root)
    };
    let bytes = std::fs::read(&config_file).with_context(|| format!("reading {}", config_file.display()))?;
    let slug = root
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| root.display().to_string());
    let name = config_file
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| CONFIG_FILE_NAME.to_string());
    let doc = RawDocument::from_bytes(slug, name, &bytes);

    match analyzer.analyze(&doc, &DirTree::new(root)) {
        Ok(analysis) => {
            for w in &analysis.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", to_sorted_json(&analysis));
            Ok(EXIT_OK)
        }
        Err(AnalysisError::Config(e)) => {
            match &e {
                ConfigError::NotAPipeline(_) => eprintln!("NotAPipeline: {e}"),
                ConfigError::MalformedDocument(_) => eprintln!("MalformedDocument: {e}"),
            }
            Ok(EXIT_NOT_A_PIPELINE)
        }
    }
}

#[derive(Debug, Serialize)]
struct EntryOutcome {
    repo_slug: String,
    status: &'static str,
    message: Option<String>,
    provenance: Vec<Provenance>,
    warnings: Vec<Warning>,
}

fn cmd_scan(
    input: &Path,
    out: &Path,
    format: Option<OutputFormat>,
    workers: usize,
    flags: &AnalysisFlags,
    fetch: &FetchFlags,
) -> Result<u8> {
    let analyzer = flags.analyzer()?;
    let entries: Vec<ManifestEntry> = if input.is_dir() {
        discover_local_corpus(input)?
    } else {
        load_manifest(input)?.entries
    };

    let policy = FetchPolicy {
        max_requests_per_hour: fetch.max_requests_per_hour.max(1),
        retry_budget: fetch.retry_budget,
        timeout: Duration::from_secs(fetch.timeout_secs),
        ..FetchPolicy::default()
    }
    .with_env_token();
    let limiter = RateLimiter::new(policy.max_requests_per_hour, Arc::new(SystemClock::default()));
    let fetcher = HttpFetcher;
    let remote = RemoteContext {
        fetcher: &fetcher,
        limiter: &limiter,
        policy: &policy,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("starting worker pool")?;
    let results: Vec<(EntryOutcome, Option<Aggregator>)> = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| scan_entry(&analyzer, entry, &remote))
            .collect()
    });

    // Single merge point, in manifest order.
    let mut agg = Aggregator::new();
    let mut outcomes = Vec::with_capacity(results.len());
    for (outcome, partial) in results {
        if let Some(p) = partial {
            agg.merge(p);
        }
        outcomes.push(outcome);
    }
    let report = agg.finish();

    let formats: Vec<OutputFormat> = match format {
        Some(f) => vec![f],
        None => vec![OutputFormat::Json, OutputFormat::Csv],
    };
    for f in formats {
        let artifact = export_report(&report, f.export())?;
        write_artifact(&artifact, out)?;
    }
    let entries_file = out.join("entries.json");
    std::fs::write(&entries_file, to_sorted_json(&outcomes))
        .with_context(|| format!("writing {}", entries_file.display()))?;

    let count = |s: &str| outcomes.iter().filter(|o| o.status == s).count();
    let warnings: usize = outcomes.iter().map(|o| o.warnings.len()).sum();
    for o in outcomes.iter().filter(|o| o.status == "failed") {
        eprintln!("{}: {}", o.repo_slug, o.message.as_deref().unwrap_or("failed"));
    }
    println!("entries: {}", outcomes.len());
    println!("pipelines analyzed: {}", report.pipelines_analyzed);
    println!("pipelines with >=1 tool: {}", report.pipelines_with_tools);
    println!("skipped (not a pipeline): {}", count("skipped"));
    println!("failed: {}", count("failed"));
    println!("warnings: {warnings}");
    println!("report: {}", out.display());

    Ok(if report.pipelines_analyzed == 0 {
        EXIT_ERROR
    } else {
        EXIT_OK
    })
}

fn scan_entry(
    analyzer: &Analyzer,
    entry: &ManifestEntry,
    remote: &RemoteContext<'_>,
) -> (EntryOutcome, Option<Aggregator>) {
    let mut outcome = EntryOutcome {
        repo_slug: entry.repo_slug.clone(),
        status: "analyzed",
        message: None,
        provenance: Vec::new(),
        warnings: Vec::new(),
    };
    let m = match materialize(entry, Some(remote)) {
        Ok(m) => m,
        Err(e) => {
            outcome.status = "failed";
            outcome.message = Some(e.to_string());
            return (outcome, None);
        }
    };
    outcome.provenance = m.provenance;
    outcome.warnings = m.warnings;
    match analyzer.analyze(&m.document, &m.tree) {
        Ok(analysis) => {
            outcome.warnings.extend(analysis.warnings.iter().cloned());
            let mut agg = Aggregator::new();
            agg.add(&analysis.record());
            (outcome, Some(agg))
        }
        Err(e) => {
            outcome.status = if e.is_not_a_pipeline() { "skipped" } else { "failed" };
            outcome.message = Some(e.to_string());
            (outcome, None)
        }
    }
}

fn cmd_registry_validate(path: Option<&Path>) -> Result<u8> {
    let result = match path {
        Some(p) => Registry::from_path(p),
        None => Ok(Registry::shipped()),
    };
    match result {
        Ok(reg) => {
            println!("{} tools, OK", reg.len());
            Ok(EXIT_OK)
        }
        Err(e) => {
            eprintln!("invalid registry: {e}");
            Ok(EXIT_ERROR)
        }
    }
}

fn cmd_report(input: &Path, out: &Path, format: OutputFormat) -> Result<u8> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let report: CorpusReport = serde_json::from_str(&text).context("parsing report JSON")?;
    if report.schema_version != travis_tdm_core::analytics::REPORT_SCHEMA_VERSION {
        bail!("unsupported report schema_version {}", report.schema_version);
    }
    let artifact = export_report(&report, format.export())?;
    write_artifact(&artifact, out)?;
    for name in artifact.keys() {
        println!("{}", out.join(name).display());
    }
    Ok(EXIT_OK)
}

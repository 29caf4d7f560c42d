//! `cveforge`: reproduce CVEs end to end, in batches, and inspect stored runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use cveforge_core::config::{Overrides, RunConfig};
use cveforge_core::net::requests_issued;
use cveforge_core::pipeline::{batch_run, render_attempt, AttemptRecord, BatchOptions};
use cveforge_core::runtime::{build_pipeline, resolve_config};
use cveforge_core::stages::FailureKind;
use cveforge_core::store::ArtifactStore;

/// Exit status for CVE-level failures (and missing artifacts).
const EXIT_FAILED: u8 = 1;
/// Exit status for infrastructure and configuration failures.
const EXIT_INFRA: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "cveforge", version, about = "Reproduce CVEs in sandboxed environments")]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalFlags {
    /// Config file; defaults to the mock world's cveforge.toml, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run offline against a fixture world directory.
    #[arg(long, global = true, value_name = "DIR")]
    mock: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    rounds: Option<u32>,
    /// Cost cap per attempt, in USD.
    #[arg(long, global = true, value_name = "USD")]
    budget: Option<f64>,
    /// Wall-clock cap per attempt, in minutes.
    #[arg(long, global = true, value_name = "MIN")]
    deadline: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    parallel: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    artifacts: Option<PathBuf>,
    /// Source repository to use when the record names none.
    #[arg(long, global = true, value_name = "URL")]
    repo_url: Option<String>,
    /// Sandbox backend by name.
    #[arg(long, global = true, value_name = "NAME")]
    backend: Option<String>,
}

impl GlobalFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            mock: self.mock.clone(),
            rounds: self.rounds,
            budget_usd: self.budget,
            deadline_minutes: self.deadline,
            parallelism: self.parallel,
            artifacts: self.artifacts.clone(),
            repo_url: self.repo_url.clone(),
            backend: self.backend.clone(),
        }
    }

    fn resolve(&self) -> anyhow::Result<RunConfig> {
        resolve_config(self.config.as_deref(), &self.overrides()).context("configuration")
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one reproduction attempt.
    Reproduce {
        cve_id: String,
        /// Print the attempt record as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run a list of CVEs (one id per line) over several rounds.
    Batch {
        id_list: PathBuf,
        /// Where to write the JSON report; defaults to <artifacts>/batch-report.json.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Summarize the stored runs of a CVE.
    Show {
        cve_id: String,
        /// Only this run index.
        #[arg(long)]
        run: Option<u32>,
    },
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Debug, Subcommand)]
enum ConfigCommand {
    /// Print the resolved configuration.
    Show,
    /// Write a default configuration file.
    Init {
        #[arg(default_value = "cveforge.toml")]
        path: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("CVEFORGE_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INFRA)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Reproduce { cve_id, json } => reproduce(&cli.global, cve_id, *json),
        Command::Batch { id_list, report } => batch(&cli.global, id_list, report.as_deref()),
        Command::Show { cve_id, run } => show(&cli.global, cve_id, *run),
        Command::Config(ConfigCommand::Show) => {
            print!("{}", cli.global.resolve()?.to_toml());
            Ok(0)
        }
        Command::Config(ConfigCommand::Init { path, force }) => {
            if path.exists() && !force {
                bail!("{} exists; pass --force to overwrite", path.display());
            }
            std::fs::write(path, RunConfig::default().to_toml())
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
            Ok(0)
        }
    }
}

/// Offline runs must never touch the network.
fn check_offline(cfg: &RunConfig) -> anyhow::Result<()> {
    let issued = requests_issued();
    if cfg.run.mock.is_some() && issued > 0 {
        bail!("mock mode issued {issued} network requests");
    }
    Ok(())
}

fn reproduce(flags: &GlobalFlags, cve_id: &str, json: bool) -> anyhow::Result<u8> {
    let cfg = flags.resolve()?;
    let pipeline = build_pipeline(&cfg).context("setting up the pipeline")?;
    let result = pipeline.reproduce(cve_id, 1);
    check_offline(&cfg)?;
    let record = AttemptRecord::from(&result.metadata);
    if json {
        println!("{}", serde_json::to_string_pretty(&record)?);
    } else {
        print!("{}", render_attempt(&result.metadata));
        if let Some(dir) = &result.run_dir {
            println!("artifacts: {}", dir.display());
        }
    }
    if result.reproduced() {
        return Ok(0);
    }
    eprintln!("{}", serde_json::to_string(&record)?);
    Ok(match record.failure_kind {
        Some(FailureKind::Infrastructure) => EXIT_INFRA,
        _ => EXIT_FAILED,
    })
}

fn read_id_list(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn batch(flags: &GlobalFlags, id_list: &Path, report_path: Option<&Path>) -> anyhow::Result<u8> {
    let ids = read_id_list(id_list)?;
    let cfg = flags.resolve()?;
    let pipeline = build_pipeline(&cfg).context("setting up the pipeline")?;
    let options = BatchOptions {
        rounds: cfg.run.rounds,
        parallelism: cfg.run.parallelism,
    };
    let report = batch_run(&pipeline, &ids, &options);
    check_offline(&cfg)?;
    let path = report_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.run.artifacts.join("batch-report.json"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    print!("{}", report.render_text());
    println!("report: {}", path.display());
    Ok(if report.has_infrastructure_failure() { EXIT_INFRA } else { 0 })
}

fn show(flags: &GlobalFlags, cve_id: &str, only: Option<u32>) -> anyhow::Result<u8> {
    let cfg = flags.resolve()?;
    let store = ArtifactStore::new(&cfg.run.artifacts);
    let runs: Vec<u32> = store.runs(cve_id).into_iter().filter(|r| only.is_none_or(|o| o == *r)).collect();
    if runs.is_empty() {
        eprintln!("not found: no stored runs for {cve_id} under {}", cfg.run.artifacts.display());
        return Ok(EXIT_FAILED);
    }
    println!("{cve_id}: runs {}", runs.iter().map(u32::to_string).collect::<Vec<_>>().join(", "));
    for run in runs {
        let meta = store.metadata(cve_id, run).with_context(|| format!("run {run}"))?;
        println!();
        print!("{}", render_attempt(&meta));
        let dir = store.cve_dir(cve_id).join(format!("run-{run}"));
        println!("directory: {}", dir.display());
        for t in &meta.transcripts {
            let outcome = t.outcome.map(|o| format!("{o:?}")).unwrap_or_else(|| "-".into());
            println!(
                "  {:<10} {:<20} {:<16} {:>3} calls  ${:.4}  {}",
                t.stage, t.agent, outcome, t.tool_calls, t.cost_usd, t.file
            );
        }
    }
    Ok(0)
}

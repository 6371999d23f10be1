use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tabdistill::harness::{
    emit_report, fetch_dataset, parse_depths, parse_methods, parse_seeds, run, ConfigOverrides, ExperimentConfig,
    ExperimentReport, ReportFormat, CACHE_ENV,
};

#[derive(Parser)]
#[command(name = "tabdistill", version, about = "Distill MLP teachers into CART students on tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write report.{json,csv,md}.
    Run {
        config: PathBuf,
        /// Seed count (`3` for 0..3) or comma list.
        #[arg(long)]
        seeds: Option<String>,
        /// Inclusive range (`4-12`) or comma list.
        #[arg(long)]
        depths: Option<String>,
        /// Comma-separated method names.
        #[arg(long)]
        methods: Option<String>,
        /// Output directory; defaults to the config's `output` or `runs/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Download, convert and verify a benchmark dataset into the cache.
    Fetch {
        /// adult, connect4, mnist or sgemm.
        dataset: String,
        #[arg(long, env = CACHE_ENV)]
        cache_dir: Option<PathBuf>,
    },
    /// Re-emit the CSV and Markdown tables of a finished run.
    Report { run_dir: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            seeds,
            depths,
            methods,
            out,
        } => {
            let mut c = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            c.apply(ConfigOverrides {
                seeds: seeds.as_deref().map(parse_seeds).transpose()?,
                depths: depths.as_deref().map(parse_depths).transpose()?,
                methods: methods.as_deref().map(parse_methods).transpose()?,
                output: out,
            });
            let dir = c.output.clone().unwrap_or_else(|| Path::new("runs").join(&c.name));
            let report = run(&c)?;
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            std::fs::write(dir.join("config.toml"), c.to_toml())?;
            report.save(dir.join("report.json"))?;
            write_tables(&report, &dir)
        }
        Command::Fetch { dataset, cache_dir } => {
            let cache = cache_dir.unwrap_or_else(tabdistill::harness::cache_dir);
            let f = fetch_dataset(&dataset, &cache)?;
            let state = if f.downloaded { "fetched" } else { "cached" };
            println!("{state}: {}", f.manifest_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { run_dir } => {
            let report = ExperimentReport::load(run_dir.join("report.json"))?;
            write_tables(&report, &run_dir)
        }
    }
}

/// Writes the tables, prints the Markdown and lists incomplete cells.
fn write_tables(report: &ExperimentReport, dir: &Path) -> Result<ExitCode> {
    let files = emit_report(report, dir, &[ReportFormat::Csv, ReportFormat::Markdown])?;
    print!("{}", report.to_markdown());
    for f in &files {
        log::info!("wrote {}", f.display());
    }
    let incomplete = report.incomplete_cells();
    if incomplete.is_empty() && report.failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("{} failure(s), {} incomplete cell(s):", report.failures.len(), incomplete.len());
    for f in &report.failures {
        let method = f.method.map(|m| format!(" {m}")).unwrap_or_default();
        eprintln!("  seed {}{method} ({}): {}", f.seed, f.stage, f.message);
    }
    for c in incomplete {
        eprintln!(
            "  {} depth {} {}: {}/{} seeds",
            c.method,
            c.depth,
            c.metric,
            c.values.len(),
            report.seeds.len()
        );
    }
    Ok(ExitCode::from(2))
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use jacobi_index::models::{model_by_name, MODEL_NAMES};
use jacobi_index_cli::report::{trace, write_trace};
use jacobi_index_cli::{exit, ConfigFile, RunReport};

#[derive(Parser)]
#[command(name = "jacobi-index", version, about = "Index counting and dimension bounds for Jacobi fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a config file and write a report.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// List the bundled submersion models.
    ListModels {
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Write `(t, sigma_min)` samples for the subspace of the first scenario.
    Trace {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Output file; defaults to `$JACOBI_INDEX_OUT_DIR/<config stem>.<ext>`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Overrides the seed of every scenario.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scan_step: Option<f64>,
    /// Root refinement tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, env = "JACOBI_INDEX_OUT_DIR", hide_env_values = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }

    fn parse(s: &str) -> anyhow::Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => bail!("unknown output format '{s}' (json, csv)"),
        }
    }
}

fn load(path: &Path, common: &Common) -> anyhow::Result<ConfigFile> {
    let mut cfg = ConfigFile::load(path)?;
    for (i, s) in cfg.scenarios.iter_mut().enumerate() {
        if common.seed.is_some() {
            s.seed = common.seed;
        }
        if common.scan_step.is_some() {
            s.scan_step = common.scan_step;
        }
        if common.tol.is_some() {
            s.refine_tol = common.tol;
        }
        s.validate(&format!("scenarios[{i}]"))?;
    }
    Ok(cfg)
}

/// Output sink: `--out`, then a path in the config, then the output
/// directory, then stdout.
fn sink(cfg: &ConfigFile, config_path: &Path, common: &Common, suffix: &str) -> anyhow::Result<Box<dyn Write>> {
    let from_config = cfg.scenarios.iter().find_map(|s| s.output.as_ref()?.path.clone()).map(PathBuf::from);
    let path = common.out.clone().or(from_config).or_else(|| {
        let stem = config_path.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned());
        common.out_dir.as_ref().map(|d| d.join(format!("{stem}{suffix}")))
    });
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(BufWriter::new(File::create(&p).with_context(|| format!("writing {}", p.display()))?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn format_of(cfg: &ConfigFile, common: &Common) -> anyhow::Result<Format> {
    if let Some(f) = common.format {
        return Ok(f);
    }
    match cfg.scenarios.iter().find_map(|s| s.output.as_ref()?.format.clone()) {
        Some(f) => Format::parse(&f),
        None => Ok(Format::Json),
    }
}

fn list_models(format: Format) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    for name in MODEL_NAMES {
        let md = model_by_name(name)?;
        rows.push(serde_json::json!({
            "name": name,
            "n": md.n,
            "k": md.k,
            "constants": md.constants,
        }));
    }
    let mut out = io::stdout().lock();
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["name", "n", "k"])?;
            for r in &rows {
                w.write_record([r["name"].as_str().unwrap_or_default(), &r["n"].to_string(), &r["k"].to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main_inner(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Run { config, common } => {
            let cfg = load(&config, &common)?;
            let format = format_of(&cfg, &common)?;
            let report = RunReport::run(&cfg);
            let out = sink(&cfg, &config, &common, &format!(".{}", format.ext()))?;
            match format {
                Format::Json => report.write_json(out)?,
                Format::Csv => report.write_csv(out)?,
            }
            Ok(report.exit_code())
        }
        Command::ListModels { format } => {
            list_models(format)?;
            Ok(exit::PASS)
        }
        Command::Trace { config, common } => {
            let cfg = load(&config, &common)?;
            let first = cfg.scenarios.first().context("config has no scenarios")?;
            let rows = trace(first)?;
            write_trace(&rows, sink(&cfg, &config, &common, ".trace.csv")?)?;
            Ok(exit::PASS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::BAD_INPUT } else { exit::PASS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::BAD_INPUT)
        }
    }
}

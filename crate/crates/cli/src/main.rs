//! `magnonsim` command-line interface.
//!
//! Exit codes: 0 on success, 2 for configuration or I/O problems, 3 for
//! numerical failures. Errors are reported as a JSON object on stderr.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use magnonsim::config::{default_config_path, load_config};
use magnonsim::{Error, RunConfig};
use serde_json::json;

use commands::{Context, Outcome};
use output::Format;

#[derive(Debug, Parser)]
#[command(name = "magnonsim", version, about = "Nuclear-spin Raman cooling and magnon dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config; falls back to $MAGNONSIM_CONFIG, then built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (created if absent); overrides output.dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write a matplotlib script for the tables.
    #[arg(long, global = true)]
    plot_script: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Cooling performance over the (Ω, Γ) grid.
    CoolMap,
    /// Optimal cooling performance versus magnetic field.
    FieldScan,
    /// Sideband spectrum versus detuning and pulse length.
    Spectrum,
    /// Sideband Rabi oscillations and coupling extraction.
    Rabi,
    /// Polarization statistics versus inverse temperature.
    Thermometry,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::CoolMap => "cool-map",
            Command::FieldScan => "field-scan",
            Command::Spectrum => "spectrum",
            Command::Rabi => "rabi",
            Command::Thermometry => "thermometry",
        }
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    let body = json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn report(e: &Error) -> ExitCode {
    if e.is_config_error() {
        fail("config", e.to_string(), 2)
    } else {
        fail("numerical", e.to_string(), 3)
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match cli.config.clone().or_else(default_config_path) {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    cfg.output.plot_script |= cli.plot_script;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: RunConfig) -> Result<(), Error> {
    let out = output::ensure_dir(&PathBuf::from(&cfg.output.dir))?;
    let ctx = Context {
        cfg,
        out,
        format: cli.format,
    };
    let Outcome { mut files, summary } = match cli.command {
        Command::CoolMap => commands::cool_map(&ctx)?,
        Command::FieldScan => commands::field_scan_cmd(&ctx)?,
        Command::Spectrum => commands::spectrum(&ctx)?,
        Command::Rabi => commands::rabi(&ctx)?,
        Command::Thermometry => commands::thermometry(&ctx)?,
    };
    let name = cli.command.name();
    if ctx.cfg.output.plot_script {
        let script = format!("plot_{}.py", name.replace('-', "_"));
        output::write_text(&ctx.out.join(&script), &output::plot_script(name, &files))?;
        files.push(script);
    }
    output::write_json(
        &ctx.out.join("summary.json"),
        &json!({ "command": name, "summary": summary }),
    )?;
    files.push("summary.json".into());
    output::write_json(
        &ctx.out.join("metadata.json"),
        &json!({
            "command": name,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": ctx.cfg.seed,
            "format": cli.format,
            "files": files,
            "config": ctx.cfg,
        }),
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            return fail("usage", e.to_string(), 2);
        }
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            return fail("config", "--workers must be at least 1".into(), 2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            return fail("config", e.to_string(), 2);
        }
    }
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    match run(&cli, cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

//! `gltorus`: batch runs of the lattice Ginzburg-Landau pipeline.
//!
//! Exit status is 0 on success, 2 when a solver did not converge and 1 on
//! usage or configuration errors. A `manifest` is written whenever the
//! configuration parses.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::{Command, RunError, Status};
use config::RunConfig;
use output::Outputs;

#[derive(Parser, Debug)]
#[command(name = "gltorus", version, about = "Abelian Ginzburg-Landau on a lattice torus")]
struct Cli {
    command: Command,
    /// Sectioned key = value configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set coupling.tau=12.5`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (`output.dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker thread cap (`output.threads`).
    #[arg(long)]
    threads: Option<usize>,
    /// Eigenvalue cluster to bifurcate from (`bifurcate.level`).
    #[arg(long)]
    level: Option<usize>,
    /// Newton-refine each branch predictor (`bifurcate.refine`).
    #[arg(long)]
    refine: bool,
    /// Snapshot to analyse (`certify.input` or `hessian.input`).
    #[arg(long)]
    input: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> Result<RunConfig, config::ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for s in &cli.set {
        cfg.apply_override(s)?;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(l) = cli.level {
        cfg.level = l;
    }
    if cli.refine {
        cfg.refine = true;
    }
    if let Some(i) = &cli.input {
        match cli.command {
            Command::Hessian => cfg.hessian_input = Some(i.clone()),
            _ => cfg.certify_input = Some(i.clone()),
        }
    }
    Ok(cfg)
}

fn manifest(cmd: Command, cfg: &RunConfig, code: i32, status: &str, files: &[String]) -> String {
    let mut s = String::new();
    s.push_str(&format!("command = {}\n", cmd.name()));
    s.push_str(&format!("status = {status}\n"));
    s.push_str(&format!("exit_code = {code}\n"));
    s.push_str(&format!("config_sha256 = {}\n", cfg.hash()));
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s.push_str(&format!("gltorus_cli_version = {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("gltorus_version = {}\n", gltorus::VERSION));
    s.push_str(&format!("files = {}\n", files.join(", ")));
    s
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let mut out = match Outputs::new(&cfg.output_dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", cfg.output_dir.display());
            return ExitCode::from(1);
        }
    };
    if let Err(e) = out.write("config.ini", &cfg.canonical()) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let (code, status) = match commands::run(cli.command, &cfg, &mut out) {
        Ok(Status::Ok) => (0, "ok".to_string()),
        Ok(Status::Nonconverged) => {
            eprintln!("warning: solver did not converge");
            (2, "nonconverged".to_string())
        }
        Err(e) => {
            eprintln!("error: {e}");
            let tag = match e {
                RunError::Numerical(_) => "nonconverged",
                _ => "error",
            };
            (e.exit_code(), format!("{tag}: {e}"))
        }
    };
    let text = manifest(cli.command, &cfg, code, &status, &out.written);
    if let Err(e) = std::fs::write(out.path("manifest"), text) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code as u8)
}

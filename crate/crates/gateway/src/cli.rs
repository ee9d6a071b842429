//! Subcommands behind the `careflow` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use careflow_core::clinical::load_dataset;
use careflow_core::connector::PlugMode;
use careflow_core::org::OrgSpecFile;
use careflow_core::scenario::{run_scenario, LoadedScenario, RunOptions};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::GatewayConfig;
use crate::driver::Driver;

#[derive(Debug, Parser)]
#[command(name = "careflow", version, about = "Agent-mediated clinical workflow with decision support and order entry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Lazy,
    Eager,
}

impl From<Mode> for PlugMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Lazy => PlugMode::Lazy,
            Mode::Eager => PlugMode::Eager,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start the HTTP gateway.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a scenario file; exit 1 on fault, 2 on golden mismatch.
    RunScenario {
        file: PathBuf,
        /// Compare the trace byte-for-byte with this file.
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Where the trace, report and snapshot go (default: next to the scenario).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        org_spec: Option<PathBuf>,
        /// Stop right after the first snapshot stimulus.
        #[arg(long)]
        stop_at_snapshot: bool,
        /// Continue from a snapshot file, after the scenario's snapshot stimulus.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Load and check a clinical dataset directory.
    ValidateDataset { dir: PathBuf },
    /// Print the organizational spec as JSON.
    ExportOrgspec {
        /// Normalize this spec file instead of the built-in one.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

pub fn execute(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Serve { config } => serve(&config),
        Command::RunScenario {
            file,
            golden,
            out,
            seed,
            mode,
            org_spec,
            stop_at_snapshot,
            resume,
        } => {
            let org_spec = org_spec.as_deref().map(read_spec).transpose()?;
            let out_dir = out.unwrap_or_else(|| file.parent().map(Path::to_path_buf).unwrap_or_default());
            let opts = RunOptions {
                out_dir: Some(out_dir),
                golden,
                seed,
                mode: mode.map(Into::into),
                org_spec,
                stop_at_snapshot,
                resume,
            };
            scenario(&file, &opts)
        }
        Command::ValidateDataset { dir } => Ok(validate_dataset(&dir)),
        Command::ExportOrgspec { from } => {
            let spec = match from {
                Some(p) => read_spec(&p)?,
                None => OrgSpecFile::default_spec(),
            };
            // A closed pipe (`| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout(), "{}", spec.to_json_pretty());
            Ok(0)
        }
    }
}

fn read_spec(path: &Path) -> anyhow::Result<OrgSpecFile> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(OrgSpecFile::parse(&text)?)
}

fn scenario(file: &Path, opts: &RunOptions) -> anyhow::Result<i32> {
    let loaded = LoadedScenario::from_file(file)?;
    let outcome = run_scenario(&loaded, opts)?;
    if let Some(p) = &outcome.trace_path {
        println!("trace: {}", p.display());
    }
    if let Some(p) = &outcome.report_path {
        println!("report: {}", p.display());
    }
    if let Some(p) = &outcome.snapshot_path {
        println!("snapshot: {}", p.display());
    }
    println!("messages: {}", outcome.trace.events.len());
    for fault in &outcome.faults {
        eprintln!("fault: {fault}");
    }
    if let Some(d) = &outcome.divergence {
        eprintln!("{d}");
    }
    println!("exit: {}", outcome.exit_code);
    Ok(outcome.exit_code)
}

fn validate_dataset(dir: &Path) -> i32 {
    match load_dataset(dir) {
        Ok(c) => {
            println!("patients: {}", c.patients.len());
            println!("physio_profiles: {}", c.profiles.len());
            println!("drug_bank: {}", c.drugs.len());
            println!("pharmacy_stock: {}", c.stock.len());
            println!("lab_results: {}", c.labs.len());
            println!("interaction_rules: {}", c.rules.len());
            println!("protocols: {}", c.protocol_seed.len());
            println!("ok: {} of 5 sources populated", c.populated_sources());
            0
        }
        Err(e) => {
            eprintln!("{}: {e}", e.code());
            1
        }
    }
}

fn serve(path: &Path) -> anyhow::Result<i32> {
    let config = GatewayConfig::from_file(path)?;
    let addr = config.listen_addr()?;
    let driver = Driver::start(config.system_config()?, config.snapshot_path(), config.processes.clone())?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, crate::api::router(driver))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(0)
}

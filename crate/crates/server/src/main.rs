use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use seismoflow::api::{router, AppState};
use seismoflow::cli::{self, RunOptions, SimulateOptions};
use seismoflow::setup::{feed_from_env, read_registry, BrokerHandle, ENV_DATA_DIR};
use seismoflow::store::FlowStore;
use seismoflow_core::domain::SensorRegistry;
use seismoflow_core::palette::Palette;
use seismoflow_core::runtime::{RuntimeEnv, SystemClock};
use seismoflow_core::simulator::ScriptedFeed;

#[derive(Parser)]
#[command(name = "seismoflow", version, about = "Flow-based programming for seismic sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a flow file and print its validation report.
    Validate {
        flow: PathBuf,
    },
    /// Deploy a flow headlessly, optionally playing a scenario against it.
    Run(RunArgs),
    /// Serve the editor API.
    Serve(ServeArgs),
    /// Play a scenario against the configured broker.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct RunArgs {
    flow: PathBuf,
    /// Sensor registry document; defaults to the scenario's sensors.
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Real seconds per flow second. 0 runs as fast as possible on virtual time.
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    /// Write one line per routed message to this file.
    #[arg(long)]
    audit_log: Option<PathBuf>,
    /// Flow-time seconds to run for.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8750)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    /// Directory holding one `.flow.json` per flow.
    #[arg(long, env = ENV_DATA_DIR, default_value = "flows")]
    data_dir: PathBuf,
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    scenario: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    /// Seconds to keep serving the earthquake feed after the last event.
    #[arg(long, default_value_t = 0.0)]
    linger: f64,
}

fn interrupt_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    if let Err(e) = ctrlc::set_handler(move || f.store(true, Ordering::SeqCst)) {
        tracing::warn!("cannot install interrupt handler: {e}");
    }
    flag
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let registry = match &args.registry {
        Some(p) => read_registry(p)?,
        None => SensorRegistry::default(),
    };
    let store = FlowStore::open(&args.data_dir)
        .with_context(|| format!("cannot open data directory {}", args.data_dir.display()))?;
    let clock = Arc::new(SystemClock);
    let broker = BrokerHandle::from_env(clock.clone())?;
    let feed = feed_from_env().unwrap_or_else(|| Arc::new(ScriptedFeed::new()));
    let env = RuntimeEnv::new(broker.broker(), Arc::new(registry), clock).feed(feed);
    let state = AppState::new(Arc::new(Palette::standard()), env, store);

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let addr = SocketAddr::new(args.bind, args.port);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let mut err = std::io::stderr();
    let code = match Cli::parse().command {
        Command::Validate { flow } => cli::validate(&flow, &mut std::io::stdout(), &mut err),
        Command::Run(a) => {
            let opts = RunOptions {
                flow: a.flow,
                registry: a.registry,
                scenario: a.scenario,
                time_scale: a.time_scale,
                audit_log: a.audit_log,
                duration: a.duration,
            };
            cli::run(&opts, &interrupt_flag(), &mut err)
        }
        Command::Simulate(a) => {
            let opts = SimulateOptions {
                scenario: a.scenario,
                time_scale: a.time_scale,
                linger: a.linger,
            };
            cli::simulate(&opts, &interrupt_flag(), &mut err)
        }
        Command::Serve(a) => match serve(a) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("{e:#}");
                1
            }
        },
    };
    ExitCode::from(code as u8)
}

//! The `arginote` command line.

use std::io::Write;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use arginote_core::analytics::{figure_csv, figure_export, AnalysisReport};
use arginote_core::engine::{parse_log, replay_bytes, DirectoryStores, SystemClock};
use arginote_core::sim::{simulate, SimulationScript};
use arginote_core::{replay, state_digest, Challenge, Engine, EvaluatorRegistry, Hub, Limits, TeamId};
use clap::{Parser, Subcommand};

use crate::ServerConfig;

#[derive(Debug, Parser)]
#[command(name = "arginote", version, about = "Collaborative mini-paper workspaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the HTTP/WebSocket server.
    Serve {
        #[arg(long, env = "ARGINOTE_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Directory holding one `<session>.jsonl` log per session.
        #[arg(long, env = "ARGINOTE_DATA_DIR", default_value = "arginote-data")]
        data_dir: PathBuf,
        /// JSON file with one challenge object or an array of them.
        #[arg(long)]
        challenge: PathBuf,
        #[arg(long, default_value_t = 15_000)]
        heartbeat_ms: u64,
    },
    /// Replay logs and print one state digest per line.
    Replay {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Print the analytics report for a log.
    Analyze {
        log: PathBuf,
        /// Print one team's figure data as CSV instead of the JSON report.
        #[arg(long, requires = "team")]
        csv: bool,
        #[arg(long, requires = "csv")]
        team: Option<String>,
    },
    /// Generate a log by running scripted agents through the engine.
    Simulate {
        /// Simulation script (JSON); defaults apply to omitted fields.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` and runs the command: 0 on success, 2 on usage errors, 1 otherwise.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Cmd::Serve { port, bind, data_dir, challenge, heartbeat_ms } => {
            serve(bind, port, &data_dir, &challenge, Duration::from_millis(heartbeat_ms))
        }
        Cmd::Replay { logs } => {
            let mut out = std::io::stdout().lock();
            for path in logs {
                let bytes = read(&path)?;
                let state = replay_bytes(&bytes).with_context(|| format!("replaying {}", path.display()))?;
                writeln!(out, "{}", state_digest(&state))?;
            }
            Ok(())
        }
        Cmd::Analyze { log, csv, team } => {
            let bytes = read(&log)?;
            let events = parse_log(&bytes).with_context(|| format!("reading {}", log.display()))?;
            let text = match (csv, team) {
                (true, Some(team)) => {
                    replay(&events).with_context(|| format!("replaying {}", log.display()))?;
                    figure_csv(&figure_export(&events, &TeamId::from(team.as_str()))?)
                }
                _ => {
                    let report = AnalysisReport::from_log(&events).with_context(|| format!("replaying {}", log.display()))?;
                    report.to_json() + "\n"
                }
            };
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
        Cmd::Simulate { script, seed, out } => {
            let script = match script {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    SimulationScript::from_json_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => SimulationScript::default(),
            };
            let outcome = simulate(&script, seed)?;
            std::fs::write(&out, &outcome.log).with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "{}: {} accepted, {} rejected -> {}",
                outcome.session,
                outcome.accepted,
                outcome.rejected,
                out.display()
            );
            Ok(())
        }
    }
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Reads a challenge file: one challenge object or an array of them.
pub fn load_challenges(path: &Path, registry: &EvaluatorRegistry) -> anyhow::Result<Vec<Challenge>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let challenges: Vec<Challenge> = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    if challenges.is_empty() {
        bail!("{} defines no challenges", path.display());
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in &challenges {
        registry.check_challenge(c).with_context(|| format!("challenge {:?}", c.id))?;
        if !seen.insert(c.id.as_str()) {
            bail!("challenge id {:?} defined twice", c.id);
        }
    }
    Ok(challenges)
}

fn serve(bind: IpAddr, port: u16, data_dir: &Path, challenge: &Path, heartbeat: Duration) -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let registry = Arc::new(EvaluatorRegistry::with_builtins());
    let challenges = load_challenges(challenge, &registry)?;
    let stores = DirectoryStores::new(data_dir).with_context(|| format!("opening {}", data_dir.display()))?;
    let hub = Hub::open(Engine::new(registry, Limits::default()), Arc::new(SystemClock), Box::new(stores))?;
    tracing::info!(sessions = hub.sessions().len(), dir = %data_dir.display(), "loaded logs");
    let app = crate::app(Arc::new(hub), ServerConfig::new(challenges).heartbeat(heartbeat));

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((bind, port))
            .await
            .with_context(|| format!("binding {bind}:{port}"))?;
        let addr = listener.local_addr()?;
        println!("listening on {addr}");
        std::io::stdout().flush()?;
        crate::serve(listener, app, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

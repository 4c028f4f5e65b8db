use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swarmlink_core::scenario::export_log;
use swarmlink_core::{load_scenario, run_scenario, ExportFormat, ScenarioConfig};
use swarmlink_server::{start, LiveSession, ServerConfig, DEFAULT_PORT, DEFAULT_RATE_DIV, PORT_ENV};

const EXIT_SCENARIO: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "swarmlink", version, about = "Hand-guided drone formation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario headless and export its log.
    Run {
        scenario: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// csv or structured.
        #[arg(long)]
        format: Option<String>,
        /// Overrides the scenario duration.
        #[arg(long = "duration-s")]
        duration_s: Option<f64>,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
    /// Host the world live over websockets.
    Serve {
        scenario: PathBuf,
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// Send a state message every N ticks.
        #[arg(long = "rate-div", default_value_t = DEFAULT_RATE_DIV)]
        rate_div: u32,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Write the session log here on shutdown.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

enum Failure {
    Scenario(String),
    Runtime(String),
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Scenario(format!("{}: {e}", path.display())))?;
    load_scenario(&text).map_err(|e| Failure::Scenario(format!("{}: {e}", path.display())))
}

fn parse_format(token: &str) -> Result<ExportFormat, Failure> {
    token.parse().map_err(|e| Failure::Scenario(format!("--format: {e}")))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    let result = match path {
        Some(p) => fs::write(p, bytes).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().write_all(bytes).map_err(|e| e.to_string()),
    };
    result.map_err(Failure::Runtime)
}

fn run(scenario: &Path, out: Option<PathBuf>, format: Option<String>, duration: Option<f64>) -> Result<(), Failure> {
    let mut cfg = load(scenario)?;
    if let Some(d) = duration {
        cfg = cfg.with_duration(d).map_err(|e| Failure::Scenario(format!("--duration-s: {e}")))?;
    }
    let format = match format {
        Some(token) => parse_format(&token)?,
        None => cfg.output.format.unwrap_or(ExportFormat::Csv),
    };
    let out = out.or_else(|| cfg.output.path.as_ref().map(PathBuf::from));
    match run_scenario(&cfg) {
        Ok(log) => {
            write_output(out.as_deref(), &export_log(&log, format))?;
            log::info!("{} rows written", log.rows.len());
            Ok(())
        }
        Err(e) => {
            // Keep what ran before the failing tick.
            if out.is_some() {
                write_output(out.as_deref(), &export_log(&e.partial, format))?;
            }
            Err(Failure::Runtime(e.to_string()))
        }
    }
}

fn validate(scenario: &Path) -> Result<(), Failure> {
    let cfg = load(scenario)?;
    println!(
        "{}: ok ({} s, {} ticks, {} waypoints)",
        scenario.display(),
        cfg.duration,
        cfg.tick_count(),
        cfg.hand.waypoints.len()
    );
    Ok(())
}

fn serve(scenario: &Path, addr: SocketAddr, rate_div: u32, log_path: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(scenario)?;
    if rate_div == 0 {
        return Err(Failure::Scenario("--rate-div must be at least 1".into()));
    }
    let mut session = LiveSession::new(cfg).map_err(|e| Failure::Scenario(e.to_string()))?;
    if log_path.is_some() {
        session = session.with_log();
    }
    let mut config = ServerConfig::new(addr);
    config.rate_div = rate_div;
    let handle = start(session, config).map_err(|e| Failure::Runtime(format!("{addr}: {e}")))?;
    println!("listening on ws://{}", handle.local_addr());
    let _ = std::io::stdout().flush();

    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    runtime
        .block_on(tokio::signal::ctrl_c())
        .map_err(|e| Failure::Runtime(e.to_string()))?;

    let mut session = handle.shutdown();
    if let (Some(path), Some(log)) = (log_path, session.take_log()) {
        write_output(Some(&path), &export_log(&log, ExportFormat::Csv))?;
        log::info!("session log with {} rows written to {}", log.rows.len(), path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run {
            scenario,
            out,
            format,
            duration_s,
        } => run(&scenario, out, format, duration_s),
        Cmd::Validate { scenario } => validate(&scenario),
        Cmd::Serve {
            scenario,
            port,
            rate_div,
            host,
            log,
        } => serve(&scenario, SocketAddr::new(host, port), rate_div, log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Scenario(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SCENARIO)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

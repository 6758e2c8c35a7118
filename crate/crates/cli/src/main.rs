//! `blockbot`: run block programs against the simulated robot.
//!
//! Exit codes: 0 success, 2 environment/config error, 3 runtime program
//! error, 4 validation error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use blockbot_bridge::{Host, HostConfig, WsLink};
use blockbot_core::program::{parse_document, validate_with, BlockProgram, Diagnostic, Mode};
use blockbot_core::runtime::{execute, RunOptions, Termination};
use blockbot_core::sim::Scenario;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tracing_subscriber::EnvFilter;

const PORT_ENV: &str = "BLOCKBOT_PORT";

#[derive(Parser)]
#[command(name = "blockbot", version, about = "Block programs for a simulated differential-drive robot")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug). RUST_LOG wins if set.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the simulation over the rosbridge protocol until interrupted.
    Serve(ServeArgs),
    /// Execute a program against an in-process simulation.
    Run(RunArgs),
    /// Parse and validate programs without running them.
    Validate(ValidateArgs),
    /// Record every topic message of a run as NDJSON.
    Record(RecordArgs),
}

#[derive(Args)]
struct WorldArg {
    /// World file (JSON). Defaults to an empty, unbounded world.
    #[arg(long)]
    world: Option<PathBuf>,
}

#[derive(Args)]
struct NetArgs {
    /// TCP port; the BLOCKBOT_PORT environment variable overrides it.
    #[arg(long, default_value_t = 9090)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    world: WorldArg,
    #[command(flatten)]
    net: NetArgs,
    /// Real-time factor; 0 steps as fast as possible.
    #[arg(long, default_value_t = 1.0)]
    rtf: f64,
    #[arg(long)]
    max_sim_seconds: Option<f64>,
    /// Also write an NDJSON trace of all topic traffic.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    program: PathBuf,
    #[command(flatten)]
    world: WorldArg,
    #[arg(long, default_value_t = 0.0)]
    rtf: f64,
    #[arg(long, default_value_t = 300.0)]
    max_sim_seconds: f64,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Serve the WebSocket endpoint while the program runs.
    #[arg(long)]
    listen: bool,
    /// Run the program as a remote client; it must start with ros_connect
    /// pointing at this server. Implies --listen.
    #[arg(long)]
    standalone: bool,
    #[command(flatten)]
    net: NetArgs,
    /// Print the final report as one JSON line instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Validate for remote execution (ros_connect first).
    #[arg(long)]
    standalone: bool,
}

#[derive(Args)]
struct RecordArgs {
    /// Output file.
    #[arg(long)]
    trace: PathBuf,
    /// Simulated duration to record.
    #[arg(long)]
    max_sim_seconds: f64,
    #[command(flatten)]
    world: WorldArg,
    /// Program to run (bound) while recording.
    #[arg(long)]
    program: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    rtf: f64,
    /// Serve the WebSocket endpoint while recording.
    #[arg(long)]
    listen: bool,
    #[command(flatten)]
    net: NetArgs,
}

/// A failure mapped to its exit code.
enum Failure {
    Config(anyhow::Error),
    Runtime(String),
    Invalid,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Serve(a) => serve(a),
        Command::Run(a) => run(a),
        Command::Validate(a) => validate(a),
        Command::Record(a) => record(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("program error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Invalid) => ExitCode::from(4),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn load_world(arg: &WorldArg) -> anyhow::Result<Scenario> {
    let Some(path) = &arg.world else { return Ok(Scenario::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Scenario::from_json(&text).with_context(|| format!("{}", path.display()))
}

impl NetArgs {
    fn addr(&self) -> anyhow::Result<SocketAddr> {
        let port = match std::env::var(PORT_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| anyhow!("{PORT_ENV}={v:?} is not a port number"))?,
            Err(_) => self.port,
        };
        Ok(SocketAddr::new(self.bind, port))
    }
}

/// Reads and validates one program; diagnostics go to stderr.
fn load_program(path: &Path, mode: Mode) -> Result<BlockProgram, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Config)?;
    let diags = match parse_document(&text) {
        Ok(p) => {
            let diags = validate_with(&p, mode);
            if diags.is_empty() {
                return Ok(p);
            }
            diags
        }
        Err(d) => vec![d],
    };
    report_diagnostics(path, &diags);
    Err(Failure::Invalid)
}

fn report_diagnostics(path: &Path, diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{}: {d} [{}]", path.display(), json!(d.code).as_str().unwrap_or("?"));
    }
}

fn create_trace(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot write trace {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn host(scenario: &Scenario, rtf: f64, max_sim_seconds: Option<f64>, run: RunOptions) -> anyhow::Result<Host> {
    host_with(scenario, HostConfig { rtf, max_sim_seconds, run, ..HostConfig::default() })
}

fn host_with(scenario: &Scenario, config: HostConfig) -> anyhow::Result<Host> {
    Host::new(scenario, config).context("cannot start the simulation")
}

/// Ctrl-C arrives on the returned channel.
fn interrupts() -> anyhow::Result<mpsc::Receiver<()>> {
    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .context("cannot install the interrupt handler")?;
    Ok(rx)
}

fn serve(args: ServeArgs) -> Outcome {
    let scenario = load_world(&args.world)?;
    let mut host = host(&scenario, args.rtf, args.max_sim_seconds, RunOptions::default())?;
    if let Some(path) = &args.trace {
        host.set_trace(Box::new(create_trace(path)?));
    }
    let addr = host.listen(args.net.addr()?).context("cannot listen")?;
    let stop = interrupts()?;
    host.start().context("cannot start the simulation")?;
    println!("listening on ws://{addr}  (UI at http://{addr}/)");
    let _ = std::io::stdout().flush();
    while !host.sim_finished() {
        if stop.recv_timeout(Duration::from_millis(50)).is_ok() {
            break;
        }
    }
    let report = host.shutdown().context("shutdown")?;
    tracing::info!(sim_time = report.sim.sim_time(), "stopped");
    if let Some(n) = report.trace_lines {
        eprintln!("trace: {n} messages");
    }
    Ok(())
}

fn run(args: RunArgs) -> Outcome {
    let mode = if args.standalone { Mode::Standalone } else { Mode::Bound };
    let program = load_program(&args.program, mode)?;
    let scenario = load_world(&args.world)?;
    let options = RunOptions { mode, max_sim_seconds: args.max_sim_seconds, ..RunOptions::default() };
    let config = HostConfig {
        rtf: args.rtf,
        max_sim_seconds: Some(args.max_sim_seconds),
        stop_with_program: !args.standalone,
        run: options.clone(),
        ..HostConfig::default()
    };
    let mut host = host_with(&scenario, config)?;
    if let Some(path) = &args.trace {
        host.set_trace(Box::new(create_trace(path)?));
    }
    if args.listen || args.standalone {
        let addr = host.listen(args.net.addr()?).context("cannot listen")?;
        eprintln!("listening on ws://{addr}");
    }
    let interrupted = interrupts()?;
    let wall = Instant::now();

    let term = if args.standalone {
        host.start().context("cannot start the simulation")?;
        let stop = std::sync::Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        std::thread::spawn(move || {
            if interrupted.recv().is_ok() {
                flag.store(true, std::sync::atomic::Ordering::SeqCst);
            }
        });
        let mut link = WsLink::default();
        let mut print = |s: &str| println!("{s}");
        let term = execute(&program, &mut link, &options, &stop, &mut print);
        drop(link);
        term
    } else {
        // Launching before the first step makes the run reproducible.
        let hook = Box::new(|s: &str| println!("{s}"));
        let running = host.launch_with(program, Some(hook)).map_err(|e| anyhow!("{e}"))?;
        host.start().context("cannot start the simulation")?;
        while !running.is_finished() {
            if interrupted.recv_timeout(Duration::from_millis(20)).is_ok() {
                running.stop();
            }
        }
        running.join()
    };

    let report = host.shutdown().context("shutdown")?;
    let pose = report.sim.state().true_pose;
    let sim_time = report.sim.sim_time();
    let wall = wall.elapsed().as_secs_f64();
    if args.json {
        let line = json!({
            "termination": term.event().0,
            "detail": term.event().1,
            "sim_time": sim_time,
            "wall_time": wall,
            "pose": {"x": pose.x, "y": pose.y, "theta": pose.theta},
        });
        println!("{line}");
    } else {
        println!("{term} after {sim_time:.2} s simulated ({wall:.2} s wall)");
        println!("final pose: x={:.4} m  y={:.4} m  theta={:.2}°", pose.x, pose.y, pose.theta.to_degrees());
    }
    match term {
        Termination::Error(e) => Err(Failure::Runtime(e.to_string())),
        _ => Ok(()),
    }
}

fn validate(args: ValidateArgs) -> Outcome {
    let mode = if args.standalone { Mode::Standalone } else { Mode::Bound };
    let mut invalid = false;
    for path in &args.files {
        match load_program(path, mode) {
            Ok(_) => println!("{}: ok", path.display()),
            Err(Failure::Invalid) => invalid = true,
            Err(other) => return Err(other),
        }
    }
    if invalid {
        Err(Failure::Invalid)
    } else {
        Ok(())
    }
}

fn record(args: RecordArgs) -> Outcome {
    if !(args.max_sim_seconds.is_finite() && args.max_sim_seconds > 0.0) {
        return Err(anyhow!("--max-sim-seconds must be positive").into());
    }
    let program = match &args.program {
        Some(p) => Some(load_program(p, Mode::Bound)?),
        None => None,
    };
    let scenario = load_world(&args.world)?;
    let options = RunOptions { max_sim_seconds: args.max_sim_seconds, ..RunOptions::default() };
    let mut host = host(&scenario, args.rtf, Some(args.max_sim_seconds), options)?;
    host.set_trace(Box::new(create_trace(&args.trace)?));
    if args.listen {
        let addr = host.listen(args.net.addr()?).context("cannot listen")?;
        eprintln!("listening on ws://{addr}");
    }
    let running = match program {
        Some(p) => Some(host.launch(p).map_err(|e| anyhow!("{e}"))?),
        None => None,
    };
    let interrupted = interrupts()?;
    host.start().context("cannot start the simulation")?;
    while !host.sim_finished() {
        if interrupted.recv_timeout(Duration::from_millis(20)).is_ok() {
            break;
        }
    }
    let report = host.shutdown().context("shutdown")?;
    let lines = report.trace_lines.unwrap_or(0);
    eprintln!("recorded {lines} messages over {:.2} s to {}", report.sim.sim_time(), args.trace.display());
    if let Some(Termination::Error(e)) = running.map(|r| r.join()) {
        return Err(Failure::Runtime(e.to_string()));
    }
    Ok(())
}

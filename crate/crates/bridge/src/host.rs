//! Simulation host: owns the simulator thread, the hub, bound programs
//! and (optionally) the WebSocket listener.

use std::io::{self, Write};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use blockbot_core::program::BlockProgram;
use blockbot_core::runtime::{execute, RunOptions, Termination};
use blockbot_core::sim::{Scenario, SimError, Simulator};
use serde_json::{json, Value};
use thiserror::Error;

use crate::gate::TickGate;
use crate::hub::{Effect, Hub};
use crate::local::LocalLink;
use crate::protocol::BridgeError;
use crate::server::{self, ServerHandle};
use crate::trace::TraceSink;

#[derive(Debug, Clone, PartialEq)]
pub struct HostConfig {
    /// Real-time factor: 1 paces the simulation to the wall clock, 0 runs
    /// as fast as possible.
    pub rtf: f64,
    /// Stop stepping after this much simulated time.
    pub max_sim_seconds: Option<f64>,
    /// Control period of bound programs (s).
    pub control_period: f64,
    /// End the simulation at the step where a bound program terminates.
    pub stop_with_program: bool,
    pub run: RunOptions,
}

impl Default for HostConfig {
    fn default() -> Self {
        Self {
            rtf: 1.0,
            max_sim_seconds: None,
            control_period: 0.05,
            stop_with_program: false,
            run: RunOptions::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum HostError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid real-time factor {0}")]
    Rtf(f64),
    #[error("the simulation is already running")]
    Started,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// State reachable from every thread of the host.
pub(crate) struct Shared {
    pub(crate) hub: Mutex<Hub>,
    pub(crate) gate: TickGate,
    pub(crate) run: RunOptions,
    pub(crate) world: Value,
    programs: Mutex<Vec<JoinHandle<Termination>>>,
}

type PrintHook = Box<dyn FnMut(&str) + Send>;

/// Starts a bound program thread. The caller has already claimed the
/// program slot in the hub.
pub(crate) fn spawn_program(
    shared: &Arc<Shared>,
    program: BlockProgram,
    stop: Arc<AtomicBool>,
    mut hook: Option<PrintHook>,
) -> JoinHandle<Termination> {
    let session = shared.hub.lock().unwrap().open_session(None);
    shared.gate.attach();
    let shared = shared.clone();
    thread::spawn(move || {
        let mut link = LocalLink::new(shared.clone(), session);
        let mut print = |text: &str| {
            if let Some(h) = hook.as_mut() {
                h(text);
            }
            shared.hub.lock().unwrap().broadcast_program_event("print", json!(text));
        };
        let term = execute(&program, &mut link, &shared.run, &stop, &mut print);
        {
            let mut hub = shared.hub.lock().unwrap();
            hub.close_session(session);
            hub.program_ended(&term);
        }
        shared.gate.detach();
        term
    })
}

pub(crate) fn apply(shared: &Arc<Shared>, effect: Effect) {
    match effect {
        Effect::Launch { program, stop } => {
            let handle = spawn_program(shared, program, stop, None);
            shared.programs.lock().unwrap().push(handle);
        }
    }
}

/// A program started through [`Host::launch`].
pub struct ProgramRun {
    handle: JoinHandle<Termination>,
    stop: Arc<AtomicBool>,
}

impl ProgramRun {
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn is_finished(&self) -> bool {
        self.handle.is_finished()
    }

    pub fn join(self) -> Termination {
        self.handle.join().expect("program thread panicked")
    }
}

/// What is left after shutdown.
pub struct HostReport {
    pub sim: Simulator,
    /// Trace lines written, if a trace was attached.
    pub trace_lines: Option<u64>,
}

pub struct Host {
    shared: Arc<Shared>,
    config: HostConfig,
    sim: Option<Simulator>,
    scheduler: Option<JoinHandle<Simulator>>,
    stopping: Arc<AtomicBool>,
    server: Option<ServerHandle>,
}

impl Host {
    pub fn new(scenario: &Scenario, config: HostConfig) -> Result<Self, HostError> {
        if !(config.rtf.is_finite() && config.rtf >= 0.0) {
            return Err(HostError::Rtf(config.rtf));
        }
        let mut sim = Simulator::from_scenario(scenario)?;
        sim.config().period_steps(1.0 / config.control_period)?;
        let mut hub = Hub::new();
        hub.route_sim_events(sim.initial_events(), 0);
        let shared = Arc::new(Shared {
            hub: Mutex::new(hub),
            gate: TickGate::new(),
            run: config.run.clone(),
            world: scenario.to_json(),
            programs: Mutex::new(Vec::new()),
        });
        Ok(Self { shared, config, sim: Some(sim), scheduler: None, stopping: Arc::default(), server: None })
    }

    /// Direct access to the hub, e.g. for in-process sessions.
    pub fn hub(&self) -> MutexGuard<'_, Hub> {
        self.shared.hub.lock().unwrap()
    }

    /// Records all topic traffic from now on.
    pub fn set_trace(&self, out: Box<dyn Write + Send>) {
        self.hub().set_trace(TraceSink::new(out));
    }

    /// Starts a bound program. Launching before [`Host::start`] makes the
    /// run fully deterministic: the program sees the world from t = 0.
    pub fn launch(&self, program: BlockProgram) -> Result<ProgramRun, BridgeError> {
        self.launch_with(program, None)
    }

    /// Like [`Host::launch`], also passing `print` output to `hook`.
    pub fn launch_with(&self, program: BlockProgram, hook: Option<PrintHook>) -> Result<ProgramRun, BridgeError> {
        let stop = self.hub().claim_program()?;
        let handle = spawn_program(&self.shared, program, stop.clone(), hook);
        Ok(ProgramRun { handle, stop })
    }

    /// Starts stepping the simulation on its own thread.
    pub fn start(&mut self) -> Result<(), HostError> {
        let sim = self.sim.take().ok_or(HostError::Started)?;
        let shared = self.shared.clone();
        let stopping = self.stopping.clone();
        let config = self.config.clone();
        self.scheduler = Some(thread::spawn(move || schedule(sim, &shared, &stopping, &config)));
        Ok(())
    }

    /// Serves the WebSocket endpoint, the static UI and `/world.json`.
    pub fn listen(&mut self, addr: SocketAddr) -> Result<SocketAddr, HostError> {
        let handle = server::spawn(self.shared.clone(), addr)?;
        let local = handle.addr;
        self.server = Some(handle);
        Ok(local)
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.server.as_ref().map(|s| s.addr)
    }

    /// True once the simulation thread has ended (time limit reached).
    pub fn sim_finished(&self) -> bool {
        self.scheduler.as_ref().is_some_and(|h| h.is_finished())
    }

    /// Blocks until the simulation thread ends; only returns on its own
    /// when a time limit is configured.
    pub fn wait(&mut self) {
        if let Some(h) = self.scheduler.take() {
            self.sim = Some(h.join().expect("scheduler panicked"));
        }
    }

    /// Stops everything: programs get their stop flag (and publish a final
    /// zero Twist), the simulation and server halt, the trace is flushed.
    pub fn shutdown(mut self) -> Result<HostReport, HostError> {
        self.hub().stop_program();
        self.stopping.store(true, Ordering::SeqCst);
        self.shared.gate.close();
        self.wait();
        let programs: Vec<_> = self.shared.programs.lock().unwrap().drain(..).collect();
        for p in programs {
            let _ = p.join();
        }
        if let Some(server) = self.server.take() {
            server.stop();
        }
        let trace_lines = match self.hub().take_trace() {
            Some(t) => Some(t.finish()?),
            None => None,
        };
        let sim = self.sim.take().expect("simulator returned by the scheduler");
        Ok(HostReport { sim, trace_lines })
    }
}

fn schedule(mut sim: Simulator, shared: &Shared, stopping: &AtomicBool, config: &HostConfig) -> Simulator {
    let steps_per_tick = sim.config().period_steps(1.0 / config.control_period).expect("checked in Host::new");
    let dt_nanos = sim.config().dt_nanos();
    let max_steps = config.max_sim_seconds.map(|s| (s * 1e9 / dt_nanos as f64).round() as u64);
    let started = Instant::now();
    let first = sim.steps();
    let mut program_seen = false;
    loop {
        let steps = sim.steps();
        if !shared.gate.sync(steps.is_multiple_of(steps_per_tick), steps * dt_nanos) || stopping.load(Ordering::SeqCst)
        {
            break;
        }
        if config.stop_with_program {
            // The program holds the turn while it runs, so this observes
            // its end at a deterministic step.
            let running = shared.hub.lock().unwrap().program_running();
            if program_seen && !running {
                break;
            }
            program_seen |= running;
        }
        if max_steps.is_some_and(|m| steps >= m) {
            break;
        }
        let commands = shared.hub.lock().unwrap().take_commands();
        for c in commands {
            sim.enqueue(c);
        }
        let events = sim.step();
        shared.hub.lock().unwrap().route_sim_events(events, sim.steps() * dt_nanos);
        if config.rtf > 0.0 {
            let due = Duration::from_nanos((sim.steps() - first) * dt_nanos).div_f64(config.rtf);
            if let Some(ahead) = due.checked_sub(started.elapsed()) {
                thread::sleep(ahead);
            }
        }
    }
    // A program still waiting for ticks would wait forever: stop it.
    shared.hub.lock().unwrap().stop_program();
    shared.gate.close();
    sim
}

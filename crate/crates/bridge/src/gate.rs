//! Lockstep hand-off between the simulation scheduler and a bound program.
//!
//! While a program is attached the two threads take turns: the scheduler
//! steps until a control-tick boundary, hands the turn over, and waits
//! until the program yields by calling [`TickGate::wait_tick`] again. Runs
//! are therefore reproducible whatever the wall-clock pacing.

use std::sync::{Condvar, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Closed;

#[derive(Default)]
struct State {
    attached: bool,
    program_turn: bool,
    seq: u64,
    now_nanos: u64,
    /// Time of the latest turn handed to the program (its start counts).
    last_turn: Option<u64>,
    closed: bool,
}

#[derive(Default)]
pub struct TickGate {
    state: Mutex<State>,
    cv: Condvar,
}

impl TickGate {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a program, which owns the turn until it first yields.
    pub fn attach(&self) {
        let mut s = self.state.lock().unwrap();
        s.attached = true;
        s.program_turn = true;
        s.last_turn = Some(s.now_nanos);
    }

    pub fn detach(&self) {
        let mut s = self.state.lock().unwrap();
        s.attached = false;
        s.program_turn = false;
        self.cv.notify_all();
    }

    pub fn is_attached(&self) -> bool {
        self.state.lock().unwrap().attached
    }

    /// Scheduler side, called before every step. At a tick boundary the
    /// turn passes to the program; either way this returns once the program
    /// (if any) has yielded. Returns `false` once the gate is closed.
    pub fn sync(&self, boundary: bool, now_nanos: u64) -> bool {
        let mut s = self.state.lock().unwrap();
        s.now_nanos = now_nanos;
        if s.attached && boundary && !s.program_turn && s.last_turn != Some(now_nanos) {
            s.last_turn = Some(now_nanos);
            s.seq += 1;
            s.program_turn = true;
            self.cv.notify_all();
        }
        while s.attached && s.program_turn && !s.closed {
            s = self.cv.wait(s).unwrap();
        }
        !s.closed
    }

    /// Program side: yields the turn and blocks until the next tick.
    /// Returns the simulated time in nanoseconds.
    pub fn wait_tick(&self) -> Result<u64, Closed> {
        let mut s = self.state.lock().unwrap();
        let seq = s.seq;
        s.program_turn = false;
        self.cv.notify_all();
        while s.seq == seq && !s.closed {
            s = self.cv.wait(s).unwrap();
        }
        if s.closed {
            Err(Closed)
        } else {
            Ok(s.now_nanos)
        }
    }

    pub fn now_nanos(&self) -> u64 {
        self.state.lock().unwrap().now_nanos
    }

    /// Wakes everyone for good; pending and future waits fail.
    pub fn close(&self) {
        let mut s = self.state.lock().unwrap();
        s.closed = true;
        self.cv.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().unwrap().closed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;

    #[test]
    fn turns_alternate() {
        let gate = Arc::new(TickGate::new());
        gate.attach();
        let g = gate.clone();
        let program = thread::spawn(move || {
            let seen: Vec<u64> = (0..3).map(|_| g.wait_tick().unwrap()).collect();
            g.detach();
            seen
        });
        for step in 0..=15u64 {
            assert!(gate.sync(step % 5 == 0, step));
        }
        // Last boundary (15) handed over the third tick.
        let seen = program.join().unwrap();
        assert_eq!(seen, vec![5, 10, 15]);
    }

    #[test]
    fn close_releases_a_waiting_program() {
        let gate = Arc::new(TickGate::new());
        gate.attach();
        let g = gate.clone();
        let program = thread::spawn(move || g.wait_tick());
        assert!(gate.sync(false, 0));
        gate.close();
        assert_eq!(program.join().unwrap(), Err(Closed));
        assert!(!gate.sync(true, 5));
    }

    #[test]
    fn unattached_gate_never_blocks() {
        let gate = TickGate::new();
        for step in 0..100 {
            assert!(gate.sync(step % 5 == 0, step));
        }
    }
}

//! In-process link straight onto a [`Simulator`], without a bridge. Stepping
//! happens inside `wait_tick`, so runs are single-threaded and
//! deterministic. Used by tests and examples.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{Inbound, Key, Link, LinkError};
use crate::msg::{MsgType, RosMessage};
use crate::sim::{Command, SimError, Simulator};
use crate::topics;

/// A message observed by the link, stamped with simulated time.
#[derive(Debug, Clone, PartialEq)]
pub struct Logged {
    pub t: f64,
    pub topic: String,
    pub msg: RosMessage,
}

pub struct DirectLink {
    sim: Simulator,
    steps_per_tick: u64,
    types: BTreeMap<String, MsgType>,
    subscribed: BTreeSet<String>,
    latest: BTreeMap<String, RosMessage>,
    inbox: Vec<(String, RosMessage)>,
    keys: VecDeque<(f64, Key)>,
    pending_keys: Vec<Key>,
    log: Vec<Logged>,
}

impl DirectLink {
    /// Control period of 50 ms.
    pub fn new(sim: Simulator) -> Result<Self, SimError> {
        Self::with_period(sim, 0.05)
    }

    pub fn with_period(mut sim: Simulator, period: f64) -> Result<Self, SimError> {
        let steps_per_tick = sim.config().period_steps(1.0 / period)?;
        let types =
            topics::INBOUND.iter().chain(topics::OUTBOUND.iter()).map(|(topic, ty)| (topic.to_string(), *ty)).collect();
        let latest = sim.initial_events().into_iter().map(|ev| (ev.topic.to_string(), ev.msg)).collect();
        Ok(Self {
            sim,
            steps_per_tick,
            types,
            subscribed: BTreeSet::new(),
            latest,
            inbox: Vec::new(),
            keys: VecDeque::new(),
            pending_keys: Vec::new(),
            log: Vec::new(),
        })
    }

    /// Schedules a key event for the first tick at or after `t`.
    pub fn press_at(&mut self, t: f64, key: Key) {
        self.keys.push_back((t, key));
    }

    pub fn sim(&self) -> &Simulator {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut Simulator {
        &mut self.sim
    }

    /// Every message published by the program plus every message delivered
    /// to it (including the retained value handed over on subscribe), in
    /// order.
    pub fn log(&self) -> &[Logged] {
        &self.log
    }

    /// Messages published on `topic`.
    pub fn published(&self, topic: &str) -> Vec<&RosMessage> {
        self.log.iter().filter(|l| l.topic == topic).map(|l| &l.msg).collect()
    }

    fn check_type(&mut self, topic: &str, ty: MsgType) -> Result<(), LinkError> {
        match self.types.get(topic) {
            Some(t) if *t != ty => Err(LinkError::Rejected(format!("type conflict on {topic}: registered as {t}"))),
            _ => {
                self.types.insert(topic.to_string(), ty);
                Ok(())
            }
        }
    }

    fn deliver(&mut self, topic: &str, msg: RosMessage) {
        if self.subscribed.contains(topic) {
            self.inbox.push((topic.to_string(), msg.clone()));
        }
        self.latest.insert(topic.to_string(), msg);
    }
}

impl Link for DirectLink {
    fn connect(&mut self, _url: &str) -> Result<(), LinkError> {
        Ok(())
    }

    fn advertise(&mut self, topic: &str, ty: MsgType) -> Result<(), LinkError> {
        self.check_type(topic, ty)
    }

    fn publish(&mut self, topic: &str, msg: &RosMessage) -> Result<(), LinkError> {
        self.check_type(topic, msg.msg_type())?;
        self.log.push(Logged { t: self.sim.sim_time(), topic: topic.to_string(), msg: msg.clone() });
        if let Some(cmd) = Command::from_topic(topic, msg) {
            self.sim.enqueue(cmd);
        }
        self.deliver(topic, msg.clone());
        Ok(())
    }

    fn subscribe(&mut self, topic: &str, ty: MsgType) -> Result<(), LinkError> {
        self.check_type(topic, ty)?;
        if self.subscribed.insert(topic.to_string()) {
            if let Some(m) = self.latest.get(topic).cloned() {
                self.log.push(Logged { t: self.sim.sim_time(), topic: topic.to_string(), msg: m.clone() });
                self.inbox.push((topic.to_string(), m));
            }
        }
        Ok(())
    }

    fn poll(&mut self) -> Inbound {
        Inbound { messages: std::mem::take(&mut self.inbox), keys: std::mem::take(&mut self.pending_keys) }
    }

    fn wait_tick(&mut self) -> Result<f64, LinkError> {
        for _ in 0..self.steps_per_tick {
            for ev in self.sim.step() {
                if self.subscribed.contains(ev.topic) {
                    self.log.push(Logged { t: self.sim.sim_time(), topic: ev.topic.to_string(), msg: ev.msg.clone() });
                }
                self.deliver(ev.topic, ev.msg);
            }
        }
        let now = self.sim.sim_time();
        while let Some(&(t, k)) = self.keys.front() {
            if t > now + 1e-9 {
                break;
            }
            self.pending_keys.push(k);
            self.keys.pop_front();
        }
        Ok(now)
    }

    fn now(&self) -> f64 {
        self.sim.sim_time()
    }
}

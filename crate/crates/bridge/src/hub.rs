//! The shared topic registry and per-session state.
//!
//! All mutation goes through one `&mut Hub` (the host wraps it in a mutex).
//! Handling an op never blocks: replies and fan-out land in per-session
//! outboxes which the transport drains at its own pace. Publish frames are
//! bounded per subscription (oldest dropped); status and program events are
//! never dropped.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use blockbot_core::msg::{is_valid_topic_name, MsgType, RosMessage};
use blockbot_core::program::{parse_value, validate_with, BlockProgram, Mode};
use blockbot_core::runtime::{Key, Termination};
use blockbot_core::sim::{Command, SimEvent};
use blockbot_core::topics;
use serde_json::Value;

use crate::protocol::{self, parse_request, BridgeError, Op};
use crate::trace::TraceSink;

pub type SessionId = u64;

/// Called whenever a session's outbox gains a frame.
pub type Waker = Arc<dyn Fn() + Send + Sync>;

pub const DEFAULT_QUEUE_LENGTH: usize = 10;

/// Work the hub cannot do itself.
pub enum Effect {
    /// A validated program the host should start. The hub already counts it
    /// as running; the host must call [`Hub::program_ended`] afterwards.
    Launch { program: BlockProgram, stop: Arc<AtomicBool> },
}

struct Topic {
    ty: MsgType,
    latest: Option<Value>,
    subscribers: BTreeSet<SessionId>,
}

#[derive(Default)]
struct Outbox {
    frames: VecDeque<(Option<String>, Value)>,
    per_topic: BTreeMap<String, usize>,
    dropped: u64,
}

impl Outbox {
    fn push_control(&mut self, frame: Value) {
        self.frames.push_back((None, frame));
    }

    fn push_message(&mut self, topic: &str, frame: Value, bound: usize) {
        let count = self.per_topic.entry(topic.to_string()).or_insert(0);
        if *count >= bound {
            if let Some(i) = self.frames.iter().position(|(t, _)| t.as_deref() == Some(topic)) {
                self.frames.remove(i);
                self.dropped += 1;
                *count -= 1;
            }
        }
        *count += 1;
        self.frames.push_back((Some(topic.to_string()), frame));
    }

    fn drain(&mut self) -> Vec<Value> {
        self.per_topic.clear();
        self.frames.drain(..).map(|(_, f)| f).collect()
    }
}

struct Session {
    advertised: BTreeSet<String>,
    /// Topic → queue length.
    subscriptions: BTreeMap<String, usize>,
    outbox: Outbox,
    waker: Option<Waker>,
}

impl Session {
    fn wake(&self) {
        if let Some(w) = &self.waker {
            w();
        }
    }
}

pub struct Hub {
    topics: BTreeMap<String, Topic>,
    sessions: BTreeMap<SessionId, Session>,
    next_session: SessionId,
    commands: VecDeque<Command>,
    program: Option<Arc<AtomicBool>>,
    program_mode: Mode,
    trace: Option<TraceSink>,
    now_nanos: u64,
}

impl Default for Hub {
    fn default() -> Self {
        Self::new()
    }
}

impl Hub {
    /// A hub with the simulator's topics pre-registered.
    pub fn new() -> Self {
        let topics = topics::INBOUND
            .iter()
            .chain(topics::OUTBOUND.iter())
            .map(|(name, ty)| (name.to_string(), Topic { ty: *ty, latest: None, subscribers: BTreeSet::new() }))
            .collect();
        Self {
            topics,
            sessions: BTreeMap::new(),
            next_session: 1,
            commands: VecDeque::new(),
            program: None,
            program_mode: Mode::Bound,
            trace: None,
            now_nanos: 0,
        }
    }

    /// Starts recording. The trace opens with the retained value of every
    /// topic, so it alone determines what a subscriber could have seen.
    pub fn set_trace(&mut self, mut sink: TraceSink) {
        for (name, topic) in &self.topics {
            if let Some(v) = &topic.latest {
                sink.record(self.now_nanos, name, v);
            }
        }
        self.trace = Some(sink);
    }

    pub fn take_trace(&mut self) -> Option<TraceSink> {
        self.trace.take()
    }

    pub fn open_session(&mut self, waker: Option<Waker>) -> SessionId {
        let id = self.next_session;
        self.next_session += 1;
        self.sessions.insert(
            id,
            Session { advertised: BTreeSet::new(), subscriptions: BTreeMap::new(), outbox: Outbox::default(), waker },
        );
        id
    }

    /// Forgets the session and its subscriptions; returns how many frames
    /// it lost to full queues.
    pub fn close_session(&mut self, id: SessionId) -> u64 {
        let Some(s) = self.sessions.remove(&id) else {
            return 0;
        };
        for topic in s.subscriptions.keys() {
            if let Some(t) = self.topics.get_mut(topic) {
                t.subscribers.remove(&id);
            }
        }
        s.outbox.dropped
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn dropped(&self, id: SessionId) -> u64 {
        self.sessions.get(&id).map_or(0, |s| s.outbox.dropped)
    }

    /// Takes every pending outbound frame of a session.
    pub fn drain(&mut self, id: SessionId) -> Vec<Value> {
        self.sessions.get_mut(&id).map(|s| s.outbox.drain()).unwrap_or_default()
    }

    pub fn latest(&self, topic: &str) -> Option<&Value> {
        self.topics.get(topic).and_then(|t| t.latest.as_ref())
    }

    pub fn topic_type(&self, topic: &str) -> Option<MsgType> {
        self.topics.get(topic).map(|t| t.ty)
    }

    pub fn take_commands(&mut self) -> Vec<Command> {
        self.commands.drain(..).collect()
    }

    pub fn now_nanos(&self) -> u64 {
        self.now_nanos
    }

    pub fn set_time(&mut self, nanos: u64) {
        self.now_nanos = nanos;
    }

    pub fn program_running(&self) -> bool {
        self.program.is_some()
    }

    /// Mode used to validate programs submitted over the wire.
    pub fn set_program_mode(&mut self, mode: Mode) {
        self.program_mode = mode;
    }

    /// Fans simulator output out to subscribers and the trace.
    pub fn route_sim_events(&mut self, events: Vec<SimEvent>, nanos: u64) {
        self.now_nanos = nanos;
        for ev in events {
            match ev.msg.to_json() {
                Ok(v) => self.deliver(ev.topic, v),
                Err(e) => tracing::warn!("dropping unserialisable {}: {e}", ev.topic),
            }
        }
    }

    /// Handles one inbound text frame. Any reply lands in the session's
    /// outbox.
    pub fn handle_op(&mut self, session: SessionId, text: &str) -> Option<Effect> {
        if !self.sessions.contains_key(&session) {
            return None;
        }
        let (id, result) = match parse_request(text) {
            Ok(req) => {
                let r = self.dispatch(session, req.op);
                (req.id, r)
            }
            Err((id, e)) => (id, Err(e)),
        };
        match result {
            Ok(effect) => effect,
            Err(e) => {
                self.reject(session, &e, id.as_ref());
                None
            }
        }
    }

    /// Queues a status error for a session.
    pub fn reject(&mut self, session: SessionId, error: &BridgeError, id: Option<&Value>) {
        if let Some(s) = self.sessions.get_mut(&session) {
            s.outbox.push_control(protocol::status("error", &error.to_string(), id));
            s.wake();
        }
    }

    /// Sends an `x_program_event` to every session.
    pub fn broadcast_program_event(&mut self, kind: &str, data: Value) {
        let frame = protocol::program_event(kind, data);
        for s in self.sessions.values_mut() {
            s.outbox.push_control(frame.clone());
            s.wake();
        }
    }

    /// Clears the running program and announces how it ended.
    pub fn program_ended(&mut self, termination: &Termination) {
        self.program = None;
        let (kind, data) = termination.event();
        self.broadcast_program_event(kind, data);
    }

    /// Marks a program as running without going through the wire, for hosts
    /// that start one themselves. Fails if one is already running.
    pub fn claim_program(&mut self) -> Result<Arc<AtomicBool>, BridgeError> {
        if self.program.is_some() {
            return Err(BridgeError::ProgramRunning);
        }
        let stop = Arc::new(AtomicBool::new(false));
        self.program = Some(stop.clone());
        Ok(stop)
    }

    /// Raises the stop flag of the running program, if any.
    pub fn stop_program(&mut self) -> bool {
        match &self.program {
            Some(stop) => {
                stop.store(true, Ordering::SeqCst);
                true
            }
            None => false,
        }
    }

    fn dispatch(&mut self, session: SessionId, op: Op) -> Result<Option<Effect>, BridgeError> {
        match op {
            Op::Advertise { topic, ty } => {
                check_topic(&topic)?;
                let ty = parse_type(&ty)?;
                self.register(&topic, ty)?;
                self.session(session).advertised.insert(topic);
            }
            Op::Unadvertise { topic } => {
                if !self.session(session).advertised.remove(&topic) {
                    return Err(BridgeError::NotAdvertised(topic));
                }
            }
            Op::Publish { topic, msg } => {
                if !self.session(session).advertised.contains(&topic) {
                    return Err(BridgeError::PublishBeforeAdvertise);
                }
                let ty = self.topics[&topic].ty;
                let parsed = RosMessage::from_json(ty, &msg)
                    .map_err(|e| BridgeError::InvalidMessage { topic: topic.clone(), reason: e.to_string() })?;
                // Re-encode so subscribers see the canonical form.
                let canonical = parsed
                    .to_json()
                    .map_err(|e| BridgeError::InvalidMessage { topic: topic.clone(), reason: e.to_string() })?;
                if let Some(cmd) = Command::from_topic(&topic, &parsed) {
                    self.commands.push_back(cmd);
                }
                self.deliver(&topic, canonical);
            }
            Op::Subscribe { topic, ty, queue_length } => {
                check_topic(&topic)?;
                match ty {
                    Some(ty) => self.register(&topic, parse_type(&ty)?)?,
                    None if self.topics.contains_key(&topic) => {}
                    None => return Err(BridgeError::UntypedTopic(topic)),
                }
                let bound = queue_length.unwrap_or(DEFAULT_QUEUE_LENGTH);
                let entry = self.topics.get_mut(&topic).expect("registered above");
                let fresh = entry.subscribers.insert(session);
                let retained = entry.latest.clone();
                let s = self.session(session);
                s.subscriptions.insert(topic.clone(), bound);
                if fresh {
                    if let Some(v) = retained {
                        s.outbox.push_message(&topic, protocol::publish(&topic, v), bound);
                        s.wake();
                    }
                }
            }
            Op::Unsubscribe { topic } => {
                if self.session(session).subscriptions.remove(&topic).is_none() {
                    return Err(BridgeError::NotSubscribed(topic));
                }
                if let Some(t) = self.topics.get_mut(&topic) {
                    t.subscribers.remove(&session);
                }
            }
            Op::RunProgram { program } => {
                if self.program.is_some() {
                    return Err(BridgeError::ProgramRunning);
                }
                let program = parse_value(&program).map_err(|d| BridgeError::InvalidProgram(d.message))?;
                if let Some(d) = validate_with(&program, self.program_mode).into_iter().next() {
                    return Err(BridgeError::InvalidProgram(d.message));
                }
                let stop = self.claim_program()?;
                return Ok(Some(Effect::Launch { program, stop }));
            }
            Op::StopProgram => {
                if !self.stop_program() {
                    return Err(BridgeError::NoProgram);
                }
            }
            Op::Key { key } => {
                let key = Key::from_name(&key).ok_or(BridgeError::UnknownKey(key))?;
                let frame = protocol::key(key.as_str());
                for (id, s) in self.sessions.iter_mut() {
                    if *id != session {
                        s.outbox.push_control(frame.clone());
                        s.wake();
                    }
                }
            }
        }
        Ok(None)
    }

    fn session(&mut self, id: SessionId) -> &mut Session {
        self.sessions.get_mut(&id).expect("caller checked the session exists")
    }

    /// Registers `topic` as `ty`, or checks it matches the existing type.
    fn register(&mut self, topic: &str, ty: MsgType) -> Result<(), BridgeError> {
        match self.topics.get(topic) {
            Some(t) if t.ty != ty => Err(BridgeError::TypeConflict {
                topic: topic.to_string(),
                registered: t.ty.to_string(),
                requested: ty.to_string(),
            }),
            Some(_) => Ok(()),
            None => {
                self.topics.insert(topic.to_string(), Topic { ty, latest: None, subscribers: BTreeSet::new() });
                Ok(())
            }
        }
    }

    fn deliver(&mut self, topic: &str, msg: Value) {
        if let Some(trace) = &mut self.trace {
            trace.record(self.now_nanos, topic, &msg);
        }
        let Some(t) = self.topics.get_mut(topic) else {
            return;
        };
        for id in &t.subscribers {
            if let Some(s) = self.sessions.get_mut(id) {
                let bound = s.subscriptions.get(topic).copied().unwrap_or(DEFAULT_QUEUE_LENGTH);
                s.outbox.push_message(topic, protocol::publish(topic, msg.clone()), bound);
                s.wake();
            }
        }
        t.latest = Some(msg);
    }
}

fn check_topic(topic: &str) -> Result<(), BridgeError> {
    if is_valid_topic_name(topic) {
        Ok(())
    } else {
        Err(BridgeError::InvalidTopic(topic.to_string()))
    }
}

fn parse_type(ty: &str) -> Result<MsgType, BridgeError> {
    ty.parse().map_err(|_| BridgeError::UnknownType(ty.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use blockbot_core::msg::ClockMsg;
    use serde_json::json;

    fn op(hub: &mut Hub, s: SessionId, v: Value) -> Vec<Value> {
        hub.handle_op(s, &v.to_string());
        hub.drain(s)
    }

    fn clock_event(n: u64) -> SimEvent {
        SimEvent { topic: topics::CLOCK, msg: RosMessage::Clock(ClockMsg::from_nanos(n * 10_000_000)) }
    }

    #[test]
    fn stalled_session_keeps_the_newest_ten() {
        let mut hub = Hub::new();
        let s = hub.open_session(None);
        assert!(op(&mut hub, s, json!({"op": "subscribe", "topic": "/clock"})).is_empty());
        for n in 1..=100 {
            hub.route_sim_events(vec![clock_event(n)], n * 10_000_000);
        }
        let frames = hub.drain(s);
        assert_eq!(frames.len(), 10);
        let nsecs: Vec<u64> = frames.iter().map(|f| f["msg"]["clock"]["nsecs"].as_u64().unwrap()).collect();
        let want: Vec<u64> = (91..=100).map(|n| (n * 10_000_000) % 1_000_000_000).collect();
        assert_eq!(nsecs, want);
        assert_eq!(hub.dropped(s), 90);
        assert_eq!(hub.close_session(s), 90);
    }

    #[test]
    fn bounds_are_per_topic_and_status_is_never_dropped() {
        let mut hub = Hub::new();
        let s = hub.open_session(None);
        op(&mut hub, s, json!({"op": "subscribe", "topic": "/clock", "queue_length": 2}));
        op(&mut hub, s, json!({"op": "subscribe", "topic": "/bumper"}));
        hub.route_sim_events(vec![SimEvent { topic: topics::BUMPER, msg: RosMessage::Bumper(Default::default()) }], 0);
        for n in 1..=5 {
            hub.route_sim_events(vec![clock_event(n)], 0);
            hub.handle_op(s, "nonsense");
        }
        let frames = hub.drain(s);
        let count = |op: &str, topic: Option<&str>| {
            frames.iter().filter(|f| f["op"] == op && topic.is_none_or(|t| f["topic"] == t)).count()
        };
        assert_eq!(count("status", None), 5);
        assert_eq!(count("publish", Some("/clock")), 2);
        assert_eq!(count("publish", Some("/bumper")), 1);
    }

    #[test]
    fn retained_value_on_subscribe() {
        let mut hub = Hub::new();
        hub.route_sim_events(vec![clock_event(3)], 30_000_000);
        let s = hub.open_session(None);
        let frames = op(&mut hub, s, json!({"op": "subscribe", "topic": "/clock"}));
        assert_eq!(
            frames,
            vec![json!({"op": "publish", "topic": "/clock", "msg": {"clock": {"secs": 0, "nsecs": 30000000}}})]
        );
        // Re-subscribing does not replay.
        assert!(op(&mut hub, s, json!({"op": "subscribe", "topic": "/clock"})).is_empty());
    }

    #[test]
    fn topics_are_type_stable() {
        let mut hub = Hub::new();
        let a = hub.open_session(None);
        let b = hub.open_session(None);
        assert!(op(&mut hub, a, json!({"op": "advertise", "topic": "/x", "type": "evarobot_msgs/Led"})).is_empty());
        let r = op(&mut hub, b, json!({"op": "subscribe", "topic": "/x", "type": "rosgraph_msgs/Clock", "id": 4}));
        assert_eq!(r[0]["msg"], "type conflict on /x: registered as evarobot_msgs/Led, got rosgraph_msgs/Clock");
        assert_eq!(r[0]["id"], 4);
        let r = op(&mut hub, b, json!({"op": "advertise", "topic": "/odom", "type": "geometry_msgs/Twist"}));
        assert_eq!(r[0]["level"], "error");
        // Closing the advertiser does not free the type.
        hub.close_session(a);
        let r = op(&mut hub, b, json!({"op": "advertise", "topic": "/x", "type": "rosgraph_msgs/Clock"}));
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn commands_reach_the_queue() {
        let mut hub = Hub::new();
        let s = hub.open_session(None);
        op(&mut hub, s, json!({"op": "advertise", "topic": "/cmd_vel", "type": "geometry_msgs/Twist"}));
        let twist = json!({"linear": {"x": 0.2, "y": 0, "z": 0}, "angular": {"x": 0, "y": 0, "z": 0.5}});
        assert!(op(&mut hub, s, json!({"op": "publish", "topic": "/cmd_vel", "msg": twist})).is_empty());
        let cmds = hub.take_commands();
        assert_eq!(cmds.len(), 1);
        assert!(matches!(cmds[0], Command::CmdVel(t) if t.linear.x == 0.2 && t.angular.z == 0.5));
        let bad = json!({"linear": {"x": "fast"}});
        let r = op(&mut hub, s, json!({"op": "publish", "topic": "/cmd_vel", "msg": bad}));
        assert!(r[0]["msg"].as_str().unwrap().starts_with("invalid message on /cmd_vel"));
        assert!(hub.take_commands().is_empty());
    }

    #[test]
    fn program_lifecycle() {
        let mut hub = Hub::new();
        let s = hub.open_session(None);
        let other = hub.open_session(None);
        let bad = json!({"version": 1, "name": "b", "blocks": [{"type": "fly"}]});
        hub.handle_op(s, &json!({"op": "x_run_program", "program": bad, "id": "r0"}).to_string());
        assert_eq!(hub.drain(s), vec![protocol::status("error", "unknown block type: fly", Some(&json!("r0")))]);

        let ok =
            json!({"version": 1, "name": "w", "blocks": [{"type": "wait", "seconds": {"type": "num", "value": 1}}]});
        let run = json!({"op": "x_run_program", "program": ok});
        let Some(Effect::Launch { stop, .. }) = hub.handle_op(s, &run.to_string()) else { panic!("expected a launch") };
        assert!(hub.handle_op(s, &run.to_string()).is_none());
        assert_eq!(hub.drain(s)[0]["msg"], "program already running");

        hub.handle_op(other, r#"{"op":"x_key","key":"left"}"#);
        assert_eq!(hub.drain(s), vec![json!({"op": "x_key", "key": "left"})]);
        assert!(hub.drain(other).is_empty());
        let r = op(&mut hub, other, json!({"op": "x_key", "key": "jump"}));
        assert_eq!(r[0]["msg"], "unknown key: jump");

        assert!(op(&mut hub, other, json!({"op": "x_stop_program"})).is_empty());
        assert!(stop.load(Ordering::SeqCst));
        hub.program_ended(&Termination::Stopped(blockbot_core::runtime::StopReason::Requested));
        let done = json!({"op": "x_program_event", "kind": "finished", "data": {"reason": "stopped"}});
        assert_eq!(hub.drain(s), vec![done.clone()]);
        assert_eq!(hub.drain(other), vec![done]);
        assert_eq!(op(&mut hub, s, json!({"op": "x_stop_program"}))[0]["msg"], "no program running");
    }
}

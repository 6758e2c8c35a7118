use std::collections::{BTreeMap, VecDeque};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use super::laws::{teleop_key, teleop_twist, wander_twist, Key, WanderParams};
use super::{ErrorKind, Link, LinkError, RunError, RunOptions, StopReason, Termination, Value};
use crate::msg::{
    is_valid_topic_name, BumperMsg, LedColor, LedMsg, MsgType, PidGainsMsg, RosMessage, Scalar, TwistMsg, Vector3,
    WheelGains,
};
use crate::program::{BinOp, BlockProgram, Expr, GainExprs, Mode, NodePath, SensorKey, Stmt};
use crate::sim::normalize_angle;
use crate::topics;

/// Why execution left the statement sequence early.
enum Flow {
    Stop(StopReason),
    Fail(RunError),
}

type Res<T> = Result<T, Flow>;

fn fail(path: &NodePath, kind: ErrorKind, message: impl Into<String>) -> Flow {
    Flow::Fail(RunError { path: path.clone(), kind, message: message.into() })
}

fn link_fail(path: &NodePath, e: LinkError) -> Flow {
    let kind = match e {
        LinkError::Rejected(_) => ErrorKind::Rejected,
        _ => ErrorKind::Connection,
    };
    fail(path, kind, e.to_string())
}

struct Handler<'p> {
    topic: String,
    var: String,
    body: &'p [Stmt],
    path: NodePath,
}

struct Retained {
    msg: RosMessage,
    at: f64,
}

pub(super) struct Machine<'a, 'p, L: Link + ?Sized> {
    link: &'a mut L,
    opts: &'a RunOptions,
    stop: &'a AtomicBool,
    print: &'a mut dyn FnMut(&str),
    connected: bool,
    start: f64,
    now: f64,
    ticks: u64,
    globals: BTreeMap<String, Value>,
    scopes: Vec<(String, Value)>,
    publishers: BTreeMap<String, (String, MsgType)>,
    subscribers: BTreeMap<String, (String, MsgType)>,
    advertised: BTreeMap<String, MsgType>,
    subscribed: BTreeMap<String, MsgType>,
    latest: BTreeMap<String, Retained>,
    handlers: Vec<Handler<'p>>,
    pending: VecDeque<(usize, RosMessage)>,
    in_handler: bool,
    key: Option<Key>,
    motion_sent: bool,
    led_color: LedColor,
}

impl<'a, 'p, L: Link + ?Sized> Machine<'a, 'p, L> {
    pub(super) fn new(
        link: &'a mut L,
        opts: &'a RunOptions,
        stop: &'a AtomicBool,
        print: &'a mut dyn FnMut(&str),
    ) -> Self {
        let now = link.now();
        Self {
            connected: opts.mode == Mode::Bound,
            link,
            opts,
            stop,
            print,
            start: now,
            now,
            ticks: 0,
            globals: BTreeMap::new(),
            scopes: Vec::new(),
            publishers: BTreeMap::new(),
            subscribers: BTreeMap::new(),
            advertised: BTreeMap::new(),
            subscribed: BTreeMap::new(),
            latest: BTreeMap::new(),
            handlers: Vec::new(),
            pending: VecDeque::new(),
            in_handler: false,
            key: None,
            motion_sent: false,
            led_color: LedColor::default(),
        }
    }

    pub(super) fn run(mut self, program: &'p BlockProgram) -> Termination {
        let result = self.block(&program.blocks, &NodePath::root().field("blocks")).and_then(|()| self.idle());
        let term = match result {
            Ok(()) => Termination::Finished,
            Err(Flow::Stop(r)) => Termination::Stopped(r),
            Err(Flow::Fail(e)) => Termination::Error(e),
        };
        if self.motion_sent {
            // best effort: the link may be the reason we are terminating
            let _ = self.link.publish(topics::CMD_VEL, &RosMessage::Twist(TwistMsg::planar(0.0, 0.0)));
        }
        term
    }

    /// After the main sequence: keep serving handlers until stopped.
    fn idle(&mut self) -> Res<()> {
        if self.handlers.is_empty() {
            return Ok(());
        }
        let path = NodePath::root().field("blocks");
        loop {
            self.tick(&path)?;
            self.boundary()?;
        }
    }

    fn check_stop(&self) -> Res<()> {
        if self.stop.load(Ordering::SeqCst) {
            Err(Flow::Stop(StopReason::Requested))
        } else {
            Ok(())
        }
    }

    /// Waits for the next control tick and takes in what arrived.
    fn tick(&mut self, path: &NodePath) -> Res<()> {
        self.check_stop()?;
        let t = match self.link.wait_tick() {
            Ok(t) => t,
            Err(e) => {
                // A host shutting down raises the stop flag before closing.
                self.check_stop()?;
                return Err(link_fail(path, e));
            }
        };
        self.now = t;
        self.ticks += 1;
        self.pump();
        self.check_stop()?;
        if self.now - self.start >= self.opts.max_sim_seconds - 1e-9 {
            return Err(Flow::Stop(StopReason::TimeLimit));
        }
        Ok(())
    }

    fn pump(&mut self) {
        let inbound = self.link.poll();
        for k in inbound.keys {
            self.key = teleop_key(self.key, k);
        }
        for (topic, msg) in inbound.messages {
            for (i, h) in self.handlers.iter().enumerate() {
                if h.topic == topic {
                    self.pending.push_back((i, msg.clone()));
                    let queued = self.pending.iter().filter(|(j, _)| *j == i).count();
                    if queued > self.opts.handler_queue {
                        let oldest = self.pending.iter().position(|(j, _)| *j == i).expect("counted above");
                        self.pending.remove(oldest);
                    }
                }
            }
            self.latest.insert(topic, Retained { msg, at: self.now });
        }
    }

    /// Statement boundary: honour stop, then run queued handlers to
    /// completion (never from inside a handler).
    fn boundary(&mut self) -> Res<()> {
        self.check_stop()?;
        if self.in_handler {
            return Ok(());
        }
        while let Some((i, msg)) = self.pending.pop_front() {
            let h = &self.handlers[i];
            let (body, path) = (h.body, h.path.field("body"));
            self.scopes.push((h.var.clone(), Value::Msg(msg)));
            self.in_handler = true;
            let r = self.block(body, &path);
            self.in_handler = false;
            self.scopes.pop();
            r?;
        }
        Ok(())
    }

    fn block(&mut self, list: &'p [Stmt], path: &NodePath) -> Res<()> {
        for (i, s) in list.iter().enumerate() {
            self.boundary()?;
            self.stmt(s, &path.index(i))?;
        }
        Ok(())
    }

    /// Runs one loop iteration; an iteration that consumed no tick yields
    /// one so that loops cannot starve the simulation.
    fn iteration(&mut self, body: &'p [Stmt], path: &NodePath) -> Res<()> {
        let before = self.ticks;
        self.block(body, &path.field("body"))?;
        if self.ticks == before {
            self.tick(path)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &'p Stmt, path: &NodePath) -> Res<()> {
        match s {
            Stmt::MoveForward { distance_m } | Stmt::MoveBackward { distance_m } => {
                let d = self.non_negative(distance_m, &path.field("distance_m"))?;
                let dir = if matches!(s, Stmt::MoveForward { .. }) { 1.0 } else { -1.0 };
                self.move_linear(d, dir, path)
            }
            Stmt::TurnLeft { angle_deg } | Stmt::TurnRight { angle_deg } => {
                let a = self.non_negative(angle_deg, &path.field("angle_deg"))?;
                let dir = if matches!(s, Stmt::TurnLeft { .. }) { 1.0 } else { -1.0 };
                self.turn_in_place(a, dir, path)
            }
            Stmt::LedOn { color } => {
                let name = self.string(color, &path.field("color"))?;
                let c = LedColor::from_str(&name).map_err(|_| {
                    fail(&path.field("color"), ErrorKind::InvalidArgument, format!("unknown color: {name}"))
                })?;
                self.led_color = c;
                self.send(topics::LED, RosMessage::Led(LedMsg { on: true, color: c }), path)
            }
            Stmt::LedOff => self.send(topics::LED, RosMessage::Led(LedMsg { on: false, color: self.led_color }), path),
            Stmt::Repeat { count, body } => {
                let n = self.non_negative(count, &path.field("count"))?;
                if n.fract() != 0.0 {
                    return Err(fail(
                        &path.field("count"),
                        ErrorKind::InvalidArgument,
                        format!("repeat count {n} is not whole"),
                    ));
                }
                let mut k = 0.0;
                while k < n {
                    self.iteration(body, path)?;
                    k += 1.0;
                }
                Ok(())
            }
            Stmt::While { cond, body } => {
                while self.boolean(cond, &path.field("cond"))? {
                    self.iteration(body, path)?;
                }
                Ok(())
            }
            Stmt::If { cond, then, otherwise } => {
                if self.boolean(cond, &path.field("cond"))? {
                    self.block(then, &path.field("then"))
                } else {
                    self.block(otherwise, &path.field("else"))
                }
            }
            Stmt::Wait { seconds } => {
                let secs = self.non_negative(seconds, &path.field("seconds"))?;
                let end = self.now + secs;
                while self.now < end - 1e-9 {
                    self.tick(path)?;
                    self.boundary()?;
                }
                Ok(())
            }
            Stmt::SetVar { name, value } => {
                let v = self.eval(value, &path.field("value"))?;
                self.globals.insert(name.clone(), v);
                Ok(())
            }
            Stmt::Print { value } => {
                let text = self.eval(value, &path.field("value"))?.to_string();
                (self.print)(&text);
                Ok(())
            }
            Stmt::RosConnect { url } => {
                let url = self.string(url, &path.field("url"))?;
                if self.opts.mode == Mode::Standalone && !self.connected {
                    self.link.connect(&url).map_err(|e| link_fail(path, e))?;
                    // The remote clock, not ours, is the reference from here on.
                    self.now = self.link.now();
                    self.start = self.now;
                }
                self.connected = true;
                Ok(())
            }
            Stmt::CreatePublisher { id, topic, msg_type } => {
                let (topic, ty) = self.topic_spec(topic, msg_type, path)?;
                self.advertise(&topic, ty, path)?;
                self.publishers.insert(id.clone(), (topic, ty));
                Ok(())
            }
            Stmt::CreateSubscriber { id, topic, msg_type } => {
                let (topic, ty) = self.topic_spec(topic, msg_type, path)?;
                self.subscribe(&topic, ty, path)?;
                self.subscribers.insert(id.clone(), (topic, ty));
                Ok(())
            }
            Stmt::Publish { id, value } => {
                let Some((topic, ty)) = self.publishers.get(id).cloned() else {
                    return Err(fail(
                        &path.field("id"),
                        ErrorKind::Undeclared,
                        format!("publisher {id} has not been created"),
                    ));
                };
                let vpath = path.field("value");
                match self.eval(value, &vpath)? {
                    Value::Msg(m) if m.msg_type() == ty => self.send(&topic, m, path),
                    other => Err(fail(
                        &vpath,
                        ErrorKind::TypeError,
                        format!("cannot publish a {} on a {ty} publisher", other.kind()),
                    )),
                }
            }
            Stmt::OnMessage { id, var, body } => {
                let Some((topic, _)) = self.subscribers.get(id).cloned() else {
                    return Err(fail(
                        &path.field("id"),
                        ErrorKind::Undeclared,
                        format!("subscriber {id} has not been created"),
                    ));
                };
                self.handlers.push(Handler { topic, var: var.clone(), body, path: path.clone() });
                Ok(())
            }
            Stmt::Teleop => self.teleop(path),
            Stmt::Wander { threshold_m, forward_speed, turn_speed } => {
                let mut p = self.opts.wander;
                for (e, slot, key) in [
                    (threshold_m, &mut p.threshold_m, "threshold_m"),
                    (forward_speed, &mut p.forward_speed, "forward_speed"),
                    (turn_speed, &mut p.turn_speed, "turn_speed"),
                ] {
                    if let Some(e) = e {
                        let fp = path.field(key);
                        let x = self.number(e, &fp)?;
                        if !(x.is_finite() && x > 0.0) {
                            return Err(fail(&fp, ErrorKind::InvalidArgument, format!("{key} must be > 0, got {x}")));
                        }
                        *slot = x;
                    }
                }
                self.wander(&p, path)
            }
            Stmt::SetPid { left, right } => {
                let l = self.gains(left, &path.field("left"))?;
                let r = self.gains(right, &path.field("right"))?;
                self.send(topics::SET_PID, RosMessage::PidGains(PidGainsMsg { left: l, right: r }), path)
            }
        }
    }

    fn gains(&mut self, g: &GainExprs, path: &NodePath) -> Res<WheelGains> {
        Ok(WheelGains {
            kp: self.non_negative(&g.kp, &path.field("kp"))?,
            ki: self.non_negative(&g.ki, &path.field("ki"))?,
            kd: self.non_negative(&g.kd, &path.field("kd"))?,
        })
    }

    fn topic_spec(&mut self, topic: &Expr, msg_type: &Expr, path: &NodePath) -> Res<(String, MsgType)> {
        let tp = path.field("topic");
        let topic = self.string(topic, &tp)?;
        if !is_valid_topic_name(&topic) {
            return Err(fail(&tp, ErrorKind::InvalidArgument, format!("invalid topic name: {topic}")));
        }
        let mp = path.field("msg_type");
        let name = self.string(msg_type, &mp)?;
        let ty = MsgType::from_str(&name)
            .map_err(|_| fail(&mp, ErrorKind::InvalidArgument, format!("unsupported message type: {name}")))?;
        Ok((topic, ty))
    }

    // ---- link helpers ----

    fn ensure_connected(&self, path: &NodePath) -> Res<()> {
        if self.connected {
            Ok(())
        } else {
            Err(link_fail(path, LinkError::NotConnected))
        }
    }

    fn advertise(&mut self, topic: &str, ty: MsgType, path: &NodePath) -> Res<()> {
        self.ensure_connected(path)?;
        match self.advertised.get(topic) {
            Some(t) if *t == ty => Ok(()),
            Some(t) => Err(fail(path, ErrorKind::Rejected, format!("type conflict on {topic}: advertised as {t}"))),
            None => {
                self.link.advertise(topic, ty).map_err(|e| link_fail(path, e))?;
                self.advertised.insert(topic.to_string(), ty);
                Ok(())
            }
        }
    }

    fn subscribe(&mut self, topic: &str, ty: MsgType, path: &NodePath) -> Res<()> {
        self.ensure_connected(path)?;
        match self.subscribed.get(topic) {
            Some(t) if *t == ty => Ok(()),
            Some(t) => Err(fail(path, ErrorKind::Rejected, format!("type conflict on {topic}: subscribed as {t}"))),
            None => {
                self.link.subscribe(topic, ty).map_err(|e| link_fail(path, e))?;
                self.subscribed.insert(topic.to_string(), ty);
                // the retained latest value arrives right away
                self.pump();
                Ok(())
            }
        }
    }

    fn send(&mut self, topic: &str, msg: RosMessage, path: &NodePath) -> Res<()> {
        self.advertise(topic, msg.msg_type(), path)?;
        self.link.publish(topic, &msg).map_err(|e| link_fail(path, e))?;
        if topic == topics::CMD_VEL {
            self.motion_sent = true;
        }
        Ok(())
    }

    fn twist(&mut self, v: f64, w: f64, path: &NodePath) -> Res<()> {
        self.send(topics::CMD_VEL, RosMessage::Twist(TwistMsg::planar(v, w)), path)
    }

    /// Latest message on `topic`, waiting up to the sensor timeout for the
    /// first one.
    fn await_topic(&mut self, topic: &str, ty: MsgType, path: &NodePath) -> Res<RosMessage> {
        self.subscribe(topic, ty, path)?;
        let deadline = self.now + self.opts.sensor_timeout;
        loop {
            if let Some(r) = self.latest.get(topic) {
                return Ok(r.msg.clone());
            }
            if self.now >= deadline - 1e-9 {
                return Err(fail(
                    path,
                    ErrorKind::SensorTimeout,
                    format!("no message on {topic} within {} s", self.opts.sensor_timeout),
                ));
            }
            self.tick(path)?;
        }
    }

    /// Latest odometry as `(x, y, theta, v, omega)`; fails if it has gone
    /// stale for longer than the sensor timeout.
    fn odom(&mut self, path: &NodePath) -> Res<(f64, f64, f64, f64, f64)> {
        let msg = self.await_topic(topics::ODOM, MsgType::Odometry, path)?;
        let at = self.latest.get(topics::ODOM).map_or(self.now, |r| r.at);
        if self.now - at > self.opts.sensor_timeout + 1e-9 {
            return Err(fail(path, ErrorKind::SensorTimeout, "odometry stopped arriving"));
        }
        let RosMessage::Odometry(o) = msg else {
            return Err(fail(path, ErrorKind::TypeError, "odometry topic carries another type"));
        };
        let p = o.pose.position;
        Ok((p.x, p.y, o.theta(), o.twist.linear.x, o.twist.angular.z))
    }

    // ---- manoeuvres ----

    fn move_linear(&mut self, distance: f64, dir: f64, path: &NodePath) -> Res<()> {
        let m = self.opts.motion;
        if distance <= 0.0 {
            return self.twist(0.0, 0.0, path);
        }
        let (sx, sy, ..) = self.odom(path)?;
        loop {
            let (x, y, ..) = self.odom(path)?;
            let remaining = distance - (x - sx).hypot(y - sy);
            if remaining <= m.distance_tolerance {
                break;
            }
            let v = (m.linear_gain * remaining).clamp(m.min_linear_speed, m.linear_speed);
            self.twist(dir * v, 0.0, path)?;
            self.tick(path)?;
        }
        self.twist(0.0, 0.0, path)?;
        self.settle(path)
    }

    fn turn_in_place(&mut self, angle_deg: f64, dir: f64, path: &NodePath) -> Res<()> {
        let m = self.opts.motion;
        if angle_deg <= 0.0 {
            return self.twist(0.0, 0.0, path);
        }
        let target = angle_deg.to_radians();
        let tol = m.angle_tolerance_deg.to_radians();
        let (.., mut prev, _, _) = self.odom(path)?;
        let mut turned = 0.0;
        loop {
            let remaining = target - turned;
            if remaining <= tol {
                break;
            }
            let w = (m.angular_gain * remaining).clamp(m.min_angular_speed, m.angular_speed);
            self.twist(0.0, dir * w, path)?;
            self.tick(path)?;
            let (.., theta, _, _) = self.odom(path)?;
            turned += dir * normalize_angle(theta - prev);
            prev = theta;
        }
        self.twist(0.0, 0.0, path)?;
        self.settle(path)
    }

    /// Waits (at most one sensor timeout) for the measured speed to drop
    /// below the rest threshold.
    fn settle(&mut self, path: &NodePath) -> Res<()> {
        let rest = self.opts.motion.rest_speed;
        let deadline = self.now + self.opts.sensor_timeout;
        loop {
            let (.., v, w) = self.odom(path)?;
            if (v.abs() < rest && w.abs() < rest) || self.now >= deadline {
                return Ok(());
            }
            self.tick(path)?;
        }
    }

    fn sensor_topic(key: SensorKey) -> (&'static str, MsgType) {
        match key {
            SensorKey::SonarLeft => (topics::SONAR_LEFT, MsgType::Range),
            SensorKey::SonarRight => (topics::SONAR_RIGHT, MsgType::Range),
            SensorKey::IrLeft => (topics::IR_LEFT, MsgType::Range),
            SensorKey::IrRight => (topics::IR_RIGHT, MsgType::Range),
            SensorKey::BumperLeft | SensorKey::BumperRight => (topics::BUMPER, MsgType::Bumper),
        }
    }

    fn read_sensor(&mut self, key: SensorKey, path: &NodePath) -> Res<Value> {
        self.ensure_connected(path)?;
        let (topic, ty) = Self::sensor_topic(key);
        match (key, self.await_topic(topic, ty, path)?) {
            (SensorKey::BumperLeft, RosMessage::Bumper(b)) => Ok(Value::Bool(b.left)),
            (SensorKey::BumperRight, RosMessage::Bumper(b)) => Ok(Value::Bool(b.right)),
            (_, RosMessage::Range(r)) => Ok(Value::Num(r.range)),
            (_, other) => Err(fail(path, ErrorKind::TypeError, format!("{topic} carries {}", other.msg_type()))),
        }
    }

    fn range(&mut self, key: SensorKey, path: &NodePath) -> Res<f64> {
        match self.read_sensor(key, path)? {
            Value::Num(x) => Ok(x),
            other => Err(fail(path, ErrorKind::TypeError, format!("expected a range, got {}", other.kind()))),
        }
    }

    // ---- behaviours ----

    fn teleop(&mut self, path: &NodePath) -> Res<()> {
        self.ensure_connected(path)?;
        loop {
            let (v, w) = teleop_twist(self.key, &self.opts.teleop);
            self.twist(v, w, path)?;
            self.tick(path)?;
            self.boundary()?;
        }
    }

    fn wander(&mut self, p: &WanderParams, path: &NodePath) -> Res<()> {
        self.ensure_connected(path)?;
        // start of the current reverse manoeuvre, if any
        let mut recovery: Option<f64> = None;
        loop {
            let mut left = self.range(SensorKey::SonarLeft, path)?;
            let mut right = self.range(SensorKey::SonarRight, path)?;
            if self.opts.wander_use_ir {
                left = left.min(self.range(SensorKey::IrLeft, path)?);
                right = right.min(self.range(SensorKey::IrRight, path)?);
            }
            let RosMessage::Bumper(bumper) = self.await_topic(topics::BUMPER, MsgType::Bumper, path)? else {
                return Err(fail(path, ErrorKind::TypeError, "bumper topic carries another type"));
            };
            let bumper_at = self.latest.get(topics::BUMPER).map_or(self.now, |r| r.at);
            let BumperMsg { left: bl, right: br } = bumper;
            // a contact reported after the last recovery began starts a new one
            if (bl || br) && recovery.is_none_or(|t| bumper_at > t) {
                recovery = Some(self.now);
            }
            let reversing = recovery.is_some_and(|t| self.now < t + p.reverse_seconds - 1e-9);
            let (v, w) = if reversing { (-p.forward_speed, 0.0) } else { wander_twist(left, right, p) };
            self.twist(v, w, path)?;
            self.tick(path)?;
            self.boundary()?;
        }
    }

    // ---- expressions ----

    fn number(&mut self, e: &Expr, path: &NodePath) -> Res<f64> {
        match self.eval(e, path)? {
            Value::Num(x) => Ok(x),
            other => Err(fail(path, ErrorKind::TypeError, format!("expected number, got {}", other.kind()))),
        }
    }

    fn non_negative(&mut self, e: &Expr, path: &NodePath) -> Res<f64> {
        let x = self.number(e, path)?;
        if x.is_finite() && x >= 0.0 {
            Ok(x)
        } else {
            Err(fail(path, ErrorKind::InvalidArgument, format!("expected a finite number >= 0, got {x}")))
        }
    }

    fn boolean(&mut self, e: &Expr, path: &NodePath) -> Res<bool> {
        match self.eval(e, path)? {
            Value::Bool(b) => Ok(b),
            other => Err(fail(path, ErrorKind::TypeError, format!("expected boolean, got {}", other.kind()))),
        }
    }

    fn string(&mut self, e: &Expr, path: &NodePath) -> Res<String> {
        match self.eval(e, path)? {
            Value::Str(s) => Ok(s),
            other => Err(fail(path, ErrorKind::TypeError, format!("expected string, got {}", other.kind()))),
        }
    }

    fn lookup(&self, name: &str) -> Option<&Value> {
        self.scopes.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v).or_else(|| self.globals.get(name))
    }

    fn eval(&mut self, e: &Expr, path: &NodePath) -> Res<Value> {
        Ok(match e {
            Expr::Num(x) => Value::Num(*x),
            Expr::Str(s) => Value::Str(s.clone()),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Var(name) => match self.lookup(name) {
                Some(v) => v.clone(),
                None => return Err(fail(path, ErrorKind::Undeclared, format!("variable {name} has not been set"))),
            },
            Expr::GetSensor(k) => self.read_sensor(*k, path)?,
            Expr::FieldGet { var, selector } => {
                let msg = match self.lookup(var) {
                    Some(Value::Msg(m)) => m.clone(),
                    Some(other) => {
                        return Err(fail(
                            path,
                            ErrorKind::TypeError,
                            format!("{var} holds a {}, not a message", other.kind()),
                        ))
                    }
                    None => match self.subscribers.get(var).cloned() {
                        Some((topic, ty)) => self.await_topic(&topic, ty, path)?,
                        None => {
                            return Err(fail(
                                path,
                                ErrorKind::Undeclared,
                                format!("no message variable or subscriber named {var}"),
                            ))
                        }
                    },
                };
                match msg.extract_field(selector) {
                    Ok(Scalar::Num(x)) => Value::Num(x),
                    Ok(Scalar::Bool(b)) => Value::Bool(b),
                    Ok(Scalar::Text(s)) => Value::Str(s),
                    Err(e) => return Err(fail(path, ErrorKind::UnknownSelector, e.to_string())),
                }
            }
            Expr::MakeTwist { lx, ly, lz, ax, ay, az } => {
                let mut c = [0.0; 6];
                for (slot, (key, e)) in
                    c.iter_mut().zip([("lx", lx), ("ly", ly), ("lz", lz), ("ax", ax), ("ay", ay), ("az", az)])
                {
                    let p = path.field(key);
                    let x = self.number(e, &p)?;
                    if !x.is_finite() {
                        return Err(fail(&p, ErrorKind::InvalidArgument, format!("twist component {key} is {x}")));
                    }
                    *slot = x;
                }
                Value::Msg(RosMessage::Twist(TwistMsg {
                    linear: Vector3::new(c[0], c[1], c[2]),
                    angular: Vector3::new(c[3], c[4], c[5]),
                }))
            }
            Expr::Binop { op, lhs, rhs } => return self.binop(*op, lhs, rhs, path),
        })
    }

    fn binop(&mut self, op: BinOp, lhs: &Expr, rhs: &Expr, path: &NodePath) -> Res<Value> {
        let (lp, rp) = (path.field("lhs"), path.field("rhs"));
        if op.is_logical() {
            let a = self.boolean(lhs, &lp)?;
            // short-circuit
            return Ok(Value::Bool(match op {
                BinOp::And => a && self.boolean(rhs, &rp)?,
                _ => a || self.boolean(rhs, &rp)?,
            }));
        }
        if op == BinOp::Eq || op == BinOp::Ne {
            let a = self.eval(lhs, &lp)?;
            let b = self.eval(rhs, &rp)?;
            return Ok(Value::Bool((a == b) == (op == BinOp::Eq)));
        }
        let a = self.number(lhs, &lp)?;
        let b = self.number(rhs, &rp)?;
        Ok(match op {
            BinOp::Add => Value::Num(a + b),
            BinOp::Sub => Value::Num(a - b),
            BinOp::Mul => Value::Num(a * b),
            BinOp::Div => {
                if b == 0.0 {
                    return Err(fail(path, ErrorKind::DivisionByZero, "division by zero"));
                }
                Value::Num(a / b)
            }
            BinOp::Lt => Value::Bool(a < b),
            BinOp::Le => Value::Bool(a <= b),
            BinOp::Gt => Value::Bool(a > b),
            BinOp::Ge => Value::Bool(a >= b),
            BinOp::Eq | BinOp::Ne | BinOp::And | BinOp::Or => unreachable!("handled above"),
        })
    }
}

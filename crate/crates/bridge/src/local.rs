//! A program's session inside the host. It speaks the same JSON frames as
//! a remote client, through the same [`Hub::handle_op`](crate::hub::Hub)
//! path, but ticks in lockstep with the scheduler.

use std::collections::BTreeMap;
use std::sync::Arc;

use blockbot_core::msg::{MsgType, RosMessage};
use blockbot_core::runtime::{Inbound, Key, Link, LinkError};
use serde_json::{json, Value};

use crate::hub::SessionId;
use crate::Shared;

pub struct LocalLink {
    shared: Arc<Shared>,
    session: SessionId,
    types: BTreeMap<String, MsgType>,
    inbox: Inbound,
    now: f64,
}

impl LocalLink {
    pub(crate) fn new(shared: Arc<Shared>, session: SessionId) -> Self {
        let now = shared.gate.now_nanos() as f64 / 1e9;
        Self { shared, session, types: BTreeMap::new(), inbox: Inbound::default(), now }
    }

    /// Sends one frame and collects whatever came back; a status error
    /// becomes `Rejected`.
    fn send(&mut self, frame: Value) -> Result<(), LinkError> {
        let frames = {
            let mut hub = self.shared.hub.lock().unwrap();
            hub.handle_op(self.session, &frame.to_string());
            hub.drain(self.session)
        };
        let mut error = None;
        for f in frames {
            if let Some(msg) = self.absorb(f) {
                error.get_or_insert(msg);
            }
        }
        error.map_or(Ok(()), |m| Err(LinkError::Rejected(m)))
    }

    fn collect(&mut self) {
        let frames = self.shared.hub.lock().unwrap().drain(self.session);
        for f in frames {
            if let Some(msg) = self.absorb(f) {
                tracing::warn!("program session: {msg}");
            }
        }
    }

    /// Files one outbound frame; returns the text of a status error.
    fn absorb(&mut self, frame: Value) -> Option<String> {
        match frame["op"].as_str() {
            Some("publish") => {
                let topic = frame["topic"].as_str().unwrap_or_default();
                let ty = self.types.get(topic)?;
                match RosMessage::from_json(*ty, &frame["msg"]) {
                    Ok(m) => self.inbox.messages.push((topic.to_string(), m)),
                    Err(e) => tracing::warn!("undecodable {topic}: {e}"),
                }
                None
            }
            Some("x_key") => {
                if let Some(k) = frame["key"].as_str().and_then(Key::from_name) {
                    self.inbox.keys.push(k);
                }
                None
            }
            Some("status") if frame["level"] == "error" => Some(frame["msg"].as_str().unwrap_or("error").to_string()),
            _ => None,
        }
    }
}

impl Link for LocalLink {
    fn connect(&mut self, _url: &str) -> Result<(), LinkError> {
        Ok(())
    }

    fn advertise(&mut self, topic: &str, ty: MsgType) -> Result<(), LinkError> {
        self.send(json!({"op": "advertise", "topic": topic, "type": ty.name()}))
    }

    fn publish(&mut self, topic: &str, msg: &RosMessage) -> Result<(), LinkError> {
        let body = msg.to_json().map_err(|e| LinkError::Rejected(e.to_string()))?;
        self.send(json!({"op": "publish", "topic": topic, "msg": body}))
    }

    fn subscribe(&mut self, topic: &str, ty: MsgType) -> Result<(), LinkError> {
        self.types.insert(topic.to_string(), ty);
        let r = self.send(json!({"op": "subscribe", "topic": topic, "type": ty.name()}));
        if r.is_err() {
            self.types.remove(topic);
        }
        r
    }

    fn poll(&mut self) -> Inbound {
        self.collect();
        std::mem::take(&mut self.inbox)
    }

    fn wait_tick(&mut self) -> Result<f64, LinkError> {
        let nanos = self.shared.gate.wait_tick().map_err(|_| LinkError::Closed("simulation stopped".into()))?;
        self.now = nanos as f64 / 1e9;
        Ok(self.now)
    }

    fn now(&self) -> f64 {
        self.now
    }
}

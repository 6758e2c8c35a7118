//! Pure control laws of the behaviour blocks.

use serde::{Deserialize, Serialize};

/// Arrow keys and space, as sent in `x_key` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Key {
    Up,
    Down,
    Left,
    Right,
    Space,
}

impl Key {
    pub const ALL: [Key; 5] = [Key::Up, Key::Down, Key::Left, Key::Right, Key::Space];

    pub fn as_str(&self) -> &'static str {
        match self {
            Key::Up => "up",
            Key::Down => "down",
            Key::Left => "left",
            Key::Right => "right",
            Key::Space => "space",
        }
    }

    pub fn from_name(s: &str) -> Option<Key> {
        Key::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeleopParams {
    pub forward_speed: f64,
    pub turn_speed: f64,
}

impl Default for TeleopParams {
    fn default() -> Self {
        Self { forward_speed: 0.3, turn_speed: 1.0 }
    }
}

/// Active key after a key event: arrows replace, space clears.
pub fn teleop_key(_current: Option<Key>, event: Key) -> Option<Key> {
    match event {
        Key::Space => None,
        k => Some(k),
    }
}

/// `(linear.x, angular.z)` for the active key.
pub fn teleop_twist(active: Option<Key>, p: &TeleopParams) -> (f64, f64) {
    match active {
        Some(Key::Up) => (p.forward_speed, 0.0),
        Some(Key::Down) => (-p.forward_speed, 0.0),
        Some(Key::Left) => (0.0, p.turn_speed),
        Some(Key::Right) => (0.0, -p.turn_speed),
        Some(Key::Space) | None => (0.0, 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WanderParams {
    pub threshold_m: f64,
    pub forward_speed: f64,
    pub turn_speed: f64,
    /// Reverse duration after a bumper contact.
    pub reverse_seconds: f64,
}

impl Default for WanderParams {
    fn default() -> Self {
        Self { threshold_m: 0.5, forward_speed: 0.2, turn_speed: 0.78, reverse_seconds: 1.0 }
    }
}

/// Threshold law: straight on when both sides are clear, otherwise turn in
/// place toward the more open side (ties go left).
pub fn wander_twist(left: f64, right: f64, p: &WanderParams) -> (f64, f64) {
    if left.min(right) >= p.threshold_m {
        (p.forward_speed, 0.0)
    } else if left >= right {
        (0.0, p.turn_speed)
    } else {
        (0.0, -p.turn_speed)
    }
}

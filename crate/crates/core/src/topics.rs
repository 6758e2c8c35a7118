//! Topic names served by the simulator.

use crate::msg::MsgType;

pub const CMD_VEL: &str = "/cmd_vel";
pub const LED: &str = "/led";
pub const SET_PID: &str = "/set_pid";
pub const SONAR_LEFT: &str = "/sonar/left";
pub const SONAR_RIGHT: &str = "/sonar/right";
pub const IR_LEFT: &str = "/ir/left";
pub const IR_RIGHT: &str = "/ir/right";
pub const BUMPER: &str = "/bumper";
pub const ODOM: &str = "/odom";
pub const CLOCK: &str = "/clock";

/// Inbound command topics (client → simulator).
pub const INBOUND: [(&str, MsgType); 3] =
    [(CMD_VEL, MsgType::Twist), (LED, MsgType::Led), (SET_PID, MsgType::PidGains)];

/// Outbound sensor topics (simulator → clients).
pub const OUTBOUND: [(&str, MsgType); 7] = [
    (SONAR_LEFT, MsgType::Range),
    (SONAR_RIGHT, MsgType::Range),
    (IR_LEFT, MsgType::Range),
    (IR_RIGHT, MsgType::Range),
    (BUMPER, MsgType::Bumper),
    (ODOM, MsgType::Odometry),
    (CLOCK, MsgType::Clock),
];

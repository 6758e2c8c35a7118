//! Deterministic fixed-timestep simulation of a differential-drive robot
//! with sonar, infrared, bumpers, odometry, an RGB LED and per-wheel PID
//! velocity control.
//!
//! One [`Simulator::step`] does, in order:
//! 1. drain queued commands (`/cmd_vel`, `/led`, `/set_pid`);
//! 2. PID + first-order lag update of each wheel;
//! 3. forward kinematics and exact-arc pose integration;
//! 4. footprint collision test (stop-and-flag: revert pose, zero wheels,
//!    set bumper);
//! 5. emit sensor, odometry and clock messages on their schedules.

pub mod geometry;
pub mod kinematics;
pub mod pid;
pub mod world;

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::msg::{
    BumperMsg, ClockMsg, LedMsg, OdometryMsg, PidGainsMsg, RadiationType, RangeMsg, RosMessage, TwistMsg, WheelGains,
};
use crate::topics;
use geometry::{contacts, raycast_range, Point};

pub use kinematics::{forward_kinematics, integrate_pose, inverse_kinematics, normalize_angle, Pose2D};
pub use pid::{pid_step, wheel_update, PidState};
pub use world::{Bounds, NoiseConfig, Obstacle, Scenario, WorldModel};

pub type PidGains = PidGainsMsg;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("world: {0}")]
    World(String),
    #[error("robot parameters: {0}")]
    Params(String),
    #[error("config: {0}")]
    Config(String),
    #[error("rejected command: {0}")]
    Command(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotParams {
    pub wheel_separation: f64,
    pub wheel_radius: f64,
    pub footprint_radius: f64,
    pub max_wheel_speed: f64,
    /// τ of each wheel's first-order velocity response, seconds.
    pub wheel_time_constant: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            wheel_separation: 0.34,
            wheel_radius: 0.09,
            footprint_radius: 0.20,
            max_wheel_speed: 1.0,
            wheel_time_constant: 0.1,
        }
    }
}

impl RobotParams {
    pub fn check(&self) -> Result<(), SimError> {
        let all = [
            ("wheel_separation", self.wheel_separation),
            ("wheel_radius", self.wheel_radius),
            ("footprint_radius", self.footprint_radius),
            ("max_wheel_speed", self.max_wheel_speed),
            ("wheel_time_constant", self.wheel_time_constant),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(SimError::Params(format!("{name} must be finite and positive")));
        }
        if self.footprint_radius <= self.wheel_separation / 2.0 {
            return Err(SimError::Params("footprint_radius must exceed wheel_separation / 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorId {
    SonarLeft,
    SonarRight,
    IrLeft,
    IrRight,
}

impl SensorId {
    pub const ALL: [SensorId; 4] = [SensorId::SonarLeft, SensorId::SonarRight, SensorId::IrLeft, SensorId::IrRight];

    pub fn topic(&self) -> &'static str {
        match self {
            SensorId::SonarLeft => topics::SONAR_LEFT,
            SensorId::SonarRight => topics::SONAR_RIGHT,
            SensorId::IrLeft => topics::IR_LEFT,
            SensorId::IrRight => topics::IR_RIGHT,
        }
    }

    pub fn radiation(&self) -> RadiationType {
        match self {
            SensorId::SonarLeft | SensorId::SonarRight => RadiationType::Ultrasound,
            SensorId::IrLeft | SensorId::IrRight => RadiationType::Infrared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSensor {
    pub id: SensorId,
    /// Body-frame mount: position plus boresight bearing.
    pub mount: Pose2D,
    pub field_of_view: f64,
    pub min_range: f64,
    pub max_range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorRig {
    pub sensors: Vec<RangeSensor>,
    pub rays: usize,
}

impl Default for SensorRig {
    fn default() -> Self {
        let sonar = |id, y: f64, bearing: f64| RangeSensor {
            id,
            mount: Pose2D { x: 0.15, y, theta: bearing },
            field_of_view: 0.5,
            min_range: 0.02,
            max_range: 4.0,
        };
        let ir = |id, y: f64, bearing: f64| RangeSensor {
            id,
            mount: Pose2D { x: 0.18, y, theta: bearing },
            field_of_view: 0.1,
            min_range: 0.02,
            max_range: 0.8,
        };
        Self {
            sensors: vec![
                sonar(SensorId::SonarLeft, 0.10, 0.35),
                sonar(SensorId::SonarRight, -0.10, -0.35),
                ir(SensorId::IrLeft, 0.05, 0.15),
                ir(SensorId::IrRight, -0.05, -0.15),
            ],
            rays: 9,
        }
    }
}

impl SensorRig {
    pub fn get(&self, id: SensorId) -> Option<&RangeSensor> {
        self.sensors.iter().find(|s| s.id == id)
    }
}

/// Which bumper a contact at body-frame `bearing` presses. Left covers
/// (0, π/2], right [-π/2, 0); dead ahead presses both, the rear neither.
pub fn bumper_sides(bearing: f64) -> (bool, bool) {
    let b = normalize_angle(bearing);
    if b == 0.0 {
        (true, true)
    } else {
        (b > 0.0 && b <= FRAC_PI_2, (-FRAC_PI_2..0.0).contains(&b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Fixed timestep, seconds.
    pub dt: f64,
    pub sensor_rate_hz: f64,
    pub odom_rate_hz: f64,
    pub clock_rate_hz: f64,
    pub integral_limit: f64,
    pub gains: PidGains,
    pub noise: NoiseConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        let wheel = WheelGains::new(2.0, 0.5, 0.0);
        Self {
            dt: 0.01,
            sensor_rate_hz: 10.0,
            odom_rate_hz: 20.0,
            clock_rate_hz: 100.0,
            integral_limit: 1.0,
            gains: PidGains { left: wheel, right: wheel },
            noise: NoiseConfig::default(),
        }
    }
}

impl SimConfig {
    /// Steps between publications at `rate_hz`; the rate must divide the
    /// step frequency.
    pub fn period_steps(&self, rate_hz: f64) -> Result<u64, SimError> {
        let steps = 1.0 / (rate_hz * self.dt);
        let rounded = steps.round();
        if !(rate_hz > 0.0) || !steps.is_finite() || rounded < 1.0 || (steps - rounded).abs() > 1e-9 {
            return Err(SimError::Config(format!(
                "rate {rate_hz} Hz is not a whole fraction of the {} s step",
                self.dt
            )));
        }
        Ok(rounded as u64)
    }

    /// Nanoseconds per step.
    pub fn dt_nanos(&self) -> u64 {
        (self.dt * 1e9).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wheels {
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub true_pose: Pose2D,
    pub odom_pose: Pose2D,
    pub wheel_velocity: Wheels,
    pub wheel_setpoint: Wheels,
    pub pid_left: PidState,
    pub pid_right: PidState,
    pub led: LedMsg,
    /// Contact sides detected by the latest step.
    pub bumper: BumperMsg,
    pub sim_time: f64,
}

impl RobotState {
    pub fn at_rest(pose: Pose2D) -> Self {
        Self {
            true_pose: pose,
            odom_pose: pose,
            wheel_velocity: Wheels::default(),
            wheel_setpoint: Wheels::default(),
            pid_left: PidState::default(),
            pid_right: PidState::default(),
            led: LedMsg::default(),
            bumper: BumperMsg::default(),
            sim_time: 0.0,
        }
    }

    /// Sets wheel setpoints from a planar twist (`linear.x`, `angular.z`),
    /// each clamped to the wheel speed limit. Non-finite input leaves the
    /// state untouched.
    pub fn apply_cmd_vel(&mut self, params: &RobotParams, cmd: &TwistMsg) -> Result<(), SimError> {
        let all = [cmd.linear.x, cmd.linear.y, cmd.linear.z, cmd.angular.x, cmd.angular.y, cmd.angular.z];
        if all.iter().any(|c| !c.is_finite()) {
            return Err(SimError::Command("non-finite cmd_vel".into()));
        }
        let (l, r) = inverse_kinematics(cmd.linear.x, cmd.angular.z, params.wheel_separation);
        let lim = params.max_wheel_speed;
        self.wheel_setpoint = Wheels { left: l.clamp(-lim, lim), right: r.clamp(-lim, lim) };
        Ok(())
    }

    /// Body twist from the current wheel speeds.
    pub fn body_twist(&self, params: &RobotParams) -> (f64, f64) {
        forward_kinematics(self.wheel_velocity.left, self.wheel_velocity.right, params.wheel_separation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    CmdVel(TwistMsg),
    Led(LedMsg),
    SetPid(PidGains),
}

impl Command {
    /// The command carried by a message on one of the inbound topics.
    pub fn from_topic(topic: &str, msg: &RosMessage) -> Option<Command> {
        match (topic, msg) {
            (crate::topics::CMD_VEL, RosMessage::Twist(t)) => Some(Command::CmdVel(*t)),
            (crate::topics::LED, RosMessage::Led(l)) => Some(Command::Led(*l)),
            (crate::topics::SET_PID, RosMessage::PidGains(g)) => Some(Command::SetPid(*g)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub topic: &'static str,
    pub msg: RosMessage,
}

pub struct Simulator {
    world: WorldModel,
    params: RobotParams,
    rig: SensorRig,
    gains: PidGains,
    config: SimConfig,
    state: RobotState,
    steps: u64,
    sensor_period: u64,
    odom_period: u64,
    clock_period: u64,
    commands: VecDeque<Command>,
    rng: ChaCha8Rng,
    bumper_latch: BumperMsg,
}

impl Simulator {
    pub fn new(scenario: &Scenario, rig: SensorRig, mut config: SimConfig) -> Result<Self, SimError> {
        scenario.check()?;
        if !(config.dt > 0.0 && config.dt.is_finite()) {
            return Err(SimError::Config("dt must be positive".into()));
        }
        if !(config.gains.left.is_valid() && config.gains.right.is_valid()) {
            return Err(SimError::Config("PID gains must be finite and non-negative".into()));
        }
        config.noise = scenario.noise;
        Ok(Self {
            world: scenario.world.clone(),
            params: scenario.robot,
            rig,
            gains: config.gains,
            sensor_period: config.period_steps(config.sensor_rate_hz)?,
            odom_period: config.period_steps(config.odom_rate_hz)?,
            clock_period: config.period_steps(config.clock_rate_hz)?,
            config,
            state: RobotState::at_rest(scenario.spawn),
            steps: 0,
            commands: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            bumper_latch: BumperMsg::default(),
        })
    }

    /// Default rig and config.
    pub fn from_scenario(scenario: &Scenario) -> Result<Self, SimError> {
        Self::new(scenario, SensorRig::default(), SimConfig::default())
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut RobotState {
        &mut self.state
    }

    pub fn params(&self) -> &RobotParams {
        &self.params
    }

    pub fn world(&self) -> &WorldModel {
        &self.world
    }

    pub fn rig(&self) -> &SensorRig {
        &self.rig
    }

    pub fn gains(&self) -> &PidGains {
        &self.gains
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn sim_time(&self) -> f64 {
        self.state.sim_time
    }

    pub fn enqueue(&mut self, cmd: Command) {
        self.commands.push_back(cmd);
    }

    /// Messages describing the state before the first step.
    pub fn initial_events(&mut self) -> Vec<SimEvent> {
        let mut out = self.sensor_events();
        out.push(self.odom_event());
        out
    }

    pub fn step(&mut self) -> Vec<SimEvent> {
        let dt = self.config.dt;
        while let Some(cmd) = self.commands.pop_front() {
            self.apply(cmd);
        }

        let p = self.params;
        let lim = self.config.integral_limit;
        let s = &mut self.state;
        let (ul, pl) = pid_step(&self.gains.left, &s.pid_left, s.wheel_setpoint.left, s.wheel_velocity.left, dt, lim);
        let (ur, pr) =
            pid_step(&self.gains.right, &s.pid_right, s.wheel_setpoint.right, s.wheel_velocity.right, dt, lim);
        s.pid_left = pl;
        s.pid_right = pr;
        let max = p.max_wheel_speed;
        s.wheel_velocity.left =
            wheel_update(s.wheel_velocity.left, s.wheel_setpoint.left, ul, p.wheel_time_constant, dt).clamp(-max, max);
        s.wheel_velocity.right =
            wheel_update(s.wheel_velocity.right, s.wheel_setpoint.right, ur, p.wheel_time_constant, dt)
                .clamp(-max, max);

        let (v, w) = s.body_twist(&p);
        let next_true = integrate_pose(s.true_pose, v, w, dt);
        let next_odom = if self.config.noise.odom_std > 0.0 {
            let n = Normal::new(0.0, self.config.noise.odom_std).expect("validated std");
            let (ev, ew) = (n.sample(&mut self.rng), n.sample(&mut self.rng));
            integrate_pose(s.odom_pose, v * (1.0 + ev), w * (1.0 + ew), dt)
        } else {
            integrate_pose(s.odom_pose, v, w, dt)
        };

        let hits = contacts(&self.world, Point { x: next_true.x, y: next_true.y }, p.footprint_radius);
        let s = &mut self.state;
        if hits.is_empty() {
            s.true_pose = next_true;
            s.odom_pose = next_odom;
            s.bumper = BumperMsg::default();
        } else {
            let mut bumper = BumperMsg::default();
            for c in &hits {
                let bearing = (c.y - next_true.y).atan2(c.x - next_true.x) - s.true_pose.theta;
                let (l, r) = bumper_sides(bearing);
                bumper.left |= l;
                bumper.right |= r;
            }
            s.bumper = bumper;
            s.wheel_velocity = Wheels::default();
            s.pid_left = PidState::default();
            s.pid_right = PidState::default();
        }
        self.bumper_latch.left |= s.bumper.left;
        self.bumper_latch.right |= s.bumper.right;

        self.steps += 1;
        self.state.sim_time = self.steps as f64 * dt;

        let mut out = Vec::new();
        if self.steps.is_multiple_of(self.sensor_period) {
            out.extend(self.sensor_events());
        }
        if self.steps.is_multiple_of(self.odom_period) {
            out.push(self.odom_event());
        }
        if self.steps.is_multiple_of(self.clock_period) {
            out.push(SimEvent {
                topic: topics::CLOCK,
                msg: RosMessage::Clock(ClockMsg::from_nanos(self.steps * self.config.dt_nanos())),
            });
        }
        out
    }

    fn apply(&mut self, cmd: Command) {
        match cmd {
            Command::CmdVel(t) => {
                if let Err(e) = self.state.apply_cmd_vel(&self.params, &t) {
                    tracing::warn!("{e}");
                }
            }
            Command::Led(l) => self.state.led = l,
            Command::SetPid(g) => {
                if g.left.is_valid() && g.right.is_valid() {
                    self.gains = g;
                } else {
                    tracing::warn!("ignoring invalid PID gains {g:?}");
                }
            }
        }
    }

    /// Reading of one range sensor from the true pose.
    pub fn range_reading(&mut self, sensor: &RangeSensor) -> f64 {
        let pose = self.state.true_pose.compose(sensor.mount.x, sensor.mount.y, sensor.mount.theta);
        let clean =
            raycast_range(&self.world, pose, sensor.field_of_view, sensor.min_range, sensor.max_range, self.rig.rays);
        if self.config.noise.range_std > 0.0 {
            let n = Normal::new(0.0, self.config.noise.range_std).expect("validated std");
            (clean + n.sample(&mut self.rng)).clamp(sensor.min_range, sensor.max_range)
        } else {
            clean
        }
    }

    fn sensor_events(&mut self) -> Vec<SimEvent> {
        let sensors = self.rig.sensors.clone();
        let mut out: Vec<SimEvent> = sensors
            .iter()
            .map(|s| SimEvent {
                topic: s.id.topic(),
                msg: RosMessage::Range(RangeMsg {
                    radiation_type: s.id.radiation(),
                    field_of_view: s.field_of_view,
                    min_range: s.min_range,
                    max_range: s.max_range,
                    range: self.range_reading(s),
                }),
            })
            .collect();
        out.push(SimEvent { topic: topics::BUMPER, msg: RosMessage::Bumper(self.bumper_latch) });
        self.bumper_latch = self.state.bumper;
        out
    }

    fn odom_event(&self) -> SimEvent {
        let (v, w) = self.state.body_twist(&self.params);
        let p = self.state.odom_pose;
        SimEvent { topic: topics::ODOM, msg: RosMessage::Odometry(OdometryMsg::planar(p.x, p.y, p.theta, v, w)) }
    }
}

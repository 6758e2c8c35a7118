//! Obstacle map and the scenario (world) file.
//!
//! ```json
//! {"bounds": {"min_x": -2.5, "min_y": -2.5, "max_x": 2.5, "max_y": 2.5},
//!  "obstacles": [{"kind": "segment", "x1": 1, "y1": -1, "x2": 1, "y2": 1},
//!                {"kind": "box", "min_x": 2, "min_y": 0, "max_x": 2.5, "max_y": 0.5}],
//!  "spawn": {"x": 0, "y": 0, "theta": 0},
//!  "robot": {"footprint_radius": 0.2},
//!  "seed": 7}
//! ```

use serde::{Deserialize, Serialize};

use super::geometry::{clearance, Point};
use super::{Pose2D, RobotParams, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Obstacle {
    Segment { x1: f64, y1: f64, x2: f64, y2: f64 },
    Box { min_x: f64, min_y: f64, max_x: f64, max_y: f64 },
}

/// Enclosing rectangle. Its edges are solid walls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldModel {
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

impl WorldModel {
    /// Obstacles plus the four bounds walls.
    pub fn solids(&self) -> impl Iterator<Item = Obstacle> + '_ {
        let walls = self.bounds.iter().flat_map(|b| {
            [
                Obstacle::Segment { x1: b.min_x, y1: b.min_y, x2: b.max_x, y2: b.min_y },
                Obstacle::Segment { x1: b.max_x, y1: b.min_y, x2: b.max_x, y2: b.max_y },
                Obstacle::Segment { x1: b.max_x, y1: b.max_y, x2: b.min_x, y2: b.max_y },
                Obstacle::Segment { x1: b.min_x, y1: b.max_y, x2: b.min_x, y2: b.min_y },
            ]
        });
        self.obstacles.iter().copied().chain(walls)
    }

    fn check(&self) -> Result<(), SimError> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        for (i, ob) in self.obstacles.iter().enumerate() {
            let ok = match *ob {
                Obstacle::Segment { x1, y1, x2, y2 } => finite(&[x1, y1, x2, y2]),
                Obstacle::Box { min_x, min_y, max_x, max_y } => {
                    finite(&[min_x, min_y, max_x, max_y]) && min_x <= max_x && min_y <= max_y
                }
            };
            if !ok {
                return Err(SimError::World(format!("obstacles[{i}]: malformed geometry")));
            }
        }
        if let Some(b) = self.bounds {
            if !(finite(&[b.min_x, b.min_y, b.max_x, b.max_y]) && b.min_x < b.max_x && b.min_y < b.max_y) {
                return Err(SimError::World("bounds: malformed rectangle".into()));
            }
        }
        Ok(())
    }
}

/// Partial override of [`RobotParams`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotOverrides {
    pub wheel_separation: Option<f64>,
    pub wheel_radius: Option<f64>,
    pub footprint_radius: Option<f64>,
    pub max_wheel_speed: Option<f64>,
    pub wheel_time_constant: Option<f64>,
}

/// Gaussian noise on sensor ranges and odometry. Off (zero) by default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub range_std: f64,
    #[serde(default)]
    pub odom_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    bounds: Option<Bounds>,
    #[serde(default)]
    obstacles: Vec<Obstacle>,
    #[serde(default)]
    spawn: Pose2D,
    #[serde(default)]
    robot: RobotOverrides,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    noise: NoiseConfig,
}

/// A loaded world file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub world: WorldModel,
    pub spawn: Pose2D,
    pub robot: RobotParams,
    pub seed: u64,
    pub noise: NoiseConfig,
}

impl Scenario {
    /// Parses a world file. Errors carry the JSON path of the offending node.
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            SimError::World(format!("{path}: {}", e.into_inner()))
        })?;
        let mut robot = RobotParams::default();
        let o = file.robot;
        robot.wheel_separation = o.wheel_separation.unwrap_or(robot.wheel_separation);
        robot.wheel_radius = o.wheel_radius.unwrap_or(robot.wheel_radius);
        robot.footprint_radius = o.footprint_radius.unwrap_or(robot.footprint_radius);
        robot.max_wheel_speed = o.max_wheel_speed.unwrap_or(robot.max_wheel_speed);
        robot.wheel_time_constant = o.wheel_time_constant.unwrap_or(robot.wheel_time_constant);
        let scenario = Scenario {
            world: WorldModel { obstacles: file.obstacles, bounds: file.bounds },
            spawn: Pose2D::new(file.spawn.x, file.spawn.y, file.spawn.theta),
            robot,
            seed: file.seed,
            noise: file.noise,
        };
        scenario.check()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let r = &self.robot;
        serde_json::to_value(ScenarioFile {
            bounds: self.world.bounds,
            obstacles: self.world.obstacles.clone(),
            spawn: self.spawn,
            robot: RobotOverrides {
                wheel_separation: Some(r.wheel_separation),
                wheel_radius: Some(r.wheel_radius),
                footprint_radius: Some(r.footprint_radius),
                max_wheel_speed: Some(r.max_wheel_speed),
                wheel_time_constant: Some(r.wheel_time_constant),
            },
            seed: self.seed,
            noise: self.noise,
        })
        .expect("scenario is plain data")
    }

    /// Geometry sanity plus the spawn-clearance invariant.
    pub fn check(&self) -> Result<(), SimError> {
        self.world.check()?;
        self.robot.check()?;
        let s = self.spawn;
        if !(s.x.is_finite() && s.y.is_finite() && s.theta.is_finite()) {
            return Err(SimError::World("spawn: non-finite pose".into()));
        }
        if self.noise.range_std < 0.0 || self.noise.odom_std < 0.0 {
            return Err(SimError::World("noise: negative standard deviation".into()));
        }
        let gap = clearance(&self.world, Point { x: s.x, y: s.y });
        if gap < self.robot.footprint_radius {
            return Err(SimError::World(format!(
                "spawn: footprint intersects an obstacle (clearance {gap:.3} m < radius {} m)",
                self.robot.footprint_radius
            )));
        }
        Ok(())
    }
}

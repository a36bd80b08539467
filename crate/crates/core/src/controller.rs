//! Waypoint-following controller engine: reads the vehicle pose from
//! `state_location`, writes steering and wheel targets to `actors`.

use std::path::Path;

use thiserror::Error;

use crate::course::load_trajectory;
use crate::datapack::{Payload, PayloadKind};
use crate::doc::{self, Doc, Value};
use crate::engine::{EngineScript, Registry, ScriptError};
use crate::geometry::{quaternion_to_yaw, wrap_angle};
use crate::pipeline::{ACTORS_DATAPACK, STATE_LOCATION_DATAPACK};

pub const DEFAULT_ARRIVAL_RADIUS: f64 = 0.8;
pub const DEFAULT_HEADING_GAIN: f64 = 1.5;
pub const DEFAULT_CRUISE_SPEED: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<(f64, f64)>,
    pub arrival_radius: f64,
}

impl Trajectory {
    pub fn new(waypoints: Vec<(f64, f64)>) -> Result<Self, ScriptError> {
        if waypoints.is_empty() {
            return Err(ScriptError("trajectory has no waypoints".into()));
        }
        if waypoints.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(ScriptError("trajectory has non-finite waypoints".into()));
        }
        Ok(Self {
            waypoints,
            arrival_radius: DEFAULT_ARRIVAL_RADIUS,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ControllerState {
    pub current_index: usize,
    pub finished: bool,
}

/// Consumes every waypoint inside the closed arrival ball around `pos`,
/// in order.
pub fn advance_waypoint(traj: &Trajectory, cs: ControllerState, pos: (f64, f64)) -> ControllerState {
    let mut i = cs.current_index;
    while let Some(&(wx, wy)) = traj.waypoints.get(i) {
        if (wx - pos.0).hypot(wy - pos.1) > traj.arrival_radius {
            break;
        }
        i += 1;
    }
    ControllerState {
        current_index: i,
        finished: i >= traj.waypoints.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("target coincides with the vehicle position")]
pub struct DegenerateTarget;

/// Proportional heading-error steering, clamped to the steering range.
pub fn steering_command(
    pos: (f64, f64),
    yaw: f64,
    target: (f64, f64),
    gain: f64,
    max_steer: f64,
) -> Result<f64, DegenerateTarget> {
    let (dx, dy) = (target.0 - pos.0, target.1 - pos.1);
    if dx.hypot(dy) < 1e-9 {
        return Err(DegenerateTarget);
    }
    let e = wrap_angle(dy.atan2(dx) - yaw);
    Ok((gain * e).clamp(-max_steer, max_steer))
}

/// Splits a bicycle steering angle into (left, right) wheel angles sharing
/// one turning centre. For a left turn the left wheel is the inner one.
pub fn ackermann_split(delta: f64, wheelbase: f64, track: f64) -> (f64, f64) {
    if delta == 0.0 {
        return (0.0, 0.0);
    }
    let cot = 1.0 / delta.abs().tan();
    let k = track / (2.0 * wheelbase);
    let inner = (1.0 / (cot - k)).atan();
    // A negative cotangent means the inner wheel passed 90 degrees.
    let inner = if inner < 0.0 {
        inner + std::f64::consts::PI
    } else {
        inner
    };
    let outer = (1.0 / (cot + k)).atan();
    if delta > 0.0 {
        (inner, outer)
    } else {
        (-outer, -inner)
    }
}

/// Contents of the `actors` document: steering angles in rad, rear wheel
/// angular velocities in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Actors {
    pub angular_l: f64,
    pub angular_r: f64,
    pub linear_l: f64,
    pub linear_r: f64,
}

impl Actors {
    pub fn to_doc(&self) -> Doc {
        crate::doc! {
            "angular_L" => self.angular_l,
            "angular_R" => self.angular_r,
            "linear_L" => self.linear_l,
            "linear_R" => self.linear_r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub cruise_speed: f64,
    pub wheel_radius: f64,
    pub wheelbase: f64,
    pub track: f64,
    pub max_steer: f64,
    pub heading_gain: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            cruise_speed: DEFAULT_CRUISE_SPEED,
            wheel_radius: 0.15,
            wheelbase: 1.0,
            track: 0.6,
            max_steer: 0.6,
            heading_gain: DEFAULT_HEADING_GAIN,
        }
    }
}

impl ControllerParams {
    pub fn cruise_omega(&self) -> f64 {
        self.cruise_speed / self.wheel_radius
    }
}

#[derive(Debug, Clone)]
pub struct Controller {
    pub trajectory: Trajectory,
    pub params: ControllerParams,
    pub state: ControllerState,
    last: Actors,
}

impl Controller {
    pub fn new(trajectory: Trajectory, params: ControllerParams) -> Self {
        Self {
            trajectory,
            params,
            state: ControllerState::default(),
            last: Actors::default(),
        }
    }

    /// One control update. Without a pose the previous command is held.
    pub fn update(&mut self, pose: Option<(f64, f64, f64)>) -> Actors {
        let Some((x, y, yaw)) = pose else {
            return self.last;
        };
        if !self.state.finished {
            self.state = advance_waypoint(&self.trajectory, self.state, (x, y));
        }
        let p = &self.params;
        self.last = match self.trajectory.waypoints.get(self.state.current_index) {
            None => Actors::default(),
            Some(&target) => {
                // Unreachable in practice: a target this close is inside the
                // arrival ball and already consumed.
                let delta = steering_command((x, y), yaw, target, p.heading_gain, p.max_steer).unwrap_or(0.0);
                let (l, r) = ackermann_split(delta, p.wheelbase, p.track);
                Actors {
                    angular_l: l.clamp(-p.max_steer, p.max_steer),
                    angular_r: r.clamp(-p.max_steer, p.max_steer),
                    linear_l: p.cruise_omega(),
                    linear_r: p.cruise_omega(),
                }
            }
        };
        self.last
    }
}

/// Pose from a `state_location` document, or `None` when the fields are
/// missing or the quaternion is degenerate (the zeroed initial document).
pub fn pose_from_state_doc(d: &Doc) -> Option<(f64, f64, f64)> {
    let f = |k| doc::get_f64(d, k);
    let q = [f("qtn_x")?, f("qtn_y")?, f("qtn_z")?, f("qtn_w")?];
    let yaw = quaternion_to_yaw(q).ok()?;
    Some((f("location_x")?, f("location_y")?, yaw))
}

fn zero_state_doc() -> Doc {
    ["location_x", "location_y", "qtn_x", "qtn_y", "qtn_z", "qtn_w"]
        .into_iter()
        .map(|k| (k.to_owned(), Value::Int(0)))
        .collect()
}

fn zero_actors_doc() -> Doc {
    ["angular_L", "angular_R", "linear_L", "linear_R"]
        .into_iter()
        .map(|k| (k.to_owned(), Value::Int(0)))
        .collect()
}

pub struct ControllerEngine {
    controller: Controller,
}

fn extra_f64(extra: &Doc, key: &str, default: f64) -> Result<f64, ScriptError> {
    match extra.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite() && *x > 0.0)
            .ok_or_else(|| ScriptError(format!("{key} must be a positive number"))),
    }
}

fn waypoints_from_doc(v: &Value) -> Result<Vec<(f64, f64)>, ScriptError> {
    let bad = || ScriptError("Waypoints must be a list of [x, y] pairs".into());
    let Value::Array(items) = v else { return Err(bad()) };
    items
        .iter()
        .map(|p| match p {
            Value::Array(xy) if xy.len() == 2 => Ok((xy[0].as_f64().ok_or_else(bad)?, xy[1].as_f64().ok_or_else(bad)?)),
            _ => Err(bad()),
        })
        .collect()
}

impl ControllerEngine {
    pub fn new(controller: Controller) -> Self {
        Self { controller }
    }

    /// Reads the trajectory from `TrajectoryFile` or inline `Waypoints`,
    /// plus optional tuning keys.
    pub fn from_extra(extra: &Doc) -> Result<Self, ScriptError> {
        let waypoints = match (extra.get("TrajectoryFile"), extra.get("Waypoints")) {
            (Some(Value::Str(path)), None) => {
                load_trajectory(Path::new(path)).map_err(|e| ScriptError(e.to_string()))?
            }
            (None, Some(w)) => waypoints_from_doc(w)?,
            (None, None) => return Err(ScriptError("controller needs TrajectoryFile or Waypoints".into())),
            _ => {
                return Err(ScriptError(
                    "give exactly one of TrajectoryFile (a path) or Waypoints".into(),
                ))
            }
        };
        let d = ControllerParams::default();
        let params = ControllerParams {
            cruise_speed: extra_f64(extra, "CruiseSpeed", d.cruise_speed)?,
            wheel_radius: extra_f64(extra, "WheelRadius", d.wheel_radius)?,
            wheelbase: extra_f64(extra, "Wheelbase", d.wheelbase)?,
            track: extra_f64(extra, "Track", d.track)?,
            max_steer: extra_f64(extra, "MaxSteer", d.max_steer)?,
            heading_gain: extra_f64(extra, "HeadingGain", d.heading_gain)?,
        };
        if params.max_steer >= std::f64::consts::FRAC_PI_2 {
            return Err(ScriptError("MaxSteer must be below pi/2".into()));
        }
        let mut trajectory = Trajectory::new(waypoints)?;
        trajectory.arrival_radius = extra_f64(extra, "ArrivalRadius", DEFAULT_ARRIVAL_RADIUS)?;
        Ok(Self::new(Controller::new(trajectory, params)))
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }
}

impl EngineScript for ControllerEngine {
    fn initialize(&mut self, registry: &mut Registry) -> Result<(), ScriptError> {
        registry.register(ACTORS_DATAPACK, PayloadKind::Doc)?;
        registry.register(STATE_LOCATION_DATAPACK, PayloadKind::Doc)?;
        registry.set(ACTORS_DATAPACK, Payload::Doc(zero_actors_doc()))?;
        registry.set(STATE_LOCATION_DATAPACK, Payload::Doc(zero_state_doc()))?;
        Ok(())
    }

    fn run_loop(&mut self, registry: &mut Registry, _timestep_ns: u64) -> Result<(), ScriptError> {
        let pose = registry
            .get(STATE_LOCATION_DATAPACK)?
            .doc()
            .ok()
            .and_then(pose_from_state_doc);
        let actors = self.controller.update(pose);
        registry.set(ACTORS_DATAPACK, Payload::Doc(actors.to_doc()))?;
        Ok(())
    }
}

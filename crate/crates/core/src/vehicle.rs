//! Kinematic Ackermann vehicle driven by four PID-controlled joints.
//!
//! The model is kinematic only: no mass, no tire slip. Rear wheels are
//! velocity joints, front steering joints are position joints. Each joint is a
//! servo that integrates its PID output (a rate for position joints, an
//! acceleration for velocity joints) under a magnitude limit and settles on its
//! setpoint instead of crossing it within a step.

use std::f64::consts::FRAC_PI_2;

use log::warn;
use thiserror::Error;

use crate::datapack::{Payload, PayloadKind};
use crate::doc::{get_f64, Doc, Value};
use crate::engine::{EngineScript, Registry, ScriptError};
use crate::geometry::{wrap_angle, yaw_to_quaternion, Quaternion};

pub const LINK_DATAPACK: &str = "smart_car_link_plugin::base_link";
pub const REAR_LEFT_WHEEL: &str = "smart_car_joint_plugin::rear_left_wheel_joint";
pub const REAR_RIGHT_WHEEL: &str = "smart_car_joint_plugin::rear_right_wheel_joint";
pub const FRONT_LEFT_STEERING: &str = "smart_car_joint_plugin::front_left_steering_joint";
pub const FRONT_RIGHT_STEERING: &str = "smart_car_joint_plugin::front_right_steering_joint";

/// Joint datapack names in the order `[rear_left, rear_right, front_left, front_right]`.
pub const JOINT_NAMES: [&str; 4] = [
    REAR_LEFT_WHEEL,
    REAR_RIGHT_WHEEL,
    FRONT_LEFT_STEERING,
    FRONT_RIGHT_STEERING,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetType {
    Velocity,
    Position,
}

impl TargetType {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetType::Velocity => "velocity",
            TargetType::Position => "position",
        }
    }
}

/// Link pose and twist, `rot` in `(x, y, z, w)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub pos: [f64; 3],
    pub rot: Quaternion,
    pub lin_vel: [f64; 3],
    pub ang_vel: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointCommand {
    pub joint_name: String,
    pub target_type: TargetType,
    pub target_value: f64,
}

impl JointCommand {
    pub fn velocity(joint_name: &str, value: f64) -> Self {
        Self {
            joint_name: joint_name.to_owned(),
            target_type: TargetType::Velocity,
            target_value: value,
        }
    }

    pub fn position(joint_name: &str, value: f64) -> Self {
        Self {
            joint_name: joint_name.to_owned(),
            target_type: TargetType::Position,
            target_value: value,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid vehicle parameter: {0}")]
pub struct InvalidParams(pub &'static str);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub track: f64,
    pub wheel_radius: f64,
    pub max_steer: f64,
    pub steer_rate_limit: f64,
    pub wheel_accel_limit: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 1.0,
            track: 0.6,
            wheel_radius: 0.15,
            max_steer: 0.6,
            steer_rate_limit: 10.0,
            wheel_accel_limit: 50.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), InvalidParams> {
        let fields = [
            (self.wheelbase, "wheelbase"),
            (self.track, "track"),
            (self.wheel_radius, "wheel_radius"),
            (self.max_steer, "max_steer"),
            (self.steer_rate_limit, "steer_rate_limit"),
            (self.wheel_accel_limit, "wheel_accel_limit"),
        ];
        for (v, name) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(InvalidParams(name));
            }
        }
        if self.max_steer >= FRAC_PI_2 {
            return Err(InvalidParams("max_steer"));
        }
        Ok(())
    }

    /// Reads overrides from an engine's `Extra` settings.
    pub fn from_extra(extra: &Doc) -> Result<Self, InvalidParams> {
        let d = Self::default();
        let p = Self {
            wheelbase: get_f64(extra, "Wheelbase").unwrap_or(d.wheelbase),
            track: get_f64(extra, "Track").unwrap_or(d.track),
            wheel_radius: get_f64(extra, "WheelRadius").unwrap_or(d.wheel_radius),
            max_steer: get_f64(extra, "MaxSteer").unwrap_or(d.max_steer),
            steer_rate_limit: get_f64(extra, "SteerRateLimit").unwrap_or(d.steer_rate_limit),
            wheel_accel_limit: get_f64(extra, "WheelAccelLimit").unwrap_or(d.wheel_accel_limit),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub steer_left: f64,
    pub steer_right: f64,
    pub omega_rl: f64,
    pub omega_rr: f64,
}

impl VehicleState {
    pub fn at(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
            ..Self::default()
        }
    }

    pub fn speed(&self, params: &VehicleParams) -> f64 {
        params.wheel_radius * (self.omega_rl + self.omega_rr) / 2.0
    }

    pub fn effective_steer(&self, params: &VehicleParams) -> f64 {
        inverse_ackermann(self.steer_left, self.steer_right, params.wheelbase, params.track)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PidController {
    pub p: f64,
    pub i: f64,
    pub d: f64,
    pub target_type: TargetType,
    pub i_max: f64,
    pub i_min: f64,
    integral: f64,
    prev_error: f64,
}

impl PidController {
    pub fn new(p: f64, i: f64, d: f64, target_type: TargetType) -> Self {
        Self {
            p,
            i,
            d,
            target_type,
            i_max: 0.0,
            i_min: 0.0,
            integral: 0.0,
            prev_error: 0.0,
        }
    }

    /// Rear wheel gains of the smart car joint plugin.
    pub fn wheel() -> Self {
        Self::new(10.0, 0.0, 0.0, TargetType::Velocity)
    }

    /// Front steering gains of the smart car joint plugin.
    pub fn steering() -> Self {
        Self::new(40000.0, 200.0, 1.0, TargetType::Position)
    }

    pub fn with_integral_bounds(mut self, i_min: f64, i_max: f64) -> Self {
        self.i_min = i_min;
        self.i_max = i_max;
        self
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// A `0/0` bound pair disables anti-windup.
    fn bounds_active(&self) -> bool {
        !(self.i_min == 0.0 && self.i_max == 0.0)
    }

    pub fn step(&mut self, setpoint: f64, measured: f64, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        let error = setpoint - measured;
        self.integral += error * dt;
        if self.bounds_active() {
            self.integral = self.integral.clamp(self.i_min, self.i_max);
        }
        let derivative = (error - self.prev_error) / dt;
        self.prev_error = error;
        self.p * error + self.i * self.integral + self.d * derivative
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = 0.0;
    }
}

/// Moves `value` toward `setpoint` at the PID-requested rate `command`,
/// limited to `limit` per second. The servo never crosses its setpoint within
/// a step and never moves away from it.
pub fn servo_advance(value: f64, setpoint: f64, command: f64, limit: f64, dt: f64) -> f64 {
    let error = setpoint - value;
    if error == 0.0 || command == 0.0 || command.signum() != error.signum() {
        return value;
    }
    let step = command.abs().min(limit) * dt;
    if step >= error.abs() {
        setpoint
    } else {
        value + error.signum() * step
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub pid: PidController,
    pub setpoint: f64,
}

/// Effective bicycle steering angle from a left/right pair. Each wheel is
/// mapped to the bicycle angle it implies through the Ackermann cotangent
/// relation and the two results are averaged, which is exact on consistent
/// pairs. Pairs of opposite sign fall back to the mean angle.
pub fn inverse_ackermann(left: f64, right: f64, wheelbase: f64, track: f64) -> f64 {
    if left * right < 0.0 {
        return (left + right) / 2.0;
    }
    let sign = if left + right < 0.0 { -1.0 } else { 1.0 };
    let (inner, outer) = if sign > 0.0 { (left, right) } else { (-right, -left) };
    let k = track / (2.0 * wheelbase);
    // atan2 form of acot(cot a ± k); stays finite at a = 0.
    let from_inner = inner.sin().atan2(inner.cos() + k * inner.sin());
    let from_outer = outer.sin().atan2(outer.cos() - k * outer.sin());
    sign * (from_inner + from_outer) / 2.0
}

/// Integrates the bicycle model for one step from the current joint state.
pub fn integrate_kinematics(state: &VehicleState, params: &VehicleParams, dt: f64) -> VehicleState {
    let v = state.speed(params);
    let delta = state.effective_steer(params);
    let (sin_yaw, cos_yaw) = state.yaw.sin_cos();
    VehicleState {
        x: state.x + v * cos_yaw * dt,
        y: state.y + v * sin_yaw * dt,
        yaw: wrap_angle(state.yaw + v / params.wheelbase * delta.tan() * dt),
        ..*state
    }
}

pub fn publish_link_state(state: &VehicleState, params: &VehicleParams) -> LinkState {
    let v = state.speed(params);
    let yaw_rate = v / params.wheelbase * state.effective_steer(params).tan();
    let (sin_yaw, cos_yaw) = state.yaw.sin_cos();
    LinkState {
        pos: [state.x, state.y, 0.0],
        rot: yaw_to_quaternion(state.yaw),
        lin_vel: [v * cos_yaw, v * sin_yaw, 0.0],
        ang_vel: [0.0, 0.0, yaw_rate],
    }
}

/// The vehicle with its joint controllers. Joint slots follow [`JOINT_NAMES`].
#[derive(Debug, Clone)]
pub struct VehicleSim {
    pub params: VehicleParams,
    pub state: VehicleState,
    joints: [Joint; 4],
}

impl VehicleSim {
    pub fn new(params: VehicleParams, state: VehicleState) -> Self {
        let wheel = || Joint {
            pid: PidController::wheel(),
            setpoint: 0.0,
        };
        let steer = || Joint {
            pid: PidController::steering(),
            setpoint: 0.0,
        };
        Self {
            params,
            state,
            joints: [wheel(), wheel(), steer(), steer()],
        }
    }

    pub fn joint(&self, slot: usize) -> &Joint {
        &self.joints[slot]
    }

    /// Sets a joint setpoint. Unknown joints and mismatched target types are
    /// ignored; steering targets are clamped to the steering range.
    pub fn apply_command(&mut self, cmd: &JointCommand) -> bool {
        let Some(slot) = JOINT_NAMES.iter().position(|n| *n == cmd.joint_name) else {
            warn!("ignoring command for unknown joint {}", cmd.joint_name);
            return false;
        };
        let joint = &mut self.joints[slot];
        if joint.pid.target_type != cmd.target_type {
            warn!(
                "ignoring {} command for {} joint {}",
                cmd.target_type.as_str(),
                joint.pid.target_type.as_str(),
                cmd.joint_name
            );
            return false;
        }
        if !cmd.target_value.is_finite() {
            return false;
        }
        joint.setpoint = match cmd.target_type {
            TargetType::Position => cmd.target_value.clamp(-self.params.max_steer, self.params.max_steer),
            TargetType::Velocity => cmd.target_value,
        };
        true
    }

    /// Updates the joints under PID control, then moves the chassis.
    pub fn step(&mut self, dt: f64) {
        let p = self.params;
        let s = &mut self.state;
        let measured = [s.omega_rl, s.omega_rr, s.steer_left, s.steer_right];
        let mut next = measured;
        for (slot, joint) in self.joints.iter_mut().enumerate() {
            let u = joint.pid.step(joint.setpoint, measured[slot], dt);
            let limit = match joint.pid.target_type {
                TargetType::Velocity => p.wheel_accel_limit,
                TargetType::Position => p.steer_rate_limit,
            };
            next[slot] = servo_advance(measured[slot], joint.setpoint, u, limit, dt);
        }
        s.omega_rl = next[0];
        s.omega_rr = next[1];
        s.steer_left = next[2].clamp(-p.max_steer, p.max_steer);
        s.steer_right = next[3].clamp(-p.max_steer, p.max_steer);
        self.state = integrate_kinematics(&self.state, &p, dt);
    }

    pub fn link_state(&self) -> LinkState {
        publish_link_state(&self.state, &self.params)
    }
}

/// Engine script exposing the vehicle as the link datapack plus four joint
/// command datapacks.
pub struct VehicleEngine {
    sim: VehicleSim,
}

impl VehicleEngine {
    pub fn new(sim: VehicleSim) -> Self {
        Self { sim }
    }

    pub fn from_extra(extra: &Doc) -> Result<Self, ScriptError> {
        let params = VehicleParams::from_extra(extra).map_err(|e| ScriptError(e.to_string()))?;
        let state = match extra.get("InitialPose") {
            None => VehicleState::default(),
            Some(Value::Array(xs)) if xs.len() == 3 => {
                let n: Option<Vec<f64>> = xs.iter().map(Value::as_f64).collect();
                let n = n.ok_or_else(|| ScriptError("InitialPose must be numeric".into()))?;
                VehicleState::at(n[0], n[1], n[2])
            }
            Some(_) => return Err(ScriptError("InitialPose must be [x, y, yaw]".into())),
        };
        Ok(Self::new(VehicleSim::new(params, state)))
    }

    pub fn sim(&self) -> &VehicleSim {
        &self.sim
    }
}

impl EngineScript for VehicleEngine {
    fn initialize(&mut self, registry: &mut Registry) -> Result<(), ScriptError> {
        registry.register(LINK_DATAPACK, PayloadKind::LinkState)?;
        for name in JOINT_NAMES {
            registry.register(name, PayloadKind::JointCommand)?;
        }
        registry.set(LINK_DATAPACK, Payload::LinkState(self.sim.link_state()))?;
        Ok(())
    }

    fn run_loop(&mut self, registry: &mut Registry, timestep_ns: u64) -> Result<(), ScriptError> {
        for name in JOINT_NAMES {
            if let Ok(cmd) = registry.get(name)?.joint_command() {
                self.sim.apply_command(cmd);
            }
        }
        self.sim.step(timestep_ns as f64 * 1e-9);
        registry.set(LINK_DATAPACK, Payload::LinkState(self.sim.link_state()))?;
        Ok(())
    }
}

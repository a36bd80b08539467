//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value as Json;

use nrpl_core::bench::{measure_throughput, CAMERA_FRAME_BYTES};
use nrpl_core::config::{load_config, parse_config, ConfigError, EngineConfig};
use nrpl_core::controller::ackermann_split;
use nrpl_core::datapack::{DataPack, DataPackError, DataPackId, PayloadKind};
use nrpl_core::doc::Value;
use nrpl_core::engine::{EngineFactory, EngineHandle};
use nrpl_core::geometry::{quaternion_to_yaw, yaw_to_quaternion};
use nrpl_core::perception::{detect_stub, flatten_grid, render_frame, reshape_frame, reverse_channels, CameraFrame};
use nrpl_core::pipeline::{FunctionRegistry, ACTORS_DATAPACK};
use nrpl_core::sim::{ExitReason, Simulation, SimulationReport};
use nrpl_core::vehicle::{
    publish_link_state, JointCommand, VehicleParams, VehicleSim, VehicleState, FRONT_LEFT_STEERING,
    FRONT_RIGHT_STEERING, REAR_LEFT_WHEEL, REAR_RIGHT_WHEEL,
};
use nrpl_core::Codec;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn nrpl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nrpl"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn read_metrics(dir: &Path) -> Json {
    serde_json::from_slice(&std::fs::read(dir.join("metrics.json")).expect("metrics.json")).expect("metrics JSON")
}

// 1 -------------------------------------------------------------------------

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for i in 0..2 {
        let out = tmp.path().join(format!("run{i}"));
        let start = Instant::now();
        let status = nrpl()
            .args(["run", "-c"])
            .arg(fixture("demo_full.json"))
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        let elapsed = start.elapsed();
        ensure(status.success(), || format!("run {i} exited with {status}"))?;
        ensure(elapsed < Duration::from_secs(60), || {
            format!("run {i} took {elapsed:?}")
        })?;
        let m = read_metrics(&out);
        ensure(m["steps"] == 1000, || format!("run {i} made {} steps", m["steps"]))?;
        let traj = std::fs::read(out.join("trajectory.csv")).unwrap();
        runs.push((m["trace_hash"].as_str().unwrap().to_owned(), traj, elapsed));
    }
    ensure(runs[0].0 == runs[1].0, || {
        format!("trace hashes differ: {} vs {}", runs[0].0, runs[1].0)
    })?;
    ensure(runs[0].1 == runs[1].1, || "trajectory CSVs differ".into())?;
    Ok(format!(
        "trace {} twice, trajectory identical, runtimes {:.1?} / {:.1?}",
        runs[0].0, runs[0].2, runs[1].2
    ))
}

// 2 -------------------------------------------------------------------------

fn config_conformance() -> Outcome {
    let cfg = load_config(&fixture("example_simulation.json")).map_err(|e| e.to_string())?;
    ensure(cfg.engine_configs.len() == 2, || {
        format!("{} engines", cfg.engine_configs.len())
    })?;
    ensure(cfg.functions.len() == 1, || {
        format!("{} functions", cfg.functions.len())
    })?;
    ensure(cfg.simulation_timeout == 1, || {
        format!("timeout {}", cfg.simulation_timeout)
    })?;
    ensure(cfg.simulation_timestep == 0.01, || {
        format!("timestep {}", cfg.simulation_timestep)
    })?;
    for e in &cfg.engine_configs {
        ensure(e.engine_timestep == 0.01, || {
            format!("{} timestep {}", e.engine_name, e.engine_timestep)
        })?;
    }
    let engine = r#"{"EngineName": "a", "EngineType": "vehicle_sim"}"#;
    for (key, doc) in [
        (
            "ConnectROS",
            format!(r#"{{"ConnectROS": [], "EngineConfigs": [{engine}]}}"#),
        ),
        (
            "ComputationalGraph",
            format!(r#"{{"ComputationalGraph": [], "EngineConfigs": [{engine}]}}"#),
        ),
    ] {
        match parse_config(doc.as_bytes()) {
            Err(ConfigError::UnsupportedFeature { key: k, .. }) if k == key => {}
            other => return Err(format!("{key}: expected UnsupportedFeature, got {other:?}")),
        }
    }
    Ok("example parses to 2 engines + 1 function, timeout 1 s, timesteps 0.01; ROS/CG rejected".into())
}

// 3 -------------------------------------------------------------------------

/// Holds the given wheel speed and steering pair for `steps` steps, starting
/// with the joints already at their targets.
fn drive(omega: f64, steer: (f64, f64), steps: usize) -> Vec<(f64, f64)> {
    let state = VehicleState {
        omega_rl: omega,
        omega_rr: omega,
        steer_left: steer.0,
        steer_right: steer.1,
        ..VehicleState::default()
    };
    let mut sim = VehicleSim::new(VehicleParams::default(), state);
    for c in [
        JointCommand::velocity(REAR_LEFT_WHEEL, omega),
        JointCommand::velocity(REAR_RIGHT_WHEEL, omega),
        JointCommand::position(FRONT_LEFT_STEERING, steer.0),
        JointCommand::position(FRONT_RIGHT_STEERING, steer.1),
    ] {
        assert!(sim.apply_command(&c));
    }
    let mut path = vec![(sim.state.x, sim.state.y)];
    for _ in 0..steps {
        sim.step(0.01);
        path.push((sim.state.x, sim.state.y));
    }
    path
}

/// Algebraic least-squares circle fit; returns (cx, cy, r).
fn fit_circle(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    // Solve for a, b, c in x² + y² + a·x + b·y + c = 0.
    let mut m = [[0.0f64; 3]; 3];
    let mut v = [0.0f64; 3];
    for &(x, y) in pts {
        let row = [x, y, 1.0];
        let rhs = -(x * x + y * y);
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            v[i] += row[i] * rhs;
        }
    }
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&m);
    let solve = |k: usize| {
        let mut mk = m;
        for i in 0..3 {
            mk[i][k] = v[i];
        }
        det3(&mk) / d
    };
    let (a, b, c) = (solve(0), solve(1), solve(2));
    let (cx, cy) = (-a / 2.0, -b / 2.0);
    (cx, cy, (cx * cx + cy * cy - c).sqrt())
}

fn kinematics_oracle() -> Outcome {
    let split = ackermann_split(0.2, 1.0, 0.6);
    let path = drive(10.0, split, 2000);
    let (_, _, r) = fit_circle(&path);
    let expected = 1.0 / 0.2f64.tan();
    let rel = (r - expected).abs() / expected;
    ensure(rel < 0.02, || {
        format!("radius {r:.4} vs {expected:.4} ({:.3}%)", rel * 100.0)
    })?;

    let straight = drive(10.0, (0.0, 0.0), 1000);
    let (x, y) = *straight.last().unwrap();
    ensure((x - 15.0).abs() <= 1e-6 && y == 0.0, || {
        format!("straight line ended at ({x}, {y})")
    })?;
    Ok(format!(
        "radius {r:.4} m vs {expected:.4} m ({:.3}% off); straight run {x:.9} m",
        rel * 100.0
    ))
}

// 4 -------------------------------------------------------------------------

/// Yaw read off the rotation matrix of a unit quaternion.
fn matrix_yaw(q: [f64; 4]) -> f64 {
    let [x, y, z, w] = q;
    let r00 = 1.0 - 2.0 * (y * y + z * z);
    let r10 = 2.0 * (x * y + w * z);
    r10.atan2(r00)
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn quaternion_suite() -> Outcome {
    let mut worst_oracle = 0.0f64;
    let mut worst_roundtrip = 0.0f64;
    for i in 0..1000 {
        // Evenly spread over (-π, π], including π itself.
        let yaw = PI - 2.0 * PI * i as f64 / 1000.0;
        let half = yaw / 2.0;
        let q = [0.0, 0.0, half.sin(), half.cos()];
        let got = quaternion_to_yaw(q).map_err(|e| e.to_string())?;
        ensure(got > -PI && got <= PI, || format!("yaw {got} out of range"))?;
        worst_oracle = worst_oracle.max(angle_diff(got, matrix_yaw(q)));

        let state = VehicleState {
            yaw,
            ..VehicleState::default()
        };
        let ls = publish_link_state(&state, &VehicleParams::default());
        let back = quaternion_to_yaw(ls.rot).map_err(|e| e.to_string())?;
        worst_roundtrip = worst_roundtrip.max(angle_diff(back, yaw));
        ensure(yaw_to_quaternion(yaw) == ls.rot, || "published rotation differs".into())?;
    }
    ensure(worst_oracle <= 1e-9, || format!("oracle error {worst_oracle:e}"))?;
    ensure(worst_roundtrip <= 1e-9, || {
        format!("roundtrip error {worst_roundtrip:e}")
    })?;
    Ok(format!(
        "1000 yaws: max oracle error {worst_oracle:.1e}, max roundtrip error {worst_roundtrip:.1e}"
    ))
}

// 5 -------------------------------------------------------------------------

fn waypoint_completion() -> Outcome {
    let mut cfg = load_config(&fixture("demo_control_only.json")).map_err(|e| e.to_string())?;
    cfg.simulation_timeout = 80;
    let waypoints: Vec<(f64, f64)> = csv::Reader::from_path(fixture("rect_course.csv"))
        .unwrap()
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    ensure(waypoints.len() == 81, || format!("{} waypoints", waypoints.len()))?;

    let sim = Simulation::direct(
        &cfg,
        &EngineFactory::with_builtins(),
        &FunctionRegistry::with_builtins(),
    )
    .map_err(|e| e.to_string())?;
    let report = sim.run(Some(8000), None);
    ensure(report.exit_reason == ExitReason::Completed, || {
        format!("{:?}", report.fault)
    })?;

    // Replay the closed-ball rule over the poses the controller received.
    let mut index = 0usize;
    let mut history = Vec::new();
    let mut done_at = None;
    for row in &report.trajectory {
        while index < waypoints.len() {
            let (wx, wy) = waypoints[index];
            if (wx - row.x).hypot(wy - row.y) <= 0.8 {
                index += 1;
            } else {
                break;
            }
        }
        history.push(index);
        if index == waypoints.len() && done_at.is_none() {
            done_at = Some(row.t_ns as f64 * 1e-9);
        }
    }
    ensure(history.windows(2).all(|w| w[0] <= w[1]), || "index decreased".into())?;
    let Some(t) = done_at else {
        return Err(format!(
            "only {index} of {} waypoints consumed in 80 s",
            waypoints.len()
        ));
    };
    ensure(t <= 80.0, || format!("completed at {t} s"))?;
    let last = report.trajectory.last().unwrap();
    let stopped = report
        .trajectory
        .iter()
        .rev()
        .take(100)
        .all(|r| (r.x - last.x).abs() < 1e-12 && (r.y - last.y).abs() < 1e-12);
    ensure(stopped, || "vehicle still moving after the final waypoint".into())?;
    Ok(format!(
        "all 81 waypoints consumed in order, course completed at {t:.2} s sim; vehicle stopped"
    ))
}

// 6 -------------------------------------------------------------------------

/// Reference joint: PID output is a rate (or acceleration) request, applied
/// under a magnitude limit without overshooting the setpoint.
struct RefJoint {
    gains: (f64, f64, f64),
    limit: f64,
    value: f64,
    integral: f64,
    prev_error: f64,
}

impl RefJoint {
    fn step(&mut self, setpoint: f64, dt: f64) -> f64 {
        let (p, i, d) = self.gains;
        let e = setpoint - self.value;
        self.integral += e * dt;
        let u = p * e + i * self.integral + d * (e - self.prev_error) / dt;
        self.prev_error = e;
        if e != 0.0 && u != 0.0 && (u > 0.0) == (e > 0.0) {
            let dv = u.abs().min(self.limit) * dt;
            self.value = if dv >= e.abs() {
                setpoint
            } else {
                self.value + e.signum() * dv
            };
        }
        self.value
    }
}

fn pid_convergence() -> Outcome {
    let dt = 0.01;
    let steer_target = 0.5;
    let wheel_target = 10.0;
    let mut sim = VehicleSim::new(VehicleParams::default(), VehicleState::default());
    for c in [
        JointCommand::position(FRONT_LEFT_STEERING, steer_target),
        JointCommand::velocity(REAR_LEFT_WHEEL, wheel_target),
    ] {
        assert!(sim.apply_command(&c));
    }
    let mut steer_ref = RefJoint {
        gains: (40000.0, 200.0, 1.0),
        limit: 10.0,
        value: 0.0,
        integral: 0.0,
        prev_error: 0.0,
    };
    let mut wheel_ref = RefJoint {
        gains: (10.0, 0.0, 0.0),
        limit: 50.0,
        value: 0.0,
        integral: 0.0,
        prev_error: 0.0,
    };
    let (mut steer_settled, mut wheel_95) = (None, None);
    for k in 1..=200 {
        sim.step(dt);
        let t = k as f64 * dt;
        let (s_ref, w_ref) = (steer_ref.step(steer_target, dt), wheel_ref.step(wheel_target, dt));
        let (s, w) = (sim.state.steer_left, sim.state.omega_rl);
        ensure((s - s_ref).abs() < 1e-12 && (w - w_ref).abs() < 1e-12, || {
            format!("step {k}: engine ({s}, {w}) vs reference ({s_ref}, {w_ref})")
        })?;
        if steer_settled.is_none() && (steer_target - s).abs() < 1e-3 {
            steer_settled = Some(t);
        }
        if wheel_95.is_none() && w >= 0.95 * wheel_target {
            wheel_95 = Some(t);
        }
    }
    let s = steer_settled.ok_or("steering never settled within 2 s")?;
    let w = wheel_95.ok_or("wheel never reached 95% within 2 s")?;
    ensure(s <= 2.0, || format!("steering settled at {s} s"))?;
    ensure(w <= 1.0, || format!("wheel reached 95% at {w} s"))?;
    Ok(format!(
        "engine matches reference; steering |e|<1e-3 at {s:.2} s, wheel 95% at {w:.2} s"
    ))
}

// 7 -------------------------------------------------------------------------

fn brute_force_box(frame: &CameraFrame, threshold: u8) -> Option<(u32, u32, u32, u32, f64)> {
    let (w, h) = (frame.image_width as usize, frame.image_height as usize);
    let bright = |r: usize, c: usize| {
        let i = (r * w + c) * 3;
        let sum: u32 = frame.image_data[i..i + 3].iter().map(|&b| u32::from(b)).sum();
        sum >= 3 * u32::from(threshold)
    };
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    let mut count = 0usize;
    for r in 0..h {
        for c in 0..w {
            if bright(r, c) {
                x0 = x0.min(c);
                y0 = y0.min(r);
                x1 = x1.max(c);
                y1 = y1.max(r);
                count += 1;
            }
        }
    }
    (count > 0).then(|| {
        let area = (x1 - x0 + 1) * (y1 - y0 + 1);
        (x0 as u32, y0 as u32, x1 as u32, y1 as u32, count as f64 / area as f64)
    })
}

fn frame_pipeline() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for i in 0..1000 {
        let (h, w) = (rng.gen_range(1..24u32), rng.gen_range(1..24u32));
        let data: Vec<u8> = (0..h * w * 3).map(|_| rng.gen()).collect();
        let frame = CameraFrame::new(h, w, 3, data).map_err(|e| e.to_string())?;
        let grid = reshape_frame(&frame).map_err(|e| e.to_string())?;
        ensure(flatten_grid(&grid) == frame, || {
            format!("frame {i}: flatten(reshape) differs")
        })?;
        let swapped = reverse_channels(&grid).map_err(|e| e.to_string())?;
        let back = reverse_channels(&swapped).map_err(|e| e.to_string())?;
        ensure(back == grid, || {
            format!("frame {i}: channel reversal is not an involution")
        })?;
        let (r, c) = (rng.gen_range(0..h as usize), rng.gen_range(0..w as usize));
        let (p, q) = (grid.pixel(r, c), swapped.pixel(r, c));
        ensure(p[0] == q[2] && p[1] == q[1] && p[2] == q[0], || {
            format!("frame {i}: pixel not swapped")
        })?;
    }
    for step in 0..100u64 {
        let frame = render_frame(step, 736, 480);
        let got = detect_stub(&frame, 128).map_err(|e| e.to_string())?;
        let want = brute_force_box(&frame, 128);
        let got_box = got.first().map(|d| (d.x_min, d.y_min, d.x_max, d.y_max, d.score));
        ensure(got.len() <= 1 && got_box == want, || {
            format!("step {step}: {got_box:?} vs {want:?}")
        })?;
        if step == 0 {
            ensure(want.map(|b| (b.0, b.1, b.2, b.3)) == Some((0, 0, 91, 59)), || {
                format!("step 0 box {want:?}")
            })?;
        }
    }
    Ok(
        "1000 random frames roundtrip bit-exact; 100 rendered frames match the pixel scan; step 0 box (0,0)-(91,59)"
            .into(),
    )
}

// 8 -------------------------------------------------------------------------

fn launched_fps(config: &str, codec: Codec, steps: u64) -> Result<SimulationReport, String> {
    let cfg = load_config(&fixture(config)).map_err(|e| e.to_string())?;
    let sim = Simulation::launch(
        &cfg,
        codec,
        &EngineFactory::with_builtins(),
        &FunctionRegistry::with_builtins(),
    )
    .map_err(|e| e.to_string())?;
    let r = sim.run(Some(steps), None);
    ensure(r.exit_reason == ExitReason::Completed, || {
        format!("{config}: {:?}", r.fault)
    })?;
    Ok(r)
}

fn transport_ordering() -> Outcome {
    let text = measure_throughput(Codec::Text, CAMERA_FRAME_BYTES, 5).map_err(|e| e.to_string())?;
    let binary = measure_throughput(Codec::Binary, CAMERA_FRAME_BYTES, 5).map_err(|e| e.to_string())?;
    let (bt, bb) = (text.bytes_per_sec(), binary.bytes_per_sec());
    ensure(bb > 1.1 * bt, || format!("binary {bb:.3e} B/s vs text {bt:.3e} B/s"))?;

    // The text codec moves a camera frame at a few loop steps per second, so
    // both loops are compared over the same short horizon.
    let steps = 20;
    let full = launched_fps("demo_full.json", Codec::Text, steps)?;
    let control = launched_fps("demo_control_only.json", Codec::Text, steps)?;
    let (ff, fc) = (full.loop_fps().unwrap(), control.loop_fps().unwrap());
    ensure(ff * 1.1 < fc, || {
        format!("loop fps full {ff:.1} vs control-only {fc:.1}")
    })?;
    Ok(format!(
        "736x480x3 frames: binary {:.1} MB/s vs text {:.1} MB/s; text loop fps full {ff:.1} vs control-only {fc:.1}",
        bb / 1e6,
        bt / 1e6
    ))
}

// 9 -------------------------------------------------------------------------

fn empty_datapacks() -> Outcome {
    let empty = DataPack::empty("state_location", "car_ctl_engine", PayloadKind::Doc);
    match empty.data() {
        Err(DataPackError::Empty(id)) if id == *empty.id() => {}
        other => return Err(format!("reading an empty datapack gave {other:?}")),
    }

    let mut ctl = EngineConfig::new("car_ctl_engine", "controller");
    ctl.extra.insert(
        "Waypoints".into(),
        Value::Array(vec![Value::Array(vec![Value::Float(10.0), Value::Float(0.0)])]),
    );
    let mut handle = EngineHandle::direct(&ctl, &EngineFactory::with_builtins()).map_err(|e| e.to_string())?;
    handle.run_step(10_000_000).map_err(|e| e.to_string())?;
    let id = DataPackId::new(ACTORS_DATAPACK, PayloadKind::Doc, "car_ctl_engine");
    let packs = handle.get_datapacks(&[id]).map_err(|e| e.to_string())?;
    let actors = packs[0].doc().map_err(|e| e.to_string())?;
    let keys = ["angular_L", "angular_R", "linear_L", "linear_R"];
    for k in keys {
        ensure(actors.get(k).and_then(Value::as_f64) == Some(0.0), || {
            format!("{k} = {:?}", actors.get(k))
        })?;
    }

    let cfg = load_config(&fixture("demo_control_only.json")).map_err(|e| e.to_string())?;
    let mut sim = Simulation::direct(
        &cfg,
        &EngineFactory::with_builtins(),
        &FunctionRegistry::with_builtins(),
    )
    .map_err(|e| e.to_string())?;
    sim.step().map_err(|e| format!("first loop step faulted: {e}"))?;
    Ok("empty read raises Empty; first controller step emits zero actors; first loop step clean".into())
}

// 10 ------------------------------------------------------------------------

fn fault_handling() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_nrpl");
    let course = fixture("rect_course.csv");
    let cfg: BTreeMap<&str, Json> = BTreeMap::from([
        ("SimulationName", "faulting".into()),
        ("SimulationTimeout", 1.into()),
        (
            "EngineConfigs",
            serde_json::json!([
                {"EngineName": "vehicle", "EngineType": "vehicle_sim", "EngineProcCmd": exe,
                 "EngineProcStartParams": ["engine"], "Extra": {"FaultAtStep": 40}},
                {"EngineName": "car_ctl_engine", "EngineType": "controller", "EngineProcCmd": exe,
                 "EngineProcStartParams": ["engine"], "Extra": {"TrajectoryFile": course}}
            ]),
        ),
        (
            "DataPackProcessingFunctions",
            serde_json::json!([
                {"Name": "state", "FunctionId": "state_tf", "LinkedEngine": "car_ctl_engine",
                 "Inputs": [{"Keyword": "state_gazebo", "DataPackName": "smart_car_link_plugin::base_link", "EngineName": "vehicle"}]},
                {"Name": "motor_set", "FunctionId": "motor_set_tf", "LinkedEngine": "vehicle",
                 "Inputs": [{"Keyword": "actors", "DataPackName": "actors", "EngineName": "car_ctl_engine"}]}
            ]),
        ),
    ]);
    let path = tmp.path().join("faulting.json");
    std::fs::write(&path, serde_json::to_vec(&cfg).unwrap()).unwrap();
    let out = tmp.path().join("out");
    let status = nrpl()
        .args(["run", "-c"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    ensure(status.code() == Some(2), || format!("exit status {status}"))?;

    let m = read_metrics(&out);
    ensure(m["exit_reason"] == "engine_fault", || {
        format!("exit reason {}", m["exit_reason"])
    })?;
    ensure(m["steps"] == 40, || format!("{} steps", m["steps"]))?;
    let rows = std::fs::read_to_string(out.join("trajectory.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    ensure(rows == 40, || format!("{rows} trajectory rows"))?;
    let teardown = m["teardown"].as_object().ok_or("no teardown record")?;
    ensure(teardown.len() == 2, || format!("{} engines torn down", teardown.len()))?;
    let mut worst = 0.0f64;
    for (engine, t) in teardown {
        ensure(t["forced"] == false, || format!("{engine} had to be killed"))?;
        let ms = t["elapsed_ms"].as_f64().unwrap();
        ensure(ms < 2000.0, || format!("{engine} took {ms} ms to exit"))?;
        worst = worst.max(ms);
    }
    Ok(format!(
        "exit code 2, partial report of 40 steps, both subprocesses exited on their own (slowest {worst:.1} ms)"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("determinism", determinism),
        ("config conformance", config_conformance),
        ("kinematics oracle", kinematics_oracle),
        ("quaternion suite", quaternion_suite),
        ("waypoint completion", waypoint_completion),
        ("PID convergence", pid_convergence),
        ("frame pipeline", frame_pipeline),
        ("transport ordering", transport_ordering),
        ("empty-datapack semantics", empty_datapacks),
        ("fault handling", fault_handling),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Browser bindings for the demo page in `www/`.

use nrpl_core::config::parse_config;
use nrpl_core::controller::ackermann_split;
use nrpl_core::course::{circle_course, rect_course};
use nrpl_core::engine::EngineFactory;
use nrpl_core::perception::{detect_stub, render_frame};
use nrpl_core::pipeline::FunctionRegistry;
use nrpl_core::sim::Simulation;
use nrpl_core::vehicle::VehicleParams;
use wasm_bindgen::prelude::*;

/// Largest frame side the page may request.
const MAX_SIDE: u32 = 2048;
const MAX_STEPS: u32 = 20_000;

fn course(shape: &str, size: f64, spacing: f64) -> Result<Vec<(f64, f64)>, String> {
    match shape {
        "rect" => rect_course(size, spacing),
        "circle" => circle_course(size, spacing),
        other => return Err(format!("unknown course shape {other:?}")),
    }
    .map_err(|e| e.to_string())
}

fn course_config(waypoints: &[(f64, f64)], cruise_speed: f64) -> String {
    let pts: Vec<String> = waypoints.iter().map(|(x, y)| format!("[{x:?}, {y:?}]")).collect();
    format!(
        r#"{{
        "SimulationName": "browser_course",
        "SimulationTimeout": 0,
        "SimulationTimestep": 0.01,
        "EngineConfigs": [
            {{"EngineName": "vehicle", "EngineType": "vehicle_sim"}},
            {{"EngineName": "car_ctl_engine", "EngineType": "controller",
              "Extra": {{"Waypoints": [{}], "CruiseSpeed": {cruise_speed:?}}}}}
        ],
        "DataPackProcessingFunctions": [
            {{"Name": "state", "FunctionId": "state_tf", "LinkedEngine": "car_ctl_engine",
              "Inputs": [{{"Keyword": "state_gazebo", "DataPackName": "smart_car_link_plugin::base_link", "EngineName": "vehicle"}}]}},
            {{"Name": "motor_set", "FunctionId": "motor_set_tf", "LinkedEngine": "vehicle",
              "Inputs": [{{"Keyword": "actors", "DataPackName": "actors", "EngineName": "car_ctl_engine"}}]}}
        ]
    }}"#,
        pts.join(", ")
    )
}

/// Flattened `[t, x, y, yaw, ...]` rows of a closed-loop run.
pub fn drive_course(shape: &str, size: f64, spacing: f64, cruise_speed: f64, steps: u32) -> Result<Vec<f64>, String> {
    if steps > MAX_STEPS {
        return Err(format!("at most {MAX_STEPS} steps"));
    }
    if !(cruise_speed.is_finite() && cruise_speed > 0.0) {
        return Err("cruise speed must be positive".into());
    }
    let waypoints = course(shape, size, spacing)?;
    let cfg = parse_config(course_config(&waypoints, cruise_speed).as_bytes()).map_err(|e| e.to_string())?;
    let mut sim = Simulation::direct(
        &cfg,
        &EngineFactory::with_builtins(),
        &FunctionRegistry::with_builtins(),
    )
    .map_err(|e| e.to_string())?;
    for _ in 0..steps {
        sim.step().map_err(|e| e.to_string())?;
    }
    Ok(sim
        .trajectory()
        .iter()
        .flat_map(|r| [r.t_ns as f64 * 1e-9, r.x, r.y, r.yaw])
        .collect())
}

fn check_frame(width: u32, height: u32) -> Result<(), String> {
    if (8..=MAX_SIDE).contains(&width) && (8..=MAX_SIDE).contains(&height) {
        Ok(())
    } else {
        Err(format!("frame sides must be within 8..={MAX_SIDE}"))
    }
}

/// Box of the first detection in the rendered frame for `step`, as
/// `[x_min, y_min, x_max, y_max, score]`; empty when nothing is found.
pub fn detect_at(step: u32, width: u32, height: u32, threshold: u8) -> Result<Vec<f64>, String> {
    check_frame(width, height)?;
    let frame = render_frame(u64::from(step), width, height);
    let found = detect_stub(&frame, threshold).map_err(|e| e.to_string())?;
    Ok(found
        .first()
        .map(|d| {
            vec![
                f64::from(d.x_min),
                f64::from(d.y_min),
                f64::from(d.x_max),
                f64::from(d.y_max),
                d.score,
            ]
        })
        .unwrap_or_default())
}

#[wasm_bindgen(js_name = courseWaypoints)]
pub fn course_waypoints(shape: &str, size: f64, spacing: f64) -> Result<Vec<f64>, JsError> {
    let pts = course(shape, size, spacing).map_err(|e| JsError::new(&e))?;
    Ok(pts.into_iter().flat_map(|(x, y)| [x, y]).collect())
}

#[wasm_bindgen(js_name = runCourse)]
pub fn run_course(shape: &str, size: f64, spacing: f64, cruise_speed: f64, steps: u32) -> Result<Vec<f64>, JsError> {
    drive_course(shape, size, spacing, cruise_speed, steps).map_err(|e| JsError::new(&e))
}

/// Left and right wheel angles for a bicycle steering angle on the default
/// vehicle.
#[wasm_bindgen(js_name = ackermann)]
pub fn ackermann(delta: f64) -> Vec<f64> {
    let p = VehicleParams::default();
    let (l, r) = ackermann_split(delta, p.wheelbase, p.track);
    vec![l, r]
}

/// `[wheelbase, track, max_steer]` of the default vehicle.
#[wasm_bindgen(js_name = vehicleGeometry)]
pub fn vehicle_geometry() -> Vec<f64> {
    let p = VehicleParams::default();
    vec![p.wheelbase, p.track, p.max_steer]
}

/// RGBA pixels of the synthetic camera frame, ready for `ImageData`.
#[wasm_bindgen(js_name = renderRgba)]
pub fn render_rgba(step: u32, width: u32, height: u32) -> Result<Vec<u8>, JsError> {
    check_frame(width, height).map_err(|e| JsError::new(&e))?;
    let frame = render_frame(u64::from(step), width, height);
    Ok(frame
        .image_data
        .chunks_exact(3)
        .flat_map(|px| [px[0], px[1], px[2], 255])
        .collect())
}

#[wasm_bindgen(js_name = detect)]
pub fn detect(step: u32, width: u32, height: u32, threshold: u8) -> Result<Vec<f64>, JsError> {
    detect_at(step, width, height, threshold).map_err(|e| JsError::new(&e))
}

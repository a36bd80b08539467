//! Run artifacts: trajectory and detection CSVs plus a metrics document.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value as Json};

use crate::sim::SimulationReport;
use crate::transport::Codec;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const DETECTIONS_FILE: &str = "detections.csv";

pub fn trace_hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

pub fn trajectory_csv(report: &SimulationReport) -> String {
    let mut s = String::from("t,x,y,yaw\n");
    for r in &report.trajectory {
        s.push_str(&format!("{},{},{},{}\n", r.t_ns as f64 * 1e-9, r.x, r.y, r.yaw));
    }
    s
}

/// One row per step the detection sink saw; steps without a detection keep
/// empty box fields.
pub fn detections_csv(report: &SimulationReport) -> String {
    let mut s = String::from("step,x_min,y_min,x_max,y_max,score\n");
    for r in &report.detections {
        match &r.detection {
            Some(d) => s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step, d.x_min, d.y_min, d.x_max, d.y_max, d.score
            )),
            None => s.push_str(&format!("{},,,,,\n", r.step)),
        }
    }
    s
}

pub fn metrics_json(report: &SimulationReport) -> Json {
    let mut per_engine = Map::new();
    for name in report.engine_step_latency.keys() {
        per_engine.insert(
            name.clone(),
            json!({
                "p50": report.engine_step_ms(name, 50.0),
                "p95": report.engine_step_ms(name, 95.0),
            }),
        );
    }
    let mut teardown = Map::new();
    for (name, t) in &report.teardown {
        teardown.insert(
            name.clone(),
            json!({ "forced": t.forced, "elapsed_ms": t.elapsed.as_secs_f64() * 1e3 }),
        );
    }
    let bytes_for = |c: Codec| (report.codec == Some(c)).then_some(report.bytes_moved);
    json!({
        "simulation_name": report.simulation_name,
        "codec": report.codec.map(Codec::as_str),
        "steps": report.steps,
        "timestep_s": report.timestep_ns as f64 * 1e-9,
        "sim_time_s": report.sim_time_ns as f64 * 1e-9,
        "wall_time_s": report.wall_time.as_secs_f64(),
        "loop_fps": report.loop_fps(),
        "real_time_factor": report.real_time_factor(),
        "per_engine_step_ms": per_engine,
        "bytes_text": bytes_for(Codec::Text),
        "bytes_binary": bytes_for(Codec::Binary),
        "trace_hash": trace_hash_hex(report.trace_hash),
        "exit_reason": report.exit_reason.as_str(),
        "fault": report.fault,
        "teardown": teardown,
    })
}

/// Writes `contents` next to `path` under a temporary name, then renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(contents)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)
}

/// Writes the three run artifacts into `dir`, creating it if needed.
pub fn export_report(report: &SimulationReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut metrics = serde_json::to_vec_pretty(&metrics_json(report)).map_err(std::io::Error::other)?;
    metrics.push(b'\n');
    let files = [
        (TRAJECTORY_FILE, trajectory_csv(report).into_bytes()),
        (METRICS_FILE, metrics),
        (DETECTIONS_FILE, detections_csv(report).into_bytes()),
    ];
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        write_atomic(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}

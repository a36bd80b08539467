use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};

use nrpl_core::bench::{csv_row, measure_throughput, CAMERA_FRAME_BYTES, CSV_HEADER};
use nrpl_core::config::{load_config, EngineConfig};
use nrpl_core::course::{circle_course, rect_course, write_trajectory};
use nrpl_core::doc::doc_from_json;
use nrpl_core::engine::{serve_tcp, EngineError, EngineFactory};
use nrpl_core::pipeline::FunctionRegistry;
use nrpl_core::report::{export_report, trace_hash_hex};
use nrpl_core::sim::{steps_for, SimError, Simulation};
use nrpl_core::Codec;

const EXIT_CONFIG: u8 = 1;
const EXIT_FAULT: u8 = 2;

#[derive(Parser)]
#[command(name = "nrpl", version, about = "Fixed-timestep co-simulation runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecArg {
    Text,
    Binary,
}

impl From<CodecArg> for Codec {
    fn from(c: CodecArg) -> Self {
        match c {
            CodecArg::Text => Codec::Text,
            CodecArg::Binary => Codec::Binary,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Rect,
    Circle,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation config and write trajectory, metrics and detections.
    Run {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "binary")]
        codec: CodecArg,
        #[arg(long, default_value = "nrpl_out")]
        out: PathBuf,
    },
    /// Compare text and binary codec throughput over loopback TCP; CSV on stdout.
    BenchTransport {
        #[arg(long, value_delimiter = ',', default_values_t = [CAMERA_FRAME_BYTES])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        iters: u32,
    },
    /// Write a densified waypoint course as x,y CSV.
    GenTrajectory {
        #[arg(long, value_enum)]
        shape: Shape,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        /// Side length of the square, or circle radius, in meters.
        #[arg(long, default_value_t = 20.0)]
        size: f64,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Serve one engine over TCP; started by `run` for subprocess engines.
    #[command(hide = true)]
    Engine {
        #[arg(long)]
        port: u16,
        #[arg(long)]
        engine_name: String,
        #[arg(long, value_enum)]
        codec: CodecArg,
        #[arg(long, env = "NRPL_ENGINE_TYPE")]
        engine_type: String,
        /// Fail the given run_loop call (0-based).
        #[arg(long)]
        fault_at_step: Option<u64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NRPL_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, codec, out } => return cmd_run(&config, codec.into(), &out),
        Command::BenchTransport { sizes, iters } => cmd_bench(&sizes, iters),
        Command::GenTrajectory {
            shape,
            spacing,
            size,
            out,
        } => cmd_gen(shape, spacing, size, out),
        Command::Engine {
            port,
            engine_name,
            codec,
            engine_type,
            fault_at_step,
        } => cmd_engine(port, engine_name, codec.into(), engine_type, fault_at_step),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn is_config_error(e: &SimError) -> bool {
    match e {
        SimError::Config(_) | SimError::Wiring(_) => true,
        SimError::Launch(l) => matches!(
            l,
            EngineError::UnsupportedEngineType { .. } | EngineError::UnknownEngineType { .. }
        ),
        SimError::Engine { .. } | SimError::Pipeline { .. } => false,
    }
}

fn cmd_run(config: &std::path::Path, codec: Codec, out: &std::path::Path) -> ExitCode {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        if let Err(e) = ctrlc::set_handler(move || stop.store(true, Ordering::Relaxed)) {
            error!("cannot install signal handler: {e}");
        }
    }
    let sim = match Simulation::launch(
        &cfg,
        codec,
        &EngineFactory::with_builtins(),
        &FunctionRegistry::with_builtins(),
    ) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(if is_config_error(&e) { EXIT_CONFIG } else { EXIT_FAULT });
        }
    };
    let report = sim.run(steps_for(cfg.simulation_timeout, cfg.timestep_ns()), Some(&stop));
    if let Err(e) = export_report(&report, out) {
        eprintln!("error: cannot write report to {}: {e}", out.display());
        return ExitCode::from(EXIT_FAULT);
    }
    info!("artifacts written to {}", out.display());
    eprintln!(
        "{}: {} steps, {:.3} s sim, {} ({}), trace {}, fps {}",
        report.simulation_name,
        report.steps,
        report.sim_time_ns as f64 * 1e-9,
        report.exit_reason.as_str(),
        codec,
        trace_hash_hex(report.trace_hash),
        report.loop_fps().map_or("n/a".into(), |f| format!("{f:.1}")),
    );
    for (engine, t) in &report.teardown {
        if t.forced {
            eprintln!("warning: engine {engine} had to be killed after {:?}", t.elapsed);
        }
    }
    if let Some(f) = &report.fault {
        eprintln!("error: {f}");
    }
    if report.exit_reason.is_fault() {
        ExitCode::from(EXIT_FAULT)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_bench(sizes: &[usize], iters: u32) -> anyhow::Result<()> {
    if iters == 0 {
        bail!("--iters must be at least 1");
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{CSV_HEADER}")?;
    for &size in sizes {
        let mut rates = Vec::new();
        for codec in [Codec::Text, Codec::Binary] {
            let t = measure_throughput(codec, size, iters).with_context(|| format!("{codec} codec, {size} bytes"))?;
            writeln!(stdout, "{}", csv_row(&t))?;
            rates.push(t.bytes_per_sec());
        }
        eprintln!("{size} bytes: binary/text throughput ratio {:.2}", rates[1] / rates[0]);
    }
    Ok(())
}

fn cmd_gen(shape: Shape, spacing: f64, size: f64, out: Option<PathBuf>) -> anyhow::Result<()> {
    let course = match shape {
        Shape::Rect => rect_course(size, spacing),
        Shape::Circle => circle_course(size, spacing),
    }?;
    match out {
        Some(path) => {
            let f = std::fs::File::create(&path).with_context(|| path.display().to_string())?;
            write_trajectory(&course, f)?;
        }
        None => write_trajectory(&course, std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_engine(
    port: u16,
    engine_name: String,
    codec: Codec,
    engine_type: String,
    fault_at_step: Option<u64>,
) -> anyhow::Result<()> {
    let mut cfg = EngineConfig::new(engine_name.as_str(), engine_type.as_str());
    if let Ok(raw) = std::env::var("NRPL_ENGINE_EXTRA") {
        let json: serde_json::Value = serde_json::from_str(&raw).context("NRPL_ENGINE_EXTRA is not JSON")?;
        let Some(obj) = json.as_object() else {
            bail!("NRPL_ENGINE_EXTRA must be a JSON object");
        };
        cfg.extra = doc_from_json(obj).map_err(anyhow::Error::msg)?;
    }
    if let Some(n) = fault_at_step {
        cfg.extra
            .insert("FaultAtStep".into(), nrpl_core::doc::Value::Int(i64::try_from(n)?));
    }
    let script = EngineFactory::with_builtins().create(&cfg)?;
    serve_tcp(&engine_name, script, port, codec)?;
    Ok(())
}

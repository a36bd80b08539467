//! The fixed-timestep loop: steps engines in lockstep, moves datapacks
//! through the function pipeline, and records what happened.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hasher;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use fnv::FnvHasher;
use log::{info, warn};
use thiserror::Error;

use crate::config::{ConfigError, SimulationConfig};
use crate::datapack::{DataPack, DataPackCache, DataPackId, Payload};
use crate::engine::{launch_engine, EngineError, EngineFactory, EngineHandle, Teardown, SHUTDOWN_GRACE};
use crate::geometry::quaternion_to_yaw;
use crate::perception::Detection;
use crate::pipeline::{
    build_specs, execute_function, pipeline_order, FunctionRegistry, FunctionSpec, PipelineError, Routed, SinkRecord,
    WiringError,
};
use crate::transport::{datapack_bytes, Codec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Wiring(#[from] WiringError),
    #[error("launch failed: {0}")]
    Launch(#[source] EngineError),
    #[error("step {step}: {source}")]
    Engine {
        step: u64,
        #[source]
        source: EngineError,
    },
    #[error("step {step}: {source}")]
    Pipeline {
        step: u64,
        #[source]
        source: PipelineError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    Completed,
    Stopped,
    EngineFault,
    FunctionFault,
}

impl ExitReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitReason::Completed => "completed",
            ExitReason::Stopped => "stopped",
            ExitReason::EngineFault => "engine_fault",
            ExitReason::FunctionFault => "function_fault",
        }
    }

    pub fn is_fault(self) -> bool {
        matches!(self, ExitReason::EngineFault | ExitReason::FunctionFault)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t_ns: u64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub step: u64,
    pub detection: Option<Detection>,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub simulation_name: String,
    /// `None` when engines were called directly without a codec.
    pub codec: Option<Codec>,
    pub steps: u64,
    pub timestep_ns: u64,
    pub sim_time_ns: u64,
    pub wall_time: Duration,
    pub trace_hash: u64,
    pub exit_reason: ExitReason,
    pub fault: Option<String>,
    pub trajectory: Vec<TrajectoryRow>,
    pub detections: Vec<DetectionRow>,
    /// Wall time of each RunStep round trip, per engine.
    pub engine_step_latency: BTreeMap<String, Vec<Duration>>,
    pub bytes_moved: u64,
    pub teardown: Vec<(String, Teardown)>,
}

impl SimulationReport {
    pub fn real_time_factor(&self) -> Option<f64> {
        (self.steps > 0 && !self.wall_time.is_zero())
            .then(|| self.sim_time_ns as f64 * 1e-9 / self.wall_time.as_secs_f64())
    }

    pub fn loop_fps(&self) -> Option<f64> {
        (self.steps > 0 && !self.wall_time.is_zero()).then(|| self.steps as f64 / self.wall_time.as_secs_f64())
    }

    /// Nearest-rank percentile of one engine's step latency, in ms.
    pub fn engine_step_ms(&self, engine: &str, percentile: f64) -> Option<f64> {
        let samples = self.engine_step_latency.get(engine)?;
        if samples.is_empty() {
            return None;
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let rank = ((percentile / 100.0) * ms.len() as f64).ceil().max(1.0) as usize;
        Some(ms[rank.min(ms.len()) - 1])
    }
}

/// Number of loop steps needed to cover `timeout_s`; `None` for "run until
/// stopped".
pub fn steps_for(timeout_s: u64, timestep_ns: u64) -> Option<u64> {
    (timeout_s > 0).then(|| (timeout_s * 1_000_000_000).div_ceil(timestep_ns))
}

/// A running simulation. Engines are held in ascending name order.
pub struct Simulation {
    name: String,
    codec: Option<Codec>,
    engines: Vec<EngineHandle>,
    plan: Vec<FunctionSpec>,
    fetch_plan: Vec<(usize, Vec<DataPackId>)>,
    known_engines: BTreeSet<String>,
    cache: DataPackCache,
    dt_ns: u64,
    sim_time_ns: u64,
    step_index: u64,
    hasher: FnvHasher,
    timed: bool,
    wall_time: Duration,
    trajectory: Vec<TrajectoryRow>,
    detections: Vec<DetectionRow>,
    latency: Vec<Vec<Duration>>,
}

impl Simulation {
    fn prepare(
        cfg: &SimulationConfig,
        factory: &EngineFactory,
        registry: &FunctionRegistry,
    ) -> Result<Vec<FunctionSpec>, SimError> {
        if cfg.engine_configs.is_empty() {
            return Err(ConfigError::NoEngines.into());
        }
        for e in &cfg.engine_configs {
            factory.check(e).map_err(SimError::Launch)?;
        }
        Ok(build_specs(cfg, registry)?)
    }

    /// Validates `cfg`, then launches every engine over `codec`.
    pub fn launch(
        cfg: &SimulationConfig,
        codec: Codec,
        factory: &EngineFactory,
        registry: &FunctionRegistry,
    ) -> Result<Self, SimError> {
        let specs = Self::prepare(cfg, factory, registry)?;
        let mut engines = Vec::new();
        for e in sorted_engines(cfg) {
            engines.push(launch_engine(e, codec, factory).map_err(SimError::Launch)?);
        }
        Ok(Self::assemble(cfg, Some(codec), engines, specs, true))
    }

    /// Same loop with engines called in-thread and no codec; no wall-clock
    /// metrics are taken.
    pub fn direct(
        cfg: &SimulationConfig,
        factory: &EngineFactory,
        registry: &FunctionRegistry,
    ) -> Result<Self, SimError> {
        let specs = Self::prepare(cfg, factory, registry)?;
        let engines = sorted_engines(cfg)
            .map(|e| EngineHandle::direct(e, factory))
            .collect::<Result<Vec<_>, _>>()
            .map_err(SimError::Launch)?;
        Ok(Self::assemble(cfg, None, engines, specs, false))
    }

    fn assemble(
        cfg: &SimulationConfig,
        codec: Option<Codec>,
        engines: Vec<EngineHandle>,
        specs: Vec<FunctionSpec>,
        timed: bool,
    ) -> Self {
        let plan: Vec<FunctionSpec> = pipeline_order(&specs).into_iter().cloned().collect();
        let mut wanted: BTreeMap<&str, BTreeSet<DataPackId>> = BTreeMap::new();
        for spec in &plan {
            for (_, id) in &spec.inputs {
                wanted.entry(id.engine_name.as_str()).or_default().insert(id.clone());
            }
        }
        let fetch_plan = engines
            .iter()
            .enumerate()
            .filter_map(|(i, h)| wanted.get(h.name()).map(|ids| (i, ids.iter().cloned().collect())))
            .collect();
        let known_engines = engines.iter().map(|h| h.name().to_owned()).collect();
        let latency = vec![Vec::new(); engines.len()];
        Self {
            name: cfg.simulation_name.clone(),
            codec,
            engines,
            plan,
            fetch_plan,
            known_engines,
            cache: DataPackCache::new(),
            dt_ns: cfg.timestep_ns(),
            sim_time_ns: 0,
            step_index: 0,
            hasher: FnvHasher::default(),
            timed,
            wall_time: Duration::ZERO,
            trajectory: Vec::new(),
            detections: Vec::new(),
            latency,
        }
    }

    pub fn sim_time_ns(&self) -> u64 {
        self.sim_time_ns
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn trace_hash(&self) -> u64 {
        self.hasher.finish()
    }

    pub fn trajectory(&self) -> &[TrajectoryRow] {
        &self.trajectory
    }

    pub fn detections(&self) -> &[DetectionRow] {
        &self.detections
    }

    pub fn engine_names(&self) -> impl Iterator<Item = &str> {
        self.engines.iter().map(EngineHandle::name)
    }

    fn now(&self) -> Option<Instant> {
        self.timed.then(Instant::now)
    }

    fn absorb(&mut self, dp: &DataPack) {
        self.hasher.write(&datapack_bytes(dp));
    }

    /// One loop iteration: run due engines, fetch, run functions, deliver.
    pub fn step(&mut self) -> Result<(), SimError> {
        let step = self.step_index;
        let started = self.now();
        let until = self.sim_time_ns + self.dt_ns;

        for (i, h) in self.engines.iter_mut().enumerate() {
            if h.engine_time_ns() < until {
                let t0 = self.timed.then(Instant::now);
                h.run_step(until).map_err(|source| SimError::Engine { step, source })?;
                if let Some(t0) = t0 {
                    self.latency[i].push(t0.elapsed());
                }
            }
        }

        let mut fetched: BTreeMap<DataPackId, DataPack> = BTreeMap::new();
        let mut link = None;
        for (i, ids) in &self.fetch_plan {
            let packs = self.engines[*i]
                .get_datapacks(ids)
                .map_err(|source| SimError::Engine { step, source })?;
            for dp in packs {
                self.hasher.write(&datapack_bytes(&dp));
                if link.is_none() {
                    if let Some(Payload::LinkState(s)) = dp.payload() {
                        link = Some(*s);
                    }
                }
                fetched.insert(dp.id().clone(), dp);
            }
        }

        let mut outgoing: BTreeMap<String, Vec<DataPack>> = BTreeMap::new();
        for spec in &self.plan {
            let out = execute_function(spec, &self.cache, &fetched, &self.known_engines, step, self.sim_time_ns)
                .map_err(|source| SimError::Pipeline { step, source })?;
            match out.routed {
                Routed::ToCache(dps) => dps.into_iter().for_each(|dp| self.cache.store(dp)),
                Routed::ToEngines(dps) => {
                    for dp in dps {
                        outgoing.entry(dp.engine_name().to_owned()).or_default().push(dp);
                    }
                }
            }
            for SinkRecord::Detection { step, detection } in out.records {
                self.detections.push(DetectionRow { step, detection });
            }
        }

        for (engine, packs) in outgoing {
            for dp in &packs {
                self.absorb(dp);
            }
            let h = self
                .engines
                .iter_mut()
                .find(|h| h.name() == engine)
                .expect("routing only targets known engines");
            h.set_datapacks(packs)
                .map_err(|source| SimError::Engine { step, source })?;
        }

        self.sim_time_ns = until;
        self.step_index += 1;
        if let Some(s) = link {
            self.trajectory.push(TrajectoryRow {
                t_ns: self.sim_time_ns,
                x: s.pos[0],
                y: s.pos[1],
                yaw: quaternion_to_yaw(s.rot).unwrap_or(f64::NAN),
            });
        }
        if let Some(t) = started {
            self.wall_time += t.elapsed();
        }
        Ok(())
    }

    /// Steps until `max_steps` (or forever when `None`) unless `stop` is
    /// raised or a fault occurs, then shuts every engine down.
    pub fn run(mut self, max_steps: Option<u64>, stop: Option<&AtomicBool>) -> SimulationReport {
        let mut exit_reason = ExitReason::Completed;
        let mut fault = None;
        while max_steps.is_none_or(|m| self.step_index < m) {
            if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
                exit_reason = ExitReason::Stopped;
                break;
            }
            if let Err(e) = self.step() {
                warn!("simulation {} aborted: {e}", self.name);
                exit_reason = match e {
                    SimError::Pipeline { .. } => ExitReason::FunctionFault,
                    _ => ExitReason::EngineFault,
                };
                fault = Some(e.to_string());
                break;
            }
        }
        info!(
            "simulation {} ended after {} steps ({})",
            self.name,
            self.step_index,
            exit_reason.as_str()
        );
        self.finish(exit_reason, fault)
    }

    /// Shuts all engines down and produces the report.
    pub fn finish(mut self, exit_reason: ExitReason, fault: Option<String>) -> SimulationReport {
        let bytes_moved = self.engines.iter().map(EngineHandle::bytes_moved).sum();
        let teardown = self
            .engines
            .iter_mut()
            .map(|h| (h.name().to_owned(), h.shutdown(SHUTDOWN_GRACE)))
            .collect();
        let engine_step_latency = self
            .engines
            .iter()
            .map(|h| h.name().to_owned())
            .zip(std::mem::take(&mut self.latency))
            .collect();
        SimulationReport {
            simulation_name: self.name.clone(),
            codec: self.codec,
            steps: self.step_index,
            timestep_ns: self.dt_ns,
            sim_time_ns: self.sim_time_ns,
            wall_time: self.wall_time,
            trace_hash: self.hasher.finish(),
            exit_reason,
            fault,
            trajectory: std::mem::take(&mut self.trajectory),
            detections: std::mem::take(&mut self.detections),
            engine_step_latency,
            bytes_moved,
            teardown,
        }
    }
}

fn sorted_engines(cfg: &SimulationConfig) -> impl Iterator<Item = &crate::config::EngineConfig> {
    let mut v: Vec<_> = cfg.engine_configs.iter().collect();
    v.sort_by(|a, b| a.engine_name.cmp(&b.engine_name));
    v.into_iter()
}

/// Launches, runs for the configured timeout (or until `stop`), and tears
/// down.
pub fn run_simulation(
    cfg: &SimulationConfig,
    codec: Codec,
    stop: Option<&AtomicBool>,
) -> Result<SimulationReport, SimError> {
    let sim = Simulation::launch(
        cfg,
        codec,
        &EngineFactory::with_builtins(),
        &FunctionRegistry::with_builtins(),
    )?;
    let max = steps_for(cfg.simulation_timeout, cfg.timestep_ns());
    Ok(sim.run(max, stop))
}

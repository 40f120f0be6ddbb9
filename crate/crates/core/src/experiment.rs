//! Batch runs over instances, algorithms, noise levels and seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{parse_map, GridMap, MapError};
use crate::instance::{generate_instance, plan_tasks, InstanceError, MapClass};
use crate::kinodynamics::{build_primitives, DriveKind, ModelError, RobotModel};
use crate::ktpg::{run_ktpg, UncertaintyError, UncertaintyModel};
use crate::plan::{ideal_time_sum, parse_plan, validate_plan, MapfPlan, PlanParseError};
use crate::scenario::{parse_scenario, validate_tasks, ScenarioError};
use crate::sim::{
    check_trace, compute_metrics, execute_profiles, run_adg_baseline, AdgConfig, ExecutionTrace,
    NoiseModel, RunStats,
};
use crate::tpg::{build_tpg, TpgError};
use crate::window::{run_execution_loop, LoopLimits, WindowConfig, WindowError};

/// First line of every results CSV.
pub const CSV_HEADER_COMMENT: &str = "# winktpg-results v1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Plan(#[from] PlanParseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error("plan has collisions: {0:?}")]
    InvalidPlan(crate::plan::PlanCollision),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// One-shot plan without margins, executed open loop.
    Ktpg,
    /// One-shot plan with safety margins, executed open loop.
    Ktpgu,
    /// Windowed replanning with safety margins.
    Winktpg,
    /// Action-dependency-graph baseline.
    Adg,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ktpg => "ktpg",
            Algorithm::Ktpgu => "ktpgu",
            Algorithm::Winktpg => "winktpg",
            Algorithm::Adg => "adg",
        }
    }

    /// Whether traces must be collision-free at this noise level.
    pub fn guarantees_safety(self, eps: f64) -> bool {
        eps == 0.0 || self == Algorithm::Adg
    }
}

/// Parameters of one execution run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub robot: DriveKind,
    pub eps: f64,
    pub p_d: f64,
    pub window: WindowConfig,
    pub seed: u64,
    /// Wall-clock limit (s).
    pub time_limit: f64,
}

impl RunConfig {
    pub fn model(&self) -> RobotModel {
        match self.robot {
            DriveKind::Omnidirectional => RobotModel::omnidirectional(),
            DriveKind::DifferentialDrive => RobotModel::differential_drive(),
        }
    }
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub success: bool,
    pub t_sum: f64,
    pub t_ideal: f64,
    pub suboptimality: f64,
    pub makespan: f64,
    pub windows: usize,
    pub ktpg_iterations: usize,
    pub planner_calls: usize,
    pub overlaps: usize,
    pub order_violations: usize,
    /// Total planning wall-clock time (s).
    pub runtime: f64,
    /// Longest single planning round (s).
    pub max_round_runtime: f64,
    pub error: Option<String>,
}

/// Trace and statistics, or the reason the run failed.
fn execute(
    plan: &MapfPlan,
    cfg: &RunConfig,
) -> Result<(ExecutionTrace, RunStats, crate::tpg::Tpg), String> {
    let tpg = build_tpg(plan).map_err(|e: TpgError| e.to_string())?;
    let prims = build_primitives(&cfg.model()).map_err(|e| e.to_string())?;
    let n = tpg.num_agents();
    let noise = NoiseModel::uniform(n, cfg.eps, cfg.seed);
    let uncertainty = UncertaintyModel::uniform(n, cfg.eps, cfg.p_d).map_err(|e| e.to_string())?;
    let (trace, stats) = match cfg.algorithm {
        Algorithm::Ktpg | Algorithm::Ktpgu => {
            let t0 = Instant::now();
            let u = (cfg.algorithm == Algorithm::Ktpgu).then_some(&uncertainty);
            let out = run_ktpg(&tpg, &prims, u, None).map_err(|e| e.to_string())?;
            let runtime = t0.elapsed().as_secs_f64();
            if runtime > cfg.time_limit {
                return Err(format!("planning exceeded {} s", cfg.time_limit));
            }
            let trace = execute_profiles(tpg.chains().to_vec(), &out.profiles, noise)
                .map_err(|e| e.to_string())?;
            let stats = RunStats {
                rounds: 1,
                planner_calls: out.planner_calls,
                ktpg_iterations: out.iterations,
                round_runtimes: vec![runtime],
            };
            (trace, stats)
        }
        Algorithm::Winktpg => run_execution_loop(
            &tpg,
            &prims,
            Some(&uncertainty),
            cfg.window,
            noise,
            LoopLimits {
                time_limit: cfg.time_limit,
                ..LoopLimits::default()
            },
        )
        .map_err(|e| e.to_string())?,
        Algorithm::Adg => run_adg_baseline(
            &tpg,
            &prims,
            noise,
            AdgConfig {
                time_limit: cfg.time_limit,
                ..AdgConfig::default()
            },
        )
        .map_err(|e| e.to_string())?,
    };
    Ok((trace, stats, tpg))
}

/// Runs `plan` once and scores the trace. Returns the trace when the run
/// completed.
pub fn run_once(plan: &MapfPlan, cfg: &RunConfig) -> (RunResult, Option<ExecutionTrace>) {
    let t_ideal = ideal_time_sum(plan, &cfg.model()).unwrap_or(f64::NAN);
    match execute(plan, cfg) {
        Ok((trace, stats, tpg)) => {
            let m = compute_metrics(&trace, t_ideal);
            let report = check_trace(&trace, &tpg);
            let result = RunResult {
                success: m.success,
                t_sum: m.t_sum,
                t_ideal,
                suboptimality: m.suboptimality,
                makespan: m.makespan,
                windows: stats.rounds,
                ktpg_iterations: stats.ktpg_iterations,
                planner_calls: stats.planner_calls,
                overlaps: report.overlaps.len(),
                order_violations: report.order_violations.len(),
                runtime: stats.total_runtime(),
                max_round_runtime: stats.max_round_runtime(),
                error: None,
            };
            (result, Some(trace))
        }
        Err(e) => (
            RunResult {
                success: false,
                t_sum: f64::NAN,
                t_ideal,
                suboptimality: f64::NAN,
                makespan: f64::NAN,
                windows: 0,
                ktpg_iterations: 0,
                planner_calls: 0,
                overlaps: 0,
                order_violations: 0,
                runtime: 0.0,
                max_round_runtime: 0.0,
                error: Some(e),
            },
            None,
        ),
    }
}

/// Where instances come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InstanceSource {
    /// A fixed plan file on a map file.
    Plan { map: PathBuf, plan: PathBuf },
    /// The first agents of a scenario file, planned with the built-in planner.
    Scenario { map: PathBuf, scen: PathBuf },
    /// Random tasks on a map file, one instance per seed.
    MapFile(PathBuf),
    /// Random tasks on a generated map, one map and instance per seed.
    Generated(MapClass),
}

/// Full experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: InstanceSource,
    pub agents: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub robot: DriveKind,
    pub eps: Vec<f64>,
    pub p_d: f64,
    pub window: WindowConfig,
    pub seeds: Vec<u64>,
    pub time_limit: f64,
    pub out_dir: PathBuf,
    pub write_traces: bool,
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance: String,
    pub agents: usize,
    pub algorithm: Algorithm,
    pub robot: DriveKind,
    pub eps: f64,
    pub p_d: f64,
    pub t_e: f64,
    pub t_p: usize,
    pub n_e: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub result: RunResult,
}

impl ResultRow {
    /// Collisions where the algorithm promises none.
    pub fn violates_invariants(&self) -> bool {
        self.algorithm.guarantees_safety(self.eps)
            && (self.result.overlaps > 0 || self.result.order_violations > 0)
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_map(path: &Path) -> Result<GridMap, ConfigError> {
    Ok(parse_map(&read(path)?)?)
}

/// Resolves `(instance name, plan)` for an agent count and seed.
pub fn load_instance(
    source: &InstanceSource,
    agents: usize,
    seed: u64,
) -> Result<(String, MapfPlan), ConfigError> {
    let instance_err = |e: InstanceError| ConfigError::Invalid(e.to_string());
    match source {
        InstanceSource::Plan { map, plan } => {
            let grid = load_map(map)?;
            let mut p = parse_plan(&read(plan)?, &grid)?;
            if agents < p.num_agents() {
                p.paths.truncate(agents);
            } else if agents > p.num_agents() {
                return Err(ConfigError::Invalid(format!(
                    "plan has {} agents, {agents} requested",
                    p.num_agents()
                )));
            }
            if let Some(c) = validate_plan(&p).collisions.first() {
                return Err(ConfigError::InvalidPlan(*c));
            }
            Ok((plan.display().to_string(), p))
        }
        InstanceSource::Scenario { map, scen } => {
            let grid = load_map(map)?;
            let tasks = parse_scenario(&read(scen)?, agents)?;
            validate_tasks(&tasks, &grid)?;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let inst = plan_tasks(&grid, tasks, &mut rng).map_err(instance_err)?;
            Ok((scen.display().to_string(), inst.plan))
        }
        InstanceSource::MapFile(map) => {
            let grid = load_map(map)?;
            let inst = generate_instance(&grid, agents, seed).map_err(instance_err)?;
            Ok((format!("{}#{seed}", map.display()), inst.plan))
        }
        InstanceSource::Generated(class) => {
            let grid = class.generate(seed);
            let inst = generate_instance(&grid, agents, seed).map_err(instance_err)?;
            let name = serde_json::to_value(class).expect("class serializes");
            Ok((format!("{}#{seed}", name.as_str().unwrap_or("map")), inst.plan))
        }
    }
}

/// Runs the whole grid, rows in parallel, in deterministic row order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ConfigError> {
    UncertaintyModel::uniform(1, 0.0, cfg.p_d)?;
    if cfg.eps.iter().any(|e| !(*e >= 0.0)) {
        return Err(ConfigError::Invalid("noise levels must be non-negative".into()));
    }
    let mut instances = Vec::new();
    for &n in &cfg.agents {
        for &seed in &cfg.seeds {
            match load_instance(&cfg.source, n, seed) {
                Ok((name, plan)) => instances.push((n, seed, name, plan)),
                Err(ConfigError::Invalid(msg)) if !matches!(cfg.source, InstanceSource::Plan { .. }) => {
                    log::warn!("skipping {n} agents, seed {seed}: {msg}");
                }
                Err(e) => return Err(e),
            }
        }
    }
    let mut jobs = Vec::new();
    for (i, (n, seed, _, _)) in instances.iter().enumerate() {
        for &algorithm in &cfg.algorithms {
            for &eps in &cfg.eps {
                jobs.push((
                    i,
                    *n,
                    RunConfig {
                        algorithm,
                        robot: cfg.robot,
                        eps,
                        p_d: cfg.p_d,
                        window: cfg.window,
                        seed: *seed,
                        time_limit: cfg.time_limit,
                    },
                ));
            }
        }
    }
    let trace_dir = cfg.out_dir.join("traces");
    if cfg.write_traces {
        std::fs::create_dir_all(&trace_dir).map_err(|source| ConfigError::Io {
            path: trace_dir.clone(),
            source,
        })?;
    }
    let rows: Vec<ResultRow> = jobs
        .par_iter()
        .enumerate()
        .map(|(j, (i, n, rc))| {
            let (_, _, name, plan) = &instances[*i];
            log::info!("{name}: {} agents, {}, eps {}", n, rc.algorithm.name(), rc.eps);
            let (result, trace) = run_once(plan, rc);
            if let (true, Some(trace)) = (cfg.write_traces, trace) {
                let path = trace_dir.join(format!("row{j:05}.jsonl"));
                if let Err(e) = std::fs::write(&path, trace.to_json_lines()) {
                    log::warn!("{}: {e}", path.display());
                }
            }
            ResultRow {
                instance: name.clone(),
                agents: *n,
                algorithm: rc.algorithm,
                robot: rc.robot,
                eps: rc.eps,
                p_d: rc.p_d,
                t_e: rc.window.t_e,
                t_p: rc.window.t_p,
                n_e: rc.window.n_e,
                seed: rc.seed,
                result,
            }
        })
        .collect();
    Ok(rows)
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.6}")
    }
}

fn depth(t_p: usize) -> String {
    if t_p == usize::MAX {
        "inf".into()
    } else {
        t_p.to_string()
    }
}

/// Results table without timing columns, so identical runs give identical bytes.
pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "instance", "agents", "algorithm", "robot", "eps", "p_d", "t_e", "t_p", "n_e", "seed",
        "success", "t_sum", "t_ideal", "suboptimality", "makespan", "windows",
        "ktpg_iterations", "planner_calls", "overlaps", "order_violations", "error",
    ])
    .expect("in-memory write");
    for r in rows {
        let robot = match r.robot {
            DriveKind::Omnidirectional => "omni",
            DriveKind::DifferentialDrive => "diff",
        };
        w.write_record([
            r.instance.clone(),
            r.agents.to_string(),
            r.algorithm.name().to_string(),
            robot.to_string(),
            num(r.eps),
            num(r.p_d),
            num(r.t_e),
            depth(r.t_p),
            r.n_e.to_string(),
            r.seed.to_string(),
            r.result.success.to_string(),
            num(r.result.t_sum),
            num(r.result.t_ideal),
            num(r.result.suboptimality),
            num(r.result.makespan),
            r.result.windows.to_string(),
            r.result.ktpg_iterations.to_string(),
            r.result.planner_calls.to_string(),
            r.result.overlaps.to_string(),
            r.result.order_violations.to_string(),
            r.result.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
    format!("{CSV_HEADER_COMMENT}\n{body}")
}

/// Planning runtimes per row, in row order.
pub fn timings_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("row,algorithm,agents,seed,runtime_s,max_round_runtime_s\n");
    for (i, r) in rows.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{:.6},{:.6}",
            r.algorithm.name(),
            r.agents,
            r.seed,
            r.result.runtime,
            r.result.max_round_runtime
        )
        .expect("string write");
    }
    out
}

/// Rows as JSON with runtimes omitted.
pub fn results_json(rows: &[ResultRow]) -> String {
    let values: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).expect("row serializes");
            let obj = v.as_object_mut().expect("object");
            obj.remove("runtime");
            obj.remove("max_round_runtime");
            for key in ["t_e", "t_sum", "suboptimality", "makespan", "t_ideal"] {
                if let Some(x) = obj.get(key).and_then(|x| x.as_f64()) {
                    if !x.is_finite() {
                        obj.insert(key.into(), serde_json::Value::Null);
                    }
                }
            }
            if r.t_p == usize::MAX {
                obj.insert("t_p".into(), serde_json::Value::Null);
            }
            if r.t_e.is_infinite() {
                obj.insert("t_e".into(), serde_json::Value::Null);
            }
            v
        })
        .collect();
    serde_json::to_string_pretty(&values).expect("rows serialize")
}

/// Writes `results.csv`, `results.json` and `timings.csv` into `dir`.
pub fn write_results(dir: &Path, rows: &[ResultRow]) -> Result<(), ConfigError> {
    let io = |path: PathBuf| move |source| ConfigError::Io { path, source };
    std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
    for (name, body) in [
        ("results.csv", results_csv(rows)),
        ("results.json", results_json(rows)),
        ("timings.csv", timings_csv(rows)),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io(path.clone()))?;
    }
    Ok(())
}

/// Mean suboptimality over successful rows, NaN if there are none.
pub fn mean_suboptimality(rows: &[&RunResult]) -> f64 {
    let ok: Vec<f64> = rows
        .iter()
        .filter(|r| r.success)
        .map(|r| r.suboptimality)
        .collect();
    if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().sum::<f64>() / ok.len() as f64
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use winktpg::experiment::{
    load_map, run_experiment, write_results, Algorithm, ConfigError, ExperimentConfig,
    InstanceSource,
};
use winktpg::instance::{generate_instance, MapClass};
use winktpg::kinodynamics::DriveKind;
use winktpg::scenario::write_scenario;
use winktpg::window::WindowConfig;

#[derive(Parser)]
#[command(name = "winktpg", version, about = "Speed planning and robust execution of MAPF plans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write results.csv, results.json and timings.csv.
    Run(RunArgs),
    /// Generate a map (for map classes), scenario and plan.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Robot {
    Omni,
    Diff,
}

#[derive(Args)]
struct MapArgs {
    /// MovingAI map file.
    #[arg(long, conflicts_with = "map_class")]
    map: Option<PathBuf>,
    /// Generated map class, one map per seed.
    #[arg(long)]
    map_class: Option<MapClass>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    map: MapArgs,
    /// Scenario file; its first agents are planned with the built-in planner.
    #[arg(long, requires = "map", conflicts_with = "plan")]
    scen: Option<PathBuf>,
    /// Plan file with one timed path per agent.
    #[arg(long, requires = "map")]
    plan: Option<PathBuf>,
    /// Agent counts.
    #[arg(long, value_delimiter = ',', required = true)]
    agents: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "winktpg")]
    algo: Vec<Algorithm>,
    #[arg(long, value_enum, default_value = "diff")]
    robot: Robot,
    /// Noise levels (standard deviation per meter of travel).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    eps: Vec<f64>,
    /// Probability that a passing order survives the noise.
    #[arg(long, default_value_t = 0.99)]
    pd: f64,
    /// Replan period in seconds, or `inf`.
    #[arg(long, default_value = "2")]
    te: f64,
    /// Planning-window depth in vertices, or `inf`.
    #[arg(long, default_value = "20", value_parser = parse_depth)]
    tp: usize,
    /// Vertices kept from the previous profile at each replan.
    #[arg(long, default_value_t = 1)]
    ne: usize,
    /// Number of seeds, run as 0..N.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Wall-clock limit per run (s).
    #[arg(long, default_value_t = 300.0)]
    time_limit: f64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Also write one JSON-lines trace per row.
    #[arg(long)]
    traces: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    map: MapArgs,
    #[arg(long)]
    agents: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "instance")]
    out: PathBuf,
}

fn parse_depth(s: &str) -> Result<usize, String> {
    if s == "inf" {
        Ok(usize::MAX)
    } else {
        s.parse().map_err(|e| format!("{e}"))
    }
}

fn run(args: RunArgs) -> Result<bool, ConfigError> {
    let source = match (args.map.map, args.map.map_class, args.scen, args.plan) {
        (Some(map), None, None, Some(plan)) => InstanceSource::Plan { map, plan },
        (Some(map), None, Some(scen), None) => InstanceSource::Scenario { map, scen },
        (Some(map), None, None, None) => InstanceSource::MapFile(map),
        (None, Some(class), None, None) => InstanceSource::Generated(class),
        _ => return Err(ConfigError::Invalid("give --map or --map-class".into())),
    };
    let cfg = ExperimentConfig {
        source,
        agents: args.agents,
        algorithms: args.algo,
        robot: match args.robot {
            Robot::Omni => DriveKind::Omnidirectional,
            Robot::Diff => DriveKind::DifferentialDrive,
        },
        eps: args.eps,
        p_d: args.pd,
        window: WindowConfig::new(args.te, args.tp, args.ne)?,
        seeds: (0..args.seeds).collect(),
        time_limit: args.time_limit,
        out_dir: args.out.clone(),
        write_traces: args.traces,
    };
    let rows = run_experiment(&cfg)?;
    write_results(&args.out, &rows)?;
    let failed = rows.iter().filter(|r| !r.result.success).count();
    let unsafe_rows = rows.iter().filter(|r| r.violates_invariants()).count();
    println!(
        "{} rows, {failed} failed, {unsafe_rows} with collisions where none are allowed; results in {}",
        rows.len(),
        args.out.display()
    );
    Ok(failed == 0 && unsafe_rows == 0)
}

fn generate(args: GenerateArgs) -> Result<bool, ConfigError> {
    let (map, name) = match (args.map.map, args.map.map_class) {
        (Some(path), None) => {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
            (load_map(&path)?, name.unwrap_or_default())
        }
        (None, Some(class)) => (class.generate(args.seed), "map.map".to_string()),
        _ => return Err(ConfigError::Invalid("give --map or --map-class".into())),
    };
    let inst = generate_instance(&map, args.agents, args.seed)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let io = |path: PathBuf| move |source| ConfigError::Io { path, source };
    std::fs::create_dir_all(&args.out).map_err(io(args.out.clone()))?;
    let mut files = vec![
        ("instance.scen", write_scenario(&inst.tasks, &name, &map)),
        ("instance.plan", inst.plan.to_text()),
    ];
    if args.map.map_class.is_some() {
        files.push(("map.map", map.to_movingai()));
    }
    for (file, body) in files {
        let path = args.out.join(file);
        std::fs::write(&path, body).map_err(io(path.clone()))?;
    }
    println!("wrote {} agents to {}", args.agents, args.out.display());
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Generate(args) => generate(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

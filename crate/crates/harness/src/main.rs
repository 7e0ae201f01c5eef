use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oscnet::analysis::{
    chimera_index, default_lock_tolerance, lock_detect, mean_frequency, order_parameter, MetricTable,
    OrderParameterSeries,
};
use oscnet::SimTrace;
use oscnet_harness::config::{parse_config, ExperimentConfig, Mode};
use oscnet_harness::output;
use oscnet_harness::run::{build_params, build_topology, run_loop_design, run_once, Artifacts};
use oscnet_harness::sweep::{point_seed, run_sweep};
use oscnet_harness::HarnessError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "oscnet", version, about = "Coupled PLL oscillator network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration file (`section.key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep worker threads (defaults to the available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Design the loop filter and write the report and open-loop response.
    Design(Common),
    /// Closed-loop step response of the designed loop.
    Step(Common),
    /// Phase margin versus C2.
    Csweep(Common),
    /// Single delayed-Kuramoto run.
    SimKuramoto(Common),
    /// Single behavioral PLL network run.
    SimPll(Common),
    /// Parameter sweep over the config's grid.
    Sweep(Common),
    /// Synchronization metrics of an existing phase trace.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Trace CSV with `t,theta_*` (or `t,phase_*`) columns.
        trace: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            parse_config(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    output::prepare_dir(&dir, common.force)?;
    Ok(dir)
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn loop_design(common: &Common, which: &str) -> Result<(), HarnessError> {
    let cfg = load(common)?;
    let out = run_loop_design(&cfg)?;
    let Artifacts::LoopDesign(d) = &out.artifacts else {
        unreachable!("loop design returns loop artifacts")
    };
    let dir = out_dir(common, &cfg)?;
    let mut files = vec![output::write_file(&dir, "design.txt", &d.report)?];
    match which {
        "design" => files.extend(output::emit_bode(&dir, d)?),
        "step" => files.extend(output::emit_step(&dir, d)?),
        _ => files.extend(output::emit_c2_sweep(&dir, d)?),
    }
    report(&files);
    Ok(())
}

fn simulate(common: &Common, mode: Mode) -> Result<(), HarnessError> {
    let mut cfg = load(common)?;
    cfg.mode = mode;
    cfg.sweep = None;
    cfg.validate()?;
    // A single run reproduces grid point 0 of a sweep with the same base seed.
    let seed = point_seed(cfg.seed, 0);
    let out = run_once(&cfg, seed)?;
    let dir = out_dir(common, &cfg)?;
    report(&output::emit_run(&dir, &cfg, seed, &out)?);
    print!("{}", out.metrics.to_text());
    Ok(())
}

fn sweep(common: &Common) -> Result<(), HarnessError> {
    let cfg = load(common)?;
    if cfg.sweep.is_none() {
        return Err(HarnessError::Usage("the config defines no sweep.* grid".into()));
    }
    let workers = common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = run_sweep(&cfg, workers).map_err(|e| HarnessError::Usage(format!("worker pool: {e}")))?;
    let dir = out_dir(common, &cfg)?;
    report(&output::emit_sweep(&dir, &cfg, &result)?);
    if result.failures() > 0 {
        eprintln!(
            "{} of {} points failed; see summary.txt",
            result.failures(),
            result.rows.len()
        );
    }
    Ok(())
}

fn read_trace(path: &Path) -> Result<SimTrace, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    SimTrace::from_csv(&text, "theta")
        .or_else(|_| SimTrace::from_csv(&text, "phase"))
        .map_err(HarnessError::from)
}

fn analyze(common: &Common, trace_path: &Path) -> Result<(), HarnessError> {
    let trace = read_trace(trace_path)?;
    let n = trace.width();
    let mut table = MetricTable::default();

    let (t0, t1) = match (trace.times().first(), trace.times().last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        _ => return Err(oscnet::Error::InsufficientData("trace needs at least two samples".into()).into()),
    };
    let last = trace.last_row().expect("non-empty trace");
    let (r, psi) = order_parameter(last, None)?;
    table.push("final_r", "all", r);
    table.push("final_psi", "all", psi);
    let series = OrderParameterSeries::from_trace(&trace, None)?;
    let t_half = t0 + 0.5 * (t1 - t0);
    if let Some(m) = series.mean_r_after(t_half) {
        table.push("mean_r_second_half", "all", m);
    }
    for (i, w) in mean_frequency(&trace, t_half, t1)?.iter().enumerate() {
        table.push("mean_frequency_rad_s", i.to_string(), *w);
    }

    // Topology-aware metrics need the config that produced the trace.
    let cfg = if common.config.is_some() {
        Some(load(common)?)
    } else {
        None
    };
    if let Some(cfg) = cfg.as_ref().filter(|c| c.n_oscillators() == n) {
        let topology = build_topology(cfg, point_seed(cfg.seed, 0))?;
        let mut rng = ChaCha8Rng::seed_from_u64(point_seed(cfg.seed, 0));
        let params = build_params(cfg, &topology, &mut rng)?;
        let lock = lock_detect(&trace, default_lock_tolerance(&params), None)?;
        table.push("locked", "all", if lock.locked { 1.0 } else { 0.0 });
        table.push("chimera_index", "all", chimera_index(&trace, &topology, None)?);
    }

    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("analysis"));
    output::prepare_dir(&dir, common.force)?;
    report(&[output::write_file(&dir, "metrics.csv", &table.to_csv())?]);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design(c) => loop_design(c, "design"),
        Command::Step(c) => loop_design(c, "step"),
        Command::Csweep(c) => loop_design(c, "csweep"),
        Command::SimKuramoto(c) => simulate(c, Mode::Kuramoto),
        Command::SimPll(c) => simulate(c, Mode::Behavioral),
        Command::Sweep(c) => sweep(c),
        Command::Analyze { common, trace } => analyze(common, trace),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

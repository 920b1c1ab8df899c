use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orcs_core::bench::{self, ExperimentMatrix, RunStatus, Simulation};
use orcs_core::config::SimConfig;
use orcs_core::validate::run_validation;
use orcs_core::Error;

#[derive(Parser)]
#[command(
    name = "orcs",
    version,
    about = "Fixed-radius neighbor particle simulation and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its per-step CSV.
    Simulate(ConfigArgs),
    /// Run an experiment matrix, one CSV per cell plus summary.csv.
    Bench {
        /// Matrix file; list-valued keys: pdist, radius-dist, bc, engines, policy, n.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the built-in correctness checks.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write a particle snapshot: a `n L` header, then `x y z r` per line.
    Dump {
        /// Steps to simulate before writing.
        #[arg(long, default_value_t = 0)]
        after: u64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Every config key as a flag; flags override values from `--config`.
#[derive(Args, Default)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    /// Box side length L.
    #[arg(long = "box")]
    box_length: Option<String>,
    /// wall | periodic
    #[arg(long)]
    bc: Option<String>,
    /// bvh | cell | brute
    #[arg(long)]
    engine: Option<String>,
    /// list | perse | forces
    #[arg(long)]
    mode: Option<String>,
    /// gradient | fixed:K | avg
    #[arg(long)]
    policy: Option<String>,
    /// lattice | disordered | cluster[:sigma]
    #[arg(long)]
    pdist: Option<String>,
    /// const:r | uniform:lo:hi | lognormal[:mu:sigma:lo:hi]
    #[arg(long)]
    radius_dist: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    /// paper | standard
    #[arg(long)]
    force_form: Option<String>,
    #[arg(long)]
    r_min_guard: Option<String>,
    /// Neighbor-list capacity per particle.
    #[arg(long)]
    kmax: Option<String>,
    /// Worker threads, 0 for all cores.
    #[arg(long, env = "ORCS_THREADS")]
    threads: Option<String>,
    /// Bit-reproducible force summation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    deterministic: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    leaf_size: Option<String>,
    /// Standard deviation of initial velocity components.
    #[arg(long)]
    velocity: Option<String>,
    /// Gradient policy sample window.
    #[arg(long)]
    window: Option<String>,
    /// Gradient policy smoothing factor.
    #[arg(long)]
    alpha: Option<String>,
    /// Slope below which degradation counts as zero (seconds per step).
    #[arg(long)]
    delta_min: Option<String>,
    /// Upper bound on refits between rebuilds.
    #[arg(long)]
    ku_max: Option<String>,
    #[arg(long)]
    min_samples: Option<String>,
    /// time | work: what the gradient policy fits its degradation slope to.
    #[arg(long)]
    slope_source: Option<String>,
    #[arg(long)]
    max_particles: Option<String>,
    #[arg(long)]
    oracle_limit: Option<String>,
}

impl ConfigArgs {
    fn flags(&self) -> [(&'static str, &Option<String>); 29] {
        [
            ("n", &self.n),
            ("steps", &self.steps),
            ("box", &self.box_length),
            ("bc", &self.bc),
            ("engine", &self.engine),
            ("mode", &self.mode),
            ("policy", &self.policy),
            ("pdist", &self.pdist),
            ("radius-dist", &self.radius_dist),
            ("epsilon", &self.epsilon),
            ("sigma", &self.sigma),
            ("dt", &self.dt),
            ("force-form", &self.force_form),
            ("r-min-guard", &self.r_min_guard),
            ("kmax", &self.kmax),
            ("threads", &self.threads),
            ("deterministic", &self.deterministic),
            ("seed", &self.seed),
            ("out", &self.out),
            ("leaf-size", &self.leaf_size),
            ("velocity", &self.velocity),
            ("window", &self.window),
            ("alpha", &self.alpha),
            ("delta-min", &self.delta_min),
            ("ku-max", &self.ku_max),
            ("min-samples", &self.min_samples),
            ("slope-source", &self.slope_source),
            ("max-particles", &self.max_particles),
            ("oracle-limit", &self.oracle_limit),
        ]
    }

    /// Overlays the flags onto `cfg`.
    fn apply(&self, cfg: &mut SimConfig) -> Result<(), Error> {
        for (key, value) in self.flags() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(())
    }

    fn resolve(&self) -> Result<SimConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => SimConfig::from_text(&fs::read_to_string(path)?)?,
            None => SimConfig::default(),
        };
        self.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `error kind=<tag> key=value ...` for scripts scraping stderr.
fn error_line(e: &Error) -> String {
    let fields = match e {
        Error::Config { key, reason } => format!("key={key} reason={reason:?}"),
        Error::Capacity { requested, limit } => format!("requested={requested} limit={limit}"),
        Error::NeighborListOverflow {
            particle,
            required,
            capacity,
        } => format!("particle={particle} required={required} capacity={capacity}"),
        Error::ModeUnsupported { mode, reason } => format!("mode={mode} reason={reason:?}"),
        Error::Structure(m) | Error::Io(m) => format!("message={m:?}"),
        Error::NonFiniteForce { particle } => format!("particle={particle}"),
        Error::OracleLimit { n, limit } => format!("n={n} limit={limit}"),
    };
    format!("error kind={} {fields}", e.kind())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. }
        | Error::ModeUnsupported { .. }
        | Error::Capacity { .. }
        | Error::OracleLimit { .. } => 2,
        _ => 1,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("{}", error_line(e));
    ExitCode::from(exit_code(e))
}

fn simulate(args: &ConfigArgs) -> Result<(), Error> {
    let cfg = args.resolve()?;
    let summary = match &cfg.out {
        Some(path) => bench::run_experiment_to_file(&cfg, path)?,
        None => bench::run_experiment(&cfg, io::stdout().lock())?,
    };
    eprintln!("{}", summary.summary_line());
    match summary.status {
        RunStatus::Failed(e) => Err(e),
        _ => Ok(()),
    }
}

fn bench_matrix(matrix: &Option<PathBuf>, out_dir: &Path, args: &ConfigArgs) -> Result<(), Error> {
    let mut m = match matrix {
        Some(path) => ExperimentMatrix::from_text(&fs::read_to_string(path)?)?,
        None => ExperimentMatrix::single(args.resolve()?),
    };
    if matrix.is_some() {
        args.apply(&mut m.base)?;
    }
    let summaries = bench::run_matrix(&m, out_dir, |s| {
        eprintln!("{} {}", s.config.file_name(), s.summary_line());
    })?;
    let failed = summaries
        .iter()
        .filter(|s| matches!(s.status, RunStatus::Failed(_)))
        .count();
    let skipped = summaries
        .iter()
        .filter(|s| matches!(s.status, RunStatus::Skipped(_)))
        .count();
    eprintln!(
        "{} cells: {} ok, {failed} failed, {skipped} skipped; summary in {}",
        summaries.len(),
        summaries.len() - failed - skipped,
        out_dir.join("summary.csv").display()
    );
    Ok(())
}

fn dump(after: u64, args: &ConfigArgs) -> Result<(), Error> {
    let cfg = args.resolve()?;
    let mut sim = Simulation::new(&cfg)?;
    for _ in 0..after {
        sim.step()?;
    }
    let ps = sim.system();
    let mut text = format!("{} {}\n", ps.len(), cfg.box_length);
    for (p, r) in ps.positions.iter().zip(ps.radii()) {
        text.push_str(&format!("{} {} {} {}\n", p.x, p.y, p.z, r));
    }
    match &cfg.out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Bench {
            matrix,
            out_dir,
            cfg,
        } => bench_matrix(matrix, out_dir, cfg),
        Command::Validate { seed } => {
            let report = run_validation(*seed);
            println!("{report}");
            return if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
        Command::Dump { after, cfg } => dump(*after, cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

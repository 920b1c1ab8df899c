//! Simulation driver, per-step CSV output and experiment matrices.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use crate::bvh::Bvh;
use crate::config::{normalize_key, parse_kv_lines, EngineKind, ModeKind, SimConfig};
use crate::distributions::{generate_particles_with_limit, thermalize, ParticleDist, RadiusDist};
use crate::engine::{FrnnEngine, QueryOutput};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryKind, Domain, ParticleSystem};
use crate::physics;
use crate::policy::{Decision, PolicyKind, PolicyState, StepTiming};
use crate::reference::{brute_forces, cell_forces, CellGrid};

pub const CSV_HEADER: &str =
    "step,maintain_ms,query_ms,integrate_ms,rebuilt,k_u,interactions,mean_nodes_visited,avg_neighbors";

/// One row of the per-step log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub maintain_ms: f64,
    pub query_ms: f64,
    pub integrate_ms: f64,
    pub rebuilt: bool,
    pub k_u: u64,
    pub interactions: u64,
    pub mean_nodes_visited: f64,
    pub avg_neighbors: f64,
    /// Wall time around the whole step, including the policy decision.
    pub wall_ms: f64,
}

impl StepRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{},{},{},{:.4},{:.4}",
            self.step,
            self.maintain_ms,
            self.query_ms,
            self.integrate_ms,
            u8::from(self.rebuilt),
            self.k_u,
            self.interactions,
            self.mean_nodes_visited,
            self.avg_neighbors
        )
    }

    pub fn phase_ms(&self) -> f64 {
        self.maintain_ms + self.query_ms + self.integrate_ms
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// A running simulation: particles, acceleration structure and policy.
pub struct Simulation {
    cfg: SimConfig,
    domain: Domain,
    ps: ParticleSystem,
    engine: FrnnEngine,
    bvh: Option<Bvh>,
    policy: PolicyState,
    last: Option<StepTiming>,
    step: u64,
    pool: rayon::ThreadPool,
    peak_bytes: usize,
}

impl Simulation {
    /// Validates `cfg` and generates the initial particle set.
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let domain = cfg.domain()?;
        let mut ps =
            generate_particles_with_limit(&cfg.distribution(), cfg.n, &domain, cfg.max_particles)?;
        thermalize(&mut ps, cfg.velocity, cfg.seed);
        Self::with_system(cfg, ps)
    }

    /// Runs `cfg` on an explicit particle set; `cfg.n` and the distributions are ignored.
    pub fn with_system(cfg: &SimConfig, ps: ParticleSystem) -> Result<Self> {
        let domain = cfg.domain()?;
        let engine = FrnnEngine::new(cfg.query_mode(), cfg.reduction());
        if cfg.engine == EngineKind::Bvh {
            engine.check_supported(&ps, &domain)?;
        }
        if cfg.engine == EngineKind::Brute && ps.len() > cfg.oracle_limit {
            return Err(Error::OracleLimit {
                n: ps.len(),
                limit: cfg.oracle_limit,
            });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))?;
        Ok(Simulation {
            policy: PolicyState::new(cfg.effective_policy()),
            cfg: cfg.clone(),
            domain,
            ps,
            engine,
            bvh: None,
            last: None,
            step: 0,
            pool,
            peak_bytes: 0,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn system(&self) -> &ParticleSystem {
        &self.ps
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn policy(&self) -> &PolicyState {
        &self.policy
    }

    pub fn bvh(&self) -> Option<&Bvh> {
        self.bvh.as_ref()
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    /// Changes the time step for subsequent steps.
    pub fn set_dt(&mut self, dt: f64) {
        self.cfg.lj.dt = dt;
    }

    /// Estimated peak bytes for particle state, tree and neighbor list.
    pub fn peak_memory_bytes(&self) -> usize {
        let particle_bytes = self.ps.len() * (3 * std::mem::size_of::<crate::geometry::Vec3>() + 8);
        particle_bytes + self.peak_bytes
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        let Simulation {
            cfg,
            domain,
            ps,
            engine,
            bvh,
            policy,
            last,
            step,
            pool,
            peak_bytes,
        } = self;
        let record = pool.install(|| -> Result<StepRecord> {
            let t_step = Instant::now();
            let n = ps.len() as f64;
            let mut rebuilt = false;
            let mut k_u = 0;
            let (maintain_ms, query_ms, out): (f64, f64, QueryOutput) = match cfg.engine {
                EngineKind::Bvh => {
                    let t0 = Instant::now();
                    let decision = policy.decide(last.as_ref());
                    k_u = policy.k_u_current();
                    match (decision, bvh.as_mut()) {
                        (Decision::Update, Some(tree)) => tree.refit(ps)?,
                        _ => {
                            *bvh = Some(Bvh::build(ps, domain, cfg.leaf_size));
                            rebuilt = true;
                        }
                    }
                    let maintain_ms = ms_since(t0);
                    let tree = bvh.as_ref().expect("tree exists after maintenance");
                    let t1 = Instant::now();
                    let out = engine.query_phase(tree, ps, domain, &cfg.lj)?;
                    let query_ms = ms_since(t1);
                    *peak_bytes = (*peak_bytes).max(tree.footprint_bytes() + out.list_bytes);
                    *last = Some(StepTiming {
                        maintain_s: maintain_ms * 1e-3,
                        query_s: query_ms * 1e-3,
                        rebuilt,
                        query_work: out.stats.nodes_visited as f64,
                    });
                    (maintain_ms, query_ms, out)
                }
                EngineKind::Cell => {
                    let t0 = Instant::now();
                    let grid = CellGrid::build(ps, domain);
                    let maintain_ms = ms_since(t0);
                    rebuilt = true;
                    let t1 = Instant::now();
                    let interactions = cell_forces(&grid, ps, domain, &cfg.lj);
                    let query_ms = ms_since(t1);
                    *peak_bytes = (*peak_bytes).max(grid.footprint_bytes());
                    let out = QueryOutput {
                        interactions,
                        ..QueryOutput::default()
                    };
                    (maintain_ms, query_ms, out)
                }
                EngineKind::Brute => {
                    let t1 = Instant::now();
                    let interactions = brute_forces(ps, domain, &cfg.lj, cfg.oracle_limit)?;
                    let out = QueryOutput {
                        interactions,
                        ..QueryOutput::default()
                    };
                    (0.0, ms_since(t1), out)
                }
            };
            let t2 = Instant::now();
            match cfg.engine {
                EngineKind::Bvh => engine.integrate_phase(ps, domain, cfg.lj.dt)?,
                _ => physics::integrate(ps, domain, cfg.lj.dt)?,
            }
            let integrate_ms = ms_since(t2);
            Ok(StepRecord {
                step: *step,
                maintain_ms,
                query_ms,
                integrate_ms,
                rebuilt,
                k_u,
                interactions: out.interactions,
                mean_nodes_visited: out.stats.mean_nodes_visited(),
                avg_neighbors: 2.0 * out.interactions as f64 / n,
                wall_ms: ms_since(t_step),
            })
        })?;
        self.step += 1;
        Ok(record)
    }
}

/// Outcome of one experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok,
    Failed(Error),
    Skipped(String),
}

impl RunStatus {
    pub fn label(&self) -> String {
        match self {
            RunStatus::Ok => "ok".into(),
            RunStatus::Failed(e) => format!("failed:{}", e.kind()),
            RunStatus::Skipped(_) => "skipped".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub config: SimConfig,
    pub status: RunStatus,
    pub steps_run: u64,
    /// Mean of maintain + query + integrate over completed steps.
    pub mean_step_ms: f64,
    pub total_ms: f64,
    pub maintain_ms: f64,
    pub query_ms: f64,
    pub integrate_ms: f64,
    pub rebuilds: u64,
    pub peak_memory_bytes: usize,
}

impl RunSummary {
    fn empty(config: &SimConfig, status: RunStatus) -> Self {
        RunSummary {
            config: config.clone(),
            status,
            steps_run: 0,
            mean_step_ms: 0.0,
            total_ms: 0.0,
            maintain_ms: 0.0,
            query_ms: 0.0,
            integrate_ms: 0.0,
            rebuilds: 0,
            peak_memory_bytes: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// Maintenance plus query time, the quantity the policy minimizes.
    pub fn maintain_query_ms(&self) -> f64 {
        self.maintain_ms + self.query_ms
    }

    fn add(&mut self, r: &StepRecord) {
        self.steps_run += 1;
        self.maintain_ms += r.maintain_ms;
        self.query_ms += r.query_ms;
        self.integrate_ms += r.integrate_ms;
        self.total_ms += r.phase_ms();
        self.rebuilds += u64::from(r.rebuilt);
        self.mean_step_ms = self.total_ms / self.steps_run as f64;
    }

    pub fn summary_line(&self) -> String {
        format!(
            "# summary steps={} mean_step_ms={:.6} total_ms={:.6} rebuilds={} peak_memory_bytes={} status={}",
            self.steps_run,
            self.mean_step_ms,
            self.total_ms,
            self.rebuilds,
            self.peak_memory_bytes,
            self.status.label()
        )
    }
}

/// `baseline` mean step time over `candidate` mean step time; `None` unless both ran.
pub fn speedup(baseline: &RunSummary, candidate: &RunSummary) -> Option<f64> {
    (baseline.is_ok() && candidate.is_ok() && candidate.mean_step_ms > 0.0)
        .then(|| baseline.mean_step_ms / candidate.mean_step_ms)
}

/// Runs `sim` for `steps` steps, reporting each record to `on_step`.
pub fn drive<F: FnMut(&StepRecord)>(
    sim: &mut Simulation,
    steps: u64,
    mut on_step: F,
) -> RunSummary {
    let mut summary = RunSummary::empty(sim.config(), RunStatus::Ok);
    for _ in 0..steps {
        match sim.step() {
            Ok(r) => {
                summary.add(&r);
                on_step(&r);
            }
            Err(e) => {
                summary.status = RunStatus::Failed(e);
                break;
            }
        }
    }
    summary.peak_memory_bytes = sim.peak_memory_bytes();
    summary
}

/// Runs one configuration, writing the header, one row per step and a
/// closing summary line to `out`. Errors end up in the returned status.
pub fn run_experiment<W: Write>(cfg: &SimConfig, out: W) -> io::Result<RunSummary> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{CSV_HEADER}")?;
    let summary = match Simulation::new(cfg) {
        Ok(mut sim) => {
            let mut io_err = None;
            let s = drive(&mut sim, cfg.steps, |r| {
                if io_err.is_none() {
                    io_err = writeln!(w, "{}", r.csv_row()).err();
                }
            });
            if let Some(e) = io_err {
                return Err(e);
            }
            s
        }
        Err(e) => RunSummary::empty(cfg, RunStatus::Failed(e)),
    };
    writeln!(w, "{}", summary.summary_line())?;
    w.flush()?;
    Ok(summary)
}

/// Runs `cfg`, writing its CSV to `path`.
pub fn run_experiment_to_file(cfg: &SimConfig, path: &Path) -> Result<RunSummary> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(run_experiment(cfg, fs::File::create(path)?)?)
}

/// Cross product of distributions, boundaries, engines, policies and sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMatrix {
    pub base: SimConfig,
    pub pdists: Vec<ParticleDist>,
    pub radius_dists: Vec<RadiusDist>,
    pub bcs: Vec<BoundaryKind>,
    pub engines: Vec<(EngineKind, ModeKind)>,
    pub policies: Vec<PolicyKind>,
    pub ns: Vec<usize>,
}

fn parse_engine_item(s: &str) -> Result<(EngineKind, ModeKind)> {
    Ok(match s {
        "list" => (EngineKind::Bvh, ModeKind::List),
        "perse" => (EngineKind::Bvh, ModeKind::Perse),
        "forces" | "bvh" => (EngineKind::Bvh, ModeKind::Forces),
        "cell" => (EngineKind::Cell, ModeKind::Forces),
        "brute" => (EngineKind::Brute, ModeKind::Forces),
        other => {
            return Err(Error::config(
                "engines",
                format!("`{other}`: expected list | perse | forces | cell | brute"),
            ))
        }
    })
}

fn parse_list<T>(value: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect()
}

impl ExperimentMatrix {
    /// Single-cell matrix around `base`.
    pub fn single(base: SimConfig) -> Self {
        ExperimentMatrix {
            pdists: vec![base.pdist],
            radius_dists: vec![base.radius_dist],
            bcs: vec![base.bc],
            engines: vec![(base.engine, base.mode)],
            policies: vec![base.policy],
            ns: vec![base.n],
            base,
        }
    }

    /// Parses a matrix file. The keys `pdist`, `radius-dist`, `bc`,
    /// `engines`, `policy` and `n` take comma-separated lists; everything
    /// else is a single config value shared by all cells.
    pub fn from_text(text: &str) -> Result<Self> {
        let entries = parse_kv_lines(text)?;
        let mut base = SimConfig::default();
        let mut lists: Vec<(String, String)> = Vec::new();
        for (k, v) in entries {
            match normalize_key(&k).as_str() {
                "pdist" | "radius-dist" | "bc" | "engines" | "policy" | "n" => lists.push((k, v)),
                _ => base.set(&k, &v)?,
            }
        }
        let mut m = ExperimentMatrix::single(base);
        for (k, v) in lists {
            match k.as_str() {
                "pdist" => m.pdists = parse_list(&v, |s| s.parse())?,
                "radius-dist" => m.radius_dists = parse_list(&v, |s| s.parse())?,
                "bc" => m.bcs = parse_list(&v, |s| s.parse())?,
                "engines" => m.engines = parse_list(&v, parse_engine_item)?,
                "policy" => m.policies = parse_list(&v, |s| s.parse())?,
                "n" => {
                    m.ns = parse_list(&v, |s| {
                        s.parse()
                            .map_err(|_| Error::config("n", format!("cannot parse `{s}`")))
                    })?
                }
                _ => unreachable!(),
            }
        }
        Ok(m)
    }

    /// Every cell with its validation verdict. Policies only vary for the
    /// BVH engines; cell and brute runs use the first policy listed.
    pub fn cells(&self) -> Vec<(SimConfig, Option<String>)> {
        let mut out = Vec::new();
        for &pdist in &self.pdists {
            for &radius_dist in &self.radius_dists {
                for &bc in &self.bcs {
                    for &n in &self.ns {
                        for &(engine, mode) in &self.engines {
                            let policies = if engine == EngineKind::Bvh {
                                &self.policies[..]
                            } else {
                                &self.policies[..1]
                            };
                            for &policy in policies {
                                let cfg = SimConfig {
                                    pdist,
                                    radius_dist,
                                    bc,
                                    n,
                                    engine,
                                    mode,
                                    policy,
                                    ..self.base.clone()
                                };
                                let verdict = cfg.validate().err().map(|e| e.to_string());
                                out.push((cfg, verdict));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

pub const SUMMARY_HEADER: &str = "file,pdist,radius_dist,bc,engine,policy,n,steps,seed,status,mean_step_ms,total_ms,maintain_query_ms,rebuilds,peak_memory_bytes,speedup_vs_cell,note";

/// Runs every cell of `matrix`, writing one CSV per cell plus `summary.csv`
/// into `dir`. `progress` sees each summary as it finishes.
pub fn run_matrix<F: FnMut(&RunSummary)>(
    matrix: &ExperimentMatrix,
    dir: &Path,
    mut progress: F,
) -> Result<Vec<RunSummary>> {
    fs::create_dir_all(dir)?;
    let mut summaries = Vec::new();
    for (cfg, verdict) in matrix.cells() {
        let summary = match verdict {
            Some(reason) => RunSummary::empty(&cfg, RunStatus::Skipped(reason)),
            None => run_experiment_to_file(&cfg, &dir.join(cfg.file_name()))?,
        };
        progress(&summary);
        summaries.push(summary);
    }
    fs::write(dir.join("summary.csv"), summary_csv(&summaries))?;
    Ok(summaries)
}

/// Summary table; speedups are relative to the cell-list run of the same
/// distribution, boundary and size.
pub fn summary_csv(summaries: &[RunSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{SUMMARY_HEADER}");
    for r in summaries {
        let c = &r.config;
        let baseline = summaries.iter().find(|b| {
            b.config.engine == EngineKind::Cell
                && b.config.pdist == c.pdist
                && b.config.radius_dist == c.radius_dist
                && b.config.bc == c.bc
                && b.config.n == c.n
        });
        let sp = baseline
            .and_then(|b| speedup(b, r))
            .map(|x| format!("{x:.4}"))
            .unwrap_or_default();
        let note = match &r.status {
            RunStatus::Skipped(reason) => reason.replace(',', ";"),
            RunStatus::Failed(e) => e.to_string().replace(',', ";"),
            RunStatus::Ok => String::new(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{},{},{},{}",
            c.file_name(),
            c.pdist.label(),
            c.radius_dist,
            c.bc.label(),
            c.engine_label(),
            c.policy,
            c.n,
            c.steps,
            c.seed,
            r.status.label(),
            r.mean_step_ms,
            r.total_ms,
            r.maintain_query_ms(),
            r.rebuilds,
            r.peak_memory_bytes,
            sp,
            note
        );
    }
    s
}

//! Run configuration and its `key = value` text format.
//!
//! Every key has a command-line twin (`--key value`). Keys may be written
//! with dashes or underscores; `#` starts a comment.

use std::path::PathBuf;
use std::str::FromStr;

use crate::distributions::{DistributionSpec, ParticleDist, RadiusDist, DEFAULT_MAX_PARTICLES};
use crate::engine::{QueryMode, Reduction};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryKind, Domain};
use crate::physics::{ForceForm, LjParams};
use crate::policy::{GradientConfig, PolicyKind};
use crate::reference::DEFAULT_ORACLE_LIMIT;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Bvh,
    Cell,
    Brute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    List,
    Perse,
    Forces,
}

/// Everything needed to run one experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub steps: u64,
    pub box_length: f64,
    pub bc: BoundaryKind,
    pub engine: EngineKind,
    pub mode: ModeKind,
    pub policy: PolicyKind,
    pub gradient: GradientConfig,
    pub pdist: ParticleDist,
    pub radius_dist: RadiusDist,
    pub lj: LjParams,
    pub k_max: usize,
    pub threads: usize,
    pub deterministic: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub leaf_size: usize,
    /// Standard deviation of each initial velocity component.
    pub velocity: f64,
    pub max_particles: usize,
    pub oracle_limit: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 20_000,
            steps: 500,
            box_length: 1000.0,
            bc: BoundaryKind::Wall,
            engine: EngineKind::Bvh,
            mode: ModeKind::Forces,
            policy: PolicyKind::gradient(),
            gradient: GradientConfig::default(),
            pdist: ParticleDist::Disordered,
            radius_dist: RadiusDist::Const(1.0),
            lj: LjParams::default(),
            k_max: 128,
            threads: 0,
            deterministic: false,
            seed: 1,
            out: None,
            leaf_size: crate::bvh::DEFAULT_LEAF_SIZE,
            velocity: 0.0,
            max_particles: DEFAULT_MAX_PARTICLES,
            oracle_limit: DEFAULT_ORACLE_LIMIT,
        }
    }
}

/// Keys accepted in config files, in `--help` order.
pub const KEYS: &[&str] = &[
    "n",
    "steps",
    "box",
    "bc",
    "engine",
    "mode",
    "policy",
    "pdist",
    "radius-dist",
    "epsilon",
    "sigma",
    "dt",
    "force-form",
    "r-min-guard",
    "kmax",
    "threads",
    "deterministic",
    "seed",
    "out",
    "leaf-size",
    "velocity",
    "window",
    "alpha",
    "delta-min",
    "ku-max",
    "min-samples",
    "slope-source",
    "max-particles",
    "oracle-limit",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::config(key, format!("`{other}` is not a boolean"))),
    }
}

impl FromStr for BoundaryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "wall" => Ok(BoundaryKind::Wall),
            "periodic" => Ok(BoundaryKind::Periodic),
            other => Err(Error::config(
                "bc",
                format!("`{other}`: expected wall | periodic"),
            )),
        }
    }
}

impl FromStr for EngineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bvh" => Ok(EngineKind::Bvh),
            "cell" => Ok(EngineKind::Cell),
            "brute" => Ok(EngineKind::Brute),
            other => Err(Error::config(
                "engine",
                format!("`{other}`: expected bvh | cell | brute"),
            )),
        }
    }
}

impl FromStr for ModeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "list" => Ok(ModeKind::List),
            "perse" => Ok(ModeKind::Perse),
            "forces" => Ok(ModeKind::Forces),
            other => Err(Error::config(
                "mode",
                format!("`{other}`: expected list | perse | forces"),
            )),
        }
    }
}

/// Canonical spelling of a key: lower case with dashes.
pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        out.push((normalize_key(k), v.trim().to_string()));
    }
    Ok(out)
}

impl SimConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let k = key.as_str();
        match k {
            "n" => self.n = parse(k, value)?,
            "steps" => self.steps = parse(k, value)?,
            "box" => self.box_length = parse(k, value)?,
            "bc" => self.bc = value.parse()?,
            "engine" => self.engine = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "policy" => self.policy = value.parse()?,
            "pdist" => self.pdist = value.parse()?,
            "radius-dist" => self.radius_dist = value.parse()?,
            "epsilon" => self.lj.epsilon = parse(k, value)?,
            "sigma" => self.lj.sigma = parse(k, value)?,
            "dt" => self.lj.dt = parse(k, value)?,
            "force-form" => self.lj.force_form = value.parse::<ForceForm>()?,
            "r-min-guard" => self.lj.r_min_guard = parse(k, value)?,
            "kmax" => self.k_max = parse(k, value)?,
            "threads" => self.threads = parse(k, value)?,
            "deterministic" => self.deterministic = parse_bool(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "leaf-size" => self.leaf_size = parse(k, value)?,
            "velocity" => self.velocity = parse(k, value)?,
            "window" => self.gradient.window = parse(k, value)?,
            "alpha" => self.gradient.alpha = parse(k, value)?,
            "delta-min" => self.gradient.delta_min = parse(k, value)?,
            "ku-max" => self.gradient.k_max = parse(k, value)?,
            "min-samples" => self.gradient.min_samples = parse(k, value)?,
            "slope-source" => self.gradient.slope_source = value.parse()?,
            "max-particles" => self.max_particles = parse(k, value)?,
            "oracle-limit" => self.oracle_limit = parse(k, value)?,
            _ => return Err(Error::config(k, "unknown key")),
        }
        Ok(())
    }

    /// Defaults, overlaid with a config file's entries.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        for (k, v) in parse_kv_lines(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Checks cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "must be >= 1"));
        }
        Domain::new(self.box_length, self.bc)?;
        self.radius_dist.validate()?;
        self.lj.validate()?;
        if self.engine == EngineKind::Bvh
            && self.mode == ModeKind::Perse
            && !self.radius_dist.is_uniform()
        {
            return Err(Error::config(
                "mode",
                "perse requires a uniform radius (radius-dist const:r)",
            ));
        }
        if self.engine == EngineKind::Bvh && self.mode == ModeKind::List && self.k_max == 0 {
            return Err(Error::config("kmax", "must be >= 1"));
        }
        if self.engine == EngineKind::Brute && self.n > self.oracle_limit {
            return Err(Error::config(
                "engine",
                format!(
                    "brute force is limited to n <= {} (got {})",
                    self.oracle_limit, self.n
                ),
            ));
        }
        if self.bc == BoundaryKind::Periodic
            && 2.0 * self.radius_dist.upper_bound() >= self.box_length
        {
            return Err(Error::config(
                "radius-dist",
                "periodic boxes need every radius below L/2",
            ));
        }
        if self.leaf_size == 0 {
            return Err(Error::config("leaf-size", "must be >= 1"));
        }
        if !(self.velocity >= 0.0 && self.velocity.is_finite()) {
            return Err(Error::config("velocity", "must be >= 0"));
        }
        let g = &self.gradient;
        if g.window < 2 {
            return Err(Error::config("window", "must be >= 2"));
        }
        if !(g.alpha > 0.0 && g.alpha <= 1.0) {
            return Err(Error::config("alpha", "must be in (0, 1]"));
        }
        if g.k_max == 0 {
            return Err(Error::config("ku-max", "must be >= 1"));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        Domain::new(self.box_length, self.bc)
    }

    pub fn distribution(&self) -> DistributionSpec {
        DistributionSpec {
            particles: self.pdist,
            radii: self.radius_dist,
            seed: self.seed,
        }
    }

    pub fn query_mode(&self) -> QueryMode {
        match self.mode {
            ModeKind::List => QueryMode::NeighborList { k_max: self.k_max },
            ModeKind::Perse => QueryMode::Perse,
            ModeKind::Forces => QueryMode::Forces,
        }
    }

    pub fn reduction(&self) -> Reduction {
        if self.deterministic {
            Reduction::Deterministic
        } else {
            Reduction::Atomic
        }
    }

    /// Policy with the configured gradient tuning applied.
    pub fn effective_policy(&self) -> PolicyKind {
        match self.policy {
            PolicyKind::Gradient(_) => PolicyKind::Gradient(self.gradient),
            other => other,
        }
    }

    /// Label for the engine column and file names.
    pub fn engine_label(&self) -> &'static str {
        match self.engine {
            EngineKind::Bvh => self.query_mode().label(),
            EngineKind::Cell => "cell",
            EngineKind::Brute => "brute",
        }
    }

    /// `<pdist>-<rdist>-<bc>-<engine>-<policy>-n<N>.csv`
    pub fn file_name(&self) -> String {
        format!(
            "{}-{}-{}-{}-{}-n{}.csv",
            self.pdist.label(),
            self.radius_dist,
            self.bc.label(),
            self.engine_label(),
            self.policy,
            self.n
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_defaults() {
        let cfg = SimConfig::from_text("").unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!(cfg.n, 20_000);
        assert_eq!(cfg.steps, 500);
        assert_eq!(cfg.box_length, 1000.0);
        assert_eq!(cfg.bc, BoundaryKind::Wall);
        assert_eq!(cfg.engine, EngineKind::Bvh);
        assert_eq!(cfg.mode, ModeKind::Forces);
        assert!(matches!(cfg.policy, PolicyKind::Gradient(_)));
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn file_entries_and_comments() {
        let cfg = SimConfig::from_text(
            "# comment\n n = 100 \nradius_dist = uniform:1:160  # trailing\n\npolicy = fixed:200\nbc=periodic\n",
        )
        .unwrap();
        assert_eq!(cfg.n, 100);
        assert_eq!(cfg.radius_dist, RadiusDist::Uniform { lo: 1.0, hi: 160.0 });
        assert_eq!(cfg.policy, PolicyKind::FixedK(200));
        assert_eq!(cfg.bc, BoundaryKind::Periodic);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = SimConfig::from_text("colour = blue").unwrap_err();
        assert_eq!(err, Error::config("colour", "unknown key"));
    }

    #[test]
    fn perse_needs_uniform_radius() {
        let mut cfg = SimConfig::default();
        cfg.set("mode", "perse").unwrap();
        cfg.set("radius-dist", "uniform:1:160").unwrap();
        match cfg.validate().unwrap_err() {
            Error::Config { key, .. } => assert_eq!(key, "mode"),
            e => panic!("{e}"),
        }
        cfg.set("radius-dist", "const:2").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn brute_limit() {
        let mut cfg = SimConfig::default();
        cfg.set("engine", "brute").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("n", "100").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_values_name_the_key() {
        let mut cfg = SimConfig::default();
        for (k, v) in [
            ("n", "many"),
            ("bc", "open"),
            ("deterministic", "maybe"),
            ("force-form", "other"),
        ] {
            match cfg.set(k, v).unwrap_err() {
                Error::Config { key, .. } => assert_eq!(key, k),
                e => panic!("{e}"),
            }
        }
    }

    #[test]
    fn every_key_is_settable() {
        let samples = [
            ("n", "5"),
            ("steps", "3"),
            ("box", "10"),
            ("bc", "wall"),
            ("engine", "cell"),
            ("mode", "list"),
            ("policy", "avg"),
            ("pdist", "lattice"),
            ("radius-dist", "const:1"),
            ("epsilon", "2"),
            ("sigma", "1"),
            ("dt", "0.01"),
            ("force-form", "standard"),
            ("r-min-guard", "0.4"),
            ("kmax", "16"),
            ("threads", "1"),
            ("deterministic", "true"),
            ("seed", "9"),
            ("out", "x.csv"),
            ("leaf-size", "2"),
            ("velocity", "3"),
            ("window", "16"),
            ("alpha", "0.5"),
            ("delta-min", "1e-8"),
            ("ku-max", "100"),
            ("min-samples", "3"),
            ("slope-source", "time"),
            ("max-particles", "1000"),
            ("oracle-limit", "100"),
        ];
        assert_eq!(samples.len(), KEYS.len());
        let mut cfg = SimConfig::default();
        for (k, v) in samples {
            assert!(KEYS.contains(&k));
            cfg.set(k, v).unwrap();
        }
        cfg.validate().unwrap();
    }

    #[test]
    fn file_name_pattern() {
        let cfg = SimConfig::from_text("pdist = cluster\nradius-dist = lognormal\nbc = periodic\npolicy = fixed:200\nn = 50000").unwrap();
        assert_eq!(
            cfg.file_name(),
            "cluster-lognormal-periodic-forces-fixed200-n50000.csv"
        );
    }
}

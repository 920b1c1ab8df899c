//! Refit-versus-rebuild decisions for the BVH.
//!
//! A maintenance cycle is one rebuild followed by `k_u` refit-only steps. If
//! refitting makes every subsequent query `delta_q` slower than the previous
//! one, the cost of a whole run is
//!
//! ```text
//! T(k_u) = n_steps / (k_u + 1) * [ k_u * (k_u * delta_q) / 2 + k_u * (t_u + t_q) + (t_r + t_q) ]
//! ```
//!
//! whose stationary point is `k_u* = -1 + sqrt(1 - 2 (t_u - t_r) / delta_q)`.
//! The `Gradient` policy keeps live estimates of `t_u`, `t_r` and `delta_q`
//! and rebuilds once `k_u*` refits have happened.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModelParams {
    pub t_r: f64,
    pub t_u: f64,
    pub t_q: f64,
    pub delta_q: f64,
    pub n_steps: u64,
}

/// Modelled total query-plus-maintenance time for a fixed `k_u`.
pub fn total_cost(p: &CostModelParams, k_u: u64) -> f64 {
    let k = k_u as f64;
    p.n_steps as f64 / (k + 1.0)
        * ((k * (k * p.delta_q)) / 2.0 + k * (p.t_u + p.t_q) + (p.t_r + p.t_q))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientConfig {
    /// Samples used for the query-time slope.
    pub window: usize,
    /// EMA weight of the newest update/rebuild timing.
    pub alpha: f64,
    /// Slopes at or below this (seconds per step) count as no degradation.
    pub delta_min: f64,
    pub k_max: u64,
    /// Samples needed since the last rebuild before the slope is re-estimated.
    pub min_samples: usize,
    pub slope_source: SlopeSource,
}

/// What the query-cost slope is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlopeSource {
    /// Measured query seconds per step.
    Time,
    /// Traversal work per step (nodes visited), converted to seconds with a
    /// smoothed seconds-per-node ratio. Insensitive to timer jitter.
    #[default]
    Work,
}

impl fmt::Display for SlopeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlopeSource::Time => "time",
            SlopeSource::Work => "work",
        })
    }
}

impl FromStr for SlopeSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "time" => Ok(SlopeSource::Time),
            "work" => Ok(SlopeSource::Work),
            other => Err(Error::config(
                "slope-source",
                format!("`{other}`: expected time | work"),
            )),
        }
    }
}

impl Default for GradientConfig {
    fn default() -> Self {
        GradientConfig {
            window: 32,
            alpha: 0.3,
            delta_min: 1e-9,
            k_max: 10_000,
            min_samples: 4,
            slope_source: SlopeSource::Work,
        }
    }
}

/// Optimal number of refits between rebuilds, rounded and clamped to `[0, k_max]`.
/// NaN inputs give `k_max`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn k_u_opt(t_u: f64, t_r: f64, delta_q: f64, delta_min: f64, k_max: u64) -> u64 {
    if !(delta_q > delta_min) {
        return k_max;
    }
    let radicand = 1.0 - 2.0 * (t_u - t_r) / delta_q;
    if !(radicand >= 0.0) {
        return k_max;
    }
    let k = (-1.0 + radicand.sqrt()).round();
    if k <= 0.0 {
        0
    } else if k >= k_max as f64 {
        k_max
    } else {
        k as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    Gradient(GradientConfig),
    FixedK(u64),
    Avg,
}

impl PolicyKind {
    pub fn gradient() -> Self {
        PolicyKind::Gradient(GradientConfig::default())
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Gradient(_) => write!(f, "gradient"),
            PolicyKind::FixedK(k) => write!(f, "fixed{k}"),
            PolicyKind::Avg => write!(f, "avg"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    /// `gradient`, `avg`, `fixed` (K = 200) or `fixed:<K>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "gradient" => return Ok(PolicyKind::gradient()),
            "avg" => return Ok(PolicyKind::Avg),
            "fixed" => return Ok(PolicyKind::FixedK(200)),
            _ => {}
        }
        let k = s
            .strip_prefix("fixed:")
            .or_else(|| s.strip_prefix("fixed-"))
            .ok_or_else(|| {
                Error::config(
                    "policy",
                    format!("`{s}`: expected gradient | avg | fixed:K"),
                )
            })?;
        match k.parse::<u64>() {
            Ok(k) if k >= 1 => Ok(PolicyKind::FixedK(k)),
            _ => Err(Error::config(
                "policy",
                format!("`{s}`: K must be an integer >= 1"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Rebuild,
    Update,
}

/// What the policy needs to know about a finished step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTiming {
    pub maintain_s: f64,
    pub query_s: f64,
    pub rebuilt: bool,
    /// Traversal work of the query phase; zero when not measured.
    pub query_work: f64,
}

#[derive(Debug, Clone)]
pub struct PolicyState {
    kind: PolicyKind,
    step: u64,
    last_rebuild: Option<u64>,
    k_u_current: u64,
    t_u_hat: Option<f64>,
    t_r_hat: Option<f64>,
    delta_q_hat: Option<f64>,
    /// Seconds per unit of traversal work.
    work_rate_hat: Option<f64>,
    /// (steps since rebuild, query seconds, query work) for the current cycle.
    cycle_queries: VecDeque<(f64, f64, f64)>,
    cycle_update_cost: (f64, u64),
    rebuild_cost: (f64, u64),
}

impl PolicyState {
    pub fn new(kind: PolicyKind) -> Self {
        let k_u_current = match kind {
            PolicyKind::Gradient(cfg) => cfg.k_max,
            PolicyKind::FixedK(k) => k.saturating_sub(1),
            PolicyKind::Avg => 0,
        };
        PolicyState {
            kind,
            step: 0,
            last_rebuild: None,
            k_u_current,
            t_u_hat: None,
            t_r_hat: None,
            delta_q_hat: None,
            work_rate_hat: None,
            cycle_queries: VecDeque::new(),
            cycle_update_cost: (0.0, 0),
            rebuild_cost: (0.0, 0),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Active refit budget per cycle.
    pub fn k_u_current(&self) -> u64 {
        self.k_u_current
    }

    /// Steps elapsed since the last rebuild, counting the rebuild step itself.
    pub fn steps_since_rebuild(&self) -> u64 {
        self.last_rebuild.map_or(0, |r| self.step - r)
    }

    pub fn estimates(&self) -> (Option<f64>, Option<f64>, Option<f64>) {
        (self.t_u_hat, self.t_r_hat, self.delta_q_hat)
    }

    /// Folds in the previous step (if any) and decides the upcoming one.
    pub fn decide(&mut self, last_step: Option<&StepTiming>) -> Decision {
        if let Some(t) = last_step {
            self.observe(t);
        }
        let since = match self.last_rebuild {
            None => return Decision::Rebuild,
            Some(r) => self.step - r,
        };
        match self.kind {
            PolicyKind::FixedK(k) => {
                if since >= k {
                    Decision::Rebuild
                } else {
                    Decision::Update
                }
            }
            PolicyKind::Gradient(cfg) => {
                // A full cycle is the rebuild plus k_u refits.
                if since >= self.k_u_current.saturating_add(1)
                    || since >= cfg.k_max.saturating_add(1)
                {
                    Decision::Rebuild
                } else {
                    Decision::Update
                }
            }
            PolicyKind::Avg => {
                let (upd_sum, upd_n) = self.cycle_update_cost;
                let (reb_sum, reb_n) = self.rebuild_cost;
                if upd_n > 0 && reb_n > 0 && upd_sum / upd_n as f64 > reb_sum / reb_n as f64 {
                    Decision::Rebuild
                } else {
                    Decision::Update
                }
            }
        }
    }

    fn observe(&mut self, t: &StepTiming) {
        let step = self.step;
        self.step += 1;
        if t.rebuilt {
            self.last_rebuild = Some(step);
            self.cycle_queries.clear();
            self.cycle_update_cost = (0.0, 0);
            self.rebuild_cost.0 += t.maintain_s + t.query_s;
            self.rebuild_cost.1 += 1;
        } else {
            self.cycle_update_cost.0 += t.maintain_s + t.query_s;
            self.cycle_update_cost.1 += 1;
        }

        let PolicyKind::Gradient(cfg) = self.kind else {
            return;
        };
        let ema = |prev: Option<f64>, x: f64| {
            Some(prev.map_or(x, |p| cfg.alpha * x + (1.0 - cfg.alpha) * p))
        };
        if t.rebuilt {
            self.t_r_hat = ema(self.t_r_hat, t.maintain_s);
        } else {
            self.t_u_hat = ema(self.t_u_hat, t.maintain_s);
        }

        let use_work = cfg.slope_source == SlopeSource::Work && t.query_work > 0.0;
        if use_work {
            self.work_rate_hat = ema(self.work_rate_hat, t.query_s / t.query_work);
        }
        let offset = self.last_rebuild.map_or(0, |r| step - r) as f64;
        self.cycle_queries
            .push_back((offset, t.query_s, t.query_work));
        while self.cycle_queries.len() > cfg.window.max(2) {
            self.cycle_queries.pop_front();
        }
        if self.cycle_queries.len() >= cfg.min_samples.max(2) {
            let samples = self.cycle_queries.iter();
            self.delta_q_hat = match (use_work, self.work_rate_hat) {
                (true, Some(rate)) => {
                    least_squares_slope(samples.map(|s| (s.0, s.2))).map(|w| w * rate)
                }
                _ => least_squares_slope(samples.map(|s| (s.0, s.1))),
            };
        }

        if let (Some(t_u), Some(t_r), Some(dq)) = (self.t_u_hat, self.t_r_hat, self.delta_q_hat) {
            self.k_u_current = k_u_opt(t_u, t_r, dq, cfg.delta_min, cfg.k_max);
        }
    }
}

/// Ordinary least-squares slope of `y` against `x`; `None` if `x` is constant.
pub fn least_squares_slope<I: Iterator<Item = (f64, f64)> + Clone>(samples: I) -> Option<f64> {
    let (n, sx, sy) = samples
        .clone()
        .fold((0.0, 0.0, 0.0), |(n, sx, sy), (x, y)| {
            (n + 1.0, sx + x, sy + y)
        });
    if n < 2.0 {
        return None;
    }
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = samples.fold((0.0, 0.0), |(sxy, sxx), (x, y)| {
        (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
    });
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

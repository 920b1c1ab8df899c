//! Seeded initial conditions: particle layouts and search-radius distributions.
//!
//! All randomness comes from ChaCha8 (a counter-based generator). Positions,
//! radii and velocities each draw from their own stream of the same seed, so
//! swapping the radius distribution leaves positions untouched.

use std::fmt;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Domain, ParticleSystem, Vec3};

const POSITION_STREAM: u64 = 0;
const RADIUS_STREAM: u64 = 1;
const VELOCITY_STREAM: u64 = 2;

/// Hard ceiling on generated system size.
pub const DEFAULT_MAX_PARTICLES: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterCenter {
    /// Drawn once per run from `Uniform(0, L)^3`.
    Random,
    Fixed(Vec3),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParticleDist {
    Lattice,
    Disordered,
    Cluster { center: ClusterCenter, sigma: f64 },
}

impl ParticleDist {
    pub const fn cluster() -> Self {
        ParticleDist::Cluster {
            center: ClusterCenter::Random,
            sigma: 25.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ParticleDist::Lattice => "lattice",
            ParticleDist::Disordered => "disordered",
            ParticleDist::Cluster { .. } => "cluster",
        }
    }
}

impl FromStr for ParticleDist {
    type Err = Error;

    /// `lattice`, `disordered`, `cluster`, `cluster:<sigma>` or `cluster:<x>:<y>:<z>:<sigma>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = |why: &str| Error::config("pdist", format!("`{s}`: {why}"));
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad("not a number"));
        match parts.as_slice() {
            ["lattice"] => Ok(ParticleDist::Lattice),
            ["disordered"] => Ok(ParticleDist::Disordered),
            ["cluster"] => Ok(ParticleDist::cluster()),
            ["cluster", sigma] => Ok(ParticleDist::Cluster {
                center: ClusterCenter::Random,
                sigma: num(sigma)?,
            }),
            ["cluster", x, y, z, sigma] => Ok(ParticleDist::Cluster {
                center: ClusterCenter::Fixed(Vec3::new(num(x)?, num(y)?, num(z)?)),
                sigma: num(sigma)?,
            }),
            _ => Err(bad(
                "expected lattice | disordered | cluster[:sigma] | cluster:x:y:z:sigma",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusDist {
    Const(f64),
    Uniform {
        lo: f64,
        hi: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
        clamp_lo: f64,
        clamp_hi: f64,
    },
}

impl RadiusDist {
    pub const fn log_normal() -> Self {
        RadiusDist::LogNormal {
            mu: 1.0,
            sigma: 2.0,
            clamp_lo: 1.0,
            clamp_hi: 330.0,
        }
    }

    /// True when every particle is guaranteed the same radius.
    pub fn is_uniform(&self) -> bool {
        match *self {
            RadiusDist::Const(_) => true,
            RadiusDist::Uniform { lo, hi } => lo == hi,
            RadiusDist::LogNormal {
                clamp_lo, clamp_hi, ..
            } => clamp_lo == clamp_hi,
        }
    }

    /// Upper bound on any drawn radius.
    pub fn upper_bound(&self) -> f64 {
        match *self {
            RadiusDist::Const(r) => r,
            RadiusDist::Uniform { hi, .. } => hi,
            RadiusDist::LogNormal { clamp_hi, .. } => clamp_hi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::config("radius-dist", why.to_string()));
        match *self {
            RadiusDist::Const(r) if !(r > 0.0 && r.is_finite()) => bad("radius must be > 0"),
            RadiusDist::Uniform { lo, hi } if !(lo > 0.0 && lo <= hi && hi.is_finite()) => {
                bad("uniform requires 0 < lo <= hi")
            }
            RadiusDist::LogNormal {
                sigma,
                clamp_lo,
                clamp_hi,
                mu,
            } => {
                if !(clamp_lo > 0.0 && clamp_lo <= clamp_hi && clamp_hi.is_finite()) {
                    bad("log-normal requires 0 < clamp_lo <= clamp_hi")
                } else if !(sigma >= 0.0 && mu.is_finite()) {
                    bad("log-normal requires finite mu and sigma >= 0")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            RadiusDist::Const(r) => r,
            RadiusDist::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            }
            RadiusDist::LogNormal {
                mu,
                sigma,
                clamp_lo,
                clamp_hi,
            } => {
                let d = LogNormal::new(mu, sigma).expect("validated log-normal");
                d.sample(rng).clamp(clamp_lo, clamp_hi)
            }
        }
    }
}

impl fmt::Display for RadiusDist {
    /// Compact label used in output file names.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RadiusDist::Const(r) => write!(f, "const{r}"),
            RadiusDist::Uniform { lo, hi } => write!(f, "uniform{lo}_{hi}"),
            RadiusDist::LogNormal { .. } => write!(f, "lognormal"),
        }
    }
}

impl FromStr for RadiusDist {
    type Err = Error;

    /// `const:<r>`, `uniform:<lo>:<hi>`, `lognormal` or `lognormal:<mu>:<sigma>:<lo>:<hi>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = |why: &str| Error::config("radius-dist", format!("`{s}`: {why}"));
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad("not a number"));
        let d = match parts.as_slice() {
            ["const", r] => RadiusDist::Const(num(r)?),
            ["uniform", lo, hi] => RadiusDist::Uniform {
                lo: num(lo)?,
                hi: num(hi)?,
            },
            ["lognormal"] => RadiusDist::log_normal(),
            ["lognormal", mu, sigma, lo, hi] => RadiusDist::LogNormal {
                mu: num(mu)?,
                sigma: num(sigma)?,
                clamp_lo: num(lo)?,
                clamp_hi: num(hi)?,
            },
            _ => {
                return Err(bad(
                    "expected const:r | uniform:lo:hi | lognormal[:mu:sigma:lo:hi]",
                ))
            }
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec {
    pub particles: ParticleDist,
    pub radii: RadiusDist,
    pub seed: u64,
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        self.radii.validate()?;
        if let ParticleDist::Cluster { sigma, .. } = self.particles {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::config("pdist", "cluster sigma must be > 0"));
            }
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generates `n` particles at rest, using the default capacity limit.
pub fn generate_particles(
    spec: &DistributionSpec,
    n: usize,
    domain: &Domain,
) -> Result<ParticleSystem> {
    generate_particles_with_limit(spec, n, domain, DEFAULT_MAX_PARTICLES)
}

pub fn generate_particles_with_limit(
    spec: &DistributionSpec,
    n: usize,
    domain: &Domain,
    max_particles: usize,
) -> Result<ParticleSystem> {
    if n == 0 {
        return Err(Error::config("n", "need at least one particle"));
    }
    if n > max_particles {
        return Err(Error::Capacity {
            requested: n,
            limit: max_particles,
        });
    }
    spec.validate()?;

    let l = domain.side_length;
    let mut rng = stream(spec.seed, POSITION_STREAM);
    let positions = match spec.particles {
        ParticleDist::Lattice => lattice(n, l),
        ParticleDist::Disordered => (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(0.0..l),
                    rng.random_range(0.0..l),
                    rng.random_range(0.0..l),
                )
            })
            .collect(),
        ParticleDist::Cluster { center, sigma } => {
            let mu = match center {
                ClusterCenter::Random => Vec3::new(
                    rng.random_range(0.0..l),
                    rng.random_range(0.0..l),
                    rng.random_range(0.0..l),
                ),
                ClusterCenter::Fixed(c) => c,
            };
            let normal = Normal::new(0.0, sigma).expect("validated sigma");
            let mut axis = |m: f64| loop {
                let v = m + normal.sample(&mut rng);
                if (0.0..l).contains(&v) {
                    break v;
                }
            };
            (0..n)
                .map(|_| Vec3::new(axis(mu.x), axis(mu.y), axis(mu.z)))
                .collect()
        }
    };

    let mut rng = stream(spec.seed, RADIUS_STREAM);
    let radii = (0..n).map(|_| spec.radii.sample(&mut rng)).collect();
    ParticleSystem::new(positions, radii)
}

/// Sites of the smallest cubic grid with at least `n` points, filled lexicographically.
fn lattice(n: usize, l: f64) -> Vec<Vec3> {
    let mut m = (n as f64).cbrt().round() as usize;
    while m * m * m < n {
        m += 1;
    }
    while m > 1 && (m - 1).pow(3) >= n {
        m -= 1;
    }
    let spacing = l / m as f64;
    let site = |k: usize| (k as f64 + 0.5) * spacing;
    (0..n)
        .map(|idx| {
            let (i, j, k) = (idx / (m * m), (idx / m) % m, idx % m);
            Vec3::new(site(i), site(j), site(k))
        })
        .collect()
}

/// Gives every particle a random velocity with `Normal(0, scale)` components.
///
/// A zero scale leaves the system at rest.
pub fn thermalize(ps: &mut ParticleSystem, scale: f64, seed: u64) {
    if scale == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, scale.abs()).expect("finite scale");
    let mut rng = stream(seed, VELOCITY_STREAM);
    for v in ps.velocities.iter_mut() {
        *v = Vec3::new(
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        );
    }
}

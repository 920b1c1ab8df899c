//! Self-check suite behind `orcs validate`.
//!
//! Each property runs on small generated instances and reports pass or fail
//! with a short detail line. Output depends only on the seed.

use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bvh::{Bvh, DEFAULT_LEAF_SIZE};
use crate::distributions::{generate_particles, DistributionSpec, ParticleDist, RadiusDist};
use crate::engine::{ghost_offsets, owns, FrnnEngine, GhostRule, QueryMode, Reduction};
use crate::geometry::{BoundaryKind, Domain, ParticleSystem, Vec3};
use crate::physics::LjParams;
use crate::policy::{k_u_opt, total_cost, CostModelParams};
use crate::reference::{brute_force_neighbors, CellGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub seed: u64,
    pub results: Vec<PropertyResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "validate seed={}", self.seed)?;
        for r in &self.results {
            writeln!(
                f,
                "{} {}: {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.detail
            )?;
        }
        write!(
            f,
            "{}/{} properties passed",
            self.results.iter().filter(|r| r.passed).count(),
            self.results.len()
        )
    }
}

pub fn run_validation(seed: u64) -> ValidationReport {
    run_validation_with_rule(seed, ghost_offsets)
}

/// Runs the suite with a substitute ghost-offset rule.
pub fn run_validation_with_rule(seed: u64, rule: GhostRule) -> ValidationReport {
    ValidationReport {
        seed,
        results: vec![
            oracle_equivalence(seed, rule),
            periodic_straddling(rule),
            forces_exactly_once(seed, rule),
            mode_equivalence(seed, rule),
            k_u_opt_consistency(seed),
        ],
    }
}

fn bvh_pairs(ps: &ParticleSystem, domain: &Domain, rule: GhostRule) -> Vec<(u32, u32)> {
    let bvh = Bvh::build(ps, domain, DEFAULT_LEAF_SIZE);
    FrnnEngine::new(QueryMode::Forces, Reduction::Deterministic)
        .with_ghost_rule(rule)
        .pair_pass(&bvh, ps, domain)
        .map(|p| p.sorted_pairs())
        .unwrap_or_default()
}

/// BVH, cell grid and brute force report identical pair sets.
fn oracle_equivalence(seed: u64, rule: GhostRule) -> PropertyResult {
    let pdists = [ParticleDist::Disordered, ParticleDist::cluster()];
    let rdists = [
        RadiusDist::Const(4.0),
        RadiusDist::Uniform { lo: 0.5, hi: 9.0 },
    ];
    let mut cases = 0;
    let mut failures = Vec::new();
    for s in 0..4u64 {
        for pd in pdists {
            for rd in rdists {
                for bc in [BoundaryKind::Wall, BoundaryKind::Periodic] {
                    let domain = Domain::new(100.0, bc).expect("valid domain");
                    let spec = DistributionSpec {
                        particles: pd,
                        radii: rd,
                        seed: seed.wrapping_mul(1000).wrapping_add(s),
                    };
                    let ps = generate_particles(&spec, 300, &domain).expect("valid distribution");
                    let brute = brute_force_neighbors(&ps, &domain).expect("under oracle limit");
                    let cell = CellGrid::build(&ps, &domain).pairs(&ps, &domain);
                    let bvh = bvh_pairs(&ps, &domain, rule);
                    cases += 1;
                    if bvh != brute || cell != brute {
                        failures.push(format!(
                            "{}/{}/{} seed {}",
                            pd.label(),
                            rd,
                            bc.label(),
                            spec.seed
                        ));
                    }
                }
            }
        }
    }
    PropertyResult {
        name: "oracle_equivalence",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{cases} instances agree")
        } else {
            format!(
                "{} of {cases} differ, first {}",
                failures.len(),
                failures[0]
            )
        },
    }
}

/// Pairs placed across each of the 26 wall directions: one interaction under
/// periodic boundaries, none with walls.
fn periodic_straddling(rule: GhostRule) -> PropertyResult {
    let l = 50.0;
    let mut missed = Vec::new();
    let mut count = 0;
    for dir in straddle_directions() {
        let (a, b) = straddling_pair(dir, l);
        let ps = ParticleSystem::new(vec![a, b], vec![1.0, 1.0]).expect("valid system");
        for bc in [BoundaryKind::Periodic, BoundaryKind::Wall] {
            let domain = Domain::new(l, bc).expect("valid domain");
            let want: Vec<(u32, u32)> = if bc == BoundaryKind::Periodic {
                vec![(0, 1)]
            } else {
                vec![]
            };
            if bvh_pairs(&ps, &domain, rule) != want {
                missed.push(format!("{:?} {}", dir, bc.label()));
            }
        }
        count += 1;
    }
    PropertyResult {
        name: "periodic_straddling",
        passed: missed.is_empty(),
        detail: if missed.is_empty() {
            format!("{count} directions detected")
        } else {
            format!("{} failures, first {}", missed.len(), missed[0])
        },
    }
}

/// The 26 non-zero directions in {-1, 0, 1}^3.
pub fn straddle_directions() -> Vec<[i8; 3]> {
    let mut dirs = Vec::new();
    for x in -1..=1 {
        for y in -1..=1 {
            for z in -1..=1 {
                if (x, y, z) != (0, 0, 0) {
                    dirs.push([x, y, z]);
                }
            }
        }
    }
    dirs
}

/// Two particles 0.9 apart per crossed axis, straddling the walls in `dir`.
/// The first sits farther from the wall than the second.
pub fn straddling_pair(dir: [i8; 3], l: f64) -> (Vec3, Vec3) {
    let mut a = Vec3::splat(l / 2.0);
    let mut b = Vec3::splat(l / 2.0);
    let crossed = dir.iter().filter(|&&d| d != 0).count() as f64;
    // Keep the total separation below 1 even across a corner.
    let (far, near) = (0.55 / crossed.sqrt(), 0.35 / crossed.sqrt());
    for c in 0..3 {
        match dir[c] {
            1 => {
                a[c] = l - far;
                b[c] = near;
            }
            -1 => {
                a[c] = far;
                b[c] = l - near;
            }
            _ => b[c] += 0.01,
        }
    }
    (a, b)
}

/// In forces mode every interacting pair is applied exactly once, by its owner.
fn forces_exactly_once(seed: u64, rule: GhostRule) -> PropertyResult {
    let mut bad = None;
    let mut total = 0;
    for s in 0..4u64 {
        for bc in [BoundaryKind::Wall, BoundaryKind::Periodic] {
            let domain = Domain::new(200.0, bc).expect("valid domain");
            let spec = DistributionSpec {
                particles: ParticleDist::Disordered,
                radii: RadiusDist::LogNormal {
                    mu: 1.0,
                    sigma: 1.0,
                    clamp_lo: 1.0,
                    clamp_hi: 40.0,
                },
                seed: seed.wrapping_add(s),
            };
            let mut ps = generate_particles(&spec, 400, &domain).expect("valid distribution");
            let bvh = Bvh::build(&ps, &domain, DEFAULT_LEAF_SIZE);
            let engine =
                FrnnEngine::new(QueryMode::Forces, Reduction::Deterministic).with_ghost_rule(rule);
            let mut ledger = Vec::new();
            if engine
                .query_phase_with_ledger(
                    &bvh,
                    &mut ps,
                    &domain,
                    &LjParams::default(),
                    Some(&mut ledger),
                )
                .is_err()
            {
                bad.get_or_insert_with(|| format!("query failed, seed {}", spec.seed));
                continue;
            }
            let radii = ps.radii();
            let mut seen: Vec<(u32, u32)> =
                ledger.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
            seen.sort_unstable();
            let expected = brute_force_neighbors(&ps, &domain).expect("under oracle limit");
            let owners_ok = ledger
                .iter()
                .all(|&(i, j)| owns(i as usize, j as usize, radii[i as usize], radii[j as usize]));
            total += expected.len();
            if seen != expected || !owners_ok {
                bad.get_or_insert_with(|| {
                    format!("ledger mismatch, seed {} {}", spec.seed, bc.label())
                });
            }
        }
    }
    PropertyResult {
        name: "forces_exactly_once",
        passed: bad.is_none(),
        detail: bad.unwrap_or_else(|| format!("{total} pairs applied once each")),
    }
}

/// Forces, list and perse produce bit-identical trajectories.
fn mode_equivalence(seed: u64, rule: GhostRule) -> PropertyResult {
    let domain = Domain::new(30.0, BoundaryKind::Periodic).expect("valid domain");
    let spec = DistributionSpec {
        particles: ParticleDist::Disordered,
        radii: RadiusDist::Const(2.5),
        seed,
    };
    let mut start = generate_particles(&spec, 500, &domain).expect("valid distribution");
    crate::distributions::thermalize(&mut start, 2.0, seed);
    let lj = LjParams {
        dt: 1e-3,
        ..LjParams::default()
    };
    let run = |mode: QueryMode| -> Option<ParticleSystem> {
        let engine = FrnnEngine::new(mode, Reduction::Deterministic).with_ghost_rule(rule);
        let mut ps = start.clone();
        for _ in 0..5 {
            let bvh = Bvh::build(&ps, &domain, DEFAULT_LEAF_SIZE);
            engine.query_phase(&bvh, &mut ps, &domain, &lj).ok()?;
            engine.integrate_phase(&mut ps, &domain, lj.dt).ok()?;
        }
        Some(ps)
    };
    let forces = run(QueryMode::Forces);
    let list = run(QueryMode::NeighborList { k_max: 256 });
    let perse = run(QueryMode::Perse);
    let cell = crate::reference::step_cell(&start, &domain, &lj)
        .ok()
        .and_then(|mut ps| {
            for _ in 1..5 {
                ps = crate::reference::step_cell(&ps, &domain, &lj).ok()?;
            }
            Some(ps)
        });
    let same = |a: &Option<ParticleSystem>| match (a, &forces) {
        (Some(a), Some(f)) => a.positions == f.positions && a.velocities == f.velocities,
        _ => false,
    };
    let passed = same(&list) && same(&perse) && same(&cell);
    PropertyResult {
        name: "mode_equivalence",
        passed,
        detail: if passed {
            "forces, list, perse and cell agree bitwise over 5 steps".into()
        } else {
            format!(
                "list {} perse {} cell {}",
                same(&list),
                same(&perse),
                same(&cell)
            )
        },
    }
}

/// The closed-form optimum matches the integer argmin of the cost model.
fn k_u_opt_consistency(seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_max = 2000;
    let mut worst = 0u64;
    for _ in 0..200 {
        let t_u = 10f64.powf(rng.random_range(-4.0..-1.0));
        let t_r = t_u * 10f64.powf(rng.random_range(0.0..3.0));
        let delta_q = t_u * 10f64.powf(rng.random_range(-3.0..0.0));
        let p = CostModelParams {
            t_r,
            t_u,
            t_q: 1e-3,
            delta_q,
            n_steps: 1000,
        };
        let argmin = (0..=k_max)
            .min_by(|&a, &b| total_cost(&p, a).total_cmp(&total_cost(&p, b)))
            .expect("non-empty range");
        let k = k_u_opt(t_u, t_r, delta_q, 1e-12, k_max);
        worst = worst.max(k.abs_diff(argmin));
    }
    PropertyResult {
        name: "k_u_opt_consistency",
        passed: worst <= 1,
        detail: format!("200 cases, worst |k_u_opt - argmin| = {worst}"),
    }
}

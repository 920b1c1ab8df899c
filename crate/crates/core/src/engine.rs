//! Fixed-radius neighbor interaction passes over the BVH.
//!
//! Every particle issues a point query at its own position (plus ghost
//! queries at translated positions under periodic boundaries). A query from
//! `i` detects `j` when `i` lies inside `j`'s search sphere. A pair interacts
//! when the minimum-image separation is below `max(r_i, r_j)`; it is owned by
//! the endpoint with the strictly smaller radius, or by the lower index when
//! the radii are equal. The owner always detects its partner, so each pair is
//! seen by exactly one owner.
//!
//! Three ways to turn detections into motion:
//!
//! * [`QueryMode::NeighborList`] materialises a bounded per-particle list and
//!   runs a separate force kernel.
//! * [`QueryMode::Perse`] accumulates each particle's force privately and
//!   moves it inside the query pass. Uniform radii only.
//! * [`QueryMode::Forces`] lets the owner write `+F` and `-F` into a shared
//!   force array, then integrates in a separate pass.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rayon::prelude::*;

use crate::bvh::{Bvh, TraversalStats};
use crate::error::{Error, Result};
use crate::geometry::{min_image_delta, min_image_delta_and_shift, Domain, ParticleSystem, Vec3};
use crate::physics::{self, advance, force_from_delta, LjParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    NeighborList { k_max: usize },
    Perse,
    Forces,
}

impl QueryMode {
    pub fn label(&self) -> &'static str {
        match self {
            QueryMode::NeighborList { .. } => "list",
            QueryMode::Perse => "perse",
            QueryMode::Forces => "forces",
        }
    }
}

/// How per-pair forces are summed into per-particle totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Every particle sums its contributions sorted by partner index.
    /// Bit-identical across modes and thread counts.
    #[default]
    Deterministic,
    /// Contributions land in a shared array through atomic adds.
    Atomic,
}

/// True when a pair at squared separation `d2` interacts.
#[inline]
pub fn interacts(d2: f64, r_i: f64, r_j: f64) -> bool {
    let r = r_i.max(r_j);
    d2 < r * r
}

/// True when `i` is the endpoint responsible for the pair `(i, j)`.
#[inline]
pub fn owns(i: usize, j: usize, r_i: f64, r_j: f64) -> bool {
    r_i < r_j || (r_i == r_j && i < j)
}

/// Translations for the extra queries a particle issues under periodic boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhostQuerySet {
    offsets: [Vec3; 7],
    len: u8,
}

impl GhostQuerySet {
    pub const EMPTY: GhostQuerySet = GhostQuerySet {
        offsets: [Vec3::ZERO; 7],
        len: 0,
    };

    /// Set holding the first seven of `offsets`.
    pub fn from_offsets(offsets: &[Vec3]) -> Self {
        let mut set = Self::EMPTY;
        for &v in offsets.iter().take(7) {
            set.push(v);
        }
        set
    }

    pub fn as_slice(&self) -> &[Vec3] {
        &self.offsets[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn push(&mut self, v: Vec3) {
        self.offsets[self.len as usize] = v;
        self.len += 1;
    }
}

/// Signature of a ghost-offset generator; swappable for mutation testing.
pub type GhostRule = fn(Vec3, f64, &Domain) -> GhostQuerySet;

/// One offset per non-empty subset of the axes whose nearer wall lies within
/// `trigger_radius` of `p`, each pointing across that wall.
pub fn ghost_offsets(p: Vec3, trigger_radius: f64, domain: &Domain) -> GhostQuerySet {
    let mut set = GhostQuerySet::EMPTY;
    if !domain.is_periodic() {
        return set;
    }
    let l = domain.side_length;
    let mut axes = [(0usize, 0.0f64); 3];
    let mut k = 0;
    for c in 0..3 {
        let (to_low, to_high) = (p[c], l - p[c]);
        if to_low.min(to_high) < trigger_radius {
            axes[k] = (c, if to_low <= to_high { l } else { -l });
            k += 1;
        }
    }
    for mask in 1u32..(1 << k) {
        let mut off = Vec3::ZERO;
        for (bit, &(c, shift)) in axes[..k].iter().enumerate() {
            if mask & (1 << bit) != 0 {
                off[c] = shift;
            }
        }
        set.push(off);
    }
    set
}

/// Per-particle bounded neighbor list, `k_max` slots per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    k_max: usize,
    counts: Vec<u32>,
    entries: Vec<u32>,
}

impl NeighborList {
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        let start = i * self.k_max;
        &self.entries[start..start + self.counts[i] as usize]
    }

    /// Bytes held by the entry array.
    pub fn footprint_bytes(&self) -> usize {
        self.entries.len() * std::mem::size_of::<u32>()
    }
}

/// Pairs found in one pass, grouped by owning particle.
#[derive(Debug, Clone, Default)]
pub struct PairPass {
    pub owned: Vec<Vec<u32>>,
    pub stats: TraversalStats,
}

impl PairPass {
    pub fn interactions(&self) -> u64 {
        self.owned.iter().map(|v| v.len() as u64).sum()
    }

    /// Pairs as `(min, max)`, sorted.
    pub fn sorted_pairs(&self) -> Vec<(u32, u32)> {
        // Bucket by the smaller index, then sort each short bucket.
        let n = self.owned.len();
        let mut start = vec![0usize; n + 1];
        for (i, js) in self.owned.iter().enumerate() {
            for &j in js {
                start[i.min(j as usize) + 1] += 1;
            }
        }
        for k in 0..n {
            start[k + 1] += start[k];
        }
        let mut fill = start.clone();
        let mut pairs = vec![(0u32, 0u32); start[n]];
        for (i, js) in self.owned.iter().enumerate() {
            let i = i as u32;
            for &j in js {
                let lo = i.min(j) as usize;
                pairs[fill[lo]] = (i.min(j), i.max(j));
                fill[lo] += 1;
            }
        }
        for k in 0..n {
            pairs[start[k]..start[k + 1]].sort_unstable();
        }
        pairs
    }
}

/// What a query phase reports back to the driver.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QueryOutput {
    /// Unique interacting pairs.
    pub interactions: u64,
    pub stats: TraversalStats,
    /// Bytes of neighbor-list storage, zero for list-free modes.
    pub list_bytes: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FrnnEngine {
    pub mode: QueryMode,
    pub reduction: Reduction,
    ghost_rule: GhostRule,
}

impl FrnnEngine {
    pub fn new(mode: QueryMode, reduction: Reduction) -> Self {
        FrnnEngine {
            mode,
            reduction,
            ghost_rule: ghost_offsets,
        }
    }

    /// Replaces the ghost-offset generator.
    pub fn with_ghost_rule(mut self, rule: GhostRule) -> Self {
        self.ghost_rule = rule;
        self
    }

    /// Rejects systems this mode cannot handle.
    pub fn check_supported(&self, ps: &ParticleSystem, domain: &Domain) -> Result<()> {
        if self.mode == QueryMode::Perse && !ps.uniform_radius() {
            return Err(Error::ModeUnsupported {
                mode: "perse",
                reason: "requires a uniform search radius".into(),
            });
        }
        check_periodic_radius(ps, domain)
    }

    /// Visits every partner `j` that `i`'s queries detect, with the
    /// minimum-image displacement from `i` to `j`. With `owner_only`, only
    /// the partners of pairs `i` owns.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn query_particle<F: FnMut(usize, Vec3)>(
        &self,
        bvh: &Bvh,
        ps: &ParticleSystem,
        domain: &Domain,
        i: usize,
        stats: &mut TraversalStats,
        owner_only: bool,
        mut on_hit: F,
    ) {
        let p = ps.positions[i];
        let radii = ps.radii();
        let ri = radii[i];
        let periodic = domain.is_periodic();
        // An owner's partners all have radii at least its own.
        let min_radius = if owner_only { ri } else { f64::NEG_INFINITY };
        let keep = |j: usize| !owner_only || owns(i, j, ri, radii[j]);
        let mut detect = |j: usize, expected_shift: [i8; 3]| -> bool {
            let (d, shift) = min_image_delta_and_shift(p, ps.positions[j], domain);
            if shift != expected_shift {
                return false;
            }
            if d.norm_squared() < radii[j] * radii[j] {
                on_hit(j, d);
                true
            } else {
                false
            }
        };
        bvh.for_each_candidate(p, min_radius, i, stats, keep, |j| detect(j, [0; 3]));
        if periodic {
            let l = domain.side_length;
            for off in (self.ghost_rule)(p, ps.max_radius(), domain).as_slice() {
                // A hit at p + off is the image of j shifted by -off.
                let shift = [0, 1, 2].map(|c| (-off[c] / l).round() as i8);
                bvh.for_each_candidate(p + *off, min_radius, i, stats, keep, |j| detect(j, shift));
            }
        }
    }

    /// Finds every interacting pair once, grouped by owner.
    pub fn pair_pass(&self, bvh: &Bvh, ps: &ParticleSystem, domain: &Domain) -> Result<PairPass> {
        check_periodic_radius(ps, domain)?;
        let per_particle: Vec<(Vec<u32>, TraversalStats)> = (0..ps.len())
            .into_par_iter()
            .map(|i| {
                let mut st = TraversalStats::default();
                let mut owned = Vec::new();
                self.query_particle(bvh, ps, domain, i, &mut st, true, |j, _| {
                    owned.push(j as u32)
                });
                (owned, st)
            })
            .collect();
        let mut pass = PairPass {
            owned: Vec::with_capacity(ps.len()),
            stats: TraversalStats::default(),
        };
        for (owned, st) in per_particle {
            pass.owned.push(owned);
            pass.stats += st;
        }
        Ok(pass)
    }

    /// Runs the query phase. Forces and list modes leave accumulated forces in
    /// `ps.forces`; perse also moves the particles.
    pub fn query_phase(
        &self,
        bvh: &Bvh,
        ps: &mut ParticleSystem,
        domain: &Domain,
        lj: &LjParams,
    ) -> Result<QueryOutput> {
        self.query_phase_with_ledger(bvh, ps, domain, lj, None)
    }

    /// As [`FrnnEngine::query_phase`], additionally recording `(owner, partner)`
    /// for every pair whose force is applied (forces mode).
    pub fn query_phase_with_ledger(
        &self,
        bvh: &Bvh,
        ps: &mut ParticleSystem,
        domain: &Domain,
        lj: &LjParams,
        ledger: Option<&mut Vec<(u32, u32)>>,
    ) -> Result<QueryOutput> {
        self.check_supported(ps, domain)?;
        match self.mode {
            QueryMode::Forces => self.forces_pass(bvh, ps, domain, lj, ledger),
            QueryMode::Perse => self.perse_pass(bvh, ps, domain, lj),
            QueryMode::NeighborList { k_max } => {
                let (list, pass) = self.build_list(bvh, ps, domain, k_max)?;
                self.list_forces(&list, ps, domain, lj);
                Ok(QueryOutput {
                    interactions: pass.interactions(),
                    stats: pass.stats,
                    list_bytes: list.footprint_bytes(),
                })
            }
        }
    }

    /// Moves particles after a forces or list query phase. No-op for perse.
    pub fn integrate_phase(&self, ps: &mut ParticleSystem, domain: &Domain, dt: f64) -> Result<()> {
        match self.mode {
            QueryMode::Perse => Ok(()),
            _ => physics::integrate(ps, domain, dt),
        }
    }

    fn forces_pass(
        &self,
        bvh: &Bvh,
        ps: &mut ParticleSystem,
        domain: &Domain,
        lj: &LjParams,
        ledger: Option<&mut Vec<(u32, u32)>>,
    ) -> Result<QueryOutput> {
        if self.reduction == Reduction::Atomic && ledger.is_none() {
            return Ok(self.forces_pass_streaming(bvh, ps, domain, lj));
        }
        let radii = ps.radii();
        let sys: &ParticleSystem = ps;
        // Owner-side force on the owner, per pair.
        let per_owner: Vec<(Vec<(u32, Vec3)>, TraversalStats)> = (0..sys.len())
            .into_par_iter()
            .map(|i| {
                let mut st = TraversalStats::default();
                let mut owned = Vec::new();
                self.query_particle(bvh, sys, domain, i, &mut st, true, |j, d| {
                    owned.push((
                        j as u32,
                        force_from_delta(d, i < j, radii[i].max(radii[j]), lj),
                    ));
                });
                (owned, st)
            })
            .collect();

        let mut out = QueryOutput::default();
        for (owned, st) in &per_owner {
            out.interactions += owned.len() as u64;
            out.stats += *st;
        }
        if let Some(ledger) = ledger {
            for (i, (owned, _)) in per_owner.iter().enumerate() {
                ledger.extend(owned.iter().map(|&(j, _)| (i as u32, j)));
            }
        }

        let n = sys.len();
        let forces = match self.reduction {
            Reduction::Deterministic => {
                let mut contrib = vec![Vec::new(); n];
                for (i, (owned, _)) in per_owner.iter().enumerate() {
                    for &(j, f) in owned {
                        contrib[i].push((j, f));
                        contrib[j as usize].push((i as u32, -f));
                    }
                }
                contrib.into_par_iter().map(sum_sorted).collect()
            }
            Reduction::Atomic => {
                let acc = AtomicForces::new(n);
                per_owner
                    .par_iter()
                    .enumerate()
                    .for_each(|(i, (owned, _))| {
                        for &(j, f) in owned {
                            acc.add(i, f);
                            acc.add(j as usize, -f);
                        }
                    });
                acc.into_vec()
            }
        };
        add_forces(&mut ps.forces, &forces);
        Ok(out)
    }

    /// Atomic forces pass that never materialises the pairs.
    fn forces_pass_streaming(
        &self,
        bvh: &Bvh,
        ps: &mut ParticleSystem,
        domain: &Domain,
        lj: &LjParams,
    ) -> QueryOutput {
        let sys: &ParticleSystem = ps;
        let radii = sys.radii();
        let acc = AtomicForces::new(sys.len());
        let out = (0..sys.len())
            .into_par_iter()
            .map(|i| {
                let mut st = TraversalStats::default();
                let mut own = Vec3::ZERO;
                let mut owned = 0u64;
                self.query_particle(bvh, sys, domain, i, &mut st, true, |j, d| {
                    let f = force_from_delta(d, i < j, radii[i].max(radii[j]), lj);
                    own += f;
                    acc.add(j, -f);
                    owned += 1;
                });
                acc.add(i, own);
                QueryOutput {
                    interactions: owned,
                    stats: st,
                    list_bytes: 0,
                }
            })
            .reduce(QueryOutput::default, |mut a, b| {
                a.interactions += b.interactions;
                a.stats += b.stats;
                a
            });
        add_forces(&mut ps.forces, &acc.into_vec());
        out
    }

    /// Per-particle neighbor counts without storing any pairs.
    fn count_neighbors(&self, bvh: &Bvh, ps: &ParticleSystem, domain: &Domain) -> Vec<u32> {
        let counts: Vec<AtomicU32> = (0..ps.len()).map(|_| AtomicU32::new(0)).collect();
        (0..ps.len()).into_par_iter().for_each(|i| {
            let mut own = 0;
            self.query_particle(
                bvh,
                ps,
                domain,
                i,
                &mut TraversalStats::default(),
                true,
                |j, _| {
                    own += 1;
                    counts[j].fetch_add(1, Ordering::Relaxed);
                },
            );
            counts[i].fetch_add(own, Ordering::Relaxed);
        });
        counts.into_iter().map(AtomicU32::into_inner).collect()
    }

    fn perse_pass(
        &self,
        bvh: &Bvh,
        ps: &mut ParticleSystem,
        domain: &Domain,
        lj: &LjParams,
    ) -> Result<QueryOutput> {
        let radius = ps.radii()[0];
        let sys: &ParticleSystem = ps;
        let deterministic = self.reduction == Reduction::Deterministic;
        // Reads come from `sys` (pre-step state); results go to a fresh buffer.
        let results: Vec<(Vec3, Vec3, u64, TraversalStats)> = (0..sys.len())
            .into_par_iter()
            .map(|i| {
                let mut st = TraversalStats::default();
                let mut hits: Vec<(u32, Vec3)> = Vec::new();
                let mut force = Vec3::ZERO;
                let mut owned = 0u64;
                self.query_particle(bvh, sys, domain, i, &mut st, false, |j, d| {
                    let f = force_from_delta(d, i < j, radius, lj);
                    if i < j {
                        owned += 1;
                    }
                    if deterministic {
                        hits.push((j as u32, f));
                    } else {
                        force += f;
                    }
                });
                if deterministic {
                    force = sum_sorted(hits);
                }
                let (x, v) = advance(
                    sys.positions[i],
                    sys.velocities[i],
                    sys.forces[i] + force,
                    domain,
                    lj.dt,
                );
                (x, v, owned, st)
            })
            .collect();

        let mut out = QueryOutput::default();
        if let Some(bad) = results.iter().position(|r| !r.0.is_finite()) {
            return Err(Error::NonFiniteForce { particle: bad });
        }
        for (i, (x, v, owned, st)) in results.into_iter().enumerate() {
            ps.positions[i] = x;
            ps.velocities[i] = v;
            ps.forces[i] = Vec3::ZERO;
            out.interactions += owned;
            out.stats += st;
        }
        Ok(out)
    }

    /// Fills the bounded neighbor list, failing on the lowest-index overflow.
    pub fn build_list(
        &self,
        bvh: &Bvh,
        ps: &ParticleSystem,
        domain: &Domain,
        k_max: usize,
    ) -> Result<(NeighborList, PairPass)> {
        check_periodic_radius(ps, domain)?;
        // Count first so an overflowing configuration never stores its pairs.
        let counts = self.count_neighbors(bvh, ps, domain);
        if let Some(i) = counts.iter().position(|&c| c as usize > k_max) {
            return Err(Error::NeighborListOverflow {
                particle: i,
                required: counts[i] as usize,
                capacity: k_max,
            });
        }
        let pass = self.pair_pass(bvh, ps, domain)?;
        let n = ps.len();
        let mut list = NeighborList {
            k_max,
            counts: vec![0; n],
            entries: vec![0; n * k_max],
        };
        for (i, js) in pass.owned.iter().enumerate() {
            for &j in js {
                list.push(i, j);
                list.push(j as usize, i as u32);
            }
        }
        Ok((list, pass))
    }

    fn list_forces(
        &self,
        list: &NeighborList,
        ps: &mut ParticleSystem,
        domain: &Domain,
        lj: &LjParams,
    ) {
        let sys: &ParticleSystem = ps;
        let radii = sys.radii();
        let deterministic = self.reduction == Reduction::Deterministic;
        let forces: Vec<Vec3> = (0..sys.len())
            .into_par_iter()
            .map(|i| {
                let p = sys.positions[i];
                let contrib = list.neighbors(i).iter().map(|&j| {
                    let ju = j as usize;
                    let d = min_image_delta(p, sys.positions[ju], domain);
                    (j, force_from_delta(d, i < ju, radii[i].max(radii[ju]), lj))
                });
                if deterministic {
                    sum_sorted(contrib.collect())
                } else {
                    contrib.fold(Vec3::ZERO, |acc, (_, f)| acc + f)
                }
            })
            .collect();
        add_forces(&mut ps.forces, &forces);
    }
}

impl NeighborList {
    #[inline]
    fn push(&mut self, i: usize, j: u32) {
        let c = self.counts[i] as usize;
        self.entries[i * self.k_max + c] = j;
        self.counts[i] += 1;
    }
}

fn check_periodic_radius(ps: &ParticleSystem, domain: &Domain) -> Result<()> {
    if domain.is_periodic() && 2.0 * ps.max_radius() >= domain.side_length {
        return Err(Error::config(
            "radius-dist",
            format!(
                "periodic boxes need every radius below L/2 (max radius {}, L = {})",
                ps.max_radius(),
                domain.side_length
            ),
        ));
    }
    Ok(())
}

/// Sums contributions in increasing partner order.
fn sum_sorted(mut contrib: Vec<(u32, Vec3)>) -> Vec3 {
    contrib.sort_unstable_by_key(|c| c.0);
    contrib.iter().fold(Vec3::ZERO, |acc, c| acc + c.1)
}

fn add_forces(dst: &mut [Vec3], src: &[Vec3]) {
    dst.par_iter_mut().zip(src.par_iter()).for_each(|(d, s)| {
        // Keep a zero accumulator bit-exact rather than adding -0.0 noise.
        *d = if *d == Vec3::ZERO { *s } else { *d + *s };
    });
}

/// Force array with lock-free `f64` accumulation.
struct AtomicForces(Vec<AtomicU64>);

impl AtomicForces {
    fn new(n: usize) -> Self {
        AtomicForces((0..3 * n).map(|_| AtomicU64::new(0f64.to_bits())).collect())
    }

    #[inline]
    fn add(&self, i: usize, f: Vec3) {
        for c in 0..3 {
            let cell = &self.0[3 * i + c];
            let mut cur = cell.load(Ordering::Relaxed);
            loop {
                let next = (f64::from_bits(cur) + f[c]).to_bits();
                match cell.compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
                    Ok(_) => break,
                    Err(actual) => cur = actual,
                }
            }
        }
    }

    fn into_vec(self) -> Vec<Vec3> {
        self.0
            .chunks_exact(3)
            .map(|c| {
                let v = |k: usize| f64::from_bits(c[k].load(Ordering::Relaxed));
                Vec3::new(v(0), v(1), v(2))
            })
            .collect()
    }
}

/// Builds the bounded neighbor list for the current positions.
pub fn step_neighbor_list(
    bvh: &Bvh,
    ps: &ParticleSystem,
    domain: &Domain,
    k_max: usize,
) -> Result<NeighborList> {
    FrnnEngine::new(QueryMode::NeighborList { k_max }, Reduction::Deterministic)
        .build_list(bvh, ps, domain, k_max)
        .map(|(list, _)| list)
}

/// One perse step: private accumulation and in-pass integration.
pub fn step_perse(
    bvh: &Bvh,
    ps: &ParticleSystem,
    domain: &Domain,
    lj: &LjParams,
) -> Result<ParticleSystem> {
    let mut next = ps.clone();
    FrnnEngine::new(QueryMode::Perse, Reduction::Deterministic)
        .query_phase(bvh, &mut next, domain, lj)?;
    Ok(next)
}

/// One forces step: owner-side accumulation into both endpoints, then integration.
pub fn step_forces(
    bvh: &Bvh,
    ps: &ParticleSystem,
    domain: &Domain,
    lj: &LjParams,
) -> Result<ParticleSystem> {
    let mut next = ps.clone();
    let engine = FrnnEngine::new(QueryMode::Forces, Reduction::Deterministic);
    engine.query_phase(bvh, &mut next, domain, lj)?;
    engine.integrate_phase(&mut next, domain, lj.dt)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::DEFAULT_LEAF_SIZE;
    use crate::distributions::{generate_particles, DistributionSpec, ParticleDist, RadiusDist};
    use crate::geometry::BoundaryKind;

    fn domain(l: f64, bc: BoundaryKind) -> Domain {
        Domain::new(l, bc).unwrap()
    }

    fn lj() -> LjParams {
        LjParams {
            dt: 1e-3,
            ..LjParams::default()
        }
    }

    /// O(n^2) reference with the same predicate.
    fn brute_pairs(ps: &ParticleSystem, d: &Domain) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for i in 0..ps.len() {
            for j in i + 1..ps.len() {
                let d2 = min_image_delta(ps.positions[i], ps.positions[j], d).norm_squared();
                if interacts(d2, ps.radii()[i], ps.radii()[j]) {
                    out.push((i as u32, j as u32));
                }
            }
        }
        out
    }

    #[test]
    fn interior_point_has_no_ghosts() {
        let d = domain(1000.0, BoundaryKind::Periodic);
        assert!(ghost_offsets(Vec3::splat(500.0), 10.0, &d).is_empty());
        assert!(
            ghost_offsets(Vec3::splat(1.0), 10.0, &domain(1000.0, BoundaryKind::Wall)).is_empty()
        );
    }

    #[test]
    fn corner_in_two_axes_launches_three() {
        let d = domain(1000.0, BoundaryKind::Periodic);
        let g = ghost_offsets(Vec3::new(2.0, 3.0, 500.0), 10.0, &d);
        let mut got: Vec<(f64, f64, f64)> = g.as_slice().iter().map(|v| (v.x, v.y, v.z)).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            got,
            vec![
                (0.0, 1000.0, 0.0),
                (1000.0, 0.0, 0.0),
                (1000.0, 1000.0, 0.0)
            ]
        );
    }

    #[test]
    fn three_walls_launch_seven() {
        let d = domain(1000.0, BoundaryKind::Periodic);
        let g = ghost_offsets(Vec3::new(999.0, 2.0, 995.0), 10.0, &d);
        assert_eq!(g.len(), 7);
        assert!(g.as_slice().contains(&Vec3::new(-1000.0, 1000.0, -1000.0)));
    }

    #[test]
    fn trigger_is_strict() {
        let d = domain(1000.0, BoundaryKind::Periodic);
        assert!(ghost_offsets(Vec3::new(10.0, 500.0, 500.0), 10.0, &d).is_empty());
        assert_eq!(
            ghost_offsets(Vec3::new(9.999, 500.0, 500.0), 10.0, &d).len(),
            1
        );
    }

    fn two(dist: f64, r: [f64; 2]) -> ParticleSystem {
        ParticleSystem::new(
            vec![
                Vec3::new(50.0, 50.0, 50.0),
                Vec3::new(50.0 + dist, 50.0, 50.0),
            ],
            r.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn close_pair_lists_each_other() {
        let d = domain(100.0, BoundaryKind::Wall);
        let ps = two(0.5, [1.0, 1.0]);
        let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
        let list = step_neighbor_list(&bvh, &ps, &d, 8).unwrap();
        assert_eq!(list.neighbors(0), &[1]);
        assert_eq!(list.neighbors(1), &[0]);
    }

    #[test]
    fn list_overflow_names_particle() {
        let d = domain(100.0, BoundaryKind::Wall);
        let mut pos = vec![Vec3::splat(50.0)];
        pos.extend((0..5).map(|k| Vec3::new(50.0 + 0.1 * (k + 1) as f64, 50.0, 50.0)));
        let ps = ParticleSystem::new(pos, vec![1.0; 6]).unwrap();
        let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
        assert_eq!(
            step_neighbor_list(&bvh, &ps, &d, 4).unwrap_err(),
            Error::NeighborListOverflow {
                particle: 0,
                required: 5,
                capacity: 4
            }
        );
    }

    #[test]
    fn isolated_particle_drifts() {
        let d = domain(100.0, BoundaryKind::Wall);
        let mut ps = two(30.0, [1.0, 1.0]);
        ps.velocities[0] = Vec3::new(1.0, 2.0, 0.0);
        let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
        let next = step_perse(&bvh, &ps, &d, &lj()).unwrap();
        assert_eq!(
            next.positions[0],
            ps.positions[0] + Vec3::new(1.0, 2.0, 0.0) * 1e-3
        );
        assert_eq!(next.positions[1], ps.positions[1]);
    }

    #[test]
    fn symmetric_pair_moves_apart_equally() {
        let d = domain(100.0, BoundaryKind::Wall);
        let ps = two(0.9, [1.5, 1.5]);
        let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
        for next in [
            step_perse(&bvh, &ps, &d, &lj()).unwrap(),
            step_forces(&bvh, &ps, &d, &lj()).unwrap(),
        ] {
            let d0 = next.positions[0] - ps.positions[0];
            let d1 = next.positions[1] - ps.positions[1];
            assert!(d0.x < 0.0);
            assert!((d0.x + d1.x).abs() < 1e-15);
            assert_eq!((d0.y, d0.z, d1.y, d1.z), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn perse_rejects_variable_radius() {
        let d = domain(100.0, BoundaryKind::Wall);
        let ps = two(0.9, [1.0, 2.0]);
        let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
        assert_eq!(
            step_perse(&bvh, &ps, &d, &lj()).unwrap_err().kind(),
            "mode_unsupported"
        );
    }

    #[test]
    fn smaller_radius_owns_asymmetric_pair() {
        // Particle 1 has the small radius and is the only one whose query
        // lands inside the other's sphere.
        let d = domain(100.0, BoundaryKind::Wall);
        let ps = two(3.0, [5.0, 2.0]);
        let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
        let engine = FrnnEngine::new(QueryMode::Forces, Reduction::Deterministic);
        let pass = engine.pair_pass(&bvh, &ps, &d).unwrap();
        assert!(pass.owned[0].is_empty());
        assert_eq!(pass.owned[1], vec![0]);

        let mut sys = ps.clone();
        let mut ledger = Vec::new();
        engine
            .query_phase_with_ledger(&bvh, &mut sys, &d, &lj(), Some(&mut ledger))
            .unwrap();
        assert_eq!(ledger, vec![(1, 0)]);
        assert_eq!(sys.forces[0], -sys.forces[1]);
        assert!(sys.forces[0] != Vec3::ZERO);
    }

    #[test]
    fn equal_radii_owner_is_lower_index() {
        let d = domain(100.0, BoundaryKind::Wall);
        let ps = two(1.2, [2.0, 2.0]);
        let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
        let mut sys = ps.clone();
        let mut ledger = Vec::new();
        FrnnEngine::new(QueryMode::Forces, Reduction::Deterministic)
            .query_phase_with_ledger(&bvh, &mut sys, &d, &lj(), Some(&mut ledger))
            .unwrap();
        assert_eq!(ledger, vec![(0, 1)]);
        assert_eq!(sys.forces[0] + sys.forces[1], Vec3::ZERO);
    }

    fn random_system(
        n: usize,
        radii: RadiusDist,
        pdist: ParticleDist,
        seed: u64,
        l: f64,
    ) -> ParticleSystem {
        let spec = DistributionSpec {
            particles: pdist,
            radii,
            seed,
        };
        generate_particles(&spec, n, &domain(l, BoundaryKind::Wall)).unwrap()
    }

    #[test]
    fn pair_pass_matches_brute_force_both_bcs() {
        for seed in 0..20 {
            for bc in [BoundaryKind::Wall, BoundaryKind::Periodic] {
                let d = domain(200.0, bc);
                let ps = random_system(
                    400,
                    RadiusDist::Uniform { lo: 1.0, hi: 25.0 },
                    ParticleDist::Disordered,
                    seed,
                    200.0,
                );
                let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
                let pass = FrnnEngine::new(QueryMode::Forces, Reduction::Deterministic)
                    .pair_pass(&bvh, &ps, &d)
                    .unwrap();
                assert_eq!(
                    pass.sorted_pairs(),
                    brute_pairs(&ps, &d),
                    "seed {seed} {bc:?}"
                );
            }
        }
    }

    #[test]
    fn neighbor_list_equals_brute_adjacency() {
        let d = domain(100.0, BoundaryKind::Periodic);
        let ps = random_system(
            300,
            RadiusDist::Uniform { lo: 1.0, hi: 12.0 },
            ParticleDist::Disordered,
            4,
            100.0,
        );
        let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
        let list = step_neighbor_list(&bvh, &ps, &d, 256).unwrap();
        let mut adj = vec![Vec::new(); ps.len()];
        for (i, j) in brute_pairs(&ps, &d) {
            adj[i as usize].push(j);
            adj[j as usize].push(i);
        }
        for (i, expected) in adj.iter().enumerate() {
            let mut got = list.neighbors(i).to_vec();
            got.sort_unstable();
            assert_eq!(&got, expected);
        }
    }

    #[test]
    fn modes_agree_bitwise_on_dense_lattice() {
        for bc in [BoundaryKind::Wall, BoundaryKind::Periodic] {
            let d = domain(12.0, bc);
            let mut ps =
                random_system(1000, RadiusDist::Const(2.5), ParticleDist::Lattice, 1, 12.0);
            crate::distributions::thermalize(&mut ps, 1.0, 5);
            let mut states: Vec<ParticleSystem> = Vec::new();
            for mode in [
                QueryMode::NeighborList { k_max: 128 },
                QueryMode::Perse,
                QueryMode::Forces,
            ] {
                let engine = FrnnEngine::new(mode, Reduction::Deterministic);
                let mut sys = ps.clone();
                for _ in 0..10 {
                    let bvh = Bvh::build(&sys, &d, DEFAULT_LEAF_SIZE);
                    engine.query_phase(&bvh, &mut sys, &d, &lj()).unwrap();
                    engine.integrate_phase(&mut sys, &d, 1e-3).unwrap();
                }
                states.push(sys);
            }
            assert_eq!(states[0].positions, states[1].positions);
            assert_eq!(states[1].positions, states[2].positions);
            assert!(states[0].positions != ps.positions);
        }
    }

    #[test]
    fn atomic_reduction_close_to_deterministic() {
        let d = domain(100.0, BoundaryKind::Periodic);
        let ps = random_system(
            2000,
            RadiusDist::Uniform { lo: 1.0, hi: 6.0 },
            ParticleDist::cluster(),
            8,
            100.0,
        );
        let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
        let mut a = ps.clone();
        let mut b = ps.clone();
        FrnnEngine::new(QueryMode::Forces, Reduction::Deterministic)
            .query_phase(&bvh, &mut a, &d, &lj())
            .unwrap();
        FrnnEngine::new(QueryMode::Forces, Reduction::Atomic)
            .query_phase(&bvh, &mut b, &d, &lj())
            .unwrap();
        let scale = a.forces.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
        for (fa, fb) in a.forces.iter().zip(&b.forces) {
            assert!((*fa - *fb).max_abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn periodic_net_force_vanishes() {
        let d = domain(60.0, BoundaryKind::Periodic);
        let ps = random_system(
            1500,
            RadiusDist::Uniform { lo: 1.0, hi: 4.0 },
            ParticleDist::Disordered,
            2,
            60.0,
        );
        let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
        let mut sys = ps.clone();
        FrnnEngine::new(QueryMode::Forces, Reduction::Deterministic)
            .query_phase(&bvh, &mut sys, &d, &lj())
            .unwrap();
        let net = sys.forces.iter().fold(Vec3::ZERO, |a, f| a + *f);
        let max = sys.forces.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
        assert!(max > 0.0);
        assert!(net.max_abs() <= 1e-9 * max);
    }

    #[test]
    fn periodic_rejects_radius_over_half_box() {
        let d = domain(100.0, BoundaryKind::Periodic);
        let ps = two(1.0, [50.0, 1.0]);
        let bvh = Bvh::build(&ps, &d, DEFAULT_LEAF_SIZE);
        let e = FrnnEngine::new(QueryMode::Forces, Reduction::Deterministic);
        assert_eq!(e.pair_pass(&bvh, &ps, &d).unwrap_err().kind(), "config");
    }
}

//! Reference neighbor finders: all-pairs brute force and a uniform cell grid.
//!
//! Both apply the same pair predicate and force law as the BVH engine and
//! serve as test oracles and as the timing baseline.

use rayon::prelude::*;

use crate::bvh::morton_code;
use crate::engine::interacts;
use crate::error::{Error, Result};
use crate::geometry::{min_image_delta, Domain, ParticleSystem, Vec3};
use crate::physics::{self, force_from_delta, LjParams};

pub const DEFAULT_ORACLE_LIMIT: usize = 5000;

/// Every interacting pair `(i, j)`, `i < j`, in lexicographic order.
pub fn brute_force_neighbors(ps: &ParticleSystem, domain: &Domain) -> Result<Vec<(u32, u32)>> {
    brute_force_neighbors_with_limit(ps, domain, DEFAULT_ORACLE_LIMIT)
}

pub fn brute_force_neighbors_with_limit(
    ps: &ParticleSystem,
    domain: &Domain,
    limit: usize,
) -> Result<Vec<(u32, u32)>> {
    let n = ps.len();
    if n > limit {
        return Err(Error::OracleLimit { n, limit });
    }
    let radii = ps.radii();
    let chunks: Vec<Vec<(u32, u32)>> = (0..n)
        .into_par_iter()
        .with_min_len(64)
        .fold(Vec::new, |mut out, i| {
            let p = ps.positions[i];
            let ri = radii[i];
            let rest = (i as u32 + 1..).zip(ps.positions[i + 1..].iter().zip(&radii[i + 1..]));
            if domain.is_periodic() {
                for (j, (&q, &rj)) in rest {
                    if interacts(min_image_delta(p, q, domain).norm_squared(), ri, rj) {
                        out.push((i as u32, j));
                    }
                }
            } else {
                for (j, (&q, &rj)) in rest {
                    if interacts((q - p).norm_squared(), ri, rj) {
                        out.push((i as u32, j));
                    }
                }
            }
            out
        })
        .collect();
    Ok(join_chunks(chunks))
}

/// Concatenates per-worker outputs, reusing the buffer when there is only one.
fn join_chunks(mut chunks: Vec<Vec<(u32, u32)>>) -> Vec<(u32, u32)> {
    if chunks.len() == 1 {
        chunks.pop().unwrap()
    } else {
        chunks.concat()
    }
}

/// Uniform grid over the box with particles bucketed in Z-order of their cell.
///
/// Only occupied cells are stored; `cell_keys` is sorted so lookups are a
/// binary search.
#[derive(Debug, Clone)]
pub struct CellGrid {
    pub cell_size: f64,
    pub dims: u32,
    cell_keys: Vec<u32>,
    cell_start: Vec<u32>,
    cell_count: Vec<u32>,
    sorted: Vec<u32>,
}

impl CellGrid {
    pub fn build(ps: &ParticleSystem, domain: &Domain) -> CellGrid {
        let l = domain.side_length;
        let r = ps.max_radius().min(l);
        let dims = ((l / r).floor() as u32).clamp(1, 1024);
        let cell_size = l / dims as f64;

        let mut keyed: Vec<(u32, u32)> = ps
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| (Self::key_of(Self::coords_of(*p, cell_size, dims)), i as u32))
            .collect();
        keyed.sort_unstable();

        let mut grid = CellGrid {
            cell_size,
            dims,
            cell_keys: Vec::new(),
            cell_start: Vec::new(),
            cell_count: Vec::new(),
            sorted: Vec::with_capacity(keyed.len()),
        };
        for (slot, &(key, idx)) in keyed.iter().enumerate() {
            if grid.cell_keys.last() != Some(&key) {
                grid.cell_keys.push(key);
                grid.cell_start.push(slot as u32);
                grid.cell_count.push(0);
            }
            *grid.cell_count.last_mut().unwrap() += 1;
            grid.sorted.push(idx);
        }
        grid
    }

    fn coords_of(p: Vec3, cell_size: f64, dims: u32) -> [u32; 3] {
        [0, 1, 2].map(|c| ((p[c] / cell_size).floor().max(0.0) as u32).min(dims - 1))
    }

    /// Morton key of a cell coordinate triple.
    fn key_of(c: [u32; 3]) -> u32 {
        // morton_code quantizes to 1024 cells over [0, side); feed it cell centers.
        morton_code(
            Vec3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5),
            1024.0,
        )
    }

    pub fn occupied_cells(&self) -> usize {
        self.cell_keys.len()
    }

    pub fn footprint_bytes(&self) -> usize {
        4 * (3 * self.cell_keys.len() + self.sorted.len())
    }

    /// Particle indices in Z-order of their cells.
    pub fn sorted_indices(&self) -> &[u32] {
        &self.sorted
    }

    fn cell(&self, c: [u32; 3]) -> &[u32] {
        match self.cell_keys.binary_search(&Self::key_of(c)) {
            Ok(k) => {
                let s = self.cell_start[k] as usize;
                &self.sorted[s..s + self.cell_count[k] as usize]
            }
            Err(_) => &[],
        }
    }

    /// Calls `f` on each distinct cell of the 27-cell stencil around `p`.
    fn for_each_stencil_cell<F: FnMut([u32; 3])>(&self, p: Vec3, domain: &Domain, mut f: F) {
        let center = Self::coords_of(p, self.cell_size, self.dims);
        let d = self.dims as i64;
        let axis = |c: usize| -> ([u32; 3], usize) {
            let mut v = [0u32; 3];
            let mut len = 0;
            for o in -1i64..=1 {
                let k = center[c] as i64 + o;
                let k = if domain.is_periodic() {
                    k.rem_euclid(d)
                } else if (0..d).contains(&k) {
                    k
                } else {
                    continue;
                } as u32;
                if !v[..len].contains(&k) {
                    v[len] = k;
                    len += 1;
                }
            }
            (v, len)
        };
        let ((xs, nx), (ys, ny), (zs, nz)) = (axis(0), axis(1), axis(2));
        for &x in &xs[..nx] {
            for &y in &ys[..ny] {
                for &z in &zs[..nz] {
                    f([x, y, z]);
                }
            }
        }
    }

    /// Calls `f(j, delta_ij)` for every `j != i` accepted by `keep` that interacts with `i`.
    fn for_each_neighbor<K: Fn(usize) -> bool, F: FnMut(usize, Vec3)>(
        &self,
        ps: &ParticleSystem,
        domain: &Domain,
        i: usize,
        keep: K,
        mut f: F,
    ) {
        let p = ps.positions[i];
        let radii = ps.radii();
        self.for_each_stencil_cell(p, domain, |cell| {
            for &j in self.cell(cell) {
                let j = j as usize;
                if j == i || !keep(j) {
                    continue;
                }
                let d = min_image_delta(p, ps.positions[j], domain);
                if interacts(d.norm_squared(), radii[i], radii[j]) {
                    f(j, d);
                }
            }
        });
    }

    /// Interacting pairs `(i, j)`, `i < j`, sorted.
    pub fn pairs(&self, ps: &ParticleSystem, domain: &Domain) -> Vec<(u32, u32)> {
        let n = ps.len();
        let words = n.div_ceil(64);
        type Chunk = (Vec<(u32, u32)>, Vec<u64>);
        let chunks: Vec<Chunk> = (0..n)
            .into_par_iter()
            .with_min_len(64)
            .fold(
                || (Vec::new(), vec![0u64; words]),
                |(mut out, mut bits), i| {
                    // Partners land in a bitset so they come out in index order without sorting.
                    self.for_each_neighbor(
                        ps,
                        domain,
                        i,
                        |j| j > i,
                        |j, _| bits[j / 64] |= 1 << (j % 64),
                    );
                    for (w, slot) in bits.iter_mut().enumerate().skip((i + 1) / 64) {
                        let mut word = std::mem::take(slot);
                        while word != 0 {
                            let j = w * 64 + word.trailing_zeros() as usize;
                            out.push((i as u32, j as u32));
                            word &= word - 1;
                        }
                    }
                    (out, bits)
                },
            )
            .collect();
        join_chunks(chunks.into_iter().map(|(out, _)| out).collect())
    }
}

pub fn build_grid(ps: &ParticleSystem, domain: &Domain) -> CellGrid {
    CellGrid::build(ps, domain)
}

/// Cell-list force pass: sums every particle's forces, sorted by partner index.
///
/// Returns the number of unique interacting pairs.
pub fn cell_forces(
    grid: &CellGrid,
    ps: &mut ParticleSystem,
    domain: &Domain,
    lj: &LjParams,
) -> u64 {
    let sys: &ParticleSystem = ps;
    let radii = sys.radii();
    let per: Vec<(Vec3, u64)> = (0..sys.len())
        .into_par_iter()
        .map(|i| {
            let mut contrib: Vec<(u32, Vec3)> = Vec::new();
            let mut owned = 0u64;
            grid.for_each_neighbor(
                sys,
                domain,
                i,
                |_| true,
                |j, d| {
                    if j > i {
                        owned += 1;
                    }
                    contrib.push((
                        j as u32,
                        force_from_delta(d, i < j, radii[i].max(radii[j]), lj),
                    ));
                },
            );
            contrib.sort_unstable_by_key(|c| c.0);
            (contrib.iter().fold(Vec3::ZERO, |a, c| a + c.1), owned)
        })
        .collect();
    let mut interactions = 0;
    for (f, (force, owned)) in ps.forces.iter_mut().zip(per) {
        *f = if *f == Vec3::ZERO { force } else { *f + force };
        interactions += owned;
    }
    interactions
}

/// All-pairs force pass, same contract as [`cell_forces`].
pub fn brute_forces(
    ps: &mut ParticleSystem,
    domain: &Domain,
    lj: &LjParams,
    limit: usize,
) -> Result<u64> {
    let n = ps.len();
    if n > limit {
        return Err(Error::OracleLimit { n, limit });
    }
    let sys: &ParticleSystem = ps;
    let radii = sys.radii();
    let per: Vec<(Vec3, u64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = sys.positions[i];
            let mut force = Vec3::ZERO;
            let mut owned = 0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = min_image_delta(p, sys.positions[j], domain);
                if interacts(d.norm_squared(), radii[i], radii[j]) {
                    force += force_from_delta(d, i < j, radii[i].max(radii[j]), lj);
                    owned += u64::from(j > i);
                }
            }
            (force, owned)
        })
        .collect();
    let mut interactions = 0;
    for (f, (force, owned)) in ps.forces.iter_mut().zip(per) {
        *f = if *f == Vec3::ZERO { force } else { *f + force };
        interactions += owned;
    }
    Ok(interactions)
}

/// One full cell-list step: grid build, force pass, integration.
pub fn step_cell(ps: &ParticleSystem, domain: &Domain, lj: &LjParams) -> Result<ParticleSystem> {
    let mut next = ps.clone();
    let grid = CellGrid::build(&next, domain);
    cell_forces(&grid, &mut next, domain, lj);
    physics::integrate(&mut next, domain, lj.dt)?;
    Ok(next)
}

//! Basic geometric types and the particle state shared by every engine.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Vec3 { x: v, y: v, z: v }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, axis: usize) -> &f64 {
        match axis {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }
}

impl IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, axis: usize) -> &mut f64 {
        match axis {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }
}

/// Axis-aligned bounding box. `min <= max` on every axis for any non-empty box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// The identity for [`Aabb::union`].
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::splat(f64::INFINITY),
        max: Vec3::splat(f64::NEG_INFINITY),
    };

    pub fn around_sphere(center: Vec3, radius: f64) -> Self {
        let r = Vec3::splat(radius);
        Aabb {
            min: center - r,
            max: center + r,
        }
    }

    #[inline]
    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn grow(&self, pad: f64) -> Aabb {
        let p = Vec3::splat(pad);
        Aabb {
            min: self.min - p,
            max: self.max + p,
        }
    }

    #[inline]
    pub fn contains_point(&self, q: Vec3) -> bool {
        q.x >= self.min.x
            && q.x <= self.max.x
            && q.y >= self.min.y
            && q.y <= self.max.y
            && q.z >= self.min.z
            && q.z <= self.max.z
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        self.min.x <= o.min.x
            && self.min.y <= o.min.y
            && self.min.z <= o.min.z
            && self.max.x >= o.max.x
            && self.max.y >= o.max.y
            && self.max.z >= o.max.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Wall,
    Periodic,
}

impl BoundaryKind {
    pub fn label(self) -> &'static str {
        match self {
            BoundaryKind::Wall => "wall",
            BoundaryKind::Periodic => "periodic",
        }
    }
}

/// Cubic simulation box `[0, L]^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub side_length: f64,
    pub bc: BoundaryKind,
}

impl Domain {
    pub fn new(side_length: f64, bc: BoundaryKind) -> Result<Self> {
        if !(side_length > 0.0 && side_length.is_finite()) {
            return Err(Error::config(
                "box",
                "side length must be positive and finite",
            ));
        }
        Ok(Domain { side_length, bc })
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let l = self.side_length;
        (0..3).all(|c| p[c] >= 0.0 && p[c] <= l)
    }

    pub fn is_periodic(&self) -> bool {
        self.bc == BoundaryKind::Periodic
    }
}

/// Per-axis image shift, in units of `L`, that brings `b` closest to `a`.
///
/// Each entry is in `{-1, 0, 1}`; always zero under wall boundaries.
#[inline]
pub fn min_image_shift(a: Vec3, b: Vec3, domain: &Domain) -> [i8; 3] {
    let mut shift = [0i8; 3];
    if domain.is_periodic() {
        let half = 0.5 * domain.side_length;
        for (c, s) in shift.iter_mut().enumerate() {
            let d = b[c] - a[c];
            if d > half {
                *s = -1;
            } else if d < -half {
                *s = 1;
            }
        }
    }
    shift
}

/// Displacement `b - a`, taken to the nearest periodic image when the box is periodic.
///
/// Antisymmetric bit-for-bit: `min_image_delta(a, b) == -min_image_delta(b, a)`.
#[inline]
pub fn min_image_delta(a: Vec3, b: Vec3, domain: &Domain) -> Vec3 {
    let d = b - a;
    if domain.is_periodic() {
        let l = domain.side_length;
        Vec3::new(
            wrap_component(d.x, l),
            wrap_component(d.y, l),
            wrap_component(d.z, l),
        )
    } else {
        d
    }
}

/// [`min_image_delta`] together with the [`min_image_shift`] it applied.
#[inline]
pub fn min_image_delta_and_shift(a: Vec3, b: Vec3, domain: &Domain) -> (Vec3, [i8; 3]) {
    let mut d = b - a;
    let mut shift = [0i8; 3];
    if domain.is_periodic() {
        let l = domain.side_length;
        let half = 0.5 * l;
        for (c, s) in shift.iter_mut().enumerate() {
            let v = d[c];
            *s = i8::from(v < -half) - i8::from(v > half);
            d[c] = wrap_component(v, l);
        }
    }
    (d, shift)
}

/// One component of a displacement in `(-L, L)` taken to its nearest image.
#[inline]
pub(crate) fn wrap_component(v: f64, l: f64) -> f64 {
    let half = 0.5 * l;
    let down = if v > half { l } else { 0.0 };
    let up = if v < -half { l } else { 0.0 };
    v - down + up
}

/// Simulation state. Radii are per-particle search radii.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    radii: Vec<f64>,
    pub forces: Vec<Vec3>,
    uniform_radius: bool,
    max_radius: f64,
}

impl ParticleSystem {
    /// Builds a system at rest with zero forces.
    pub fn new(positions: Vec<Vec3>, radii: Vec<f64>) -> Result<Self> {
        let n = positions.len();
        if radii.len() != n {
            return Err(Error::Structure(format!(
                "{} positions but {} radii",
                n,
                radii.len()
            )));
        }
        if let Some(bad) = radii.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::config(
                "radius",
                format!("radius of particle {bad} must be > 0"),
            ));
        }
        if let Some(bad) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::config(
                "position",
                format!("particle {bad} is not finite"),
            ));
        }
        let uniform_radius = radii.windows(2).all(|w| w[0] == w[1]);
        let max_radius = radii.iter().copied().fold(0.0, f64::max);
        Ok(ParticleSystem {
            velocities: vec![Vec3::ZERO; n],
            forces: vec![Vec3::ZERO; n],
            positions,
            radii,
            uniform_radius,
            max_radius,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Search radii; fixed for the lifetime of the system.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn uniform_radius(&self) -> bool {
        self.uniform_radius
    }

    /// Largest search radius; the ghost-query trigger distance.
    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn periodic() -> Domain {
        Domain::new(1000.0, BoundaryKind::Periodic).unwrap()
    }

    #[test]
    fn wraparound_across_x_wall() {
        let a = Vec3::new(1.0, 500.0, 500.0);
        let b = Vec3::new(999.0, 500.0, 500.0);
        assert_eq!(
            min_image_delta(a, b, &periodic()),
            Vec3::new(-2.0, 0.0, 0.0)
        );
        let wall = Domain::new(1000.0, BoundaryKind::Wall).unwrap();
        assert_eq!(min_image_delta(a, b, &wall), Vec3::new(998.0, 0.0, 0.0));
        assert_eq!(min_image_delta(a, a, &periodic()), Vec3::ZERO);
    }

    #[test]
    fn shift_matches_delta() {
        let d = periodic();
        let a = Vec3::new(990.0, 3.0, 500.0);
        let b = Vec3::new(4.0, 995.0, 510.0);
        let s = min_image_shift(a, b, &d);
        assert_eq!(s, [1, -1, 0]);
        let delta = min_image_delta(a, b, &d);
        for c in 0..3 {
            assert_eq!(delta[c], b[c] + s[c] as f64 * 1000.0 - a[c]);
        }
    }

    #[test]
    fn rejects_bad_radius() {
        let err = ParticleSystem::new(vec![Vec3::ZERO], vec![0.0]).unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn uniform_flag() {
        let p = vec![Vec3::ZERO; 3];
        assert!(ParticleSystem::new(p.clone(), vec![2.0; 3])
            .unwrap()
            .uniform_radius());
        assert!(!ParticleSystem::new(p, vec![2.0, 2.0, 3.0])
            .unwrap()
            .uniform_radius());
    }

    fn coord() -> impl Strategy<Value = f64> {
        0.0..=1000.0f64
    }

    proptest! {
        #[test]
        fn min_image_is_antisymmetric_and_bounded(
            ax in coord(), ay in coord(), az in coord(),
            bx in coord(), by in coord(), bz in coord(),
        ) {
            let d = periodic();
            let a = Vec3::new(ax, ay, az);
            let b = Vec3::new(bx, by, bz);
            let ab = min_image_delta(a, b, &d);
            let ba = min_image_delta(b, a, &d);
            prop_assert_eq!(ab, -ba);
            prop_assert!(ab.max_abs() <= 500.0);
            prop_assert_eq!(min_image_delta_and_shift(a, b, &d), (ab, min_image_shift(a, b, &d)));
        }
    }
}

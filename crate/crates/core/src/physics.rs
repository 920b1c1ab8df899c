//! Lennard-Jones interaction with a hard cutoff, and the unit-mass integrator.

use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{min_image_delta, BoundaryKind, Domain, ParticleSystem, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceForm {
    /// `24 eps [(s/r)^12 - (s/r)^6] / r`, selected by `force-form = paper`.
    Printed,
    /// `24 eps [2 (s/r)^12 - (s/r)^6] / r`, the true `-dU/dr`.
    Standard,
}

impl FromStr for ForceForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "paper" => Ok(ForceForm::Printed),
            "standard" => Ok(ForceForm::Standard),
            other => Err(Error::config(
                "force-form",
                format!("`{other}`: expected paper | standard"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LjParams {
    pub epsilon: f64,
    pub sigma: f64,
    pub force_form: ForceForm,
    /// Separations below this are evaluated as if they were exactly this.
    pub r_min_guard: f64,
    pub dt: f64,
}

impl Default for LjParams {
    fn default() -> Self {
        LjParams {
            epsilon: 1.0,
            sigma: 1.0,
            force_form: ForceForm::Printed,
            r_min_guard: 0.5,
            dt: 1e-4,
        }
    }
}

impl LjParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("epsilon", "must be > 0"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("sigma", "must be > 0"));
        }
        if !(self.r_min_guard > 0.0 && self.r_min_guard < self.sigma) {
            return Err(Error::config(
                "r-min-guard",
                "must satisfy 0 < guard < sigma",
            ));
        }
        // dt = 0 freezes the system; used for two-phase workloads.
        if !(self.dt >= 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be >= 0"));
        }
        Ok(())
    }
}

pub fn lj_potential(r: f64, r_c: f64, p: &LjParams) -> f64 {
    if r > r_c {
        return 0.0;
    }
    let s6 = (p.sigma / r.max(p.r_min_guard)).powi(6);
    4.0 * p.epsilon * (s6 * s6 - s6)
}

/// Scalar force along the pair axis; positive is repulsive.
pub fn lj_force_magnitude(r: f64, r_c: f64, p: &LjParams) -> f64 {
    if r > r_c {
        return 0.0;
    }
    let r = r.max(p.r_min_guard);
    let s6 = (p.sigma / r).powi(6);
    let s12 = s6 * s6;
    match p.force_form {
        ForceForm::Printed => 24.0 * p.epsilon * (s12 - s6) / r,
        ForceForm::Standard => 24.0 * p.epsilon * (2.0 * s12 - s6) / r,
    }
}

/// Force on `i` from `j`. The force on `j` is the exact negation.
///
/// Coincident particles are pushed apart along x, lower index toward -x.
pub fn pair_force(
    i: usize,
    j: usize,
    ps: &ParticleSystem,
    domain: &Domain,
    r_c_pair: f64,
    p: &LjParams,
) -> Vec3 {
    let d = min_image_delta(ps.positions[i], ps.positions[j], domain);
    force_from_delta(d, i < j, r_c_pair, p)
}

/// Force on the particle at the tail of `d` (which points toward its partner).
#[inline]
pub(crate) fn force_from_delta(d: Vec3, tail_is_lower: bool, r_c_pair: f64, p: &LjParams) -> Vec3 {
    let r2 = d.norm_squared();
    if r2 == 0.0 {
        let f = lj_force_magnitude(p.r_min_guard, r_c_pair, p);
        let sign = if tail_is_lower { -1.0 } else { 1.0 };
        return Vec3::new(sign * f, 0.0, 0.0);
    }
    let r = r2.sqrt();
    let f = lj_force_magnitude(r, r_c_pair, p);
    // Unit vector from partner to tail is -d / r.
    (-d) * (f / r)
}

/// Semi-implicit Euler step of a single particle, followed by boundary handling.
#[inline]
pub(crate) fn advance(pos: Vec3, vel: Vec3, force: Vec3, domain: &Domain, dt: f64) -> (Vec3, Vec3) {
    let mut v = vel + force * dt;
    let mut x = pos + v * dt;
    let l = domain.side_length;
    for c in 0..3 {
        match domain.bc {
            BoundaryKind::Periodic => {
                let mut w = x[c].rem_euclid(l);
                if w >= l {
                    w = 0.0;
                }
                x[c] = w;
            }
            BoundaryKind::Wall => {
                if x[c] < 0.0 || x[c] > l {
                    // Fold onto [0, L] with period 2L; odd fold count flips velocity.
                    let folds = (x[c] / l).floor();
                    let mut w = x[c].rem_euclid(2.0 * l);
                    if w > l {
                        w = 2.0 * l - w;
                    }
                    x[c] = w.clamp(0.0, l);
                    if folds.rem_euclid(2.0) != 0.0 {
                        v[c] = -v[c];
                    }
                }
            }
        }
    }
    (x, v)
}

/// Moves every particle by its accumulated force, then clears the forces.
pub fn integrate(ps: &mut ParticleSystem, domain: &Domain, dt: f64) -> Result<()> {
    if let Some(bad) = ps.forces.iter().position(|f| !f.is_finite()) {
        return Err(Error::NonFiniteForce { particle: bad });
    }
    let forces = &ps.forces;
    ps.positions
        .par_iter_mut()
        .zip(ps.velocities.par_iter_mut())
        .zip(forces.par_iter())
        .for_each(|((x, v), f)| {
            let (nx, nv) = advance(*x, *v, *f, domain, dt);
            *x = nx;
            *v = nv;
        });
    ps.forces.iter_mut().for_each(|f| *f = Vec3::ZERO);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(form: ForceForm) -> LjParams {
        LjParams {
            force_form: form,
            ..LjParams::default()
        }
    }

    #[test]
    fn potential_landmarks() {
        let p = params(ForceForm::Standard);
        assert_eq!(lj_potential(1.0, 2.5, &p), 0.0);
        let rmin = 2f64.powf(1.0 / 6.0);
        assert!((lj_potential(rmin, 2.5, &p) + 1.0).abs() <= 1e-12);
        assert_eq!(lj_potential(2.6, 2.5, &p), 0.0);
    }

    #[test]
    fn force_landmarks() {
        assert_eq!(
            lj_force_magnitude(1.0, 2.5, &params(ForceForm::Printed)),
            0.0
        );
        let rmin = 2f64.powf(1.0 / 6.0);
        assert!(lj_force_magnitude(rmin, 2.5, &params(ForceForm::Standard)).abs() < 1e-12);
        assert_eq!(
            lj_force_magnitude(3.0, 2.5, &params(ForceForm::Standard)),
            0.0
        );
        // repulsive inside sigma
        assert!(lj_force_magnitude(0.9, 2.5, &params(ForceForm::Printed)) > 0.0);
    }

    #[test]
    fn guard_clamps_singularity() {
        let p = params(ForceForm::Standard);
        assert_eq!(
            lj_force_magnitude(1e-9, 2.5, &p),
            lj_force_magnitude(0.5, 2.5, &p)
        );
        assert!(lj_potential(0.0, 2.5, &p).is_finite());
    }

    #[test]
    fn standard_force_is_negative_gradient() {
        let p = params(ForceForm::Standard);
        let rc = 2.5;
        let h = 1e-6;
        let steps = 1000;
        for k in 0..=steps {
            let r = 0.8 + (rc - 2.0 * h - 0.8) * k as f64 / steps as f64;
            let fd = -(lj_potential(r + h, rc, &p) - lj_potential(r - h, rc, &p)) / (2.0 * h);
            let f = lj_force_magnitude(r, rc, &p);
            assert!((f - fd).abs() <= 1e-4 * f.abs(), "r = {r}: {f} vs {fd}");
        }
    }

    fn domain(bc: BoundaryKind) -> Domain {
        Domain::new(100.0, bc).unwrap()
    }

    #[test]
    fn pair_force_along_axis() {
        let ps = ParticleSystem::new(
            vec![Vec3::new(10.0, 5.0, 5.0), Vec3::new(11.0, 5.0, 5.0)],
            vec![2.0; 2],
        )
        .unwrap();
        let p = params(ForceForm::Standard);
        let f = pair_force(0, 1, &ps, &domain(BoundaryKind::Wall), 2.0, &p);
        assert_eq!((f.y, f.z), (0.0, 0.0));
        // at r = sigma the standard force is repulsive: pushes 0 toward -x
        assert!(f.x < 0.0);
        assert_eq!(
            pair_force(1, 0, &ps, &domain(BoundaryKind::Wall), 2.0, &p),
            -f
        );
        assert_eq!(
            pair_force(0, 1, &ps, &domain(BoundaryKind::Wall), 0.5, &p),
            Vec3::ZERO
        );
    }

    #[test]
    fn coincident_pair_is_antisymmetric() {
        let ps = ParticleSystem::new(vec![Vec3::splat(3.0); 2], vec![1.0; 2]).unwrap();
        let p = LjParams::default();
        let d = domain(BoundaryKind::Wall);
        let f = pair_force(0, 1, &ps, &d, 1.0, &p);
        assert!(f.x < 0.0);
        assert_eq!(pair_force(1, 0, &ps, &d, 1.0, &p), -f);
    }

    #[test]
    fn integrate_boundaries() {
        let delta = 0.25;
        let dt = 0.5;
        let start = Vec3::new(100.0 - delta, 50.0, 50.0);
        let vel = Vec3::new(2.0 * delta / dt, 0.0, 0.0);

        let (x, v) = advance(start, vel, Vec3::ZERO, &domain(BoundaryKind::Periodic), dt);
        assert!((x.x - delta).abs() < 1e-12);
        assert_eq!(v, vel);

        let (x, v) = advance(start, vel, Vec3::ZERO, &domain(BoundaryKind::Wall), dt);
        assert!((x.x - (100.0 - delta)).abs() < 1e-12);
        assert_eq!(v.x, -vel.x);

        let (x, v) = advance(
            start,
            Vec3::ZERO,
            Vec3::ZERO,
            &domain(BoundaryKind::Wall),
            dt,
        );
        assert_eq!((x, v), (start, Vec3::ZERO));
    }

    #[test]
    fn integrate_rejects_non_finite() {
        let mut ps = ParticleSystem::new(vec![Vec3::splat(1.0)], vec![1.0]).unwrap();
        ps.forces[0] = Vec3::new(f64::NAN, 0.0, 0.0);
        assert_eq!(
            integrate(&mut ps, &domain(BoundaryKind::Wall), 0.1).unwrap_err(),
            Error::NonFiniteForce { particle: 0 }
        );
    }

    proptest! {
        #[test]
        fn positions_stay_in_box(
            x in 0.0..=100.0f64, vx in -1e5..1e5f64, fx in -1e6..1e6f64, periodic in any::<bool>()
        ) {
            let bc = if periodic { BoundaryKind::Periodic } else { BoundaryKind::Wall };
            let d = domain(bc);
            let (nx, _) = advance(Vec3::new(x, x, 100.0 - x), Vec3::new(vx, -vx, vx), Vec3::new(fx, fx, -fx), &d, 1e-2);
            prop_assert!(d.contains(nx));
            if periodic {
                prop_assert!(nx.x < 100.0 && nx.y < 100.0 && nx.z < 100.0);
            }
        }

        #[test]
        fn pair_force_antisymmetric(
            ax in 0.0..100.0f64, ay in 0.0..100.0f64, az in 0.0..100.0f64,
            bx in 0.0..100.0f64, by in 0.0..100.0f64, bz in 0.0..100.0f64,
        ) {
            let ps = ParticleSystem::new(vec![Vec3::new(ax, ay, az), Vec3::new(bx, by, bz)], vec![60.0; 2]).unwrap();
            let d = domain(BoundaryKind::Periodic);
            let p = LjParams::default();
            prop_assert_eq!(pair_force(0, 1, &ps, &d, 60.0, &p), -pair_force(1, 0, &ps, &d, 60.0, &p));
        }
    }
}

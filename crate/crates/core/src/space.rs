//! Compact probability metric spaces `(Y, d, m)`.
//!
//! Every intrinsic metric is divided by its exact diameter, so all three
//! spaces have diameter 1. The measure is always the normalized Haar/volume
//! measure.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::par::prelude::*;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// Flat torus R^2 / Z^2.
    Torus2,
    /// SU(2) realized as unit quaternions, i.e. the round 3-sphere.
    Sphere3,
    /// R / Z.
    Circle,
}

impl SpaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SpaceKind::Torus2 => "torus2",
            SpaceKind::Sphere3 => "sphere3",
            SpaceKind::Circle => "circle",
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "torus2" => Ok(SpaceKind::Torus2),
            "sphere3" => Ok(SpaceKind::Sphere3),
            "circle" => Ok(SpaceKind::Circle),
            other => Err(Error::usage(format!(
                "unknown space kind `{other}` (expected torus2, sphere3 or circle)"
            ))),
        }
    }
}

/// Reduces a real number into `[0, 1)`.
#[inline]
pub(crate) fn frac(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Point {
    Torus([f64; 2]),
    Sphere([f64; 4]),
    Circle(f64),
}

impl Point {
    pub fn torus(x: f64, y: f64) -> Self {
        Point::Torus([frac(x), frac(y)])
    }

    pub fn circle(x: f64) -> Self {
        Point::Circle(frac(x))
    }

    /// Normalizes `q` onto the unit sphere. Panics on the zero vector.
    pub fn sphere(q: [f64; 4]) -> Self {
        let n = norm4(&q);
        assert!(n > 0.0, "cannot normalize the zero quaternion");
        Point::Sphere([q[0] / n, q[1] / n, q[2] / n, q[3] / n])
    }

    pub fn kind(&self) -> SpaceKind {
        match self {
            Point::Torus(_) => SpaceKind::Torus2,
            Point::Sphere(_) => SpaceKind::Sphere3,
            Point::Circle(_) => SpaceKind::Circle,
        }
    }

    pub fn coords(&self) -> &[f64] {
        match self {
            Point::Torus(c) => c,
            Point::Sphere(q) => q,
            Point::Circle(x) => std::slice::from_ref(x),
        }
    }

    pub fn from_coords(kind: SpaceKind, c: &[f64]) -> Result<Self> {
        match (kind, c) {
            (SpaceKind::Torus2, [x, y]) => Ok(Point::torus(*x, *y)),
            (SpaceKind::Circle, [x]) => Ok(Point::circle(*x)),
            (SpaceKind::Sphere3, [a, b, c, d]) => {
                let q = [*a, *b, *c, *d];
                let n = norm4(&q);
                if n == 0.0 {
                    return Err(Error::usage("zero quaternion is not a point of sphere3"));
                }
                // stored coordinates are already unit; keep them bit-exact
                if (n - 1.0).abs() <= 1e-12 {
                    Ok(Point::Sphere(q))
                } else {
                    Ok(Point::sphere(q))
                }
            }
            _ => Err(Error::usage(format!(
                "{} coordinates do not describe a point of {kind}",
                c.len()
            ))),
        }
    }
}

#[inline]
pub(crate) fn norm4(q: &[f64; 4]) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

#[inline]
fn wrap_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

const SAMPLE_BLOCK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CompactSpace {
    kind: SpaceKind,
}

impl CompactSpace {
    pub fn new(kind: SpaceKind) -> Self {
        CompactSpace { kind }
    }

    pub fn torus2() -> Self {
        Self::new(SpaceKind::Torus2)
    }

    pub fn sphere3() -> Self {
        Self::new(SpaceKind::Sphere3)
    }

    pub fn circle() -> Self {
        Self::new(SpaceKind::Circle)
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        match self.kind {
            SpaceKind::Torus2 => 2,
            SpaceKind::Sphere3 => 3,
            SpaceKind::Circle => 1,
        }
    }

    /// Exponent `k` in `sup_y m(B(y, r)) = O(r^k)`.
    pub fn growth_exponent(&self) -> f64 {
        self.dimension() as f64
    }

    /// Diameter of the intrinsic metric; distances are divided by this.
    pub fn intrinsic_diameter(&self) -> f64 {
        match self.kind {
            SpaceKind::Torus2 => FRAC_1_SQRT_2,
            SpaceKind::Sphere3 => PI,
            SpaceKind::Circle => 0.5,
        }
    }

    /// A constant `c` with `m(B(y, r)) <= c r^k` for every centre and radius.
    pub fn ball_constant(&self) -> f64 {
        match self.kind {
            // pi (r / sqrt 2)^2
            SpaceKind::Torus2 => PI / 2.0,
            // (theta - sin theta cos theta) / pi <= 2 theta^3 / (3 pi), theta = pi r
            SpaceKind::Sphere3 => 2.0 * PI * PI / 3.0,
            SpaceKind::Circle => 1.0,
        }
    }

    /// Rescaled distance `d(x, y)`; errors when the points live elsewhere.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        if x.kind() != self.kind || y.kind() != self.kind {
            return Err(Error::usage(format!(
                "distance on {} called with points of {} and {}",
                self.kind,
                x.kind(),
                y.kind()
            )));
        }
        Ok(self.dist(x, y))
    }

    /// Distance for points already known to belong to this space.
    #[inline]
    pub(crate) fn dist(&self, x: &Point, y: &Point) -> f64 {
        match (x, y) {
            (Point::Torus(a), Point::Torus(b)) => {
                let dx = wrap_gap(a[0], b[0]);
                let dy = wrap_gap(a[1], b[1]);
                (dx * dx + dy * dy).sqrt() * SQRT_2
            }
            (Point::Circle(a), Point::Circle(b)) => 2.0 * wrap_gap(*a, *b),
            (Point::Sphere(p), Point::Sphere(q)) => {
                let mut diff = 0.0;
                let mut sum = 0.0;
                for k in 0..4 {
                    diff += (p[k] - q[k]) * (p[k] - q[k]);
                    sum += (p[k] + q[k]) * (p[k] + q[k]);
                }
                2.0 * diff.sqrt().atan2(sum.sqrt()) / PI
            }
            _ => unreachable!("mixed point kinds"),
        }
    }

    /// A point drawn from the normalized measure `m`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self.kind {
            SpaceKind::Torus2 => Point::Torus([rng.gen::<f64>(), rng.gen::<f64>()]),
            SpaceKind::Circle => Point::Circle(rng.gen::<f64>()),
            SpaceKind::Sphere3 => loop {
                let q: [f64; 4] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                if norm4(&q) > 1e-12 {
                    break Point::sphere(q);
                }
            },
        }
    }

    /// Monte-Carlo estimate of `m(B(x, r))` from `n_samples` uniform draws.
    pub fn ball_measure(&self, x: &Point, r: f64, n_samples: usize, seed: u64) -> Result<Estimate> {
        if !(r > 0.0) {
            return Err(Error::usage(format!("ball radius must be positive, got {r}")));
        }
        if n_samples == 0 {
            return Err(Error::usage("ball_measure needs at least one sample"));
        }
        if x.kind() != self.kind {
            return Err(Error::usage("ball centre is not a point of this space"));
        }
        let blocks = n_samples.div_ceil(SAMPLE_BLOCK);
        let hits: usize = cfg_into_iter!(0..blocks)
            .map(|b| {
                let mut rng = rng::stream(seed, b as u64);
                let len = SAMPLE_BLOCK.min(n_samples - b * SAMPLE_BLOCK);
                (0..len)
                    .filter(|_| self.dist(x, &self.sample(&mut rng)) <= r)
                    .count()
            })
            .sum();
        let p = hits as f64 / n_samples as f64;
        Ok(Estimate {
            value: p,
            std_err: (p * (1.0 - p) / n_samples as f64).sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn torus_identity_and_diameter_pair() {
        let s = CompactSpace::torus2();
        let o = Point::torus(0.0, 0.0);
        assert_eq!(s.distance(&o, &o).unwrap(), 0.0);
        // brute force over lattice translates of the Euclidean representative
        let (x, y) = ([0.0, 0.0], [0.5, 0.5]);
        let mut best = f64::INFINITY;
        for a in -2..=2 {
            for b in -2..=2 {
                let dx: f64 = y[0] + a as f64 - x[0];
                let dy: f64 = y[1] + b as f64 - x[1];
                best = best.min((dx * dx + dy * dy).sqrt());
            }
        }
        let expected = best / FRAC_1_SQRT_2;
        let got = s.distance(&o, &Point::torus(0.5, 0.5)).unwrap();
        assert!((got - expected).abs() < 1e-15 && (got - 1.0).abs() < 1e-15);
    }

    #[test]
    fn circle_antipodal_is_one() {
        let s = CompactSpace::circle();
        let d = s.distance(&Point::circle(0.0), &Point::circle(0.5)).unwrap();
        assert_eq!(d, 1.0);
        let near = s.distance(&Point::circle(0.95), &Point::circle(0.05)).unwrap();
        assert!((near - 0.2).abs() < 1e-12);
    }

    #[test]
    fn sphere_antipodes_and_small_angles() {
        let s = CompactSpace::sphere3();
        let p = Point::sphere([1.0, 0.0, 0.0, 0.0]);
        let q = Point::sphere([-1.0, 0.0, 0.0, 0.0]);
        assert!((s.distance(&p, &q).unwrap() - 1.0).abs() < 1e-15);
        let eps = 1e-9_f64;
        let r = Point::sphere([eps.cos(), eps.sin(), 0.0, 0.0]);
        let d = s.distance(&p, &r).unwrap();
        assert!((d - eps / PI).abs() < 1e-20, "{d}");
    }

    #[test]
    fn mismatched_kinds_are_usage_errors() {
        let s = CompactSpace::torus2();
        let err = s
            .distance(&Point::torus(0.1, 0.2), &Point::circle(0.3))
            .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn coordinate_reduction() {
        assert_eq!(Point::torus(1.25, -0.25), Point::Torus([0.25, 0.75]));
        assert_eq!(Point::circle(-1e-18), Point::Circle(0.0));
        let q = Point::sphere([3.0, 0.0, 4.0, 0.0]);
        if let Point::Sphere(c) = q {
            assert!((norm4(&c) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_diameter_is_normalized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for space in [
            CompactSpace::torus2(),
            CompactSpace::sphere3(),
            CompactSpace::circle(),
        ] {
            let mut max = 0.0_f64;
            for _ in 0..10_000 {
                let a = space.sample(&mut rng);
                let b = space.sample(&mut rng);
                max = max.max(space.dist(&a, &b));
            }
            assert!(max <= 1.0 + 1e-9, "{space:?}: {max}");
            assert!(max > 0.9, "{space:?}: sampled diameter suspiciously small");
        }
    }

    #[test]
    fn whole_space_and_arc_balls() {
        let t = CompactSpace::torus2();
        let e = t.ball_measure(&Point::torus(0.3, 0.6), 1.0, 5_000, 1).unwrap();
        assert_eq!(e.value, 1.0);
        let c = CompactSpace::circle();
        // radius r covers an arc of length r once the diameter is rescaled to 1
        for (r, arc) in [(0.25, 0.25), (0.5, 0.5)] {
            let e = c.ball_measure(&Point::circle(0.1), r, 100_000, 2).unwrap();
            assert!((e.value - arc).abs() <= 3.0 * e.std_err, "{e:?}");
        }
    }

    #[test]
    fn torus_ball_matches_disc_area() {
        // r = 0.1 rescaled is a Euclidean disc of radius 0.1/sqrt 2, far from self-overlap
        let t = CompactSpace::torus2();
        let r_e = 0.1 * FRAC_1_SQRT_2;
        let exact = PI * r_e * r_e;
        let e = t.ball_measure(&Point::torus(0.9, 0.05), 0.1, 400_000, 3).unwrap();
        assert!((e.value - exact).abs() <= 3.0 * e.std_err, "{e:?} vs {exact}");
    }

    /// Exact normalized ball volumes, valid below the injectivity radius.
    fn exact_ball(kind: SpaceKind, r: f64) -> f64 {
        match kind {
            SpaceKind::Torus2 => PI * (r * FRAC_1_SQRT_2).powi(2),
            SpaceKind::Circle => r,
            SpaceKind::Sphere3 => {
                let th = PI * r;
                (th - th.sin() * th.cos()) / PI
            }
        }
    }

    #[test]
    fn ball_growth_is_bounded_by_constant() {
        for space in [
            CompactSpace::torus2(),
            CompactSpace::sphere3(),
            CompactSpace::circle(),
        ] {
            let k = space.growth_exponent();
            for i in 0..=20 {
                let r = 1e-3 * 100f64.powf(i as f64 / 20.0);
                let ratio = exact_ball(space.kind(), r) / r.powf(k);
                assert!(ratio <= space.ball_constant() * (1.0 + 1e-12), "{space:?} r={r}");
            }
            for (i, r) in [3e-2_f64, 1e-1].into_iter().enumerate() {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(i as u64);
                let centre = space.sample(&mut rng);
                let e = space.ball_measure(&centre, r, 400_000, 11 + i as u64).unwrap();
                let exact = exact_ball(space.kind(), r);
                assert!((e.value - exact).abs() <= 4.0 * e.std_err, "{space:?} r={r}: {e:?} vs {exact}");
                assert!(e.value / r.powf(k) <= space.ball_constant() + 4.0 * e.std_err / r.powf(k));
            }
        }
    }

    #[test]
    fn invalid_ball_arguments() {
        let c = CompactSpace::circle();
        assert!(c.ball_measure(&Point::circle(0.0), 0.0, 10, 0).is_err());
        assert!(c.ball_measure(&Point::circle(0.0), 0.1, 0, 0).is_err());
    }
}

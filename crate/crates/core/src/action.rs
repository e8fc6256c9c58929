//! Finitely generated group actions by measure-preserving homeomorphisms.
//!
//! A [`GroupAction`] always carries a symmetric generating set: whenever a
//! generator is added its inverse is added too (or paired with an existing
//! generator that already is its inverse).

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;
use crate::space::{frac, CompactSpace, Point, SpaceKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    Identity,
    /// Integer matrix of determinant +-1 acting on the torus mod 1.
    Matrix([[i64; 2]; 2]),
    /// Left multiplication by a unit quaternion on the 3-sphere.
    Quaternion([f64; 4]),
    /// Rotation `x -> x + alpha` of the circle.
    Rotation(f64),
}

impl Transform {
    fn compatible(&self, kind: SpaceKind) -> bool {
        matches!(
            (self, kind),
            (Transform::Identity, _)
                | (Transform::Matrix(_), SpaceKind::Torus2)
                | (Transform::Quaternion(_), SpaceKind::Sphere3)
                | (Transform::Rotation(_), SpaceKind::Circle)
        )
    }

    fn inverse(&self) -> Transform {
        match *self {
            Transform::Identity => Transform::Identity,
            Transform::Matrix([[a, b], [c, d]]) => {
                let det = a * d - b * c;
                Transform::Matrix([[det * d, -det * b], [-det * c, det * a]])
            }
            Transform::Quaternion([w, x, y, z]) => Transform::Quaternion([w, -x, -y, -z]),
            Transform::Rotation(alpha) => Transform::Rotation(frac(-alpha)),
        }
    }

    fn same_as(&self, other: &Transform) -> bool {
        match (self, other) {
            (Transform::Identity, Transform::Identity) => true,
            (Transform::Matrix(a), Transform::Matrix(b)) => a == b,
            (Transform::Quaternion(a), Transform::Quaternion(b)) => {
                a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
            }
            (Transform::Rotation(a), Transform::Rotation(b)) => {
                let d = (a - b).abs();
                d.min(1.0 - d) < 1e-12
            }
            _ => false,
        }
    }

    /// Exact Lipschitz constant for the rescaled metric.
    fn lipschitz(&self) -> f64 {
        match *self {
            Transform::Matrix(m) => spectral_norm(m),
            _ => 1.0,
        }
    }

    #[inline]
    pub(crate) fn apply(&self, x: &Point) -> Point {
        match (self, x) {
            (Transform::Identity, p) => *p,
            (Transform::Matrix([[a, b], [c, d]]), Point::Torus([u, v])) => Point::torus(
                *a as f64 * u + *b as f64 * v,
                *c as f64 * u + *d as f64 * v,
            ),
            (Transform::Quaternion(g), Point::Sphere(q)) => {
                let p = quat_mul(g, q);
                Point::sphere(p)
            }
            (Transform::Rotation(alpha), Point::Circle(u)) => Point::circle(u + alpha),
            _ => unreachable!("transform applied to a point of the wrong space"),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Identity => write!(f, "identity"),
            Transform::Matrix([[a, b], [c, d]]) => write!(f, "matrix {a} {b} {c} {d}"),
            Transform::Quaternion([w, x, y, z]) => write!(f, "quaternion {w} {x} {y} {z}"),
            Transform::Rotation(a) => write!(f, "rotation {a}"),
        }
    }
}

/// Largest singular value of a 2x2 integer matrix, in closed form.
pub fn spectral_norm(m: [[i64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = m.map(|r| r.map(|v| v as f64));
    let p = a * a + c * c;
    let r = b * b + d * d;
    let q = a * b + c * d;
    let half = (p + r) / 2.0;
    let disc = (((p - r) / 2.0).powi(2) + q * q).sqrt();
    (half + disc).sqrt()
}

#[inline]
fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub label: String,
    pub transform: Transform,
    /// Exact Lipschitz constant `L_s`.
    pub lipschitz: f64,
}

/// Word in the generators, stored as generator indices. Acts right to left.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct GroupAction {
    space: CompactSpace,
    generators: Vec<Generator>,
    inverse: Vec<usize>,
}

impl GroupAction {
    /// Builds the action generated by `base`, closing the set under inverses.
    pub fn new(space: CompactSpace, base: Vec<(String, Transform)>) -> Result<Self> {
        let mut generators: Vec<Generator> = Vec::new();
        let mut inverse: Vec<usize> = Vec::new();
        for (label, transform) in base {
            if !transform.compatible(space.kind()) {
                return Err(Error::usage(format!(
                    "generator `{label}` ({transform}) cannot act on {}",
                    space.kind()
                )));
            }
            if generators.iter().any(|g| g.label == label) {
                return Err(Error::usage(format!("duplicate generator label `{label}`")));
            }
            match transform {
                Transform::Matrix([[a, b], [c, d]]) if (a * d - b * c).abs() != 1 => {
                    return Err(Error::usage(format!(
                        "matrix generator `{label}` must have determinant +-1"
                    )));
                }
                Transform::Quaternion(q) => {
                    let n = crate::space::norm4(&q);
                    if (n - 1.0).abs() > 1e-12 {
                        return Err(Error::usage(format!(
                            "quaternion generator `{label}` must have unit norm (got {n})"
                        )));
                    }
                }
                _ => {}
            }
            // already present as the inverse of an earlier generator
            if generators.iter().any(|g| g.transform.same_as(&transform)) {
                continue;
            }
            let idx = generators.len();
            generators.push(Generator {
                label: label.clone(),
                lipschitz: transform.lipschitz(),
                transform,
            });
            let inv = transform.inverse();
            if inv.same_as(&transform) {
                inverse.push(idx);
            } else {
                generators.push(Generator {
                    label: format!("{label}^-1"),
                    lipschitz: inv.lipschitz(),
                    transform: inv,
                });
                inverse.push(idx + 1);
                inverse.push(idx);
            }
        }
        if generators.is_empty() {
            return Err(Error::usage("an action needs at least one generator"));
        }
        Ok(GroupAction {
            space,
            generators,
            inverse,
        })
    }

    /// SL2(Z) on the torus with S = {A, A^-1, B, B^-1}.
    pub fn sl2z() -> Self {
        Self::new(
            CompactSpace::torus2(),
            vec![
                ("A".into(), Transform::Matrix([[1, 1], [0, 1]])),
                ("B".into(), Transform::Matrix([[1, 0], [1, 1]])),
            ],
        )
        .expect("standard SL2(Z) generators are valid")
    }

    /// Left translations of SU(2) by (1,2,0,0)/sqrt5, (1,0,2,0)/sqrt5, (1,0,0,2)/sqrt5 and inverses.
    pub fn su2_default() -> Self {
        let s = 5f64.sqrt();
        Self::new(
            CompactSpace::sphere3(),
            vec![
                ("a".into(), Transform::Quaternion([1.0 / s, 2.0 / s, 0.0, 0.0])),
                ("b".into(), Transform::Quaternion([1.0 / s, 0.0, 2.0 / s, 0.0])),
                ("c".into(), Transform::Quaternion([1.0 / s, 0.0, 0.0, 2.0 / s])),
            ],
        )
        .expect("default SU(2) generators are valid")
    }

    /// Circle rotation by `alpha` and its inverse.
    pub fn rotation(alpha: f64) -> Self {
        Self::new(
            CompactSpace::circle(),
            vec![("r".into(), Transform::Rotation(frac(alpha)))],
        )
        .expect("rotations are valid circle generators")
    }

    /// Rotation by the golden ratio conjugate; the action has no spectral gap.
    pub fn golden_rotation() -> Self {
        Self::rotation((5f64.sqrt() - 1.0) / 2.0)
    }

    /// The trivial action with a single identity generator.
    pub fn identity(space: CompactSpace) -> Self {
        Self::new(space, vec![("e".into(), Transform::Identity)]).expect("identity is valid")
    }

    pub fn space(&self) -> &CompactSpace {
        &self.space
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    /// |S|, counting inverses.
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn inverse_of(&self, s: usize) -> usize {
        self.inverse[s]
    }

    /// L = max_s L_s.
    pub fn lipschitz(&self) -> f64 {
        self.generators
            .iter()
            .map(|g| g.lipschitz)
            .fold(1.0, f64::max)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.generators
            .iter()
            .position(|g| g.label == label)
            .ok_or_else(|| Error::usage(format!("unknown generator label `{label}`")))
    }

    pub fn word(&self, labels: &[&str]) -> Result<Word> {
        labels
            .iter()
            .map(|l| self.index_of(l))
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        if x.kind() != self.space.kind() {
            return Err(Error::usage(format!(
                "point of {} given to an action on {}",
                x.kind(),
                self.space.kind()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, label: &str, x: &Point) -> Result<Point> {
        let s = self.index_of(label)?;
        self.check_point(x)?;
        Ok(self.apply_index(s, x))
    }

    #[inline]
    pub fn apply_index(&self, s: usize, x: &Point) -> Point {
        self.generators[s].transform.apply(x)
    }

    pub fn apply_word(&self, w: &Word, x: &Point) -> Result<Point> {
        self.check_point(x)?;
        if let Some(&bad) = w.0.iter().find(|&&s| s >= self.len()) {
            return Err(Error::usage(format!("word letter {bad} is not a generator")));
        }
        Ok(w.0.iter().rev().fold(*x, |p, &s| self.apply_index(s, &p)))
    }

    /// Largest sampled ratio `d(sx, sy) / d(x, y)`. Half of the pairs are
    /// uniform, half are close pairs probing the local stretch in random
    /// directions.
    pub fn lipschitz_estimate(&self, label: &str, n_pairs: usize, seed: u64) -> Result<f64> {
        let s = self.index_of(label)?;
        if n_pairs == 0 {
            return Err(Error::usage("lipschitz_estimate needs at least one pair"));
        }
        let mut rng = rng::stream(seed, 0);
        let space = self.space;
        let mut best = 0.0_f64;
        for k in 0..n_pairs {
            let x = space.sample(&mut rng);
            let y = if k % 2 == 0 {
                space.sample(&mut rng)
            } else {
                let eps = 10f64.powf(rng.gen_range(-4.0..-2.0));
                perturb(&x, eps, &mut rng)
            };
            let d = space.dist(&x, &y);
            if d == 0.0 {
                continue;
            }
            let ds = space.dist(&self.apply_index(s, &x), &self.apply_index(s, &y));
            best = best.max(ds / d);
        }
        Ok(best)
    }
}

fn perturb<R: Rng>(x: &Point, eps: f64, rng: &mut R) -> Point {
    match x {
        Point::Torus([u, v]) => {
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            Point::torus(u + eps * th.cos(), v + eps * th.sin())
        }
        Point::Circle(u) => Point::circle(u + eps),
        Point::Sphere(q) => {
            let mut p = *q;
            for c in p.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *c += eps * g;
            }
            Point::sphere(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sl2z_matrix_action() {
        let act = GroupAction::sl2z();
        let y = act.apply("A", &Point::torus(0.25, 0.5)).unwrap();
        assert_eq!(y, Point::Torus([0.75, 0.5]));
        let z = act.apply("B", &Point::torus(0.25, 0.5)).unwrap();
        assert_eq!(z, Point::Torus([0.25, 0.75]));
        assert_eq!(act.len(), 4);
        assert_eq!(act.generators()[1].label, "A^-1");
        assert_eq!(act.generators()[1].transform, Transform::Matrix([[1, -1], [0, 1]]));
    }

    #[test]
    fn rotation_and_quaternion() {
        let act = GroupAction::rotation(0.3);
        let y = act.apply("r", &Point::circle(0.9)).unwrap();
        if let Point::Circle(v) = y {
            assert!((v - 0.2).abs() < 1e-15);
        }
        let su = GroupAction::su2_default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for s in 0..su.len() {
            let x = su.space().sample(&mut rng);
            if let Point::Sphere(q) = su.apply_index(s, &x) {
                assert!((crate::space::norm4(&q) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn words_compose_right_to_left() {
        let act = GroupAction::sl2z();
        let x = Point::torus(0.1, 0.7);
        assert_eq!(act.apply_word(&Word::identity(), &x).unwrap(), x);
        let w = act.word(&["A", "B"]).unwrap();
        let expect = act.apply("A", &act.apply("B", &x).unwrap()).unwrap();
        assert_eq!(act.apply_word(&w, &x).unwrap(), expect);
        let w = act.word(&["A", "A^-1", "B", "B^-1"]).unwrap();
        let back = act.apply_word(&w, &x).unwrap();
        assert!(act.space().dist(&back, &x) < 1e-12);
        assert_eq!(w.len(), 4);
        let rot = GroupAction::rotation(0.25);
        let w = rot.word(&["r", "r", "r"]).unwrap();
        let y = rot.apply_word(&w, &Point::circle(0.0)).unwrap();
        if let Point::Circle(v) = y {
            assert!((v - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn unknown_labels_and_bad_generators() {
        let act = GroupAction::sl2z();
        assert!(act.apply("C", &Point::torus(0.0, 0.0)).is_err());
        assert!(act.apply("A", &Point::circle(0.0)).is_err());
        let bad = GroupAction::new(
            CompactSpace::torus2(),
            vec![("M".into(), Transform::Matrix([[2, 0], [0, 1]]))],
        );
        assert!(bad.is_err());
        let wrong_space = GroupAction::new(
            CompactSpace::circle(),
            vec![("M".into(), Transform::Matrix([[1, 1], [0, 1]]))],
        );
        assert!(wrong_space.is_err());
    }

    #[test]
    fn inverse_pairs_are_recorded() {
        for act in [
            GroupAction::sl2z(),
            GroupAction::su2_default(),
            GroupAction::golden_rotation(),
        ] {
            for s in 0..act.len() {
                assert_eq!(act.inverse_of(act.inverse_of(s)), s);
            }
        }
        let half = GroupAction::rotation(0.5);
        assert_eq!(half.len(), 1);
        assert_eq!(half.inverse_of(0), 0);
    }

    #[test]
    fn inverse_consistency_on_samples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for act in [
            GroupAction::sl2z(),
            GroupAction::su2_default(),
            GroupAction::golden_rotation(),
        ] {
            for s in 0..act.len() {
                for _ in 0..100 {
                    let x = act.space().sample(&mut rng);
                    let y = act.apply_index(act.inverse_of(s), &act.apply_index(s, &x));
                    assert!(act.space().dist(&x, &y) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn lipschitz_constants() {
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        // oracle: sqrt of the largest eigenvalue of A^T A = [[1,1],[1,2]]
        let ata_top = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((ata_top.sqrt() - golden).abs() < 1e-12);
        let act = GroupAction::sl2z();
        assert!((act.generators()[0].lipschitz - golden).abs() < 1e-12);
        let est = act.lipschitz_estimate("A", 2_000, 5).unwrap();
        assert!(est <= golden * (1.0 + 1e-6), "{est}");
        assert!((est - golden).abs() / golden <= 0.02, "{est}");
        let su = GroupAction::su2_default();
        let e = su.lipschitz_estimate("a", 1_000, 6).unwrap();
        assert!((e - 1.0).abs() < 1e-9, "{e}");
        let rot = GroupAction::golden_rotation();
        let e = rot.lipschitz_estimate("r", 1_000, 7).unwrap();
        assert!((e - 1.0).abs() < 1e-9);
    }

    /// Equal-measure 1024-cell partition of each space.
    fn cell_of(p: &Point) -> usize {
        let bin = |v: f64| ((v * 32.0) as usize).min(31);
        match p {
            Point::Torus([u, v]) => bin(*u) * 32 + bin(*v),
            Point::Circle(u) => ((u * 1024.0) as usize).min(1023),
            Point::Sphere(q) => {
                // q0^2 + q1^2 and arg(q0 + i q1) are independent uniforms
                let u = q[0] * q[0] + q[1] * q[1];
                let phi = (q[1].atan2(q[0]) / std::f64::consts::TAU).rem_euclid(1.0);
                bin(u) * 32 + bin(phi)
            }
        }
    }

    #[test]
    fn generators_preserve_the_measure() {
        let n = 100_000;
        for act in [
            GroupAction::sl2z(),
            GroupAction::su2_default(),
            GroupAction::golden_rotation(),
        ] {
            for s in 0..act.len() {
                let mut rng = rng::stream(17, s as u64);
                let mut counts = vec![0usize; 1024];
                for _ in 0..n {
                    let x = act.space().sample(&mut rng);
                    counts[cell_of(&act.apply_index(s, &x))] += 1;
                }
                let expected = n as f64 / 1024.0;
                let chi2: f64 = counts
                    .iter()
                    .map(|&c| (c as f64 - expected).powi(2) / expected)
                    .sum();
                let dof = 1023.0_f64;
                assert!(
                    (chi2 - dof).abs() <= 3.0 * (2.0 * dof).sqrt(),
                    "{} generator {s}: chi2 = {chi2}",
                    act.space().kind()
                );
            }
        }
    }
}

//! Distortion of level sets: Bourgain upper bound, the spectral lower bound,
//! and an auditor for the inequalities behind the lower bound.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::par::prelude::*;
use crate::rng;
use crate::spectral::MarkovOperator;
use crate::warped::{FiniteMetric, WarpedLevelGraph};

/// Points of `l_p^dim`, one row per metric point.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    n: usize,
    dim: usize,
    coords: Vec<f64>,
}

impl Embedding {
    pub fn new(n: usize, dim: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != n * dim || dim == 0 {
            return Err(Error::usage(format!(
                "embedding of {n} points in dimension {dim} needs {} coordinates, got {}",
                n * dim,
                coords.len()
            )));
        }
        Ok(Embedding { n, dim, coords })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn scaled(&self, alpha: f64) -> Embedding {
        Embedding {
            n: self.n,
            dim: self.dim,
            coords: self.coords.iter().map(|c| c * alpha).collect(),
        }
    }

    /// Column `c` as a function on the points.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.coords[i * self.dim + c]).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let head: Vec<String> = (1..=self.dim).map(|c| format!("c{c}")).collect();
        writeln!(w, "node,{}", head.join(","))?;
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{i},{}", row.join(","))?;
        }
        Ok(())
    }
}

#[inline]
fn lp_dist(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    } else {
        a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Bourgain's randomized Frechet embedding: one coordinate `d(x, A)` per
/// scale `j = 1..ceil(log2 n)` and repetition `r = 1..ceil(q ln n)`, with `A`
/// holding each point independently with probability `2^-j`.
pub fn bourgain_embed<M: FiniteMetric>(metric: &M, q: f64, seed: u64) -> Result<Embedding> {
    let n = metric.len();
    if n < 2 {
        return Err(Error::usage("Bourgain embedding needs at least two points"));
    }
    if !(q > 0.0) {
        return Err(Error::usage("repetition factor q must be positive"));
    }
    let scales = (n as f64).log2().ceil().max(1.0) as usize;
    let reps = (q * (n as f64).ln()).ceil().max(1.0) as usize;
    let mut r = rng::stream(seed, 0);
    let mut subsets = Vec::with_capacity(scales * reps);
    for j in 1..=scales {
        let prob = 0.5f64.powi(j as i32);
        for _ in 0..reps {
            let mut set: Vec<usize> = (0..n).filter(|_| r.gen::<f64>() < prob).collect();
            if set.is_empty() {
                set.push(r.gen_range(0..n));
            }
            subsets.push(set);
        }
    }
    let columns: Vec<Vec<f64>> = cfg_iter!(subsets).map(|a| metric.distances_to_set(a)).collect();
    let dim = columns.len();
    let mut coords = vec![0.0; n * dim];
    for (c, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            coords[i * dim + c] = v;
        }
    }
    Embedding::new(n, dim, coords)
}

/// Seeded standard-Gaussian embedding, used to stress the auditor.
pub fn random_embedding(n: usize, dim: usize, seed: u64) -> Embedding {
    let mut r = rng::stream(seed, 0);
    let coords = (0..n * dim).map(|_| r.sample(StandardNormal)).collect();
    Embedding { n, dim, coords }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionReport {
    pub p: f64,
    pub dim: usize,
    /// `sup |f(x) - f(y)| / d(x, y)`.
    pub expansion: f64,
    /// `sup d(x, y) / |f(x) - f(y)|`; infinite when a positive-distance pair collapses.
    pub contraction: f64,
    pub distortion: f64,
}

/// Exact expansion, contraction and distortion over all pairs.
pub fn embedding_distortion<M: FiniteMetric>(metric: &M, emb: &Embedding, p: f64) -> Result<DistortionReport> {
    let n = metric.len();
    if emb.len() != n {
        return Err(Error::usage(format!("embedding has {} points, metric has {n}", emb.len())));
    }
    if !(p >= 1.0) {
        return Err(Error::usage(format!("target exponent must be >= 1, got {p}")));
    }
    let rows: Vec<(f64, f64)> = cfg_into_iter!(0..n)
        .map(|i| {
            let d = metric.distances_from(i);
            let fi = emb.row(i);
            let (mut exp, mut con) = (0.0f64, 0.0f64);
            for j in i + 1..n {
                if d[j] <= 0.0 {
                    continue;
                }
                let e = lp_dist(fi, emb.row(j), p);
                exp = exp.max(e / d[j]);
                con = con.max(if e > 0.0 { d[j] / e } else { f64::INFINITY });
            }
            (exp, con)
        })
        .collect();
    let expansion = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let contraction = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(DistortionReport {
        p,
        dim: emb.dim(),
        expansion,
        contraction,
        distortion: expansion * contraction,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBound {
    pub value: f64,
    /// `kappa = 0`: the argument gives nothing.
    pub vacuous: bool,
}

/// `kappa R_t / 4`.
pub fn paper_lower_bound(kappa: f64, r_t: f64) -> LowerBound {
    if !(kappa > 0.0) || !(r_t > 0.0) {
        return LowerBound {
            value: 0.0,
            vacuous: true,
        };
    }
    LowerBound {
        value: kappa * r_t / 4.0,
        vacuous: false,
    }
}

/// Level data shared by every audited embedding: the node pairs the
/// averaging operator couples, their warped spread, and sampled distance
/// rows for the pair witness.
#[derive(Clone, Debug)]
pub struct AuditContext {
    pairs: Vec<(usize, usize)>,
    /// Largest warped distance between coupled nodes.
    pub w_max: f64,
    pub r_t: f64,
    rows: Vec<(usize, Vec<f64>)>,
    weights: Vec<f64>,
}

impl AuditContext {
    pub fn new(g: &WarpedLevelGraph, op: &MarkovOperator, r_t: f64, sources: &[usize]) -> Result<Self> {
        if g.len() != op.len() {
            return Err(Error::usage("graph and operator have different node counts"));
        }
        let mut pairs: Vec<(usize, usize)> = op
            .triplets()
            .into_iter()
            .filter(|&(i, k, _)| i != k)
            .map(|(i, k, _)| (i.min(k), i.max(k)))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let mut by_source: Vec<Vec<usize>> = vec![Vec::new(); g.len()];
        for &(i, k) in &pairs {
            by_source[i].push(k);
        }
        let spread: Vec<f64> = cfg_into_iter!(0..g.len())
            .map(|i| {
                g.distances_to_targets(i, &by_source[i])
                    .into_iter()
                    .fold(0.0, f64::max)
            })
            .collect();
        let w_max = spread.into_iter().fold(0.0, f64::max);
        let rows = sources.iter().zip(g.all_distances(sources)).map(|(&s, f)| (s, f.to_f64())).collect();
        Ok(AuditContext {
            pairs,
            w_max,
            r_t,
            rows,
            weights: g.weights().to_vec(),
        })
    }

    pub fn coupled_pairs(&self) -> usize {
        self.pairs.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub p: f64,
    pub dim: usize,
    /// `max_s |f - pi_s f|_p`.
    pub displacement: f64,
    /// `L`: largest image distance over coupled pairs.
    pub lipschitz: f64,
    /// `|f - M f|_p`.
    pub centered: f64,
    /// `iint |f(x) - f(y)|^p dm dm`.
    pub double_integral: f64,
    /// `L - displacement`.
    pub margin_a: f64,
    /// `displacement / kappa - centered`.
    pub margin_b: f64,
    /// `2^p centered^p - double_integral`.
    pub margin_c: f64,
    /// Sampled mass of pairs beyond `R_t` whose images lie within `4 L / kappa`.
    pub witness: f64,
    pub failures: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Replays the displacement bound (a), the gap inequality (b) and the
/// double-integral bound (c) for one embedding. (a) and (c) hold for every
/// embedding, and so does (b) when `p = 2` and `kappa` is certified; any
/// failure there points at a bug, and the report says so.
pub fn audit_embedding(ctx: &AuditContext, op: &MarkovOperator, emb: &Embedding, kappa: f64, p: f64) -> Result<AuditReport> {
    let n = op.len();
    if emb.len() != n {
        return Err(Error::usage(format!("embedding has {} points, operator has {n}", emb.len())));
    }
    if !(p >= 1.0) {
        return Err(Error::usage(format!("target exponent must be >= 1, got {p}")));
    }
    let w = op.weights();
    let dim = emb.dim();
    let cols: Vec<Vec<f64>> = (0..dim).map(|c| emb.column(c)).collect();

    let mut displacement = 0.0f64;
    for s in 0..op.generator_count() {
        let moved: Vec<Vec<f64>> = cols.iter().map(|c| op.apply_generator(s, c)).collect();
        let total: f64 = (0..n)
            .map(|i| {
                let diff: Vec<f64> = (0..dim).map(|c| cols[c][i] - moved[c][i]).collect();
                w[i] * norm_p(&diff, p).powf(p)
            })
            .sum();
        displacement = displacement.max(total.powf(1.0 / p));
    }

    let lipschitz = ctx
        .pairs
        .iter()
        .map(|&(i, k)| lp_dist(emb.row(i), emb.row(k), p))
        .fold(0.0, f64::max);

    let total_w: f64 = w.iter().sum();
    let mean: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total_w)
        .collect();
    let centered = (0..n)
        .map(|i| {
            let diff: Vec<f64> = (0..dim).map(|c| cols[c][i] - mean[c]).collect();
            w[i] * norm_p(&diff, p).powf(p)
        })
        .sum::<f64>()
        .powf(1.0 / p);

    let double_integral: f64 = cfg_into_iter!(0..n)
        .map(|i| {
            let fi = emb.row(i);
            let row: f64 = (i + 1..n).map(|j| w[j] * lp_pow(fi, emb.row(j), p)).sum();
            2.0 * w[i] * row
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();

    let bound_b = if kappa > 0.0 { displacement / kappa } else { f64::INFINITY };
    let margin_a = lipschitz - displacement;
    let margin_b = bound_b - centered;
    let margin_c = 2f64.powf(p) * centered.powf(p) - double_integral;

    let radius = if kappa > 0.0 { 4.0 * lipschitz / kappa } else { f64::INFINITY };
    let mut witness = 0.0;
    let mut source_mass = 0.0;
    for (s, row) in &ctx.rows {
        source_mass += ctx.weights[*s];
        for (j, &d) in row.iter().enumerate() {
            if d > ctx.r_t && lp_dist(emb.row(*s), emb.row(j), p) <= radius {
                witness += ctx.weights[*s] * ctx.weights[j];
            }
        }
    }
    if source_mass > 0.0 {
        witness /= source_mass;
    }

    // floating-point slack for quantities that agree analytically
    let slack = 1e-9 * (1.0 + lipschitz.max(centered).max(double_integral));
    let mut failures = Vec::new();
    if margin_a < -slack {
        failures.push(format!(
            "(a) displacement {displacement} exceeds the coupled-pair bound {lipschitz}: implementation bug"
        ));
    }
    if p == 2.0 && margin_b < -slack {
        failures.push(format!(
            "(b) centered norm {centered} exceeds displacement / kappa = {bound_b}: implementation bug"
        ));
    }
    if margin_c < -slack {
        failures.push(format!(
            "(c) double integral {double_integral} exceeds 2^p |f - Mf|^p: implementation bug"
        ));
    }
    Ok(AuditReport {
        p,
        dim,
        displacement,
        lipschitz,
        centered,
        double_integral,
        margin_a,
        margin_b,
        margin_c,
        witness,
        failures,
    })
}

/// `|a - b|_p^p`.
#[inline]
fn lp_pow(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum()
    }
}

fn norm_p(v: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

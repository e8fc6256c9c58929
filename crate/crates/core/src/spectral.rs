//! Discretized averaging operator of the action and its spectral gap.
//!
//! `P_s f(x_i)` interpolates `f` at `s^-1 x_i` on the net (nearest node on
//! scattered nets), and `A = |S|^-1 sum_s P_s`. Inner products are weighted
//! by the net measure.
//!
//! Interpolation makes `P_s` a contraction rather than an isometry, so
//! `<(I - A) f, f>` only bounds `avg_s |f - P_s f|^2` from above. The
//! certified gap therefore also uses the smallest eigenvalue of
//! `Q = avg_s (I - P_s)^* (I - P_s)` on mean-zero functions, which bounds the
//! average squared displacement from below directly.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::action::GroupAction;
use crate::error::{Error, Result};
use crate::net::Net;
#[allow(unused_imports)]
use crate::par::prelude::*;
use crate::rng;

/// Sparse rows with at most a handful of entries each.
#[derive(Clone, Debug)]
struct Rows {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Rows {
    fn from_lists(lists: &[Vec<(usize, f64)>]) -> Rows {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for row in lists {
            for &(c, v) in row {
                cols.push(c as u32);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        Rows { offsets, cols, vals }
    }

    fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().zip(&self.vals[r]).map(|(&c, &v)| (c as usize, v))
    }

    /// `(P f)_i`, written as `f_c0 + sum_k p_k (f_ck - f_c0)` so constants are
    /// reproduced exactly.
    #[inline]
    fn apply_at(&self, i: usize, f: &[f64]) -> f64 {
        let r = self.offsets[i]..self.offsets[i + 1];
        let cols = &self.cols[r.clone()];
        let vals = &self.vals[r];
        let base = f[cols[0] as usize];
        let mut acc = 0.0;
        for k in 1..cols.len() {
            acc += vals[k] * (f[cols[k] as usize] - base);
        }
        base + acc
    }

    /// Adjoint in the `w`-weighted inner product: `(P^*)_{ki} = w_i P_ik / w_k`.
    fn weighted_transpose(&self, w: &[f64]) -> Rows {
        let n = self.n();
        let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for (k, p) in self.row(i) {
                lists[k].push((i, w[i] * p / w[k]));
            }
        }
        Rows::from_lists(&lists)
    }

    fn apply_plain(&self, i: usize, f: &[f64]) -> f64 {
        self.row(i).map(|(c, v)| v * f[c]).sum()
    }
}

#[derive(Clone, Debug)]
pub struct MarkovOperator {
    weights: Vec<f64>,
    gens: Vec<Rows>,
    adj: Vec<Rows>,
    labels: Vec<String>,
}

/// Builds `A = |S|^-1 sum_s P_s` for the net and action.
pub fn build_markov(net: &Net, action: &GroupAction) -> Result<MarkovOperator> {
    if net.space().kind() != action.space().kind() {
        return Err(Error::usage("net and action live on different spaces"));
    }
    let rows: Vec<Vec<Vec<(usize, f64)>>> = (0..action.len())
        .map(|s| {
            let inv = action.inverse_of(s);
            cfg_into_iter!(0..net.len())
                .map(|i| net.interpolate(&action.apply_index(inv, &net.points()[i])))
                .collect()
        })
        .collect();
    let labels = action.generators().iter().map(|g| g.label.clone()).collect();
    MarkovOperator::with_labels(net.weights().to_vec(), rows, labels)
}

impl MarkovOperator {
    /// Operator from explicit per-generator rows; `rows[s][i]` lists
    /// `(column, probability)`.
    pub fn from_rows(weights: Vec<f64>, rows: Vec<Vec<Vec<(usize, f64)>>>) -> Result<Self> {
        let labels = (0..rows.len()).map(|s| format!("s{s}")).collect();
        Self::with_labels(weights, rows, labels)
    }

    fn with_labels(weights: Vec<f64>, rows: Vec<Vec<Vec<(usize, f64)>>>, labels: Vec<String>) -> Result<Self> {
        let n = weights.len();
        if n == 0 || rows.is_empty() {
            return Err(Error::usage("Markov operator needs nodes and at least one generator"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Data("Markov operator needs positive node weights".into()));
        }
        for (s, g) in rows.iter().enumerate() {
            if g.len() != n {
                return Err(Error::usage(format!("generator {s} has {} rows, expected {n}", g.len())));
            }
            for (i, row) in g.iter().enumerate() {
                if row.is_empty() || row.iter().any(|&(c, p)| c >= n || p < 0.0) {
                    return Err(Error::Invariant(format!("row {i} of generator {s} is not a distribution")));
                }
            }
        }
        let gens: Vec<Rows> = rows.iter().map(|g| Rows::from_lists(g)).collect();
        let adj = gens.iter().map(|g| g.weighted_transpose(&weights)).collect();
        Ok(MarkovOperator {
            weights,
            gens,
            adj,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn generator_count(&self) -> usize {
        self.gens.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.apply_into(f, &mut out);
        out
    }

    fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        let k = self.gens.len() as f64;
        par_rows(out, |i| self.gens.iter().map(|g| g.apply_at(i, f)).sum::<f64>() / k);
    }

    /// `P_s f`.
    pub fn apply_generator(&self, s: usize, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        par_rows(&mut out, |i| self.gens[s].apply_at(i, f));
        out
    }

    /// `A^* f` in the weighted inner product.
    pub fn apply_adjoint(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.adjoint_into(f, &mut out);
        out
    }

    fn adjoint_into(&self, f: &[f64], out: &mut [f64]) {
        let k = self.adj.len() as f64;
        par_rows(out, |i| self.adj.iter().map(|g| g.apply_plain(i, f)).sum::<f64>() / k);
    }

    /// `(A + A^*) f / 2`.
    pub fn apply_symmetrized(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.symmetrized_into(f, &mut out);
        out
    }

    fn symmetrized_into(&self, f: &[f64], out: &mut [f64]) {
        let k = self.gens.len() as f64;
        par_rows(out, |i| {
            let a: f64 = self.gens.iter().map(|g| g.apply_at(i, f)).sum();
            let b: f64 = self.adj.iter().map(|g| g.apply_plain(i, f)).sum();
            0.5 * (a + b) / k
        });
    }

    /// `Q f = avg_s (I - P_s)^* (I - P_s) f`.
    fn quad_into(&self, f: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let k = self.gens.len() as f64;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (g, a) in self.gens.iter().zip(&self.adj) {
            par_rows(scratch, |i| f[i] - g.apply_at(i, f));
            let d: &[f64] = scratch;
            cfg_iter_mut!(out)
                .enumerate()
                .for_each(|(i, o)| *o += (d[i] - a.apply_plain(i, d)) / k);
        }
    }

    /// Largest deviation of a row sum of `A` from 1.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let s: f64 = self.gens.iter().map(|g| g.row(i).map(|e| e.1).sum::<f64>()).sum();
                (s / self.gens.len() as f64 - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.gens
            .iter()
            .flat_map(|g| g.vals.iter().cloned())
            .fold(f64::INFINITY, f64::min)
    }

    /// Entries of `A` merged over generators, sorted by `(row, col)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let k = self.gens.len() as f64;
        let mut out = Vec::new();
        for i in 0..self.len() {
            let mut row: Vec<(usize, f64)> = self.gens.iter().flat_map(|g| g.row(i)).collect();
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, p) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += p,
                    _ => merged.push((c, p)),
                }
            }
            out.extend(merged.into_iter().map(|(c, p)| (i, c, p / k)));
        }
        out
    }

    /// Largest entrywise gap `|A_ik - (A^*)_ik|`.
    pub fn asymmetry(&self) -> f64 {
        let mut entries: Vec<((usize, usize), f64)> = Vec::new();
        let k = self.gens.len() as f64;
        for (i, c, p) in self.triplets() {
            entries.push(((i, c), p));
        }
        for a in &self.adj {
            for i in 0..self.len() {
                for (c, p) in a.row(i) {
                    entries.push(((i, c), -p / k));
                }
            }
        }
        entries.sort_by_key(|a| a.0);
        let mut worst = 0.0f64;
        let mut idx = 0;
        while idx < entries.len() {
            let key = entries[idx].0;
            let mut s = 0.0;
            while idx < entries.len() && entries[idx].0 == key {
                s += entries[idx].1;
                idx += 1;
            }
            worst = worst.max(s.abs());
        }
        worst
    }

    /// True when every `P_s` is a weight-preserving permutation, so that each
    /// `P_s` is a unitary.
    pub fn is_isometric(&self) -> bool {
        self.gens.iter().all(|g| {
            let mut hit = vec![false; self.len()];
            (0..g.n()).all(|i| {
                let r = g.offsets[i]..g.offsets[i + 1];
                if r.len() != 1 || g.vals[r.start] != 1.0 {
                    return false;
                }
                let c = g.cols[r.start] as usize;
                let fresh = !hit[c];
                hit[c] = true;
                fresh && (self.weights[c] - self.weights[i]).abs() <= 1e-15
            })
        })
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).zip(&self.weights).map(|((a, b), w)| w * a * b).sum()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    pub fn lp_norm(&self, f: &[f64], p: f64) -> f64 {
        f.iter()
            .zip(&self.weights)
            .map(|(a, w)| w * a.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }

    /// Weighted mean `M f`.
    pub fn mean(&self, f: &[f64]) -> f64 {
        let total: f64 = self.weights.iter().sum();
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() / total
    }

    fn center(&self, f: &mut [f64]) {
        let m = self.mean(f);
        f.iter_mut().for_each(|x| *x -= m);
    }

    /// `<(I - A) f, f> - (1 / 2|S|) sum_s |f - P_s f|^2`; zero for isometric
    /// actions, and equal to `(1/2) avg_s (|f|^2 - |P_s f|^2) >= 0` in general.
    pub fn quad_form_defect(&self, f: &[f64]) -> f64 {
        let af = self.apply(f);
        let lhs = self.inner(f, f) - self.inner(&af, f);
        let rhs: f64 = (0..self.gens.len())
            .map(|s| {
                let d: Vec<f64> = self.apply_generator(s, f).iter().zip(f).map(|(p, x)| x - p).collect();
                self.inner(&d, &d)
            })
            .sum::<f64>()
            / (2.0 * self.gens.len() as f64);
        lhs - rhs
    }

    /// `max_s |f - P_s f|_p`.
    pub fn displacement(&self, f: &[f64], p: f64) -> f64 {
        (0..self.gens.len())
            .map(|s| {
                let d: Vec<f64> = self.apply_generator(s, f).iter().zip(f).map(|(q, x)| x - q).collect();
                self.lp_norm(&d, p)
            })
            .fold(0.0, f64::max)
    }

    pub fn write_triplets_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,prob")?;
        for (i, c, p) in self.triplets() {
            writeln!(w, "{i},{c},{p}")?;
        }
        Ok(())
    }

    /// Seeded standard-normal function projected to mean zero.
    pub fn random_mean_zero(&self, seed: u64, stream: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, stream);
        let mut f: Vec<f64> = (0..self.len()).map(|_| r.sample(StandardNormal)).collect();
        self.center(&mut f);
        f
    }
}

#[inline]
fn par_rows<F: Fn(usize) -> f64 + Sync + Send>(out: &mut [f64], f: F) {
    cfg_iter_mut!(out).enumerate().for_each(|(i, o)| *o = f(i));
}

#[derive(Clone, Debug)]
pub struct SpectralOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub lanczos_steps: usize,
    pub lanczos_restarts: usize,
    pub lanczos_tol: f64,
    /// Random starts for `p != 2`.
    pub heuristic_starts: usize,
    pub heuristic_iter: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            tol: 1e-10,
            max_iter: 100_000,
            lanczos_steps: 240,
            lanczos_restarts: 12,
            lanczos_tol: 1e-8,
            heuristic_starts: 8,
            heuristic_iter: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormEstimate {
    pub p: f64,
    pub lambda: f64,
    /// Power-iteration residual (`p = 2`); zero for heuristic estimates.
    pub residual: f64,
    pub iterations: usize,
    pub heuristic: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGapReport {
    pub p: f64,
    pub lambda: f64,
    /// `lambda` widened by the residual, capped at 1.
    pub lambda_upper: f64,
    pub residual: f64,
    pub iterations: usize,
    /// `sqrt(2 (1 - lambda_upper))`.
    pub kappa_from_norm: f64,
    /// Smallest eigenvalue of `Q` on mean-zero functions and its residual bound.
    pub quad_min: f64,
    pub quad_residual: f64,
    pub lanczos_steps: usize,
    pub kappa_lb: f64,
    pub asymmetry: f64,
    pub isometric: bool,
}

pub fn kappa_from_lambda(lambda: f64) -> f64 {
    (2.0 * (1.0 - lambda.clamp(0.0, 1.0))).sqrt()
}

const SYMMETRIC_EPS: f64 = 1e-14;

/// Norm of `A` on weighted mean-zero functions. `p = 2` runs power
/// iteration on `S^2` with `S` the symmetrized operator; other exponents
/// return a seeded random-search lower bound.
pub fn mean_zero_norm(op: &MarkovOperator, p: f64, seed: u64, opts: &SpectralOptions) -> Result<NormEstimate> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::usage(format!("exponent p must lie in (1, inf), got {p}")));
    }
    if p == 2.0 {
        let symmetric = op.asymmetry() <= SYMMETRIC_EPS;
        power_iteration(op, symmetric, seed, opts)
    } else {
        Ok(heuristic_norm(op, p, seed, opts))
    }
}

fn power_iteration(op: &MarkovOperator, symmetric: bool, seed: u64, opts: &SpectralOptions) -> Result<NormEstimate> {
    let n = op.len();
    if n < 2 {
        return Ok(NormEstimate {
            p: 2.0,
            lambda: 0.0,
            residual: 0.0,
            iterations: 0,
            heuristic: false,
        });
    }
    let apply_s = |f: &[f64], out: &mut [f64]| {
        if symmetric {
            op.apply_into(f, out)
        } else {
            op.symmetrized_into(f, out)
        }
    };
    let mut x = op.random_mean_zero(seed, 0);
    let nx = op.norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        apply_s(&x, &mut y);
        op.center(&mut y);
        apply_s(&y, &mut z);
        op.center(&mut z);
        let theta = op.inner(&y, &y);
        let residual = z
            .iter()
            .zip(&x)
            .zip(&op.weights)
            .map(|((a, b), w)| w * (a - theta * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if it % 1000 == 0 || it == 1 {
            history.push(residual);
        }
        let nz = op.norm(&z);
        if residual <= opts.tol || nz == 0.0 {
            return Ok(NormEstimate {
                p: 2.0,
                lambda: theta.sqrt().min(1.0),
                residual,
                iterations: it,
                heuristic: false,
            });
        }
        for (a, b) in x.iter_mut().zip(&z) {
            *a = b / nz;
        }
    }
    Err(Error::NonConvergence {
        tol: opts.tol,
        iterations: opts.max_iter,
        history,
    })
}

fn heuristic_norm(op: &MarkovOperator, p: f64, seed: u64, opts: &SpectralOptions) -> NormEstimate {
    let mut best = 0.0f64;
    let mut iterations = 0;
    for start in 0..opts.heuristic_starts.max(1) {
        let mut f = op.random_mean_zero(seed, 1 + start as u64);
        for _ in 0..opts.heuristic_iter.max(1) {
            let nf = op.lp_norm(&f, p);
            if nf == 0.0 {
                break;
            }
            let mut af = op.apply(&f);
            best = best.max(op.lp_norm(&af, p) / nf);
            iterations += 1;
            op.center(&mut af);
            let na = op.lp_norm(&af, p);
            if na == 0.0 {
                break;
            }
            f = af.into_iter().map(|v| v / na).collect();
        }
    }
    NormEstimate {
        p,
        lambda: best.min(1.0),
        residual: 0.0,
        iterations,
        heuristic: true,
    }
}

/// Certified `p = 2` gap: `kappa_lb = min(sqrt(2 (1 - lambda)), sqrt(mu_Q - residual))`.
pub fn kappa_lower_bound(op: &MarkovOperator, seed: u64, opts: &SpectralOptions) -> Result<SpectralGapReport> {
    let asymmetry = op.asymmetry();
    let norm = power_iteration(op, asymmetry <= SYMMETRIC_EPS, seed, opts)?;
    let theta_upper = norm.lambda * norm.lambda + norm.residual;
    let lambda_upper = theta_upper.sqrt().min(1.0);
    let kappa_from_norm = kappa_from_lambda(lambda_upper);
    let quad = quad_min(op, rng::derive(seed, 0x0051), opts)?;
    let kappa_quad = (quad.value - quad.residual).max(0.0).sqrt();
    Ok(SpectralGapReport {
        p: 2.0,
        lambda: norm.lambda,
        lambda_upper,
        residual: norm.residual,
        iterations: norm.iterations,
        kappa_from_norm,
        quad_min: quad.value,
        quad_residual: quad.residual,
        lanczos_steps: quad.steps,
        kappa_lb: kappa_from_norm.min(kappa_quad),
        asymmetry,
        isometric: op.is_isometric(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PNorm {
    pub p: f64,
    pub lambda: f64,
    pub heuristic: bool,
}

pub fn p_sweep(op: &MarkovOperator, ps: &[f64], seed: u64, opts: &SpectralOptions) -> Result<Vec<PNorm>> {
    ps.iter()
        .map(|&p| {
            let e = mean_zero_norm(op, p, seed, opts)?;
            Ok(PNorm {
                p,
                lambda: e.lambda,
                heuristic: e.heuristic,
            })
        })
        .collect()
}

struct Extreme {
    value: f64,
    residual: f64,
    steps: usize,
}

/// Smallest eigenvalue of `Q` on mean-zero functions by restarted Lanczos
/// with full reorthogonalization.
fn quad_min(op: &MarkovOperator, seed: u64, opts: &SpectralOptions) -> Result<Extreme> {
    let n = op.len();
    if n < 2 {
        return Ok(Extreme {
            value: 0.0,
            residual: 0.0,
            steps: 0,
        });
    }
    let m = opts.lanczos_steps.clamp(1, n - 1);
    let mut start = op.random_mean_zero(seed, 0);
    let mut scratch = vec![0.0; n];
    let mut total = 0;
    let mut last = Extreme {
        value: f64::INFINITY,
        residual: f64::INFINITY,
        steps: 0,
    };
    for _ in 0..=opts.lanczos_restarts {
        let ns = op.norm(&start);
        start.iter_mut().for_each(|v| *v /= ns);
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        let mut w = vec![0.0; n];
        let mut broke = false;
        for j in 0..m {
            op.quad_into(&basis[j], &mut w, &mut scratch);
            total += 1;
            let a = op.inner(&w, &basis[j]);
            alpha.push(a);
            // two passes of classical Gram-Schmidt against the whole basis
            for _ in 0..2 {
                let coeffs: Vec<f64> = basis.iter().map(|v| op.inner(&w, v)).collect();
                for (c, v) in coeffs.iter().zip(&basis) {
                    for (x, y) in w.iter_mut().zip(v) {
                        *x -= c * y;
                    }
                }
                op.center(&mut w);
            }
            let b = op.norm(&w);
            if j + 1 == m {
                beta.push(b);
                break;
            }
            if b <= 1e-12 * (1.0 + a.abs()) {
                beta.push(0.0);
                broke = true;
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let k = alpha.len();
        let (vals, vecs) = tridiagonal_eigen(&alpha, &beta[..k - 1])?;
        let (imin, &vmin) = vals
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty tridiagonal");
        let residual = if broke { 0.0 } else { (beta[k - 1] * vecs[(k - 1) * k + imin]).abs() };
        last = Extreme {
            value: vmin.max(0.0),
            residual,
            steps: total,
        };
        if residual <= opts.lanczos_tol || broke {
            return Ok(last);
        }
        start = vec![0.0; n];
        for (r, v) in basis.iter().enumerate() {
            let c = vecs[r * k + imin];
            for (x, y) in start.iter_mut().zip(v) {
                *x += c * y;
            }
        }
        op.center(&mut start);
    }
    Ok(last)
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal `d`
/// and off-diagonal `e` (implicit QL). Returns eigenvalues and the row-major
/// eigenvector matrix whose column `j` belongs to eigenvalue `j`.
pub fn tridiagonal_eigen(d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    assert_eq!(e.len() + 1, n.max(1), "off-diagonal length");
    let mut d = d.to_vec();
    let mut e: Vec<f64> = e.iter().cloned().chain(std::iter::once(0.0)).collect();
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NonConvergence {
                    tol: f64::EPSILON,
                    iterations: iter,
                    history: vec![e[l].abs()],
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let zf = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * zf;
                    z[k * n + i] = c * z[k * n + i] - s * zf;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::CompactSpace;

    #[test]
    fn tridiagonal_matches_closed_form() {
        let n = 40;
        let (vals, vecs) = tridiagonal_eigen(&vec![2.0; n], &vec![-1.0; n - 1]).unwrap();
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        for (k, v) in sorted.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-12);
        }
        // columns are orthonormal eigenvectors
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| vecs[i * n + j]).collect();
            let norm: f64 = col.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
            for i in 0..n {
                let left = if i > 0 { -col[i - 1] } else { 0.0 };
                let right = if i + 1 < n { -col[i + 1] } else { 0.0 };
                assert!((2.0 * col[i] + left + right - vals[j] * col[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identity_action_has_no_gap() {
        let net = Net::torus_grid(8, 0.5);
        let op = build_markov(&net, &GroupAction::identity(CompactSpace::torus2())).unwrap();
        assert!(op.is_isometric());
        let r = kappa_lower_bound(&op, 1, &SpectralOptions::default()).unwrap();
        assert_eq!(r.lambda, 1.0);
        assert_eq!(r.kappa_lb, 0.0);
    }

    #[test]
    fn quarter_rotation_is_a_cycle_average() {
        // A = (P + P^-1) / 2 for the 4-cycle: eigenvalues cos(2 pi k / 4) = 1, 0, -1, 0
        let net = Net::ring(4, 0.5);
        let op = build_markov(&net, &GroupAction::rotation(0.25)).unwrap();
        assert!(op.is_isometric());
        let est = mean_zero_norm(&op, 2.0, 3, &SpectralOptions::default()).unwrap();
        assert!((est.lambda - 1.0).abs() < 1e-12);
        let r = kappa_lower_bound(&op, 3, &SpectralOptions::default()).unwrap();
        assert!(r.kappa_lb < 1e-5);
    }

    #[test]
    fn complete_averaging_kills_mean_zero() {
        let n = 6;
        let uniform: Vec<(usize, f64)> = (0..n).map(|j| (j, 1.0 / n as f64)).collect();
        let op = MarkovOperator::from_rows(vec![1.0 / n as f64; n], vec![vec![uniform; n]]).unwrap();
        let opts = SpectralOptions::default();
        assert!(mean_zero_norm(&op, 2.0, 0, &opts).unwrap().lambda < 1e-12);
        for e in p_sweep(&op, &[1.5, 3.0], 0, &opts).unwrap() {
            assert!(e.lambda < 1e-12 && e.heuristic);
        }
    }

    #[test]
    fn identity_sweep_is_flat() {
        let n = 5;
        let rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
        let op = MarkovOperator::from_rows(vec![0.2; n], vec![rows]).unwrap();
        for e in p_sweep(&op, &[1.5, 2.0, 3.0, 4.0], 0, &SpectralOptions::default()).unwrap() {
            assert!((e.lambda - 1.0).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn kappa_formula() {
        assert_eq!(kappa_from_lambda(1.0), 0.0);
        assert!((kappa_from_lambda(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn torus_operator_basics() {
        let net = Net::torus_grid(16, 0.5);
        let op = build_markov(&net, &GroupAction::sl2z()).unwrap();
        assert!(op.row_sum_error() <= 1e-12);
        assert!(op.min_entry() >= 0.0);
        let ones = vec![1.0; op.len()];
        assert!(op.apply(&ones).iter().all(|&v| v == 1.0));
        // interpolation on an equal-weight grid pairs P_s^T with P_{s^-1}
        assert!(op.asymmetry() < 1e-15);
        let f = op.random_mean_zero(5, 0);
        assert!(op.quad_form_defect(&f) >= -1e-12);
    }

    #[test]
    fn rejects_bad_exponent() {
        let op = MarkovOperator::from_rows(vec![1.0], vec![vec![vec![(0, 1.0)]]]).unwrap();
        assert!(mean_zero_norm(&op, 1.0, 0, &SpectralOptions::default()).is_err());
    }

    #[test]
    fn triplet_csv() {
        let op = build_markov(&Net::ring(4, 0.5), &GroupAction::rotation(0.25)).unwrap();
        let mut buf = Vec::new();
        op.write_triplets_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 8);
        assert!(text.contains("\n0,1,0.5\n"));
    }
}

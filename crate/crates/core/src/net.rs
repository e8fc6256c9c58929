//! C-nets of the base space with cell weights approximating `m`.
//!
//! Torus and circle nets are cell-centred regular grids whose Voronoi cells
//! are exact squares/arcs. Sphere nets come from greedy farthest-point
//! sampling over a seeded candidate cloud, with Monte-Carlo Voronoi weights.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::par::prelude::*;
use crate::rng;
use crate::space::{frac, CompactSpace, Point, SpaceKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Layout {
    /// `n x n` torus grid, node `i * n + j` at `((i + offset) / n, (j + offset) / n)`.
    Grid { n: usize, offset: f64 },
    /// `n` circle nodes at `(i + offset) / n`.
    Ring { n: usize, offset: f64 },
    Scattered,
}

#[derive(Clone, Debug)]
pub struct NetOptions {
    pub max_points: usize,
    /// Monte-Carlo samples for Voronoi weights of scattered nets.
    pub weight_samples: usize,
    /// Cap on the farthest-point candidate cloud.
    pub max_candidates: usize,
}

impl Default for NetOptions {
    fn default() -> Self {
        NetOptions {
            max_points: 1 << 20,
            weight_samples: 200_000,
            max_candidates: 200_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Net {
    space: CompactSpace,
    radius: f64,
    points: Vec<Point>,
    weights: Vec<f64>,
    layout: Layout,
}

/// Interpolation stencil: at most four `(node, weight)` pairs summing to one.
pub type Stencil = Vec<(usize, f64)>;

/// Smallest grid resolution whose covering radius (1/n in the rescaled metric) is <= c.
fn grid_resolution(c: f64) -> usize {
    (1.0 / c - 1e-9).ceil().max(1.0) as usize
}

fn cap_check(requested: usize, cap: usize) -> Result<()> {
    if requested > cap {
        return Err(Error::ResourceCap {
            what: "net points",
            requested,
            cap,
            flag: "max-nodes",
        });
    }
    Ok(())
}

/// Builds a C-net of `space` meeting the covering invariant.
pub fn build_net(space: CompactSpace, c: f64, seed: u64, opts: &NetOptions) -> Result<Net> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::usage(format!("net radius must lie in (0, 1], got {c}")));
    }
    match space.kind() {
        SpaceKind::Torus2 => {
            let n = grid_resolution(c);
            cap_check(n.saturating_mul(n), opts.max_points)?;
            let mut net = Net::torus_grid(n, 0.5);
            net.radius = c;
            Ok(net)
        }
        SpaceKind::Circle => {
            let n = grid_resolution(c);
            cap_check(n, opts.max_points)?;
            let mut net = Net::ring(n, 0.5);
            net.radius = c;
            Ok(net)
        }
        SpaceKind::Sphere3 => farthest_point_net(space, c, seed, opts),
    }
}

/// Normalized volume of a geodesic ball of rescaled radius `r` in S^3.
fn sphere_ball_fraction(r: f64) -> f64 {
    let th = std::f64::consts::PI * r.min(1.0);
    (th - th.sin() * th.cos()) / std::f64::consts::PI
}

fn farthest_point_net(space: CompactSpace, c: f64, seed: u64, opts: &NetOptions) -> Result<Net> {
    // a covering of this size roughly needs m(S^3) / m(B(c)) points
    let estimate = (1.0 / sphere_ball_fraction(c)).ceil() as usize;
    cap_check(estimate, opts.max_points)?;
    let mut target = 0.7 * c;
    for attempt in 0..4u64 {
        let wanted = (30.0 / sphere_ball_fraction(target / 2.0)).ceil() as usize;
        let m = wanted.clamp(2_000, opts.max_candidates.max(2_000));
        let mut rng = rng::stream(seed, attempt);
        let candidates: Vec<Point> = (0..m).map(|_| space.sample(&mut rng)).collect();
        let mut gap = vec![f64::INFINITY; m];
        let mut chosen = Vec::new();
        let mut next = 0usize;
        loop {
            chosen.push(next);
            if chosen.len() > opts.max_points {
                return Err(Error::ResourceCap {
                    what: "net points",
                    requested: chosen.len(),
                    cap: opts.max_points,
                    flag: "max-nodes",
                });
            }
            let p = candidates[next];
            let (mut far, mut far_d) = (0usize, -1.0f64);
            for (k, q) in candidates.iter().enumerate() {
                let d = space.dist(&p, q);
                if d < gap[k] {
                    gap[k] = d;
                }
                if gap[k] > far_d {
                    far_d = gap[k];
                    far = k;
                }
            }
            if far_d <= target {
                break;
            }
            next = far;
        }
        let points: Vec<Point> = chosen.iter().map(|&k| candidates[k]).collect();
        let mut net = Net {
            space,
            radius: c,
            weights: vec![1.0 / points.len() as f64; points.len()],
            points,
            layout: Layout::Scattered,
        };
        let report = verify_net(&net, 10_000, rng::derive(seed, 0xC0FE + attempt));
        if report.passed {
            net.weights = voronoi_weights(&net, opts.weight_samples, rng::derive(seed, 0x5EED)).weights;
            return Ok(net);
        }
        target *= 0.8;
    }
    Err(Error::Invariant(format!(
        "farthest-point sampling could not certify a {c}-net of sphere3"
    )))
}

impl Net {
    /// Cell-centred (`offset = 0.5`) or vertex-aligned (`offset = 0`) torus grid.
    pub fn torus_grid(n: usize, offset: f64) -> Net {
        assert!(n >= 1, "grid needs at least one node per side");
        let mut points = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                points.push(Point::torus(
                    (i as f64 + offset) / n as f64,
                    (j as f64 + offset) / n as f64,
                ));
            }
        }
        Net {
            space: CompactSpace::torus2(),
            radius: 1.0 / n as f64,
            weights: vec![1.0 / (n * n) as f64; n * n],
            points,
            layout: Layout::Grid { n, offset },
        }
    }

    pub fn ring(n: usize, offset: f64) -> Net {
        assert!(n >= 1, "ring needs at least one node");
        Net {
            space: CompactSpace::circle(),
            radius: 1.0 / n as f64,
            weights: vec![1.0 / n as f64; n],
            points: (0..n)
                .map(|i| Point::circle((i as f64 + offset) / n as f64))
                .collect(),
            layout: Layout::Ring { n, offset },
        }
    }

    /// Net from explicit points and weights (weights are renormalized).
    pub fn scattered(space: CompactSpace, radius: f64, points: Vec<Point>, weights: Vec<f64>) -> Result<Net> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::usage("scattered net needs matching, nonempty points and weights"));
        }
        if points.iter().any(|p| p.kind() != space.kind()) {
            return Err(Error::usage("net point outside the net's space"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::usage("net weights must be nonnegative with positive total"));
        }
        Ok(Net {
            space,
            radius,
            weights: weights.iter().map(|w| w / total).collect(),
            points,
            layout: Layout::Scattered,
        })
    }

    pub fn space(&self) -> &CompactSpace {
        &self.space
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest node, ties to the lowest index.
    pub fn nearest(&self, p: &Point) -> usize {
        match (self.layout, p) {
            (Layout::Grid { n, offset }, Point::Torus([x, y])) => {
                let (i0, _) = cell(*x, n, offset);
                let (j0, _) = cell(*y, n, offset);
                let mut best = (f64::INFINITY, usize::MAX);
                for i in [i0, (i0 + 1) % n] {
                    for j in [j0, (j0 + 1) % n] {
                        let k = i * n + j;
                        best = closer(best, (self.space.dist(p, &self.points[k]), k));
                    }
                }
                best.1
            }
            (Layout::Ring { n, offset }, Point::Circle(x)) => {
                let (i0, _) = cell(*x, n, offset);
                let a = (self.space.dist(p, &self.points[i0]), i0);
                let i1 = (i0 + 1) % n;
                closer(a, (self.space.dist(p, &self.points[i1]), i1)).1
            }
            _ => {
                let mut best = (f64::INFINITY, usize::MAX);
                for (k, q) in self.points.iter().enumerate() {
                    best = closer(best, (self.space.dist(p, q), k));
                }
                best.1
            }
        }
    }

    /// Multilinear interpolation stencil for grids and rings; the nearest
    /// node for scattered nets.
    pub fn interpolate(&self, p: &Point) -> Stencil {
        let mut out: Stencil = Vec::with_capacity(4);
        match (self.layout, p) {
            (Layout::Grid { n, offset }, Point::Torus([x, y])) => {
                let (i0, fx) = cell(*x, n, offset);
                let (j0, fy) = cell(*y, n, offset);
                for (i, wi) in [(i0, 1.0 - fx), ((i0 + 1) % n, fx)] {
                    for (j, wj) in [(j0, 1.0 - fy), ((j0 + 1) % n, fy)] {
                        push_weight(&mut out, i * n + j, wi * wj);
                    }
                }
            }
            (Layout::Ring { n, offset }, Point::Circle(x)) => {
                let (i0, fx) = cell(*x, n, offset);
                push_weight(&mut out, i0, 1.0 - fx);
                push_weight(&mut out, (i0 + 1) % n, fx);
            }
            _ => out.push((self.nearest(p), 1.0)),
        }
        let total: f64 = out.iter().map(|e| e.1).sum();
        for e in out.iter_mut() {
            e.1 /= total;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# warpcone-net v1")?;
        let layout = match self.layout {
            Layout::Grid { n, offset } => format!("grid n={n} offset={offset}"),
            Layout::Ring { n, offset } => format!("ring n={n} offset={offset}"),
            Layout::Scattered => "scattered".to_string(),
        };
        writeln!(w, "# space={} radius={} layout={layout}", self.space.kind(), self.radius)?;
        let dims = self.points.first().map_or(0, |p| p.coords().len());
        let cols: Vec<String> = (0..dims).map(|k| format!("c{k}")).collect();
        writeln!(w, "index,{},weight", cols.join(","))?;
        for (i, (p, wt)) in self.points.iter().zip(&self.weights).enumerate() {
            let coords: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
            writeln!(w, "{i},{},{wt}", coords.join(","))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }

    /// Reads a net written by [`Net::write_csv`].
    pub fn read_csv<R: BufRead>(r: R, origin: &Path) -> Result<Net> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut space = None;
        let mut radius = None;
        let mut layout = Layout::Scattered;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut saw_header = false;
        for (ln, line) in r.lines().enumerate() {
            let line = line?;
            let ln = ln + 1;
            if let Some(meta) = line.strip_prefix("# space=") {
                let mut parts = meta.split_whitespace();
                let kind: SpaceKind = parts.next().unwrap_or("").parse()?;
                space = Some(CompactSpace::new(kind));
                for part in parts {
                    if let Some(v) = part.strip_prefix("radius=") {
                        radius = Some(v.parse::<f64>().map_err(|e| perr(ln, e.to_string()))?);
                    } else if let Some(v) = part.strip_prefix("layout=") {
                        layout = match v {
                            "scattered" => Layout::Scattered,
                            "grid" => Layout::Grid { n: 0, offset: 0.0 },
                            "ring" => Layout::Ring { n: 0, offset: 0.0 },
                            other => return Err(perr(ln, format!("unknown layout `{other}`"))),
                        };
                    } else if let Some(v) = part.strip_prefix("n=") {
                        let n = v.parse::<usize>().map_err(|e| perr(ln, e.to_string()))?;
                        layout = match layout {
                            Layout::Grid { offset, .. } => Layout::Grid { n, offset },
                            Layout::Ring { offset, .. } => Layout::Ring { n, offset },
                            l => l,
                        };
                    } else if let Some(v) = part.strip_prefix("offset=") {
                        let o = v.parse::<f64>().map_err(|e| perr(ln, e.to_string()))?;
                        layout = match layout {
                            Layout::Grid { n, .. } => Layout::Grid { n, offset: o },
                            Layout::Ring { n, .. } => Layout::Ring { n, offset: o },
                            l => l,
                        };
                    }
                }
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !saw_header {
                saw_header = true;
                continue;
            }
            let kind = space
                .ok_or_else(|| perr(ln, "missing `# space=` header".into()))?
                .kind();
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| perr(ln, e.to_string()))?;
            if vals.len() < 3 {
                return Err(perr(ln, "expected index, coordinates and weight".into()));
            }
            points.push(Point::from_coords(kind, &vals[1..vals.len() - 1])?);
            weights.push(vals[vals.len() - 1]);
        }
        let space = space.ok_or_else(|| perr(0, "missing `# space=` header".into()))?;
        let radius = radius.ok_or_else(|| perr(0, "missing radius".into()))?;
        let expected = match layout {
            Layout::Grid { n, .. } => n * n,
            Layout::Ring { n, .. } => n,
            Layout::Scattered => points.len(),
        };
        if expected != points.len() || points.is_empty() {
            return Err(perr(0, format!("layout expects {expected} points, found {}", points.len())));
        }
        Ok(Net {
            space,
            radius,
            points,
            weights,
            layout,
        })
    }

    pub fn load(path: &Path) -> Result<Net> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Net::read_csv(f, path)
    }
}

#[inline]
fn closer(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

#[inline]
fn push_weight(out: &mut Stencil, k: usize, w: f64) {
    if w <= 1e-12 {
        return;
    }
    if let Some(e) = out.iter_mut().find(|e| e.0 == k) {
        e.1 += w;
    } else {
        out.push((k, w));
    }
}

/// Lower grid index and fractional position of coordinate `x` on an `n`-grid.
#[inline]
fn cell(x: f64, n: usize, offset: f64) -> (usize, f64) {
    let u = frac(x - offset / n as f64) * n as f64;
    let i = (u.floor() as usize).min(n - 1);
    let f = (u - i as f64).clamp(0.0, 1.0);
    (i, f)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightEstimate {
    pub weights: Vec<f64>,
    pub std_err: Vec<f64>,
    pub samples: usize,
}

const WEIGHT_BLOCK: usize = 8192;

/// Fraction of seeded uniform samples falling nearest to each node.
pub fn voronoi_weights(net: &Net, n_samples: usize, seed: u64) -> WeightEstimate {
    let n = net.len();
    let n_samples = n_samples.max(1);
    let blocks = n_samples.div_ceil(WEIGHT_BLOCK);
    let partial: Vec<Vec<u32>> = cfg_into_iter!(0..blocks)
        .map(|b| {
            let mut rng = rng::stream(seed, b as u64);
            let mut counts = vec![0u32; n];
            let len = WEIGHT_BLOCK.min(n_samples - b * WEIGHT_BLOCK);
            for _ in 0..len {
                counts[net.nearest(&net.space.sample(&mut rng))] += 1;
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; n];
    for block in &partial {
        for (c, &b) in counts.iter_mut().zip(block) {
            *c += b as u64;
        }
    }
    let total = n_samples as f64;
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let std_err = weights
        .iter()
        .map(|&p| (p * (1.0 - p) / total).sqrt())
        .collect();
    WeightEstimate {
        weights,
        std_err,
        samples: n_samples,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoveringReport {
    pub max_distance: f64,
    pub radius: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Largest nearest-node distance over seeded uniform samples.
pub fn verify_net(net: &Net, n_samples: usize, seed: u64) -> CoveringReport {
    let n_samples = n_samples.max(1);
    let blocks = n_samples.div_ceil(WEIGHT_BLOCK);
    let per_block: Vec<f64> = cfg_into_iter!(0..blocks)
        .map(|b| {
            let mut rng = rng::stream(seed, b as u64);
            let len = WEIGHT_BLOCK.min(n_samples - b * WEIGHT_BLOCK);
            (0..len)
                .map(|_| {
                    let y = net.space.sample(&mut rng);
                    net.space.dist(&y, &net.points[net.nearest(&y)])
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let max_distance = per_block.into_iter().fold(0.0, f64::max);
    CoveringReport {
        max_distance,
        radius: net.radius,
        samples: n_samples,
        passed: max_distance <= net.radius,
    }
}

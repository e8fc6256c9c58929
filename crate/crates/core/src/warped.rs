//! Level-set approximation of the warped metric.
//!
//! Nodes are net points at level `t`. Cone edges join base-close nodes with
//! cost `t * d`; generator edges join `x_i` to the node nearest `s x_i` with
//! cost `1 + t * (snap error)`. Shortest paths give the level metric.
//!
//! Edge weights are stored as fixed-point integers (`2^-32` units) so that
//! Dijkstra sums are exact: symmetry and the triangle inequality hold
//! without tolerance, and the `f64` view `ticks / 2^32` is exact too.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::io::Write;
use std::path::Path;

use crate::action::GroupAction;
use crate::error::{Error, Result};
use crate::net::{Layout, Net};
#[allow(unused_imports)]
use crate::par::prelude::*;

pub const TICKS_PER_UNIT: f64 = 4_294_967_296.0;

/// Converts a nonnegative weight to ticks, rounding down so stored weights
/// never exceed the real chain cost.
#[inline]
pub fn to_ticks(w: f64) -> u64 {
    (w * TICKS_PER_UNIT).floor() as u64
}

#[inline]
pub fn from_ticks(t: u64) -> f64 {
    t as f64 / TICKS_PER_UNIT
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Cone,
    Generator(usize),
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub ticks: u64,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn weight(&self) -> f64 {
        from_ticks(self.ticks)
    }
}

#[derive(Clone, Debug)]
pub struct WarpedLevelGraph {
    t: f64,
    theta: f64,
    radius: f64,
    weights: Vec<f64>,
    labels: Vec<String>,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    costs: Vec<u64>,
    snap: Vec<Vec<u32>>,
}

/// Finite metric spaces the distortion machinery can query row by row.
pub trait FiniteMetric: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn distances_from(&self, i: usize) -> Vec<f64>;

    /// `d(x, A)` for every `x`.
    fn distances_to_set(&self, set: &[usize]) -> Vec<f64>;
}

/// One source's shortest-path distances.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceField {
    pub source: usize,
    pub ticks: Vec<u64>,
}

impl DistanceField {
    pub fn get(&self, j: usize) -> f64 {
        from_ticks(self.ticks[j])
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.ticks.iter().map(|&t| from_ticks(t)).collect()
    }
}

/// Enumerates undirected grid offsets `(a, b)` within base distance `reach`,
/// one representative per `+-` pair.
fn half_plane_offsets(n: usize, reach: f64) -> Vec<(i64, i64)> {
    let h = std::f64::consts::SQRT_2 / n as f64;
    let m = (reach / h).floor() as i64;
    let mut out = Vec::new();
    for a in 0..=m {
        for b in -m..=m {
            if a == 0 && b <= 0 {
                continue;
            }
            if h * ((a * a + b * b) as f64).sqrt() <= reach * (1.0 + 1e-12) {
                out.push((a, b));
            }
        }
    }
    out
}

impl WarpedLevelGraph {
    /// Builds the level-`t` graph over `net`. `max_edges` bounds the directed
    /// adjacency size.
    pub fn build(net: &Net, action: &GroupAction, t: f64, theta: f64, max_edges: usize) -> Result<Self> {
        if !(t >= 1.0) {
            return Err(Error::usage(format!("level t must be >= 1, got {t}")));
        }
        if !(theta >= 2.0) {
            return Err(Error::usage(format!("cone cutoff theta must be >= 2, got {theta}")));
        }
        if net.space().kind() != action.space().kind() {
            return Err(Error::usage("net and action live on different spaces"));
        }
        let space = *net.space();
        let pts = net.points();
        let n = pts.len();
        let reach = theta * net.radius();
        let mut edges: Vec<Edge> = Vec::new();
        let cap_err = |requested: usize| Error::ResourceCap {
            what: "graph edges",
            requested,
            cap: max_edges,
            flag: "max-edges",
        };

        let mut cone: Vec<(usize, usize, u64)> = Vec::new();
        match net.layout() {
            Layout::Grid { n: side, .. } => {
                let offs = half_plane_offsets(side, reach);
                if 2 * offs.len() * n > max_edges {
                    return Err(cap_err(2 * offs.len() * n));
                }
                let s = side as i64;
                for i in 0..side {
                    for j in 0..side {
                        let u = i * side + j;
                        for &(a, b) in &offs {
                            let ii = (i as i64 + a).rem_euclid(s) as usize;
                            let jj = (j as i64 + b).rem_euclid(s) as usize;
                            let v = ii * side + jj;
                            if u != v {
                                let d = space.dist(&pts[u], &pts[v]);
                                cone.push((u.min(v), u.max(v), to_ticks(t * d)));
                            }
                        }
                    }
                }
            }
            Layout::Ring { n: side, .. } => {
                let h = 2.0 / side as f64;
                let m = ((reach / h) * (1.0 + 1e-12)).floor() as usize;
                for u in 0..side {
                    for a in 1..=m {
                        let v = (u + a) % side;
                        if u != v {
                            let d = space.dist(&pts[u], &pts[v]);
                            cone.push((u.min(v), u.max(v), to_ticks(t * d)));
                        }
                    }
                }
            }
            Layout::Scattered => {
                for u in 0..n {
                    for v in u + 1..n {
                        let d = space.dist(&pts[u], &pts[v]);
                        if d <= reach {
                            cone.push((u, v, to_ticks(t * d)));
                        }
                    }
                    if 2 * cone.len() > max_edges {
                        return Err(cap_err(2 * cone.len()));
                    }
                }
            }
        }
        // wrap-around on small grids can produce the same pair twice
        cone.sort_unstable();
        cone.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        edges.extend(cone.into_iter().map(|(i, j, ticks)| Edge {
            i,
            j,
            ticks,
            kind: EdgeKind::Cone,
        }));

        let mut snap = Vec::with_capacity(action.len());
        for s in 0..action.len() {
            let table: Vec<u32> = cfg_iter!(pts)
                .map(|p| net.nearest(&action.apply_index(s, p)) as u32)
                .collect();
            for (i, &k) in table.iter().enumerate() {
                let k = k as usize;
                if k == i {
                    continue;
                }
                let image = action.apply_index(s, &pts[i]);
                let w = 1.0 + t * space.dist(&image, &pts[k]);
                edges.push(Edge {
                    i,
                    j: k,
                    ticks: to_ticks(w),
                    kind: EdgeKind::Generator(s),
                });
            }
            snap.push(table);
            if 2 * edges.len() > max_edges {
                return Err(cap_err(2 * edges.len()));
            }
        }

        let g = Self::assemble(
            t,
            theta,
            net.radius(),
            net.weights().to_vec(),
            action.generators().iter().map(|g| g.label.clone()).collect(),
            edges,
            snap,
        );
        let components = g.components();
        if components > 1 {
            return Err(Error::Disconnected { components, theta });
        }
        Ok(g)
    }

    /// Graph over explicit undirected edges, for small hand-made examples.
    pub fn from_edges(weights: Vec<f64>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = weights.len();
        let mut list = Vec::with_capacity(edges.len());
        for &(i, j, w) in edges {
            if i >= n || j >= n || !(w > 0.0) {
                return Err(Error::usage(format!("bad edge ({i}, {j}, {w})")));
            }
            list.push(Edge {
                i,
                j,
                ticks: to_ticks(w),
                kind: EdgeKind::Cone,
            });
        }
        Ok(Self::assemble(1.0, 2.0, 1.0, weights, Vec::new(), list, Vec::new()))
    }

    fn assemble(
        t: f64,
        theta: f64,
        radius: f64,
        weights: Vec<f64>,
        labels: Vec<String>,
        edges: Vec<Edge>,
        snap: Vec<Vec<u32>>,
    ) -> Self {
        let n = weights.len();
        let mut degree = vec![0usize; n + 1];
        for e in &edges {
            degree[e.i + 1] += 1;
            degree[e.j + 1] += 1;
        }
        for k in 0..n {
            degree[k + 1] += degree[k];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[n]];
        let mut costs = vec![0u64; offsets[n]];
        for e in &edges {
            targets[fill[e.i]] = e.j as u32;
            costs[fill[e.i]] = e.ticks;
            fill[e.i] += 1;
            targets[fill[e.j]] = e.i as u32;
            costs[fill[e.j]] = e.ticks;
            fill[e.j] += 1;
        }
        WarpedLevelGraph {
            t,
            theta,
            radius,
            weights,
            labels,
            edges,
            offsets,
            targets,
            costs,
            snap,
        }
    }

    fn components(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in &self.targets[self.offsets[u]..self.offsets[u + 1]] {
                    if !seen[v as usize] {
                        seen[v as usize] = true;
                        queue.push_back(v as usize);
                    }
                }
            }
        }
        count
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Net radius `C` the graph was built on.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Directed adjacency size (each undirected edge counted twice).
    pub fn adjacency_len(&self) -> usize {
        self.targets.len()
    }

    /// `snap(s x_i)` for generator index `s`.
    pub fn snap(&self, s: usize, i: usize) -> usize {
        self.snap[s][i] as usize
    }

    pub fn generator_count(&self) -> usize {
        self.snap.len()
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let r = self.offsets[u]..self.offsets[u + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.costs[r])
            .map(|(&v, &c)| (v as usize, c))
    }

    /// Multi-source Dijkstra in ticks.
    pub fn dijkstra_ticks(&self, sources: &[usize]) -> Vec<u64> {
        let n = self.len();
        let mut dist = vec![u64::MAX; n];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                heap.push(Reverse((0u64, s as u32)));
            }
        }
        while let Some(Reverse((d, u))) = heap.pop() {
            let u = u as usize;
            if d > dist[u] {
                continue;
            }
            for (v, c) in self.neighbors(u) {
                let nd = d + c;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Reverse((nd, v as u32)));
                }
            }
        }
        dist
    }

    /// Exact distances from `source` to each of `targets`, stopping as soon
    /// as all of them are settled.
    pub fn distances_to_targets(&self, source: usize, targets: &[usize]) -> Vec<f64> {
        let mut best: HashMap<usize, u64> = HashMap::new();
        let mut pending: HashMap<usize, usize> = HashMap::new();
        for (k, &t) in targets.iter().enumerate() {
            pending.entry(t).or_insert(k);
        }
        let mut out = vec![f64::NAN; targets.len()];
        let mut heap = BinaryHeap::new();
        best.insert(source, 0);
        heap.push(Reverse((0u64, source as u32)));
        let mut left = pending.len();
        while let Some(Reverse((d, u))) = heap.pop() {
            let u = u as usize;
            if best.get(&u).is_some_and(|&b| d > b) {
                continue;
            }
            if let Some(k) = pending.remove(&u) {
                out[k] = from_ticks(d);
                left -= 1;
                if left == 0 {
                    break;
                }
            }
            for (v, c) in self.neighbors(u) {
                let nd = d + c;
                if best.get(&v).is_none_or(|&b| nd < b) {
                    best.insert(v, nd);
                    heap.push(Reverse((nd, v as u32)));
                }
            }
        }
        // duplicated targets share the first slot's value
        for (k, &t) in targets.iter().enumerate() {
            if out[k].is_nan() {
                out[k] = out[targets.iter().position(|&x| x == t).unwrap_or(k)];
            }
        }
        out
    }

    pub fn distance_field(&self, source: usize) -> DistanceField {
        DistanceField {
            source,
            ticks: self.dijkstra_ticks(&[source]),
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.distance_field(i).get(j)
    }

    /// One field per source, in source order.
    pub fn all_distances(&self, sources: &[usize]) -> Vec<DistanceField> {
        cfg_iter!(sources).map(|&s| self.distance_field(s)).collect()
    }

    pub fn write_edges_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,weight,kind")?;
        for e in &self.edges {
            let kind = match e.kind {
                EdgeKind::Cone => "cone".to_string(),
                EdgeKind::Generator(s) => format!("generator:{}", self.labels[s]),
            };
            writeln!(w, "{},{},{},{kind}", e.i, e.j, e.weight())?;
        }
        Ok(())
    }

    pub fn save_edges(&self, path: &Path) -> Result<()> {
        self.write_edges_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

impl FiniteMetric for WarpedLevelGraph {
    fn len(&self) -> usize {
        self.weights.len()
    }

    fn distances_from(&self, i: usize) -> Vec<f64> {
        self.distance_field(i).to_f64()
    }

    fn distances_to_set(&self, set: &[usize]) -> Vec<f64> {
        self.dijkstra_ticks(set).into_iter().map(from_ticks).collect()
    }
}

/// Explicit distance matrix, for small exact examples.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMetric {
    n: usize,
    d: Vec<f64>,
}

impl DenseMetric {
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::usage("distance matrix must be n x n"));
        }
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (d[i * n + j], d[j * n + i]);
                if a != b || a < 0.0 || (i == j && a != 0.0) {
                    return Err(Error::usage(format!("not a metric at ({i}, {j})")));
                }
            }
        }
        Ok(DenseMetric { n, d })
    }

    /// Star with `leaves` leaves at distance 1 from the centre (node 0).
    pub fn star(leaves: usize) -> Self {
        let n = leaves + 1;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = match (i, j) {
                    _ if i == j => 0.0,
                    (0, _) | (_, 0) => 1.0,
                    _ => 2.0,
                };
            }
        }
        DenseMetric { n, d }
    }

    /// Shortest-path metric of the `n`-cycle.
    pub fn cycle(n: usize) -> Self {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let k = i.abs_diff(j);
                d[i * n + j] = k.min(n - k) as f64;
            }
        }
        DenseMetric { n, d }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

impl FiniteMetric for DenseMetric {
    fn len(&self) -> usize {
        self.n
    }

    fn distances_from(&self, i: usize) -> Vec<f64> {
        self.d[i * self.n..(i + 1) * self.n].to_vec()
    }

    fn distances_to_set(&self, set: &[usize]) -> Vec<f64> {
        (0..self.n)
            .map(|x| set.iter().map(|&a| self.get(x, a)).fold(f64::INFINITY, f64::min))
            .collect()
    }
}

/// Sorted pair-distance distribution under `m x m`, estimated from sampled
/// sources.
#[derive(Clone, Debug)]
pub struct PairMeasure {
    /// `(distance, mass)` sorted by distance, masses normalized by the
    /// sampled source mass.
    pairs: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
}

impl PairMeasure {
    /// Uses the distance rows of `sources` only.
    pub fn new<M: FiniteMetric>(metric: &M, weights: &[f64], sources: &[usize]) -> Result<Self> {
        let source_mass: f64 = sources.iter().map(|&i| weights[i]).sum();
        if sources.is_empty() || !(source_mass > 0.0) {
            return Err(Error::Data("pair measure needs sources of positive mass".into()));
        }
        let rows: Vec<Vec<f64>> = cfg_iter!(sources).map(|&i| metric.distances_from(i)).collect();
        let mut pairs = Vec::with_capacity(sources.len() * weights.len());
        for (&i, row) in sources.iter().zip(&rows) {
            for (j, &d) in row.iter().enumerate() {
                pairs.push((d, weights[i] * weights[j] / source_mass));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut acc = 0.0;
        let cumulative = pairs
            .iter()
            .map(|p| {
                acc += p.1;
                acc
            })
            .collect();
        Ok(PairMeasure { pairs, cumulative })
    }

    /// Estimated `(m x m)(D(R))`, the mass of pairs at distance `<= r`.
    pub fn within(&self, r: f64) -> f64 {
        let k = self.pairs.partition_point(|p| p.0 <= r);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Largest `R` with `within(R) <= 1/2`: just below the first distance at
    /// which the cumulative mass exceeds one half.
    pub fn half_measure_radius(&self) -> Result<f64> {
        let mut k = 0;
        while k < self.pairs.len() {
            // take every pair at this distance at once
            let d = self.pairs[k].0;
            let end = self.pairs[k..].partition_point(|p| p.0 <= d) + k;
            if self.cumulative[end - 1] > 0.5 {
                if d <= 0.0 {
                    return Err(Error::Data(format!(
                        "self-pairs already carry mass {} > 1/2; weights are too atomic",
                        self.cumulative[end - 1]
                    )));
                }
                return Ok(d.next_down());
            }
            k = end;
        }
        Err(Error::Data("pair measure never exceeds 1/2".into()))
    }

    pub fn max_distance(&self) -> f64 {
        self.pairs.last().map_or(0.0, |p| p.0)
    }
}

/// Upper bound `min(1, s^R c (R L^R / t)^k)` on the level-set measure of a
/// warped `R`-ball, evaluated in log space.
pub fn ball_cover_bound(r: f64, t: f64, k: f64, lipschitz: f64, s_count: usize, ball_const: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let log = r * (s_count as f64).ln() + ball_const.ln() + k * (r.ln() + r * lipschitz.ln() - t.ln());
    if log >= 0.0 {
        1.0
    } else {
        log.exp()
    }
}

/// Largest `c` with `ball_cover_bound(c ln t, ...) <= target`, by bisection.
pub fn largest_log_coefficient(t: f64, k: f64, lipschitz: f64, s_count: usize, ball_const: f64, target: f64) -> f64 {
    if t <= 1.0 {
        return 0.0;
    }
    let f = |c: f64| ball_cover_bound(c * t.ln(), t, k, lipschitz, s_count, ball_const);
    let mut hi = 1.0;
    while f(hi) <= target && hi < 1e6 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_net, NetOptions};
    use crate::space::{CompactSpace, Point};

    fn torus_graph(n: usize, t: f64) -> (Net, GroupAction, WarpedLevelGraph) {
        let net = Net::torus_grid(n, 0.5);
        let action = GroupAction::sl2z();
        let g = WarpedLevelGraph::build(&net, &action, t, 3.0, usize::MAX).unwrap();
        (net, action, g)
    }

    #[test]
    fn grid_offsets_reach_second_neighbours() {
        let offs = half_plane_offsets(16, 3.0 / 16.0);
        assert_eq!(offs.len(), 6);
        assert!(offs.contains(&(1, -1)) && offs.contains(&(2, 0)));
    }

    #[test]
    fn identity_action_gives_cone_metric() {
        let net = build_net(CompactSpace::circle(), 1.0 / 64.0, 0, &NetOptions::default()).unwrap();
        let action = GroupAction::identity(CompactSpace::circle());
        let t = 10.0;
        let g = WarpedLevelGraph::build(&net, &action, t, 3.0, usize::MAX).unwrap();
        for i in 0..net.len() {
            let row = g.distances_from(i);
            for j in 0..net.len() {
                let cone = t * net.space().dist(&net.points()[i], &net.points()[j]);
                assert!((row[j] - cone).abs() <= 0.05 * cone + 1e-6, "{i} {j}");
            }
        }
    }

    #[test]
    fn level_one_is_bounded_by_the_cone() {
        let (net, _, g) = torus_graph(8, 1.0);
        for i in 0..net.len() {
            for (j, d) in g.distances_from(i).into_iter().enumerate() {
                let cone = net.space().dist(&net.points()[i], &net.points()[j]);
                assert!(d <= 1.3 * cone + 1e-12);
                assert!(d <= 1.0 + 2.0 * net.radius());
            }
        }
    }

    #[test]
    fn generator_edges_are_short() {
        let (net, action, g) = torus_graph(32, 32.0);
        for s in 0..action.len() {
            for i in 0..net.len() {
                let d = g.distance(i, g.snap(s, i));
                assert!(d <= 1.0 + 32.0 * net.radius(), "{d}");
            }
        }
        for e in g.edges() {
            assert!(e.ticks > 0);
            if let EdgeKind::Generator(_) = e.kind {
                assert!(e.weight() >= 1.0 && e.weight() <= 2.0);
            }
        }
    }

    #[test]
    fn generator_hop_beats_the_cone() {
        let (net, action, g) = torus_graph(64, 64.0);
        let a = action.index_of("A").unwrap();
        let i = 10 * 64 + 37;
        let j = g.snap(a, i);
        let cone = 64.0 * net.space().dist(&net.points()[i], &net.points()[j]);
        assert!(g.distance(i, j) <= 2.0);
        assert!(cone > 10.0, "{cone}");
    }

    #[test]
    fn batched_matches_single() {
        let (_, _, g) = torus_graph(16, 16.0);
        let sources: Vec<usize> = (0..256).step_by(7).collect();
        let fields = g.all_distances(&sources);
        for (f, &s) in fields.iter().zip(&sources) {
            assert_eq!(f.source, s);
            for j in (0..256).step_by(11) {
                assert_eq!(f.get(j), g.distance(s, j));
            }
        }
    }

    #[test]
    fn disconnected_graph_is_reported() {
        // a scattered net with two far clusters and no generators
        let space = CompactSpace::circle();
        let pts = vec![Point::circle(0.0), Point::circle(0.01), Point::circle(0.5), Point::circle(0.51)];
        let net = Net::scattered(space, 0.01, pts, vec![1.0; 4]).unwrap();
        let err = WarpedLevelGraph::build(&net, &GroupAction::identity(space), 2.0, 3.0, usize::MAX)
            .unwrap_err();
        assert!(matches!(err, Error::Disconnected { components: 2, .. }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn edge_cap() {
        let net = Net::torus_grid(32, 0.5);
        let err = WarpedLevelGraph::build(&net, &GroupAction::sl2z(), 4.0, 3.0, 1000).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn pair_measure_extremes() {
        let (_, _, g) = torus_graph(16, 16.0);
        let all: Vec<usize> = (0..g.len()).collect();
        let pm = PairMeasure::new(&g, g.weights(), &all).unwrap();
        let self_mass: f64 = g.weights().iter().map(|w| w * w).sum();
        assert!((pm.within(0.0) - self_mass).abs() < 1e-15);
        assert!((pm.within(pm.max_distance()) - 1.0).abs() < 1e-12);
        let r = pm.half_measure_radius().unwrap();
        assert!(pm.within(r) <= 0.5 && pm.within(r + 1.0) > 0.5);
    }

    #[test]
    fn two_point_half_measure() {
        let g = WarpedLevelGraph::from_edges(vec![0.5, 0.5], &[(0, 1, 3.0)]).unwrap();
        let pm = PairMeasure::new(&g, g.weights(), &[0, 1]).unwrap();
        let r = pm.half_measure_radius().unwrap();
        assert!((0.0..3.0).contains(&r));
        assert_eq!(pm.within(r), 0.5);
        let atomic = WarpedLevelGraph::from_edges(vec![0.9, 0.1], &[(0, 1, 3.0)]).unwrap();
        let pm = PairMeasure::new(&atomic, atomic.weights(), &[0, 1]).unwrap();
        assert!(matches!(pm.half_measure_radius(), Err(Error::Data(_))));
    }

    #[test]
    fn targets_may_repeat_and_include_the_source() {
        let (_, _, g) = torus_graph(8, 16.0);
        let targets = [5, 0, 5, 17, 0];
        let d = g.distances_to_targets(0, &targets);
        for (k, &t) in targets.iter().enumerate() {
            assert_eq!(d[k], g.distance(0, t));
        }
    }

    #[test]
    fn ball_cover_bound_shape() {
        let (k, l, s, c) = (2.0, 1.618, 4, std::f64::consts::FRAC_PI_2);
        assert_eq!(ball_cover_bound(0.0, 10.0, k, l, s, c), 0.0);
        let mut last = 1.0;
        for t in [1e4, 1e6, 1e8, 1e10] {
            let b = ball_cover_bound(3.0, t, k, l, s, c);
            assert!(b < last);
            last = b;
        }
        assert!(last < 1e-9);
        assert_eq!(ball_cover_bound(1e3, 10.0, k, l, s, c), 1.0);
        // no overflow far outside the useful range
        assert_eq!(ball_cover_bound(1e300, 2.0, k, l, s, c), 1.0);
    }

    #[test]
    fn log_coefficient_bisection() {
        let (k, l, s, c) = (2.0, 1.618, 4, std::f64::consts::FRAC_PI_2);
        for t in [1e3, 1e6, 1e12] {
            let best = largest_log_coefficient(t, k, l, s, c, 0.5);
            assert!(best > 0.0);
            assert!(ball_cover_bound(best * t.ln(), t, k, l, s, c) <= 0.5);
            assert!(ball_cover_bound(best * 1.001 * t.ln(), t, k, l, s, c) > 0.5);
        }
    }

    #[test]
    fn dense_examples() {
        let c = DenseMetric::cycle(4);
        assert_eq!(c.get(0, 2), 2.0);
        assert_eq!(c.distances_to_set(&[0, 2]), vec![0.0, 1.0, 0.0, 1.0]);
        let s = DenseMetric::star(3);
        assert_eq!(s.distances_from(1), vec![1.0, 0.0, 2.0, 2.0]);
        assert!(DenseMetric::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
    }

    #[test]
    fn edge_csv_lists_kinds() {
        let (_, _, g) = torus_graph(4, 4.0);
        let mut buf = Vec::new();
        g.write_edges_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,j,weight,kind\n"));
        assert!(text.contains(",cone\n"));
        assert!(text.contains(",generator:A^-1\n"));
    }
}

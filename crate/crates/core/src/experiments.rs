//! The five canonical experiments and their CSV result tables.
//!
//! | id | sweep | measures |
//! |----|-------|----------|
//! | E1 | grid sizes | spectral gap `kappa_lb` of the averaging operator |
//! | E2 | levels `t` | sampled warped ball measures against `ball_cover_bound` |
//! | E3 | levels `t` | lower bound `kappa R_t / 4` vs Bourgain distortion, plus the audit |
//! | E4 | levels `t` | half-measure radius `R_t` |
//! | E5 | grid sizes x `p` | `lambda_p` of the symmetrized operator |
//!
//! Levels run in parallel; rows are always emitted in parameter order, so a
//! rerun with the same config writes the same bytes. Wall-clock times go to a
//! separate `<id>.timing.csv`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;

use crate::action::GroupAction;
use crate::config::ExperimentConfig;
use crate::distortion::{
    audit_embedding, bourgain_embed, embedding_distortion, paper_lower_bound, random_embedding, AuditContext,
};
use crate::error::{Error, Result};
use crate::net::{build_net, Net, NetOptions};
#[allow(unused_imports)]
use crate::par::prelude::*;
use crate::rng;
use crate::space::CompactSpace;
use crate::spectral::{build_markov, kappa_lower_bound, p_sweep, SpectralOptions};
use crate::warped::{ball_cover_bound, largest_log_coefficient, PairMeasure, WarpedLevelGraph};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Target exponent of the E3 embeddings and audit.
const AUDIT_P: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [
        ExperimentId::E1,
        ExperimentId::E2,
        ExperimentId::E3,
        ExperimentId::E4,
        ExperimentId::E5,
    ];
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "E1" => Ok(ExperimentId::E1),
            "E2" => Ok(ExperimentId::E2),
            "E3" => Ok(ExperimentId::E3),
            "E4" => Ok(ExperimentId::E4),
            "E5" => Ok(ExperimentId::E5),
            _ => Err(Error::usage(format!("unknown experiment `{s}` (expected E1..E5 or all)"))),
        }
    }
}

/// A rectangular table of formatted cells. The first two columns are always
/// `config_hash` and `seed`; the last is `status` (`ok` or `truncated: ...`).
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub experiment: String,
    pub config_hash: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// `(row label, seconds)`; not part of the CSV.
    pub timings: Vec<(String, f64)>,
}

impl ResultTable {
    fn new(id: ExperimentId, cfg: &ExperimentConfig, columns: &[&str]) -> Self {
        let mut cols = vec!["config_hash".to_string(), "seed".to_string()];
        cols.extend(columns.iter().map(|c| c.to_string()));
        cols.push("status".into());
        ResultTable {
            experiment: id.to_string(),
            config_hash: cfg.hash(),
            columns: cols,
            rows: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn push(&mut self, seed: u64, cells: Vec<String>, status: &str) {
        let mut row = vec![self.config_hash.clone(), seed.to_string()];
        row.extend(cells);
        row.push(status.to_string());
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// A row whose measurement stopped at a resource cap; unknown cells stay empty.
    fn push_truncated(&mut self, seed: u64, known: Vec<String>, err: &Error) {
        let width = self.columns.len() - 3;
        let mut cells = known;
        cells.resize(width, String::new());
        let msg = err.to_string().replace(',', ";");
        self.push(seed, cells, &format!("truncated: {msg}"));
    }

    pub fn truncated(&self) -> bool {
        self.rows.iter().any(|r| r.last().is_some_and(|s| s.starts_with("truncated")))
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::usage(format!("table {} has no column `{name}`", self.experiment)))
    }

    /// Numeric column; empty cells (truncated rows) are skipped.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        self.rows
            .iter()
            .filter(|r| !r[k].is_empty())
            .map(|r| {
                r[k].parse::<f64>()
                    .map_err(|e| Error::Data(format!("column `{name}`: `{}`: {e}", r[k])))
            })
            .collect()
    }

    pub fn column_str(&self, name: &str) -> Result<Vec<&str>> {
        let k = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[k].as_str()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# warpcone v{VERSION} experiment={} config_hash={}\n",
            self.experiment, self.config_hash
        );
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("row,seconds\n");
        for (label, secs) in &self.timings {
            s.push_str(&format!("{label},{secs:.3}\n"));
        }
        s
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut experiment = String::new();
        let mut config_hash = String::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let ln = ln + 1;
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("experiment", v)) => experiment = v.to_string(),
                        Some(("config_hash", v)) => config_hash = v.to_string(),
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = line.split(',').map(str::to_string).collect();
            match &columns {
                None => columns = Some(cells),
                Some(c) if c.len() != cells.len() => {
                    return Err(perr(ln, format!("expected {} cells, found {}", c.len(), cells.len())))
                }
                Some(_) => rows.push(cells),
            }
        }
        let columns = columns.ok_or_else(|| perr(0, "no header row".into()))?;
        Ok(ResultTable {
            experiment,
            config_hash,
            columns,
            rows,
            timings: Vec::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?, path)
    }

    /// Writes `<dir>/<id>.csv` and `<dir>/<id>.timing.csv`; returns the former.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.experiment));
        fs::write(&path, self.to_csv())?;
        fs::write(dir.join(format!("{}.timing.csv", self.experiment)), self.timing_csv())?;
        Ok(path)
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn int(x: usize) -> String {
    x.to_string()
}

fn spectral_options(cfg: &ExperimentConfig) -> SpectralOptions {
    SpectralOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        ..SpectralOptions::default()
    }
}

fn net_options(cfg: &ExperimentConfig) -> NetOptions {
    NetOptions {
        max_points: cfg.max_nodes,
        weight_samples: cfg.weight_samples,
        ..NetOptions::default()
    }
}

fn is_cap(e: &Error) -> bool {
    matches!(e, Error::ResourceCap { .. })
}

/// Everything one level `t` needs: the net, the warped graph and sampled sources.
struct Level {
    seed: u64,
    net: Net,
    graph: WarpedLevelGraph,
    sources: Vec<usize>,
}

impl Level {
    fn build(cfg: &ExperimentConfig, action: &GroupAction, t: f64) -> Result<Level> {
        let seed = rng::derive(cfg.seed, t.to_bits());
        let net = build_net(CompactSpace::new(cfg.space), (cfg.net_scale / t).min(1.0), seed, &net_options(cfg))?;
        let graph = WarpedLevelGraph::build(&net, action, t, cfg.theta, cfg.max_edges)?;
        let n = graph.len();
        let mut sources = index::sample(&mut rng::stream(seed, 1), n, cfg.sources.min(n)).into_vec();
        sources.sort_unstable();
        Ok(Level {
            seed,
            net,
            graph,
            sources,
        })
    }

    fn pair_measure(&self) -> Result<PairMeasure> {
        PairMeasure::new(&self.graph, self.graph.weights(), &self.sources)
    }
}

/// Level rows computed independently (possibly in parallel) and reassembled in order.
type LevelOutcome<T> = (f64, std::result::Result<T, Error>, f64);

fn run_levels<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(f64) -> Result<T> + Sync + Send,
) -> Vec<LevelOutcome<T>> {
    cfg_iter!(cfg.levels)
        .map(|&t| {
            let start = Instant::now();
            let out = f(t);
            (t, out, start.elapsed().as_secs_f64())
        })
        .collect()
}

fn run_grids<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Vec<(usize, std::result::Result<T, Error>, f64)> {
    cfg_iter!(cfg.grids)
        .map(|&n| {
            let start = Instant::now();
            let out = f(n);
            (n, out, start.elapsed().as_secs_f64())
        })
        .collect()
}

/// Net of resolution `n` for the grid experiments: `n x n` on the torus, `n`
/// points on the circle, covering radius `1 / n` on the sphere.
fn grid_net(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Net> {
    build_net(CompactSpace::new(cfg.space), 1.0 / n as f64, seed, &net_options(cfg))
}

pub fn run_experiment(cfg: &ExperimentConfig, id: ExperimentId) -> Result<ResultTable> {
    cfg.validate()?;
    let action = cfg.build_action()?;
    match id {
        ExperimentId::E1 => e1(cfg, &action),
        ExperimentId::E2 => e2(cfg, &action),
        ExperimentId::E3 => e3(cfg, &action),
        ExperimentId::E4 => e4(cfg, &action),
        ExperimentId::E5 => e5(cfg, &action),
    }
}

fn e1(cfg: &ExperimentConfig, action: &GroupAction) -> Result<ResultTable> {
    let mut table = ResultTable::new(
        ExperimentId::E1,
        cfg,
        &[
            "n", "nodes", "lambda", "lambda_upper", "residual", "iterations", "kappa_from_norm", "quad_min",
            "quad_residual", "kappa_lb", "row_sum_error", "asymmetry",
        ],
    );
    let opts = spectral_options(cfg);
    let results = run_grids(cfg, |n| {
        let seed = rng::derive(cfg.seed, n as u64);
        let net = grid_net(cfg, n, seed)?;
        let op = build_markov(&net, action)?;
        let gap = kappa_lower_bound(&op, seed, &opts)?;
        Ok((op.len(), op.row_sum_error(), gap))
    });
    for (n, res, secs) in results {
        let seed = rng::derive(cfg.seed, n as u64);
        table.timings.push((format!("n={n}"), secs));
        match res {
            Ok((nodes, rse, g)) => table.push(
                seed,
                vec![
                    int(n),
                    int(nodes),
                    num(g.lambda),
                    num(g.lambda_upper),
                    num(g.residual),
                    int(g.iterations),
                    num(g.kappa_from_norm),
                    num(g.quad_min),
                    num(g.quad_residual),
                    num(g.kappa_lb),
                    num(rse),
                    num(g.asymmetry),
                ],
                "ok",
            ),
            Err(e) if is_cap(&e) => table.push_truncated(seed, vec![int(n)], &e),
            Err(e) => return Err(e),
        }
    }
    Ok(table)
}

fn e2(cfg: &ExperimentConfig, action: &GroupAction) -> Result<ResultTable> {
    let mut table = ResultTable::new(
        ExperimentId::E2,
        cfg,
        &["t", "nodes", "r_t", "sample", "w", "r", "measured", "bound", "c_log"],
    );
    let space = CompactSpace::new(cfg.space);
    let (k, lip, s_count, ball_c) = (space.growth_exponent(), action.lipschitz(), action.len(), space.ball_constant());
    let results = run_levels(cfg, |t| {
        let level = Level::build(cfg, action, t)?;
        let r_t = level.pair_measure()?.half_measure_radius()?;
        let hi = r_t.max(2.0);
        let mut rng = rng::stream(level.seed, 2);
        let n = level.graph.len();
        let draws: Vec<(usize, f64)> = (0..cfg.ball_samples)
            .map(|_| (rng.gen_range(0..n), rng.gen_range(1.0..=hi)))
            .collect();
        let w = level.graph.weights();
        let measured: Vec<f64> = cfg_iter!(draws)
            .map(|&(c, r)| {
                let field = level.graph.distance_field(c);
                (0..n).filter(|&j| field.get(j) <= r).map(|j| w[j]).sum::<f64>()
            })
            .collect();
        Ok((level.seed, n, r_t, draws, measured))
    });
    for (t, res, secs) in results {
        table.timings.push((format!("t={t}"), secs));
        match res {
            Ok((seed, n, r_t, draws, measured)) => {
                let c_log = largest_log_coefficient(t, k, lip, s_count, ball_c, 0.5);
                for (i, (&(c, r), m)) in draws.iter().zip(measured).enumerate() {
                    let bound = ball_cover_bound(r, t, k, lip, s_count, ball_c);
                    let status = if m <= bound { "ok" } else { "exceeds_bound" };
                    table.push(
                        seed,
                        vec![num(t), int(n), num(r_t), int(i), int(c), num(r), num(m), num(bound), num(c_log)],
                        status,
                    );
                }
            }
            Err(e) if is_cap(&e) => table.push_truncated(rng::derive(cfg.seed, t.to_bits()), vec![num(t)], &e),
            Err(e) => return Err(e),
        }
    }
    Ok(table)
}

struct E3Level {
    seed: u64,
    nodes: usize,
    edges: usize,
    r_t: f64,
    kappa: f64,
    w_max: f64,
    dim: usize,
    expansion: f64,
    contraction: f64,
    distortion: f64,
    double_integral: f64,
    centered: f64,
    lipschitz: f64,
    audited: usize,
    failures: usize,
    witness: f64,
}

fn e3(cfg: &ExperimentConfig, action: &GroupAction) -> Result<ResultTable> {
    let mut table = ResultTable::new(
        ExperimentId::E3,
        cfg,
        &[
            "t", "log_t", "nodes", "edges", "r_t", "kappa_level", "kappa", "lower", "lower_level", "lower_rigorous",
            "w_max", "upper", "ratio", "dim", "expansion", "contraction", "double_integral", "centered", "integral_per_l2", "audited",
            "audit_failures", "witness",
        ],
    );
    let opts = spectral_options(cfg);
    let results = run_levels(cfg, |t| {
        let level = Level::build(cfg, action, t)?;
        let g = &level.graph;
        let r_t = level.pair_measure()?.half_measure_radius()?;
        let op = build_markov(&level.net, action)?;
        let kappa = kappa_lower_bound(&op, level.seed, &opts)?.kappa_lb;
        let emb = bourgain_embed(g, cfg.bourgain_q, rng::derive(level.seed, 3))?;
        let dist = embedding_distortion(g, &emb, AUDIT_P)?;
        let ctx = AuditContext::new(g, &op, r_t, &level.sources)?;
        let bourgain = audit_embedding(&ctx, &op, &emb, kappa, AUDIT_P)?;
        let mut failures = bourgain.failures.len();
        let mut witness = bourgain.witness;
        for i in 0..cfg.random_embeddings {
            let rnd = random_embedding(g.len(), cfg.random_dim, rng::derive(level.seed, 100 + i as u64));
            let rep = audit_embedding(&ctx, &op, &rnd, kappa, AUDIT_P)?;
            failures += rep.failures.len();
            witness = witness.min(rep.witness);
        }
        Ok(E3Level {
            seed: level.seed,
            nodes: g.len(),
            edges: g.edges().len(),
            r_t,
            kappa,
            w_max: ctx.w_max,
            dim: emb.dim(),
            expansion: dist.expansion,
            contraction: dist.contraction,
            distortion: dist.distortion,
            double_integral: bourgain.double_integral,
            centered: bourgain.centered,
            lipschitz: bourgain.lipschitz,
            audited: 1 + cfg.random_embeddings,
            failures,
            witness,
        })
    });
    // one action constant for the whole range: the weakest certified level gap
    let kappa_ref = results
        .iter()
        .filter_map(|(_, r, _)| r.as_ref().ok().map(|l| l.kappa))
        .fold(f64::INFINITY, f64::min);
    for (t, res, secs) in results {
        table.timings.push((format!("t={t}"), secs));
        match res {
            Ok(l) => {
                let lower = paper_lower_bound(kappa_ref, l.r_t).value;
                let lower_level = paper_lower_bound(l.kappa, l.r_t).value;
                let lower_rigorous = if l.w_max > 0.0 { lower / l.w_max.max(1.0) } else { lower };
                let ratio = if lower > 0.0 { l.distortion / lower } else { f64::INFINITY };
                let status = if l.failures == 0 { "ok" } else { "audit_failed" };
                table.push(
                    l.seed,
                    vec![
                        num(t),
                        num(t.ln()),
                        int(l.nodes),
                        int(l.edges),
                        num(l.r_t),
                        num(l.kappa),
                        num(kappa_ref),
                        num(lower),
                        num(lower_level),
                        num(lower_rigorous),
                        num(l.w_max),
                        num(l.distortion),
                        num(ratio),
                        int(l.dim),
                        num(l.expansion),
                        num(l.contraction),
                        num(l.double_integral),
                        num(l.centered),
                        num(l.double_integral / (l.lipschitz * l.lipschitz)),
                        int(l.audited),
                        int(l.failures),
                        num(l.witness),
                    ],
                    status,
                );
            }
            Err(e) if is_cap(&e) => {
                table.push_truncated(rng::derive(cfg.seed, t.to_bits()), vec![num(t), num(t.ln())], &e)
            }
            Err(e) => return Err(e),
        }
    }
    Ok(table)
}

fn e4(cfg: &ExperimentConfig, action: &GroupAction) -> Result<ResultTable> {
    let mut table = ResultTable::new(
        ExperimentId::E4,
        cfg,
        &["t", "log_t", "nodes", "sources", "r_t", "measure_at_r", "measure_above", "max_distance", "c_log"],
    );
    let space = CompactSpace::new(cfg.space);
    let results = run_levels(cfg, |t| {
        let level = Level::build(cfg, action, t)?;
        let pm = level.pair_measure()?;
        let r_t = pm.half_measure_radius()?;
        Ok((level.seed, level.graph.len(), level.sources.len(), r_t, pm.within(r_t), pm.within(r_t + 1.0), pm.max_distance()))
    });
    for (t, res, secs) in results {
        table.timings.push((format!("t={t}"), secs));
        match res {
            Ok((seed, n, src, r_t, at, above, maxd)) => {
                let c_log = largest_log_coefficient(
                    t,
                    space.growth_exponent(),
                    action.lipschitz(),
                    action.len(),
                    space.ball_constant(),
                    0.5,
                );
                let status = if at <= 0.5 && above > 0.5 { "ok" } else { "bracket_failed" };
                table.push(
                    seed,
                    vec![num(t), num(t.ln()), int(n), int(src), num(r_t), num(at), num(above), num(maxd), num(c_log)],
                    status,
                );
            }
            Err(e) if is_cap(&e) => {
                table.push_truncated(rng::derive(cfg.seed, t.to_bits()), vec![num(t), num(t.ln())], &e)
            }
            Err(e) => return Err(e),
        }
    }
    Ok(table)
}

fn e5(cfg: &ExperimentConfig, action: &GroupAction) -> Result<ResultTable> {
    let mut table = ResultTable::new(ExperimentId::E5, cfg, &["n", "nodes", "p", "lambda", "heuristic"]);
    let opts = spectral_options(cfg);
    let results = run_grids(cfg, |n| {
        let seed = rng::derive(cfg.seed, n as u64);
        let net = grid_net(cfg, n, seed)?;
        let op = build_markov(&net, action)?;
        Ok((op.len(), p_sweep(&op, &cfg.p_list, seed, &opts)?))
    });
    for (n, res, secs) in results {
        let seed = rng::derive(cfg.seed, n as u64);
        table.timings.push((format!("n={n}"), secs));
        match res {
            Ok((nodes, sweep)) => {
                for pn in sweep {
                    table.push(
                        seed,
                        vec![int(n), int(nodes), num(pn.p), num(pn.lambda), pn.heuristic.to_string()],
                        "ok",
                    );
                }
            }
            Err(e) if is_cap(&e) => table.push_truncated(seed, vec![int(n)], &e),
            Err(e) => return Err(e),
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::SpaceKind;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            levels: vec![4.0, 8.0],
            grids: vec![8, 16],
            sources: 32,
            ball_samples: 10,
            random_embeddings: 2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn tables_carry_provenance() {
        let cfg = small();
        for id in ExperimentId::ALL {
            let table = run_experiment(&cfg, id).unwrap();
            let csv = table.to_csv();
            assert!(csv.starts_with(&format!("# warpcone v{VERSION} experiment={id} config_hash={}", cfg.hash())));
            assert!(table.rows.iter().all(|r| r[0] == cfg.hash()), "{id}");
            assert!(!table.truncated(), "{id}");
            let back = ResultTable::from_csv(&csv, Path::new("x.csv")).unwrap();
            assert_eq!(back.to_csv(), csv);
        }
    }

    #[test]
    fn identity_action_has_no_gap() {
        let mut cfg = small();
        cfg.action = crate::config::ActionSpec::Preset("identity".into());
        let table = run_experiment(&cfg, ExperimentId::E1).unwrap();
        assert!(table.column("kappa_lb").unwrap().iter().all(|&k| k == 0.0));
    }

    #[test]
    fn caps_truncate_instead_of_failing() {
        let mut cfg = small();
        cfg.levels = vec![4.0, 64.0];
        cfg.max_nodes = 100;
        let table = run_experiment(&cfg, ExperimentId::E4).unwrap();
        assert!(table.truncated());
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.column("r_t").unwrap().len(), 1);
        assert!(table.column_str("status").unwrap()[1].starts_with("truncated"));
    }

    #[test]
    fn circle_config_runs() {
        let mut cfg = ExperimentConfig::for_space(SpaceKind::Circle);
        cfg.grids = vec![32];
        let table = run_experiment(&cfg, ExperimentId::E1).unwrap();
        assert_eq!(table.rows.len(), 1);
    }

    #[test]
    fn experiment_ids_parse() {
        assert_eq!("e3".parse::<ExperimentId>().unwrap(), ExperimentId::E3);
        assert!("E6".parse::<ExperimentId>().is_err());
    }
}

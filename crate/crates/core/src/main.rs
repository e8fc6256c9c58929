use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use warpcone::config::ExperimentConfig;
use warpcone::distortion::{random_embedding, AuditContext};
use warpcone::experiments::{run_experiment, ExperimentId, ResultTable};
use warpcone::net::verify_net;
use warpcone::plot::{plot, PlotSpec};
use warpcone::spectral::SpectralOptions;
use warpcone::warped::PairMeasure;
use warpcone::{
    audit_embedding, bourgain_embed, build_markov, build_net, embedding_distortion, kappa_lower_bound, CompactSpace,
    Error, GroupAction, Net, NetOptions, Result, SpaceKind, WarpedLevelGraph,
};

#[derive(Parser)]
#[command(name = "warpcone", version, about = "Warped cone nets, spectral gaps and distortion experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Experiment config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (a file for single artifacts, a directory for experiments).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on net points per level.
    #[arg(long, global = true)]
    max_nodes: Option<usize>,
    /// Cap on warped graph edges per level.
    #[arg(long, global = true)]
    max_edges: Option<usize>,
}

#[derive(Args)]
struct LevelArgs {
    /// Cone level t.
    #[arg(long)]
    t: f64,
    /// Nets with radius C (default net_scale / t).
    #[arg(long)]
    radius: Option<f64>,
    /// Load the net from a CSV instead of building it.
    #[arg(long)]
    net: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a C-net of the configured space and write it as CSV.
    Net {
        #[arg(long)]
        radius: f64,
        /// Override the configured space.
        #[arg(long)]
        space: Option<SpaceKind>,
    },
    /// Build the warped level graph and write its edge list.
    Warp(LevelArgs),
    /// Certify the spectral gap on a resolution-n net.
    Gap {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        net: Option<PathBuf>,
        /// Also write the Markov matrix as (row, col, value) triplets.
        #[arg(long)]
        triplets: Option<PathBuf>,
    },
    /// Bourgain-embed a level set and report its distortion.
    Distort(LevelArgs),
    /// Replay the distortion argument on a level for Bourgain and random embeddings.
    Audit(LevelArgs),
    /// Run E1..E5 (or `all`) and write CSVs and SVG plots.
    Experiment { id: String },
    /// Render a result CSV as SVG.
    Plot {
        table: PathBuf,
        #[arg(long)]
        x: Option<String>,
        #[arg(long, num_args = 1..)]
        y: Vec<String>,
        #[arg(long)]
        log_x: bool,
        #[arg(long)]
        log_y: bool,
        #[arg(long)]
        scatter: bool,
    },
}

fn config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(n) = g.max_nodes {
        cfg.max_nodes = n;
    }
    if let Some(e) = g.max_edges {
        cfg.max_edges = e;
    }
    Ok(cfg)
}

fn net_options(cfg: &ExperimentConfig) -> NetOptions {
    NetOptions {
        max_points: cfg.max_nodes,
        weight_samples: cfg.weight_samples,
        ..NetOptions::default()
    }
}

/// Writes to `--out` if given, else stdout.
fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => {
            let mut f = std::io::BufWriter::new(fs::File::create(p)?);
            write(&mut f)?;
            f.flush()?;
            Ok(())
        }
        None => write(&mut std::io::stdout().lock()),
    }
}

fn level(cfg: &ExperimentConfig, action: &GroupAction, a: &LevelArgs) -> Result<(Net, WarpedLevelGraph)> {
    let net = match &a.net {
        Some(p) => Net::load(p)?,
        None => {
            let c = a.radius.unwrap_or(cfg.net_scale / a.t).min(1.0);
            build_net(CompactSpace::new(cfg.space), c, cfg.seed, &net_options(cfg))?
        }
    };
    if net.space().kind() != cfg.space {
        return Err(Error::Usage(format!("net lives on {}, config says {}", net.space().kind(), cfg.space)));
    }
    if net.len() > cfg.max_nodes {
        return Err(Error::ResourceCap {
            what: "net points",
            requested: net.len(),
            cap: cfg.max_nodes,
            flag: "max-nodes",
        });
    }
    let g = WarpedLevelGraph::build(&net, action, a.t, cfg.theta, cfg.max_edges)?;
    Ok((net, g))
}

fn sources(cfg: &ExperimentConfig, n: usize) -> Vec<usize> {
    let mut s = rand::seq::index::sample(&mut warpcone::rng::stream(cfg.seed, 1), n, cfg.sources.min(n)).into_vec();
    s.sort_unstable();
    s
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli.global)?;
    let out = cli.global.out.as_deref();
    let opts = SpectralOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        ..SpectralOptions::default()
    };
    match cli.cmd {
        Cmd::Net { radius, space } => {
            let space = CompactSpace::new(space.unwrap_or(cfg.space));
            let net = build_net(space, radius, cfg.seed, &net_options(&cfg))?;
            let cover = verify_net(&net, 20_000, cfg.seed ^ 1);
            eprintln!(
                "net: {} points on {}, radius {}, sampled covering distance {:.6} ({})",
                net.len(),
                space.kind(),
                net.radius(),
                cover.max_distance,
                if cover.passed { "ok" } else { "FAILED" }
            );
            if !cover.passed {
                return Err(Error::Invariant("net does not cover the space at its radius".into()));
            }
            emit(out, |w| net.write_csv(w))
        }
        Cmd::Warp(a) => {
            let action = cfg.build_action()?;
            let (_, g) = level(&cfg, &action, &a)?;
            eprintln!("level t={}: {} nodes, {} edges", a.t, g.len(), g.edges().len());
            emit(out, |w| g.write_edges_csv(w))
        }
        Cmd::Gap { n, net, triplets } => {
            let action = cfg.build_action()?;
            let net = match (net, n) {
                (Some(p), _) => Net::load(&p)?,
                (None, Some(n)) => {
                    build_net(CompactSpace::new(cfg.space), 1.0 / n as f64, cfg.seed, &net_options(&cfg))?
                }
                (None, None) => return Err(Error::Usage("gap needs --n or --net".into())),
            };
            let op = build_markov(&net, &action)?;
            if let Some(p) = triplets {
                op.write_triplets_csv(std::io::BufWriter::new(fs::File::create(p)?))?;
            }
            let r = kappa_lower_bound(&op, cfg.seed, &opts)?;
            emit(out, |w| {
                writeln!(w, "nodes,lambda,lambda_upper,residual,iterations,quad_min,kappa_lb")?;
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    op.len(),
                    r.lambda,
                    r.lambda_upper,
                    r.residual,
                    r.iterations,
                    r.quad_min,
                    r.kappa_lb
                )?;
                Ok(())
            })
        }
        Cmd::Distort(a) => {
            let action = cfg.build_action()?;
            let (_, g) = level(&cfg, &action, &a)?;
            let emb = bourgain_embed(&g, cfg.bourgain_q, cfg.seed)?;
            let d = embedding_distortion(&g, &emb, 2.0)?;
            eprintln!(
                "level t={}: {} nodes, Bourgain dim {}, distortion {} (expansion {}, contraction {})",
                a.t,
                g.len(),
                emb.dim(),
                d.distortion,
                d.expansion,
                d.contraction
            );
            emit(out, |w| emb.write_csv(w))
        }
        Cmd::Audit(a) => {
            let action = cfg.build_action()?;
            let (net, g) = level(&cfg, &action, &a)?;
            let op = build_markov(&net, &action)?;
            let kappa = kappa_lower_bound(&op, cfg.seed, &opts)?.kappa_lb;
            let r_t = PairMeasure::new(&g, g.weights(), &sources(&cfg, g.len()))?.half_measure_radius()?;
            let ctx = AuditContext::new(&g, &op, r_t, &sources(&cfg, g.len()))?;
            let mut reports = vec![("bourgain".to_string(), {
                let emb = bourgain_embed(&g, cfg.bourgain_q, cfg.seed)?;
                audit_embedding(&ctx, &op, &emb, kappa, 2.0)?
            })];
            for i in 0..cfg.random_embeddings {
                let emb = random_embedding(g.len(), cfg.random_dim, warpcone::rng::derive(cfg.seed, 100 + i as u64));
                reports.push((format!("random{i}"), audit_embedding(&ctx, &op, &emb, kappa, 2.0)?));
            }
            let failed = reports.iter().filter(|(_, r)| !r.passed()).count();
            emit(out, |w| {
                writeln!(w, "embedding,dim,displacement,lipschitz,centered,double_integral,margin_a,margin_b,margin_c,witness,passed")?;
                for (name, r) in &reports {
                    writeln!(
                        w,
                        "{name},{},{},{},{},{},{},{},{},{},{}",
                        r.dim,
                        r.displacement,
                        r.lipschitz,
                        r.centered,
                        r.double_integral,
                        r.margin_a,
                        r.margin_b,
                        r.margin_c,
                        r.witness,
                        r.passed()
                    )?;
                }
                Ok(())
            })?;
            eprintln!("level t={}: kappa_lb {kappa}, R_t {r_t}, w_max {}", a.t, ctx.w_max);
            if failed > 0 {
                let detail: Vec<String> = reports.iter().flat_map(|(n, r)| r.failures.iter().map(move |f| format!("{n}: {f}"))).collect();
                return Err(Error::Invariant(format!("{failed} embedding(s) failed the audit: {}", detail.join("; "))));
            }
            Ok(())
        }
        Cmd::Experiment { id } => {
            let ids: Vec<ExperimentId> = if id.eq_ignore_ascii_case("all") {
                ExperimentId::ALL.to_vec()
            } else {
                vec![id.parse()?]
            };
            let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
            let mut truncated = Vec::new();
            for id in ids {
                let table = run_experiment(&cfg, id)?;
                let path = table.write(&dir)?;
                match plot(&table, &PlotSpec::for_experiment(&table.experiment)?) {
                    Ok(svg) => fs::write(dir.join(format!("{id}.svg")), svg)?,
                    Err(e) => eprintln!("{id}: no plot ({e})"),
                }
                eprintln!("{id}: {} rows -> {}", table.rows.len(), path.display());
                if table.truncated() {
                    truncated.push(id.to_string());
                }
            }
            if !truncated.is_empty() {
                eprintln!(
                    "partial results: {} hit a resource cap (raise --max-nodes or --max-edges)",
                    truncated.join(", ")
                );
                std::process::exit(2);
            }
            Ok(())
        }
        Cmd::Plot {
            table,
            x,
            y,
            log_x,
            log_y,
            scatter,
        } => {
            let t = ResultTable::load(&table)?;
            let spec = match x {
                None if y.is_empty() => PlotSpec::for_experiment(&t.experiment)?,
                None => return Err(Error::Usage("--y needs --x".into())),
                Some(x) => {
                    if y.is_empty() {
                        return Err(Error::Usage("--x needs at least one --y".into()));
                    }
                    let ys: Vec<&str> = y.iter().map(String::as_str).collect();
                    PlotSpec {
                        log_x,
                        log_y,
                        scatter,
                        title: format!("{}: {} vs {x}", t.experiment, y.join(", ")),
                        ..PlotSpec::line(&x, &ys)
                    }
                }
            };
            let svg = plot(&t, &spec)?;
            emit(out, |w| Ok(w.write_all(svg.as_bytes())?))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

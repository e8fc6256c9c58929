//! Minimal SVG line and scatter plots of result tables.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::experiments::ResultTable;

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub ys: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
    /// Markers only, no connecting lines.
    pub scatter: bool,
    pub title: String,
}

impl PlotSpec {
    pub fn line(x: &str, ys: &[&str]) -> Self {
        PlotSpec {
            x: x.into(),
            ys: ys.iter().map(|s| s.to_string()).collect(),
            log_x: false,
            log_y: false,
            scatter: false,
            title: String::new(),
        }
    }

    /// The canonical figure for each experiment table.
    pub fn for_experiment(id: &str) -> Result<Self> {
        let mut spec = match id {
            "E1" => PlotSpec::line("n", &["kappa_lb"]),
            "E2" => PlotSpec {
                scatter: true,
                log_y: true,
                ..PlotSpec::line("r", &["measured", "bound"])
            },
            "E3" => PlotSpec {
                log_x: true,
                ..PlotSpec::line("t", &["lower", "upper"])
            },
            "E4" => PlotSpec {
                log_x: true,
                ..PlotSpec::line("t", &["r_t"])
            },
            "E5" => PlotSpec {
                scatter: true,
                ..PlotSpec::line("p", &["lambda"])
            },
            other => return Err(Error::usage(format!("no default plot for experiment `{other}`"))),
        };
        spec.title = format!("{id}: {} vs {}", spec.ys.join(", "), spec.x);
        Ok(spec)
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: [f64; 4] = [60.0, 20.0, 40.0, 50.0]; // left, right, top, bottom
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: &[f64], log: bool) -> Axis {
        let tr: Vec<f64> = values.iter().map(|&v| if log { v.log10() } else { v }).collect();
        let mut lo = tr.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = tr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
            log,
        }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4)
            .map(|k| {
                let u = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
                if self.log {
                    10f64.powf(u)
                } else {
                    u
                }
            })
            .collect()
    }
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `spec` from `table`. Rows with an empty or non-finite cell in the
/// relevant columns are skipped, as are non-positive values on log axes.
pub fn plot(table: &ResultTable, spec: &PlotSpec) -> Result<String> {
    if spec.ys.is_empty() {
        return Err(Error::usage("plot needs at least one y column"));
    }
    let xi = table.column_index(&spec.x)?;
    let yis: Vec<usize> = spec.ys.iter().map(|y| table.column_index(y)).collect::<Result<_>>()?;
    let ok = |v: f64, log: bool| v.is_finite() && (!log || v > 0.0);
    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); yis.len()];
    for row in &table.rows {
        let Ok(x) = row[xi].parse::<f64>() else { continue };
        if !ok(x, spec.log_x) {
            continue;
        }
        for (s, &yi) in yis.iter().enumerate() {
            if let Ok(y) = row[yi].parse::<f64>() {
                if ok(y, spec.log_y) {
                    series[s].push((x, y));
                }
            }
        }
    }
    if series.iter().all(|s| s.is_empty()) {
        return Err(Error::usage(format!("table {} has no plottable rows", table.experiment)));
    }
    let xs: Vec<f64> = series.iter().flatten().map(|p| p.0).collect();
    let ys: Vec<f64> = series.iter().flatten().map(|p| p.1).collect();
    let ax = Axis::fit(&xs, spec.log_x);
    let ay = Axis::fit(&ys, spec.log_y);
    let (pw, ph) = (W - MARGIN[0] - MARGIN[1], H - MARGIN[2] - MARGIN[3]);
    let px = |x: f64| MARGIN[0] + ax.frac(x) * pw;
    let py = |y: f64| MARGIN[2] + (1.0 - ay.frac(y)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(&spec.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#,
        MARGIN[0], MARGIN[2]
    );
    for v in ax.ticks() {
        let x = px(v);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN[2] + ph,
            MARGIN[2] + ph + 5.0,
            MARGIN[2] + ph + 18.0,
            label(v)
        );
    }
    for v in ay.ticks() {
        let y = py(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN[0] - 5.0,
            MARGIN[0],
            MARGIN[0] - 8.0,
            y + 4.0,
            label(v)
        );
    }
    let xlabel = if spec.log_x { format!("{} (log)", spec.x) } else { spec.x.clone() };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN[0] + pw / 2.0,
        H - 10.0,
        escape(&xlabel)
    );
    for (k, pts) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let name = escape(&spec.ys[k]);
        let _ = writeln!(s, r#"<g class="series" data-name="{name}">"#);
        if !spec.scatter && pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
        }
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let _ = writeln!(s, "</g>");
        let ly = MARGIN[2] + 16.0 + 16.0 * k as f64;
        let lx = MARGIN[0] + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

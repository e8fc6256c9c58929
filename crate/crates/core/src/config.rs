//! Experiment configuration: a flat, sectioned `key = value` text format.
//!
//! ```text
//! [space]
//! kind = torus2
//!
//! [action]
//! preset = sl2z
//! # or explicit generators (inverses are added automatically)
//! generator.A = matrix 1 1 0 1
//!
//! [levels]
//! t = 8 16 32 64 128 256
//! grid = 16 32 64 128 256
//! net_scale = 2
//! theta = 3
//! ```
//!
//! Lists are whitespace separated. Unknown sections or keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::action::{GroupAction, Transform};
use crate::error::{Error, Result};
use crate::space::{CompactSpace, SpaceKind};

#[derive(Clone, Debug, PartialEq)]
pub enum ActionSpec {
    Preset(String),
    Generators(Vec<(String, Transform)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub space: SpaceKind,
    pub action: ActionSpec,
    /// Cone levels `t` for the warped-metric experiments.
    pub levels: Vec<f64>,
    /// Net resolutions for the spectral experiments.
    pub grids: Vec<usize>,
    /// Level-`t` nets use radius `net_scale / t`.
    pub net_scale: f64,
    pub theta: f64,
    pub p_list: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Sampled source nodes for pair measures and witnesses.
    pub sources: usize,
    /// `(w, R)` samples per level for the ball-growth check.
    pub ball_samples: usize,
    pub random_embeddings: usize,
    pub random_dim: usize,
    pub bourgain_q: f64,
    pub weight_samples: usize,
    pub max_nodes: usize,
    pub max_edges: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            space: SpaceKind::Torus2,
            action: ActionSpec::Preset("sl2z".into()),
            levels: vec![8.0, 16.0, 32.0, 64.0, 128.0, 256.0],
            grids: vec![16, 32, 64, 128, 256],
            net_scale: 2.0,
            theta: 3.0,
            p_list: vec![1.5, 2.0, 3.0, 4.0],
            tol: 1e-10,
            max_iter: 100_000,
            seed: 1,
            sources: 256,
            ball_samples: 50,
            random_embeddings: 20,
            random_dim: 8,
            bourgain_q: 2.0,
            weight_samples: 200_000,
            max_nodes: 70_000,
            max_edges: 8_000_000,
            output_dir: PathBuf::from("results"),
        }
    }
}

fn parse_transform(text: &str) -> Result<Transform> {
    let mut parts = text.split_whitespace();
    let kind = parts.next().unwrap_or("");
    let nums: Vec<&str> = parts.collect();
    let floats = || -> Result<Vec<f64>> {
        nums.iter()
            .map(|v| v.parse::<f64>().map_err(|e| Error::usage(format!("`{v}`: {e}"))))
            .collect()
    };
    match (kind, nums.len()) {
        ("identity", 0) => Ok(Transform::Identity),
        ("matrix", 4) => {
            let m: Vec<i64> = nums
                .iter()
                .map(|v| v.parse::<i64>().map_err(|e| Error::usage(format!("`{v}`: {e}"))))
                .collect::<Result<_>>()?;
            Ok(Transform::Matrix([[m[0], m[1]], [m[2], m[3]]]))
        }
        ("quaternion", 4) => {
            let q = floats()?;
            Ok(Transform::Quaternion([q[0], q[1], q[2], q[3]]))
        }
        ("rotation", 1) => Ok(Transform::Rotation(floats()?[0])),
        _ => Err(Error::usage(format!(
            "cannot parse generator `{text}`; expected `matrix a b c d`, `quaternion w x y z`, `rotation a` or `identity`"
        ))),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl ExperimentConfig {
    /// Defaults for a space: its canonical action.
    pub fn for_space(space: SpaceKind) -> Self {
        let preset = match space {
            SpaceKind::Torus2 => "sl2z",
            SpaceKind::Sphere3 => "su2",
            SpaceKind::Circle => "golden_rotation",
        };
        let mut c = ExperimentConfig {
            space,
            action: ActionSpec::Preset(preset.into()),
            ..Default::default()
        };
        if space == SpaceKind::Circle {
            c.grids = vec![128, 256, 512, 1024];
        }
        c
    }

    pub fn build_action(&self) -> Result<GroupAction> {
        let space = CompactSpace::new(self.space);
        let action = match &self.action {
            ActionSpec::Preset(name) => match name.as_str() {
                "sl2z" => GroupAction::sl2z(),
                "su2" => GroupAction::su2_default(),
                "golden_rotation" => GroupAction::golden_rotation(),
                "identity" => GroupAction::identity(space),
                other => return Err(Error::usage(format!("unknown action preset `{other}`"))),
            },
            ActionSpec::Generators(gens) => GroupAction::new(space, gens.clone())?,
        };
        if action.space().kind() != self.space {
            return Err(Error::usage(format!(
                "action acts on {}, but the configured space is {}",
                action.space().kind(),
                self.space
            )));
        }
        Ok(action)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.iter().any(|&t| !(t >= 1.0)) {
            return Err(Error::usage("every level t must be >= 1"));
        }
        if self.grids.contains(&0) {
            return Err(Error::usage("grid sizes must be >= 1"));
        }
        if !(self.net_scale > 0.0) || !(self.theta >= 2.0) {
            return Err(Error::usage("need net_scale > 0 and theta >= 2"));
        }
        if self.p_list.iter().any(|&p| !(p > 1.0 && p.is_finite())) {
            return Err(Error::usage("every exponent p must lie in (1, inf)"));
        }
        if self.sources == 0 || !(self.bourgain_q > 0.0) || self.random_dim == 0 {
            return Err(Error::usage("sources, bourgain_q and random_dim must be positive"));
        }
        self.build_action().map(|_| ())
    }

    /// Serialized form without the `[output]` section; hashed for provenance.
    fn body(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[space]\nkind = {}\n", self.space);
        s.push_str("[action]\n");
        match &self.action {
            ActionSpec::Preset(p) => {
                let _ = writeln!(s, "preset = {p}");
            }
            ActionSpec::Generators(g) => {
                for (label, tr) in g {
                    let _ = writeln!(s, "generator.{label} = {tr}");
                }
            }
        }
        let _ = writeln!(
            s,
            "\n[levels]\nt = {}\ngrid = {}\nnet_scale = {}\ntheta = {}\n",
            join(&self.levels),
            join(&self.grids),
            self.net_scale,
            self.theta
        );
        let _ = writeln!(
            s,
            "[spectral]\np = {}\ntol = {:e}\nmax_iter = {}\n",
            join(&self.p_list),
            self.tol,
            self.max_iter
        );
        let _ = writeln!(
            s,
            "[sampling]\nseed = {}\nsources = {}\nball_samples = {}\nrandom_embeddings = {}\nrandom_dim = {}\nbourgain_q = {}\nweight_samples = {}\n",
            self.seed,
            self.sources,
            self.ball_samples,
            self.random_embeddings,
            self.random_dim,
            self.bourgain_q,
            self.weight_samples
        );
        let _ = writeln!(s, "[caps]\nmax_nodes = {}\nmax_edges = {}", self.max_nodes, self.max_edges);
        s
    }

    pub fn to_text(&self) -> String {
        format!("{}\n[output]\ndir = {}\n", self.body(), self.output_dir.display())
    }

    /// First 16 hex digits of the SHA-256 of the serialized config, output
    /// section excluded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.body().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut cfg = ExperimentConfig::default();
        let mut space_set = false;
        let mut preset: Option<String> = None;
        let mut gens: Vec<(String, Transform)> = Vec::new();
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !["space", "action", "levels", "spectral", "sampling", "caps", "output"].contains(&section.as_str()) {
                    return Err(perr(ln, format!("unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| perr(ln, format!("expected `key = value`, got `{line}`")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|e| perr(ln, format!("`{v}`: {e}")));
            let int = |v: &str| v.parse::<u64>().map_err(|e| perr(ln, format!("`{v}`: {e}")));
            let floats = |v: &str| v.split_whitespace().map(num).collect::<Result<Vec<f64>>>();
            match (section.as_str(), key) {
                ("space", "kind") => {
                    cfg.space = value.parse().map_err(|e: Error| perr(ln, e.to_string()))?;
                    space_set = true;
                }
                ("action", "preset") => preset = Some(value.to_string()),
                ("action", k) if k.starts_with("generator.") => {
                    let label = k["generator.".len()..].to_string();
                    if label.is_empty() {
                        return Err(perr(ln, "generator needs a label".into()));
                    }
                    gens.push((label, parse_transform(value).map_err(|e| perr(ln, e.to_string()))?));
                }
                ("levels", "t") => cfg.levels = floats(value)?,
                ("levels", "grid") => {
                    cfg.grids = value
                        .split_whitespace()
                        .map(|v| int(v).map(|x| x as usize))
                        .collect::<Result<_>>()?
                }
                ("levels", "net_scale") => cfg.net_scale = num(value)?,
                ("levels", "theta") => cfg.theta = num(value)?,
                ("spectral", "p") => cfg.p_list = floats(value)?,
                ("spectral", "tol") => cfg.tol = num(value)?,
                ("spectral", "max_iter") => cfg.max_iter = int(value)? as usize,
                ("sampling", "seed") => cfg.seed = int(value)?,
                ("sampling", "sources") => cfg.sources = int(value)? as usize,
                ("sampling", "ball_samples") => cfg.ball_samples = int(value)? as usize,
                ("sampling", "random_embeddings") => cfg.random_embeddings = int(value)? as usize,
                ("sampling", "random_dim") => cfg.random_dim = int(value)? as usize,
                ("sampling", "bourgain_q") => cfg.bourgain_q = num(value)?,
                ("sampling", "weight_samples") => cfg.weight_samples = int(value)? as usize,
                ("caps", "max_nodes") => cfg.max_nodes = int(value)? as usize,
                ("caps", "max_edges") => cfg.max_edges = int(value)? as usize,
                ("output", "dir") => cfg.output_dir = PathBuf::from(value),
                (sec, k) => return Err(perr(ln, format!("unknown key `{k}` in [{sec}]"))),
            }
        }
        cfg.action = match (preset, gens.is_empty()) {
            (Some(_), false) => return Err(perr(0, "give either `preset` or generators, not both".into())),
            (Some(p), true) => ActionSpec::Preset(p),
            (None, false) => ActionSpec::Generators(gens),
            (None, true) if space_set => ExperimentConfig::for_space(cfg.space).action,
            (None, true) => cfg.action,
        };
        cfg.validate().map_err(|e| match e {
            Error::Usage(msg) => perr(0, msg),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> &'static Path {
        Path::new("test.cfg")
    }

    #[test]
    fn round_trip_is_exact() {
        let mut cfg = ExperimentConfig::default();
        cfg.levels = vec![8.0, 1.1 + 0.2, 1e300];
        cfg.tol = 1.2345678901234567e-11;
        cfg.bourgain_q = std::f64::consts::PI;
        let back = ExperimentConfig::parse(&cfg.to_text(), origin()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), cfg.to_text());
        for space in [SpaceKind::Sphere3, SpaceKind::Circle] {
            let c = ExperimentConfig::for_space(space);
            assert_eq!(ExperimentConfig::parse(&c.to_text(), origin()).unwrap(), c);
        }
    }

    #[test]
    fn explicit_generators() {
        let text = "[space]\nkind = sphere3\n[action]\ngenerator.a = quaternion 0.6 0.8 0 0\ngenerator.b = quaternion 0.6 0 0.8 0\n";
        let cfg = ExperimentConfig::parse(text, origin()).unwrap();
        let action = cfg.build_action().unwrap();
        assert_eq!(action.len(), 4);
        let back = ExperimentConfig::parse(&cfg.to_text(), origin()).unwrap();
        assert_eq!(back.action, cfg.action);
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::parse("[levels]\nt = 8 x\n", origin()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert_eq!(err.exit_code(), 1);
        assert!(ExperimentConfig::parse("[bogus]\n", origin()).is_err());
        assert!(ExperimentConfig::parse("[levels]\nt = 0.5\n", origin()).is_err());
        assert!(ExperimentConfig::parse("[space]\nkind = circle\n[action]\npreset = sl2z\n", origin()).is_err());
        assert!(ExperimentConfig::parse("[action]\ngenerator.M = matrix 1 2 3\n", origin()).is_err());
    }

    #[test]
    fn space_without_action_uses_its_canonical_preset() {
        let cfg = ExperimentConfig::parse("[space]\nkind = circle\n", origin()).unwrap();
        assert_eq!(cfg.action, ActionSpec::Preset("golden_rotation".into()));
    }
}

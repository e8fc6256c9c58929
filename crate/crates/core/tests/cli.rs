use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn warpcone(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_warpcone"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

const SMALL: &str = "\
[space]
kind = torus2

[action]
preset = sl2z

[levels]
t = 8 16
grid = 8 16

[sampling]
seed = 9
sources = 32
ball_samples = 5
random_embeddings = 2
";

#[test]
fn experiments_are_reproducible_from_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
    for out in ["a", "b"] {
        let o = warpcone(&["experiment", "all", "--config", "small.cfg", "--out", out], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for id in ["E1", "E2", "E3", "E4", "E5"] {
        let a = fs::read(dir.path().join("a").join(format!("{id}.csv"))).unwrap();
        let b = fs::read(dir.path().join("b").join(format!("{id}.csv"))).unwrap();
        assert_eq!(a, b, "{id}");
        assert!(dir.path().join("a").join(format!("{id}.svg")).exists());
        assert!(dir.path().join("a").join(format!("{id}.timing.csv")).exists());
    }
    let e3 = fs::read_to_string(dir.path().join("a/E3.csv")).unwrap();
    assert!(e3.starts_with("# warpcone v"));
    assert!(e3.lines().nth(1).unwrap().starts_with("config_hash,seed,t,"));

    let o = warpcone(&["plot", "a/E3.csv", "--out", "e3.svg"], dir.path());
    assert_eq!(code(&o), 0);
    let svg = fs::read_to_string(dir.path().join("e3.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="series""#).count(), 2);

    // seed override changes provenance
    let o = warpcone(&["experiment", "E4", "--config", "small.cfg", "--seed", "10", "--out", "c"], dir.path());
    assert_eq!(code(&o), 0);
    let a = fs::read_to_string(dir.path().join("a/E4.csv")).unwrap();
    let c = fs::read_to_string(dir.path().join("c/E4.csv")).unwrap();
    assert_ne!(a.lines().next(), c.lines().next());
}

#[test]
fn single_artifact_commands() {
    let dir = tempfile::tempdir().unwrap();
    let o = warpcone(&["net", "--radius", "0.125", "--out", "net.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let net = fs::read_to_string(dir.path().join("net.csv")).unwrap();
    assert_eq!(net.lines().filter(|l| !l.starts_with('#')).count(), 65);

    let o = warpcone(&["warp", "--t", "16", "--net", "net.csv", "--out", "edges.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let edges = fs::read_to_string(dir.path().join("edges.csv")).unwrap();
    assert!(edges.starts_with("i,j,weight,kind"));
    assert!(edges.contains(",cone") && edges.contains(",generator:A"));

    let o = warpcone(&["gap", "--net", "net.csv"], dir.path());
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    let kappa: f64 = out.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(kappa > 0.1, "{out}");

    let o = warpcone(&["distort", "--t", "8", "--out", "emb.csv"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(dir.path().join("emb.csv")).unwrap().starts_with("node,c1"));

    let o = warpcone(&["audit", "--t", "8"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&warpcone(&["--help"], dir.path())), 0);
    assert_eq!(code(&warpcone(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&warpcone(&["experiment", "E9"], dir.path())), 1);
    assert_eq!(code(&warpcone(&["net", "--radius", "2"], dir.path())), 1);
    assert_eq!(code(&warpcone(&["gap", "--config", "missing.cfg", "--n", "8"], dir.path())), 1);
    fs::write(dir.path().join("bad.cfg"), "[levels]\nt = 8 oops\n").unwrap();
    let o = warpcone(&["gap", "--config", "bad.cfg", "--n", "8"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.cfg:2"));
    fs::write(dir.path().join("empty.csv"), "t,lower\n").unwrap();
    assert_eq!(code(&warpcone(&["plot", "empty.csv", "--x", "t", "--y", "lower"], dir.path())), 1);

    assert_eq!(code(&warpcone(&["warp", "--t", "64", "--max-edges", "100"], dir.path())), 2);
    assert_eq!(code(&warpcone(&["net", "--radius", "0.01", "--max-nodes", "100"], dir.path())), 2);
    // caps during an experiment still write the partial table
    fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
    let o = warpcone(&["experiment", "E4", "--config", "small.cfg", "--max-nodes", "20", "--out", "r"], dir.path());
    assert_eq!(code(&o), 2);
    let csv = fs::read_to_string(dir.path().join("r/E4.csv")).unwrap();
    assert!(csv.contains(",ok\n") && csv.contains("truncated: "));
}

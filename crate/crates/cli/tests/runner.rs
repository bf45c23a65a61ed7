use std::path::Path;
use std::process::Command;

use roughsde_cli::{parse_config_str, run, Experiment, RunManifest, ScenarioConfig, MANIFEST_FILE};

const BASE: &str = r#"
seed = 99
horizon = 0.5
dt = 0.0078125

[scenario]
name = "threshold_ou"
thetas = [0.0]
betas = [1.0, -1.0]
alphas = [1.0, 2.0]

[domain]
lo = [-1.0]
hi = [1.0]

[grid]
nodes = 41
time_nodes = 65
"#;

fn config(blocks: &str) -> ScenarioConfig {
    parse_config_str(&format!("{BASE}\n{blocks}")).unwrap()
}

const SIMULATE: &str = "[[experiment]]\nkind = \"simulate\"\npaths = 10\nx0 = [0.1]\n";

const MIXED: &str = r#"
[[experiment]]
kind = "simulate"
paths = 64
x0 = [0.1]
recording = "full"
trajectories = 2

[[experiment]]
kind = "pde"
decay_times = [0.0, 0.25, 0.375]

[[experiment]]
kind = "krylov"
intervals = [[0.0, 0.5], [0.0, 0.25], [0.0, 0.125]]
test_function = { kind = "abs" }
p = 4.0
q = 4.0
paths = 64
norm_nodes = 21
norm_time_steps = 16
"#;

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn simulate_block_writes_one_csv_with_a_row_per_path() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&config(SIMULATE), dir.path(), None).unwrap();
    assert_eq!(m.blocks.len(), 1);
    assert_eq!(m.blocks[0].files.len(), 1);
    let csv = &m.blocks[0].files[0].path;
    assert_eq!(csv, "simulate.csv");
    let mut reader = csv::Reader::from_path(dir.path().join(csv)).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["path", "final_time", "x0", "exited", "exit_time", "blown_up"]
    );
    assert_eq!(reader.records().count(), 10);
    assert!(m.pass && !m.any_error());
}

#[test]
fn repeated_runs_are_byte_identical_except_wall_clock() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let c = config(MIXED);
    let ma = run(&c, a.path(), None).unwrap();
    // A different worker count must not change any byte.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let mb = pool.install(|| run(&c, b.path(), None)).unwrap();
    let names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != MANIFEST_FILE)
        .collect();
    assert!(names.len() >= 6, "{names:?}");
    for n in &names {
        assert_eq!(read(&a.path().join(n)), read(&b.path().join(n)), "{n} differs");
    }
    assert_eq!(ma.config_hash, mb.config_hash);
    for (x, y) in ma.blocks.iter().zip(&mb.blocks) {
        assert_eq!(x.files, y.files);
    }
}

#[test]
fn seed_override_changes_paths_and_hash() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut c = config(SIMULATE);
    let ma = run(&c, a.path(), None).unwrap();
    c.seed += 1;
    let mb = run(&c, b.path(), None).unwrap();
    assert_ne!(ma.config_hash, mb.config_hash);
    assert_ne!(read(&a.path().join("simulate.csv")), read(&b.path().join("simulate.csv")));
}

#[test]
fn filtering_keeps_block_seeds() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let c = config(MIXED);
    run(&c, a.path(), None).unwrap();
    let only = |e: &Experiment| e.kind() == "krylov";
    let m = run(&c, b.path(), Some(&only)).unwrap();
    assert_eq!(m.blocks.len(), 1);
    assert_eq!(read(&a.path().join("krylov.csv")), read(&b.path().join("krylov.csv")));
}

#[test]
fn manifest_checksums_validate_and_catch_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&config(MIXED), dir.path(), None).unwrap();
    let back = RunManifest::read(dir.path()).unwrap();
    assert_eq!(back, m);
    back.verify(dir.path()).unwrap();
    let kinds: Vec<&str> = m.blocks.iter().map(|b| b.kind.as_str()).collect();
    assert_eq!(kinds, ["simulate", "pde", "krylov"]);
    let files: Vec<&str> = m.blocks.iter().flat_map(|b| &b.files).map(|f| f.path.as_str()).collect();
    assert_eq!(files, ["simulate.csv", "simulate_paths.csv", "pde.csv", "pde_decay.csv", "krylov.csv"]);

    let victim = dir.path().join("pde.csv");
    let mut bytes = read(&victim);
    bytes.push(b'\n');
    std::fs::write(&victim, bytes).unwrap();
    let err = back.verify(dir.path()).unwrap_err();
    assert!(err.to_string().contains("pde.csv"), "{err}");
}

#[test]
fn block_errors_are_recorded_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    // x0 outside the domain fails at run time, not at validation.
    let blocks = format!("[[experiment]]\nkind = \"simulate\"\npaths = 4\nx0 = [3.0]\n\n{SIMULATE}");
    let m = run(&config(&blocks), dir.path(), None).unwrap();
    assert_eq!(m.blocks.len(), 2);
    assert!(m.blocks[0].error.as_deref().unwrap().contains("outside"));
    assert!(m.blocks[0].files.is_empty());
    assert_eq!(m.blocks[1].name, "simulate_2");
    assert!(m.blocks[1].error.is_none());
    assert!(m.any_error() && !m.pass);
    m.verify(dir.path()).unwrap();
}

#[test]
fn effective_config_is_written_and_reparses_identically() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(MIXED);
    run(&c, dir.path(), None).unwrap();
    let text = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert_eq!(parse_config_str(&text).unwrap(), c);
}

#[test]
fn binary_exit_status_reflects_block_errors() {
    let exe = env!("CARGO_BIN_EXE_roughsde");
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, format!("{BASE}\n{SIMULATE}")).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(exe).env("RUST_LOG", "off")
        .args(["simulate", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "5", "--bit-exact"])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(RunManifest::read(&out).unwrap().seed, 5);
    let report = Command::new(exe).env("RUST_LOG", "off").arg("report").arg("--out").arg(&out).output().unwrap();
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("checksums ok"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, format!("{BASE}\n[[experiment]]\nkind = \"simulate\"\npaths = 4\nx0 = [3.0]\n")).unwrap();
    let status = Command::new(exe).env("RUST_LOG", "off")
        .arg("run")
        .arg("--config")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("out2"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    let missing_seed = dir.path().join("noseed.toml");
    std::fs::write(&missing_seed, BASE.replace("seed = 99", "")).unwrap();
    let status = Command::new(exe).env("RUST_LOG", "off").arg("run").arg("--config").arg(&missing_seed).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn repository_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            roughsde_cli::parse_config(&p).unwrap_or_else(|err| panic!("{}: {err}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}

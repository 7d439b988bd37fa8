use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lorentz-limits"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("summary.txt")).unwrap()
}

#[test]
fn decompose_worked_example() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("decompose.cfg");
    let o = run(&["decompose", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = std::fs::read_to_string(out.path().join("m_1.csv")).unwrap();
    assert_eq!(
        m,
        "# window lo=0 hi=0 alphabet=2\nword_index,value\n0,-5.0000000000000000e-1\n1,5.0000000000000000e-1\n"
    );
    let table = std::fs::read_to_string(out.path().join("decompose.csv")).unwrap();
    let row: Vec<f64> = table
        .lines()
        .find(|l| l.starts_with("1,"))
        .unwrap()
        .split(',')
        .take(5)
        .map(|c| c.parse().unwrap())
        .collect();
    assert!(row[1] <= 1e-12 && row[2] <= 1e-12);
    assert_eq!(row[3], 0.25);
}

#[test]
fn single_disk_horizon_is_infinite() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("single_disk.cfg");
    let o = run(&["horizon", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(summary(out.path()).contains("cap_exceeded = true"));
}

#[test]
fn empty_config_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "");
    let o = run(&["horizon", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error kind=ConfigParseError line=1 column=1"), "{}", stderr(&o));
}

#[test]
fn malformed_line_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[run]\nseed = 1\n  nonsense\n");
    let o = run(&["horizon", "--config", cfg.to_str().unwrap()]);
    assert!(stderr(&o).contains("kind=ConfigParseError line=3 column=3"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand() {
    let cfg = configs().join("decompose.cfg");
    let o = run(&["teleport", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("kind=UnknownSubcommand"), "{}", stderr(&o));
}

#[test]
fn seed_is_mandatory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[shift]\nprobabilities = 0.5 0.5\n[observable]\ncomponent = coords 0\n");
    let o = run(&["decompose", "--config", cfg.to_str().unwrap(), "--dry-run"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[run] seed"), "{}", stderr(&o));
    let o = run(&["decompose", "--config", cfg.to_str().unwrap(), "--dry-run", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn dry_run_validates_every_shipped_config_without_output() {
    let out = tempfile::tempdir().unwrap();
    let target = out.path().join("never");
    for (file, sub) in [
        ("finite_horizon.cfg", "horizon"),
        ("hyperbolicity.cfg", "hyperbolicity"),
        ("invariance_check.cfg", "invariance-check"),
        ("green_kubo.cfg", "green-kubo"),
        ("clt.cfg", "clt"),
        ("clt_gas.cfg", "clt"),
        ("wip.cfg", "wip"),
        ("moments.cfg", "moments"),
        ("iterated.cfg", "iterated"),
        ("decompose.cfg", "decompose"),
        ("condition_profiles.cfg", "condition-profiles"),
        ("return_tail.cfg", "return-tail"),
        ("fastslow.cfg", "fastslow"),
        ("sde.cfg", "sde"),
    ] {
        let cfg = configs().join(file);
        let o = run(&[sub, "--config", cfg.to_str().unwrap(), "--out", target.to_str().unwrap(), "--dry-run"]);
        assert!(o.status.success(), "{file}: {}", stderr(&o));
    }
    assert!(!target.exists());
}

#[test]
fn dry_run_rejects_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[run]\nseed = 1\n[driver]\nkind = symbolic\n[shift]\nprobabilities = 0.5 0.6\n[observable]\ncomponent = coords 0\n[clt]\nn = 10\nmembers = 10\nsigma2 = exact\n",
    );
    let o = run(&["clt", "--config", cfg.to_str().unwrap(), "--dry-run"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("kind=ConfigParseError line=6"), "{}", stderr(&o));
    let cfg = write_cfg(dir.path(), "[run]\nseed = 1\n[horizon]\nsamples = 10\nbogus = 1\n[table]\ndisk = 0 0 0.4\n");
    let o = run(&["horizon", "--config", cfg.to_str().unwrap(), "--dry-run"]);
    assert!(stderr(&o).contains("line=5"), "{}", stderr(&o));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[run]\nseed = 21\n[driver]\nkind = symbolic\n[shift]\nprobabilities = 0.3 0.7\n[observable]\ncomponent = coords 0 -2\n[clt]\nn = 200\nmembers = 500\nsigma2 = exact\n",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = run(&["clt", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap(), "--no-timestamp"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["clt.csv", "clt_samples.csv", "summary.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let o = run(&["clt", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--seed", "22", "--no-timestamp"]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(a.join("clt_samples.csv")).unwrap(), std::fs::read(b.join("clt_samples.csv")).unwrap());
}

#[test]
fn timestamp_line_is_the_only_difference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("decompose.cfg");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["decompose", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run(&["decompose", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--no-timestamp"]);
    let stamped = std::fs::read_to_string(a.join("decompose.csv")).unwrap();
    let (first, rest) = stamped.split_once('\n').unwrap();
    assert!(first.starts_with("# generated_at="));
    assert_eq!(rest, std::fs::read_to_string(b.join("decompose.csv")).unwrap());
}

#[test]
fn threads_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("iterated.cfg");
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text = text.replace("n = 1000", "n = 50").replace("members = 10000", "members = 300");
    let cfg = write_cfg(dir.path(), &text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["iterated", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--no-timestamp"]);
    let o = run(&["iterated", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--no-timestamp", "--threads", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(a.join("iterated.csv")).unwrap(), std::fs::read(b.join("iterated.csv")).unwrap());
}

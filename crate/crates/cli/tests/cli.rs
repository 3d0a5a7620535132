use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use metasgld_cli::table::{read_table, write_run_records};
use metasgld_cli::{load_config, parse_config};
use metasgld_core::RunRecord;
use proptest::prelude::*;

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("presets")
        .join(format!("{name}.toml"))
}

fn bin(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metasgld"))
        .args(args)
        .env("METASGLD_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

/// A copy of `toy_8_8` with a different epoch count and csv name.
fn short_config(dir: &Path, name: &str, steps: usize) -> PathBuf {
    let text = std::fs::read_to_string(preset("toy_8_8"))
        .unwrap()
        .replace("outer_steps = 200", &format!("outer_steps = {steps}"))
        .replace("n_test = 500", "n_test = 40")
        .replace("toy_8_8.csv", &format!("{name}.csv"))
        .replace("toy_8_8.svg", &format!("{name}.svg"));
    let p = dir.join(format!("{name}.toml"));
    std::fs::write(&p, text).unwrap();
    p
}

fn data_rows(csv: &Path) -> usize {
    read_table(std::fs::File::open(csv).unwrap())
        .unwrap()
        .rows
        .len()
}

#[test]
fn single_epoch_gives_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "one", 1);
    let out = bin(&["run", cfg.to_str().unwrap()], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(data_rows(&dir.path().join("one.csv")), 1);
    let svg = std::fs::read_to_string(dir.path().join("one.svg")).unwrap();
    assert!(svg.contains("<circle") && !svg.contains("<polyline"));
    assert!(dir.path().join("one_bound_total.dat").exists());
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = short_config(a.path(), "rep", 8);
    let cfg = cfg.to_str().unwrap();
    assert!(bin(&["run", cfg, "--threads", "1"], a.path())
        .status
        .success());
    assert!(bin(&["run", cfg, "--threads", "3"], b.path())
        .status
        .success());
    let x = std::fs::read(a.path().join("rep.csv")).unwrap();
    let y = std::fs::read(b.path().join("rep.csv")).unwrap();
    assert_eq!(x, y);

    let c = tempfile::tempdir().unwrap();
    assert!(bin(&["run", cfg, "--seed", "9"], c.path()).status.success());
    let z = std::fs::read(c.path().join("rep.csv")).unwrap();
    assert_ne!(x, z);
}

#[test]
fn csv_header_carries_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = short_config(dir.path(), "hdr", 2);
    let out = bin(
        &["run", cfg_path.to_str().unwrap(), "--eval-cadence", "2"],
        dir.path(),
    );
    assert!(out.status.success());
    let table = read_table(std::fs::File::open(dir.path().join("hdr.csv")).unwrap()).unwrap();
    assert_eq!(table.columns, RunRecord::COLUMNS);
    let embedded = parse_config(&table.comment.join("\n")).unwrap();
    let mut expected = load_config(&cfg_path).unwrap();
    expected.outputs.eval_cadence = 2;
    assert_eq!(embedded, expected);
    let recs = table.run_records().unwrap();
    assert!(recs[0].gap.is_none() && recs[1].gap.is_some());
}

#[test]
fn config_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "").unwrap();
    let out = bin(&["run", empty.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run.n") && err.contains("outputs.csv") && err.contains("mode.kind"));

    let out = bin(&["run", "/nonexistent/x.toml"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn plot_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "p", 5);
    assert!(bin(&["run", cfg.to_str().unwrap()], dir.path())
        .status
        .success());
    let csv = dir.path().join("p.csv");
    let svg = dir.path().join("u.svg");
    let out = bin(
        &[
            "plot",
            csv.to_str().unwrap(),
            "--series",
            "bound_u,gnorm_bound_u",
            "--out",
            svg.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 2);
    assert!(dir.path().join("u_gnorm_bound_u.dat").exists());

    let out = bin(
        &[
            "plot",
            csv.to_str().unwrap(),
            "--series",
            "nope",
            "--out",
            svg.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gnorm_bound_total"));
}

#[test]
fn compare_checks_its_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = short_config(dir.path(), "a", 3);
    let b = short_config(dir.path(), "b", 4);
    let (a, b) = (a.to_str().unwrap(), b.to_str().unwrap());
    let out = bin(&["compare", a, b], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("outer_steps"));
    assert!(!bin(&["compare", a], dir.path()).status.success());

    let out = bin(&["compare", a, a], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn joint_preset_runs() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(preset("joint_demo"))
        .unwrap()
        .replace("outer_steps = 2000", "outer_steps = 50");
    let cfg = dir.path().join("j.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = bin(&["run", cfg.to_str().unwrap()], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let t = read_table(std::fs::File::open(dir.path().join("joint_demo.csv")).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 50);
    let jb = t.column("joint_bound").unwrap();
    let cf = t.column("closed_form").unwrap();
    assert!(jb.iter().zip(&cf).all(|(b, c)| b <= c));
}

fn record() -> impl Strategy<Value = RunRecord> {
    let v = || 0.0..1e6f64;
    let o = || prop::option::of(-10.0..10.0f64);
    (1usize..10_000, prop::array::uniform11(v()), (o(), o(), o())).prop_map(
        |(epoch, a, (tl, te, g))| RunRecord {
            epoch,
            eps_u: a[0],
            eps_w: a[1],
            gnorm_u: a[2],
            gnorm_w: a[3],
            lipschitz: a[4],
            bound_u: a[5],
            bound_w: a[6],
            bound_total: a[7],
            gnorm_bound_u: a[8],
            gnorm_bound_w: a[9],
            gnorm_bound_total: a[10],
            train_loss: tl,
            test_loss: te,
            gap: g,
        },
    )
}

proptest! {
    #[test]
    fn csv_round_trip(recs in prop::collection::vec(record(), 0..20)) {
        let mut buf = Vec::new();
        write_run_records(&mut buf, "kind = \"x\"", &recs).unwrap();
        let back = read_table(&buf[..]).unwrap().run_records().unwrap();
        prop_assert_eq!(back, recs);
    }
}

//! End-to-end runs of the `ghostlab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn ghostlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghostlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("GHOSTLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(rows: &[Vec<String>], name: &str) -> usize {
    rows[0].iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn analytic_single_point_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["analytic", "--orders", "2", "--modes", "1", "--intensities", "1"];
    let a = ghostlab(&args, &dir.path().join("a"));
    let b = ghostlab(&args, &dir.path().join("b"));
    assert!(a.status.success() && b.status.success());
    let read = |d: &str| std::fs::read(dir.path().join(d).join("analytic.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    let rows = data_rows(&dir.path().join("a/analytic.csv"));
    assert_eq!(rows.len(), 2);
    let v: f64 = rows[1][column(&rows, "visibility")].parse().unwrap();
    assert_eq!(v, 1.0 / 3.0);
    assert_eq!(rows[1][column(&rows, "g_max")], "2");
}

#[test]
fn analytic_curves_have_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghostlab(&["analytic", "--modes", "1"], dir.path());
    assert!(out.status.success());
    let rows = data_rows(&dir.path().join("analytic.csv"));
    let (n, i, snr) = (column(&rows, "order"), column(&rows, "mean_intensity"), column(&rows, "snr_thermal"));
    let curve = |order: &str| -> Vec<(f64, f64)> {
        rows[1..]
            .iter()
            .filter(|r| r[n] == order)
            .map(|r| (r[i].parse().unwrap(), r[snr].parse().unwrap()))
            .collect()
    };
    let (c2, c3, c4) = (curve("2"), curve("3"), curve("4"));
    assert_eq!(c2.len(), 51);
    // log-log slope at the low end grows with the order
    let slope = |c: &[(f64, f64)]| (c[1].1 / c[0].1).ln() / (c[1].0 / c[0].0).ln();
    assert!(slope(&c4) > slope(&c3) && slope(&c3) > slope(&c2));
    // and higher orders saturate lower
    let last = |c: &[(f64, f64)]| c.last().unwrap().1;
    assert!(last(&c2) > last(&c3) && last(&c3) > last(&c4));

    let peaks = data_rows(&dir.path().join("spdc_peaks.csv"));
    let m: f64 = peaks[1][1].parse().unwrap();
    let s: f64 = peaks[1][2].parse().unwrap();
    assert!((s - 0.27).abs() < 0.01 && (m / 0.8 - 1.0).abs() < 0.15);
}

#[test]
fn mc_rejects_single_trial() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghostlab(&["mc", "--trials", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
}

#[test]
fn mc_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["mc", "--orders", "2,3", "--modes", "1,5", "--intensities", "0.1,1", "--trials", "50000", "--seed", "11"];
    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    let mut three = args.to_vec();
    three.extend(["--threads", "3"]);
    let a = ghostlab(&one, &dir.path().join("a"));
    let b = ghostlab(&three, &dir.path().join("b"));
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    let read = |d: &str| std::fs::read(dir.path().join(d).join("mc.csv")).unwrap();
    assert_eq!(read("a"), read("b"));

    let rows = data_rows(&dir.path().join("a/mc.csv"));
    assert_eq!(rows.len(), 9);
    let agree = column(&rows, "agree");
    assert!(rows[1..].iter().all(|r| r[agree] == "true"));
    let text = std::fs::read_to_string(dir.path().join("a/mc.csv")).unwrap();
    assert!(text.contains("# seed: 11") && text.contains("# ghostlab "));
}

#[test]
fn mc_flags_disagreement_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    // an absurdly tight threshold must trip at least one flag
    let out = ghostlab(
        &["mc", "--orders", "2", "--modes", "1,2", "--intensities", "1", "--trials", "20000", "--threshold", "1e-6"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let rows = data_rows(&dir.path().join("mc.csv"));
    let agree = column(&rows, "agree");
    assert!(rows[1..].iter().any(|r| r[agree] == "false"));
}

#[test]
fn bad_config_reports_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"image\": {\n    \"frame\": 10\n  }\n}\n").unwrap();
    let out = ghostlab(&["analytic", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("frame"), "{err}");
}

#[test]
fn thread_count_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |value: &str| {
        Command::new(env!("CARGO_BIN_EXE_ghostlab"))
            .args(["config", "--out"])
            .arg(dir.path())
            .env("GHOSTLAB_THREADS", value)
            .output()
            .unwrap()
    };
    let ok = run("2");
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("\"threads\": 2"));
    assert_eq!(run("lots").status.code(), Some(2));
}

#[test]
fn image_round_trip_and_slit_length_trend() {
    let dir = tempfile::tempdir().unwrap();
    let common = [
        "image",
        "--frames",
        "150",
        "--width",
        "384",
        "--height",
        "256",
        "--slit-widths",
        "36,286",
        "--seed",
        "5",
    ];
    let mut first = common.to_vec();
    first.push("--save-frames");
    let a = ghostlab(&first, &dir.path().join("a"));
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(dir.path().join("a/ghost_w0036_n4.pgm").exists());
    assert!(dir.path().join("a/ghost_w0286_n2.gifr").exists());

    let frames = dir.path().join("a/frames.gifr");
    let mut second = common.to_vec();
    second.extend(["--input-frames", frames.to_str().unwrap(), "--no-images"]);
    let b = ghostlab(&second, &dir.path().join("b"));
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    for file in ["image_metrics.csv", "snr_vs_m.csv", "visibility_vs_m.csv", "calibration.csv"] {
        assert_eq!(data_rows(&dir.path().join("a").join(file)), data_rows(&dir.path().join("b").join(file)));
    }

    let snr = data_rows(&dir.path().join("a/snr_vs_m.csv"));
    let n4 = column(&snr, "snr_normalized_n4");
    let short: f64 = snr[1][n4].parse().unwrap();
    let long: f64 = snr[2][n4].parse().unwrap();
    assert!(long < short, "{long} vs {short}");
}

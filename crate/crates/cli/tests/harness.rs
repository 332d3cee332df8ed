use std::fs;
use std::path::Path;
use std::process::Command;

use msa_cli::{gen, lowerbound, run, table1, CliError, ExperimentConfig};
use msa_core::{train_dataset, Dataset, LossSpec, TrainConfig};

fn cfg(pairs: &[(&str, String)]) -> ExperimentConfig {
    let mut c = ExperimentConfig::new();
    for (k, v) in pairs {
        c.set(k, v);
    }
    c
}

fn small_toy(dir: &Path, seed: u64) {
    let c = cfg(&[
        ("out", dir.display().to_string()),
        ("seed", seed.to_string()),
        ("m_k", "400".into()),
        ("d", "10".into()),
        ("m0", "60".into()),
        ("test_n", "500".into()),
    ]);
    gen::cmd_gen_toy(&c).unwrap();
}

fn msa() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msa"))
}

#[test]
fn gen_toy_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let status = msa()
            .args(["gen", "toy", "--seed", "7", "--set", "m_k=300", "--set", "d=8", "--out"])
            .arg(d.path())
            .output()
            .unwrap()
            .status;
        assert!(status.success());
    }
    for name in ["source1.txt", "source4.txt", "target.txt", "test.txt", "oracle.txt"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn gen_example1_writes_sources_target_and_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&[("out", dir.path().display().to_string()), ("n", "2000".into())]);
    let files = gen::cmd_gen_example1(&c).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for n in ["source1.txt", "source2.txt", "source3.txt", "target.txt", "calibration.txt"] {
        assert!(names.iter().any(|x| x == n), "missing {n}");
    }
    assert!(!dir.path().join("source4.txt").exists());
    let report = fs::read_to_string(dir.path().join("calibration.txt")).unwrap();
    assert!(report.contains("w3_norm"), "{report}");
}

#[test]
fn missing_output_directory_is_named() {
    let out = msa().args(["gen", "toy", "--out", "/definitely/not/here"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/definitely/not/here"), "{err}");
    let c = cfg(&[("out", "/definitely/not/here".into())]);
    assert!(matches!(gen::cmd_gen_toy(&c), Err(CliError::MissingDir(_))));
}

#[test]
fn target_only_run_matches_erm() {
    let dir = tempfile::tempdir().unwrap();
    small_toy(dir.path(), 2);
    let c = cfg(&[("data", dir.path().display().to_string()), ("algorithm", "target_only".into())]);
    let out = run::cmd_run(&c).unwrap();
    let target = Dataset::read(dir.path().join("target.txt"), 0).unwrap();
    let test = Dataset::read(dir.path().join("test.txt"), 0).unwrap();
    let loss = LossSpec::squared(1e-3);
    let h = train_dataset(&target, &loss, &TrainConfig::default()).unwrap();
    let row = &out.rows[0];
    assert_eq!(row.train_loss, msa_core::empirical_loss(&h, &target, None, &loss).unwrap());
    assert_eq!(row.test_loss, Some(msa_core::empirical_loss(&h, &test, None, &loss).unwrap()));
    assert_eq!(out.model.to_text(), h.to_text());
}

#[test]
fn lmsa_report_has_one_row_per_cover_point() {
    let dir = tempfile::tempdir().unwrap();
    small_toy(dir.path(), 3);
    let report = dir.path().join("report.csv");
    let c = cfg(&[
        ("data", dir.path().display().to_string()),
        ("algorithm", "lmsa".into()),
        ("cover.epsilon", "0.25".into()),
        ("report", report.display().to_string()),
    ]);
    run::cmd_run(&c).unwrap();
    // grid multiples of 1/16 for three free coordinates with sum <= 1
    let mut expected = 0;
    for a in 0..=16 {
        for b in 0..=16 - a {
            expected += 16 - a - b + 1;
        }
    }
    let text = fs::read_to_string(report).unwrap();
    assert_eq!(text.lines().count() - 1, expected);
    assert_eq!(expected, 969);
}

#[test]
fn minmax_without_strong_convexity_fails_with_precondition() {
    let dir = tempfile::tempdir().unwrap();
    small_toy(dir.path(), 4);
    let cfg_path = dir.path().join("mm.cfg");
    fs::write(&cfg_path, format!("data={}\nalgorithm=lmsa_minmax\nmu=0\n", dir.path().display())).unwrap();
    let out = msa().arg("run").arg("--config").arg(&cfg_path).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("strictly convex"), "{err}");
}

#[test]
fn unknown_config_key_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.cfg");
    fs::write(&cfg_path, "algorithm=lmsa\ncover.epsilom=0.5\n").unwrap();
    let out = msa().arg("run").arg("--config").arg(&cfg_path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cover.epsilom"));
}

#[test]
fn target_split_reports_both_protocols_and_the_better() {
    let dir = tempfile::tempdir().unwrap();
    small_toy(dir.path(), 5);
    let c = cfg(&[
        ("data", dir.path().display().to_string()),
        ("algorithm", "combined_sources".into()),
        ("target-split", "true".into()),
    ]);
    let out = run::cmd_run(&c).unwrap();
    assert_eq!(out.rows.len(), 3);
    assert_eq!(out.rows[0].protocol, "all");
    assert_eq!(out.rows[1].protocol, "split");
    let best = out.rows[0].test_loss.unwrap().min(out.rows[1].test_loss.unwrap());
    assert_eq!(out.rows[2].test_loss, Some(best));
    // the split protocol trains on one extra source
    assert_eq!(out.rows[0].lambda.as_ref().map(Vec::len), Some(4));
    assert_eq!(out.rows[1].lambda.as_ref().map(Vec::len), Some(5));
}

#[test]
fn table1_schema_and_determinism() {
    let c = cfg(&[
        ("seeds", "2".into()),
        ("m_k", "300".into()),
        ("d", "10".into()),
        ("minmax.steps", "50".into()),
    ]);
    let rows = table1::cmd_table1(&c).unwrap();
    assert_eq!(rows.iter().map(|r| r.m0).collect::<Vec<_>>(), table1::DEFAULT_M0);
    let csv = table1::rows_to_csv(&rows);
    assert_eq!(csv.lines().next().unwrap(), table1::TABLE1_HEADER);
    assert_eq!(csv.lines().count(), 6);
    assert_eq!(csv, table1::rows_to_csv(&table1::cmd_table1(&c).unwrap()));
    // the oracle does not look at the target sample
    let o: Vec<f64> = rows.iter().map(|r| r.oracle).collect();
    assert!(o.iter().all(|v| (v - o[0]).abs() < 1e-9 * o[0]), "{o:?}");
}

#[test]
fn lowerbound_writes_sorted_csv_and_stable_plot() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, svg) = (dir.path().join("lb.csv"), dir.path().join("lb.svg"));
    let c = cfg(&[
        ("p", "16,4".into()),
        ("m0", "200,50".into()),
        ("trials", "50".into()),
        ("seed", "9".into()),
        ("output", csv.display().to_string()),
        ("plot", svg.display().to_string()),
    ]);
    let rows = lowerbound::cmd_lowerbound(&c).unwrap();
    let keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.p, r.m0)).collect();
    assert_eq!(keys, vec![(4, 50), (4, 200), (16, 50), (16, 200)]);
    let first = fs::read(&svg).unwrap();
    let first_csv = fs::read(&csv).unwrap();
    lowerbound::cmd_lowerbound(&c).unwrap();
    assert_eq!(fs::read(&svg).unwrap(), first);
    assert_eq!(fs::read(&csv).unwrap(), first_csv);
}

#[test]
fn disc_subcommand_prints_value() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    fs::write(&a, "# d=1 task=regression K=1\n1,1\n").unwrap();
    fs::write(&b, "# d=1 task=regression K=1\n1,-1\n").unwrap();
    let out = msa()
        .args(["disc", "--set", "norm_ball=1", "--set", "intercept=false", "--set", "erm.reg=0", "--a"])
        .arg(&a)
        .arg("--b")
        .arg(&b)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let v: f64 = text.trim().strip_prefix("disc=").unwrap().parse().unwrap();
    assert!((v - 4.0).abs() < 1e-6, "{v}");
}

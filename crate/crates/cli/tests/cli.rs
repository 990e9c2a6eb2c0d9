use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const VN: &str = "2,18,27,35,42,44,52,53,55,72,81,89,101,103,110";

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/paper").join(name)
}

fn oofa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oofa")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn evaluate_rows() {
    let v = json(&oofa(&["evaluate", "--m", "5", "--rows", VN]));
    let chi2 = v["payload"]["chi2_ave_2"].as_f64().unwrap();
    assert!((chi2 - 1.41).abs() < 0.01);
    assert_eq!(v["command"][0], "evaluate");
    assert_eq!(v["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn design_file_and_rows_agree() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("vn.rows");
    fs::write(&rows, format!("m=5\n{VN}\n")).unwrap();
    let a = json(&oofa(&["evaluate", "--design", rows.to_str().unwrap()]));
    let b = json(&oofa(&["evaluate", "--m", "5", "--rows", VN]));
    assert_eq!(a["payload"], b["payload"]);
}

#[test]
fn admissible_run_size() {
    let v = json(&oofa(&["admissible", "--m", "4", "--t", "2"]));
    assert_eq!(v["payload"]["min_n"], 12);
}

#[test]
fn compare_table_designs() {
    let d1 = fixture("oa_12_4_design1.rows");
    let d2 = fixture("oa_12_4_design2.rows");
    let v = json(&oofa(&["compare", "-d", d1.to_str().unwrap(), "-d", d2.to_str().unwrap()]));
    assert_eq!(v["payload"]["wt_isomorphic"], false);
    assert_eq!(v["payload"]["d_isomorphic"], false);
}

#[test]
fn rank_latex() {
    let a = fixture("oa_24_5_id33.rows");
    let b = fixture("oa_24_5_id5.rows");
    let out = oofa(&[
        "rank", "-d", a.to_str().unwrap(), "-d", b.to_str().unwrap(), "--ids", "33,5", "--format", "latex",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("\\begin{tabular}"));
    assert!(text.contains("33 & 0.850(1)"));
}

#[test]
fn search_writes_class_files_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("found");
    let args = [
        "search", "--m", "4", "-n", "12", "--starts", "60", "--seed", "5", "--all-optima", "--out",
        out_dir.to_str().unwrap(),
    ];
    let first = oofa(&args);
    let v = json(&first);
    let files = v["payload"]["files"].as_array().unwrap();
    assert_eq!(files.len(), v["payload"]["result"]["distinct_wt_classes"].as_u64().unwrap() as usize);
    for f in files {
        let text = fs::read_to_string(out_dir.join(f.as_str().unwrap())).unwrap();
        assert!(text.starts_with("# m=4\n"));
        assert_eq!(text.lines().count(), 13);
    }
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["payload"], v["payload"]);
    assert_eq!(summary["seed"], 5);

    let threaded = Command::new(env!("CARGO_BIN_EXE_oofa"))
        .args(args)
        .env("OOFA_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(first.stdout, threaded.stdout);
}

#[test]
fn candidate_spec_constrains_search() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"m": 4, "constraints": [["precedes", 0, 3]]}"#).unwrap();
    let v = json(&oofa(&["search", "--candidates", spec.to_str().unwrap(), "-n", "8", "--starts", "10"]));
    let design = &v["payload"]["result"]["designs"][0]["design"]["runs"];
    for run in design.as_array().unwrap() {
        let order: Vec<u64> = run["order"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
        let p0 = order.iter().position(|&c| c == 0).unwrap();
        let p3 = order.iter().position(|&c| c == 3).unwrap();
        assert!(p0 < p3);
    }
}

#[test]
fn analyze_stepwise() {
    let dir = tempfile::tempdir().unwrap();
    let design = fixture("oa_24_5_id33.rows");
    let rows = fs::read_to_string(&design).unwrap();
    let list: Vec<u64> = rows.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    // response 5 + 3 * F01 with a small deterministic wobble
    let mut y = String::from("y\n");
    for (i, r) in list.iter().enumerate() {
        let f01 = oofa_core::perm::unrank(5, *r).unwrap().precedes(0, 1);
        y.push_str(&format!("{}\n", 5.0 + 3.0 * f64::from(u8::from(f01)) + 0.01 * ((i * 7 % 5) as f64 - 2.0)));
    }
    let resp = dir.path().join("y.csv");
    fs::write(&resp, y).unwrap();
    let v = json(&oofa(&[
        "analyze", "-d", design.to_str().unwrap(), "--response", resp.to_str().unwrap(), "--stepwise",
    ]));
    let terms = v["payload"]["model"]["terms"].as_array().unwrap();
    assert!(terms.iter().any(|t| t["name"] == "F01"), "{terms:?}");
}

#[test]
fn bad_inputs_exit_one_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "# m=3\n0,1,2\n0,0,2\n").unwrap();
    let out = oofa(&["evaluate", "-d", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
    assert_eq!(stderr(&out).lines().count(), 1);

    let out = oofa(&["evaluate", "-d", "/nonexistent/design.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot read"));

    let out = oofa(&["evaluate", "--rows", "1,2,3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--m"));

    let out = oofa(&["search", "--m", "4", "-n", "12", "--criterion", "anneal"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("known: d, chi2"));

    let out = oofa(&["evaluate", "--m", "4", "--rows", "1,2,3"]);
    assert!(out.status.success());
    let out = oofa(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

//! File formats and the command-line surface.

use std::path::Path;

use ndarray::Array2;
use proptest::prelude::*;
use serde_json::Value;

use irtm::io::{
    load_constraints, read_responses, write_responses, PosteriorSummary, RunConfig,
};
use irtm::model::{Response, ResponseMatrix};

fn cli(args: &[&str]) -> i32 {
    irtm::cli::cli_main(std::iter::once("irtm").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, d: usize) {
    let d = d.to_string();
    assert_eq!(
        cli(&["simulate", "--n", "30", "--k", "20", "--d", &d, "--seed", "3", "--out", p(dir)]),
        0
    );
}

fn column_means(path: &Path, key_cols: usize) -> std::collections::BTreeMap<Vec<String>, (f64, usize)> {
    let mut out = std::collections::BTreeMap::new();
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    assert_eq!(headers.get(headers.len() - 1), Some("value"));
    for rec in r.records() {
        let rec = rec.unwrap();
        let key: Vec<String> = (0..key_cols).map(|i| rec[i].to_string()).collect();
        let v: f64 = rec[rec.len() - 1].parse().unwrap();
        let e = out.entry(key).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    out
}

#[test]
fn fit_summary_matches_draw_files() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, 2);
    let out = tmp.path().join("fit");
    let code = cli(&[
        "fit", "--method", "irtm", "--data", p(&sim.join("responses.csv")), "--m", p(&sim.join("constraints.csv")),
        "--iters", "300", "--burnin", "100", "--chains", "2", "--seed", "7", "--out", p(&out),
    ]);
    assert_eq!(code, 0);
    for f in ["theta.csv", "lambda.csv", "b.csv", "sigma.csv", "summary.json", "run.conf"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary: PosteriorSummary =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.units.len(), 30);
    assert_eq!((summary.n_chains, summary.n_draws), (2, 200));

    let theta = column_means(&out.join("theta.csv"), 2);
    for u in &summary.units {
        for (j, dim) in summary.dimensions.iter().enumerate() {
            let (s, n) = theta[&vec![u.id.clone(), dim.clone()]];
            assert!((s / n as f64 - u.theta_mean[j]).abs() < 1e-12);
        }
    }
    let b = column_means(&out.join("b.csv"), 1);
    for item in &summary.items {
        let (s, n) = b[&vec![item.id.clone()]];
        assert!((s / n as f64 - item.b_mean.unwrap()).abs() < 1e-12);
    }

    // the persisted run.conf reproduces the run
    let again = tmp.path().join("again");
    assert_eq!(cli(&["fit", "--config", p(&out.join("run.conf")), "--out", p(&again)]), 0);
    assert_eq!(
        std::fs::read(out.join("theta.csv")).unwrap(),
        std::fs::read(again.join("theta.csv")).unwrap()
    );

    let report = tmp.path().join("diag.json");
    assert_eq!(cli(&["diagnose", "--draws", p(&out), "--param", "theta", "--out", p(&report)]), 0);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let coords = v["coordinates"].as_array().unwrap();
    assert_eq!(coords.len(), 60);
    assert!(coords[0]["ess"]["ess"].as_f64().unwrap() > 0.0);
    assert!(coords[0]["rhat"]["rhat"].as_f64().unwrap() > 0.5);
}

#[test]
fn baseline_fits_run_from_the_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, 2);
    let data = sim.join("responses.csv");
    for method in ["irt", "pca"] {
        let out = tmp.path().join(method);
        let code = cli(&[
            "fit", "--method", method, "--data", p(&data), "--dims", "2", "--iters", "100", "--burnin", "50",
            "--chains", "1", "--out", p(&out),
        ]);
        assert_eq!(code, 0, "{method}");
        assert!(out.join("summary.json").exists());
    }
    assert!(!tmp.path().join("pca").join("theta.csv").exists());
}

#[test]
fn underidentified_fit_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("y.csv");
    let m = tmp.path().join("m.csv");
    std::fs::write(&data, "unit,a,b,c\nu1,1,0,1\nu2,0,1,NA\nu3,1,1,0\n").unwrap();
    std::fs::write(&m, "item,d1,d2,d3\na,1,1,1\nb,-1,1,1\nc,1,NA,1\n").unwrap();
    let out = tmp.path().join("out");
    let base = ["fit", "--method", "irtm", "--data", p(&data), "--m", p(&m), "--iters", "20", "--burnin", "10"];
    let mut args = base.to_vec();
    args.extend(["--anchors", "none", "--out", p(&out)]);
    assert_eq!(cli(&args), 2);
    args.push("--force");
    assert_eq!(cli(&args), 0);
}

#[test]
fn bad_input_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["fit", "--no-such-flag"]), 1);
    assert_eq!(cli(&["--help"]), 0);
    let data = tmp.path().join("y.csv");
    std::fs::write(&data, "unit,a\nu1,2\n").unwrap();
    let out = tmp.path().join("out");
    assert_eq!(cli(&["fit", "--method", "pca", "--data", p(&data), "--dims", "1", "--out", p(&out)]), 2);
}

#[test]
fn constraints_are_matched_by_item_id() {
    let tmp = tempfile::tempdir().unwrap();
    let data_path = tmp.path().join("y.csv");
    std::fs::write(&data_path, "unit,a,b\nu1,1,0\nu2,NA,1\n").unwrap();
    let data = read_responses(&data_path).unwrap();
    let m = tmp.path().join("m.csv");
    std::fs::write(&m, "item,d1\nb,-2.5\na,NA\n").unwrap();
    let c = load_constraints(&m, &data).unwrap();
    assert_eq!(c.item_ids(), ["a", "b"]);
    assert_eq!(c.code(0, 0), None);
    assert_eq!(c.code(1, 0), Some(-2.5));
    std::fs::write(&m, "item,d1\na,1\nzzz,0\n").unwrap();
    assert!(load_constraints(&m, &data).is_err());
}

#[test]
fn encode_writes_one_column_per_level() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw.csv");
    let schema = tmp.path().join("schema.json");
    std::fs::write(&raw, "unit,q\nu1,1\nu2,5\nu3,NA\nu4,3\n").unwrap();
    std::fs::write(&schema, r#"[{"name": "q", "type": "ordinal", "levels": ["1","2","3","4","5"]}]"#).unwrap();
    let out = tmp.path().join("y.csv");
    let map = tmp.path().join("map.csv");
    assert_eq!(cli(&["encode", "--raw", p(&raw), "--schema", p(&schema), "--out", p(&out), "--map", p(&map)]), 0);
    let y = read_responses(&out).unwrap();
    assert_eq!(y.n_items(), 5);
    for i in 0..4 {
        let row: Vec<Response> = (0..5).map(|k| y.get(i, k)).collect();
        if i == 2 {
            assert!(row.iter().all(|r| r.is_missing()));
        } else {
            assert_eq!(row.iter().filter(|r| **r == Response::Yes).count(), 1);
        }
    }
}

#[test]
fn config_digest_tracks_relevant_fields() {
    let base = RunConfig::parse("data = y.csv\nconstraints = m.csv\nseed = 4\nout_dir = a\n").unwrap();
    let moved = RunConfig::parse("data = y.csv\nconstraints = m.csv\nseed = 4\nout_dir = b\n").unwrap();
    assert_eq!(base.digest(), moved.digest());
    for changed in ["seed = 5", "iterations = 10", "anchors = none", "nu0 = 7", "correlated = false"] {
        let c = RunConfig::parse(&format!("data = y.csv\nconstraints = m.csv\nseed = 4\nout_dir = a\n{changed}\n")).unwrap();
        assert_ne!(base.digest(), c.digest(), "{changed}");
    }
}

fn matrix_strategy() -> impl Strategy<Value = Array2<Response>> {
    (1usize..12, 1usize..8).prop_flat_map(|(n, k)| {
        prop::collection::vec(prop_oneof![Just(Response::Yes), Just(Response::No), Just(Response::Missing)], n * k)
            .prop_map(move |v| Array2::from_shape_vec((n, k), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn response_csv_round_trips(values in matrix_strategy()) {
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
        let data = ResponseMatrix::from_values(values).unwrap();
        write_responses(&a, &data).unwrap();
        let back = read_responses(&a).unwrap();
        prop_assert_eq!(back.values(), data.values());
        prop_assert_eq!(back.unit_ids(), data.unit_ids());
        write_responses(&b, &back).unwrap();
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tdp_core::bound::compute_bound;
use tdp_core::calibration::{select_critical_vector, CalibrationSpec};
use tdp_core::pvalue_model::AltPValueCdf;
use tdp_core::sim::{run_scenario, ScenarioConfig};
use tdp_core::stepup::{make_critical_vector, rejection_pmf, Family, FamilyParams, TwoGroupModel};

fn tdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdp")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_pvalues(path: &Path, p: &[f64], t: Option<&[f64]>) {
    let mut s = String::from(if t.is_some() { "id,p,t\n" } else { "id,p\n" });
    for (i, pi) in p.iter().enumerate() {
        match t {
            Some(t) => s.push_str(&format!("h{i},{pi},{}\n", t[i])),
            None => s.push_str(&format!("h{i},{pi}\n")),
        }
    }
    fs::write(path, s).unwrap();
}

fn sample_pvalues() -> Vec<f64> {
    let mut p: Vec<f64> = (0..12).map(|i| 0.0002 * (i + 1) as f64).collect();
    p.extend((0..28).map(|i| 0.05 + 0.9 * i as f64 / 27.0));
    p
}

#[test]
fn bound_with_fixed_lambda_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.csv");
    let p = sample_pvalues();
    write_pvalues(&input, &p, None);
    let out = tdp(&["bound", "--input", input.to_str().unwrap(), "--theta", "0.8", "--lambda", "0.1"]);
    let v = stdout_json(&out);
    let cv = make_critical_vector(Family::Bh, FamilyParams::linear(0.1), p.len()).unwrap();
    let lib = compute_bound(&p, &cv, &AltPValueCdf::t_test(0.8, 50).unwrap(), 0.2).unwrap();
    assert_eq!(v["r"], lib.r);
    assert_eq!(v["m1_hat"], lib.m1_hat);
    assert_eq!(v["m0_hat"], lib.m0_hat);
    assert_eq!(v["gamma_star"], lib.gamma_star.to_string());
    assert_eq!(v["parameters"]["calibrated"], false);
    assert_eq!(v["parameters"]["m"], p.len());
}

#[test]
fn bound_calibrates_like_the_library_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.csv");
    let p = sample_pvalues();
    write_pvalues(&input, &p, None);
    let args = ["bound", "--input", input.to_str().unwrap(), "--theta", "1.0", "--family", "aorc", "--gamma-target", "0.95"];
    let first = tdp(&args);
    let second = tdp(&args);
    assert_eq!(first.stdout, second.stdout);
    let v = stdout_json(&first);
    let f = AltPValueCdf::t_test(1.0, 50).unwrap();
    let res = select_critical_vector(&CalibrationSpec::new(Family::Aorc, p.len(), 0.2, f.clone(), 0.95)).unwrap();
    let lib = compute_bound(&p, &res.cv, &f, 0.2).unwrap();
    assert_eq!(v["m1_hat"], lib.m1_hat);
    assert_eq!(v["parameters"]["lambda"].as_f64().unwrap(), res.cv.params().unwrap().lambda);
}

#[test]
fn bound_reads_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.csv");
    write_pvalues(&input, &sample_pvalues(), None);
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# analysis\nalpha = 0.1\ntheta = 1.2\nlambda = 0.05\n").unwrap();
    let v = stdout_json(&tdp(&["bound", "--input", input.to_str().unwrap(), "--config", cfg.to_str().unwrap()]));
    assert_eq!(v["parameters"]["alpha"], 0.1);
    assert_eq!(v["parameters"]["theta"], 1.2);
    // Flags override the file.
    let v = stdout_json(&tdp(&[
        "bound", "--input", input.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--alpha", "0.2",
    ]));
    assert_eq!(v["parameters"]["alpha"], 0.2);
}

#[test]
fn zero_effect_gives_zero_bound() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.csv");
    let p = vec![1.0; 10];
    let t = vec![0.0; 10];
    write_pvalues(&input, &p, Some(&t));
    let est = stdout_json(&tdp(&["estimate-theta", "--input", input.to_str().unwrap(), "--threshold", "fixed:0.05"]));
    assert_eq!(est["theta_hat"], 0.0);
    assert_eq!(est["n_selected"], 0);
    let v = stdout_json(&tdp(&["bound", "--input", input.to_str().unwrap(), "--threshold", "fixed:0.05"]));
    assert_eq!(v["m1_hat"], 0);
    assert_eq!(v["tdp_hat"], 0.0);
    assert_eq!(v["m0_hat"], 10);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.csv");
    write_pvalues(&input, &sample_pvalues(), None);
    let path = input.to_str().unwrap();
    // Missing effect size.
    assert_eq!(tdp(&["bound", "--input", path]).status.code(), Some(2));
    // Malformed input names the line.
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,p\na,0.1\nb,1.7\n").unwrap();
    let out = tdp(&["bound", "--input", bad.to_str().unwrap(), "--theta", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    // Unattainable calibration target.
    assert_eq!(tdp(&["calibrate", "--m", "5", "--theta", "0.8", "--gamma-target", "1.5"]).status.code(), Some(1));
    // Unknown flag.
    assert_eq!(tdp(&["bound", "--bogus"]).status.code(), Some(2));
}

#[test]
fn dist_r_single_null() {
    let out = tdp(&["dist-r", "--m", "1", "--m1", "0", "--thresholds", "0.3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "r,probability");
    let cells: Vec<(usize, f64)> = rows[1..]
        .iter()
        .map(|r| {
            let (a, b) = r.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(cells.len(), 2);
    assert_eq!((cells[0].0, cells[1].0), (0, 1));
    assert!((cells[0].1 - 0.7).abs() < 1e-15 && (cells[1].1 - 0.3).abs() < 1e-15, "{cells:?}");
}

#[test]
fn dist_r_json_matches_library() {
    let v = stdout_json(&tdp(&[
        "dist-r", "--m", "12", "--m1", "4", "--family", "exp", "--lambda", "0.3", "--beta", "0.5", "--theta", "0.8",
        "--json",
    ]));
    let cv = make_critical_vector(Family::Exp, FamilyParams::shaped(0.3, 0.5), 12).unwrap();
    let model = TwoGroupModel::new(12, 4, AltPValueCdf::t_test(0.8, 50).unwrap()).unwrap();
    let pmf = rejection_pmf(&model, &cv).unwrap();
    let got: Vec<f64> = v["pmf"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(got, pmf.probs());
}

#[test]
fn simulate_csv_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("sim.csv");
    let out = tdp(&[
        "simulate", "--set", "m=12", "--set", "m1=3", "--theta", "1.0", "--replications", "200", "--methods",
        "bh,aorc:0.9", "--seed", "5", "--out", out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = ScenarioConfig {
        m: 12,
        m1: 3,
        theta: 1.0,
        theta_assumed: 1.0,
        replications: 200,
        methods: vec!["bh".parse().unwrap(), "aorc:0.9".parse().unwrap()],
        seed: 5,
        ..ScenarioConfig::default()
    };
    let rows = run_scenario(&config).unwrap().tidy_rows();
    let mut reader = csv::Reader::from_path(&out_path).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ["scenario", "method", "m1", "statistic", "value", "mc_se"]);
    let records: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), rows.len());
    for (rec, row) in records.iter().zip(&rows) {
        assert_eq!(&rec[1], row.method);
        assert_eq!(&rec[3], row.statistic);
        assert_eq!(rec[4].parse::<f64>().unwrap(), row.value);
    }
}

#[test]
fn estimate_theta_from_raw_data_with_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let mut s = String::from("v1,v2,v3\n");
    for i in 0..20 {
        let x = i as f64 / 10.0;
        s.push_str(&format!("{},{},{}\n", 1.0 + (x * 7.0).sin(), (x * 3.0).cos(), 0.5 * (x * 5.0).sin()));
    }
    fs::write(&data, s).unwrap();
    let bound_p = dir.path().join("bound.csv");
    let v = stdout_json(&tdp(&[
        "estimate-theta", "--data", data.to_str().unwrap(), "--split", "8,12", "--bound-pvalues",
        bound_p.to_str().unwrap(), "--threshold", "quantile:0.5", "--seed", "3",
    ]));
    assert_eq!(v["n_samples"], 8);
    assert_eq!(v["estimation_subjects"].as_array().unwrap().len(), 8);
    assert_eq!(v["bound_subjects"].as_array().unwrap().len(), 12);
    let written = fs::read_to_string(&bound_p).unwrap();
    assert_eq!(written.lines().count(), 4);
    assert!(written.starts_with("id,p,t"));
}

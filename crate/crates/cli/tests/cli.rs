use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn zipscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zipscan")).args(args).output().expect("running zipscan")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(p: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn detect_two_regions_finds_the_dominant_one() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("two.csv");
    std::fs::write(&input, "id,x,y,population,cases\nwest,0,0,1000,40\neast,1,0,1000,0\n").unwrap();
    let out = dir.path().join("report.json");
    let o = zipscan(&["detect", "--input", path(&input), "--method", "poisson", "--replicas", "99", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), path(&out));

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["best_zone"], serde_json::json!(["west"]));
    assert_eq!(report["B"], 99);
    assert_eq!(report["method"], "poisson");
    assert_eq!(report["config"]["seed"], 0);
    assert!(report["lambda"].as_f64().unwrap() > 1.0);
    let p = report["p_value"].as_f64().unwrap();
    assert!((0.01..=1.0).contains(&p));
}

#[test]
fn detect_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("grid.csv");
    let mut text = String::from("id,x,y,population,cases,structural_zero\n");
    for i in 0..16 {
        let cases = [3, 0, 1, 2, 9, 7, 0, 1, 2, 0, 1, 1, 0, 2, 3, 1][i];
        let d = u8::from(i == 6 || i == 12);
        text += &format!("g{i},{},{},{},{cases},{d}\n", i % 4, i / 4, 100 + 10 * i);
    }
    std::fs::write(&input, text).unwrap();
    for method in ["poisson", "zip", "zip-em"] {
        let run = |name: &str| {
            let out = dir.path().join(name);
            let o = zipscan(&[
                "detect", "--input", path(&input), "--method", method, "--replicas", "99", "--seed", "7", "--out",
                path(&out),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read(out).unwrap()
        };
        assert_eq!(run("a.json"), run("b.json"), "{method}");
    }
}

#[test]
fn structural_zero_with_cases_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "id,x,y,population,cases,structural_zero\na,0,0,10,3,1\nb,1,0,10,2,0\n").unwrap();
    let out = dir.path().join("r.json");
    let o = zipscan(&["detect", "--input", path(&input), "--method", "zip", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("structural"));
    assert!(o.stdout.is_empty());
    assert!(!out.exists());
}

#[test]
fn zip_without_indicator_column_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("plain.csv");
    std::fs::write(&input, "id,x,y,population,cases\na,0,0,10,3\nb,1,0,10,0\n").unwrap();
    let o = zipscan(&["detect", "--input", path(&input), "--method", "zip", "--out", path(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(3));
    let missing = zipscan(&["detect", "--input", path(&dir.path().join("nope.csv")), "--method", "poisson"]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn no_cases_is_a_degeneracy() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("empty.csv");
    std::fs::write(&input, "id,x,y,population,cases\na,0,0,10,0\nb,1,0,10,0\n").unwrap();
    let o = zipscan(&["detect", "--input", path(&input), "--method", "poisson", "--out", path(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn simulate_a0_gives_equal_powers() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("a0.csv");
    let o = zipscan(&[
        "simulate", "--scenario", "A0", "--methods", "poisson,zip", "--studies", "50", "--replicas", "99", "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("scenario,method,power,sensitivity,ppv,N,B,seed\n"));
    let rows = read_csv(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][2], rows[1][2]);
    assert_eq!((rows[0][1].as_str(), rows[1][1].as_str()), ("poisson", "zip"));

    let mut sidecar = out.clone().into_os_string();
    sidecar.push(".config.json");
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar).unwrap()).unwrap();
    assert_eq!(cfg["studies"], 50);
    assert_eq!(cfg["config"]["replicas"], 99);
}

#[test]
fn simulate_a4_orders_poisson_below_zip() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("a4.csv");
    let o = zipscan(&[
        "simulate", "--scenario", "A4", "--methods", "poisson,zip", "--n", "200", "--b", "199", "--seed", "11",
        "--out", path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out);
    let power: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(power[0] < power[1], "{power:?}");
}

#[test]
fn empty_method_list_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("none.csv");
    let o = zipscan(&["simulate", "--scenario", "A", "--methods", "", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let o = zipscan(&["simulate", "--scenario", "nowhere", "--methods", "zip", "--studies", "2", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn null_study_rates_are_proportions_and_replay() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = zipscan(&[
            "null-study", "--methods", "poisson,zip,zip-em", "--studies", "200", "--replicas", "99", "--seed", "5",
            "--workers", "2", "--out", path(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a.csv");
    let rows = read_csv(&a);
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r[0], "null");
        let rate: f64 = r[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&rate));
    }
    let b = run("b.csv");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

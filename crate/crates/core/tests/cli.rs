use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_chemostat");

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("CHEMOSTAT_JOBS").output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn reference() -> Value {
    serde_json::from_str(&std::fs::read_to_string(scenario("reference.json")).unwrap()).unwrap()
}

fn monod(label: &str, a: f64, b: f64, yield_law: Value, removal: f64) -> Value {
    json!({ "label": label, "growth": { "family": "monod", "params": { "a": a, "b": b } }, "yield": yield_law, "removal": removal })
}

fn haldane_first() -> Value {
    json!({
        "version": 1, "s0": 3.0, "d": 1.0,
        "species": [
            { "label": "h", "growth": { "family": "haldane", "params": { "a": 3.0, "b": 2.0, "c": 4.0 } },
              "yield": { "family": "constant", "params": { "y": 1.0 } }, "removal": 1.0 },
            monod("m", 3.0, 3.0, json!({ "family": "constant", "params": { "y": 1.0 } }), 1.0)
        ],
        "initial": { "s": 1.0, "x": [0.1, 0.1] }
    })
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_reference() {
    let o = run(&["analyze", path_str(&scenario("reference.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    let species = &v["result"]["catalog"]["species"];
    assert_eq!(species[0]["breakeven"]["lambda"], 1.0);
    assert_eq!(species[0]["breakeven"]["mu"], "inf");
    let l2 = species[1]["breakeven"]["lambda"].as_f64().unwrap();
    assert!((l2 - (4.0 - 8f64.sqrt())).abs() < 1e-12);
    assert_eq!(species[2]["breakeven"]["lambda"], 1.5);
    let lower = &species[0]["lower"];
    assert_eq!(lower["s"], 1.0);
    assert_eq!(lower["x"], json!([2.0, 0.0, 0.0]));
    assert_eq!(lower["stability"], "stable");
    assert_eq!(v["provenance"]["command"], "analyze");
}

#[test]
fn analyze_missing_key_names_it() {
    let dir = scratch("missing");
    let mut sc = reference();
    sc.as_object_mut().unwrap().remove("d");
    let p = write_json(&dir, "s.json", &sc);
    let o = run(&["analyze", path_str(&p)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`d`") && err.contains("line"), "{err}");
}

#[test]
fn analyze_without_viable_species() {
    let dir = scratch("nonviable");
    let mut sc = reference();
    for sp in sc["species"].as_array_mut().unwrap() {
        sp["removal"] = json!(10.0);
    }
    let p = write_json(&dir, "s.json", &sc);
    let v = stdout_json(&run(&["analyze", path_str(&p)]));
    let cat = &v["result"]["catalog"];
    assert_eq!(cat["washout"]["stability"], "stable");
    for sp in cat["species"].as_array().unwrap() {
        assert_eq!(sp["breakeven"]["lambda"], "inf");
        assert!(sp["lower"].is_null() && sp["upper"].is_null());
    }
}

#[test]
fn unknown_keys_strict_and_lenient() {
    let dir = scratch("lenient");
    let mut sc = reference();
    sc["species"][0]["growth"]["params"]["bb"] = json!(1.0);
    let p = write_json(&dir, "s.json", &sc);
    let strict = run(&["analyze", path_str(&p)]);
    assert_eq!(strict.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("species.0.growth.params.bb"));
    let lenient = run(&["--lenient", "analyze", path_str(&p)]);
    assert_eq!(lenient.status.code(), Some(0));
    let v = stdout_json(&lenient);
    assert!(v["provenance"]["warnings"][0].as_str().unwrap().contains("bb"));
}

#[test]
fn check_reference() {
    let r = scenario("reference.json");
    let o = run(&["check", path_str(&r), "--which", "theorem"]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["result"]["checks"][0]["status"], "yes");
    assert_eq!(run(&["check", path_str(&r), "--which", "wl"]).status.code(), Some(0));
    assert_eq!(run(&["check", path_str(&r), "--which", "bw"]).status.code(), Some(0));
}

#[test]
fn check_constant_yield_corollary_on_variable_yield() {
    let dir = scratch("wl-variable");
    let mut sc = reference();
    sc["species"][1]["yield"] = json!({ "family": "linear", "params": { "a": 1.0, "b": 0.1 } });
    let p = write_json(&dir, "s.json", &sc);
    let o = run(&["check", path_str(&p), "--which", "wl"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stdout_json(&o)["result"]["checks"][0]["status"], "inapplicable");
}

#[test]
fn check_failing_hypotheses_exit_one() {
    let dir = scratch("check-no");
    let mut sc = haldane_first();
    sc["s0"] = json!(8.0);
    let p = write_json(&dir, "s.json", &sc);
    let o = run(&["check", path_str(&p), "--which", "theorem"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout_json(&o)["result"]["checks"][0]["status"], "no");
}

#[test]
fn simulate_reference_with_lyapunov() {
    let dir = scratch("sim-ref");
    let csv = dir.join("traj.csv");
    let o = run(&["simulate", path_str(&scenario("reference.json")), "--lyapunov", "--csv", path_str(&csv)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let r = &v["result"];
    assert_eq!(r["convergence"]["equilibrium"], json!({ "kind": "lower", "species": 0 }));
    assert_eq!(r["matches_prediction"], true);
    assert_eq!(r["lyapunov"]["nonincreasing"], true);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,S,x_1,x_2,x_3,V,Vdot");
    let vs: Vec<f64> = lines.filter_map(|l| l.split(',').nth(5).and_then(|c| c.parse().ok())).collect();
    assert!(vs.len() > 3000);
    assert!(vs.windows(2).all(|w| w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs())));
}

#[test]
fn simulate_washout() {
    let dir = scratch("sim-washout");
    let mut sc = reference();
    sc["s0"] = json!(0.9);
    sc["initial"]["s"] = json!(0.9);
    let p = write_json(&dir, "s.json", &sc);
    let o = run(&["simulate", path_str(&p), "--t-end", "600"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["result"]["convergence"]["equilibrium"]["kind"], "washout");
}

#[test]
fn simulate_cycling_reports_not_converged() {
    let o = run(&["simulate", path_str(&scenario("cycling.json")), "--t-end", "1000"]);
    assert_eq!(o.status.code(), Some(4));
    let c = &stdout_json(&o)["result"]["convergence"];
    assert_eq!(c["status"], "not_converged");
    assert_eq!(c["oscillating"], true);
}

#[test]
fn simulate_lyapunov_needs_theorem() {
    let o = run(&["simulate", path_str(&scenario("cycling.json")), "--lyapunov"]);
    assert_eq!(o.status.code(), Some(3));
}

fn sweep_points(dir: &Path) -> Vec<Value> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    v["result"]["points"].as_array().unwrap().clone()
}

#[test]
fn sweep_feed_crosses_upper_breakeven() {
    let dir = scratch("sweep-s0");
    let t = write_json(&dir, "t.json", &haldane_first());
    let out = dir.join("out");
    let o = run(&["sweep", path_str(&t), path_str(&out), "--vary", "s0=2:10:5"]);
    assert_eq!(o.status.code(), Some(0));
    let pts = sweep_points(&out);
    let window: Vec<bool> = pts.iter().map(|p| p["window_ok"].as_bool().unwrap()).collect();
    // μ = 4 + 2√2 ≈ 6.83 sits between the third and fourth grid values.
    assert_eq!(window, [true, true, true, false, false]);
    assert!(pts.iter().all(|p| p["ordering_ok"] == true));
}

#[test]
fn sweep_single_species_removal() {
    let dir = scratch("sweep-one");
    let sc = json!({
        "version": 1, "s0": 4.0, "d": 1.0,
        "species": [monod("m", 2.0, 1.0, json!({ "family": "linear", "params": { "a": 1.0, "b": 0.2 } }), 1.0)],
        "initial": { "s": 1.0, "x": [0.5] }
    });
    let t = write_json(&dir, "t.json", &sc);
    let out = dir.join("out");
    let o = run(&["sweep", path_str(&t), path_str(&out), "--vary", "species.0.removal=1:2.5:4", "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let pts = sweep_points(&out);
    let theorem: Vec<bool> = pts.iter().map(|p| p["theorem"].as_bool().unwrap()).collect();
    assert_eq!(theorem, [true, true, false, false]);
    let kinds: Vec<&str> = pts.iter().map(|p| p["convergence"]["equilibrium"]["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["lower", "lower", "washout", "washout"]);
}

#[test]
fn sweep_without_axes_is_one_point() {
    let dir = scratch("sweep-empty");
    let out = dir.join("out");
    let o = run(&["sweep", path_str(&scenario("reference.json")), path_str(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let pts = sweep_points(&out);
    assert_eq!(pts.len(), 1);
    assert_eq!(pts[0]["params"], json!([]));
}

#[test]
fn sweep_over_cap_is_refused() {
    let dir = scratch("sweep-cap");
    let out = dir.join("out");
    let o = run(&["sweep", path_str(&scenario("reference.json")), path_str(&out), "--vary", "d=0.5:1:20", "--cap", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("summary.json").exists());
}

fn without_timestamp(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["provenance"]["timestamp"] = Value::Null;
    v
}

#[test]
fn sweep_is_deterministic_across_job_counts() {
    let dir = scratch("sweep-det");
    let r = scenario("reference.json");
    let args = ["--vary", "s0=1.5:4:4", "--vary", "species.1.removal=0.8:1.2:3"];
    let a = dir.join("a");
    let b = dir.join("b");
    let mut one = vec!["sweep", path_str(&r), path_str(&a), "--jobs", "1"];
    one.extend(args);
    let mut four = vec!["sweep", path_str(&r), path_str(&b), "--jobs", "4"];
    four.extend(args);
    assert_eq!(run(&one).status.code(), Some(0));
    assert_eq!(run(&four).status.code(), Some(0));
    assert_eq!(without_timestamp(&a.join("summary.json")), without_timestamp(&b.join("summary.json")));
}

#[test]
fn jobs_environment_variable() {
    let dir = scratch("jobs-env");
    let out = dir.join("out");
    let bad = Command::new(BIN)
        .args(["sweep", path_str(&scenario("reference.json")), path_str(&out)])
        .env("CHEMOSTAT_JOBS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let ok = Command::new(BIN)
        .args(["sweep", path_str(&scenario("reference.json")), path_str(&out), "--vary", "d=0.8:1:3"])
        .env("CHEMOSTAT_JOBS", "3")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(sweep_points(&out).len(), 3);
}

#[test]
fn falsify_zero_budget() {
    let o = run(&["falsify", path_str(&scenario("falsify-theorem.json")), "--budget", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let r = &stdout_json(&o)["result"];
    assert_eq!(r["samples"], json!([]));
    assert_eq!(r["outcomes"]["exclusion_by_first"], 0);
}

#[test]
fn falsify_theorem_region_always_excludes() {
    let o = run(&["falsify", path_str(&scenario("falsify-theorem.json")), "--budget", "40", "--seed", "3", "--jobs", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let r = &stdout_json(&o)["result"];
    assert_eq!(r["hypotheses"]["theorem_holds"], 40);
    assert_eq!(r["outcomes_when_theorem_holds"]["exclusion_by_first"], 40);
}

#[test]
fn falsify_open_region_reports_tallies() {
    let o = run(&["falsify", path_str(&scenario("falsify-open.json")), "--budget", "30", "--seed", "1", "--jobs", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let r = &stdout_json(&o)["result"];
    let counts = r["outcomes"].as_object().unwrap();
    let total: u64 = counts.values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 30);
    for s in r["samples"].as_array().unwrap() {
        assert_eq!(s["theorem"] == true, s["failed_hypotheses"] == json!([]), "{s}");
    }
}

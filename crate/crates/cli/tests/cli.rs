use std::path::Path;
use std::process::{Command, Output};

use latdd_cli::record::check_line;
use serde_json::Value;

/// SHA-256 of the 4^4 free field written in double precision.
const FREE_4444_DOUBLE: &str = "9f85ae9bc50dc6c92ac37e2a9d264abe6e0c932f9e7f03a57a3ebe9cc034dd17";
/// SHA-256 of the 4^4 random field drawn with seed 7, double precision.
const RANDOM_4444_SEED7: &str = "e20efc519eec30d41313d04eb7b3926e85ff4bd3bc77de080eb4868c4e816321";

fn latdd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latdd")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Record lines of a `--json` run, each checked against the envelope.
fn records(o: &Output) -> Vec<Value> {
    stdout(o).lines().map(|l| check_line(l).unwrap_or_else(|e| panic!("{e}: {l}"))).collect()
}

fn json(args: &[&str]) -> (i32, Vec<Value>) {
    let mut a = vec!["--json"];
    a.extend_from_slice(args);
    let o = latdd(&a);
    (o.status.code().unwrap(), records(&o))
}

fn checksum_line(o: &Output) -> String {
    stdout(o).lines().find_map(|l| l.strip_prefix("checksum ").map(str::to_string)).expect("checksum line")
}

/// The free-field file written by hand from the documented layout.
fn free_field_bytes(dims: [u32; 4]) -> Vec<u8> {
    let vol: u32 = dims.iter().product();
    let payload = vol as u64 * 4 * 18 * 8;
    let mut out = b"QPL2".to_vec();
    out.extend_from_slice(&1u32.to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&payload.to_le_bytes());
    for _ in 0..vol * 4 {
        for i in 0..3 {
            for j in 0..3 {
                out.extend_from_slice(&(if i == j { 1.0f64 } else { 0.0 }).to_le_bytes());
                out.extend_from_slice(&0.0f64.to_le_bytes());
            }
        }
    }
    out
}

#[test]
fn generate_writes_documented_free_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("free.qpl2");
    let o = latdd(&["generate", "--dims", "4,4,4,4", "--kind", "free", "-o", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&path).unwrap(), free_field_bytes([4; 4]));
    assert_eq!(checksum_line(&o), FREE_4444_DOUBLE);
}

#[test]
fn generate_random_checksum_is_frozen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.qpl2");
    let o = latdd(&["generate", "--dims", "4,4,4,4", "--kind", "random", "--seed", "7", "-o", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(checksum_line(&o), RANDOM_4444_SEED7);
}

#[test]
fn generate_smoke_and_bad_dims() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.qpl2");
    let p = path.to_str().unwrap();
    let (code, recs) = json(&["generate", "--dims", "8,8,8,8", "--kind", "weak", "--eps", "0.1", "--seed", "1", "-o", p]);
    assert_eq!(code, 0);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["record"], "generate");
    assert_eq!(recs[0]["bytes"], 40 + 4096 * 4 * 18 * 8);
    assert!(Path::new(p).exists());
    let bad = latdd(&["generate", "--dims", "8,0,8,8", "-o", p]);
    assert_eq!(bad.status.code(), Some(2));
    let garbled = latdd(&["generate", "--dims", "8,8", "-o", p]);
    assert_eq!(garbled.status.code(), Some(2));
}

fn history(r: &Value) -> Vec<f64> {
    r["residual_history"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
}

#[test]
fn solve_preconditioned_beats_plain_by_three() {
    let (code, recs) = json(&["solve", "--compare"]);
    assert_eq!(code, 0);
    let r = &recs[0];
    assert_eq!(r["record"], "solve");
    assert_eq!(r["converged"], true);
    let dd = r["iterations"].as_u64().unwrap();
    let plain = r["unpreconditioned_iterations"].as_u64().unwrap();
    assert!(3 * dd <= plain, "{dd} vs {plain}");
    assert_eq!(r["flops_per_site"], 1848);
    assert!(r["operator_flops"].as_f64().unwrap() > 0.0);
}

#[test]
fn half_storage_changes_iterations_by_at_most_one() {
    let (_, single) = json(&["solve"]);
    let (code, half) = json(&["solve", "--half-domain-storage"]);
    assert_eq!(code, 0);
    assert_eq!(half[0]["half_storage"], true);
    let (a, b) = (single[0]["iterations"].as_i64().unwrap(), half[0]["iterations"].as_i64().unwrap());
    assert!((a - b).abs() <= 1, "{a} vs {b}");
}

#[test]
fn two_ranks_reproduce_one_rank_history() {
    let (_, one) = json(&["solve", "--ranks", "1"]);
    let (code, two) = json(&["solve", "--ranks", "2"]);
    assert_eq!(code, 0);
    assert_eq!(two[0]["rank_grid"], serde_json::json!([1, 1, 1, 2]));
    let (h1, h2) = (history(&one[0]), history(&two[0]));
    assert_eq!(h1.len(), h2.len());
    for (a, b) in h1.iter().zip(&h2) {
        assert!((a - b).abs() <= 1e-5 * a.abs(), "{a} vs {b}");
    }
    assert!(two[0]["messages"]["schwarz_messages"].as_u64().unwrap() > 0);
}

#[test]
fn non_convergence_exits_three() {
    let (code, recs) = json(&["solve", "--no-precond", "--max-iter", "2"]);
    assert_eq!(code, 3);
    assert_eq!(recs[0]["converged"], false);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[lattice]\ndims = [4, 4, 4, 8]\ndomain = [4, 4, 4, 4]\n[operator]\nmass = 0.5\n[schwarz]\nn_schwarz = 4\n").unwrap();
    let (code, recs) = json(&["solve", "--config", cfg.to_str().unwrap(), "--mass", "0.3"]);
    assert_eq!(code, 0);
    assert_eq!(recs[0]["dims"], serde_json::json!([4, 4, 4, 8]));
    assert_eq!(recs[0]["mass"], 0.3);
    assert_eq!(recs[0]["n_schwarz"], 4);

    let log = dir.path().join("from-config.jsonl");
    std::fs::write(&cfg, format!("[lattice]\ndims = [4, 4, 4, 8]\n[output]\nrecord = {:?}\n", log.to_str().unwrap())).unwrap();
    assert_eq!(latdd(&["solve", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
    let line = std::fs::read_to_string(&log).unwrap();
    assert_eq!(check_line(line.trim_end()).unwrap()["record"], "solve");

    std::fs::write(&cfg, "[lattice]\ndims = [4, 4, 4, 8]\ndomain = [3, 4, 4, 4]\n").unwrap();
    assert_eq!(latdd(&["solve", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&cfg, "[lattice]\nsize = 4\n").unwrap();
    assert_eq!(latdd(&["solve", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(latdd(&["solve", "--ranks", "3"]).status.code(), Some(2));
}

#[test]
fn solve_reads_generated_gauge_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.qpl2");
    let p = path.to_str().unwrap();
    latdd(&["generate", "--dims", "4,4,4,8", "--seed", "3", "-o", p]);
    let (code, from_file) = json(&["solve", "--dims", "4,4,4,8", "--gauge", p]);
    assert_eq!(code, 0);
    let (_, generated) = json(&["solve", "--dims", "4,4,4,8", "--gauge-seed", "3"]);
    assert_eq!(from_file[0]["gauge_checksum"], generated[0]["gauge_checksum"]);
    assert_eq!(history(&from_file[0]), history(&generated[0]));
    assert_eq!(latdd(&["solve", "--gauge", p]).status.code(), Some(2));
}

#[test]
fn record_file_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("out.jsonl");
    let r = rec.to_str().unwrap();
    for _ in 0..2 {
        assert_eq!(latdd(&["solve", "--dims", "4,4,4,8", "--record", r]).status.code(), Some(0));
    }
    let text = std::fs::read_to_string(&rec).unwrap();
    let mut lines: Vec<Value> = text.lines().map(|l| check_line(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    for l in &mut lines {
        l.as_object_mut().unwrap().remove("timing");
    }
    assert_eq!(lines[0], lines[1]);
}

#[test]
fn plan_reports_reference_partition() {
    let (code, recs) = json(&["plan", "--nonuniform", "t"]);
    assert_eq!(code, 0);
    let kinds: Vec<&str> = recs.iter().map(|r| r["record"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["plan", "plan", "cost"]);
    assert_eq!(recs[0]["rank_count"], 1024);
    assert_eq!(recs[1]["rank_count"], 640);
    let (la, lb) = (recs[2]["load_a"].as_f64().unwrap(), recs[2]["load_b"].as_f64().unwrap());
    assert!((lb - 0.533).abs() < 1e-3 && (la - 0.853).abs() < 1e-3, "{la} {lb}");
    let text = stdout(&latdd(&["plan", "--nonuniform", "t"]));
    assert!(text.contains("1024 -> 640"));
    assert!(text.contains("53.3% -> 85.3%"));
}

#[test]
fn plan_single_rank_and_small_oracle() {
    let (code, recs) = json(&["plan", "--global", "8,8,8,8", "--domain", "4,4,4,4", "--grid", "1,1,1,1"]);
    assert_eq!(code, 0);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["rank_count"], 1);
    // 16 domains, 8 of each color, on 60 cores: one round at 8/60
    assert!((recs[0]["average_load"].as_f64().unwrap() - 8.0 / 60.0).abs() < 1e-12);
    // 32 domains per rank, 16 of each color, 8 cores: two full rounds
    let (_, recs) = json(&[
        "plan", "--global", "8,8,8,48", "--domain", "4,4,4,4", "--grid", "1,1,1,3", "--nc", "8", "--nonuniform", "t",
    ]);
    let p = &recs[1];
    assert!((p["average_load"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(latdd(&["plan", "--global", "8,8,8,8", "--domain", "4,4,4,4", "--grid", "1,1,1,3"]).status.code(), Some(2));
}

#[test]
fn schedule_t_z_validates_and_naive_does_not() {
    let (code, recs) = json(&["schedule", "--split", "t,z"]);
    assert_eq!(code, 0);
    assert_eq!(recs[0]["record"], "schedule");
    assert_eq!(recs[1]["count"], 0);
    let tl = &recs[2];
    assert!(tl["steady_idle"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap() == 0.0));
    let (_, naive) = json(&["schedule", "--split", "t,z", "--naive"]);
    assert!(naive[1]["count"].as_u64().unwrap() > 0);
    let windows = naive[2]["windows"].as_array().unwrap();
    assert_eq!(windows.last().unwrap().as_f64().unwrap(), 0.0);
    assert!(naive[2]["steady_idle"].as_array().unwrap().iter().any(|v| v.as_f64().unwrap() > 0.0));
}

#[test]
fn bandwidth_sweep_crosses_at_threshold() {
    let (_, recs) = json(&["schedule", "--split", "t,z", "--sweep", "9"]);
    let threshold = recs[2]["threshold_bandwidth"].as_f64().unwrap();
    let sweep: Vec<&Value> = recs.iter().filter(|r| r["record"] == "sweep").collect();
    assert_eq!(sweep.len(), 9);
    for s in sweep {
        let bw = s["bandwidth"].as_f64().unwrap();
        let hidden = s["hidden"].as_bool().unwrap();
        assert_eq!(hidden, bw >= threshold * (1.0 - 1e-12), "bandwidth {bw} vs threshold {threshold}");
    }
}

#[test]
fn perfmodel_lines() {
    let text = stdout(&latdd(&["perfmodel"]));
    for needle in ["1208.3", "82.0%", "56.0%", "22.2 Gflop/s/core", "456 kB", "312 kB"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
    let (_, recs) = json(&["perfmodel", "--fma-fraction", "1"]);
    assert!((recs[0]["fma_limit"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let (_, recs) = json(&["perfmodel", "--domain", "4,4,4,4"]);
    assert!((recs[0]["working_set_single_kb"].as_f64().unwrap() - 228.0).abs() < 1e-9);
    assert_eq!(latdd(&["perfmodel", "--fma-fraction", "1.5"]).status.code(), Some(2));
}

#[test]
fn oracle_passes() {
    let o = latdd(&["oracle"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(!text.contains("FAIL"));
    let (code, recs) = json(&["oracle", "--suite", "layout,dense"]);
    assert_eq!(code, 0);
    assert!(recs.iter().all(|r| r["pass"] == true));
    assert_eq!(latdd(&["oracle", "--suite", "nope"]).status.code(), Some(2));
}

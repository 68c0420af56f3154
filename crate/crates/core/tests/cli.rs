use std::fs;
use std::path::Path;
use std::process::Command;

use cgpt_eit::cgpt::CgptMatrix;

fn run(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_cgpt-eit")).args(args).output().unwrap().status.code().unwrap()
}

fn read_cgpt(path: &Path) -> CgptMatrix {
    CgptMatrix::read_json(fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn forward_on_unit_conductivity_gives_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["forward", "--sigma", r#"{"kind":"constant","value":1.0}"#, "--level", "4", "--order", "2", "--output-dir", out]), 0);
    let m = read_cgpt(&dir.path().join("cgpt.json"));
    assert_eq!(m.order(), 2);
    // zero up to the O(h²) error of the discrete NtD map (0.012 at level 4, 7.6e-4 at level 6)
    assert!(m.frobenius() < 2e-2, "{}", m.frobenius());
    assert!(dir.path().join("resolved_config.json").exists());
}

#[test]
fn msr_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let common = ["--sigma", "benchmark1", "--level", "4", "--order", "3", "--sensors", "32", "--radius", "3.0"];
    let mut sim = vec!["msr-sim", "--output-dir", out];
    sim.extend(common);
    assert_eq!(run(&sim), 0);
    let msr = dir.path().join("msr.csv");
    let mut rec = vec!["msr-recover", "--output-dir", out, "--input", msr.to_str().unwrap()];
    rec.extend(common);
    assert_eq!(run(&rec), 0);
    let source = read_cgpt(&dir.path().join("source_cgpt.json"));
    let recovered = read_cgpt(&dir.path().join("recovered_cgpt.json"));
    let rel = recovered.sub(&source).unwrap().frobenius() / source.frobenius();
    assert!(rel < 1e-9, "{rel}");
}

#[test]
fn identical_configs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |dir: &Path| {
        vec![
            "end-to-end".to_string(),
            "--sigma".into(),
            "benchmark1".into(),
            "--level".into(),
            "4".into(),
            "--order".into(),
            "2".into(),
            "--final-level".into(),
            "3".into(),
            "--max-iterations".into(),
            "3".into(),
            "--noise-level".into(),
            "1e-4".into(),
            "--seed".into(),
            "5".into(),
            "--output-dir".into(),
            dir.to_str().unwrap().to_string(),
        ]
    };
    let run_owned = |v: Vec<String>| run(&v.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(run_owned(args(a.path())), 0);
    assert_eq!(run_owned(args(b.path())), 0);
    for name in ["history.csv", "field.csv", "summary.json", "targets.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let history = fs::read_to_string(a.path().join("history.csv")).unwrap();
    assert!(history.starts_with("k,stage_order,eps_M,eps_sigma,step,functional\n"));

    // rerunning from the echoed config reproduces the outputs
    let c = tempfile::tempdir().unwrap();
    let resolved = a.path().join("resolved_config.json");
    let c_out = c.path().to_str().unwrap();
    assert_eq!(run(&["end-to-end", "--config", resolved.to_str().unwrap(), "--output-dir", c_out]), 0);
    assert_eq!(fs::read(a.path().join("history.csv")).unwrap(), fs::read(c.path().join("history.csv")).unwrap());

    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["partial"], false);
    assert_eq!(summary["stages"].as_array().unwrap().len(), 2);

    // invert the written targets directly
    let d = tempfile::tempdir().unwrap();
    let targets = a.path().join("targets.json");
    let d_out = d.path().to_str().unwrap();
    assert_eq!(
        run(&["invert", "--input", targets.to_str().unwrap(), "--order", "2", "--final-level", "3", "--max-iterations", "2", "--output-dir", d_out]),
        0
    );
    assert!(d.path().join("field.csv").exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["forward", "--sigma", "benchmark1", "--order", "0", "--output-dir", out]), 2);
    assert_eq!(run(&["forward", "--output-dir", out]), 2);
    assert_eq!(run(&["invert", "--input", "/nonexistent/targets.json", "--output-dir", out]), 2);
    assert_eq!(run(&["teleport"]), 2);
}

use std::fs;
use std::path::Path;

use inflab::cli::main_with_args;

fn run(out: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["inflab".to_string(), "--out-dir".into(), out.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    main_with_args(argv)
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn couple_output_is_byte_identical_for_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("couple.json");
    fs::write(
        &cfg,
        r#"{"problem": {"kind": "gaussian_linear", "kappa": 2.0, "l": [0.5, 0.0]}, "n_paths": 50, "dt": 0.01, "horizon": 1.0, "seed": 7}"#,
    )
    .unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = cfg.display().to_string();
    assert_eq!(run(&a, &["couple", "--config", &cfg]), 0);
    assert_eq!(run(&b, &["couple", "--config", &cfg]), 0);
    assert_eq!(read_all(&a), read_all(&b));
}

#[test]
fn gaussian_output_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&a, &["gaussian", "--alpha", "0.45"]), 0);
    assert_eq!(run(&b, &["gaussian", "--alpha", "0.45"]), 0);
    let files = read_all(&a);
    assert!(files.iter().any(|(n, _)| n == "heatmap_KL.csv"));
    assert!(files.iter().any(|(n, _)| n == "manifest.json"));
    assert_eq!(files, read_all(&b));
}

#[test]
fn malformed_configs_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"alpha": 0.45, "bogus": 1}"#).unwrap();
    let bad = bad.display().to_string();
    let out = tmp.path().join("o");
    assert_eq!(run(&out, &["iterate", "--config", &bad]), 2);
    assert_eq!(run(&out, &["gaussian", "--config", &bad]), 2);
    assert_eq!(run(&out, &["bounds", "--config", "/nonexistent/config.json"]), 2);
    assert_eq!(run(&out, &["bounds", "--kappa", "0.4", "--x", "0", "--xt", "1"]), 2);
}

#[test]
fn bounds_from_flags_and_from_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("flags");
    assert_eq!(run(&out, &["bounds", "--kappaA", "4", "--kappaB", "1", "--LA", "1"]), 0);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("bound.json")).unwrap()).unwrap();
    assert!((v["value"].as_f64().unwrap() - 1.0 / 12f64.sqrt()).abs() < 1e-12);
    assert_eq!(v["regime"], "aniso_case2");

    let cfg = tmp.path().join("generic.json");
    fs::write(&cfg, r#"{"kind": "generic", "k": [[4.0, 0.0], [0.0, 1.0]], "lip": 1.0, "projection": [[1.0, 0.0]]}"#)
        .unwrap();
    let out = tmp.path().join("cfg");
    assert_eq!(run(&out, &["bounds", "--config", &cfg.display().to_string()]), 0);
    let w: serde_json::Value = serde_json::from_slice(&fs::read(out.join("bound.json")).unwrap()).unwrap();
    assert!((w["value"].as_f64().unwrap() - v["value"].as_f64().unwrap()).abs() < 1e-9);
}

mod support;

use std::fs;

use support::*;

#[test]
fn version_lists_tolerances() {
    let out = run(&["--version"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for key in ["uniformity_tol=0.05", "mean_tol=0.0001", "max_iter=200", "p_cut_grid", "rho="] {
        assert!(text.contains(key), "missing {key} in {text}");
    }
}

#[test]
fn validation_errors_exit_one() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["distance", "--no-such-flag"])), 1);
    assert_eq!(code(&run(&["distance", "missing.obj", "missing.lmk", "missing.obj", "missing.lmk"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path(), "null", 2, 0);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "search",
        "--manifest",
        manifest.to_str().unwrap(),
        "--rho",
        "0.5",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "rho outside the allowed range");
}

#[test]
fn gen_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_dataset(a.path(), "mixed", 2, 5);
    small_dataset(b.path(), "mixed", 2, 5);
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 4 * 2 + 2);
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
    let spec = load_json(&a.path().join("spec.json"));
    assert_eq!(check_schema("synth_spec", &spec), Vec::<String>::new());
}

#[test]
fn param_map_distance_and_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path(), "mixed", 2, 1);
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let (a, la, b, lb) = (p("c0_s000.obj"), p("c0_s000.lmk"), p("c1_s001.obj"), p("c1_s001.lmk"));

    let out = run(&["param", &a, &la, "--out-dir", &p("param")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(check_schema("param", &load_json(&dir.path().join("param/param.json"))), Vec::<String>::new());

    let out = run(&["distance", &a, &la, &a, &la]);
    assert_eq!(code(&out), 0);
    let d: f64 = stdout(&out).trim().parse().unwrap();
    assert!(d < 1e-3, "self distance {d}");

    let out = run(&["map", &a, &la, &b, &lb, "--out", &p("map.json"), "--mapped-obj", &p("mapped.obj")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let map = load_json(&dir.path().join("map.json"));
    assert_eq!(check_schema("surface_map", &map), Vec::<String>::new());
    assert_eq!(map["converged"], true);
    assert!(dir.path().join("mapped.obj").exists());

    let out = run(&["plotdata", "--map", &p("map.json"), "--mesh", &a, "--bins", "20", "--out-dir", &p("plots")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let hist = load_json(&dir.path().join("plots/mu_histogram.json"));
    assert_eq!(check_schema("mu_histogram", &hist), Vec::<String>::new());
    let total: u64 = hist["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total as usize, map["mu"]["mu"].as_array().unwrap().len());
    let curv = fs::read_to_string(dir.path().join("plots/curvature.csv")).unwrap();
    assert!(curv.starts_with("vertex,x,y,z,mean_curvature,gaussian_curvature"));
}

#[test]
fn non_convergence_exits_two_with_flagged_json() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path(), "mixed", 2, 1);
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let out = run(&[
        "map",
        &p("c0_s000.obj"),
        &p("c0_s000.lmk"),
        &p("c1_s000.obj"),
        &p("c1_s000.lmk"),
        "--max-iter",
        "1",
        "--out",
        &p("map.json"),
    ]);
    assert_eq!(code(&out), 2);
    let map = load_json(&dir.path().join("map.json"));
    assert_eq!(map["converged"], false);
    assert_eq!(check_schema("surface_map", &map), Vec::<String>::new());
}

#[test]
fn classify_and_search_reports_validate() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(&dir.path().join("data"), "mixed", 3, 2);
    let m = manifest.to_str().unwrap();
    let out_c = dir.path().join("classify");
    let out = run(&[
        "classify", "--manifest", m, "--alpha", "1", "--gamma", "1", "--pcut", "1", "--out-dir",
        out_c.to_str().unwrap(), "--threads", "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = load_json(&out_c.join("report.json"));
    assert_eq!(check_schema("report", &report), Vec::<String>::new());
    assert!((report["params"]["alpha"].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    for f in ["features.csv", "mask.csv", "pvalues.csv"] {
        assert!(out_c.join(f).exists(), "{f}");
    }

    let out_s = dir.path().join("search");
    let out = run(&[
        "search", "--manifest", m, "--rho", "0.0942477796076938", "--pcut-grid", "1,0.1", "--seed", "3", "--out-dir",
        out_s.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = load_json(&out_s.join("report.json"));
    assert_eq!(check_schema("report", &report), Vec::<String>::new());
    for f in ["mean.obj", "mean.lmk", "distances.csv", "features.csv", "mask.csv", "pvalues.csv", "grid.csv"] {
        assert!(out_s.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_dir(out_s.join("maps")).unwrap().count(), 6);
}

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use mpb_core::runner::{self, Format, Manifest, RunStatus};

fn files_under(root: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

fn shipped(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)).unwrap()
}

#[test]
fn full_scenario_emits_every_stage() {
    let cfg = runner::validate_config(&shipped("flat_band.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = runner::run_scenario(&cfg, dir.path()).unwrap();
    assert_eq!(manifest.status, RunStatus::Complete);

    let listed: BTreeSet<String> = manifest.artifacts.iter().map(|a| a.path.clone()).collect();
    let mut on_disk = files_under(dir.path());
    assert!(on_disk.remove(runner::MANIFEST));
    assert_eq!(listed, on_disk);

    let (h, rows) = csv_rows(&dir.path().join("poles.csv"));
    assert_eq!(h, ["n", "omega", "gamma", "t_R"]);
    assert_eq!(rows.len(), cfg.settings.ladder);
    // t_R = hbar / gamma on every row
    for r in &rows {
        let (g, tr): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!((g * tr - cfg.model.hbar).abs() < 1e-12);
    }

    let (h, rows) = csv_rows(&dir.path().join("timescales.csv"));
    assert_eq!(h[..3], ["t_R", "gamma_eff", "t_D"]);
    let td_over_tr: f64 = rows[0][3].parse().unwrap();
    assert!(td_over_tr > 1.0, "slow modes dominate after t_R: {td_over_tr}");

    for k in 0..cfg.settings.wigner_times.len() {
        let path = dir.path().join(format!("wigner_{k}.csv"));
        let text = fs::read_to_string(&path).unwrap();
        let meta = text.lines().next().unwrap();
        assert!(meta.starts_with("# n_x=96,n_p=96"), "{meta}");
        let (h, rows) = csv_rows(&path);
        assert_eq!(h, ["x", "p", "value"]);
        assert_eq!(rows.len(), 96 * 96);
        // state symbol integrates to one
        let xs: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
        let ps: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
        let (dx, dp) = (xs[96] - xs[0], ps[1] - ps[0]);
        let total: f64 = rows.iter().map(|r| r[2].parse::<f64>().unwrap()).sum::<f64>() * dx * dp;
        assert!((total - 1.0).abs() < 1e-6, "wigner_{k}: {total}");
    }

    let (h, rows) = csv_rows(&dir.path().join("trajectory.csv"));
    assert_eq!(h, ["t", "Pi_bar", "Phi_bar", "equilibrium_flag"]);
    assert_eq!(rows.len(), cfg.trajectory.outputs + 1);

    let eq: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("equilibrium.json")).unwrap()).unwrap();
    assert!(eq["rows"][0]["t_R"].as_f64().unwrap() > 0.0);

    // masks decode to the summary volumes
    let (_, summary) = csv_rows(&dir.path().join("domain_summary.csv"));
    let (h, runs) = csv_rows(&dir.path().join("domains.csv"));
    assert_eq!(h, ["band", "row", "start", "length"]);
    let n = (cfg.settings.domain_points * cfg.settings.domain_points) as f64;
    for (b, row) in summary.iter().enumerate() {
        let cells: usize = runs.iter().filter(|r| r[0] == b.to_string()).map(|r| r[3].parse::<usize>().unwrap()).sum();
        let vol: f64 = row[1].parse().unwrap();
        assert!((cells as f64 / n - vol).abs() < 1e-12);
    }
}

#[test]
fn json_format_mirrors_csv_fields() {
    let mut cfg = runner::validate_config(&shipped("coupling_sweep.toml")).unwrap();
    cfg.sweep.clear();
    let csv_dir = tempfile::tempdir().unwrap();
    runner::run_scenario(&cfg, csv_dir.path()).unwrap();
    cfg.format = Format::Json;
    let json_dir = tempfile::tempdir().unwrap();
    runner::run_scenario(&cfg, json_dir.path()).unwrap();
    let (h, rows) = csv_rows(&csv_dir.path().join("poles.csv"));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(json_dir.path().join("poles.json")).unwrap()).unwrap();
    let cols: Vec<String> =
        doc["columns"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(cols, h);
    for (r, j) in rows.iter().zip(doc["rows"].as_array().unwrap()) {
        for (k, name) in h.iter().enumerate() {
            let a: f64 = r[k].parse().unwrap();
            assert_eq!(a, j[name].as_f64().unwrap(), "{name}");
        }
    }
}

#[test]
fn sweep_manifest_records_parameters() {
    let cfg = runner::validate_config(&shipped("coupling_sweep.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = runner::run_scenario(&cfg, dir.path()).unwrap();
    let per_point = 3;
    assert_eq!(m.artifacts.len(), 3 * per_point);
    let on_disk: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join(runner::MANIFEST)).unwrap()).unwrap();
    let gs: BTreeSet<String> = on_disk.artifacts.iter().map(|a| format!("{}", a.parameters["model.g"])).collect();
    assert_eq!(gs.len(), 3);
    // the survival table tracks each coupling's own rate
    for (j, g) in [0.02f64, 0.05, 0.1].iter().enumerate() {
        let (_, rows) = csv_rows(&dir.path().join(format!("sweep0_{j}/survival.csv")));
        let last = &rows[rows.len() - 1];
        let t: f64 = last[0].parse().unwrap();
        let (re, im): (f64, f64) = (last[1].parse().unwrap(), last[2].parse().unwrap());
        let rate = -(re * re + im * im).ln() / t;
        let golden = 2.0 * std::f64::consts::PI * g * g;
        assert!((rate - golden).abs() / golden < 0.05, "g = {g}: {rate} vs {golden}");
    }
}

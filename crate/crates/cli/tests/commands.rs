use std::path::{Path, PathBuf};
use std::process::Command;

use graphred::commands::{self, Context, TunedEntry};
use graphred::config::{GridAxis, RunConfig};
use graphred::io;
use graphred_core::tune::Method;
use graphred_core::train::{GradientMethod, TrainMode};
use serde_json::Value;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.n_nodes = 40;
    cfg.data.n_train = 4;
    cfg.data.n_test = 2;
    cfg.data.sigmas = vec![10.0, 20.0];
    cfg.grid.alpha = GridAxis::Log { min: 1e-2, max: 1e2, points: 5 };
    cfg.grid.rho = GridAxis::Log { min: 1e-1, max: 1e1, points: 3 };
    cfg.grid.alpha_red = GridAxis::Log { min: 1e-2, max: 1e2, points: 5 };
    cfg
}

fn ctx(cfg: &RunConfig, out: &Path, dataset: Option<&Path>, tuned: Option<&Path>) -> Context {
    Context {
        cfg: cfg.clone(),
        seed: 7,
        out: out.to_path_buf(),
        dataset: dataset.map(Path::to_path_buf),
        tuned: tuned.map(Path::to_path_buf),
    }
}

fn generated(cfg: &RunConfig, root: &Path) -> PathBuf {
    let data = root.join("data");
    commands::generate(&ctx(cfg, &data, None, None)).unwrap();
    data
}

#[test]
fn default_generate_writes_ten_train_and_five_test_signals_per_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(&RunConfig::default(), dir.path());
    let m: Value = io::read_json(&data.join("manifest.json")).unwrap();
    let samples = m["samples"].as_array().unwrap();
    assert_eq!(samples.iter().filter(|s| s["split"] == "train").count(), 10);
    assert_eq!(samples.iter().filter(|s| s["split"] == "test").count(), 5);
    for s in samples {
        let d = data.join(s["dir"].as_str().unwrap());
        assert!(d.join("graph.edges").exists() && d.join("clean.csv").exists());
        for sigma in [10, 15, 20, 25, 30] {
            assert!(d.join(format!("observed_sigma{sigma}.csv")).exists());
        }
    }
}

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    k.sort();
    k
}

#[test]
fn seed_override_changes_signals_not_manifest_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    commands::generate(&ctx(&cfg, &a, None, None)).unwrap();
    let mut c = ctx(&cfg, &b, None, None);
    c.seed = 8;
    commands::generate(&c).unwrap();
    let ma: Value = io::read_json(&a.join("manifest.json")).unwrap();
    let mb: Value = io::read_json(&b.join("manifest.json")).unwrap();
    assert_eq!(keys(&ma), keys(&mb));
    assert_eq!(keys(&ma["synthetic"]), keys(&mb["synthetic"]));
    assert_ne!(ma["seed"], mb["seed"]);
    let f = "train/sample_000/observed_sigma10.csv";
    assert_ne!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
}

#[test]
fn single_point_grid_returns_that_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    let data = generated(&cfg, dir.path());
    cfg.grid.alpha = GridAxis::List(vec![0.37]);
    cfg.grid.rho = GridAxis::List(vec![2.5]);
    cfg.grid.alpha_red = GridAxis::List(vec![4.0]);
    let out = dir.path().join("tune");
    let entries = commands::tune(&ctx(&cfg, &out, Some(&data), None)).unwrap();
    assert_eq!(entries.len(), 8);
    for e in &entries {
        assert_eq!(e.alpha_denoiser, 0.37);
        assert_eq!(e.rho.is_some(), e.method.denoiser_kind() == graphred_core::DenoiserKind::Pnp);
        if let Some(r) = e.rho {
            assert_eq!(r, 2.5);
        }
        assert_eq!(e.alpha_red, e.method.is_red().then_some(4.0));
    }
}

#[test]
fn tuned_file_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    let data = generated(&cfg, dir.path());
    cfg.sigmas = vec![10.0];
    let out = dir.path().join("tune");
    commands::tune(&ctx(&cfg, &out, Some(&data), None)).unwrap();
    let v: Value = io::read_json(&out.join("tuned.json")).unwrap();
    for e in v.as_array().unwrap() {
        let method: Method = e["method"].as_str().unwrap().parse().unwrap();
        let mut expected = vec!["alpha_denoiser", "method", "sigma", "train_rmse"];
        if method.denoiser_kind() == graphred_core::DenoiserKind::Pnp {
            expected.push("rho");
        }
        if method.is_red() {
            expected.push("alpha_red");
        }
        expected.sort();
        assert_eq!(keys(e), expected);
        assert!(e["train_rmse"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn coarse_grid_brackets_the_fine_sweep_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    let data = generated(&cfg, dir.path());
    cfg.methods = vec![Method::Lr];
    cfg.sigmas = vec![20.0];
    cfg.grid.alpha = GridAxis::Log { min: 1e-3, max: 1e3, points: 601 };
    let fine = commands::tune(&ctx(&cfg, &dir.path().join("fine"), Some(&data), None)).unwrap()[0];
    cfg.grid.alpha = GridAxis::Log { min: 1e-3, max: 1e3, points: 20 };
    let coarse = commands::tune(&ctx(&cfg, &dir.path().join("coarse"), Some(&data), None)).unwrap()[0];
    let grid = graphred_core::tune::log_grid(1e-3, 1e3, 20).unwrap();
    let hi = grid.iter().position(|&g| g >= fine.alpha_denoiser).unwrap();
    let bracket = [grid[hi.saturating_sub(1)], grid[hi]];
    assert!(bracket.contains(&coarse.alpha_denoiser), "{coarse:?} vs fine {fine:?}");
    assert!(coarse.train_rmse >= fine.train_rmse - 1e-12);
}

#[test]
fn denoise_without_params_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let data = generated(&cfg, dir.path());
    let e = commands::denoise(&ctx(&cfg, &dir.path().join("d"), Some(&data), None)).unwrap_err();
    assert_eq!(e.exit_code(), 2);

    let tuned = dir.path().join("t.json");
    let only_lr = [TunedEntry {
        method: Method::Lr,
        sigma: 10.0,
        alpha_denoiser: 1.0,
        rho: None,
        alpha_red: None,
        train_rmse: 1.0,
    }];
    io::write_json(&tuned, &only_lr).unwrap();
    let e = commands::denoise(&ctx(&cfg, &dir.path().join("d"), Some(&data), Some(&tuned))).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn clean_input_with_vanishing_alpha_gives_zero_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.data.sigmas = vec![0.0];
    let data = generated(&cfg, dir.path());
    cfg.grid.alpha = GridAxis::List(vec![1e-9]);
    cfg.grid.rho = GridAxis::List(vec![1.0]);
    cfg.grid.alpha_red = GridAxis::List(vec![1e-9]);
    let t = dir.path().join("tune");
    commands::tune(&ctx(&cfg, &t, Some(&data), None)).unwrap();
    let report = commands::denoise(&ctx(&cfg, &dir.path().join("d"), Some(&data), Some(&t.join("tuned.json")))).unwrap();
    assert_eq!(report.results.len(), 5);
    for r in &report.results {
        assert!(r.mean_rmse < 1e-6, "{} {}", r.method, r.mean_rmse);
    }
}

fn validate_metrics(path: &Path) {
    let schema: Value = io::read_json(&repo_root().join("schemas/metrics.schema.json")).unwrap();
    let metrics: Value = io::read_json(path).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&metrics).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    for r in metrics["results"].as_array().unwrap() {
        let x = r["mean_rmse"].as_f64().unwrap();
        assert!(x.is_finite() && x >= 0.0);
    }
}

#[test]
fn metrics_validate_against_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    let data = generated(&cfg, dir.path());
    let t = dir.path().join("tune");
    commands::tune(&ctx(&cfg, &t, Some(&data), None)).unwrap();
    cfg.denoise.diagnostics = true;
    let out = dir.path().join("d");
    let report = commands::denoise(&ctx(&cfg, &out, Some(&data), Some(&t.join("tuned.json")))).unwrap();
    validate_metrics(&out.join("metrics.json"));
    let red = report.results.iter().find(|r| r.method == "red-lr").unwrap();
    assert!(red.samples.iter().all(|s| s.diagnostics.is_some()));
    assert!(out.join("denoised/red-pnp/test/sample_004/denoised_sigma20.csv").exists());
    let denoised = io::read_signals(&out.join("denoised/lr/test/sample_005/denoised_sigma10.csv")).unwrap();
    assert_eq!(denoised[0].len(), 40);
}

#[test]
fn training_supervised_resume_and_noise2noise_without_clean() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    let data = generated(&cfg, dir.path());
    cfg.sigmas = vec![20.0];
    cfg.train.epochs = 10;
    cfg.train.gradient_method = GradientMethod::AnalyticLinear;

    let first = dir.path().join("first");
    let s = commands::train(&ctx(&cfg, &first, Some(&data), None)).unwrap();
    assert_eq!(s[0].trainable_params, 22);
    assert!(s[0].train_rmse.unwrap() < s[0].flat_train_rmse.unwrap());
    let losses = std::fs::read_to_string(first.join("loss_sigma20.csv")).unwrap();
    assert_eq!(losses.lines().next(), Some("epoch,loss"));
    assert_eq!(losses.lines().count(), 12);

    let mut resume = cfg.clone();
    resume.train.init_params = Some(first.clone());
    resume.train.start_epoch = 10;
    resume.train.epochs = 1;
    let r = commands::train(&ctx(&resume, &dir.path().join("resume"), Some(&data), None)).unwrap();
    let (a, b) = (s[0].final_loss, r[0].initial_loss);
    assert!((a - b).abs() <= 1e-10 * a.abs(), "{a} vs {b}");

    let unsup = dir.path().join("unsup");
    copy_dir(&data, &unsup);
    for e in std::fs::read_dir(unsup.join("train")).unwrap() {
        std::fs::remove_file(e.unwrap().path().join("clean.csv")).unwrap();
    }
    cfg.train.mode = TrainMode::Noise2noise;
    let n = commands::train(&ctx(&cfg, &dir.path().join("n2n"), Some(&unsup), None)).unwrap();
    assert_eq!(n[0].init, "n2n-grid");
    assert!(n[0].train_rmse.is_none() && n[0].final_loss.is_finite());

    cfg.train.mode = TrainMode::Supervised;
    let e = commands::train(&ctx(&cfg, &dir.path().join("sup"), Some(&unsup), None)).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &target);
        } else {
            std::fs::copy(e.path(), target).unwrap();
        }
    }
}

#[test]
fn check_report_has_all_ones_rows_and_lr_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.check.probes = 20;
    cfg.check.max_samples = Some(2);
    cfg.point_cloud.max_points = 120;
    cfg.check.point_clouds = vec![repo_root().join("data/torus.off")];
    let r = commands::check(&ctx(&cfg, dir.path(), None, None)).unwrap();
    assert_eq!(r.rows.iter().filter(|r| r.probe == "all-ones").count(), 6);
    for row in &r.rows {
        if row.denoiser == graphred_core::DenoiserKind::Lr {
            assert!(row.max_homogeneity_deviation <= 1e-12);
            assert!(row.max_passivity <= 1.0 + 1e-12);
        } else {
            assert!(row.max_passivity <= 1.0 + 1e-6);
        }
    }
    assert!(dir.path().join("check.json").exists());
}

#[test]
fn spectrum_csv_contract() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.spectrum.grid_points = Some(11);
    cfg.spectrum.alpha_red = Some(2.0);
    cfg.spectrum.alpha_lr = Some(3.0);
    let (meta, rows) = commands::spectrum(&ctx(&cfg, dir.path(), None, None)).unwrap();
    assert_eq!(rows.len(), 11);
    assert_eq!(meta.alpha_source, "config");
    let text = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "lambda,h_lr,h_red");
    assert_eq!(text.lines().count(), 12);
    assert_eq!(rows.last().unwrap().lambda, meta.lambda_max);
}

#[test]
fn point_cloud_bundle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::parse(&std::fs::read_to_string(repo_root().join("configs/point_cloud.toml")).unwrap()).unwrap();
    cfg.point_cloud.paths = cfg.point_cloud.paths.iter().map(|p| repo_root().join(p)).collect();
    cfg.point_cloud.max_points = 100;
    let data = generated(&cfg, dir.path());
    let ds = graphred::bundle::load(&data).unwrap();
    assert_eq!(ds.samples.len(), 2);
    assert_eq!(ds.manifest.channels, 3);
    let s = &ds.samples[0];
    assert_eq!(s.graph.n_nodes(), 100);
    assert!(s.observed.iter().all(|o| o.graph.is_some() && o.channels.len() == 3));
}

#[test]
fn shipped_configs_parse() {
    let mut n = 0;
    for e in std::fs::read_dir(repo_root().join("configs")).unwrap() {
        let p = e.unwrap().path();
        RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn exit_codes_from_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_graphred");
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "sed = 1\n").unwrap();
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(code(&["--config", bad.to_str().unwrap(), "generate"]), Some(2));
    assert_eq!(code(&["--config", "/nonexistent/config.toml", "generate"]), Some(4));
    let missing = dir.path().join("nope");
    assert_eq!(code(&["tune", "--dataset", missing.to_str().unwrap()]), Some(4));
    assert_eq!(code(&["tune"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
}

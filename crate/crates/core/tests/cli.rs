//! End-to-end tests of the `fewstep` binary surface: file formats, exit
//! codes, and the shipped example configurations.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fewstep::metrics::{frechet_gaussian, SampleSet};
use fewstep::models::GaussianMixture;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fewstep")
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn parse_csv_column(text: &str, col: usize) -> Vec<f64> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn schedule_custom_writes_decreasing_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sched.csv");
    let output = run_in(
        dir.path(),
        &[
            "schedule", "--kind", "custom", "--n", "8", "--p1", "7", "--p2", "1.2", "--stop",
            "3", "--out", out.to_str().unwrap(),
        ],
    );
    assert!(output.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# config: "));
    let sigmas = parse_csv_column(&text, 2);
    assert_eq!(sigmas.len(), 8);
    for w in sigmas.windows(2) {
        assert!(w[1] < w[0], "sigma must strictly decrease: {sigmas:?}");
    }
}

#[test]
fn schedule_karras_two_nodes_are_the_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_in(
        dir.path(),
        &[
            "schedule", "--kind", "karras", "--n", "2", "--sigma-min", "0.002", "--sigma-max",
            "80",
        ],
    );
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let sigmas = parse_csv_column(&text, 2);
    assert_eq!(sigmas.len(), 2);
    assert_eq!(sigmas[0], 80.0);
    assert_eq!(sigmas[1], 0.002);
}

#[test]
fn schedule_degenerate_stop_is_a_clean_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never.csv");
    let output = run_in(
        dir.path(),
        &[
            "schedule", "--kind", "custom", "--n", "8", "--stop", "0", "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(!output.status.success());
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("degenerate stop"), "stderr: {stderr}");
    assert!(!out.exists(), "failed run must not leave partial output");
}

#[test]
fn schedule_compare_lays_two_grids_side_by_side() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_in(
        dir.path(),
        &[
            "schedule", "--kind", "custom", "--n", "8", "--p1", "7", "--p2", "1.2", "--stop",
            "10000", "--compare", "karras",
        ],
    );
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("index,t_a,sigma_a,lambda_a,t_b,sigma_b,lambda_b"));
    let sig_a = parse_csv_column(&text, 2);
    let sig_b = parse_csv_column(&text, 5);
    assert_eq!(sig_a.len(), 8);
    // The stop schedule ends strictly above the full-range grid.
    assert!(sig_a[7] > sig_b[7]);
}

#[test]
fn shipped_custom_config_beats_the_golden_threshold() {
    // 8-step stop schedule + second-order multistep on the shipped
    // two-mode mixture: FD to the true mixture stays under the golden
    // threshold of 0.01 (reference-transport floor is ~4e-5, the measured
    // 8-step value ~2e-3).
    let root = workspace_root();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("samples.json");
    let output = run_in(
        &root,
        &[
            "sample", "--config", "configs/sample_custom8.json", "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let set = SampleSet::load(&out).unwrap();
    assert_eq!(set.vectors.len(), 2000);
    assert_eq!(set.meta.ood_count, 0);
    assert!(set.config.is_some(), "config echo missing");

    let m = GaussianMixture::isotropic(vec![0.5, 0.5], vec![vec![1.2, 0.8], vec![-1.2, -0.8]], 0.16)
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let truth =
        SampleSet::unlabeled((0..2000).map(|_| m.sample_x0(&mut rng)).collect()).unwrap();
    let fd = frechet_gaussian(&set, &truth).unwrap();
    assert!(fd < 0.01, "FD to truth {fd} exceeds the golden threshold");
}

#[test]
fn sample_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{
  "schedule": {"kind": "karras", "n": 8},
  "solver": "dpmpp_2m",
  "model": {"kind": "gmm", "weights": [1.0], "means": [[0.0]], "covariances": [[[1.0]]]},
  "n_samples": 4,
  "seed": 1,
  "n_sample": 4
}"#,
    )
    .unwrap();
    let out = dir.path().join("samples.json");
    let output = run_in(
        dir.path(),
        &["sample", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
    );
    assert!(!output.status.success());
    assert!(!out.exists());
}

#[test]
fn truncation_csv_monotone_in_sigma() {
    let root = workspace_root();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trunc.csv");
    let output = run_in(
        &root,
        &[
            "truncation", "--model", "configs/gmm2.json", "--n", "16", "--m-states", "32",
            "--ref-steps", "100", "--out", out.to_str().unwrap(),
        ],
    );
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let sigmas = parse_csv_column(&text, 0);
    let rmses = parse_csv_column(&text, 1);
    assert_eq!(sigmas.len(), 15);
    for w in sigmas.windows(2) {
        assert!(w[1] < w[0]);
    }
    // Error at the cleanest measured interval dominates the noisiest one.
    assert!(rmses.last().unwrap() > rmses.first().unwrap());
}

#[test]
fn convergence_report_has_slopes_and_rejects_bad_steps() {
    let root = workspace_root();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv.json");
    let output = run_in(
        &root,
        &[
            "convergence", "--model", "configs/gmm2.json", "--solver", "dpmpp_2m", "--steps",
            "8,16,32", "--n-starts", "4", "--ref-steps", "256", "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let report = &doc["solvers"]["dpmpp_2m"];
    assert!(report["slope"].as_f64().unwrap() > 1.0);
    assert_eq!(report["errors"].as_array().unwrap().len(), 3);

    let output = run_in(
        &root,
        &[
            "convergence", "--model", "configs/gmm2.json", "--steps", "8,16",
        ],
    );
    assert_eq!(output.status.code(), Some(2));

    let output = run_in(
        &root,
        &[
            "convergence", "--model", "configs/gmm2.json", "--steps", "8,oops,32",
        ],
    );
    assert!(!output.status.success());
}

#[test]
fn metrics_self_comparison_and_mode_drop() {
    let dir = tempfile::tempdir().unwrap();

    // Fixture sets: P with four equal modes, Q covering two of them.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let blob = |rng: &mut ChaCha8Rng, cx: f64, cy: f64, n: usize| -> Vec<Vec<f64>> {
        use rand::Rng;
        use rand_distr::StandardNormal;
        (0..n)
            .map(|_| {
                vec![
                    cx + 0.1 * rng.sample::<f64, _>(StandardNormal),
                    cy + 0.1 * rng.sample::<f64, _>(StandardNormal),
                ]
            })
            .collect()
    };
    let mut p_data = Vec::new();
    for (cx, cy) in [(0.0, 0.0), (5.0, 0.0), (0.0, 5.0), (5.0, 5.0)] {
        p_data.extend(blob(&mut rng, cx, cy, 200));
    }
    let mut q_data = Vec::new();
    for (cx, cy) in [(0.0, 0.0), (5.0, 0.0)] {
        q_data.extend(blob(&mut rng, cx, cy, 400));
    }
    let p_path = dir.path().join("p.json");
    let q_path = dir.path().join("q.json");
    std::fs::write(
        &p_path,
        serde_json::to_string(&SampleSet::unlabeled(p_data).unwrap()).unwrap(),
    )
    .unwrap();
    std::fs::write(
        &q_path,
        serde_json::to_string(&SampleSet::unlabeled(q_data).unwrap()).unwrap(),
    )
    .unwrap();

    // File against itself: fd ~ 0, PRD reaches (1,1).
    let output = run_in(
        dir.path(),
        &["metrics", "--a", p_path.to_str().unwrap(), "--b", p_path.to_str().unwrap()],
    );
    assert!(output.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&String::from_utf8(output.stdout).unwrap()).unwrap();
    assert!(doc["fd"].as_f64().unwrap() < 1e-9);
    assert!(doc["sliced_w2"].as_f64().unwrap() < 1e-9);
    assert!(doc["prd_max_recall"].as_f64().unwrap() > 0.98);
    assert!(doc["prd_max_precision"].as_f64().unwrap() > 0.98);

    // Mode-dropped pair: recall collapses to ~0.5, precision stays ~1.
    let output = run_in(
        dir.path(),
        &["metrics", "--a", p_path.to_str().unwrap(), "--b", q_path.to_str().unwrap()],
    );
    assert!(output.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&String::from_utf8(output.stdout).unwrap()).unwrap();
    let recall = doc["prd_max_recall"].as_f64().unwrap();
    let precision = doc["prd_max_precision"].as_f64().unwrap();
    assert!((recall - 0.5).abs() < 0.05, "max recall {recall}");
    assert!((precision - 1.0).abs() < 0.05, "max precision {precision}");

    // Missing file is a clean nonzero exit.
    let output = run_in(
        dir.path(),
        &["metrics", "--a", p_path.to_str().unwrap(), "--b", "nope.json"],
    );
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn cfg_guidance_scale_changes_conditional_samples() {
    let root = workspace_root();
    let dir = tempfile::tempdir().unwrap();
    let mk_cfg = |w: f64| {
        let cfg = dir.path().join(format!("guided_{w}.json"));
        std::fs::write(
            &cfg,
            format!(
                r#"{{
  "schedule": {{"kind": "custom", "n": 8, "p1": 7.0, "p2": 1.2, "stop": 10000}},
  "solver": "dpmpp_1s",
  "model": {{"path": "configs/cond_gmm.json"}},
  "w": {w},
  "condition": 0,
  "n_samples": 64,
  "seed": 3
}}"#
            ),
        )
        .unwrap();
        cfg
    };

    let out_w1 = dir.path().join("w1.json");
    let out_w75 = dir.path().join("w75.json");
    for (cfg, out) in [(mk_cfg(1.0), &out_w1), (mk_cfg(7.5), &out_w75)] {
        let output = run_in(
            &root,
            &["sample", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        );
        assert!(
            output.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    let w1 = SampleSet::load(&out_w1).unwrap();
    let w75 = SampleSet::load(&out_w75).unwrap();
    assert_ne!(w1.vectors, w75.vectors);

    // Guidance pushes samples harder toward the conditioned class mean.
    let mean_x = |s: &SampleSet| {
        s.vectors.iter().map(|v| v[0]).sum::<f64>() / s.vectors.len() as f64
    };
    assert!(mean_x(&w75) > mean_x(&w1) * 0.99);
}

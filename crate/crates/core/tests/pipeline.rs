//! Library-level runs through the public API.

use explika::impute::{knn_impute, ImputeParams};
use explika::pipeline::{
    artifacts, run_with, Manifest, PipelineConfig, Stage, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION,
};
use explika::synth::{generate, write_synthetic, SyntheticSpec};
use explika::tabular::ColumnMeta;
use explika::{Table32, Table64};
use sha2::{Digest, Sha256};

fn small_run(dir: &std::path::Path) -> PipelineConfig {
    let spec: SyntheticSpec = serde_json::from_str(
        r#"{"rows": 240, "features": 16, "informative": 4, "active_sets": [[0, 1], [2, 3]],
            "missing_rate": 0.05, "markers": 4, "marker_shift": 5.0, "seed": 21}"#,
    )
    .unwrap();
    let data = generate(&spec).unwrap();
    write_synthetic(&data, "-9", dir).unwrap();
    let cfg = dir.join("config.json");
    std::fs::write(
        &cfg,
        r#"{"data": "data.csv", "metadata": "metadata.csv", "target": "target.csv",
            "missing_codes": ["-9"], "min_observed": 50, "impute": {"k": 8},
            "select": {"n_trees": 20, "n_resamples": 8, "top_k": 8},
            "forest": {"n_trees": 20}, "lime": {"n_samples": 200},
            "cluster": {"k": 2, "n_bootstrap": 10}, "seed": 13}"#,
    )
    .unwrap();
    PipelineConfig::load(&cfg).unwrap()
}

#[test]
fn manifest_hashes_match_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_run(dir.path());
    let out = dir.path().join("out");
    let mut seen = Vec::new();
    run_with(&cfg, &out, |s| seen.push(s)).unwrap();
    assert_eq!(seen, Stage::ALL);

    let m: Manifest =
        serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(m.schema_version, MANIFEST_SCHEMA_VERSION);
    assert_eq!(m.seed, 13);
    assert_eq!(m.config["impute"]["k"], 8);
    assert_eq!(m.config["min_observed"], 50);
    // defaults are recorded too
    assert_eq!(m.config["cluster"]["merge_threshold"], 0.95);
    assert_eq!(m.config["holdout_fraction"], 0.2);
    assert!(m.config.get("output_dir").is_none_or(|v| v.is_null()));

    let names: Vec<&str> = m.artifacts.iter().map(|a| a.file.as_str()).collect();
    let mut expected = artifacts::ALL.to_vec();
    expected.sort_unstable();
    assert_eq!(names, expected);
    for a in &m.artifacts {
        let bytes = std::fs::read(out.join(&a.file)).unwrap();
        assert_eq!(a.bytes, bytes.len() as u64, "{}", a.file);
        assert_eq!(a.sha256, hex::encode(Sha256::digest(&bytes)), "{}", a.file);
    }
}

#[test]
fn single_precision_imputation_tracks_double() {
    let (n, p) = (60, 5);
    let values: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            (0..n)
                .map(|i| ((i * 7 + j * 13) % 17) as f64 + (i % 3) as f64 * 10.0)
                .collect()
        })
        .collect();
    let mask: Vec<Vec<bool>> = (0..p)
        .map(|j| (0..n).map(|i| (i + 2 * j) % 9 != 0).collect())
        .collect();
    let meta = || {
        (0..p)
            .map(|j| ColumnMeta::new(format!("c{j}")))
            .collect::<Vec<_>>()
    };
    let ids = || (0..n).map(|i| format!("s{i}")).collect::<Vec<_>>();
    let t64 = Table64::from_columns(values.clone(), mask.clone(), meta(), ids()).unwrap();
    let v32: Vec<Vec<f32>> = values
        .iter()
        .map(|c| c.iter().map(|&v| v as f32).collect())
        .collect();
    let t32 = Table32::from_columns(v32, mask, meta(), ids()).unwrap();
    let params = ImputeParams {
        k: 5,
        ..Default::default()
    };
    let a = knn_impute(&t64, &params).unwrap();
    let b = knn_impute(&t32, &params).unwrap();
    for j in 0..p {
        for i in 0..n {
            let (x, y) = (a.get(i, j).unwrap(), b.get(i, j).unwrap() as f64);
            assert!(
                (x - y).abs() <= 1e-4 * x.abs().max(1.0),
                "({i},{j}): {x} vs {y}"
            );
        }
    }
}

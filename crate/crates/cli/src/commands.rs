//! The four operator commands: train, score, evaluate, inspect.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mpo_anomaly::data::{
    load_image_dataset, preprocess_image, read_idx_images, read_tabular_csv,
};
use mpo_anomaly::eval::{
    roc_points, run_odds, run_one_class_image, score_rows, summarize_trials, ExperimentSetup,
    RunResult, ScoredSet,
};
use rayon::prelude::*;
use mpo_anomaly::mpo::{load_model, read_model_header, save_model, MpoShape};
use mpo_anomaly::train::{format_history_line, train};

use crate::config::{fingerprint, DatasetKind, ExperimentConfig, ResolvedModel};
use crate::CliError;

/// Default output directory when neither `--out` nor the config provides
/// one; overridable through the environment.
pub const OUT_DIR_ENV: &str = "MPOAD_OUT_DIR";

/// One protocol run: seed, then either (result, wall seconds) or the
/// failure reason.
type SeedRun = (u64, Result<(RunResult, f64), String>);

fn resolve_out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs/out"))
}

/// Training rows plus the input fingerprints that go into the manifest.
struct LoadedTraining {
    rows: Vec<Vec<f64>>,
    fingerprints: Vec<(String, u64)>,
}

fn file_fingerprint(path: &Path) -> Result<(String, u64), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!(
        "cannot read {}: {e}",
        path.display()
    )))?;
    Ok((path.display().to_string(), fingerprint(&bytes)))
}

fn load_training_rows(cfg: &ExperimentConfig) -> Result<LoadedTraining, CliError> {
    match cfg.dataset {
        DatasetKind::Tabular => {
            let path = cfg.data.as_ref().expect("validated");
            let data = read_tabular_csv(path).map_err(|e| CliError::Data(e.to_string()))?;
            let normals = data.normal_indices();
            let skipped = data.num_rows() - normals.len();
            if skipped > 0 {
                eprintln!(
                    "note: {skipped} anomalous rows in {} are excluded from training",
                    path.display()
                );
            }
            if let Some(expected) = cfg.num_features {
                if expected != data.num_features() {
                    return Err(CliError::Data(format!(
                        "config says num_features = {expected}, dataset has {}",
                        data.num_features()
                    )));
                }
            }
            let rows = normals.iter().map(|&i| data.row(i).to_vec()).collect();
            Ok(LoadedTraining {
                rows,
                fingerprints: vec![file_fingerprint(path)?],
            })
        }
        DatasetKind::Image => {
            let images_path = cfg.train_images.as_ref().expect("validated");
            let labels_path = cfg.train_labels.as_ref().expect("validated");
            let inlier = cfg.inlier_class.expect("validated");
            let train_set = load_image_dataset(images_path, labels_path)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let rows: Vec<Vec<f64>> = (0..train_set.len())
                .filter(|&i| train_set.label(i) == inlier)
                .map(|i| {
                    preprocess_image(train_set.image(i), train_set.height(), train_set.width())
                })
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Data(e.to_string()))?;
            if rows.is_empty() {
                return Err(CliError::Data(format!(
                    "no training images with inlier class {inlier}"
                )));
            }
            Ok(LoadedTraining {
                rows,
                fingerprints: vec![
                    file_fingerprint(images_path)?,
                    file_fingerprint(labels_path)?,
                ],
            })
        }
    }
}

fn dataset_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn setup_from(resolved: &ResolvedModel, cfg: &ExperimentConfig) -> ExperimentSetup {
    ExperimentSetup {
        embedding: resolved.embedding,
        bond_dim: resolved.bond_dim,
        spacing: resolved.spacing,
        scaling: cfg.scaling,
        train: cfg.train.clone(),
    }
}

/// `train`: fit one model (first seed), write model, history, and manifest.
pub fn cmd_train(config_path: &Path, out_flag: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_file(config_path)?;
    let loaded = load_training_rows(&cfg)?;
    let num_features = loaded.rows[0].len();
    let resolved = cfg.resolve_model(num_features)?;
    for note in &resolved.notes {
        eprintln!("note: {note}");
    }

    let shape = MpoShape::new(
        num_features,
        resolved.embedding.physical_dim(),
        resolved.bond_dim,
        resolved.spacing,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;

    let seed = cfg.seeds[0];
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;

    let started = Instant::now();
    let outcome = train(&loaded.rows, shape, &resolved.embedding, &train_cfg)?;
    eprintln!(
        "trained {} samples x {} epochs in {:.1?} ({} retries)",
        loaded.rows.len(),
        train_cfg.total_epochs(),
        started.elapsed(),
        outcome.retries
    );

    let out_dir = resolve_out_dir(out_flag, &cfg);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;

    let model_path = out_dir.join("model.bin");
    save_model(&model_path, &outcome.model, &resolved.embedding)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let history_path = out_dir.join("history.log");
    let mut history = std::fs::File::create(&history_path)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", history_path.display())))?;
    for stats in &outcome.history {
        writeln!(history, "{}", format_history_line(stats))
            .map_err(|e| CliError::Data(e.to_string()))?;
    }

    let manifest_path = out_dir.join("manifest.conf");
    std::fs::write(
        &manifest_path,
        cfg.to_manifest(&resolved, seed, &loaded.fingerprints),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;

    println!("model   {}", model_path.display());
    println!("history {}", history_path.display());
    println!("manifest {}", manifest_path.display());
    Ok(())
}

/// `score`: decision log per sample of a data file, to stdout.
pub fn cmd_score(model_path: &Path, data_path: &Path) -> Result<(), CliError> {
    let (model, embedding) =
        load_model(model_path).map_err(|e| CliError::Data(e.to_string()))?;
    let rows = load_scoring_rows(data_path)?;
    if let Some(row) = rows.first() {
        let expected = model.shape().num_sites();
        if row.len() != expected {
            return Err(CliError::Data(format!(
                "feature count mismatch: data has {} features per sample, model expects {expected}",
                row.len()
            )));
        }
    }
    let scores = score_rows(&model, &embedding, &rows)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (i, s) in scores.iter().enumerate() {
        match writeln!(out, "{i},{s}") {
            Ok(()) => {}
            // downstream consumer closed the pipe; not an error
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
            Err(e) => return Err(CliError::Data(e.to_string())),
        }
    }
    Ok(())
}

/// Rows to score: a labeled or unlabeled CSV, or an IDX image file (which
/// goes through the standard preprocessing).
fn load_scoring_rows(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let name = path.to_string_lossy();
    if name.ends_with(".csv") {
        let data = read_tabular_csv(path).map_err(|e| CliError::Data(e.to_string()))?;
        return Ok(data.rows().to_vec());
    }
    let (images, h, w) = read_idx_images(path).map_err(|e| CliError::Data(e.to_string()))?;
    images
        .iter()
        .map(|img| preprocess_image(img, h, w).map_err(|e| CliError::Data(e.to_string())))
        .collect()
}

/// `evaluate`: run the one-class protocol once per seed, aggregate AUROC.
pub fn cmd_evaluate(
    config_path: &Path,
    out_flag: Option<PathBuf>,
    seeds_flag: Option<Vec<u64>>,
    jobs: Option<usize>,
    write_roc: bool,
) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_file(config_path)?;
    let seeds = seeds_flag.unwrap_or_else(|| cfg.seeds.clone());
    let out_dir = resolve_out_dir(out_flag, &cfg);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;

    if let Some(jobs) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok(); // already-built pool keeps its size
    }

    let (dataset_name, inlier_class, runs) = match cfg.dataset {
        DatasetKind::Tabular => {
            let path = cfg.data.as_ref().expect("validated");
            let data = read_tabular_csv(path).map_err(|e| CliError::Data(e.to_string()))?;
            let resolved = cfg.resolve_model(data.num_features())?;
            for note in &resolved.notes {
                eprintln!("note: {note}");
            }
            let setup = setup_from(&resolved, &cfg);
            let runs: Vec<SeedRun> = seeds
                .par_iter()
                .map(|&seed| {
                    let started = Instant::now();
                    let run = run_odds(&data, &setup, seed)
                        .map(|r| (r, started.elapsed().as_secs_f64()))
                        .map_err(|e| e.to_string());
                    (seed, run)
                })
                .collect();
            (dataset_label(path), -1i64, runs)
        }
        DatasetKind::Image => {
            let train_set = load_image_dataset(
                cfg.train_images.as_ref().expect("validated"),
                cfg.train_labels.as_ref().expect("validated"),
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            let test_set = load_image_dataset(
                cfg.test_images.as_ref().expect("validated"),
                cfg.test_labels.as_ref().expect("validated"),
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            let inlier = cfg.inlier_class.expect("validated");
            let width = (train_set.height() / 2) * (train_set.width() / 2);
            let resolved = cfg.resolve_model(width)?;
            for note in &resolved.notes {
                eprintln!("note: {note}");
            }
            let setup = setup_from(&resolved, &cfg);
            let runs: Vec<SeedRun> = seeds
                .par_iter()
                .map(|&seed| {
                    let started = Instant::now();
                    let run = run_one_class_image(&train_set, &test_set, inlier, &setup, seed)
                        .map(|r| (r, started.elapsed().as_secs_f64()))
                        .map_err(|e| e.to_string());
                    (seed, run)
                })
                .collect();
            (
                dataset_label(cfg.train_images.as_ref().expect("validated")),
                inlier as i64,
                runs,
            )
        }
    };

    let results_path = out_dir.join("results.csv");
    let mut results_file = std::fs::File::create(&results_path)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", results_path.display())))?;
    writeln!(
        results_file,
        "dataset,inlier_class,seed,auroc,n_train,n_test,epochs,wall_seconds"
    )
    .map_err(|e| CliError::Data(e.to_string()))?;

    let epochs = cfg.train.total_epochs();
    let mut ok_results = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in runs {
        match outcome {
            Ok((run, wall)) => {
                writeln!(
                    results_file,
                    "{dataset_name},{inlier_class},{seed},{:.6},{},{},{epochs},{wall:.3}",
                    run.auroc, run.n_train, run.n_test
                )
                .map_err(|e| CliError::Data(e.to_string()))?;
                if write_roc {
                    write_roc_file(&out_dir, seed, &run.scored)?;
                }
                ok_results.push((seed, run.auroc));
            }
            Err(reason) => {
                eprintln!("seed {seed} failed: {reason}");
                failures.push((seed, reason));
            }
        }
    }

    let summary = summarize_trials(ok_results, failures);
    if summary.results.is_empty() {
        return Err(CliError::NanAbort(format!(
            "all {} trials failed; first failure: {}",
            summary.failures.len(),
            summary.failures[0].1
        )));
    }
    writeln!(
        results_file,
        "# mean {:.6} stderr {:.6} trials {} failed {}",
        summary.mean,
        summary.stderr,
        summary.results.len(),
        summary.failures.len()
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "{dataset_name}: mean AUROC {:.4} +- {:.4} over {} trials ({} failed)",
        summary.mean,
        summary.stderr,
        summary.results.len(),
        summary.failures.len()
    );
    println!("results {}", results_path.display());
    Ok(())
}

fn write_roc_file(out_dir: &Path, seed: u64, scored: &ScoredSet) -> Result<(), CliError> {
    let path = out_dir.join(format!("roc_seed{seed}.csv"));
    let mut f = std::fs::File::create(&path)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))?;
    writeln!(f, "fpr,tpr").map_err(|e| CliError::Data(e.to_string()))?;
    for (fpr, tpr) in roc_points(scored) {
        writeln!(f, "{fpr},{tpr}").map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(())
}

/// `inspect`: print the header of a model file.
pub fn cmd_inspect(model_path: &Path) -> Result<(), CliError> {
    let header = read_model_header(model_path).map_err(|e| CliError::Data(e.to_string()))?;
    println!("format_version {}", header.version);
    println!("num_sites      {}", header.num_sites);
    println!("physical_dim   {}", header.physical_dim);
    println!("bond_dim       {}", header.bond_dim);
    println!("spacing        {}", header.spacing);
    println!(
        "embedding      {} (p = {})",
        match header.embedding_kind {
            mpo_anomaly::embedding::EmbeddingKind::Trigonometric => "trig",
            mpo_anomaly::embedding::EmbeddingKind::Fourier => "fourier",
        },
        header.embedding_dim
    );
    Ok(())
}

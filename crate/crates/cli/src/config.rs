//! Experiment configuration: a flat `key = value` text format with `#`
//! comments, plus the tabular auto-sizing heuristics and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mpo_anomaly::embedding::{EmbeddingKind, EmbeddingSpec};
use mpo_anomaly::eval::FeatureScaling;
use mpo_anomaly::optim::AdamParams;
use mpo_anomaly::train::TrainConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("config field {field}: {reason}")]
    Field { field: &'static str, reason: String },
    #[error("no physical dimension p in 2..=4096 satisfies 1e4 <= p^{q} <= 1e12")]
    AutoInfeasible { q: usize },
}

const KNOWN_KEYS: &[&str] = &[
    "dataset",
    "data",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "inlier_class",
    "embedding",
    "physical_dim",
    "bond_dim",
    "spacing",
    "scaling",
    "alpha",
    "init_stddev",
    "batch_size",
    "cold_epochs",
    "cold_lr",
    "main_epochs",
    "main_lr",
    "decay_rate",
    "max_nan_retries",
    "seeds",
    "out_dir",
    "num_features",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Tabular,
    Image,
}

/// Either a concrete value or `auto`, resolved against the dataset width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sizing {
    Auto,
    Fixed(usize),
}

/// Parsed experiment configuration (pre-resolution).
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub data: Option<PathBuf>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub inlier_class: Option<u8>,
    pub embedding: EmbeddingKind,
    pub physical_dim: Sizing,
    pub bond_dim: usize,
    pub spacing: Sizing,
    pub scaling: FeatureScaling,
    pub num_features: Option<usize>,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub train: TrainConfig,
}

/// Concrete model sizing after `auto` resolution.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub embedding: EmbeddingSpec,
    pub bond_dim: usize,
    pub spacing: usize,
    /// Human-readable notes for every `auto` decision taken.
    pub notes: Vec<String>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

struct RawConfig {
    values: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let content = strip_comment(raw_line).trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: content.to_string(),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey { line, key });
            }
            if values.insert(key.clone(), (line, value)).is_some() {
                return Err(ConfigError::DuplicateKey { line, key });
            }
        }
        Ok(Self { values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    fn parse_as<T: std::str::FromStr>(
        &self,
        key: &'static str,
    ) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(text) => text.parse::<T>().map(Some).map_err(|e| ConfigError::Field {
                field: key,
                reason: format!("cannot parse {text:?}: {e}"),
            }),
        }
    }

}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_str_contents(&text)?;
        // Paths inside a config are relative to the config file's directory.
        if let Some(base) = path.parent() {
            for p in [
                &mut cfg.data,
                &mut cfg.train_images,
                &mut cfg.train_labels,
                &mut cfg.test_images,
                &mut cfg.test_labels,
                &mut cfg.out_dir,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_str_contents(text: &str) -> Result<Self, ConfigError> {
        let raw = RawConfig::parse(text)?;

        let dataset = match raw.get("dataset") {
            Some("tabular") => DatasetKind::Tabular,
            Some("image") => DatasetKind::Image,
            Some(other) => {
                return Err(ConfigError::Field {
                    field: "dataset",
                    reason: format!("expected `tabular` or `image`, got {other:?}"),
                })
            }
            None => {
                return Err(ConfigError::Field {
                    field: "dataset",
                    reason: "missing required key".to_string(),
                })
            }
        };

        let embedding = match raw.get("embedding").unwrap_or("trig") {
            "trig" => EmbeddingKind::Trigonometric,
            "fourier" => EmbeddingKind::Fourier,
            other => {
                return Err(ConfigError::Field {
                    field: "embedding",
                    reason: format!("expected `trig` or `fourier`, got {other:?}"),
                })
            }
        };

        let sizing = |key: &'static str| -> Result<Sizing, ConfigError> {
            match raw.get(key) {
                None | Some("auto") => Ok(Sizing::Auto),
                Some(text) => text
                    .parse::<usize>()
                    .map(Sizing::Fixed)
                    .map_err(|e| ConfigError::Field {
                        field: key,
                        reason: format!("expected a positive integer or `auto`: {e}"),
                    }),
            }
        };

        let scaling = match raw.get("scaling").unwrap_or("std") {
            "std" => FeatureScaling::Standardize,
            "minmax" => FeatureScaling::MinMax,
            other => {
                return Err(ConfigError::Field {
                    field: "scaling",
                    reason: format!("expected `std` or `minmax`, got {other:?}"),
                })
            }
        };

        let seeds: Vec<u64> = match raw.get("seeds") {
            None => vec![0],
            Some(text) => parse_seed_list(text).map_err(|reason| ConfigError::Field {
                field: "seeds",
                reason,
            })?,
        };

        let train = TrainConfig {
            alpha: raw.parse_as("alpha")?.unwrap_or(0.1),
            batch_size: raw.parse_as("batch_size")?.unwrap_or(32),
            cold_epochs: raw.parse_as("cold_epochs")?.unwrap_or(20),
            cold_lr: raw.parse_as("cold_lr")?.unwrap_or(2e-5),
            main_epochs: raw.parse_as("main_epochs")?.unwrap_or(280),
            main_lr: raw.parse_as("main_lr")?.unwrap_or(2e-3),
            decay_rate: raw.parse_as("decay_rate")?.unwrap_or(0.01),
            init_stddev: raw.parse_as("init_stddev")?.unwrap_or(0.5),
            seed: seeds[0],
            adam: AdamParams::default(),
            max_nan_retries: raw.parse_as("max_nan_retries")?.unwrap_or(0),
        };
        train.validate().map_err(|e| ConfigError::Field {
            field: "alpha/batch_size/learning rates",
            reason: e.to_string(),
        })?;

        let cfg = Self {
            dataset,
            data: raw.get("data").map(PathBuf::from),
            train_images: raw.get("train_images").map(PathBuf::from),
            train_labels: raw.get("train_labels").map(PathBuf::from),
            test_images: raw.get("test_images").map(PathBuf::from),
            test_labels: raw.get("test_labels").map(PathBuf::from),
            inlier_class: raw.parse_as("inlier_class")?,
            embedding,
            physical_dim: sizing("physical_dim")?,
            bond_dim: raw.parse_as("bond_dim")?.unwrap_or(5),
            spacing: sizing("spacing")?,
            scaling,
            num_features: raw.parse_as("num_features")?,
            seeds,
            out_dir: raw.get("out_dir").map(PathBuf::from),
            train,
        };
        cfg.check_dataset_fields()?;
        Ok(cfg)
    }

    fn check_dataset_fields(&self) -> Result<(), ConfigError> {
        match self.dataset {
            DatasetKind::Tabular => {
                if self.data.is_none() {
                    return Err(ConfigError::Field {
                        field: "data",
                        reason: "tabular datasets need `data = <csv path>`".to_string(),
                    });
                }
            }
            DatasetKind::Image => {
                let paths: [(&'static str, &Option<PathBuf>); 4] = [
                    ("train_images", &self.train_images),
                    ("train_labels", &self.train_labels),
                    ("test_images", &self.test_images),
                    ("test_labels", &self.test_labels),
                ];
                for (field, value) in paths {
                    if value.is_none() {
                        return Err(ConfigError::Field {
                            field,
                            reason: "image datasets need all four IDX paths".to_string(),
                        });
                    }
                }
                if self.inlier_class.is_none() {
                    return Err(ConfigError::Field {
                        field: "inlier_class",
                        reason: "image datasets need the inlier class id".to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Resolve `auto` sizing against the dataset's feature count:
    /// `S = floor(N/25) + 1`, then the smallest `p >= 2` with
    /// `1e4 <= p^q <= 1e12` (rounded up to even for the trigonometric
    /// embedding). Every decision is recorded in the notes.
    pub fn resolve_model(&self, num_features: usize) -> Result<ResolvedModel, ConfigError> {
        let mut notes = Vec::new();
        let spacing = match self.spacing {
            Sizing::Fixed(s) => s,
            Sizing::Auto => {
                let s = num_features / 25 + 1;
                notes.push(format!("auto spacing: S = floor({num_features}/25) + 1 = {s}"));
                s
            }
        };
        let q = (num_features - 1) / spacing + 1;

        let physical_dim = match self.physical_dim {
            Sizing::Fixed(p) => p,
            Sizing::Auto => {
                let p = auto_physical_dim(q, self.embedding == EmbeddingKind::Trigonometric)
                    .ok_or(ConfigError::AutoInfeasible { q })?;
                notes.push(format!(
                    "auto physical dim: smallest p with 1e4 <= p^{q} <= 1e12 is {p} \
                     (output space dimension {:.3e})",
                    (p as f64).powi(q as i32)
                ));
                p
            }
        };

        let embedding =
            EmbeddingSpec::new(self.embedding, physical_dim).map_err(|e| ConfigError::Field {
                field: "physical_dim",
                reason: e.to_string(),
            })?;
        Ok(ResolvedModel {
            embedding,
            bond_dim: self.bond_dim,
            spacing,
            notes,
        })
    }

    /// Serialize back to the config format with all sizing resolved and a
    /// single seed, so the manifest re-trains to the identical model.
    pub fn to_manifest(
        &self,
        resolved: &ResolvedModel,
        seed: u64,
        input_fingerprints: &[(String, u64)],
    ) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# run manifest (re-trainable config, fully resolved)");
        for (name, hash) in input_fingerprints {
            let _ = writeln!(out, "# input {name} fnv1a64 {hash:016x}");
        }
        for note in &resolved.notes {
            let _ = writeln!(out, "# {note}");
        }
        let _ = writeln!(
            out,
            "dataset = {}",
            match self.dataset {
                DatasetKind::Tabular => "tabular",
                DatasetKind::Image => "image",
            }
        );
        if let Some(p) = &self.data {
            let _ = writeln!(out, "data = {}", p.display());
        }
        for (key, path) in [
            ("train_images", &self.train_images),
            ("train_labels", &self.train_labels),
            ("test_images", &self.test_images),
            ("test_labels", &self.test_labels),
        ] {
            if let Some(p) = path {
                let _ = writeln!(out, "{key} = {}", p.display());
            }
        }
        if let Some(c) = self.inlier_class {
            let _ = writeln!(out, "inlier_class = {c}");
        }
        let _ = writeln!(
            out,
            "embedding = {}",
            match self.embedding {
                EmbeddingKind::Trigonometric => "trig",
                EmbeddingKind::Fourier => "fourier",
            }
        );
        let _ = writeln!(out, "physical_dim = {}", resolved.embedding.physical_dim());
        let _ = writeln!(out, "bond_dim = {}", resolved.bond_dim);
        let _ = writeln!(out, "spacing = {}", resolved.spacing);
        let _ = writeln!(
            out,
            "scaling = {}",
            match self.scaling {
                FeatureScaling::Standardize => "std",
                FeatureScaling::MinMax => "minmax",
            }
        );
        let t = &self.train;
        let _ = writeln!(out, "alpha = {}", t.alpha);
        let _ = writeln!(out, "init_stddev = {}", t.init_stddev);
        let _ = writeln!(out, "batch_size = {}", t.batch_size);
        let _ = writeln!(out, "cold_epochs = {}", t.cold_epochs);
        let _ = writeln!(out, "cold_lr = {:e}", t.cold_lr);
        let _ = writeln!(out, "main_epochs = {}", t.main_epochs);
        let _ = writeln!(out, "main_lr = {:e}", t.main_lr);
        let _ = writeln!(out, "decay_rate = {}", t.decay_rate);
        let _ = writeln!(out, "max_nan_retries = {}", t.max_nan_retries);
        let _ = writeln!(out, "seeds = {seed}");
        out
    }
}

fn parse_seed_list(text: &str) -> Result<Vec<u64>, String> {
    let seeds: Result<Vec<u64>, _> = text
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect();
    let seeds = seeds.map_err(|e| format!("expected comma-separated integers: {e}"))?;
    if seeds.is_empty() {
        return Err("need at least one seed".to_string());
    }
    Ok(seeds)
}

pub fn parse_seeds_flag(text: &str) -> Result<Vec<u64>, ConfigError> {
    parse_seed_list(text).map_err(|reason| ConfigError::Field {
        field: "seeds",
        reason,
    })
}

fn auto_physical_dim(q: usize, require_even: bool) -> Option<usize> {
    let fits = |p: usize| {
        let dim = (p as f64).powi(q as i32);
        (1e4..=1e12).contains(&dim)
    };
    let too_big = |p: usize| (p as f64).powi(q as i32) > 1e12;
    for p in 2..=4096usize {
        if require_even && !p.is_multiple_of(2) {
            continue;
        }
        if fits(p) {
            return Some(p);
        }
        if too_big(p) {
            return None;
        }
    }
    None
}

/// FNV-1a over raw bytes; used to fingerprint run inputs in manifests.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

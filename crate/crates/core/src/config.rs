//! Experiment configuration: one JSON file describing dataset, model,
//! training schedule, composite-loss weights, and optional sweep/tuning
//! sections. Unknown keys are rejected everywhere, and a content hash of
//! the semantic sections is embedded in every artifact.

use crate::data::{
    load_classification_csv, load_series_csv, make_blobs, make_series_with, split_classification,
    split_forecast, window, SeriesSpec,
};
use crate::error::{Error, Result};
use crate::loss::CLFConfig;
use crate::rng::SeededRng;
use crate::train::{ModelSpec, PreparedData, Task, TrainConfig};
use crate::tune::TunerConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

/// Highest seed count a single `a..b` range may expand to.
pub const MAX_SEED_RANGE: usize = 1_000_000;

fn default_train_fraction() -> f64 {
    0.6
}

fn default_val_fraction() -> f64 {
    0.2
}

fn default_stride() -> usize {
    1
}

/// Synthetic Gaussian-blob classification source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobsParams {
    pub seed: u64,
    pub n_per_class: usize,
    pub n_classes: usize,
    pub dim: usize,
    pub spread: f64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

/// Synthetic sinusoid-plus-trend forecasting source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesParams {
    pub seed: u64,
    pub n: usize,
    pub noise: f64,
    pub lookback: usize,
    pub horizon: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub amp1: Option<f64>,
    #[serde(default)]
    pub period1: Option<f64>,
    #[serde(default)]
    pub amp2: Option<f64>,
    #[serde(default)]
    pub period2: Option<f64>,
    #[serde(default)]
    pub trend: Option<f64>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

/// Classification data loaded from a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationCsvParams {
    pub path: PathBuf,
    pub n_classes: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

/// Series data loaded from a CSV file, windowed for forecasting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesCsvParams {
    pub path: PathBuf,
    pub lookback: usize,
    pub horizon: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

/// Dataset section: a generator or a CSV path, selected by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Blobs(BlobsParams),
    Series(SeriesParams),
    ClassificationCsv(ClassificationCsvParams),
    SeriesCsv(SeriesCsvParams),
}

impl DatasetConfig {
    /// The task this dataset feeds.
    pub fn task(&self) -> Task {
        match self {
            DatasetConfig::Blobs(_) | DatasetConfig::ClassificationCsv(_) => Task::Classification,
            DatasetConfig::Series(_) | DatasetConfig::SeriesCsv(_) => Task::Regression,
        }
    }
}

/// Training schedule section; merged with the `clf` section into a
/// [`TrainConfig`] at resolve time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_peak: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub task: Task,
}

/// Default seed list for sweep-style commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub seeds: Vec<u64>,
}

/// The whole experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelSpec,
    pub train: TrainSection,
    pub clf: CLFConfig,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub tune: Option<TunerConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// The sections that determine run content, hashed into every artifact.
/// Seed lists and the output directory stay out: seeds are recorded
/// explicitly in each artifact, and the directory is pure plumbing.
#[derive(Serialize)]
struct HashedSections<'a> {
    dataset: &'a DatasetConfig,
    model: &'a ModelSpec,
    train: &'a TrainSection,
    clf: &'a CLFConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.task() != self.train.task {
            return Err(Error::Config(format!(
                "dataset provides a {:?} task but train.task is {:?}",
                self.dataset.task(),
                self.train.task
            )));
        }
        self.resolved_train().validate()?;
        if let Some(tune) = &self.tune {
            tune.validate()?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.seeds.is_empty() {
                return Err(Error::Config("sweep.seeds must not be empty".into()));
            }
            let distinct: HashSet<u64> = sweep.seeds.iter().copied().collect();
            if distinct.len() != sweep.seeds.len() {
                return Err(Error::Config("sweep.seeds contains duplicates".into()));
            }
        }
        Ok(())
    }

    /// Training schedule with the composite-loss section merged in.
    pub fn resolved_train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr_peak: self.train.lr_peak,
            momentum: self.train.momentum,
            weight_decay: self.train.weight_decay,
            clf: self.clf.clone(),
            task: self.train.task,
        }
    }

    /// SHA-256 (hex) over the canonical 17-significant-digit JSON of the
    /// semantic sections.
    pub fn content_hash(&self) -> Result<String> {
        let canonical = crate::report::to_json_string(&HashedSections {
            dataset: &self.dataset,
            model: &self.model,
            train: &self.train,
            clf: &self.clf,
        })?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(format!("{digest:x}"))
    }

    /// Builds the dataset this config describes. Generator seeds live in
    /// the dataset section, so every training seed sees identical data.
    pub fn prepare_data(&self) -> Result<PreparedData> {
        match &self.dataset {
            DatasetConfig::Blobs(p) => {
                let mut rng = SeededRng::new(p.seed);
                let ds = make_blobs(&mut rng, p.n_per_class, p.n_classes, p.dim, p.spread)?;
                Ok(PreparedData::Classification(split_classification(
                    &ds,
                    p.train_fraction,
                    p.val_fraction,
                )?))
            }
            DatasetConfig::Series(p) => {
                let defaults = SeriesSpec::default();
                let spec = SeriesSpec {
                    amp1: p.amp1.unwrap_or(defaults.amp1),
                    period1: p.period1.unwrap_or(defaults.period1),
                    amp2: p.amp2.unwrap_or(defaults.amp2),
                    period2: p.period2.unwrap_or(defaults.period2),
                    trend: p.trend.unwrap_or(defaults.trend),
                };
                let mut rng = SeededRng::new(p.seed);
                let series = make_series_with(&mut rng, p.n, p.noise, &spec)?;
                let ds = window(series, p.lookback, p.horizon, p.stride)?;
                Ok(PreparedData::Forecast(split_forecast(
                    ds,
                    p.train_fraction,
                    p.val_fraction,
                )?))
            }
            DatasetConfig::ClassificationCsv(p) => {
                let ds = load_classification_csv(&p.path, p.n_classes)?;
                Ok(PreparedData::Classification(split_classification(
                    &ds,
                    p.train_fraction,
                    p.val_fraction,
                )?))
            }
            DatasetConfig::SeriesCsv(p) => {
                let series = load_series_csv(&p.path)?;
                let ds = window(series, p.lookback, p.horizon, p.stride)?;
                Ok(PreparedData::Forecast(split_forecast(
                    ds,
                    p.train_fraction,
                    p.val_fraction,
                )?))
            }
        }
    }
}

/// Parses a seed list: comma-separated entries, each either one integer or
/// an inclusive range `a..b`. Duplicates are rejected.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::InvalidArgument("empty seed list".into()));
    }
    let mut seeds = Vec::new();
    let mut seen = HashSet::new();
    for token in text.split(',') {
        let token = token.trim();
        if token.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "empty entry in seed list {text:?}"
            )));
        }
        let range = match token.split_once("..") {
            Some((a, b)) => {
                let lo = parse_seed(a)?;
                let hi = parse_seed(b)?;
                if lo > hi {
                    return Err(Error::InvalidArgument(format!(
                        "seed range {token:?} runs backwards"
                    )));
                }
                if (hi - lo) as usize >= MAX_SEED_RANGE {
                    return Err(Error::InvalidArgument(format!(
                        "seed range {token:?} expands past {MAX_SEED_RANGE} seeds"
                    )));
                }
                lo..=hi
            }
            None => {
                let s = parse_seed(token)?;
                s..=s
            }
        };
        for seed in range {
            if !seen.insert(seed) {
                return Err(Error::InvalidArgument(format!("duplicate seed {seed}")));
            }
            seeds.push(seed);
        }
    }
    Ok(seeds)
}

fn parse_seed(token: &str) -> Result<u64> {
    let token = token.trim();
    token
        .parse::<u64>()
        .map_err(|_| Error::InvalidArgument(format!("invalid seed {token:?}")))
}

/// Parses a metric pool: one finite value per line, blank lines skipped.
pub fn parse_pool(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| Error::CsvParse {
            line: i + 1,
            message: format!("invalid metric value {line:?}"),
        })?;
        if !value.is_finite() {
            return Err(Error::CsvParse {
                line: i + 1,
                message: format!("non-finite metric value {line:?}"),
            });
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("pool file holds no values".into()));
    }
    Ok(values)
}

/// Reads a metric pool from a file.
pub fn load_pool(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_pool(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs_json() -> String {
        r#"{
            "dataset": {"kind": "blobs", "seed": 7, "n_per_class": 20, "n_classes": 3, "dim": 2, "spread": 0.4},
            "model": {"hidden": [16]},
            "train": {"epochs": 5, "batch_size": 16, "lr_peak": 0.05, "momentum": 0.9, "weight_decay": 0.0, "task": "classification"},
            "clf": {"lambda_s": 0.1, "lambda_v": 0.2, "lambda_wd": 0.05, "activation_window": 3}
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_resolves_blobs_config() {
        let config = ExperimentConfig::from_json(&blobs_json()).unwrap();
        assert_eq!(config.model.hidden, vec![16]);
        let train = config.resolved_train();
        assert_eq!(train.epochs, 5);
        assert_eq!(train.clf.lambda_s, 0.1);
        assert_eq!(train.task, Task::Classification);
        let data = config.prepare_data().unwrap();
        match data {
            PreparedData::Classification(split) => {
                assert!(split.val.is_some());
                assert_eq!(split.train.n_classes, 3);
            }
            PreparedData::Forecast(_) => panic!("expected classification data"),
        }
    }

    #[test]
    fn rejects_unknown_keys_at_every_level() {
        let top = blobs_json().replace("\"clf\"", "\"extra\": 1, \"clf\"");
        assert!(ExperimentConfig::from_json(&top).is_err());
        let dataset = blobs_json().replace("\"spread\": 0.4", "\"spread\": 0.4, \"bogus\": 1");
        assert!(ExperimentConfig::from_json(&dataset).is_err());
        let clf = blobs_json().replace("\"activation_window\": 3", "\"activation_window\": 3, \"x\": 2");
        assert!(ExperimentConfig::from_json(&clf).is_err());
    }

    #[test]
    fn rejects_task_dataset_mismatch() {
        let mismatched = blobs_json().replace("\"classification\"", "\"regression\"");
        let err = ExperimentConfig::from_json(&mismatched).unwrap_err();
        assert!(err.to_string().contains("task"));
    }

    #[test]
    fn series_config_prepares_forecast_data() {
        let json = r#"{
            "dataset": {"kind": "series", "seed": 3, "n": 200, "noise": 0.05, "lookback": 24, "horizon": 4},
            "train": {"epochs": 4, "batch_size": 8, "lr_peak": 0.01, "momentum": 0.9, "weight_decay": 0.0, "task": "regression"},
            "clf": {"lambda_s": 0.0, "lambda_v": 0.0, "lambda_wd": 0.0, "activation_window": 0}
        }"#;
        let config = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(config.model.hidden, vec![32]);
        match config.prepare_data().unwrap() {
            PreparedData::Forecast(split) => {
                assert!(!split.train.is_empty());
                assert!(!split.test.is_empty());
            }
            PreparedData::Classification(_) => panic!("expected forecast data"),
        }
    }

    #[test]
    fn hash_tracks_semantic_fields_only() {
        let base = ExperimentConfig::from_json(&blobs_json()).unwrap();
        let same = ExperimentConfig::from_json(&blobs_json()).unwrap();
        assert_eq!(base.content_hash().unwrap(), same.content_hash().unwrap());
        assert_eq!(base.content_hash().unwrap().len(), 64);

        let mut semantic = base.clone();
        semantic.clf.lambda_s = 0.11;
        assert_ne!(
            base.content_hash().unwrap(),
            semantic.content_hash().unwrap()
        );

        let mut plumbing = base.clone();
        plumbing.output_dir = Some(PathBuf::from("elsewhere"));
        plumbing.sweep = Some(SweepSection { seeds: vec![1, 2] });
        assert_eq!(
            base.content_hash().unwrap(),
            plumbing.content_hash().unwrap()
        );
    }

    #[test]
    fn csv_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("data.csv");
        let mut rng = SeededRng::new(5);
        let ds = make_blobs(&mut rng, 10, 2, 2, 0.3).unwrap();
        std::fs::write(&csv_path, crate::data::classification_csv_string(&ds)).unwrap();
        let json = format!(
            r#"{{
                "dataset": {{"kind": "classification_csv", "path": {path:?}, "n_classes": 2, "val_fraction": 0.0}},
                "train": {{"epochs": 2, "batch_size": 8, "lr_peak": 0.05, "momentum": 0.9, "weight_decay": 0.0, "task": "classification"}},
                "clf": {{"lambda_s": 0.0, "lambda_v": 0.0, "lambda_wd": 0.0, "activation_window": 0}}
            }}"#,
            path = csv_path
        );
        let config = ExperimentConfig::from_json(&json).unwrap();
        match config.prepare_data().unwrap() {
            PreparedData::Classification(split) => {
                assert!(split.val.is_none());
                assert_eq!(split.train.len() + split.test.len(), 20);
            }
            PreparedData::Forecast(_) => panic!("expected classification data"),
        }
    }

    #[test]
    fn seed_list_forms() {
        assert_eq!(parse_seed_list("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_seed_list("1,2,5").unwrap(), vec![1, 2, 5]);
        assert_eq!(parse_seed_list("7").unwrap(), vec![7]);
        assert_eq!(parse_seed_list("1..3, 9").unwrap(), vec![1, 2, 3, 9]);
        assert_eq!(parse_seed_list(" 1 .. 3 ").unwrap(), vec![1, 2, 3]);
        assert!(parse_seed_list("").is_err());
        assert!(parse_seed_list("5..3").is_err());
        assert!(parse_seed_list("1,1").is_err());
        assert!(parse_seed_list("1..3,2").is_err());
        assert!(parse_seed_list("a").is_err());
        assert!(parse_seed_list("1,,2").is_err());
        assert!(parse_seed_list("0..2000000").is_err());
    }

    #[test]
    fn pool_parsing() {
        assert_eq!(parse_pool("0.9\n0.8\n\n0.7\n").unwrap(), vec![0.9, 0.8, 0.7]);
        let err = parse_pool("0.9\nnope\n").unwrap_err();
        assert!(err.to_string().contains("2"), "{err}");
        assert!(parse_pool("inf\n").is_err());
        assert!(parse_pool("\n\n").is_err());
    }

    #[test]
    fn tune_section_is_validated() {
        let json = blobs_json().replace(
            "\"clf\"",
            r#""tune": {"lambda_v_range": [0.5, 0.1], "lambda_s_range": [0.1, 1.0], "lambda_wd_range": [0.01, 0.1], "n_trials": 2, "seeds_per_trial": [1, 2], "epochs": 2}, "clf""#,
        );
        assert!(ExperimentConfig::from_json(&json).is_err());
        let good = blobs_json().replace(
            "\"clf\"",
            r#""tune": {"lambda_v_range": [0.1, 0.5], "lambda_s_range": [0.1, 1.0], "lambda_wd_range": [0.01, 0.1], "n_trials": 2, "seeds_per_trial": [1, 2], "epochs": 2}, "clf""#,
        );
        let config = ExperimentConfig::from_json(&good).unwrap();
        assert_eq!(config.tune.as_ref().unwrap().n_trials, 2);
    }
}

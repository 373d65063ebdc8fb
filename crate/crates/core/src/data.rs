//! Dataset loading, Pearson-correlation channel selection, min-max
//! normalization and deterministic train/test splitting.
//!
//! Input CSVs carry a header row, one integer label column (labels start at
//! 1) and numeric feature columns, one electrode channel per column.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const STATS_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("data row {row}: {detail}")]
    MalformedRow { row: usize, detail: String },
    #[error("data row {row}: column '{column}' is not numeric: '{value}'")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("data row {row}: label '{value}' is not a positive integer")]
    BadLabel { row: usize, value: String },
    #[error("label column '{0}' not found in header")]
    MissingLabelColumn(String),
    #[error("dataset is empty")]
    Empty,
    #[error("channel count k={k} outside [1, {channels}]")]
    ChannelCountOutOfRange { k: usize, channels: usize },
    #[error("correlation is undefined for a constant vector")]
    UndefinedCorrelation,
    #[error("vectors must have equal length >= 2")]
    LengthMismatch,
    #[error("train fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("split produces an empty train or test part")]
    EmptySplit,
    #[error("channel '{0}' required by the stored selection is missing from the input")]
    MissingChannel(String),
    #[error("normalization stats cover {stats} channels but data has {channels}")]
    StatsMismatch { stats: usize, channels: usize },
    #[error("malformed {what} file: {detail}")]
    Format { what: &'static str, detail: String },
}

/// Per-channel min/max recorded at training time and re-applied verbatim at
/// inference time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub min: f64,
    pub max: f64,
}

/// Labeled feature matrix with channel metadata. `labels` may be empty for
/// unlabeled inference-time data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
    pub channel_names: Vec<String>,
    pub normalization: Option<Vec<ChannelStats>>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.features.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    /// Class count: the largest label present.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().copied().unwrap_or(0) as usize
    }

    pub fn is_labeled(&self) -> bool {
        !self.labels.is_empty()
    }

    pub fn channel(&self, index: usize) -> Vec<f64> {
        self.features.iter().map(|row| row[index]).collect()
    }
}

/// Per-channel correlation with the label and its absolute-value rank
/// (rank 1 = strongest). Constant channels have undefined correlation and
/// rank after every defined one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelScore {
    pub index: usize,
    pub name: String,
    pub r: Option<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelRanking {
    /// Scores sorted by rank.
    pub entries: Vec<ChannelScore>,
    /// Indices of the kept channels, ascending (original column order).
    pub selected: Vec<usize>,
    /// Names of the kept channels in the same order as `selected`.
    pub selected_names: Vec<String>,
}

/// Loads a labeled CSV. Every row must supply the label column and numeric
/// values for all remaining columns; failures name the offending data row
/// (1-based, excluding the header).
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset, DataError> {
    read_csv(path.as_ref(), label_column, true)
}

/// Loads a CSV whose label column is optional: present labels are kept,
/// otherwise all columns are treated as features.
pub fn load_features_csv(
    path: impl AsRef<Path>,
    label_column: &str,
) -> Result<Dataset, DataError> {
    read_csv(path.as_ref(), label_column, false)
}

fn read_csv(path: &Path, label_column: &str, require_label: bool) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers.iter().position(|h| h == label_column);
    if require_label && label_idx.is_none() {
        return Err(DataError::MissingLabelColumn(label_column.to_string()));
    }
    let channel_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError::MalformedRow {
            row,
            detail: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(DataError::MalformedRow {
                row,
                detail: format!("expected {} cells, found {}", headers.len(), record.len()),
            });
        }
        let mut feats = Vec::with_capacity(channel_names.len());
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                let label: u32 = cell.parse().map_err(|_| DataError::BadLabel {
                    row,
                    value: cell.to_string(),
                })?;
                if label == 0 {
                    return Err(DataError::BadLabel {
                        row,
                        value: cell.to_string(),
                    });
                }
                labels.push(label);
            } else {
                if cell.is_empty() {
                    return Err(DataError::MalformedRow {
                        row,
                        detail: format!("missing value in column '{}'", &headers[j]),
                    });
                }
                let v: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                    row,
                    column: headers[j].to_string(),
                    value: cell.to_string(),
                })?;
                feats.push(v);
            }
        }
        features.push(feats);
    }
    if features.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Dataset {
        features,
        labels,
        channel_names,
        normalization: None,
    })
}

/// Writes a dataset back to CSV (label column last when labels are present).
pub fn write_csv(
    path: impl AsRef<Path>,
    ds: &Dataset,
    label_column: &str,
) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<&str> = ds.channel_names.iter().map(String::as_str).collect();
    if ds.is_labeled() {
        header.push(label_column);
    }
    writer.write_record(&header)?;
    for (i, row) in ds.features.iter().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if ds.is_labeled() {
            cells.push(ds.labels[i].to_string());
        }
        writer.write_record(&cells)?;
    }
    writer.flush()?;
    Ok(())
}

/// Pearson correlation coefficient between two equal-length vectors.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, DataError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(DataError::LengthMismatch);
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(DataError::UndefinedCorrelation);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Ranks channels by |r| against the numeric label and keeps the top `k`.
/// Ties break on the lower channel index; channels with undefined
/// correlation rank last. The reduced dataset keeps its channels in original
/// column order.
pub fn select_channels(ds: &Dataset, k: usize) -> Result<(Dataset, ChannelRanking), DataError> {
    let channels = ds.n_channels();
    if k == 0 || k > channels {
        return Err(DataError::ChannelCountOutOfRange { k, channels });
    }
    if !ds.is_labeled() {
        return Err(DataError::Empty);
    }
    let labels: Vec<f64> = ds.labels.iter().map(|&l| l as f64).collect();
    let mut scored: Vec<(usize, Option<f64>)> = (0..channels)
        .map(|c| {
            let column = ds.channel(c);
            match pearson(&column, &labels) {
                Ok(r) => (c, Some(r)),
                Err(_) => (c, None),
            }
        })
        .collect();
    scored.sort_by(|a, b| match (a.1, b.1) {
        (Some(ra), Some(rb)) => rb
            .abs()
            .partial_cmp(&ra.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.0.cmp(&b.0),
    });

    let entries: Vec<ChannelScore> = scored
        .iter()
        .enumerate()
        .map(|(rank, &(index, r))| ChannelScore {
            index,
            name: ds.channel_names[index].clone(),
            r,
            rank: rank + 1,
        })
        .collect();

    let mut selected: Vec<usize> = scored.iter().take(k).map(|&(i, _)| i).collect();
    selected.sort_unstable();
    let selected_names = selected
        .iter()
        .map(|&i| ds.channel_names[i].clone())
        .collect();
    let ranking = ChannelRanking {
        entries,
        selected: selected.clone(),
        selected_names,
    };
    Ok((project_channels(ds, &selected), ranking))
}

fn project_channels(ds: &Dataset, indices: &[usize]) -> Dataset {
    Dataset {
        features: ds
            .features
            .iter()
            .map(|row| indices.iter().map(|&i| row[i]).collect())
            .collect(),
        labels: ds.labels.clone(),
        channel_names: indices
            .iter()
            .map(|&i| ds.channel_names[i].clone())
            .collect(),
        normalization: ds
            .normalization
            .as_ref()
            .map(|stats| indices.iter().map(|&i| stats[i]).collect()),
    }
}

/// Reorders/reduces columns by name to match a stored selection.
pub fn project_by_names(ds: &Dataset, names: &[String]) -> Result<Dataset, DataError> {
    let indices = names
        .iter()
        .map(|name| {
            ds.channel_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| DataError::MissingChannel(name.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(project_channels(ds, &indices))
}

fn scale_cell(x: f64, stats: &ChannelStats) -> f64 {
    if stats.max > stats.min {
        ((x - stats.min) / (stats.max - stats.min)).clamp(0.0, 1.0)
    } else {
        // constant channel
        0.5
    }
}

/// Min-max scales every channel to [0, 1] and records the per-channel stats
/// on the returned dataset. Constant channels map to 0.5.
pub fn normalize(ds: &Dataset) -> Dataset {
    let channels = ds.n_channels();
    let mut stats = Vec::with_capacity(channels);
    for c in 0..channels {
        let column = ds.channel(c);
        let min = column.iter().copied().fold(f64::INFINITY, f64::min);
        let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        stats.push(ChannelStats { min, max });
    }
    apply_normalization(ds, &stats).expect("stats were built for this dataset")
}

/// Re-applies stored stats verbatim, clamping out-of-range inference-time
/// values into [0, 1].
pub fn apply_normalization(ds: &Dataset, stats: &[ChannelStats]) -> Result<Dataset, DataError> {
    if stats.len() != ds.n_channels() {
        return Err(DataError::StatsMismatch {
            stats: stats.len(),
            channels: ds.n_channels(),
        });
    }
    let features = ds
        .features
        .iter()
        .map(|row| {
            row.iter()
                .zip(stats)
                .map(|(&x, s)| scale_cell(x, s))
                .collect()
        })
        .collect();
    Ok(Dataset {
        features,
        labels: ds.labels.clone(),
        channel_names: ds.channel_names.clone(),
        normalization: Some(stats.to_vec()),
    })
}

/// Seeded shuffle followed by a partition; train gets `round(n * fraction)`
/// samples.
pub fn split(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::BadFraction(train_fraction));
    }
    let n = ds.n_samples();
    if n == 0 {
        return Err(DataError::Empty);
    }
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(DataError::EmptySplit);
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let take = |idx: &[usize]| Dataset {
        features: idx.iter().map(|&i| ds.features[i].clone()).collect(),
        labels: if ds.is_labeled() {
            idx.iter().map(|&i| ds.labels[i]).collect()
        } else {
            Vec::new()
        },
        channel_names: ds.channel_names.clone(),
        normalization: ds.normalization.clone(),
    };
    Ok((take(&indices[..n_train]), take(&indices[n_train..])))
}

/// Synthetic multi-class dataset: per-class Gaussian blobs with seeded means.
/// Stands in for real recordings in tests and demos.
#[derive(Debug, Clone)]
pub struct BlobSpec {
    pub samples: usize,
    pub channels: usize,
    pub classes: usize,
    /// Width of the uniform box the class means are drawn from, centred at 0.5.
    pub separation: f64,
    /// Standard deviation of the per-channel Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            samples: 12_800,
            channels: 44,
            classes: 4,
            separation: 0.7,
            noise: 0.1,
            seed: 7,
        }
    }
}

pub fn synthetic_blobs(spec: &BlobSpec) -> Dataset {
    assert!(spec.classes >= 1 && spec.channels >= 1);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.channels)
                .map(|_| 0.5 + spec.separation * (rng.gen::<f64>() - 0.5))
                .collect()
        })
        .collect();
    let mut features = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let class = i % spec.classes;
        let row = means[class]
            .iter()
            .map(|&m| m + spec.noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        features.push(row);
        labels.push(class as u32 + 1);
    }
    Dataset {
        features,
        labels,
        channel_names: (0..spec.channels).map(|c| format!("ch{c:02}")).collect(),
        normalization: None,
    }
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    version: u32,
    stats: Vec<ChannelStats>,
}

pub fn save_normalization(
    path: impl AsRef<Path>,
    stats: &[ChannelStats],
) -> Result<(), DataError> {
    let file = StatsFile {
        version: STATS_FILE_VERSION,
        stats: stats.to_vec(),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| DataError::Format {
        what: "normalization",
        detail: e.to_string(),
    })?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_normalization(path: impl AsRef<Path>) -> Result<Vec<ChannelStats>, DataError> {
    let text = std::fs::read_to_string(path)?;
    let file: StatsFile = serde_json::from_str(&text).map_err(|e| DataError::Format {
        what: "normalization",
        detail: e.to_string(),
    })?;
    if file.version != STATS_FILE_VERSION {
        return Err(DataError::Format {
            what: "normalization",
            detail: format!("unsupported version {}", file.version),
        });
    }
    Ok(file.stats)
}

#[derive(Serialize, Deserialize)]
struct RankingFile {
    version: u32,
    #[serde(flatten)]
    ranking: ChannelRanking,
}

pub fn save_ranking(path: impl AsRef<Path>, ranking: &ChannelRanking) -> Result<(), DataError> {
    let file = RankingFile {
        version: STATS_FILE_VERSION,
        ranking: ranking.clone(),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| DataError::Format {
        what: "channels",
        detail: e.to_string(),
    })?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_ranking(path: impl AsRef<Path>) -> Result<ChannelRanking, DataError> {
    let text = std::fs::read_to_string(path)?;
    let file: RankingFile = serde_json::from_str(&text).map_err(|e| DataError::Format {
        what: "channels",
        detail: e.to_string(),
    })?;
    if file.version != STATS_FILE_VERSION {
        return Err(DataError::Format {
            what: "channels",
            detail: format!("unsupported version {}", file.version),
        });
    }
    Ok(file.ranking)
}

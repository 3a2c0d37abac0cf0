//! Core dataset types shared by every pipeline stage: the feature schema,
//! the dense feature matrix, and the preprocessed flow dataset.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Whether a column held raw numbers or was integer-encoded from text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// Ordered feature layout. The order of `feature_names` is the canonical
/// column order for every matrix downstream; indices into any feature
/// matrix refer to this order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub label_column: String,
    /// Columns removed as biased identifiers before training.
    pub dropped_columns: Vec<String>,
}

impl FeatureSchema {
    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    /// Hash binding models to this exact feature layout.
    pub fn fingerprint(&self) -> String {
        fingerprint_names(&self.feature_names)
    }

    /// Schema restricted to the given feature indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureSchema {
        FeatureSchema {
            feature_names: indices.iter().map(|&i| self.feature_names[i].clone()).collect(),
            feature_kinds: indices.iter().map(|&i| self.feature_kinds[i]).collect(),
            label_column: self.label_column.clone(),
            dropped_columns: self.dropped_columns.clone(),
        }
    }
}

/// Fingerprint of an ordered feature-name list.
pub fn fingerprint_names(names: &[String]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(names.len().to_le_bytes());
    for name in names {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Dense row-major matrix of feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Build from a flat row-major buffer. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        assert_eq!(data.len(), rows * cols, "matrix buffer length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Matrix {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for row in &rows {
            assert_eq!(row.len(), cols, "ragged row in matrix construction");
            data.extend_from_slice(row);
        }
        Matrix { rows: n, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major backing slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    /// New matrix keeping only `indices` columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, indices.len());
        for r in 0..self.rows {
            let src = self.row(r);
            for (k, &c) in indices.iter().enumerate() {
                out.set(r, k, src[c]);
            }
        }
        out
    }

    /// New matrix keeping only `rows` (by index), in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix { rows: rows.len(), cols: self.cols, data }
    }

    /// Stack `other` below `self`. Column counts must match.
    pub fn vstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "column count mismatch in vstack");
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Matrix { rows: self.rows + other.rows, cols: self.cols, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Per-categorical-feature map from original text value to integer code.
pub type EncodingMaps = BTreeMap<String, BTreeMap<String, u32>>;

/// Clean, numerically encoded dataset: the unit every stage consumes.
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct FlowDataset {
    pub schema: FeatureSchema,
    pub features: Matrix,
    /// 0 = normal traffic, 1 = initial-compromise traffic.
    pub labels: Vec<u8>,
    /// Rows removed for missing or non-finite values during preprocessing.
    pub dropped_row_count: usize,
    pub encoding_maps: EncodingMaps,
}

impl FlowDataset {
    pub fn row_count(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_count(&self) -> usize {
        self.schema.feature_count()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        (self.labels.len() - pos, pos)
    }

    /// Dataset restricted to the given feature columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> FlowDataset {
        let schema = self.schema.select(indices);
        let encoding_maps = self
            .encoding_maps
            .iter()
            .filter(|(name, _)| schema.feature_names.iter().any(|n| n == *name))
            .map(|(name, map)| (name.clone(), map.clone()))
            .collect();
        FlowDataset {
            schema,
            features: self.features.select_columns(indices),
            labels: self.labels.clone(),
            dropped_row_count: self.dropped_row_count,
            encoding_maps,
        }
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FlowDataset {
        FlowDataset {
            schema: self.schema.clone(),
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            dropped_row_count: self.dropped_row_count,
            encoding_maps: self.encoding_maps.clone(),
        }
    }
}

/// Stratified train/test partition of a source dataset.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: FlowDataset,
    pub test: FlowDataset,
    pub seed: u64,
    pub train_fraction: f64,
    pub stratified: bool,
}

impl DatasetSplit {
    /// Split with both sides restricted to the given feature columns.
    pub fn select_columns(&self, indices: &[usize]) -> DatasetSplit {
        DatasetSplit {
            train: self.train.select_columns(indices),
            test: self.test.select_columns(indices),
            seed: self.seed,
            train_fraction: self.train_fraction,
            stratified: self.stratified,
        }
    }
}

//! Second-order gradient-boosted decision trees with logistic loss.
//!
//! Training is exact-greedy (sorted values, midpoint thresholds) with no
//! sampling of any kind, so a fixed `(dataset, config)` pair always yields
//! the same model, bit for bit, regardless of thread count.

mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Matrix;
use crate::exec::par_map_indexed;
use crate::util::{logit, sigmoid};

pub use train::fit;

#[derive(Debug, Error)]
pub enum GbtError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("single-class labels")]
    SingleClass,
    #[error("feature count mismatch: model expects {expected}, input has {got}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("non-finite input cell at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("decision threshold {0} must lie strictly between 0 and 1")]
    BadThreshold(f64),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
}

/// Training hyperparameters. Defaults follow the reference boosting
/// system: learning rate 0.3, depth 6, 100 rounds, λ = 1, min child
/// hessian 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub num_rounds: usize,
    pub l2_leaf_penalty: f64,
    pub min_child_hessian: f64,
    pub base_probability: f64,
    /// Recorded for provenance; training itself is sampling-free and does
    /// not consume randomness.
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            learning_rate: 0.3,
            max_depth: 6,
            num_rounds: 100,
            l2_leaf_penalty: 1.0,
            min_child_hessian: 1.0,
            base_probability: 0.5,
            seed: 0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<(), GbtError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GbtError::BadConfig(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.max_depth < 1 {
            return Err(GbtError::BadConfig("max_depth must be at least 1".into()));
        }
        if self.num_rounds < 1 {
            return Err(GbtError::BadConfig("num_rounds must be at least 1".into()));
        }
        if !(self.l2_leaf_penalty >= 0.0 && self.l2_leaf_penalty.is_finite()) {
            return Err(GbtError::BadConfig(format!(
                "l2_leaf_penalty {} must be non-negative",
                self.l2_leaf_penalty
            )));
        }
        if !(self.min_child_hessian >= 0.0 && self.min_child_hessian.is_finite()) {
            return Err(GbtError::BadConfig(format!(
                "min_child_hessian {} must be non-negative",
                self.min_child_hessian
            )));
        }
        if !(self.base_probability > 0.0 && self.base_probability < 1.0) {
            return Err(GbtError::BadConfig(format!(
                "base_probability {} must lie strictly between 0 and 1",
                self.base_probability
            )));
        }
        Ok(())
    }
}

/// One tree node. Samples route left iff `x[feature] < threshold`; inputs
/// are guaranteed finite so there is no missing-value direction.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Sum of hessians routed through this node; equals the sum of the
        /// children's covers exactly.
        cover: f64,
        /// Split gain, kept for gain-based importance.
        gain: f64,
    },
    Leaf {
        /// Margin contribution, shrinkage already applied.
        value: f64,
        cover: f64,
    },
}

/// A decision tree stored as a flat node array, root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Margin contribution of this tree for one sample.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Internal { feature, threshold, left, right, .. } => {
                    idx = if row[*feature] < *threshold { *left } else { *right };
                }
                Node::Leaf { value, .. } => return *value,
            }
        }
    }

    /// Depth of the deepest node, with a root-only tree having depth 0.
    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((idx, d)) = stack.pop() {
            max = max.max(d);
            if let Node::Internal { left, right, .. } = &self.nodes[idx] {
                stack.push((*left, d + 1));
                stack.push((*right, d + 1));
            }
        }
        max
    }
}

/// Trained boosted ensemble bound to the feature schema it was fit on.
#[derive(Debug, Clone)]
pub struct GbtModel {
    pub trees: Vec<Tree>,
    /// logit(base_probability); every margin starts here.
    pub base_margin: f64,
    pub config: GbtConfig,
    pub schema_fingerprint: String,
    pub feature_names: Vec<String>,
    /// Mean training logistic loss before boosting and after each round
    /// (length num_rounds + 1).
    pub train_loss: Vec<f64>,
}

impl GbtModel {
    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    fn check_input(&self, features: &Matrix) -> Result<(), GbtError> {
        if features.cols() != self.feature_count() {
            return Err(GbtError::ColumnMismatch {
                expected: self.feature_count(),
                got: features.cols(),
            });
        }
        for r in 0..features.rows() {
            for (c, v) in features.row(r).iter().enumerate() {
                if !v.is_finite() {
                    return Err(GbtError::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(())
    }

    /// Raw log-odds score per row: base margin plus every tree's leaf.
    pub fn predict_margin(&self, features: &Matrix) -> Result<Vec<f64>, GbtError> {
        self.check_input(features)?;
        Ok(par_map_indexed(features.rows(), |r| {
            let row = features.row(r);
            self.base_margin + self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
        }))
    }

    pub fn predict_proba(&self, features: &Matrix) -> Result<Vec<f64>, GbtError> {
        Ok(self.predict_margin(features)?.into_iter().map(sigmoid).collect())
    }

    /// 1 iff probability ≥ threshold.
    pub fn predict_label(&self, features: &Matrix, threshold: f64) -> Result<Vec<u8>, GbtError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(GbtError::BadThreshold(threshold));
        }
        Ok(self
            .predict_proba(features)?
            .into_iter()
            .map(|p| u8::from(p >= threshold))
            .collect())
    }

    /// Total split gain per feature across the ensemble.
    pub fn gain_importance(&self) -> Vec<f64> {
        let mut scores = vec![0.0; self.feature_count()];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Internal { feature, gain, .. } = node {
                    scores[*feature] += gain;
                }
            }
        }
        scores
    }

    /// Assemble a model directly from parts (fixtures, tests).
    pub fn from_trees(
        trees: Vec<Tree>,
        base_probability: f64,
        feature_names: Vec<String>,
    ) -> GbtModel {
        let config = GbtConfig { base_probability, ..GbtConfig::default() };
        GbtModel {
            trees,
            base_margin: logit(base_probability),
            schema_fingerprint: crate::data::fingerprint_names(&feature_names),
            feature_names,
            config,
            train_loss: Vec::new(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GbtError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| GbtError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut writer, &ModelFile::from_model(self))?;
        writer.write_all(b"\n").map_err(|source| GbtError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GbtModel, GbtError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| GbtError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let raw: ModelFile = serde_json::from_reader(BufReader::new(file))?;
        raw.into_model()
    }
}

const FORMAT_VERSION: u32 = 1;

/// On-disk node record: one line of the flat per-tree array.
#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    cover: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gain: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    config: GbtConfig,
    base_margin: f64,
    schema_fingerprint: String,
    feature_names: Vec<String>,
    train_loss: Vec<f64>,
    trees: Vec<Vec<NodeRecord>>,
}

impl ModelFile {
    fn from_model(model: &GbtModel) -> ModelFile {
        let trees = model
            .trees
            .iter()
            .map(|tree| {
                tree.nodes
                    .iter()
                    .enumerate()
                    .map(|(id, node)| match node {
                        Node::Internal { feature, threshold, left, right, cover, gain } => {
                            NodeRecord {
                                id,
                                kind: "internal".into(),
                                feature: Some(*feature),
                                threshold: Some(*threshold),
                                left: Some(*left),
                                right: Some(*right),
                                value: None,
                                cover: *cover,
                                gain: Some(*gain),
                            }
                        }
                        Node::Leaf { value, cover } => NodeRecord {
                            id,
                            kind: "leaf".into(),
                            feature: None,
                            threshold: None,
                            left: None,
                            right: None,
                            value: Some(*value),
                            cover: *cover,
                            gain: None,
                        },
                    })
                    .collect()
            })
            .collect();
        ModelFile {
            format_version: FORMAT_VERSION,
            config: model.config.clone(),
            base_margin: model.base_margin,
            schema_fingerprint: model.schema_fingerprint.clone(),
            feature_names: model.feature_names.clone(),
            train_loss: model.train_loss.clone(),
            trees,
        }
    }

    fn into_model(self) -> Result<GbtModel, GbtError> {
        if self.format_version != FORMAT_VERSION {
            return Err(GbtError::CorruptModel(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let feature_count = self.feature_names.len();
        let mut trees = Vec::with_capacity(self.trees.len());
        for (t, records) in self.trees.iter().enumerate() {
            let mut nodes = Vec::with_capacity(records.len());
            for (i, rec) in records.iter().enumerate() {
                if rec.id != i {
                    return Err(GbtError::CorruptModel(format!(
                        "tree {t}: node id {} at position {i}",
                        rec.id
                    )));
                }
                let node = match rec.kind.as_str() {
                    "internal" => {
                        let (feature, threshold, left, right) = match (rec.feature, rec.threshold, rec.left, rec.right) {
                            (Some(f), Some(th), Some(l), Some(r)) => (f, th, l, r),
                            _ => {
                                return Err(GbtError::CorruptModel(format!(
                                    "tree {t}, node {i}: internal node missing fields"
                                )))
                            }
                        };
                        if feature >= feature_count {
                            return Err(GbtError::CorruptModel(format!(
                                "tree {t}, node {i}: feature index {feature} out of range"
                            )));
                        }
                        if left >= records.len() || right >= records.len() || left <= i || right <= i {
                            return Err(GbtError::CorruptModel(format!(
                                "tree {t}, node {i}: child ids {left}/{right} invalid"
                            )));
                        }
                        if !threshold.is_finite() {
                            return Err(GbtError::CorruptModel(format!(
                                "tree {t}, node {i}: non-finite threshold"
                            )));
                        }
                        Node::Internal {
                            feature,
                            threshold,
                            left,
                            right,
                            cover: rec.cover,
                            gain: rec.gain.unwrap_or(0.0),
                        }
                    }
                    "leaf" => {
                        let value = rec.value.ok_or_else(|| {
                            GbtError::CorruptModel(format!("tree {t}, node {i}: leaf missing value"))
                        })?;
                        Node::Leaf { value, cover: rec.cover }
                    }
                    other => {
                        return Err(GbtError::CorruptModel(format!(
                            "tree {t}, node {i}: unknown kind {other:?}"
                        )))
                    }
                };
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(GbtError::CorruptModel(format!("tree {t} has no nodes")));
            }
            trees.push(Tree { nodes });
        }
        Ok(GbtModel {
            trees,
            base_margin: self.base_margin,
            config: self.config,
            schema_fingerprint: self.schema_fingerprint,
            feature_names: self.feature_names,
            train_loss: self.train_loss,
        })
    }
}

//! Gradient-boosted detection of initial-compromise network flows with
//! exact Shapley attributions and feature-selection tooling.
//!
//! The pipeline: ingest CICFlowMeter-style CSV exports ([`flows`]), train a
//! second-order boosted-tree classifier ([`gbt`]), attribute predictions to
//! features with tree-path-dependent Shapley values ([`treeshap`]), and
//! reduce the feature set by wrapper or filter selection ([`selection`]).
//! [`synth`] generates planted-signal corpora for end-to-end checks.
//!
//! With the default `parallel` feature, per-sample and per-feature work is
//! distributed with rayon; outputs are index-ordered so results are
//! byte-identical across thread counts and with the sequential build.

pub mod data;
pub(crate) mod exec;
pub mod flows;
pub mod gbt;
pub mod metrics;
pub mod selection;
pub mod synth;
#[cfg(any(test, feature = "test-util"))]
pub mod testutil;
pub mod treeshap;
pub mod util;

pub use data::{DatasetSplit, FeatureKind, FeatureSchema, FlowDataset, Matrix};
pub use flows::{FlowsError, PreprocessOptions, Preprocessed, RawTable};
pub use gbt::{GbtConfig, GbtError, GbtModel, Node, Tree};
pub use metrics::{ConfusionMatrix, MetricTriple, MetricsError};
pub use selection::{ExplainScope, SelectionError, SelectionMethod, SelectionResult};
pub use synth::{SynthError, SynthSpec};
pub use treeshap::{ImportanceRanking, ShapError, ShapMatrix};

//! Synthetic flow-shaped datasets with planted informative features, for
//! exercising the full pipeline with known ground truth.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::data::{FeatureKind, FeatureSchema, FlowDataset, Matrix};
use crate::exec::par_map_indexed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least one feature")]
    NoFeatures,
    #[error("informative index {index} out of range for {n_features} features")]
    BadIndex { index: usize, n_features: usize },
    #[error("duplicate informative feature index {0}")]
    DuplicateIndex(usize),
    #[error("sample counts must be at least 1 per class")]
    BadCounts,
    #[error("noise sigma {0} must be positive and finite")]
    BadSigma(f64),
    #[error("{got} feature names provided for {expected} features")]
    BadNames { got: usize, expected: usize },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Recipe for one synthetic dataset.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_features: usize,
    /// (feature index, class-1 mean shift in units of `noise_sigma`).
    pub informative: Vec<(usize, f64)>,
    pub n_normal: usize,
    pub n_positive: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Defaults to F0..F{n−1}; pass [`cic_feature_names`] for
    /// schema-compatible fixtures.
    pub feature_names: Option<Vec<String>>,
    /// When set, positives are dealt round-robin across the informative
    /// features and each positive is shifted on its own feature only.
    /// Makes every planted feature individually necessary — with the
    /// default all-columns shift, one strong feature is enough to separate
    /// the classes and a forward selection legitimately stops early.
    pub partition_positives: bool,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_features == 0 {
            return Err(SynthError::NoFeatures);
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(index, _) in &self.informative {
            if index >= self.n_features {
                return Err(SynthError::BadIndex { index, n_features: self.n_features });
            }
            if !seen.insert(index) {
                return Err(SynthError::DuplicateIndex(index));
            }
        }
        if self.n_normal == 0 || self.n_positive == 0 {
            return Err(SynthError::BadCounts);
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(SynthError::BadSigma(self.noise_sigma));
        }
        if let Some(names) = &self.feature_names {
            if names.len() != self.n_features {
                return Err(SynthError::BadNames {
                    got: names.len(),
                    expected: self.n_features,
                });
            }
        }
        Ok(())
    }
}

/// Generate the dataset: noise columns ~ Normal(0, σ²) for both classes,
/// informative columns with the class-1 mean shifted. Each column draws
/// from its own seeded stream, so column-parallel generation is
/// byte-identical to sequential.
pub fn generate(spec: &SynthSpec) -> Result<FlowDataset, SynthError> {
    spec.validate()?;
    let n = spec.n_normal + spec.n_positive;
    let shift_of: BTreeMap<usize, f64> = spec.informative.iter().copied().collect();
    // positive p owns informative feature p mod k in partition mode
    let owner_of = |row: usize| -> usize {
        let p = row - spec.n_normal;
        spec.informative[p % spec.informative.len()].0
    };

    let columns: Vec<Vec<f64>> = par_map_indexed(spec.n_features, |j| {
        let mut rng =
            ChaCha8Rng::seed_from_u64(spec.seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let normal = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        let shift = shift_of.get(&j).map_or(0.0, |s| s * spec.noise_sigma);
        (0..n)
            .map(|r| {
                let mut v: f64 = normal.sample(&mut rng);
                let positive = r >= spec.n_normal;
                if positive && shift != 0.0 {
                    let applies = !spec.partition_positives || owner_of(r) == j;
                    if applies {
                        v += shift;
                    }
                }
                v
            })
            .collect()
    });

    let mut features = Matrix::zeros(n, spec.n_features);
    for (j, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            features.set(r, j, v);
        }
    }
    let labels: Vec<u8> = (0..n).map(|r| u8::from(r >= spec.n_normal)).collect();
    let feature_names = spec
        .feature_names
        .clone()
        .unwrap_or_else(|| (0..spec.n_features).map(|i| format!("F{i}")).collect());
    Ok(FlowDataset {
        schema: FeatureSchema {
            feature_kinds: vec![FeatureKind::Numeric; feature_names.len()],
            feature_names,
            label_column: "Label".into(),
            dropped_columns: vec![],
        },
        features,
        labels,
        dropped_row_count: 0,
        encoding_maps: BTreeMap::new(),
    })
}

/// The 77 flow-statistics column names of CICFlowMeter exports (the 84
/// column layout minus the six endpoint identifiers and the label).
pub fn cic_feature_names() -> Vec<String> {
    const NAMES: [&str; 77] = [
        "Protocol",
        "Flow Duration",
        "Total Fwd Packet",
        "Total Bwd packets",
        "Total Length of Fwd Packet",
        "Total Length of Bwd Packet",
        "Fwd Packet Length Max",
        "Fwd Packet Length Min",
        "Fwd Packet Length Mean",
        "Fwd Packet Length Std",
        "Bwd Packet Length Max",
        "Bwd Packet Length Min",
        "Bwd Packet Length Mean",
        "Bwd Packet Length Std",
        "Flow Bytes/s",
        "Flow Packets/s",
        "Flow IAT Mean",
        "Flow IAT Std",
        "Flow IAT Max",
        "Flow IAT Min",
        "Fwd IAT Total",
        "Fwd IAT Mean",
        "Fwd IAT Std",
        "Fwd IAT Max",
        "Fwd IAT Min",
        "Bwd IAT Total",
        "Bwd IAT Mean",
        "Bwd IAT Std",
        "Bwd IAT Max",
        "Bwd IAT Min",
        "Fwd PSH Flags",
        "Bwd PSH Flags",
        "Fwd URG Flags",
        "Bwd URG Flags",
        "Fwd Header Length",
        "Bwd Header Length",
        "Fwd Packets/s",
        "Bwd Packets/s",
        "Packet Length Min",
        "Packet Length Max",
        "Packet Length Mean",
        "Packet Length Std",
        "Packet Length Variance",
        "FIN Flag Count",
        "SYN Flag Count",
        "RST Flag Count",
        "PSH Flag Count",
        "ACK Flag Count",
        "URG Flag Count",
        "CWR Flag Count",
        "ECE Flag Count",
        "Down/Up Ratio",
        "Average Packet Size",
        "Fwd Segment Size Avg",
        "Bwd Segment Size Avg",
        "Fwd Bytes/Bulk Avg",
        "Fwd Packet/Bulk Avg",
        "Fwd Bulk Rate Avg",
        "Bwd Bytes/Bulk Avg",
        "Bwd Packet/Bulk Avg",
        "Bwd Bulk Rate Avg",
        "Subflow Fwd Packets",
        "Subflow Fwd Bytes",
        "Subflow Bwd Packets",
        "Subflow Bwd Bytes",
        "FWD Init Win Bytes",
        "Bwd Init Win Bytes",
        "Fwd Act Data Pkts",
        "Fwd Seg Size Min",
        "Active Mean",
        "Active Std",
        "Active Max",
        "Active Min",
        "Idle Mean",
        "Idle Std",
        "Idle Max",
        "Idle Min",
    ];
    NAMES.iter().map(|s| s.to_string()).collect()
}

/// Write the dataset in the CSV layout the ingestion side expects, with
/// text class tags; `with_identifiers` prepends six dummy endpoint
/// columns to mimic a raw capture export.
pub fn write_flow_csv(
    path: impl AsRef<Path>,
    dataset: &FlowDataset,
    with_identifiers: bool,
) -> Result<(), SynthError> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = Vec::new();
    if with_identifiers {
        for name in crate::flows::DEFAULT_IDENTIFIER_COLUMNS {
            header.push(name.to_string());
        }
    }
    header.extend(dataset.schema.feature_names.iter().cloned());
    header.push(dataset.schema.label_column.clone());
    writer.write_record(&header)?;

    for r in 0..dataset.row_count() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        if with_identifiers {
            record.push(format!("flow-{r}"));
            record.push(format!("2026-01-01 00:00:{:02}", r % 60));
            record.push("10.0.0.1".into());
            record.push("10.0.0.2".into());
            record.push((1024 + r % 50_000).to_string());
            record.push("443".into());
        }
        for v in dataset.features.row(r) {
            record.push(v.to_string());
        }
        record.push(if dataset.labels[r] == 0 { "Normal" } else { "Initial Compromise" }.into());
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

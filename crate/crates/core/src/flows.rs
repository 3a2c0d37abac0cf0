//! Flow-record ingestion: CSV loading, preprocessing (identifier removal,
//! stage isolation, missing-value removal, label encoding) and the
//! deterministic stratified train/test split.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    DatasetSplit, EncodingMaps, FeatureKind, FeatureSchema, FlowDataset, Matrix,
};

/// Identifier columns removed by default, matched case-insensitively and
/// ignoring internal spaces.
pub const DEFAULT_IDENTIFIER_COLUMNS: [&str; 6] =
    ["Flow ID", "Timestamp", "Src IP", "Dst IP", "Src Port", "Dst Port"];

/// Default label-column name in CICFlowMeter exports.
pub const DEFAULT_LABEL_COLUMN: &str = "Label";

/// Default tags accepted as the normal class.
pub const DEFAULT_NORMAL_TAGS: [&str; 3] = ["Normal", "NormalTraffic", "Benign"];

/// Default tags accepted as the initial-compromise class.
pub const DEFAULT_POSITIVE_TAGS: [&str; 3] = ["Initial Compromise", "InitialCompromise", "IC"];

#[derive(Debug, Error)]
pub enum FlowsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("file {path} is empty")]
    EmptyFile { path: String },
    #[error("row {row} has {got} cells but the header has {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("duplicate header name {name:?}")]
    DuplicateHeader { name: String },
    #[error("label column {requested:?} not found; available columns: {available:?}")]
    LabelColumnMissing { requested: String, available: Vec<String> },
    #[error("identifier column {name:?} not found in header")]
    IdentifierColumnMissing { name: String },
    #[error("no rows remain after filtering (labels matched: {matched}, dropped for missing values: {dropped})")]
    NoRowsRemain { matched: usize, dropped: usize },
    #[error("class {class} has {count} samples; at least 2 are required to split")]
    ClassTooSmall { class: u8, count: usize },
    #[error("train fraction {fraction} must lie strictly between 0 and 1")]
    BadTrainFraction { fraction: f64 },
    #[error("split leaves class {class} empty on the {side} side")]
    DegenerateSplit { class: u8, side: &'static str },
    #[error("split directory {path} is missing {file}")]
    SplitFileMissing { path: String, file: String },
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("{file}: row {row}, column {column:?}: cannot parse {value:?} as a number")]
    BadNumericCell { file: String, row: usize, column: String, value: String },
}

/// In-memory text table straight from a CSV file.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn column_count(&self) -> usize {
        self.headers.len()
    }
}

/// Read an RFC-4180 CSV with a header row into a text table. Header names
/// are trimmed of surrounding whitespace.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawTable, FlowsError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| FlowsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));

    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(FlowsError::EmptyFile { path: path.display().to_string() });
    }
    let mut seen = BTreeSet::new();
    for name in &headers {
        if !seen.insert(name.clone()) {
            return Err(FlowsError::DuplicateHeader { name: name.clone() });
        }
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            // data rows are 1-based, after the header
            return Err(FlowsError::RaggedRow {
                row: i + 1,
                got: record.len(),
                expected: headers.len(),
            });
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(RawTable { headers, rows })
}

/// How to treat a declared identifier column that is absent from the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingIdentifierPolicy {
    #[default]
    Warn,
    Error,
}

/// Column-name and label-tag overrides for [`preprocess`].
#[derive(Debug, Clone)]
pub struct PreprocessOptions {
    pub label_column: String,
    /// Columns dropped as biased identifiers.
    pub drop_columns: Vec<String>,
    pub normal_tags: Vec<String>,
    pub positive_tags: Vec<String>,
    pub missing_identifier_policy: MissingIdentifierPolicy,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            label_column: DEFAULT_LABEL_COLUMN.to_string(),
            drop_columns: DEFAULT_IDENTIFIER_COLUMNS.iter().map(|s| s.to_string()).collect(),
            normal_tags: DEFAULT_NORMAL_TAGS.iter().map(|s| s.to_string()).collect(),
            positive_tags: DEFAULT_POSITIVE_TAGS.iter().map(|s| s.to_string()).collect(),
            missing_identifier_policy: MissingIdentifierPolicy::Warn,
        }
    }
}

/// Result of preprocessing plus any non-fatal diagnostics.
#[derive(Debug)]
pub struct Preprocessed {
    pub dataset: FlowDataset,
    pub warnings: Vec<String>,
}

/// Lowercase and strip internal spaces, for forgiving column/tag matching.
pub fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

/// A cell parses as a number if Rust's float grammar accepts it
/// (including `Infinity` and `NaN` spellings CICFlowMeter emits).
fn parse_numeric(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

/// Apply the preprocessing pipeline: drop identifier and label columns
/// from the feature set, isolate the two stages of interest, remove rows
/// with missing or non-finite values, and integer-encode categoricals.
pub fn preprocess(table: &RawTable, options: &PreprocessOptions) -> Result<Preprocessed, FlowsError> {
    let mut warnings = Vec::new();
    let norm_headers: Vec<String> = table.headers.iter().map(|h| normalize_name(h)).collect();

    let label_idx = norm_headers
        .iter()
        .position(|h| *h == normalize_name(&options.label_column))
        .ok_or_else(|| FlowsError::LabelColumnMissing {
            requested: options.label_column.clone(),
            available: table.headers.clone(),
        })?;

    let mut dropped_indices = BTreeSet::new();
    let mut dropped_columns = Vec::new();
    for wanted in &options.drop_columns {
        match norm_headers.iter().position(|h| *h == normalize_name(wanted)) {
            Some(idx) if idx != label_idx => {
                if dropped_indices.insert(idx) {
                    dropped_columns.push(table.headers[idx].clone());
                }
            }
            Some(_) => {}
            None => match options.missing_identifier_policy {
                MissingIdentifierPolicy::Warn => {
                    warnings.push(format!("identifier column {wanted:?} not found in header"));
                }
                MissingIdentifierPolicy::Error => {
                    return Err(FlowsError::IdentifierColumnMissing { name: wanted.clone() });
                }
            },
        }
    }

    let feature_indices: Vec<usize> = (0..table.headers.len())
        .filter(|i| *i != label_idx && !dropped_indices.contains(i))
        .collect();

    // Stage isolation: keep only rows tagged as one of the two classes.
    let normal: BTreeSet<String> = options.normal_tags.iter().map(|t| normalize_name(t)).collect();
    let positive: BTreeSet<String> = options.positive_tags.iter().map(|t| normalize_name(t)).collect();
    let mut kept: Vec<(usize, u8)> = Vec::new();
    for (r, row) in table.rows.iter().enumerate() {
        let tag = normalize_name(&row[label_idx]);
        if positive.contains(&tag) {
            kept.push((r, 1));
        } else if normal.contains(&tag) {
            kept.push((r, 0));
        }
    }
    if kept.is_empty() {
        return Err(FlowsError::NoRowsRemain { matched: 0, dropped: 0 });
    }

    // A column is categorical iff any non-blank cell fails numeric parsing.
    let kinds: Vec<FeatureKind> = feature_indices
        .iter()
        .map(|&c| {
            let categorical = kept.iter().any(|&(r, _)| {
                let cell = table.rows[r][c].trim();
                !cell.is_empty() && parse_numeric(cell).is_none()
            });
            if categorical { FeatureKind::Categorical } else { FeatureKind::Numeric }
        })
        .collect();

    // Missing-value removal: blank cells anywhere, non-finite numerics.
    let mut surviving: Vec<(usize, u8)> = Vec::new();
    for &(r, y) in &kept {
        let complete = feature_indices.iter().zip(kinds.iter()).all(|(&c, kind)| {
            let cell = table.rows[r][c].trim();
            if cell.is_empty() {
                return false;
            }
            match kind {
                FeatureKind::Numeric => parse_numeric(cell).is_some_and(f64::is_finite),
                FeatureKind::Categorical => true,
            }
        });
        if complete {
            surviving.push((r, y));
        }
    }
    let dropped_row_count = kept.len() - surviving.len();
    if surviving.is_empty() {
        return Err(FlowsError::NoRowsRemain { matched: kept.len(), dropped: dropped_row_count });
    }

    // Integer-encode categoricals in lexicographic order of observed values.
    let mut encoding_maps: EncodingMaps = BTreeMap::new();
    for (k, &c) in feature_indices.iter().enumerate() {
        if kinds[k] == FeatureKind::Categorical {
            let distinct: BTreeSet<String> = surviving
                .iter()
                .map(|&(r, _)| table.rows[r][c].trim().to_string())
                .collect();
            let map: BTreeMap<String, u32> = distinct
                .into_iter()
                .enumerate()
                .map(|(code, value)| (value, code as u32))
                .collect();
            encoding_maps.insert(table.headers[c].clone(), map);
        }
    }

    let mut features = Matrix::zeros(surviving.len(), feature_indices.len());
    let mut labels = Vec::with_capacity(surviving.len());
    for (out_r, &(r, y)) in surviving.iter().enumerate() {
        for (k, &c) in feature_indices.iter().enumerate() {
            let cell = table.rows[r][c].trim();
            let value = match kinds[k] {
                FeatureKind::Numeric => parse_numeric(cell).expect("filtered above"),
                FeatureKind::Categorical => {
                    f64::from(encoding_maps[&table.headers[c]][cell])
                }
            };
            features.set(out_r, k, value);
        }
        labels.push(y);
    }

    let schema = FeatureSchema {
        feature_names: feature_indices.iter().map(|&c| table.headers[c].clone()).collect(),
        feature_kinds: kinds,
        label_column: table.headers[label_idx].clone(),
        dropped_columns,
    };
    Ok(Preprocessed {
        dataset: FlowDataset { schema, features, labels, dropped_row_count, encoding_maps },
        warnings,
    })
}

/// Deterministic train/test split. With `stratified` the per-class train
/// share is `round(train_fraction * class_count)`; otherwise a single
/// global shuffle is cut at `round(train_fraction * row_count)`.
pub fn split(
    dataset: &FlowDataset,
    seed: u64,
    train_fraction: f64,
    stratified: bool,
) -> Result<DatasetSplit, FlowsError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(FlowsError::BadTrainFraction { fraction: train_fraction });
    }
    let (n0, n1) = dataset.class_counts();
    for (class, count) in [(0u8, n0), (1u8, n1)] {
        if count < 2 {
            return Err(FlowsError::ClassTooSmall { class, count });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_rows: Vec<usize>;
    let mut test_rows: Vec<usize>;
    if stratified {
        train_rows = Vec::new();
        test_rows = Vec::new();
        for class in [0u8, 1u8] {
            let mut rows: Vec<usize> = (0..dataset.row_count())
                .filter(|&r| dataset.labels[r] == class)
                .collect();
            rows.shuffle(&mut rng);
            let take = (train_fraction * rows.len() as f64).round() as usize;
            if take == 0 {
                return Err(FlowsError::DegenerateSplit { class, side: "train" });
            }
            if take == rows.len() {
                return Err(FlowsError::DegenerateSplit { class, side: "test" });
            }
            train_rows.extend_from_slice(&rows[..take]);
            test_rows.extend_from_slice(&rows[take..]);
        }
    } else {
        let mut rows: Vec<usize> = (0..dataset.row_count()).collect();
        rows.shuffle(&mut rng);
        let take = (train_fraction * rows.len() as f64).round() as usize;
        train_rows = rows[..take].to_vec();
        test_rows = rows[take..].to_vec();
        for (side, chosen) in [("train", &train_rows), ("test", &test_rows)] {
            for class in [0u8, 1u8] {
                if !chosen.iter().any(|&r| dataset.labels[r] == class) {
                    return Err(FlowsError::DegenerateSplit { class, side });
                }
            }
        }
    }
    // Keep source row order within each side for stable output files.
    train_rows.sort_unstable();
    test_rows.sort_unstable();

    Ok(DatasetSplit {
        train: dataset.select_rows(&train_rows),
        test: dataset.select_rows(&test_rows),
        seed,
        train_fraction,
        stratified,
    })
}

/// Per-side class counts recorded in the dataset manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub normal: usize,
    pub positive: usize,
}

/// Everything needed to reproduce a prepared split exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: FeatureSchema,
    pub encoding_maps: EncodingMaps,
    pub dropped_row_count: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub stratified: bool,
    pub train_counts: ClassCounts,
    pub test_counts: ClassCounts,
    /// SHA-256 of the source CSV, when known.
    pub source_digest: Option<String>,
}

impl DatasetManifest {
    pub fn from_split(split: &DatasetSplit, source_digest: Option<String>) -> DatasetManifest {
        let (tr0, tr1) = split.train.class_counts();
        let (te0, te1) = split.test.class_counts();
        DatasetManifest {
            schema: split.train.schema.clone(),
            encoding_maps: split.train.encoding_maps.clone(),
            dropped_row_count: split.train.dropped_row_count,
            seed: split.seed,
            train_fraction: split.train_fraction,
            stratified: split.stratified,
            train_counts: ClassCounts { normal: tr0, positive: tr1 },
            test_counts: ClassCounts { normal: te0, positive: te1 },
            source_digest,
        }
    }
}

pub const MANIFEST_FILE: &str = "dataset.json";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";

/// Write `dataset.json`, `train.csv` and `test.csv` under `dir`.
pub fn save_split(
    dir: impl AsRef<Path>,
    split: &DatasetSplit,
    source_digest: Option<String>,
) -> Result<Vec<String>, FlowsError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| FlowsError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let manifest = DatasetManifest::from_split(split, source_digest);
    let manifest_path = dir.join(MANIFEST_FILE);
    let file = File::create(&manifest_path).map_err(|source| FlowsError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, &manifest)?;
    writer.write_all(b"\n").map_err(|source| FlowsError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;

    write_side(&dir.join(TRAIN_FILE), &split.train)?;
    write_side(&dir.join(TEST_FILE), &split.test)?;
    Ok(vec![
        MANIFEST_FILE.to_string(),
        TRAIN_FILE.to_string(),
        TEST_FILE.to_string(),
    ])
}

fn write_side(path: &Path, dataset: &FlowDataset) -> Result<(), FlowsError> {
    let mut writer = csv::Writer::from_path(path).map_err(FlowsError::Csv)?;
    let mut header: Vec<&str> = dataset.schema.feature_names.iter().map(String::as_str).collect();
    header.push(&dataset.schema.label_column);
    writer.write_record(&header)?;
    for r in 0..dataset.row_count() {
        let mut record: Vec<String> =
            dataset.features.row(r).iter().map(|v| v.to_string()).collect();
        record.push(dataset.labels[r].to_string());
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|source| FlowsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Load a split previously written by [`save_split`].
pub fn load_split(dir: impl AsRef<Path>) -> Result<(DatasetSplit, DatasetManifest), FlowsError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(FlowsError::SplitFileMissing {
            path: dir.display().to_string(),
            file: MANIFEST_FILE.to_string(),
        });
    }
    let file = File::open(&manifest_path).map_err(|source| FlowsError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let manifest: DatasetManifest = serde_json::from_reader(BufReader::new(file))?;

    let train = read_side(&dir.join(TRAIN_FILE), &manifest)?;
    let test = read_side(&dir.join(TEST_FILE), &manifest)?;
    Ok((
        DatasetSplit {
            train,
            test,
            seed: manifest.seed,
            train_fraction: manifest.train_fraction,
            stratified: manifest.stratified,
        },
        manifest,
    ))
}

fn read_side(path: &Path, manifest: &DatasetManifest) -> Result<FlowDataset, FlowsError> {
    if !path.exists() {
        return Err(FlowsError::SplitFileMissing {
            path: path.parent().unwrap_or(Path::new(".")).display().to_string(),
            file: path.file_name().unwrap_or_default().to_string_lossy().to_string(),
        });
    }
    let table = load_csv(path)?;
    let expected = manifest.schema.feature_count() + 1;
    if table.column_count() != expected {
        return Err(FlowsError::RaggedRow { row: 0, got: table.column_count(), expected });
    }
    let cols = manifest.schema.feature_count();
    let mut features = Matrix::zeros(table.rows.len(), cols);
    let mut labels = Vec::with_capacity(table.rows.len());
    let file_name = path.display().to_string();
    for (r, row) in table.rows.iter().enumerate() {
        for c in 0..cols {
            let v = parse_numeric(&row[c]).ok_or_else(|| FlowsError::BadNumericCell {
                file: file_name.clone(),
                row: r + 1,
                column: manifest.schema.feature_names[c].clone(),
                value: row[c].clone(),
            })?;
            features.set(r, c, v);
        }
        let y = row[cols].trim().parse::<u8>().map_err(|_| FlowsError::BadNumericCell {
            file: file_name.clone(),
            row: r + 1,
            column: manifest.schema.label_column.clone(),
            value: row[cols].clone(),
        })?;
        labels.push(y);
    }
    Ok(FlowDataset {
        schema: manifest.schema.clone(),
        features,
        labels,
        dropped_row_count: manifest.dropped_row_count,
        encoding_maps: manifest.encoding_maps.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(headers: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    fn small_table() -> RawTable {
        table(
            &["Flow ID", "Src IP", "Src Port", "Dst IP", "Dst Port", "Timestamp", "Protocol", "Flow Duration", "Label"],
            &[
                &["a", "1.1.1.1", "1", "2.2.2.2", "2", "t0", "6", "10.5", "Normal"],
                &["b", "1.1.1.1", "1", "2.2.2.2", "2", "t1", "17", "3.0", "Initial Compromise"],
                &["c", "1.1.1.1", "1", "2.2.2.2", "2", "t2", "6", "7.25", "Reconnaissance"],
                &["d", "1.1.1.1", "1", "2.2.2.2", "2", "t3", "6", "1.0", "NormalTraffic"],
            ],
        )
    }

    #[test]
    fn preprocess_drops_identifiers_and_isolates_stages() {
        let out = preprocess(&small_table(), &PreprocessOptions::default()).unwrap();
        let d = &out.dataset;
        assert_eq!(d.schema.feature_names, vec!["Protocol", "Flow Duration"]);
        assert_eq!(d.schema.dropped_columns.len(), 6);
        assert_eq!(d.schema.label_column, "Label");
        // Reconnaissance row excluded by stage isolation, not counted as dropped.
        assert_eq!(d.row_count(), 3);
        assert_eq!(d.dropped_row_count, 0);
        assert_eq!(d.labels, vec![0, 1, 0]);
        assert_eq!(d.features.get(1, 0), 17.0);
        assert_eq!(d.features.get(2, 1), 1.0);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn preprocess_84_columns_keeps_77_features() {
        let mut headers: Vec<String> = DEFAULT_IDENTIFIER_COLUMNS.iter().map(|s| s.to_string()).collect();
        for i in 0..77 {
            headers.push(format!("f{i}"));
        }
        headers.push("Label".to_string());
        assert_eq!(headers.len(), 84);
        let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
        let mut row: Vec<String> = vec!["id"; 6].iter().map(|s| s.to_string()).collect();
        for i in 0..77 {
            row.push(format!("{i}"));
        }
        row.push("Normal".to_string());
        let mut row2 = row.clone();
        *row2.last_mut().unwrap() = "IC".to_string();
        let row_refs: Vec<&str> = row.iter().map(String::as_str).collect();
        let row2_refs: Vec<&str> = row2.iter().map(String::as_str).collect();
        let t = table(&header_refs, &[&row_refs, &row2_refs]);
        let out = preprocess(&t, &PreprocessOptions::default()).unwrap();
        assert_eq!(out.dataset.feature_count(), 77);
        assert_eq!(out.dataset.labels, vec![0, 1]);
    }

    #[test]
    fn preprocess_removes_rows_with_missing_or_nonfinite_cells() {
        let t = table(
            &["x", "y", "Label"],
            &[
                &["1.0", "2.0", "Normal"],
                &["", "2.0", "Normal"],
                &["Infinity", "2.0", "Initial Compromise"],
                &["3.0", "NaN", "Normal"],
                &["-Infinity", "1.0", "Normal"],
                &["4.0", "5.0", "Initial Compromise"],
            ],
        );
        let mut opts = PreprocessOptions::default();
        opts.drop_columns.clear();
        let out = preprocess(&t, &opts).unwrap();
        assert_eq!(out.dataset.row_count(), 2);
        assert_eq!(out.dataset.dropped_row_count, 4);
        assert_eq!(out.dataset.labels, vec![0, 1]);
    }

    #[test]
    fn preprocess_encodes_categoricals_lexicographically() {
        let t = table(
            &["proto_name", "v", "Label"],
            &[
                &["udp", "1", "Normal"],
                &["tcp", "2", "Initial Compromise"],
                &["udp", "3", "Normal"],
            ],
        );
        let mut opts = PreprocessOptions::default();
        opts.drop_columns.clear();
        let out = preprocess(&t, &opts).unwrap();
        let d = &out.dataset;
        assert_eq!(d.schema.feature_kinds, vec![FeatureKind::Categorical, FeatureKind::Numeric]);
        let map = &d.encoding_maps["proto_name"];
        assert_eq!(map["tcp"], 0);
        assert_eq!(map["udp"], 1);
        assert_eq!(d.features.get(0, 0), 1.0);
        assert_eq!(d.features.get(1, 0), 0.0);
    }

    #[test]
    fn categorical_column_with_blank_cell_drops_the_row_not_the_kind() {
        let t = table(
            &["proto_name", "Label"],
            &[
                &["tcp", "Normal"],
                &["", "Normal"],
                &["udp", "IC"],
            ],
        );
        let mut opts = PreprocessOptions::default();
        opts.drop_columns.clear();
        let out = preprocess(&t, &opts).unwrap();
        assert_eq!(out.dataset.schema.feature_kinds, vec![FeatureKind::Categorical]);
        assert_eq!(out.dataset.row_count(), 2);
        assert_eq!(out.dataset.dropped_row_count, 1);
    }

    #[test]
    fn preprocess_warns_or_errors_on_missing_identifier() {
        let t = table(&["x", "Label"], &[&["1", "Normal"], &["2", "IC"]]);
        let out = preprocess(&t, &PreprocessOptions::default()).unwrap();
        assert_eq!(out.warnings.len(), 6);
        let mut strict = PreprocessOptions::default();
        strict.missing_identifier_policy = MissingIdentifierPolicy::Error;
        let err = preprocess(&t, &strict).unwrap_err();
        assert!(matches!(err, FlowsError::IdentifierColumnMissing { .. }));
    }

    #[test]
    fn preprocess_rejects_missing_label_column() {
        let t = table(&["x", "y"], &[&["1", "2"]]);
        let err = preprocess(&t, &PreprocessOptions::default()).unwrap_err();
        assert!(matches!(err, FlowsError::LabelColumnMissing { .. }));
    }

    #[test]
    fn preprocess_is_idempotent_on_its_own_output() {
        let out1 = preprocess(&small_table(), &PreprocessOptions::default()).unwrap();
        // Re-encode the processed matrix as a text table and preprocess again.
        let d = &out1.dataset;
        let mut headers: Vec<String> = d.schema.feature_names.clone();
        headers.push(d.schema.label_column.clone());
        let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = (0..d.row_count())
            .map(|r| {
                let mut row: Vec<String> = d.features.row(r).iter().map(|v| v.to_string()).collect();
                row.push(if d.labels[r] == 0 { "Normal".into() } else { "IC".into() });
                row
            })
            .collect();
        let row_refs: Vec<Vec<&str>> = rows.iter().map(|r| r.iter().map(String::as_str).collect()).collect();
        let slices: Vec<&[&str]> = row_refs.iter().map(|r| r.as_slice()).collect();
        let t2 = table(&header_refs, &slices);
        let out2 = preprocess(&t2, &PreprocessOptions::default()).unwrap();
        assert_eq!(out2.dataset.features.as_slice(), d.features.as_slice());
        assert_eq!(out2.dataset.labels, d.labels);
        assert_eq!(out2.dataset.dropped_row_count, 0);
    }

    fn toy_dataset(n0: usize, n1: usize) -> FlowDataset {
        let n = n0 + n1;
        let mut features = Matrix::zeros(n, 1);
        let mut labels = Vec::with_capacity(n);
        for r in 0..n {
            features.set(r, 0, r as f64);
            labels.push(u8::from(r >= n0));
        }
        FlowDataset {
            schema: FeatureSchema {
                feature_names: vec!["x".into()],
                feature_kinds: vec![FeatureKind::Numeric],
                label_column: "Label".into(),
                dropped_columns: vec![],
            },
            features,
            labels,
            dropped_row_count: 0,
            encoding_maps: BTreeMap::new(),
        }
    }

    #[test]
    fn stratified_split_rounds_per_class() {
        let d = toy_dataset(90, 10);
        let s = split(&d, 7, 0.8, true).unwrap();
        let (tr0, tr1) = s.train.class_counts();
        let (te0, te1) = s.test.class_counts();
        assert_eq!((tr0, tr1), (72, 8));
        assert_eq!((te0, te1), (18, 2));
    }

    #[test]
    fn stratified_split_at_corpus_scale_counts() {
        let d = toy_dataset(307_817, 150);
        let s = split(&d, 42, 0.8, true).unwrap();
        let (tr0, tr1) = s.train.class_counts();
        let (te0, te1) = s.test.class_counts();
        assert_eq!(tr0, 246_254); // round(0.8 * 307817)
        assert_eq!(tr1, 120);
        assert_eq!(te0, 61_563);
        assert_eq!(te1, 30);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let d = toy_dataset(50, 20);
        let a = split(&d, 3, 0.75, true).unwrap();
        let b = split(&d, 3, 0.75, true).unwrap();
        assert_eq!(a.train.features.as_slice(), b.train.features.as_slice());
        assert_eq!(a.test.labels, b.test.labels);
        let c = split(&d, 4, 0.75, true).unwrap();
        assert_ne!(a.train.features.as_slice(), c.train.features.as_slice());
    }

    #[test]
    fn split_train_and_test_partition_the_rows() {
        let d = toy_dataset(30, 12);
        let s = split(&d, 11, 0.7, true).unwrap();
        let mut seen: Vec<f64> = s
            .train
            .features
            .as_slice()
            .iter()
            .chain(s.test.features.as_slice().iter())
            .copied()
            .collect();
        seen.sort_by(f64::total_cmp);
        let expected: Vec<f64> = (0..42).map(|v| v as f64).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        let d = toy_dataset(10, 1);
        assert!(matches!(split(&d, 1, 0.8, true), Err(FlowsError::ClassTooSmall { class: 1, count: 1 })));
        let d = toy_dataset(10, 10);
        assert!(matches!(split(&d, 1, 0.0, true), Err(FlowsError::BadTrainFraction { .. })));
        assert!(matches!(split(&d, 1, 1.0, true), Err(FlowsError::BadTrainFraction { .. })));
        // round(0.99 * 2) == 2 leaves the test side empty for the small class
        let d = toy_dataset(100, 2);
        assert!(matches!(split(&d, 1, 0.99, true), Err(FlowsError::DegenerateSplit { class: 1, side: "test" })));
    }

    #[test]
    fn unstratified_split_checks_both_sides() {
        let d = toy_dataset(40, 6);
        let s = split(&d, 5, 0.8, false).unwrap();
        assert_eq!(s.train.row_count() + s.test.row_count(), 46);
        assert_eq!(s.train.row_count(), 37); // round(0.8 * 46)
        let (tr0, tr1) = s.train.class_counts();
        assert!(tr0 > 0 && tr1 > 0);
    }

    #[test]
    fn load_csv_reports_structural_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,b\n1,2\n3\n").unwrap();
        match load_csv(&p).unwrap_err() {
            FlowsError::RaggedRow { row, got, expected } => {
                assert_eq!((row, got, expected), (2, 1, 2));
            }
            other => panic!("unexpected error: {other}"),
        }

        let p = dir.path().join("dup.csv");
        std::fs::write(&p, "a,a\n1,2\n").unwrap();
        assert!(matches!(load_csv(&p).unwrap_err(), FlowsError::DuplicateHeader { .. }));

        let p = dir.path().join("empty.csv");
        std::fs::write(&p, "").unwrap();
        assert!(matches!(load_csv(&p).unwrap_err(), FlowsError::EmptyFile { .. }));

        assert!(matches!(
            load_csv(dir.path().join("missing.csv")).unwrap_err(),
            FlowsError::Io { .. }
        ));
    }

    #[test]
    fn load_csv_trims_header_whitespace_and_keeps_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ws.csv");
        let mut f = std::fs::File::create(&p).unwrap();
        writeln!(f, " Flow Duration , Label").unwrap();
        writeln!(f, "1.5,Normal").unwrap();
        drop(f);
        let t = load_csv(&p).unwrap();
        assert_eq!(t.headers, vec!["Flow Duration", "Label"]);
        assert_eq!(t.rows[0][0], "1.5");
    }

    #[test]
    fn save_and_load_split_round_trips_exactly() {
        let out = preprocess(&small_table(), &PreprocessOptions::default()).unwrap();
        // 3 rows is too small to split; tile it.
        let rows: Vec<usize> = (0..out.dataset.row_count()).cycle().take(24).collect();
        let d = out.dataset.select_rows(&rows);
        let s = split(&d, 99, 0.75, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = save_split(dir.path(), &s, Some("abc123".into())).unwrap();
        assert_eq!(written, vec!["dataset.json", "train.csv", "test.csv"]);
        let (loaded, manifest) = load_split(dir.path()).unwrap();
        assert_eq!(loaded.train.features.as_slice(), s.train.features.as_slice());
        assert_eq!(loaded.test.features.as_slice(), s.test.features.as_slice());
        assert_eq!(loaded.train.labels, s.train.labels);
        assert_eq!(loaded.seed, 99);
        assert_eq!(manifest.source_digest.as_deref(), Some("abc123"));
        assert_eq!(
            manifest.train_counts.normal + manifest.test_counts.normal,
            16
        );
    }

    #[test]
    fn load_split_reports_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_split(dir.path()).unwrap_err(),
            FlowsError::SplitFileMissing { .. }
        ));
    }

    proptest::proptest! {
        #[test]
        fn split_partitions_and_is_deterministic(
            n0 in 2usize..40,
            n1 in 2usize..40,
            seed in 0u64..1_000,
        ) {
            let d = toy_dataset(n0, n1);
            let a = split(&d, seed, 0.5, true).unwrap();
            let b = split(&d, seed, 0.5, true).unwrap();
            proptest::prop_assert_eq!(&a.train.features.as_slice(), &b.train.features.as_slice());
            proptest::prop_assert_eq!(a.train.row_count() + a.test.row_count(), n0 + n1);
            let (tr0, tr1) = a.train.class_counts();
            proptest::prop_assert_eq!(tr0, (n0 as f64 * 0.5).round() as usize);
            proptest::prop_assert_eq!(tr1, (n1 as f64 * 0.5).round() as usize);
        }
    }
}

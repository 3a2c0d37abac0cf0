//! Feature selection: SHAP-ordered wrapper forward selection plus the five
//! baseline scorers it is compared against (chi², ANOVA F, mutual
//! information, Pearson, embedded gain importance).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DatasetSplit, FlowDataset};
use crate::exec::par_map_indexed;
use crate::gbt::{fit, GbtConfig, GbtError};
use crate::metrics::{confusion, metric_triple, MetricTriple, MetricsError};
use crate::treeshap::{explain, rank_by_mean_abs, ShapError};
use crate::util::argsort_desc;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("mutual information needs at least {bins} rows, got {rows}")]
    TooFewRows { rows: usize, bins: usize },
    #[error("need at least {need} samples per class, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("k = {k} out of range for {feature_count} features")]
    BadK { k: usize, feature_count: usize },
    #[error("no features selected")]
    EmptySelection,
    #[error("importance ranking is empty")]
    EmptyRanking,
    #[error(transparent)]
    Gbt(#[from] GbtError),
    #[error(transparent)]
    Shap(#[from] ShapError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// The six selection strategies compared in the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    ShapWrapper,
    Chi2,
    AnovaF,
    MutualInfo,
    Pearson,
    Embedded,
}

impl SelectionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SelectionMethod::ShapWrapper => "shap_wrapper",
            SelectionMethod::Chi2 => "chi2",
            SelectionMethod::AnovaF => "anova_f",
            SelectionMethod::MutualInfo => "mutual_info",
            SelectionMethod::Pearson => "pearson",
            SelectionMethod::Embedded => "embedded",
        }
    }

    pub const ALL: [SelectionMethod; 6] = [
        SelectionMethod::ShapWrapper,
        SelectionMethod::Chi2,
        SelectionMethod::AnovaF,
        SelectionMethod::MutualInfo,
        SelectionMethod::Pearson,
        SelectionMethod::Embedded,
    ];
}

impl std::fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One wrapper step: metrics after growing the set to `feature_set_size`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceRow {
    pub feature_set_size: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Whether appending one more ranked feature past the stopping point
/// would have helped.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NextFeatureCheck {
    pub feature: usize,
    pub f1_selected: f64,
    pub f1_with_next: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: SelectionMethod,
    /// Chosen feature indices, in selection order.
    pub selected: Vec<usize>,
    /// Per-feature scores the choice was based on (mean |SHAP| for the
    /// wrapper, the filter statistic otherwise).
    pub scores: Vec<f64>,
    /// Metrics of the final selected set on the test side.
    pub metrics: MetricTriple,
    /// Wrapper path (empty for pure filter methods).
    pub trace: Vec<TraceRow>,
    /// Full-model F1 used as the stopping criterion.
    pub stopping_f1: f64,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_feature_check: Option<NextFeatureCheck>,
}

impl SelectionResult {
    fn assert_invariants(&self, feature_count: usize) {
        let mut seen = std::collections::BTreeSet::new();
        for &f in &self.selected {
            debug_assert!(f < feature_count);
            debug_assert!(seen.insert(f), "duplicate selected feature {f}");
        }
    }
}

/// Which rows the wrapper's SHAP ranking is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainScope {
    /// Training rows only (no test leakage into the ranking).
    #[default]
    Train,
    /// Train + test, mirroring "across all samples in the dataset".
    All,
}

/// Train on `selected` columns of the train side, score the test side.
pub fn evaluate_method(
    split: &DatasetSplit,
    config: &GbtConfig,
    selected: &[usize],
) -> Result<MetricTriple, SelectionError> {
    if selected.is_empty() {
        return Err(SelectionError::EmptySelection);
    }
    let narrowed = split.select_columns(selected);
    let model = fit(&narrowed.train, config)?;
    let pred = model.predict_label(&narrowed.test.features, 0.5)?;
    let cm = confusion(&narrowed.test.labels, &pred)?;
    Ok(metric_triple(&cm))
}

/// Forward selection in mean-|SHAP| order, stopping once the subset's test
/// F1 reaches the full model's F1 minus `epsilon`.
pub fn select_shap_forward(
    split: &DatasetSplit,
    config: &GbtConfig,
    epsilon: f64,
    scope: ExplainScope,
) -> Result<SelectionResult, SelectionError> {
    let feature_count = split.train.feature_count();
    let full_model = fit(&split.train, config)?;
    let full_pred = full_model.predict_label(&split.test.features, 0.5)?;
    let full_metrics = metric_triple(&confusion(&split.test.labels, &full_pred)?);
    let stopping_f1 = full_metrics.f1_or_zero();

    let explained = match scope {
        ExplainScope::Train => explain(&full_model, &split.train.features)?,
        ExplainScope::All => {
            let stacked = split.train.features.vstack(&split.test.features);
            explain(&full_model, &stacked)?
        }
    };
    let ranking = rank_by_mean_abs(&explained)?;
    if ranking.order.is_empty() {
        return Err(SelectionError::EmptyRanking);
    }

    let mut selected = Vec::new();
    let mut trace = Vec::new();
    let mut metrics = full_metrics;
    for &feature in &ranking.order {
        selected.push(feature);
        let m = if selected.len() == feature_count {
            full_metrics // identical training run; skip repeating it
        } else {
            evaluate_method(split, config, &selected)?
        };
        trace.push(TraceRow {
            feature_set_size: selected.len(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        });
        metrics = m;
        if m.f1_or_zero() >= stopping_f1 - epsilon {
            break;
        }
    }

    // Does the next-ranked feature still improve anything?
    let next_feature_check = ranking
        .order
        .get(selected.len())
        .map(|&next| -> Result<NextFeatureCheck, SelectionError> {
            let mut extended = selected.clone();
            extended.push(next);
            let with_next = evaluate_method(split, config, &extended)?;
            Ok(NextFeatureCheck {
                feature: next,
                f1_selected: metrics.f1_or_zero(),
                f1_with_next: with_next.f1_or_zero(),
                improved: with_next.f1_or_zero() > metrics.f1_or_zero(),
            })
        })
        .transpose()?;

    let result = SelectionResult {
        method: SelectionMethod::ShapWrapper,
        selected,
        scores: ranking.scores,
        metrics,
        trace,
        stopping_f1,
        epsilon,
        next_feature_check,
    };
    result.assert_invariants(feature_count);
    Ok(result)
}

/// Chi² statistics with the per-feature shifts applied to make all values
/// non-negative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chi2Scores {
    pub scores: Vec<f64>,
    /// Non-negative amount added to every value of the feature before the
    /// sums were taken (0 when the column was already non-negative).
    pub shifts: Vec<f64>,
}

/// Chi² on class-conditional feature sums: O_c = Σ_{y=c} x, E_c
/// proportional to the class frequency.
pub fn score_chi2(train: &FlowDataset) -> Chi2Scores {
    let n = train.row_count();
    let (n0, n1) = train.class_counts();
    let (share0, share1) = (n0 as f64 / n as f64, n1 as f64 / n as f64);
    let per_feature = par_map_indexed(train.feature_count(), |j| {
        let mut min = f64::INFINITY;
        for r in 0..n {
            min = min.min(train.features.get(r, j));
        }
        let shift = if min < 0.0 { -min } else { 0.0 };
        let mut observed = [0.0f64; 2];
        for r in 0..n {
            observed[train.labels[r] as usize] += train.features.get(r, j) + shift;
        }
        let total = observed[0] + observed[1];
        let expected = [share0 * total, share1 * total];
        let mut stat = 0.0;
        for c in 0..2 {
            if expected[c] > 0.0 {
                let d = observed[c] - expected[c];
                stat += d * d / expected[c];
            }
        }
        (stat, shift)
    });
    let (scores, shifts) = per_feature.into_iter().unzip();
    Chi2Scores { scores, shifts }
}

/// One-way ANOVA F statistic per feature, df = (1, n − 2). Zero
/// within-class variance with separated means scores the largest finite
/// value as an infinity sentinel.
pub fn score_anova_f(train: &FlowDataset) -> Result<Vec<f64>, SelectionError> {
    let n = train.row_count();
    let (n0, n1) = train.class_counts();
    if n0 < 2 || n1 < 2 {
        return Err(SelectionError::TooFewSamples { need: 2, got: n0.min(n1) });
    }
    Ok(par_map_indexed(train.feature_count(), |j| {
        let mut sum = [0.0f64; 2];
        for r in 0..n {
            sum[train.labels[r] as usize] += train.features.get(r, j);
        }
        let counts = [n0 as f64, n1 as f64];
        let means = [sum[0] / counts[0], sum[1] / counts[1]];
        let grand = (sum[0] + sum[1]) / n as f64;
        let between_ss = counts[0] * (means[0] - grand).powi(2)
            + counts[1] * (means[1] - grand).powi(2);
        let mut within_ss = 0.0;
        for r in 0..n {
            let d = train.features.get(r, j) - means[train.labels[r] as usize];
            within_ss += d * d;
        }
        let between_ms = between_ss; // df = k − 1 = 1
        let within_ms = within_ss / (n as f64 - 2.0);
        if between_ms == 0.0 {
            0.0
        } else if within_ms == 0.0 {
            f64::MAX
        } else {
            between_ms / within_ms
        }
    }))
}

/// Quantile-bin a column: edges are the values at sorted positions
/// ⌊k·n/bins⌋ (k = 1..bins−1) with duplicates merged; bin(x) counts the
/// edges strictly below x.
fn quantile_bins(column: &[f64], bins: usize) -> Vec<usize> {
    let n = column.len();
    let mut sorted: Vec<f64> = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..bins).map(|k| sorted[k * n / bins]).collect();
    edges.dedup_by(|a, b| a == b);
    column
        .iter()
        .map(|x| edges.partition_point(|e| e < x))
        .collect()
}

/// Mutual information (nats) between the quantile-binned feature and the
/// label, from empirical joint frequencies.
pub fn score_mutual_info(train: &FlowDataset, bins: usize) -> Result<Vec<f64>, SelectionError> {
    let n = train.row_count();
    if n < bins {
        return Err(SelectionError::TooFewRows { rows: n, bins });
    }
    Ok(par_map_indexed(train.feature_count(), |j| {
        let column: Vec<f64> = (0..n).map(|r| train.features.get(r, j)).collect();
        let binned = quantile_bins(&column, bins);
        let n_bins = binned.iter().max().map_or(0, |&b| b + 1);
        let mut joint = vec![[0.0f64; 2]; n_bins];
        for (r, &b) in binned.iter().enumerate() {
            joint[b][train.labels[r] as usize] += 1.0;
        }
        let total = n as f64;
        let class_p = {
            let (n0, n1) = train.class_counts();
            [n0 as f64 / total, n1 as f64 / total]
        };
        let mut mi = 0.0;
        for row in &joint {
            let bin_p = (row[0] + row[1]) / total;
            for c in 0..2 {
                let p = row[c] / total;
                if p > 0.0 {
                    mi += p * (p / (bin_p * class_p[c])).ln();
                }
            }
        }
        mi.max(0.0)
    }))
}

/// |Pearson correlation| between each feature and the 0/1 labels
/// (point-biserial). Zero-variance columns score 0.
pub fn score_pearson(train: &FlowDataset) -> Result<Vec<f64>, SelectionError> {
    let n = train.row_count();
    if n < 2 {
        return Err(SelectionError::TooFewSamples { need: 2, got: n });
    }
    let mean_y = train.labels.iter().map(|&y| f64::from(y)).sum::<f64>() / n as f64;
    let var_y = train
        .labels
        .iter()
        .map(|&y| (f64::from(y) - mean_y).powi(2))
        .sum::<f64>();
    Ok(par_map_indexed(train.feature_count(), |j| {
        let mean_x = (0..n).map(|r| train.features.get(r, j)).sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut var_x = 0.0;
        for r in 0..n {
            let dx = train.features.get(r, j) - mean_x;
            cov += dx * (f64::from(train.labels[r]) - mean_y);
            var_x += dx * dx;
        }
        if var_x == 0.0 || var_y == 0.0 {
            0.0
        } else {
            (cov / (var_x * var_y).sqrt()).abs().min(1.0)
        }
    }))
}

/// Indices of the k largest scores, descending, ties by ascending index.
pub fn select_top_k(scores: &[f64], k: usize) -> Result<Vec<usize>, SelectionError> {
    if k == 0 || k > scores.len() {
        return Err(SelectionError::BadK { k, feature_count: scores.len() });
    }
    Ok(argsort_desc(scores)[..k].to_vec())
}

/// Run one filter method end to end: score on the train side, keep the
/// top k, retrain and evaluate.
pub fn run_filter_method(
    split: &DatasetSplit,
    config: &GbtConfig,
    method: SelectionMethod,
    k: usize,
    mi_bins: usize,
) -> Result<SelectionResult, SelectionError> {
    let scores = match method {
        SelectionMethod::Chi2 => score_chi2(&split.train).scores,
        SelectionMethod::AnovaF => score_anova_f(&split.train)?,
        SelectionMethod::MutualInfo => score_mutual_info(&split.train, mi_bins)?,
        SelectionMethod::Pearson => score_pearson(&split.train)?,
        SelectionMethod::Embedded => fit(&split.train, config)?.gain_importance(),
        SelectionMethod::ShapWrapper => {
            unreachable!("wrapper method goes through select_shap_forward")
        }
    };
    let selected = select_top_k(&scores, k)?;
    let metrics = evaluate_method(split, config, &selected)?;
    let result = SelectionResult {
        method,
        selected,
        scores,
        metrics,
        trace: Vec::new(),
        stopping_f1: 0.0,
        epsilon: 0.0,
        next_feature_check: None,
    };
    result.assert_invariants(split.train.feature_count());
    Ok(result)
}

/// All six methods on one split: the wrapper with its stopping rule, the
/// five baselines with a fixed top-k.
pub fn run_all_methods(
    split: &DatasetSplit,
    config: &GbtConfig,
    k: usize,
    epsilon: f64,
    mi_bins: usize,
    scope: ExplainScope,
) -> Result<Vec<SelectionResult>, SelectionError> {
    let mut results = Vec::with_capacity(SelectionMethod::ALL.len());
    for method in SelectionMethod::ALL {
        let result = if method == SelectionMethod::ShapWrapper {
            select_shap_forward(split, config, epsilon, scope)?
        } else {
            run_filter_method(split, config, method, k, mi_bins)?
        };
        results.push(result);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureKind, FeatureSchema, Matrix};
    use crate::flows;
    use std::collections::BTreeMap;

    fn dataset(columns: Vec<Vec<f64>>, labels: Vec<u8>) -> FlowDataset {
        let rows = labels.len();
        let cols = columns.len();
        let mut features = Matrix::zeros(rows, cols);
        for (c, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), rows);
            for (r, &v) in col.iter().enumerate() {
                features.set(r, c, v);
            }
        }
        FlowDataset {
            schema: FeatureSchema {
                feature_names: (0..cols).map(|i| format!("f{i}")).collect(),
                feature_kinds: vec![FeatureKind::Numeric; cols],
                label_column: "Label".into(),
                dropped_columns: vec![],
            },
            features,
            labels,
            dropped_row_count: 0,
            encoding_maps: BTreeMap::new(),
        }
    }

    /// xorshift-based deterministic noise, no RNG dependency
    fn noise_stream(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    #[test]
    fn chi2_hand_case() {
        let d = dataset(vec![vec![2.0, 0.0]], vec![1, 0]);
        let out = score_chi2(&d);
        assert!((out.scores[0] - 2.0).abs() < 1e-12);
        assert_eq!(out.shifts, vec![0.0]);
    }

    #[test]
    fn chi2_uniform_feature_scores_zero() {
        let d = dataset(vec![vec![1.0; 6]], vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(score_chi2(&d).scores, vec![0.0]);
    }

    #[test]
    fn chi2_shifts_negative_columns_and_records_it() {
        let d = dataset(vec![vec![-3.0, 1.0, 0.0, 2.0]], vec![0, 0, 1, 1]);
        let out = score_chi2(&d);
        assert_eq!(out.shifts, vec![3.0]);
        assert!(out.scores[0].is_finite() && out.scores[0] >= 0.0);
    }

    #[test]
    fn chi2_all_zero_column_scores_zero() {
        let d = dataset(vec![vec![0.0; 4]], vec![0, 0, 1, 1]);
        assert_eq!(score_chi2(&d).scores, vec![0.0]);
    }

    #[test]
    fn chi2_doubles_with_the_column() {
        let mut next = noise_stream(5);
        let col: Vec<f64> = (0..40).map(|_| next() * 4.0).collect();
        let doubled: Vec<f64> = col.iter().map(|v| v * 2.0).collect();
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        let a = score_chi2(&dataset(vec![col], labels.clone()));
        let b = score_chi2(&dataset(vec![doubled], labels));
        assert!((b.scores[0] - 2.0 * a.scores[0]).abs() < 1e-12 * a.scores[0].max(1.0));
    }

    #[test]
    fn anova_textbook_case_gives_f_eight() {
        // classes {0,2} and {4,6}: between-MS 16, within-MS 2
        let d = dataset(vec![vec![0.0, 2.0, 4.0, 6.0]], vec![0, 0, 1, 1]);
        let f = score_anova_f(&d).unwrap();
        assert!((f[0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn anova_identical_means_score_zero() {
        let d = dataset(vec![vec![1.0, 3.0, 1.0, 3.0]], vec![0, 0, 1, 1]);
        assert_eq!(score_anova_f(&d).unwrap(), vec![0.0]);
    }

    #[test]
    fn anova_zero_within_variance_hits_sentinel() {
        let d = dataset(vec![vec![0.0, 0.0, 1.0, 1.0]], vec![0, 0, 1, 1]);
        assert_eq!(score_anova_f(&d).unwrap(), vec![f64::MAX]);
    }

    #[test]
    fn anova_requires_two_per_class() {
        let d = dataset(vec![vec![0.0, 1.0, 2.0]], vec![0, 0, 1]);
        assert!(matches!(
            score_anova_f(&d),
            Err(SelectionError::TooFewSamples { need: 2, got: 1 })
        ));
    }

    /// independent textbook route: explicit group means and sums of squares
    fn anova_oracle(x: &[f64], y: &[u8]) -> f64 {
        let groups: Vec<Vec<f64>> = (0..2)
            .map(|c| {
                x.iter()
                    .zip(y)
                    .filter(|(_, &yy)| usize::from(yy) == c)
                    .map(|(&v, _)| v)
                    .collect()
            })
            .collect();
        let n = x.len() as f64;
        let grand = x.iter().sum::<f64>() / n;
        let mut ss_between = 0.0;
        let mut ss_within = 0.0;
        for g in &groups {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            ss_between += g.len() as f64 * (m - grand) * (m - grand);
            ss_within += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        }
        (ss_between / 1.0) / (ss_within / (n - 2.0))
    }

    #[test]
    fn anova_matches_textbook_oracle_on_random_tables() {
        let mut next = noise_stream(17);
        for _ in 0..20 {
            let n = 30;
            let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
            let col: Vec<f64> = (0..n)
                .map(|i| next() * 3.0 + f64::from(labels[i]) * next())
                .collect();
            let ours = score_anova_f(&dataset(vec![col.clone()], labels.clone())).unwrap()[0];
            let oracle = anova_oracle(&col, &labels);
            assert!(
                (ours - oracle).abs() <= 1e-10 * oracle.abs().max(1.0),
                "{ours} vs {oracle}"
            );
        }
    }

    #[test]
    fn mutual_info_constant_feature_is_zero() {
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 2 == 0)).collect();
        let d = dataset(vec![vec![7.0; 40]], labels);
        assert_eq!(score_mutual_info(&d, 32).unwrap(), vec![0.0]);
    }

    #[test]
    fn mutual_info_of_label_copy_is_ln2() {
        let labels: Vec<u8> = (0..64).map(|i| u8::from(i % 2 == 0)).collect();
        let col: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
        let d = dataset(vec![col], labels);
        let mi = score_mutual_info(&d, 32).unwrap()[0];
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-12, "{mi}");
    }

    #[test]
    fn mutual_info_requires_enough_rows() {
        let d = dataset(vec![vec![1.0, 2.0]], vec![0, 1]);
        assert!(matches!(
            score_mutual_info(&d, 32),
            Err(SelectionError::TooFewRows { rows: 2, bins: 32 })
        ));
    }

    /// direct joint-table MI over the binned column
    fn mi_oracle(binned: &[usize], y: &[u8]) -> f64 {
        let n = binned.len() as f64;
        let mut joint: BTreeMap<(usize, u8), f64> = BTreeMap::new();
        let mut px: BTreeMap<usize, f64> = BTreeMap::new();
        let mut py: BTreeMap<u8, f64> = BTreeMap::new();
        for (&b, &c) in binned.iter().zip(y) {
            *joint.entry((b, c)).or_default() += 1.0 / n;
            *px.entry(b).or_default() += 1.0 / n;
            *py.entry(c).or_default() += 1.0 / n;
        }
        joint
            .iter()
            .map(|(&(b, c), &p)| p * (p / (px[&b] * py[&c])).ln())
            .sum()
    }

    #[test]
    fn mutual_info_matches_joint_table_oracle() {
        let mut next = noise_stream(23);
        for round in 0..10 {
            let n = 64;
            let labels: Vec<u8> = (0..n).map(|_| u8::from(next() > 0.5)).collect();
            let col: Vec<f64> = labels
                .iter()
                .map(|&y| (next() * 4.0).floor() + f64::from(y) * (round % 3) as f64)
                .collect();
            let ours = score_mutual_info(&dataset(vec![col.clone()], labels.clone()), 8).unwrap()[0];
            let oracle = mi_oracle(&quantile_bins(&col, 8), &labels);
            assert!((ours - oracle).abs() < 1e-12, "{ours} vs {oracle}");
        }
    }

    #[test]
    fn mutual_info_invariant_under_monotone_transform() {
        let mut next = noise_stream(29);
        let n = 48;
        let labels: Vec<u8> = (0..n).map(|_| u8::from(next() > 0.6)).collect();
        let col: Vec<f64> = (0..n).map(|_| next() * 10.0 - 5.0).collect();
        let cubed: Vec<f64> = col.iter().map(|v| v.powi(3)).collect();
        let a = score_mutual_info(&dataset(vec![col], labels.clone()), 8).unwrap();
        let b = score_mutual_info(&dataset(vec![cubed], labels), 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pearson_examples() {
        let labels: Vec<u8> = vec![0, 1, 0, 1, 1, 0];
        let copy: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
        let flipped: Vec<f64> = labels.iter().map(|&y| 1.0 - f64::from(y)).collect();
        let constant = vec![4.2; 6];
        let d = dataset(vec![copy, flipped, constant], labels);
        let r = score_pearson(&d).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert!((r[1] - 1.0).abs() < 1e-12);
        assert_eq!(r[2], 0.0);
    }

    #[test]
    fn pearson_and_anova_invariant_under_positive_affine_rescale() {
        let mut next = noise_stream(41);
        let n = 40;
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 1)).collect();
        let col: Vec<f64> = (0..n).map(|i| next() + f64::from(labels[i])).collect();
        let rescaled: Vec<f64> = col.iter().map(|v| 3.5 * v - 11.0).collect();
        let d1 = dataset(vec![col], labels.clone());
        let d2 = dataset(vec![rescaled], labels);
        let p1 = score_pearson(&d1).unwrap()[0];
        let p2 = score_pearson(&d2).unwrap()[0];
        assert!((p1 - p2).abs() < 1e-9);
        let f1 = score_anova_f(&d1).unwrap()[0];
        let f2 = score_anova_f(&d2).unwrap()[0];
        assert!((f1 - f2).abs() < 1e-9 * f1.max(1.0));
    }

    #[test]
    fn scorers_invariant_under_row_permutation_and_class_relabel() {
        let mut next = noise_stream(43);
        let n = 36;
        let labels: Vec<u8> = (0..n).map(|_| u8::from(next() > 0.4)).collect();
        let col: Vec<f64> = (0..n).map(|_| next() * 6.0).collect();
        let d = dataset(vec![col.clone()], labels.clone());

        // reversal is a permutation
        let rev_col: Vec<f64> = col.iter().rev().copied().collect();
        let rev_labels: Vec<u8> = labels.iter().rev().copied().collect();
        let dp = dataset(vec![rev_col], rev_labels);

        // swap which class is "positive"
        let swapped: Vec<u8> = labels.iter().map(|&y| 1 - y).collect();
        let ds = dataset(vec![col], swapped);

        for other in [&dp, &ds] {
            assert!((score_chi2(&d).scores[0] - score_chi2(other).scores[0]).abs() < 1e-10);
            assert!(
                (score_anova_f(&d).unwrap()[0] - score_anova_f(other).unwrap()[0]).abs() < 1e-10
            );
            assert!(
                (score_mutual_info(&d, 6).unwrap()[0] - score_mutual_info(other, 6).unwrap()[0])
                    .abs()
                    < 1e-12
            );
            assert!(
                (score_pearson(&d).unwrap()[0] - score_pearson(other).unwrap()[0]).abs() < 1e-12
            );
        }
    }

    #[test]
    fn top_k_examples_and_errors() {
        assert_eq!(select_top_k(&[3.0, 1.0, 2.0], 2).unwrap(), vec![0, 2]);
        assert_eq!(select_top_k(&[5.0, 5.0, 1.0], 2).unwrap(), vec![0, 1]);
        assert_eq!(select_top_k(&[1.0, 3.0, 2.0], 3).unwrap(), vec![1, 2, 0]);
        assert!(matches!(
            select_top_k(&[1.0], 2),
            Err(SelectionError::BadK { k: 2, feature_count: 1 })
        ));
        assert!(matches!(
            select_top_k(&[1.0], 0),
            Err(SelectionError::BadK { k: 0, feature_count: 1 })
        ));
    }

    proptest::proptest! {
        #[test]
        fn top_k_is_a_prefix_of_the_full_sort(
            scores in proptest::collection::vec(-100.0f64..100.0, 1..12),
        ) {
            let full = select_top_k(&scores, scores.len()).unwrap();
            for k in 1..=scores.len() {
                proptest::prop_assert_eq!(select_top_k(&scores, k).unwrap(), &full[..k]);
            }
        }
    }

    /// a split on 200 rows whose label is exactly determined by feature 2
    fn planted_split() -> DatasetSplit {
        let mut next = noise_stream(99);
        let n = 200;
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 4 == 0)).collect();
        let mut cols = vec![Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        for &y in &labels {
            cols[0].push(next());
            cols[1].push(next() * 2.0 - 1.0);
            cols[2].push(f64::from(y) * 10.0 + next());
        }
        flows::split(&dataset(cols, labels), 1, 0.8, true).unwrap()
    }

    fn small_config() -> GbtConfig {
        GbtConfig { num_rounds: 10, max_depth: 3, ..GbtConfig::default() }
    }

    #[test]
    fn wrapper_recovers_single_planted_feature() {
        let split = planted_split();
        let r = select_shap_forward(&split, &small_config(), 0.0, ExplainScope::Train).unwrap();
        assert_eq!(r.selected, vec![2]);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.trace[0].feature_set_size, 1);
        assert_eq!(r.stopping_f1, 1.0);
        assert_eq!(r.metrics.f1, Some(1.0));
        let check = r.next_feature_check.expect("unused features remain");
        assert!(!check.improved);
        assert_eq!(check.f1_selected, 1.0);
    }

    #[test]
    fn wrapper_all_scope_matches_on_planted_data() {
        let split = planted_split();
        let r = select_shap_forward(&split, &small_config(), 0.0, ExplainScope::All).unwrap();
        assert_eq!(r.selected, vec![2]);
    }

    #[test]
    fn wrapper_terminates_and_meets_its_own_invariant() {
        // labels unrelated to features: criterion still terminates
        let mut next = noise_stream(3);
        let n = 80;
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| next()).collect()).collect();
        let split = flows::split(&dataset(cols, labels), 5, 0.75, true).unwrap();
        let r = select_shap_forward(&split, &small_config(), 0.0, ExplainScope::Train).unwrap();
        assert!(!r.selected.is_empty() && r.selected.len() <= 3);
        assert!(!r.trace.is_empty());
        let last = r.trace.last().unwrap();
        assert!(
            last.f1.unwrap_or(0.0) >= r.stopping_f1 - r.epsilon
                || r.selected.len() == 3
        );
    }

    #[test]
    fn evaluating_all_features_equals_the_full_baseline() {
        let split = planted_split();
        let config = small_config();
        let all: Vec<usize> = (0..split.train.feature_count()).collect();
        let via_eval = evaluate_method(&split, &config, &all).unwrap();
        let model = fit(&split.train, &config).unwrap();
        let pred = model.predict_label(&split.test.features, 0.5).unwrap();
        let direct = metric_triple(&confusion(&split.test.labels, &pred).unwrap());
        assert_eq!(via_eval, direct);
    }

    #[test]
    fn filter_methods_on_planted_data_pick_the_feature() {
        let split = planted_split();
        let config = small_config();
        for method in [
            SelectionMethod::Chi2,
            SelectionMethod::AnovaF,
            SelectionMethod::MutualInfo,
            SelectionMethod::Pearson,
            SelectionMethod::Embedded,
        ] {
            let r = run_filter_method(&split, &config, method, 1, 8).unwrap();
            assert_eq!(r.selected, vec![2], "method {method}");
            assert_eq!(r.metrics.f1, Some(1.0), "method {method}");
            assert!(r.trace.is_empty());
        }
    }

    #[test]
    fn run_all_methods_returns_six_rows() {
        let split = planted_split();
        let results =
            run_all_methods(&split, &small_config(), 2, 0.0, 8, ExplainScope::Train).unwrap();
        assert_eq!(results.len(), 6);
        assert_eq!(results[0].method, SelectionMethod::ShapWrapper);
        for r in &results[1..] {
            assert_eq!(r.selected.len(), 2);
        }
    }

    #[test]
    fn empty_selection_is_rejected() {
        let split = planted_split();
        assert!(matches!(
            evaluate_method(&split, &small_config(), &[]),
            Err(SelectionError::EmptySelection)
        ));
    }
}

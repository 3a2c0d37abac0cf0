//! Exact per-sample SHAP attributions for boosted trees.
//!
//! [`explain`] runs the polynomial-time tree algorithm with node covers as
//! the background weighting (tree-path-dependent conditioning);
//! [`brute_force_shapley`] is the 2^n-subset oracle used to verify it.
//! Attributions live in margin (log-odds) space, where tree ensembles are
//! additive and the algorithm is exact.

use thiserror::Error;

use crate::data::Matrix;
use crate::exec::par_map_indexed;
use crate::gbt::{GbtModel, Node};
use crate::util::argsort_desc;

/// Hard cap for the brute-force oracle's subset enumeration.
pub const BRUTE_FORCE_MAX_FEATURES: usize = 12;

#[derive(Debug, Error)]
pub enum ShapError {
    #[error("feature count mismatch: model expects {expected}, input has {got}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("non-finite input cell at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("tree {tree}, node {node}: cover {cover} is not positive (corrupt model?)")]
    ZeroCover { tree: usize, node: usize, cover: f64 },
    #[error("no samples to rank")]
    Empty,
    #[error("{got} features exceed the brute-force limit of {BRUTE_FORCE_MAX_FEATURES}")]
    TooManyFeatures { got: usize },
}

/// Per-sample attributions in margin space.
///
/// For every row, `expected_value + Σ_j values[row][j]` reproduces the
/// model margin (local accuracy). Features untouched by every tree get an
/// exact zero.
#[derive(Debug, Clone)]
pub struct ShapMatrix {
    pub values: Matrix,
    /// Ensemble base expectation: base margin plus each tree's
    /// cover-weighted mean leaf value.
    pub expected_value: f64,
}

impl ShapMatrix {
    pub fn sample_count(&self) -> usize {
        self.values.rows()
    }

    pub fn feature_count(&self) -> usize {
        self.values.cols()
    }
}

/// Features ordered by mean absolute attribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRanking {
    /// Mean |SHAP| per feature, indexed by feature.
    pub scores: Vec<f64>,
    /// Feature indices, descending by score, ties by ascending index.
    pub order: Vec<usize>,
}

/// Cover-weighted expectation of the model margin over the training
/// distribution the covers encode.
pub fn expected_value(model: &GbtModel) -> f64 {
    model.base_margin
        + model.trees.iter().map(|t| subtree_mean(&t.nodes, 0)).sum::<f64>()
}

fn subtree_mean(nodes: &[Node], idx: usize) -> f64 {
    match &nodes[idx] {
        Node::Leaf { value, .. } => *value,
        Node::Internal { left, right, .. } => {
            let (wl, wr) = (node_cover(&nodes[*left]), node_cover(&nodes[*right]));
            (wl * subtree_mean(nodes, *left) + wr * subtree_mean(nodes, *right)) / (wl + wr)
        }
    }
}

fn node_cover(node: &Node) -> f64 {
    match node {
        Node::Internal { cover, .. } | Node::Leaf { cover, .. } => *cover,
    }
}

fn validate_covers(model: &GbtModel) -> Result<(), ShapError> {
    for (t, tree) in model.trees.iter().enumerate() {
        for (n, node) in tree.nodes.iter().enumerate() {
            let cover = node_cover(node);
            if !(cover > 0.0 && cover.is_finite()) {
                return Err(ShapError::ZeroCover { tree: t, node: n, cover });
            }
        }
    }
    Ok(())
}

fn check_input(model: &GbtModel, features: &Matrix) -> Result<(), ShapError> {
    if features.cols() != model.feature_count() {
        return Err(ShapError::ColumnMismatch {
            expected: model.feature_count(),
            got: features.cols(),
        });
    }
    for r in 0..features.rows() {
        for (c, v) in features.row(r).iter().enumerate() {
            if !v.is_finite() {
                return Err(ShapError::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// Exact tree-path-dependent SHAP values for every row.
pub fn explain(model: &GbtModel, features: &Matrix) -> Result<ShapMatrix, ShapError> {
    check_input(model, features)?;
    validate_covers(model)?;
    let cols = model.feature_count();
    let rows = par_map_indexed(features.rows(), |r| {
        let row = features.row(r);
        let mut phi = vec![0.0f64; cols];
        for tree in &model.trees {
            tree_shap(&tree.nodes, row, &mut phi);
        }
        phi
    });
    let expected = expected_value(model);
    #[cfg(debug_assertions)]
    for (r, phi) in rows.iter().enumerate() {
        let margin = model.base_margin
            + model.trees.iter().map(|t| t.predict_row(features.row(r))).sum::<f64>();
        let sum = expected + phi.iter().sum::<f64>();
        debug_assert!(
            (sum - margin).abs() <= 1e-6,
            "local accuracy violated at row {r}: {sum} vs {margin}"
        );
    }
    Ok(ShapMatrix { values: Matrix::from_rows(rows), expected_value: expected })
}

/// Mean-|SHAP| scores and the descending feature order.
pub fn rank_by_mean_abs(shap: &ShapMatrix) -> Result<ImportanceRanking, ShapError> {
    let n = shap.sample_count();
    if n == 0 {
        return Err(ShapError::Empty);
    }
    let mut scores = vec![0.0f64; shap.feature_count()];
    for row in shap.values.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            scores[j] += v.abs();
        }
    }
    for s in &mut scores {
        *s /= n as f64;
    }
    let order = argsort_desc(&scores);
    Ok(ImportanceRanking { scores, order })
}

/// One step of the feature path maintained while descending a tree.
#[derive(Debug, Clone, Copy)]
struct PathElement {
    /// `usize::MAX` marks the dummy element the root is extended with.
    feature: usize,
    /// Fraction of background (cover-weighted) paths flowing through.
    zero_fraction: f64,
    /// 1.0 while the explained sample follows this branch, else 0.0.
    one_fraction: f64,
    /// Permutation weight of this prefix length.
    pweight: f64,
}

const DUMMY: usize = usize::MAX;

fn tree_shap(nodes: &[Node], row: &[f64], phi: &mut [f64]) {
    recurse(nodes, row, phi, 0, Vec::with_capacity(8), 1.0, 1.0, DUMMY);
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    nodes: &[Node],
    row: &[f64],
    phi: &mut [f64],
    node_index: usize,
    mut path: Vec<PathElement>,
    parent_zero_fraction: f64,
    parent_one_fraction: f64,
    parent_feature: usize,
) {
    extend_path(&mut path, parent_zero_fraction, parent_one_fraction, parent_feature);
    match nodes[node_index] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_path_sum(&path, i);
                let el = &path[i];
                phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * value;
            }
        }
        Node::Internal { feature, threshold, left, right, cover, .. } => {
            let (hot, cold) =
                if row[feature] < threshold { (left, right) } else { (right, left) };
            let hot_zero_fraction = node_cover(&nodes[hot]) / cover;
            let cold_zero_fraction = node_cover(&nodes[cold]) / cover;
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            // a split on an already-seen feature replaces its path entry
            if let Some(k) = path.iter().position(|e| e.feature == feature) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            recurse(
                nodes,
                row,
                phi,
                hot,
                path.clone(),
                hot_zero_fraction * incoming_zero,
                incoming_one,
                feature,
            );
            recurse(
                nodes,
                row,
                phi,
                cold,
                path,
                cold_zero_fraction * incoming_zero,
                0.0,
                feature,
            );
        }
    }
}

/// Grow the path by one element, updating the permutation weights of every
/// prefix length.
fn extend_path(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: usize) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let l = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i as f64 + 1.0) / l;
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) as f64 / l;
    }
}

/// Remove element `index`, restoring the weights to the state before
/// that feature was extended onto the path.
fn unwind_path(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let l = (depth + 1) as f64;
    let mut next_one_portion = path[depth].pweight;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one_portion * l / ((i as f64 + 1.0) * one_fraction);
            next_one_portion = tmp - path[i].pweight * zero_fraction * (depth - i) as f64 / l;
        } else {
            path[i].pweight = path[i].pweight * l / (zero_fraction * (depth - i) as f64);
        }
    }
    // shift the feature bookkeeping down; the recomputed pweights stay put
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

/// Total weight the path would have if element `index` were unwound,
/// without mutating it.
fn unwound_path_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let l = (depth + 1) as f64;
    let mut total = 0.0;
    if one_fraction != 0.0 {
        let mut next_one_portion = path[depth].pweight;
        for i in (0..depth).rev() {
            let tmp = next_one_portion * l / ((i as f64 + 1.0) * one_fraction);
            total += tmp;
            next_one_portion = path[i].pweight - tmp * zero_fraction * (depth - i) as f64 / l;
        }
    } else {
        for (i, el) in path.iter().enumerate().take(depth) {
            total += el.pweight * l / (zero_fraction * (depth - i) as f64);
        }
    }
    total
}

/// Exact Shapley values by full subset enumeration, with the coalition
/// value defined as the tree-conditional expectation: follow the sample's
/// route on coalition features, cover-average over both children
/// otherwise. Verifies the efficiency axiom on every call.
pub fn brute_force_shapley(model: &GbtModel, sample: &[f64]) -> Result<Vec<f64>, ShapError> {
    let n = model.feature_count();
    if n > BRUTE_FORCE_MAX_FEATURES {
        return Err(ShapError::TooManyFeatures { got: n });
    }
    if sample.len() != n {
        return Err(ShapError::ColumnMismatch { expected: n, got: sample.len() });
    }
    for (c, v) in sample.iter().enumerate() {
        if !v.is_finite() {
            return Err(ShapError::NonFinite { row: 0, col: c });
        }
    }
    validate_covers(model)?;

    let masks = 1usize << n;
    let mut coalition_value = vec![model.base_margin; masks];
    for tree in &model.trees {
        for (mask, v) in coalition_value.iter_mut().enumerate() {
            *v += conditional_expectation(&tree.nodes, 0, sample, mask);
        }
    }

    let mut factorial = vec![1.0f64; n + 1];
    for i in 1..=n {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let mut phi = vec![0.0f64; n];
    for mask in 0..masks {
        let s = mask.count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if mask & (1 << j) == 0 {
                let weight = factorial[s] * factorial[n - s - 1] / factorial[n];
                *p += weight * (coalition_value[mask | (1 << j)] - coalition_value[mask]);
            }
        }
    }

    let gap = coalition_value[masks - 1] - coalition_value[0];
    let total: f64 = phi.iter().sum();
    assert!(
        (total - gap).abs() <= 1e-9 * gap.abs().max(1.0),
        "efficiency axiom violated: Σφ = {total}, v(N) − v(∅) = {gap}"
    );
    Ok(phi)
}

fn conditional_expectation(nodes: &[Node], idx: usize, sample: &[f64], mask: usize) -> f64 {
    match &nodes[idx] {
        Node::Leaf { value, .. } => *value,
        Node::Internal { feature, threshold, left, right, .. } => {
            if mask & (1 << feature) != 0 {
                let next = if sample[*feature] < *threshold { *left } else { *right };
                conditional_expectation(nodes, next, sample, mask)
            } else {
                let (wl, wr) = (node_cover(&nodes[*left]), node_cover(&nodes[*right]));
                (wl * conditional_expectation(nodes, *left, sample, mask)
                    + wr * conditional_expectation(nodes, *right, sample, mask))
                    / (wl + wr)
            }
        }
    }
}

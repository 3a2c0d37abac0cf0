//! Exact-greedy second-order boosting.
//!
//! Per round: g = p − y, h = p(1 − p); trees grow level by level. Every
//! feature is scanned once per level in globally pre-sorted order,
//! dispatching rows to their frontier node; the best candidate per node is
//! reduced across features by (gain desc, feature asc, threshold asc), so
//! the result does not depend on scan scheduling.

use crate::data::FlowDataset;
use crate::exec::par_map_indexed;
use crate::util::logit;

use super::{GbtConfig, GbtError, GbtModel, Node, Tree};

const RETIRED: u32 = u32::MAX;

/// Train a boosted ensemble on a preprocessed dataset.
pub fn fit(train: &FlowDataset, config: &GbtConfig) -> Result<GbtModel, GbtError> {
    config.validate()?;
    let n = train.row_count();
    if n == 0 || train.feature_count() == 0 {
        return Err(GbtError::EmptyDataset);
    }
    if n < 2 {
        return Err(GbtError::EmptyDataset);
    }
    let (n0, n1) = train.class_counts();
    if n0 == 0 || n1 == 0 {
        return Err(GbtError::SingleClass);
    }
    assert!(n < RETIRED as usize, "row count exceeds u32 indexing");

    let features = &train.features;
    let cols = features.cols();

    // Global per-feature row orderings, sorted by (value, row index).
    // Computed once; every level's scan walks these.
    let sorted: Vec<Vec<u32>> = par_map_indexed(cols, |f| {
        let mut idx: Vec<u32> = (0..n as u32).collect();
        idx.sort_unstable_by(|&a, &b| {
            features
                .get(a as usize, f)
                .total_cmp(&features.get(b as usize, f))
                .then(a.cmp(&b))
        });
        idx
    });

    let base_margin = logit(config.base_probability);
    let mut margins = vec![base_margin; n];
    let mut grad = vec![0.0f64; n];
    let mut hess = vec![0.0f64; n];
    let mut train_loss = Vec::with_capacity(config.num_rounds + 1);
    train_loss.push(mean_logloss(&margins, &train.labels));

    let mut trees = Vec::with_capacity(config.num_rounds);
    for _ in 0..config.num_rounds {
        for i in 0..n {
            let p = crate::util::sigmoid(margins[i]);
            grad[i] = p - f64::from(train.labels[i]);
            hess[i] = p * (1.0 - p);
        }
        let tree = build_tree(features, &sorted, &grad, &hess, config);
        for i in 0..n {
            margins[i] += tree.predict_row(features.row(i));
        }
        let loss = mean_logloss(&margins, &train.labels);
        debug_assert!(
            loss <= train_loss.last().unwrap() + 1e-9,
            "training loss increased: {} -> {loss}",
            train_loss.last().unwrap()
        );
        train_loss.push(loss);
        trees.push(tree);
    }

    Ok(GbtModel {
        trees,
        base_margin,
        config: config.clone(),
        schema_fingerprint: train.schema.fingerprint(),
        feature_names: train.schema.feature_names.clone(),
        train_loss,
    })
}

/// Mean logistic loss of margin scores, computed in the overflow-safe form
/// max(m,0) − y·m + ln(1 + e^{−|m|}).
pub(crate) fn mean_logloss(margins: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| m.max(0.0) - f64::from(y) * m + (-m.abs()).exp().ln_1p())
        .sum();
    total / margins.len() as f64
}

/// Split candidate for one frontier node.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    /// Deterministic preference: higher gain, then lower feature index,
    /// then lower threshold.
    fn beats(&self, other: &Candidate) -> bool {
        if self.gain != other.gain {
            return self.gain > other.gain;
        }
        if self.feature != other.feature {
            return self.feature < other.feature;
        }
        self.threshold < other.threshold
    }
}

/// Frontier node during level-wise growth.
struct BuildNode {
    tree_index: usize,
    /// Member rows in ascending order.
    rows: Vec<u32>,
    g: f64,
    h: f64,
}

/// Running per-node accumulator for one feature's sorted scan.
#[derive(Clone, Copy)]
struct ScanAcc {
    g: f64,
    h: f64,
    count: usize,
    prev: f64,
}

fn build_tree(
    features: &crate::data::Matrix,
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    config: &GbtConfig,
) -> Tree {
    let n = grad.len();
    let cols = features.cols();
    let lambda = config.l2_leaf_penalty;

    let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0, cover: 0.0 }];
    // Row-sum order is ascending row index everywhere, making every stored
    // statistic independent of scan order.
    let all_rows: Vec<u32> = (0..n as u32).collect();
    let (g0, h0) = sum_stats(&all_rows, grad, hess);
    let mut frontier = vec![BuildNode { tree_index: 0, rows: all_rows, g: g0, h: h0 }];
    // slot of each row in the current frontier; RETIRED once in a leaf
    let mut row_slot = vec![0u32; n];

    for _depth in 0..config.max_depth {
        if frontier.is_empty() {
            break;
        }

        // Per-feature pass: best candidate per frontier slot.
        let per_feature: Vec<Vec<Option<Candidate>>> = par_map_indexed(cols, |f| {
            let mut acc = vec![ScanAcc { g: 0.0, h: 0.0, count: 0, prev: 0.0 }; frontier.len()];
            let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
            for &row in &sorted[f] {
                let slot = row_slot[row as usize];
                if slot == RETIRED {
                    continue;
                }
                let slot = slot as usize;
                let v = features.get(row as usize, f);
                let a = &mut acc[slot];
                if a.count > 0 && v > a.prev {
                    let node = &frontier[slot];
                    let (gl, hl) = (a.g, a.h);
                    let (gr, hr) = (node.g - gl, node.h - hl);
                    if hl >= config.min_child_hessian && hr >= config.min_child_hessian {
                        let gain = 0.5
                            * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda)
                                - (gl + gr) * (gl + gr) / (hl + hr + lambda));
                        // Midpoint threshold; when rounding collapses it
                        // onto the left value, use the right value so the
                        // boundary still separates the two.
                        let mut threshold = 0.5 * (a.prev + v);
                        if threshold <= a.prev {
                            threshold = v;
                        }
                        let c = Candidate { gain, feature: f, threshold };
                        if gain > 0.0 && best[slot].is_none_or(|b| c.beats(&b)) {
                            best[slot] = Some(c);
                        }
                    }
                }
                a.g += grad[row as usize];
                a.h += hess[row as usize];
                a.count += 1;
                a.prev = v;
            }
            best
        });

        // Reduce across features with the same deterministic preference.
        let mut chosen: Vec<Option<Candidate>> = vec![None; frontier.len()];
        for per_slot in &per_feature {
            for (slot, cand) in per_slot.iter().enumerate() {
                if let Some(c) = cand {
                    if chosen[slot].is_none_or(|b| c.beats(&b)) {
                        chosen[slot] = Some(*c);
                    }
                }
            }
        }

        let mut next = Vec::new();
        for (slot, node) in frontier.into_iter().enumerate() {
            match chosen[slot] {
                Some(c) => {
                    let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = node
                        .rows
                        .iter()
                        .partition(|&&r| features.get(r as usize, c.feature) < c.threshold);
                    let (gl, hl) = sum_stats(&left_rows, grad, hess);
                    let (gr, hr) = sum_stats(&right_rows, grad, hess);
                    let left_id = nodes.len();
                    let right_id = nodes.len() + 1;
                    nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
                    nodes[node.tree_index] = Node::Internal {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: left_id,
                        right: right_id,
                        cover: 0.0, // finalized bottom-up below
                        gain: c.gain,
                    };
                    for &r in &left_rows {
                        row_slot[r as usize] = next.len() as u32;
                    }
                    next.push(BuildNode { tree_index: left_id, rows: left_rows, g: gl, h: hl });
                    for &r in &right_rows {
                        row_slot[r as usize] = next.len() as u32;
                    }
                    next.push(BuildNode { tree_index: right_id, rows: right_rows, g: gr, h: hr });
                }
                None => seal_leaf(&mut nodes, &node, config, lambda, &mut row_slot),
            }
        }
        frontier = next;
    }
    for node in &frontier {
        seal_leaf(&mut nodes, node, config, lambda, &mut row_slot);
    }

    finalize_covers(&mut nodes, 0);
    Tree { nodes }
}

fn seal_leaf(
    nodes: &mut [Node],
    node: &BuildNode,
    config: &GbtConfig,
    lambda: f64,
    row_slot: &mut [u32],
) {
    nodes[node.tree_index] =
        Node::Leaf { value: -config.learning_rate * node.g / (node.h + lambda), cover: node.h };
    for &r in &node.rows {
        row_slot[r as usize] = RETIRED;
    }
}

fn sum_stats(rows: &[u32], grad: &[f64], hess: &[f64]) -> (f64, f64) {
    let mut g = 0.0;
    let mut h = 0.0;
    for &r in rows {
        g += grad[r as usize];
        h += hess[r as usize];
    }
    (g, h)
}

/// Internal covers are defined as the exact sum of their children, so
/// cover additivity holds bit-for-bit at every node.
fn finalize_covers(nodes: &mut [Node], idx: usize) -> f64 {
    match nodes[idx] {
        Node::Leaf { cover, .. } => cover,
        Node::Internal { left, right, .. } => {
            let total = finalize_covers(nodes, left) + finalize_covers(nodes, right);
            if let Node::Internal { cover, .. } = &mut nodes[idx] {
                *cover = total;
            }
            total
        }
    }
}

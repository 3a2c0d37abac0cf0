//! Random model and sample fixtures shared by unit, property, and
//! integration tests. Compiled only for tests or under the `test-util`
//! feature.

use rand::Rng;

use crate::gbt::{GbtModel, Node, Tree};

/// Random tree with consistent covers: every internal cover is exactly the
/// sum of its children, mirroring what training produces.
pub fn random_tree<R: Rng>(rng: &mut R, n_features: usize, max_depth: usize) -> Tree {
    let mut nodes = Vec::new();
    let cover = rng.gen_range(4.0..100.0);
    build(rng, &mut nodes, n_features, max_depth, cover);
    Tree { nodes }
}

fn build<R: Rng>(
    rng: &mut R,
    nodes: &mut Vec<Node>,
    n_features: usize,
    depth_left: usize,
    cover: f64,
) -> usize {
    let idx = nodes.len();
    if depth_left == 0 || rng.gen_bool(0.25) {
        nodes.push(Node::Leaf { value: rng.gen_range(-2.0..2.0), cover });
        return idx;
    }
    nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
    let feature = rng.gen_range(0..n_features);
    let threshold = rng.gen_range(-1.0..1.0);
    let frac = rng.gen_range(0.2..0.8);
    let left = build(rng, nodes, n_features, depth_left - 1, cover * frac);
    let right = build(rng, nodes, n_features, depth_left - 1, cover * (1.0 - frac));
    let total = node_cover(&nodes[left]) + node_cover(&nodes[right]);
    nodes[idx] = Node::Internal {
        feature,
        threshold,
        left,
        right,
        cover: total,
        gain: rng.gen_range(0.0..5.0),
    };
    idx
}

fn node_cover(node: &Node) -> f64 {
    match node {
        Node::Internal { cover, .. } | Node::Leaf { cover, .. } => *cover,
    }
}

/// Random ensemble over generic feature names, base probability 0.5.
pub fn random_model<R: Rng>(
    rng: &mut R,
    n_features: usize,
    n_trees: usize,
    max_depth: usize,
) -> GbtModel {
    let trees = (0..n_trees).map(|_| random_tree(rng, n_features, max_depth)).collect();
    let names = (0..n_features).map(|i| format!("f{i}")).collect();
    GbtModel::from_trees(trees, 0.5, names)
}

/// Sample covering the threshold range used by [`random_tree`].
pub fn random_sample<R: Rng>(rng: &mut R, n_features: usize) -> Vec<f64> {
    (0..n_features).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

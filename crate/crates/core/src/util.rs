//! Small shared helpers.

use std::cmp::Ordering;

/// Indices of `scores` sorted descending by score, ties broken by
/// ascending index. NaN sorts last.
pub(crate) fn argsort_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        match scores[b].partial_cmp(&scores[a]) {
            Some(Ordering::Equal) | None => a.cmp(&b),
            Some(ord) => ord,
        }
    });
    order
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(margin: f64) -> f64 {
    if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]; requires `p` in (0, 1).
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

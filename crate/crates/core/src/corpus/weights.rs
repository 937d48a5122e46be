//! A_p-type characteristic of a weight on the filtration.

use crate::error::{Error, Result};
use crate::function::LeafFunction;

/// `max_A (avg_A w) (avg_A w^{-1/(p-1)})^{p-1}` over atoms of every level.
pub fn ap_characteristic(w: &LeafFunction<'_>, p: f64) -> Result<f64> {
    if !p.is_finite() || p <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "exponent must exceed 1, got {p}"
        )));
    }
    let tree = w.tree();
    if let Some(i) = w.values().iter().position(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::NonPositiveWeight {
            atom: tree.id(tree.depth(), i),
            value: w.values()[i],
        });
    }
    let dual = w.map(|v| v.powf(-1.0 / (p - 1.0)));
    let primal = w.martingale();
    let dual = dual.martingale();
    let mut best = f64::NEG_INFINITY;
    for level in 0..=tree.depth() {
        for (a, b) in primal.level(level).iter().zip(dual.level(level)) {
            best = best.max(a * b.powf(p - 1.0));
        }
    }
    Ok(best)
}

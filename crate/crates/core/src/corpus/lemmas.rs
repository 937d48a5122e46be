//! Direct numerical checks of the auxiliary inequalities used by both constructions.

use crate::error::{Error, Result};
use crate::function::LeafFunction;
use crate::tolerance;

fn check_difference_level(g: &LeafFunction<'_>, level: usize) -> Result<()> {
    let depth = g.tree().depth();
    if level == 0 || level > depth {
        return Err(Error::LevelOutOfRange { level, depth });
    }
    Ok(())
}

/// `max_A (E_{n-1}|Δ_n g²|² - 4 E_{n-1}|Δ_n g|²)` over level-`(n-1)` atoms.
///
/// `g` must take values in [0, 1] and be constant on each level-`n` atom.
/// Both conditional variances are evaluated as `E g^2 - (E g)^2` and
/// `E g^4 - (E g^2)^2`.
pub fn check_square_lemma(g: &LeafFunction<'_>, level: usize) -> Result<f64> {
    check_difference_level(g, level)?;
    g.check_unit_range(tolerance::DOMAIN)?;
    let tree = g.tree();
    let atoms = g.conditional_expectation(level)?;
    let lifted = atoms.lift_to_leaves();
    if let Some(leaf) = g
        .values()
        .iter()
        .zip(lifted.values())
        .position(|(a, b)| (a - b).abs() > tolerance::STRUCTURAL)
    {
        let owners: Vec<usize> =
            tree.push_down(level, &(0..tree.level_len(level)).collect::<Vec<_>>());
        return Err(Error::MeasurabilityViolation {
            level,
            atom: tree.id(level, owners[leaf]),
        });
    }
    let values = atoms.values();
    let fine = tree.level_probs(level);
    let mut worst = f64::NEG_INFINITY;
    for (i, &p) in tree.level_probs(level - 1).iter().enumerate() {
        let (mut m1, mut m2, mut m4) = (0.0, 0.0, 0.0);
        for c in tree.children(level - 1, i) {
            let w = fine[c] / p;
            let v = values[c];
            let v2 = v * v;
            m1 += w * v;
            m2 += w * v2;
            m4 += w * v2 * v2;
        }
        let lhs = m4 - m2 * m2;
        let rhs = m2 - m1 * m1;
        worst = worst.max(lhs - 4.0 * rhs);
    }
    Ok(worst)
}

/// `max_A (E_{n-1}|Δ_n(e^{Δ_n f} f)|² - 18 E_{n-1}|Δ_n f|²)` over level-`(n-1)` atoms.
pub fn check_exp_difference_lemma(f: &LeafFunction<'_>, level: usize) -> Result<f64> {
    check_difference_level(f, level)?;
    f.check_unit_range(tolerance::DOMAIN)?;
    let tree = f.tree();
    let fine_e = f.conditional_expectation(level)?;
    let fine_e = fine_e.values();
    let coarse_e = tree.average_children(level - 1, fine_e);
    let fine = tree.level_probs(level);
    let mut worst = f64::NEG_INFINITY;
    for (i, &p) in tree.level_probs(level - 1).iter().enumerate() {
        let kids = tree.children(level - 1, i);
        let weighted: Vec<(f64, f64, f64)> = kids
            .map(|c| {
                let d = fine_e[c] - coarse_e[i];
                (fine[c] / p, d, d.exp() * fine_e[c])
            })
            .collect();
        let mean: f64 = weighted.iter().map(|(w, _, h)| w * h).sum();
        let lhs: f64 = weighted
            .iter()
            .map(|(w, _, h)| w * (h - mean).powi(2))
            .sum();
        let rhs: f64 = weighted.iter().map(|(w, d, _)| w * d * d).sum();
        worst = worst.max(lhs - 18.0 * rhs);
    }
    Ok(worst)
}

/// One elementary exponential estimate checked on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarBound {
    pub name: &'static str,
    pub domain: (f64, f64),
    /// Largest `lhs - rhs` over the grid.
    pub max_violation: f64,
    pub worst_x: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarBoundsReport {
    pub resolution: usize,
    pub bounds: Vec<ScalarBound>,
    pub pass: bool,
}

/// Slack allowed on each scalar inequality.
pub const SCALAR_SLACK: f64 = 1e-15;

/// `e^x - 1 - x`, accurate for small `|x|`.
pub(crate) fn exp_m1_minus_x(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // Taylor tail from x^2/2; 14 terms reach below 1e-17 relative for |x| < 0.1
        let mut term = x * x / 2.0;
        let mut sum = term;
        for k in 3..17 {
            term *= x / k as f64;
            sum += term;
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

type Inequality = (&'static str, (f64, f64), fn(f64) -> f64);

/// Windows over which the unbounded domains are sampled start at -10.
const INEQUALITIES: [Inequality; 4] = [
    (
        "|e^x - 1 - x - x^2/2| <= |x|^3/2 (x <= 1)",
        (-10.0, 1.0),
        |x| (exp_m1_minus_x(x) - x * x / 2.0).abs() - x.abs().powi(3) / 2.0,
    ),
    ("e^x <= 1 + 2x (0 <= x <= 1/2)", (0.0, 0.5), |x| {
        x.exp_m1() - 2.0 * x
    }),
    ("|e^x - 1 - x| <= x^2 (-1 <= x <= 1)", (-1.0, 1.0), |x| {
        exp_m1_minus_x(x).abs() - x * x
    }),
    ("|e^x - 1| <= 2|x| (x <= 1)", (-10.0, 1.0), |x| {
        x.exp_m1().abs() - 2.0 * x.abs()
    }),
];

/// Checks the four elementary exponential estimates on `resolution` grid points each.
pub fn verify_scalar_bounds(resolution: usize) -> Result<ScalarBoundsReport> {
    if resolution < 1000 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution must be at least 1000, got {resolution}"
        )));
    }
    let bounds: Vec<ScalarBound> = INEQUALITIES
        .iter()
        .map(|&(name, (lo, hi), violation)| {
            let step = (hi - lo) / (resolution - 1) as f64;
            let (mut max_violation, mut worst_x) = (f64::NEG_INFINITY, lo);
            for i in 0..resolution {
                let x = if i + 1 == resolution {
                    hi
                } else {
                    lo + step * i as f64
                };
                let v = violation(x);
                if v > max_violation {
                    max_violation = v;
                    worst_x = x;
                }
            }
            ScalarBound {
                name,
                domain: (lo, hi),
                max_violation,
                worst_x,
            }
        })
        .collect();
    let pass = bounds.iter().all(|b| b.max_violation <= SCALAR_SLACK);
    Ok(ScalarBoundsReport {
        resolution,
        bounds,
        pass,
    })
}

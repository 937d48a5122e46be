//! Per-atom solver for the square-function coefficients.
//!
//! For one parent atom with children `c_j` (weights `w_j = P(c_j)/P(I)`,
//! conditional means `e_j = E_n f(c_j)`, differences `d_j = e_j - E_{n-1} f(I)`),
//! the walk looks for `β_j ∈ [2/5, 1/|d_j|]` with
//!
//! ```text
//! Σ_j a_j e^{d_j - β_j d_j²} = Σ_j a_j,      a_j = w_j e_j.
//! ```
//!
//! All `β_j` start at 2/5. Children are visited in ascending id order and
//! raised to `1/|d_j|` one at a time until the left side would fall below the
//! right; that child is then bisected. Children with `a_j d_j² = 0` never
//! move.
//!
//! The gap `D(β) = Σ a_j (e^{x_j} - 1)`, `x_j = d_j - β_j d_j²`, is evaluated as
//! `Σ a_j (e^{x_j} - 1 - x_j) + q - Σ a_j β_j d_j²` with `q = Σ w_j d_j²`, which
//! equals `Σ a_j x_j` exactly because `Σ w_j d_j = 0`. This keeps the walk's
//! decisions free of the `O(ε·E f)` rounding drift in `Σ w_j d_j`.

use serde::{Deserialize, Serialize};

use crate::corpus::lemmas::exp_m1_minus_x;

pub const BETA_LOW: f64 = 0.4;

/// Relative tolerance (against `Σ a_j`) for accepting the gap as zero.
pub const WALK_TOL: f64 = 1e-12;

/// How a coefficient was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaTag {
    /// Relevant child the walk never reached; β = 2/5.
    DefaultLow,
    /// Raised to 1/|d|.
    CappedHigh,
    /// The child on which the identity was solved by bisection.
    PivotBisected,
    /// `d = 0` or no f-mass; β = 2/5 and has no effect.
    Irrelevant,
}

impl BetaTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BetaTag::DefaultLow => "default-low",
            BetaTag::CappedHigh => "capped-high",
            BetaTag::PivotBisected => "pivot-bisected",
            BetaTag::Irrelevant => "irrelevant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "default-low" => BetaTag::DefaultLow,
            "capped-high" => BetaTag::CappedHigh,
            "pivot-bisected" => BetaTag::PivotBisected,
            "irrelevant" => BetaTag::Irrelevant,
            _ => return None,
        })
    }
}

/// Data of one parent atom's children.
#[derive(Clone, Debug)]
pub struct ChildData {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub diffs: Vec<f64>,
}

impl ChildData {
    fn mass(&self, j: usize) -> f64 {
        self.weights[j] * self.means[j]
    }

    /// Right-hand side `Σ a_j`.
    pub fn total_mass(&self) -> f64 {
        (0..self.weights.len()).map(|j| self.mass(j)).sum()
    }

    fn variance(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.diffs)
            .map(|(w, d)| w * d * d)
            .sum()
    }

    fn term(&self, j: usize, beta: f64) -> f64 {
        let d = self.diffs[j];
        let a = self.mass(j);
        a * (exp_m1_minus_x(d - beta * d * d) - beta * d * d)
    }

    /// `LHS(β) - RHS` for the given coefficient vector.
    pub fn gap(&self, betas: &[f64]) -> f64 {
        let tail: f64 = (0..betas.len()).map(|j| self.term(j, betas[j])).sum();
        self.variance() + tail
    }

    pub fn is_relevant(&self, j: usize) -> bool {
        let d = self.diffs[j];
        self.mass(j) * d * d > 0.0
    }

    pub fn upper(&self, j: usize) -> f64 {
        if self.diffs[j] == 0.0 {
            BETA_LOW
        } else {
            1.0 / self.diffs[j].abs()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkOutcome {
    pub betas: Vec<f64>,
    pub tags: Vec<BetaTag>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum WalkFailure {
    LowBelow { gap: f64 },
    HighAbove { gap: f64 },
}

impl std::fmt::Display for WalkFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WalkFailure::LowBelow { gap } => {
                write!(
                    f,
                    "identity side at beta = 2/5 is below the target by {}",
                    -gap
                )
            }
            WalkFailure::HighAbove { gap } => {
                write!(
                    f,
                    "identity side at beta = 1/|d| exceeds the target by {gap}"
                )
            }
        }
    }
}

/// Runs the walk on one parent atom.
pub fn walk(children: &ChildData) -> Result<WalkOutcome, WalkFailure> {
    let k = children.weights.len();
    let rhs = children.total_mass();
    let tol = WALK_TOL * rhs;
    let mut tags: Vec<BetaTag> = (0..k)
        .map(|j| {
            if children.is_relevant(j) {
                BetaTag::DefaultLow
            } else {
                BetaTag::Irrelevant
            }
        })
        .collect();
    let mut betas = vec![BETA_LOW; k];
    if rhs <= 0.0 {
        return Ok(WalkOutcome { betas, tags });
    }

    let low_gap = children.gap(&betas);
    if low_gap < -tol {
        return Err(WalkFailure::LowBelow { gap: low_gap });
    }
    let high: Vec<f64> = (0..k)
        .map(|j| {
            if children.is_relevant(j) {
                children.upper(j)
            } else {
                BETA_LOW
            }
        })
        .collect();
    let high_gap = children.gap(&high);
    if high_gap > tol {
        return Err(WalkFailure::HighAbove { gap: high_gap });
    }
    if low_gap <= tol {
        return Ok(WalkOutcome { betas, tags });
    }

    for l in (0..k).filter(|&j| children.is_relevant(j)) {
        let before = children.term(l, BETA_LOW);
        let rest = children.gap(&betas) - before;
        let raised = rest + children.term(l, high[l]);
        if raised >= -tol {
            betas[l] = high[l];
            tags[l] = BetaTag::CappedHigh;
            if raised <= tol {
                return Ok(WalkOutcome { betas, tags });
            }
            continue;
        }
        betas[l] = bisect(|b| rest + children.term(l, b), BETA_LOW, high[l]);
        tags[l] = BetaTag::PivotBisected;
        return Ok(WalkOutcome { betas, tags });
    }
    // unreachable when the high-side check passed, up to rounding in the last step
    Ok(WalkOutcome { betas, tags })
}

/// Root of a strictly decreasing `g` with `g(lo) > 0 > g(hi)`.
///
/// Halves until the bracket is narrower than `1e-14 * hi` or stops shrinking.
fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let width_tol = 1e-14 * hi;
    while hi - lo > width_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid);
        if v == 0.0 {
            return mid;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if g(lo).abs() <= g(hi).abs() {
        lo
    } else {
        hi
    }
}

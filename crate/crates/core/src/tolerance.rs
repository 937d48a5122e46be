//! Numerical tolerances shared by constructions, checkers and reports.
//!
//! Structural identities (tower property, telescoping, child sums) are held to
//! `STRUCTURAL`. Theorem inequalities get the depth-scaled slack returned by
//! [`theorem_slack`].

/// Absolute tolerance for exact structural identities.
pub const STRUCTURAL: f64 = 1e-12;

/// Children probabilities must sum to the parent's within this absolute amount.
pub const PROBABILITY_SUM: f64 = 1e-12;

/// Leaf values may leave [0, 1] by at most this much before a domain error.
pub const DOMAIN: f64 = 1e-12;

/// Maximum relative residual of the per-level multiplier identities.
pub const IDENTITY_RESIDUAL: f64 = 1e-9;

/// Maximum relative residual of the exact mass identity.
pub const MASS_IDENTITY: f64 = 1e-10;

/// Slack on the plain mass inequality.
pub const MASS_INEQUALITY: f64 = 1e-12;

/// Slack on coefficient bracket checks (alpha >= 1/2, 2/5 <= beta <= 1/|d|).
pub const COEFFICIENT: f64 = 1e-12;

/// Floor used as the denominator of relative residuals.
pub const RESIDUAL_FLOOR: f64 = 1e-300;

/// Martingale differences at or below this magnitude are treated as zero in ratio checks.
pub const ZERO_DIFFERENCE: f64 = 1e-14;

/// Slack for the square-function bounds on a depth-`depth` tree.
pub fn theorem_slack(depth: usize) -> f64 {
    1e-8 * (1.0 + depth as f64)
}

/// Relative residual `|lhs - rhs| / max(|rhs|, floor)`.
pub fn relative_residual(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / rhs.abs().max(RESIDUAL_FLOOR)
}

//! Multiplier for the conditional square function.
//!
//! `m = e^φ` with `φ = f - ‖f‖∞ - Σ_n α_n E_{n-1}|Δ_n f|²`, where each `α_n`
//! is the unique `F_{n-1}`-measurable solution of
//! `E_{n-1}[f e^{Δ_n f - α_n E_{n-1}|Δ_n f|²}] = E_{n-1} f`.

use crate::corpus::lemmas::exp_m1_minus_x;
use crate::error::Result;
use crate::function::{LeafFunction, LevelFunction, Martingale};
use crate::tolerance::{self, relative_residual};
use crate::tree::FiltrationTree;

use super::{mass_diagnostics, pull_through_residual, MassDiagnostics};

/// Value used where `α_n` is unconstrained.
pub const ALPHA_DEFAULT: f64 = 0.5;

pub const SIGMA_BOUND: f64 = 18.0;

/// `α_n` for `n = 1..=N`; entry `n - 1` lives on level `n - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaCoefficients<'t> {
    pub levels: Vec<LevelFunction<'t>>,
    /// Atoms where `E_{n-1}|Δ_n f|² = 0` or `E_{n-1} f = 0`.
    pub degenerate: Vec<Vec<bool>>,
}

impl<'t> AlphaCoefficients<'t> {
    /// `α_n` on level-`(n-1)` atoms.
    pub fn alpha(&self, n: usize) -> &[f64] {
        self.levels[n - 1].values()
    }

    pub fn min(&self) -> f64 {
        self.levels
            .iter()
            .flat_map(|l| l.values().iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct SigmaCertificate<'t> {
    pub f: LeafFunction<'t>,
    pub m: LeafFunction<'t>,
    pub mf: LeafFunction<'t>,
    pub alphas: AlphaCoefficients<'t>,
    /// Max relative residual of the defining identity, per level `1..=N`.
    pub identity_residuals: Vec<f64>,
    pub sigma_sq_max: f64,
    /// `E(mf)`.
    pub mass_lhs: f64,
    /// `e^{-‖f‖∞} E f`.
    pub mass_rhs: f64,
    /// Relative residual of `E(mf) = e^{-‖f‖∞ + E f} E f`.
    pub exact_mass_identity_residual: f64,
}

/// Per-parent weights, child means and differences at level `n`.
pub(crate) struct LevelData<'a> {
    pub tree: &'a FiltrationTree,
    pub level: usize,
    pub coarse: &'a [f64],
    pub fine: &'a [f64],
}

impl<'a> LevelData<'a> {
    pub fn new(mart: &'a Martingale<'_>, level: usize) -> Self {
        LevelData {
            tree: mart.tree(),
            level,
            coarse: mart.level(level - 1),
            fine: mart.level(level),
        }
    }

    /// `(weight, child mean, difference)` for each child of parent `i`.
    pub fn children(&self, i: usize) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let p = self.tree.prob(self.level - 1, i);
        let probs = self.tree.level_probs(self.level);
        let parent = self.coarse[i];
        self.tree
            .children(self.level - 1, i)
            .map(move |c| (probs[c] / p, self.fine[c], self.fine[c] - parent))
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.children(i).map(|(w, _, d)| w * d * d).sum()
    }
}

fn alpha_level(mart: &Martingale<'_>, n: usize) -> (Vec<f64>, Vec<bool>) {
    let data = LevelData::new(mart, n);
    let parents = mart.level(n - 1);
    let mut values = Vec::with_capacity(parents.len());
    let mut degenerate = Vec::with_capacity(parents.len());
    for (i, &mean) in parents.iter().enumerate() {
        let q = data.variance(i);
        if q == 0.0 || mean == 0.0 {
            values.push(ALPHA_DEFAULT);
            degenerate.push(true);
            continue;
        }
        // E(f e^{d}) / E f - 1 = (Σ w e (e^d - 1 - d) + q) / E f, using Σ w d = 0
        let tail: f64 = data
            .children(i)
            .map(|(w, e, d)| w * e * exp_m1_minus_x(d))
            .sum();
        let excess = (tail + q) / mean;
        values.push(excess.ln_1p() / q);
        degenerate.push(false);
    }
    (values, degenerate)
}

/// `α_n` on level-`(n-1)` atoms.
pub fn compute_alpha<'t>(f: &LeafFunction<'t>, n: usize) -> Result<LevelFunction<'t>> {
    f.check_unit_range(tolerance::DOMAIN)?;
    let tree = f.tree();
    check_difference_level(tree, n)?;
    let (values, _) = alpha_level(&f.martingale(), n);
    Ok(LevelFunction::from_trusted(tree, n - 1, values))
}

pub(crate) fn check_difference_level(tree: &FiltrationTree, n: usize) -> Result<()> {
    if n == 0 || n > tree.depth() {
        Err(crate::error::Error::LevelOutOfRange {
            level: n,
            depth: tree.depth(),
        })
    } else {
        Ok(())
    }
}

/// `E_{n-1}|Δ_n f|²` for every `n`, entry `n - 1` on level `n - 1`.
fn variances(mart: &Martingale<'_>) -> Vec<Vec<f64>> {
    (1..=mart.tree().depth())
        .map(|n| mart.conditional_variance(n))
        .collect()
}

/// Leaf values of `Σ_n α_n E_{n-1}|Δ_n f|²`.
fn penalty(tree: &FiltrationTree, alphas: &[&[f64]], vars: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0];
    for n in 1..=tree.depth() {
        for ((a, alpha), q) in acc.iter_mut().zip(alphas[n - 1]).zip(&vars[n - 1]) {
            *a += alpha * q;
        }
        acc = tree.spread_to_children(n - 1, &acc);
    }
    acc
}

/// `e^{f - ‖f‖∞ - Σ α_n q_n}` at every leaf.
pub(crate) fn multiplier_from_alphas(
    f: &LeafFunction<'_>,
    mart: &Martingale<'_>,
    alphas: &[&[f64]],
) -> Vec<f64> {
    let pen = penalty(f.tree(), alphas, &variances(mart));
    let sup = f.sup_norm();
    f.values()
        .iter()
        .zip(&pen)
        .map(|(v, p)| (v - sup - p).exp())
        .collect()
}

pub fn construct_multiplier_sigma<'t>(f: &LeafFunction<'t>) -> Result<SigmaCertificate<'t>> {
    f.check_unit_range(tolerance::DOMAIN)?;
    let tree = f.tree();
    let mart = f.martingale();
    let depth = tree.depth();

    let mut levels = Vec::with_capacity(depth);
    let mut degenerate = Vec::with_capacity(depth);
    for n in 1..=depth {
        let (values, flags) = alpha_level(&mart, n);
        levels.push(LevelFunction::from_trusted(tree, n - 1, values));
        degenerate.push(flags);
    }
    let alphas = AlphaCoefficients { levels, degenerate };
    let slices: Vec<&[f64]> = alphas.levels.iter().map(|l| l.values()).collect();
    let m = LeafFunction::from_trusted(tree, multiplier_from_alphas(f, &mart, &slices));
    let mf = m.mul(f);

    let identity_residuals = (1..=depth)
        .map(|n| identity_residual(&mart, n, alphas.alpha(n)))
        .collect();
    let sigma_sq_max = max_value(&mf.conditional_square_function_sq());
    let MassDiagnostics {
        lhs,
        rhs,
        exact_residual,
    } = mass_diagnostics(f, &mf);

    Ok(SigmaCertificate {
        f: f.clone(),
        m,
        mf,
        alphas,
        identity_residuals,
        sigma_sq_max,
        mass_lhs: lhs,
        mass_rhs: rhs,
        exact_mass_identity_residual: exact_residual,
    })
}

pub(crate) fn max_value(g: &LeafFunction<'_>) -> f64 {
    g.values().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn identity_residual(mart: &Martingale<'_>, n: usize, alpha: &[f64]) -> f64 {
    let data = LevelData::new(mart, n);
    let mut worst: f64 = 0.0;
    for (i, (&mean, &a)) in mart.level(n - 1).iter().zip(alpha).enumerate() {
        let q = data.variance(i);
        let lhs: f64 = data
            .children(i)
            .map(|(w, e, d)| w * e * (d - a * q).exp())
            .sum();
        worst = worst.max(relative_residual(lhs, mean));
    }
    worst
}

/// Max relative residual of `E_{n-1}[f e^{Δ_n f - α_n E_{n-1}|Δ_n f|²}] = E_{n-1} f`.
pub fn verify_identity_sigma(
    f: &LeafFunction<'_>,
    alphas: &AlphaCoefficients<'_>,
    n: usize,
) -> Result<f64> {
    check_difference_level(f.tree(), n)?;
    Ok(identity_residual(&f.martingale(), n, alphas.alpha(n)))
}

/// Max relative residual of `E_n(e^{z_n} f) = E_n f`, `z_n = Σ_{m>n} (Δ_m f - α_m E_{m-1}|Δ_m f|²)`.
pub fn verify_pull_through(
    f: &LeafFunction<'_>,
    alphas: &AlphaCoefficients<'_>,
    n: usize,
) -> Result<f64> {
    f.tree().check_level(n)?;
    let mart = f.martingale();
    let vars = variances(&mart);
    Ok(pull_through_residual(f, &mart, n, |m| {
        let tree = f.tree();
        let shift: Vec<f64> = alphas
            .alpha(m)
            .iter()
            .zip(&vars[m - 1])
            .map(|(a, q)| a * q)
            .collect();
        let shift = tree.spread_to_children(m - 1, &shift);
        mart.difference(m)
            .iter()
            .zip(&shift)
            .map(|(d, s)| d - s)
            .collect()
    }))
}

/// `(max σ(mf)², max <= 18 + slack)`.
pub fn verify_sigma_bound(cert: &SigmaCertificate<'_>) -> (f64, bool) {
    let depth = cert.f.tree().depth();
    let max = cert.sigma_sq_max;
    (max, max <= SIGMA_BOUND + tolerance::theorem_slack(depth))
}

/// Mass inequality with slack and the exact identity to relative tolerance.
pub fn verify_mass_bound(cert: &SigmaCertificate<'_>) -> bool {
    cert.mass_lhs >= cert.mass_rhs - tolerance::MASS_INEQUALITY
        && cert.exact_mass_identity_residual <= tolerance::MASS_IDENTITY
}

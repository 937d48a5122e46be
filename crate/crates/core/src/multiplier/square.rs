//! Multiplier for the martingale square function.
//!
//! `m = e^φ` with `φ = f - ‖f‖∞ - Σ_n β_n |Δ_n f|²`. Each `β_n` is
//! `F_n`-measurable, lies in `[2/5, 1/|Δ_n f|]` and satisfies
//! `E_{n-1}[f e^{Δ_n f - β_n|Δ_n f|²}] = E_{n-1} f`; it is produced parent by
//! parent by the walk in [`super::walk`].

use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::function::{LeafFunction, LevelFunction, Martingale};
use crate::tolerance::{self, relative_residual};

use super::sigma::{check_difference_level, max_value, LevelData};
use super::walk::{walk, BetaTag, ChildData, BETA_LOW};
use super::{mass_diagnostics, pull_through_residual, MassDiagnostics};

/// Constant in the per-level difference estimate.
pub const FOUR_PLUS_E: f64 = 4.0 + E;

/// `(4+e)² e^{4/5} · 5/4`, the square-function bound the construction guarantees.
pub fn c_bound_derived() -> f64 {
    FOUR_PLUS_E * FOUR_PLUS_E * 0.8f64.exp() * 1.25
}

/// `β_n` for `n = 1..=N`; entry `n - 1` lives on level `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaCoefficients<'t> {
    pub levels: Vec<LevelFunction<'t>>,
    pub tags: Vec<Vec<BetaTag>>,
}

impl<'t> BetaCoefficients<'t> {
    /// `β_n` on level-`n` atoms.
    pub fn beta(&self, n: usize) -> &[f64] {
        self.levels[n - 1].values()
    }

    pub fn tags(&self, n: usize) -> &[BetaTag] {
        &self.tags[n - 1]
    }
}

#[derive(Clone, Debug)]
pub struct SCertificate<'t> {
    pub f: LeafFunction<'t>,
    pub m: LeafFunction<'t>,
    pub mf: LeafFunction<'t>,
    pub betas: BetaCoefficients<'t>,
    /// Max relative residual of the defining identity, per level `1..=N`.
    pub identity_residuals: Vec<f64>,
    /// Largest excursion of β outside `[2/5, 1/|Δ_n f|]` on atoms where it matters.
    pub beta_bracket_violation: f64,
    /// Per level, max of `|Δ_n(e^{Δ_n f - β_n|Δ_n f|²} f)| / |Δ_n f|` over atoms with `Δ_n f != 0`.
    pub difference_ratios: Vec<f64>,
    /// Per level, max of the same numerator over atoms with `Δ_n f = 0`.
    pub zero_difference_numerators: Vec<f64>,
    pub s_sq_max: f64,
    pub c_bound: f64,
    pub mass_lhs: f64,
    pub mass_rhs: f64,
    pub exact_mass_identity_residual: f64,
}

fn child_data(data: &LevelData<'_>, i: usize) -> ChildData {
    let mut out = ChildData {
        weights: Vec::new(),
        means: Vec::new(),
        diffs: Vec::new(),
    };
    for (w, e, d) in data.children(i) {
        out.weights.push(w);
        out.means.push(e);
        out.diffs.push(d);
    }
    out
}

fn walk_level(mart: &Martingale<'_>, n: usize) -> Result<(Vec<f64>, Vec<BetaTag>)> {
    let tree = mart.tree();
    let data = LevelData::new(mart, n);
    let mut betas = Vec::with_capacity(tree.level_len(n));
    let mut tags = Vec::with_capacity(tree.level_len(n));
    for i in 0..tree.level_len(n - 1) {
        let outcome = walk(&child_data(&data, i)).map_err(|e| Error::InfeasibleWalk {
            level: n,
            atom: tree.id(n - 1, i),
            reason: e.to_string(),
        })?;
        betas.extend(outcome.betas);
        tags.extend(outcome.tags);
    }
    Ok((betas, tags))
}

/// `β_n` on level-`n` atoms together with how each value was chosen.
pub fn atom_walk_beta<'t>(
    f: &LeafFunction<'t>,
    n: usize,
) -> Result<(LevelFunction<'t>, Vec<BetaTag>)> {
    f.check_unit_range(tolerance::DOMAIN)?;
    check_difference_level(f.tree(), n)?;
    let (betas, tags) = walk_level(&f.martingale(), n)?;
    Ok((LevelFunction::from_trusted(f.tree(), n, betas), tags))
}

fn feasibility_margins(
    f: &LeafFunction<'_>,
    n: usize,
    pick: impl Fn(&ChildData, usize) -> f64,
) -> Result<Vec<f64>> {
    f.check_unit_range(tolerance::DOMAIN)?;
    let tree = f.tree();
    check_difference_level(tree, n)?;
    let mart = f.martingale();
    let data = LevelData::new(&mart, n);
    Ok((0..tree.level_len(n - 1))
        .map(|i| {
            let c = child_data(&data, i);
            let betas: Vec<f64> = (0..c.weights.len()).map(|j| pick(&c, j)).collect();
            c.gap(&betas)
        })
        .collect())
}

/// `E_{n-1}[f e^{Δ_n f - (2/5)|Δ_n f|²}] - E_{n-1} f` per level-`(n-1)` atom.
pub fn check_beta_lower_feasible(f: &LeafFunction<'_>, n: usize) -> Result<Vec<f64>> {
    feasibility_margins(f, n, |_, _| BETA_LOW)
}

/// The same margin with `β = 1/|Δ_n f|` wherever `Δ_n f != 0`.
pub fn check_beta_upper_feasible(f: &LeafFunction<'_>, n: usize) -> Result<Vec<f64>> {
    feasibility_margins(f, n, |c, j| c.upper(j))
}

/// Leaf values of `Σ_n β_n |Δ_n f|²`.
fn penalty(mart: &Martingale<'_>, betas: &[&[f64]]) -> Vec<f64> {
    let tree = mart.tree();
    let mut acc = vec![0.0];
    for n in 1..=tree.depth() {
        acc = tree.spread_to_children(n - 1, &acc);
        for ((a, d), b) in acc.iter_mut().zip(mart.difference(n)).zip(betas[n - 1]) {
            *a += b * d * d;
        }
    }
    acc
}

pub(crate) fn multiplier_from_betas(
    f: &LeafFunction<'_>,
    mart: &Martingale<'_>,
    betas: &[&[f64]],
) -> Vec<f64> {
    let pen = penalty(mart, betas);
    let sup = f.sup_norm();
    f.values()
        .iter()
        .zip(&pen)
        .map(|(v, p)| (v - sup - p).exp())
        .collect()
}

pub fn construct_multiplier_s<'t>(f: &LeafFunction<'t>) -> Result<SCertificate<'t>> {
    f.check_unit_range(tolerance::DOMAIN)?;
    let tree = f.tree();
    let mart = f.martingale();
    let depth = tree.depth();

    let mut levels = Vec::with_capacity(depth);
    let mut tags = Vec::with_capacity(depth);
    for n in 1..=depth {
        let (values, level_tags) = walk_level(&mart, n)?;
        levels.push(LevelFunction::from_trusted(tree, n, values));
        tags.push(level_tags);
    }
    let betas = BetaCoefficients { levels, tags };
    let slices: Vec<&[f64]> = betas.levels.iter().map(|l| l.values()).collect();

    let m = LeafFunction::from_trusted(tree, multiplier_from_betas(f, &mart, &slices));
    let mf = m.mul(f);

    let mut identity_residuals = Vec::with_capacity(depth);
    let mut difference_ratios = Vec::with_capacity(depth);
    let mut zero_difference_numerators = Vec::with_capacity(depth);
    let mut beta_bracket_violation: f64 = 0.0;
    for n in 1..=depth {
        let level = level_checks(&mart, n, slices[n - 1]);
        identity_residuals.push(level.identity_residual);
        difference_ratios.push(level.max_ratio);
        zero_difference_numerators.push(level.max_zero_numerator);
        beta_bracket_violation = beta_bracket_violation.max(level.bracket_violation);
    }
    let s_sq_max = max_value(&mf.square_function_sq());
    let MassDiagnostics {
        lhs,
        rhs,
        exact_residual,
    } = mass_diagnostics(f, &mf);

    Ok(SCertificate {
        f: f.clone(),
        m,
        mf,
        betas,
        identity_residuals,
        beta_bracket_violation,
        difference_ratios,
        zero_difference_numerators,
        s_sq_max,
        c_bound: c_bound_derived(),
        mass_lhs: lhs,
        mass_rhs: rhs,
        exact_mass_identity_residual: exact_residual,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct LevelCheck {
    pub identity_residual: f64,
    pub max_ratio: f64,
    pub max_zero_numerator: f64,
    pub bracket_violation: f64,
}

/// Identity residual, difference ratios and bracket check for one level.
pub(crate) fn level_checks(mart: &Martingale<'_>, n: usize, beta: &[f64]) -> LevelCheck {
    let tree = mart.tree();
    let data = LevelData::new(mart, n);
    let mut out = LevelCheck::default();
    for (i, &mean) in mart.level(n - 1).iter().enumerate() {
        let kids = tree.children(n - 1, i);
        let first = kids.start;
        let scaled: Vec<(f64, f64, f64)> = data
            .children(i)
            .enumerate()
            .map(|(j, (w, e, d))| (w, d, (d - beta[first + j] * d * d).exp() * e))
            .collect();
        let lhs: f64 = scaled.iter().map(|(w, _, h)| w * h).sum();
        out.identity_residual = out.identity_residual.max(relative_residual(lhs, mean));
        for (j, &(w, d, h)) in scaled.iter().enumerate() {
            let numerator = (h - lhs).abs();
            if d.abs() > tolerance::ZERO_DIFFERENCE {
                out.max_ratio = out.max_ratio.max(numerator / d.abs());
            } else {
                out.max_zero_numerator = out.max_zero_numerator.max(numerator);
            }
            let b = beta[first + j];
            if w * data.fine[first + j] > 0.0 && d != 0.0 {
                let excursion = (BETA_LOW - b).max(b - 1.0 / d.abs());
                out.bracket_violation = out.bracket_violation.max(excursion);
            }
        }
    }
    out
}

/// Max relative residual of `E_{n-1}[f e^{Δ_n f - β_n|Δ_n f|²}] = E_{n-1} f`.
pub fn verify_identity_s(
    f: &LeafFunction<'_>,
    betas: &BetaCoefficients<'_>,
    n: usize,
) -> Result<f64> {
    check_difference_level(f.tree(), n)?;
    Ok(level_checks(&f.martingale(), n, betas.beta(n)).identity_residual)
}

/// Outcome of the per-level difference estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioCheck {
    /// Max of `|Δ_n(e^{Δ_n f - β_n|Δ_n f|²} f)| / |Δ_n f|` over atoms with `|Δ_n f| > 1e-14`.
    pub max_ratio: f64,
    /// Max numerator over atoms with `|Δ_n f| <= 1e-14`.
    pub max_zero_numerator: f64,
}

impl RatioCheck {
    pub fn passes(&self) -> bool {
        self.max_ratio <= FOUR_PLUS_E + tolerance::IDENTITY_RESIDUAL
            && self.max_zero_numerator <= tolerance::STRUCTURAL
    }
}

pub fn verify_4e_bound(
    f: &LeafFunction<'_>,
    betas: &BetaCoefficients<'_>,
    n: usize,
) -> Result<RatioCheck> {
    check_difference_level(f.tree(), n)?;
    let level = level_checks(&f.martingale(), n, betas.beta(n));
    Ok(RatioCheck {
        max_ratio: level.max_ratio,
        max_zero_numerator: level.max_zero_numerator,
    })
}

/// Max relative residual of `E_n(e^{z_n} f) = E_n f`, `z_n = Σ_{m>n} (Δ_m f - β_m|Δ_m f|²)`.
pub fn verify_pull_through_s(
    f: &LeafFunction<'_>,
    betas: &BetaCoefficients<'_>,
    n: usize,
) -> Result<f64> {
    f.tree().check_level(n)?;
    let mart = f.martingale();
    Ok(pull_through_residual(f, &mart, n, |m| {
        mart.difference(m)
            .iter()
            .zip(betas.beta(m))
            .map(|(d, b)| d - b * d * d)
            .collect()
    }))
}

/// `(max S(mf)², max <= C + slack)`.
pub fn verify_s_bound(cert: &SCertificate<'_>) -> (f64, bool) {
    let depth = cert.f.tree().depth();
    (
        cert.s_sq_max,
        cert.s_sq_max <= cert.c_bound + tolerance::theorem_slack(depth),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generators::{gen_dyadic, gen_random_f, gen_random_tree};

    #[test]
    fn c_bound_value() {
        let c = c_bound_derived();
        assert!((c - 125.563).abs() < 1e-3, "{c}");
        assert!(c > FOUR_PLUS_E * FOUR_PLUS_E);
        assert!(c <= 125.63);
    }

    #[test]
    fn two_point_feasibility() {
        let tree = gen_dyadic(1).unwrap();
        let f = LeafFunction::new(&tree, vec![1.0, 0.0]).unwrap();
        let low = check_beta_lower_feasible(&f, 1).unwrap();
        assert!((low[0] - (0.5 * 0.4f64.exp() - 0.5)).abs() < 1e-15);
        assert!((low[0] - 0.24591).abs() < 1e-5);
        let high = check_beta_upper_feasible(&f, 1).unwrap();
        assert_eq!(high, vec![0.0]);
    }

    #[test]
    fn two_point_walk_and_certificate() {
        let tree = gen_dyadic(1).unwrap();
        let f = LeafFunction::new(&tree, vec![1.0, 0.0]).unwrap();
        let (beta, tags) = atom_walk_beta(&f, 1).unwrap();
        assert_eq!(beta.values(), &[2.0, 0.4]);
        assert_eq!(tags, vec![BetaTag::CappedHigh, BetaTag::Irrelevant]);

        let cert = construct_multiplier_s(&f).unwrap();
        assert!((cert.m.values()[0] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((cert.m.values()[1] - (-1.1f64).exp()).abs() < 1e-15);
        assert_eq!(cert.mf.values()[1], 0.0);
        assert!((cert.s_sq_max - (-1f64).exp() / 4.0).abs() < 1e-15);
        assert!(cert.identity_residuals[0] < 1e-15);
        // e^{d - βd²} f = (1, 0) with parent mean 1/2, so both children give 1/2 over |d| = 1/2
        let ratio = verify_4e_bound(&f, &cert.betas, 1).unwrap();
        assert!((ratio.max_ratio - 1.0).abs() < 1e-15);
        assert!(ratio.passes());
        assert!(verify_s_bound(&cert).1);
    }

    #[test]
    fn constant_input() {
        let tree = gen_random_tree(4, 3, 2).unwrap();
        let f = LeafFunction::constant(&tree, 0.6).unwrap();
        let cert = construct_multiplier_s(&f).unwrap();
        assert!(cert.m.values().iter().all(|&m| m == 1.0));
        assert!(cert.s_sq_max < 1e-30);
        for n in 1..=4 {
            assert!(check_beta_lower_feasible(&f, n)
                .unwrap()
                .iter()
                .all(|m| m.abs() < 1e-15));
            assert!(cert.betas.beta(n).iter().all(|&b| b == 0.4));
            let r = verify_4e_bound(&f, &cert.betas, n).unwrap();
            assert!(r.max_zero_numerator < 1e-15);
        }
    }

    #[test]
    fn random_certificates_pass() {
        for seed in 0..50 {
            let tree = gen_random_tree(5, 4, 100 + seed).unwrap();
            let f = gen_random_f(&tree, seed, 0.0, 1.0).unwrap();
            let cert = construct_multiplier_s(&f).unwrap();
            assert!(
                cert.identity_residuals.iter().all(|&r| r <= 1e-9),
                "{:?}",
                cert.identity_residuals
            );
            assert!(cert.beta_bracket_violation <= 1e-12);
            assert!(cert
                .difference_ratios
                .iter()
                .all(|&r| r <= FOUR_PLUS_E + 1e-9));
            assert!(cert.zero_difference_numerators.iter().all(|&r| r <= 1e-12));
            assert!(verify_s_bound(&cert).1);
            assert!(cert.exact_mass_identity_residual <= 1e-10);
            for n in 1..=5 {
                let pivots = cert
                    .betas
                    .tags(n)
                    .iter()
                    .filter(|&&t| t == BetaTag::PivotBisected)
                    .count();
                assert!(pivots <= tree.level_len(n - 1));
                assert!(check_beta_lower_feasible(&f, n)
                    .unwrap()
                    .iter()
                    .all(|&m| m >= -1e-12));
                assert!(check_beta_upper_feasible(&f, n)
                    .unwrap()
                    .iter()
                    .all(|&m| m <= 1e-12));
            }
            for n in 0..=5 {
                assert!(verify_pull_through_s(&f, &cert.betas, n).unwrap() <= 1e-9);
            }
        }
    }

    #[test]
    fn walk_is_deterministic() {
        let tree = gen_random_tree(6, 4, 77).unwrap();
        let f = gen_random_f(&tree, 77, 0.0, 1.0).unwrap();
        let a = construct_multiplier_s(&f).unwrap();
        let b = construct_multiplier_s(&f).unwrap();
        for n in 1..=6 {
            let bits = |c: &SCertificate<'_>| {
                c.betas
                    .beta(n)
                    .iter()
                    .map(|b| b.to_bits())
                    .collect::<Vec<_>>()
            };
            assert_eq!(bits(&a), bits(&b));
        }
    }
}

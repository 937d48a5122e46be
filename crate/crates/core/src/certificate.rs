//! Serialized certificates and their independent re-verification.
//!
//! A record stores the coefficients, the multiplier and the diagnostics of a
//! construction. Verification trusts none of the stored diagnostics: it
//! rebuilds the multiplier from the stored coefficients, compares it with the
//! stored multiplier, and recomputes every residual and bound from the stored
//! multiplier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::{LeafFunction, LevelFunction};
use crate::io::{leaf_entries, values_from_entries, AtomValue};
use crate::multiplier::sigma::{
    multiplier_from_alphas, verify_identity_sigma, verify_pull_through, AlphaCoefficients,
    SigmaCertificate, ALPHA_DEFAULT, SIGMA_BOUND,
};
use crate::multiplier::square::{
    c_bound_derived, level_checks, multiplier_from_betas, verify_pull_through_s, BetaCoefficients,
    SCertificate, FOUR_PLUS_E,
};
use crate::multiplier::walk::BetaTag;
use crate::multiplier::{
    all_pass, mass_checks, mass_diagnostics, multiplier_range_checks, Certificate, Check,
};
use crate::tolerance::{self, relative_residual};
use crate::tree::FiltrationTree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub atom: i64,
    pub alpha: f64,
    pub degenerate: bool,
}

/// `α_n` on the level-`(n-1)` atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaLevel {
    pub level: usize,
    pub atoms: Vec<AlphaEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaEntry {
    pub atom: i64,
    pub beta: f64,
    pub tag: BetaTag,
}

/// `β_n` on the level-`n` atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaLevel {
    pub level: usize,
    pub atoms: Vec<BetaEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub method: String,
    /// Tree file the certificate was built from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<String>,
    /// Function file the certificate was built from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<AlphaLevel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<BetaLevel>>,
    pub multiplier: Vec<AtomValue>,
    /// Per level `1..=N`.
    pub identity_residuals: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_sq_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_sq_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difference_ratios: Option<Vec<f64>>,
    pub bound: f64,
    pub mass_lhs: f64,
    pub mass_rhs: f64,
    pub exact_mass_identity_residual: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl CertificateRecord {
    pub fn from_certificate(
        cert: &Certificate<'_>,
        tree: Option<String>,
        f: Option<String>,
    ) -> Self {
        let checks = cert.checks();
        let pass = all_pass(&checks);
        match cert {
            Certificate::Sigma(c) => sigma_record(c, tree, f, checks, pass),
            Certificate::Square(c) => s_record(c, tree, f, checks, pass),
        }
    }
}

fn sigma_record(
    c: &SigmaCertificate<'_>,
    tree_ref: Option<String>,
    f_ref: Option<String>,
    checks: Vec<Check>,
    pass: bool,
) -> CertificateRecord {
    let tree = c.f.tree();
    let alphas = (1..=tree.depth())
        .map(|n| AlphaLevel {
            level: n,
            atoms: c
                .alphas
                .alpha(n)
                .iter()
                .zip(&c.alphas.degenerate[n - 1])
                .enumerate()
                .map(|(i, (&alpha, &degenerate))| AlphaEntry {
                    atom: tree.id(n - 1, i),
                    alpha,
                    degenerate,
                })
                .collect(),
        })
        .collect();
    CertificateRecord {
        method: "sigma".into(),
        tree: tree_ref,
        f: f_ref,
        depth: tree.depth(),
        alphas: Some(alphas),
        betas: None,
        multiplier: leaf_entries(tree, c.m.values()),
        identity_residuals: c.identity_residuals.clone(),
        sigma_sq_max: Some(c.sigma_sq_max),
        s_sq_max: None,
        c_bound: None,
        difference_ratios: None,
        bound: SIGMA_BOUND,
        mass_lhs: c.mass_lhs,
        mass_rhs: c.mass_rhs,
        exact_mass_identity_residual: c.exact_mass_identity_residual,
        checks,
        pass,
    }
}

fn s_record(
    c: &SCertificate<'_>,
    tree_ref: Option<String>,
    f_ref: Option<String>,
    checks: Vec<Check>,
    pass: bool,
) -> CertificateRecord {
    let tree = c.f.tree();
    let betas = (1..=tree.depth())
        .map(|n| BetaLevel {
            level: n,
            atoms: c
                .betas
                .beta(n)
                .iter()
                .zip(c.betas.tags(n))
                .enumerate()
                .map(|(i, (&beta, &tag))| BetaEntry {
                    atom: tree.id(n, i),
                    beta,
                    tag,
                })
                .collect(),
        })
        .collect();
    CertificateRecord {
        method: "s".into(),
        tree: tree_ref,
        f: f_ref,
        depth: tree.depth(),
        alphas: None,
        betas: Some(betas),
        multiplier: leaf_entries(tree, c.m.values()),
        identity_residuals: c.identity_residuals.clone(),
        sigma_sq_max: None,
        s_sq_max: Some(c.s_sq_max),
        c_bound: Some(c.c_bound),
        difference_ratios: Some(c.difference_ratios.clone()),
        bound: c.c_bound,
        mass_lhs: c.mass_lhs,
        mass_rhs: c.mass_rhs,
        exact_mass_identity_residual: c.exact_mass_identity_residual,
        checks,
        pass,
    }
}

/// Tolerances applied when re-checking a stored certificate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyTolerance {
    /// Relative residual of the per-level identities and the pull-through identity.
    pub identity: f64,
    /// Relative residual of the exact mass identity.
    pub mass_identity: f64,
    /// Relative mismatch between the stored multiplier and the one rebuilt from the coefficients.
    pub multiplier: f64,
}

impl Default for VerifyTolerance {
    fn default() -> Self {
        VerifyTolerance {
            identity: tolerance::IDENTITY_RESIDUAL,
            mass_identity: tolerance::MASS_IDENTITY,
            multiplier: tolerance::STRUCTURAL,
        }
    }
}

impl VerifyTolerance {
    /// Uses one value for every relative tolerance.
    pub fn uniform(tol: f64) -> Self {
        VerifyTolerance {
            identity: tol,
            mass_identity: tol,
            multiplier: tol,
        }
    }
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedCertificate(msg.into())
}

fn check_depth(tree: &FiltrationTree, record: &CertificateRecord) -> Result<()> {
    if record.depth != tree.depth() {
        return Err(malformed(format!(
            "certificate depth {} does not match tree depth {}",
            record.depth,
            tree.depth()
        )));
    }
    Ok(())
}

/// Checks that `ids` list the atoms of `level` in storage order.
fn check_level_ids(
    tree: &FiltrationTree,
    n: usize,
    level: usize,
    ids: impl ExactSizeIterator<Item = i64>,
) -> Result<()> {
    if ids.len() != tree.level_len(level) {
        return Err(malformed(format!(
            "coefficients of level {n} list {} atoms, expected {}",
            ids.len(),
            tree.level_len(level)
        )));
    }
    for (i, id) in ids.enumerate() {
        if id != tree.id(level, i) {
            return Err(malformed(format!(
                "coefficients of level {n}: atom {id} found where {} was expected",
                tree.id(level, i)
            )));
        }
    }
    Ok(())
}

fn finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(malformed(format!("non-finite {what} {v}"))),
        None => Ok(()),
    }
}

fn stored_multiplier<'t>(
    tree: &'t FiltrationTree,
    record: &CertificateRecord,
) -> Result<LeafFunction<'t>> {
    let values = values_from_entries(tree, &record.multiplier, Error::MalformedCertificate)?;
    finite(&values, "multiplier value")?;
    Ok(LeafFunction::from_trusted(tree, values))
}

/// Max relative deviation of `stored` from `rebuilt`.
fn multiplier_mismatch(stored: &[f64], rebuilt: &[f64]) -> f64 {
    stored
        .iter()
        .zip(rebuilt)
        .map(|(&s, &r)| relative_residual(s, r))
        .fold(0.0, f64::max)
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// Largest pull-through residual, each level scaled by its allowance `max(1, N - n)`.
fn pull_through_check(
    depth: usize,
    tol: f64,
    residual: impl Fn(usize) -> Result<f64>,
) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for n in 0..=depth {
        let allowance = (depth - n).max(1) as f64;
        worst = worst.max(residual(n)? / allowance);
    }
    Ok(Check::at_most("pull-through", worst, tol))
}

fn recorded_check(name: &str, stored: Option<f64>, recomputed: f64, tol: f64) -> Check {
    let value = stored.map_or(f64::INFINITY, |s| relative_residual(s, recomputed));
    Check::at_most(name, value, tol)
}

fn shared_checks(
    f: &LeafFunction<'_>,
    m: &LeafFunction<'_>,
    record: &CertificateRecord,
    tol: &VerifyTolerance,
) -> Vec<Check> {
    let mf = m.mul(f);
    let mass = mass_diagnostics(f, &mf);
    let mut out = Vec::new();
    out.extend(multiplier_range_checks(m));
    out.extend(mass_checks(
        mass.lhs,
        mass.rhs,
        mass.exact_residual,
        tol.mass_identity,
    ));
    out.push(recorded_check(
        "recorded-mass",
        Some(record.mass_lhs),
        mass.lhs,
        tol.identity,
    ));
    out
}

pub fn verify_sigma_record(
    f: &LeafFunction<'_>,
    record: &CertificateRecord,
    tol: &VerifyTolerance,
) -> Result<Vec<Check>> {
    f.check_unit_range(tolerance::DOMAIN)?;
    let tree = f.tree();
    check_depth(tree, record)?;
    let stored = record
        .alphas
        .as_ref()
        .ok_or_else(|| malformed("sigma certificate without alphas"))?;
    if stored.len() != tree.depth() {
        return Err(malformed(format!(
            "{} alpha levels for depth {}",
            stored.len(),
            tree.depth()
        )));
    }
    let mut levels = Vec::with_capacity(stored.len());
    let mut degenerate = Vec::with_capacity(stored.len());
    for (k, lvl) in stored.iter().enumerate() {
        let n = k + 1;
        if lvl.level != n {
            return Err(malformed(format!(
                "alpha level {} found at position {n}",
                lvl.level
            )));
        }
        check_level_ids(tree, n, n - 1, lvl.atoms.iter().map(|a| a.atom))?;
        let values: Vec<f64> = lvl.atoms.iter().map(|a| a.alpha).collect();
        finite(&values, "alpha")?;
        levels.push(LevelFunction::from_trusted(tree, n - 1, values));
        degenerate.push(lvl.atoms.iter().map(|a| a.degenerate).collect());
    }
    let alphas = AlphaCoefficients { levels, degenerate };
    let m = stored_multiplier(tree, record)?;
    let mart = f.martingale();
    let slices: Vec<&[f64]> = alphas.levels.iter().map(|l| l.values()).collect();
    let rebuilt = multiplier_from_alphas(f, &mart, &slices);

    let depth = tree.depth();
    let mut identity: f64 = 0.0;
    for n in 1..=depth {
        identity = identity.max(verify_identity_sigma(f, &alphas, n)?);
    }
    let alpha_min = match alphas.min() {
        a if a.is_finite() => a,
        _ => ALPHA_DEFAULT,
    };
    let sigma_sq_max = max_of(
        m.mul(f)
            .conditional_square_function_sq()
            .values()
            .iter()
            .copied(),
    );

    let mut out = vec![
        Check::at_most("identity", identity, tol.identity),
        pull_through_check(depth, tol.identity, |n| verify_pull_through(f, &alphas, n))?,
        Check::at_least(
            "alpha-lower",
            alpha_min,
            ALPHA_DEFAULT - tolerance::COEFFICIENT,
        ),
        Check::at_most(
            "multiplier-consistency",
            multiplier_mismatch(m.values(), &rebuilt),
            tol.multiplier,
        ),
        Check::at_most(
            "sigma-bound",
            sigma_sq_max,
            SIGMA_BOUND + tolerance::theorem_slack(depth),
        ),
        recorded_check(
            "recorded-bound-value",
            record.sigma_sq_max,
            sigma_sq_max,
            tol.identity,
        ),
    ];
    out.extend(shared_checks(f, &m, record, tol));
    Ok(out)
}

pub fn verify_s_record(
    f: &LeafFunction<'_>,
    record: &CertificateRecord,
    tol: &VerifyTolerance,
) -> Result<Vec<Check>> {
    f.check_unit_range(tolerance::DOMAIN)?;
    let tree = f.tree();
    check_depth(tree, record)?;
    let stored = record
        .betas
        .as_ref()
        .ok_or_else(|| malformed("s certificate without betas"))?;
    if stored.len() != tree.depth() {
        return Err(malformed(format!(
            "{} beta levels for depth {}",
            stored.len(),
            tree.depth()
        )));
    }
    let mut levels = Vec::with_capacity(stored.len());
    let mut tags = Vec::with_capacity(stored.len());
    for (k, lvl) in stored.iter().enumerate() {
        let n = k + 1;
        if lvl.level != n {
            return Err(malformed(format!(
                "beta level {} found at position {n}",
                lvl.level
            )));
        }
        check_level_ids(tree, n, n, lvl.atoms.iter().map(|a| a.atom))?;
        let values: Vec<f64> = lvl.atoms.iter().map(|a| a.beta).collect();
        finite(&values, "beta")?;
        levels.push(LevelFunction::from_trusted(tree, n, values));
        tags.push(lvl.atoms.iter().map(|a| a.tag).collect::<Vec<_>>());
    }
    let betas = BetaCoefficients { levels, tags };
    let m = stored_multiplier(tree, record)?;
    let mart = f.martingale();
    let slices: Vec<&[f64]> = betas.levels.iter().map(|l| l.values()).collect();
    let rebuilt = multiplier_from_betas(f, &mart, &slices);

    let depth = tree.depth();
    let mut identity: f64 = 0.0;
    let mut bracket: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    let mut zero_numerator: f64 = 0.0;
    let mut pivots_per_parent = 0usize;
    for n in 1..=depth {
        let level = level_checks(&mart, n, betas.beta(n));
        identity = identity.max(level.identity_residual);
        bracket = bracket.max(level.bracket_violation);
        ratio = ratio.max(level.max_ratio);
        zero_numerator = zero_numerator.max(level.max_zero_numerator);
        for i in 0..tree.level_len(n - 1) {
            let pivots = betas.tags(n)[tree.children(n - 1, i)]
                .iter()
                .filter(|&&t| t == BetaTag::PivotBisected)
                .count();
            pivots_per_parent = pivots_per_parent.max(pivots);
        }
    }
    let s_sq_max = max_of(m.mul(f).square_function_sq().values().iter().copied());
    let c_bound = c_bound_derived();

    let mut out = vec![
        Check::at_most("identity", identity, tol.identity),
        pull_through_check(depth, tol.identity, |n| verify_pull_through_s(f, &betas, n))?,
        Check::at_most("beta-bracket", bracket, tolerance::COEFFICIENT),
        Check::at_most("pivots-per-parent", pivots_per_parent as f64, 1.0),
        Check::at_most(
            "difference-ratio",
            ratio,
            FOUR_PLUS_E + tolerance::IDENTITY_RESIDUAL,
        ),
        Check::at_most("zero-difference", zero_numerator, tolerance::STRUCTURAL),
        Check::at_most(
            "multiplier-consistency",
            multiplier_mismatch(m.values(), &rebuilt),
            tol.multiplier,
        ),
        Check::at_most(
            "s-bound",
            s_sq_max,
            c_bound + tolerance::theorem_slack(depth),
        ),
        recorded_check(
            "recorded-bound-value",
            record.s_sq_max,
            s_sq_max,
            tol.identity,
        ),
    ];
    out.extend(shared_checks(f, &m, record, tol));
    Ok(out)
}

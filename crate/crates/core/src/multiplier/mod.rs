//! Multiplier constructions behind a common interface.
//!
//! Each method is registered by name in a [`MethodRegistry`] and produces a
//! [`Certificate`] whose [`Check`]s decide the pass/fail status.

pub mod iterate;
pub mod sigma;
pub mod square;
pub mod walk;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::certificate::{
    verify_s_record, verify_sigma_record, CertificateRecord, VerifyTolerance,
};
use crate::error::Result;
use crate::function::{LeafFunction, Martingale};
use crate::tolerance::{self, relative_residual};

use sigma::{SigmaCertificate, ALPHA_DEFAULT, SIGMA_BOUND};
use square::{c_bound_derived, SCertificate, FOUR_PLUS_E};

/// One named numeric check: `value` compared against `limit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    /// Passes iff `value <= limit`; NaN fails.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Check {
            name: name.to_string(),
            value,
            limit,
            pass: value <= limit,
        }
    }

    /// Passes iff `value >= limit`; NaN fails.
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Check {
            name: name.to_string(),
            value,
            limit,
            pass: value >= limit,
        }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// One row of a sweep report.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificateSummary {
    pub method: &'static str,
    pub max_sq: f64,
    pub bound: f64,
    pub identity_residual: f64,
    pub mass_margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub enum Certificate<'t> {
    Sigma(SigmaCertificate<'t>),
    Square(SCertificate<'t>),
}

impl<'t> Certificate<'t> {
    pub fn method(&self) -> &'static str {
        match self {
            Certificate::Sigma(_) => "sigma",
            Certificate::Square(_) => "s",
        }
    }

    pub fn multiplier(&self) -> &LeafFunction<'t> {
        match self {
            Certificate::Sigma(c) => &c.m,
            Certificate::Square(c) => &c.m,
        }
    }

    pub fn checks(&self) -> Vec<Check> {
        match self {
            Certificate::Sigma(c) => sigma_checks(c),
            Certificate::Square(c) => s_checks(c),
        }
    }

    pub fn pass(&self) -> bool {
        all_pass(&self.checks())
    }

    pub fn summary(&self) -> CertificateSummary {
        let (max_sq, bound, residuals, lhs, rhs) = match self {
            Certificate::Sigma(c) => (
                c.sigma_sq_max,
                SIGMA_BOUND,
                &c.identity_residuals,
                c.mass_lhs,
                c.mass_rhs,
            ),
            Certificate::Square(c) => (
                c.s_sq_max,
                c.c_bound,
                &c.identity_residuals,
                c.mass_lhs,
                c.mass_rhs,
            ),
        };
        CertificateSummary {
            method: self.method(),
            max_sq,
            bound,
            identity_residual: residuals.iter().copied().fold(0.0, f64::max),
            mass_margin: lhs - rhs,
            pass: self.pass(),
        }
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

/// `(min m, max m)`.
pub(crate) fn range_of(m: &LeafFunction<'_>) -> (f64, f64) {
    m.values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

pub(crate) fn multiplier_range_checks(m: &LeafFunction<'_>) -> [Check; 2] {
    let (lo, hi) = range_of(m);
    [
        Check {
            name: "multiplier-positive".into(),
            value: lo,
            limit: 0.0,
            pass: lo > 0.0,
        },
        Check::at_most("multiplier-at-most-one", hi, 1.0),
    ]
}

pub(crate) fn mass_checks(
    lhs: f64,
    rhs: f64,
    exact_residual: f64,
    identity_tol: f64,
) -> [Check; 2] {
    [
        Check::at_least("mass-inequality", lhs - rhs, -tolerance::MASS_INEQUALITY),
        Check::at_most("mass-identity", exact_residual, identity_tol),
    ]
}

fn sigma_checks(c: &SigmaCertificate<'_>) -> Vec<Check> {
    let depth = c.f.tree().depth();
    // no levels means no coefficients to bound
    let alpha_min = match c.alphas.min() {
        a if a.is_finite() => a,
        _ => ALPHA_DEFAULT,
    };
    let mut out = vec![
        Check::at_most(
            "identity",
            max_of(&c.identity_residuals),
            tolerance::IDENTITY_RESIDUAL,
        ),
        Check::at_least(
            "alpha-lower",
            alpha_min,
            ALPHA_DEFAULT - tolerance::COEFFICIENT,
        ),
        Check::at_most(
            "sigma-bound",
            c.sigma_sq_max,
            SIGMA_BOUND + tolerance::theorem_slack(depth),
        ),
    ];
    out.extend(multiplier_range_checks(&c.m));
    out.extend(mass_checks(
        c.mass_lhs,
        c.mass_rhs,
        c.exact_mass_identity_residual,
        tolerance::MASS_IDENTITY,
    ));
    out
}

fn s_checks(c: &SCertificate<'_>) -> Vec<Check> {
    let depth = c.f.tree().depth();
    let mut out = vec![
        Check::at_most(
            "identity",
            max_of(&c.identity_residuals),
            tolerance::IDENTITY_RESIDUAL,
        ),
        Check::at_most(
            "beta-bracket",
            c.beta_bracket_violation,
            tolerance::COEFFICIENT,
        ),
        Check::at_most(
            "difference-ratio",
            max_of(&c.difference_ratios),
            FOUR_PLUS_E + tolerance::IDENTITY_RESIDUAL,
        ),
        Check::at_most(
            "zero-difference",
            max_of(&c.zero_difference_numerators),
            tolerance::STRUCTURAL,
        ),
        Check::at_most(
            "s-bound",
            c.s_sq_max,
            c.c_bound + tolerance::theorem_slack(depth),
        ),
    ];
    out.extend(multiplier_range_checks(&c.m));
    out.extend(mass_checks(
        c.mass_lhs,
        c.mass_rhs,
        c.exact_mass_identity_residual,
        tolerance::MASS_IDENTITY,
    ));
    out
}

/// A multiplier construction selectable by name.
pub trait MultiplierMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    /// Bound on the max leaf value of the squared target square function of `mf`.
    fn bound(&self) -> f64;
    fn construct<'t>(&self, f: &LeafFunction<'t>) -> Result<Certificate<'t>>;
    /// Recomputes every check from the stored coefficients and multiplier.
    fn verify_record(
        &self,
        f: &LeafFunction<'_>,
        record: &CertificateRecord,
        tol: &VerifyTolerance,
    ) -> Result<Vec<Check>>;
}

pub struct SigmaMethod;

impl MultiplierMethod for SigmaMethod {
    fn name(&self) -> &'static str {
        "sigma"
    }

    fn description(&self) -> &'static str {
        "conditional square function, explicit alpha per parent atom"
    }

    fn bound(&self) -> f64 {
        SIGMA_BOUND
    }

    fn construct<'t>(&self, f: &LeafFunction<'t>) -> Result<Certificate<'t>> {
        sigma::construct_multiplier_sigma(f).map(Certificate::Sigma)
    }

    fn verify_record(
        &self,
        f: &LeafFunction<'_>,
        record: &CertificateRecord,
        tol: &VerifyTolerance,
    ) -> Result<Vec<Check>> {
        verify_sigma_record(f, record, tol)
    }
}

pub struct SquareMethod;

impl MultiplierMethod for SquareMethod {
    fn name(&self) -> &'static str {
        "s"
    }

    fn description(&self) -> &'static str {
        "square function, beta per child atom by the atom walk"
    }

    fn bound(&self) -> f64 {
        c_bound_derived()
    }

    fn construct<'t>(&self, f: &LeafFunction<'t>) -> Result<Certificate<'t>> {
        square::construct_multiplier_s(f).map(Certificate::Square)
    }

    fn verify_record(
        &self,
        f: &LeafFunction<'_>,
        record: &CertificateRecord,
        tol: &VerifyTolerance,
    ) -> Result<Vec<Check>> {
        verify_s_record(f, record, tol)
    }
}

pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Box<dyn MultiplierMethod>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry {
            methods: BTreeMap::new(),
        }
    }

    /// Replaces any method already registered under the same name.
    pub fn register(&mut self, method: Box<dyn MultiplierMethod>) {
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Option<&dyn MultiplierMethod> {
        self.methods.get(name).map(|m| m.as_ref())
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = MethodRegistry::empty();
        r.register(Box::new(SigmaMethod));
        r.register(Box::new(SquareMethod));
        r
    }
}

pub(crate) struct MassDiagnostics {
    pub lhs: f64,
    pub rhs: f64,
    pub exact_residual: f64,
}

/// `E(mf)`, `e^{-‖f‖∞} E f` and the residual of `E(mf) = e^{-‖f‖∞ + E f} E f`.
pub(crate) fn mass_diagnostics(f: &LeafFunction<'_>, mf: &LeafFunction<'_>) -> MassDiagnostics {
    let lhs = mf.expectation();
    let ef = f.expectation();
    let sup = f.sup_norm();
    MassDiagnostics {
        lhs,
        rhs: (-sup).exp() * ef,
        exact_residual: relative_residual(lhs, (ef - sup).exp() * ef),
    }
}

/// Max relative residual over level-`n` atoms of `E_n(e^{z} f) = E_n f`, where
/// `z = Σ_{m>n} increments(m)` and `increments(m)` has one value per level-`m` atom.
pub(crate) fn pull_through_residual(
    f: &LeafFunction<'_>,
    mart: &Martingale<'_>,
    n: usize,
    increments: impl Fn(usize) -> Vec<f64>,
) -> f64 {
    let tree = f.tree();
    let depth = tree.depth();
    let mut z = vec![0.0; tree.level_len(n)];
    for m in n + 1..=depth {
        z = tree.spread_to_children(m - 1, &z);
        for (a, b) in z.iter_mut().zip(increments(m)) {
            *a += b;
        }
    }
    let mut avg: Vec<f64> = f
        .values()
        .iter()
        .zip(&z)
        .map(|(v, s)| s.exp() * v)
        .collect();
    for m in (n..depth).rev() {
        avg = tree.average_children(m, &avg);
    }
    avg.iter()
        .zip(mart.level(n))
        .map(|(&lhs, &rhs)| relative_residual(lhs, rhs))
        .fold(0.0, f64::max)
}

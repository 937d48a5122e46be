//! Repeated square-function correction of the leftover mass.
//!
//! `r_0 = f`; each round takes `m_i` from the square-function construction on
//! `r_{i-1}`, adds `m_i r_{i-1}` to `g` and keeps `r_i = (1 - m_i) r_{i-1}`.
//! Stops once `E r_i <= eps E f`. Since `E(m_i r_{i-1}) >= e^{-1} E r_{i-1}`,
//! the residual decays at least geometrically with ratio `1 - e^{-1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::LeafFunction;
use crate::tolerance;

use super::square::{c_bound_derived, construct_multiplier_s};
use super::Check;

/// Hard stop for the loop; far above the geometric bound for any `eps >= 1e-300`.
pub const MAX_ITERATIONS: usize = 2000;

/// Per-round log entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStep {
    pub iteration: usize,
    /// `E r_i`.
    pub residual_mass: f64,
    /// `‖S g‖∞` after this round.
    pub s_sup: f64,
}

#[derive(Clone, Debug)]
pub struct IteratedCorrection<'t> {
    pub f: LeafFunction<'t>,
    pub g: LeafFunction<'t>,
    pub iterations: usize,
    pub s_sup: f64,
    /// `E(f - g)`.
    pub residual_mass: f64,
    pub f_mass: f64,
    pub eps: f64,
    pub log: Vec<IterationStep>,
}

/// `ceil(log(1/eps) / log(1/(1 - e^{-1}))) + 1`.
pub fn iteration_bound(eps: f64) -> usize {
    let ratio = 1.0 / (1.0 - (-1f64).exp());
    ((1.0 / eps).ln() / ratio.ln()).ceil() as usize + 1
}

fn s_sup(g: &LeafFunction<'_>) -> f64 {
    g.square_function_sq()
        .values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .sqrt()
}

pub fn iterated_correction<'t>(f: &LeafFunction<'t>, eps: f64) -> Result<IteratedCorrection<'t>> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps must lie in (0, 1], got {eps}"
        )));
    }
    f.check_unit_range(tolerance::DOMAIN)?;
    let tree = f.tree();
    let f_mass = f.expectation();
    let target = eps * f_mass;

    let mut g = vec![0.0; f.values().len()];
    let mut r = f.clone();
    let mut log = Vec::new();
    let mut sup = 0.0;
    while f_mass > 0.0 && r.expectation() > target && log.len() < MAX_ITERATIONS {
        let cert = construct_multiplier_s(&r)?;
        let mut next = Vec::with_capacity(g.len());
        for ((acc, &m), &v) in g.iter_mut().zip(cert.m.values()).zip(r.values()) {
            *acc += m * v;
            next.push((1.0 - m) * v);
        }
        r = LeafFunction::from_trusted(tree, next);
        sup = s_sup(&LeafFunction::from_trusted(tree, g.clone()));
        log.push(IterationStep {
            iteration: log.len() + 1,
            residual_mass: r.expectation(),
            s_sup: sup,
        });
    }

    let g = LeafFunction::from_trusted(tree, g);
    let residual_mass = f_mass - g.expectation();
    Ok(IteratedCorrection {
        f: f.clone(),
        iterations: log.len(),
        s_sup: sup,
        residual_mass,
        f_mass,
        eps,
        log,
        g,
    })
}

impl IteratedCorrection<'_> {
    pub fn checks(&self) -> Vec<Check> {
        let mass_slack = tolerance::STRUCTURAL * self.f_mass.max(1.0);
        let above_f = self
            .g
            .values()
            .iter()
            .zip(self.f.values())
            .map(|(g, f)| g - f)
            .fold(0.0, f64::max);
        let below_zero = self.g.values().iter().fold(0.0, |acc: f64, &g| acc.max(-g));
        vec![
            Check::at_most(
                "residual-mass",
                self.residual_mass,
                self.eps * self.f_mass + mass_slack,
            ),
            Check::at_most(
                "s-sup",
                self.s_sup,
                self.iterations as f64 * c_bound_derived().sqrt() + tolerance::STRUCTURAL,
            ),
            Check::at_most(
                "iterations",
                self.iterations as f64,
                iteration_bound(self.eps) as f64,
            ),
            Check::at_most("g-above-f", above_f, tolerance::STRUCTURAL),
            Check::at_most("g-negative", below_zero, 0.0),
        ]
    }

    pub fn pass(&self) -> bool {
        super::all_pass(&self.checks())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generators::{gen_dyadic, gen_random_f, gen_random_tree};

    #[test]
    fn bound_formula() {
        assert_eq!(iteration_bound(1.0), 1);
        assert_eq!(iteration_bound(0.5), 3);
        assert_eq!(iteration_bound(0.1), 7);
        assert_eq!(iteration_bound(0.01), 12);
    }

    #[test]
    fn eps_one_runs_nothing() {
        let tree = gen_dyadic(2).unwrap();
        let f = LeafFunction::new(&tree, vec![0.2, 0.9, 0.4, 0.0]).unwrap();
        let out = iterated_correction(&f, 1.0).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.pass());
    }

    #[test]
    fn two_point_needs_two_rounds() {
        let tree = gen_dyadic(1).unwrap();
        let f = LeafFunction::new(&tree, vec![1.0, 0.0]).unwrap();
        let out = iterated_correction(&f, 0.3).unwrap();
        let first = (1.0 - (-0.5f64).exp()) / 2.0;
        assert!((out.log[0].residual_mass - first).abs() < 1e-15);
        assert!((first - 0.19673).abs() < 1e-5);
        assert_eq!(out.iterations, 2);
        assert!(out.residual_mass <= 0.15);
        assert!(out.pass(), "{:?}", out.checks());
    }

    #[test]
    fn zero_input_stops_at_once() {
        let tree = gen_dyadic(3).unwrap();
        let f = LeafFunction::constant(&tree, 0.0).unwrap();
        let out = iterated_correction(&f, 0.01).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.pass());
    }

    #[test]
    fn rejects_bad_eps() {
        let tree = gen_dyadic(1).unwrap();
        let f = LeafFunction::new(&tree, vec![1.0, 0.0]).unwrap();
        for eps in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                iterated_correction(&f, eps),
                Err(Error::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn random_instances_meet_bounds() {
        for seed in 0..10 {
            let tree = gen_random_tree(5, 3, seed).unwrap();
            let f = gen_random_f(&tree, seed, 0.0, 1.0).unwrap();
            let out = iterated_correction(&f, 0.01).unwrap();
            assert!(out.pass(), "{seed}: {:?}", out.checks());
            for pair in out.log.windows(2) {
                assert!(pair[1].residual_mass <= pair[0].residual_mass);
            }
        }
    }
}

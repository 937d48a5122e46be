//! Random variables on a filtration tree and the martingale operators acting on them.

use crate::error::{Error, Result};
use crate::tree::FiltrationTree;

/// A random variable: one value per leaf atom.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafFunction<'t> {
    tree: &'t FiltrationTree,
    values: Vec<f64>,
}

/// An `F_n`-measurable function: one value per level-`n` atom.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelFunction<'t> {
    tree: &'t FiltrationTree,
    level: usize,
    values: Vec<f64>,
}

fn check_values(expected: usize, values: &[f64]) -> Result<()> {
    if values.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: values.len(),
        });
    }
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { index, value });
    }
    Ok(())
}

impl<'t> LeafFunction<'t> {
    pub fn new(tree: &'t FiltrationTree, values: Vec<f64>) -> Result<Self> {
        check_values(tree.leaf_count(), &values)?;
        Ok(LeafFunction { tree, values })
    }

    pub fn constant(tree: &'t FiltrationTree, c: f64) -> Result<Self> {
        Self::new(tree, vec![c; tree.leaf_count()])
    }

    pub(crate) fn from_trusted(tree: &'t FiltrationTree, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), tree.leaf_count());
        LeafFunction { tree, values }
    }

    pub fn tree(&self) -> &'t FiltrationTree {
        self.tree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Pointwise product.
    pub fn mul(&self, other: &LeafFunction<'_>) -> LeafFunction<'t> {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        LeafFunction::from_trusted(self.tree, values)
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> LeafFunction<'t> {
        LeafFunction::from_trusted(self.tree, self.values.iter().map(|&v| op(v)).collect())
    }

    /// Fails with `DomainViolation` unless every value lies in [0, 1] up to `slack`.
    pub fn check_unit_range(&self, slack: f64) -> Result<()> {
        match self
            .values
            .iter()
            .position(|&v| !(v >= -slack && v <= 1.0 + slack))
        {
            Some(i) => Err(Error::DomainViolation {
                atom: self.tree.id(self.tree.depth(), i),
                value: self.values[i],
            }),
            None => Ok(()),
        }
    }

    /// `E_n g` for every level at once.
    pub fn martingale(&self) -> Martingale<'t> {
        Martingale::of(self)
    }

    pub fn conditional_expectation(&self, level: usize) -> Result<LevelFunction<'t>> {
        self.tree.check_level(level)?;
        let mut current = self.values.clone();
        for l in (level..self.tree.depth()).rev() {
            current = self.tree.average_children(l, &current);
        }
        Ok(LevelFunction {
            tree: self.tree,
            level,
            values: current,
        })
    }

    /// `Δ_n g = E_n g - E_{n-1} g`, one value per level-`n` atom.
    pub fn martingale_difference(&self, level: usize) -> Result<LevelFunction<'t>> {
        if level == 0 {
            return Err(Error::LevelOutOfRange {
                level,
                depth: self.tree.depth(),
            });
        }
        self.tree.check_level(level)?;
        let fine = self.conditional_expectation(level)?;
        let coarse = self.tree.average_children(level - 1, &fine.values);
        Ok(LevelFunction {
            tree: self.tree,
            level,
            values: differences(self.tree, level, &fine.values, &coarse),
        })
    }

    pub fn square_function(&self) -> LeafFunction<'t> {
        self.square_function_sq().map(f64::sqrt)
    }

    /// `S(g)^2` at every leaf.
    pub fn square_function_sq(&self) -> LeafFunction<'t> {
        self.martingale().square_function_sq()
    }

    pub fn conditional_square_function(&self) -> LeafFunction<'t> {
        self.conditional_square_function_sq().map(f64::sqrt)
    }

    /// `σ(g)^2` at every leaf.
    pub fn conditional_square_function_sq(&self) -> LeafFunction<'t> {
        self.martingale().conditional_square_function_sq()
    }

    pub fn expectation(&self) -> f64 {
        // hierarchical summation keeps rounding at O(depth) ulps
        self.conditional_expectation(0)
            .map(|e| e.values[0])
            .unwrap_or(0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

impl<'t> LevelFunction<'t> {
    pub fn new(tree: &'t FiltrationTree, level: usize, values: Vec<f64>) -> Result<Self> {
        tree.check_level(level)?;
        check_values(tree.level_len(level), &values)?;
        Ok(LevelFunction {
            tree,
            level,
            values,
        })
    }

    pub(crate) fn from_trusted(tree: &'t FiltrationTree, level: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), tree.level_len(level));
        LevelFunction {
            tree,
            level,
            values,
        }
    }

    pub fn tree(&self) -> &'t FiltrationTree {
        self.tree
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Each leaf takes the value of its level-`n` ancestor.
    pub fn lift_to_leaves(&self) -> LeafFunction<'t> {
        LeafFunction::from_trusted(self.tree, self.tree.push_down(self.level, &self.values))
    }
}

/// Per-level-`n` atom: its value minus its parent's value.
pub(crate) fn differences(
    tree: &FiltrationTree,
    level: usize,
    fine: &[f64],
    coarse: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(fine.len());
    for (i, &parent) in coarse.iter().enumerate() {
        out.extend(tree.children(level - 1, i).map(|c| fine[c] - parent));
    }
    out
}

/// The martingale `(E_n g)_{n=0..N}` of a leaf function.
#[derive(Clone, Debug)]
pub struct Martingale<'t> {
    tree: &'t FiltrationTree,
    levels: Vec<Vec<f64>>,
}

impl<'t> Martingale<'t> {
    pub fn of(g: &LeafFunction<'t>) -> Self {
        let tree = g.tree;
        let depth = tree.depth();
        let mut levels = vec![Vec::new(); depth + 1];
        levels[depth] = g.values.clone();
        for l in (0..depth).rev() {
            levels[l] = tree.average_children(l, &levels[l + 1]);
        }
        Martingale { tree, levels }
    }

    pub fn tree(&self) -> &'t FiltrationTree {
        self.tree
    }

    /// `E_n g` as a slice over level-`n` atoms.
    pub fn level(&self, n: usize) -> &[f64] {
        &self.levels[n]
    }

    pub fn mean(&self) -> f64 {
        self.levels[0][0]
    }

    /// `Δ_n g` over level-`n` atoms, `n >= 1`.
    pub fn difference(&self, n: usize) -> Vec<f64> {
        differences(self.tree, n, &self.levels[n], &self.levels[n - 1])
    }

    /// `E_{n-1}|Δ_n g|^2` over level-`(n-1)` atoms.
    pub fn conditional_variance(&self, n: usize) -> Vec<f64> {
        let d = self.difference(n);
        let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
        self.tree.average_children(n - 1, &sq)
    }

    pub fn square_function_sq(&self) -> LeafFunction<'t> {
        let mut acc = vec![0.0];
        for n in 1..=self.tree.depth() {
            let d = self.difference(n);
            let mut next = self.tree.spread_to_children(n - 1, &acc);
            for (a, x) in next.iter_mut().zip(&d) {
                *a += x * x;
            }
            acc = next;
        }
        LeafFunction::from_trusted(self.tree, acc)
    }

    pub fn conditional_square_function_sq(&self) -> LeafFunction<'t> {
        let mut acc = vec![0.0];
        for n in 1..=self.tree.depth() {
            let q = self.conditional_variance(n);
            for (a, x) in acc.iter_mut().zip(&q) {
                *a += x;
            }
            acc = self.tree.spread_to_children(n - 1, &acc);
        }
        LeafFunction::from_trusted(self.tree, acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generators::gen_dyadic;
    use crate::tree::{validate_tree, RawAtom, RawTree};

    fn t2() -> FiltrationTree {
        validate_tree(&RawTree {
            depth: 1,
            atoms: vec![
                RawAtom {
                    id: 0,
                    parent: None,
                    prob: 1.0,
                },
                RawAtom {
                    id: 1,
                    parent: Some(0),
                    prob: 0.5,
                },
                RawAtom {
                    id: 2,
                    parent: Some(0),
                    prob: 0.5,
                },
            ],
        })
        .unwrap()
    }

    /// Root -> one child (chain) -> two leaves.
    fn chain() -> FiltrationTree {
        validate_tree(&RawTree {
            depth: 2,
            atoms: vec![
                RawAtom {
                    id: 0,
                    parent: None,
                    prob: 1.0,
                },
                RawAtom {
                    id: 1,
                    parent: Some(0),
                    prob: 1.0,
                },
                RawAtom {
                    id: 2,
                    parent: Some(1),
                    prob: 0.25,
                },
                RawAtom {
                    id: 3,
                    parent: Some(1),
                    prob: 0.75,
                },
            ],
        })
        .unwrap()
    }

    #[test]
    fn conditional_expectation_examples() {
        let tree = gen_dyadic(2).unwrap();
        let f = LeafFunction::new(&tree, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(f.conditional_expectation(1).unwrap().values(), &[0.5, 1.0]);
        assert_eq!(f.conditional_expectation(2).unwrap().values(), f.values());
        assert_eq!(f.expectation(), 0.75);

        let c = LeafFunction::constant(&tree, 0.3).unwrap();
        for n in 0..=2 {
            for v in c.conditional_expectation(n).unwrap().values() {
                assert!((v - 0.3).abs() < 1e-15);
            }
        }
        assert!(matches!(
            f.conditional_expectation(3),
            Err(Error::LevelOutOfRange { level: 3, depth: 2 })
        ));

        let tree = t2();
        let f = LeafFunction::new(&tree, vec![1.0, 0.0]).unwrap();
        assert_eq!(f.conditional_expectation(0).unwrap().values(), &[0.5]);
        assert_eq!(f.expectation(), 0.5);
    }

    #[test]
    fn differences_and_square_functions_on_t2() {
        let tree = t2();
        let f = LeafFunction::new(&tree, vec![1.0, 0.0]).unwrap();
        assert_eq!(f.martingale_difference(1).unwrap().values(), &[0.5, -0.5]);
        assert!(f.martingale_difference(0).is_err());
        assert!(f.martingale_difference(2).is_err());
        assert_eq!(f.square_function().values(), &[0.5, 0.5]);
        assert_eq!(f.conditional_square_function().values(), &[0.5, 0.5]);
        assert_eq!(f.sup_norm(), 1.0);

        let g = LeafFunction::new(&tree, vec![0.3, 0.7]).unwrap();
        assert_eq!(g.sup_norm(), 0.7);
    }

    #[test]
    fn constants_have_no_fluctuation() {
        let tree = gen_dyadic(3).unwrap();
        let c = LeafFunction::constant(&tree, -2.0).unwrap();
        assert_eq!(c.sup_norm(), 2.0);
        for n in 1..=3 {
            assert!(c
                .martingale_difference(n)
                .unwrap()
                .values()
                .iter()
                .all(|&d| d == 0.0));
        }
        assert!(c.square_function().values().iter().all(|&s| s == 0.0));
        assert!(c
            .conditional_square_function()
            .values()
            .iter()
            .all(|&s| s == 0.0));
    }

    #[test]
    fn chain_atom_has_zero_difference() {
        let tree = chain();
        let f = LeafFunction::new(&tree, vec![1.0, 0.0]).unwrap();
        assert_eq!(f.martingale_difference(1).unwrap().values(), &[0.0]);
        let d2 = f.martingale_difference(2).unwrap();
        assert_eq!(d2.values(), &[0.75, -0.25]);
        // σ² = 0.25 * 0.75^2 + 0.75 * 0.25^2 = 0.1875, constant on the parent
        for s in f.conditional_square_function_sq().values() {
            assert!((s - 0.1875).abs() < 1e-15);
        }
    }

    #[test]
    fn lift_examples() {
        let tree = t2();
        let h = LevelFunction::new(&tree, 1, vec![0.5, -0.5]).unwrap();
        assert_eq!(h.lift_to_leaves().values(), &[0.5, -0.5]);
        let root = LevelFunction::new(&tree, 0, vec![4.0]).unwrap();
        assert_eq!(root.lift_to_leaves().values(), &[4.0, 4.0]);
        assert!(LevelFunction::new(&tree, 1, vec![1.0]).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let tree = t2();
        assert!(matches!(
            LeafFunction::new(&tree, vec![1.0]),
            Err(Error::LengthMismatch {
                expected: 2,
                actual: 1
            })
        ));
        assert!(matches!(
            LeafFunction::new(&tree, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        let f = LeafFunction::new(&tree, vec![1.5, 0.0]).unwrap();
        assert!(matches!(
            f.check_unit_range(1e-12),
            Err(Error::DomainViolation { atom: 1, .. })
        ));
    }
}

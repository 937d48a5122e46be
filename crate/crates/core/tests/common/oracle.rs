//! Brute-force reference computations.
//!
//! Everything here works from the raw atom list and sums over leaves directly:
//! an atom's conditional expectation is `Σ_{λ⊂A} p_λ g(λ) / P(A)`, found by
//! walking each leaf's ancestor chain. No code is shared with the library's
//! level-by-level operators.

#![allow(dead_code)]

use std::collections::HashMap;

use sl_lab::FiltrationTree;

pub struct Oracle {
    pub depth: usize,
    /// Leaf ids in the library's leaf order.
    pub leaves: Vec<i64>,
    pub prob: HashMap<i64, f64>,
    /// `ancestors[k][n]` is the level-`n` ancestor of leaf `k` (`n = depth` is the leaf itself).
    pub ancestors: Vec<Vec<i64>>,
    pub parent: HashMap<i64, i64>,
}

impl Oracle {
    pub fn new(tree: &FiltrationTree) -> Self {
        let raw = tree.to_raw();
        let mut prob = HashMap::new();
        let mut parent = HashMap::new();
        for a in &raw.atoms {
            prob.insert(a.id, a.prob);
            if let Some(p) = a.parent {
                parent.insert(a.id, p);
            }
        }
        let leaves: Vec<i64> = tree.leaf_ids().collect();
        let ancestors = leaves
            .iter()
            .map(|&leaf| {
                let mut chain = vec![leaf];
                let mut cur = leaf;
                while let Some(&p) = parent.get(&cur) {
                    chain.push(p);
                    cur = p;
                }
                chain.reverse();
                assert_eq!(chain.len(), raw.depth + 1, "leaf {leaf} not at full depth");
                chain
            })
            .collect();
        Oracle {
            depth: raw.depth,
            leaves,
            prob,
            ancestors,
            parent,
        }
    }

    pub fn leaf_prob(&self, k: usize) -> f64 {
        self.prob[&self.leaves[k]]
    }

    /// `E_n g` keyed by level-`n` atom id.
    pub fn cond_exp(&self, g: &[f64], n: usize) -> HashMap<i64, f64> {
        let mut mass: HashMap<i64, f64> = HashMap::new();
        for (k, &v) in g.iter().enumerate() {
            *mass.entry(self.ancestors[k][n]).or_default() += self.leaf_prob(k) * v;
        }
        mass.into_iter()
            .map(|(a, m)| (a, m / self.prob[&a]))
            .collect()
    }

    /// `Δ_n g` keyed by level-`n` atom id.
    pub fn diff(&self, g: &[f64], n: usize) -> HashMap<i64, f64> {
        let fine = self.cond_exp(g, n);
        let coarse = self.cond_exp(g, n - 1);
        fine.iter()
            .map(|(&a, &v)| (a, v - coarse[&self.parent[&a]]))
            .collect()
    }

    /// `Δ_n g` at each leaf (value of its level-`n` ancestor).
    pub fn diff_at_leaves(&self, g: &[f64], n: usize) -> Vec<f64> {
        let d = self.diff(g, n);
        (0..g.len()).map(|k| d[&self.ancestors[k][n]]).collect()
    }

    /// `E_{n-1} h` for a leaf function `h`, keyed by level-`(n-1)` atom id.
    pub fn parent_avg(&self, h: &[f64], n: usize) -> HashMap<i64, f64> {
        self.cond_exp(h, n - 1)
    }

    /// `E_{n-1}|Δ_n g|²` keyed by level-`(n-1)` atom id.
    pub fn cond_var(&self, g: &[f64], n: usize) -> HashMap<i64, f64> {
        let d = self.diff_at_leaves(g, n);
        let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
        self.cond_exp(&sq, n - 1)
    }

    pub fn expectation(&self, g: &[f64]) -> f64 {
        g.iter()
            .enumerate()
            .map(|(k, v)| self.leaf_prob(k) * v)
            .sum()
    }

    pub fn square_sq(&self, g: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; g.len()];
        for n in 1..=self.depth {
            for (a, d) in acc.iter_mut().zip(self.diff_at_leaves(g, n)) {
                *a += d * d;
            }
        }
        acc
    }

    pub fn cond_square_sq(&self, g: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; g.len()];
        for n in 1..=self.depth {
            let q = self.cond_var(g, n);
            for (k, a) in acc.iter_mut().enumerate() {
                *a += q[&self.ancestors[k][n - 1]];
            }
        }
        acc
    }

    /// The explicit formula `ln(E_{n-1}(f e^{Δ_n f}) / E_{n-1} f) / E_{n-1}|Δ_n f|²`,
    /// or `None` where it is undefined.
    pub fn alpha(&self, f: &[f64], n: usize) -> HashMap<i64, Option<f64>> {
        let d = self.diff_at_leaves(f, n);
        let weighted: Vec<f64> = f.iter().zip(&d).map(|(v, x)| v * x.exp()).collect();
        let num = self.cond_exp(&weighted, n - 1);
        let den = self.cond_exp(f, n - 1);
        let q = self.cond_var(f, n);
        q.iter()
            .map(|(&a, &qa)| {
                let value = (qa > 0.0 && den[&a] > 0.0).then(|| (num[&a] / den[&a]).ln() / qa);
                (a, value)
            })
            .collect()
    }

    /// `|E_{n-1}[f e^{shift}] - E_{n-1} f| / E_{n-1} f` per level-`(n-1)` atom, with
    /// `shift` given at leaves.
    pub fn identity_residuals(&self, f: &[f64], n: usize, shift: &[f64]) -> HashMap<i64, f64> {
        let h: Vec<f64> = f.iter().zip(shift).map(|(v, s)| v * s.exp()).collect();
        let lhs = self.cond_exp(&h, n - 1);
        let rhs = self.cond_exp(f, n - 1);
        lhs.iter()
            .map(|(&a, &l)| (a, (l - rhs[&a]).abs() / rhs[&a].abs().max(1e-300)))
            .collect()
    }

    pub fn sup_norm(&self, g: &[f64]) -> f64 {
        g.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

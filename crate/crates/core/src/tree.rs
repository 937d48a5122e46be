//! Finite filtered probability spaces stored as leveled atom trees.
//!
//! Level `n` of the tree is the atom partition generating `F_n`. Atoms of one
//! level are stored contiguously, grouped by parent in parent order, and
//! siblings are sorted by ascending id. Children of atom `i` at level `n` are
//! the index range `child_offsets[n][i]..child_offsets[n][i + 1]` of level
//! `n + 1`. Every leaf sits at level `depth`.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance;

/// One atom as it appears in a tree file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawAtom {
    pub id: i64,
    pub parent: Option<i64>,
    pub prob: f64,
}

/// Unvalidated tree description, mirroring the JSON tree file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTree {
    pub depth: usize,
    pub atoms: Vec<RawAtom>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum AtomIds {
    /// Ids are global level-order positions: level offset plus index.
    Sequential,
    Explicit(Vec<Vec<i64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiltrationTree {
    depth: usize,
    probs: Vec<Vec<f64>>,
    child_offsets: Vec<Vec<u32>>,
    level_start: Vec<usize>,
    ids: AtomIds,
}

/// Validates a raw tree description.
pub fn validate_tree(raw: &RawTree) -> Result<FiltrationTree> {
    FiltrationTree::from_raw(raw)
}

impl FiltrationTree {
    pub fn from_raw(raw: &RawTree) -> Result<Self> {
        if raw.atoms.is_empty() {
            return Err(Error::MalformedTree("no atoms".into()));
        }
        let mut by_id: HashMap<i64, usize> = HashMap::with_capacity(raw.atoms.len());
        for (pos, atom) in raw.atoms.iter().enumerate() {
            if by_id.insert(atom.id, pos).is_some() {
                return Err(Error::MalformedTree(format!(
                    "duplicate atom id {}",
                    atom.id
                )));
            }
        }

        let mut root = None;
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); raw.atoms.len()];
        for (pos, atom) in raw.atoms.iter().enumerate() {
            match atom.parent {
                None => {
                    if let Some(other) = root.replace(pos) {
                        return Err(Error::MalformedTree(format!(
                            "atoms {} and {} both have no parent",
                            raw.atoms[other].id, atom.id
                        )));
                    }
                }
                Some(parent) => {
                    let &ppos = by_id.get(&parent).ok_or_else(|| {
                        Error::MalformedTree(format!(
                            "atom {} references missing parent {parent}",
                            atom.id
                        ))
                    })?;
                    children[ppos].push(pos);
                }
            }
        }
        let root = root.ok_or_else(|| Error::MalformedTree("no root atom".into()))?;
        for list in &mut children {
            list.sort_by_key(|&pos| raw.atoms[pos].id);
        }

        // Breadth-first layout: each level is the concatenation of the sorted
        // child lists of the previous level, in that level's order.
        let mut levels: Vec<Vec<usize>> = vec![vec![root]];
        let mut visited = 1usize;
        loop {
            let current = levels.last().unwrap();
            let next: Vec<usize> = current
                .iter()
                .flat_map(|&pos| children[pos].iter().copied())
                .collect();
            if next.is_empty() {
                break;
            }
            visited += next.len();
            if visited > raw.atoms.len() {
                return Err(Error::MalformedTree("parent links contain a cycle".into()));
            }
            levels.push(next);
        }
        if visited != raw.atoms.len() {
            return Err(Error::MalformedTree(format!(
                "{} atoms are not reachable from the root",
                raw.atoms.len() - visited
            )));
        }
        let depth = levels.len() - 1;
        if depth != raw.depth {
            return Err(Error::MalformedTree(format!(
                "declared depth {} but the deepest atom is at level {depth}",
                raw.depth
            )));
        }
        for (level, atoms) in levels.iter().enumerate().take(depth) {
            if let Some(&pos) = atoms.iter().find(|&&pos| children[pos].is_empty()) {
                return Err(Error::MalformedTree(format!(
                    "atom {} at level {level} has no children but depth is {depth}",
                    raw.atoms[pos].id
                )));
            }
        }

        let probs = levels
            .iter()
            .map(|atoms| atoms.iter().map(|&pos| raw.atoms[pos].prob).collect())
            .collect();
        let child_offsets = levels[..depth]
            .iter()
            .map(|atoms| offsets_from_counts(atoms.iter().map(|&pos| children[pos].len())))
            .collect();
        let explicit: Vec<Vec<i64>> = levels
            .iter()
            .map(|atoms| atoms.iter().map(|&pos| raw.atoms[pos].id).collect())
            .collect();
        let sequential = explicit
            .iter()
            .flatten()
            .enumerate()
            .all(|(i, &id)| id == i as i64);
        let ids = if sequential {
            AtomIds::Sequential
        } else {
            AtomIds::Explicit(explicit)
        };
        Self::from_parts(probs, child_offsets, ids)
    }

    /// Builds a tree from per-level arrays and checks every structural invariant.
    pub(crate) fn from_parts(
        probs: Vec<Vec<f64>>,
        child_offsets: Vec<Vec<u32>>,
        ids: AtomIds,
    ) -> Result<Self> {
        if probs.is_empty() || probs[0].len() != 1 {
            return Err(Error::MalformedTree(
                "level 0 must hold exactly one atom".into(),
            ));
        }
        let depth = probs.len() - 1;
        if child_offsets.len() != depth {
            return Err(Error::MalformedTree(
                "child index does not match depth".into(),
            ));
        }
        let mut level_start = Vec::with_capacity(depth + 2);
        let mut total = 0usize;
        for level in &probs {
            level_start.push(total);
            total += level.len();
        }
        level_start.push(total);
        if total > u32::MAX as usize {
            return Err(Error::MalformedTree("tree exceeds 2^32 atoms".into()));
        }
        if let AtomIds::Explicit(ids) = &ids {
            if ids.len() != probs.len() || ids.iter().zip(&probs).any(|(a, b)| a.len() != b.len()) {
                return Err(Error::MalformedTree(
                    "id table does not match levels".into(),
                ));
            }
        }
        let tree = FiltrationTree {
            depth,
            probs,
            child_offsets,
            level_start,
            ids,
        };
        for level in 0..depth {
            let offsets = &tree.child_offsets[level];
            if offsets.len() != tree.level_len(level) + 1
                || offsets[0] != 0
                || *offsets.last().unwrap() as usize != tree.level_len(level + 1)
            {
                return Err(Error::MalformedTree(format!(
                    "bad child index at level {level}"
                )));
            }
            for (i, w) in offsets.windows(2).enumerate() {
                if w[1] <= w[0] {
                    return Err(Error::MalformedTree(format!(
                        "atom {} at level {level} has no children but depth is {depth}",
                        tree.id(level, i)
                    )));
                }
            }
        }
        for level in 0..=depth {
            for (i, &p) in tree.probs[level].iter().enumerate() {
                if !p.is_finite() || p <= 0.0 {
                    return Err(Error::NonPositiveProbability {
                        atom: tree.id(level, i),
                        prob: p,
                    });
                }
            }
        }
        let root = tree.probs[0][0];
        if (root - 1.0).abs() > tolerance::PROBABILITY_SUM {
            return Err(Error::ProbabilityMismatch {
                atom: tree.id(0, 0),
                expected: 1.0,
                actual: root,
            });
        }
        for level in 0..depth {
            let next = &tree.probs[level + 1];
            for (i, &p) in tree.probs[level].iter().enumerate() {
                let sum: f64 = next[tree.children(level, i)].iter().sum();
                if (sum - p).abs() > tolerance::PROBABILITY_SUM {
                    return Err(Error::ProbabilityMismatch {
                        atom: tree.id(level, i),
                        expected: p,
                        actual: sum,
                    });
                }
            }
        }
        Ok(tree)
    }

    pub fn to_raw(&self) -> RawTree {
        let mut atoms = Vec::with_capacity(self.atom_count());
        for level in 0..=self.depth {
            for i in 0..self.level_len(level) {
                let parent = (level > 0).then(|| self.id(level - 1, self.parent(level, i)));
                atoms.push(RawAtom {
                    id: self.id(level, i),
                    parent,
                    prob: self.probs[level][i],
                });
            }
        }
        RawTree {
            depth: self.depth,
            atoms,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn level_len(&self, level: usize) -> usize {
        self.probs[level].len()
    }

    pub fn leaf_count(&self) -> usize {
        self.level_len(self.depth)
    }

    pub fn atom_count(&self) -> usize {
        self.level_start[self.depth + 1]
    }

    pub fn prob(&self, level: usize, index: usize) -> f64 {
        self.probs[level][index]
    }

    pub fn level_probs(&self, level: usize) -> &[f64] {
        &self.probs[level]
    }

    /// Child index range (into level `level + 1`) of atom `index` at `level < depth`.
    pub fn children(&self, level: usize, index: usize) -> Range<usize> {
        let offsets = &self.child_offsets[level];
        offsets[index] as usize..offsets[index + 1] as usize
    }

    /// Index of the parent (at `level - 1`) of atom `index` at `level >= 1`.
    pub fn parent(&self, level: usize, index: usize) -> usize {
        let offsets = &self.child_offsets[level - 1];
        offsets.partition_point(|&o| o as usize <= index) - 1
    }

    pub fn id(&self, level: usize, index: usize) -> i64 {
        match &self.ids {
            AtomIds::Sequential => (self.level_start[level] + index) as i64,
            AtomIds::Explicit(ids) => ids[level][index],
        }
    }

    pub fn leaf_ids(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.leaf_count()).map(move |i| self.id(self.depth, i))
    }

    /// Map from leaf id to leaf index.
    pub fn leaf_index(&self) -> HashMap<i64, usize> {
        self.leaf_ids().enumerate().map(|(i, id)| (id, i)).collect()
    }

    pub(crate) fn check_level(&self, level: usize) -> Result<()> {
        if level > self.depth {
            Err(Error::LevelOutOfRange {
                level,
                depth: self.depth,
            })
        } else {
            Ok(())
        }
    }

    /// True when every non-leaf atom splits into exactly two children of equal mass.
    pub fn is_dyadic(&self) -> bool {
        (0..self.depth).all(|level| {
            let next = &self.probs[level + 1];
            self.probs[level].iter().enumerate().all(|(i, &p)| {
                let kids = self.children(level, i);
                kids.len() == 2 && kids.clone().all(|c| next[c] == 0.5 * p)
            })
        })
    }

    /// Copies level-`level` values down to the leaves below each atom.
    pub(crate) fn push_down<T: Copy>(&self, level: usize, values: &[T]) -> Vec<T> {
        let mut current = values.to_vec();
        for l in level..self.depth {
            current = self.spread_to_children(l, &current);
        }
        current
    }

    /// One-level copy of per-atom values to their children.
    pub(crate) fn spread_to_children<T: Copy>(&self, level: usize, values: &[T]) -> Vec<T> {
        let mut next = Vec::with_capacity(self.level_len(level + 1));
        for (i, &v) in values.iter().enumerate() {
            let n = self.children(level, i).len();
            next.extend(std::iter::repeat_n(v, n));
        }
        next
    }

    /// Probability-weighted averages of level-`level + 1` values over each level-`level` atom.
    pub(crate) fn average_children(&self, level: usize, values: &[f64]) -> Vec<f64> {
        let next = &self.probs[level + 1];
        self.probs[level]
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let kids = self.children(level, i);
                // a lone child carries the parent's mass; copying avoids a p*v/p rounding
                if kids.len() == 1 {
                    return values[kids.start];
                }
                let mass: f64 = kids.clone().map(|c| next[c] * values[c]).sum();
                mass / p
            })
            .collect()
    }
}

pub(crate) fn offsets_from_counts(counts: impl Iterator<Item = usize>) -> Vec<u32> {
    let mut offsets = vec![0u32];
    let mut acc = 0u32;
    for c in counts {
        acc += c as u32;
        offsets.push(acc);
    }
    offsets
}

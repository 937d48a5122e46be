//! Deterministic input generators: filtrations and test functions.
//!
//! Every generator is a pure function of its [`GeneratorSpec`]. Randomized
//! generators draw from ChaCha8 seeded with the spec's seed; tree shapes use
//! stream 0 and leaf functions use stream 1, so a tree and its function can
//! share one seed without sharing random numbers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::function::LeafFunction;
use crate::tree::{offsets_from_counts, AtomIds, FiltrationTree};

/// Deepest dyadic tree that will be materialized (2^24 leaves).
pub const MAX_DYADIC_DEPTH: usize = 24;

/// Deepest spine walk; beyond this the spine atom's mass underflows.
pub const MAX_SPINE_DEPTH: usize = 1000;

/// Upper limit on atoms in a random tree.
pub const MAX_RANDOM_ATOMS: usize = 1 << 26;

pub const DEFAULT_DELTA: f64 = 0.25;

const TREE_STREAM: u64 = 0;
const FUNCTION_STREAM: u64 = 1;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Complete binary tree with equal-mass splits.
pub fn gen_dyadic(depth: usize) -> Result<FiltrationTree> {
    if depth == 0 || depth > MAX_DYADIC_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "dyadic depth must be in 1..={MAX_DYADIC_DEPTH}, got {depth}"
        )));
    }
    let probs = (0..=depth)
        .map(|l| vec![0.5f64.powi(l as i32); 1 << l])
        .collect();
    let offsets = (0..depth)
        .map(|l| offsets_from_counts(std::iter::repeat_n(2, 1 << l)))
        .collect();
    FiltrationTree::from_parts(probs, offsets, AtomIds::Sequential)
}

/// Random tree: each atom splits into `1..=max_branch` children whose masses
/// are the sorted-uniform spacings of the unit interval scaled by the parent mass.
pub fn gen_random_tree(depth: usize, max_branch: usize, seed: u64) -> Result<FiltrationTree> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    if max_branch == 0 {
        return Err(Error::InvalidParameter(
            "max branching must be at least 1".into(),
        ));
    }
    let mut rng = rng_for(seed, TREE_STREAM);
    let mut probs: Vec<Vec<f64>> = vec![vec![1.0]];
    let mut offsets = Vec::with_capacity(depth);
    let mut total = 1usize;
    let mut cuts = Vec::with_capacity(max_branch);
    for _ in 0..depth {
        let parents = probs.last().unwrap();
        let mut next = Vec::new();
        let mut counts = Vec::with_capacity(parents.len());
        for &p in parents {
            let k = rng.gen_range(1..=max_branch);
            counts.push(k);
            if k == 1 {
                next.push(p);
                continue;
            }
            loop {
                cuts.clear();
                cuts.extend((0..k - 1).map(|_| rng.gen::<f64>()));
                cuts.sort_by(f64::total_cmp);
                let mut prev = 0.0;
                let spacings: Vec<f64> = cuts
                    .iter()
                    .chain(std::iter::once(&1.0))
                    .map(|&c| {
                        let s = c - prev;
                        prev = c;
                        s
                    })
                    .collect();
                if spacings.iter().all(|&s| s > 0.0) {
                    next.extend(spacings.iter().map(|s| s * p));
                    break;
                }
            }
        }
        total += next.len();
        if total > MAX_RANDOM_ATOMS {
            return Err(Error::InvalidParameter(format!(
                "random tree exceeds {MAX_RANDOM_ATOMS} atoms"
            )));
        }
        offsets.push(offsets_from_counts(counts.into_iter()));
        probs.push(next);
    }
    FiltrationTree::from_parts(probs, offsets, AtomIds::Sequential)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "step must be in (0, 1/2], got {delta}"
        )))
    }
}

fn walk_split(v: f64, delta: f64) -> Option<(f64, f64)> {
    let (up, down) = (v + delta, v - delta);
    (up <= 1.0 && down >= 0.0).then_some((up, down))
}

/// Bounded ±δ martingale walk on a dyadic tree, started at 1/2.
///
/// At every split the first child moves up by δ and the second down by δ when
/// both stay inside [0, 1]; otherwise the atom is absorbed and both children
/// keep its value.
pub fn gen_bounded_walk_f(tree: &FiltrationTree, delta: f64) -> Result<LeafFunction<'_>> {
    check_delta(delta)?;
    if !tree.is_dyadic() {
        return Err(Error::InvalidParameter(
            "bounded walk needs a dyadic tree".into(),
        ));
    }
    let mut values = vec![0.5];
    for _ in 0..tree.depth() {
        let mut next = Vec::with_capacity(values.len() * 2);
        for &v in &values {
            match walk_split(v, delta) {
                Some((up, down)) => next.extend([up, down]),
                None => next.extend([v, v]),
            }
        }
        values = next;
    }
    LeafFunction::new(tree, values)
}

/// Bounded walk restricted to its alternating spine.
///
/// Only the spine atom splits (into two equal halves, values ±δ); every other
/// atom is frozen as a single-child chain. The spine moves to whichever child
/// is closer to 1/2, so for δ <= 1/4 it alternates between 1/2 and 1/2 + δ and
/// the leaf at the end of it carries `S(f)^2 = depth * δ^2`. The tree has
/// `O(depth^2)` atoms, which makes deep walks practical.
pub fn gen_walk_spine(depth: usize, delta: f64) -> Result<(FiltrationTree, Vec<f64>)> {
    check_delta(delta)?;
    if depth == 0 || depth > MAX_SPINE_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "walk depth must be in 1..={MAX_SPINE_DEPTH}, got {depth}"
        )));
    }
    let mut probs = vec![vec![1.0]];
    let mut values = vec![0.5];
    let mut offsets = Vec::with_capacity(depth);
    let mut spine = 0usize;
    for _ in 0..depth {
        let parents = probs.last().unwrap();
        let mut next_p = Vec::with_capacity(parents.len() + 1);
        let mut next_v = Vec::with_capacity(parents.len() + 1);
        let mut counts = Vec::with_capacity(parents.len());
        let mut next_spine = 0;
        for (i, (&p, &v)) in parents.iter().zip(&values).enumerate() {
            let split = if i == spine {
                walk_split(v, delta)
            } else {
                None
            };
            if i == spine {
                next_spine = next_p.len();
            }
            match split {
                Some((up, down)) => {
                    counts.push(2);
                    if (down - 0.5).abs() < (up - 0.5).abs() {
                        next_spine += 1;
                    }
                    next_p.extend([0.5 * p, 0.5 * p]);
                    next_v.extend([up, down]);
                }
                None => {
                    counts.push(1);
                    next_p.push(p);
                    next_v.push(v);
                }
            }
        }
        offsets.push(offsets_from_counts(counts.into_iter()));
        probs.push(next_p);
        values = next_v;
        spine = next_spine;
    }
    let tree = FiltrationTree::from_parts(probs, offsets, AtomIds::Sequential)?;
    Ok((tree, values))
}

/// Independent uniform leaf values in `[lo, hi]`.
pub fn gen_random_f(
    tree: &FiltrationTree,
    seed: u64,
    lo: f64,
    hi: f64,
) -> Result<LeafFunction<'_>> {
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= lo <= hi <= 1, got lo={lo}, hi={hi}"
        )));
    }
    let mut rng = rng_for(seed, FUNCTION_STREAM);
    let width = hi - lo;
    let values = (0..tree.leaf_count())
        .map(|_| lo + width * rng.gen::<f64>())
        .collect();
    LeafFunction::new(tree, values)
}

/// Parameters shared by all generators. Fields a generator does not use are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub depth: usize,
    pub max_branch: usize,
    pub delta: f64,
    pub seed: Option<u64>,
    /// Also produce a random function in [0, 1] for generators whose function is optional.
    pub with_function: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            depth: 1,
            max_branch: 2,
            delta: DEFAULT_DELTA,
            seed: None,
            with_function: false,
        }
    }
}

impl GeneratorSpec {
    fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidParameter("this generator needs a seed".into()))
    }
}

/// A generated tree plus, optionally, leaf values for a function on it.
#[derive(Clone, Debug)]
pub struct Generated {
    pub tree: FiltrationTree,
    pub values: Option<Vec<f64>>,
}

pub trait Generator: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn generate(&self, spec: &GeneratorSpec) -> Result<Generated>;
}

fn random_values(tree: &FiltrationTree, spec: &GeneratorSpec) -> Result<Option<Vec<f64>>> {
    if !spec.with_function {
        return Ok(None);
    }
    let seed = spec.require_seed()?;
    Ok(Some(gen_random_f(tree, seed, 0.0, 1.0)?.into_values()))
}

pub struct DyadicGenerator;

impl Generator for DyadicGenerator {
    fn name(&self) -> &'static str {
        "dyadic"
    }

    fn description(&self) -> &'static str {
        "complete binary tree with equal-mass splits"
    }

    fn generate(&self, spec: &GeneratorSpec) -> Result<Generated> {
        let tree = gen_dyadic(spec.depth)?;
        let values = random_values(&tree, spec)?;
        Ok(Generated { tree, values })
    }
}

pub struct RandomTreeGenerator;

impl Generator for RandomTreeGenerator {
    fn name(&self) -> &'static str {
        "random"
    }

    fn description(&self) -> &'static str {
        "random branching (1..=branch-max) with random-simplex child masses"
    }

    fn generate(&self, spec: &GeneratorSpec) -> Result<Generated> {
        let tree = gen_random_tree(spec.depth, spec.max_branch, spec.require_seed()?)?;
        let values = random_values(&tree, spec)?;
        Ok(Generated { tree, values })
    }
}

pub struct WalkGenerator;

impl Generator for WalkGenerator {
    fn name(&self) -> &'static str {
        "walk"
    }

    fn description(&self) -> &'static str {
        "bounded ±delta walk along the alternating spine of a dyadic filtration"
    }

    fn generate(&self, spec: &GeneratorSpec) -> Result<Generated> {
        let (tree, values) = gen_walk_spine(spec.depth, spec.delta)?;
        Ok(Generated {
            tree,
            values: Some(values),
        })
    }
}

pub struct DyadicWalkGenerator;

impl Generator for DyadicWalkGenerator {
    fn name(&self) -> &'static str {
        "dyadic-walk"
    }

    fn description(&self) -> &'static str {
        "bounded ±delta walk on the full dyadic tree (depth <= 24)"
    }

    fn generate(&self, spec: &GeneratorSpec) -> Result<Generated> {
        let tree = gen_dyadic(spec.depth)?;
        let values = gen_bounded_walk_f(&tree, spec.delta)?.into_values();
        Ok(Generated {
            tree,
            values: Some(values),
        })
    }
}

/// Generators selectable by name.
pub struct GeneratorRegistry {
    entries: BTreeMap<&'static str, Box<dyn Generator>>,
}

impl GeneratorRegistry {
    pub fn empty() -> Self {
        GeneratorRegistry {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, generator: Box<dyn Generator>) {
        self.entries.insert(generator.name(), generator);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Generator> {
        self.entries.get(name).map(|g| g.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }
}

impl Default for GeneratorRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(DyadicGenerator));
        registry.register(Box::new(RandomTreeGenerator));
        registry.register(Box::new(WalkGenerator));
        registry.register(Box::new(DyadicWalkGenerator));
        registry
    }
}

//! Bulk runs of both constructions and the lemma checkers on random instances.
//!
//! Trial `i` uses seed `seed + i` for everything it draws, so rows do not
//! depend on scheduling. Rows come out sorted by trial, then method, then
//! lemma; one summary row per method follows.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::generators::{gen_random_f, gen_random_tree};
use crate::corpus::lemmas::{check_exp_difference_lemma, check_square_lemma};
use crate::error::{Error, Result};
use crate::function::{LeafFunction, LevelFunction};
use crate::multiplier::MethodRegistry;
use crate::tolerance;

/// Column order of the CSV report.
pub const CSV_HEADER: &str =
    "trial,seed,depth,branch,method,max_sq,bound,identity_resid,mass_margin,pass";

/// Row label of the square-lemma check; `max_sq` holds the max of `LHS - 4 RHS`.
pub const SQUARE_LEMMA: &str = "lemma-square";
/// Row label of the exponential-difference check; `max_sq` holds the max of `LHS - 18 RHS`.
pub const EXP_LEMMA: &str = "lemma-exp";

const DEPTH_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub trials: usize,
    /// Each trial draws its depth uniformly from `1..=max_depth`.
    pub max_depth: usize,
    pub branch_max: usize,
    pub methods: Vec<String>,
    pub seed: u64,
    pub lemmas: bool,
    /// Replaces the random function with this constant.
    pub constant: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            trials: 100,
            max_depth: 8,
            branch_max: 4,
            methods: vec!["sigma".into(), "s".into()],
            seed: 0,
            lemmas: true,
            constant: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    /// `None` on summary rows.
    pub trial: Option<usize>,
    pub seed: u64,
    pub depth: usize,
    pub branch: usize,
    pub method: String,
    pub max_sq: f64,
    pub bound: f64,
    pub identity_resid: f64,
    pub mass_margin: f64,
    pub pass: bool,
}

impl Row {
    fn csv_line(&self, out: &mut String) {
        let trial = self
            .trial
            .map_or_else(|| "worst".to_string(), |t| t.to_string());
        let _ = writeln!(
            out,
            "{trial},{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.seed,
            self.depth,
            self.branch,
            self.method,
            self.max_sq,
            self.bound,
            self.identity_resid,
            self.mass_margin,
            self.pass
        );
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub rows: Vec<Row>,
    pub summary: Vec<Row>,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(128 * (self.rows.len() + self.summary.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in self.rows.iter().chain(&self.summary) {
            row.csv_line(&mut out);
        }
        out
    }

    /// Worst row of `method`, if any trial ran it.
    pub fn worst(&self, method: &str) -> Option<&Row> {
        self.summary.iter().find(|r| r.method == method)
    }
}

fn summarize(rows: &[Row], seed: u64) -> Vec<Row> {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let of: Vec<&Row> = rows.iter().filter(|r| r.method == m).collect();
            Row {
                trial: None,
                seed,
                depth: of.iter().map(|r| r.depth).max().unwrap_or(0),
                branch: of.iter().map(|r| r.branch).max().unwrap_or(0),
                method: m.to_string(),
                max_sq: of.iter().map(|r| r.max_sq).fold(f64::NEG_INFINITY, nan_max),
                bound: of.iter().map(|r| r.bound).fold(f64::INFINITY, f64::min),
                identity_resid: of.iter().map(|r| r.identity_resid).fold(0.0, nan_max),
                mass_margin: of
                    .iter()
                    .map(|r| r.mass_margin)
                    .fold(f64::INFINITY, nan_min),
                pass: of.iter().all(|r| r.pass),
            }
        })
        .collect()
}

/// `max` that lets NaN win, so a broken trial shows in the summary.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn nan_min(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.min(b)
    }
}

/// Depth drawn for a trial seed.
pub fn trial_depth(seed: u64, max_depth: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DEPTH_STREAM);
    rng.gen_range(1..=max_depth)
}

fn lemma_rows(f: &LeafFunction<'_>, base: &Row) -> Result<[Row; 2]> {
    let tree = f.tree();
    let mart = f.martingale();
    let mut square: f64 = f64::NEG_INFINITY;
    let mut exp: f64 = f64::NEG_INFINITY;
    for n in 1..=tree.depth() {
        let g = LevelFunction::from_trusted(tree, n, mart.level(n).to_vec()).lift_to_leaves();
        square = square.max(check_square_lemma(&g, n)?);
        exp = exp.max(check_exp_difference_lemma(f, n)?);
    }
    let row = |method: &str, value: f64| Row {
        method: method.to_string(),
        max_sq: value,
        bound: tolerance::STRUCTURAL,
        identity_resid: 0.0,
        mass_margin: 0.0,
        pass: value <= tolerance::STRUCTURAL,
        ..base.clone()
    };
    Ok([row(SQUARE_LEMMA, square), row(EXP_LEMMA, exp)])
}

fn run_trial(config: &SweepConfig, registry: &MethodRegistry, index: usize) -> Result<Vec<Row>> {
    let seed = config.seed.wrapping_add(index as u64);
    let depth = trial_depth(seed, config.max_depth);
    let tree = gen_random_tree(depth, config.branch_max, seed)?;
    let f = match config.constant {
        Some(c) => LeafFunction::constant(&tree, c)?,
        None => gen_random_f(&tree, seed, 0.0, 1.0)?,
    };
    let base = Row {
        trial: Some(index),
        seed,
        depth,
        branch: config.branch_max,
        method: String::new(),
        max_sq: f64::NAN,
        bound: f64::NAN,
        identity_resid: f64::NAN,
        mass_margin: f64::NAN,
        pass: false,
    };
    let mut rows = Vec::with_capacity(config.methods.len() + 2);
    for name in &config.methods {
        let method = registry
            .get(name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {name:?}")))?;
        match method.construct(&f) {
            Ok(cert) => {
                let s = cert.summary();
                rows.push(Row {
                    method: name.clone(),
                    max_sq: s.max_sq,
                    bound: s.bound,
                    identity_resid: s.identity_residual,
                    mass_margin: s.mass_margin,
                    pass: s.pass,
                    ..base.clone()
                });
            }
            // a failed walk is a failed row, not an aborted sweep
            Err(e) if e.is_check_failure() => rows.push(Row {
                method: name.clone(),
                bound: method.bound(),
                ..base.clone()
            }),
            Err(e) => return Err(e),
        }
    }
    if config.lemmas {
        rows.extend(lemma_rows(&f, &base)?);
    }
    Ok(rows)
}

fn validate(config: &SweepConfig, registry: &MethodRegistry) -> Result<()> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if config.max_depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    if config.branch_max == 0 {
        return Err(Error::InvalidParameter(
            "branch-max must be at least 1".into(),
        ));
    }
    if let Some(c) = config.constant {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidParameter(format!(
                "constant {c} is outside [0, 1]"
            )));
        }
    }
    for name in &config.methods {
        if registry.get(name).is_none() {
            return Err(Error::InvalidParameter(format!(
                "unknown method {name:?}; known: {}",
                registry.names().join(", ")
            )));
        }
    }
    Ok(())
}

/// Runs the sweep on `threads` workers (all available when `None`).
pub fn run_sweep(config: &SweepConfig, threads: Option<usize>) -> Result<Report> {
    let registry = MethodRegistry::default();
    validate(config, &registry)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let per_trial: Vec<Result<Vec<Row>>> = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|i| run_trial(config, &registry, i))
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_trial {
        rows.extend(r?);
    }
    let summary = summarize(&rows, config.seed);
    Ok(Report { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trials: usize, seed: u64) -> SweepConfig {
        SweepConfig {
            trials,
            max_depth: 5,
            branch_max: 3,
            seed,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn rows_are_ordered_and_pass() {
        let report = run_sweep(&small(20, 4), Some(2)).unwrap();
        assert!(report.pass());
        assert_eq!(report.rows.len(), 20 * 4);
        for (k, row) in report.rows.iter().enumerate() {
            assert_eq!(row.trial, Some(k / 4));
            assert_eq!(row.seed, 4 + (k / 4) as u64);
        }
        assert_eq!(report.summary.len(), 4);
        let sigma = report.worst("sigma").unwrap();
        assert!(sigma.max_sq <= 18.0);
    }

    #[test]
    fn summary_is_columnwise_extreme() {
        let report = run_sweep(&small(15, 0), Some(1)).unwrap();
        for s in &report.summary {
            let of: Vec<&Row> = report
                .rows
                .iter()
                .filter(|r| r.method == s.method)
                .collect();
            assert!(of.iter().all(|r| r.max_sq <= s.max_sq));
            assert!(of.iter().all(|r| r.mass_margin >= s.mass_margin));
            assert!(of.iter().any(|r| r.max_sq == s.max_sq));
        }
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let a = run_sweep(&small(30, 11), Some(1)).unwrap().to_csv();
        let b = run_sweep(&small(30, 11), Some(4)).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with(CSV_HEADER));
    }

    #[test]
    fn constant_function_single_trial() {
        let config = SweepConfig {
            trials: 1,
            constant: Some(0.5),
            ..small(1, 0)
        };
        let report = run_sweep(&config, Some(1)).unwrap();
        assert!(report.pass());
        assert!(report
            .rows
            .iter()
            .filter(|r| !r.method.starts_with("lemma"))
            .all(|r| r.max_sq < 1e-30));
    }

    #[test]
    fn invalid_configs() {
        assert!(run_sweep(&small(0, 0), None).is_err());
        let bad = SweepConfig {
            methods: vec!["nope".into()],
            ..small(1, 0)
        };
        assert!(matches!(
            run_sweep(&bad, None),
            Err(Error::InvalidParameter(_))
        ));
    }
}

//! `sl-lab`: generate filtrations, build and verify multiplier certificates, run sweeps.
//!
//! Exit codes: 0 when every check passes, 1 when a mathematical check fails,
//! 2 on invalid input.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use sl_lab::corpus::{GeneratorRegistry, GeneratorSpec};
use sl_lab::multiplier::all_pass;
use sl_lab::sweep::{run_sweep, SweepConfig};
use sl_lab::{
    c_bound_derived, io, iterated_correction, iteration_bound, CertificateRecord, Check, Error,
    LeafFunction, MethodRegistry, VerifyTolerance,
};

const THREADS_ENV: &str = "SL_LAB_THREADS";

const SWEEP_HELP: &str = "\
Report columns, in order:
  trial,seed,depth,branch,method,max_sq,bound,identity_resid,mass_margin,pass

  trial           trial index, or `worst` on the per-method summary rows
  seed            per-trial seed (base seed + trial index)
  max_sq          largest leaf value of the squared target square function of mf;
                  for lemma-square / lemma-exp rows, the largest violation
  bound           limit max_sq is checked against
  identity_resid  largest per-level relative residual of the multiplier identity
  mass_margin     E(mf) - e^{-|f|_inf} E f
  pass            every check on the row holds

Summary rows hold column-wise extrema (max, except mass_margin which is a min).
Set SL_LAB_THREADS to cap the number of worker threads.";

#[derive(Parser)]
#[command(
    name = "sl-lab",
    version,
    about = "Multipliers into martingale SL-infinity on finite filtrations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a filtration tree and optionally a function on it.
    Gen {
        /// Generator: dyadic, random, walk or dyadic-walk.
        kind: String,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 2)]
        branch_max: usize,
        #[arg(long, default_value_t = sl_lab::corpus::generators::DEFAULT_DELTA)]
        delta: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Tree output path.
        #[arg(long)]
        out: PathBuf,
        /// Function output path (`.csv` for atom,value rows, JSON otherwise).
        /// Walk generators always write one, next to the tree when omitted.
        #[arg(long = "f")]
        f: Option<PathBuf>,
    },
    /// Build a multiplier certificate for f.
    Construct {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long = "f")]
        f: PathBuf,
        /// sigma or s.
        #[arg(long)]
        method: String,
        /// Certificate output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute every check of a stored certificate.
    Verify {
        certificate: PathBuf,
        /// Replaces every relative tolerance. Values far below 1e-12 are over-tight
        /// on deep trees and may fail on rounding alone.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run both constructions and the lemma checks on random filtrations.
    #[command(after_help = SWEEP_HELP)]
    Sweep {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Maximum depth; each trial draws its depth from 1..=depth.
        #[arg(long, default_value_t = 8)]
        depth: usize,
        #[arg(long, default_value_t = 4)]
        branch_max: usize,
        /// Methods to run (repeatable). Defaults to all.
        #[arg(long)]
        method: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use this constant in place of the random function.
        #[arg(long)]
        constant: Option<f64>,
        /// Skip the lemma-square and lemma-exp rows.
        #[arg(long)]
        no_lemmas: bool,
        /// CSV report path; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Repeat the square-function correction until E(f - g) <= eps E f.
    Iterate {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long = "f")]
        f: PathBuf,
        #[arg(long)]
        eps: f64,
        /// JSON report path; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

enum Failure {
    Check,
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_check_failure() {
            eprintln!("check failed: {e}");
            Failure::Check
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type Outcome = Result<bool, Failure>;

/// Names the file in read errors.
fn in_file<T>(path: &Path, r: sl_lab::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Input(msg) => Failure::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn say(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        let mark = if c.pass { "ok  " } else { "FAIL" };
        say(&format!(
            "{mark} {:<24} {:>24.16e}  limit {:.6e}",
            c.name, c.value, c.limit
        ));
    }
}

fn threads() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Failure::Input(format!(
                "{THREADS_ENV} must be a positive integer, got {s:?}"
            ))),
        },
    }
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn default_function_path(tree_out: &Path) -> PathBuf {
    let stem = tree_out
        .file_stem()
        .map_or_else(|| "tree".into(), |s| s.to_string_lossy().into_owned());
    tree_out.with_file_name(format!("{stem}.f.json"))
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    kind: &str,
    depth: usize,
    branch_max: usize,
    delta: f64,
    seed: Option<u64>,
    out: &Path,
    f: Option<&Path>,
) -> Outcome {
    let registry = GeneratorRegistry::default();
    let generator = registry.get(kind).ok_or_else(|| {
        let names: Vec<_> = registry.names().collect();
        Failure::Input(format!(
            "unknown generator {kind:?}; expected one of {}",
            names.join(", ")
        ))
    })?;
    let spec = GeneratorSpec {
        depth,
        max_branch: branch_max,
        delta,
        seed,
        with_function: f.is_some(),
    };
    let generated = generator.generate(&spec)?;
    io::write_tree(out, &generated.tree)?;
    say(&format!(
        "tree: {} ({} atoms, {} leaves, depth {})",
        out.display(),
        generated.tree.atom_count(),
        generated.tree.leaf_count(),
        generated.tree.depth()
    ));
    if let Some(values) = generated.values {
        let f_path = f.map_or_else(|| default_function_path(out), Path::to_path_buf);
        let func = LeafFunction::new(&generated.tree, values)?;
        let tree_name = out
            .file_name()
            .map_or_else(|| path_string(out), |n| n.to_string_lossy().into_owned());
        io::write_function(&f_path, &tree_name, &func)?;
        say(&format!(
            "function: {} (E f = {:.6}, max S(f) = {:.6})",
            f_path.display(),
            func.expectation(),
            func.square_function().sup_norm()
        ));
    }
    Ok(true)
}

fn cmd_construct(tree_path: &Path, f_path: &Path, method: &str, out: &Path) -> Outcome {
    let registry = MethodRegistry::default();
    let method = registry.get(method).ok_or_else(|| {
        Failure::Input(format!(
            "unknown method {method:?}; expected one of {}",
            registry.names().join(", ")
        ))
    })?;
    let tree = in_file(tree_path, io::read_tree(tree_path))?;
    let f = in_file(f_path, io::read_function(&tree, f_path))?;
    let cert = method.construct(&f)?;
    let record = CertificateRecord::from_certificate(
        &cert,
        Some(path_string(tree_path)),
        Some(path_string(f_path)),
    );
    io::write_certificate(out, &record)?;
    let s = cert.summary();
    say(&format!(
        "method {}: max_sq {:.16e} (bound {:.6})",
        s.method, s.max_sq, s.bound
    ));
    print_checks(&record.checks);
    say(&format!("certificate: {}", out.display()));
    Ok(record.pass)
}

/// A stored input path, tried relative to the certificate's directory first.
fn resolve(stored: Option<&str>, cert_dir: &Path, what: &str) -> Result<PathBuf, Failure> {
    let stored = stored
        .ok_or_else(|| Failure::Input(format!("certificate does not reference a {what} file")))?;
    let p = Path::new(stored);
    if p.is_relative() {
        let beside = cert_dir.join(p);
        if beside.exists() {
            return Ok(beside);
        }
    }
    Ok(p.to_path_buf())
}

fn cmd_verify(cert_path: &Path, tol: Option<f64>) -> Outcome {
    let tol = match tol {
        Some(t) if !(t.is_finite() && t >= 0.0) => {
            return Err(Failure::Input(format!(
                "tolerance must be finite and non-negative, got {t}"
            )))
        }
        Some(t) => VerifyTolerance::uniform(t),
        None => VerifyTolerance::default(),
    };
    let record = in_file(cert_path, io::read_certificate(cert_path))?;
    let registry = MethodRegistry::default();
    let method = registry.get(&record.method).ok_or_else(|| {
        Failure::Input(format!(
            "certificate names unknown method {:?}",
            record.method
        ))
    })?;
    let dir = cert_path.parent().unwrap_or_else(|| Path::new("."));
    let tree_path = resolve(record.tree.as_deref(), dir, "tree")?;
    let tree = in_file(&tree_path, io::read_tree(&tree_path))?;
    let f_path = resolve(record.f.as_deref(), dir, "function")?;
    let f = in_file(&f_path, io::read_function(&tree, &f_path))?;
    let checks = method.verify_record(&f, &record, &tol)?;
    print_checks(&checks);
    let pass = all_pass(&checks);
    say(if pass {
        "certificate verified"
    } else {
        "certificate REJECTED"
    });
    Ok(pass)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    trials: usize,
    depth: usize,
    branch_max: usize,
    methods: Vec<String>,
    seed: u64,
    constant: Option<f64>,
    lemmas: bool,
    report: Option<&Path>,
) -> Outcome {
    let registry = MethodRegistry::default();
    let methods = if methods.is_empty() {
        registry.names().into_iter().map(String::from).collect()
    } else {
        methods
    };
    let config = SweepConfig {
        trials,
        max_depth: depth,
        branch_max,
        methods,
        seed,
        lemmas,
        constant,
    };
    let result = run_sweep(&config, threads()?)?;
    let csv = result.to_csv();
    match report {
        Some(path) => {
            std::fs::write(path, &csv).map_err(Error::from)?;
            for row in &result.summary {
                say(&format!(
                    "{:<12} worst max_sq {:.6e} (bound {:.6e}), identity {:.3e}, mass margin {:.3e}, pass {}",
                    row.method, row.max_sq, row.bound, row.identity_resid, row.mass_margin, row.pass
                ));
            }
            say(&format!("report: {}", path.display()));
        }
        None => {
            let _ = std::io::stdout().lock().write_all(csv.as_bytes());
        }
    }
    Ok(result.pass())
}

fn cmd_iterate(tree_path: &Path, f_path: &Path, eps: f64, report: Option<&Path>) -> Outcome {
    let tree = in_file(tree_path, io::read_tree(tree_path))?;
    let f = in_file(f_path, io::read_function(&tree, f_path))?;
    let out = iterated_correction(&f, eps)?;
    let checks = out.checks();
    let pass = out.pass();
    let doc = json!({
        "tree": path_string(tree_path),
        "f": path_string(f_path),
        "eps": eps,
        "iterations": out.iterations,
        "iteration_bound": iteration_bound(eps),
        "f_mass": out.f_mass,
        "residual_mass": out.residual_mass,
        "s_sup": out.s_sup,
        "s_sup_limit": out.iterations as f64 * c_bound_derived().sqrt(),
        "log": out.log,
        "checks": checks,
        "pass": pass,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Input(e.to_string()))?;
    text.push('\n');
    match report {
        Some(path) => {
            std::fs::write(path, text).map_err(Error::from)?;
            say(&format!(
                "{} iterations, E(f - g) = {:.6e} of E f = {:.6e}, max S(g) = {:.6}",
                out.iterations, out.residual_mass, out.f_mass, out.s_sup
            ));
            print_checks(&checks);
            say(&format!("report: {}", path.display()));
        }
        None => {
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
        }
    }
    Ok(pass)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Gen {
            kind,
            depth,
            branch_max,
            delta,
            seed,
            out,
            f,
        } => cmd_gen(&kind, depth, branch_max, delta, seed, &out, f.as_deref()),
        Command::Construct {
            tree,
            f,
            method,
            out,
        } => cmd_construct(&tree, &f, &method, &out),
        Command::Verify { certificate, tol } => cmd_verify(&certificate, tol),
        Command::Sweep {
            trials,
            depth,
            branch_max,
            method,
            seed,
            constant,
            no_lemmas,
            report,
        } => cmd_sweep(
            trials,
            depth,
            branch_max,
            method,
            seed,
            constant,
            !no_lemmas,
            report.as_deref(),
        ),
        Command::Iterate {
            tree,
            f,
            eps,
            report,
        } => cmd_iterate(&tree, &f, eps, report.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) | Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

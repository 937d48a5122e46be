//! Tree, function and certificate files.
//!
//! Trees and functions are written by hand with 17 significant digits so that
//! every probability and value round-trips exactly. Function files ending in
//! `.csv` use the `atom,value` layout; anything else is JSON.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certificate::CertificateRecord;
use crate::error::{Error, Result};
use crate::function::LeafFunction;
use crate::tree::{FiltrationTree, RawTree};

/// One `(leaf id, value)` entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomValue {
    pub atom: i64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionFile {
    pub tree: String,
    pub values: Vec<AtomValue>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn tree_to_json(tree: &FiltrationTree) -> String {
    let raw = tree.to_raw();
    let mut s = String::with_capacity(64 * raw.atoms.len() + 32);
    let _ = write!(s, "{{\n  \"depth\": {},\n  \"atoms\": [", raw.depth);
    for (k, a) in raw.atoms.iter().enumerate() {
        let sep = if k == 0 { "\n" } else { ",\n" };
        let parent = a
            .parent
            .map_or_else(|| "null".to_string(), |p| p.to_string());
        let _ = write!(
            s,
            "{sep}    {{\"id\": {}, \"parent\": {parent}, \"prob\": {}}}",
            a.id,
            num(a.prob)
        );
    }
    s.push_str("\n  ]\n}\n");
    s
}

pub fn parse_tree(text: &str) -> Result<FiltrationTree> {
    let raw: RawTree = serde_json::from_str(text)?;
    FiltrationTree::from_raw(&raw)
}

pub fn read_tree(path: &Path) -> Result<FiltrationTree> {
    parse_tree(&fs::read_to_string(path)?)
}

pub fn write_tree(path: &Path, tree: &FiltrationTree) -> Result<()> {
    fs::write(path, tree_to_json(tree))?;
    Ok(())
}

/// Leaf entries of `values` in tree leaf order.
pub fn leaf_entries(tree: &FiltrationTree, values: &[f64]) -> Vec<AtomValue> {
    tree.leaf_ids()
        .zip(values)
        .map(|(atom, &value)| AtomValue { atom, value })
        .collect()
}

/// Arranges `(leaf id, value)` entries in tree leaf order; every leaf exactly once.
pub fn values_from_entries(
    tree: &FiltrationTree,
    entries: &[AtomValue],
    malformed: fn(String) -> Error,
) -> Result<Vec<f64>> {
    let index = tree.leaf_index();
    if entries.len() != index.len() {
        return Err(malformed(format!(
            "{} values given for {} leaves",
            entries.len(),
            index.len()
        )));
    }
    let mut values = vec![0.0; index.len()];
    let mut seen = HashSet::with_capacity(entries.len());
    for e in entries {
        let &i = index
            .get(&e.atom)
            .ok_or_else(|| malformed(format!("atom {} is not a leaf of the tree", e.atom)))?;
        if !seen.insert(e.atom) {
            return Err(malformed(format!("leaf {} listed twice", e.atom)));
        }
        values[i] = e.value;
    }
    Ok(values)
}

pub fn function_to_json(tree_name: &str, f: &LeafFunction<'_>) -> String {
    let entries = leaf_entries(f.tree(), f.values());
    let mut s = String::with_capacity(48 * entries.len() + 64);
    let _ = write!(
        s,
        "{{\n  \"tree\": {},\n  \"values\": [",
        serde_json::Value::String(tree_name.to_string())
    );
    for (k, e) in entries.iter().enumerate() {
        let sep = if k == 0 { "\n" } else { ",\n" };
        let _ = write!(
            s,
            "{sep}    {{\"atom\": {}, \"value\": {}}}",
            e.atom,
            num(e.value)
        );
    }
    s.push_str("\n  ]\n}\n");
    s
}

pub fn function_to_csv(f: &LeafFunction<'_>) -> String {
    let mut s = String::from("atom,value\n");
    for e in leaf_entries(f.tree(), f.values()) {
        let _ = writeln!(s, "{},{}", e.atom, num(e.value));
    }
    s
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn parse_function_json<'t>(tree: &'t FiltrationTree, text: &str) -> Result<LeafFunction<'t>> {
    let file: FunctionFile = serde_json::from_str(text)?;
    let values = values_from_entries(tree, &file.values, Error::MalformedFunction)?;
    LeafFunction::new(tree, values)
}

pub fn parse_function_csv<'t>(tree: &'t FiltrationTree, text: &str) -> Result<LeafFunction<'t>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "atom" || &headers[1] != "value" {
        return Err(Error::MalformedFunction(
            "csv header must be exactly \"atom,value\"".into(),
        ));
    }
    let mut entries = Vec::new();
    for row in reader.deserialize() {
        entries.push(row?);
    }
    let values = values_from_entries(tree, &entries, Error::MalformedFunction)?;
    LeafFunction::new(tree, values)
}

pub fn read_function<'t>(tree: &'t FiltrationTree, path: &Path) -> Result<LeafFunction<'t>> {
    let text = fs::read_to_string(path)?;
    if is_csv(path) {
        parse_function_csv(tree, &text)
    } else {
        parse_function_json(tree, &text)
    }
}

pub fn write_function(path: &Path, tree_name: &str, f: &LeafFunction<'_>) -> Result<()> {
    let text = if is_csv(path) {
        function_to_csv(f)
    } else {
        function_to_json(tree_name, f)
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn read_certificate(path: &Path) -> Result<CertificateRecord> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_certificate(path: &Path, record: &CertificateRecord) -> Result<()> {
    let mut text = serde_json::to_string_pretty(record)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

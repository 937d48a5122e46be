#![allow(dead_code)]

pub mod oracle;

use sl_lab::{FiltrationTree, RawAtom, RawTree};

/// Two leaves of mass 1/2 under a root.
pub fn t2() -> FiltrationTree {
    sl_lab::validate_tree(&RawTree {
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

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

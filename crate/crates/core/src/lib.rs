//! Multipliers that push bounded functions on finite filtrations into the
//! spaces where the martingale square function (or its conditional version)
//! is bounded, together with checkers that certify each construction.

pub mod certificate;
pub mod corpus;
pub mod error;
pub mod function;
pub mod io;
pub mod multiplier;
pub mod sweep;
pub mod tolerance;
pub mod tree;

pub use certificate::{CertificateRecord, VerifyTolerance};
pub use error::{Error, Result};
pub use function::{LeafFunction, LevelFunction, Martingale};
pub use multiplier::iterate::{iterated_correction, iteration_bound, IteratedCorrection};
pub use multiplier::sigma::{construct_multiplier_sigma, SigmaCertificate};
pub use multiplier::square::{c_bound_derived, construct_multiplier_s, SCertificate};
pub use multiplier::{Certificate, Check, MethodRegistry, MultiplierMethod};
pub use tree::{validate_tree, FiltrationTree, RawAtom, RawTree};

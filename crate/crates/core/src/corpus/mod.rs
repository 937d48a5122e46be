//! Input generators and stand-alone checkers for the auxiliary inequalities.

pub mod generators;
pub mod lemmas;
pub mod weights;

pub use generators::{
    gen_bounded_walk_f, gen_dyadic, gen_random_f, gen_random_tree, gen_walk_spine, Generated,
    Generator, GeneratorRegistry, GeneratorSpec,
};
pub use lemmas::{
    check_exp_difference_lemma, check_square_lemma, verify_scalar_bounds, ScalarBound,
    ScalarBoundsReport,
};
pub use weights::ap_characteristic;

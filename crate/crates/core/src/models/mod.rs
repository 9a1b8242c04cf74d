//! Closed-form scenarios: constant curvature, Hopf fibrations, submanifolds,
//! and the fiber-dimension bounds evaluated on them.

pub mod bounds;
pub mod random;
pub mod submanifold;
pub mod submersion;

use crate::error::{Error, Result};
use crate::system::JacobiSystem;

pub use bounds::{
    evaluate_dimension_bound, index_chain, reduce_model, rederive_constant, ConstantCheck, Reduction, Theorem,
};
pub use random::{
    random_lagrangian_frame, random_lagrangian_pair, random_suite, random_system, random_system_above, seeded_system,
    tight_lytchak_example, trial_seed, SuiteKind, SuiteReport, TrialError,
};
pub use submanifold::{focal_count_check, submanifold_lagrangian};
pub use submersion::{
    holonomy_subspace, hopf_model, projectable_lift, submersion_lagrangian, ModelConstants, SubmersionModel,
};

/// Names accepted by [`model_by_name`].
pub const MODEL_NAMES: [&str; 3] = ["s3_s2", "s7_s4", "s15_s8"];

/// `R(t) = delta I` on `R^m`.
pub fn constant_curvature_system(delta: f64, m: usize) -> Result<JacobiSystem> {
    if m == 0 {
        return Err(Error::input("dimension must be at least 1"));
    }
    JacobiSystem::constant(delta, m)
}

pub fn model_by_name(name: &str) -> Result<SubmersionModel> {
    if MODEL_NAMES.contains(&name) {
        hopf_model(name)
    } else {
        Err(Error::input(format!(
            "unknown model '{name}' (known: {})",
            MODEL_NAMES.join(", ")
        )))
    }
}

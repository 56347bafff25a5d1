//! Failure probability of a wall above a shield tunnel, its update by
//! settlement measurements, and the search for the most informative
//! monitoring location.

pub mod building;
pub mod cli;
pub mod error;
pub mod ground;
pub mod prob;
pub mod scenario;
pub mod soi;
pub mod subset;
pub mod surrogate;
pub mod updating;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/random-variables.md")]
    mod random_variables {}
    #[doc = include_str!("../../../book/src/ground.md")]
    mod ground {}
    #[doc = include_str!("../../../book/src/building.md")]
    mod building {}
    #[doc = include_str!("../../../book/src/subset-simulation.md")]
    mod subset_simulation {}
    #[doc = include_str!("../../../book/src/updating.md")]
    mod updating {}
    #[doc = include_str!("../../../book/src/soi.md")]
    mod soi {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}

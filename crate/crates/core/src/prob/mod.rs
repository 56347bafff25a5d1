//! Marginal distributions, the case-study random model, and seeded streams.

pub mod distribution;
pub mod model;
pub mod normal;
pub mod rng;

pub use distribution::{Direction, DistributionKind, Evaluation, RandomVariable};
pub use model::{index, RandomModel, Samples, CASE_STUDY_NAMES};
pub use rng::{derive_seed, stream, StreamRng};

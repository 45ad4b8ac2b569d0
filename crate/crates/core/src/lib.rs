//! Coded parallel computing for half-duplex wireless MapReduce: scheme
//! construction, XOR shuffle coding, precoder simulation, delivery-time
//! analytics and parameter optimization.

pub mod analytics;
pub mod bounds;
pub mod channel;
pub mod codec;
pub mod dump;
pub mod envelope;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod placement;
pub mod rational;
pub mod sweep;
pub mod verify;

pub use error::{Constraint, Error, Result};
pub use model::{
    binom, enum_partitions, enum_subsets, validate_config, validate_shape, NodeSet, Partition, ShuffleConfig,
    SystemParams,
};
pub use rational::Rational;

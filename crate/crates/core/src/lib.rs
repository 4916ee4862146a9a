//! Verifiable machine unlearning: fixed-point training, Poseidon commitments,
//! arithmetic circuits for the update relations, and the server/user protocol.

pub mod arith;
pub mod circuits;
pub mod field;
pub mod game;
pub mod fixed;
pub mod hashing;
pub mod proofsys;
pub mod protocol;
pub mod sigmoid;
pub mod training;

pub use field::FieldElement;
pub use fixed::{FixedPoint, Scalar, ScaleConfig};
pub use hashing::{DataPoint, HashDigest, HashedSet};
pub use training::{Dataset, ModelKind, ModelParams, TrainConfig};

/// Model parameters in the committed fixed-point encoding.
pub type FixedModel = ModelParams<FixedPoint>;
/// Float reference model.
pub type FloatModel = ModelParams<f64>;
/// Exact rational model, used as an oracle.
pub type RationalModel = ModelParams<num_rational::BigRational>;
pub type FixedTrainConfig = TrainConfig<FixedPoint>;
pub type FloatTrainConfig = TrainConfig<f64>;

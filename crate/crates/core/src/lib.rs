//! Referee, strategies, quantum oracle and martingale bounds for the
//! sequential randomized CHSH experiment.
//!
//! The math modules ([`chsh`], [`bounds`]) are generic over the scalar type;
//! the aliases below fix them to `f64` (or exact rationals) for everyday use.

pub mod bounds;
pub mod chsh;
pub mod net;
pub mod quantum;
pub mod referee;
pub mod rng;
pub mod scalar;
pub mod strategies;

pub use scalar::{Rational, Real, Scalar};

pub type AngleConfig = chsh::AngleConfig<f64>;
pub type JointBitDistribution = chsh::JointBitDistribution<f64>;
pub type ExactJointDistribution = chsh::JointBitDistribution<Rational>;
pub type ProtocolDesign = bounds::ProtocolDesign<f64>;
pub type LogProbability = bounds::LogProbability<f64>;

pub use chsh::{Bit, CountMatrix, Setting, Side, TrialRecord};
pub use quantum::{CorrelationSense, QuantumModel};
pub use referee::{ProtocolMode, StatisticTrace, Verdict, Winner};

//! Expectation-value estimation on exactly simulable registers.
//!
//! Operator averaging, single-step phase estimation at linear and cubic
//! order, readout-noise mitigation, advantage conditions and Trotter cost
//! bounds. Every routine is generic over the scalar type; the aliases below
//! fix it to `f64` (and `f32` where single precision is useful).

pub mod conditions;
pub mod error;
pub mod linalg;
pub mod noise;
pub mod oa;
pub mod operators;
pub mod scalar;
pub mod shots;
pub mod sqpe;
pub mod trotter;

pub use conditions::{ConditionInput, RegionMode, TwoLevelFamily};
pub use error::{Error, Result};
pub use linalg::CMatrix;
pub use noise::{MitigatedEstimate, PauliTransferMatrix};
pub use oa::{EstimateReport, OAllocation};
pub use operators::{
    MomentTable, Norms, ObservableExpansion, PauliAxis, PauliString, PauliTerm, PureState, SpectralOracle,
    SpectralProfile,
};
pub use scalar::Real;
pub use shots::{ReadoutNoise, RngStream, ShotBatch, SineSource};
pub use sqpe::{BiasMode, MleEstimate, SqpePlan, TimeStepPair};
pub use trotter::{ControlledCircuit, TrotterPlan, TrotterSource};

pub type Matrix = CMatrix<f64>;
pub type Observable = ObservableExpansion<f64>;
pub type State = PureState<f64>;
pub type Oracle = SpectralOracle<f64>;
pub type Moments = MomentTable<f64>;

pub type Matrix32 = CMatrix<f32>;
pub type Observable32 = ObservableExpansion<f32>;
pub type State32 = PureState<f32>;

pub mod energetics;
pub mod error;
pub mod hilbert;
pub mod models;
pub mod propagator;
pub mod schmidt;
pub mod tolerances;

pub use error::{Error, Result};
pub use hilbert::{BipartiteShape, CMat, CVec, Operator, StateVector, Subsystem};
pub use models::ModelSpec;
pub use propagator::{TimeGrid, Trajectory};
pub use schmidt::{FrameSeries, GaugeConvention, SchmidtFrame};
pub use tolerances::Tolerances;
pub use energetics::{EffectiveHamiltonian, EnergyRecord, GaugeSpec};

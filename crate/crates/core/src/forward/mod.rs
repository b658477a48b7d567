//! Forward modelling: the symmetrized wave operator, operator functions of
//! it, snapshot propagation, and synthesis of the sampled data matrices.

pub mod chebyshev;
mod dataset;
mod operator;
mod propagate;
mod pulse;
mod sensors;
pub mod timedomain;

pub use dataset::{synthesize_dataset, Acquisition, DataSet, NyquistPolicy};
pub use operator::{build_operator, DiscreteOperator, Eigen, SPECTRAL_DIM_CAP};
pub use propagate::{initial_states, propagate_snapshots, PropagationMethod, Snapshots};
pub use pulse::{Pulse, SourceFilter};
pub use sensors::SensorArray;
pub use timedomain::{symmetrize_and_sample, synthesize_measurements, TimeScheme, Traces};

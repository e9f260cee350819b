//! Simulation and functional-inequality diagnostics for distribution dependent
//! stochastic Hamiltonian systems with a degenerate position component.

pub mod coupling;
pub mod error;
pub mod harnack;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod moduli;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod wellposed;

pub use coupling::{ControlEval, CoupledBundle, EntropyCost};
pub use error::{Error, Result};
pub use linalg::Mat;
pub use metrics::{CostSpec, EmpiricalMeasure, SplitState, TransportPlan};
pub use model::{DriftSpec, HamiltonianModel, MeasureSummary, SigmaSpec};
pub use moduli::{DiniModulus, ModulusFamily, ValidationReport};
pub use rng::{Purpose, RngPolicy};
pub use simulate::{InitialLaw, MeasureFlow, PathBundle, TimeGrid};
pub use stats::Estimate;

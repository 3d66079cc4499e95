//! Simulation and Monte Carlo estimation for interacting, trait-structured
//! branching processes through a spinal change of measure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod direct;
pub mod error;
pub mod estimator;
pub mod flow;
pub mod label;
pub mod model;
pub mod population;
pub mod quadrature;
pub mod rng;
pub mod spine;
mod thinning;
pub mod time_fn;
pub mod weight;
pub mod yule;

pub use direct::{simulate_direct, DirectRunConfig, EventRecord, RecordMode, Trajectory};
pub use error::{Result, SpinalError};
pub use flow::{FlowIntegrator, FlowMode};
pub use label::Label;
pub use model::{BranchingModel, ConstantRateModel, OffspringLaw};
pub use population::{Marginal, Population, SpineState, TraitPoint};
pub use spine::{simulate_spine, simulate_spine_from, SpineTrajectory};
pub use time_fn::TimeFn;
pub use weight::{QuadratureWeight, UnitWeight, WeightFunction};

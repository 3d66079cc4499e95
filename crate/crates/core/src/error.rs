use thiserror::Error;

use crate::label::Label;

/// Errors raised by the simulation engines, weight functions and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinalError {
    #[error("flow produced a non-finite trait at t = {time}")]
    NonFiniteTrait { time: f64 },

    #[error("log-weight integrand is not finite at t = {time}")]
    QuadratureNonFinite { time: f64 },

    #[error("total rate {rate} exceeds the declared majorant {bound} at t = {time}")]
    MajorantViolated { rate: f64, bound: f64, time: f64 },

    #[error("rate majorant is not finite ({bound}) on the window starting at t = {time}")]
    MajorantNonFinite { bound: f64, time: f64 },

    #[error("more than {cap} events before t = {time}")]
    EventCapExceeded { cap: usize, time: f64 },

    #[error("normalizer for {n} children is not finite ({value})")]
    NormalizerNonFinite { n: usize, value: f64 },

    #[error("rejection sampler gave up after {cap} attempts")]
    RejectionStall { cap: usize },

    #[error("bias ratio {ratio} exceeds the declared bound {bound}")]
    BiasBoundViolated { ratio: f64, bound: f64 },

    #[error("invalid fraction-law moments: {0}")]
    InvalidMoments(String),

    #[error("operation needs a trajectory recorded in full mode")]
    RequiresFullTrajectory,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unknown label {0}")]
    UnknownLabel(Label),

    #[error("functional must be non-negative, got {0}")]
    NegativeFunctional(f64),

    #[error("invalid offspring law: {0}")]
    InvalidOffspringLaw(String),

    #[error("unsupported offspring kernel: {0}")]
    UnsupportedKernel(String),

    #[error("spine label {0} is not a member of the population")]
    SpineNotInPopulation(Label),

    #[error("trait outside the model domain at t = {time}")]
    DomainViolation { time: f64 },

    #[error("mass conservation violated at t = {time}: children {children} > parent {parent}")]
    MassNotConserved { time: f64, parent: f64, children: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, SpinalError>;

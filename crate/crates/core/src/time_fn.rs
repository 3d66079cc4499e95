//! Deterministic time-dependent coefficients `t ↦ c(t)`.

use std::fmt;
use std::sync::Arc;

use crate::quadrature::simpson;

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;
type WindowFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// User-supplied coefficient with its derivative and a supremum over windows.
pub struct CustomTimeFn {
    pub value: Box<ScalarFn>,
    pub derivative: Box<ScalarFn>,
    /// `sup_{s ∈ [t0, t1]} c(s)`; used for thinning majorants.
    pub sup: Box<WindowFn>,
}

#[derive(Clone)]
pub enum TimeFn {
    Constant(f64),
    /// `intercept + slope * t`.
    Linear { intercept: f64, slope: f64 },
    Custom(Arc<CustomTimeFn>),
}

impl TimeFn {
    pub fn constant(c: f64) -> Self {
        TimeFn::Constant(c)
    }

    pub fn linear(intercept: f64, slope: f64) -> Self {
        TimeFn::Linear { intercept, slope }
    }

    pub fn custom<V, D, S>(value: V, derivative: D, sup: S) -> Self
    where
        V: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        TimeFn::Custom(Arc::new(CustomTimeFn {
            value: Box::new(value),
            derivative: Box::new(derivative),
            sup: Box::new(sup),
        }))
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => *c,
            TimeFn::Linear { intercept, slope } => intercept + slope * t,
            TimeFn::Custom(f) => (f.value)(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(_) => 0.0,
            TimeFn::Linear { slope, .. } => *slope,
            TimeFn::Custom(f) => (f.derivative)(t),
        }
    }

    pub fn sup(&self, t0: f64, t1: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => *c,
            TimeFn::Linear { .. } => self.value(t0).max(self.value(t1)),
            TimeFn::Custom(f) => (f.sup)(t0, t1),
        }
    }

    /// `∫_{t0}^{t1} c(s) ds`; composite Simpson for custom coefficients.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => c * (t1 - t0),
            TimeFn::Linear { intercept, slope } => {
                intercept * (t1 - t0) + 0.5 * slope * (t1 * t1 - t0 * t0)
            }
            TimeFn::Custom(f) => simpson(|s| (f.value)(s), t0, t1, 1e-3),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            TimeFn::Constant(c) => Some(*c),
            TimeFn::Linear { intercept, slope } if *slope == 0.0 => Some(*intercept),
            _ => None,
        }
    }
}

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFn::Constant(c) => write!(f, "Constant({c})"),
            TimeFn::Linear { intercept, slope } => write!(f, "Linear({intercept} + {slope} t)"),
            TimeFn::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl From<f64> for TimeFn {
    fn from(c: f64) -> Self {
        TimeFn::Constant(c)
    }
}

//! The Yule model with competition: individuals carry a mass that grows
//! deterministically, divide proportionally to their mass and lose mass at a
//! rate set by the population size.

pub mod fast;
pub mod model;
pub mod params;
pub mod weight;

pub use fast::{
    fast_summaries, labels, reconstruct_traits, simulate_fast, summarize, tree, FastSimOutput, FastSpineSummary,
    TraitTable,
};
pub use model::{yule_model, YuleModel};
pub use params::{BetaLaw, FractionLaw, YuleParams};
pub use weight::{yule_weight, YuleWeight};

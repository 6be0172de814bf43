//! Seasonal simulator of a national durum-wheat production system.
//!
//! The pipeline couples four parts, season by season:
//!
//! 1. [`population`]: survey microdata is clustered into production-system
//!    types and scaled up into a synthetic national farm population.
//! 2. [`agronomy`]: each farm turns a wheat price into a target yield and
//!    input plan (closed-form or coordinate-ascent profit maximization for
//!    large farms, adaptive repetition for small ones), then realizes actual
//!    yields under idiosyncratic shocks.
//! 3. [`market`]: regional producers and buyers clear wheat in market
//!    sessions; equilibrium prices come from aggregated linear supply and
//!    demand curves with buyer-borne transport costs.
//! 4. [`lca`]: realized input use becomes a physical inventory, then
//!    midpoint and endpoint impact indicators via linear characterization.
//!
//! The [`orchestrator`] runs the feedback loop (prices in, decisions,
//! realization, impacts, national production out, market update) under
//! configurable policy schemes, with a coordinator/worker execution contract
//! that is bit-reproducible for any worker count.

// Validation guards use negated comparisons (`!(x > 0.0)`) so NaN fails the
// check along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agronomy;
pub mod config;
pub mod error;
pub mod lca;
pub mod market;
pub mod orchestrator;
pub mod policy;
pub mod population;
pub mod rng;

pub use agronomy::{AgronomyParams, Decision, Farm, Outcome, StressFactor, StressKind};
pub use config::{ScenarioConfig, WorldConfig};
pub use error::{Error, Result};
pub use lca::{CharacterizationMatrix, ImpactResult, Inventory};
pub use market::{Deal, Market, Region, RoundResult, WorldState};
pub use orchestrator::{run_scenario, SeasonResult};
pub use policy::{PolicyKind, PolicyScheme};
pub use population::{ClusterSpec, FarmRecord, SyntheticPopulation};

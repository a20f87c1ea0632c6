//! Nutrition-constrained grocery bundle recommendation.
//!
//! Pipeline: [`catalog`] data and synthetic generation, [`textenc`] text
//! embeddings, [`kgraph`] semantic graph, [`neural`] message passing and
//! ranking loss, [`thermo`] soft-basket regularizer and training,
//! [`physio`] personal targets, [`annealer`] bundle search, [`evalbench`]
//! ablations and metrics, [`recommend`] single-profile inference.

pub mod annealer;
pub mod catalog;
pub mod error;
pub mod evalbench;
pub mod kgraph;
pub mod neural;
pub mod physio;
pub mod recommend;
pub mod textenc;
pub mod thermo;

pub use annealer::{BundleState, EnergyBreakdown, OptConfig, PoolConfig, QuantityDomain};
pub use catalog::{
    Activity, Dataset, Goal, NutrientVector, Product, PurchaseRecord, ReferenceFood, Sex,
    UserProfile,
};
pub use error::{Error, Result};
pub use evalbench::{AblationId, BenchConfig, MeanStd, RunReport};
pub use kgraph::{GraphConfig, SemanticGraph};
pub use neural::{Checkpoint, Embeddings, ModelConfig, ModelParams};
pub use physio::{PhysioParams, PhysioTargets};
pub use recommend::{Artifacts, RecommendRequest, RecommendResponse, ServiceDefaults};
pub use textenc::{EmbeddingVector, EncoderConfig};
pub use thermo::{ThermoTargets, TrainConfig};

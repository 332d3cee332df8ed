//! Model selection over mixture weights: cover selection, the boosted
//! ensemble, the min-max game and the excess-bound diagnostic.

mod boost;
mod diag;
mod ensemble;
mod minmax;
mod select;

pub use boost::{lmsa_boost, BoostConfig, BoostReport};
pub use diag::{excess_bound_diag, ExcessBoundDiag, PopulationProxy};
pub use ensemble::EnsembleHypothesis;
pub use minmax::{lmsa_minmax, MinmaxConfig, MinmaxIterate, MinmaxState};
pub use select::{lmsa_select, train_cover, CoverPoint, LmsaReport};

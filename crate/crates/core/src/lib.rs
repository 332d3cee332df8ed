//! Multiple-source domain adaptation with limited labeled target data.
//!
//! Given `p` labeled source samples and a small labeled target sample, the
//! crate learns a hypothesis for the target by searching over mixture
//! weights `lambda` of the sources:
//!
//! * [`lmsa::lmsa_select`] trains one model per point of a simplex cover and
//!   keeps the one with the smallest target loss;
//! * [`lmsa::lmsa_boost`] grows a convex ensemble of those models by
//!   randomized coordinate descent;
//! * [`lmsa::lmsa_minmax`] solves a Lagrangian game over the whole simplex.
//!
//! [`baselines`], [`discrepancy`], [`lowerbound`] and [`synth`] provide the
//! comparison methods, discrepancy estimation, the lower-bound simulator and
//! synthetic data generators.

pub mod baselines;
pub mod data;
pub mod discrepancy;
pub mod erm;
pub mod error;
pub mod hypothesis;
pub mod lmsa;
pub mod loss;
pub mod lowerbound;
pub mod simplex;
pub mod synth;

pub(crate) mod rng;

pub use data::{Dataset, DomainCollection, Label, LabeledExample, Task, WeightedView};
pub use erm::{train_dataset, train_on_mixture, train_weighted, MixtureTrainer, TrainConfig};
pub use error::{MsaError, Result};
pub use hypothesis::{Hypothesis, Prediction};
pub use loss::{empirical_loss, example_loss, LossKind, LossSpec};
pub use simplex::{make_cover, mix_weights, skewness, MixtureWeight, SimplexCover};

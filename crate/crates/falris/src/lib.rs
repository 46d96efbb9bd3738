//! Reliability modelling for multicomponent systems.
//!
//! The centrepiece is a three-stage estimator of the probability that a
//! system is operative given its component states: maximum-likelihood factor
//! analysis compresses the (correlated) component states to a few scores,
//! kernel-weighted local logistic regression estimates reliability in score
//! space, and an exact least-squares isotonic projection restores coherence —
//! better component states can never yield a lower predicted reliability.
//!
//! Around the estimator the crate ships a structure-function simulator for
//! benchmark systems, KNN / random-forest / MLP baselines, evaluation
//! metrics, a replication study harness, and sensor-CSV ingestion.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod factor;
pub mod ingest;
pub mod isotonic;
pub mod loclogit;
pub mod metrics;
pub mod pipeline;
pub mod simulate;
pub mod study;

pub use error::{Error, ErrorKind, Result};

//! Numerical laboratory for warped cones over measure-preserving group
//! actions: nets of the base space, level-set graphs approximating the warped
//! metric, spectral gaps of the averaging operator, and distortion bounds for
//! embeddings of level sets.

// `!(x > 0.0)` is how argument checks reject NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[macro_use]
pub mod par;

pub mod action;
pub mod config;
pub mod distortion;
pub mod error;
pub mod experiments;
pub mod net;
pub mod plot;
pub mod rng;
pub mod space;
pub mod spectral;
pub mod stats;
pub mod warped;

pub use action::{GroupAction, Transform, Word};
pub use error::{Error, Result};
pub use net::{build_net, verify_net, voronoi_weights, Net, NetOptions};
pub use space::{CompactSpace, Point, SpaceKind};
pub use spectral::{build_markov, kappa_lower_bound, mean_zero_norm, MarkovOperator, SpectralGapReport};
pub use warped::{FiniteMetric, PairMeasure, WarpedLevelGraph};
pub use distortion::{audit_embedding, bourgain_embed, embedding_distortion, paper_lower_bound, AuditContext, AuditReport, DistortionReport, Embedding};

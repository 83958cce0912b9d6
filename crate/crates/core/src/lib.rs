//! Unsupervised quality estimation from per-step output distributions.
//!
//! BoostedProb scores a generated token by the total mass of the dominant
//! cluster it belongs to instead of its own probability, so tokens that share
//! mass with other valid options are not penalized. The crate covers corpus
//! ingestion ([`prob`]), cluster finding ([`cluster`]), token and sequence
//! scores ([`scoring`]), evaluation and sweeps ([`eval`]) and a synthetic
//! laboratory ([`synthlab`]).

pub mod cluster;
pub mod eval;
pub mod prob;
pub mod scoring;
pub mod synthlab;

pub use cluster::{find_cluster, jump_cut, ClusterFinderConfig, DominantCluster};
pub use prob::{parse_corpus, write_corpus, Chosen, Corpus, Label, SequenceRecord, StepDistribution, TokenProb};
pub use scoring::{score_corpus, Aggregation, Method, MethodConfig, QEResult};

pub mod baselines;
pub mod bundle;
pub mod domain;
pub mod glm;
pub mod opt;
pub mod pipeline;
pub mod error;
pub mod ingest;
pub mod money;
pub mod rng;
pub mod schema;
pub mod sim;
pub mod synth;
pub mod severity;
pub mod triangle;

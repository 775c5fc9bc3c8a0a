//! Test planning and synthesis for OpenMP/MPI code.
//!
//! Stages, in pipeline order: [`analyzer`] → [`kg`] matching → [`recipe`]
//! generation → [`synth`] + [`critique`] loop → [`harness`] → [`metrics`].

pub mod analyzer;
pub mod corpus;
pub mod critique;
pub mod harness;
pub mod kg;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod recipe;
pub mod synth;

pub use analyzer::{analyze_source, AnalysisMetadata, AnalyzerConfig, SourceUnit};
pub use kg::{load_kg, KnowledgeGraph};
pub use metrics::kmeans::{KMeans, KMeans32, KMeans64};

//! Evolutionary optimization of discrete text prompts.
//!
//! A population of candidate instructions is scored against a fixed dev set
//! and evolved with genetic-algorithm or differential-evolution operators.
//! Variation is performed by a language model following fixed meta-prompt
//! templates, or by deterministic token-level simulations when no provider
//! is available. Every run is reproducible from its seed and its completion
//! cache.

pub mod book;
pub mod cli;
pub mod config;
pub mod de;
pub mod error;
pub mod fitness;
pub mod ga;
pub mod ledger;
pub mod metrics;
pub mod operator;
pub mod optimizer;
pub mod prompt;
pub mod runner;
pub mod provider;
pub mod seed;
pub mod selection;
pub mod sim;
pub mod task;
pub mod templates;

pub use config::{EngineKind, OptimizerConfig, RunConfig, TaskConfig};
pub use error::EvoError;
pub use prompt::{best_of, Population, Prompt, PromptId, Score, ScoredPrompt};

//! Pool-based batch active learning for abusive-language classification.
//!
//! A labeled corpus is rebalanced to a target abuse prior, its pool labels
//! are hidden, and query strategies decide which documents to reveal next.
//! Each iteration retrains a classifier and scores it on a held-out test
//! set, yielding learning curves that the [`metrics`] module condenses into
//! passive/active F1 and the label count needed to reach 90% of passive F1.
//!
//! ```no_run
//! use al_harness::{GridConfig, run_grid};
//!
//! let grid = GridConfig::load("configs/grid.toml")?;
//! let report = run_grid(&grid)?;
//! for exp in &report.experiments {
//!     println!("{:?}", exp.row());
//! }
//! # Ok::<(), al_harness::Error>(())
//! ```

pub mod classifier;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod features;
pub mod metrics;
pub mod plugin;
pub mod runner;
pub mod strategies;

pub use classifier::{BuiltinLearner, ClassifierSpec, Learner, Loss, TrainedModel};
pub use corpus::{Document, Label, LabelScheme, RebalancedDataset, Schema};
pub use engine::{run_active_learning, CurvePoint, LearningCurve, PoolState, PreparedData};
pub use error::{Error, Result};
pub use features::{KeywordList, SparseVector, Vocabulary};
pub use metrics::{aggregate_runs, compute_f1_al, compute_n90, RunSummary, N90};
pub use runner::{
    cross_dataset_eval, generate_synthetic_corpus, run_grid, summarize, ExperimentConfig, GridConfig, SyntheticSpec,
};
pub use strategies::{ColdStrategy, QueryStrategy};

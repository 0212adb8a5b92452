//! Online multi-task regression: recursive primal and dual learners coupled
//! through a task similarity graph, single-task and gradient baselines, and
//! a prequential forecasting benchmark.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod contenders;
pub mod error;
pub mod feature_maps;
pub mod learner;
pub mod linalg;
pub mod mt_oslssvr;
pub mod mt_wrls;
pub mod task_graph;
pub mod wrls;

pub use error::{Error, Result};
pub use learner::{Grids, HyperParams, LearnerContext, Method, MethodRegistry, OnlineLearner};
pub use mt_oslssvr::{DualState, KernelDictionary, MtKernel};
pub use mt_wrls::{mt_batch_oracle, MtWrlsModel};
pub use task_graph::{SimilarityMatrix, TaskGraph};
pub use wrls::WrlsState;

//! End-to-end analysis facade.
//!
//! ```no_run
//! use archflow_core::analysis::DataFlowAnalysisBuilder;
//! use archflow_core::constraints::Constraint;
//!
//! let analysis = DataFlowAnalysisBuilder::new()
//!     .model_path("models/online-shop/model.json")
//!     .build()
//!     .unwrap();
//! let sequences = analysis.find_all_sequences().unwrap();
//! let propagated = analysis.evaluate_data_flows(&sequences).unwrap();
//! let geo = Constraint::from_predicate("geo", |node| {
//!     node.has_node_characteristic("ServerLocation", "nonEU")
//!         && node.all_data_flow_variables().iter().any(|v| {
//!             v.has_data_characteristic("DataSensitivity", "Personal")
//!                 && !v.has_data_characteristic("Encryption", "Encrypted")
//!         })
//! });
//! for sequence in &propagated {
//!     let violations = analysis.query_data_flow(sequence, &geo).unwrap();
//!     println!("{violations:?}");
//! }
//! ```

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use indexmap::IndexMap;
use rayon::prelude::*;
use rayon::ThreadPool;
use thiserror::Error;

use crate::adl::{self, ArchitectureModel, LoadError};
use crate::constraints::{self, Constraint, QueryError, QueryFailures, Violation};
use crate::extraction::{self, ActionSequence, ExtractionError, DEFAULT_RECURSION_LIMIT};
use crate::propagation::{self, EvaluationError, PropagatedSequence};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("no model given")]
    MissingModel,
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("thread count must be at least 1")]
    ZeroThreads,
}

enum Source {
    Path(PathBuf),
    Json(String),
    Model(Box<ArchitectureModel>),
}

/// Configures and loads a [`DataFlowAnalysis`].
pub struct DataFlowAnalysisBuilder {
    source: Option<Source>,
    threads: Option<usize>,
    recursion_limit: usize,
}

impl Default for DataFlowAnalysisBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl DataFlowAnalysisBuilder {
    pub fn new() -> Self {
        Self {
            source: None,
            threads: None,
            recursion_limit: DEFAULT_RECURSION_LIMIT,
        }
    }

    pub fn model_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.source = Some(Source::Path(path.into()));
        self
    }

    /// A self-contained serialized model.
    pub fn model_json(mut self, json: impl Into<String>) -> Self {
        self.source = Some(Source::Json(json.into()));
        self
    }

    pub fn model(mut self, model: ArchitectureModel) -> Self {
        self.source = Some(Source::Model(Box::new(model)));
        self
    }

    /// Worker threads for extraction and propagation; 1 runs sequentially.
    /// Defaults to the number of available processors.
    pub fn threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn recursion_limit(mut self, limit: usize) -> Self {
        self.recursion_limit = limit;
        self
    }

    /// Loads and validates the model.
    pub fn build(self) -> Result<DataFlowAnalysis, BuildError> {
        let threads = match self.threads {
            Some(0) => return Err(BuildError::ZeroThreads),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let model = match self.source.ok_or(BuildError::MissingModel)? {
            Source::Path(p) => adl::load_model(p)?,
            Source::Json(s) => ArchitectureModel::from_json_str(&s)?,
            Source::Model(m) => *m,
        };
        Ok(DataFlowAnalysis {
            model,
            threads,
            recursion_limit: self.recursion_limit,
            pool: OnceLock::new(),
            propagations: AtomicUsize::new(0),
        })
    }
}

/// A loaded model plus the analysis steps that run over it.
pub struct DataFlowAnalysis {
    model: ArchitectureModel,
    threads: usize,
    recursion_limit: usize,
    pool: OnceLock<Option<ThreadPool>>,
    propagations: AtomicUsize,
}

impl DataFlowAnalysis {
    pub fn model(&self) -> &ArchitectureModel {
        &self.model
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    fn pool(&self) -> Option<&ThreadPool> {
        self.pool
            .get_or_init(|| {
                (self.threads > 1).then(|| {
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(self.threads)
                        .build()
                        .expect("thread pool")
                })
            })
            .as_ref()
    }

    /// Extracts one sequence per usage scenario.
    pub fn find_all_sequences(&self) -> Result<Vec<ActionSequence>, ExtractionError> {
        let n = self.model.usage_scenarios().len();
        let extract = |i| extraction::extract_scenario(&self.model, i, self.recursion_limit);
        match self.pool() {
            Some(pool) if n > 1 => pool.install(|| (0..n).into_par_iter().map(extract).collect()),
            _ => (0..n).map(extract).collect(),
        }
    }

    /// Propagates labels along every sequence.
    pub fn evaluate_data_flows(
        &self,
        sequences: &[ActionSequence],
    ) -> Result<Vec<PropagatedSequence>, EvaluationError> {
        let pool = if sequences.len() > 1 {
            self.pool()
        } else {
            None
        };
        propagation::evaluate_all_in(&self.model, sequences, pool, Some(&self.propagations))
    }

    pub fn query_data_flow(
        &self,
        propagated: &PropagatedSequence,
        constraint: &Constraint,
    ) -> Result<Vec<Violation>, QueryError> {
        constraints::query(propagated, constraint)
    }

    /// Checks several constraints against one propagation result.
    pub fn query_many(
        &self,
        propagated: &[PropagatedSequence],
        constraints: &[Constraint],
    ) -> Result<IndexMap<String, Vec<Violation>>, QueryFailures> {
        constraints::query_many(propagated, constraints)
    }

    /// Number of sequence propagations this analysis has performed.
    pub fn propagation_count(&self) -> usize {
        self.propagations.load(Ordering::Relaxed)
    }
}

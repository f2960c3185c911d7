//! Query execution: engine configuration, the local pull evaluator, and
//! the partitioned parallel evaluator.

pub mod context;
mod local;
mod parallel;
mod relational;

pub use context::DynamicContext;
pub use local::{ItemIter, LocalCursor, LocalEvaluator};
pub use parallel::{ItemParts, RowParts};
pub use relational::Row;

use std::sync::Arc;

use crate::error::{Error, ErrorCode, Result};
use crate::io::{IoStats, OnBadLine};
use crate::jdm::{Item, NullOrder, Sequence};
use crate::planner::{self, CompiledQuery, ExecutionMode};

/// Engine-level configuration.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Worker threads in the pool.
    pub workers: usize,
    /// Default partition count for sources that don't specify one.
    pub default_partitions: usize,
    /// Where null (and empty) group keys sort.
    pub null_order: NullOrder,
    /// Apply the aggregate-pushdown rewrite after planning.
    pub aggregate_pushdown: bool,
    /// Policy for malformed JSON lines.
    pub on_bad_line: OnBadLine,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        EngineConfig {
            workers,
            default_partitions: workers * 2,
            null_order: NullOrder::Before,
            aggregate_pushdown: true,
            on_bad_line: OnBadLine::Fail,
        }
    }
}

pub(crate) struct EngineCore {
    pub config: EngineConfig,
    pub pool: rayon::ThreadPool,
    pub stats: IoStats,
}

/// The query engine: compiles query text and executes plans either in
/// automatic mode (each iterator runs in its highest assigned mode) or
/// forced-local mode (pure single-threaded pull execution).
pub struct Engine {
    core: Arc<EngineCore>,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Engine> {
        if config.workers == 0 || config.default_partitions == 0 {
            return Err(Error::new(
                ErrorCode::InvalidArgument,
                "workers and partitions must be at least 1",
            ));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .thread_name(|i| format!("query-worker-{i}"))
            .build()
            .map_err(|e| Error::new(ErrorCode::Io, e.to_string()))?;
        Ok(Engine { core: Arc::new(EngineCore { config, pool, stats: IoStats::default() }) })
    }

    pub fn with_defaults() -> Result<Engine> {
        Engine::new(EngineConfig::default())
    }

    pub fn config(&self) -> &EngineConfig {
        &self.core.config
    }

    pub fn stats(&self) -> &IoStats {
        &self.core.stats
    }

    pub fn compile(&self, text: &str) -> Result<CompiledQuery> {
        planner::compile(text, self.core.config.aggregate_pushdown)
    }

    /// Execute in automatic mode: the root iterator is consumed through its
    /// highest execution mode.
    pub fn execute(&self, query: &CompiledQuery) -> Result<Output> {
        let ctx = DynamicContext::empty();
        let output = parallel::eval_root(&self.core, &query.plan, &ctx)?;
        Ok(output)
    }

    /// Execute through the local interface only, on the calling thread.
    pub fn execute_local(&self, query: &CompiledQuery) -> Result<Output> {
        let evaluator = LocalEvaluator::sequential(self.core.clone());
        let items = evaluator.eval_sequence(&query.plan, &DynamicContext::empty())?;
        Ok(Output { partitions: vec![items] })
    }

    /// Compile and execute in one step.
    pub fn run(&self, text: &str) -> Result<Output> {
        let query = self.compile(text)?;
        self.execute(&query)
    }
}

/// A materialized query result, partition structure preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub partitions: Vec<Sequence>,
}

impl Output {
    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.partitions.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.partitions.iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_items(self) -> Vec<Item> {
        self.partitions.into_iter().flatten().collect()
    }

    /// Serialize with the given style, one line per item.
    pub fn serialize(&self, style: crate::io::OutputStyle) -> String {
        let mut out = String::new();
        crate::io::serialize_sequence(self.items(), style, &mut out);
        out
    }
}

pub(crate) fn internal_error(message: impl Into<String>) -> Error {
    Error::new(ErrorCode::InvalidArgument, format!("internal: {}", message.into()))
}

/// `ExecutionMode::Local` view helpers shared by both evaluators.
pub(crate) fn is_partitioned(mode: ExecutionMode) -> bool {
    mode >= ExecutionMode::Partitioned
}

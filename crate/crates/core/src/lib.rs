//! An in-process query engine for large, heterogeneous, nested JSON Lines
//! data sets.
//!
//! Queries compile to a tree of runtime iterators. Each iterator is
//! assigned the highest execution mode it supports — plain local pull
//! execution, a partitioned sequence of items, or a tuple frame with one
//! column per bound variable — and consumers read each child through the
//! child's highest mode, falling back to local materialization wherever
//! needed. FLWOR pipelines over partitioned input run clause-by-clause on
//! a worker pool; everything else runs as ordinary pull iterators.

pub mod error;
pub mod exec;
pub mod io;
pub mod jdm;
pub mod parser;
pub mod planner;

pub use error::{Error, ErrorCode, Result, Span};
pub use exec::{Engine, EngineConfig, Output};
pub use jdm::{Item, NullOrder, Object, Sequence};
pub use planner::CompiledQuery;

//! Schema-driven recommendation engine.
//!
//! A DsDL document ([`dsdl`]) describes a flat table and its prediction
//! targets. From there the engine reads and splits the table ([`table`]),
//! fits type-driven feature transforms ([`features`]), resolves each target
//! to a loss/metric/model binding ([`task`]), searches the model zoo
//! ([`models`]) and runs the whole thing end to end ([`engine`]).

pub mod dsdl;
pub mod engine;
pub mod features;
pub mod hash;
pub mod models;
pub mod table;
pub mod task;

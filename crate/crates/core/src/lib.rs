//! Subject-oriented process modeling toolkit.

pub mod api;
pub mod block;
pub mod check;
pub mod engine;
pub mod explore;
pub mod model;
pub mod notation;
pub mod persistence;
pub mod violation;

#[cfg(feature = "testkit")]
pub mod testkit;

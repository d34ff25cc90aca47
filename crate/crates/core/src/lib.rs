//! Code+data version control for interactive computing sessions.
//!
//! The crate is layered bottom-up: [`kernel`] is a small deterministic cell
//! language, [`model`] holds versions and the consistency rules, [`store`]
//! persists commits, [`graph`], [`diff`] and [`search`] read the store, and
//! [`session`] ties them into the live state machine.

pub mod diff;
pub mod graph;
pub mod kernel;
pub mod model;
pub mod notebook;
pub mod search;
pub mod session;
pub mod store;

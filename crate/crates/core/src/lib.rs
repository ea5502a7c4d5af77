pub mod app;
pub mod cantor;
pub mod catalog;
pub mod cost;
pub mod error;
pub mod expr;
pub mod flow;
pub mod graph;
pub mod grid;
pub mod hamiltonian;
pub mod lyapunov;
pub mod oracle;
pub mod recurrence;
pub mod report;
pub mod scalar;
pub mod symplectic;
pub mod torus;

pub use error::{Error, Result};

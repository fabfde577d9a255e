//! Certifiably optimal cardinality-constrained generalized linear models.
//!
//! The crate solves
//!
//! ```text
//! min_β  f(Xβ, y) + λ₂‖β‖²   s.t.  ‖β‖∞ ≤ M,  ‖β‖₀ ≤ k
//! ```
//!
//! by branch-and-bound. Node bounds come from the perspective relaxation,
//! written as the composite problem `F(Xβ) + 2λ₂ g(β)` and solved by proximal
//! gradient methods whose momentum is restarted whenever the Fenchel duality
//! gap has contracted by a fixed factor. Every reported bound is a dual
//! objective value, so it stays valid however early a solve is stopped.
//!
//! Modules:
//! - [`problem`]: instances, node partitions, the synthetic generator
//! - [`losses`]: squared and logistic losses with conjugates
//! - [`perspective`]: exact evaluation and proximal maps of the regularizer
//! - [`solver`]: primal/dual objectives and the restarted first-order solver
//! - [`bnb`]: incumbent search, branching and certificates
//! - [`oracles`]: slow reference implementations used by the test suites
//! - [`io`]: CSV/JSON instance files

pub mod bnb;
pub mod error;
pub mod io;
pub mod losses;
pub mod oracles;
pub mod perspective;
pub mod problem;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{LossKind, NodeState, ProblemInstance};

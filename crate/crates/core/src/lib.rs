//! Hessian estimation evolution strategies on convex quadratic problems.

pub mod adaptation;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objectives;
pub mod sampling;
pub mod strategies;

pub use error::{Error, Result};
pub use linalg::{RealVector, SquareMatrix};
pub use objectives::{Objective, QuadraticProblem};
pub use sampling::RngStream;
pub use strategies::{Algorithm, Strategy, StrategyState};

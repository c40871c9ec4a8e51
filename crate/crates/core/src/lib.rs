//! Computes the probability that a finite-state Markov chain emits an
//! infinite word accepted by an unambiguous Büchi automaton (UBA).
//!
//! Two interchangeable algorithms produce the per-SCC normaliser that makes
//! the linear system `z = Bz` uniquely solvable:
//!
//! * [`cutfinder`] — the combinatorial algorithm that grows a fibre into a
//!   cut and takes its characteristic vector,
//! * [`pseudocut`] — the linear-algebra algorithm that builds per-letter
//!   bases of the spaces spanned by transfer-operator images of the dominant
//!   eigenvector and solves for a pseudo-cut supported on a co-reachability
//!   set.
//!
//! [`solver::model_check`] runs the full pipeline and can cross-validate the
//! two methods against each other; [`harness`] provides generators and
//! independent oracles.

pub mod automata;
pub mod cutfinder;
pub mod harness;
pub mod markov;
pub mod numerics;
pub mod product;
pub mod pseudocut;
pub mod solver;

mod error;
pub use error::Error;

/// All numeric decision thresholds, kept in one place so the CLI can
/// override them consistently.
#[derive(Clone, Debug)]
pub struct Tolerances {
    /// Per-row absolute tolerance for stochasticity / distribution checks.
    pub stochastic: f64,
    /// Relative rank threshold; scaled by `1 + ‖A‖∞` at each decision.
    pub rank: f64,
    /// Residual bound for eigenvector, normaliser and final-solve checks.
    pub residual: f64,
    /// Minimum admissible component of a dominant eigenvector after
    /// sup-norm normalisation.
    pub positivity: f64,
    /// Relative linear-independence threshold in the basis algorithm.
    pub independence: f64,
    /// Pairwise orthogonality tolerance for Gram-Schmidt inputs.
    pub orthogonality: f64,
    /// Allowed deviation between the two normaliser methods.
    pub agreement: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            stochastic: 1e-9,
            rank: 1e-9,
            residual: 1e-8,
            positivity: 1e-12,
            independence: 1e-9,
            orthogonality: 1e-10,
            agreement: 1e-8,
        }
    }
}

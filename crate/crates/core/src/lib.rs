//! Open dynamical systems as generalized lenses.
//!
//! Three doctrines are provided: finite deterministic Moore machines
//! ([`det`]), finite Markov systems with exact rational transition
//! probabilities ([`stoch`]), and parameterised ODE systems on Euclidean
//! state spaces ([`ode`]). Systems are wired together by composing them
//! with lenses and combined in parallel by tensor products.
//!
//! Structures that are represented by a system exposing its entire state
//! (steady states, periodic orbits) are computed as families over finite
//! hom-sets ([`finset::Family`]); wiring acts on them by span composition,
//! and [`det::check_matrix_theorem`] verifies that the two routes agree.

pub mod det;
pub mod expr;
pub mod finset;
pub mod gen;
pub mod ode;
pub mod project;
pub mod stoch;

pub use det::{DetChart, DetInterface, DetLens, DetSquare, DetSystem};
pub use expr::Expr;
pub use finset::{FinMap, FinSet, Family, IsoOutcome, PairMap, SetError, Span};
pub use ode::{OdeLens, OdeSystem, ParamSignal, Trajectory};
pub use stoch::{Dist, StochSystem};
pub use project::{load_project, Lens, ProjectError, ProjectFile, System};

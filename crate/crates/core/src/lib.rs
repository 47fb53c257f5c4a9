//! Statistical model checking for stochastic, component-based
//! systems of systems.
//!
//! The pipeline: a `.sosd` descriptor is parsed and built into a
//! [`model::System`] plus guarded commands ([`descriptor`]); the
//! [`sim`] kernel produces traces on demand; contracts written in the
//! quantified pattern language ([`gcsl`]) are translated to bounded LTL and
//! compiled into property programs for the monitor VM ([`bltl`]); the
//! [`smc`] kernel drives traces and monitors until a Monte Carlo, Chernoff
//! or SPRT analysis has its answer.

pub mod bltl;
pub mod descriptor;
pub mod gcsl;
pub mod model;
pub mod schema;
pub mod sim;
pub mod smc;
pub mod stochastic;
pub mod syntax;

//! Robust controller synthesis for stochastic systems against syntactically
//! co-safe LTL specifications.

pub mod gauss;
pub mod lti;
pub mod mdp;
pub mod robust_dp;
pub mod scltl;
pub mod sim;
pub mod testkit;

//! Firework and reverse-firework rumor processes in random environment.
//!
//! The crate covers three things: distributions for station counts, radii and
//! offspring (`dist`); analytic survival/extinction classifiers on the line and
//! on Galton-Watson trees (`criteria_line`, `criteria_tree`); and exact
//! simulators with a Monte Carlo harness to cross-check them (`sim_line`,
//! `sim_tree`, `estimator`).

pub mod criteria_line;
pub mod criteria_tree;
pub mod dist;
pub mod error;
pub mod estimator;
pub mod num;
pub mod rng;
pub mod series;
pub mod sim_line;
pub mod sim_tree;
pub mod verdict;

pub use error::{Error, Result};
pub use verdict::{Outcome, Verdict};

//! Variance-aware optimism for linear bandits and linear mixture MDPs.
//!
//! - [`regression`]: incremental weighted ridge regression and confidence radii.
//! - [`concentration`]: Monte Carlo coverage checks of the self-normalized bounds.
//! - [`bandit`]: Weighted OFUL and OFUL on finite decision sets.
//! - [`envs`]: finite linear mixture MDPs, builders and exact planners.
//! - [`episodic`]: UCRL-VTR+ and the UCRL-VTR baseline.
//! - [`discounted`]: UCLK+ with extended value iteration.
//! - [`harness`]: configuration, seeded parallel runs and CSV output.

pub mod bandit;
pub mod concentration;
pub mod discounted;
pub mod envs;
pub mod episodic;
pub mod harness;
pub mod regression;
pub mod rng;
pub mod trace;

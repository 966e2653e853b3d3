pub mod channel;
pub mod error;
pub mod plan;
pub mod scenario;
pub mod solver;
pub mod utility;
pub mod subproblems;
pub mod planner;
pub mod baselines;
pub mod sim;
pub mod config;
pub mod output;

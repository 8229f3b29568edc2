//! A laboratory for stochastic non-atomic congestion games: finite-agent
//! environments (packet routing, multi-stage traffic routing, taxi fleet
//! dispatch), a central variance-minimizing learner (VMQ) with IL/MFQ/NFSP
//! baselines, and an exact equilibrium oracle for the single-stage game.

pub mod env;
pub mod game;
pub mod harness;
pub mod learners;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod routing;

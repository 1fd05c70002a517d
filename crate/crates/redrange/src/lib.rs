//! redrange: a self-contained training range for autonomous red-team agents.
//!
//! The crate models a small enterprise network as an attack-knowledge game:
//! a command-and-control server holds implants ("hands") on compromised
//! hosts, every action is broadcast through all hands at once, and progress
//! is information gathered into a fact store. On top of the ground-truth
//! world it provides observation encoders, a trace-driven finite-state
//! surrogate simulator, small reinforcement-learning agents, a combined
//! world/surrogate training loop, and a network-variation evaluation suite.

pub mod agents;
pub mod embeddings;
pub mod env;
pub mod generalization;
pub mod params;
pub mod scenario;
pub mod seeds;
pub mod simgen;
pub mod unified_loop;
pub mod world;

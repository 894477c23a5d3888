//! Discrete-event simulator and real-time emulation cradle for MEC systems
//! running over an abstracted 4G/5G access network.

pub mod compute;
pub mod engine;
pub mod ids;
pub mod lifecycle;
pub mod queue;
pub mod ran;
pub mod rng;
pub mod scenario;
pub mod services;
pub mod world;

//! Reinforcement-learning local navigation for differential-drive robots.
//!
//! The crate is organised bottom-up:
//!
//! * [`world`]: procedural 2D arenas, analytic ray casting, clearance queries.
//! * [`robot`]: differential-drive kinematics and robot profiles.
//! * [`env`]: the navigation task (observation, reward, resets) and its
//!   lock-step vectorized form.
//! * [`nn`]: actor-critic networks (MLP and recurrent) with hand-written
//!   backward passes and an Adam optimizer.
//! * [`ppo`]: clipped-surrogate PPO with GAE, curriculum scheduling and the
//!   training driver.
//! * [`policy_io`]: versioned policy export/import and deterministic inference.
//! * [`baseline`]: occupancy grid, A* and a dynamic-window local controller.
//! * [`eval`]: repeated trials, aggregate metrics and trajectory logs.
//! * [`bridge`]: line-delimited JSON runtime that turns scan/odom/goal
//!   messages into velocity commands.
//! * [`config`]: task and training configuration files.

pub mod baseline;
pub mod bridge;
pub mod config;
pub mod env;
mod error;
pub mod eval;
pub mod nn;
pub mod policy_io;
pub mod ppo;
pub mod robot;
pub mod world;

pub use error::{Error, Result};

/// Seeded random number generator used everywhere randomness is consumed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

//! Counter-based random streams.
//!
//! Every Monte Carlo trial (or random node placement) draws from its own
//! ChaCha8 stream: the 64-bit experiment seed is expanded into a ChaCha key
//! with `SeedableRng::seed_from_u64`, and the trial index selects the stream
//! via `set_stream`. A trial's draws therefore depend only on
//! `(seed, trial)`, never on how trials are split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

pub fn trial_rng(seed: u64, stream: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

//! Seeding scheme.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit base seed
//! (expanded with `SeedableRng::seed_from_u64`) and selected by a 64-bit
//! stream number (`ChaCha8Rng::set_stream`). Replica, seed or episode `i`
//! of a run with base seed `s` always draws from stream `(s, i)`, so streams
//! are independent and a run does not depend on how work is scheduled.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

pub fn stream_rng(base_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(stream);
    rng
}

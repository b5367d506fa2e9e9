//! Counter-derived random substreams.
//!
//! Every consumer gets its own ChaCha stream keyed by the master seed, a
//! domain tag and a sub-key; the stream number is the trial index. Trials can
//! therefore run in any order, on any number of threads, with identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags separating independent uses of one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Collection = 1,
    Evaluation = 2,
    Calibration = 3,
    Scratch = 4,
}

/// Returns the substream for `(master, domain, key, index)`.
pub fn substream(master: u64, domain: Domain, key: u64, index: u64) -> StreamRng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&key.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}

/// A single stream seeded from one integer, for ad hoc use.
pub fn seeded(seed: u64) -> StreamRng {
    substream(seed, Domain::Scratch, 0, 0)
}

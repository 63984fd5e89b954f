//! Named, seeded random streams.
//!
//! All randomness in a run descends from one `u64` seed. Each consumer takes
//! its own ChaCha stream keyed by `(seed, purpose)` and indexed by a counter,
//! so episodes, diseases or epochs can be drawn in any order (or in
//! parallel) and still produce identical values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Datagen,
    Split,
    Rollout,
    Dropout,
    Replay,
    Init,
    Eval,
    Svm,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Datagen => 0x6461_7461_6765_6e00,
            Stream::Split => 0x7370_6c69_7400_0000,
            Stream::Rollout => 0x726f_6c6c_6f75_7400,
            Stream::Dropout => 0x6472_6f70_6f75_7400,
            Stream::Replay => 0x7265_706c_6179_0000,
            Stream::Init => 0x696e_6974_0000_0000,
            Stream::Eval => 0x6576_616c_0000_0000,
            Stream::Svm => 0x7376_6d00_0000_0000,
        }
    }
}

/// Random stream `index` of `purpose` under `seed`.
pub fn stream(seed: u64, purpose: Stream, index: u64) -> Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.tag().to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

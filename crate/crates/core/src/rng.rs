//! Counter-based random streams.
//!
//! Every random decision in training is drawn from a ChaCha stream whose key is
//! the tuple `(seed, purpose, epoch, index)`. A sample's augmentation and dropout
//! mask therefore depend only on which sample it is and in which epoch, never on
//! thread scheduling or on the order samples are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    Augment = 3,
    Dropout = 4,
    Test = 0xff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub epoch: u64,
    pub index: u64,
}

impl StreamKey {
    pub fn new(seed: u64, epoch: u64, index: u64) -> Self {
        StreamKey { seed, epoch, index }
    }

    pub fn rng(&self, purpose: Purpose) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
        key[16..24].copy_from_slice(&self.epoch.to_le_bytes());
        key[24..].copy_from_slice(&self.index.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator type behind every stream: ChaCha8 is counter based, so a
/// `(seed, stream, word position)` triple addresses any point of any stream.
pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Fresh generator positioned at the start of the stream.
    pub fn rng(&self) -> StreamRng {
        let mut r = ChaCha8Rng::seed_from_u64(self.master_seed);
        r.set_stream(self.stream_id);
        r
    }

    /// Generator positioned at 32-bit word `counter` of the stream.
    pub fn rng_at(&self, counter: u128) -> StreamRng {
        let mut r = self.rng();
        r.set_word_pos(counter);
        r
    }

    /// Deterministic child stream, e.g. one per replica or per purpose.
    pub fn substream(&self, key: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: splitmix64(
                self.stream_id ^ splitmix64(key.wrapping_add(0x5151_7cc1_b727_220a)),
            ),
        }
    }
}

//! Seed derivation and serializable generator state.
//!
//! Every stochastic stream in a run is derived from the master seed and a
//! path of integers (generation, member, episode, ...), so results never
//! depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{Decoder, Encoder};
use crate::error::Result;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `path` into `seed`, yielding an independent child seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}

/// Stream tags so that e.g. training and evaluation seeds never collide.
pub mod stream {
    pub const TRAIN_EPISODE: u64 = 1;
    pub const EVAL_EPISODE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const AE_INIT: u64 = 4;
    pub const AE_SHUFFLE: u64 = 5;
    pub const SPARSITY: u64 = 6;
    pub const CMAES: u64 = 7;
    pub const DUMP: u64 = 8;
}

pub(crate) fn write_rng<W: std::io::Write>(enc: &mut Encoder<W>, rng: &Rng) -> Result<()> {
    enc.bytes(&rng.get_seed())?;
    enc.u64(rng.get_stream())?;
    enc.u128(rng.get_word_pos())
}

pub(crate) fn read_rng<R: std::io::Read>(dec: &mut Decoder<R>) -> Result<Rng> {
    let seed: [u8; 32] = dec.bytes()?;
    let stream = dec.u64()?;
    let pos = dec.u128()?;
    let mut rng = Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(pos);
    Ok(rng)
}

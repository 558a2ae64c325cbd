//! Seeded 32-bit MurmurHash3 family shared by the sketch, the feature hasher
//! and string-feature ingestion.

use mur3::murmurhash3_x86_32;

/// What a derived hash function is used for. Index and sign functions of the
/// same row get unrelated seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Index = 1,
    Sign = 2,
    Ingest = 3,
    Remap = 4,
}

const DERIVE_SEED: u32 = 0x9747_b28c;

/// Derives the 32-bit seed of one hash function from a 64-bit master seed.
pub fn derive_seed(master: u64, row: u32, purpose: Purpose) -> u32 {
    let mut key = [0u8; 13];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..12].copy_from_slice(&row.to_le_bytes());
    key[12] = purpose as u8;
    murmurhash3_x86_32(&key, DERIVE_SEED)
}

/// MurmurHash3_x86_32 of the 8 little-endian bytes of `feature`, unrolled for
/// the fixed key length.
#[inline]
pub fn hash_feature(feature: u64, seed: u32) -> u32 {
    const C1: u32 = 0xcc9e_2d51;
    const C2: u32 = 0x1b87_3593;
    let mut h = seed;
    for block in [feature as u32, (feature >> 32) as u32] {
        let k = block.wrapping_mul(C1).rotate_left(15).wrapping_mul(C2);
        h ^= k;
        h = h.rotate_left(13).wrapping_mul(5).wrapping_add(0xe654_6b64);
    }
    h ^= 8;
    h ^= h >> 16;
    h = h.wrapping_mul(0x85eb_ca6b);
    h ^= h >> 13;
    h = h.wrapping_mul(0xc2b2_ae35);
    h ^ (h >> 16)
}

#[inline]
pub fn hash_bytes(bytes: &[u8], seed: u32) -> u32 {
    murmurhash3_x86_32(bytes, seed)
}

/// `+1.0` when the low bit of the hash is set, `-1.0` otherwise.
#[inline]
pub fn sign_of(hash: u32) -> f64 {
    if hash & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// SplitMix64 finalizer, used to derive independent per-trial and per-row seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn combine(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b))
}

//! Seed derivation.
//!
//! Every random choice in this crate flows from one 64-bit master seed
//! through [`derive`], a SplitMix64 step keyed by a stream tag. Callers
//! document their tags next to the call site; two call sites never share a
//! tag, so adding randomness to one stage cannot shift the draws of another.

/// Derives an independent sub-seed from `master` for the given stream `tag`.
///
/// SplitMix64 finalizer over `master + (tag + 1) * gamma`; the `+ 1` keeps
/// tag 0 distinct from the raw master seed.
pub fn derive(master: u64, tag: u64) -> u64 {
    let mut z = master.wrapping_add((tag.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

//! Deterministic seed derivation.
//!
//! All randomness in the crate flows from one 64-bit seed. Independent
//! components derive their own stream with [`child_seed`], which mixes
//! the root seed with a textual label, so adding or reordering
//! components never disturbs the draws of the others and parallel
//! replicates stay reproducible regardless of scheduling.

/// Finalizer from the splitmix64 generator; a cheap bijective mixer
/// with good avalanche behaviour.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of a label.
fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives the seed for a named child component.
pub fn child_seed(root: u64, label: &str) -> u64 {
    splitmix64(root ^ fnv1a(label))
}

/// Derives the seed for a numbered replicate of a named component.
pub fn replicate_seed(root: u64, label: &str, index: u64) -> u64 {
    splitmix64(child_seed(root, label) ^ splitmix64(index))
}

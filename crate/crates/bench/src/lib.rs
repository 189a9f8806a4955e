//! Fixtures shared by the benches in `benches/`.

use qpc_core::{SecretInput, Variant};

/// A fixed pair of unequal secrets of `n_bits` bits (alternating bit patterns).
pub fn unequal_pair(n_bits: u32) -> (SecretInput, SecretInput) {
    let mask = if n_bits == 64 {
        u64::MAX
    } else {
        (1 << n_bits) - 1
    };
    let x = 0xAAAA_AAAA_AAAA_AAAA & mask;
    let y = 0x5555_5555_5555_5555 & mask;
    (
        SecretInput::new(x, n_bits).expect("masked to n_bits"),
        SecretInput::new(y, n_bits).expect("masked to n_bits"),
    )
}

pub const VARIANTS: [Variant; 2] = [Variant::Original, Variant::Fixed];

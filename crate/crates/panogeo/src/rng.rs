//! Deterministic pseudo-random numbers for demo seeding.
//!
//! The generator is SplitMix64, fixed by algorithm rather than by library so
//! that any reimplementation in any language reproduces the same streams.
//! Every demo tensor and parameter in this crate is filled from it in a
//! documented order, which is what makes the seeded CLI output bitwise
//! reproducible across platforms.

/// SplitMix64 generator. The entire state is one 64-bit word.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Next 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1), using the top 53 bits so the value is exact.
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform in [-0.5, 0.5).
    pub fn next_centered(&mut self) -> f64 {
        self.next_f64() - 0.5
    }
}

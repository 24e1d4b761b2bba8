//! Counter-based random number generation for reproducible Monte Carlo.
//!
//! Each pulse gets its own generator keyed by `(seed, pulse_index)`, so the
//! draws for pulse `i` never depend on how the pulse range was partitioned
//! across workers.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 stream keyed by a 64-bit seed and a stream counter.
#[derive(Clone, Debug)]
pub struct PulseRng {
    state: u64,
}

impl PulseRng {
    pub fn new(seed: u64, index: u64) -> Self {
        let keyed = seed
            ^ mix(index
                .wrapping_mul(GOLDEN)
                .wrapping_add(0x2545_F491_4F6C_DD1D));
        Self { state: mix(keyed) }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        const DEN: f64 = (1u64 << 53) as f64;
        ((self.next_u64() >> 11) as f64) / DEN
    }
}

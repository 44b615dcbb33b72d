//! Counter-based deterministic random streams.
//!
//! Every draw is a pure function of (seed, stream tag, example index, repeat
//! index, counter), so per-example generation can be parallelized in any
//! order and still produce bit-identical output. The mixer is the splitmix64
//! finalizer applied to the key fields folded in with distinct odd
//! multipliers.

/// splitmix64 finalizer: full-avalanche 64-bit mix.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One 64-bit value at a fixed position of a keyed stream.
pub fn stream_u64(seed: u64, tag: u64, example: u64, repeat: u64, counter: u64) -> u64 {
    let mut h = mix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    h = mix64(h ^ tag.wrapping_mul(0xbf58_476d_1ce4_e5b9) ^ 0xd6e8_feb8_6659_fd93);
    h = mix64(h ^ example.wrapping_mul(0x94d0_49bb_1331_11eb) ^ 0xa076_1d64_78bd_642f);
    h = mix64(h ^ repeat.wrapping_mul(0xff51_afd7_ed55_8ccd) ^ 0xe703_7ed1_a0b4_28db);
    mix64(h ^ counter.wrapping_mul(0xc4ce_b9fe_1a85_ec53))
}

/// Uniform in [0, 1) with 53 random bits.
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential view of one keyed stream.
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    tag: u64,
    example: u64,
    repeat: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, tag: u64, example: u64, repeat: u64) -> Self {
        CounterRng {
            seed,
            tag,
            example,
            repeat,
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = stream_u64(self.seed, self.tag, self.example, self.repeat, self.counter);
        self.counter += 1;
        v
    }

    pub fn next_unit(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }
}

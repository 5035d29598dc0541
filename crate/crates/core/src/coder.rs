//! Integer range coder over 48-bit fixed-point cumulative intervals.
//!
//! The coder keeps a 64-bit `low`/`range` pair and renormalizes a byte at a
//! time so that `range >= 2^56` between symbols. Carries out of `low` are
//! resolved with a cached byte plus a run of deferred `0xFF` bytes, so output
//! can be drained incrementally. No floating point is used in this module.

use crate::{Error, Result};

pub const PROB_BITS: u32 = 48;
/// Total mass of every model: `2^48`.
pub const PROB_ONE: u64 = 1 << PROB_BITS;

const RENORM_BOUND: u64 = 1 << 56;
const CODE_BYTES: usize = 8;

/// `[lo, hi)` in units of `2^-48`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPointInterval {
    pub lo: u64,
    pub hi: u64,
}

impl FixedPointInterval {
    pub fn new(lo: u64, hi: u64) -> Self {
        debug_assert!(lo < hi && hi <= PROB_ONE, "invalid interval [{lo}, {hi})");
        Self { lo, hi }
    }

    pub fn width(&self) -> u64 {
        self.hi - self.lo
    }

    pub fn contains(&self, target: u64) -> bool {
        self.lo <= target && target < self.hi
    }

    /// Information content in bits.
    pub fn cost_bits(&self) -> f64 {
        PROB_BITS as f64 - (self.width() as f64).log2()
    }
}

/// A discrete distribution over `0..size` tiling `[0, 2^48)`.
pub trait CumulativeModel {
    fn alphabet_size(&self) -> u64;

    fn interval(&self, symbol: u32) -> FixedPointInterval;

    /// The unique symbol whose interval contains `target`.
    fn invert(&self, target: u64) -> u32;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct CodedStream {
    pub bytes: Vec<u8>,
    pub symbol_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoder {
    low: u64,
    carry: bool,
    range: u64,
    cache: Option<u8>,
    pending_ff: u64,
    out: Vec<u8>,
    drained: usize,
    symbols: u64,
}

impl Default for Encoder {
    fn default() -> Self {
        Self::new()
    }
}

impl Encoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            carry: false,
            range: u64::MAX,
            cache: None,
            pending_ff: 0,
            out: Vec::new(),
            drained: 0,
            symbols: 0,
        }
    }

    pub fn low(&self) -> u64 {
        self.low
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    pub fn symbol_count(&self) -> u64 {
        self.symbols
    }

    /// Bytes emitted so far, including already drained ones.
    pub fn bytes_emitted(&self) -> usize {
        self.out.len()
    }

    /// Bytes emitted since the previous call. Already-emitted bytes are final.
    pub fn drain_output(&mut self) -> &[u8] {
        let start = self.drained;
        self.drained = self.out.len();
        &self.out[start..]
    }

    /// Narrows the working range to `interval`.
    ///
    /// # Panics
    /// On an empty interval or one exceeding `2^48`.
    pub fn encode_interval(&mut self, interval: FixedPointInterval) {
        assert!(
            interval.lo < interval.hi && interval.hi <= PROB_ONE,
            "invalid interval [{}, {})",
            interval.lo,
            interval.hi
        );
        let r = self.range >> PROB_BITS;
        let (low, overflow) = self.low.overflowing_add(r * interval.lo);
        debug_assert!(!(overflow && self.carry), "double carry");
        self.low = low;
        self.carry |= overflow;
        self.range = r * interval.width();
        while self.range < RENORM_BOUND {
            self.range <<= 8;
            self.shift_low();
        }
        self.symbols += 1;
    }

    pub fn encode_symbol<M: CumulativeModel + ?Sized>(&mut self, model: &M, symbol: u32) {
        self.encode_interval(model.interval(symbol));
    }

    fn shift_low(&mut self) {
        if self.carry || self.low < 0xFF00_0000_0000_0000 {
            let c = u8::from(self.carry);
            match self.cache {
                Some(byte) => self.out.push(byte.wrapping_add(c)),
                None => debug_assert_eq!(c, 0, "carry past the first byte"),
            }
            let fill = 0xFFu8.wrapping_add(c);
            self.out
                .extend(std::iter::repeat(fill).take(self.pending_ff as usize));
            self.pending_ff = 0;
            self.cache = Some((self.low >> 56) as u8);
        } else {
            self.pending_ff += 1;
        }
        self.low <<= 8;
        self.carry = false;
    }

    /// Picks the shortest code point inside the final interval and flushes
    /// it. The decoder supplies zero bytes past the end of the stream.
    pub fn finish(mut self) -> CodedStream {
        let low = (u128::from(self.carry) << 64) | u128::from(self.low);
        let high = low + u128::from(self.range);
        let mut bytes = 0;
        let mut point = low;
        for k in 0..=CODE_BYTES as u32 {
            let mask = (1u128 << (64 - 8 * k)) - 1;
            let candidate = (low + mask) & !mask;
            if candidate < high {
                bytes = k;
                point = candidate;
                break;
            }
        }
        self.low = point as u64;
        self.carry = point >> 64 != 0;
        for _ in 0..bytes {
            self.shift_low();
        }
        let c = u8::from(self.carry);
        if let Some(byte) = self.cache {
            self.out.push(byte.wrapping_add(c));
        }
        let fill = 0xFFu8.wrapping_add(c);
        self.out
            .extend(std::iter::repeat(fill).take(self.pending_ff as usize));
        CodedStream {
            bytes: self.out,
            symbol_count: self.symbols,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    code: u64,
    range: u64,
    data: &'a [u8],
    pos: usize,
    padded: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        let mut dec = Self {
            code: 0,
            range: u64::MAX,
            data: bytes,
            pos: 0,
            padded: 0,
        };
        for _ in 0..CODE_BYTES {
            // at most CODE_BYTES pad bytes so far, never an error
            dec.code = (dec.code << 8) | u64::from(dec.next_byte().unwrap_or(0));
        }
        dec
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    fn next_byte(&mut self) -> Result<u8> {
        if let Some(&b) = self.data.get(self.pos) {
            self.pos += 1;
            Ok(b)
        } else {
            self.padded += 1;
            if self.padded > CODE_BYTES {
                return Err(Error::Decode("stream truncated".into()));
            }
            Ok(0)
        }
    }

    /// The current code point in the model's `[0, 2^48)` space.
    pub fn decode_target(&self) -> Result<u64> {
        if self.padded > CODE_BYTES {
            return Err(Error::Decode("stream exhausted".into()));
        }
        let target = self.code / (self.range >> PROB_BITS);
        if target >= PROB_ONE {
            return Err(Error::Decode("code point outside model range".into()));
        }
        Ok(target)
    }

    pub fn decode_consume(&mut self, interval: FixedPointInterval) -> Result<()> {
        assert!(
            interval.lo < interval.hi && interval.hi <= PROB_ONE,
            "invalid interval [{}, {})",
            interval.lo,
            interval.hi
        );
        let r = self.range >> PROB_BITS;
        let offset = r * interval.lo;
        let range = r * interval.width();
        if self.code < offset || self.code - offset >= range {
            return Err(Error::Decode("code point outside symbol interval".into()));
        }
        self.code -= offset;
        self.range = range;
        while self.range < RENORM_BOUND {
            self.range <<= 8;
            self.code = (self.code << 8) | u64::from(self.next_byte()?);
        }
        Ok(())
    }

    pub fn decode_symbol<M: CumulativeModel + ?Sized>(&mut self, model: &M) -> Result<u32> {
        let target = self.decode_target()?;
        let symbol = model.invert(target);
        self.decode_consume(model.interval(symbol))?;
        Ok(symbol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Explicit cumulative table, test-only.
    struct Table(Vec<u64>);

    impl Table {
        fn from_weights(weights: &[u64]) -> Self {
            let total: u64 = weights.iter().sum();
            let mut cum = vec![0u64];
            let mut acc = 0u128;
            for (i, &w) in weights.iter().enumerate() {
                acc += u128::from(w);
                let c = if i + 1 == weights.len() {
                    PROB_ONE
                } else {
                    (acc * u128::from(PROB_ONE) / u128::from(total)) as u64
                };
                cum.push(c.max(cum[i] + 1));
            }
            Self(cum)
        }
    }

    impl CumulativeModel for Table {
        fn alphabet_size(&self) -> u64 {
            self.0.len() as u64 - 1
        }
        fn interval(&self, symbol: u32) -> FixedPointInterval {
            FixedPointInterval::new(self.0[symbol as usize], self.0[symbol as usize + 1])
        }
        fn invert(&self, target: u64) -> u32 {
            (self.0.partition_point(|&c| c <= target) - 1) as u32
        }
    }

    fn fig4_model() -> Table {
        // A = [0, 0.2), B = [0.2, 0.7), C = [0.7, 0.9), D = [0.9, 1)
        Table::from_weights(&[2, 5, 2, 1])
    }

    #[test]
    fn fresh_encoders() {
        let a = Encoder::new();
        let b = Encoder::new();
        assert_eq!(a, b);
        assert_eq!(a.bytes_emitted(), 0);
        let s = a.finish();
        assert!(s.bytes.is_empty());
        assert_eq!(s.symbol_count, 0);
        let d1 = Decoder::new(&s.bytes);
        let d2 = Decoder::new(&s.bytes);
        assert_eq!(d1.code, d2.code);
        assert_eq!(d1.range, d2.range);
    }

    #[test]
    fn first_symbol_selects_first_fifth() {
        let model = fig4_model();
        let mut enc = Encoder::new();
        let before = enc.range() as f64;
        enc.encode_symbol(&model, 0);
        assert_eq!(enc.low(), 0);
        let ratio = enc.range() as f64 / before;
        assert!((ratio - 0.2).abs() < 1e-4, "ratio {ratio}");
    }

    #[test]
    fn certain_symbol_is_free() {
        let mut enc = Encoder::new();
        for _ in 0..1000 {
            enc.encode_interval(FixedPointInterval::new(0, PROB_ONE));
        }
        let s = enc.finish();
        assert!(s.bytes.len() <= 8);
        let mut dec = Decoder::new(&s.bytes);
        for _ in 0..1000 {
            dec.decode_consume(FixedPointInterval::new(0, PROB_ONE)).unwrap();
        }
    }

    #[test]
    fn fig4_sequence_golden() {
        let model = fig4_model();
        let seq = [0u32, 0, 1, 2];
        let mut enc = Encoder::new();
        for &s in &seq {
            enc.encode_symbol(&model, s);
        }
        let stream = enc.finish();
        // frozen from the first reference run of this coder
        assert_eq!(stream.bytes, GOLDEN_AABC);
        let mut dec = Decoder::new(&stream.bytes);
        let back: Vec<u32> = (0..4).map(|_| dec.decode_symbol(&model).unwrap()).collect();
        assert_eq!(back, seq);
    }

    const GOLDEN_AABC: &[u8] = &[0x06];

    #[test]
    fn target_inside_first_half() {
        let mut enc = Encoder::new();
        let half = FixedPointInterval::new(0, PROB_ONE / 2);
        enc.encode_interval(half);
        let s = enc.finish();
        let dec = Decoder::new(&s.bytes);
        assert!(half.contains(dec.decode_target().unwrap()));
    }

    #[test]
    fn deterministic_output() {
        let model = Table::from_weights(&[1, 7, 3, 100, 2]);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut enc = Encoder::new();
            for _ in 0..5000 {
                enc.encode_symbol(&model, rng.gen_range(0..5));
            }
            enc.finish()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn width_one_costs_48_bits() {
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut enc = Encoder::new();
        let mut ivs = Vec::new();
        for _ in 0..n {
            let lo = rng.gen_range(0..PROB_ONE);
            let iv = FixedPointInterval::new(lo, lo + 1);
            ivs.push(iv);
            enc.encode_interval(iv);
        }
        let s = enc.finish();
        let bits = 8.0 * s.bytes.len() as f64;
        let per = bits / n as f64;
        assert!((per - 48.0).abs() <= 1.0, "{per} bits per width-1 symbol");
        let mut dec = Decoder::new(&s.bytes);
        for iv in ivs {
            let t = dec.decode_target().unwrap();
            assert_eq!(t, iv.lo);
            dec.decode_consume(iv).unwrap();
        }
    }

    #[test]
    fn carries_resolve() {
        // symbols near the top of the range force long 0xFF runs and carries
        let top = FixedPointInterval::new(PROB_ONE - 3, PROB_ONE);
        let mid = FixedPointInterval::new(PROB_ONE / 3, PROB_ONE / 3 + 5);
        let mut seq = Vec::new();
        for i in 0..400 {
            seq.push(if i % 37 == 36 { mid } else { top });
        }
        let mut enc = Encoder::new();
        for &iv in &seq {
            enc.encode_interval(iv);
        }
        let s = enc.finish();
        let mut dec = Decoder::new(&s.bytes);
        for &iv in &seq {
            assert!(iv.contains(dec.decode_target().unwrap()));
            dec.decode_consume(iv).unwrap();
        }
    }

    #[test]
    fn truncation_detected() {
        let model = Table::from_weights(&[1; 256]);
        let mut enc = Encoder::new();
        for s in 0..200u32 {
            enc.encode_symbol(&model, s % 256);
        }
        let s = enc.finish();
        let cut = &s.bytes[..s.bytes.len() / 2];
        let mut dec = Decoder::new(cut);
        let mut failed = false;
        for _ in 0..200 {
            if dec.decode_symbol(&model).is_err() {
                failed = true;
                break;
            }
        }
        assert!(failed);
    }

    #[test]
    fn incremental_drain_matches_final_bytes() {
        let model = Table::from_weights(&[5, 1, 1, 9, 30, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut enc = Encoder::new();
        let mut drained = Vec::new();
        for i in 0..3000 {
            enc.encode_symbol(&model, rng.gen_range(0..6));
            if i % 100 == 0 {
                drained.extend_from_slice(enc.drain_output());
            }
        }
        let s = enc.finish();
        assert_eq!(&s.bytes[..drained.len()], &drained[..]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn roundtrip_random_models(
            seed in any::<u64>(),
            len in 0usize..3000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seq = Vec::with_capacity(len);
            let mut enc = Encoder::new();
            for _ in 0..len {
                let size = rng.gen_range(1..300usize);
                let weights: Vec<u64> = (0..size)
                    .map(|_| if rng.gen_bool(0.1) { rng.gen_range(1..1_000_000) } else { rng.gen_range(1..10) })
                    .collect();
                let model = Table::from_weights(&weights);
                let sym = rng.gen_range(0..size as u32);
                enc.encode_symbol(&model, sym);
                seq.push((model, sym));
            }
            let s = enc.finish();
            prop_assert_eq!(s.symbol_count, len as u64);
            let mut dec = Decoder::new(&s.bytes);
            for (model, sym) in &seq {
                let t = dec.decode_target().unwrap();
                prop_assert!(model.interval(*sym).contains(t));
                prop_assert_eq!(dec.decode_symbol(model).unwrap(), *sym);
            }
        }
    }
}

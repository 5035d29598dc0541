//! Probability models feeding the range coder.
//!
//! Every model exposes a closed-form cumulative `C(v)` over the alphabet
//! `0..=v_max` with `C(0) = 0`, `C(size) = 2^48` and `C(v + 1) > C(v)`.
//! Intervals are `[C(v), C(v + 1))`, and decoding inverts `C` by binary
//! search, so no model ever enumerates its alphabet.

use crate::coder::{CumulativeModel, FixedPointInterval, PROB_ONE};
use crate::{Error, Result};

/// Weight of the uniform component mixed into every Laplace model.
pub const UNIFORM_MIX: f64 = 1.0 / 256.0;
/// Smallest Laplace scale, in transformed units.
pub const B_MIN: f64 = 1e-4;

const MAX_ALPHABET: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymbolAlphabet {
    v_max: u32,
}

impl SymbolAlphabet {
    pub fn new(v_max: u32) -> Self {
        Self { v_max }
    }

    pub fn v_max(&self) -> u32 {
        self.v_max
    }

    pub fn size(&self) -> u64 {
        u64::from(self.v_max) + 1
    }
}

/// Strictly increasing map from traffic values into the space the Laplace
/// lives in. `Log1p` standardizes `ln(1 + v)` with stored statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueTransform {
    Identity,
    Log1p { mean: f64, std: f64 },
}

impl ValueTransform {
    /// Defined for `x > -1`; cell boundaries sit at half-integers.
    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            Self::Identity => x,
            Self::Log1p { mean, std } => (x.ln_1p() - mean) / std,
        }
    }

    pub fn inverse(&self, t: f64) -> f64 {
        match *self {
            Self::Identity => t,
            Self::Log1p { mean, std } => (t * std + mean).exp_m1(),
        }
    }

    pub fn value(&self, v: u32) -> f64 {
        self.forward(f64::from(v))
    }

    /// Nearest integer preimage, saturating at 0.
    pub fn inverse_value(&self, t: f64) -> u32 {
        let x = self.inverse(t).round();
        if x <= 0.0 {
            0
        } else if x >= f64::from(u32::MAX) {
            u32::MAX
        } else {
            x as u32
        }
    }
}

/// Laplace location and scale in transformed space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistParams {
    pub mu: f64,
    pub b: f64,
}

impl DistParams {
    pub fn std(&self) -> f64 {
        self.b * std::f64::consts::SQRT_2
    }
}

pub fn laplace_cdf(x: f64, mu: f64, b: f64) -> f64 {
    if x < mu {
        0.5 * ((x - mu) / b).exp()
    } else {
        1.0 - 0.5 * (-(x - mu) / b).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformModel {
    size: u64,
    width: u64,
    remainder: u64,
}

impl UniformModel {
    pub fn new(alphabet: SymbolAlphabet) -> Self {
        let size = alphabet.size();
        Self {
            size,
            width: PROB_ONE / size,
            remainder: PROB_ONE % size,
        }
    }

    /// Low values take the leftover units, one each.
    fn cumulative(&self, v: u64) -> u64 {
        v * self.width + v.min(self.remainder)
    }
}

impl CumulativeModel for UniformModel {
    fn alphabet_size(&self) -> u64 {
        self.size
    }

    fn interval(&self, symbol: u32) -> FixedPointInterval {
        let v = u64::from(symbol);
        FixedPointInterval::new(self.cumulative(v), self.cumulative(v + 1))
    }

    fn invert(&self, target: u64) -> u32 {
        let wide = self.remainder * (self.width + 1);
        let v = if target < wide {
            target / (self.width + 1)
        } else {
            self.remainder + (target - wide) / self.width
        };
        v as u32
    }
}

/// Add-one smoothed histogram, stored sparsely so alphabets up to `2^32` cost
/// only the observed distinct values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramModel {
    size: u64,
    entries: Vec<(u32, u64)>,
    /// `prefix[i]` = sum of counts of `entries[..i]`.
    prefix: Vec<u64>,
    total: u64,
}

impl HistogramModel {
    pub fn from_values<I>(alphabet: SymbolAlphabet, values: I) -> Result<Self>
    where
        I: IntoIterator<Item = u32>,
    {
        let mut sorted: Vec<u32> = values.into_iter().collect();
        sorted.sort_unstable();
        let mut entries: Vec<(u32, u64)> = Vec::new();
        for v in sorted {
            if v > alphabet.v_max() {
                return Err(Error::InvalidArgument(format!(
                    "value {v} outside alphabet 0..={}",
                    alphabet.v_max()
                )));
            }
            match entries.last_mut() {
                Some((last, count)) if *last == v => *count += 1,
                _ => entries.push((v, 1)),
            }
        }
        Self::from_counts(alphabet, entries)
    }

    /// `entries` must be sorted by value with positive counts.
    pub fn from_counts(alphabet: SymbolAlphabet, entries: Vec<(u32, u64)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidArgument("histogram values not sorted".into()));
        }
        if entries
            .iter()
            .any(|&(v, c)| c == 0 || v > alphabet.v_max())
        {
            return Err(Error::InvalidArgument(
                "histogram entry with zero count or out-of-range value".into(),
            ));
        }
        let mut prefix = Vec::with_capacity(entries.len() + 1);
        let mut acc = 0u64;
        prefix.push(0);
        for &(_, c) in &entries {
            acc = acc
                .checked_add(c)
                .ok_or_else(|| Error::InvalidArgument("histogram count overflow".into()))?;
            prefix.push(acc);
        }
        let size = alphabet.size();
        let total = size + acc;
        if total > PROB_ONE {
            return Err(Error::InvalidArgument(format!(
                "histogram mass {total} exceeds fixed-point resolution"
            )));
        }
        Ok(Self {
            size,
            entries,
            prefix,
            total,
        })
    }

    pub fn entries(&self) -> &[(u32, u64)] {
        &self.entries
    }

    /// Smoothed probability of `v`.
    pub fn probability(&self, v: u32) -> f64 {
        let count = match self.entries.binary_search_by_key(&v, |e| e.0) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        };
        (count + 1) as f64 / self.total as f64
    }

    /// Smoothed count mass strictly below `v`.
    fn count_below(&self, v: u64) -> u64 {
        let idx = self.entries.partition_point(|e| u64::from(e.0) < v);
        v + self.prefix[idx]
    }

    fn cumulative(&self, v: u64) -> u64 {
        if v >= self.size {
            return PROB_ONE;
        }
        ((u128::from(self.count_below(v)) << 48) / u128::from(self.total)) as u64
    }
}

impl CumulativeModel for HistogramModel {
    fn alphabet_size(&self) -> u64 {
        self.size
    }

    fn interval(&self, symbol: u32) -> FixedPointInterval {
        let v = u64::from(symbol);
        FixedPointInterval::new(self.cumulative(v), self.cumulative(v + 1))
    }

    fn invert(&self, target: u64) -> u32 {
        search_cumulative(self.size, target, |v| self.cumulative(v))
    }
}

/// Quantized Laplace over the integer alphabet.
///
/// Value `v` owns the transformed cell `[T(v - 1/2), T(v + 1/2))`; tails
/// beyond the first and last cell fold into values `0` and `v_max`. The pmf is
/// mixed with a uniform floor of weight `UNIFORM_MIX`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceModel {
    size: u64,
    params: DistParams,
    mix: f64,
    transform: ValueTransform,
}

impl LaplaceModel {
    pub fn new(params: DistParams, alphabet: SymbolAlphabet, transform: ValueTransform) -> Result<Self> {
        Self::with_mix(params, alphabet, transform, UNIFORM_MIX)
    }

    pub fn with_mix(
        params: DistParams,
        alphabet: SymbolAlphabet,
        transform: ValueTransform,
        mix: f64,
    ) -> Result<Self> {
        if !(params.mu.is_finite() && params.b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite Laplace parameters mu={} b={}",
                params.mu, params.b
            )));
        }
        if params.b < B_MIN {
            return Err(Error::InvalidArgument(format!(
                "Laplace scale {} below minimum {B_MIN}",
                params.b
            )));
        }
        if !(mix > 0.0 && mix < 1.0) {
            return Err(Error::InvalidArgument(format!("mixing weight {mix}")));
        }
        let size = alphabet.size();
        if size > MAX_ALPHABET {
            return Err(Error::InvalidArgument(format!("alphabet size {size}")));
        }
        Ok(Self {
            size,
            params,
            mix,
            transform,
        })
    }

    pub fn params(&self) -> DistParams {
        self.params
    }

    /// `C(k)`: fixed-point mass of values `< k`, rounded to nearest.
    fn cumulative(&self, k: u64) -> u64 {
        if k == 0 {
            return 0;
        }
        if k >= self.size {
            return PROB_ONE;
        }
        let x = self.transform.forward(k as f64 - 0.5);
        let DistParams { mu, b } = self.params;
        // lower and upper branches avoid cancellation near 0 and 1
        let (z, z_err) = quotient_with_error(x, mu, b);
        let (exponent, exponent_err, uniform_count, from_top) = if x < mu {
            (z, z_err, k, false)
        } else {
            (-z, -z_err, self.size - k, true)
        };
        let one = PROB_ONE as f64;
        let tail = (1.0 - self.mix) * 0.5 * one * exponent.exp() * (1.0 + exponent_err);
        let uniform = self.mix * (uniform_count as f64 / self.size as f64) * one;
        let scaled = tail + uniform;
        // a few ulps cover exp and the products; closer than that to a tie,
        // f64 cannot tell which way the rounding goes
        let slack = 4.0 * f64::EPSILON * scaled + 1e-12;
        let rounded = if (scaled.fract() - 0.5).abs() < slack {
            exact_tail_mass(x, mu, b, from_top, self.mix, uniform_count, self.size)
        } else {
            scaled.round() as u64
        };
        if from_top {
            PROB_ONE - rounded
        } else {
            rounded
        }
    }
}

/// `(x − mu)/b` rounded, plus the first-order residual lost to rounding.
fn quotient_with_error(x: f64, mu: f64, b: f64) -> (f64, f64) {
    let d = x - mu;
    let v = d - x;
    let d_err = (x - (d - v)) + (-mu - v);
    let z = d / b;
    let r = (-z).mul_add(b, d);
    (z, (r + d_err) / b)
}

/// `round(2^48 · ((1 − mix)·e^{∓(x−mu)/b}/2 + mix·count/size))` evaluated
/// with 128-bit arithmetic, for the rare cases where f64 cannot settle
/// which way the rounding goes.
fn exact_tail_mass(x: f64, mu: f64, b: f64, upper: bool, mix: f64, count: u64, size: u64) -> u64 {
    use dashu_float::{round::mode::HalfEven, FBig};
    type F = FBig<HalfEven>;
    const PRECISION: usize = 128;
    let exact = |v: f64| F::try_from(v).expect("finite").with_precision(PRECISION).value();
    let z = (exact(x) - exact(mu)) / exact(b);
    let exponent = if upper { -z } else { z };
    let mix_f = exact(mix);
    let keep = F::ONE.with_precision(PRECISION).value() - &mix_f;
    let tail = keep * exponent.exp() / F::from(2u8);
    let uniform = mix_f * F::from(count) / F::from(size);
    let scaled = (tail + uniform) * F::from(PROB_ONE);
    let int = scaled.round().to_int().value();
    u64::try_from(int).expect("mass within [0, 2^48]")
}

impl CumulativeModel for LaplaceModel {
    fn alphabet_size(&self) -> u64 {
        self.size
    }

    fn interval(&self, symbol: u32) -> FixedPointInterval {
        let v = u64::from(symbol);
        FixedPointInterval::new(self.cumulative(v), self.cumulative(v + 1))
    }

    fn invert(&self, target: u64) -> u32 {
        search_cumulative(self.size, target, |k| self.cumulative(k))
    }
}

/// Largest `v < size` with `cumulative(v) <= target`.
fn search_cumulative(size: u64, target: u64, cumulative: impl Fn(u64) -> u64) -> u32 {
    let (mut lo, mut hi) = (0u64, size);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if cumulative(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo as u32
}

/// Any model the pipeline can hand to the coder.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantizedDistribution {
    Uniform(UniformModel),
    Histogram(HistogramModel),
    Laplace(LaplaceModel),
}

impl CumulativeModel for QuantizedDistribution {
    fn alphabet_size(&self) -> u64 {
        match self {
            Self::Uniform(m) => m.alphabet_size(),
            Self::Histogram(m) => m.alphabet_size(),
            Self::Laplace(m) => m.alphabet_size(),
        }
    }

    fn interval(&self, symbol: u32) -> FixedPointInterval {
        match self {
            Self::Uniform(m) => m.interval(symbol),
            Self::Histogram(m) => m.interval(symbol),
            Self::Laplace(m) => m.interval(symbol),
        }
    }

    fn invert(&self, target: u64) -> u32 {
        match self {
            Self::Uniform(m) => m.invert(target),
            Self::Histogram(m) => m.invert(target),
            Self::Laplace(m) => m.invert(target),
        }
    }
}

pub fn uniform_model(alphabet: SymbolAlphabet) -> QuantizedDistribution {
    QuantizedDistribution::Uniform(UniformModel::new(alphabet))
}

pub fn static_histogram_model(
    alphabet: SymbolAlphabet,
    values: impl IntoIterator<Item = u32>,
) -> Result<QuantizedDistribution> {
    HistogramModel::from_values(alphabet, values).map(QuantizedDistribution::Histogram)
}

/// Same construction as the static model, over the values currently inside
/// the sliding window.
pub fn adaptive_histogram_model(
    alphabet: SymbolAlphabet,
    window: impl IntoIterator<Item = u32>,
) -> Result<QuantizedDistribution> {
    static_histogram_model(alphabet, window)
}

pub fn quantized_laplace(
    params: DistParams,
    alphabet: SymbolAlphabet,
    transform: ValueTransform,
) -> Result<QuantizedDistribution> {
    LaplaceModel::new(params, alphabet, transform).map(QuantizedDistribution::Laplace)
}

pub fn invert_target<M: CumulativeModel + ?Sized>(model: &M, target: u64) -> u32 {
    model.invert(target)
}

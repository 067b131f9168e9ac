//! μ-law companding onto a uniform grid of `bins` levels, with `μ = bins − 1`.
//!
//! Encoding compresses `x ∈ [-1, 1]` to `y = sign(x)·ln(1 + μ|x|)/ln(1 + μ)` and
//! takes `floor((y + 1)/2 · bins)`, clamped to the top bin. Decoding returns
//! the amplitude at the centre of the bin in the companded domain.

use super::CodecError;

pub const DEFAULT_BINS: usize = 1024;

/// Index of a quantization level in `0..bins`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinIndex(u16);

impl BinIndex {
    /// Validates against the default 1024-level codec.
    pub fn new(value: u16) -> Result<Self, CodecError> {
        if (value as usize) < DEFAULT_BINS {
            Ok(Self(value))
        } else {
            Err(CodecError::BinOutOfRange {
                bin: value as usize,
                bins: DEFAULT_BINS,
            })
        }
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

impl From<BinIndex> for usize {
    fn from(b: BinIndex) -> usize {
        b.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuLaw {
    bins: usize,
    mu: f64,
    log1p_mu: f64,
}

impl Default for MuLaw {
    fn default() -> Self {
        Self::new(DEFAULT_BINS).expect("default bin count is valid")
    }
}

impl MuLaw {
    pub fn new(bins: usize) -> Result<Self, CodecError> {
        if !(2..=65536).contains(&bins) {
            return Err(CodecError::InvalidBinCount(bins));
        }
        let mu = (bins - 1) as f64;
        Ok(Self {
            bins,
            mu,
            log1p_mu: mu.ln_1p(),
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// The bin representing zero amplitude; also the padding value for
    /// history before an utterance starts.
    pub fn center_bin(&self) -> usize {
        self.bins / 2
    }

    pub fn compress(&self, x: f64) -> f64 {
        x.signum() * (self.mu * x.abs()).ln_1p() / self.log1p_mu
    }

    pub fn expand(&self, y: f64) -> f64 {
        y.signum() * ((y.abs() * self.log1p_mu).exp() - 1.0) / self.mu
    }

    pub fn encode(&self, x: f64) -> Result<usize, CodecError> {
        if !(x.abs() <= 1.0) {
            return Err(CodecError::Domain(x));
        }
        let y = if x == 0.0 { 0.0 } else { self.compress(x) };
        let b = ((y + 1.0) / 2.0 * self.bins as f64).floor() as usize;
        Ok(b.min(self.bins - 1))
    }

    pub fn decode(&self, bin: usize) -> Result<f64, CodecError> {
        if bin >= self.bins {
            return Err(CodecError::BinOutOfRange {
                bin,
                bins: self.bins,
            });
        }
        let yc = 2.0 * (bin as f64 + 0.5) / self.bins as f64 - 1.0;
        Ok(self.expand(yc))
    }

    /// Amplitude interval `[lo, hi)` that encodes to `bin`.
    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let lo = 2.0 * bin as f64 / self.bins as f64 - 1.0;
        let hi = 2.0 * (bin + 1) as f64 / self.bins as f64 - 1.0;
        (self.expand(lo), self.expand(hi))
    }

    pub fn encode_all(&self, samples: &[f32]) -> Result<Vec<usize>, CodecError> {
        samples.iter().map(|&s| self.encode(s as f64)).collect()
    }

    pub fn decode_all(&self, bins: &[usize]) -> Result<Vec<f32>, CodecError> {
        bins.iter()
            .map(|&b| self.decode(b).map(|v| v as f32))
            .collect()
    }
}

/// Default 1024-level encoder.
pub fn mulaw_encode(x: f64) -> Result<BinIndex, CodecError> {
    MuLaw::default().encode(x).map(|b| BinIndex(b as u16))
}

/// Default 1024-level decoder.
pub fn mulaw_decode(b: BinIndex) -> f64 {
    MuLaw::default()
        .decode(b.0 as usize)
        .expect("BinIndex is always in range")
}

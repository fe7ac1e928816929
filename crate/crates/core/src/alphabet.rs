//! Modulation alphabets, i.i.d. symbol sources and classical power moments.
//!
//! Streams are stored normalized to unit mean 4D power per time slot. Moments
//! are taken over the per-polarization normalized power `p = 2|u|^2`, which
//! has unit mean when pooled over both polarizations.

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const PROB_SUM_TOL: f64 = 1e-12;

/// Positive amplitude levels with per-level probabilities. Signs are drawn
/// separately and are always equiprobable.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeAlphabet {
    levels: Vec<f64>,
    probabilities: Vec<f64>,
}

impl AmplitudeAlphabet {
    pub fn new(levels: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        if levels.is_empty() || levels.len() != probabilities.len() {
            return Err(Error::InvalidParameter(
                "levels and probabilities must be non-empty and of equal length".into(),
            ));
        }
        if levels[0] <= 0.0 || levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "levels must be positive and strictly increasing".into(),
            ));
        }
        if probabilities.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidParameter("probabilities must be nonnegative".into()));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { levels, probabilities })
    }

    /// Uniform levels `{1, 3, ..., 2M-1}`.
    pub fn qam(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("M must be at least 1".into()));
        }
        let levels = odd_levels(m);
        let probabilities = vec![1.0 / m as f64; m];
        Ok(Self { levels, probabilities })
    }

    /// Maxwell-Boltzmann weights `exp(-lambda a^2)` over `{1, ..., 2M-1}`,
    /// with `lambda >= 0` solved so the entropy equals `target_entropy` bits.
    pub fn maxwell_boltzmann(m: usize, target_entropy: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("M must be at least 1".into()));
        }
        let max_entropy = (m as f64).log2();
        if !(target_entropy > 0.0) {
            return Err(Error::InvalidParameter(
                "target entropy must be positive".into(),
            ));
        }
        if target_entropy > max_entropy + 1e-12 {
            return Err(Error::Infeasible(format!(
                "target entropy {target_entropy} exceeds log2(M) = {max_entropy}"
            )));
        }
        let levels = odd_levels(m);
        let lambda = solve_mb_lambda(&levels, target_entropy);
        let probabilities = mb_weights(&levels, lambda);
        Ok(Self { levels, probabilities })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Entropy in bits per positive amplitude.
    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.probabilities)
    }

    /// `E[a^k]` over the alphabet.
    pub fn raw_moment(&self, k: i32) -> f64 {
        self.levels
            .iter()
            .zip(&self.probabilities)
            .map(|(a, p)| p * a.powi(k))
            .sum()
    }

    /// Standardized moments `(mu4, mu6)` of a complex symbol whose I and Q
    /// parts are drawn independently from this alphabet.
    pub fn complex_moments(&self) -> (f64, f64) {
        let e2 = self.raw_moment(2);
        let e4 = self.raw_moment(4);
        let e6 = self.raw_moment(6);
        let p1 = 2.0 * e2;
        let p2 = 2.0 * e4 + 2.0 * e2 * e2;
        let p3 = 2.0 * e6 + 6.0 * e4 * e2;
        (p2 / (p1 * p1), p3 / (p1 * p1 * p1))
    }
}

fn odd_levels(m: usize) -> Vec<f64> {
    (0..m).map(|i| (2 * i + 1) as f64).collect()
}

fn entropy_bits(probabilities: &[f64]) -> f64 {
    probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

fn mb_weights(levels: &[f64], lambda: f64) -> Vec<f64> {
    // offset by the smallest energy so large lambda cannot underflow everything
    let e0 = levels[0] * levels[0];
    let w: Vec<f64> = levels.iter().map(|a| (-lambda * (a * a - e0)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn solve_mb_lambda(levels: &[f64], target: f64) -> f64 {
    let entropy_at = |lambda: f64| entropy_bits(&mb_weights(levels, lambda));
    if entropy_at(0.0) <= target {
        return 0.0;
    }
    let mut hi = 1e-3;
    while entropy_at(hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    let mut lo = 0.0;
    // entropy is strictly decreasing in lambda
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if entropy_at(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Time-ordered dual-polarization symbols, normalized so the mean per-slot
/// power `|u_x|^2 + |u_y|^2` is one.
#[derive(Debug, Clone, PartialEq)]
pub struct PdmSymbolStream {
    symbols: Vec<[Complex64; 2]>,
    scale: f64,
}

impl PdmSymbolStream {
    /// Normalizes raw symbols by their empirical mean power.
    pub fn from_raw(raw: Vec<[Complex64; 2]>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidInput("empty symbol stream".into()));
        }
        let mean_power = raw
            .iter()
            .map(|s| s[0].norm_sqr() + s[1].norm_sqr())
            .sum::<f64>()
            / raw.len() as f64;
        if !(mean_power > 0.0) || !mean_power.is_finite() {
            return Err(Error::InvalidInput("stream has zero or non-finite power".into()));
        }
        let scale = 1.0 / mean_power.sqrt();
        let symbols = raw
            .into_iter()
            .map(|s| [s[0] * scale, s[1] * scale])
            .collect();
        Ok(Self { symbols, scale })
    }

    /// Builds a real-valued stream whose per-polarization normalized powers
    /// are proportional to `px` and `py`.
    pub fn from_pol_powers(px: &[f64], py: &[f64]) -> Result<Self> {
        if px.len() != py.len() {
            return Err(Error::InvalidInput("polarization lengths differ".into()));
        }
        if px.iter().chain(py).any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidInput("powers must be nonnegative".into()));
        }
        let raw = px
            .iter()
            .zip(py)
            .map(|(&a, &b)| [Complex64::new(a.sqrt(), 0.0), Complex64::new(b.sqrt(), 0.0)])
            .collect();
        Self::from_raw(raw)
    }

    pub fn symbols(&self) -> &[[Complex64; 2]] {
        &self.symbols
    }

    /// Factor that was applied to the raw symbols.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `|u_x|^2 + |u_y|^2` per slot; the pooled per-polarization power.
    pub fn slot_powers(&self) -> Vec<f64> {
        self.symbols
            .iter()
            .map(|s| s[0].norm_sqr() + s[1].norm_sqr())
            .collect()
    }

    /// Per-polarization normalized powers `(p_x, p_y)` per slot.
    pub fn pol_powers(&self) -> Vec<[f64; 2]> {
        self.symbols
            .iter()
            .map(|s| [2.0 * s[0].norm_sqr(), 2.0 * s[1].norm_sqr()])
            .collect()
    }

    /// Scales a stream by an arbitrary factor; renormalization undoes it.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::from_raw(
            self.symbols
                .iter()
                .map(|s| [s[0] * factor, s[1] * factor])
                .collect(),
        )
    }
}

/// Draws four independent signed amplitudes per slot (I/Q on both
/// polarizations). Deterministic in `seed`.
pub fn draw_iid_stream(
    alphabet: &AmplitudeAlphabet,
    slots: usize,
    seed: u64,
) -> Result<PdmSymbolStream> {
    if slots == 0 {
        return Err(Error::InvalidParameter("slots must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picker = WeightedIndex::new(alphabet.probabilities())
        .map_err(|e| Error::InvalidParameter(format!("bad alphabet weights: {e}")))?;
    let levels = alphabet.levels();
    let draw = |rng: &mut ChaCha8Rng| {
        let a = levels[picker.sample(rng)];
        if rng.random::<bool>() {
            a
        } else {
            -a
        }
    };
    let raw = (0..slots)
        .map(|_| {
            let xi = draw(&mut rng);
            let xq = draw(&mut rng);
            let yi = draw(&mut rng);
            let yq = draw(&mut rng);
            [Complex64::new(xi, xq), Complex64::new(yi, yq)]
        })
        .collect();
    PdmSymbolStream::from_raw(raw)
}

/// Circularly symmetric complex Gaussian symbols on each polarization.
pub fn draw_gaussian_stream(slots: usize, seed: u64) -> Result<PdmSymbolStream> {
    if slots == 0 {
        return Err(Error::InvalidParameter("slots must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = || -> f64 { rng.sample(StandardNormal) };
    let raw = (0..slots)
        .map(|_| [Complex64::new(g(), g()), Complex64::new(g(), g())])
        .collect();
    PdmSymbolStream::from_raw(raw)
}

/// Classical moments of the pooled per-polarization power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub mu4: f64,
    pub mu6: f64,
}

pub fn classical_moments(stream: &PdmSymbolStream) -> Result<MomentSet> {
    if stream.is_empty() {
        return Err(Error::InvalidInput("empty symbol stream".into()));
    }
    let powers = stream.pol_powers();
    let count = (2 * powers.len()) as f64;
    let flat = || powers.iter().flat_map(|p| p.iter().copied());
    let mean = flat().sum::<f64>() / count;
    let (mut m1, mut m2, mut m3, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in flat() {
        let d = p - mean;
        m1 += d;
        m2 += d * d;
        m3 += d * d * d;
        s2 += p * p;
        s3 += p * p * p;
    }
    Ok(MomentSet {
        m1: m1 / count,
        m2: m2 / count,
        m3: m3 / count,
        mu4: s2 / count,
        mu6: s3 / count,
    })
}

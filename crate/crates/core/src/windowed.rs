//! Windowed central and standardized moments of the normalized power.
//!
//! For a window of `w` slots the pooled power `<P>_w` averages the
//! per-polarization power over both polarizations and `w` consecutive slots
//! (`2w` samples). The windowed central moment of order `k` is the mean of
//! `(<P>_w - 1)^k (2w)^(k-1)` over window positions, which leaves it
//! unchanged under windowing when the per-polarization powers are i.i.d.

use rayon::prelude::*;

use crate::alphabet::PdmSymbolStream;
use crate::error::{Error, Result};

/// How windows are placed near the ends of the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeMode {
    /// Slide with stride 1 and drop windows that run past the end.
    #[default]
    Discard,
    /// Treat the stream as periodic.
    Circular,
}

/// Moments at one window length, with batch-means standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowedMoments {
    pub w: usize,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub mu4: f64,
    pub mu6: f64,
    pub positions: usize,
    pub se_m2: f64,
    pub se_m3: f64,
    pub se_mu4: f64,
    pub se_mu6: f64,
}

const MAX_BATCHES: usize = 64;
const MIN_BATCH_WINDOWS: usize = 10;

/// Standard error of the mean of a serially correlated series, from the
/// spread of contiguous batch means.
fn batch_standard_error(values: &[f64], w: usize) -> f64 {
    let batches = (values.len() / (MIN_BATCH_WINDOWS * w)).min(MAX_BATCHES);
    if batches < 2 {
        return f64::INFINITY;
    }
    let len = values.len() / batches;
    let means: Vec<f64> = values
        .chunks_exact(len)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Per-position window deviations `<P>_w - 1`.
fn window_deviations(stream: &PdmSymbolStream, w: usize, edge: EdgeMode) -> Vec<f64> {
    // prefix sums of the per-slot deviation keep magnitudes near sqrt(N)
    let dev: Vec<f64> = stream.slot_powers().into_iter().map(|p| p - 1.0).collect();
    let n = dev.len();
    let ext = match edge {
        EdgeMode::Discard => dev.len(),
        EdgeMode::Circular => dev.len() + w - 1,
    };
    let mut prefix = Vec::with_capacity(ext + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for t in 0..ext {
        acc += dev[t % n];
        prefix.push(acc);
    }
    let positions = match edge {
        EdgeMode::Discard => n - w + 1,
        EdgeMode::Circular => n,
    };
    let inv = 1.0 / w as f64;
    (0..positions)
        .map(|t| (prefix[t + w] - prefix[t]) * inv)
        .collect()
}

pub fn windowed_moments(stream: &PdmSymbolStream, w: usize) -> Result<WindowedMoments> {
    windowed_moments_with(stream, w, EdgeMode::Discard)
}

pub fn windowed_moments_with(
    stream: &PdmSymbolStream,
    w: usize,
    edge: EdgeMode,
) -> Result<WindowedMoments> {
    if w == 0 {
        return Err(Error::InvalidInput("window length must be at least 1".into()));
    }
    if w > stream.len() {
        return Err(Error::InvalidInput(format!(
            "window length {w} exceeds stream length {}",
            stream.len()
        )));
    }
    let d = window_deviations(stream, w, edge);
    let f = 2.0 * w as f64;
    let y2: Vec<f64> = d.iter().map(|x| x * x * f).collect();
    let y3: Vec<f64> = d.iter().map(|x| x * x * x * f * f).collect();
    let y4: Vec<f64> = d.iter().zip(&y2).map(|(x, a)| a + 2.0 * x + 1.0).collect();
    let y6: Vec<f64> = d
        .iter()
        .zip(y2.iter().zip(&y3))
        .map(|(x, (a, b))| b + 3.0 * a + 3.0 * x + 1.0)
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let m1 = mean(&d);
    let m2 = mean(&y2);
    let m3 = mean(&y3);
    Ok(WindowedMoments {
        w,
        m1,
        m2,
        m3,
        mu4: m2 + 2.0 * m1 + 1.0,
        mu6: m3 + 3.0 * m2 + 3.0 * m1 + 1.0,
        positions: d.len(),
        se_m2: batch_standard_error(&y2, w),
        se_m3: batch_standard_error(&y3, w),
        se_mu4: batch_standard_error(&y4, w),
        se_mu6: batch_standard_error(&y6, w),
    })
}

/// Windowed moments over a grid of window lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentProfile {
    pub entries: Vec<WindowedMoments>,
}

impl MomentProfile {
    pub fn windows(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.w).collect()
    }

    pub fn mu4(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mu4).collect()
    }

    pub fn mu6(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mu6).collect()
    }

    pub fn at(&self, w: usize) -> Option<&WindowedMoments> {
        self.entries.iter().find(|e| e.w == w)
    }

    pub const CSV_HEADER: &'static str = "w,m2_bar,m3_bar,mu4_bar,mu6_bar,n_positions";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{:.9e},{:.9e},{:.9e},{:.9e},{}\n",
                e.w, e.m2, e.m3, e.mu4, e.mu6, e.positions
            ));
        }
        out
    }

    /// First window at which `mu4_bar` falls to `level`, linearly
    /// interpolated in `log w`. `None` if the profile never gets there.
    pub fn crossing(&self, level: f64) -> Option<f64> {
        let e = &self.entries;
        if e.first()?.mu4 <= level {
            return Some(e[0].w as f64);
        }
        e.windows(2).find_map(|p| {
            let (a, b) = (&p[0], &p[1]);
            (a.mu4 > level && b.mu4 <= level).then(|| {
                let (la, lb) = ((a.w as f64).ln(), (b.w as f64).ln());
                let frac = (a.mu4 - level) / (a.mu4 - b.mu4);
                (la + frac * (lb - la)).exp()
            })
        })
    }
}

pub fn moment_profile(stream: &PdmSymbolStream, windows: &[usize]) -> Result<MomentProfile> {
    if windows.is_empty() {
        return Err(Error::InvalidInput("empty window grid".into()));
    }
    if windows.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidInput(
            "window grid must be strictly ascending".into(),
        ));
    }
    let entries = windows
        .par_iter()
        .map(|&w| windowed_moments(stream, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentProfile { entries })
}

/// Link parameters that set the optimal measurement windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRule {
    /// Symbol rate in Baud.
    pub r_sym: f64,
    /// Channel bandwidth in Hz.
    pub b_ch: f64,
    /// Group-velocity dispersion in s^2/m (sign ignored).
    pub beta2: f64,
    pub l_span: f64,
    pub n_span: usize,
    /// Channel spacing normalized to the symbol rate.
    pub delta_f: f64,
    pub n_ch: usize,
}

impl WindowRule {
    /// Real-valued `(w_spm, w_xpm)` before rounding.
    pub fn characteristic_windows(&self) -> (f64, f64) {
        let spm = 2.0
            * self.r_sym
            * self.b_ch
            * self.beta2.abs()
            * self.l_span
            * self.n_span as f64;
        (spm, spm * (self.delta_f * self.n_ch as f64).sqrt())
    }
}

/// Rounded optimal windows for SPM and XPM, at least 1.
pub fn optimal_windows(rule: &WindowRule) -> (usize, usize) {
    let (spm, xpm) = rule.characteristic_windows();
    let round = |x: f64| (x.round() as usize).max(1);
    (round(spm), round(xpm))
}

/// Outcome of the windowing-invariance test at one window and order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceEntry {
    pub w: usize,
    pub order: u32,
    pub value: f64,
    pub reference: f64,
    pub sigma: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub entries: Vec<InvarianceEntry>,
    pub n_sigma: f64,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

/// Checks that `m2_bar(w)` and `m3_bar(w)` agree with their `w = 1` values
/// within `n_sigma` combined standard errors.
pub fn iid_invariance_check(
    stream: &PdmSymbolStream,
    windows: &[usize],
    n_sigma: f64,
) -> Result<InvarianceReport> {
    let base = windowed_moments(stream, 1)?;
    let profile = moment_profile(stream, windows)?;
    let mut entries = Vec::new();
    for e in &profile.entries {
        for (order, value, se, reference, se_ref) in [
            (2, e.m2, e.se_m2, base.m2, base.se_m2),
            (3, e.m3, e.se_m3, base.m3, base.se_m3),
        ] {
            let diff = (value - reference).abs();
            let sigma = (se * se + se_ref * se_ref).sqrt();
            // an exact match passes even when no error estimate exists
            let pass = diff <= n_sigma * sigma || diff <= 1e-12 * (1.0 + reference.abs());
            entries.push(InvarianceEntry {
                w: e.w,
                order,
                value,
                reference,
                sigma,
                pass,
            });
        }
    }
    Ok(InvarianceReport { entries, n_sigma })
}

/// Weighted least-squares non-increasing fit (pool adjacent violators).
pub fn isotonic_nonincreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // blocks of (weighted mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &wt) in values.iter().zip(weights) {
        blocks.push((v, wt, 1));
        while blocks.len() > 1 {
            let (b, a) = (blocks[blocks.len() - 1], blocks[blocks.len() - 2]);
            if a.0 >= b.0 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            let w = a.1 + b.1;
            *last = ((a.0 * a.1 + b.0 * b.1) / w, w, a.2 + b.2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, c)| std::iter::repeat_n(m, c))
        .collect()
}

/// True when `mu4_bar` is non-increasing in `w` up to `n_sigma` standard
/// errors: every point lies within its band around the isotonic fit.
pub fn is_nonincreasing_within_ci(profile: &MomentProfile, n_sigma: f64) -> bool {
    let values = profile.mu4();
    let se: Vec<f64> = profile
        .entries
        .iter()
        .map(|e| e.se_mu4.max(1e-12))
        .collect();
    let weights: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    let fit = isotonic_nonincreasing(&values, &weights);
    values
        .iter()
        .zip(&fit)
        .zip(&se)
        .all(|((v, f), s)| (v - f).abs() <= n_sigma * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{draw_iid_stream, AmplitudeAlphabet};

    #[test]
    fn constant_power_gives_unit_moments() {
        let s = draw_iid_stream(&AmplitudeAlphabet::qam(1).unwrap(), 256, 1).unwrap();
        for w in [1, 2, 7, 64, 256] {
            let m = windowed_moments(&s, w).unwrap();
            assert_eq!(m.m2, 0.0);
            assert_eq!(m.m3, 0.0);
            assert_eq!(m.mu4, 1.0);
            assert_eq!(m.mu6, 1.0);
        }
    }

    #[test]
    fn constant_4d_modulus() {
        let s = PdmSymbolStream::from_pol_powers(&[2.0, 0.0], &[0.0, 2.0]).unwrap();
        let m = windowed_moments(&s, 1).unwrap();
        assert!((m.mu4 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn correlated_power_depends_on_window() {
        let s = PdmSymbolStream::from_pol_powers(&[2.0, 0.0], &[2.0, 0.0]).unwrap();
        let m = windowed_moments(&s, 1).unwrap();
        assert!((m.m2 - 2.0).abs() < 1e-15);
        assert!((m.mu4 - 3.0).abs() < 1e-15);
        let m = windowed_moments(&s, 2).unwrap();
        assert!(m.m2.abs() < 1e-15);
        assert!((m.mu4 - 1.0).abs() < 1e-15);
        assert_eq!(m.positions, 1);
    }

    #[test]
    fn window_errors() {
        let s = PdmSymbolStream::from_pol_powers(&[1.0; 4], &[1.0; 4]).unwrap();
        assert!(windowed_moments(&s, 0).is_err());
        assert!(windowed_moments(&s, 5).is_err());
        assert!(moment_profile(&s, &[2, 1]).is_err());
    }

    #[test]
    fn window_formulas() {
        let rule = WindowRule {
            r_sym: 88e9,
            b_ch: 88e9,
            beta2: 2.199e-26,
            l_span: 60e3,
            n_span: 1,
            delta_f: 100.0 / 88.0,
            n_ch: 5,
        };
        assert_eq!(optimal_windows(&rule).0, 20);
        let far = WindowRule { n_span: 72, ..rule };
        assert_eq!(optimal_windows(&far).0, 1471);
        let flat = WindowRule { beta2: 0.0, ..rule };
        assert_eq!(optimal_windows(&flat), (1, 1));
        let (spm, xpm) = rule.characteristic_windows();
        assert!((xpm / spm - (5.0f64 * 100.0 / 88.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pava_fits() {
        let fit = isotonic_nonincreasing(&[3.0, 1.0, 2.0, 0.0], &[1.0; 4]);
        assert_eq!(fit, vec![3.0, 1.5, 1.5, 0.0]);
        let fit = isotonic_nonincreasing(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]);
        assert_eq!(fit, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn run_repetition_fails_invariance() {
        let base = draw_iid_stream(&AmplitudeAlphabet::qam(4).unwrap(), 40_000, 5).unwrap();
        let repeated: Vec<_> = base
            .symbols()
            .iter()
            .flat_map(|s| std::iter::repeat_n(*s, 8))
            .collect();
        let s = PdmSymbolStream::from_raw(repeated).unwrap();
        let m1 = windowed_moments(&s, 1).unwrap();
        let m8 = windowed_moments(&s, 8).unwrap();
        // offset o mixes (8-o) slots of one symbol with o of the next:
        // m2_bar(8) / m2_bar(1) = mean_o((8-o)^2 + o^2) / 8 = 43 / 8
        let ratio = m8.m2 / m1.m2;
        assert!((ratio - 43.0 / 8.0).abs() < 0.25, "{ratio}");
        let report = iid_invariance_check(&s, &[1, 2, 4, 8, 16], 5.0).unwrap();
        assert!(!report.passed());
    }
}

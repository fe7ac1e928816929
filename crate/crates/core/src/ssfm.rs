//! Dual-polarization split-step fiber simulator.
//!
//! The symbol block is one FFT period, so pulse shaping, dispersion and
//! matched filtering are exact circular operations. Channel centers are
//! snapped to the nearest FFT bin.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::alphabet::PdmSymbolStream;
use crate::egn::{NliMeasurement, Scope};
use crate::error::{Error, Result};
use crate::windowed::WindowRule;

pub const PLANCK: f64 = 6.626_070_15e-34;

/// Physical and numerical link parameters. Units are SI unless the field
/// name says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub symbol_rate: f64,
    pub rolloff: f64,
    pub channels: usize,
    /// Center-to-center channel spacing (Hz).
    pub channel_spacing: f64,
    pub alpha_db_per_km: f64,
    /// s^2/m.
    pub beta2: f64,
    /// 1/(W m).
    pub gamma: f64,
    pub span_length: f64,
    pub spans: usize,
    /// `-inf` disables ASE.
    pub noise_figure_db: f64,
    pub center_frequency: f64,
    pub steps_per_span: usize,
    pub samples_per_symbol: usize,
    /// Symbols per channel and FFT period.
    pub symbols: usize,
    /// Bandwidth the launch powers refer to (Hz).
    pub reference_bandwidth: f64,
    /// Launch sweep in dBm per reference bandwidth.
    pub launch_dbm: Vec<f64>,
}

impl LinkConfig {
    /// Single channel, 5.5 GBd, two 60 km spans of standard fiber.
    /// Launch powers are per channel.
    pub fn desk() -> Self {
        let symbol_rate = 5.5e9;
        let rolloff = 0.1;
        Self {
            symbol_rate,
            rolloff,
            channels: 1,
            channel_spacing: symbol_rate * 100.0 / 88.0,
            alpha_db_per_km: 0.2,
            beta2: -2.199e-26,
            gamma: 1.3e-3,
            span_length: 60e3,
            spans: 2,
            noise_figure_db: 4.5,
            center_frequency: 193.4e12,
            steps_per_span: 100,
            samples_per_symbol: 8,
            symbols: 1 << 15,
            reference_bandwidth: symbol_rate * (1.0 + rolloff),
            launch_dbm: vec![-7.0, -6.0, -5.0, -4.0, -3.0, -2.0],
        }
    }

    /// Single channel, 22 GBd, twenty spans, shortened block.
    pub fn high_dispersion() -> Self {
        let symbol_rate = 22e9;
        Self {
            symbol_rate,
            channel_spacing: symbol_rate * 100.0 / 88.0,
            spans: 20,
            samples_per_symbol: 4,
            symbols: 1 << 12,
            reference_bandwidth: symbol_rate * 1.1,
            launch_dbm: vec![-4.0, -3.0, -2.0, -1.0, 0.0, 1.0],
            ..Self::desk()
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha_db_per_km * std::f64::consts::LN_10 / 10.0 / 1e3
    }

    /// Power gain that restores one span.
    pub fn span_gain(&self) -> f64 {
        (self.alpha() * self.span_length).exp()
    }

    pub fn n_sp(&self) -> f64 {
        10f64.powf(self.noise_figure_db / 10.0) / 2.0
    }

    pub fn sample_rate(&self) -> f64 {
        self.symbol_rate * self.samples_per_symbol as f64
    }

    pub fn fft_len(&self) -> usize {
        self.symbols * self.samples_per_symbol
    }

    pub fn occupied_bandwidth(&self) -> f64 {
        self.symbol_rate * (1.0 + self.rolloff)
    }

    /// Span from the lowest to the highest channel edge.
    pub fn total_bandwidth(&self) -> f64 {
        (self.channels as f64 - 1.0) * self.channel_spacing + self.occupied_bandwidth()
    }

    /// Channel launch power (W) for a sweep value in dBm per reference
    /// bandwidth.
    pub fn channel_power(&self, dbm: f64) -> f64 {
        1e-3 * 10f64.powf(dbm / 10.0) * self.occupied_bandwidth() / self.reference_bandwidth
    }

    /// Inverse of [`channel_power`](Self::channel_power).
    pub fn launch_dbm_of(&self, channel_w: f64) -> f64 {
        10.0 * (channel_w * self.reference_bandwidth / self.occupied_bandwidth() / 1e-3).log10()
    }

    pub fn channel_under_test(&self) -> usize {
        self.channels / 2
    }

    /// ASE power (W, both polarizations) in the symbol-rate bandwidth at
    /// the receiver.
    pub fn analytic_ase_power(&self) -> f64 {
        let h_nu = PLANCK * self.center_frequency;
        2.0 * self.spans as f64 * (self.span_gain() - 1.0) * h_nu * self.n_sp() * self.symbol_rate
    }

    /// Dispersive memory in symbols over the whole link.
    pub fn memory_symbols(&self) -> f64 {
        self.beta2.abs()
            * 2.0
            * PI
            * self.total_bandwidth()
            * self.span_length
            * self.spans as f64
            * self.symbol_rate
    }

    pub fn window_rule(&self) -> WindowRule {
        WindowRule {
            r_sym: self.symbol_rate,
            b_ch: self.symbol_rate,
            beta2: self.beta2,
            l_span: self.span_length,
            n_span: self.spans,
            delta_f: self.channel_spacing / self.symbol_rate,
            n_ch: self.channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let positive = [
            ("symbol_rate", self.symbol_rate),
            ("channel_spacing", self.channel_spacing),
            ("span_length", self.span_length),
            ("center_frequency", self.center_frequency),
            ("reference_bandwidth", self.reference_bandwidth),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [
            ("alpha_db_per_km", self.alpha_db_per_km),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !self.beta2.is_finite() {
            return bad("beta2 must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return bad(format!("rolloff must lie in [0, 1], got {}", self.rolloff));
        }
        if self.noise_figure_db.is_nan() || self.noise_figure_db == f64::INFINITY {
            return bad("noise_figure_db must be finite or -inf".into());
        }
        if self.channels == 0 || self.spans == 0 || self.steps_per_span == 0 {
            return bad("channels, spans and steps_per_span must be positive".into());
        }
        if !self.symbols.is_power_of_two() || !self.samples_per_symbol.is_power_of_two() {
            return bad("symbols and samples_per_symbol must be powers of two".into());
        }
        if self.channels > 1 && self.channel_spacing < self.occupied_bandwidth() {
            return bad("channel_spacing is smaller than the occupied bandwidth".into());
        }
        let needed = (self.total_bandwidth() / self.symbol_rate).ceil() as usize + 1;
        if self.samples_per_symbol < needed {
            return bad(format!(
                "aliasing: {} samples/symbol cannot hold {:.3} GHz plus guard; need at least {needed}",
                self.samples_per_symbol,
                self.total_bandwidth() / 1e9
            ));
        }
        if (self.symbols as f64) < 4.0 * self.memory_symbols() {
            return bad(format!(
                "{} symbols is shorter than 4x the channel memory of {:.1} symbols",
                self.symbols,
                self.memory_symbols()
            ));
        }
        if self.launch_dbm.iter().any(|p| !p.is_finite()) {
            return bad("launch powers must be finite".into());
        }
        Ok(())
    }

    /// Stable hash of every field, for tagging calibration records.
    pub fn fingerprint(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Dual-polarization complex baseband field (sqrt(W)).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub sample_rate: f64,
    pub center_frequency: f64,
}

impl FieldGrid {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Mean total power over both polarizations (W).
    pub fn power(&self) -> f64 {
        let s: f64 = self.x.iter().chain(&self.y).map(|c| c.norm_sqr()).sum();
        s / self.len() as f64
    }
}

/// Outcome of one transmission for the channel under test.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredRun {
    pub launch_dbm: f64,
    /// Channel power (W).
    pub launch_w: f64,
    pub channel: usize,
    pub seed: u64,
    pub snr_eff: f64,
    pub p_ase: f64,
    pub p_nli: f64,
    pub received: PdmSymbolStream,
}

impl MeasuredRun {
    pub const CSV_HEADER: &'static str = "launch_dbm,snr_eff_db,p_ase_dbm,p_nli_dbm,channel,seed";

    pub fn snr_eff_db(&self) -> f64 {
        10.0 * self.snr_eff.log10()
    }

    pub fn csv_row(&self) -> String {
        let dbm = |w: f64| 10.0 * (w / 1e-3).log10();
        format!(
            "{:.2},{:.6},{:.6},{:.6},{},{}",
            self.launch_dbm,
            self.snr_eff_db(),
            dbm(self.p_ase),
            dbm(self.p_nli),
            self.channel,
            self.seed
        )
    }
}

/// Data-aided receiver output.
#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    pub snr: f64,
    /// Per-polarization complex gain.
    pub gain: [Complex64; 2],
    pub signal_power: f64,
    pub error_power: f64,
    pub recovered: PdmSymbolStream,
}

/// Which physical effects a transmission includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunMode {
    pub nonlinear: bool,
    pub ase: bool,
}

impl RunMode {
    pub const FULL: RunMode = RunMode { nonlinear: true, ase: true };
    pub const ASE_ONLY: RunMode = RunMode { nonlinear: false, ase: true };
    pub const NOISELESS: RunMode = RunMode { nonlinear: true, ase: false };
    pub const LINEAR: RunMode = RunMode { nonlinear: false, ase: false };
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Squared-magnitude-preserving raised-cosine split: `|H(f)|` of the
/// root-raised-cosine filter normalized to unit passband.
pub fn rrc_response(f: f64, symbol_rate: f64, rolloff: f64) -> f64 {
    let af = f.abs();
    let lo = (1.0 - rolloff) * symbol_rate / 2.0;
    let hi = (1.0 + rolloff) * symbol_rate / 2.0;
    if af <= lo {
        1.0
    } else if af > hi {
        0.0
    } else {
        (0.5 * (1.0 + (PI / (rolloff * symbol_rate) * (af - lo)).cos())).sqrt()
    }
}

/// Precomputed simulator for one [`LinkConfig`].
pub struct Link {
    cfg: LinkConfig,
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    sym_fft: Arc<dyn Fft<f64>>,
    sym_ifft: Arc<dyn Fft<f64>>,
    /// Angular frequency of each FFT bin (rad/s).
    omega: Vec<f64>,
    half_step: Vec<Complex64>,
    full_step: Vec<Complex64>,
    whole_span: Vec<Complex64>,
    cd_inverse: Vec<Complex64>,
    step_leff: f64,
}

impl std::fmt::Debug for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Link").field("cfg", &self.cfg).finish()
    }
}

impl Link {
    pub fn new(cfg: LinkConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.fft_len();
        let mut planner = FftPlanner::new();
        let fs = cfg.sample_rate();
        let omega: Vec<f64> = (0..n)
            .map(|m| {
                let k = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
                2.0 * PI * k * fs / n as f64
            })
            .collect();
        let alpha = cfg.alpha();
        let h = cfg.span_length / cfg.steps_per_span as f64;
        let op = |len: f64| -> Vec<Complex64> {
            omega
                .iter()
                .map(|w| {
                    Complex64::new(-alpha / 2.0 * len, cfg.beta2 * w * w / 2.0 * len).exp() / n as f64
                })
                .collect()
        };
        let total = cfg.span_length * cfg.spans as f64;
        let cd_inverse = omega
            .iter()
            .map(|w| Complex64::from_polar(1.0, -cfg.beta2 * w * w / 2.0 * total))
            .collect();
        let step_leff = if alpha > 0.0 {
            2.0 / alpha * (alpha * h / 2.0).sinh()
        } else {
            h
        };
        Ok(Self {
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            sym_fft: planner.plan_fft_forward(cfg.symbols),
            sym_ifft: planner.plan_fft_inverse(cfg.symbols),
            half_step: op(h / 2.0),
            full_step: op(h),
            whole_span: op(cfg.span_length),
            cd_inverse,
            omega,
            step_leff,
            n,
            cfg,
        })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    /// Signed FFT-bin offset of a channel center.
    pub fn channel_bin(&self, channel: usize) -> i64 {
        let offset =
            (channel as f64 - (self.cfg.channels as f64 - 1.0) / 2.0) * self.cfg.channel_spacing;
        (offset * self.n as f64 / self.cfg.sample_rate()).round() as i64
    }

    /// Band-limited bin range `(q, rrc)` of one channel, in symbol-spectrum
    /// bins relative to the channel center.
    fn channel_band(&self) -> Vec<(i64, f64)> {
        let ns = self.cfg.symbols as i64;
        let df = self.cfg.symbol_rate / ns as f64;
        let edge = ((1.0 + self.cfg.rolloff) * ns as f64 / 2.0).ceil() as i64;
        (-edge..=edge)
            .map(|q| (q, rrc_response(q as f64 * df, self.cfg.symbol_rate, self.cfg.rolloff)))
            .filter(|&(_, h)| h > 0.0)
            .collect()
    }

    fn wrap(k: i64, len: usize) -> usize {
        k.rem_euclid(len as i64) as usize
    }

    fn check_streams(&self, streams: &[PdmSymbolStream]) -> Result<()> {
        if streams.len() != self.cfg.channels {
            return Err(Error::InvalidInput(format!(
                "{} streams for {} channels",
                streams.len(),
                self.cfg.channels
            )));
        }
        if let Some(s) = streams.iter().find(|s| s.len() < self.cfg.symbols) {
            return Err(Error::InvalidInput(format!(
                "stream of {} slots is shorter than the {}-symbol block",
                s.len(),
                self.cfg.symbols
            )));
        }
        Ok(())
    }

    /// RRC-shaped, frequency-shifted sum of all channels, each at
    /// `launch_w` watts.
    pub fn synthesize(&self, streams: &[PdmSymbolStream], launch_w: f64) -> Result<FieldGrid> {
        self.synthesize_masked(streams, launch_w, &vec![true; self.cfg.channels])
    }

    /// Like [`synthesize`](Self::synthesize) with only the `active`
    /// channels switched on.
    pub fn synthesize_masked(
        &self,
        streams: &[PdmSymbolStream],
        launch_w: f64,
        active: &[bool],
    ) -> Result<FieldGrid> {
        self.check_streams(streams)?;
        if !(launch_w > 0.0 && launch_w.is_finite()) {
            return Err(Error::InvalidParameter(format!("launch power {launch_w} W")));
        }
        let ns = self.cfg.symbols;
        let n = self.n;
        let band = self.channel_band();
        let mut spec = [vec![Complex64::default(); n], vec![Complex64::default(); n]];
        for (ch, stream) in streams.iter().enumerate() {
            if !active.get(ch).copied().unwrap_or(false) {
                continue;
            }
            let b = self.channel_bin(ch);
            let mut parts = [Vec::new(), Vec::new()];
            let mut energy = 0.0;
            for (pol, part) in parts.iter_mut().enumerate() {
                let mut s: Vec<Complex64> =
                    stream.symbols()[..ns].iter().map(|u| u[pol]).collect();
                self.sym_fft.process(&mut s);
                *part = band
                    .iter()
                    .map(|&(q, h)| (Self::wrap(b + q, n), s[Self::wrap(q, ns)] * h))
                    .collect::<Vec<_>>();
                energy += part.iter().map(|(_, v)| v.norm_sqr()).sum::<f64>();
            }
            let scale = (launch_w * (n * n) as f64 / energy).sqrt();
            for (pol, part) in parts.iter().enumerate() {
                for &(m, v) in part {
                    spec[pol][m] += v * scale;
                }
            }
        }
        let [mut x, mut y] = spec;
        for buf in [&mut x, &mut y] {
            self.ifft.process(buf);
            let inv = 1.0 / n as f64;
            buf.iter_mut().for_each(|v| *v *= inv);
        }
        Ok(FieldGrid {
            x,
            y,
            sample_rate: self.cfg.sample_rate(),
            center_frequency: self.cfg.center_frequency,
        })
    }

    fn apply_linear(&self, field: &mut FieldGrid, op: &[Complex64], scratch: &mut Vec<Complex64>) {
        for buf in [&mut field.x, &mut field.y] {
            self.fft.process_with_scratch(buf, scratch);
            buf.iter_mut().zip(op).for_each(|(v, h)| *v *= h);
            self.ifft.process_with_scratch(buf, scratch);
        }
    }

    /// Manakov phase rotation over an effective length.
    pub fn apply_nonlinear(&self, field: &mut FieldGrid, l_eff: f64) {
        let c = 8.0 / 9.0 * self.cfg.gamma * l_eff;
        for (x, y) in field.x.iter_mut().zip(field.y.iter_mut()) {
            let rot = Complex64::from_polar(1.0, c * (x.norm_sqr() + y.norm_sqr()));
            *x *= rot;
            *y *= rot;
        }
    }

    fn scratch(&self) -> Vec<Complex64> {
        let len = self
            .fft
            .get_inplace_scratch_len()
            .max(self.ifft.get_inplace_scratch_len());
        vec![Complex64::default(); len]
    }

    /// One fiber span by symmetric split-step. A span with `gamma = 0`
    /// (or `nonlinear = false`) is a single exact linear step.
    pub fn propagate_span(&self, field: &mut FieldGrid, nonlinear: bool) {
        let mut scratch = self.scratch();
        if !nonlinear || self.cfg.gamma == 0.0 {
            self.apply_linear(field, &self.whole_span, &mut scratch);
            return;
        }
        let k = self.cfg.steps_per_span;
        self.apply_linear(field, &self.half_step, &mut scratch);
        for s in 0..k {
            self.apply_nonlinear(field, self.step_leff);
            let op = if s + 1 < k { &self.full_step } else { &self.half_step };
            self.apply_linear(field, op, &mut scratch);
        }
    }

    /// EDFA restoring one span, with ASE drawn from `seed` when enabled.
    pub fn amplify(&self, field: &mut FieldGrid, seed: u64, ase: bool) {
        let g = self.cfg.span_gain();
        let amp = g.sqrt();
        field.x.iter_mut().chain(field.y.iter_mut()).for_each(|v| *v *= amp);
        let n_sp = self.cfg.n_sp();
        if !ase || n_sp == 0.0 {
            return;
        }
        let var = (g - 1.0) * PLANCK * self.cfg.center_frequency * n_sp * self.cfg.sample_rate();
        let sigma = (var / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in field.x.iter_mut().chain(field.y.iter_mut()) {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *v += Complex64::new(re, im) * sigma;
        }
    }

    /// Full link: every span followed by its amplifier.
    pub fn transmit(&self, field: &mut FieldGrid, seed: u64, mode: RunMode) {
        for span in 0..self.cfg.spans {
            self.propagate_span(field, mode.nonlinear);
            self.amplify(field, splitmix(seed ^ splitmix(span as u64 + 1)), mode.ase);
        }
    }

    /// Channel selection, dispersion compensation, matched filtering,
    /// symbol-rate sampling and a per-polarization complex gain fit.
    pub fn receive(
        &self,
        field: &FieldGrid,
        channel: usize,
        tx: &PdmSymbolStream,
    ) -> Result<Reception> {
        if channel >= self.cfg.channels {
            return Err(Error::InvalidInput(format!("channel {channel} does not exist")));
        }
        let ns = self.cfg.symbols;
        if tx.len() < ns || field.len() != self.n {
            return Err(Error::InvalidInput("field or reference has the wrong length".into()));
        }
        let b = self.channel_bin(channel);
        let band = self.channel_band();
        let mut scratch = self.scratch();
        let mut gain = [Complex64::default(); 2];
        let mut signal = 0.0;
        let mut error = 0.0;
        let mut recovered = vec![[Complex64::default(); 2]; ns];
        for pol in 0..2 {
            let mut spec = if pol == 0 { field.x.clone() } else { field.y.clone() };
            self.fft.process_with_scratch(&mut spec, &mut scratch);
            let mut z = vec![Complex64::default(); ns];
            for &(q, h) in &band {
                let m = Self::wrap(b + q, self.n);
                z[Self::wrap(q, ns)] += spec[m] * self.cd_inverse[m] * h;
            }
            self.sym_ifft.process(&mut z);
            let s: Vec<Complex64> = tx.symbols()[..ns].iter().map(|u| u[pol]).collect();
            let num: Complex64 = z.iter().zip(&s).map(|(r, t)| r * t.conj()).sum();
            let den: f64 = s.iter().map(|t| t.norm_sqr()).sum();
            let g = num / den;
            gain[pol] = g;
            for (k, (r, t)) in z.iter().zip(&s).enumerate() {
                signal += (g * t).norm_sqr();
                error += (r - g * t).norm_sqr();
                recovered[k][pol] = r / g;
            }
        }
        Ok(Reception {
            snr: signal / error,
            gain,
            signal_power: signal / ns as f64,
            error_power: error / ns as f64,
            recovered: PdmSymbolStream::from_raw(recovered)?,
        })
    }

    /// Transmits `streams` and returns the reception of `channel`.
    pub fn simulate(
        &self,
        streams: &[PdmSymbolStream],
        launch_w: f64,
        seed: u64,
        mode: RunMode,
        active: &[bool],
        channel: usize,
    ) -> Result<Reception> {
        let mut field = self.synthesize_masked(streams, launch_w, active)?;
        self.transmit(&mut field, seed, mode);
        self.receive(&field, channel, &streams[channel])
    }

    /// One sweep point: a full run and an ASE-only run with the same noise
    /// seed, split into ASE and NLI powers.
    pub fn measure(&self, streams: &[PdmSymbolStream], launch_dbm: f64, seed: u64) -> Result<MeasuredRun> {
        let launch_w = self.cfg.channel_power(launch_dbm);
        let ch = self.cfg.channel_under_test();
        let all = vec![true; self.cfg.channels];
        let full = self.simulate(streams, launch_w, seed, RunMode::FULL, &all, ch)?;
        let p_ase = if self.cfg.n_sp() > 0.0 {
            let lin = self.simulate(streams, launch_w, seed, RunMode::ASE_ONLY, &all, ch)?;
            launch_w / lin.snr
        } else {
            0.0
        };
        let total = launch_w / full.snr;
        Ok(MeasuredRun {
            launch_dbm,
            launch_w,
            channel: ch,
            seed,
            snr_eff: full.snr,
            p_ase,
            p_nli: total - p_ase,
            received: full.recovered,
        })
    }

    /// Ratio in dB of noiseless NLI power at the configured step count to
    /// that at twice the step count.
    pub fn step_convergence_db(&self, streams: &[PdmSymbolStream], launch_w: f64) -> Result<f64> {
        let fine = Link::new(LinkConfig {
            steps_per_span: 2 * self.cfg.steps_per_span,
            ..self.cfg.clone()
        })?;
        let ch = self.cfg.channel_under_test();
        let all = vec![true; self.cfg.channels];
        let a = self.simulate(streams, launch_w, 0, RunMode::NOISELESS, &all, ch)?;
        let b = fine.simulate(streams, launch_w, 0, RunMode::NOISELESS, &all, ch)?;
        Ok(10.0 * (b.snr / a.snr).log10())
    }

    /// Power spectrum `(frequency offset Hz, power W)` of both
    /// polarizations, in FFT bin order.
    pub fn power_spectrum(&self, field: &FieldGrid) -> Vec<(f64, f64)> {
        let mut scratch = self.scratch();
        let mut total = vec![0.0; self.n];
        for buf in [&field.x, &field.y] {
            let mut s = buf.clone();
            self.fft.process_with_scratch(&mut s, &mut scratch);
            let norm = 1.0 / (self.n * self.n) as f64;
            total.iter_mut().zip(&s).for_each(|(t, v)| *t += v.norm_sqr() * norm);
        }
        self.omega
            .iter()
            .zip(total)
            .map(|(w, p)| (w / (2.0 * PI), p))
            .collect()
    }
}

impl NliMeasurement for Link {
    fn channels(&self) -> usize {
        self.cfg.channels
    }

    fn slots(&self) -> usize {
        self.cfg.symbols
    }

    /// Noiseless runs; `launch_w` is the channel power in watts.
    fn nli_power(
        &self,
        streams: &[PdmSymbolStream],
        launch_w: f64,
        seed: u64,
        scope: Scope,
    ) -> Result<f64> {
        let ch = self.cfg.channel_under_test();
        let mut alone = vec![false; self.cfg.channels];
        alone[ch] = true;
        let spm = launch_w / self.simulate(streams, launch_w, seed, RunMode::NOISELESS, &alone, ch)?.snr;
        match scope {
            Scope::Spm => Ok(spm),
            Scope::Xpm => {
                let all = vec![true; self.cfg.channels];
                let total =
                    launch_w / self.simulate(streams, launch_w, seed, RunMode::NOISELESS, &all, ch)?.snr;
                Ok(total - spm)
            }
        }
    }

    fn fingerprint(&self) -> String {
        self.cfg.fingerprint()
    }
}

/// Sweeps every configured launch power for every seed. `streams_for`
/// maps a seed to the per-channel transmit streams. Rows are ordered by
/// launch power, then seed.
pub fn run_experiment<F>(cfg: &LinkConfig, streams_for: F, seeds: &[u64]) -> Result<Vec<MeasuredRun>>
where
    F: Fn(u64) -> Result<Vec<PdmSymbolStream>> + Sync,
{
    if seeds.is_empty() || cfg.launch_dbm.is_empty() {
        return Err(Error::InvalidParameter("need at least one seed and launch power".into()));
    }
    let link = Link::new(cfg.clone())?;
    let streams = seeds
        .par_iter()
        .map(|&s| streams_for(s))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(f64, usize)> = cfg
        .launch_dbm
        .iter()
        .flat_map(|&p| (0..seeds.len()).map(move |i| (p, i)))
        .collect();
    jobs.par_iter()
        .map(|&(p, i)| link.measure(&streams[i], p, seeds[i]))
        .collect()
}

/// Launch power (dBm per reference bandwidth) with the highest mean
/// SNR across seeds, and that mean in dB.
pub fn best_launch(runs: &[MeasuredRun]) -> Option<(f64, f64)> {
    let mut powers: Vec<f64> = runs.iter().map(|r| r.launch_dbm).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    powers
        .into_iter()
        .map(|p| {
            let snr: Vec<f64> = runs.iter().filter(|r| r.launch_dbm == p).map(|r| r.snr_eff).collect();
            (p, 10.0 * (snr.iter().sum::<f64>() / snr.len() as f64).log10())
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

//! End-to-end pipelines: modulation sources, calibration, and the
//! split-step versus EGN comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{
    classical_moments, draw_gaussian_stream, draw_iid_stream, AmplitudeAlphabet, PdmSymbolStream,
};
use crate::egn::{calibrate_kappas, cube_law_fit, CalibrationPlan, KappaSet, Moments, Scope};
use crate::error::{Error, Result};
use crate::shaping::{shaped_stream, EssCodec1D, EssCodec4D, ShapingCodec};
use crate::ssfm::{best_launch, run_experiment, Link, LinkConfig, MeasuredRun};
use crate::windowed::{optimal_windows, windowed_moments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModulationKind {
    Gaussian,
    Qpsk,
    IidQam,
    Mb,
    Ess1d,
    Ess4d,
}

/// Description of a symbol source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationSpec {
    pub kind: ModulationKind,
    /// Positive amplitude levels per real dimension.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Shaping block length in PDM slots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Target entropy in bits per positive amplitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_cap: Option<u64>,
}

fn default_m() -> usize {
    4
}

impl ModulationSpec {
    pub fn new(kind: ModulationKind) -> Self {
        Self { kind, m: 4, n: None, entropy: None, inner_cap: None }
    }

    pub fn shaped(kind: ModulationKind, n: usize, entropy: f64) -> Self {
        Self { n: Some(n), entropy: Some(entropy), ..Self::new(kind) }
    }

    pub fn mb(entropy: f64) -> Self {
        Self { entropy: Some(entropy), ..Self::new(ModulationKind::Mb) }
    }

    /// Short name used in CSV rows.
    pub fn label(&self) -> String {
        match self.kind {
            ModulationKind::Gaussian => "gaussian".into(),
            ModulationKind::Qpsk => "qpsk".into(),
            ModulationKind::IidQam => format!("iid-qam{}", 4 * self.m * self.m),
            ModulationKind::Mb => format!("mb-h{}", self.entropy.unwrap_or(0.0)),
            ModulationKind::Ess1d => format!("ess1d-n{}", self.n.unwrap_or(0)),
            ModulationKind::Ess4d => format!("ess4d-n{}", self.n.unwrap_or(0)),
        }
    }

    /// Payload bits per shaping block for shaped kinds.
    pub fn target_bits(&self) -> Option<u64> {
        Some((4.0 * self.n? as f64 * self.entropy?).round() as u64)
    }

    pub fn validate(&self) -> Result<()> {
        let shaped = matches!(self.kind, ModulationKind::Ess1d | ModulationKind::Ess4d);
        if self.m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        if shaped && self.n.is_none_or(|n| n == 0) {
            return Err(Error::Config(format!("{:?} needs a positive block length n", self.kind)));
        }
        if matches!(self.kind, ModulationKind::Mb) || shaped {
            let Some(h) = self.entropy else {
                return Err(Error::Config(format!("{:?} needs an entropy", self.kind)));
            };
            let max = (self.m as f64).log2();
            if !(h > 0.0 && h < max) {
                return Err(Error::Config(format!(
                    "entropy {h} is not achievable with M = {}; it must lie in (0, {max})",
                    self.m
                )));
            }
        }
        if self.inner_cap.is_some() && self.kind != ModulationKind::Ess4d {
            return Err(Error::Config("inner_cap only applies to ess4d".into()));
        }
        Ok(())
    }

    /// Builds the (possibly expensive) source once.
    pub fn source(&self) -> Result<Source> {
        self.validate()?;
        let bits = self.target_bits();
        Ok(match self.kind {
            ModulationKind::Gaussian => Source::Gaussian,
            ModulationKind::Qpsk => Source::Iid(AmplitudeAlphabet::qam(1)?),
            ModulationKind::IidQam => Source::Iid(AmplitudeAlphabet::qam(self.m)?),
            ModulationKind::Mb => Source::Iid(AmplitudeAlphabet::maxwell_boltzmann(
                self.m,
                self.entropy.unwrap_or_default(),
            )?),
            ModulationKind::Ess1d => Source::Ess1d(EssCodec1D::for_rate(
                self.m,
                self.n.unwrap_or_default(),
                bits.unwrap_or_default(),
            )?),
            ModulationKind::Ess4d => Source::Ess4d(EssCodec4D::for_rate(
                self.m,
                self.n.unwrap_or_default(),
                bits.unwrap_or_default(),
                self.inner_cap,
            )?),
        })
    }
}

/// A ready-to-draw symbol source.
#[derive(Debug, Clone)]
pub enum Source {
    Gaussian,
    Iid(AmplitudeAlphabet),
    Ess1d(EssCodec1D),
    Ess4d(EssCodec4D),
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn shaped<C: ShapingCodec>(codec: &C, slots: usize, seed: u64) -> Result<PdmSymbolStream> {
    let blocks = slots.div_ceil(codec.slots());
    let s = shaped_stream(codec, blocks, seed, mix(seed, 1))?;
    if s.len() == slots {
        Ok(s)
    } else {
        PdmSymbolStream::from_raw(s.symbols()[..slots].to_vec())
    }
}

impl Source {
    /// Deterministic stream of exactly `slots` slots.
    pub fn stream(&self, slots: usize, seed: u64) -> Result<PdmSymbolStream> {
        match self {
            Source::Gaussian => draw_gaussian_stream(slots, seed),
            Source::Iid(a) => draw_iid_stream(a, slots, seed),
            Source::Ess1d(c) => shaped(c, slots, seed),
            Source::Ess4d(c) => shaped(c, slots, seed),
        }
    }

    /// Independent streams for each channel of a link.
    pub fn channel_streams(&self, channels: usize, slots: usize, seed: u64) -> Result<Vec<PdmSymbolStream>> {
        (0..channels)
            .map(|ch| self.stream(slots, mix(seed, 0x100 + ch as u64)))
            .collect()
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// SPM (and, with several channels, XPM) coefficients of a link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkKappas {
    pub spm: KappaSet,
    pub xpm: Option<KappaSet>,
}

/// Calibrates against the three i.i.d. references at the given channel
/// launch powers (dBm per reference bandwidth).
pub fn calibrate_link(cfg: &LinkConfig, launch_dbm: &[f64], seeds: &[u64]) -> Result<LinkKappas> {
    let link = Link::new(cfg.clone())?;
    let plan = CalibrationPlan {
        launch_w: launch_dbm.iter().map(|&p| cfg.channel_power(p)).collect(),
        seeds: seeds.to_vec(),
        window: 1,
    };
    let spm = calibrate_kappas(&link, &plan, Scope::Spm)?;
    let xpm = if cfg.channels > 1 {
        Some(calibrate_kappas(&link, &plan, Scope::Xpm)?)
    } else {
        None
    };
    Ok(LinkKappas { spm, xpm })
}

/// Moments that feed the two predictions of one format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormatMoments {
    pub classical: Moments,
    pub spm: Moments,
    pub xpm: Moments,
    pub w_spm: usize,
    pub w_xpm: usize,
}

pub fn format_moments(stream: &PdmSymbolStream, cfg: &LinkConfig) -> Result<FormatMoments> {
    let (w_spm, w_xpm) = optimal_windows(&cfg.window_rule());
    let c = classical_moments(stream)?;
    let at = |w: usize| -> Result<Moments> {
        let m = windowed_moments(stream, w)?;
        Ok(Moments { mu4: m.mu4, mu6: m.mu6 })
    };
    Ok(FormatMoments {
        classical: Moments { mu4: c.mu4, mu6: c.mu6 },
        spm: at(w_spm)?,
        xpm: at(w_xpm)?,
        w_spm,
        w_xpm,
    })
}

impl LinkKappas {
    /// Total NLI coefficient for the given SPM and XPM moments.
    pub fn eta(&self, spm: Moments, xpm: Moments) -> f64 {
        self.spm.eta(spm.mu4, spm.mu6) + self.xpm.as_ref().map_or(0.0, |k| k.eta(xpm.mu4, xpm.mu6))
    }

    /// `(classical, windowed)` coefficients of a format.
    pub fn predict(&self, m: &FormatMoments) -> (f64, f64) {
        (self.eta(m.classical, m.classical), self.eta(m.spm, m.xpm))
    }
}

/// One sweep point of one format, averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub format: String,
    pub launch_dbm: f64,
    pub snr_ssfm_db: f64,
    pub snr_w1_db: f64,
    pub snr_wopt_db: f64,
    pub p_nli_ssfm: f64,
    pub p_nli_w1: f64,
    pub p_nli_wopt: f64,
}

/// Per-format outcome at the best launch power of each method.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatOutcome {
    pub format: String,
    pub moments: FormatMoments,
    /// Cube-law NLI coefficient from the split-step sweep.
    pub eta_ssfm: f64,
    pub eta_w1: f64,
    pub eta_wopt: f64,
    pub best_ssfm_db: f64,
    pub best_w1_db: f64,
    pub best_wopt_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub outcomes: Vec<FormatOutcome>,
    pub runs: Vec<(String, MeasuredRun)>,
    pub p_ase: f64,
}

impl CompareReport {
    pub const CSV_HEADER: &'static str = "format,launch_dbm,snr_ssfm_db,snr_egn_w1_db,snr_egn_wopt_db,p_nli_ssfm_dbm,p_nli_w1_dbm,p_nli_wopt_dbm";

    pub fn spearman_wopt(&self) -> f64 {
        let a: Vec<f64> = self.outcomes.iter().map(|o| o.eta_ssfm).collect();
        let b: Vec<f64> = self.outcomes.iter().map(|o| o.eta_wopt).collect();
        spearman(&a, &b)
    }

    pub fn spearman_w1(&self) -> f64 {
        let a: Vec<f64> = self.outcomes.iter().map(|o| o.eta_ssfm).collect();
        let b: Vec<f64> = self.outcomes.iter().map(|o| o.eta_w1).collect();
        spearman(&a, &b)
    }

    /// Largest `|SNR_pred - SNR_ssfm|` at each method's best launch power.
    pub fn max_delta_at_optimum(&self) -> (f64, f64) {
        self.outcomes.iter().fold((0.0, 0.0), |(a, b), o| {
            (
                f64::max(a, (o.best_w1_db - o.best_ssfm_db).abs()),
                f64::max(b, (o.best_wopt_db - o.best_ssfm_db).abs()),
            )
        })
    }

    /// Largest `|SNR_pred - SNR_ssfm|` over every sweep point.
    pub fn max_delta_over_sweep(&self) -> (f64, f64) {
        self.rows.iter().fold((0.0, 0.0), |(a, b), r| {
            (
                f64::max(a, (r.snr_w1_db - r.snr_ssfm_db).abs()),
                f64::max(b, (r.snr_wopt_db - r.snr_ssfm_db).abs()),
            )
        })
    }

    pub fn to_csv(&self) -> String {
        let dbm = |w: f64| 10.0 * (w / 1e-3).log10();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.2},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.format,
                r.launch_dbm,
                r.snr_ssfm_db,
                r.snr_w1_db,
                r.snr_wopt_db,
                dbm(r.p_nli_ssfm),
                dbm(r.p_nli_w1),
                dbm(r.p_nli_wopt)
            ));
        }
        out
    }

    /// `metric,value` lines plus one line per format.
    pub fn summary_csv(&self) -> String {
        let (o1, ow) = self.max_delta_at_optimum();
        let (s1, sw) = self.max_delta_over_sweep();
        let mut out = String::from("metric,value\n");
        for (k, v) in [
            ("spearman_w1", self.spearman_w1()),
            ("spearman_wopt", self.spearman_wopt()),
            ("max_abs_dsnr_opt_w1_db", o1),
            ("max_abs_dsnr_opt_wopt_db", ow),
            ("max_abs_dsnr_sweep_w1_db", s1),
            ("max_abs_dsnr_sweep_wopt_db", sw),
            ("p_ase_dbm", 10.0 * (self.p_ase / 1e-3).log10()),
        ] {
            out.push_str(&format!("{k},{v:.6}\n"));
        }
        for o in &self.outcomes {
            out.push_str(&format!("best_ssfm_db[{}],{:.6}\n", o.format, o.best_ssfm_db));
            out.push_str(&format!("best_w1_db[{}],{:.6}\n", o.format, o.best_w1_db));
            out.push_str(&format!("best_wopt_db[{}],{:.6}\n", o.format, o.best_wopt_db));
        }
        out
    }
}

fn snr_db(p: f64, p_ase: f64, p_nli: f64) -> f64 {
    10.0 * (p / (p_ase + p_nli)).log10()
}

/// Runs the split-step sweep for each format and sets it against EGN
/// predictions from classical moments and from windowed moments at the
/// link's optimal windows. Prediction moments come from an independent
/// stream of `moment_slots` slots. ASE in the predictions is analytic.
pub fn compare(
    cfg: &LinkConfig,
    formats: &[ModulationSpec],
    kappas: &LinkKappas,
    seeds: &[u64],
    moment_slots: usize,
) -> Result<CompareReport> {
    if formats.is_empty() {
        return Err(Error::InvalidParameter("no formats to compare".into()));
    }
    let p_ase = cfg.analytic_ase_power();
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    let mut all_runs = Vec::new();
    for spec in formats {
        let label = spec.label();
        let source = spec.source()?;
        let long = source.stream(moment_slots, mix(u64::MAX, moment_slots as u64))?;
        let moments = format_moments(&long, cfg)?;
        let (eta_w1, eta_wopt) = kappas.predict(&moments);
        let runs = run_experiment(
            cfg,
            |seed| source.channel_streams(cfg.channels, cfg.symbols, seed),
            seeds,
        )?;
        let mut launch_w = Vec::new();
        let mut nli = Vec::new();
        for &dbm in &cfg.launch_dbm {
            let at: Vec<&MeasuredRun> = runs.iter().filter(|r| r.launch_dbm == dbm).collect();
            let k = at.len() as f64;
            let p = cfg.channel_power(dbm);
            let snr = at.iter().map(|r| r.snr_eff).sum::<f64>() / k;
            let p_nli = at.iter().map(|r| r.p_nli).sum::<f64>() / k;
            launch_w.push(p);
            nli.push(p_nli);
            let (n1, nw) = (eta_w1 * p.powi(3), eta_wopt * p.powi(3));
            rows.push(CompareRow {
                format: label.clone(),
                launch_dbm: dbm,
                snr_ssfm_db: 10.0 * snr.log10(),
                snr_w1_db: snr_db(p, p_ase, n1),
                snr_wopt_db: snr_db(p, p_ase, nw),
                p_nli_ssfm: p_nli,
                p_nli_w1: n1,
                p_nli_wopt: nw,
            });
        }
        let (eta_ssfm, _) = cube_law_fit(&launch_w, &nli)?;
        let best_pred = |eta: f64| {
            cfg.launch_dbm
                .iter()
                .map(|&d| {
                    let p = cfg.channel_power(d);
                    snr_db(p, p_ase, eta * p.powi(3))
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let (_, best_ssfm_db) = best_launch(&runs).expect("sweep is nonempty");
        outcomes.push(FormatOutcome {
            format: label.clone(),
            moments,
            eta_ssfm,
            eta_w1,
            eta_wopt,
            best_ssfm_db,
            best_w1_db: best_pred(eta_w1),
            best_wopt_db: best_pred(eta_wopt),
        });
        all_runs.extend(runs.into_iter().map(|r| (label.clone(), r)));
    }
    Ok(CompareReport { rows, outcomes, runs: all_runs, p_ase })
}

/// Predicted best-launch SNR (dB) of a format from windowed moments only.
pub fn predicted_best_snr_db(
    cfg: &LinkConfig,
    kappas: &LinkKappas,
    moments: &FormatMoments,
) -> f64 {
    let eta = kappas.predict(moments).1;
    let p_ase = cfg.analytic_ase_power();
    cfg.launch_dbm
        .iter()
        .map(|&d| {
            let p = cfg.channel_power(d);
            snr_db(p, p_ase, eta * p.powi(3))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Streams for every seed, generated in parallel.
pub fn streams_for_seeds(
    source: &Source,
    channels: usize,
    slots: usize,
    seeds: &[u64],
) -> Result<Vec<Vec<PdmSymbolStream>>> {
    seeds
        .par_iter()
        .map(|&s| source.channel_streams(channels, slots, s))
        .collect()
}

//! EGN-style NLI prediction with empirically calibrated coefficients.
//!
//! The NLI coefficient is affine in the standardized moments,
//! `eta = k1 + (mu4 - 2) k2 + (mu6 - 9 mu4 + 12) k3`, so three reference
//! formats with independent moment vectors pin `(k1, k2, k3)` exactly.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{draw_gaussian_stream, draw_iid_stream, AmplitudeAlphabet, PdmSymbolStream};
use crate::error::{Error, Result};
use crate::windowed::windowed_moments;

/// Largest acceptable condition number of the calibration system.
pub const MAX_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Spm,
    Xpm,
}

/// Calibrated NLI coefficients (1/W^2) for one scope and link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSet {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub scope: Scope,
    /// Window at which the calibration moments were measured.
    pub window: usize,
    pub fingerprint: String,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Relative spread of each reference format's cube-law fit.
    #[serde(default)]
    pub residuals: Vec<f64>,
    /// Relative standard error of each reference `eta` across seeds.
    #[serde(default)]
    pub eta_rel_se: Vec<f64>,
}

impl KappaSet {
    pub fn from_coefficients(k: [f64; 3], scope: Scope) -> Self {
        Self {
            kappa1: k[0],
            kappa2: k[1],
            kappa3: k[2],
            scope,
            window: 1,
            fingerprint: String::new(),
            seeds: Vec::new(),
            residuals: Vec::new(),
            eta_rel_se: Vec::new(),
        }
    }

    pub fn eta(&self, mu4: f64, mu6: f64) -> f64 {
        eta_from_moments(self, mu4, mu6)
    }

    pub fn to_record(&self) -> String {
        toml::to_string(self).expect("kappa record serializes")
    }

    pub fn from_record(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("kappa record: {e}")))
    }
}

pub fn eta_from_moments(kappas: &KappaSet, mu4: f64, mu6: f64) -> f64 {
    kappas.kappa1 + (mu4 - 2.0) * kappas.kappa2 + (mu6 - 9.0 * mu4 + 12.0) * kappas.kappa3
}

fn design_row(mu4: f64, mu6: f64) -> [f64; 3] {
    [1.0, mu4 - 2.0, mu6 - 9.0 * mu4 + 12.0]
}

/// Solves for `(k1, k2, k3)` from `(mu4, mu6, eta)` observations; least
/// squares when more than three are given.
pub fn solve_kappas(observations: &[(f64, f64, f64)]) -> Result<[f64; 3]> {
    if observations.len() < 3 {
        return Err(Error::CalibrationFailed(
            "at least three reference formats are required".into(),
        ));
    }
    let rows: Vec<f64> = observations
        .iter()
        .flat_map(|&(m4, m6, _)| design_row(m4, m6))
        .collect();
    let a = DMatrix::from_row_slice(observations.len(), 3, &rows);
    let b = DVector::from_iterator(observations.len(), observations.iter().map(|o| o.2));
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let cond = sv.max() / sv.min();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::CalibrationFailed(format!(
            "moment system is ill-conditioned (condition number {cond:.3e})"
        )));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::CalibrationFailed(e.to_string()))?;
    Ok([x[0], x[1], x[2]])
}

/// Least-squares `eta` in `p_nli = eta * P^3`, weighting each point by its
/// relative error. Returns `(eta, relative rms residual)`.
pub fn cube_law_fit(launch_w: &[f64], p_nli: &[f64]) -> Result<(f64, f64)> {
    if launch_w.is_empty() || launch_w.len() != p_nli.len() {
        return Err(Error::InvalidInput("mismatched cube-law samples".into()));
    }
    let ratios: Vec<f64> = launch_w
        .iter()
        .zip(p_nli)
        .map(|(p, n)| n / p.powi(3))
        .collect();
    let eta = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let rms = (ratios.iter().map(|r| (r / eta - 1.0).powi(2)).sum::<f64>()
        / ratios.len() as f64)
        .sqrt();
    Ok((eta, rms))
}

/// Log-log slope of `y` against `x` by ordinary least squares.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Predicted or measured noise budget at one launch power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NliReport {
    /// Channel launch power (W).
    pub launch_power: f64,
    pub p_nli: f64,
    pub p_ase: f64,
    /// Total NLI coefficient (1/W^2).
    pub eta: f64,
    /// Linear effective SNR.
    pub snr_eff: f64,
}

impl NliReport {
    pub fn snr_eff_db(&self) -> f64 {
        10.0 * self.snr_eff.log10()
    }
}

/// Standardized moments fed into a prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mu4: f64,
    pub mu6: f64,
}

pub fn predict_snr(
    spm: &KappaSet,
    xpm: Option<&KappaSet>,
    spm_moments: Moments,
    xpm_moments: Moments,
    launch_power: f64,
    p_ase: f64,
) -> NliReport {
    let eta = spm.eta(spm_moments.mu4, spm_moments.mu6)
        + xpm.map_or(0.0, |k| k.eta(xpm_moments.mu4, xpm_moments.mu6));
    let p_nli = eta * launch_power.powi(3);
    NliReport {
        launch_power,
        p_nli,
        p_ase,
        eta,
        snr_eff: launch_power / (p_ase + p_nli),
    }
}

/// Launch power maximizing `P / (p_ase + eta P^3)`.
pub fn optimal_launch_power(eta: f64, p_ase: f64) -> f64 {
    (p_ase / (2.0 * eta)).cbrt()
}

/// The three i.i.d. formats used for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceFormat {
    Gaussian,
    Qpsk,
    Qam64,
}

impl ReferenceFormat {
    pub const ALL: [ReferenceFormat; 3] = [Self::Gaussian, Self::Qpsk, Self::Qam64];

    pub fn draw(self, slots: usize, seed: u64) -> Result<PdmSymbolStream> {
        match self {
            Self::Gaussian => draw_gaussian_stream(slots, seed),
            Self::Qpsk => draw_iid_stream(&AmplitudeAlphabet::qam(1)?, slots, seed),
            Self::Qam64 => draw_iid_stream(&AmplitudeAlphabet::qam(4)?, slots, seed),
        }
    }
}

/// Something that can measure NLI power for a set of per-channel streams.
pub trait NliMeasurement: Sync {
    fn channels(&self) -> usize;
    /// Symbol slots per channel stream.
    fn slots(&self) -> usize;
    /// NLI power (W) on the channel under test at the given channel launch
    /// power. SPM scope uses the channel alone; XPM scope returns the
    /// multi-channel NLI minus the single-channel NLI.
    fn nli_power(
        &self,
        streams: &[PdmSymbolStream],
        launch_w: f64,
        seed: u64,
        scope: Scope,
    ) -> Result<f64>;
    fn fingerprint(&self) -> String;
}

/// Calibration settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPlan {
    pub launch_w: Vec<f64>,
    pub seeds: Vec<u64>,
    pub window: usize,
}

/// Per-format calibration data.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub format: ReferenceFormat,
    pub mu4: f64,
    pub mu6: f64,
    pub eta: f64,
    pub eta_rel_se: f64,
    pub fit_residual: f64,
}

fn channel_seed(seed: u64, format: usize, channel: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ ((format as u64) << 48)
        ^ ((channel as u64) << 32)
}

/// Measures `eta` for the three reference formats.
pub fn measure_reference_points<S: NliMeasurement>(
    sim: &S,
    plan: &CalibrationPlan,
    scope: Scope,
) -> Result<Vec<ReferencePoint>> {
    if plan.launch_w.is_empty() || plan.seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "calibration needs launch powers and seeds".into(),
        ));
    }
    ReferenceFormat::ALL
        .iter()
        .enumerate()
        .map(|(fi, &format)| {
            let per_seed = plan
                .seeds
                .par_iter()
                .map(|&seed| -> Result<(f64, f64, f64, f64)> {
                    let streams = (0..sim.channels())
                        .map(|ch| format.draw(sim.slots(), channel_seed(seed, fi, ch)))
                        .collect::<Result<Vec<_>>>()?;
                    let mut mu = (0.0, 0.0);
                    for s in &streams {
                        let m = windowed_moments(s, plan.window.min(s.len()))?;
                        mu.0 += m.mu4 / streams.len() as f64;
                        mu.1 += m.mu6 / streams.len() as f64;
                    }
                    let nli = plan
                        .launch_w
                        .iter()
                        .map(|&p| sim.nli_power(&streams, p, seed, scope))
                        .collect::<Result<Vec<_>>>()?;
                    let (eta, res) = cube_law_fit(&plan.launch_w, &nli)?;
                    Ok((mu.0, mu.1, eta, res))
                })
                .collect::<Result<Vec<_>>>()?;
            let k = per_seed.len() as f64;
            let mean = |f: fn(&(f64, f64, f64, f64)) -> f64| per_seed.iter().map(f).sum::<f64>() / k;
            let eta = mean(|r| r.2);
            let eta_rel_se = if per_seed.len() > 1 {
                let var = per_seed.iter().map(|r| (r.2 - eta).powi(2)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt() / eta.abs()
            } else {
                f64::NAN
            };
            Ok(ReferencePoint {
                format,
                mu4: mean(|r| r.0),
                mu6: mean(|r| r.1),
                eta,
                eta_rel_se,
                fit_residual: mean(|r| r.3),
            })
        })
        .collect()
}

pub fn kappas_from_points(
    points: &[ReferencePoint],
    scope: Scope,
    window: usize,
    fingerprint: String,
    seeds: Vec<u64>,
) -> Result<KappaSet> {
    let obs: Vec<_> = points.iter().map(|p| (p.mu4, p.mu6, p.eta)).collect();
    let k = solve_kappas(&obs)?;
    if !(k[0] > 0.0) {
        return Err(Error::CalibrationFailed(format!(
            "kappa1 = {:.3e} is not positive",
            k[0]
        )));
    }
    Ok(KappaSet {
        kappa1: k[0],
        kappa2: k[1],
        kappa3: k[2],
        scope,
        window,
        fingerprint,
        seeds,
        residuals: points.iter().map(|p| p.fit_residual).collect(),
        eta_rel_se: points.iter().map(|p| p.eta_rel_se).collect(),
    })
}

/// Runs the simulator on the three reference formats and solves for the
/// scope's coefficients.
pub fn calibrate_kappas<S: NliMeasurement>(
    sim: &S,
    plan: &CalibrationPlan,
    scope: Scope,
) -> Result<KappaSet> {
    let points = measure_reference_points(sim, plan, scope)?;
    kappas_from_points(&points, scope, plan.window, sim.fingerprint(), plan.seeds.clone())
}

//! MAPRT target detector: test statistic, H0-quantile threshold calibration
//! and Monte Carlo detection-probability estimation.

use std::f64::consts::PI;

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{CMat, CVec};
use crate::signal::{sample_sensing_received, Hypothesis, Omega};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;
/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub noise_variance: f64,
    pub rcs_variance: f64,
    pub p_fa: f64,
    pub calibration_trials: usize,
}

impl DetectorConfig {
    /// Fewest calibration draws that still resolve the `(1 − p_fa)` quantile.
    pub fn min_calibration_trials(p_fa: f64) -> usize {
        (10.0 / p_fa).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionOutcome {
    pub statistic: f64,
    pub threshold: f64,
    /// `true` when H1 (target present) is declared.
    pub decision: bool,
}

/// Precomputed MAPRT statistic for a fixed `Ω`.
///
/// The statistic is
/// `N_tx·N_rx·ln(1/(π·σ_rcs²)) + σ_n⁻²·(yᴴΩ)·(ΩᴴΩ + (σ_n²/σ_rcs²)·I)⁻¹·(Ωᴴy)`.
#[derive(Debug, Clone)]
pub struct Maprt {
    omega: Omega,
    chol: Cholesky<Complex64, nalgebra::Dyn>,
    noise_variance: f64,
    constant: f64,
}

impl Maprt {
    pub fn new(omega: Omega, noise_variance: f64, rcs_variance: f64) -> Result<Self> {
        if !(rcs_variance > 0.0) || !rcs_variance.is_finite() {
            return Err(invalid(format!("RCS variance must be positive, got {rcs_variance}")));
        }
        if !(noise_variance > 0.0) {
            return Err(invalid(format!("noise variance must be positive, got {noise_variance}")));
        }
        let inner = inner_matrix(&omega, noise_variance, rcs_variance);
        let scale = inner.norm();
        if (&inner - inner.adjoint()).norm() > 1e-10 * scale {
            return Err(Error::NumericalFailure("MAPRT inner matrix is not Hermitian".into()));
        }
        let chol = inner
            .cholesky()
            .ok_or_else(|| Error::NumericalFailure("MAPRT inner matrix is not positive definite".into()))?;
        let constant = omega.cols() as f64 * (1.0 / (PI * rcs_variance)).ln();
        Ok(Self { omega, chol, noise_variance, constant })
    }

    /// Value of the statistic when the quadratic term vanishes.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn omega(&self) -> &Omega {
        &self.omega
    }

    pub fn statistic(&self, y: &CVec) -> Result<f64> {
        if y.len() != self.omega.rows() {
            return Err(invalid(format!("observation length {} vs Ω rows {}", y.len(), self.omega.rows())));
        }
        let b = self.omega.adjoint_apply(y);
        let solved = self.chol.solve(&b);
        let q = b.dotc(&solved);
        if q.im.abs() > 1e-10 * q.re.abs().max(f64::MIN_POSITIVE) && q.im.abs() > 1e-300 {
            return Err(Error::NumericalFailure(format!("quadratic term has imaginary residue {}", q.im)));
        }
        Ok(self.constant + q.re / self.noise_variance)
    }
}

fn inner_matrix(omega: &Omega, noise_variance: f64, rcs_variance: f64) -> CMat {
    let mut inner = omega.gram();
    let load = Complex64::new(noise_variance / rcs_variance, 0.0);
    for i in 0..inner.nrows() {
        inner[(i, i)] += load;
    }
    (&inner + inner.adjoint()) * Complex64::new(0.5, 0.0)
}

/// One-shot evaluation of the MAPRT statistic.
pub fn maprt_statistic(y: &CVec, omega: &Omega, noise_variance: f64, rcs_variance: f64) -> Result<f64> {
    Maprt::new(omega.clone(), noise_variance, rcs_variance)?.statistic(y)
}

/// Threshold comparison; ties go to H0.
pub fn detect(statistic: f64, threshold: f64) -> DetectionOutcome {
    DetectionOutcome { statistic, threshold, decision: statistic > threshold }
}

/// Empirical `(1 − p)` quantile: the smallest order statistic with at most
/// `⌊p·n⌋` samples strictly above it.
pub fn upper_quantile(mut samples: Vec<f64>, p: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let above = (p * n as f64).floor() as usize;
    samples[n - 1 - above.min(n - 1)]
}

/// Draws `calibration_trials` H0 observations and returns the empirical
/// `(1 − p_fa)` quantile of the statistic.
pub fn calibrate_threshold<R: Rng + ?Sized>(detector: &Maprt, config: &DetectorConfig, rng: &mut R) -> Result<f64> {
    if !(config.p_fa > 0.0 && config.p_fa < 1.0) {
        return Err(invalid(format!("p_fa must lie in (0, 1), got {}", config.p_fa)));
    }
    let needed = DetectorConfig::min_calibration_trials(config.p_fa).max(100);
    if config.calibration_trials < needed {
        return Err(Error::Calibration {
            p_fa: config.p_fa,
            trials: config.calibration_trials,
            needed,
            min_p_fa: 10.0 / config.calibration_trials.max(1) as f64,
        });
    }
    let stats = (0..config.calibration_trials)
        .map(|_| {
            let obs = sample_sensing_received(detector.omega(), config.noise_variance, config.rcs_variance, Hypothesis::H0, rng);
            detector.statistic(&obs.y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(upper_quantile(stats, config.p_fa))
}

/// Binomial proportion estimate with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdEstimate {
    pub detections: usize,
    pub trials: usize,
    pub pd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl PdEstimate {
    pub fn from_counts(detections: usize, trials: usize) -> Self {
        let (ci_low, ci_high) = wilson_interval(detections, trials, Z_95);
        let pd = if trials == 0 { 0.0 } else { detections as f64 / trials as f64 };
        Self { detections, trials, pd, ci_low, ci_high }
    }
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

/// Runs `trials` H1 draws (fresh `ξ` and noise each) against a calibrated threshold.
pub fn estimate_pd<R: Rng + ?Sized>(
    detector: &Maprt,
    threshold: f64,
    noise_variance: f64,
    rcs_variance: f64,
    trials: usize,
    rng: &mut R,
) -> Result<PdEstimate> {
    let mut detections = 0;
    for _ in 0..trials {
        let obs = sample_sensing_received(detector.omega(), noise_variance, rcs_variance, Hypothesis::H1, rng);
        if detect(detector.statistic(&obs.y)?, threshold).decision {
            detections += 1;
        }
    }
    Ok(PdEstimate::from_counts(detections, trials))
}

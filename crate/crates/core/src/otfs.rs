//! Delay-Doppler grid transforms and the cyclic delay / Doppler shift operators.
//!
//! Vectors are `vec(V)` of an `M × N` delay-Doppler matrix, i.e. column-major
//! with the delay index running fastest. All transforms use the unitary
//! (`1/√n`) DFT convention, so frame energy is preserved end to end.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{CMat, CVec};

/// OTFS frame geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    /// Delay bins (subcarriers).
    pub m: usize,
    /// Doppler bins (symbols).
    pub n: usize,
    /// Sample interval in seconds.
    pub sample_interval: f64,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
}

impl FrameParams {
    pub fn new(m: usize, n: usize, sample_interval: f64, carrier_freq: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(invalid(format!("frame dimensions must be positive (M={m}, N={n})")));
        }
        if !(sample_interval > 0.0) || !(carrier_freq > 0.0) {
            return Err(invalid("sample interval and carrier frequency must be positive"));
        }
        Ok(Self { m, n, sample_interval, carrier_freq })
    }

    /// Frame length `MN`.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.m * self.n
    }

    /// Doppler resolution `1 / (N·M·T_s)` in Hz.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.len() as f64 * self.sample_interval)
    }

    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.carrier_freq
    }
}

/// `M × N` matrix of delay-Doppler symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct DdFrame {
    pub values: CMat,
}

impl DdFrame {
    /// `vec(V)`.
    pub fn to_vector(&self) -> CVec {
        CVec::from_column_slice(self.values.as_slice())
    }
}

/// Unitary DFT matrix, entry `(r, c) = exp(−j2π·r·c/n) / √n`.
pub fn dft_matrix(n: usize) -> Result<CMat> {
    if n == 0 {
        return Err(invalid("DFT size must be positive"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(CMat::from_fn(n, n, |r, c| {
        // reduce r·c mod n first so large sizes keep full phase precision
        let k = (r * c) % n;
        Complex64::from_polar(scale, -2.0 * PI * k as f64 / n as f64)
    }))
}

fn check_len(v: &CVec, params: &FrameParams) -> Result<()> {
    if v.len() != params.len() {
        return Err(invalid(format!(
            "frame vector has length {}, expected MN = {}",
            v.len(),
            params.len()
        )));
    }
    Ok(())
}

/// Mixes the Doppler axis: column `c` of the output is `Σ_j V[:, j] · kernel(j, c)`.
fn doppler_mix(v: &CVec, params: &FrameParams, sign: f64) -> CVec {
    let (m, n) = (params.m, params.n);
    let scale = 1.0 / (n as f64).sqrt();
    let twiddle: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(scale, sign * 2.0 * PI * k as f64 / n as f64))
        .collect();
    let mut out = CVec::zeros(m * n);
    for c in 0..n {
        for j in 0..n {
            let w = twiddle[(j * c) % n];
            for i in 0..m {
                out[c * m + i] += v[j * m + i] * w;
            }
        }
    }
    out
}

/// Delay-Doppler to time domain: `x = (F_Nᴴ ⊗ I_M)·v`.
pub fn dd_to_time(v: &CVec, params: &FrameParams) -> Result<CVec> {
    check_len(v, params)?;
    Ok(doppler_mix(v, params, 1.0))
}

/// Time domain back to delay-Doppler: `(F_N ⊗ I_M)·x`.
pub fn time_to_dd(x: &CVec, params: &FrameParams) -> Result<CVec> {
    check_len(x, params)?;
    Ok(doppler_mix(x, params, -1.0))
}

/// `Πᵐ`: cyclic forward shift by `m` samples, so `Π·e₁ = e₂`.
pub fn delay_shift_power(size: usize, m: usize) -> Result<CMat> {
    if size == 0 {
        return Err(invalid("shift operator size must be positive"));
    }
    let shift = m % size;
    let mut out = CMat::zeros(size, size);
    for j in 0..size {
        out[((j + shift) % size, j)] = Complex64::new(1.0, 0.0);
    }
    Ok(out)
}

/// Diagonal of `Δⁿ`, entry `k` = `exp(j2π·k·n/size)`. `n` may be fractional.
pub fn doppler_phases(size: usize, n: f64) -> Vec<Complex64> {
    (0..size)
        .map(|k| {
            // k·n mod size keeps the argument small for integer n
            let turns = (k as f64 * n).rem_euclid(size as f64) / size as f64;
            Complex64::from_polar(1.0, 2.0 * PI * turns)
        })
        .collect()
}

/// `Δⁿ` as a dense diagonal matrix.
pub fn doppler_shift_power(size: usize, n: f64) -> Result<CMat> {
    if size == 0 {
        return Err(invalid("shift operator size must be positive"));
    }
    Ok(CMat::from_diagonal(&CVec::from_vec(doppler_phases(size, n))))
}

/// The product `Πᵐ·Δⁿ` kept in factored form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdShift {
    pub size: usize,
    pub delay: usize,
    pub doppler: f64,
}

impl DdShift {
    pub fn new(size: usize, delay: usize, doppler: f64) -> Self {
        Self { size, delay: delay % size.max(1), doppler }
    }

    /// `Πᵐ·Δⁿ·v` without materializing the matrix.
    pub fn apply(&self, v: &CVec) -> CVec {
        let phases = doppler_phases(self.size, self.doppler);
        let mut out = CVec::zeros(self.size);
        for k in 0..self.size {
            out[(k + self.delay) % self.size] = phases[k] * v[k];
        }
        out
    }

    /// Accumulates `scale·Πᵐ·Δⁿ` into `dst` (a `size × size` view).
    pub fn accumulate_into(&self, dst: &mut nalgebra::DMatrixViewMut<'_, Complex64>, scale: Complex64) {
        let phases = doppler_phases(self.size, self.doppler);
        for k in 0..self.size {
            dst[((k + self.delay) % self.size, k)] += scale * phases[k];
        }
    }

    pub fn to_dense(&self) -> CMat {
        let mut out = CMat::zeros(self.size, self.size);
        self.accumulate_into(&mut out.view_mut((0, 0), (self.size, self.size)), Complex64::new(1.0, 0.0));
        out
    }
}

/// Random frame of i.i.d. unit-energy QPSK symbols.
pub fn generate_dd_frame<R: Rng + ?Sized>(params: &FrameParams, rng: &mut R) -> DdFrame {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let values = CMat::from_fn(params.m, params.n, |_, _| {
        let re = if rng.random::<bool>() { a } else { -a };
        let im = if rng.random::<bool>() { a } else { -a };
        Complex64::new(re, im)
    });
    DdFrame { values }
}

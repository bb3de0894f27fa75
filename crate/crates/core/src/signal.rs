//! Downlink ISAC signal model: transmit assembly, AP power, UE reception and
//! SINR terms, the sensing observation `y = Ω·ξ + n`, and the sensing SNR
//! quadratic form `η̃ᵀ·Ψ·η̃`.
//!
//! Stream index 0 is the sensing symbol `x_0`; streams `1..=N_ue` are UEs.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{TargetLink, UeChannel};
use crate::error::{invalid, Result};
use crate::linalg::{CMat, CVec, RMat, RVec};
use crate::otfs::{dd_to_time, DdFrame, FrameParams};
use crate::precoding::PrecoderSet;

/// Square roots of the per-stream power coefficients, `[√η_0, √η_1, …]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrtPowerVector(RVec);

impl SqrtPowerVector {
    pub fn new(values: RVec) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("square-root power coefficients must be finite and nonnegative"));
        }
        Ok(Self(values))
    }

    /// Clamps tiny negative solver round-off to zero.
    pub fn from_solver(values: &RVec) -> Result<Self> {
        Self::new(values.map(|v| v.max(0.0)))
    }

    pub fn zeros(streams: usize) -> Self {
        Self(RVec::zeros(streams))
    }

    pub fn as_vector(&self) -> &RVec {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, u: usize) -> f64 {
        self.0[u]
    }

    /// Power coefficient `η_u`.
    pub fn power(&self, u: usize) -> f64 {
        self.0[u] * self.0[u]
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.0 * c)
    }
}

/// Time-domain symbol vectors `x_0, …, x_{N_ue}` of one frame.
#[derive(Debug, Clone)]
pub struct TransmitFrames {
    pub symbols: Vec<CVec>,
}

impl TransmitFrames {
    /// Applies the DD-to-time transform to each frame.
    pub fn from_dd(frames: &[DdFrame], params: &FrameParams) -> Result<Self> {
        let symbols = frames
            .iter()
            .map(|f| dd_to_time(&f.to_vector(), params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { symbols })
    }

    pub fn n_streams(&self) -> usize {
        self.symbols.len()
    }
}

fn check_streams(precoders: &PrecoderSet, frames: &TransmitFrames, eta: Option<&SqrtPowerVector>) -> Result<()> {
    let streams = precoders.n_streams();
    if frames.n_streams() != streams {
        return Err(invalid(format!("{} symbol frames for {streams} streams", frames.n_streams())));
    }
    if frames.symbols.iter().any(|x| x.len() != precoders.frame_len) {
        return Err(invalid("symbol frame length does not match the precoders"));
    }
    if let Some(eta) = eta {
        if eta.len() != streams {
            return Err(invalid(format!("power vector has {} entries for {streams} streams", eta.len())));
        }
    }
    Ok(())
}

/// `d_k = Σ_u √η_u·W_{u,k}ᴴ·x_u`, the `L·MN` transmit vector of AP `k`.
pub fn assemble_transmit(precoders: &PrecoderSet, k: usize, frames: &TransmitFrames, eta: &SqrtPowerVector) -> Result<CVec> {
    check_streams(precoders, frames, Some(eta))?;
    if k >= precoders.n_tx {
        return Err(invalid(format!("transmit AP index {k} out of range")));
    }
    let mut d = CVec::zeros(precoders.antennas * precoders.frame_len);
    for (u, x) in frames.symbols.iter().enumerate() {
        let amp = eta.get(u);
        if amp == 0.0 {
            continue;
        }
        d.gemv(Complex64::new(amp, 0.0), &precoders.slice(u, k).adjoint(), x, Complex64::new(1.0, 0.0));
    }
    Ok(d)
}

/// Transmit vectors of every AP.
pub fn assemble_all(precoders: &PrecoderSet, frames: &TransmitFrames, eta: &SqrtPowerVector) -> Result<Vec<CVec>> {
    (0..precoders.n_tx).map(|k| assemble_transmit(precoders, k, frames, eta)).collect()
}

/// Average transmit power `P_k = Σ_u η_u·‖W_{u,k}‖_F²`.
pub fn ap_power(precoders: &PrecoderSet, k: usize, eta: &SqrtPowerVector) -> f64 {
    (0..precoders.n_streams())
        .map(|u| eta.power(u) * precoders.slice(u, k).norm_squared())
        .sum()
}

/// `y_u` and its four additive parts.
#[derive(Debug, Clone)]
pub struct UeReceived {
    pub desired: CVec,
    pub sensing_interference: CVec,
    pub user_interference: CVec,
    pub noise: CVec,
    pub total: CVec,
}

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(len: usize, variance: f64, rng: &mut R) -> CVec {
    let std = (variance / 2.0).sqrt();
    CVec::from_fn(len, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * std, im * std)
    })
}

/// Received frame at UE `u` (1-based stream index).
pub fn ue_received<R: Rng + ?Sized>(
    channel: &UeChannel,
    u: usize,
    precoders: &PrecoderSet,
    frames: &TransmitFrames,
    eta: &SqrtPowerVector,
    noise_variance: f64,
    rng: &mut R,
) -> Result<UeReceived> {
    check_streams(precoders, frames, Some(eta))?;
    if u == 0 || u > precoders.n_ue() {
        return Err(invalid(format!("UE stream index {u} out of range")));
    }
    let h = &channel.assembled;
    let stream = |v: usize| -> CVec { h * (precoders.stream(v).adjoint() * &frames.symbols[v]) * Complex64::new(eta.get(v), 0.0) };
    let mn = precoders.frame_len;
    let desired = stream(u);
    let sensing_interference = stream(0);
    let mut user_interference = CVec::zeros(mn);
    for v in (1..precoders.n_streams()).filter(|&v| v != u) {
        user_interference += stream(v);
    }
    let noise = if noise_variance > 0.0 {
        complex_gaussian(mn, noise_variance, rng)
    } else {
        CVec::zeros(mn)
    };
    let total = &desired + &sensing_interference + &user_interference + &noise;
    Ok(UeReceived { desired, sensing_interference, user_interference, noise, total })
}

/// Norm-based SINR ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTerms {
    /// `|DS_u| = ‖H_u·W_uᴴ·x_u‖`, indexed by UE (0-based).
    pub ds: Vec<f64>,
    /// `|IUI_{u,v}| = ‖H_u·W_vᴴ·x_v‖`, zero diagonal, UE-indexed.
    pub iui: RMat,
    /// `|SI_u| = ‖H_u·W_0ᴴ·x_0‖`.
    pub si: Vec<f64>,
}

impl SinrTerms {
    pub fn n_ue(&self) -> usize {
        self.ds.len()
    }
}

pub fn sinr_terms(channels: &[UeChannel], precoders: &PrecoderSet, frames: &TransmitFrames) -> Result<SinrTerms> {
    check_streams(precoders, frames, None)?;
    let n_ue = precoders.n_ue();
    if channels.len() != n_ue {
        return Err(invalid(format!("{} channels for {n_ue} UEs", channels.len())));
    }
    let sent: Vec<CVec> = (0..precoders.n_streams())
        .map(|v| precoders.stream(v).adjoint() * &frames.symbols[v])
        .collect();
    let mut ds = vec![0.0; n_ue];
    let mut si = vec![0.0; n_ue];
    let mut iui = RMat::zeros(n_ue, n_ue);
    for (i, h) in channels.iter().enumerate() {
        let received: Vec<f64> = sent.iter().map(|s| (&h.assembled * s).norm()).collect();
        si[i] = received[0];
        ds[i] = received[i + 1];
        for j in (0..n_ue).filter(|&j| j != i) {
            iui[(i, j)] = received[j + 1];
        }
    }
    Ok(SinrTerms { ds, iui, si })
}

/// `SINR_u = η_u·DS_u² / (Σ_{v≠u} η_v·IUI_{u,v}² + η_0·SI_u² + MN·σ_n²)`, per UE.
pub fn ue_sinr(terms: &SinrTerms, eta: &SqrtPowerVector, noise_variance: f64, frame_len: usize) -> Vec<f64> {
    let n_ue = terms.n_ue();
    (0..n_ue)
        .map(|i| {
            let mut denom = eta.power(0) * terms.si[i].powi(2) + frame_len as f64 * noise_variance;
            for j in (0..n_ue).filter(|&j| j != i) {
                denom += eta.power(j + 1) * terms.iui[(i, j)].powi(2);
            }
            eta.power(i + 1) * terms.ds[i].powi(2) / denom
        })
        .collect()
}

/// Block-diagonal `Ω = blkdiag{Ω_1, …, Ω_{N_rx}}` with `Ω_r = [ω_{r,1}, …, ω_{r,N_tx}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Omega {
    /// `Ω_r`, each `L·MN × N_tx`.
    pub blocks: Vec<CMat>,
}

impl Omega {
    pub fn n_rx(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_tx(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    pub fn block_rows(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.nrows())
    }

    /// Observation length `N_rx·L·MN`.
    pub fn rows(&self) -> usize {
        self.n_rx() * self.block_rows()
    }

    /// Number of reflection coefficients `N_tx·N_rx`.
    pub fn cols(&self) -> usize {
        self.n_rx() * self.n_tx()
    }

    pub fn dense(&self) -> CMat {
        let (br, bc) = (self.block_rows(), self.n_tx());
        let mut out = CMat::zeros(self.rows(), self.cols());
        for (r, b) in self.blocks.iter().enumerate() {
            out.view_mut((r * br, r * bc), (br, bc)).copy_from(b);
        }
        out
    }

    /// `Ω·ξ`.
    pub fn apply(&self, xi: &CVec) -> CVec {
        let (br, bc) = (self.block_rows(), self.n_tx());
        let mut out = CVec::zeros(self.rows());
        for (r, b) in self.blocks.iter().enumerate() {
            out.rows_mut(r * br, br).copy_from(&(b * xi.rows(r * bc, bc)));
        }
        out
    }

    /// `Ωᴴ·y`.
    pub fn adjoint_apply(&self, y: &CVec) -> CVec {
        let (br, bc) = (self.block_rows(), self.n_tx());
        let mut out = CVec::zeros(self.cols());
        for (r, b) in self.blocks.iter().enumerate() {
            out.rows_mut(r * bc, bc).copy_from(&(b.adjoint() * y.rows(r * br, br)));
        }
        out
    }

    /// `ΩᴴΩ`, block diagonal.
    pub fn gram(&self) -> CMat {
        let bc = self.n_tx();
        let mut out = CMat::zeros(self.cols(), self.cols());
        for (r, b) in self.blocks.iter().enumerate() {
            out.view_mut((r * bc, r * bc), (bc, bc)).copy_from(&(b.adjoint() * b));
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|z| z.norm_sqr() == 0.0))
    }
}

/// `(a_kᵀ ⊗ I_MN)·d`: combines the `L` antenna blocks of `d` with weights `a_k`.
fn steer_combine(a: &CVec, d: &CVec, mn: usize) -> CVec {
    let mut out = CVec::zeros(mn);
    for (l, al) in a.iter().enumerate() {
        out.axpy(*al, &d.rows(l * mn, mn), Complex64::new(1.0, 0.0));
    }
    out
}

/// `ω_{r,k} = √g_{r,k}·(a_r·a_kᵀ ⊗ H_{r,k})·d_k` for every receive/transmit pair.
pub fn build_omega(links: &[Vec<TargetLink>], transmit: &[CVec], frame_len: usize) -> Result<Omega> {
    let n_tx = transmit.len();
    let blocks = links
        .iter()
        .map(|row| {
            if row.len() != n_tx {
                return Err(invalid(format!("{} target links for {n_tx} transmit APs", row.len())));
            }
            let antennas = row.first().map_or(0, |l| l.rx_steering.len());
            let mut block = CMat::zeros(antennas * frame_len, n_tx);
            for (k, (link, d)) in row.iter().zip(transmit).enumerate() {
                if d.len() != link.tx_steering.len() * frame_len || link.shift.size != frame_len {
                    return Err(invalid("transmit vector or link dimensions inconsistent with the frame"));
                }
                let combined = link.shift.apply(&steer_combine(&link.tx_steering, d, frame_len));
                let amp = Complex64::new(link.path_gain.sqrt(), 0.0);
                for (l, ar) in link.rx_steering.iter().enumerate() {
                    block.view_mut((l * frame_len, k), (frame_len, 1)).copy_from(&(&combined * (*ar * amp)));
                }
            }
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Omega { blocks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Target absent: `y = n`.
    H0,
    /// Target present: `y = Ω·ξ + n`.
    H1,
}

#[derive(Debug, Clone)]
pub struct SensingObservation {
    pub xi: CVec,
    pub y: CVec,
}

/// One draw of the sensing observation under `hypothesis`.
pub fn sample_sensing_received<R: Rng + ?Sized>(
    omega: &Omega,
    noise_variance: f64,
    rcs_variance: f64,
    hypothesis: Hypothesis,
    rng: &mut R,
) -> SensingObservation {
    let noise = complex_gaussian(omega.rows(), noise_variance, rng);
    match hypothesis {
        Hypothesis::H0 => SensingObservation { xi: CVec::zeros(omega.cols()), y: noise },
        Hypothesis::H1 => {
            let xi = complex_gaussian(omega.cols(), rcs_variance, rng);
            let y = omega.apply(&xi) + noise;
            SensingObservation { xi, y }
        }
    }
}

/// `Ψ`, the `(N_ue+1)²` Hermitian matrix with `E‖Ω·ξ‖² = η̃ᵀ·Ψ·η̃`.
///
/// Uses `a_rᴴ·a_r = ‖a_r‖²` so every entry reduces to inner products of the
/// steered per-AP streams `(a_kᵀ ⊗ I)·W_{u,k}ᴴ·x_u`.
pub fn psi_matrix(precoders: &PrecoderSet, frames: &TransmitFrames, links: &[Vec<TargetLink>], rcs_variance: f64) -> Result<CMat> {
    check_streams(precoders, frames, None)?;
    let streams = precoders.n_streams();
    let mn = precoders.frame_len;
    let mut psi = CMat::zeros(streams, streams);
    for k in 0..precoders.n_tx {
        // link weight Σ_r g_{r,k}·‖a_r‖²; the transmit steering is shared across r
        let mut weight = 0.0;
        let mut tx_steering = None;
        for row in links {
            let link = row.get(k).ok_or_else(|| invalid("target link matrix too narrow"))?;
            weight += link.path_gain * link.rx_steering.norm_squared();
            tx_steering = Some(&link.tx_steering);
        }
        let Some(a_k) = tx_steering else { continue };
        let mut steered = CMat::zeros(mn, streams);
        for u in 0..streams {
            let sent = precoders.slice(u, k).adjoint() * &frames.symbols[u];
            steered.set_column(u, &steer_combine(a_k, &sent, mn));
        }
        psi.gemm(Complex64::new(rcs_variance * weight, 0.0), &steered.adjoint(), &steered, Complex64::new(1.0, 0.0));
    }
    Ok(psi)
}

/// `SNR = η̃ᵀ·Ψ·η̃ / (L·MN·N_rx·σ_n²)`.
pub fn sensing_snr(psi: &CMat, eta: &SqrtPowerVector, antennas: usize, frame_len: usize, n_rx: usize, noise_variance: f64) -> f64 {
    quadratic_form(psi, eta) / (antennas * frame_len * n_rx) as f64 / noise_variance
}

/// `η̃ᵀ·Re{Ψ}·η̃`; the imaginary part of a Hermitian form vanishes for real η̃.
pub fn quadratic_form(psi: &CMat, eta: &SqrtPowerVector) -> f64 {
    let v = eta.as_vector();
    let mut acc = 0.0;
    for i in 0..v.len() {
        for j in 0..v.len() {
            acc += v[i] * psi[(i, j)].re * v[j];
        }
    }
    acc
}

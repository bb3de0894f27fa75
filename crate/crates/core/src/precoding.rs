//! RZF communication precoders and the nullspace sensing precoder.

use num_complex::Complex64;

use crate::channel::UeChannel;
use crate::error::{invalid, Error, Result};
use crate::linalg::{is_finite, row_space_basis, CMat, CVec};

/// Unit-Frobenius-norm precoders for every stream.
///
/// Stream 0 is the sensing stream; streams `1..=N_ue` are the UEs.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub comm: Vec<CMat>,
    pub sense: CMat,
    pub psi_reg: f64,
    pub n_tx: usize,
    pub antennas: usize,
    pub frame_len: usize,
}

impl PrecoderSet {
    /// Builds RZF precoders for all UEs and the nullspace sensing precoder.
    pub fn build(channels: &[UeChannel], steering: &[CVec], psi_reg: f64) -> Result<Self> {
        let first = channels.first().ok_or_else(|| invalid("at least one UE channel required"))?;
        let comm = rzf_precoders(channels, psi_reg)?;
        let sense = nullspace_sensing_precoder(channels, steering)?;
        Ok(Self {
            comm,
            sense,
            psi_reg,
            n_tx: first.n_tx(),
            antennas: first.antennas,
            frame_len: first.frame_len,
        })
    }

    pub fn n_ue(&self) -> usize {
        self.comm.len()
    }

    /// Number of streams `N_ue + 1`.
    pub fn n_streams(&self) -> usize {
        self.comm.len() + 1
    }

    /// Full-width precoder of stream `u` (0 = sensing).
    pub fn stream(&self, u: usize) -> &CMat {
        if u == 0 {
            &self.sense
        } else {
            &self.comm[u - 1]
        }
    }

    /// `W_{u,k}`: the `MN × L·MN` columns of stream `u` owned by AP `k`.
    pub fn slice(&self, u: usize, k: usize) -> nalgebra::DMatrixView<'_, Complex64> {
        let width = self.antennas * self.frame_len;
        self.stream(u).view((0, k * width), (self.frame_len, width))
    }

    /// `‖W_{u,k}‖_F` for every stream, i.e. the diagonal of `G_k`.
    pub fn slice_norms(&self, k: usize) -> Vec<f64> {
        (0..self.n_streams()).map(|u| self.slice(u, k).norm()).collect()
    }
}

fn check_channels(channels: &[UeChannel]) -> Result<(usize, usize)> {
    let first = channels.first().ok_or_else(|| invalid("at least one UE channel required"))?;
    let shape = first.assembled.shape();
    for h in channels {
        if h.assembled.shape() != shape {
            return Err(invalid("UE channels have inconsistent dimensions"));
        }
        if !is_finite(&h.assembled) {
            return Err(invalid("UE channel contains non-finite entries"));
        }
    }
    Ok(shape)
}

/// `W_u = Z⁻¹·H_u / ‖Z⁻¹·H_u‖_F` with `Z = Σ_v H_v·H_vᴴ + ψ·I`.
pub fn rzf_precoders(channels: &[UeChannel], psi_reg: f64) -> Result<Vec<CMat>> {
    if !(psi_reg > 0.0) || !psi_reg.is_finite() {
        return Err(invalid(format!("RZF regularization must be positive and finite, got {psi_reg}")));
    }
    let (rows, _) = check_channels(channels)?;
    let mut z = CMat::identity(rows, rows) * Complex64::new(psi_reg, 0.0);
    for h in channels {
        z.gemm(Complex64::new(1.0, 0.0), &h.assembled, &h.assembled.adjoint(), Complex64::new(1.0, 0.0));
    }
    // Hermitian part only, so Cholesky sees an exactly Hermitian matrix
    let z = (&z + z.adjoint()) * Complex64::new(0.5, 0.0);
    let chol = z
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("RZF Gram matrix not positive definite".into()))?;
    channels
        .iter()
        .map(|h| {
            let w = chol.solve(&h.assembled);
            let norm = w.norm();
            if !(norm > 0.0) {
                return Err(Error::NumericalFailure("RZF precoder has zero norm".into()));
            }
            Ok(w / Complex64::new(norm, 0.0))
        })
        .collect()
}

/// Sensing precoder confined to the joint right-nullspace of all UE channels.
///
/// `W_0 = (a ⊗ I_MN)ᵀ·Proj` normalized to unit Frobenius norm, where `Proj`
/// projects onto the nullspace of the stacked channel `H_s` and `a` stacks the
/// per-AP steering vectors towards the target. The transmitted sensing signal
/// `W_0ᴴ·x_0 = Proj·(a* ⊗ I)·x_0` therefore adds up coherently through `a_kᵀ`.
pub fn nullspace_sensing_precoder(channels: &[UeChannel], steering: &[CVec]) -> Result<CMat> {
    let (mn, cols) = check_channels(channels)?;
    let rows = channels.len() * mn;
    if rows >= cols {
        return Err(Error::InfeasiblePrecoder { rows, cols });
    }
    let antennas = channels[0].antennas;
    if steering.len() != channels[0].n_tx() || steering.iter().any(|a| a.len() != antennas) {
        return Err(invalid("steering vectors must be one length-L vector per transmit AP"));
    }

    let mut stacked = CMat::zeros(rows, cols);
    for (u, h) in channels.iter().enumerate() {
        stacked.view_mut((u * mn, 0), (mn, cols)).copy_from(&h.assembled);
    }

    // a* ⊗ I_MN: block i (antenna i of the flattened N_tx·L array) is conj(a_i)·I
    let a: Vec<Complex64> = steering.iter().flat_map(|s| s.iter().map(|z| z.conj())).collect();
    let mut steered = CMat::zeros(cols, mn);
    for (i, &ai) in a.iter().enumerate() {
        for j in 0..mn {
            steered[(i * mn + j, j)] = ai;
        }
    }

    let basis = row_space_basis(&stacked);
    let coeffs = basis.adjoint() * &steered;
    let mut projected = steered;
    projected.gemm(Complex64::new(-1.0, 0.0), &basis, &coeffs, Complex64::new(1.0, 0.0));

    let norm = projected.norm();
    if !(norm > 0.0) {
        return Err(Error::NumericalFailure("steered sensing direction lies in the UE channel span".into()));
    }
    Ok(projected.adjoint() / Complex64::new(norm, 0.0))
}

/// Splits a full-width precoder into one `MN × L·MN` slice per transmit AP.
pub fn slice_per_ap(w: &CMat, n_tx: usize, antennas: usize) -> Result<Vec<CMat>> {
    let cols = w.ncols();
    if n_tx == 0 || antennas == 0 || !cols.is_multiple_of(n_tx * antennas) {
        return Err(invalid(format!("width {cols} does not split into {n_tx} APs × {antennas} antennas")));
    }
    let width = cols / n_tx;
    Ok((0..n_tx).map(|k| w.columns(k * width, width).into_owned()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_ue_channel, generate_scenario, sample_ue_channel, DdPath, Scenario, ScenarioConfig};
    use crate::linalg::rank;
    use crate::otfs::FrameParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(m: usize, n: usize, n_tx: usize, antennas: usize, n_ue: usize) -> ScenarioConfig {
        ScenarioConfig {
            area_side: 500.0,
            n_tx,
            n_rx: 1,
            n_ue,
            antennas,
            noise_variance: 10f64.powf(-12.4),
            rcs_variance: 0.01,
            paths: 5,
            delay_spread: (2.08e-6, 10.41e-6),
            doppler_spread: (0.0, 1880.0),
            frame: FrameParams::new(m, n, 2.08e-6, 1.9e9).unwrap(),
            reflection_gain: 1.0,
            target_doppler: 0.0,
        }
    }

    fn instance(cfg: &ScenarioConfig, seed: u64) -> (Scenario, Vec<UeChannel>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = generate_scenario(cfg, &mut rng).unwrap();
        let hs = (0..s.n_ue()).map(|u| sample_ue_channel(&s, u, &mut rng).unwrap()).collect();
        (s, hs)
    }

    #[test]
    fn identity_channel_gives_scaled_identity() {
        let cfg = config(4, 2, 1, 1, 1);
        let (s, _) = instance(&cfg, 1);
        let path = DdPath { gain: Complex64::new(1.0, 0.0), delay_tap: 0, doppler_tap: 0.0, aod: 0.0 };
        let h = build_ue_channel(vec![vec![path]], &s).unwrap();
        for psi in [1e-3, 1.0, 50.0] {
            let w = &rzf_precoders(std::slice::from_ref(&h), psi).unwrap()[0];
            let expect = CMat::identity(8, 8) / Complex64::new(8f64.sqrt(), 0.0);
            assert!((w - expect).camax() < 1e-14);
        }
    }

    #[test]
    fn rzf_rejects_bad_inputs() {
        let cfg = config(4, 2, 2, 1, 2);
        let (_, mut hs) = instance(&cfg, 2);
        assert!(rzf_precoders(&hs, 0.0).is_err());
        assert!(rzf_precoders(&hs, -1.0).is_err());
        hs[1].assembled[(0, 0)] = Complex64::new(f64::NAN, 0.0);
        assert!(rzf_precoders(&hs, 1e-12).is_err());
    }

    #[test]
    fn rzf_matches_dense_solve() {
        let cfg = config(4, 2, 2, 2, 2);
        let (_, hs) = instance(&cfg, 3);
        let psi = 1e-11;
        let ws = rzf_precoders(&hs, psi).unwrap();
        // independent route: LU solve of the explicitly formed Gram matrix
        let mut z = CMat::identity(8, 8) * Complex64::new(psi, 0.0);
        for h in &hs {
            z += &h.assembled * h.assembled.adjoint();
        }
        for (h, w) in hs.iter().zip(&ws) {
            let x = z.clone().lu().solve(&h.assembled).unwrap();
            let x = &x / Complex64::new(x.norm(), 0.0);
            assert!((w - x).camax() < 1e-10);
            assert!((w.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rzf_matched_filter_limit() {
        let cfg = config(4, 2, 2, 2, 2);
        let (_, hs) = instance(&cfg, 4);
        let scale: f64 = hs.iter().map(|h| (&h.assembled * h.assembled.adjoint()).norm()).sum();
        let ws = rzf_precoders(&hs, 1e6 * scale).unwrap();
        for (h, w) in hs.iter().zip(&ws) {
            let mf = &h.assembled / Complex64::new(h.assembled.norm(), 0.0);
            assert!((w - &mf).norm() / mf.norm() < 1e-3);
        }
    }

    #[test]
    fn rzf_suppresses_interference_relative_to_matched_filter() {
        let cfg = config(4, 8, 2, 2, 2);
        let trials = 50;
        let (mut rzf_leak, mut mf_leak) = (0.0, 0.0);
        for seed in 0..trials {
            let (_, hs) = instance(&cfg, 100 + seed);
            let scale: f64 = hs.iter().map(|h| (&h.assembled * h.assembled.adjoint()).norm()).sum();
            let rzf = rzf_precoders(&hs, 1e-3 * scale).unwrap();
            let mf = rzf_precoders(&hs, 1e6 * scale).unwrap();
            // leakage relative to the desired gain, both directions
            let ratio = |ws: &[CMat]| {
                let cross = (&hs[0].assembled * ws[1].adjoint()).norm() + (&hs[1].assembled * ws[0].adjoint()).norm();
                let own = (&hs[0].assembled * ws[0].adjoint()).norm() + (&hs[1].assembled * ws[1].adjoint()).norm();
                cross / own
            };
            rzf_leak += ratio(&rzf);
            mf_leak += ratio(&mf);
        }
        assert!(rzf_leak < mf_leak, "{rzf_leak} vs {mf_leak}");
    }

    #[test]
    fn sensing_precoder_nulls_every_ue() {
        let cfg = config(4, 2, 2, 2, 1);
        let (s, hs) = instance(&cfg, 5);
        let w0 = nullspace_sensing_precoder(&hs, &s.tx_steering()).unwrap();
        assert!((w0.norm() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        use rand::Rng;
        let x0 = CVec::from_fn(8, |_, _| Complex64::new(rng.random(), rng.random()));
        for h in &hs {
            let leak = (&h.assembled * w0.adjoint() * &x0).norm() / x0.norm();
            assert!(leak < 1e-8 * h.assembled.norm(), "{leak}");
        }
    }

    #[test]
    fn projector_rank_matches_svd() {
        let cfg = config(4, 2, 2, 2, 1);
        let (_, hs) = instance(&cfg, 7);
        let stacked = hs[0].assembled.clone();
        let basis = row_space_basis(&stacked);
        let proj = CMat::identity(32, 32) - &basis * basis.adjoint();
        // oracle: rank from a fresh SVD of the stacked channel
        let expect = 32 - stacked.clone().svd(false, false).singular_values.iter().filter(|&&s| s > 1e-9 * stacked.norm()).count();
        assert_eq!(rank(&proj), expect);
    }

    #[test]
    fn no_nullspace_is_reported() {
        let cfg = config(4, 2, 1, 1, 2);
        let (s, hs) = instance(&cfg, 8);
        assert!(matches!(
            nullspace_sensing_precoder(&hs, &s.tx_steering()),
            Err(Error::InfeasiblePrecoder { .. })
        ));
    }

    #[test]
    fn slicing_partitions_columns() {
        let cfg = config(4, 2, 3, 2, 2);
        let (s, hs) = instance(&cfg, 9);
        let set = PrecoderSet::build(&hs, &s.tx_steering(), s.noise_variance).unwrap();
        for u in 0..set.n_streams() {
            let w = set.stream(u);
            let slices = slice_per_ap(w, 3, 2).unwrap();
            let total: f64 = slices.iter().map(|x| x.norm_squared()).sum();
            assert!((total - 1.0).abs() < 1e-12);
            let mut joined = CMat::zeros(8, 0);
            for (k, sl) in slices.iter().enumerate() {
                assert_eq!(sl, &set.slice(u, k).into_owned());
                joined = CMat::from_fn(8, joined.ncols() + sl.ncols(), |r, c| {
                    if c < joined.ncols() { joined[(r, c)] } else { sl[(r, c - joined.ncols())] }
                });
            }
            assert_eq!(&joined, w);
        }
        let w = set.stream(1);
        assert_eq!(slice_per_ap(w, 1, 2).unwrap()[0], *w);
        assert!(slice_per_ap(w, 5, 2).is_err());
    }
}

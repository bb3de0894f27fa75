//! Second-order cone constraints for the QoS and per-AP power requirements.

use crate::error::{invalid, Error, Result};
use crate::linalg::{RMat, RVec};
use crate::precoding::PrecoderSet;
use crate::signal::SinrTerms;

/// `‖A·x + b‖ ≤ cᵀ·x + d`. An `A` with zero rows encodes the linear
/// inequality `0 ≤ cᵀ·x + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub a_matrix: RMat,
    pub b_vector: RVec,
    pub c_vector: RVec,
    pub d_scalar: f64,
}

impl SocConstraint {
    pub fn new(a_matrix: RMat, b_vector: RVec, c_vector: RVec, d_scalar: f64) -> Result<Self> {
        if a_matrix.nrows() != b_vector.len() || a_matrix.ncols() != c_vector.len() {
            return Err(invalid(format!(
                "SOC dimensions inconsistent: A is {}×{}, b has {}, c has {}",
                a_matrix.nrows(),
                a_matrix.ncols(),
                b_vector.len(),
                c_vector.len()
            )));
        }
        Ok(Self { a_matrix, b_vector, c_vector, d_scalar })
    }

    /// Linear inequality `cᵀ·x + d ≥ 0`.
    pub fn linear(c_vector: RVec, d_scalar: f64) -> Self {
        let n = c_vector.len();
        Self { a_matrix: RMat::zeros(0, n), b_vector: RVec::zeros(0), c_vector, d_scalar }
    }

    pub fn dim(&self) -> usize {
        self.c_vector.len()
    }

    /// `cᵀ·x + d − ‖A·x + b‖`; nonnegative iff satisfied.
    pub fn margin(&self, x: &RVec) -> f64 {
        let lhs = if self.a_matrix.nrows() == 0 {
            0.0
        } else {
            (&self.a_matrix * x + &self.b_vector).norm()
        };
        self.c_vector.dot(x) + self.d_scalar - lhs
    }

    pub fn is_satisfied(&self, x: &RVec, tol: f64) -> bool {
        self.margin(x) >= -tol
    }

    /// Largest absolute data entry; dividing all data by it leaves the set unchanged.
    pub fn scale(&self) -> f64 {
        self.a_matrix
            .iter()
            .chain(self.b_vector.iter())
            .chain(self.c_vector.iter())
            .chain(std::iter::once(&self.d_scalar))
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Margin of the constraint with its data divided by [`Self::scale`].
    pub fn scaled_margin(&self, x: &RVec) -> f64 {
        let s = self.scale();
        if s == 0.0 {
            0.0
        } else {
            self.margin(x) / s
        }
    }

    /// Same constraint over a longer decision vector; the extra variables get zero coefficients.
    pub fn embed(&self, dim: usize) -> Self {
        assert!(dim >= self.dim(), "cannot embed into a smaller decision vector");
        let mut a = RMat::zeros(self.a_matrix.nrows(), dim);
        a.view_mut((0, 0), self.a_matrix.shape()).copy_from(&self.a_matrix);
        let mut c = RVec::zeros(dim);
        c.rows_mut(0, self.dim()).copy_from(&self.c_vector);
        Self { a_matrix: a, b_vector: self.b_vector.clone(), c_vector: c, d_scalar: self.d_scalar }
    }
}

/// QoS constraint of UE `u` (0-based):
/// `‖[A_u·η̃; σ_n·√MN]‖ ≤ (|DS_u| / √γ)·η̃_{u+1}`.
///
/// `A_u = diag(|SI_u|, |IUI_{u,1}|, …, 0, …, |IUI_{u,N_ue}|)`, zero at the UE's own stream.
pub fn build_sinr_soc(terms: &SinrTerms, u: usize, gamma_thresh: f64, noise_variance: f64, frame_len: usize) -> Result<SocConstraint> {
    let n_ue = terms.n_ue();
    if u >= n_ue {
        return Err(invalid(format!("UE index {u} out of range")));
    }
    if !(gamma_thresh > 0.0) {
        return Err(invalid("SINR threshold must be positive"));
    }
    let ds = terms.ds[u];
    if !(ds > 0.0) {
        return Err(Error::InfeasibleConstraint(format!("UE {u} has zero desired-signal strength")));
    }
    let streams = n_ue + 1;
    let mut a = RMat::zeros(streams + 1, streams);
    a[(0, 0)] = terms.si[u];
    for v in (0..n_ue).filter(|&v| v != u) {
        a[(v + 1, v + 1)] = terms.iui[(u, v)];
    }
    let mut b = RVec::zeros(streams + 1);
    b[streams] = (noise_variance * frame_len as f64).sqrt();
    let mut c = RVec::zeros(streams);
    c[u + 1] = ds / gamma_thresh.sqrt();
    SocConstraint::new(a, b, c, 0.0)
}

/// Diagonal of `G_k`: `‖W_{u,k}‖_F` for every stream.
pub fn power_gains(precoders: &PrecoderSet, k: usize) -> RVec {
    RVec::from_vec(precoders.slice_norms(k))
}

/// Budget of AP `k`: `‖G_kᵀ·η̃‖ ≤ √P_max`.
pub fn build_power_soc(precoders: &PrecoderSet, k: usize, p_max: f64) -> Result<SocConstraint> {
    if !(p_max > 0.0) {
        return Err(invalid("power budget must be positive"));
    }
    if k >= precoders.n_tx {
        return Err(invalid(format!("transmit AP index {k} out of range")));
    }
    power_soc_from_gains(&power_gains(precoders, k), p_max)
}

pub fn power_soc_from_gains(gains: &RVec, p_max: f64) -> Result<SocConstraint> {
    let n = gains.len();
    SocConstraint::new(RMat::from_diagonal(gains), RVec::zeros(n), RVec::zeros(n), p_max.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{ap_power, ue_sinr, SqrtPowerVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn terms() -> SinrTerms {
        SinrTerms {
            ds: vec![2.0e-3, 1.5e-3],
            iui: RMat::from_row_slice(2, 2, &[0.0, 3.0e-4, 2.0e-4, 0.0]),
            si: vec![1.0e-4, 5.0e-5],
        }
    }

    #[test]
    fn interference_free_reduces_to_linear_bound() {
        let t = SinrTerms { ds: vec![2.0], iui: RMat::zeros(1, 1), si: vec![0.0] };
        let (gamma, nv, mn) = (1.5, 0.01, 16);
        let soc = build_sinr_soc(&t, 0, gamma, nv, mn).unwrap();
        let boundary = (nv * mn as f64 * gamma).sqrt() / 2.0;
        assert!(soc.margin(&RVec::from_vec(vec![0.3, boundary])).abs() < 1e-12);
        assert!(soc.is_satisfied(&RVec::from_vec(vec![7.0, boundary * 1.001]), 0.0));
        assert!(!soc.is_satisfied(&RVec::from_vec(vec![0.0, boundary * 0.999]), 0.0));
    }

    #[test]
    fn zero_desired_signal_is_infeasible() {
        let mut t = terms();
        t.ds[1] = 0.0;
        assert!(matches!(build_sinr_soc(&t, 1, 1.0, 1e-6, 8), Err(Error::InfeasibleConstraint(_))));
        assert!(build_sinr_soc(&t, 2, 1.0, 1e-6, 8).is_err());
    }

    #[test]
    fn sinr_soc_agrees_with_sinr_formula() {
        let t = terms();
        let (gamma, nv, mn) = (10f64.powf(0.2), 1e-9, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let x = RVec::from_fn(3, |_, _| rng.random::<f64>() * 0.5);
            let sinr = ue_sinr(&t, &SqrtPowerVector::new(x.clone()).unwrap(), nv, mn);
            for u in 0..2 {
                let soc = build_sinr_soc(&t, u, gamma, nv, mn).unwrap();
                let sat = soc.margin(&x) >= 0.0;
                assert_eq!(sat, sinr[u] >= gamma, "u={u} sinr={} margin={}", sinr[u], soc.margin(&x));
            }
        }
    }

    #[test]
    fn sinr_soc_cross_checks() {
        let t = terms();
        let (gamma, nv, mn) = (2.0, 1e-9, 8);
        let soc = build_sinr_soc(&t, 0, gamma, nv, mn).unwrap();
        // satisfying point: plenty of desired power
        let x = RVec::from_vec(vec![0.1, 1.0, 0.2]);
        assert!(soc.margin(&x) >= 0.0);
        let sinr = ue_sinr(&t, &SqrtPowerVector::new(x.clone()).unwrap(), nv, mn)[0];
        assert!(sinr >= gamma - 1e-9);
        // scale the desired stream down to half the DS-only boundary
        let boundary = (nv * mn as f64 * gamma).sqrt() / t.ds[0];
        let y = RVec::from_vec(vec![0.0, 0.5 * boundary, 0.0]);
        let sinr = ue_sinr(&t, &SqrtPowerVector::new(y.clone()).unwrap(), nv, mn)[0];
        assert!(soc.margin(&y) < 0.0 && sinr < gamma);
    }

    #[test]
    fn power_soc_boundary() {
        let gains = RVec::from_vec(vec![0.0, 1.0]);
        let soc = power_soc_from_gains(&gains, 0.64).unwrap();
        assert!(soc.is_satisfied(&RVec::zeros(2), 0.0));
        assert!(soc.margin(&RVec::from_vec(vec![5.0, 0.8])).abs() < 1e-15);
        assert!(!soc.is_satisfied(&RVec::from_vec(vec![0.0, 0.81]), 0.0));
        assert!(power_soc_from_gains(&gains, 1.0).is_ok());
    }

    #[test]
    fn power_soc_agrees_with_ap_power() {
        let f = crate::signal::tests::fixture(4, 2, 3, 1, 2, 2, 31);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(build_power_soc(&f.precoders, 0, 0.0).is_err());
        for _ in 0..200 {
            let x = RVec::from_fn(3, |_, _| rng.random::<f64>() * 1.5);
            let eta = SqrtPowerVector::new(x.clone()).unwrap();
            for k in 0..3 {
                let soc = build_power_soc(&f.precoders, k, 0.5).unwrap();
                let p = ap_power(&f.precoders, k, &eta);
                assert_eq!(soc.margin(&x) >= 0.0, p <= 0.5);
                if soc.is_satisfied(&x, 0.0) {
                    assert!(p <= 0.5 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn embedding_pads_with_zeros() {
        let soc = build_sinr_soc(&terms(), 0, 1.0, 1e-9, 8).unwrap();
        let big = soc.embed(5);
        let x = RVec::from_vec(vec![0.1, 0.2, 0.3]);
        let xb = RVec::from_vec(vec![0.1, 0.2, 0.3, 9.0, -4.0]);
        assert_eq!(soc.margin(&x), big.margin(&xb));
    }
}

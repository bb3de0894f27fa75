//! Dense complex helpers shared by the signal-model modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == Complex64::new(0.0, 0.0) {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc))
                .zip_apply(b, |o, v| *o = s * v);
        }
    }
    out
}

/// Column vector as an `n × 1` matrix.
pub fn col(v: &CVec) -> CMat {
    CMat::from_column_slice(v.len(), 1, v.as_slice())
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Orthonormal basis of the row space of `m`, returned as columns.
///
/// Singular values below `max(rows, cols) · ε · σ_max` count as zero.
pub fn row_space_basis(m: &CMat) -> CMat {
    let (rows, cols) = m.shape();
    // SVD of the adjoint: its left singular vectors span the row space of `m`.
    let svd = m.adjoint().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > cutoff)
        .map(|(i, _)| i)
        .collect();
    let mut basis = CMat::zeros(cols, keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        basis.set_column(dst, &u.column(src));
    }
    basis
}

/// Numerical rank with the same cutoff as [`row_space_basis`].
pub fn rank(m: &CMat) -> usize {
    let (rows, cols) = m.shape();
    let sv = m.singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
    sv.iter().filter(|&&s| s > cutoff).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_shapes_and_entries() {
        let a = CMat::from_row_slice(2, 1, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)]);
        let b = CMat::identity(2, 2);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (4, 2));
        assert_eq!(k[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(k[(3, 1)], Complex64::new(0.0, 2.0));
        assert_eq!(k[(2, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn rank_of_outer_product_is_one() {
        let v = CVec::from_fn(5, |i, _| Complex64::new(i as f64 + 1.0, 0.5));
        let m = col(&v) * col(&v).adjoint();
        assert_eq!(rank(&m), 1);
        assert_eq!(row_space_basis(&m).ncols(), 1);
    }
}

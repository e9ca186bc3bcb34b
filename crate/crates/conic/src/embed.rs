//! Real symmetric embedding of complex Hermitian matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::ConicError;

const HERMITIAN_TOL: f64 = 1e-10;

/// Embeds a Hermitian `n x n` matrix as the real symmetric `2n x 2n` matrix
/// `[[Re H, -Im H], [Im H, Re H]]`.
///
/// The embedding is PSD iff `H` is, each eigenvalue of `H` appears twice,
/// and `<embed(A), embed(B)> = 2 tr(A B)` for Hermitian `A`, `B`.
pub fn hermitian_embed(h: &DMatrix<Complex64>) -> Result<DMatrix<f64>, ConicError> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(ConicError::NotSquare {
            rows: n,
            cols: h.ncols(),
        });
    }
    let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = h[(i, j)] - h[(j, i)].conj();
            if !d.re.is_finite() || !d.im.is_finite() {
                return Err(ConicError::NonFinite("hermitian matrix"));
            }
            asym = asym.max(d.norm());
        }
    }
    if asym > HERMITIAN_TOL * scale {
        return Err(ConicError::NotHermitian(asym));
    }
    Ok(embed_unchecked(h))
}

pub(crate) fn embed_unchecked(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = h.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            // symmetrize so that tiny asymmetries never leak into the real program
            let z = 0.5 * (h[(i, j)] + h[(j, i)].conj());
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// Recovers the Hermitian matrix represented by a real symmetric `2n x 2n`
/// matrix, averaging over the two copies. PSD inputs give PSD outputs.
pub fn hermitian_unembed(x: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = x.nrows() / 2;
    DMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
        let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
        Complex64::new(re, im)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_embeds_to_identity() {
        let h = DMatrix::<Complex64>::identity(2, 2);
        let e = hermitian_embed(&h).unwrap();
        assert_eq!(e, DMatrix::<f64>::identity(4, 4));
        assert_eq!(e.trace(), 4.0);
    }

    #[test]
    fn rejects_non_hermitian() {
        let h =
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(1.0, 0.0)]);
        assert!(matches!(
            hermitian_embed(&h),
            Err(ConicError::NotHermitian(_))
        ));
        let r = DMatrix::<Complex64>::zeros(2, 3);
        assert!(matches!(
            hermitian_embed(&r),
            Err(ConicError::NotSquare { .. })
        ));
    }

    #[test]
    fn pauli_y_has_doubled_spectrum() {
        let h =
            DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)]);
        let e = hermitian_embed(&h).unwrap();
        assert!((&e - e.transpose()).norm() == 0.0);
        let mut ev: Vec<f64> = e.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = [-1.0, -1.0, 1.0, 1.0];
        for (a, b) in ev.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn real_input_is_block_diagonal() {
        let h =
            DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(3.0, 0.0)]);
        let e = hermitian_embed(&h).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(e[(i, j)], h[(i, j)].re);
                assert_eq!(e[(i + 2, j + 2)], h[(i, j)].re);
                assert_eq!(e[(i, j + 2)], 0.0);
                assert_eq!(e[(i + 2, j)], 0.0);
            }
        }
        assert!((hermitian_unembed(&e) - h).norm() < 1e-15);
    }
}

//! Symmetric cones, their Jordan algebra, and Nesterov-Todd scalings.
//!
//! Every cone is stored as a flat real vector. PSD blocks use the
//! lower-triangular column-major `svec` layout with off-diagonal entries
//! scaled by `sqrt(2)`, so that the Euclidean inner product of two svec
//! vectors equals the trace inner product of the matrices.

use nalgebra::{DMatrix, DVector};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// Nonnegative orthant of the given dimension.
    Nonneg(usize),
    /// Second-order cone `{(t, x) : ||x|| <= t}` of the given total dimension.
    Soc(usize),
    /// Real symmetric positive semidefinite matrices of the given order.
    Psd(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Nonneg(n) | Cone::Soc(n) => n,
            Cone::Psd(m) => svec_len(m),
        }
    }

    /// Barrier degree (rank of the Jordan algebra).
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Nonneg(n) => n,
            Cone::Soc(_) => 1,
            Cone::Psd(m) => m,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Cone::Nonneg(_) => "nonneg",
            Cone::Soc(_) => "soc",
            Cone::Psd(_) => "psd",
        }
    }

    pub(crate) fn identity(&self, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match *self {
            Cone::Nonneg(_) => out.iter_mut().for_each(|v| *v = 1.0),
            Cone::Soc(_) => out[0] = 1.0,
            Cone::Psd(m) => {
                for j in 0..m {
                    out[svec_index(m, j, j)] = 1.0;
                }
            }
        }
    }

    /// Jordan product `u o v`.
    pub(crate) fn product(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        match *self {
            Cone::Nonneg(_) => {
                for i in 0..u.len() {
                    out[i] = u[i] * v[i];
                }
            }
            Cone::Soc(_) => {
                out[0] = dot(u, v);
                for i in 1..u.len() {
                    out[i] = u[0] * v[i] + v[0] * u[i];
                }
            }
            Cone::Psd(m) => {
                let a = smat(m, u);
                let b = smat(m, v);
                let mut p = &a * &b;
                p += p.transpose();
                p *= 0.5;
                svec_into(&p, out);
            }
        }
    }

    /// Inverse Jordan product `lambda \ v`, i.e. the `x` with `lambda o x = v`.
    /// For PSD cones `lambda` must be diagonal (the scaled point).
    pub(crate) fn divide(&self, lambda: &[f64], v: &[f64], out: &mut [f64]) {
        match *self {
            Cone::Nonneg(_) => {
                for i in 0..v.len() {
                    out[i] = v[i] / lambda[i];
                }
            }
            Cone::Soc(_) => {
                let det = soc_det(lambda);
                let l1v1 = dot(&lambda[1..], &v[1..]);
                let x0 = (lambda[0] * v[0] - l1v1) / det;
                out[0] = x0;
                for i in 1..v.len() {
                    out[i] = (v[i] - x0 * lambda[i]) / lambda[0];
                }
            }
            Cone::Psd(m) => {
                let diag: Vec<f64> = (0..m).map(|j| lambda[svec_index(m, j, j)]).collect();
                for j in 0..m {
                    for i in j..m {
                        let k = svec_index(m, i, j);
                        out[k] = 2.0 * v[k] / (diag[i] + diag[j]);
                    }
                }
            }
        }
    }

    /// Largest `alpha` such that `lambda + alpha * d` stays in the cone,
    /// `f64::INFINITY` when unbounded. `lambda` must be interior (diagonal for PSD).
    pub(crate) fn max_step(&self, lambda: &[f64], d: &[f64]) -> f64 {
        match *self {
            Cone::Nonneg(_) => lambda
                .iter()
                .zip(d)
                .filter(|(_, &di)| di < 0.0)
                .map(|(&l, &di)| -l / di)
                .fold(f64::INFINITY, f64::min),
            Cone::Soc(_) => soc_max_step(lambda, d),
            Cone::Psd(m) => {
                let mut s = smat(m, d);
                let inv_sqrt: Vec<f64> = (0..m)
                    .map(|j| 1.0 / lambda[svec_index(m, j, j)].sqrt())
                    .collect();
                for j in 0..m {
                    for i in 0..m {
                        s[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
                    }
                }
                let min_eig = s.symmetric_eigenvalues().min();
                if min_eig >= 0.0 {
                    f64::INFINITY
                } else {
                    -1.0 / min_eig
                }
            }
        }
    }

    /// Smallest "eigenvalue" of `v` in the Jordan-algebra sense; positive iff interior.
    pub fn min_eigenvalue(&self, v: &[f64]) -> f64 {
        match *self {
            Cone::Nonneg(_) => v.iter().copied().fold(f64::INFINITY, f64::min),
            Cone::Soc(_) => v[0] - norm(&v[1..]),
            Cone::Psd(m) => smat(m, v).symmetric_eigenvalues().min(),
        }
    }
}

pub fn svec_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Position of entry `(i, j)`, `i >= j`, in the svec layout of an `m x m` matrix.
pub fn svec_index(m: usize, i: usize, j: usize) -> usize {
    debug_assert!(i >= j && i < m);
    // column j starts after sum_{k<j} (m - k) entries
    j * m - j * j.saturating_sub(1) / 2 + (i - j)
}

/// Symmetric matrix from its svec representation.
pub fn smat(m: usize, v: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m, m);
    for j in 0..m {
        for i in j..m {
            let x = v[svec_index(m, i, j)];
            if i == j {
                out[(i, i)] = x;
            } else {
                out[(i, j)] = x / SQRT2;
                out[(j, i)] = x / SQRT2;
            }
        }
    }
    out
}

pub fn svec(a: &DMatrix<f64>) -> DVector<f64> {
    let m = a.nrows();
    let mut out = DVector::zeros(svec_len(m));
    svec_into(a, out.as_mut_slice());
    out
}

pub(crate) fn svec_into(a: &DMatrix<f64>, out: &mut [f64]) {
    let m = a.nrows();
    for j in 0..m {
        for i in j..m {
            let k = svec_index(m, i, j);
            out[k] = if i == j {
                a[(i, i)]
            } else {
                SQRT2 * 0.5 * (a[(i, j)] + a[(j, i)])
            };
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn soc_det(v: &[f64]) -> f64 {
    let r = norm(&v[1..]);
    (v[0] - r) * (v[0] + r)
}

fn soc_max_step(lambda: &[f64], d: &[f64]) -> f64 {
    // q(a) = (l0 + a d0)^2 - ||l1 + a d1||^2 = qa a^2 + 2 qb a + qc, qc > 0.
    let qa = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let qb = lambda[0] * d[0] - dot(&lambda[1..], &d[1..]);
    let qc = soc_det(lambda);
    let mut alpha = f64::INFINITY;
    if d[0] < 0.0 {
        alpha = -lambda[0] / d[0];
    }
    let root = if qa.abs() < 1e-300 {
        if qb < 0.0 {
            -qc / (2.0 * qb)
        } else {
            f64::INFINITY
        }
    } else {
        let disc = qb * qb - qa * qc;
        if disc < 0.0 {
            f64::INFINITY
        } else {
            let sq = disc.sqrt();
            // Smallest positive root of qa a^2 + 2 qb a + qc.
            let (r1, r2) = if qb >= 0.0 {
                let t = -qb - sq;
                (t / qa, qc / t)
            } else {
                let t = -qb + sq;
                (t / qa, qc / t)
            };
            [r1, r2]
                .into_iter()
                .filter(|r| *r > 0.0)
                .fold(f64::INFINITY, f64::min)
        }
    };
    alpha.min(root)
}

/// Nesterov-Todd scaling `W` of one cone, with `lambda = W^{-T} x = W z`.
#[derive(Debug, Clone)]
pub(crate) enum Scaling {
    Nonneg {
        w: Vec<f64>,
    },
    Soc {
        w: DMatrix<f64>,
        w_inv: DMatrix<f64>,
    },
    Psd {
        m: usize,
        r: DMatrix<f64>,
        r_inv: DMatrix<f64>,
    },
}

/// Unscaled `(x, z)`, the new scaling and the new `lambda`.
type Advanced = (Vec<f64>, Vec<f64>, Scaling, Vec<f64>);

impl Scaling {
    /// Computes the scaling at interior points `x`, `z` and returns it with `lambda`.
    pub(crate) fn new(cone: &Cone, x: &[f64], z: &[f64]) -> Option<(Scaling, Vec<f64>)> {
        match *cone {
            Cone::Nonneg(_) => {
                if x.iter().chain(z).any(|&v| v <= 0.0) {
                    return None;
                }
                let w: Vec<f64> = x.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect();
                let lambda = x.iter().zip(z).map(|(a, b)| (a * b).sqrt()).collect();
                Some((Scaling::Nonneg { w }, lambda))
            }
            Cone::Soc(n) => {
                let dx = soc_det(x);
                let dz = soc_det(z);
                if dx <= 0.0 || dz <= 0.0 || x[0] <= 0.0 || z[0] <= 0.0 {
                    return None;
                }
                let (nx, nz) = (dx.sqrt(), dz.sqrt());
                let xb: Vec<f64> = x.iter().map(|v| v / nx).collect();
                let zb: Vec<f64> = z.iter().map(|v| v / nz).collect();
                let gamma = ((1.0 + dot(&xb, &zb)) / 2.0).sqrt();
                // wbar = (xbar + J zbar) / (2 gamma) has unit hyperbolic norm.
                let mut wb = vec![0.0; n];
                wb[0] = (xb[0] + zb[0]) / (2.0 * gamma);
                for i in 1..n {
                    wb[i] = (xb[i] - zb[i]) / (2.0 * gamma);
                }
                // v is the Jordan square root of wbar.
                let scale = (2.0 * (wb[0] + 1.0)).sqrt();
                let mut v = DVector::from_iterator(n, wb.iter().copied());
                v[0] += 1.0;
                v /= scale;
                let beta = (dx / dz).powf(0.25);
                let mut jv = v.clone();
                for i in 1..n {
                    jv[i] = -jv[i];
                }
                let mut w = 2.0 * &v * v.transpose();
                let mut w_inv = 2.0 * &jv * jv.transpose();
                w[(0, 0)] -= 1.0;
                w_inv[(0, 0)] -= 1.0;
                for i in 1..n {
                    w[(i, i)] += 1.0;
                    w_inv[(i, i)] += 1.0;
                }
                w *= beta;
                w_inv /= beta;
                let lambda = (&w * DVector::from_column_slice(z)).as_slice().to_vec();
                Some((Scaling::Soc { w, w_inv }, lambda))
            }
            Cone::Psd(m) => {
                let lx = smat(m, x).cholesky()?.l();
                let lz = smat(m, z).cholesky()?.l();
                let (r, r_inv, sv) = psd_scaling_from_factors(&lx, &lz)?;
                let mut lambda = vec![0.0; svec_len(m)];
                for j in 0..m {
                    lambda[svec_index(m, j, j)] = sv[j];
                }
                Some((Scaling::Psd { m, r, r_inv }, lambda))
            }
        }
    }

    /// Moves to the new scaled iterates `xt = W^{-T} x+`, `zt = W z+`; returns the
    /// unscaled `(x+, z+)`, the new scaling, and the new `lambda`.
    pub(crate) fn advance(&self, cone: &Cone, xt: &[f64], zt: &[f64]) -> Option<Advanced> {
        let x = self.apply_wt(xt);
        let z = self.apply_winv(zt);
        match self {
            Scaling::Psd { m, r, r_inv } => {
                let m = *m;
                let l1 = smat(m, xt).cholesky()?.l();
                let l2 = smat(m, zt).cholesky()?.l();
                let (q, q_inv, sv) = psd_scaling_from_factors(&l1, &l2)?;
                let r_new = r * q;
                let r_inv_new = q_inv * r_inv;
                let mut lambda = vec![0.0; svec_len(m)];
                for j in 0..m {
                    lambda[svec_index(m, j, j)] = sv[j];
                }
                Some((
                    x,
                    z,
                    Scaling::Psd {
                        m,
                        r: r_new,
                        r_inv: r_inv_new,
                    },
                    lambda,
                ))
            }
            _ => {
                let (s, lambda) = Scaling::new(cone, &x, &z)?;
                Some((x, z, s, lambda))
            }
        }
    }

    /// `W v`
    pub(crate) fn apply_w(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Scaling::Nonneg { w } => v.iter().zip(w).map(|(a, b)| a * b).collect(),
            Scaling::Soc { w, .. } => mat_vec(w, v),
            Scaling::Psd { m, r, .. } => congruence(*m, &r.transpose(), v),
        }
    }

    /// `W^{-T} v`
    pub(crate) fn apply_winv_t(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Scaling::Nonneg { w } => v.iter().zip(w).map(|(a, b)| a / b).collect(),
            Scaling::Soc { w_inv, .. } => mat_vec(w_inv, v),
            Scaling::Psd { m, r_inv, .. } => congruence(*m, r_inv, v),
        }
    }

    /// `W^T v`
    pub(crate) fn apply_wt(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Scaling::Nonneg { w } => v.iter().zip(w).map(|(a, b)| a * b).collect(),
            Scaling::Soc { w, .. } => mat_vec(w, v),
            Scaling::Psd { m, r, .. } => congruence(*m, r, v),
        }
    }

    /// `W^{-1} v`
    pub(crate) fn apply_winv(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Scaling::Nonneg { w } => v.iter().zip(w).map(|(a, b)| a / b).collect(),
            Scaling::Soc { w_inv, .. } => mat_vec(w_inv, v),
            Scaling::Psd { m, r_inv, .. } => congruence(*m, &r_inv.transpose(), v),
        }
    }

    /// `W^T W v`
    pub(crate) fn apply_wtw(&self, v: &[f64]) -> Vec<f64> {
        self.apply_wt(&self.apply_w(v))
    }
}

/// `svec(B V B^T)` for `V = smat(v)`.
fn congruence(m: usize, b: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let vm = smat(m, v);
    let out = b * vm * b.transpose();
    let mut res = vec![0.0; svec_len(m)];
    svec_into(&out, &mut res);
    res
}

fn mat_vec(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(v)).as_slice().to_vec()
}

/// Given `X = Lx Lx^T`, `Z = Lz Lz^T`, returns `R`, `R^{-1}` and the singular
/// values `s` with `R^{-1} X R^{-T} = R^T Z R = diag(s)`.
fn psd_scaling_from_factors(
    lx: &DMatrix<f64>,
    lz: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)> {
    let prod = lz.transpose() * lx;
    let svd = prod.svd(false, true);
    let v_t = svd.v_t?;
    let s = svd.singular_values;
    if s.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return None;
    }
    let m = s.len();
    let v = v_t.transpose();
    let mut r = lx * &v;
    for j in 0..m {
        let f = 1.0 / s[j].sqrt();
        for i in 0..m {
            r[(i, j)] *= f;
        }
    }
    // R^{-1} = diag(s)^{1/2} V^T Lx^{-1}
    let lx_inv = lx.clone().try_inverse()?;
    let mut r_inv = v_t * lx_inv;
    for i in 0..m {
        let f = s[i].sqrt();
        for j in 0..m {
            r_inv[(i, j)] *= f;
        }
    }
    Some((r, r_inv, s.as_slice().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interior_soc() -> (Vec<f64>, Vec<f64>) {
        (vec![3.0, 1.0, -0.5, 0.7], vec![2.0, -0.3, 1.1, 0.2])
    }

    #[test]
    fn svec_layout_roundtrip() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let v = svec(&a);
        assert_eq!(v.len(), 6);
        assert_eq!(svec_index(3, 0, 0), 0);
        assert_eq!(svec_index(3, 2, 0), 2);
        assert_eq!(svec_index(3, 1, 1), 3);
        assert_eq!(svec_index(3, 2, 2), 5);
        assert!((smat(3, v.as_slice()) - &a).norm() < 1e-14);
        // trace inner product is preserved
        let b = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let tr = (&a * &b).trace();
        assert!((svec(&a).dot(&svec(&b)) - tr).abs() < 1e-12);
    }

    #[test]
    fn soc_scaling_maps_both_points_to_lambda() {
        let (x, z) = interior_soc();
        let (s, lambda) = Scaling::new(&Cone::Soc(4), &x, &z).unwrap();
        let a = s.apply_winv_t(&x);
        let b = s.apply_w(&z);
        for i in 0..4 {
            assert!((a[i] - lambda[i]).abs() < 1e-12, "{a:?} {lambda:?}");
            assert!((b[i] - lambda[i]).abs() < 1e-12);
        }
        let back = s.apply_wt(&a);
        for i in 0..4 {
            assert!((back[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn psd_scaling_maps_both_points_to_lambda() {
        let x = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let z = DMatrix::from_row_slice(3, 3, &[2.0, -0.4, 0.1, -0.4, 1.0, 0.3, 0.1, 0.3, 1.5]);
        let (xs, zs) = (svec(&x), svec(&z));
        let cone = Cone::Psd(3);
        let (s, lambda) = Scaling::new(&cone, xs.as_slice(), zs.as_slice()).unwrap();
        let a = s.apply_winv_t(xs.as_slice());
        let b = s.apply_w(zs.as_slice());
        for i in 0..6 {
            assert!((a[i] - lambda[i]).abs() < 1e-10);
            assert!((b[i] - lambda[i]).abs() < 1e-10);
        }
        // advancing to the same point reproduces the originals
        let (x2, z2, _, l2) = s.advance(&cone, &lambda, &lambda).unwrap();
        for i in 0..6 {
            assert!((x2[i] - xs[i]).abs() < 1e-10);
            assert!((z2[i] - zs[i]).abs() < 1e-10);
            assert!((l2[i] - lambda[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn soc_division_inverts_product() {
        let (l, v) = interior_soc();
        let cone = Cone::Soc(4);
        let mut x = vec![0.0; 4];
        cone.divide(&l, &v, &mut x);
        let mut back = vec![0.0; 4];
        cone.product(&l, &x, &mut back);
        for i in 0..4 {
            assert!((back[i] - v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn max_step_hits_boundary() {
        let cone = Cone::Soc(3);
        let l = [2.0, 0.0, 0.0];
        let d = [-1.0, 1.0, 0.0];
        let a = cone.max_step(&l, &d);
        // (2 - a)^2 = a^2  ->  a = 1
        assert!((a - 1.0).abs() < 1e-12);
        let psd = Cone::Psd(2);
        let mut lam = vec![0.0; 3];
        psd.identity(&mut lam);
        let d = svec(&DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0]));
        assert!((psd.max_step(&lam, d.as_slice()) - 0.5).abs() < 1e-12);
    }
}

//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling.
//!
//! Solves the standard form
//!
//! ```text
//! minimize    c_c' x_c + c_f' x_f
//! subject to  A_c x_c + A_f x_f = b,   x_c in K,   x_f free
//! ```
//!
//! together with its dual `max b'y  s.t.  A_c' y + z = c_c,  A_f' y = c_f,  z in K`.
//! Each Newton step reduces to a linear system of order `rows + free`.

use nalgebra::{DMatrix, DVector};

use crate::cone::{Cone, Scaling};

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// The constraints admit no point; a Farkas certificate was found.
    Infeasible,
    /// The objective is unbounded below; an improving ray was found.
    Unbounded,
    /// The run stalled before `tol` but its best iterate met `reduced_tol`.
    AlmostOptimal,
    /// Iteration cap or a breakdown; the best iterate is reported.
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::AlmostOptimal => "almost-optimal",
            SolveStatus::NumericalFailure => "numerical-failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Relative tolerance on primal residual, dual residual and duality gap.
    pub tol: f64,
    /// Looser tolerance accepted when progress stalls short of `tol`.
    pub reduced_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-7,
            reduced_tol: 1e-5,
            max_iters: 120,
        }
    }
}

impl SolverSettings {
    pub fn with_tol(tol: f64) -> Self {
        SolverSettings {
            tol,
            reduced_tol: tol.max(1e-5),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub cones: Vec<Cone>,
    pub a_c: DMatrix<f64>,
    pub a_f: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c_c: DVector<f64>,
    pub c_f: DVector<f64>,
}

impl StandardForm {
    fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.cones.len() + 1);
        let mut k = 0;
        out.push(0);
        for c in &self.cones {
            k += c.dim();
            out.push(k);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RawSolution {
    pub status: SolveStatus,
    pub x_c: DVector<f64>,
    pub x_f: DVector<f64>,
    pub y: DVector<f64>,
    pub iterations: usize,
}

struct Iterate {
    x: DVector<f64>,
    xf: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx_t: DVector<f64>,
    dz_t: DVector<f64>,
    dxf: DVector<f64>,
    dy: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

struct Kkt {
    k: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Kkt {
    /// Solves against the unregularized matrix, refining the regularized
    /// factorization's answer a few times.
    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let mut x = self.lu.solve(rhs)?;
        let rnorm = rhs.norm().max(1e-300);
        let mut res = rhs - &self.k * &x;
        for _ in 0..5 {
            if res.norm() <= 1e-15 * rnorm {
                break;
            }
            let dx = self.lu.solve(&res)?;
            let cand = &x + dx;
            let cres = rhs - &self.k * &cand;
            if cres.norm() >= res.norm() {
                break;
            }
            x = cand;
            res = cres;
        }
        Some(x)
    }
}

fn cone_slices<'a>(offsets: &[usize], v: &'a [f64], k: usize) -> &'a [f64] {
    &v[offsets[k]..offsets[k + 1]]
}

struct Scalings {
    cones: Vec<Cone>,
    offsets: Vec<usize>,
    w: Vec<Scaling>,
    lambda: DVector<f64>,
}

impl Scalings {
    fn map(&self, v: &DVector<f64>, f: impl Fn(&Scaling, &[f64]) -> Vec<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for (k, s) in self.w.iter().enumerate() {
            let r = f(s, cone_slices(&self.offsets, v.as_slice(), k));
            out.as_mut_slice()[self.offsets[k]..self.offsets[k + 1]].copy_from_slice(&r);
        }
        out
    }

    fn wtw(&self, v: &DVector<f64>) -> DVector<f64> {
        self.map(v, |s, x| s.apply_wtw(x))
    }

    fn wt(&self, v: &DVector<f64>) -> DVector<f64> {
        self.map(v, |s, x| s.apply_wt(x))
    }

    fn winv_t(&self, v: &DVector<f64>) -> DVector<f64> {
        self.map(v, |s, x| s.apply_winv_t(x))
    }

    fn jordan(&self, u: &DVector<f64>, v: &DVector<f64>, divide: bool) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        for (k, cone) in self.cones.iter().enumerate() {
            let (a, b) = (self.offsets[k], self.offsets[k + 1]);
            let dst = &mut out.as_mut_slice()[a..b];
            if divide {
                cone.divide(&u.as_slice()[a..b], &v.as_slice()[a..b], dst);
            } else {
                cone.product(&u.as_slice()[a..b], &v.as_slice()[a..b], dst);
            }
        }
        out
    }

    fn identity(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.lambda.len());
        for (k, cone) in self.cones.iter().enumerate() {
            cone.identity(&mut out.as_mut_slice()[self.offsets[k]..self.offsets[k + 1]]);
        }
        out
    }

    fn max_step(&self, d: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        for (k, cone) in self.cones.iter().enumerate() {
            let (a, b) = (self.offsets[k], self.offsets[k + 1]);
            alpha = alpha.min(cone.max_step(&self.lambda.as_slice()[a..b], &d.as_slice()[a..b]));
        }
        alpha
    }
}

struct Equilibration {
    row: DVector<f64>,
    cost: f64,
}

fn equilibrate(sf: &StandardForm) -> (StandardForm, Equilibration) {
    let m = sf.b.len();
    let mut row = DVector::from_element(m, 1.0);
    for i in 0..m {
        let n2 = sf.a_c.row(i).norm_squared() + sf.a_f.row(i).norm_squared();
        if n2 > 0.0 {
            row[i] = 1.0 / n2.sqrt();
        }
    }
    let cmax = sf.c_c.amax().max(sf.c_f.amax());
    let cost = if cmax > 0.0 { cmax } else { 1.0 };
    let mut out = sf.clone();
    for i in 0..m {
        out.a_c.row_mut(i).scale_mut(row[i]);
        out.a_f.row_mut(i).scale_mut(row[i]);
        out.b[i] *= row[i];
    }
    out.c_c /= cost;
    out.c_f /= cost;
    (out, Equilibration { row, cost })
}

/// Solves a standard-form program. Never panics on bad data; breakdowns are
/// reported as [`SolveStatus::NumericalFailure`].
pub(crate) fn solve_standard(original: &StandardForm, settings: &SolverSettings) -> RawSolution {
    let (sf, eq) = equilibrate(original);
    let m = sf.b.len();
    let nc = sf.c_c.len();
    let nf = sf.c_f.len();
    let offsets = sf.offsets();
    let degree: usize = sf.cones.iter().map(|c| c.degree()).sum();
    let bnorm = sf.b.norm();
    let cnorm = (sf.c_c.norm_squared() + sf.c_f.norm_squared()).sqrt();

    let mut e = DVector::zeros(nc);
    for (k, cone) in sf.cones.iter().enumerate() {
        cone.identity(&mut e.as_mut_slice()[offsets[k]..offsets[k + 1]]);
    }
    let mut it = Iterate {
        x: e.clone(),
        xf: DVector::zeros(nf),
        y: DVector::zeros(m),
        z: e,
        tau: 1.0,
        kappa: 1.0,
    };
    let mut scal = match initial_scalings(&sf.cones, &offsets, &it.x, &it.z) {
        Some(s) => s,
        None => return finish(original, &eq, &it, SolveStatus::NumericalFailure, 0),
    };

    let mut best: Option<(f64, Iterate)> = None;
    let mut last_iter = 0;
    for iter in 0..settings.max_iters {
        last_iter = iter + 1;
        let r_p = &sf.a_c * &it.x + &sf.a_f * &it.xf - &sf.b * it.tau;
        let aty = sf.a_c.tr_mul(&it.y);
        let r_c = &aty + &it.z - &sf.c_c * it.tau;
        let r_f = sf.a_f.tr_mul(&it.y) - &sf.c_f * it.tau;
        let pobj = sf.c_c.dot(&it.x) + sf.c_f.dot(&it.xf);
        let dobj = sf.b.dot(&it.y);
        let r_g = pobj - dobj + it.kappa;

        let pres = r_p.norm() / (it.tau * (1.0 + bnorm));
        let dres = (r_c.norm_squared() + r_f.norm_squared()).sqrt() / (it.tau * (1.0 + cnorm));
        let (ph, dh) = (pobj / it.tau, dobj / it.tau);
        let gap = (ph - dh).abs() / (1.0 + ph.abs().min(dh.abs()));
        let merit = pres.max(dres).max(gap);
        if merit <= settings.tol {
            return finish(original, &eq, &it, SolveStatus::Optimal, iter);
        }
        if dobj > 0.0 {
            let ray = ((&aty + &it.z).norm_squared() + sf.a_f.tr_mul(&it.y).norm_squared()).sqrt();
            if ray / dobj <= settings.tol {
                return finish(original, &eq, &it, SolveStatus::Infeasible, iter);
            }
        }
        if pobj < 0.0 {
            let ray = (&sf.a_c * &it.x + &sf.a_f * &it.xf).norm();
            if ray / -pobj <= settings.tol {
                return finish(original, &eq, &it, SolveStatus::Unbounded, iter);
            }
        }
        if best
            .as_ref()
            .is_some_and(|(b, _)| *b <= settings.reduced_tol && merit > 1e3 * *b)
        {
            break;
        }
        if best.as_ref().is_none_or(|(b, _)| merit < *b) {
            best = Some((
                merit,
                Iterate {
                    x: it.x.clone(),
                    xf: it.xf.clone(),
                    y: it.y.clone(),
                    z: it.z.clone(),
                    tau: it.tau,
                    kappa: it.kappa,
                },
            ));
        }

        let mu = (it.x.dot(&it.z) + it.tau * it.kappa) / (degree as f64 + 1.0);

        // Hc and the KKT factorization are shared by predictor and corrector.
        let Some(kkt) = factor_kkt(&sf, &scal) else {
            break;
        };
        let hc = scal.wtw(&sf.c_c);
        let v = &sf.a_c * &hc;
        let mut rhs2 = DVector::zeros(m + nf);
        rhs2.rows_mut(0, m).copy_from(&(&v + &sf.b));
        rhs2.rows_mut(m, nf).copy_from(&sf.c_f);
        let Some(p2) = kkt.solve(&rhs2) else {
            break;
        };
        let ctx = StepContext {
            sf: &sf,
            scal: &scal,
            kkt: &kkt,
            hc: &hc,
            v: &v,
            p2: &p2,
            r_p: &r_p,
            r_c: &r_c,
            r_f: &r_f,
            r_g,
            tau: it.tau,
            kappa: it.kappa,
        };

        let lam = &scal.lambda;
        let ds_aff = -lam.clone();
        let Some(aff) = ctx.direction(1.0, &ds_aff, -it.tau * it.kappa) else {
            break;
        };
        let alpha_aff = step_length(&scal, &aff, it.tau, it.kappa).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        let lam_sq = scal.jordan(lam, lam, false);
        let cross = scal.jordan(&aff.dx_t, &aff.dz_t, false);
        let rs = -lam_sq - cross + scal.identity() * (sigma * mu);
        let ds = scal.jordan(lam, &rs, true);
        let rk = -it.tau * it.kappa - aff.dtau * aff.dkappa + sigma * mu;
        let Some(dir) = ctx.direction(1.0 - sigma, &ds, rk) else {
            break;
        };
        let alpha = (0.99 * step_length(&scal, &dir, it.tau, it.kappa)).min(1.0);

        let xt = lam + &dir.dx_t * alpha;
        let zt = lam + &dir.dz_t * alpha;
        let Some((x, z, next)) = advance_scalings(&scal, &xt, &zt) else {
            break;
        };
        it.x = x;
        it.z = z;
        scal = next;
        it.y += &dir.dy * alpha;
        it.xf += &dir.dxf * alpha;
        it.tau += alpha * dir.dtau;
        it.kappa += alpha * dir.dkappa;
        if !(it.tau > 0.0 && it.kappa > 0.0) || !it.x.iter().all(|v| v.is_finite()) {
            break;
        }
        if alpha < 1e-10 {
            break;
        }
    }
    let (it, status) = match best {
        Some((b, best_it)) if b <= settings.reduced_tol => (best_it, SolveStatus::AlmostOptimal),
        Some((_, best_it)) => (best_it, SolveStatus::NumericalFailure),
        None => (it, SolveStatus::NumericalFailure),
    };
    finish(original, &eq, &it, status, last_iter)
}

struct StepContext<'a> {
    sf: &'a StandardForm,
    scal: &'a Scalings,
    kkt: &'a Kkt,
    hc: &'a DVector<f64>,
    v: &'a DVector<f64>,
    p2: &'a DVector<f64>,
    r_p: &'a DVector<f64>,
    r_c: &'a DVector<f64>,
    r_f: &'a DVector<f64>,
    r_g: f64,
    tau: f64,
    kappa: f64,
}

impl StepContext<'_> {
    /// Newton direction for the residual fraction `eta` and scaled
    /// complementarity right-hand side `ds` (`dx~ + dz~ = ds`).
    fn direction(&self, eta: f64, ds: &DVector<f64>, rk: f64) -> Option<Direction> {
        let sf = self.sf;
        let m = sf.b.len();
        let nf = sf.c_f.len();
        let u = self.scal.wtw(&(self.r_c * eta)) + self.scal.wt(ds);
        let mut rhs1 = DVector::zeros(m + nf);
        rhs1.rows_mut(0, m)
            .copy_from(&(-(self.r_p * eta) - &sf.a_c * &u));
        rhs1.rows_mut(m, nf).copy_from(&(-(self.r_f * eta)));
        let p1 = self.kkt.solve(&rhs1)?;

        let vb = self.v - &sf.b;
        let lin = |p: &DVector<f64>| vb.dot(&p.rows(0, m)) + sf.c_f.dot(&p.rows(m, nf));
        let denom = lin(self.p2) - sf.c_c.dot(self.hc) - self.kappa / self.tau;
        let numer = -eta * self.r_g - sf.c_c.dot(&u) - rk / self.tau - lin(&p1);
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        let dtau = numer / denom;
        let sol = p1 + self.p2 * dtau;
        let dy = sol.rows(0, m).into_owned();
        let dxf = sol.rows(m, nf).into_owned();
        let dx = self.scal.wtw(&(sf.a_c.tr_mul(&dy) - &sf.c_c * dtau)) + u;
        let dx_t = self.scal.winv_t(&dx);
        let dz_t = ds - &dx_t;
        let dkappa = (rk - self.kappa * dtau) / self.tau;
        if !dtau.is_finite() || !dx_t.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(Direction {
            dx_t,
            dz_t,
            dxf,
            dy,
            dtau,
            dkappa,
        })
    }
}

fn step_length(scal: &Scalings, d: &Direction, tau: f64, kappa: f64) -> f64 {
    let mut alpha = scal.max_step(&d.dx_t).min(scal.max_step(&d.dz_t));
    if d.dtau < 0.0 {
        alpha = alpha.min(-tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        alpha = alpha.min(-kappa / d.dkappa);
    }
    alpha
}

fn initial_scalings(
    cones: &[Cone],
    offsets: &[usize],
    x: &DVector<f64>,
    z: &DVector<f64>,
) -> Option<Scalings> {
    let mut w = Vec::with_capacity(cones.len());
    let mut lambda = DVector::zeros(x.len());
    for (k, cone) in cones.iter().enumerate() {
        let (a, b) = (offsets[k], offsets[k + 1]);
        let (s, l) = Scaling::new(cone, &x.as_slice()[a..b], &z.as_slice()[a..b])?;
        lambda.as_mut_slice()[a..b].copy_from_slice(&l);
        w.push(s);
    }
    Some(Scalings {
        cones: cones.to_vec(),
        offsets: offsets.to_vec(),
        w,
        lambda,
    })
}

fn advance_scalings(
    scal: &Scalings,
    xt: &DVector<f64>,
    zt: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>, Scalings)> {
    let n = xt.len();
    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    let mut lambda = DVector::zeros(n);
    let mut w = Vec::with_capacity(scal.w.len());
    for (k, cone) in scal.cones.iter().enumerate() {
        let (a, b) = (scal.offsets[k], scal.offsets[k + 1]);
        let (xk, zk, s, l) = scal.w[k].advance(cone, &xt.as_slice()[a..b], &zt.as_slice()[a..b])?;
        x.as_mut_slice()[a..b].copy_from_slice(&xk);
        z.as_mut_slice()[a..b].copy_from_slice(&zk);
        lambda.as_mut_slice()[a..b].copy_from_slice(&l);
        w.push(s);
    }
    Some((
        x,
        z,
        Scalings {
            cones: scal.cones.clone(),
            offsets: scal.offsets.clone(),
            w,
            lambda,
        },
    ))
}

fn factor_kkt(sf: &StandardForm, scal: &Scalings) -> Option<Kkt> {
    let m = sf.b.len();
    let nf = sf.c_f.len();
    // H A_c' one column at a time
    let mut hat = DMatrix::zeros(sf.c_c.len(), m);
    for i in 0..m {
        let row = sf.a_c.row(i).transpose();
        if row.iter().all(|v| *v == 0.0) {
            continue;
        }
        hat.set_column(i, &scal.wtw(&row));
    }
    let mmat = &sf.a_c * &hat;
    let scale = (0..m).map(|i| mmat[(i, i)]).fold(1.0, f64::max);
    let reg = 1e-13 * scale;
    let mut k = DMatrix::zeros(m + nf, m + nf);
    k.view_mut((0, 0), (m, m)).copy_from(&mmat);
    k.view_mut((0, m), (m, nf)).copy_from(&sf.a_f);
    k.view_mut((m, 0), (nf, m)).copy_from(&sf.a_f.transpose());
    for i in 0..m {
        k[(i, i)] += reg;
    }
    for i in 0..nf {
        k[(m + i, m + i)] -= reg;
    }
    if !k.iter().all(|v| v.is_finite()) {
        return None;
    }
    let lu = k.clone().lu();
    for i in 0..m {
        k[(i, i)] -= reg;
    }
    for i in 0..nf {
        k[(m + i, m + i)] += reg;
    }
    Some(Kkt { k, lu })
}

fn finish(
    original: &StandardForm,
    eq: &Equilibration,
    it: &Iterate,
    status: SolveStatus,
    iterations: usize,
) -> RawSolution {
    let m = original.b.len();
    // Certificates are rays: report them without dividing by tau.
    let tau = match status {
        SolveStatus::Infeasible | SolveStatus::Unbounded => 1.0,
        _ => it.tau,
    };
    let mut y = DVector::zeros(m);
    for i in 0..m {
        y[i] = it.y[i] * eq.row[i] * eq.cost / tau;
    }
    RawSolution {
        status,
        x_c: &it.x / tau,
        x_f: &it.xf / tau,
        y,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{svec, svec_len};

    #[test]
    fn tiny_lp() {
        // min x0 + 2 x1  s.t. x0 + x1 = 1, x >= 0  ->  x = (1, 0)
        let sf = StandardForm {
            cones: vec![Cone::Nonneg(2)],
            a_c: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            a_f: DMatrix::zeros(1, 0),
            b: DVector::from_vec(vec![1.0]),
            c_c: DVector::from_vec(vec![1.0, 2.0]),
            c_f: DVector::zeros(0),
        };
        let sol = solve_standard(&sf, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x_c[0] - 1.0).abs() < 1e-6);
        assert!(sol.x_c[1].abs() < 1e-6);
        assert!((sol.y[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn min_eigenvalue_sdp() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let sf = StandardForm {
            cones: vec![Cone::Psd(2)],
            a_c: DMatrix::from_row_slice(1, 3, svec(&DMatrix::identity(2, 2)).as_slice()),
            a_f: DMatrix::zeros(1, 0),
            b: DVector::from_vec(vec![1.0]),
            c_c: svec(&c),
            c_f: DVector::zeros(0),
        };
        let sol = solve_standard(&sf, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.x_c.len(), svec_len(2));
        assert!((sol.x_c[2] - 1.0).abs() < 1e-6, "{:?}", sol.x_c);
    }

    #[test]
    fn infeasible_lp() {
        // x0 + x1 = -1 with x >= 0
        let sf = StandardForm {
            cones: vec![Cone::Nonneg(2)],
            a_c: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            a_f: DMatrix::zeros(1, 0),
            b: DVector::from_vec(vec![-1.0]),
            c_c: DVector::from_vec(vec![1.0, 1.0]),
            c_f: DVector::zeros(0),
        };
        let sol = solve_standard(&sf, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }
}

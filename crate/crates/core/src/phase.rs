//! Surface coefficient design for fixed beamformers: semidefinite lifting,
//! successive convex approximation and Gaussian randomization.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use surveil_conic::{ConicProblem, LinExpr, SolveStatus, SolverSettings, VarId};

use crate::channel::ChannelSet;
use crate::error::{CoreError, Result};
use crate::metrics::{BeamPair, Powers, StarCoefficients};

/// Which beamforming scheme the quadratics describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Both beamformers fixed; all four terms present.
    Full,
    /// MRT transmit tracking the surface, fixed zero-forcing receiver.
    Rzf,
    /// MRC receive tracking the surface, fixed zero-forcing transmitter.
    Tzf,
}

/// Quadratic forms in the lifted coefficient vectors `v = [u; 1]`.
///
/// Each matrix `A_k` is stored as the list of vectors `a` whose outer
/// products sum to it, so that `tr(A_k Q) = sum a^H Q a`. The norm-valued
/// terms of the zero-forcing schemes are sums of several outer products; all
/// other terms are rank one.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseQuadratics {
    pub variant: Variant,
    /// `|h_SD + h_RD^H Theta_r h_SR|^2`, on `Q_r`.
    pub a1: Vec<DVector<Complex64>>,
    /// Jamming at the suspicious receiver, on `Q_t`.
    pub a2: Vec<DVector<Complex64>>,
    /// Source signal at the eavesdropper, on `Q_t`.
    pub a3: Vec<DVector<Complex64>>,
    /// Loop-back interference at the eavesdropper, on `Q_r`; empty for the
    /// zero-forcing schemes.
    pub a4: Vec<DVector<Complex64>>,
}

/// Stacks `conj(c)` and `conj(tail)` so that `a^H [u; 1] = c^T u + tail`.
fn augmented(c: DVector<Complex64>, tail: Complex64) -> DVector<Complex64> {
    let n = c.len();
    DVector::from_fn(n + 1, |i, _| if i < n { c[i].conj() } else { tail.conj() })
}

/// Builds the quadratic forms for the given scheme. For [`Variant::Full`]
/// both beamformers of `pair` are used; [`Variant::Rzf`] uses only `w_r` and
/// [`Variant::Tzf`] only `w_t`.
pub fn build_phase_quadratics(
    ch: &ChannelSet,
    pair: &BeamPair,
    variant: Variant,
) -> Result<PhaseQuadratics> {
    let zero = Complex64::new(0.0, 0.0);
    if pair.w_t.len() != ch.n_t() || pair.w_r.len() != ch.n_r() {
        return Err(CoreError::Dimension {
            what: "beam pair",
            expected: ch.n_t() + ch.n_r(),
            found: pair.w_t.len() + pair.w_r.len(),
        });
    }
    let rd = ch.h_rd.map(|z| z.conj());
    let a1 = vec![augmented(rd.component_mul(&ch.h_sr), ch.h_sd)];
    let er_w = &ch.h_er * &pair.w_t;
    let re_row = (pair.w_r.adjoint() * &ch.h_re).transpose();
    let a2 = match variant {
        Variant::Rzf => (0..ch.n_t())
            .map(|j| augmented(rd.component_mul(&ch.h_er.column(j)), zero))
            .collect(),
        _ => vec![augmented(rd.component_mul(&er_w), zero)],
    };
    let a3 = match variant {
        Variant::Tzf => (0..ch.n_r())
            .map(|i| augmented(ch.h_re.row(i).transpose().component_mul(&ch.h_sr), zero))
            .collect(),
        _ => vec![augmented(re_row.component_mul(&ch.h_sr), zero)],
    };
    let a4 = match variant {
        Variant::Full => {
            let b = pair.w_r.dotc(&(&ch.h_ee * &pair.w_t));
            vec![augmented(re_row.component_mul(&er_w), b)]
        }
        _ => Vec::new(),
    };
    Ok(PhaseQuadratics {
        variant,
        a1,
        a2,
        a3,
        a4,
    })
}

fn quad(list: &[DVector<Complex64>], q: &DMatrix<Complex64>) -> f64 {
    list.iter().map(|a| a.dotc(&(q * a)).re).sum()
}

fn quad_vec(list: &[DVector<Complex64>], v: &DVector<Complex64>) -> f64 {
    list.iter().map(|a| a.dotc(v).norm_sqr()).sum()
}

fn matrix_of(list: &[DVector<Complex64>], n: usize) -> DMatrix<Complex64> {
    list.iter()
        .fold(DMatrix::zeros(n, n), |acc, a| acc + a * a.adjoint())
}

/// `[u; 1]`
pub fn lift(u: &DVector<Complex64>) -> DVector<Complex64> {
    let n = u.len();
    DVector::from_fn(n + 1, |i, _| {
        if i < n {
            u[i]
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

impl PhaseQuadratics {
    pub fn n(&self) -> usize {
        self.a1[0].len() - 1
    }

    /// Dense matrices `A_1 .. A_4`.
    pub fn matrices(&self) -> [DMatrix<Complex64>; 4] {
        let m = self.n() + 1;
        [
            matrix_of(&self.a1, m),
            matrix_of(&self.a2, m),
            matrix_of(&self.a3, m),
            matrix_of(&self.a4, m),
        ]
    }

    /// `[tr(A1 Q_r), tr(A2 Q_t), tr(A3 Q_t), tr(A4 Q_r)]`.
    pub fn traces(&self, q_t: &DMatrix<Complex64>, q_r: &DMatrix<Complex64>) -> [f64; 4] {
        [
            quad(&self.a1, q_r),
            quad(&self.a2, q_t),
            quad(&self.a3, q_t),
            quad(&self.a4, q_r),
        ]
    }

    /// The same four terms for rank-one lifted coefficients.
    pub fn star_traces(&self, star: &StarCoefficients) -> [f64; 4] {
        let (vt, vr) = (lift(star.u_t()), lift(star.u_r()));
        [
            quad_vec(&self.a1, &vr),
            quad_vec(&self.a2, &vt),
            quad_vec(&self.a3, &vt),
            quad_vec(&self.a4, &vr),
        ]
    }
}

/// Lifted coefficient matrices and the slack values of the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPhasePair {
    pub q_t: DMatrix<Complex64>,
    pub q_r: DMatrix<Complex64>,
    /// First slack: `I` of the ratio form or the receiver term bound `t` of
    /// the gap form.
    pub i_k: f64,
    /// Second slack: `S` of the ratio form or the eavesdropper term bound `s`
    /// of the gap form.
    pub s_k: f64,
}

impl LiftedPhasePair {
    /// Rank-one lifting of feasible coefficients.
    pub fn from_star(star: &StarCoefficients) -> Self {
        let (vt, vr) = (lift(star.u_t()), lift(star.u_r()));
        LiftedPhasePair {
            q_t: &vt * vt.adjoint(),
            q_r: &vr * vr.adjoint(),
            i_k: f64::NAN,
            s_k: f64::NAN,
        }
    }

    /// Largest violation of the diagonal and corner constraints.
    pub fn constraint_error(&self) -> f64 {
        let m = self.q_t.nrows();
        let mut err: f64 = 0.0;
        for i in 0..m - 1 {
            err = err.max((self.q_t[(i, i)].re + self.q_r[(i, i)].re - 1.0).abs());
        }
        err.max((self.q_t[(m - 1, m - 1)].re - 1.0).abs())
            .max((self.q_r[(m - 1, m - 1)].re - 1.0).abs())
    }
}

/// Surrogate used by each convex step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Surrogate {
    /// Minimize `SINR_D / SINR_E` through the slacks `I >= 1/(T_a T_b)` and
    /// `S >= R_a R_b`.
    ProductRatio,
    /// Minimize `SINR_D / P_s - SINR_E / P_s` through `t >= R_a / T_b` and
    /// `s <= T_a / R_b`.
    SinrGap,
}

#[derive(Debug, Clone)]
pub struct ScaOptions {
    pub eps: f64,
    pub max_iters: usize,
    pub surrogate: Surrogate,
    /// Force a common transmission ratio on every element.
    pub uniform_beta: bool,
    pub solver: SolverSettings,
}

impl Default for ScaOptions {
    fn default() -> Self {
        ScaOptions {
            eps: 1e-3,
            max_iters: 50,
            surrogate: Surrogate::SinrGap,
            uniform_beta: false,
            solver: SolverSettings::default(),
        }
    }
}

/// The four positive factors of the objective:
/// `T_a = x3`, `T_b = P_E x2 + sigma_D^2`, `R_a = x1`, `R_b = P_E x4 + sigma_E^2`.
fn factors(x: [f64; 4], pw: &Powers) -> [f64; 4] {
    [
        x[2],
        pw.p_e * x[1] + pw.sigma_d2,
        x[0],
        pw.p_e * x[3] + pw.sigma_e2,
    ]
}

/// Objective of the chosen surrogate evaluated exactly on trace values.
pub fn true_objective(surrogate: Surrogate, x: [f64; 4], pw: &Powers) -> f64 {
    let [ta, tb, ra, rb] = factors(x, pw);
    match surrogate {
        Surrogate::ProductRatio => ra * rb / (ta * tb),
        Surrogate::SinrGap => ra / tb - ta / rb,
    }
}

/// One factor normalized by its value at the previous iterate.
enum Factor {
    Constant,
    Affine(LinExpr),
}

/// `p * q >= lower` for normalized factors equal to one at the previous
/// iterate: returns `(lin, diff)` with `4 p q >= lin - diff^2`, or an exact
/// affine product when one side is constant.
enum Lower {
    Exact(LinExpr),
    Bound(LinExpr, LinExpr),
}

fn lower_product(p: &Factor, q: &Factor) -> Lower {
    match (p, q) {
        (Factor::Constant, Factor::Constant) => Lower::Exact(LinExpr::constant(1.0)),
        (Factor::Constant, Factor::Affine(e)) | (Factor::Affine(e), Factor::Constant) => {
            Lower::Exact(e.clone())
        }
        (Factor::Affine(a), Factor::Affine(b)) => {
            // -4xy <= (x-y)^2 - 2(x0+y0)(x+y) + (x0+y0)^2 with x0 = y0 = 1
            Lower::Bound((a.clone() + b.clone()) * 4.0 - 4.0, a.clone() - b.clone())
        }
    }
}

/// Adds `k / v <= p q` (with `v` a positive scalar expression) using the
/// concave minorant of the product.
fn add_inverse_below_product(
    prob: &mut ConicProblem,
    k: f64,
    v: LinExpr,
    p: &Factor,
    q: &Factor,
) -> Result<()> {
    match lower_product(p, q) {
        Lower::Exact(e) => prob.add_inverse_le(k, v, e)?,
        Lower::Bound(lin, diff) => {
            let aux = prob.add_free("aux", 2);
            let (a0, a1) = (prob.scalar(aux, 0)?, prob.scalar(aux, 1)?);
            prob.add_inverse_le(4.0 * k, v, a0.clone())?;
            prob.add_square_le(diff, a1.clone())?;
            prob.add_le(a0 + a1 - lin)?;
        }
    }
    Ok(())
}

/// Adds `e <= v * p` (with `v` a free scalar expression equal to `v0` at the
/// previous iterate) using the concave minorant of `v p` at `(v0, 1)`.
fn add_affine_below_product(
    prob: &mut ConicProblem,
    e: LinExpr,
    v: LinExpr,
    p: &Factor,
    v0: f64,
) -> Result<()> {
    match p {
        Factor::Constant => prob.add_le(e - v)?,
        Factor::Affine(a) => {
            // 4 e + (v - p)^2 <= 2 (v0 + 1)(v + p) - (v0 + 1)^2
            let k = v0 + 1.0;
            let aux = prob.add_free("aux", 1);
            let t = prob.scalar(aux, 0)?;
            prob.add_square_le(v.clone() - a.clone(), t.clone())?;
            prob.add_le(e * 4.0 + t - (v + a.clone()) * (2.0 * k) + k * k)?;
        }
    }
    Ok(())
}

/// Normalizer for a source term: its value at the previous iterate, or
/// `tr(A)` when that value is negligible.
fn reference_scale(value: f64, list: &[DVector<Complex64>]) -> f64 {
    let tr: f64 = list.iter().map(|a| a.norm_squared()).sum();
    if value > 1e-9 * tr {
        value
    } else if tr > 0.0 {
        tr
    } else {
        1.0
    }
}

/// Adds `p * q <= bound` with the convex majorant
/// `4 x y <= (x + y)^2 - 2 (x0 - y0)(x - y) + (x0 - y0)^2`, which reduces to
/// `(p + q)^2 <= 4 bound` at `x0 = y0 = 1`.
fn add_product_below(
    prob: &mut ConicProblem,
    p: &Factor,
    q: &Factor,
    bound: LinExpr,
) -> Result<()> {
    match (p, q) {
        (Factor::Constant, Factor::Constant) => prob.add_le(LinExpr::constant(1.0) - bound)?,
        (Factor::Constant, Factor::Affine(e)) | (Factor::Affine(e), Factor::Constant) => {
            prob.add_le(e.clone() - bound)?
        }
        (Factor::Affine(a), Factor::Affine(b)) => {
            prob.add_square_le(a.clone() + b.clone(), bound * 4.0)?
        }
    }
    Ok(())
}

/// Result of one convex step.
#[derive(Debug, Clone)]
pub struct ScaStep {
    pub pair: LiftedPhasePair,
    /// Surrogate optimum in objective units.
    pub surrogate: f64,
    pub status: SolveStatus,
}

struct StepModel {
    prob: ConicProblem,
    q_t: VarId,
    q_r: VarId,
    slack: VarId,
    /// Multiplier converting the normalized surrogate to objective units.
    scale: f64,
    offset: f64,
}

fn scaled_quad(
    prob: &ConicProblem,
    v: VarId,
    list: &[DVector<Complex64>],
    coef: f64,
) -> Result<LinExpr> {
    let mut e = LinExpr::zero();
    for a in list {
        e += prob.hermitian_quad_form(v, a)? * coef;
    }
    Ok(e)
}

fn build_step(
    q: &PhaseQuadratics,
    prev: &LiftedPhasePair,
    pw: &Powers,
    opts: &ScaOptions,
) -> Result<StepModel> {
    let m = q.n() + 1;
    let x0 = q.traces(&prev.q_t, &prev.q_r);
    let f0 = factors(x0, pw);
    // The gap form tolerates vanishing source terms; only the ratio form
    // needs every factor strictly positive.
    let checked = match opts.surrogate {
        Surrogate::ProductRatio => 0..4,
        Surrogate::SinrGap => 0..0,
    };
    for (i, v) in f0.iter().enumerate() {
        if !v.is_finite() || (checked.contains(&i) && *v <= 0.0) {
            return Err(CoreError::Subproblem {
                what: "phase linearization point",
                status: format!("factor {i} is {v}"),
                residual: prev.constraint_error(),
            });
        }
    }
    if !(f0[1] > 0.0 && f0[3] > 0.0) {
        return Err(CoreError::Subproblem {
            what: "phase linearization point",
            status: "noise-plus-jamming factor is not positive".into(),
            residual: prev.constraint_error(),
        });
    }
    let (n_ta, n_ra) = match opts.surrogate {
        Surrogate::ProductRatio => (f0[0], f0[2]),
        Surrogate::SinrGap => (reference_scale(f0[0], &q.a3), reference_scale(f0[2], &q.a1)),
    };
    let mut prob = ConicProblem::new();
    let q_t = prob.add_hermitian_psd("Q_t", m)?;
    let q_r = prob.add_hermitian_psd("Q_r", m)?;
    for i in 0..m - 1 {
        prob.add_eq(prob.hermitian_diag(q_t, i)? + prob.hermitian_diag(q_r, i)? - 1.0)?;
        if opts.uniform_beta && i > 0 {
            prob.add_eq(prob.hermitian_diag(q_t, i)? - prob.hermitian_diag(q_t, 0)?)?;
        }
    }
    prob.add_eq(prob.hermitian_diag(q_t, m - 1)? - 1.0)?;
    prob.add_eq(prob.hermitian_diag(q_r, m - 1)? - 1.0)?;

    let jam_on = pw.p_e > 0.0;
    let ta = Factor::Affine(scaled_quad(&prob, q_t, &q.a3, 1.0 / n_ta)?);
    let tb = if jam_on && !q.a2.is_empty() {
        Factor::Affine(scaled_quad(&prob, q_t, &q.a2, pw.p_e / f0[1])? + pw.sigma_d2 / f0[1])
    } else {
        Factor::Constant
    };
    let ra = Factor::Affine(scaled_quad(&prob, q_r, &q.a1, 1.0 / n_ra)?);
    let rb = if jam_on && !q.a4.is_empty() {
        Factor::Affine(scaled_quad(&prob, q_r, &q.a4, pw.p_e / f0[3])? + pw.sigma_e2 / f0[3])
    } else {
        Factor::Constant
    };

    let slack = prob.add_free("slack", 2);
    let (v0, v1) = (prob.scalar(slack, 0)?, prob.scalar(slack, 1)?);
    let (scale, offset, objective) = match opts.surrogate {
        Surrogate::ProductRatio => {
            // 1/I <= T_a T_b and S >= R_a R_b in normalized units; the
            // majorant of I S at I0 = S0 = 1 is minimized with I + S
            add_inverse_below_product(&mut prob, 1.0, v0.clone(), &ta, &tb)?;
            add_product_below(&mut prob, &ra, &rb, v1.clone())?;
            let c = f0[2] * f0[3] / (f0[0] * f0[1]);
            (c / 4.0, 0.0, v0 + v1)
        }
        Surrogate::SinrGap => {
            let Factor::Affine(ra_e) = &ra else {
                unreachable!("receiver source term is always affine")
            };
            let Factor::Affine(ta_e) = &ta else {
                unreachable!("eavesdropper source term is always affine")
            };
            // Normalized slacks at the previous iterate: t0 = R_a / T_b and
            // s0 = T_a / R_b, both in [0, 1].
            let (t0, s0) = (f0[2] / n_ra, f0[0] / n_ta);
            add_affine_below_product(&mut prob, ra_e.clone(), v0.clone(), &tb, t0)?;
            match &rb {
                Factor::Constant => prob.add_le(v1.clone() - ta_e.clone())?,
                Factor::Affine(rb_e) => {
                    // 4 s R_b <= (s + R_b - d)^2 + 4 d R_b with d = s0 - 1
                    let d = s0 - 1.0;
                    prob.add_square_le(
                        v1.clone() + rb_e.clone() - d,
                        ta_e.clone() * 4.0 - rb_e.clone() * (4.0 * d),
                    )?
                }
            }
            (1.0, 0.0, v0 * (n_ra / f0[1]) - v1 * (n_ta / f0[3]))
        }
    };
    prob.minimize(objective)?;
    Ok(StepModel {
        prob,
        q_t,
        q_r,
        slack,
        scale,
        offset,
    })
}

/// The conic program solved by [`sca_step`], for inspection or export.
pub fn sca_step_problem(
    q: &PhaseQuadratics,
    prev: &LiftedPhasePair,
    pw: &Powers,
    opts: &ScaOptions,
) -> Result<ConicProblem> {
    Ok(build_step(q, prev, pw, opts)?.prob)
}

/// Solves one convex surrogate program around `prev`.
pub fn sca_step(
    q: &PhaseQuadratics,
    prev: &LiftedPhasePair,
    pw: &Powers,
    opts: &ScaOptions,
) -> Result<ScaStep> {
    let model = build_step(q, prev, pw, opts)?;
    let sol = model.prob.solve(&opts.solver);
    let pair = LiftedPhasePair {
        q_t: sol.hermitian(model.q_t)?,
        q_r: sol.hermitian(model.q_r)?,
        i_k: sol.scalar(model.slack, 0)?,
        s_k: sol.scalar(model.slack, 1)?,
    };
    let surrogate = match opts.surrogate {
        Surrogate::ProductRatio => {
            let (i, s) = (pair.i_k, pair.s_k);
            model.scale * (i + s) * (i + s) + model.offset
        }
        Surrogate::SinrGap => model.scale * sol.objective + model.offset,
    };
    Ok(ScaStep {
        pair,
        surrogate,
        status: sol.status,
    })
}

/// `lambda_2 / lambda_1` of a Hermitian PSD matrix.
pub fn rank_ratio(m: &DMatrix<Complex64>) -> f64 {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    match ev.as_slice() {
        [l1, l2, ..] if *l1 > 0.0 => (l2.max(0.0)) / l1,
        _ => 0.0,
    }
}

/// Per-iteration record of [`sca_solve`].
#[derive(Debug, Clone, Serialize)]
pub struct ScaIterate {
    pub surrogate: f64,
    pub true_value: f64,
    pub rank_ratio_t: f64,
    pub rank_ratio_r: f64,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaOutcome {
    #[serde(skip)]
    pub pair: LiftedPhasePair,
    /// True objective at the initialization.
    pub initial: f64,
    pub trace: Vec<ScaIterate>,
    /// A step failed to solve or did not improve, and the previous iterate
    /// was kept.
    pub stalled: bool,
}

impl ScaOutcome {
    pub fn final_value(&self) -> f64 {
        self.trace.last().map_or(self.initial, |t| t.true_value)
    }
}

/// Relative slack allowed when comparing consecutive true objectives.
const DESCENT_SLACK: f64 = 1e-9;

/// Iterates [`sca_step`] until the fractional decrease of the true objective
/// drops below `opts.eps` or `opts.max_iters` steps were taken. An iterate
/// that fails to solve or increases the true objective ends the loop and is
/// discarded, so the reported sequence is non-increasing.
pub fn sca_solve(
    q: &PhaseQuadratics,
    init: &LiftedPhasePair,
    pw: &Powers,
    opts: &ScaOptions,
) -> Result<ScaOutcome> {
    let value = |p: &LiftedPhasePair| true_objective(opts.surrogate, q.traces(&p.q_t, &p.q_r), pw);
    let mut cur = init.clone();
    let initial = value(&cur);
    let mut prev_val = initial;
    let mut trace = Vec::new();
    let mut stalled = false;
    for _ in 0..opts.max_iters {
        let step = sca_step(q, &cur, pw, opts)?;
        let val = value(&step.pair);
        let usable = matches!(
            step.status,
            SolveStatus::Optimal | SolveStatus::AlmostOptimal
        ) && step.pair.constraint_error() <= 1e-6
            && val.is_finite()
            && val <= prev_val + DESCENT_SLACK * prev_val.abs();
        if !usable {
            stalled = true;
            break;
        }
        trace.push(ScaIterate {
            surrogate: step.surrogate,
            true_value: val,
            rank_ratio_t: rank_ratio(&step.pair.q_t),
            rank_ratio_r: rank_ratio(&step.pair.q_r),
            status: step.status.to_string(),
        });
        let dec = crate::bcd::fractional_decrease(prev_val, val);
        cur = step.pair;
        prev_val = val;
        if dec < opts.eps {
            break;
        }
    }
    Ok(ScaOutcome {
        pair: cur,
        initial,
        trace,
        stalled,
    })
}

/// [`sca_solve`] for the zero-forcing schemes, where the loop-back term is
/// absent and the eavesdropper denominator is the constant noise power.
pub fn low_complexity_phase_solve(
    q: &PhaseQuadratics,
    init: &LiftedPhasePair,
    pw: &Powers,
    opts: &ScaOptions,
) -> Result<ScaOutcome> {
    if q.variant == Variant::Full {
        return Err(CoreError::Unsupported(
            "low-complexity phase design needs a zero-forcing variant".into(),
        ));
    }
    sca_solve(q, init, pw, opts)
}

fn psd_root(m: &DMatrix<Complex64>) -> (DMatrix<Complex64>, f64, DVector<Complex64>) {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let trace: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let n = m.nrows();
    let root = DMatrix::from_fn(n, n, |i, j| {
        eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt()
    });
    let lam1 = eig.eigenvalues[k].max(0.0);
    let principal = eig.eigenvectors.column(k) * Complex64::new(lam1.sqrt(), 0.0);
    let ratio = if trace > 0.0 { lam1 / trace } else { 0.0 };
    (root, ratio, principal)
}

/// Drops the trailing entry after rotating it to the positive real axis.
fn dehomogenize(v: &DVector<Complex64>) -> DVector<Complex64> {
    let n = v.len() - 1;
    let last = v[n];
    let rot = if last.norm() > 0.0 {
        last.conj() / last.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    DVector::from_fn(n, |i, _| v[i] * rot)
}

fn candidate(
    vt: &DVector<Complex64>,
    vr: &DVector<Complex64>,
    uniform_beta: bool,
) -> Result<StarCoefficients> {
    let star = StarCoefficients::normalized(dehomogenize(vt), dehomogenize(vr))?;
    Ok(if uniform_beta {
        star.uniform_beta()
    } else {
        star
    })
}

/// Recovers feasible coefficients from lifted matrices by Gaussian
/// randomization, keeping the candidate with the smallest `objective`.
///
/// When both matrices are numerically rank one their principal vectors are
/// returned without sampling. Otherwise the principal-vector candidate
/// competes with `l` paired draws.
pub fn randomize_star<R, F>(
    q_t: &DMatrix<Complex64>,
    q_r: &DMatrix<Complex64>,
    mut objective: F,
    l: usize,
    uniform_beta: bool,
    rng: &mut R,
) -> Result<StarCoefficients>
where
    R: Rng + ?Sized,
    F: FnMut(&StarCoefficients) -> Result<f64>,
{
    if l == 0 {
        return Err(CoreError::InvalidConfig {
            field: "randomization",
            reason: "at least one draw is required".into(),
        });
    }
    let (root_t, ratio_t, pt) = psd_root(q_t);
    let (root_r, ratio_r, pr) = psd_root(q_r);
    let principal = candidate(&pt, &pr, uniform_beta)?;
    if ratio_t >= 1.0 - 1e-9 && ratio_r >= 1.0 - 1e-9 {
        return Ok(principal);
    }
    let mut best_val = objective(&principal)?;
    let mut best = principal;
    let m = q_t.nrows();
    let draw = |rng: &mut R| {
        DVector::from_fn(m, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
    };
    for _ in 0..l {
        let vt = &root_t * draw(rng);
        let vr = &root_r * draw(rng);
        let cand = candidate(&vt, &vr, uniform_beta)?;
        let v = objective(&cand)?;
        if v < best_val {
            best_val = v;
            best = cand;
        }
    }
    Ok(best)
}

/// Even energy split with i.i.d. uniform phases.
pub fn init_star<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<StarCoefficients> {
    let phase = Uniform::new(0.0, std::f64::consts::TAU).expect("valid phase range");
    let theta_t: Vec<f64> = (0..n).map(|_| rng.sample(phase)).collect();
    let theta_r: Vec<f64> = (0..n).map(|_| rng.sample(phase)).collect();
    StarCoefficients::from_split(&vec![0.5; n], &theta_t, &theta_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::mrc_mrt_pair;
    use crate::channel::trial_channels;
    use crate::config::SystemConfig;
    use crate::metrics::LinkTerms;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64, n: usize) -> (ChannelSet, StarCoefficients, BeamPair, Powers) {
        let cfg = SystemConfig {
            n,
            n_t: 2,
            n_r: 2,
            ..SystemConfig::desk()
        };
        let ch = trial_channels(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let star = init_star(n, &mut rng).unwrap();
        let pair = mrc_mrt_pair(&ch, &star).unwrap();
        (ch, star, pair, Powers::from_config(&cfg))
    }

    #[test]
    fn traces_reproduce_link_terms() {
        let (ch, star, pair, _) = instance(3, 4);
        let q = build_phase_quadratics(&ch, &pair, Variant::Full).unwrap();
        let x = q.star_traces(&star);
        let t = LinkTerms::evaluate(&ch, &star, &pair).unwrap();
        let want = [t.source_d, t.jam_d, t.source_e, t.jam_e];
        for (a, b) in x.iter().zip(want) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
        }
        let lifted = LiftedPhasePair::from_star(&star);
        let y = q.traces(&lifted.q_t, &lifted.q_r);
        for (a, b) in x.iter().zip(y) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn direct_link_only_quadratic() {
        let (mut ch, _, pair, _) = instance(0, 2);
        ch.h_sr.fill(Complex64::new(0.0, 0.0));
        ch.h_sd = Complex64::new(1.0, 0.0);
        let q = build_phase_quadratics(&ch, &pair, Variant::Full).unwrap();
        let a1 = &q.matrices()[0];
        let mut want = DMatrix::zeros(3, 3);
        want[(2, 2)] = Complex64::new(1.0, 0.0);
        assert_eq!(a1, &want);
    }

    #[test]
    fn init_star_even_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = init_star(6, &mut rng).unwrap();
        for z in s.u_t().iter() {
            assert!((z.norm_sqr() - 0.5).abs() < 1e-15);
        }
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(s, init_star(6, &mut rng2).unwrap());
    }

    #[test]
    fn rank_one_short_circuit() {
        let (_, star, _, _) = instance(1, 3);
        let l = LiftedPhasePair::from_star(&star);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = randomize_star(&l.q_t, &l.q_r, |_| Ok(0.0), 10, false, &mut rng).unwrap();
        assert!((got.u_t() - star.u_t()).norm() < 1e-9);
        assert!((got.u_r() - star.u_r()).norm() < 1e-9);
    }

    #[test]
    fn sca_descends_for_both_surrogates() {
        for surrogate in [Surrogate::ProductRatio, Surrogate::SinrGap] {
            let (ch, star, pair, pw) = instance(2, 4);
            let q = build_phase_quadratics(&ch, &pair, Variant::Full).unwrap();
            let opts = ScaOptions {
                surrogate,
                ..ScaOptions::default()
            };
            let out = sca_solve(&q, &LiftedPhasePair::from_star(&star), &pw, &opts).unwrap();
            assert!(!out.trace.is_empty());
            let mut prev = out.initial;
            for it in &out.trace {
                assert!(it.true_value <= prev + 1e-6 * prev.abs());
                prev = it.true_value;
            }
            assert!(out.pair.constraint_error() < 1e-6);
        }
    }
}

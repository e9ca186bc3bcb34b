//! Receive and transmit beamforming at the eavesdropper.

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use surveil_conic::{ConicProblem, SolveStatus, SolverSettings};

use crate::channel::ChannelSet;
use crate::error::{CoreError, Result};
use crate::metrics::{
    effective_jamming_matrix, jamming_direction, source_to_eaves, source_to_receiver, BeamPair,
    Powers, StarCoefficients,
};

/// Relative norm below which a target direction is treated as zero.
const DEGENERATE_TOL: f64 = 1e-14;

fn basis(n: usize, i: usize) -> DVector<Complex64> {
    let mut e = DVector::zeros(n);
    e[i] = Complex64::new(1.0, 0.0);
    e
}

/// Normalizes `v`, or returns `None` when it is numerically zero relative to
/// `scale`.
fn unit(v: &DVector<Complex64>, scale: f64) -> Option<DVector<Complex64>> {
    let n = v.norm();
    if n > DEGENERATE_TOL * scale.max(f64::MIN_POSITIVE) && n.is_finite() {
        Some(v / Complex64::new(n, 0.0))
    } else {
        None
    }
}

/// Removes the component along the unit vector `e`, twice for accuracy.
fn project_out(v: &DVector<Complex64>, e: &DVector<Complex64>) -> DVector<Complex64> {
    let mut p = v - e * e.dotc(v);
    let corr = e * e.dotc(&p);
    p -= corr;
    p
}

/// Any unit vector orthogonal to the unit vector `e` (dimension at least 2).
fn orthogonal_unit(e: &DVector<Complex64>) -> DVector<Complex64> {
    (0..e.len())
        .filter_map(|i| unit(&project_out(&basis(e.len(), i), e), 1.0))
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or_else(|| basis(e.len(), 0))
}

fn unit_or_first(v: &DVector<Complex64>, what: &str) -> DVector<Complex64> {
    unit(v, 1.0).unwrap_or_else(|| {
        warn!("{what} target vector is zero; using the first basis vector");
        basis(v.len(), 0)
    })
}

fn require_len(what: &'static str, v: &DVector<Complex64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(CoreError::Dimension {
            what,
            expected: n,
            found: v.len(),
        });
    }
    Ok(())
}

/// Receive beamformer maximizing `SINR_E` for a fixed transmit beamformer:
/// `(rho_e U w_t w_t^H U^H + I)^-1 H_RE Theta_t h_SR`, normalized.
pub fn optimal_wr(
    ch: &ChannelSet,
    star: &StarCoefficients,
    w_t: &DVector<Complex64>,
    rho_e: f64,
) -> Result<DVector<Complex64>> {
    require_len("w_t", w_t, ch.n_t())?;
    let g = source_to_eaves(ch, star);
    let v = effective_jamming_matrix(ch, star)? * w_t;
    // Sherman-Morrison form of the rank-one regularized inverse
    let coef = rho_e * v.dotc(&g) / Complex64::new(1.0 + rho_e * v.norm_squared(), 0.0);
    let x = &g - &v * coef;
    Ok(unit_or_first(&x, "optimal receive beamformer"))
}

/// `1 + (P_E / sigma_D^2) ||H_ER^H Theta_t^H h_RD||^2`, the largest value of
/// the jamming slack over all unit transmit beamformers.
pub fn y_upper_bound(ch: &ChannelSet, star: &StarCoefficients, pw: &Powers) -> f64 {
    1.0 + pw.p_e / pw.sigma_d2 * jamming_direction(ch, star).norm_squared()
}

/// Maximum ratio transmit and combining beamformers.
pub fn mrc_mrt_pair(ch: &ChannelSet, star: &StarCoefficients) -> Result<BeamPair> {
    let w_t = unit_or_first(&jamming_direction(ch, star), "MRT");
    let w_r = unit_or_first(&source_to_eaves(ch, star), "MRC");
    BeamPair::new(w_t, w_r)
}

/// MRT transmit beamformer with a receive beamformer that nulls the loop-back
/// interference `U w_t`.
pub fn rzf_pair(ch: &ChannelSet, star: &StarCoefficients) -> Result<BeamPair> {
    if ch.n_r() < 2 {
        return Err(CoreError::Unsupported(
            "receive zero-forcing needs at least two receive antennas".into(),
        ));
    }
    let w_t = unit_or_first(&jamming_direction(ch, star), "MRT");
    let u = effective_jamming_matrix(ch, star)?;
    let g = source_to_eaves(ch, star);
    let leak = &u * &w_t;
    let w_r = match unit(&leak, u.norm()) {
        None => unit_or_first(&g, "MRC"),
        Some(e) => unit(&project_out(&g, &e), g.norm()).unwrap_or_else(|| {
            warn!("desired signal is aligned with the interference; choosing an arbitrary null");
            orthogonal_unit(&e)
        }),
    };
    BeamPair::new(w_t, w_r)
}

/// MRC receive beamformer with the transmit beamformer closest to MRT among
/// those whose loop-back interference is invisible to the receiver.
pub fn tzf_pair(ch: &ChannelSet, star: &StarCoefficients) -> Result<BeamPair> {
    if ch.n_t() < 2 {
        return Err(CoreError::Unsupported(
            "transmit zero-forcing needs at least two transmit antennas".into(),
        ));
    }
    let w_r = unit_or_first(&source_to_eaves(ch, star), "MRC");
    let u = effective_jamming_matrix(ch, star)?;
    let a = jamming_direction(ch, star);
    let leak = u.adjoint() * &w_r;
    let w_t = match unit(&leak, u.norm()) {
        None => unit_or_first(&a, "MRT"),
        Some(e) => unit(&project_out(&a, &e), a.norm()).unwrap_or_else(|| {
            warn!("jamming direction is aligned with the interference; choosing an arbitrary null");
            orthogonal_unit(&e)
        }),
    };
    BeamPair::new(w_t, w_r)
}

/// Tuning of the two-stage transmit design.
#[derive(Debug, Clone, Serialize)]
pub struct TransmitOptions {
    /// Number of logarithmically spaced grid points over the slack interval.
    pub grid_size: usize,
    /// Relative bracket width at which golden-section refinement stops.
    pub golden_tol: f64,
    /// Gaussian randomization draws when the optimal `W` is not rank one.
    pub randomization: usize,
    /// Normalize the loop-back terms by `sigma_D^2` as printed instead of
    /// `sigma_E^2`.
    pub literal_sigma: bool,
    #[serde(skip)]
    pub solver: SolverSettings,
}

impl Default for TransmitOptions {
    fn default() -> Self {
        TransmitOptions {
            grid_size: 30,
            golden_tol: 1e-4,
            randomization: 100,
            literal_sigma: false,
            solver: SolverSettings::default(),
        }
    }
}

/// Precomputed data of the transmit design for fixed surface coefficients.
#[derive(Debug, Clone)]
pub struct TransmitModel {
    /// `(sigma_E^2 / sigma_D^2) |h_SD + h_RD^H Theta_r h_SR|^2`
    k_direct: f64,
    /// `U^H H_RE Theta_t h_SR`
    q: DVector<Complex64>,
    /// `H_ER^H Theta_t^H h_RD`
    a: DVector<Complex64>,
    u: DMatrix<Complex64>,
    rho_e: f64,
    /// Coefficient of `||U w||^2` in the loop-back denominator.
    kappa: f64,
    /// `P_E / sigma_D^2`
    jam_scale: f64,
}

impl TransmitModel {
    pub fn new(
        ch: &ChannelSet,
        star: &StarCoefficients,
        pw: &Powers,
        literal_sigma: bool,
    ) -> Result<Self> {
        let u = effective_jamming_matrix(ch, star)?;
        let g = source_to_eaves(ch, star);
        let kappa = if literal_sigma {
            pw.p_e / pw.sigma_d2
        } else {
            pw.rho_e()
        };
        Ok(TransmitModel {
            k_direct: pw.sigma_e2 / pw.sigma_d2 * source_to_receiver(ch, star).norm_sqr(),
            q: u.adjoint() * g,
            a: jamming_direction(ch, star),
            u,
            rho_e: pw.rho_e(),
            kappa,
            jam_scale: pw.p_e / pw.sigma_d2,
        })
    }

    /// Exact transmit objective for a unit `w`:
    /// `K / (1 + (P_E/sigma_D^2)|a^H w|^2) + rho_e |q^H w|^2 / (1 + kappa ||U w||^2)`.
    ///
    /// With the default normalization this equals
    /// `sigma_E^2 * design_objective + ||H_RE Theta_t h_SR||^2` once the
    /// receive beamformer is chosen optimally.
    pub fn objective(&self, w: &DVector<Complex64>) -> f64 {
        let jam = self.a.dotc(w).norm_sqr();
        let leak = (&self.u * w).norm_squared();
        self.k_direct / (1.0 + self.jam_scale * jam)
            + self.rho_e * self.q.dotc(w).norm_sqr() / (1.0 + self.kappa * leak)
    }

    pub fn y_max(&self) -> f64 {
        1.0 + self.jam_scale * self.a.norm_squared()
    }

    pub fn mrt(&self) -> DVector<Complex64> {
        unit_or_first(&self.a, "MRT")
    }

    /// Inner program for a fixed slack `y`: minimize `rho_e q^H Z q` subject
    /// to `tr Z = s`, `s + kappa tr(Z U^H U) = 1` and
    /// `s (y - 1) = (P_E / sigma_D^2) a^H Z a`.
    pub fn inner_sdp(&self, y: f64, settings: &SolverSettings) -> Result<InnerSolution> {
        let n_t = self.a.len();
        let mut p = ConicProblem::new();
        let z = p.add_hermitian_psd("Z", n_t)?;
        let s = p.add_nonneg("s", 1);
        let s_e = p.scalar(s, 0)?;
        p.minimize(p.hermitian_quad_form(z, &self.q)? * self.rho_e)?;
        p.add_eq(p.trace(z)? - s_e.clone())?;
        let uu = self.u.adjoint() * &self.u;
        p.add_eq(s_e.clone() + p.hermitian_trace_with(z, &uu)? * self.kappa - 1.0)?;
        p.add_eq(s_e * (y - 1.0) - p.hermitian_quad_form(z, &self.a)? * self.jam_scale)?;
        let sol = p.solve(settings);
        let s_val = sol.scalar(s, 0)?;
        let z_val = sol.hermitian(z)?;
        Ok(InnerSolution {
            status: sol.status,
            f: sol.objective,
            z: z_val,
            s: s_val,
        })
    }

    /// Outer objective `f(y) + K / y`, or `None` when the inner program is
    /// not solved to optimality.
    fn outer(&self, y: f64, settings: &SolverSettings) -> Result<(Option<f64>, InnerSolution)> {
        let inner = self.inner_sdp(y, settings)?;
        let v = (matches!(
            inner.status,
            SolveStatus::Optimal | SolveStatus::AlmostOptimal
        ) && inner.s > 0.0)
            .then(|| inner.f + self.k_direct / y);
        Ok((v, inner))
    }
}

/// Solution of the inner transmit program at one slack value.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub status: SolveStatus,
    /// Optimal value `f(y)`.
    pub f: f64,
    pub z: DMatrix<Complex64>,
    pub s: f64,
}

/// Per-point record of the slack line search.
#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub y: f64,
    /// `f(y) + K / y`, absent when the inner program was not solved.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransmitDiagnostics {
    pub y_max: f64,
    pub grid: Vec<GridPoint>,
    pub best_y: Option<f64>,
    /// Relaxed optimum of the line search.
    pub relaxed_value: Option<f64>,
    /// Exact transmit objective of the returned beamformer.
    pub objective: f64,
    /// The slack interval was empty (no jamming power or no jamming path).
    pub degenerate: bool,
    /// No grid point was solvable and MRT was returned.
    pub fallback: bool,
    /// Index into the candidate list of the returned vector: 0 relaxed
    /// solution or randomization, 1 MRT, 2 previous beamformer.
    pub source: usize,
}

/// Two-stage transmit design: a line search over the jamming slack `y` with
/// an inner SDP per point, followed by rank-one extraction.
///
/// The MRT beamformer and, when given, `previous` are kept as candidates, so
/// the returned objective never exceeds theirs.
pub fn transmit_two_stage<R: Rng + ?Sized>(
    ch: &ChannelSet,
    star: &StarCoefficients,
    pw: &Powers,
    opts: &TransmitOptions,
    previous: Option<&DVector<Complex64>>,
    rng: &mut R,
) -> Result<(DVector<Complex64>, TransmitDiagnostics)> {
    if opts.grid_size < 2 {
        return Err(CoreError::InvalidConfig {
            field: "grid_size",
            reason: "must be at least 2".into(),
        });
    }
    if let Some(w) = previous {
        require_len("previous w_t", w, ch.n_t())?;
    }
    let model = TransmitModel::new(ch, star, pw, opts.literal_sigma)?;
    let y_max = model.y_max();
    let mrt = model.mrt();
    let mut diag = TransmitDiagnostics {
        y_max,
        grid: Vec::new(),
        best_y: None,
        relaxed_value: None,
        objective: model.objective(&mrt),
        degenerate: false,
        fallback: false,
        source: 1,
    };
    let span = y_max - 1.0;
    if !(span > 1e-12 * y_max) {
        diag.degenerate = true;
        return Ok(finish(&model, vec![mrt], previous, diag));
    }

    let (lo, hi) = (1e-3f64, 1.0 - 1e-6);
    let t_at = |k: usize| lo * (hi / lo).powf(k as f64 / (opts.grid_size - 1) as f64);
    let mut best: Option<(f64, f64, InnerSolution)> = None;
    let mut consider = |t: f64, diag: &mut TransmitDiagnostics| -> Result<Option<f64>> {
        let y = 1.0 + span * t;
        let (v, inner) = model.outer(y, &opts.solver)?;
        diag.grid.push(GridPoint { y, value: v });
        if let Some(v) = v {
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, t, inner));
            }
        }
        Ok(v)
    };
    let mut values = Vec::with_capacity(opts.grid_size);
    for k in 0..opts.grid_size {
        values.push(consider(t_at(k), &mut diag)?);
    }
    let best_k = values
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k);
    let Some(best_k) = best_k else {
        warn!("no slack value gave a solvable transmit program; falling back to MRT");
        diag.fallback = true;
        return Ok(finish(&model, vec![mrt], previous, diag));
    };

    // golden-section refinement inside the bracket around the best grid point
    let (mut a, mut b) = (
        t_at(best_k.saturating_sub(1)),
        t_at((best_k + 1).min(opts.grid_size - 1)),
    );
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |v: Option<f64>| v.unwrap_or(f64::INFINITY);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = eval(consider(c, &mut diag)?);
    let mut fd = eval(consider(d, &mut diag)?);
    while (b - a) > opts.golden_tol * b {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(consider(c, &mut diag)?);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(consider(d, &mut diag)?);
        }
    }

    let (value, t, inner) = best.expect("at least one solvable grid point");
    diag.best_y = Some(1.0 + span * t);
    diag.relaxed_value = Some(value);
    let w_mat = &inner.z / Complex64::new(inner.s, 0.0);
    let relaxed = extract_rank_one(&w_mat, |w| -model.objective(w), opts.randomization, rng)?;
    Ok(finish(&model, vec![relaxed, mrt], previous, diag))
}

fn finish(
    model: &TransmitModel,
    mut candidates: Vec<DVector<Complex64>>,
    previous: Option<&DVector<Complex64>>,
    mut diag: TransmitDiagnostics,
) -> (DVector<Complex64>, TransmitDiagnostics) {
    if candidates.len() == 1 {
        // keep candidate indices stable: slot 0 is the relaxed solution
        candidates.insert(0, candidates[0].clone());
    }
    if let Some(w) = previous {
        candidates.push(w / Complex64::new(w.norm(), 0.0));
    }
    let (idx, val) = candidates
        .iter()
        .map(|w| model.objective(w))
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
        );
    diag.objective = val;
    diag.source = idx;
    (candidates.swap_remove(idx), diag)
}

/// Recovers a unit vector from a PSD matrix: the principal eigenvector when
/// the matrix is numerically rank one, otherwise the best of the principal
/// eigenvector and `l` normalized Gaussian draws with covariance `m` under
/// `score` (higher is better).
pub fn extract_rank_one<R, F>(
    m: &DMatrix<Complex64>,
    mut score: F,
    l: usize,
    rng: &mut R,
) -> Result<DVector<Complex64>>
where
    R: Rng + ?Sized,
    F: FnMut(&DVector<Complex64>) -> f64,
{
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(CoreError::Dimension {
            what: "rank-one extraction matrix",
            expected: n,
            found: m.ncols(),
        });
    }
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let lam1 = eig.eigenvalues[k];
    let trace: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(trace > 0.0) {
        return Err(CoreError::Empty(
            "positive semidefinite matrix with zero trace",
        ));
    }
    let principal = eig.eigenvectors.column(k).into_owned();
    if lam1 / trace >= 1.0 - 1e-6 {
        return Ok(principal);
    }
    if l == 0 {
        return Err(CoreError::InvalidConfig {
            field: "randomization",
            reason: "matrix is not rank one and no draws were requested".into(),
        });
    }
    let root = DMatrix::from_fn(n, n, |i, j| {
        eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt()
    });
    let mut best = principal.clone();
    let mut best_score = score(&principal);
    for _ in 0..l {
        let z = DVector::from_fn(n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        });
        let Some(v) = unit(&(&root * z), 1.0) else {
            continue;
        };
        let s = score(&v);
        if s > best_score {
            best_score = s;
            best = v;
        }
    }
    Ok(best)
}

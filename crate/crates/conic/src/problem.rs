//! Modelling layer: named variable blocks, affine expressions, and constraint
//! lowering to the standard form consumed by the interior-point method.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::cone::{smat, svec_index, svec_len, Cone};
use crate::embed::{embed_unchecked, hermitian_embed, hermitian_unembed};
use crate::error::ConicError;
use crate::ipm::{solve_standard, SolveStatus, SolverSettings, StandardForm};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Handle to a variable block of a [`ConicProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockShape {
    Free(usize),
    Nonneg(usize),
    /// Real symmetric PSD matrix of the given order.
    Psd(usize),
    /// Complex Hermitian PSD matrix of the given order, stored through its
    /// real embedding of twice the order.
    HermitianPsd(usize),
}

impl BlockShape {
    fn name(&self) -> &'static str {
        match self {
            BlockShape::Free(_) => "free",
            BlockShape::Nonneg(_) => "nonneg",
            BlockShape::Psd(_) => "psd",
            BlockShape::HermitianPsd(_) => "hermitian-psd",
        }
    }

    /// Number of real scalars in the block.
    pub fn len(&self) -> usize {
        match *self {
            BlockShape::Free(n) | BlockShape::Nonneg(n) => n,
            BlockShape::Psd(m) => svec_len(m),
            BlockShape::HermitianPsd(n) => svec_len(2 * n),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
struct Block {
    name: String,
    shape: BlockShape,
}

/// Affine function of the problem variables: `sum coef * var + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    terms: Vec<(usize, usize, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    fn term(block: usize, idx: usize, coef: f64) -> Self {
        LinExpr {
            terms: vec![(block, idx, coef)],
            constant: 0.0,
        }
    }

    /// Sorted, merged copy of the terms with zero coefficients removed.
    fn canonical_terms(&self) -> Vec<(usize, usize, f64)> {
        let mut t = self.terms.clone();
        t.sort_by_key(|a| (a.0, a.1));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (b, i, c) in t {
            match out.last_mut() {
                Some(last) if last.0 == b && last.1 == i => last.2 += c,
                _ => out.push((b, i, c)),
            }
        }
        out.retain(|t| t.2 != 0.0);
        out
    }

    fn is_finite(&self) -> bool {
        self.constant.is_finite() && self.terms.iter().all(|t| t.2.is_finite())
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self += rhs;
        self
    }
}

impl AddAssign for LinExpr {
    fn add_assign(&mut self, rhs: LinExpr) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl Add<f64> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: f64) -> LinExpr {
        self.constant += rhs;
        self
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: LinExpr) -> LinExpr {
        self + (-rhs)
    }
}

impl Sub<f64> for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: f64) -> LinExpr {
        self + (-rhs)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, rhs: f64) -> LinExpr {
        for t in &mut self.terms {
            t.2 *= rhs;
        }
        self.constant *= rhs;
        self
    }
}

impl Mul<LinExpr> for f64 {
    type Output = LinExpr;
    fn mul(self, rhs: LinExpr) -> LinExpr {
        rhs * self
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

#[derive(Debug, Clone)]
enum Constraint {
    Eq(LinExpr),
    Le(LinExpr),
    Soc(LinExpr, Vec<LinExpr>),
}

/// A real conic program over named blocks, always a minimization.
#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    blocks: Vec<Block>,
    objective: LinExpr,
    constraints: Vec<Constraint>,
}

/// Maps problem blocks and slacks onto the standard-form variable vector.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    /// For each block: `(is_free, offset)` into `x_c` or `x_f`.
    pub block_offset: Vec<(bool, usize)>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_block(&mut self, name: &str, shape: BlockShape) -> VarId {
        self.blocks.push(Block {
            name: name.to_string(),
            shape,
        });
        VarId(self.blocks.len() - 1)
    }

    pub fn add_free(&mut self, name: &str, n: usize) -> VarId {
        self.push_block(name, BlockShape::Free(n))
    }

    pub fn add_nonneg(&mut self, name: &str, n: usize) -> VarId {
        self.push_block(name, BlockShape::Nonneg(n))
    }

    pub fn add_psd(&mut self, name: &str, m: usize) -> Result<VarId, ConicError> {
        if m == 0 {
            return Err(ConicError::EmptyBlock);
        }
        Ok(self.push_block(name, BlockShape::Psd(m)))
    }

    pub fn add_hermitian_psd(&mut self, name: &str, n: usize) -> Result<VarId, ConicError> {
        if n == 0 {
            return Err(ConicError::EmptyBlock);
        }
        Ok(self.push_block(name, BlockShape::HermitianPsd(n)))
    }

    pub fn shape(&self, v: VarId) -> Result<BlockShape, ConicError> {
        self.blocks
            .get(v.0)
            .map(|b| b.shape)
            .ok_or(ConicError::UnknownBlock(v.0))
    }

    pub fn block_name(&self, v: VarId) -> Result<&str, ConicError> {
        self.blocks
            .get(v.0)
            .map(|b| b.name.as_str())
            .ok_or(ConicError::UnknownBlock(v.0))
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective.constant
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Entry `i` of a free or nonnegative block.
    pub fn scalar(&self, v: VarId, i: usize) -> Result<LinExpr, ConicError> {
        match self.shape(v)? {
            BlockShape::Free(n) | BlockShape::Nonneg(n) => {
                if i >= n {
                    return Err(ConicError::IndexOutOfRange {
                        row: i,
                        col: 0,
                        size: n,
                    });
                }
                Ok(LinExpr::term(v.0, i, 1.0))
            }
            other => Err(ConicError::BlockKind {
                block: v.0,
                expected: "free or nonneg",
                found: other.name(),
            }),
        }
    }

    /// Entry `(i, j)` of a real PSD block.
    pub fn entry(&self, v: VarId, i: usize, j: usize) -> Result<LinExpr, ConicError> {
        let m = self.psd_order(v)?;
        if i >= m || j >= m {
            return Err(ConicError::IndexOutOfRange {
                row: i,
                col: j,
                size: m,
            });
        }
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let coef = if r == c { 1.0 } else { 1.0 / SQRT2 };
        Ok(LinExpr::term(v.0, svec_index(m, r, c), coef))
    }

    /// `<C, X>` for a real PSD block `X`; `C` is symmetrized.
    pub fn trace_with(&self, v: VarId, c: &DMatrix<f64>) -> Result<LinExpr, ConicError> {
        let m = self.psd_order(v)?;
        if c.nrows() != m || c.ncols() != m {
            return Err(ConicError::DimensionMismatch {
                expected: m,
                found: c.nrows().max(c.ncols()),
            });
        }
        if !c.iter().all(|x| x.is_finite()) {
            return Err(ConicError::NonFinite("trace coefficient"));
        }
        Ok(sym_trace_expr(v.0, m, c, 1.0))
    }

    /// `Re tr(H X)` for a Hermitian PSD block `X`.
    pub fn hermitian_trace_with(
        &self,
        v: VarId,
        h: &DMatrix<Complex64>,
    ) -> Result<LinExpr, ConicError> {
        let n = self.hermitian_order(v)?;
        if h.nrows() != n || h.ncols() != n {
            return Err(ConicError::DimensionMismatch {
                expected: n,
                found: h.nrows().max(h.ncols()),
            });
        }
        let e = hermitian_embed(h)?;
        Ok(sym_trace_expr(v.0, 2 * n, &e, 0.5))
    }

    /// `Re tr(a a^H X) = a^H X a` for a Hermitian PSD block `X`.
    pub fn hermitian_quad_form(
        &self,
        v: VarId,
        a: &DVector<Complex64>,
    ) -> Result<LinExpr, ConicError> {
        let n = self.hermitian_order(v)?;
        if a.len() != n {
            return Err(ConicError::DimensionMismatch {
                expected: n,
                found: a.len(),
            });
        }
        if !a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(ConicError::NonFinite("quadratic form vector"));
        }
        let h = a * a.adjoint();
        Ok(sym_trace_expr(v.0, 2 * n, &embed_unchecked(&h), 0.5))
    }

    /// Real part of the diagonal entry `X[i, i]` of a Hermitian PSD block.
    pub fn hermitian_diag(&self, v: VarId, i: usize) -> Result<LinExpr, ConicError> {
        let n = self.hermitian_order(v)?;
        if i >= n {
            return Err(ConicError::IndexOutOfRange {
                row: i,
                col: i,
                size: n,
            });
        }
        let m = 2 * n;
        Ok(LinExpr::term(v.0, svec_index(m, i, i), 0.5)
            + LinExpr::term(v.0, svec_index(m, i + n, i + n), 0.5))
    }

    /// `tr X` for a real or Hermitian PSD block.
    pub fn trace(&self, v: VarId) -> Result<LinExpr, ConicError> {
        match self.shape(v)? {
            BlockShape::Psd(m) => Ok(diag_sum(v.0, m, 1.0)),
            BlockShape::HermitianPsd(n) => Ok(diag_sum(v.0, 2 * n, 0.5)),
            other => Err(ConicError::BlockKind {
                block: v.0,
                expected: "psd",
                found: other.name(),
            }),
        }
    }

    fn psd_order(&self, v: VarId) -> Result<usize, ConicError> {
        match self.shape(v)? {
            BlockShape::Psd(m) => Ok(m),
            other => Err(ConicError::BlockKind {
                block: v.0,
                expected: "psd",
                found: other.name(),
            }),
        }
    }

    fn hermitian_order(&self, v: VarId) -> Result<usize, ConicError> {
        match self.shape(v)? {
            BlockShape::HermitianPsd(n) => Ok(n),
            other => Err(ConicError::BlockKind {
                block: v.0,
                expected: "hermitian-psd",
                found: other.name(),
            }),
        }
    }

    fn check_expr(&self, e: &LinExpr) -> Result<(), ConicError> {
        if !e.is_finite() {
            return Err(ConicError::NonFinite("expression"));
        }
        for &(b, _, _) in &e.terms {
            if b >= self.blocks.len() {
                return Err(ConicError::UnknownBlock(b));
            }
        }
        Ok(())
    }

    pub fn minimize(&mut self, e: LinExpr) -> Result<(), ConicError> {
        self.check_expr(&e)?;
        self.objective = e;
        Ok(())
    }

    /// `e == 0`
    pub fn add_eq(&mut self, e: LinExpr) -> Result<(), ConicError> {
        self.check_expr(&e)?;
        self.constraints.push(Constraint::Eq(e));
        Ok(())
    }

    /// `e <= 0`
    pub fn add_le(&mut self, e: LinExpr) -> Result<(), ConicError> {
        self.check_expr(&e)?;
        self.constraints.push(Constraint::Le(e));
        Ok(())
    }

    /// `||x|| <= t`
    pub fn add_soc(&mut self, t: LinExpr, x: Vec<LinExpr>) -> Result<(), ConicError> {
        self.check_expr(&t)?;
        for e in &x {
            self.check_expr(e)?;
        }
        self.constraints.push(Constraint::Soc(t, x));
        Ok(())
    }

    /// `||w||^2 <= 2 u v` with `u, v >= 0`.
    pub fn add_rotated_soc(
        &mut self,
        u: LinExpr,
        v: LinExpr,
        w: Vec<LinExpr>,
    ) -> Result<(), ConicError> {
        let mut x = Vec::with_capacity(w.len() + 1);
        x.push((u.clone() - v.clone()) * (1.0 / SQRT2));
        x.extend(w);
        self.add_soc((u + v) * (1.0 / SQRT2), x)
    }

    /// `e^2 <= t`, lowered to `||(2e, t - 1)|| <= t + 1`.
    pub fn add_square_le(&mut self, e: LinExpr, t: LinExpr) -> Result<(), ConicError> {
        self.add_soc(t.clone() + 1.0, vec![e * 2.0, t - 1.0])
    }

    /// `k / x <= v` with `x > 0`, `k >= 0`, lowered to `||(2 sqrt k, x - v)|| <= x + v`.
    pub fn add_inverse_le(&mut self, k: f64, x: LinExpr, v: LinExpr) -> Result<(), ConicError> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(ConicError::NonFinite("inverse constant"));
        }
        self.add_soc(
            x.clone() + v.clone(),
            vec![LinExpr::constant(2.0 * k.sqrt()), x - v],
        )
    }

    pub(crate) fn layout(&self) -> (Layout, Vec<Cone>, usize, usize) {
        let mut cones = Vec::new();
        let mut block_offset = vec![(false, 0); self.blocks.len()];
        let mut nc = 0;
        let mut nf = 0;
        // nonneg user blocks are merged into one orthant
        let mut nonneg_total = 0;
        for (k, b) in self.blocks.iter().enumerate() {
            if let BlockShape::Nonneg(n) = b.shape {
                block_offset[k] = (false, nc);
                nc += n;
                nonneg_total += n;
            }
        }
        if nonneg_total > 0 {
            cones.push(Cone::Nonneg(nonneg_total));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            match b.shape {
                BlockShape::Psd(m) => {
                    block_offset[k] = (false, nc);
                    nc += svec_len(m);
                    cones.push(Cone::Psd(m));
                }
                BlockShape::HermitianPsd(n) => {
                    block_offset[k] = (false, nc);
                    nc += svec_len(2 * n);
                    cones.push(Cone::Psd(2 * n));
                }
                BlockShape::Free(n) => {
                    block_offset[k] = (true, nf);
                    nf += n;
                }
                BlockShape::Nonneg(_) => {}
            }
        }
        (Layout { block_offset }, cones, nc, nf)
    }

    pub(crate) fn standard_form(&self) -> (StandardForm, Layout) {
        let (layout, mut cones, user_nc, nf) = self.layout();
        let n_le = self
            .constraints
            .iter()
            .filter(|c| matches!(c, Constraint::Le(_)))
            .count();
        let mut soc_dims = Vec::new();
        let mut rows = 0;
        for c in &self.constraints {
            match c {
                Constraint::Eq(_) | Constraint::Le(_) => rows += 1,
                Constraint::Soc(_, x) => {
                    rows += x.len() + 1;
                    soc_dims.push(x.len() + 1);
                }
            }
        }
        let nc = user_nc + n_le + soc_dims.iter().sum::<usize>();
        if n_le > 0 {
            cones.push(Cone::Nonneg(n_le));
        }
        cones.extend(soc_dims.iter().map(|&d| Cone::Soc(d)));

        let mut a_c = DMatrix::zeros(rows, nc);
        let mut a_f = DMatrix::zeros(rows, nf);
        let mut b = DVector::zeros(rows);
        let mut row = 0;
        let mut le_slack = user_nc;
        let mut soc_slack = user_nc + n_le;
        let put =
            |row: usize, e: &LinExpr, sign: f64, a_c: &mut DMatrix<f64>, a_f: &mut DMatrix<f64>| {
                for (blk, idx, coef) in e.canonical_terms() {
                    let (free, off) = layout.block_offset[blk];
                    if free {
                        a_f[(row, off + idx)] += sign * coef;
                    } else {
                        a_c[(row, off + idx)] += sign * coef;
                    }
                }
            };
        for c in &self.constraints {
            match c {
                Constraint::Eq(e) => {
                    put(row, e, 1.0, &mut a_c, &mut a_f);
                    b[row] = -e.constant;
                    row += 1;
                }
                Constraint::Le(e) => {
                    put(row, e, 1.0, &mut a_c, &mut a_f);
                    a_c[(row, le_slack)] = 1.0;
                    b[row] = -e.constant;
                    le_slack += 1;
                    row += 1;
                }
                Constraint::Soc(t, x) => {
                    // slack s = (t, x) lies in the cone
                    for (k, e) in std::iter::once(t).chain(x.iter()).enumerate() {
                        put(row, e, -1.0, &mut a_c, &mut a_f);
                        a_c[(row, soc_slack + k)] = 1.0;
                        b[row] = e.constant;
                        row += 1;
                    }
                    soc_slack += x.len() + 1;
                }
            }
        }
        let mut c_c = DVector::zeros(nc);
        let mut c_f = DVector::zeros(nf);
        for (blk, idx, coef) in self.objective.canonical_terms() {
            let (free, off) = layout.block_offset[blk];
            if free {
                c_f[off + idx] += coef;
            } else {
                c_c[off + idx] += coef;
            }
        }
        (
            StandardForm {
                cones,
                a_c,
                a_f,
                b,
                c_c,
                c_f,
            },
            layout,
        )
    }

    /// Solves the program. Infeasibility, unboundedness and breakdowns are
    /// reported through [`ConicSolution::status`], never as errors.
    pub fn solve(&self, settings: &SolverSettings) -> ConicSolution {
        let (sf, layout) = self.standard_form();
        let raw = solve_standard(&sf, settings);
        let mut values = Vec::with_capacity(self.blocks.len());
        for (k, b) in self.blocks.iter().enumerate() {
            let (free, off) = layout.block_offset[k];
            let src = if free { &raw.x_f } else { &raw.x_c };
            values.push(src.rows(off, b.shape.len()).into_owned());
        }
        let r_p = &sf.a_c * &raw.x_c + &sf.a_f * &raw.x_f - &sf.b;
        let equality_residual = r_p.amax() / (1.0 + sf.b.amax());
        let objective = sf.c_c.dot(&raw.x_c) + sf.c_f.dot(&raw.x_f) + self.objective.constant;
        let dual_objective = sf.b.dot(&raw.y) + self.objective.constant;
        let mut min_cone_eig = f64::INFINITY;
        let mut off = 0;
        for cone in &sf.cones {
            let d = cone.dim();
            min_cone_eig = min_cone_eig.min(cone.min_eigenvalue(&raw.x_c.as_slice()[off..off + d]));
            off += d;
        }
        ConicSolution {
            status: raw.status,
            shapes: self.blocks.iter().map(|b| b.shape).collect(),
            values,
            objective,
            dual_objective,
            equality_residual,
            min_cone_eigenvalue: min_cone_eig,
            iterations: raw.iterations,
        }
    }
}

fn diag_sum(block: usize, m: usize, coef: f64) -> LinExpr {
    LinExpr {
        terms: (0..m).map(|j| (block, svec_index(m, j, j), coef)).collect(),
        constant: 0.0,
    }
}

fn sym_trace_expr(block: usize, m: usize, c: &DMatrix<f64>, scale: f64) -> LinExpr {
    let mut terms = Vec::new();
    for j in 0..m {
        for i in j..m {
            let v = if i == j {
                c[(i, i)]
            } else {
                SQRT2 * 0.5 * (c[(i, j)] + c[(j, i)])
            };
            if v != 0.0 {
                terms.push((block, svec_index(m, i, j), scale * v));
            }
        }
    }
    LinExpr {
        terms,
        constant: 0.0,
    }
}

/// Result of [`ConicProblem::solve`].
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    shapes: Vec<BlockShape>,
    values: Vec<DVector<f64>>,
    /// Primal objective, including the constant term.
    pub objective: f64,
    /// Dual objective; meaningful when the status is optimal.
    pub dual_objective: f64,
    /// Max-norm equality residual relative to `1 + ||b||_inf`.
    pub equality_residual: f64,
    /// Smallest cone eigenvalue over all conic variables (including slacks).
    pub min_cone_eigenvalue: f64,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Optimal, or stalled within the reduced tolerance.
    pub fn is_usable(&self) -> bool {
        matches!(
            self.status,
            SolveStatus::Optimal | SolveStatus::AlmostOptimal
        )
    }

    fn block(&self, v: VarId) -> Result<(&BlockShape, &DVector<f64>), ConicError> {
        let s = self.shapes.get(v.0).ok_or(ConicError::UnknownBlock(v.0))?;
        Ok((s, &self.values[v.0]))
    }

    /// Values of a free or nonnegative block.
    pub fn scalars(&self, v: VarId) -> Result<DVector<f64>, ConicError> {
        match self.block(v)? {
            (BlockShape::Free(_) | BlockShape::Nonneg(_), x) => Ok(x.clone()),
            (other, _) => Err(ConicError::BlockKind {
                block: v.0,
                expected: "free or nonneg",
                found: other.name(),
            }),
        }
    }

    pub fn scalar(&self, v: VarId, i: usize) -> Result<f64, ConicError> {
        let x = self.scalars(v)?;
        x.get(i).copied().ok_or(ConicError::IndexOutOfRange {
            row: i,
            col: 0,
            size: x.len(),
        })
    }

    /// Real symmetric matrix of a PSD block (the embedding for Hermitian blocks).
    pub fn matrix(&self, v: VarId) -> Result<DMatrix<f64>, ConicError> {
        match self.block(v)? {
            (BlockShape::Psd(m), x) => Ok(smat(*m, x.as_slice())),
            (BlockShape::HermitianPsd(n), x) => Ok(smat(2 * n, x.as_slice())),
            (other, _) => Err(ConicError::BlockKind {
                block: v.0,
                expected: "psd",
                found: other.name(),
            }),
        }
    }

    /// Complex Hermitian value of a Hermitian PSD block.
    pub fn hermitian(&self, v: VarId) -> Result<DMatrix<Complex64>, ConicError> {
        match self.block(v)? {
            (BlockShape::HermitianPsd(n), x) => Ok(hermitian_unembed(&smat(2 * n, x.as_slice()))),
            (other, _) => Err(ConicError::BlockKind {
                block: v.0,
                expected: "hermitian-psd",
                found: other.name(),
            }),
        }
    }

    /// Evaluates an expression built against the solved problem.
    pub fn eval(&self, e: &LinExpr) -> Result<f64, ConicError> {
        let mut acc = e.constant;
        for &(b, i, c) in &e.terms {
            let x = self.values.get(b).ok_or(ConicError::UnknownBlock(b))?;
            acc += c * x[i];
        }
        Ok(acc)
    }
}

//! Convex quadratic programs with linear constraints.
//!
//! Canonical form:
//!
//! ```text
//! minimize    ½ xᵀQx + cᵀx + offset
//! subject to  A_eq x = b_eq
//!             A_in x ≤ h_in
//! ```
//!
//! Multipliers follow the Lagrangian `L = f(x) + yᵀ(A_eq x − b_eq) + zᵀ(A_in x − h_in)`
//! with `z ≥ 0`, so stationarity reads `Qx + c + A_eqᵀy + A_inᵀz = 0`.
//!
//! Solving is delegated to the Clarabel interior-point method, followed by an
//! active-set polish that refines the IPM point on the reduced KKT system.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use clarabel::algebra::CscMatrix;
use clarabel::qdldl::{QDLDLFactorisation, QDLDLSettingsBuilder};
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sparse matrix in triplet form. Repeated coordinates are summed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn from_dense(rows: &[Vec<f64>], ncols: usize) -> Self {
        let mut m = Self::new(rows.len(), ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    m.push(i, j, v);
                }
            }
        }
        m
    }

    /// Entries with duplicates merged and exact zeros dropped, sorted by (row, col).
    pub fn compressed(&self) -> BTreeMap<(usize, usize), f64> {
        let mut map = BTreeMap::new();
        for &(i, j, v) in &self.entries {
            *map.entry((i, j)).or_insert(0.0) += v;
        }
        map.retain(|_, v| *v != 0.0);
        map
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
        y
    }

    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for &(i, j, v) in &self.entries {
            y[j] += v * x[i];
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for &(i, j, v) in &self.entries {
            d[i][j] += v;
        }
        d
    }

    fn max_abs(&self) -> f64 {
        self.compressed().values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadraticProgram {
    /// Symmetric, stored with both triangles.
    pub q: SparseMatrix,
    pub c: Vec<f64>,
    pub offset: f64,
    pub a_eq: SparseMatrix,
    pub b_eq: Vec<f64>,
    pub a_in: SparseMatrix,
    pub h_in: Vec<f64>,
    pub names: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
    #[error("Q is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("Q is not positive semidefinite")]
    NotPsd,
    #[error("solver setup failed: {0}")]
    Setup(String),
    #[error("triplet file line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl QuadraticProgram {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let qx = self.q.mul_vec(x);
        0.5 * dot(x, &qx) + dot(&self.c, x) + self.offset
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let dim = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(QpError::Dimension(what.to_string()))
            }
        };
        dim(self.q.nrows == n && self.q.ncols == n, "Q must be n×n")?;
        dim(self.a_eq.ncols == n, "A_eq column count")?;
        dim(self.a_in.ncols == n, "A_in column count")?;
        dim(self.a_eq.nrows == self.b_eq.len(), "A_eq rows vs b_eq")?;
        dim(self.a_in.nrows == self.h_in.len(), "A_in rows vs h_in")?;
        dim(self.names.is_empty() || self.names.len() == n, "name map length")?;

        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let finite_m = |m: &SparseMatrix| m.entries.iter().all(|e| e.2.is_finite());
        if !finite(&self.c) || !self.offset.is_finite() {
            return Err(QpError::NonFinite("c"));
        }
        if !finite(&self.b_eq) {
            return Err(QpError::NonFinite("b_eq"));
        }
        if !finite(&self.h_in) {
            return Err(QpError::NonFinite("h_in"));
        }
        if !finite_m(&self.q) || !finite_m(&self.a_eq) || !finite_m(&self.a_in) {
            return Err(QpError::NonFinite("matrix entries"));
        }

        let q = self.q.compressed();
        let scale = 1.0 + self.q.max_abs();
        for (&(i, j), &v) in &q {
            let t = q.get(&(j, i)).copied().unwrap_or(0.0);
            if (v - t).abs() > 1e-12 * scale {
                return Err(QpError::NotSymmetric { row: i, col: j });
            }
        }
        if !q.is_empty() && !is_psd(n, &q, scale) {
            return Err(QpError::NotPsd);
        }
        Ok(())
    }

    fn upper_csc(&self) -> CscMatrix<f64> {
        let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
        for (&(i, j), &v) in &self.q.compressed() {
            if i <= j {
                ii.push(i);
                jj.push(j);
                vv.push(v);
            }
        }
        let n = self.n();
        CscMatrix::new_from_triplets(n, n, ii, jj, vv)
    }
}

/// LDLᵀ of `Q + εI` with pivots forced positive; a negative or vanishing pivot
/// means `Q` has a direction of negative curvature beyond `ε`.
fn is_psd(n: usize, q: &BTreeMap<(usize, usize), f64>, scale: f64) -> bool {
    let eps = 1e-9 * scale;
    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    for (&(i, j), &v) in q {
        if i <= j {
            ii.push(i);
            jj.push(j);
            vv.push(v);
        }
    }
    for k in 0..n {
        ii.push(k);
        jj.push(k);
        vv.push(eps);
    }
    let m = CscMatrix::new_from_triplets(n, n, ii, jj, vv);
    let settings = QDLDLSettingsBuilder::default()
        .regularize_enable(false)
        .build()
        .expect("static settings");
    match QDLDLFactorisation::new(&m, Some(settings)) {
        Ok(f) => f.D.iter().all(|&d| d > 0.0),
        Err(_) => false,
    }
}

/// Incremental construction of a [`QuadraticProgram`].
#[derive(Debug, Clone, Default)]
pub struct QpBuilder {
    names: Vec<String>,
    q: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
    offset: f64,
    eq: Vec<(Vec<(usize, f64)>, f64)>,
    le: Vec<(Vec<(usize, f64)>, f64)>,
}

impl QpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds `lo ≤ x ≤ hi`; infinite bounds emit no row.
    pub fn var(&mut self, name: impl Into<String>, lo: f64, hi: f64) -> usize {
        let k = self.names.len();
        self.names.push(name.into());
        self.c.push(0.0);
        if hi.is_finite() {
            self.le.push((vec![(k, 1.0)], hi));
        }
        if lo.is_finite() {
            self.le.push((vec![(k, -1.0)], -lo));
        }
        k
    }

    pub fn free_var(&mut self, name: impl Into<String>) -> usize {
        self.var(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn n_eq(&self) -> usize {
        self.eq.len()
    }

    pub fn n_le(&self) -> usize {
        self.le.len()
    }

    pub fn linear(&mut self, k: usize, coef: f64) {
        self.c[k] += coef;
    }

    pub fn constant(&mut self, v: f64) {
        self.offset += v;
    }

    /// Adds `coef·x_k²` to the objective.
    pub fn square(&mut self, k: usize, coef: f64) {
        if coef != 0.0 {
            self.q.push((k, k, 2.0 * coef));
        }
    }

    /// Adds `coef·(Σ a_k x_k + constant)²` to the objective.
    pub fn square_of_sum(&mut self, terms: &[(usize, f64)], constant: f64, coef: f64) {
        if coef == 0.0 {
            return;
        }
        for &(k, a) in terms {
            for &(l, b) in terms {
                self.q.push((k, l, 2.0 * coef * a * b));
            }
            self.c[k] += 2.0 * coef * constant * a;
        }
        self.offset += coef * constant * constant;
    }

    /// `Σ terms = rhs`; returns the equality row index.
    pub fn eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.eq.push((terms, rhs));
        self.eq.len() - 1
    }

    /// `Σ terms ≤ rhs`; returns the inequality row index.
    pub fn le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.le.push((terms, rhs));
        self.le.len() - 1
    }

    /// `Σ terms ≥ rhs`, stored negated.
    pub fn ge(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        let neg = terms.into_iter().map(|(k, a)| (k, -a)).collect();
        self.le(neg, -rhs)
    }

    pub fn build(self) -> QuadraticProgram {
        let n = self.names.len();
        let mut q = SparseMatrix::new(n, n);
        q.entries = self.q;
        let mut a_eq = SparseMatrix::new(self.eq.len(), n);
        let mut b_eq = Vec::with_capacity(self.eq.len());
        for (r, (terms, rhs)) in self.eq.into_iter().enumerate() {
            for (k, a) in terms {
                a_eq.push(r, k, a);
            }
            b_eq.push(rhs);
        }
        let mut a_in = SparseMatrix::new(self.le.len(), n);
        let mut h_in = Vec::with_capacity(self.le.len());
        for (r, (terms, rhs)) in self.le.into_iter().enumerate() {
            for (k, a) in terms {
                a_in.push(r, k, a);
            }
            h_in.push(rhs);
        }
        QuadraticProgram {
            q,
            c: self.c,
            offset: self.offset,
            a_eq,
            b_eq,
            a_in,
            h_in,
            names: self.names,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    /// The solver stopped with a point whose KKT residuals exceed the tolerance.
    Inaccurate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖Qx + c + A_eqᵀy + A_inᵀz‖∞ / (1 + ‖c‖∞)`.
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_in: f64,
    /// `max_i |z_i·(h_i − a_iᵀx)|`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [self.primal_eq, self.primal_in, self.complementarity]
            .into_iter()
            .fold(self.stationarity, nan_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub duals_eq: Vec<f64>,
    pub duals_in: Vec<f64>,
    pub status: QpStatus,
    pub kkt: KktResiduals,
    pub objective: f64,
    pub dual_objective: f64,
    pub iterations: u32,
    pub polished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: u32,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50_000,
            polish: true,
        }
    }
}

pub fn kkt_residuals(qp: &QuadraticProgram, x: &[f64], y: &[f64], z: &[f64]) -> KktResiduals {
    let mut g = qp.q.mul_vec(x);
    for (gi, ci) in g.iter_mut().zip(&qp.c) {
        *gi += ci;
    }
    for (gi, v) in g.iter_mut().zip(qp.a_eq.tr_mul_vec(y)) {
        *gi += v;
    }
    for (gi, v) in g.iter_mut().zip(qp.a_in.tr_mul_vec(z)) {
        *gi += v;
    }
    let c_inf = inf_norm(&qp.c);
    let ax = qp.a_eq.mul_vec(x);
    let primal_eq = ax
        .iter()
        .zip(&qp.b_eq)
        .fold(0.0_f64, |m, (a, b)| nan_max(m, (a - b).abs()));
    let gx = qp.a_in.mul_vec(x);
    let mut primal_in = 0.0_f64;
    let mut complementarity = 0.0_f64;
    for ((gi, hi), zi) in gx.iter().zip(&qp.h_in).zip(z) {
        primal_in = nan_max(primal_in, gi - hi);
        complementarity = nan_max(complementarity, (zi * (hi - gi)).abs());
    }
    KktResiduals {
        stationarity: inf_norm(&g) / (1.0 + c_inf),
        primal_eq,
        primal_in: nan_max(primal_in, 0.0),
        complementarity,
    }
}

/// Lagrangian dual value at a stationary point: `−½xᵀQx − b_eqᵀy − h_inᵀz + offset`.
pub fn dual_objective(qp: &QuadraticProgram, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let qx = qp.q.mul_vec(x);
    -0.5 * dot(x, &qx) - dot(&qp.b_eq, y) - dot(&qp.h_in, z) + qp.offset
}

pub fn solve_qp(qp: &QuadraticProgram, settings: &QpSettings) -> Result<QpSolution, QpError> {
    qp.validate()?;
    let n = qp.n();
    let me = qp.a_eq.nrows;
    let mi = qp.a_in.nrows;

    let p = qp.upper_csc();
    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    for &(i, j, v) in &qp.a_eq.entries {
        ii.push(i);
        jj.push(j);
        vv.push(v);
    }
    for &(i, j, v) in &qp.a_in.entries {
        ii.push(me + i);
        jj.push(j);
        vv.push(v);
    }
    let mut rhs: Vec<f64> = qp.b_eq.iter().chain(&qp.h_in).copied().collect();
    // Clarabel needs at least one cone row; pad with the vacuous 0 ≤ 1.
    let padded = me + mi == 0;
    if padded {
        rhs.push(1.0);
    }
    let m = rhs.len();
    let a = CscMatrix::new_from_triplets(m, n, ii, jj, vv);
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if me > 0 {
        cones.push(ZeroConeT(me));
    }
    if mi > 0 || padded {
        cones.push(NonnegativeConeT(m - me));
    }

    let ipm_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_gap_abs(1e-13)
        .tol_gap_rel(1e-14)
        .tol_feas(1e-11)
        .tol_ktratio(1e-9)
        .build()
        .map_err(|e| QpError::Setup(e.to_string()))?;
    let mut solver = DefaultSolver::new(&p, &qp.c, &a, &rhs, &cones, ipm_settings)
        .map_err(|e| QpError::Setup(e.to_string()))?;
    solver.solve();
    let sol = &solver.solution;
    let iterations = sol.iterations;

    let base_status = match sol.status {
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            Some(QpStatus::Infeasible)
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            Some(QpStatus::Unbounded)
        }
        SolverStatus::MaxIterations | SolverStatus::MaxTime => Some(QpStatus::MaxIter),
        _ => None,
    };
    if let Some(status) = base_status {
        log::debug!("qp: solver stopped with {:?} after {iterations} iterations", sol.status);
        let x = if status == QpStatus::MaxIter {
            sol.x.clone()
        } else {
            vec![f64::NAN; n]
        };
        return Ok(QpSolution {
            objective: if status == QpStatus::MaxIter {
                qp.objective(&x)
            } else {
                f64::NAN
            },
            x,
            duals_eq: vec![f64::NAN; me],
            duals_in: vec![f64::NAN; mi],
            status,
            kkt: KktResiduals {
                stationarity: f64::INFINITY,
                primal_eq: f64::INFINITY,
                primal_in: f64::INFINITY,
                complementarity: f64::INFINITY,
            },
            dual_objective: f64::NAN,
            iterations,
            polished: false,
        });
    }

    let mut x = sol.x.clone();
    let mut y = sol.z[..me].to_vec();
    let mut z: Vec<f64> = sol.z[me..me + mi].iter().map(|v| v.max(0.0)).collect();
    let mut kkt = kkt_residuals(qp, &x, &y, &z);
    let mut polished = false;
    if settings.polish && kkt.max() > 0.0 {
        let slack: Vec<f64> = sol.s[me..me + mi].to_vec();
        if let Some((px, py, pz)) = polish(qp, &x, &y, &z, &slack) {
            let pk = kkt_residuals(qp, &px, &py, &pz);
            if pk.max() <= kkt.max() || kkt.max().is_nan() {
                x = px;
                y = py;
                z = pz;
                kkt = pk;
                polished = true;
            }
        }
    }
    let status = if kkt.max() <= settings.tol {
        QpStatus::Optimal
    } else {
        QpStatus::Inaccurate
    };
    log::debug!(
        "qp: n={n} m_eq={me} m_in={mi} ipm={:?} iters={iterations} polished={polished} kkt={:.2e}",
        sol.status,
        kkt.max()
    );
    Ok(QpSolution {
        objective: qp.objective(&x),
        dual_objective: dual_objective(qp, &x, &y, &z),
        x,
        duals_eq: y,
        duals_in: z,
        status,
        kkt,
        iterations,
        polished,
    })
}

/// Solves the equality-constrained QP on the guessed active set with a
/// regularized quasi-definite factorization plus iterative refinement
/// against the exact KKT matrix.
fn polish(
    qp: &QuadraticProgram,
    x0: &[f64],
    y0: &[f64],
    z0: &[f64],
    slack: &[f64],
) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    // Rows that are tight at the IPM point stay in even when their dual is
    // tiny; rows whose polished dual turns out negative are released.
    let mut active: Vec<usize> = (0..qp.a_in.nrows)
        .filter(|&i| z0[i] > slack[i] || slack[i] <= 1e-9 * (1.0 + qp.h_in[i].abs()))
        .collect();
    for _ in 0..5 {
        match polish_on(qp, x0, y0, z0, &active)? {
            Ok(sol) => return Some(sol),
            Err(negative) => active.retain(|i| !negative.contains(i)),
        }
    }
    None
}

type Polished = Result<(Vec<f64>, Vec<f64>, Vec<f64>), Vec<usize>>;

fn polish_on(qp: &QuadraticProgram, x0: &[f64], y0: &[f64], z0: &[f64], active: &[usize]) -> Option<Polished> {
    let n = qp.n();
    let me = qp.a_eq.nrows;
    let mut pos = vec![usize::MAX; qp.a_in.nrows];
    for (k, &i) in active.iter().enumerate() {
        pos[i] = k;
    }
    let ma = active.len();
    let dim = n + me + ma;
    let delta = 1e-9;

    // Reduced KKT operator without regularization, as triplets over the full square.
    let mut k0: Vec<(usize, usize, f64)> = Vec::new();
    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    for (&(i, j), &v) in &qp.q.compressed() {
        k0.push((i, j, v));
        if i <= j {
            ii.push(i);
            jj.push(j);
            vv.push(v);
        }
    }
    for k in 0..n {
        ii.push(k);
        jj.push(k);
        vv.push(delta);
    }
    for &(r, j, v) in &qp.a_eq.entries {
        k0.push((n + r, j, v));
        k0.push((j, n + r, v));
        ii.push(j);
        jj.push(n + r);
        vv.push(v);
    }
    for &(r, j, v) in &qp.a_in.entries {
        if pos[r] != usize::MAX {
            let row = n + me + pos[r];
            k0.push((row, j, v));
            k0.push((j, row, v));
            ii.push(j);
            jj.push(row);
            vv.push(v);
        }
    }
    for k in n..dim {
        ii.push(k);
        jj.push(k);
        vv.push(-delta);
    }
    let kmat = CscMatrix::new_from_triplets(dim, dim, ii, jj, vv);
    let mut signs = vec![1_i8; n];
    signs.extend(std::iter::repeat(-1_i8).take(me + ma));
    let opts = QDLDLSettingsBuilder::default().Dsigns(signs).build().ok()?;
    let mut fact = QDLDLFactorisation::new(&kmat, Some(opts)).ok()?;

    let mut rhs = vec![0.0; dim];
    for (k, c) in qp.c.iter().enumerate() {
        rhs[k] = -c;
    }
    rhs[n..n + me].copy_from_slice(&qp.b_eq);
    for (k, &i) in active.iter().enumerate() {
        rhs[n + me + k] = qp.h_in[i];
    }
    let mut sol: Vec<f64> = x0.iter().chain(y0).copied().collect();
    sol.extend(active.iter().map(|&i| z0[i]));

    let residual = |s: &[f64]| {
        let mut r = rhs.clone();
        for &(i, j, v) in &k0 {
            r[i] -= v * s[j];
        }
        r
    };
    let mut r = residual(&sol);
    let mut best = inf_norm(&r);
    for _ in 0..50 {
        let mut d = r.clone();
        fact.solve(&mut d);
        let cand: Vec<f64> = sol.iter().zip(&d).map(|(a, b)| a + b).collect();
        let rc = residual(&cand);
        let nrm = inf_norm(&rc);
        if !nrm.is_finite() || nrm >= best {
            break;
        }
        let done = nrm < 1e-14 * (1.0 + inf_norm(&rhs));
        sol = cand;
        r = rc;
        best = nrm;
        if done {
            break;
        }
    }

    let x = sol[..n].to_vec();
    let y = sol[n..n + me].to_vec();
    let mut z = vec![0.0; qp.a_in.nrows];
    let zscale = 1.0 + inf_norm(z0);
    let mut negative = Vec::new();
    for (k, &i) in active.iter().enumerate() {
        let v = sol[n + me + k];
        if v < -1e-7 * zscale {
            negative.push(i);
        }
        z[i] = v.max(0.0);
    }
    if negative.is_empty() {
        Some(Ok((x, y, z)))
    } else {
        Some(Err(negative))
    }
}

/// Writes `qp` in the sparse triplet text format documented in `docs/formats.md`.
pub fn write_triplets(qp: &QuadraticProgram, out: &mut impl Write) -> std::io::Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "# wind-clearing qp triplets v1");
    let _ = writeln!(s, "dims {} {} {}", qp.n(), qp.a_eq.nrows, qp.a_in.nrows);
    let _ = writeln!(s, "offset {:e}", qp.offset);
    for (k, name) in qp.names.iter().enumerate() {
        let _ = writeln!(s, "name {k} {name}");
    }
    for (&(i, j), &v) in &qp.q.compressed() {
        if i <= j {
            let _ = writeln!(s, "Q {i} {j} {v:e}");
        }
    }
    for (k, &v) in qp.c.iter().enumerate() {
        if v != 0.0 {
            let _ = writeln!(s, "c {k} {v:e}");
        }
    }
    for (&(i, j), &v) in &qp.a_eq.compressed() {
        let _ = writeln!(s, "Aeq {i} {j} {v:e}");
    }
    for (k, &v) in qp.b_eq.iter().enumerate() {
        let _ = writeln!(s, "beq {k} {v:e}");
    }
    for (&(i, j), &v) in &qp.a_in.compressed() {
        let _ = writeln!(s, "Ain {i} {j} {v:e}");
    }
    for (k, &v) in qp.h_in.iter().enumerate() {
        let _ = writeln!(s, "hin {k} {v:e}");
    }
    out.write_all(s.as_bytes())
}

pub fn read_triplets(input: impl BufRead) -> Result<QuadraticProgram, QpError> {
    let mut qp = QuadraticProgram::default();
    let mut have_dims = false;
    for (lineno, line) in input.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |message: String| QpError::Parse {
            line: line_no,
            message,
        };
        let line = line.map_err(|e| err(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(2, ' ');
        let tag = parts.next().unwrap_or_default();
        let rest = parts.next().unwrap_or_default();
        let fields: Vec<&str> = rest.split_whitespace().collect();
        let idx = |k: usize| -> Result<usize, QpError> {
            fields
                .get(k)
                .ok_or_else(|| err(format!("missing field {k}")))?
                .parse()
                .map_err(|e| err(format!("{e}")))
        };
        let num = |k: usize| -> Result<f64, QpError> {
            fields
                .get(k)
                .ok_or_else(|| err(format!("missing field {k}")))?
                .parse()
                .map_err(|e| err(format!("{e}")))
        };
        if tag != "dims" && !have_dims {
            return Err(err("dims line must come first".into()));
        }
        let check = |ok: bool| if ok { Ok(()) } else { Err(err("index out of range".into())) };
        match tag {
            "dims" => {
                let (n, me, mi) = (idx(0)?, idx(1)?, idx(2)?);
                qp.q = SparseMatrix::new(n, n);
                qp.c = vec![0.0; n];
                qp.a_eq = SparseMatrix::new(me, n);
                qp.b_eq = vec![0.0; me];
                qp.a_in = SparseMatrix::new(mi, n);
                qp.h_in = vec![0.0; mi];
                have_dims = true;
            }
            "offset" => qp.offset = num(0)?,
            "name" => {
                let k = idx(0)?;
                check(k < qp.n())?;
                if qp.names.is_empty() {
                    qp.names = vec![String::new(); qp.n()];
                }
                qp.names[k] = rest.split_once(' ').map(|x| x.1).unwrap_or("").to_string();
            }
            "Q" => {
                let (i, j, v) = (idx(0)?, idx(1)?, num(2)?);
                check(i < qp.n() && j < qp.n())?;
                qp.q.push(i, j, v);
                if i != j {
                    qp.q.push(j, i, v);
                }
            }
            "c" => {
                let k = idx(0)?;
                check(k < qp.n())?;
                qp.c[k] = num(1)?;
            }
            "Aeq" => {
                let (i, j) = (idx(0)?, idx(1)?);
                check(i < qp.a_eq.nrows && j < qp.n())?;
                qp.a_eq.push(i, j, num(2)?);
            }
            "beq" => {
                let k = idx(0)?;
                check(k < qp.b_eq.len())?;
                qp.b_eq[k] = num(1)?;
            }
            "Ain" => {
                let (i, j) = (idx(0)?, idx(1)?);
                check(i < qp.a_in.nrows && j < qp.n())?;
                qp.a_in.push(i, j, num(2)?);
            }
            "hin" => {
                let k = idx(0)?;
                check(k < qp.h_in.len())?;
                qp.h_in[k] = num(1)?;
            }
            other => return Err(err(format!("unknown record '{other}'"))),
        }
    }
    if !have_dims {
        return Err(QpError::Parse {
            line: 0,
            message: "empty file".into(),
        });
    }
    Ok(qp)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| nan_max(m, x.abs()))
}

/// Like `f64::max` but a NaN in either argument wins.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

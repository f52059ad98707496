//! Online solver: each mode-m unfolding is streamed column by column against
//! a small basis `U` (p×r), with the nuclear norm replaced by its
//! factorized upper bound `½(‖U‖² + ‖V‖²)`.
//!
//! Per column the coefficients `v`, the spatially smoothed copy `h`, the
//! temporally smoothed copy `t` and the sparse part `f` are alternated until
//! they settle, then the basis absorbs the column. The per-mode estimates are
//! folded back and averaged.

use std::collections::VecDeque;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{laplacian, spatial_graph, temporal_graph, GraphConfig, SparseLaplacian};
use crate::linsolve::pcg;
use crate::tensor::{default_lambda, soft, Mode, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisUpdate {
    /// `U = Θ(θ + λI)⁻¹` from the running sums `Θ = Σ r vᵀ`, `θ = Σ v vᵀ`.
    ClosedForm,
    /// One gradient step per column.
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineConfig {
    /// Basis rank.
    pub r: usize,
    /// SGD step size.
    pub eta: f64,
    /// Sparsity weight; `None` resolves to [`default_lambda`].
    pub lambda: Option<f64>,
    /// Ridge weight of the coefficient solve.
    pub lambda2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Per-column tolerance on `max(‖Δf‖, ‖Δv‖) / p`.
    pub omega: f64,
    /// Columns in the temporal window, the current one included.
    pub window: usize,
    pub basis_update: BasisUpdate,
    /// Cap on the per-column alternation.
    pub max_inner: usize,
    /// Weight the initial basis by the graph Laplacians instead of using
    /// the raw first columns.
    pub graph_init: bool,
    /// Seed for replacing degenerate basis columns.
    pub seed: u64,
    pub modes: Vec<Mode>,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            r: 10,
            eta: 0.01,
            lambda: None,
            lambda2: 0.5,
            gamma1: 0.9,
            gamma2: 1.5,
            omega: 1e-6,
            window: 10,
            basis_update: BasisUpdate::ClosedForm,
            max_inner: 100,
            graph_init: false,
            seed: 0,
            modes: Mode::ALL.to_vec(),
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(Error::arg("rank r must be >= 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::arg(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::arg(format!("omega must be positive, got {}", self.omega)));
        }
        if self.window < 2 {
            return Err(Error::arg(format!("window must be >= 2, got {}", self.window)));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::arg(format!("lambda must be >= 0, got {l}")));
            }
        }
        if !(self.lambda2 >= 0.0 && self.gamma1 >= 0.0 && self.gamma2 >= 0.0) {
            return Err(Error::arg("lambda2, gamma1 and gamma2 must be >= 0"));
        }
        if self.max_inner == 0 {
            return Err(Error::arg("max_inner must be >= 1"));
        }
        if self.modes.is_empty() {
            return Err(Error::arg("at least one mode is required"));
        }
        Ok(())
    }

    pub fn resolved_lambda(&self, (w, h, n): (usize, usize, usize)) -> f64 {
        self.lambda.unwrap_or_else(|| default_lambda((w, h, n)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnResult {
    pub v: DVector<f64>,
    pub f: DVector<f64>,
    pub h: DVector<f64>,
    pub t: DVector<f64>,
    /// Background estimate `U v`.
    pub b: DVector<f64>,
    pub inner_iters: usize,
    pub converged: bool,
}

/// Per-mode state. Its size depends on `p`, `r` and the window only.
#[derive(Clone, Debug)]
pub struct OnlineState {
    pub u: DMatrix<f64>,
    /// `Σ r vᵀ`, seeded with `λU₀`.
    pub big_theta: DMatrix<f64>,
    /// `Σ v vᵀ`
    pub theta: DMatrix<f64>,
    /// Most recent `(x, t)` columns, oldest first.
    window: VecDeque<(DVector<f64>, DVector<f64>)>,
    /// Columns processed so far.
    pub i: usize,
}

impl OnlineState {
    pub fn p(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// Number of scalars held by the state.
    pub fn retained_len(&self) -> usize {
        self.u.len()
            + self.big_theta.len()
            + self.theta.len()
            + self.window.iter().map(|(x, t)| x.len() + t.len()).sum::<usize>()
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Processes one column: alternates the `v, h, t, f` updates, then
    /// updates the basis and slides the window.
    pub fn process(
        &mut self,
        x: &DVector<f64>,
        ls: Option<&SparseLaplacian>,
        cfg: &OnlineConfig,
        gcfg: &GraphConfig,
        lambda: f64,
    ) -> Result<ColumnResult> {
        let p = self.p();
        if x.len() != p {
            return Err(Error::arg(format!("column has length {}, basis has {p} rows", x.len())));
        }
        let (priors, lt) = self.window_laplacian(x, cfg, gcfg)?;
        let mut f = DVector::zeros(p);
        let mut v = DVector::zeros(self.rank());
        let mut h = DVector::zeros(p);
        let mut t = DVector::zeros(p);
        let mut converged = false;
        let mut iters = 0;
        while iters < cfg.max_inner {
            iters += 1;
            let v_new = update_v(&self.u, x, &f, cfg.lambda2)?;
            h = update_h(&f, ls, cfg.gamma1, Some(&h))?;
            t = update_t(&f, &priors, lt.as_ref(), cfg.gamma2)?;
            let f_new = update_f(x, &self.u, &v_new, &h, &t, lambda);
            let delta = (&f_new - &f).norm().max((&v_new - &v).norm()) / p as f64;
            f = f_new;
            v = v_new;
            if delta < cfg.omega {
                converged = true;
                break;
            }
        }
        let b = &self.u * &v;
        let resid = x - &f;
        update_basis(self, &resid, &v, cfg, lambda);
        self.window.push_back((x.clone(), t.clone()));
        while self.window.len() > cfg.window - 1 {
            self.window.pop_front();
        }
        self.i += 1;
        let out = ColumnResult { v, f, h, t, b, inner_iters: iters, converged };
        if ![&out.v, &out.f, &out.h, &out.t, &out.b].iter().all(|c| c.iter().all(|e| e.is_finite())) {
            return Err(Error::Numeric(format!("non-finite column estimate at column {}", self.i - 1)));
        }
        Ok(out)
    }

    /// Prior `t` columns and the normalized Laplacian of the window graph
    /// over `[prior x columns..., x]`.
    fn window_laplacian(
        &self,
        x: &DVector<f64>,
        cfg: &OnlineConfig,
        gcfg: &GraphConfig,
    ) -> Result<(Vec<DVector<f64>>, Option<SparseLaplacian>)> {
        if cfg.gamma2 == 0.0 || self.window.is_empty() {
            return Ok((Vec::new(), None));
        }
        let m = self.window.len();
        let mut cols = DMatrix::zeros(x.len(), m + 1);
        for (c, (xp, _)) in self.window.iter().enumerate() {
            cols.set_column(c, xp);
        }
        cols.set_column(m, x);
        let l = laplacian(&temporal_graph(&cols, gcfg)?);
        let priors = self.window.iter().map(|(_, t)| t.clone()).collect();
        Ok((priors, Some(l)))
    }
}

/// Builds the initial state from the first `r` columns of `cols`.
///
/// `U = L_s X_r L̃_t` where either factor may be absent (identity). Columns
/// with norm below `1e-12` are replaced by random unit vectors.
pub fn init_basis(
    cols: &DMatrix<f64>,
    lt_block: Option<&DMatrix<f64>>,
    ls: Option<&SparseLaplacian>,
    cfg: &OnlineConfig,
    lambda: f64,
) -> Result<OnlineState> {
    let r = cfg.r;
    if cols.ncols() < r {
        return Err(Error::arg(format!("basis initialization needs {r} columns, got {}", cols.ncols())));
    }
    let p = cols.nrows();
    let mut u = cols.columns(0, r).into_owned();
    if let Some(l) = ls {
        if l.n() != p {
            return Err(Error::arg(format!("spatial Laplacian is {}x{}, columns have {p} rows", l.n(), l.n())));
        }
        for mut c in u.column_iter_mut() {
            let lc = l.matvec(c.as_slice());
            c.copy_from_slice(&lc);
        }
    }
    if let Some(lt) = lt_block {
        if lt.shape() != (r, r) {
            return Err(Error::arg(format!("temporal block is {:?}, expected {r}x{r}", lt.shape())));
        }
        u = &u * lt;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for mut c in u.column_iter_mut() {
        if c.norm() < 1e-12 {
            let g: DVector<f64> = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            c.copy_from(&(&g / g.norm()));
        }
    }
    Ok(OnlineState {
        big_theta: &u * lambda,
        theta: DMatrix::zeros(r, r),
        u,
        window: VecDeque::with_capacity(cfg.window),
        i: 0,
    })
}

/// `v = (UᵀU + λ₂I)⁻¹ Uᵀ(x − f)`
pub fn update_v(u: &DMatrix<f64>, x: &DVector<f64>, f: &DVector<f64>, lambda2: f64) -> Result<DVector<f64>> {
    let r = u.ncols();
    let gram = u.tr_mul(u) + DMatrix::identity(r, r) * lambda2;
    let rhs = u.tr_mul(&(x - f));
    if let Some(ch) = gram.clone().cholesky() {
        return Ok(ch.solve(&rhs));
    }
    // singular Gram matrix (λ₂ = 0, dependent columns): least-norm solution
    gram.svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Numeric(format!("coefficient solve failed: {e}")))
}

/// `(I + γ₁L_s) h = f`
pub fn update_h(
    f: &DVector<f64>,
    ls: Option<&SparseLaplacian>,
    gamma1: f64,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let l = match ls {
        Some(l) if gamma1 > 0.0 => l,
        _ => return Ok(f.clone()),
    };
    if l.n() != f.len() {
        return Err(Error::arg(format!("spatial Laplacian is {}x{}, column has {} rows", l.n(), l.n(), f.len())));
    }
    let x0 = warm.filter(|w| w.iter().any(|&e| e != 0.0)).map(|w| w.as_slice().to_vec());
    Ok(DVector::from_vec(pcg(l, gamma1, 1.0, f.as_slice(), x0)?))
}

/// Minimizes `γ₂ Tr(T L Tᵀ) + ‖t − f‖²` over the newest column `t` of
/// `T = [priors..., t]` with the prior columns held fixed:
/// `t = (f + γ₂ Σ_j ã_j t_j) / (1 + γ₂ L_ii)` where `ã_j = −L_ij`.
///
/// `lt` is the Laplacian over the window with the current column last.
pub fn update_t(
    f: &DVector<f64>,
    priors: &[DVector<f64>],
    lt: Option<&SparseLaplacian>,
    gamma2: f64,
) -> Result<DVector<f64>> {
    let l = match lt {
        Some(l) if gamma2 > 0.0 && !priors.is_empty() => l,
        _ => return Ok(f.clone()),
    };
    let m = priors.len();
    if l.n() != m + 1 {
        return Err(Error::arg(format!("window Laplacian is {}x{}, expected {}x{}", l.n(), l.n(), m + 1, m + 1)));
    }
    let mut acc = f.clone();
    for (j, lij) in l.row(m) {
        if j < m {
            acc.axpy(-gamma2 * lij, &priors[j], 1.0);
        }
    }
    Ok(acc / (1.0 + gamma2 * l.diag(m)))
}

/// `f = soft((x − Uv + h + t)/3, λ/6)`, the minimizer of
/// `‖x − Uv − f‖² + ‖h − f‖² + ‖t − f‖² + λ‖f‖₁`.
pub fn update_f(
    x: &DVector<f64>,
    u: &DMatrix<f64>,
    v: &DVector<f64>,
    h: &DVector<f64>,
    t: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    let q = (x - u * v + h + t) / 3.0;
    q.map(|e| soft(e, lambda / 6.0))
}

/// Absorbs the column residual `r = x − f` with coefficients `v`.
pub fn update_basis(state: &mut OnlineState, r: &DVector<f64>, v: &DVector<f64>, cfg: &OnlineConfig, lambda: f64) {
    match cfg.basis_update {
        BasisUpdate::ClosedForm => {
            state.big_theta += r * v.transpose();
            state.theta += v * v.transpose();
            let k = state.rank();
            let a = &state.theta + DMatrix::identity(k, k) * lambda;
            // U a = Θ  <=>  a Uᵀ = Θᵀ (a symmetric)
            let solved = match a.clone().cholesky() {
                Some(ch) => Some(ch.solve(&state.big_theta.transpose())),
                None => a.lu().solve(&state.big_theta.transpose()),
            };
            match solved {
                Some(ut) => state.u = ut.transpose(),
                None => debug!("basis system singular at column {}, basis kept", state.i),
            }
        }
        BasisUpdate::Sgd => {
            let grad = &state.u * v * v.transpose() - r * v.transpose() + &state.u * lambda;
            state.u -= grad * cfg.eta;
        }
    }
}

/// Column stream of one mode. The first `r` columns are buffered to build
/// the basis; after that every pushed column is answered immediately.
#[derive(Clone, Debug)]
pub struct ModeStream {
    mode: Mode,
    /// `(w, h)` of a frame; used to rebuild the spatial graph in mode 3.
    frame: (usize, usize),
    cfg: OnlineConfig,
    gcfg: GraphConfig,
    lambda: f64,
    pending: Vec<DVector<f64>>,
    state: Option<OnlineState>,
}

impl ModeStream {
    pub fn new(mode: Mode, frame: (usize, usize), cfg: &OnlineConfig, gcfg: &GraphConfig, lambda: f64) -> Result<Self> {
        cfg.validate()?;
        gcfg.validate()?;
        if mode == Mode::Three && cfg.gamma1 > 0.0 && gcfg.patch > frame.0.min(frame.1) {
            return Err(Error::arg(format!(
                "patch size {} exceeds frame size {}x{}",
                gcfg.patch, frame.0, frame.1
            )));
        }
        Ok(ModeStream {
            mode,
            frame,
            cfg: cfg.clone(),
            gcfg: gcfg.clone(),
            lambda,
            pending: Vec::with_capacity(cfg.r),
            state: None,
        })
    }

    pub fn state(&self) -> Option<&OnlineState> {
        self.state.as_ref()
    }

    /// Scalars retained between pushes.
    pub fn retained_len(&self) -> usize {
        self.state.as_ref().map_or(0, |s| s.retained_len()) + self.pending.iter().map(|c| c.len()).sum::<usize>()
    }

    fn spatial_laplacian(&self, x: &DVector<f64>) -> Result<Option<SparseLaplacian>> {
        if self.mode != Mode::Three || self.cfg.gamma1 == 0.0 {
            return Ok(None);
        }
        let (w, h) = self.frame;
        let slice = DMatrix::from_column_slice(w, h, x.as_slice());
        Ok(Some(laplacian(&spatial_graph(&slice, &self.gcfg)?)))
    }

    /// Feeds one column; returns the results that became available.
    pub fn push(&mut self, x: DVector<f64>) -> Result<Vec<ColumnResult>> {
        if x.iter().any(|e| !e.is_finite()) {
            return Err(Error::arg("column contains non-finite values"));
        }
        if self.state.is_some() {
            let ls = self.spatial_laplacian(&x)?;
            let state = self.state.as_mut().expect("state checked above");
            return Ok(vec![state.process(&x, ls.as_ref(), &self.cfg, &self.gcfg, self.lambda)?]);
        }
        if let Some(first) = self.pending.first() {
            if first.len() != x.len() {
                return Err(Error::arg(format!("column has length {}, expected {}", x.len(), first.len())));
            }
        }
        self.pending.push(x);
        if self.pending.len() < self.cfg.r {
            return Ok(Vec::new());
        }
        let cols = DMatrix::from_columns(&self.pending);
        let (lt, ls) = if self.cfg.graph_init {
            let lt = if self.cfg.gamma2 > 0.0 && self.cfg.r >= 2 {
                Some(laplacian(&temporal_graph(&cols, &self.gcfg)?).to_dense())
            } else {
                None
            };
            (lt, self.spatial_laplacian(&self.pending[self.cfg.r - 1])?)
        } else {
            (None, None)
        };
        let mut state = init_basis(&cols, lt.as_ref(), ls.as_ref(), &self.cfg, self.lambda)?;
        let pending = std::mem::take(&mut self.pending);
        let mut out = Vec::with_capacity(pending.len());
        for x in &pending {
            let ls = self.spatial_laplacian(x)?;
            out.push(state.process(x, ls.as_ref(), &self.cfg, &self.gcfg, self.lambda)?);
        }
        self.state = Some(state);
        Ok(out)
    }

    /// Errors if the stream ended before the basis could be built.
    pub fn finish(&self) -> Result<()> {
        if self.state.is_none() {
            return Err(Error::arg(format!(
                "mode {} stream ended after {} columns, rank {} needs at least {}",
                self.mode.index(),
                self.pending.len(),
                self.cfg.r,
                self.cfg.r
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeReport {
    pub mode: Mode,
    pub columns: usize,
    pub converged_columns: usize,
    pub mean_inner_iters: f64,
}

#[derive(Clone, Debug)]
pub struct OnlineDecomposition {
    pub background: Tensor3,
    pub foreground: Tensor3,
    pub modes: Vec<ModeReport>,
}

/// Streams every configured mode of `x` and averages the folded estimates.
pub fn solve_online(x: &Tensor3, cfg: &OnlineConfig, gcfg: &GraphConfig) -> Result<OnlineDecomposition> {
    cfg.validate()?;
    if !x.is_finite() {
        return Err(Error::arg("input tensor contains non-finite values"));
    }
    let dims = x.dims();
    let mut modes = cfg.modes.clone();
    modes.sort();
    modes.dedup();
    for &m in &modes {
        let cols = m.unfolded_shape(dims).1;
        if cols <= cfg.r {
            return Err(Error::arg(format!(
                "mode {} has {cols} columns, rank {} needs more",
                m.index(),
                cfg.r
            )));
        }
    }
    let lambda = cfg.resolved_lambda(dims);
    let per_mode: Vec<(Tensor3, Tensor3, ModeReport)> = modes
        .par_iter()
        .map(|&m| {
            let xm = x.unfold(m);
            let mut stream = ModeStream::new(m, (dims.0, dims.1), cfg, gcfg, lambda)?;
            let mut bm = DMatrix::zeros(xm.nrows(), xm.ncols());
            let mut fm = DMatrix::zeros(xm.nrows(), xm.ncols());
            let mut col = 0;
            let mut converged = 0;
            let mut inner = 0;
            for c in 0..xm.ncols() {
                for res in stream.push(xm.column(c).into_owned())? {
                    bm.set_column(col, &res.b);
                    fm.set_column(col, &res.f);
                    converged += usize::from(res.converged);
                    inner += res.inner_iters;
                    col += 1;
                }
            }
            stream.finish()?;
            let report = ModeReport {
                mode: m,
                columns: col,
                converged_columns: converged,
                mean_inner_iters: inner as f64 / col as f64,
            };
            Ok((Tensor3::fold(&bm, m, dims)?, Tensor3::fold(&fm, m, dims)?, report))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / per_mode.len() as f64;
    let mut background = Tensor3::zeros(dims)?;
    let mut foreground = Tensor3::zeros(dims)?;
    let mut reports = Vec::with_capacity(per_mode.len());
    for (b, f, rep) in per_mode {
        background.axpy(scale, &b);
        foreground.axpy(scale, &f);
        reports.push(rep);
    }
    Ok(OnlineDecomposition { background, foreground, modes: reports })
}

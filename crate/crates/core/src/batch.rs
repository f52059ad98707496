//! Batch ADMM solver for the spatial-temporal regularized tensor RPCA
//! objective
//!
//! ```text
//! min ‖B‖_TNN + λ‖F‖₁ + γ₁ Σ_j h_jᵀ L_s^(j) h_j + γ₂ Tr(T₍₃₎ L_t T₍₃₎ᵀ)
//! s.t. X = B + F,  H = F,  T = F
//! ```
//!
//! Each iteration updates B (t-SVT), T (temporal Laplacian solve), H
//! (per-frame spatial Laplacian solve), F (soft-thresholding), then the
//! multipliers and the penalty μ.
//!
//! The F step minimizes
//! `λ‖F‖₁ + μ/2 (‖F − A‖² + ‖F − C‖² + ‖F − D‖²)` with
//! `A = X − B + Y₁/μ`, `C = H + Y₂/μ`, `D = T + Y₃/μ`. Completing the square
//! gives `3μ/2 ‖F − (A + C + D)/3‖²`, hence
//! `F = soft((A + C + D)/3, λ/(3μ))`.
//!
//! The T step sets the gradient of
//! `γ₂ Tr(T₍₃₎ L_t T₍₃₎ᵀ) + μ/2 ‖T₍₃₎ − F₍₃₎ + Y₃₍₃₎/μ‖²` to zero:
//! `T₍₃₎ (γ₂(L_t + L_tᵀ) + μI) = μF₍₃₎ − Y₃₍₃₎`.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{temporal_laplacian, GraphConfig, SparseLaplacian, SpatialLaplacians};
use crate::linsolve::{ShiftedSolver, DEFAULT_DENSE_LIMIT};
use crate::tensor::{default_lambda, soft_tensor, tsvt, Mode, Tensor3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    /// Sparsity weight; `None` resolves to [`default_lambda`].
    pub lambda: Option<f64>,
    /// Spatial graph weight.
    pub gamma1: f64,
    /// Temporal graph weight.
    pub gamma2: f64,
    pub mu0: f64,
    pub mu_max: f64,
    pub rho: f64,
    /// Tolerance on the relative KKT residuals.
    pub zeta: f64,
    pub max_iters: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            lambda: None,
            gamma1: 0.9,
            gamma2: 1.5,
            mu0: 0.01,
            mu_max: 10.0,
            rho: 1.2,
            zeta: 1e-3,
            max_iters: 500,
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::arg(format!("{name} must be positive, got {v}")))
            }
        };
        pos("mu0", self.mu0)?;
        pos("mu_max", self.mu_max)?;
        pos("zeta", self.zeta)?;
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::arg(format!("lambda must be >= 0, got {l}")));
            }
        }
        if !(self.rho > 1.0) {
            return Err(Error::arg(format!("rho must exceed 1, got {}", self.rho)));
        }
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0) {
            return Err(Error::arg("gamma1 and gamma2 must be >= 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::arg("max_iters must be >= 1"));
        }
        Ok(())
    }

    pub fn resolved_lambda(&self, (w, h, n): (usize, usize, usize)) -> f64 {
        self.lambda.unwrap_or_else(|| default_lambda((w, h, n)))
    }
}

/// Relative KKT residuals of one iteration, each divided by `‖X‖_F`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖X − B − F‖`
    pub primal: f64,
    /// `‖Bᵏ − Bᵏ⁺¹‖`
    pub delta_b: f64,
    /// `‖Fᵏ − Fᵏ⁺¹‖`
    pub delta_f: f64,
    /// `‖F − H‖`
    pub spatial: f64,
    /// `‖F − T‖`
    pub temporal: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal
            .max(self.delta_b)
            .max(self.delta_f)
            .max(self.spatial)
            .max(self.temporal)
    }

    pub fn all_below(&self, zeta: f64) -> bool {
        self.max() <= zeta
    }
}

#[derive(Clone, Debug)]
pub struct AdmmState {
    pub b: Tensor3,
    pub f: Tensor3,
    pub h: Tensor3,
    pub t: Tensor3,
    pub y1: Tensor3,
    pub y2: Tensor3,
    pub y3: Tensor3,
    pub mu: f64,
    pub iter: usize,
    pub residuals: Vec<Residuals>,
}

impl AdmmState {
    /// All-zero initialization.
    pub fn new(dims: (usize, usize, usize), mu0: f64) -> Result<Self> {
        let z = Tensor3::zeros(dims)?;
        Ok(AdmmState {
            b: z.clone(),
            f: z.clone(),
            h: z.clone(),
            t: z.clone(),
            y1: z.clone(),
            y2: z.clone(),
            y3: z,
            mu: mu0,
            iter: 0,
            residuals: Vec::new(),
        })
    }

    fn all_finite(&self) -> bool {
        [&self.b, &self.f, &self.h, &self.t, &self.y1, &self.y2, &self.y3]
            .iter()
            .all(|t| t.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub background: Tensor3,
    pub foreground: Tensor3,
    pub iters: usize,
    pub converged: bool,
    pub final_residuals: Residuals,
    pub trace: Vec<Residuals>,
}

/// Graph Laplacians used by a solve. A `None` term is treated as `L = 0`.
#[derive(Clone, Debug, Default)]
pub struct Graphs {
    pub temporal: Option<SparseLaplacian>,
    pub spatial: Option<SpatialLaplacians>,
}

impl Graphs {
    pub fn none() -> Self {
        Graphs::default()
    }

    /// Builds the graphs whose weights are nonzero in `cfg`.
    pub fn build(x: &Tensor3, cfg: &BatchConfig, gcfg: &GraphConfig, shared_spatial: bool) -> Result<Self> {
        let n = x.dims().2;
        let temporal = if cfg.gamma2 > 0.0 && n >= 2 {
            Some(temporal_laplacian(x, gcfg)?)
        } else {
            None
        };
        let spatial = if cfg.gamma1 > 0.0 {
            Some(SpatialLaplacians::build(x, gcfg, shared_spatial)?)
        } else {
            None
        };
        Ok(Graphs { temporal, spatial })
    }
}

/// Linear systems of the T and H steps, factored once per solve.
#[derive(Clone, Debug)]
pub struct Systems {
    temporal: Option<ShiftedSolver>,
    spatial: Option<SpatialSystems>,
}

#[derive(Clone, Debug)]
enum SpatialSystems {
    PerSlice(Vec<ShiftedSolver>),
    Shared(ShiftedSolver),
}

impl Systems {
    pub fn prepare(graphs: &Graphs, dims: (usize, usize, usize), dense_limit: usize) -> Result<Self> {
        let (w, h, n) = dims;
        let temporal = match &graphs.temporal {
            Some(l) if l.n() != n => {
                return Err(Error::arg(format!("temporal Laplacian is {}x{}, expected {n}x{n}", l.n(), l.n())))
            }
            Some(l) => Some(ShiftedSolver::new(l, dense_limit.max(n))),
            None => None,
        };
        let check = |l: &SparseLaplacian| {
            if l.n() != w * h {
                Err(Error::arg(format!("spatial Laplacian is {}x{}, expected {}x{}", l.n(), l.n(), w * h, w * h)))
            } else {
                Ok(())
            }
        };
        let spatial = match &graphs.spatial {
            None => None,
            Some(SpatialLaplacians::Shared(l)) => {
                check(l)?;
                Some(SpatialSystems::Shared(ShiftedSolver::new(l, dense_limit)))
            }
            Some(SpatialLaplacians::PerSlice(ls)) => {
                if ls.len() != n {
                    return Err(Error::arg(format!("{} spatial Laplacians for {n} frames", ls.len())));
                }
                ls.iter().try_for_each(check)?;
                Some(SpatialSystems::PerSlice(
                    ls.par_iter().map(|l| ShiftedSolver::new(l, dense_limit)).collect(),
                ))
            }
        };
        Ok(Systems { temporal, spatial })
    }
}

/// `B ← tsvt(X − F + Y₁/μ, 1/μ)`
pub fn update_b(state: &AdmmState, x: &Tensor3) -> Result<Tensor3> {
    let mu = state.mu;
    let mut z = x.sub(&state.f);
    z.axpy(1.0 / mu, &state.y1);
    tsvt(&z, 1.0 / mu)
}

/// `T₍₃₎ ← (μF₍₃₎ − Y₃₍₃₎)(2γ₂L_t + μI)⁻¹`
pub fn update_t(state: &AdmmState, cfg: &BatchConfig, systems: &Systems) -> Result<Tensor3> {
    let mu = state.mu;
    let mut target = state.f.scale(mu);
    target.axpy(-1.0, &state.y3);
    let solver = match (&systems.temporal, cfg.gamma2 > 0.0) {
        (Some(s), true) => s,
        _ => return Ok(target.scale(1.0 / mu)),
    };
    let dims = state.f.dims();
    let rhs = target.unfold(Mode::Three).transpose();
    let warm = state.t.unfold(Mode::Three).transpose();
    let sol = solver.solve(2.0 * cfg.gamma2, mu, &rhs, Some(&warm))?;
    Tensor3::fold(&sol.transpose(), Mode::Three, dims)
}

/// Per frame `j`: `h_j ← (2γ₁L_s^(j) + μI)⁻¹ (μf_j − y₂,j)`.
pub fn update_h(state: &AdmmState, cfg: &BatchConfig, systems: &Systems) -> Result<Tensor3> {
    let mu = state.mu;
    let mut target = state.f.scale(mu);
    target.axpy(-1.0, &state.y2);
    let spatial = match (&systems.spatial, cfg.gamma1 > 0.0) {
        (Some(s), true) => s,
        _ => return Ok(target.scale(1.0 / mu)),
    };
    let dims = state.f.dims();
    let alpha = 2.0 * cfg.gamma1;
    let rhs = target.unfold(Mode::Three);
    let warm = state.h.unfold(Mode::Three);
    let sol = match spatial {
        SpatialSystems::Shared(s) => s.solve(alpha, mu, &rhs, Some(&warm))?,
        SpatialSystems::PerSlice(solvers) => {
            let cols: Vec<DMatrix<f64>> = solvers
                .par_iter()
                .enumerate()
                .map(|(k, s)| {
                    let b = rhs.columns(k, 1).into_owned();
                    let w0 = warm.columns(k, 1).into_owned();
                    s.solve(alpha, mu, &b, Some(&w0))
                })
                .collect::<Result<_>>()?;
            let mut m = DMatrix::zeros(rhs.nrows(), rhs.ncols());
            for (k, c) in cols.into_iter().enumerate() {
                m.set_column(k, &c.column(0));
            }
            m
        }
    };
    Tensor3::fold(&sol, Mode::Three, dims)
}

/// `F ← soft(((X − B + Y₁/μ) + (H + Y₂/μ) + (T + Y₃/μ)) / 3, λ/(3μ))`
pub fn update_f(state: &AdmmState, x: &Tensor3, lambda: f64) -> Tensor3 {
    let mu = state.mu;
    let mut m = x.sub(&state.b);
    m.axpy(1.0, &state.h);
    m.axpy(1.0, &state.t);
    let ysum = state.y1.add(&state.y2).add(&state.y3);
    m.axpy(1.0 / mu, &ysum);
    soft_tensor(&m.scale(1.0 / 3.0), lambda / (3.0 * mu))
}

/// Multiplier ascent and penalty increase.
pub fn update_duals(state: &mut AdmmState, x: &Tensor3, cfg: &BatchConfig) {
    let mu = state.mu;
    let r1 = x.sub(&state.b).sub(&state.f);
    state.y1.axpy(mu, &r1);
    state.y2.axpy(mu, &state.h.sub(&state.f));
    state.y3.axpy(mu, &state.t.sub(&state.f));
    state.mu = (cfg.rho * mu).min(cfg.mu_max);
}

/// KKT residuals of the current iterate relative to `‖X‖_F`, given the
/// previous `B` and `F`.
pub fn residuals(state: &AdmmState, x: &Tensor3, prev_b: &Tensor3, prev_f: &Tensor3) -> Residuals {
    let scale = {
        let s = x.norm_fro_sq().sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    Residuals {
        primal: x.sub(&state.b).sub(&state.f).norm_fro_sq().sqrt() / scale,
        delta_b: state.b.dist_sq(prev_b).sqrt() / scale,
        delta_f: state.f.dist_sq(prev_f).sqrt() / scale,
        spatial: state.f.dist_sq(&state.h).sqrt() / scale,
        temporal: state.f.dist_sq(&state.t).sqrt() / scale,
    }
}

pub fn check_convergence(state: &AdmmState, x: &Tensor3, prev_b: &Tensor3, prev_f: &Tensor3, cfg: &BatchConfig) -> bool {
    residuals(state, x, prev_b, prev_f).all_below(cfg.zeta)
}

/// One full ADMM iteration; returns the residuals it produced.
pub fn step(state: &mut AdmmState, x: &Tensor3, cfg: &BatchConfig, lambda: f64, systems: &Systems) -> Result<Residuals> {
    let prev_b = state.b.clone();
    let prev_f = state.f.clone();
    state.b = update_b(state, x)?;
    state.t = update_t(state, cfg, systems)?;
    state.h = update_h(state, cfg, systems)?;
    state.f = update_f(state, x, lambda);
    update_duals(state, x, cfg);
    state.iter += 1;
    if !state.all_finite() {
        return Err(Error::Numeric(format!("non-finite iterate at iteration {}", state.iter)));
    }
    let r = residuals(state, x, &prev_b, &prev_f);
    state.residuals.push(r);
    Ok(r)
}

/// Runs the batch solver until every relative residual is at most `ζ` or
/// `max_iters` is reached.
pub fn solve_batch(x: &Tensor3, cfg: &BatchConfig, graphs: &Graphs) -> Result<Decomposition> {
    solve_batch_with(x, cfg, graphs, DEFAULT_DENSE_LIMIT)
}

pub fn solve_batch_with(x: &Tensor3, cfg: &BatchConfig, graphs: &Graphs, dense_limit: usize) -> Result<Decomposition> {
    cfg.validate()?;
    if !x.is_finite() {
        return Err(Error::arg("input tensor contains non-finite values"));
    }
    let dims = x.dims();
    let mut cfg = cfg.clone();
    if dims.2 == 1 && cfg.gamma2 > 0.0 {
        warn!("single-frame input: temporal regularization disabled");
        cfg.gamma2 = 0.0;
    }
    let lambda = cfg.resolved_lambda(dims);
    let systems = Systems::prepare(graphs, dims, dense_limit)?;
    let mut state = AdmmState::new(dims, cfg.mu0)?;
    let mut converged = false;
    let mut last = Residuals::default();
    while state.iter < cfg.max_iters {
        last = step(&mut state, x, &cfg, lambda, &systems)?;
        if last.all_below(cfg.zeta) {
            converged = true;
            break;
        }
    }
    Ok(Decomposition {
        background: state.b,
        foreground: state.f,
        iters: state.iter,
        converged,
        final_residuals: last,
        trace: state.residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, KnnGraph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: (usize, usize, usize), seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn random_laplacian(n: usize, seed: u64) -> SparseLaplacian {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for p in 0..n {
            for q in p + 1..n {
                if rng.random_bool(0.4) {
                    edges.push((p, q, rng.random_range(0.1..1.0)));
                }
            }
        }
        laplacian(&KnnGraph::from_edges(n, edges).unwrap())
    }

    fn random_state(dims: (usize, usize, usize), seed: u64, mu: f64) -> AdmmState {
        let mut s = AdmmState::new(dims, mu).unwrap();
        s.b = random(dims, seed);
        s.f = random(dims, seed + 1);
        s.h = random(dims, seed + 2);
        s.t = random(dims, seed + 3);
        s.y1 = random(dims, seed + 4);
        s.y2 = random(dims, seed + 5);
        s.y3 = random(dims, seed + 6);
        s
    }

    #[test]
    fn defaults_match_reference_settings() {
        let c = BatchConfig::default();
        assert_eq!((c.gamma1, c.gamma2, c.mu0, c.mu_max, c.rho, c.zeta), (0.9, 1.5, 0.01, 10.0, 1.2, 1e-3));
        assert!((c.resolved_lambda((16, 8, 4)) - 0.125).abs() < 1e-15);
        assert!(BatchConfig { rho: 1.0, ..c.clone() }.validate().is_err());
        assert!(BatchConfig { mu0: 0.0, ..c.clone() }.validate().is_err());
        assert!(BatchConfig { gamma1: -1.0, ..c }.validate().is_err());
    }

    #[test]
    fn b_step_is_zero_when_target_vanishes() {
        let x = random((3, 3, 2), 1);
        let mut s = AdmmState::new(x.dims(), 0.5).unwrap();
        s.f = x.clone();
        assert!(update_b(&s, &x).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn b_step_shrinks_top_singular_value() {
        // n = 1, X = s u vᵀ with s = 5, μ = 2 => B = (5 - 0.5) u vᵀ
        let u = [0.6, 0.8, 0.0];
        let v = [0.0, 1.0];
        let x = Tensor3::from_fn((3, 2, 1), |i, j, _| 5.0 * u[i] * v[j]).unwrap();
        let s = AdmmState::new(x.dims(), 2.0).unwrap();
        let b = update_b(&s, &x).unwrap();
        let expect = x.scale(4.5 / 5.0);
        assert!(b.dist_sq(&expect).sqrt() < 1e-12);
    }

    #[test]
    fn t_and_h_reduce_without_graphs() {
        let dims = (3, 2, 4);
        let s = random_state(dims, 10, 0.7);
        let expect_t = s.f.sub(&s.y3.scale(1.0 / 0.7));
        let expect_h = s.f.sub(&s.y2.scale(1.0 / 0.7));
        let none = Systems::prepare(&Graphs::none(), dims, 100).unwrap();
        let cfg0 = BatchConfig { gamma1: 0.0, gamma2: 0.0, ..Default::default() };
        assert!(update_t(&s, &cfg0, &none).unwrap().dist_sq(&expect_t) < 1e-24);
        assert!(update_h(&s, &cfg0, &none).unwrap().dist_sq(&expect_h) < 1e-24);
        // zero Laplacians with positive weights
        let zero = Graphs {
            temporal: Some(SparseLaplacian::zeros(4)),
            spatial: Some(SpatialLaplacians::Shared(SparseLaplacian::zeros(6))),
        };
        let sys = Systems::prepare(&zero, dims, 100).unwrap();
        let cfg = BatchConfig::default();
        assert!(update_t(&s, &cfg, &sys).unwrap().dist_sq(&expect_t) < 1e-24);
        assert!(update_h(&s, &cfg, &sys).unwrap().dist_sq(&expect_h) < 1e-24);
    }

    #[test]
    fn t_step_stationary() {
        let dims = (4, 4, 3);
        let mut s = random_state(dims, 20, 0.9);
        let lt = random_laplacian(3, 21);
        let graphs = Graphs { temporal: Some(lt.clone()), spatial: None };
        let cfg = BatchConfig { gamma2: 1.5, ..Default::default() };
        s.t = update_t(&s, &cfg, &Systems::prepare(&graphs, dims, 100).unwrap()).unwrap();
        let objective = |t: &Tensor3| {
            let t3 = t.unfold(Mode::Three);
            let quad = (&t3 * lt.to_dense() * t3.transpose()).trace();
            let mut r = t.sub(&s.f);
            r.axpy(1.0 / s.mu, &s.y3);
            cfg.gamma2 * quad + 0.5 * s.mu * r.norm_fro_sq()
        };
        let g = fd_gradient_norm(&s.t, objective);
        assert!(g < 1e-6, "gradient norm {g}");
    }

    #[test]
    fn h_step_stationary() {
        let dims = (4, 4, 3);
        let mut s = random_state(dims, 30, 1.3);
        let ls: Vec<_> = (0..3).map(|k| random_laplacian(16, 31 + k)).collect();
        let graphs = Graphs { temporal: None, spatial: Some(SpatialLaplacians::PerSlice(ls.clone())) };
        let cfg = BatchConfig { gamma1: 0.9, ..Default::default() };
        for limit in [100, 4] {
            s.h = update_h(&s, &cfg, &Systems::prepare(&graphs, dims, limit).unwrap()).unwrap();
            let objective = |h: &Tensor3| {
                let quad: f64 = (0..3)
                    .map(|k| {
                        let v = nalgebra::DVector::from_vec(h.frame_vector(k));
                        (v.transpose() * ls[k].to_dense() * &v)[(0, 0)]
                    })
                    .sum();
                let mut r = h.sub(&s.f);
                r.axpy(1.0 / s.mu, &s.y2);
                cfg.gamma1 * quad + 0.5 * s.mu * r.norm_fro_sq()
            };
            let g = fd_gradient_norm(&s.h, objective);
            assert!(g < 1e-6, "gradient norm {g} (dense limit {limit})");
        }
    }

    /// Central finite-difference gradient norm of `f` at `x`.
    fn fd_gradient_norm(x: &Tensor3, f: impl Fn(&Tensor3) -> f64) -> f64 {
        let eps = 1e-6;
        let mut sq = 0.0;
        for idx in 0..x.as_slice().len() {
            let mut p = x.clone();
            p.as_mut_slice()[idx] += eps;
            let mut m = x.clone();
            m.as_mut_slice()[idx] -= eps;
            let g = (f(&p) - f(&m)) / (2.0 * eps);
            sq += g * g;
        }
        sq.sqrt()
    }

    #[test]
    fn f_step_cases() {
        let dims = (2, 2, 2);
        let x = random(dims, 40);
        let mut s = AdmmState::new(dims, 0.4).unwrap();
        s.b = x.clone();
        assert!(update_f(&s, &x, 0.3).max_abs() == 0.0);

        let s = random_state(dims, 41, 0.4);
        let mut m = x.sub(&s.b).add(&s.h).add(&s.t);
        m.axpy(1.0 / s.mu, &s.y1.add(&s.y2).add(&s.y3));
        assert!(update_f(&s, &x, 0.0).dist_sq(&m.scale(1.0 / 3.0)) < 1e-28);
    }

    #[test]
    fn f_step_matches_scalar_grid() {
        // scalar instance of the F-terms of the augmented Lagrangian
        let dims = (1, 1, 1);
        let x = Tensor3::from_vec(dims, vec![0.9]).unwrap();
        let mut s = AdmmState::new(dims, 0.8).unwrap();
        s.b = Tensor3::from_vec(dims, vec![0.2]).unwrap();
        s.h = Tensor3::from_vec(dims, vec![0.5]).unwrap();
        s.t = Tensor3::from_vec(dims, vec![-0.1]).unwrap();
        s.y1 = Tensor3::from_vec(dims, vec![0.05]).unwrap();
        s.y2 = Tensor3::from_vec(dims, vec![-0.2]).unwrap();
        s.y3 = Tensor3::from_vec(dims, vec![0.1]).unwrap();
        let lambda = 0.25;
        let mu = s.mu;
        let obj = |f: f64| {
            lambda * f.abs()
                + 0.5 * mu * (0.2 + f - 0.9 - 0.05 / mu).powi(2)
                + 0.5 * mu * (f - 0.5 - -0.2 / mu).powi(2)
                + 0.5 * mu * (f - -0.1 - 0.1 / mu).powi(2)
        };
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=2_000_000 {
            let f = -2.0 + 4.0 * i as f64 / 2_000_000.0;
            let v = obj(f);
            if v < best.0 {
                best = (v, f);
            }
        }
        let got = update_f(&s, &x, lambda).get(0, 0, 0);
        assert!((got - best.1).abs() < 1e-6, "got {got}, grid {}", best.1);
    }

    #[test]
    fn duals_unchanged_at_feasible_point() {
        let dims = (2, 3, 2);
        let x = random(dims, 50);
        let mut s = random_state(dims, 51, 0.5);
        s.f = random(dims, 52);
        s.b = x.sub(&s.f);
        s.h = s.f.clone();
        s.t = s.f.clone();
        let before = s.clone();
        let cfg = BatchConfig::default();
        update_duals(&mut s, &x, &cfg);
        assert_eq!(s.y1, before.y1);
        assert_eq!(s.y2, before.y2);
        assert_eq!(s.y3, before.y3);
        assert!((s.mu - 0.6).abs() < 1e-15);

        let mut s = before;
        s.mu = cfg.mu_max;
        update_duals(&mut s, &x, &cfg);
        assert_eq!(s.mu, cfg.mu_max);
    }

    #[test]
    fn first_iteration_from_zero() {
        // with B = F = 0 after the primal steps, Y1 = mu0 * X
        let dims = (2, 2, 2);
        let x = random(dims, 60);
        let mut s = AdmmState::new(dims, 0.01).unwrap();
        update_duals(&mut s, &x, &BatchConfig::default());
        assert!(s.y1.dist_sq(&x.scale(0.01)) < 1e-30);

        // a full first step from zeros on nonzero X has not converged
        let mut s = AdmmState::new(dims, 0.01).unwrap();
        let cfg = BatchConfig { gamma1: 0.0, gamma2: 0.0, ..Default::default() };
        let sys = Systems::prepare(&Graphs::none(), dims, 100).unwrap();
        let prev_b = s.b.clone();
        let prev_f = s.f.clone();
        step(&mut s, &x, &cfg, 0.5, &sys).unwrap();
        assert!(!check_convergence(&s, &x, &prev_b, &prev_f, &cfg));
    }

    #[test]
    fn fixed_point_converged() {
        let dims = (2, 2, 2);
        let x = random(dims, 70);
        let mut s = AdmmState::new(dims, 1.0).unwrap();
        s.b = x.clone();
        let z = Tensor3::zeros(dims).unwrap();
        assert!(check_convergence(&s, &x, &x, &z, &BatchConfig::default()));
    }

    #[test]
    fn rejects_non_finite_input() {
        let mut x = random((2, 2, 2), 80);
        x.set(0, 0, 0, f64::NAN);
        assert!(solve_batch(&x, &BatchConfig::default(), &Graphs::none()).is_err());
    }

    #[test]
    fn max_iters_reports_not_converged() {
        let x = random((4, 4, 3), 81);
        let cfg = BatchConfig { max_iters: 2, gamma1: 0.0, gamma2: 0.0, ..Default::default() };
        let d = solve_batch(&x, &cfg, &Graphs::none()).unwrap();
        assert_eq!(d.iters, 2);
        assert!(!d.converged);
    }

    #[test]
    fn single_frame_allowed() {
        let x = random((4, 4, 1), 82);
        let cfg = BatchConfig { gamma1: 0.0, ..Default::default() };
        let d = solve_batch(&x, &cfg, &Graphs::none()).unwrap();
        assert!(d.background.is_finite());
    }

    #[test]
    fn mu_monotone_and_capped() {
        let x = random((4, 4, 3), 83);
        let cfg = BatchConfig { gamma1: 0.0, gamma2: 0.0, max_iters: 60, zeta: 1e-30, ..Default::default() };
        let sys = Systems::prepare(&Graphs::none(), x.dims(), 100).unwrap();
        let mut s = AdmmState::new(x.dims(), cfg.mu0).unwrap();
        let mut last = s.mu;
        for _ in 0..60 {
            step(&mut s, &x, &cfg, 0.3, &sys).unwrap();
            assert!(s.mu >= last && s.mu <= cfg.mu_max);
            last = s.mu;
        }
        assert_eq!(s.mu, cfg.mu_max);
    }
}

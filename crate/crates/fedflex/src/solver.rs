//! Dense primal-dual interior-point solver for LPs and convex QPs.
//!
//! Solves programs of the form
//!
//! ```text
//!     minimize   1/2 xᵀQx + cᵀx
//!     subject to A x = b
//!                G x ≤ h
//! ```
//!
//! with a Mehrotra predictor-corrector method on the slack-augmented KKT
//! system. The same code path covers LPs (`Q` absent) and convex QPs, which
//! keeps multiplier quality uniform — the implicit-differentiation layers
//! downstream consume the multipliers directly.
//!
//! Everything is dense. At desk scale (a few hundred to a few thousand
//! variables) one LU of the reduced KKT matrix per iteration is cheap, and
//! the augmented-system form handles free variables and PSD-but-singular
//! `Q` without the conditioning trouble of normal equations.
//!
//! Solves are pure functions of their inputs: no RNG, no global state, so
//! identical inputs give bit-identical outputs on one platform and solver
//! calls can run concurrently.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::solve::{FactorizeInto, LUFactorized, Solve};

use crate::{Error, Result};

/// Default KKT residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// A linear or convex quadratic program in standard inequality form.
#[derive(Debug, Clone)]
pub struct ConeProgram {
    /// Linear objective term `c`.
    pub objective: Array1<f64>,
    /// Optional symmetric PSD quadratic term `Q`.
    pub quadratic: Option<Array2<f64>>,
    /// Equality rows `A` (may have zero rows).
    pub eq_mat: Array2<f64>,
    /// Equality right-hand side `b`.
    pub eq_rhs: Array1<f64>,
    /// Inequality rows `G`, sense `≤`.
    pub ineq_mat: Array2<f64>,
    /// Inequality right-hand side `h`.
    pub ineq_rhs: Array1<f64>,
}

impl ConeProgram {
    /// Builds an LP `min cᵀx s.t. Ax = b, Gx ≤ h`.
    pub fn lp(
        objective: Array1<f64>,
        eq_mat: Array2<f64>,
        eq_rhs: Array1<f64>,
        ineq_mat: Array2<f64>,
        ineq_rhs: Array1<f64>,
    ) -> Self {
        Self {
            objective,
            quadratic: None,
            eq_mat,
            eq_rhs,
            ineq_mat,
            ineq_rhs,
        }
    }

    /// Builds a QP `min ½xᵀQx + cᵀx s.t. Ax = b, Gx ≤ h`.
    pub fn qp(
        quadratic: Array2<f64>,
        objective: Array1<f64>,
        eq_mat: Array2<f64>,
        eq_rhs: Array1<f64>,
        ineq_mat: Array2<f64>,
        ineq_rhs: Array1<f64>,
    ) -> Self {
        Self {
            objective,
            quadratic: Some(quadratic),
            eq_mat,
            eq_rhs,
            ineq_mat,
            ineq_rhs,
        }
    }

    /// An LP with inequality constraints only.
    pub fn lp_ineq(objective: Array1<f64>, ineq_mat: Array2<f64>, ineq_rhs: Array1<f64>) -> Self {
        let n = objective.len();
        Self::lp(
            objective,
            Array2::zeros((0, n)),
            Array1::zeros(0),
            ineq_mat,
            ineq_rhs,
        )
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.eq_mat.ncols() != n || self.ineq_mat.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "constraint matrices have {} / {} columns, objective has {n} entries",
                self.eq_mat.ncols(),
                self.ineq_mat.ncols()
            )));
        }
        if self.eq_mat.nrows() != self.eq_rhs.len() {
            return Err(Error::DimensionMismatch(
                "equality rows vs rhs length".into(),
            ));
        }
        if self.ineq_mat.nrows() != self.ineq_rhs.len() {
            return Err(Error::DimensionMismatch(
                "inequality rows vs rhs length".into(),
            ));
        }
        if let Some(q) = &self.quadratic {
            if q.dim() != (n, n) {
                return Err(Error::DimensionMismatch("quadratic term shape".into()));
            }
            let mut asym = 0.0_f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    asym = asym.max((q[[i, j]] - q[[j, i]]).abs());
                }
            }
            if asym > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "quadratic term asymmetric by {asym:e}"
                )));
            }
        }
        Ok(())
    }

    /// Objective value at `x`.
    pub fn objective_value(&self, x: &Array1<f64>) -> f64 {
        let lin = self.objective.dot(x);
        match &self.quadratic {
            Some(q) => lin + 0.5 * x.dot(&q.dot(x)),
            None => lin,
        }
    }
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericFailure,
}

/// Max-norm KKT residuals of a returned point.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    /// ‖Qx + c + Aᵀy + Gᵀz‖∞
    pub stationarity: f64,
    /// max(‖Ax − b‖∞, max(Gx − h)₊)
    pub primal: f64,
    /// max(0, −min z)
    pub dual: f64,
    /// max |zᵢ (Gx − h)ᵢ|
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

/// Primal-dual solution of a [`ConeProgram`].
#[derive(Debug, Clone)]
pub struct PrimalDualSolution {
    pub status: SolveStatus,
    pub primal: Array1<f64>,
    /// Multipliers of the equality rows, in row order, for the Lagrangian
    /// `½xᵀQx + cᵀx + yᵀ(Ax − b) + zᵀ(Gx − h)`.
    pub eq_multipliers: Array1<f64>,
    /// Multipliers of the inequality rows (≥ 0), in row order.
    pub ineq_multipliers: Array1<f64>,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

impl PrimalDualSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Lagrangian dual objective `−bᵀy − hᵀz` (LP case), a lower bound on
    /// the optimal value when the point is dual feasible.
    pub fn dual_objective(&self, prog: &ConeProgram) -> f64 {
        let mut val = -prog.eq_rhs.dot(&self.eq_multipliers) - prog.ineq_rhs.dot(&self.ineq_multipliers);
        if let Some(q) = &prog.quadratic {
            val -= 0.5 * self.primal.dot(&q.dot(&self.primal));
        }
        val
    }
}

struct Iterate {
    x: Array1<f64>,
    y: Array1<f64>,
    z: Array1<f64>,
    s: Array1<f64>,
}

fn residuals_of(prog: &ConeProgram, x: &Array1<f64>, y: &Array1<f64>, z: &Array1<f64>) -> KktResiduals {
    let n = prog.num_vars();
    let mut rd = prog.objective.clone();
    if let Some(q) = &prog.quadratic {
        rd = rd + q.dot(x);
    }
    if prog.eq_mat.nrows() > 0 {
        rd = rd + prog.eq_mat.t().dot(y);
    }
    if prog.ineq_mat.nrows() > 0 {
        rd = rd + prog.ineq_mat.t().dot(z);
    }
    debug_assert_eq!(rd.len(), n);

    let mut primal = 0.0_f64;
    if prog.eq_mat.nrows() > 0 {
        let rp = prog.eq_mat.dot(x) - &prog.eq_rhs;
        primal = primal.max(crate::linalg::max_abs(&rp));
    }
    let mut comp = 0.0_f64;
    if prog.ineq_mat.nrows() > 0 {
        let slack = prog.ineq_mat.dot(x) - &prog.ineq_rhs;
        for (zi, gi) in z.iter().zip(slack.iter()) {
            primal = primal.max(*gi);
            comp = comp.max((zi * gi).abs());
        }
    }
    let dual = z.iter().fold(0.0_f64, |acc, zi| acc.max(-zi));
    KktResiduals {
        stationarity: crate::linalg::max_abs(&rd),
        primal: primal.max(0.0),
        dual,
        complementarity: comp,
    }
}

/// Max step `α ∈ (0, 1]` keeping `v + α dv > 0` componentwise.
fn max_step(v: &Array1<f64>, dv: &Array1<f64>) -> f64 {
    let mut alpha = 1.0_f64;
    for (vi, di) in v.iter().zip(dv.iter()) {
        if *di < 0.0 {
            alpha = alpha.min(-vi / di);
        }
    }
    alpha
}

struct KktFactor {
    matrix: Array2<f64>,
    factor: LUFactorized<ndarray::OwnedRepr<f64>>,
    /// Jacobi equilibration: the factorization is of `D K D`.
    scaling: Array1<f64>,
    n: usize,
}

impl KktFactor {
    /// Factors the reduced KKT matrix
    /// `[[Q + GᵀWG + δI, Aᵀ], [A, −δI]]` with `W = diag(z/s)`.
    fn new(prog: &ConeProgram, w: &Array1<f64>, delta: f64) -> Result<Self> {
        let n = prog.num_vars();
        let me = prog.eq_mat.nrows();
        let dim = n + me;
        let mut k = Array2::<f64>::zeros((dim, dim));
        // top-left block
        if let Some(q) = &prog.quadratic {
            k.slice_mut(s![..n, ..n]).assign(q);
        }
        if prog.ineq_mat.nrows() > 0 {
            // Gᵀ diag(w) G
            let mut gw = prog.ineq_mat.clone();
            for (mut row, wi) in gw.rows_mut().into_iter().zip(w.iter()) {
                row *= *wi;
            }
            let gtwg = prog.ineq_mat.t().dot(&gw);
            let mut tl = k.slice_mut(s![..n, ..n]);
            tl += &gtwg;
        }
        for i in 0..n {
            k[[i, i]] += delta;
        }
        if me > 0 {
            k.slice_mut(s![..n, n..]).assign(&prog.eq_mat.t());
            k.slice_mut(s![n.., ..n]).assign(&prog.eq_mat);
            for i in 0..me {
                k[[n + i, n + i]] = -delta;
            }
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure("KKT matrix has non-finite entries".into()));
        }
        let matrix = k.clone();
        // Jacobi equilibration: barrier weights spread the diagonal over
        // many orders of magnitude near convergence; scaling to a unit-ish
        // diagonal keeps the factorization inside f64 pivot range. The
        // refinement passes in `solve` run against the original matrix.
        let scaling = Array1::from_shape_fn(dim, |i| {
            let rowmax = k.row(i).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            1.0 / rowmax.max(1e-12).sqrt()
        });
        for i in 0..dim {
            for j in 0..dim {
                k[[i, j]] *= scaling[i] * scaling[j];
            }
        }
        // Regularize the equilibrated matrix, where the shift is meaningful
        // against a unit-ish diagonal; quasi-definite signs keep the
        // factorization stable. Refinement corrects the perturbation.
        for i in 0..dim {
            k[[i, i]] += if i < n { delta } else { -delta };
        }
        let factor = k
            .factorize_into()
            .map_err(|e| Error::NumericFailure(format!("KKT factorization: {e}")))?;
        Ok(Self {
            matrix,
            factor,
            scaling,
            n,
        })
    }

    /// Solves for (dx, dy) given the compressed right-hand side, with one
    /// pass of iterative refinement to hold accuracy when the barrier
    /// weights are extreme near convergence.
    fn solve(&self, rx: &Array1<f64>, ry: &Array1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let mut rhs = Array1::zeros(self.n + ry.len());
        rhs.slice_mut(s![..self.n]).assign(rx);
        rhs.slice_mut(s![self.n..]).assign(ry);
        let scaled_solve = |r: &Array1<f64>| -> Result<Array1<f64>> {
            let scaled = r * &self.scaling;
            let sol = self
                .factor
                .solve(&scaled)
                .map_err(|e| Error::NumericFailure(format!("KKT solve: {e}")))?;
            Ok(sol * &self.scaling)
        };
        let mut sol = scaled_solve(&rhs)?;
        for _ in 0..2 {
            let resid = &rhs - &self.matrix.dot(&sol);
            match scaled_solve(&resid) {
                Ok(corr) => sol = sol + corr,
                Err(_) => break,
            }
        }
        Ok((
            sol.slice(s![..self.n]).to_owned(),
            sol.slice(s![self.n..]).to_owned(),
        ))
    }
}

/// Solves the program to the requested KKT tolerance.
///
/// Returns `Err` only for malformed inputs; solver outcomes (including
/// infeasibility and unboundedness) are reported in-band via
/// [`PrimalDualSolution::status`].
pub fn solve(prog: &ConeProgram, tol: f64) -> Result<PrimalDualSolution> {
    prog.validate()?;
    solve_inner(prog, tol, true)
}

/// Convenience wrapper using [`DEFAULT_TOL`].
pub fn solve_default(prog: &ConeProgram) -> Result<PrimalDualSolution> {
    solve(prog, DEFAULT_TOL)
}

fn solve_inner(prog: &ConeProgram, tol: f64, classify: bool) -> Result<PrimalDualSolution> {
    let n = prog.num_vars();
    let me = prog.eq_mat.nrows();
    let mi = prog.ineq_mat.nrows();
    let max_iter = 120usize;
    let delta = 1e-11;

    if mi == 0 {
        return solve_equality_only(prog, tol);
    }
    if prog.quadratic.is_none() {
        // LPs go through the self-dual embedding: the flexibility polytopes
        // produce facet pairs that act as implied equalities, so the plain
        // feasible-interior path may not exist, while the embedded problem
        // always has one (and yields infeasibility certificates for free).
        return homogeneous_lp(prog, tol, classify);
    }

    // Starting point: x = 0, generous positive slacks, unit multipliers.
    let mut it = Iterate {
        x: Array1::zeros(n),
        y: Array1::zeros(me),
        z: Array1::ones(mi),
        s: prog.ineq_rhs.mapv(|hi| hi.abs().max(1.0) * 2.0),
    };

    let data_scale = 1.0_f64
        .max(crate::linalg::max_abs(&prog.ineq_rhs))
        .max(crate::linalg::max_abs(&prog.eq_rhs));

    let mut best: Option<(f64, Iterate, usize)> = None;
    let mut stalls = 0usize;
    let mut objective_diverged = false;

    for iter in 0..max_iter {
        // residuals of the slack form
        let mut rd = prog.objective.clone();
        if let Some(q) = &prog.quadratic {
            rd = rd + q.dot(&it.x);
        }
        if me > 0 {
            rd = rd + prog.eq_mat.t().dot(&it.y);
        }
        rd = rd + prog.ineq_mat.t().dot(&it.z);

        let rp = if me > 0 {
            prog.eq_mat.dot(&it.x) - &prog.eq_rhs
        } else {
            Array1::zeros(0)
        };
        let rg = prog.ineq_mat.dot(&it.x) + &it.s - &prog.ineq_rhs;
        let mu = it.z.dot(&it.s) / mi as f64;
        let comp_max = it
            .z
            .iter()
            .zip(it.s.iter())
            .fold(0.0_f64, |acc, (z, s)| acc.max(z * s));

        let rd_inf = crate::linalg::max_abs(&rd);
        let rp_inf = crate::linalg::max_abs(&rp);
        let rg_inf = crate::linalg::max_abs(&rg);
        let merit = rd_inf.max(rp_inf).max(rg_inf).max(comp_max);
        if std::env::var_os("FEDFLEX_SOLVER_TRACE").is_some() {
            eprintln!(
                "it {iter:3}  rd {rd_inf:9.2e}  rp {rp_inf:9.2e}  rg {rg_inf:9.2e}  mu {mu:9.2e}  comp {comp_max:9.2e}"
            );
        }

        if best.as_ref().map_or(true, |(m, _, _)| merit < *m) {
            best = Some((
                merit,
                Iterate {
                    x: it.x.clone(),
                    y: it.y.clone(),
                    z: it.z.clone(),
                    s: it.s.clone(),
                },
                iter,
            ));
        }

        if rd_inf <= tol && rp_inf <= tol && rg_inf <= tol && comp_max <= tol {
            let residuals = residuals_of(prog, &it.x, &it.y, &it.z);
            return Ok(PrimalDualSolution {
                status: SolveStatus::Optimal,
                primal: it.x,
                eq_multipliers: it.y,
                ineq_multipliers: it.z,
                residuals,
                iterations: iter,
            });
        }

        // Divergence heuristics: the objective plunging with feasibility in
        // hand, or iterates exploding while still infeasible.
        if classify
            && rp_inf <= 1e-6 * data_scale
            && rg_inf <= 1e-6 * data_scale
            && prog.objective_value(&it.x) < -1e9 * data_scale
        {
            objective_diverged = true;
        }
        let x_inf = crate::linalg::max_abs(&it.x);
        let z_inf = crate::linalg::max_abs(&it.z);
        if x_inf > 1e12 * data_scale || z_inf > 1e14 || mu > 1e18 {
            break;
        }

        let w = &it.z / &it.s;
        // Dynamic regularization: retry with a heavier diagonal when the
        // reduced matrix goes numerically singular (flat directions with
        // vanishing barrier weight near convergence).
        let mut kkt = None;
        let mut reg = delta;
        while reg <= 1e-4 {
            if let Ok(k) = KktFactor::new(prog, &w, reg) {
                kkt = Some(k);
                break;
            }
            reg *= 1e3;
        }
        let kkt = match kkt {
            Some(k) => k,
            None => {
                if std::env::var_os("FEDFLEX_SOLVER_TRACE").is_some() {
                    let err = KktFactor::new(prog, &w, delta).err();
                    eprintln!("  break: factorization failed at every regularization: {err:?}");
                }
                break;
            }
        };

        // Predictor (affine scaling) direction.
        let rc_aff = &it.z * &it.s;
        let (_, _, dz_a, ds_a) = match newton_step(prog, &kkt, &it, &w, &rd, &rp, &rg, &rc_aff) {
            Ok(d) => d,
            Err(_) => break,
        };
        let ap_aff = max_step(&it.s, &ds_a);
        let ad_aff = max_step(&it.z, &dz_a);
        let mu_aff = (&it.z + &(&dz_a * ad_aff)).dot(&(&it.s + &(&ds_a * ap_aff))) / mi as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(1e-8, 1.0);

        // Corrector.
        let rc = &rc_aff + &(&dz_a * &ds_a) - sigma * mu;
        let (dx, dy, dz, ds) = match newton_step(prog, &kkt, &it, &w, &rd, &rp, &rg, &rc) {
            Ok(d) => d,
            Err(_) => break,
        };

        // A common primal-dual step is slower than split steps on easy
        // problems but avoids runaway complementarity products on
        // ill-scaled ones.
        let frac = 0.995;
        let a = (frac * max_step(&it.s, &ds))
            .min(frac * max_step(&it.z, &dz))
            .min(1.0);
        let (ap, ad) = (a, a);
        if ap < 1e-13 && ad < 1e-13 {
            stalls += 1;
            if stalls >= 2 {
                if std::env::var_os("FEDFLEX_SOLVER_TRACE").is_some() {
                    eprintln!("  break: steps stalled");
                }
                break;
            }
        } else {
            stalls = 0;
        }

        it.x = &it.x + &(&dx * ap);
        it.s = &it.s + &(&ds * ap);
        it.y = &it.y + &(&dy * ad);
        it.z = &it.z + &(&dz * ad);
        // keep strictly positive to avoid Inf in the next weight ratio
        it.s.mapv_inplace(|v| v.max(1e-250));
        it.z.mapv_inplace(|v| v.max(1e-250));
    }

    if !classify {
        return finish_with_status(prog, best, SolveStatus::NumericFailure);
    }
    classify_failure(prog, tol, best, objective_diverged)
}

/// LP solver on the homogeneous self-dual embedding.
///
/// State `(x, y, z, s, τ, κ)` with `z, s, τ, κ > 0`; the embedded residuals
///
/// ```text
///     r_x = Aᵀy + Gᵀz + cτ        r_z = Gx + s − hτ
///     r_y = Ax − bτ               r_τ = cᵀx + bᵀy + hᵀz + κ
/// ```
///
/// vanish together with the complementarity products at a solution of the
/// embedding. `τ → positive` recovers the optimum `(x, y, z)/τ`; `κ`
/// dominating `τ` yields an infeasibility or unboundedness certificate.
/// One predictor-corrector iteration costs one factorization of the reduced
/// matrix `[[GᵀW⁻¹G, Aᵀ], [A, 0]]` and four triangular solves.
fn homogeneous_lp(prog: &ConeProgram, tol: f64, classify: bool) -> Result<PrimalDualSolution> {
    let n = prog.num_vars();
    let me = prog.eq_mat.nrows();
    let mi = prog.ineq_mat.nrows();
    let a_mat = &prog.eq_mat;
    let g_mat = &prog.ineq_mat;
    let b = &prog.eq_rhs;
    let h = &prog.ineq_rhs;
    let c = &prog.objective;
    let delta = 1e-11;
    let max_iter = 200usize;

    let mut x = Array1::<f64>::zeros(n);
    let mut y = Array1::<f64>::zeros(me);
    let mut z = Array1::<f64>::ones(mi);
    let mut s = Array1::<f64>::ones(mi);
    let mut tau = 1.0_f64;
    let mut kappa = 1.0_f64;

    let certificate_scale = 1.0_f64
        .max(crate::linalg::max_abs(b))
        .max(crate::linalg::max_abs(h))
        .max(crate::linalg::max_abs(c));

    let mut best: Option<(f64, PrimalDualSolution)> = None;
    let mut ratio0: Option<f64> = None;

    for iter in 0..max_iter {
        let rx = a_mat.t().dot(&y) + g_mat.t().dot(&z) + &(c * tau);
        let ry = a_mat.dot(&x) - &(b * tau);
        let rz = g_mat.dot(&x) + &s - &(h * tau);
        let rtau = c.dot(&x) + b.dot(&y) + h.dot(&z) + kappa;
        let mu = (z.dot(&s) + tau * kappa) / (mi + 1) as f64;
        let res_inf = crate::linalg::max_abs(&rx)
            .max(crate::linalg::max_abs(&ry))
            .max(crate::linalg::max_abs(&rz))
            .max(rtau.abs());
        if ratio0.is_none() && res_inf > 0.0 {
            ratio0 = Some(mu / res_inf);
        }

        // De-homogenized candidate and its true KKT residuals.
        if tau > 1e-12 {
            let cx = x.mapv(|v| v / tau);
            let cy = y.mapv(|v| v / tau);
            let cz = z.mapv(|v| v.max(0.0) / tau);
            let res = residuals_of(prog, &cx, &cy, &cz);
            let merit = res.max();
            if best.as_ref().map_or(true, |(m, _)| merit < *m) {
                best = Some((
                    merit,
                    PrimalDualSolution {
                        status: SolveStatus::NumericFailure,
                        primal: cx.clone(),
                        eq_multipliers: cy.clone(),
                        ineq_multipliers: cz.clone(),
                        residuals: res,
                        iterations: iter,
                    },
                ));
            }
            if std::env::var_os("FEDFLEX_SOLVER_TRACE").is_some() {
                eprintln!(
                    "hsd {iter:3}  stat {:9.2e}  prim {:9.2e}  comp {:9.2e}  mu {mu:9.2e}  tau {tau:9.2e}  kappa {kappa:9.2e}",
                    res.stationarity, res.primal, res.complementarity
                );
            }
            if res.stationarity <= tol
                && res.primal <= tol
                && res.dual <= tol
                && res.complementarity <= tol
            {
                return Ok(PrimalDualSolution {
                    status: SolveStatus::Optimal,
                    primal: cx,
                    eq_multipliers: cy,
                    ineq_multipliers: cz,
                    residuals: res,
                    iterations: iter,
                });
            }
        }

        // Certificate branch: κ dominating τ with the homogeneous residuals
        // resolved means the original problem has no optimum.
        let res_small = crate::linalg::max_abs(&rx)
            .max(crate::linalg::max_abs(&ry))
            .max(crate::linalg::max_abs(&rz))
            <= 1e-9 * certificate_scale * (tau + kappa);
        if (tau <= 1e-10 * kappa.max(1.0) || (mu <= 1e-12 && tau < 1e-7 * kappa)) && res_small {
            let by_hz = b.dot(&y) + h.dot(&z);
            let cx_val = c.dot(&x);
            let status = if by_hz < -1e-10 * certificate_scale {
                SolveStatus::Infeasible
            } else if cx_val < -1e-10 * certificate_scale {
                SolveStatus::Unbounded
            } else {
                SolveStatus::NumericFailure
            };
            return finish_homogeneous(best, status);
        }

        // Reduced-system factorization; the diagonal weight is z/s = W⁻¹.
        let w_inv = &z / &s;
        let mut kkt = None;
        let mut reg = delta;
        while reg <= 1e-4 {
            if let Ok(k) = KktFactor::new(prog, &w_inv, reg) {
                kkt = Some(k);
                break;
            }
            reg *= 1e3;
        }
        let kkt = match kkt {
            Some(k) => k,
            None => break,
        };
        let gt_winv = |v: &Array1<f64>| g_mat.t().dot(&(&w_inv * v));

        // τ-column system: M (dx1, dy1) = (GᵀW⁻¹h − c, b)
        let rx1 = gt_winv(h) - c;
        let (dx1, dy1) = match kkt.solve(&rx1, b) {
            Ok(v) => v,
            Err(_) => break,
        };

        let take_step = |qx: &Array1<f64>,
                             qy: &Array1<f64>,
                             qz: &Array1<f64>,
                             qtau: f64,
                             qc: &Array1<f64>,
                             qk: f64|
         -> Option<(Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>, f64, f64)> {
            let qz_prime = qz - &(qc / &z);
            let rx2 = qx + &gt_winv(&qz_prime);
            let (dx2, dy2) = kkt.solve(&rx2, qy).ok()?;
            let hw = |v: &Array1<f64>| (&w_inv * v).dot(h);
            // dτ from the last homogeneous row
            let gdx1 = g_mat.dot(&dx1);
            let gdx2 = g_mat.dot(&dx2);
            let denom = c.dot(&dx1) + b.dot(&dy1) + hw(&(&gdx1 - h)) - kappa / tau;
            let numer = qtau - c.dot(&dx2) - b.dot(&dy2) - hw(&(&gdx2 - &qz_prime)) - qk / tau;
            if denom.abs() < 1e-300 {
                return None;
            }
            let dtau = numer / denom;
            let dx = &dx2 + &(&dx1 * dtau);
            let dy = &dy2 + &(&dy1 * dtau);
            let gdx = g_mat.dot(&dx);
            let dz = &w_inv * &(&gdx - &(h * dtau) - &qz_prime);
            let ds = (qc - &(&s * &dz)) / &z;
            let dkappa = (qk - kappa * dtau) / tau;
            Some((dx, dy, dz, ds, dtau, dkappa))
        };

        // Affine direction.
        let qc_aff = -(&z * &s);
        let qk_aff = -tau * kappa;
        let aff = take_step(
            &(-&rx),
            &(-&ry),
            &(-&rz),
            -rtau,
            &qc_aff,
            qk_aff,
        );
        let (adx, ady, adz, ads, adtau, adkappa) = match aff {
            Some(v) => v,
            None => break,
        };
        let alpha_aff = hsd_max_step(&z, &adz, &s, &ads, tau, adtau, kappa, adkappa);
        let mu_aff = ((&z + &(&adz * alpha_aff)).dot(&(&s + &(&ads * alpha_aff)))
            + (tau + alpha_aff * adtau) * (kappa + alpha_aff * adkappa))
            / (mi + 1) as f64;
        let sigma = (mu_aff / mu).max(0.0).powi(3).clamp(1e-8, 0.99999);

        // Combined direction.
        let one_minus = 1.0 - sigma;
        let qc = -(&z * &s) - (&adz * &ads) + sigma * mu;
        let qk = -tau * kappa - adtau * adkappa + sigma * mu;
        let comb = take_step(
            &(-&rx * one_minus),
            &(-&ry * one_minus),
            &(-&rz * one_minus),
            -rtau * one_minus,
            &qc,
            qk,
        );
        let (dx, dy, dz, ds, dtau, dkappa) = match comb {
            Some(v) => v,
            None => break,
        };
        if std::env::var_os("FEDFLEX_SOLVER_TRACE").is_some() {
            // direction residuals against the linearized homogeneous system
            let e1 = a_mat.t().dot(&dy) + g_mat.t().dot(&dz) + &(c * dtau) + &(&rx * one_minus);
            let e2 = a_mat.dot(&dx) - &(b * dtau) + &(&ry * one_minus);
            let e3 = g_mat.dot(&dx) + &ds - &(h * dtau) + &(&rz * one_minus);
            let e4 = c.dot(&dx) + b.dot(&dy) + h.dot(&dz) + dkappa + rtau * one_minus;
            let e5 = &z * &ds + &s * &dz - &qc;
            let e6 = tau * dkappa + kappa * dtau - qk;
            eprintln!(
                "    dir resid: e1 {:9.2e} e2 {:9.2e} e3 {:9.2e} e4 {:9.2e} e5 {:9.2e} e6 {:9.2e}",
                crate::linalg::max_abs(&e1),
                crate::linalg::max_abs(&e2),
                crate::linalg::max_abs(&e3),
                e4.abs(),
                crate::linalg::max_abs(&e5),
                e6.abs()
            );
        }
        let mut alpha = (0.98 * hsd_max_step(&z, &dz, &s, &ds, tau, dtau, kappa, dkappa)).min(1.0);
        // Balance guard: complementarity collapsing far below the residual
        // level leaves the dual residual stranded in noise. Shorten the
        // step until μ stays within four orders of the residual track.
        if let Some(r0) = ratio0 {
            for _ in 0..10 {
                let mu_next = ((&z + &(&dz * alpha)).dot(&(&s + &(&ds * alpha)))
                    + (tau + alpha * dtau) * (kappa + alpha * dkappa))
                    / (mi + 1) as f64;
                // linear rows contract exactly by (1 − α(1−σ)); floor the
                // prediction at float noise for the data scale
                let res_next = ((1.0 - alpha * (1.0 - sigma)) * res_inf)
                    .max(1e-13 * certificate_scale * (tau + kappa));
                if mu_next >= 1e-3 * r0 * res_next {
                    break;
                }
                alpha *= 0.6;
            }
        }
        if alpha < 1e-13 {
            break;
        }
        x = &x + &(&dx * alpha);
        y = &y + &(&dy * alpha);
        z = &z + &(&dz * alpha);
        s = &s + &(&ds * alpha);
        z.mapv_inplace(|v| v.max(1e-250));
        s.mapv_inplace(|v| v.max(1e-250));
        tau += alpha * dtau;
        kappa = (kappa + alpha * dkappa).max(1e-250);
        if !(tau.is_finite() && kappa.is_finite()) || tau <= 0.0 {
            break;
        }
    }

    let _ = classify;
    finish_homogeneous(best, SolveStatus::NumericFailure)
}

fn finish_homogeneous(
    best: Option<(f64, PrimalDualSolution)>,
    status: SolveStatus,
) -> Result<PrimalDualSolution> {
    let (_, mut sol) =
        best.ok_or_else(|| Error::NumericFailure("no homogeneous iterate produced".into()))?;
    sol.status = status;
    Ok(sol)
}

#[allow(clippy::too_many_arguments)]
fn hsd_max_step(
    z: &Array1<f64>,
    dz: &Array1<f64>,
    s: &Array1<f64>,
    ds: &Array1<f64>,
    tau: f64,
    dtau: f64,
    kappa: f64,
    dkappa: f64,
) -> f64 {
    let mut alpha = 1.0_f64;
    for (v, d) in z.iter().zip(dz.iter()).chain(s.iter().zip(ds.iter())) {
        if *d < 0.0 {
            alpha = alpha.min(-v / d);
        }
    }
    if dtau < 0.0 {
        alpha = alpha.min(-tau / dtau);
    }
    if dkappa < 0.0 {
        alpha = alpha.min(-kappa / dkappa);
    }
    alpha
}

#[allow(clippy::type_complexity)]
fn newton_step(
    prog: &ConeProgram,
    kkt: &KktFactor,
    it: &Iterate,
    w: &Array1<f64>,
    rd: &Array1<f64>,
    rp: &Array1<f64>,
    rg: &Array1<f64>,
    rc: &Array1<f64>,
) -> Result<(Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>)> {
    // Eliminate ds and dz:
    //   ds = −rg − G dx
    //   dz = W∘rg − rc/s + W G dx
    let zs = &(w * rg) - &(rc / &it.s);
    let rx = -rd - prog.ineq_mat.t().dot(&zs);
    let ry = -rp.clone();
    let (dx, dy) = kkt.solve(&rx, &ry)?;
    let gdx = prog.ineq_mat.dot(&dx);
    let ds = -(rg + &gdx);
    let dz = &zs + &(w * &gdx);
    Ok((dx, dy, dz, ds))
}

fn finish_with_status(
    prog: &ConeProgram,
    best: Option<(f64, Iterate, usize)>,
    status: SolveStatus,
) -> Result<PrimalDualSolution> {
    let (_, it, iter) = best.ok_or_else(|| Error::NumericFailure("no iterate produced".into()))?;
    let residuals = residuals_of(prog, &it.x, &it.y, &it.z);
    Ok(PrimalDualSolution {
        status,
        primal: it.x,
        eq_multipliers: it.y,
        ineq_multipliers: it.z,
        residuals,
        iterations: iter,
    })
}

/// Phase-I classification once the main loop gave up: minimize the largest
/// constraint violation; a strictly positive optimum certifies
/// infeasibility, otherwise the failure is unboundedness or conditioning.
fn classify_failure(
    prog: &ConeProgram,
    tol: f64,
    best: Option<(f64, Iterate, usize)>,
    objective_diverged: bool,
) -> Result<PrimalDualSolution> {
    let n = prog.num_vars();
    let me = prog.eq_mat.nrows();
    let mi = prog.ineq_mat.nrows();
    let rows = 2 * me + mi + 1;
    let mut g = Array2::<f64>::zeros((rows, n + 1));
    let mut h = Array1::<f64>::zeros(rows);
    for i in 0..me {
        for j in 0..n {
            g[[i, j]] = prog.eq_mat[[i, j]];
            g[[me + i, j]] = -prog.eq_mat[[i, j]];
        }
        g[[i, n]] = -1.0;
        g[[me + i, n]] = -1.0;
        h[i] = prog.eq_rhs[i];
        h[me + i] = -prog.eq_rhs[i];
    }
    for i in 0..mi {
        for j in 0..n {
            g[[2 * me + i, j]] = prog.ineq_mat[[i, j]];
        }
        g[[2 * me + i, n]] = -1.0;
        h[2 * me + i] = prog.ineq_rhs[i];
    }
    // t ≥ 0
    g[[rows - 1, n]] = -1.0;
    let mut c = Array1::zeros(n + 1);
    c[n] = 1.0;
    let phase1 = ConeProgram::lp_ineq(c, g, h);
    let data_scale = 1.0_f64
        .max(crate::linalg::max_abs(&prog.ineq_rhs))
        .max(crate::linalg::max_abs(&prog.eq_rhs));

    let status = match solve_inner(&phase1, tol.max(1e-9), false) {
        Ok(sol) if sol.is_optimal() => {
            let viol = sol.primal[n];
            if viol > 1e-6 * data_scale {
                SolveStatus::Infeasible
            } else if objective_diverged {
                SolveStatus::Unbounded
            } else {
                SolveStatus::NumericFailure
            }
        }
        _ => SolveStatus::NumericFailure,
    };
    finish_with_status(prog, best, status)
}

/// Equality-constrained QP (no inequalities): one saddle-point solve.
fn solve_equality_only(prog: &ConeProgram, tol: f64) -> Result<PrimalDualSolution> {
    let n = prog.num_vars();
    let me = prog.eq_mat.nrows();
    if prog.quadratic.is_none() && me < n {
        // A pure LP without inequalities is unbounded unless c ⊥ null(A);
        // report unbounded, callers here never rely on the corner case.
        return Ok(PrimalDualSolution {
            status: SolveStatus::Unbounded,
            primal: Array1::zeros(n),
            eq_multipliers: Array1::zeros(me),
            ineq_multipliers: Array1::zeros(0),
            residuals: KktResiduals {
                stationarity: f64::INFINITY,
                primal: f64::INFINITY,
                dual: 0.0,
                complementarity: 0.0,
            },
            iterations: 0,
        });
    }
    let dim = n + me;
    let mut k = Array2::<f64>::zeros((dim, dim));
    if let Some(q) = &prog.quadratic {
        k.slice_mut(s![..n, ..n]).assign(q);
    }
    for i in 0..n {
        k[[i, i]] += 1e-12;
    }
    if me > 0 {
        k.slice_mut(s![..n, n..]).assign(&prog.eq_mat.t());
        k.slice_mut(s![n.., ..n]).assign(&prog.eq_mat);
    }
    let mut rhs = Array1::zeros(dim);
    rhs.slice_mut(s![..n]).assign(&(-prog.objective.clone()));
    rhs.slice_mut(s![n..]).assign(&prog.eq_rhs);
    let sol = crate::linalg::solve_system(&k, &rhs)?;
    let x = sol.slice(s![..n]).to_owned();
    let y = sol.slice(s![n..]).to_owned();
    let z = Array1::zeros(0);
    let residuals = residuals_of(prog, &x, &y, &z);
    let status = if residuals.max() <= tol.max(1e-7) {
        SolveStatus::Optimal
    } else {
        SolveStatus::NumericFailure
    };
    Ok(PrimalDualSolution {
        status,
        primal: x,
        eq_multipliers: y,
        ineq_multipliers: z,
        residuals,
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_dim_lp_bound() {
        // min x s.t. x ≥ 1  →  x = 1, multiplier 1
        let prog = ConeProgram::lp_ineq(array![1.0], array![[-1.0]], array![-1.0]);
        let sol = solve_default(&prog).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.primal[0] - 1.0).abs() < 1e-7);
        assert!((sol.ineq_multipliers[0] - 1.0).abs() < 1e-7);
        assert!(sol.residuals.max() <= 1e-8);
    }

    #[test]
    fn one_dim_projection_qp() {
        // min ‖x − 2‖² s.t. x ≤ 1  →  x = 1, multiplier 2
        let prog = ConeProgram::qp(
            array![[2.0]],
            array![-4.0],
            Array2::zeros((0, 1)),
            Array1::zeros(0),
            array![[1.0]],
            array![1.0],
        );
        let sol = solve_default(&prog).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.primal[0] - 1.0).abs() < 1e-7);
        assert!((sol.ineq_multipliers[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_lp_detected() {
        // x ≤ 0 and x ≥ 1
        let prog = ConeProgram::lp_ineq(
            array![1.0],
            array![[1.0], [-1.0]],
            array![0.0, -1.0],
        );
        let sol = solve_default(&prog).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_lp_detected() {
        // min −x s.t. x ≥ 0
        let prog = ConeProgram::lp_ineq(array![-1.0], array![[-1.0]], array![0.0]);
        let sol = solve_default(&prog).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn equality_constrained_qp() {
        // min ½‖x‖² s.t. x₁ + x₂ = 2 → x = (1, 1)
        let prog = ConeProgram::qp(
            Array2::eye(2),
            Array1::zeros(2),
            array![[1.0, 1.0]],
            array![2.0],
            Array2::zeros((0, 2)),
            Array1::zeros(0),
        );
        let sol = solve_default(&prog).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.primal[0] - 1.0).abs() < 1e-7);
        assert!((sol.primal[1] - 1.0).abs() < 1e-7);
    }

    /// Random LPs over a box, with a known interior point: solutions must
    /// satisfy weak duality and the KKT tolerances.
    #[test]
    fn weak_duality_random_lps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..25 {
            let n = rng.random_range(2..6);
            let m = rng.random_range(n..2 * n + 3);
            let mut g = Array2::zeros((m + 2 * n, n));
            let mut h = Array1::zeros(m + 2 * n);
            for i in 0..m {
                for j in 0..n {
                    g[[i, j]] = rng.random_range(-1.0..1.0);
                }
                // keep the origin strictly feasible
                h[i] = rng.random_range(0.1..2.0);
            }
            for j in 0..n {
                g[[m + j, j]] = 1.0;
                h[m + j] = 5.0;
                g[[m + n + j, j]] = -1.0;
                h[m + n + j] = 5.0;
            }
            let c = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
            let prog = ConeProgram::lp_ineq(c, g, h);
            let sol = solve_default(&prog).unwrap();
            assert!(sol.is_optimal(), "trial {trial} not optimal");
            assert!(sol.residuals.complementarity <= 1e-8);
            assert!(sol.residuals.primal <= 1e-8);
            let gap = prog.objective_value(&sol.primal) - sol.dual_objective(&prog);
            assert!(gap >= -1e-7, "weak duality violated: gap {gap}");
        }
    }

    #[test]
    fn deterministic_repeat() {
        let prog = ConeProgram::lp_ineq(
            array![1.0, -2.0],
            array![[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
            array![3.0, 0.0, 0.0],
        );
        let a = solve_default(&prog).unwrap();
        let b = solve_default(&prog).unwrap();
        assert_eq!(a.primal.as_slice().unwrap(), b.primal.as_slice().unwrap());
        assert_eq!(
            a.ineq_multipliers.as_slice().unwrap(),
            b.ineq_multipliers.as_slice().unwrap()
        );
    }

    #[test]
    fn rejects_asymmetric_quadratic() {
        let prog = ConeProgram::qp(
            array![[1.0, 0.5], [0.0, 1.0]],
            Array1::zeros(2),
            Array2::zeros((0, 2)),
            Array1::zeros(0),
            Array2::eye(2),
            Array1::ones(2),
        );
        assert!(solve_default(&prog).is_err());
    }
}

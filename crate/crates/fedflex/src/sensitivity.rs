//! Implicit differentiation of the projection QP and the containment LP.
//!
//! Both programs are convex with unique-enough solutions along the central
//! path; their optimizers can be differentiated with respect to the base
//! offsets by applying the implicit function theorem to the KKT residual
//! system `F(y, h) = 0`: the Jacobian of the solution is
//! `∂y/∂h = −J_y⁻¹ ∂F/∂h`.
//!
//! Interior-point output is *purified* before assembly: each
//! complementarity pair keeps its dominant member and clamps the other to
//! exactly zero. Raw iterates would leave both members slightly positive
//! and make the complementarity rows of `J` near-singular in every
//! direction at once. Pairs where both members are below [`DEGENERACY_TOL`]
//! lack strict complementarity — the solution map may only be directionally
//! differentiable there — and the result is flagged accordingly.
//!
//! A rank-deficient `J` gets one Tikhonov retry (`ρ = 1e-8` on the
//! diagonal), which computes a regularized least-squares surrogate of the
//! Jacobian. Only if the retry also fails does the call error out with
//! [`Error::SingularJacobian`]; the federated loop then skips that
//! resource's gradient for the round.

use ndarray::{s, Array1, Array2, Array3};
use ndarray_linalg::solve::{FactorizeInto, LUFactorized, Solve};

use crate::containment::ContainmentCertificate;
use crate::flex::{facet_matrix, FacetOffsets, Horizon};
use crate::projection::ProjectedBase;
use crate::{Error, Result};

/// Complementarity pairs with both members below this margin are treated as
/// degenerate.
pub const DEGENERACY_TOL: f64 = 1e-6;

/// Tikhonov diagonal applied on a singular KKT Jacobian retry.
pub const TIKHONOV_RHO: f64 = 1e-8;

/// Jacobian of the projected offsets with respect to the raw offsets.
#[derive(Debug, Clone)]
pub struct ProjectionJacobian {
    /// `∂h̃/∂h`, `4T × 4T`; row j is exactly `eⱼᵀ` for inactive facets.
    pub matrix: Array2<f64>,
    /// True when the Tikhonov retry was needed.
    pub regularized: bool,
    /// True when some complementarity pair lacked a strict margin.
    pub degenerate: bool,
}

/// Jacobian of the optimal containment transform (and shift) with respect
/// to the base offsets.
#[derive(Debug, Clone)]
pub struct ContainmentJacobian {
    /// `∂Γ/∂h₀` as a `T × T × 4T` tensor.
    pub transform_grad: Array3<f64>,
    /// `∂γ/∂h₀`, `T × 4T`, kept for diagnostics.
    pub shift_grad: Array2<f64>,
    pub regularized: bool,
    pub degenerate: bool,
}

struct KktSolve {
    factor: LUFactorized<ndarray::OwnedRepr<f64>>,
}

impl KktSolve {
    fn new(j: Array2<f64>) -> Result<Self> {
        let factor = j
            .factorize_into()
            .map_err(|e| Error::SingularJacobian(format!("LU: {e}")))?;
        Ok(Self { factor })
    }

    fn solve(&self, rhs: &Array1<f64>) -> Result<Array1<f64>> {
        self.factor
            .solve(rhs)
            .map_err(|e| Error::SingularJacobian(format!("solve: {e}")))
    }
}

/// Solves `J X = −RHS` column by column with a residual check; on failure
/// retries once with `J + ρI`. Returns the solution and whether the retry
/// was used.
fn solve_kkt_system(j: &Array2<f64>, rhs: &Array2<f64>) -> Result<(Array2<f64>, bool)> {
    let (n, cols) = rhs.dim();
    debug_assert_eq!(j.dim(), (n, n));
    let rhs_scale = 1.0 + rhs.iter().fold(0.0_f64, |a, x| a.max(x.abs()));

    let attempt = |mat: Array2<f64>| -> Result<Array2<f64>> {
        let solver = KktSolve::new(mat)?;
        let mut x = Array2::zeros((n, cols));
        for c in 0..cols {
            let col = -solver.solve(&rhs.column(c).to_owned())?;
            x.column_mut(c).assign(&col);
        }
        Ok(x)
    };
    let check = |x: &Array2<f64>| -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let resid = j.dot(x) + rhs;
        resid.iter().all(|v| v.abs() <= 1e-6 * rhs_scale)
    };

    if let Ok(x) = attempt(j.clone()) {
        if check(&x) {
            return Ok((x, false));
        }
    }
    let mut reg = j.clone();
    for i in 0..n {
        reg[[i, i]] += TIKHONOV_RHO;
    }
    let x = attempt(reg).map_err(|_| {
        Error::SingularJacobian("KKT Jacobian singular after Tikhonov retry".into())
    })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularJacobian(
            "regularized KKT solve produced non-finite entries".into(),
        ));
    }
    Ok((x, true))
}

/// Differentiates the interior-restoring projection at a solved point.
///
/// The KKT residual in `y = (h′, u, λ)` is
/// `F = [2(h − h′) + λ; Hᵀλ; λ ∘ g]` with `g = Hu + ε1 − h′`, and the
/// Jacobian rows follow directly. Inactive facets are returned as exact
/// identity rows: their offsets ride along with the input by definition of
/// the projection.
pub fn projection_gradient(sol: &ProjectedBase, horizon: &Horizon) -> Result<ProjectionJacobian> {
    let t = horizon.slots();
    let rows = horizon.facet_rows();
    let h_mat = facet_matrix(horizon);
    let dim = 2 * rows + t;

    // Purify the complementarity pairs.
    let h_tilde = sol.offsets.as_array();
    let raw_g = h_mat.dot(&sol.witness) + sol.epsilon - &h_tilde;
    let mut lambda = sol.multipliers.clone();
    let mut g = raw_g.clone();
    let mut degenerate = false;
    for j in 0..rows {
        if sol.active[j] {
            g[j] = 0.0;
        } else {
            lambda[j] = 0.0;
            g[j] = g[j].min(0.0);
        }
        if lambda[j].abs() + g[j].abs() < DEGENERACY_TOL {
            degenerate = true;
        }
    }

    let mut j_y = Array2::<f64>::zeros((dim, dim));
    // F1 rows: −2I on h′, +I on λ
    for i in 0..rows {
        j_y[[i, i]] = -2.0;
        j_y[[i, rows + t + i]] = 1.0;
    }
    // F2 rows: Hᵀ on λ
    for i in 0..t {
        for j in 0..rows {
            j_y[[rows + i, rows + t + j]] = h_mat[[j, i]];
        }
    }
    // F3 rows: −diag(λ) on h′, diag(λ)H on u, diag(g) on λ
    for j in 0..rows {
        let r = rows + t + j;
        j_y[[r, j]] = -lambda[j];
        for k in 0..t {
            j_y[[r, rows + k]] = lambda[j] * h_mat[[j, k]];
        }
        j_y[[r, rows + t + j]] = g[j];
    }

    let mut rhs = Array2::<f64>::zeros((dim, rows));
    for i in 0..rows {
        rhs[[i, i]] = 2.0;
    }

    let (full, regularized) = solve_kkt_system(&j_y, &rhs)?;
    let mut matrix = full.slice(s![..rows, ..]).to_owned();
    for j in 0..rows {
        if !sol.active[j] {
            for k in 0..rows {
                matrix[[j, k]] = if k == j { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(ProjectionJacobian {
        matrix,
        regularized,
        degenerate,
    })
}

/// Block offsets of the stacked containment KKT vector
/// `z = (γ, vecΓ, vecΛ, vecY, μ, vecν)`, column-major vectorization for the
/// matrix blocks.
struct ZLayout {
    gamma: usize,
    transform: usize,
    facet_map: usize,
    alignment: usize,
    coupling: usize,
    nonneg: usize,
    total: usize,
}

impl ZLayout {
    fn new(t: usize) -> Self {
        let rows = 4 * t;
        let gamma = 0;
        let transform = gamma + t;
        let facet_map = transform + t * t;
        let alignment = facet_map + rows * rows;
        let coupling = alignment + rows * t;
        let nonneg = coupling + rows;
        let total = nonneg + rows * rows;
        Self {
            gamma,
            transform,
            facet_map,
            alignment,
            coupling,
            nonneg,
            total,
        }
    }
}

/// Differentiates the optimal containment transform with respect to the
/// base offsets at a solved certificate.
///
/// The stacked KKT residual couples all six unknown blocks; its Jacobian is
/// assembled dense (dimension `37T² + 5T`) from the twelve structural
/// blocks, and the sensitivity follows from one LU factorization with `4T`
/// right-hand sides.
pub fn containment_gradient(
    cert: &ContainmentCertificate,
    base: &FacetOffsets,
    target: &FacetOffsets,
    horizon: &Horizon,
) -> Result<ContainmentJacobian> {
    let t = horizon.slots();
    let rows = horizon.facet_rows();
    let h_mat = facet_matrix(horizon);
    let h0 = base.as_array();
    let hi = target.as_array();
    let lay = ZLayout::new(t);
    let n = lay.total;

    // Purified primal-dual data.
    let gamma = cert.map.shift_vec();
    let g_raw = cert.facet_map.dot(&h0) + h_mat.dot(&gamma) - &hi;
    let mut lam = cert.facet_map.clone();
    let mut nu = cert.duals.nonneg.clone();
    let mut degenerate = false;
    for r in 0..rows {
        for c in 0..rows {
            if nu[[r, c]] + lam[[r, c]] < DEGENERACY_TOL {
                degenerate = true;
            }
            if nu[[r, c]] > lam[[r, c]] {
                lam[[r, c]] = 0.0;
            } else {
                nu[[r, c]] = 0.0;
            }
        }
    }
    let mut mu = cert.duals.coupling.clone();
    let mut g = g_raw.clone();
    for j in 0..rows {
        if mu[j] + g[j].abs() < DEGENERACY_TOL {
            degenerate = true;
        }
        if mu[j] > -g[j] {
            g[j] = 0.0;
        } else {
            mu[j] = 0.0;
            g[j] = g[j].min(0.0);
        }
    }

    // Row offsets mirror the block offsets of z.
    let (r1, r2, r3, r4, r5, r6) = (
        lay.gamma,
        lay.transform,
        lay.facet_map,
        lay.alignment,
        lay.coupling,
        lay.nonneg,
    );

    let mut jz = Array2::<f64>::zeros((n, n));

    // Block (1,5): Hᵀ.
    for i in 0..t {
        for j in 0..rows {
            jz[[r1 + i, lay.coupling + j]] = h_mat[[j, i]];
        }
    }
    // Block (2,4): −(I_T ⊗ Hᵀ) — residual rows vec(−I − HᵀY).
    for c in 0..t {
        for sidx in 0..t {
            for r in 0..rows {
                jz[[r2 + c * t + sidx, lay.alignment + c * rows + r]] = -h_mat[[r, sidx]];
            }
        }
    }
    // Blocks (3,4), (3,5), (3,6): rows vec(YHᵀ + μh₀ᵀ − ν).
    for c in 0..rows {
        for r in 0..rows {
            let row = r3 + c * rows + r;
            for sidx in 0..t {
                jz[[row, lay.alignment + sidx * rows + r]] = h_mat[[c, sidx]];
            }
            jz[[row, lay.coupling + r]] = h0[c];
            jz[[row, lay.nonneg + c * rows + r]] = -1.0;
        }
    }
    // Blocks (4,2), (4,3): rows vec(ΛH − HΓ).
    for c in 0..t {
        for r in 0..rows {
            let row = r4 + c * rows + r;
            for sidx in 0..t {
                jz[[row, lay.transform + c * t + sidx]] = -h_mat[[r, sidx]];
            }
            for k in 0..rows {
                jz[[row, lay.facet_map + k * rows + r]] = h_mat[[k, c]];
            }
        }
    }
    // Blocks (5,1), (5,3), (5,5): rows μ ∘ g.
    for j in 0..rows {
        let row = r5 + j;
        for sidx in 0..t {
            jz[[row, lay.gamma + sidx]] = mu[j] * h_mat[[j, sidx]];
        }
        for k in 0..rows {
            jz[[row, lay.facet_map + k * rows + j]] = mu[j] * h0[k];
        }
        jz[[row, lay.coupling + j]] = g[j];
    }
    // Blocks (6,3), (6,6): rows vec(ν) ∘ vec(Λ).
    for c in 0..rows {
        for r in 0..rows {
            let row = r6 + c * rows + r;
            jz[[row, lay.facet_map + c * rows + r]] = nu[[r, c]];
            jz[[row, lay.nonneg + c * rows + r]] = lam[[r, c]];
        }
    }

    // ∂G/∂h₀: block 3 is I_{4T} ⊗ μ, block 5 is diag(μ) Λ.
    let mut rhs = Array2::<f64>::zeros((n, rows));
    for f in 0..rows {
        for r in 0..rows {
            rhs[[r3 + f * rows + r, f]] = mu[r];
        }
        for j in 0..rows {
            rhs[[r5 + j, f]] = mu[j] * lam[[j, f]];
        }
    }

    let (sens, regularized) = solve_kkt_system(&jz, &rhs)?;

    let mut transform_grad = Array3::<f64>::zeros((t, t, rows));
    for f in 0..rows {
        for j in 0..t {
            for i in 0..t {
                transform_grad[[i, j, f]] = sens[[lay.transform + j * t + i, f]];
            }
        }
    }
    let shift_grad = sens.slice(s![lay.gamma..lay.gamma + t, ..]).to_owned();

    Ok(ContainmentJacobian {
        transform_grad,
        shift_grad,
        regularized,
        degenerate,
    })
}

/// One coordinate that failed a finite-difference comparison.
#[derive(Debug, Clone)]
pub struct FdFailure {
    pub output_index: usize,
    pub input_index: usize,
    pub analytic: f64,
    pub fd: f64,
    pub rel_err: f64,
}

/// Outcome of a finite-difference validation sweep.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Largest relative error over checked coordinates.
    pub max_rel_err: f64,
    /// Coordinates with |FD| above the floor.
    pub checked: usize,
    /// Of those, how many matched within tolerance.
    pub within_tol: usize,
    pub failures: Vec<FdFailure>,
    /// Set when the instance lacked a strict complementarity margin; such
    /// comparisons are excluded from pass/fail verdicts.
    pub unreliable: bool,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.unreliable || self.failures.is_empty()
    }
}

/// Central-difference validation of an analytic Jacobian.
///
/// `f` maps an input vector to a flattened output vector; `analytic` is the
/// claimed `m × n` Jacobian at `x0`. Coordinates where |FD| falls below
/// `fd_floor` carry no signal and are skipped. A coordinate passes when the
/// relative error is within `tol` *or* the absolute error is within `atol`
/// — probes that re-solve an optimization problem carry noise of order
/// `solver_tol / (2·step)` in every FD entry, which swamps the relative
/// test exactly on the coordinates whose true sensitivity is near zero.
/// A `complementarity_margin` below [`DEGENERACY_TOL`] marks the whole
/// report unreliable.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_check<F>(
    f: F,
    x0: &Array1<f64>,
    analytic: &Array2<f64>,
    step: f64,
    tol: f64,
    atol: f64,
    fd_floor: f64,
    complementarity_margin: f64,
) -> Result<FdReport>
where
    F: Fn(&Array1<f64>) -> Result<Array1<f64>>,
{
    let n = x0.len();
    let m = analytic.nrows();
    if analytic.ncols() != n {
        return Err(Error::DimensionMismatch(
            "analytic Jacobian columns vs input length".into(),
        ));
    }
    let mut max_rel_err = 0.0_f64;
    let mut checked = 0usize;
    let mut within = 0usize;
    let mut failures = Vec::new();
    for k in 0..n {
        let mut xp = x0.clone();
        xp[k] += step;
        let mut xm = x0.clone();
        xm[k] -= step;
        let fp = f(&xp)?;
        let fm = f(&xm)?;
        if fp.len() != m || fm.len() != m {
            return Err(Error::DimensionMismatch("probe output length".into()));
        }
        for i in 0..m {
            let fd = (fp[i] - fm[i]) / (2.0 * step);
            if fd.abs() <= fd_floor {
                continue;
            }
            checked += 1;
            let a = analytic[[i, k]];
            let abs = (a - fd).abs();
            let rel = abs / fd.abs().max(a.abs()).max(fd_floor);
            if rel <= tol {
                within += 1;
                max_rel_err = max_rel_err.max(rel);
            } else if abs <= atol {
                // noise-scale disagreement on a near-zero coordinate
                within += 1;
            } else {
                max_rel_err = max_rel_err.max(rel);
                failures.push(FdFailure {
                    output_index: i,
                    input_index: k,
                    analytic: a,
                    fd,
                    rel_err: rel,
                });
            }
        }
    }
    Ok(FdReport {
        max_rel_err,
        checked,
        within_tol: within,
        failures,
        unreliable: complementarity_margin < DEGENERACY_TOL,
    })
}

/// Flattens a containment Jacobian to the `(T² × 4T)` layout used when
/// comparing against finite differences of `vec(Γ)`.
pub fn flatten_transform_grad(jac: &ContainmentJacobian) -> Array2<f64> {
    let (t, _, rows) = jac.transform_grad.dim();
    let mut out = Array2::zeros((t * t, rows));
    for f in 0..rows {
        for j in 0..t {
            for i in 0..t {
                out[[j * t + i, f]] = jac.transform_grad[[i, j, f]];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containment::solve_containment;
    use crate::flex::{fleet_offsets, mean_offsets, sample_fleet};
    use crate::linalg::vec_cm;
    use crate::projection::{default_epsilon, project};

    fn horizon(t: usize) -> Horizon {
        Horizon::new(t, 1.0).unwrap()
    }

    #[test]
    fn projection_jacobian_is_identity_when_interior() {
        let hz = horizon(3);
        let offs = FacetOffsets::power_box(0.0, 1.0, &hz);
        let sol = project(&offs, 0.01, &hz).unwrap();
        let jac = projection_gradient(&sol, &hz).unwrap();
        let rows = hz.facet_rows();
        for i in 0..rows {
            for j in 0..rows {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(jac.matrix[[i, j]], expect, "({i},{j}) not exact");
            }
        }
    }

    #[test]
    fn projection_jacobian_degenerate_interval_hand_values() {
        let hz = horizon(1);
        let offs = FacetOffsets::from_bounds(&[10.0], &[-10.0], &[0.0], &[0.0], &hz).unwrap();
        let sol = project(&offs, 0.1, &hz).unwrap();
        let jac = projection_gradient(&sol, &hz).unwrap();
        // Offset order [x̄, −x̲, ū, −u̲]; both power facets active. Writing
        // the two active stationarity equations out by hand gives
        // ∂ū′/∂ū₀ = 1/2, ∂ū′/∂(−u̲₀) = −1/2 and the mirrored row below it.
        let m = &jac.matrix;
        assert!((m[[2, 2]] - 0.5).abs() < 1e-8, "got {}", m[[2, 2]]);
        assert!((m[[2, 3]] + 0.5).abs() < 1e-8);
        assert!((m[[3, 2]] + 0.5).abs() < 1e-8);
        assert!((m[[3, 3]] - 0.5).abs() < 1e-8);
        // slack energy rows stay identity
        assert_eq!(m[[0, 0]], 1.0);
        assert_eq!(m[[1, 1]], 1.0);
        assert_eq!(m[[0, 2]], 0.0);
    }

    #[test]
    fn projection_jacobian_matches_finite_differences() {
        let hz = horizon(3);
        let fleet = sample_fleet(5, &hz, 13);
        let offs = fleet_offsets(&fleet, &hz).unwrap();
        let mean = mean_offsets(&offs, &hz).unwrap();
        let eps = default_epsilon(&mean);
        let sol = project(&mean, eps, &hz).unwrap();
        let jac = projection_gradient(&sol, &hz).unwrap();
        let margin = sol
            .multipliers
            .iter()
            .zip(sol.active.iter())
            .map(|(l, a)| if *a { *l } else { 1.0 })
            .fold(f64::INFINITY, f64::min);
        let f = |h: &Array1<f64>| -> crate::Result<Array1<f64>> {
            let fo = FacetOffsets::new(h.clone(), &hz)?;
            Ok(project(&fo, eps, &hz)?.offsets.as_array())
        };
        let report =
            finite_difference_check(f, &mean.as_array(), &jac.matrix, 1e-5, 1e-4, 5e-4, 1e-8, margin)
                .unwrap();
        assert!(
            report.passed(),
            "max rel err {:.2e}, {} failures",
            report.max_rel_err,
            report.failures.len()
        );
        assert!(report.checked > 0);
    }

    #[test]
    fn containment_gradient_zero_for_slack_facets() {
        let hz = horizon(2);
        let base = FacetOffsets::power_box(0.0, 1.0, &hz);
        let cert = solve_containment(&base, &base, &hz).unwrap();
        let jac = containment_gradient(&cert, &base, &base, &hz).unwrap();
        // Energy rows of the box are strictly slack: no active constraint
        // references them, so the whole gradient slice vanishes.
        for f in 0..2 * hz.slots() {
            for i in 0..hz.slots() {
                for j in 0..hz.slots() {
                    assert!(
                        jac.transform_grad[[i, j, f]].abs() < 1e-6,
                        "slack facet {f} has gradient {}",
                        jac.transform_grad[[i, j, f]]
                    );
                }
            }
        }
    }

    #[test]
    fn containment_gradient_one_dim_scaling_law() {
        let hz = horizon(1);
        // base [0, b] with b = 1, target [0, 2]: Γ* = 2/b and ∂Γ*/∂b = −Γ*/b.
        let base = FacetOffsets::from_bounds(&[50.0], &[-50.0], &[1.0], &[0.0], &hz).unwrap();
        let target = FacetOffsets::from_bounds(&[80.0], &[-80.0], &[2.0], &[0.0], &hz).unwrap();
        let cert = solve_containment(&base, &target, &hz).unwrap();
        assert!((cert.objective - 2.0).abs() < 1e-6);
        let jac = containment_gradient(&cert, &base, &target, &hz).unwrap();
        // ū₀ offset is index 2 in [x̄, −x̲, ū, −u̲]
        let d = jac.transform_grad[[0, 0, 2]];
        assert!((d + 2.0).abs() < 1e-5, "∂Γ/∂ū₀ = {d}, expected −2");
    }

    #[test]
    fn containment_gradient_matches_finite_differences() {
        let hz = horizon(3);
        let fleet = sample_fleet(4, &hz, 29);
        let offs = fleet_offsets(&fleet, &hz).unwrap();
        let mean = mean_offsets(&offs, &hz).unwrap();
        let base = project(&mean, default_epsilon(&mean), &hz).unwrap().offsets;
        let target = &offs[1];
        let cert = solve_containment(&base, target, &hz).unwrap();
        let jac = containment_gradient(&cert, &base, target, &hz).unwrap();
        let analytic = flatten_transform_grad(&jac);
        let f = |h: &Array1<f64>| -> crate::Result<Array1<f64>> {
            let fo = FacetOffsets::new(h.clone(), &hz)?;
            let c = solve_containment(&fo, target, &hz)?;
            Ok(vec_cm(&c.map.linear_mat()))
        };
        let report =
            finite_difference_check(f, &base.as_array(), &analytic, 1e-5, 5e-4, 5e-4, 1e-6, 1.0)
                .unwrap();
        let frac = report.within_tol as f64 / report.checked.max(1) as f64;
        assert!(
            frac >= 0.95,
            "only {:.1}% of {} coordinates matched (max rel err {:.2e})",
            100.0 * frac,
            report.checked,
            report.max_rel_err
        );
    }

    #[test]
    fn fd_check_flags_corrupted_entries() {
        let f = |x: &Array1<f64>| -> crate::Result<Array1<f64>> {
            Ok(ndarray::array![x[0] * x[0], 3.0 * x[1]])
        };
        let x0 = ndarray::array![1.0, 2.0];
        let good = ndarray::array![[2.0, 0.0], [0.0, 3.0]];
        let report = finite_difference_check(&f, &x0, &good, 1e-6, 1e-6, 0.0, 1e-10, 1.0).unwrap();
        assert!(report.passed());

        let mut bad = good.clone();
        bad[[1, 1]] = -3.0;
        let report = finite_difference_check(&f, &x0, &bad, 1e-6, 1e-6, 0.0, 1e-10, 1.0).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].output_index, 1);
        assert_eq!(report.failures[0].input_index, 1);
    }

    #[test]
    fn fd_check_marks_degenerate_instances_unreliable() {
        let f = |x: &Array1<f64>| -> crate::Result<Array1<f64>> { Ok(x.clone()) };
        let x0 = ndarray::array![1.0];
        let wrong = ndarray::array![[5.0]];
        let report = finite_difference_check(&f, &x0, &wrong, 1e-6, 1e-6, 0.0, 1e-10, 1e-7).unwrap();
        assert!(report.unreliable);
        assert!(report.passed(), "unreliable reports are excluded, not failed");
    }
}

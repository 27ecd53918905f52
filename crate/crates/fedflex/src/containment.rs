//! Affine containment of the base set inside an individual flexibility set.
//!
//! Given base offsets `h₀` and a resource's offsets `hᵢ` (same facet matrix
//! `H`), the largest-trace affine image of the base set fitting inside the
//! resource's set solves
//!
//! ```text
//!     maximize   Tr(Γ)     over (γ, Γ, Λ)
//!     subject to Λ ≥ 0,  Λ H = H Γ,  Λ h₀ ≤ hᵢ − H γ
//! ```
//!
//! Existence of a nonnegative `Λ` with those two linear identities is
//! exactly the certificate that `γ + Γ·U₀(h₀) ⊆ Uᵢ(hᵢ)` (polyhedral
//! containment duality), so feasible points of this LP are containment
//! certificates and the optimum is the canonical per-resource template fit.
//!
//! # Solving through the dual
//!
//! The primal carries `17T² + T` variables, almost all of them the entries
//! of `Λ`. Its LP dual is much smaller — variables `(Y ∈ R^{4T×T}, μ ∈
//! R^{4T})`:
//!
//! ```text
//!     minimize   μᵀhᵢ
//!     subject to HᵀY = −I,  Hᵀμ = 0,  YHᵀ + μh₀ᵀ ≥ 0,  μ ≥ 0
//! ```
//!
//! and the interior-point solver hands back the primal triple in the dual's
//! multipliers: `Γ` from the `HᵀY = −I` rows, `−γ` from the `Hᵀμ = 0` rows,
//! and `Λ` (elementwise ≥ 0) from the multipliers of `YHᵀ + μh₀ᵀ ≥ 0`. The
//! recovered quantities are validated against the primal feasibility
//! identities before a certificate is returned.
//!
//! Multiple optima are possible — the trace objective does not see
//! off-diagonal entries of `Γ` directly. The interior-point path converges
//! to the analytic center of the optimal face; that selection is the
//! canonical solution consumed downstream.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::flex::{facet_matrix, FacetOffsets, HPolytope, Horizon};
use crate::linalg::{kron, unvec_cm, vec_cm};
use crate::solver::{self, ConeProgram, SolveStatus};
use crate::{Error, Result};

/// Affine map `u ↦ shift + linear · u` applied to base-set points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    /// Shift vector γ (kW), length `T`.
    pub shift: Vec<f64>,
    /// Transform Γ, `T × T`, row-major.
    pub linear: Vec<Vec<f64>>,
}

impl AffineMap {
    pub fn new(shift: Array1<f64>, linear: Array2<f64>) -> Self {
        Self {
            shift: shift.to_vec(),
            linear: linear.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn shift_vec(&self) -> Array1<f64> {
        Array1::from(self.shift.clone())
    }

    pub fn linear_mat(&self) -> Array2<f64> {
        let t = self.shift.len();
        Array2::from_shape_fn((t, t), |(i, j)| self.linear[i][j])
    }

    pub fn apply(&self, u: &Array1<f64>) -> Array1<f64> {
        self.shift_vec() + self.linear_mat().dot(u)
    }
}

/// Multipliers of the containment LP, kept for implicit differentiation.
#[derive(Debug, Clone)]
pub struct ContainmentDuals {
    /// Multiplier of the facet-alignment equalities `ΛH = HΓ` (`4T × T`).
    pub alignment: Array2<f64>,
    /// Multiplier of the offset coupling rows `Λh₀ + Hγ ≤ hᵢ` (length `4T`, ≥ 0).
    pub coupling: Array1<f64>,
    /// Multiplier of the bound `Λ ≥ 0` (`4T × 4T`, ≥ 0).
    pub nonneg: Array2<f64>,
}

/// Optimal affine fit of the base set inside one resource's set, with the
/// full primal-dual data of the underlying LP.
#[derive(Debug, Clone)]
pub struct ContainmentCertificate {
    pub map: AffineMap,
    /// Nonnegative facet-mapping matrix Λ (`4T × 4T`).
    pub facet_map: Array2<f64>,
    pub duals: ContainmentDuals,
    /// Objective value `Tr(Γ)`.
    pub objective: f64,
}

/// Solves the maximal-trace containment LP for one resource.
///
/// Requires a base set with nonempty interior (run the offsets through
/// [`crate::projection::project`] first) and returns `Error::Infeasible`
/// when the resource's set is empty.
pub fn solve_containment(
    base: &FacetOffsets,
    target: &FacetOffsets,
    horizon: &Horizon,
) -> Result<ContainmentCertificate> {
    let t = horizon.slots();
    let rows = horizon.facet_rows();
    let h_mat = facet_matrix(horizon);
    let h0 = base.as_array();
    let hi = target.as_array();

    // Dual variables x = (vec Y, μ).
    let ny = rows * t;
    let n = ny + rows;

    // Equalities: (I_T ⊗ Hᵀ) vecY = vec(−I);  Hᵀ μ = 0.
    let me = t * t + t;
    let mut eq = Array2::zeros((me, n));
    let id_t = Array2::eye(t);
    let iht = kron(&id_t, &h_mat.t().to_owned());
    eq.slice_mut(s![..t * t, ..ny]).assign(&iht);
    eq.slice_mut(s![t * t.., ny..]).assign(&h_mat.t());
    let mut eq_rhs = Array1::zeros(me);
    let neg_id = vec_cm(&(-Array2::<f64>::eye(t)));
    eq_rhs.slice_mut(s![..t * t]).assign(&neg_id);

    // Inequalities: −(H ⊗ I)vecY − (h₀ ⊗ I)μ ≤ 0;  −μ ≤ 0.
    let mi = rows * rows + rows;
    let mut g = Array2::zeros((mi, n));
    let id_rows = Array2::eye(rows);
    let hki = kron(&h_mat, &id_rows);
    g.slice_mut(s![..rows * rows, ..ny]).assign(&(-&hki));
    let h0k = kron(&h0.clone().insert_axis(ndarray::Axis(1)), &id_rows);
    g.slice_mut(s![..rows * rows, ny..]).assign(&(-&h0k));
    for i in 0..rows {
        g[[rows * rows + i, ny + i]] = -1.0;
    }
    let g_rhs = Array1::zeros(mi);

    let mut c = Array1::zeros(n);
    c.slice_mut(s![ny..]).assign(&hi);

    let prog = ConeProgram::lp(c, eq, eq_rhs, g, g_rhs);
    let sol = solver::solve_default(&prog)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Unbounded => {
            return Err(Error::Infeasible(
                "resource flexibility set is empty (no containment certificate exists)".into(),
            ))
        }
        SolveStatus::Infeasible => {
            return Err(Error::Unbounded(
                "containment LP degenerate; base set appears empty".into(),
            ))
        }
        SolveStatus::NumericFailure => {
            return Err(Error::NumericFailure("containment LP did not converge".into()))
        }
    }

    // Recover the primal triple from the dual solution's multipliers.
    let transform = unvec_cm(&sol.eq_multipliers.slice(s![..t * t]).to_owned(), t, t);
    let shift = -sol.eq_multipliers.slice(s![t * t..]).to_owned();
    let facet_map = unvec_cm(&sol.ineq_multipliers.slice(s![..rows * rows]).to_owned(), rows, rows);
    let alignment = unvec_cm(&sol.primal.slice(s![..ny]).to_owned(), rows, t);
    let coupling = sol.primal.slice(s![ny..]).mapv(|v| v.max(0.0));
    let nonneg = (alignment.dot(&h_mat.t()) + &kron_mu_h0(&coupling, &h0)).mapv(|v| v.max(0.0));

    let cert = ContainmentCertificate {
        objective: transform.diag().sum(),
        map: AffineMap::new(shift.clone(), transform.clone()),
        facet_map: facet_map.clone(),
        duals: ContainmentDuals {
            alignment,
            coupling,
            nonneg,
        },
    };

    // Re-verify the primal feasibility identities on the recovered triple.
    let align_err = crate::linalg::max_abs(&vec_cm(&(facet_map.dot(&h_mat) - h_mat.dot(&transform))));
    let couple = facet_map.dot(&h0) + h_mat.dot(&shift) - &hi;
    let couple_err = couple.iter().fold(f64::NEG_INFINITY, |a, x| a.max(*x));
    let min_entry = facet_map.iter().fold(f64::INFINITY, |a, x| a.min(*x));
    if align_err > 1e-7 || couple_err > 1e-7 || min_entry < -1e-9 {
        return Err(Error::NumericFailure(format!(
            "containment certificate out of tolerance: alignment {align_err:.2e}, \
             coupling {couple_err:.2e}, min Λ {min_entry:.2e}"
        )));
    }
    Ok(cert)
}

/// Outer product μ h₀ᵀ.
fn kron_mu_h0(mu: &Array1<f64>, h0: &Array1<f64>) -> Array2<f64> {
    let r = mu.len();
    Array2::from_shape_fn((r, r), |(i, j)| mu[i] * h0[j])
}

/// Samples base-set points and checks that their images under `map` land in
/// the target set (facet tolerance 1e-7).
pub fn verify_containment(
    base: &FacetOffsets,
    target: &FacetOffsets,
    map: &AffineMap,
    samples: usize,
    seed: u64,
    horizon: &Horizon,
) -> Result<bool> {
    let base_poly = HPolytope::new(*horizon, base.clone())?;
    let target_poly = HPolytope::new(*horizon, target.clone())?;
    let pts = base_poly.sample_interior(samples, seed)?;
    Ok(pts
        .iter()
        .all(|u| target_poly.contains_with_tol(&map.apply(u), 1e-7)))
}

//! Interior-restoring projection of base-set offsets.
//!
//! A candidate offset vector may describe a polytope with an empty interior
//! (or an empty set outright); every downstream step needs strictly
//! feasible base sets. The projection finds the nearest offsets that leave
//! room for a point with margin `ε` on every facet:
//!
//! ```text
//!     minimize   ‖h − h′‖²   over (h′, u)
//!     subject to H u + ε 1 ≤ h′
//! ```
//!
//! The problem is always feasible (h′ can grow), and the optimizer keeps
//! `h′ = h` wherever the margin already holds. The QP is solved in the
//! joint variable (h′, u); the multipliers of the margin constraints feed
//! the implicit differentiation in [`crate::sensitivity`].

use ndarray::{s, Array1, Array2};

use crate::flex::{facet_matrix, FacetOffsets, Horizon};
use crate::solver::{self, ConeProgram};
use crate::{Error, Result};

/// Threshold separating active from inactive margin constraints when
/// classifying a solution's complementarity pairs.
pub const ACTIVE_TOL: f64 = 1e-6;

/// Solution of the interior-restoring projection.
#[derive(Debug, Clone)]
pub struct ProjectedBase {
    /// Projected offsets h̃.
    pub offsets: FacetOffsets,
    /// Interior witness u: satisfies `Hu + ε1 ≤ h̃` up to solver tolerance.
    pub witness: Array1<f64>,
    /// Multipliers of the margin constraints, one per facet, ≥ 0.
    pub multipliers: Array1<f64>,
    /// Facet-wise activity classification (multiplier vs slack).
    pub active: Vec<bool>,
    /// Margin used for the solve.
    pub epsilon: f64,
}

/// Scale-relative default margin: `1e-3 ×` the median offset magnitude.
///
/// Facets pinned at zero (disconnected slots) are ignored when taking the
/// median — fleets with sparse plug-in windows zero out half the offset
/// vector and would otherwise drive the margin to the floor, leaving the
/// projected set too thin for downstream sensitivity probes.
pub fn default_epsilon(offsets: &FacetOffsets) -> f64 {
    let arr = offsets.as_array();
    let scale = crate::linalg::max_abs(&arr);
    let mut nonzero: Vec<f64> = arr
        .iter()
        .map(|v| v.abs())
        .filter(|v| *v > 1e-12 * scale.max(1.0))
        .collect();
    if nonzero.is_empty() {
        return 1e-6;
    }
    nonzero.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = nonzero[nonzero.len() / 2];
    (1e-3 * med).max(1e-6)
}

/// Projects `offsets` onto the set of offset vectors whose polytope has an
/// interior point with margin `epsilon`.
pub fn project(offsets: &FacetOffsets, epsilon: f64, horizon: &Horizon) -> Result<ProjectedBase> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("projection margin must be positive".into()));
    }
    let t = horizon.slots();
    let rows = horizon.facet_rows();
    let n = rows + t; // (h′, u)
    let h_mat = facet_matrix(horizon);

    let mut quad = Array2::zeros((n, n));
    for i in 0..rows {
        quad[[i, i]] = 2.0;
    }
    let mut lin = Array1::zeros(n);
    lin.slice_mut(s![..rows])
        .assign(&(offsets.as_array() * -2.0));

    // H u − h′ ≤ −ε
    let mut g = Array2::zeros((rows, n));
    for i in 0..rows {
        g[[i, i]] = -1.0;
        for j in 0..t {
            g[[i, rows + j]] = h_mat[[i, j]];
        }
    }
    let rhs = Array1::from_elem(rows, -epsilon);

    let prog = ConeProgram::qp(quad, lin, Array2::zeros((0, n)), Array1::zeros(0), g, rhs);
    let sol = solver::solve_default(&prog)?;
    if !sol.is_optimal() && sol.status != solver::SolveStatus::NumericFailure {
        return Err(Error::NumericFailure(format!(
            "projection QP ended with {:?}",
            sol.status
        )));
    }

    let mut projected = sol.primal.slice(s![..rows]).to_owned();
    let mut witness = sol.primal.slice(s![rows..]).to_owned();
    let mut multipliers = sol.ineq_multipliers.clone();
    let slack = h_mat.dot(&witness) + epsilon - &projected;
    let active: Vec<bool> = multipliers
        .iter()
        .zip(slack.iter())
        .map(|(l, g)| *l > g.abs())
        .collect();

    // Active-set polish. The optimal face of this QP is often weakly active
    // (zero multipliers on the boundary), where an interior-point method
    // only reaches √tol accuracy in the primal variables. On the classified
    // active set the exact optimum has a closed form: inactive offsets stay
    // put, active ones are the least-squares fit h̃_A = H_A u + ε. The
    // polish verifies the full KKT system of the polished point, which is
    // sufficient for optimality of this convex QP — so a verified polish
    // also rescues solves that stalled just short of tolerance.
    match polish(&active, &h_mat, &offsets.as_array(), &witness, epsilon) {
        Some((p_off, p_wit, p_mult)) => {
            projected = p_off;
            witness = p_wit;
            multipliers = p_mult;
        }
        None => {
            if !sol.is_optimal() {
                return Err(Error::NumericFailure(
                    "projection QP stalled and the active-set polish failed".into(),
                ));
            }
        }
    }

    Ok(ProjectedBase {
        offsets: FacetOffsets::new(projected, horizon)?,
        witness,
        multipliers,
        active,
        epsilon,
    })
}

fn polish(
    active: &[bool],
    h_mat: &Array2<f64>,
    h0: &Array1<f64>,
    witness_seed: &Array1<f64>,
    epsilon: f64,
) -> Option<(Array1<f64>, Array1<f64>, Array1<f64>)> {
    use ndarray_linalg::LeastSquaresSvd;
    let rows = h0.len();
    let t = h_mat.ncols();
    let act: Vec<usize> = (0..rows).filter(|&j| active[j]).collect();
    if act.is_empty() {
        // Already feasible up to solver noise; verify with the witness.
        let resid = h_mat.dot(witness_seed) + epsilon - h0;
        if resid.iter().all(|v| *v <= 1e-7) {
            return Some((h0.clone(), witness_seed.clone(), Array1::zeros(rows)));
        }
        return None;
    }
    let h_act = Array2::from_shape_fn((act.len(), t), |(k, j)| h_mat[[act[k], j]]);
    // Solve for the correction around the interior-point witness so the
    // polished u stays near the returned face point.
    let target = Array1::from_shape_fn(act.len(), |k| {
        h0[act[k]] - epsilon - h_act.row(k).dot(witness_seed)
    });
    let delta = h_act.least_squares(&target).ok()?.solution;
    let u = witness_seed + &delta;
    let hu = h_mat.dot(&u);
    let mut offsets = h0.clone();
    let mut mult = Array1::zeros(rows);
    for &j in &act {
        offsets[j] = hu[j] + epsilon;
        mult[j] = 2.0 * (offsets[j] - h0[j]);
    }
    // Stationarity in u: Hᵀλ = 0 holds through the least-squares normal
    // equations; verify numerically along with the rest of the KKT system.
    let scale = 1.0 + crate::linalg::max_abs(&mult);
    let stat = crate::linalg::max_abs(&h_mat.t().dot(&mult));
    if stat > 1e-8 * scale {
        return None;
    }
    // Consistency: active multipliers nonnegative, inactive rows feasible,
    // and the polish only ever moves offsets outward or not at all.
    for j in 0..rows {
        if active[j] {
            if mult[j] < -1e-9 {
                return None;
            }
        } else if hu[j] + epsilon - offsets[j] > 1e-9 {
            return None;
        }
    }
    Some((offsets, u, mult))
}

//! Base-set volume and its gradient by recursive one-dimensional
//! integration.
//!
//! In cumulative-energy coordinates `x(t) = Σ_{τ≤t} u(τ)Δt` the polytope
//! `{Hu ≤ h}` becomes a chain: each `x(t)` must lie in the state-dependent
//! window `[a_t(x(t−1)), b_t(x(t−1))]` with
//!
//! ```text
//!     a_t(x) = max(x + u̲(t)Δt, x̲(t))
//!     b_t(x) = min(x + ū(t)Δt, x̄(t))
//! ```
//!
//! so the T-dimensional volume integral factors into nested 1-D integrals
//! over the accumulated feasible mass `R_t(x)`. Each level is discretized
//! by a Riemann sum on a fixed interval `I_t` (the tightest state-free
//! bound on `x(t)`), with a midpoint grid `x⁽ᵏ⁾ = lo + (k−½)·dx` and the
//! half-open indicator `a ≤ x < b` — the pair avoids double counting at
//! shared cell boundaries and makes results bit-reproducible.
//!
//! The x-space result divides by `Δtᵀ` (the Jacobian of `u ↦ x`) to give
//! the power-space volume used everywhere else.
//!
//! The gradient with respect to each facet offset follows from the Leibniz
//! rule applied at the one level where the offset appears: differentiating
//! moves a point mass onto the binding boundary, which then propagates
//! through the remaining levels with the standard recursion. For the
//! energy bounds the pinned point sits at the bound itself; for the power
//! bounds the moving boundary is `x⁽ᵏ⁾ + ū(t)Δt` (one pinned point per
//! source cell) and carries the boundary speed `Δt`.

use ndarray::Array1;
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use crate::flex::{FacetOffsets, Horizon};
use crate::Result;

/// Per-level discretization of the recursion.
#[derive(Debug, Clone)]
pub struct VolumeGrid {
    /// Requested grid step Δx (kWh).
    pub dx: f64,
    /// Per-level fixed intervals `I_t`.
    pub intervals: Vec<(f64, f64)>,
    /// Per-level point counts `K_t = ceil(|I_t|/dx) ≥ 1`.
    pub counts: Vec<usize>,
    /// Per-level cell widths `|I_t| / K_t ≤ Δx`: the cells tile each
    /// interval exactly, so every midpoint lies strictly inside it even
    /// when the level is much narrower than the requested step.
    pub steps: Vec<f64>,
}

impl VolumeGrid {
    /// Builds the grid for the given offsets. Returns `None` when some
    /// interval is empty, in which case the volume is zero.
    pub fn new(offsets: &FacetOffsets, horizon: &Horizon, dx: f64) -> Option<Self> {
        assert!(dx > 0.0, "grid step must be positive");
        let t = horizon.slots();
        let dt = horizon.dt();
        let mut intervals = Vec::with_capacity(t);
        let mut counts = Vec::with_capacity(t);
        let mut steps = Vec::with_capacity(t);
        let mut cum_lo = 0.0_f64;
        let mut cum_hi = 0.0_f64;
        for k in 0..t {
            cum_lo += offsets.u_lower(k) * dt;
            cum_hi += offsets.u_upper(k) * dt;
            let lo = offsets.x_lower(k).max(cum_lo);
            let hi = offsets.x_upper(k).min(cum_hi);
            if hi < lo {
                return None;
            }
            intervals.push((lo, hi));
            let count = (((hi - lo) / dx).ceil() as usize).max(1);
            counts.push(count);
            steps.push((hi - lo) / count as f64);
        }
        Some(Self {
            dx,
            intervals,
            counts,
            steps,
        })
    }

    /// Midpoint grid of level `t` (zero-based).
    pub fn points(&self, t: usize) -> Vec<f64> {
        let (lo, _) = self.intervals[t];
        let step = self.steps[t];
        (0..self.counts[t])
            .map(|k| lo + (k as f64 + 0.5) * step)
            .collect()
    }
}

/// Cached per-level grids and accumulated-mass values from a volume
/// evaluation, reused by the gradient recursion.
#[derive(Debug, Clone)]
pub struct MassTables {
    /// Requested grid step.
    pub dx: f64,
    /// Per-level cell widths.
    pub steps: Vec<f64>,
    /// Midpoints per level.
    pub grids: Vec<Vec<f64>>,
    /// Accumulated mass values per level, possibly rescaled (see
    /// `cum_log`).
    pub values: Vec<Vec<f64>>,
    /// Cumulative log of the normalization factors applied up to and
    /// including each level; zero when no rescaling occurred.
    pub cum_log: Vec<f64>,
}

impl MassTables {
    pub fn empty(dx: f64) -> Self {
        Self {
            dx,
            steps: Vec::new(),
            grids: Vec::new(),
            values: Vec::new(),
            cum_log: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }
}

/// Default grid step: the widest level interval divided by `grid_points`.
pub fn default_dx(offsets: &FacetOffsets, horizon: &Horizon, grid_points: usize) -> f64 {
    assert!(grid_points >= 2);
    match VolumeGrid::new(offsets, horizon, 1.0) {
        Some(g) => {
            let widest = g
                .intervals
                .iter()
                .map(|(lo, hi)| hi - lo)
                .fold(0.0_f64, f64::max);
            if widest > 0.0 {
                widest / grid_points as f64
            } else {
                1e-6
            }
        }
        None => 1e-6,
    }
}

fn window(offsets: &FacetOffsets, dt: f64, level: usize, prev_state: f64) -> (f64, f64) {
    let a = (prev_state + offsets.u_lower(level) * dt).max(offsets.x_lower(level));
    let b = (prev_state + offsets.u_upper(level) * dt).min(offsets.x_upper(level));
    (a, b)
}

/// Estimates the power-space volume of the polytope and returns the mass
/// tables for gradient reuse. An empty level interval yields exactly zero
/// volume with empty tables.
pub fn volume_estimate(
    offsets: &FacetOffsets,
    horizon: &Horizon,
    dx: f64,
) -> Result<(f64, MassTables)> {
    let t = horizon.slots();
    let dt = horizon.dt();
    let grid = match VolumeGrid::new(offsets, horizon, dx) {
        Some(g) => g,
        None => return Ok((0.0, MassTables::empty(dx))),
    };

    let mut grids: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut cum_log: Vec<f64> = Vec::with_capacity(t);
    let mut log_scale = 0.0_f64;

    // Level 1 seeds from the point mass at x(0) = 0.
    let pts = grid.points(0);
    let (a1, b1) = window(offsets, dt, 0, 0.0);
    let vals: Vec<f64> = pts
        .iter()
        .map(|&x| if a1 <= x && x < b1 { 1.0 } else { 0.0 })
        .collect();
    grids.push(pts);
    values.push(vals);
    cum_log.push(0.0);

    for level in 1..t {
        let pts = grid.points(level);
        let prev_pts = &grids[level - 1];
        let prev_vals = &values[level - 1];
        let mut vals = vec![0.0_f64; pts.len()];
        for (&xp, &w) in prev_pts.iter().zip(prev_vals.iter()) {
            if w == 0.0 {
                continue;
            }
            let (a, b) = window(offsets, dt, level, xp);
            if a >= b {
                continue;
            }
            for (k, &x) in pts.iter().enumerate() {
                if a <= x && x < b {
                    vals[k] += w;
                }
            }
        }
        for v in vals.iter_mut() {
            *v *= grid.steps[level - 1];
        }
        // Rescale before the values drift out of f64 range; the volume is
        // recovered through the accumulated log factor.
        let vmax = vals.iter().fold(0.0_f64, |acc, v| acc.max(*v));
        if vmax > 0.0 && !(1e-250..=1e250).contains(&vmax) {
            for v in vals.iter_mut() {
                *v /= vmax;
            }
            log_scale += vmax.ln();
        }
        grids.push(pts);
        values.push(vals);
        cum_log.push(log_scale);
    }

    let raw: f64 = values[t - 1].iter().sum::<f64>() * grid.steps[t - 1];
    let vol_x = raw * log_scale.exp();
    let vol_u = vol_x / dt.powi(t as i32);
    Ok((
        vol_u,
        MassTables {
            dx,
            steps: grid.steps,
            grids,
            values,
            cum_log,
        },
    ))
}

/// Propagates a set of point masses sitting at level `level` (zero-based)
/// through levels `level+1 .. T` and integrates. `level = T−1` integrates
/// the masses directly.
fn propagate_comb(
    comb: &[(f64, f64)],
    level: usize,
    offsets: &FacetOffsets,
    horizon: &Horizon,
    tables: &MassTables,
) -> f64 {
    let t = horizon.slots();
    let dt = horizon.dt();
    if level + 1 == t {
        return comb.iter().map(|(_, w)| w).sum();
    }
    // Dirac-to-grid transition: no dx factor.
    let pts = &tables.grids[level + 1];
    let mut vals = vec![0.0_f64; pts.len()];
    for &(pos, w) in comb {
        if w == 0.0 {
            continue;
        }
        let (a, b) = window(offsets, dt, level + 1, pos);
        if a >= b {
            continue;
        }
        for (k, &x) in pts.iter().enumerate() {
            if a <= x && x < b {
                vals[k] += w;
            }
        }
    }
    for lv in (level + 2)..t {
        let prev_pts = &tables.grids[lv - 1];
        let pts = &tables.grids[lv];
        let step_prev = tables.steps[lv - 1];
        let mut next = vec![0.0_f64; pts.len()];
        for (&xp, &w) in prev_pts.iter().zip(vals.iter()) {
            if w == 0.0 {
                continue;
            }
            let (a, b) = window(offsets, dt, lv, xp);
            if a >= b {
                continue;
            }
            for (k, &x) in pts.iter().enumerate() {
                if a <= x && x < b {
                    next[k] += w * step_prev;
                }
            }
        }
        vals = next;
    }
    vals.iter().sum::<f64>() * tables.steps[t - 1]
}

/// Gradient of the power-space volume with respect to the stored offset
/// vector `[x̄, −x̲, ū, −u̲]`.
///
/// Must be called with tables produced by [`volume_estimate`] at the same
/// offsets and grid step. Returns zeros when the volume is zero.
pub fn volume_gradient(
    offsets: &FacetOffsets,
    horizon: &Horizon,
    tables: &MassTables,
) -> Array1<f64> {
    let t = horizon.slots();
    let dt = horizon.dt();
    let rows = horizon.facet_rows();
    let mut grad = Array1::<f64>::zeros(rows);
    if tables.is_empty() {
        return grad;
    }
    let jac = dt.powi(t as i32);

    // The mass feeding level `lv` as a list of (position, weight·dx) pairs;
    // level 0 is fed by the unit point mass at x(0) = 0.
    let incoming = |lv: usize| -> Vec<(f64, f64)> {
        if lv == 0 {
            vec![(0.0, 1.0)]
        } else {
            let step_prev = tables.steps[lv - 1];
            tables.grids[lv - 1]
                .iter()
                .zip(tables.values[lv - 1].iter())
                .map(|(&x, &v)| (x, v * step_prev))
                .collect()
        }
    };
    let seed_scale = |lv: usize| -> f64 {
        if lv == 0 {
            1.0
        } else {
            tables.cum_log[lv - 1].exp()
        }
    };

    for lv in 0..t {
        let feed = incoming(lv);
        let scale = seed_scale(lv) / jac;
        let xu = offsets.x_upper(lv);
        let xl = offsets.x_lower(lv);
        let uu = offsets.u_upper(lv) * dt;
        let ul = offsets.u_lower(lv) * dt;

        // x̄(lv): the upper boundary binds where x̄ < x + ūΔt.
        let s_xu: f64 = feed
            .iter()
            .filter(|&&(x, _)| xu < x + uu && (x + ul).max(xl) <= xu)
            .map(|&(_, w)| w)
            .sum();
        if s_xu != 0.0 {
            grad[lv] = scale * propagate_comb(&[(xu, s_xu)], lv, offsets, horizon, tables);
        }

        // x̲(lv): lower boundary binds where x̲ > x + u̲Δt; volume shrinks
        // as x̲ grows, and the stored offset is −x̲.
        let s_xl: f64 = feed
            .iter()
            .filter(|&&(x, _)| xl > x + ul && xl <= (x + uu).min(xu))
            .map(|&(_, w)| w)
            .sum();
        if s_xl != 0.0 {
            grad[t + lv] = scale * propagate_comb(&[(xl, s_xl)], lv, offsets, horizon, tables);
        }

        // ū(lv): the moving boundary x + ūΔt binds where it undercuts x̄;
        // one pinned point per source cell, boundary speed Δt.
        let comb_uu: Vec<(f64, f64)> = feed
            .iter()
            .filter(|&&(x, _)| x + uu < xu && (x + ul).max(xl) <= x + uu)
            .map(|&(x, w)| (x + uu, w * dt))
            .collect();
        if !comb_uu.is_empty() {
            grad[2 * t + lv] = scale * propagate_comb(&comb_uu, lv, offsets, horizon, tables);
        }

        // u̲(lv): mirrored; the stored offset is −u̲.
        let comb_ul: Vec<(f64, f64)> = feed
            .iter()
            .filter(|&&(x, _)| x + ul > xl && x + ul <= (x + uu).min(xu))
            .map(|&(x, w)| (x + ul, w * dt))
            .collect();
        if !comb_ul.is_empty() {
            grad[3 * t + lv] = scale * propagate_comb(&comb_ul, lv, offsets, horizon, tables);
        }
    }
    grad
}

/// Hit-and-miss Monte Carlo volume oracle over the power box
/// `∏ [u̲(t), ū(t)]`, independent of the recursive estimator. Returns the
/// estimate and its standard error.
pub fn volume_oracle_mc(
    offsets: &FacetOffsets,
    horizon: &Horizon,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let t = horizon.slots();
    let dt = horizon.dt();
    let mut box_vol = 1.0_f64;
    for k in 0..t {
        let w = offsets.u_upper(k) - offsets.u_lower(k);
        if w <= 0.0 {
            return (0.0, 0.0);
        }
        box_vol *= w;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let mut x = 0.0_f64;
        let mut ok = true;
        for k in 0..t {
            let u = rng.random_range(offsets.u_lower(k)..offsets.u_upper(k));
            x += u * dt;
            if x > offsets.x_upper(k) || x < offsets.x_lower(k) {
                ok = false;
                break;
            }
        }
        if ok {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let stderr = box_vol * (p * (1.0 - p) / samples as f64).sqrt();
    (box_vol * p, stderr)
}

//! Grid-service optimizations over the aggregate flexibility set, with
//! centralized best-case benchmarks.
//!
//! Two tasks: flattening the metered peak of a building-plus-fleet site,
//! and minimizing energy cost against a price profile. Each runs (a) over
//! an aggregate model — the optimization is posed in the lifted base-set
//! variable `v`, `u = s + S v`, `H v ≤ h̃`, so the aggregate set's facets
//! are never materialized — and (b) as a centralized benchmark with every
//! individual flexibility set visible, which lower-bounds anything an
//! inner approximation can achieve.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::aggregation::AggregateModel;
use crate::flex::{facet_matrix, FacetOffsets, Horizon};
use crate::solver::{self, ConeProgram};
use crate::{Error, Result};

/// Baseline site load (kW per slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub values: Vec<f64>,
}

impl LoadProfile {
    pub fn new(values: Vec<f64>, horizon: &Horizon) -> Result<Self> {
        validate_profile(&values, horizon)?;
        Ok(Self { values })
    }

    pub fn as_array(&self) -> Array1<f64> {
        Array1::from(self.values.clone())
    }
}

/// Energy price ($ per kWh per slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceProfile {
    pub values: Vec<f64>,
}

impl PriceProfile {
    pub fn new(values: Vec<f64>, horizon: &Horizon) -> Result<Self> {
        validate_profile(&values, horizon)?;
        Ok(Self { values })
    }

    pub fn as_array(&self) -> Array1<f64> {
        Array1::from(self.values.clone())
    }
}

fn validate_profile(values: &[f64], horizon: &Horizon) -> Result<()> {
    if values.len() != horizon.slots() {
        return Err(Error::RowCountMismatch {
            expected: horizon.slots(),
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("profile entries must be finite".into()));
    }
    Ok(())
}

/// Which pipeline produced a dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodTag {
    /// Aggregate model built on the fleet-average base set.
    Avg,
    /// Aggregate model built on the collaboratively optimized base set.
    Proposed,
    /// Full-information benchmark over the individual sets.
    Centralized,
}

/// Outcome of one dispatch optimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchResult {
    pub method: MethodTag,
    /// Aggregate power profile (kW).
    pub profile: Vec<f64>,
    pub objective: f64,
    /// Filled in by [`gap_metrics`].
    pub gap_vs_centralized: Option<f64>,
}

impl DispatchResult {
    pub fn profile_vec(&self) -> Array1<f64> {
        Array1::from(self.profile.clone())
    }
}

fn expect_optimal(sol: &solver::PrimalDualSolution, what: &str) -> Result<()> {
    match sol.status {
        solver::SolveStatus::Optimal => Ok(()),
        solver::SolveStatus::Infeasible => Err(Error::Infeasible(what.into())),
        solver::SolveStatus::Unbounded => Err(Error::Unbounded(what.into())),
        solver::SolveStatus::NumericFailure => Err(Error::NumericFailure(what.into())),
    }
}

/// Minimizes the site's worst-slot power magnitude `‖u + p‖∞` over the
/// aggregate set.
pub fn peak_min_over_aggregate(
    model: &AggregateModel,
    load: &LoadProfile,
    horizon: &Horizon,
    method: MethodTag,
) -> Result<DispatchResult> {
    let t = horizon.slots();
    let rows = horizon.facet_rows();
    let h_mat = facet_matrix(horizon);
    let s_mat = model.transform_mat();
    let shift = model.shift_vec();
    let p = load.as_array();
    // variables (v, peak): ±(s + Sv + p) ≤ peak, Hv ≤ h̃
    let nv = t + 1;
    let mut g = Array2::zeros((2 * t + rows, nv));
    let mut rhs = Array1::zeros(2 * t + rows);
    for i in 0..t {
        for j in 0..t {
            g[[i, j]] = s_mat[[i, j]];
            g[[t + i, j]] = -s_mat[[i, j]];
        }
        g[[i, t]] = -1.0;
        g[[t + i, t]] = -1.0;
        rhs[i] = -shift[i] - p[i];
        rhs[t + i] = shift[i] + p[i];
    }
    for r in 0..rows {
        for j in 0..t {
            g[[2 * t + r, j]] = h_mat[[r, j]];
        }
        rhs[2 * t + r] = model.offsets.as_slice()[r];
    }
    let mut c = Array1::zeros(nv);
    c[t] = 1.0;
    let prog = ConeProgram::lp_ineq(c, g, rhs);
    let sol = solver::solve_default(&prog)?;
    expect_optimal(&sol, "peak minimization over the aggregate set")?;
    let v = sol.primal.slice(s![..t]).to_owned();
    debug_assert!(
        (h_mat.dot(&v) - model.offsets.as_array())
            .iter()
            .all(|x| *x <= 1e-6),
        "lifted variable escaped the base set"
    );
    let u = &shift + &s_mat.dot(&v);
    Ok(DispatchResult {
        method,
        profile: u.to_vec(),
        objective: sol.primal[t],
        gap_vs_centralized: None,
    })
}

/// Full-information peak minimization: every resource dispatched
/// individually.
pub fn peak_min_centralized(
    member_offsets: &[FacetOffsets],
    load: &LoadProfile,
    horizon: &Horizon,
) -> Result<DispatchResult> {
    let t = horizon.slots();
    let rows = horizon.facet_rows();
    let n = member_offsets.len();
    let h_mat = facet_matrix(horizon);
    let p = load.as_array();
    // variables (u_1 … u_n, peak)
    let nv = n * t + 1;
    let mut g = Array2::zeros((2 * t + n * rows, nv));
    let mut rhs = Array1::zeros(2 * t + n * rows);
    for i in 0..t {
        for m in 0..n {
            g[[i, m * t + i]] = 1.0;
            g[[t + i, m * t + i]] = -1.0;
        }
        g[[i, nv - 1]] = -1.0;
        g[[t + i, nv - 1]] = -1.0;
        rhs[i] = -p[i];
        rhs[t + i] = p[i];
    }
    for m in 0..n {
        for r in 0..rows {
            for j in 0..t {
                g[[2 * t + m * rows + r, m * t + j]] = h_mat[[r, j]];
            }
            rhs[2 * t + m * rows + r] = member_offsets[m].as_slice()[r];
        }
    }
    let mut c = Array1::zeros(nv);
    c[nv - 1] = 1.0;
    let prog = ConeProgram::lp_ineq(c, g, rhs);
    let sol = solver::solve_default(&prog)?;
    expect_optimal(&sol, "centralized peak minimization")?;
    let mut total = Array1::zeros(t);
    for m in 0..n {
        total = total + sol.primal.slice(s![m * t..(m + 1) * t]).to_owned();
    }
    Ok(DispatchResult {
        method: MethodTag::Centralized,
        profile: total.to_vec(),
        objective: sol.primal[nv - 1],
        gap_vs_centralized: Some(0.0),
    })
}

/// Minimizes the total energy cost `(πᵀu)·Δt` over the aggregate set.
pub fn cost_min_over_aggregate(
    model: &AggregateModel,
    price: &PriceProfile,
    horizon: &Horizon,
    method: MethodTag,
) -> Result<DispatchResult> {
    let t = horizon.slots();
    let rows = horizon.facet_rows();
    let h_mat = facet_matrix(horizon);
    let s_mat = model.transform_mat();
    let shift = model.shift_vec();
    let pi = price.as_array();
    let dt = horizon.dt();
    // min πᵀ(s + Sv)Δt over Hv ≤ h̃
    let c = s_mat.t().dot(&pi) * dt;
    let mut g = Array2::zeros((rows, t));
    for r in 0..rows {
        for j in 0..t {
            g[[r, j]] = h_mat[[r, j]];
        }
    }
    let prog = ConeProgram::lp_ineq(c, g, model.offsets.as_array());
    let sol = solver::solve_default(&prog)?;
    expect_optimal(&sol, "cost minimization over the aggregate set")?;
    let u = &shift + &s_mat.dot(&sol.primal);
    let objective = pi.dot(&u) * dt;
    Ok(DispatchResult {
        method,
        profile: u.to_vec(),
        objective,
        gap_vs_centralized: None,
    })
}

/// Full-information cost minimization.
pub fn cost_min_centralized(
    member_offsets: &[FacetOffsets],
    price: &PriceProfile,
    horizon: &Horizon,
) -> Result<DispatchResult> {
    let t = horizon.slots();
    let rows = horizon.facet_rows();
    let n = member_offsets.len();
    let h_mat = facet_matrix(horizon);
    let pi = price.as_array();
    let dt = horizon.dt();
    let nv = n * t;
    let mut g = Array2::zeros((n * rows, nv));
    let mut rhs = Array1::zeros(n * rows);
    for m in 0..n {
        for r in 0..rows {
            for j in 0..t {
                g[[m * rows + r, m * t + j]] = h_mat[[r, j]];
            }
            rhs[m * rows + r] = member_offsets[m].as_slice()[r];
        }
    }
    let mut c = Array1::zeros(nv);
    for m in 0..n {
        for j in 0..t {
            c[m * t + j] = pi[j] * dt;
        }
    }
    let prog = ConeProgram::lp_ineq(c, g, rhs);
    let sol = solver::solve_default(&prog)?;
    expect_optimal(&sol, "centralized cost minimization")?;
    let mut total = Array1::zeros(t);
    for m in 0..n {
        total = total + sol.primal.slice(s![m * t..(m + 1) * t]).to_owned();
    }
    Ok(DispatchResult {
        method: MethodTag::Centralized,
        profile: total.to_vec(),
        objective: pi.dot(&total) * dt,
        gap_vs_centralized: Some(0.0),
    })
}

/// Relative gaps against the centralized benchmark and the improvement of
/// the optimized base set over the averaged one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub gap_avg: f64,
    pub gap_proposed: f64,
    /// `(obj_avg − obj_proposed) / obj_avg`, the headline improvement.
    pub improvement: f64,
    /// Set when the benchmark objective is too close to zero for relative
    /// gaps; all fields are then absolute differences.
    pub absolute_mode: bool,
}

/// Computes gaps from one result per method, filling
/// `gap_vs_centralized` in place.
pub fn gap_metrics(results: &mut [DispatchResult]) -> Result<GapReport> {
    let find = |tag: MethodTag, rs: &[DispatchResult]| -> Result<f64> {
        rs.iter()
            .find(|r| r.method == tag)
            .map(|r| r.objective)
            .ok_or_else(|| Error::InvalidInput(format!("missing {tag:?} result")))
    };
    let best = find(MethodTag::Centralized, results)?;
    let avg = find(MethodTag::Avg, results)?;
    let proposed = find(MethodTag::Proposed, results)?;

    let absolute_mode = best.abs() < 1e-9;
    let gap = |obj: f64| {
        if absolute_mode {
            obj - best
        } else {
            (obj - best) / best.abs()
        }
    };
    let gap_avg = gap(avg);
    let gap_proposed = gap(proposed);
    let improvement = if avg.abs() < 1e-9 {
        avg - proposed
    } else {
        (avg - proposed) / avg.abs() * avg.signum()
    };
    for r in results.iter_mut() {
        r.gap_vs_centralized = Some(gap(r.objective));
    }
    Ok(GapReport {
        gap_avg,
        gap_proposed,
        improvement,
        absolute_mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::aggregate;
    use crate::flex::{fleet_offsets, sample_fleet};
    use crate::projection::{default_epsilon, project};

    fn horizon(t: usize) -> Horizon {
        Horizon::new(t, 1.0).unwrap()
    }

    fn box_model(lo: f64, hi: f64, hz: &Horizon) -> AggregateModel {
        let t = hz.slots();
        AggregateModel {
            shift: vec![0.0; t],
            transform: (0..t)
                .map(|i| (0..t).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            offsets: FacetOffsets::power_box(lo, hi, hz),
        }
    }

    #[test]
    fn peak_box_analytic() {
        let hz = horizon(2);
        let model = box_model(-1.0, 1.0, &hz);
        let load = LoadProfile::new(vec![2.0, 0.0], &hz).unwrap();
        let r = peak_min_over_aggregate(&model, &load, &hz, MethodTag::Proposed).unwrap();
        assert!((r.objective - 1.0).abs() < 1e-6, "peak {}", r.objective);
        assert!((r.profile[0] + 1.0).abs() < 1e-5, "u(1) = {}", r.profile[0]);
    }

    #[test]
    fn peak_zero_load_with_zero_in_set() {
        let hz = horizon(3);
        let model = box_model(-1.0, 1.0, &hz);
        let load = LoadProfile::new(vec![0.0; 3], &hz).unwrap();
        let r = peak_min_over_aggregate(&model, &load, &hz, MethodTag::Avg).unwrap();
        assert!(r.objective.abs() < 1e-7, "peak {}", r.objective);
    }

    #[test]
    fn peak_matches_grid_search_t2() {
        let hz = horizon(2);
        let model = box_model(-0.8, 0.6, &hz);
        let load = LoadProfile::new(vec![1.3, -0.4], &hz).unwrap();
        let r = peak_min_over_aggregate(&model, &load, &hz, MethodTag::Proposed).unwrap();
        // dense grid over the box, step 0.01
        let mut best = f64::INFINITY;
        let n = ((0.6 + 0.8) / 0.01) as usize + 1;
        for i in 0..n {
            for j in 0..n {
                let u = [-0.8 + i as f64 * 0.01, -0.8 + j as f64 * 0.01];
                if u[0] > 0.6 || u[1] > 0.6 {
                    continue;
                }
                let peak = (u[0] + 1.3).abs().max((u[1] - 0.4).abs());
                best = best.min(peak);
            }
        }
        assert!(
            (r.objective - best).abs() <= 0.011,
            "LP peak {} vs grid {best}",
            r.objective
        );
    }

    #[test]
    fn cost_symmetric_box_constant_price() {
        let hz = horizon(3);
        let model = box_model(-0.75, 0.75, &hz);
        let price = PriceProfile::new(vec![0.2; 3], &hz).unwrap();
        let r = cost_min_over_aggregate(&model, &price, &hz, MethodTag::Proposed).unwrap();
        let expect = -0.2 * 0.75 * 3.0;
        assert!((r.objective - expect).abs() < 1e-6, "cost {}", r.objective);
    }

    #[test]
    fn cost_zero_price_is_zero() {
        let hz = horizon(2);
        let model = box_model(-1.0, 1.0, &hz);
        let price = PriceProfile::new(vec![0.0, 0.0], &hz).unwrap();
        let r = cost_min_over_aggregate(&model, &price, &hz, MethodTag::Avg).unwrap();
        assert!(r.objective.abs() < 1e-9);
    }

    #[test]
    fn cost_two_price_charges_in_cheap_slot() {
        let hz = horizon(2);
        // a total-energy demand of 1 must be met; the optimizer should buy
        // it all in the cheap slot
        let t = hz.slots();
        let offsets =
            FacetOffsets::from_bounds(&[1.5, 1.0], &[-1.5, 1.0], &[1.0; 2], &[-1.0; 2], &hz)
                .unwrap();
        let model = AggregateModel {
            shift: vec![0.0; t],
            transform: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            offsets,
        };
        let price = PriceProfile::new(vec![0.1, 0.9], &hz).unwrap();
        let r = cost_min_over_aggregate(&model, &price, &hz, MethodTag::Proposed).unwrap();
        assert!(r.profile[0] > 0.99, "cheap slot should charge: {:?}", r.profile);
        assert!(r.profile[1].abs() < 1e-6, "pricey slot should idle: {:?}", r.profile);
        assert!((r.objective - 0.1).abs() < 1e-6, "cost {}", r.objective);
    }

    #[test]
    fn centralized_lower_bounds_aggregate_methods() {
        let hz = horizon(4);
        let fleet = sample_fleet(5, &hz, 61);
        let offs = fleet_offsets(&fleet, &hz).unwrap();
        let mean = crate::flex::mean_offsets(&offs, &hz).unwrap();
        let base = project(&mean, default_epsilon(&mean), &hz).unwrap().offsets;
        let out = aggregate(&offs, &base, &hz, 3).unwrap();
        let load = LoadProfile::new(vec![20.0, 5.0, 12.0, 8.0], &hz).unwrap();
        let agg = peak_min_over_aggregate(&out.model, &load, &hz, MethodTag::Avg).unwrap();
        let cen = peak_min_centralized(&offs, &load, &hz).unwrap();
        assert!(
            cen.objective <= agg.objective + 1e-7,
            "centralized {} > aggregate {}",
            cen.objective,
            agg.objective
        );
        let price = PriceProfile::new(vec![0.3, 0.1, 0.5, 0.2], &hz).unwrap();
        let agg_c = cost_min_over_aggregate(&out.model, &price, &hz, MethodTag::Avg).unwrap();
        let cen_c = cost_min_centralized(&offs, &price, &hz).unwrap();
        assert!(cen_c.objective <= agg_c.objective + 1e-7);
    }

    #[test]
    fn single_member_aggregate_equals_centralized_on_exact_set() {
        let hz = horizon(2);
        // one resource whose set IS the base box: the aggregate model is
        // exact, so both routes land on the same optimum
        let base = FacetOffsets::power_box(-1.0, 1.0, &hz);
        let members = vec![base.clone()];
        let out = aggregate(&members, &base, &hz, 4).unwrap();
        let load = LoadProfile::new(vec![1.5, -0.5], &hz).unwrap();
        let a = peak_min_over_aggregate(&out.model, &load, &hz, MethodTag::Proposed).unwrap();
        let c = peak_min_centralized(&members, &load, &hz).unwrap();
        assert!((a.objective - c.objective).abs() < 1e-6);
        let price = PriceProfile::new(vec![0.4, 0.6], &hz).unwrap();
        let ac = cost_min_over_aggregate(&out.model, &price, &hz, MethodTag::Proposed).unwrap();
        let cc = cost_min_centralized(&members, &price, &hz).unwrap();
        assert!((ac.objective - cc.objective).abs() < 1e-6);
    }

    #[test]
    fn gap_metrics_examples() {
        let mk = |method, objective| DispatchResult {
            method,
            profile: vec![0.0],
            objective,
            gap_vs_centralized: None,
        };
        // equal objectives → zero gap
        let mut rs = vec![
            mk(MethodTag::Centralized, 2.0),
            mk(MethodTag::Avg, 2.0),
            mk(MethodTag::Proposed, 2.0),
        ];
        let rep = gap_metrics(&mut rs).unwrap();
        assert_eq!(rep.gap_avg, 0.0);
        assert_eq!(rep.gap_proposed, 0.0);

        // the 1.3× / 1.07× pattern: improvement ≈ 17.7%
        let mut rs = vec![
            mk(MethodTag::Centralized, 1.0),
            mk(MethodTag::Avg, 1.3),
            mk(MethodTag::Proposed, 1.07),
        ];
        let rep = gap_metrics(&mut rs).unwrap();
        assert!((rep.gap_avg - 0.3).abs() < 1e-12);
        assert!((rep.gap_proposed - 0.07).abs() < 1e-12);
        assert!((rep.improvement - (1.3 - 1.07) / 1.3).abs() < 1e-12);
        assert!(!rep.absolute_mode);
        assert_eq!(rs[1].gap_vs_centralized, Some(rep.gap_avg));

        // near-zero benchmark → absolute gaps
        let mut rs = vec![
            mk(MethodTag::Centralized, 0.0),
            mk(MethodTag::Avg, 0.4),
            mk(MethodTag::Proposed, 0.1),
        ];
        let rep = gap_metrics(&mut rs).unwrap();
        assert!(rep.absolute_mode);
        assert!((rep.gap_avg - 0.4).abs() < 1e-12);
    }
}

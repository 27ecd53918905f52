//! Individual flexibility sets and fleet generation.
//!
//! A demand-side resource's feasible charging profiles over `T` slots form
//! the polytope `{u ∈ Rᵀ : H u ≤ h}` with the fixed facet matrix
//! `H = [L; −L; I; −I]`, where `L` is lower triangular with entries `Δt`
//! (so `L u` is the cumulative energy). The offset vector `h` stacks the
//! four bound families `[x̄, −x̲, ū, −u̲]`, each of length `T`. The facet
//! matrix is a pure function of the horizon and never stored per set.

use ndarray::{s, Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::solver::{self, ConeProgram, SolveStatus};
use crate::{Error, Result};

/// Membership tolerance used by [`HPolytope::contains`].
pub const CONTAINS_TOL: f64 = 1e-9;

/// Discrete time horizon: `T` slots of `dt` hours each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    slots: usize,
    dt: f64,
}

impl Horizon {
    pub fn new(slots: usize, dt: f64) -> Result<Self> {
        if slots == 0 {
            return Err(Error::InvalidInput("horizon needs at least one slot".into()));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("slot length must be positive, got {dt}")));
        }
        Ok(Self { slots, dt })
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of facet rows, `4T`.
    pub fn facet_rows(&self) -> usize {
        4 * self.slots
    }
}

/// The fixed `4T × T` facet matrix `[L; −L; I; −I]`.
pub fn facet_matrix(horizon: &Horizon) -> Array2<f64> {
    let t = horizon.slots();
    let dt = horizon.dt();
    let mut h = Array2::zeros((4 * t, t));
    for i in 0..t {
        for j in 0..=i {
            h[[i, j]] = dt;
            h[[t + i, j]] = -dt;
        }
        h[[2 * t + i, i]] = 1.0;
        h[[3 * t + i, i]] = -1.0;
    }
    h
}

/// Facet offsets `h = [x̄, −x̲, ū, −u̲]` for the fixed facet matrix.
///
/// The energy lower bounds and power lower bounds are stored negated, so
/// that `H u ≤ h` always reads with sense `≤`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetOffsets {
    values: Vec<f64>,
}

impl FacetOffsets {
    pub fn new(values: Array1<f64>, horizon: &Horizon) -> Result<Self> {
        if values.len() != horizon.facet_rows() {
            return Err(Error::DimensionMismatch(format!(
                "offsets have {} entries, horizon needs {}",
                values.len(),
                horizon.facet_rows()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("offsets must be finite".into()));
        }
        Ok(Self { values: values.to_vec() })
    }

    /// Builds offsets from the four bound families in natural sign
    /// (`x_lower` and `u_lower` are negated internally).
    pub fn from_bounds(
        x_upper: &[f64],
        x_lower: &[f64],
        u_upper: &[f64],
        u_lower: &[f64],
        horizon: &Horizon,
    ) -> Result<Self> {
        let t = horizon.slots();
        if [x_upper, x_lower, u_upper, u_lower].iter().any(|b| b.len() != t) {
            return Err(Error::DimensionMismatch("bound family length".into()));
        }
        let mut values = Vec::with_capacity(4 * t);
        values.extend_from_slice(x_upper);
        values.extend(x_lower.iter().map(|v| -v));
        values.extend_from_slice(u_upper);
        values.extend(u_lower.iter().map(|v| -v));
        Self::new(Array1::from(values), horizon)
    }

    /// A box `∏ [lo, hi]` in power space with slack energy rows.
    pub fn power_box(lo: f64, hi: f64, horizon: &Horizon) -> Self {
        let t = horizon.slots();
        let slack = (lo.abs() + hi.abs() + 1.0) * horizon.dt() * t as f64 * 10.0;
        Self::from_bounds(
            &vec![slack; t],
            &vec![-slack; t],
            &vec![hi; t],
            &vec![lo; t],
            horizon,
        )
        .expect("box bounds are consistent by construction")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_array(&self) -> Array1<f64> {
        Array1::from(self.values.clone())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    fn t(&self) -> usize {
        self.values.len() / 4
    }

    /// Energy upper bound `x̄(t)`, zero-based slot index.
    pub fn x_upper(&self, t: usize) -> f64 {
        self.values[t]
    }

    /// Energy lower bound `x̲(t)`.
    pub fn x_lower(&self, t: usize) -> f64 {
        -self.values[self.t() + t]
    }

    /// Power upper bound `ū(t)`.
    pub fn u_upper(&self, t: usize) -> f64 {
        self.values[2 * self.t() + t]
    }

    /// Power lower bound `u̲(t)`.
    pub fn u_lower(&self, t: usize) -> f64 {
        -self.values[3 * self.t() + t]
    }
}

/// A flexibility polytope: a horizon plus facet offsets for the implicit
/// facet matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPolytope {
    pub horizon: Horizon,
    pub offsets: FacetOffsets,
}

impl HPolytope {
    pub fn new(horizon: Horizon, offsets: FacetOffsets) -> Result<Self> {
        if offsets.len() != horizon.facet_rows() {
            return Err(Error::DimensionMismatch("offsets vs horizon".into()));
        }
        Ok(Self { horizon, offsets })
    }

    /// True iff `max(Hu − h) ≤ 1e-9`.
    pub fn contains(&self, u: &Array1<f64>) -> bool {
        self.contains_with_tol(u, CONTAINS_TOL)
    }

    pub fn contains_with_tol(&self, u: &Array1<f64>, tol: f64) -> bool {
        assert_eq!(u.len(), self.horizon.slots(), "profile length");
        let h = facet_matrix(&self.horizon);
        let slack = h.dot(u) - self.offsets.as_array();
        slack.iter().all(|v| *v <= tol)
    }

    /// Chebyshev center and radius: the largest inscribed ball (facet rows
    /// normalized by their 2-norm), found by one LP.
    ///
    /// `radius > 0` iff the interior is nonempty, `radius = 0` for a
    /// nonempty set with empty interior, `radius < 0` iff the set is empty.
    pub fn chebyshev(&self) -> Result<(Array1<f64>, f64)> {
        let t = self.horizon.slots();
        let rows = self.horizon.facet_rows();
        let h = facet_matrix(&self.horizon);
        // variables (u, r): maximize r s.t. H u + r‖H_j‖ ≤ h_j
        let mut g = Array2::zeros((rows, t + 1));
        for i in 0..rows {
            let norm = h.row(i).dot(&h.row(i)).sqrt();
            for j in 0..t {
                g[[i, j]] = h[[i, j]];
            }
            g[[i, t]] = norm;
        }
        let mut c = Array1::zeros(t + 1);
        c[t] = -1.0;
        let prog = ConeProgram::lp_ineq(c, g, self.offsets.as_array());
        let sol = solver::solve_default(&prog)?;
        match sol.status {
            SolveStatus::Optimal => Ok((sol.primal.slice(s![..t]).to_owned(), sol.primal[t])),
            SolveStatus::Unbounded => Err(Error::Unbounded(
                "polytope is unbounded; Chebyshev radius undefined".into(),
            )),
            SolveStatus::Infeasible => Err(Error::Infeasible("Chebyshev LP".into())),
            SolveStatus::NumericFailure => {
                Err(Error::NumericFailure("Chebyshev LP did not converge".into()))
            }
        }
    }

    /// Deterministic hit-and-run sampling from the polytope, started at the
    /// Chebyshev center. Works on sets with empty interior (chords collapse
    /// to points in pinned directions).
    pub fn sample_interior(&self, count: usize, seed: u64) -> Result<Vec<Array1<f64>>> {
        let t = self.horizon.slots();
        let h = facet_matrix(&self.horizon);
        let offs = self.offsets.as_array();
        let (center, radius) = self.chebyshev()?;
        if radius < -CONTAINS_TOL {
            return Err(Error::Infeasible("cannot sample an empty polytope".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut x = center;
        let burn_in = 20 * t;
        let thin = 5;
        let mut out = Vec::with_capacity(count);
        let mut step = 0usize;
        while out.len() < count {
            // random direction on the unit sphere via Box-Muller
            let mut d = Array1::from_shape_fn(t, |_| {
                let u1: f64 = rng.random_range(1e-12..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            });
            let norm = d.dot(&d).sqrt();
            if norm < 1e-14 {
                continue;
            }
            d /= norm;
            let hd = h.dot(&d);
            let slack = &offs - &h.dot(&x);
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for (a, sl) in hd.iter().zip(slack.iter()) {
                let sl = sl.max(0.0);
                if *a > 1e-13 {
                    hi = hi.min(sl / a);
                } else if *a < -1e-13 {
                    lo = lo.max(sl / a);
                }
            }
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                continue;
            }
            let tstep = rng.random_range(0.0..1.0) * (hi - lo) + lo;
            x = &x + &(&d * tstep);
            step += 1;
            if step > burn_in && step % thin == 0 {
                out.push(x.clone());
            }
        }
        Ok(out)
    }
}

/// Per-resource parameters, sampled per the fleet model or user supplied.
///
/// `plug_in` and `deadline` are 1-based slot indices; the resource can
/// exchange power in slots `plug_in + 1 ..= deadline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsrSpec {
    /// Battery capacity x_max (kWh).
    pub capacity: f64,
    /// Maximum charging rate (kW), positive.
    pub u_max: f64,
    /// Minimum charging rate (kW), negative.
    pub u_min: f64,
    /// Plug-in slot t_p.
    pub plug_in: usize,
    /// Deadline slot t_d.
    pub deadline: usize,
    /// Initial stored energy x_init (kWh).
    pub init_energy: f64,
    /// Energy demand as a fraction of the maximum feasible charge.
    pub demand_fraction: f64,
}

impl DsrSpec {
    pub fn validate(&self, horizon: &Horizon) -> Result<()> {
        let t = horizon.slots();
        if !(1 <= self.plug_in && self.plug_in < self.deadline && self.deadline <= t) {
            return Err(Error::InvalidInput(format!(
                "need 1 ≤ plug_in < deadline ≤ {t}, got ({}, {})",
                self.plug_in, self.deadline
            )));
        }
        if !(self.u_min < 0.0 && 0.0 < self.u_max) {
            return Err(Error::InvalidInput("need u_min < 0 < u_max".into()));
        }
        if !(0.0 <= self.init_energy && self.init_energy <= 0.4 * self.capacity) {
            return Err(Error::InvalidInput(
                "initial energy outside [0, 0.4·capacity]".into(),
            ));
        }
        Ok(())
    }

    /// Charging energy demand `E` (kWh).
    pub fn energy_demand(&self, horizon: &Horizon) -> f64 {
        self.demand_fraction * self.u_max * (self.deadline - self.plug_in) as f64 * horizon.dt()
    }
}

/// Derives the facet offsets of a resource's flexibility set.
///
/// Power bounds open up only inside the plug-in window; the cumulative
/// energy is capped above by both the greedy maximum charge and the battery
/// headroom, and pinned below by the demand once the deadline passes.
pub fn offsets_from_spec(spec: &DsrSpec, horizon: &Horizon) -> Result<FacetOffsets> {
    spec.validate(horizon)?;
    let t = horizon.slots();
    let dt = horizon.dt();
    let demand = spec.energy_demand(horizon);
    let headroom = spec.capacity - spec.init_energy;
    if demand > headroom + 1e-12 {
        return Err(Error::InvalidInput(format!(
            "demand {demand:.3} kWh exceeds battery headroom {headroom:.3} kWh"
        )));
    }
    let mut x_upper = vec![0.0; t];
    let mut x_lower = vec![0.0; t];
    let mut u_upper = vec![0.0; t];
    let mut u_lower = vec![0.0; t];
    for slot in 1..=t {
        let idx = slot - 1;
        let in_window = slot > spec.plug_in && slot <= spec.deadline;
        if in_window {
            u_upper[idx] = spec.u_max;
            u_lower[idx] = spec.u_min;
        }
        let window_slots_so_far = slot.min(spec.deadline).saturating_sub(spec.plug_in);
        x_upper[idx] = headroom.min(spec.u_max * dt * window_slots_so_far as f64);
        x_lower[idx] = if slot >= spec.deadline { demand } else { 0.0 };
    }
    FacetOffsets::from_bounds(&x_upper, &x_lower, &u_upper, &u_lower, horizon)
}

/// Samples a fleet of `n` resources uniformly from the standard parameter
/// intervals: capacity [40, 60] kWh, u_max [6, 9] kW, u_min [−9, −6] kW,
/// plug-in [1, T−1], deadline [plug-in+1, T], initial energy
/// [0, 0.4·capacity], demand fraction [0.2, 0.5]. Reproducible per seed.
pub fn sample_fleet(n: usize, horizon: &Horizon, seed: u64) -> Vec<DsrSpec> {
    assert!(n >= 1, "fleet needs at least one resource");
    let t = horizon.slots();
    assert!(t >= 2, "fleet sampling needs T ≥ 2");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut fleet = Vec::with_capacity(n);
    while fleet.len() < n {
        let capacity = rng.random_range(40.0..=60.0);
        let u_max = rng.random_range(6.0..=9.0);
        let u_min = rng.random_range(-9.0..=-6.0);
        let plug_in = rng.random_range(1..=t - 1);
        let deadline = rng.random_range(plug_in + 1..=t);
        let init_energy = rng.random_range(0.0..=0.4 * capacity);
        let demand_fraction = rng.random_range(0.2..=0.5);
        let spec = DsrSpec {
            capacity,
            u_max,
            u_min,
            plug_in,
            deadline,
            init_energy,
            demand_fraction,
        };
        // Long windows can demand more than the battery headroom; resample.
        if spec.energy_demand(horizon) <= spec.capacity - spec.init_energy {
            fleet.push(spec);
        }
    }
    fleet
}

/// Offsets for every member of a fleet.
pub fn fleet_offsets(fleet: &[DsrSpec], horizon: &Horizon) -> Result<Vec<FacetOffsets>> {
    fleet.iter().map(|s| offsets_from_spec(s, horizon)).collect()
}

/// Elementwise mean of the fleet's offset vectors.
pub fn mean_offsets(offsets: &[FacetOffsets], horizon: &Horizon) -> Result<FacetOffsets> {
    if offsets.is_empty() {
        return Err(Error::InvalidInput("empty fleet".into()));
    }
    let mut acc = Array1::<f64>::zeros(horizon.facet_rows());
    for o in offsets {
        acc = acc + o.as_array();
    }
    acc /= offsets.len() as f64;
    FacetOffsets::new(acc, horizon)
}

/// Serializes a fleet to a JSON array of records.
pub fn fleet_to_json(fleet: &[DsrSpec]) -> String {
    serde_json::to_string_pretty(fleet).expect("fleet serialization cannot fail")
}

/// Parses a fleet from a JSON array of records.
pub fn fleet_from_json(json: &str) -> Result<Vec<DsrSpec>> {
    serde_json::from_str(json).map_err(|e| Error::Config(format!("fleet JSON: {e}")))
}

/// Brute-force membership test for the Minkowski sum of small instances:
/// feasibility of `∃{uᵢ}: Σuᵢ = u, H uᵢ ≤ hᵢ`, posed as minimizing the
/// largest constraint violation. Test oracle only; cost grows with `N·T`.
pub fn minkowski_contains(
    member_offsets: &[FacetOffsets],
    horizon: &Horizon,
    u: &Array1<f64>,
    tol: f64,
) -> Result<bool> {
    let n = member_offsets.len();
    let t = horizon.slots();
    assert!(n * t <= 60, "Minkowski oracle is for small instances only");
    assert_eq!(u.len(), t);
    let h = facet_matrix(horizon);
    let rows = horizon.facet_rows();
    let nv = n * t + 1; // (u_1 .. u_n, violation bound v)
    let mut eq = Array2::zeros((t, nv));
    for i in 0..n {
        for j in 0..t {
            eq[[j, i * t + j]] = 1.0;
        }
    }
    let mut g = Array2::zeros((n * rows + 1, nv));
    let mut rhs = Array1::zeros(n * rows + 1);
    for i in 0..n {
        for r in 0..rows {
            for j in 0..t {
                g[[i * rows + r, i * t + j]] = h[[r, j]];
            }
            g[[i * rows + r, nv - 1]] = -1.0;
            rhs[i * rows + r] = member_offsets[i].as_slice()[r];
        }
    }
    g[[n * rows, nv - 1]] = -1.0; // v ≥ 0
    let mut c = Array1::zeros(nv);
    c[nv - 1] = 1.0;
    let prog = ConeProgram::lp(c, eq, u.clone(), g, rhs);
    let sol = solver::solve_default(&prog)?;
    if !sol.is_optimal() {
        return Err(Error::NumericFailure("Minkowski oracle LP".into()));
    }
    Ok(sol.primal[nv - 1] <= tol)
}

/// The greedy demand-satisfying profile: charge at `u_max` from the start
/// of the window until the demand is met.
pub fn greedy_profile(spec: &DsrSpec, horizon: &Horizon) -> Array1<f64> {
    let t = horizon.slots();
    let dt = horizon.dt();
    let mut u = Array1::zeros(t);
    let mut remaining = spec.energy_demand(horizon);
    for slot in (spec.plug_in + 1)..=spec.deadline {
        if remaining <= 0.0 {
            break;
        }
        let chunk = (spec.u_max * dt).min(remaining);
        u[slot - 1] = chunk / dt;
        remaining -= chunk;
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn horizon(t: usize) -> Horizon {
        Horizon::new(t, 1.0).unwrap()
    }

    #[test]
    fn facet_matrix_t2() {
        let h = facet_matrix(&horizon(2));
        assert_eq!(h[[0, 0]], 1.0);
        assert_eq!(h[[0, 1]], 0.0);
        assert_eq!(h[[1, 0]], 1.0);
        assert_eq!(h[[1, 1]], 1.0);
    }

    #[test]
    fn facet_matrix_t1_half_dt() {
        let hz = Horizon::new(1, 0.5).unwrap();
        let h = facet_matrix(&hz);
        assert_eq!(h.column(0).to_vec(), vec![0.5, -0.5, 1.0, -1.0]);
    }

    #[test]
    fn facet_matrix_cumulative_sums() {
        let h = facet_matrix(&horizon(3));
        let u = array![1.0, 1.0, 1.0];
        let hu = h.dot(&u);
        assert_eq!(
            hu.to_vec(),
            vec![1.0, 2.0, 3.0, -1.0, -2.0, -3.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0]
        );
    }

    #[test]
    fn offsets_from_spec_hand_example() {
        let hz = horizon(2);
        let spec = DsrSpec {
            capacity: 10.0,
            u_max: 2.0,
            u_min: -2.0,
            plug_in: 1,
            deadline: 2,
            init_energy: 0.0,
            demand_fraction: 0.5,
        };
        let o = offsets_from_spec(&spec, &hz).unwrap();
        assert_eq!(spec.energy_demand(&hz), 1.0);
        assert_eq!(o.u_upper(0), 0.0);
        assert_eq!(o.u_upper(1), 2.0);
        assert_eq!(o.u_lower(1), -2.0);
        assert_eq!(o.x_lower(0), 0.0);
        assert_eq!(o.x_lower(1), 1.0);
        assert_eq!(o.x_upper(0), 0.0);
        assert_eq!(o.x_upper(1), 2.0); // min(headroom=10, 2·1·1)
    }

    #[test]
    fn zero_demand_contains_idle_profile() {
        let hz = horizon(3);
        let spec = DsrSpec {
            capacity: 50.0,
            u_max: 7.0,
            u_min: -7.0,
            plug_in: 1,
            deadline: 3,
            init_energy: 5.0,
            demand_fraction: 0.0,
        };
        let o = offsets_from_spec(&spec, &hz).unwrap();
        let poly = HPolytope::new(hz, o).unwrap();
        assert!(poly.contains(&Array1::zeros(3)));
    }

    #[test]
    fn rejects_demand_beyond_headroom() {
        let hz = horizon(4);
        let spec = DsrSpec {
            capacity: 10.0,
            u_max: 9.0,
            u_min: -6.0,
            plug_in: 1,
            deadline: 4,
            init_energy: 4.0,
            demand_fraction: 0.5, // demand 13.5 > headroom 6
        };
        assert!(offsets_from_spec(&spec, &hz).is_err());
    }

    #[test]
    fn contains_box_examples() {
        let hz = horizon(2);
        let poly = HPolytope::new(hz, FacetOffsets::power_box(0.0, 1.0, &hz)).unwrap();
        assert!(poly.contains(&array![0.5, 0.5]));
        assert!(!poly.contains(&array![1.1, 0.0]));
        let (center, _) = poly.chebyshev().unwrap();
        assert!(poly.contains(&center));
    }

    #[test]
    fn chebyshev_unit_box() {
        let hz = horizon(2);
        let poly = HPolytope::new(hz, FacetOffsets::power_box(0.0, 1.0, &hz)).unwrap();
        let (center, radius) = poly.chebyshev().unwrap();
        assert!((radius - 0.5).abs() < 1e-6, "radius {radius}");
        assert!((center[0] - 0.5).abs() < 1e-6);
        assert!((center[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn chebyshev_detects_empty_set() {
        let hz = horizon(1);
        // ū = −1 < u̲ = 1: crossed power bounds, slack energy rows
        let o = FacetOffsets::from_bounds(&[10.0], &[-10.0], &[-1.0], &[1.0], &hz).unwrap();
        let poly = HPolytope::new(hz, o).unwrap();
        let (_, radius) = poly.chebyshev().unwrap();
        assert!(radius < 0.0, "radius {radius}");
    }

    #[test]
    fn chebyshev_interval_with_slack_energy_rows() {
        let hz = horizon(1);
        let o = FacetOffsets::from_bounds(&[10.0], &[-10.0], &[2.0], &[0.0], &hz).unwrap();
        let poly = HPolytope::new(hz, o).unwrap();
        let (_, radius) = poly.chebyshev().unwrap();
        assert!(radius > 0.0);
    }

    #[test]
    fn fleet_respects_parameter_ranges() {
        let hz = horizon(24);
        let fleet = sample_fleet(50, &hz, 123);
        assert_eq!(fleet.len(), 50);
        for spec in &fleet {
            assert!((40.0..=60.0).contains(&spec.capacity));
            assert!((6.0..=9.0).contains(&spec.u_max));
            assert!((-9.0..=-6.0).contains(&spec.u_min));
            assert!(1 <= spec.plug_in && spec.plug_in <= 23);
            assert!(spec.plug_in < spec.deadline && spec.deadline <= 24);
            assert!(0.0 <= spec.init_energy && spec.init_energy <= 0.4 * spec.capacity);
            assert!((0.2..=0.5).contains(&spec.demand_fraction));
            spec.validate(&hz).unwrap();
        }
    }

    #[test]
    fn fleet_sampling_is_deterministic() {
        let hz = horizon(12);
        let a = sample_fleet(20, &hz, 7);
        let b = sample_fleet(20, &hz, 7);
        assert_eq!(a, b);
        let c = sample_fleet(20, &hz, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn fleet_t2_forces_the_only_window() {
        let hz = horizon(2);
        let fleet = sample_fleet(1, &hz, 99);
        assert_eq!(fleet[0].plug_in, 1);
        assert_eq!(fleet[0].deadline, 2);
    }

    #[test]
    fn sampled_fleet_sets_are_nonempty() {
        let hz = horizon(6);
        let fleet = sample_fleet(50, &hz, 2024);
        for spec in &fleet {
            let o = offsets_from_spec(spec, &hz).unwrap();
            let poly = HPolytope::new(hz, o).unwrap();
            let (_, radius) = poly.chebyshev().unwrap();
            // Slots outside the plug-in window pin facets to zero width, so
            // the interior is empty but the set itself never is. The radius
            // of an exactly-degenerate set lands at 0 up to solver tolerance.
            assert!(radius >= -1e-7, "radius {radius}");
        }
    }

    #[test]
    fn greedy_profile_is_feasible() {
        let hz = horizon(8);
        let fleet = sample_fleet(30, &hz, 5);
        for spec in &fleet {
            let o = offsets_from_spec(spec, &hz).unwrap();
            let poly = HPolytope::new(hz, o).unwrap();
            let u = greedy_profile(spec, &hz);
            assert!(poly.contains_with_tol(&u, 1e-7), "greedy profile escapes");
        }
    }

    #[test]
    fn minkowski_interval_sum() {
        let hz = horizon(1);
        let o = FacetOffsets::from_bounds(&[10.0], &[-10.0], &[1.0], &[0.0], &hz).unwrap();
        let members = vec![o.clone(), o];
        assert!(minkowski_contains(&members, &hz, &array![2.0], 1e-7).unwrap());
        assert!(!minkowski_contains(&members, &hz, &array![2.01], 1e-7).unwrap());
    }

    #[test]
    fn minkowski_contains_sum_of_centers() {
        let hz = horizon(2);
        let fleet = sample_fleet(3, &hz, 31);
        let offs = fleet_offsets(&fleet, &hz).unwrap();
        let mut total = Array1::zeros(2);
        for o in &offs {
            let poly = HPolytope::new(hz, o.clone()).unwrap();
            let (c, _) = poly.chebyshev().unwrap();
            total = total + c;
        }
        assert!(minkowski_contains(&offs, &hz, &total, 1e-7).unwrap());
    }

    #[test]
    fn fleet_json_roundtrip() {
        let hz = horizon(6);
        let fleet = sample_fleet(4, &hz, 77);
        let json = fleet_to_json(&fleet);
        let back = fleet_from_json(&json).unwrap();
        assert_eq!(fleet, back);
    }

    #[test]
    fn hit_and_run_stays_inside() {
        let hz = horizon(3);
        let poly = HPolytope::new(hz, FacetOffsets::power_box(-1.0, 1.0, &hz)).unwrap();
        let pts = poly.sample_interior(50, 4).unwrap();
        assert_eq!(pts.len(), 50);
        for p in &pts {
            assert!(poly.contains_with_tol(p, 1e-7));
        }
        let spread = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max)
            - pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        assert!(spread > 0.5, "hit-and-run barely moved: {spread}");
    }
}

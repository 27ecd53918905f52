//! Building the aggregate flexibility model and dispatching targets back.
//!
//! Once a base set is fixed, every resource fits its own affine image of it
//! (the containment LP) and only the sums of the fitted parameters are
//! revealed: the aggregate flexibility set is
//!
//! ```text
//!     ũ = s + S · U₀(h̃),    s = Σ γᵢ*,   S = Σ Γᵢ*
//! ```
//!
//! which is a guaranteed inner approximation of the true Minkowski sum.
//! Dispatching a target `u_agg ∈ ũ` reverses the transform centrally —
//! `u₀ = S⁻¹(u_agg − s)` — and broadcasts only `u₀`; each resource
//! reconstructs its own share `uᵢ = γᵢ* + Γᵢ* u₀` from the locally retained
//! map. Containment of each image set makes every share feasible, and the
//! shares sum back to the target by construction.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::containment::{solve_containment, AffineMap};
use crate::federated::{fixed, secure_sum, MaskedUpdate, Message, SecureSumSession, SessionTranscript};
use crate::flex::{facet_matrix, FacetOffsets, Horizon};
use crate::linalg;
use crate::{Error, Result};

/// Condition-number ceiling for inverting the aggregate transform.
pub const SINGULAR_COND: f64 = 1e10;

/// Published aggregate flexibility model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateModel {
    /// Aggregate shift `s` (kW).
    pub shift: Vec<f64>,
    /// Aggregate transform `S`, row-major `T × T`.
    pub transform: Vec<Vec<f64>>,
    /// Base offsets h̃ the model is anchored to.
    pub offsets: FacetOffsets,
}

impl AggregateModel {
    pub fn shift_vec(&self) -> Array1<f64> {
        Array1::from(self.shift.clone())
    }

    pub fn transform_mat(&self) -> Array2<f64> {
        let t = self.shift.len();
        Array2::from_shape_fn((t, t), |(i, j)| self.transform[i][j])
    }

    /// Maps a base-set point into the aggregate set.
    pub fn apply(&self, base_point: &Array1<f64>) -> Array1<f64> {
        self.shift_vec() + self.transform_mat().dot(base_point)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Config(format!("model JSON: {e}")))
    }
}

/// Result of the aggregation phase. The per-resource maps are participant
/// state: they never travel to the aggregator and are needed again at
/// disaggregation time.
#[derive(Debug, Clone)]
pub struct AggregationOutcome {
    pub model: AggregateModel,
    /// Retained map per resource; `None` for excluded members.
    pub local_maps: Vec<Option<AffineMap>>,
    /// Indices of resources excluded for infeasibility.
    pub excluded: Vec<usize>,
}

/// Runs the aggregation phase: each resource fits the base set, the sums
/// arrive via masked fixed-point summation, and the model is published.
pub fn aggregate(
    member_offsets: &[FacetOffsets],
    base: &FacetOffsets,
    horizon: &Horizon,
    secure_seed: u64,
) -> Result<AggregationOutcome> {
    let mut scratch = SessionTranscript::default();
    aggregate_recorded(member_offsets, base, horizon, secure_seed, &mut scratch)
}

pub(crate) fn aggregate_recorded(
    member_offsets: &[FacetOffsets],
    base: &FacetOffsets,
    horizon: &Horizon,
    secure_seed: u64,
    transcript: &mut SessionTranscript,
) -> Result<AggregationOutcome> {
    if member_offsets.is_empty() {
        return Err(Error::InvalidInput("empty fleet".into()));
    }
    let t = horizon.slots();
    transcript.messages.push(Message::BroadcastBase {
        offsets: base.as_slice().to_vec(),
    });

    let solved: Vec<Result<AffineMap>> = member_offsets
        .par_iter()
        .map(|own| solve_containment(base, own, horizon).map(|c| c.map))
        .collect();

    let mut local_maps: Vec<Option<AffineMap>> = Vec::with_capacity(solved.len());
    let mut excluded = Vec::new();
    for (i, res) in solved.into_iter().enumerate() {
        match res {
            Ok(map) => local_maps.push(Some(map)),
            Err(Error::Infeasible(_)) => {
                excluded.push(i);
                local_maps.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let included: Vec<usize> = (0..member_offsets.len())
        .filter(|i| !excluded.contains(i))
        .collect();
    if included.is_empty() {
        return Err(Error::Infeasible("every fleet member was excluded".into()));
    }

    let session = SecureSumSession::new(
        included.iter().map(|i| format!("dsr-{i:03}")).collect(),
        secure_seed,
    );
    let updates: Vec<MaskedUpdate> = included
        .iter()
        .enumerate()
        .map(|(slot, &i)| {
            let map = local_maps[i].as_ref().expect("included member has a map");
            let mut payload = map.shift.clone();
            payload.extend(linalg::vec_cm(&map.linear_mat()));
            session.mask_values(slot, &payload)
        })
        .collect();
    for u in &updates {
        let (shift_part, transform_part) = u.payload.split_at(t);
        transcript.messages.push(Message::DsrUpdate {
            participant: u.participant.clone(),
            transform: transform_part.to_vec(),
            transform_grad: None,
            shift: Some(shift_part.to_vec()),
        });
    }
    let summed = fixed::decode_slice(&secure_sum(&updates, &session)?);
    let shift = summed[..t].to_vec();
    let transform_cm = Array1::from(summed[t..].to_vec());
    let transform = linalg::unvec_cm(&transform_cm, t, t);

    let model = AggregateModel {
        shift,
        transform: transform.rows().into_iter().map(|r| r.to_vec()).collect(),
        offsets: base.clone(),
    };
    transcript.messages.push(Message::AggregateAnnounce {
        shift: model.shift.clone(),
        transform: model
            .transform
            .iter()
            .flat_map(|r| r.iter().copied())
            .collect(),
        offsets: base.as_slice().to_vec(),
    });
    Ok(AggregationOutcome {
        model,
        local_maps,
        excluded,
    })
}

/// Per-resource dispatch profiles recovered from an aggregate target.
#[derive(Debug, Clone)]
pub struct DisaggregationResult {
    /// Base profile broadcast by the aggregator.
    pub base_profile: Array1<f64>,
    /// One profile per resource; `None` for members excluded upstream.
    pub profiles: Vec<Option<Array1<f64>>>,
}

/// Maps an aggregate target back to individual dispatch profiles.
///
/// The central step needs only the published model: invert the aggregate
/// transform, check the base profile lands inside the base set, broadcast.
/// The per-resource reconstruction applies the locally retained maps.
pub fn disaggregate(
    model: &AggregateModel,
    target: &Array1<f64>,
    local_maps: &[Option<AffineMap>],
    horizon: &Horizon,
) -> Result<DisaggregationResult> {
    let t = horizon.slots();
    if target.len() != t {
        return Err(Error::DimensionMismatch("target profile length".into()));
    }
    let s_mat = model.transform_mat();
    let cond = linalg::condition_number(&s_mat)?;
    if !cond.is_finite() || cond > SINGULAR_COND {
        return Err(Error::SingularAggregate(format!(
            "aggregate transform condition number {cond:.2e}"
        )));
    }
    let rhs = target - &model.shift_vec();
    let base_profile = linalg::solve_system(&s_mat, &rhs)?;

    // Membership in the aggregate set is exactly base-set membership of the
    // pulled-back profile.
    let h_mat = facet_matrix(horizon);
    let slack = h_mat.dot(&base_profile) - model.offsets.as_array();
    if slack.iter().any(|v| *v > 1e-9) {
        return Err(Error::InfeasibleTarget);
    }

    let profiles = local_maps
        .iter()
        .map(|m| m.as_ref().map(|map| map.apply(&base_profile)))
        .collect();
    Ok(DisaggregationResult {
        base_profile,
        profiles,
    })
}

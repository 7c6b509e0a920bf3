//! Degree-zero homology with closed supports, per scale and in the limit.
//!
//! For a locally finite graph the degree-zero homology with closed supports
//! is free on the finite components: an infinite component carries no
//! nonzero class, because its vertex sum is the boundary of the (closed,
//! locally finite) chain of edges along any one-ended spanning walk, while a
//! finite component's vertex sum bounds nothing.
//!
//! The per-scale report therefore counts certified-finite components and
//! lists their members as representatives. The limit over growing scales
//! vanishes exactly when some scale joins every point into infinite
//! components, which is the same condition the main criterion decides; the
//! two are computed through the same classification but aggregated
//! independently, and the test suites check they agree.

use crate::dist::Dist;
use crate::rips::{build_rips_from, classify_graph_components, ComponentStatus, FiniteWitness};
use crate::space_models::{critical_scales_from, distance_matrix, PointModel, Window};
use crate::{Error, Result};
use num_rational::BigRational;
use num_traits::Signed;
use serde::Serialize;
use std::collections::BTreeSet;

/// Classes at one scale.
#[derive(Clone, Debug, Serialize)]
pub struct BmScale {
    pub alpha: Dist,
    /// Number of certified-finite components: the provable lower bound on
    /// the rank contributed by the window at this scale.
    pub finite_classes: usize,
    /// Whether some class is provably nonzero at this scale.
    pub class_nonzero: bool,
    /// Whether the group provably vanishes for the whole model at this
    /// scale: every windowed component certified infinite and a model rule
    /// covering the points outside the window.
    pub definite_zero: bool,
    pub unknown_components: usize,
    /// Vertex labels of each certified-finite component; the sum of the
    /// vertices of a finite component represents its class.
    pub representatives: Vec<Vec<String>>,
    /// Model-level finite witness, when a persistence rule provides one.
    pub persistent_witness: Option<FiniteWitness>,
}

/// Behaviour of the classes under the maps that grow the scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "limit", rename_all = "snake_case")]
pub enum BmLimit {
    /// The group vanishes from this scale on.
    Vanishes { at: Dist },
    /// Nonzero classes survive at every scale, by the stated rule.
    Persists { rule: String },
    /// Not settled below the scale budget.
    Undetermined { max_scale_checked: Dist, reason: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct BmReport {
    pub per_scale: Vec<BmScale>,
    pub limit: BmLimit,
}

/// Compute per-scale class reports over the critical scales up to
/// `alpha_max`, and the limit verdict.
pub fn bm_h0(model: &PointModel, window: &Window, alpha_max: &BigRational) -> Result<BmReport> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if alpha_max.is_negative() {
        return Err(Error::InvalidInput("alpha_max must be nonnegative".into()));
    }
    let matrix = distance_matrix(model, window);
    let mut scales = critical_scales_from(&matrix, model, alpha_max);
    let cap = Dist::from_value(alpha_max);
    if scales.last() != Some(&cap) {
        scales.push(cap.clone());
    }
    let mut per_scale = Vec::with_capacity(scales.len());
    let mut vanishes_at: Option<Dist> = None;
    for alpha in &scales {
        let graph = build_rips_from(&matrix, alpha);
        let components = classify_graph_components(model, window, &graph)?;
        let mut representatives = Vec::new();
        let mut unknown_components = 0usize;
        for comp in &components {
            match &comp.status {
                ComponentStatus::CertifiedFinite { .. } => {
                    representatives
                        .push(comp.members.iter().map(|&v| window.label(v).to_string()).collect());
                }
                ComponentStatus::Unknown { .. } => unknown_components += 1,
                ComponentStatus::CertifiedInfinite { .. } => {}
            }
        }
        let finite_classes = representatives.len();
        let definite_zero = finite_classes == 0
            && unknown_components == 0
            && model.off_window_points_infinite(alpha, window);
        let persistent_witness = model.persistence_witness(alpha).map(|(sites, rule)| {
            let set: BTreeSet<_> = sites.iter().cloned().collect();
            let margin = model
                .min_dist_to_outside(&set)
                .expect("persistence witness sites are model points");
            FiniteWitness {
                labels: sites.iter().map(|s| model.label_of(s)).collect(),
                margin,
                rule,
            }
        });
        per_scale.push(BmScale {
            alpha: alpha.clone(),
            finite_classes,
            class_nonzero: finite_classes > 0 || persistent_witness.is_some(),
            definite_zero,
            unknown_components,
            representatives,
            persistent_witness,
        });
        if definite_zero {
            vanishes_at = Some(alpha.clone());
            break;
        }
    }
    let limit = if let Some(at) = vanishes_at {
        BmLimit::Vanishes { at }
    } else if let Some(rule) = model.persistence_rule() {
        BmLimit::Persists { rule }
    } else {
        let any_unknown = per_scale.iter().any(|s| s.unknown_components > 0);
        let reason = if any_unknown {
            "components without certificates block both verdicts; enlarge the window".to_string()
        } else {
            "classes survive up to the budget but no rule extends this to all scales".to_string()
        };
        BmLimit::Undetermined { max_scale_checked: Dist::from_value(alpha_max), reason }
    };
    Ok(BmReport { per_scale, limit })
}

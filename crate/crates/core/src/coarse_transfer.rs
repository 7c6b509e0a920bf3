//! Transfer of finite-component certificates between nearby models.
//!
//! Two discrete subsets of the same Euclidean space are coarsely
//! interchangeable when each lies within a constant `C` of the other.
//! [`coarse_constant`] measures that constant on a window, exactly. A finite
//! component of the first model at scale `alpha + 2C` then pins down a
//! nearby set `Z` in the second model, and the triangle inequality deposits
//! the separation there: every point of `Z` sits at distance greater than
//! `alpha` from the rest of the second model, so the components of `Z` at
//! scale `alpha` are finite components of the second model.
//! [`transfer_finite_component`] re-derives every step rather than trusting
//! the inputs: the source must really be one isolated component, `Z` must be
//! nonempty and separated, and the produced certificates are re-checked by
//! the ordinary classifier before they are returned.

use crate::dist::{Dist, Extended};
use crate::rips::{classify_components, ComponentStatus};
use crate::space_models::{PointModel, Region, Site};
use crate::union_find::DisjointSet;
use crate::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;
use std::collections::BTreeSet;

/// Exact distance between sites of two different models embedded in the
/// same Euclidean space.
fn cross_distance(d1: &PointModel, a: &Site, d2: &PointModel, b: &Site) -> Result<Dist> {
    let p = d1.euclid_position(a).ok_or_else(|| {
        Error::InvalidInput("transfer needs Euclidean-embedded models".into())
    })?;
    let q = d2.euclid_position(b).ok_or_else(|| {
        Error::InvalidInput("transfer needs Euclidean-embedded models".into())
    })?;
    if p.len() != q.len() {
        return Err(Error::InvalidInput(
            "the two models live in spaces of different dimension".into(),
        ));
    }
    let mut sq = BigRational::zero();
    for (x, y) in p.iter().zip(&q) {
        let d = x - y;
        sq = sq + &d * &d;
    }
    Ok(Dist::from_sq(sq))
}

fn require_euclidean(model: &PointModel, name: &str) -> Result<()> {
    if model.kind_name() == "wedge_of_rays" {
        return Err(Error::InvalidInput(format!(
            "{name} is a wedge model; transfer compares Euclidean positions and \
             wedges carry their own path metric"
        )));
    }
    Ok(())
}

fn widen_box(region: &Region, pad: &BigRational) -> Result<Region> {
    match region {
        Region::Box { min, max } => Ok(Region::Box {
            min: min.iter().map(|a| a - pad).collect(),
            max: max.iter().map(|b| b + pad).collect(),
        }),
        _ => Err(Error::InvalidRegion(
            "the covering constant is measured on a box region".into(),
        )),
    }
}

/// Largest nearest-point distance in either direction between the two
/// models, over a box window. Candidate nearest points are drawn from the
/// window widened by `pad`; if some point's nearest neighbour is not inside
/// the widened window the constant cannot be certified and an error is
/// returned, so enlarging `pad` is always safe. A declared global bound,
/// when given, is folded in by taking the larger value.
pub fn coarse_constant(
    d1: &PointModel,
    d2: &PointModel,
    region: &Region,
    pad: &BigRational,
    declared_bound: Option<&BigRational>,
) -> Result<Dist> {
    require_euclidean(d1, "the first model")?;
    require_euclidean(d2, "the second model")?;
    if !pad.is_positive() {
        return Err(Error::InvalidInput("pad must be positive".into()));
    }
    let wide = widen_box(region, pad)?;
    let w1 = d1.enumerate_window(region)?;
    let w2 = d2.enumerate_window(region)?;
    let t1 = d1.enumerate_window(&wide)?;
    let t2 = d2.enumerate_window(&wide)?;
    if w1.is_empty() || w2.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let pad_dist = Dist::from_value(pad);
    let mut c = Dist::zero();
    for (sources, source_model, targets, target_model) in
        [(&w1, d1, &t2, d2), (&w2, d2, &t1, d1)]
    {
        for i in 0..sources.len() {
            let mut best: Option<Dist> = None;
            for j in 0..targets.len() {
                let d = cross_distance(
                    source_model,
                    sources.site(i),
                    target_model,
                    targets.site(j),
                )?;
                if best.as_ref().map_or(true, |b| &d < b) {
                    best = Some(d);
                }
            }
            let best = best.ok_or(Error::EmptyWindow)?;
            if best >= pad_dist {
                return Err(Error::InvalidInput(format!(
                    "nearest neighbour of `{}` is at distance {} which reaches the \
                     search pad; enlarge pad to certify the constant",
                    source_model.label_of(sources.site(i)),
                    best
                )));
            }
            if best > c {
                c = best;
            }
        }
    }
    if let Some(b) = declared_bound {
        let b = Dist::from_value(b);
        if b > c {
            c = b;
        }
    }
    Ok(c)
}

/// One transferred certificate: a finite component of the target model.
#[derive(Clone, Debug, Serialize)]
pub struct TransferredComponent {
    pub labels: Vec<String>,
    /// Distance from this component to the rest of the target model;
    /// strictly above the scale, re-verified on the model.
    pub margin: Extended,
}

/// Everything [`transfer_finite_component`] established.
#[derive(Clone, Debug, Serialize)]
pub struct TransferReport {
    /// The covering constant used.
    pub constant: Dist,
    /// The scale the source certificate was verified at: alpha + 2C.
    pub source_scale: Dist,
    /// Re-verified isolation of the source set at that scale.
    pub source_margin: Extended,
    /// The transferred set: target points within C of the source.
    pub z_labels: Vec<String>,
    /// Distance from the transferred set to the rest of the target model.
    pub z_separation: Extended,
    pub components: Vec<TransferredComponent>,
    /// The ordinary classifier confirmed every component independently.
    pub reverified: bool,
}

/// Smallest convenient integer upper bound for a distance, used only to
/// widen search boxes; membership tests stay exact.
fn integer_upper_bound(d: &Dist) -> BigRational {
    let sq = d.sq();
    let ceil = sq.ceil().to_integer();
    let root = ceil.sqrt();
    BigRational::from_integer(root + BigInt::from(1))
}

/// Move a finite-component certificate from `d1` to `d2`. The source set
/// must be a single component of `d1` at scale `alpha + 2C`, isolated with
/// margin above that scale; the result lists the components of the nearby
/// set `Z` in `d2` at scale `alpha`, each re-verified as a finite component
/// of `d2`.
pub fn transfer_finite_component(
    d1: &PointModel,
    d2: &PointModel,
    source_labels: &[String],
    alpha: &Dist,
    c: &Dist,
) -> Result<TransferReport> {
    require_euclidean(d1, "the source model")?;
    require_euclidean(d2, "the target model")?;
    if source_labels.is_empty() {
        return Err(Error::InvalidInput("empty source component".into()));
    }
    let mut source_sites = Vec::with_capacity(source_labels.len());
    let mut source_set = BTreeSet::new();
    for l in source_labels {
        let site = d1.resolve(l)?;
        if !source_set.insert(site.clone()) {
            return Err(Error::InvalidInput(format!("`{l}` listed twice")));
        }
        source_sites.push(site);
    }
    let two = BigRational::from_integer(BigInt::from(2));
    let source_scale = alpha.add(&c.scale(&two));

    // The source must be isolated strictly beyond alpha + 2C...
    let source_margin = d1.min_dist_to_outside(&source_set)?;
    if !source_margin.exceeds(&source_scale) {
        return Err(Error::TransferRefused(format!(
            "the source set is not isolated at scale {source_scale}: margin {source_margin}"
        )));
    }
    // ...and internally connected at that scale, so it is one component.
    {
        let n = source_sites.len();
        let mut ds = DisjointSet::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if d1.site_distance(&source_sites[i], &source_sites[j]) <= source_scale {
                    ds.union(i, j);
                }
            }
        }
        let root = ds.find(0);
        for i in 1..n {
            if ds.find(i) != root {
                return Err(Error::TransferRefused(
                    "the source set is not a single component at the transfer scale".into(),
                ));
            }
        }
    }

    // Z: target points within C of the source, collected from a box around
    // the source positions.
    let dim = d1
        .euclid_position(&source_sites[0])
        .expect("euclidean checked above")
        .len();
    let mut lo = vec![BigRational::zero(); dim];
    let mut hi = vec![BigRational::zero(); dim];
    for (si, site) in source_sites.iter().enumerate() {
        let p = d1.euclid_position(site).expect("euclidean checked above");
        for j in 0..dim {
            if si == 0 || p[j] < lo[j] {
                lo[j] = p[j].clone();
            }
            if si == 0 || p[j] > hi[j] {
                hi[j] = p[j].clone();
            }
        }
    }
    let pad = integer_upper_bound(c);
    let search = Region::Box {
        min: lo.iter().map(|a| a - &pad).collect(),
        max: hi.iter().map(|b| b + &pad).collect(),
    };
    let candidates = d2.enumerate_window(&search)?;
    let mut z_indices = Vec::new();
    let mut z_set = BTreeSet::new();
    for i in 0..candidates.len() {
        let within = source_sites.iter().try_fold(false, |acc, s| {
            if acc {
                return Ok::<bool, Error>(true);
            }
            Ok(cross_distance(d2, candidates.site(i), d1, s)? <= *c)
        })?;
        if within {
            z_indices.push(i);
            z_set.insert(candidates.site(i).clone());
        }
    }
    if z_set.is_empty() {
        return Err(Error::TransferRefused(
            "no target point lies within C of the source component, so the \
             declared covering constant does not hold here"
                .into(),
        ));
    }

    // Separation: Z is strictly further than alpha from the rest of d2.
    let z_separation = d2.min_dist_to_outside(&z_set)?;
    if !z_separation.exceeds(alpha) {
        return Err(Error::TransferRefused(format!(
            "the transferred set is not separated at scale {alpha}: margin {z_separation}"
        )));
    }

    // Components of Z at alpha, each with its own re-verified margin.
    let z_sites: Vec<&Site> = z_indices.iter().map(|&i| candidates.site(i)).collect();
    let mut ds = DisjointSet::new(z_sites.len());
    for i in 0..z_sites.len() {
        for j in (i + 1)..z_sites.len() {
            if d2.site_distance(z_sites[i], z_sites[j]) <= *alpha {
                ds.union(i, j);
            }
        }
    }
    let mut grouped: std::collections::BTreeMap<usize, Vec<usize>> =
        std::collections::BTreeMap::new();
    for i in 0..z_sites.len() {
        grouped.entry(ds.find(i)).or_default().push(i);
    }
    let mut components = Vec::new();
    for group in grouped.values() {
        let comp_set: BTreeSet<Site> =
            group.iter().map(|&i| z_sites[i].clone()).collect();
        let margin = d2.min_dist_to_outside(&comp_set)?;
        if !margin.exceeds(alpha) {
            return Err(Error::TransferRefused(
                "a transferred component failed its own separation check".into(),
            ));
        }
        components.push(TransferredComponent {
            labels: group.iter().map(|&i| d2.label_of(z_sites[i])).collect(),
            margin,
        });
    }

    // Independent confirmation by the ordinary classifier.
    let z_labels: Vec<String> = z_sites.iter().map(|s| d2.label_of(s)).collect();
    let window = d2.enumerate_window(&Region::Explicit { labels: z_labels.clone() })?;
    let classified = classify_components(d2, &window, alpha)?;
    let reverified = classified.len() == components.len()
        && classified
            .iter()
            .all(|comp| matches!(comp.status, ComponentStatus::CertifiedFinite { .. }));
    if !reverified {
        return Err(Error::TransferRefused(
            "the classifier could not confirm the transferred components".into(),
        ));
    }

    Ok(TransferReport {
        constant: c.clone(),
        source_scale,
        source_margin,
        z_labels,
        z_separation,
        components,
        reverified,
    })
}

#[cfg(test)]
mod tests;

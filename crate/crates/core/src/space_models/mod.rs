//! Point models of uniformly discrete metric spaces.
//!
//! A [`PointModel`] is a finite description of a (typically infinite) metric
//! space: a finite cloud, a scaled integer lattice with optional offset, a
//! lattice with finitely many removed sites and added points, a sequence of
//! finite clusters on a line separated by a growing gap rule, or a wedge of
//! rays glued at their basepoints. Points are addressed by string labels.
//!
//! All coordinates are rational and all distances are exact square roots of
//! rationals, so scale comparisons in the Rips machinery are never subject to
//! rounding. The model also answers structural questions that no finite
//! window can: whether a point provably lies in an infinite component at a
//! given scale, whether finite components persist at every scale, and how a
//! listed ray may continue beyond the window.

mod json;

pub use json::model_from_json_str;

use crate::dist::{parse_rational, rational_to_string, Dist, Extended};
use crate::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Hard cap on enumerated window sizes.
pub const MAX_WINDOW_POINTS: usize = 200_000;

/// Internal address of a model point. Public labels are strings; sites are
/// the resolved structured form.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    /// Index into a finite cloud, ordered by label.
    Cloud(u32),
    /// Integer lattice coordinates.
    Lattice(Vec<i64>),
    /// Index into the added-point list of a defect model.
    Added(u32),
    /// Cluster number (from 1) and index within the cluster template.
    Cluster { n: u64, i: u32 },
    /// Ray index and position along the ray.
    Wedge { ray: u32, k: u64 },
}

/// Growth rule for the spacing between consecutive clusters.
///
/// `gap(n)` is the distance between cluster `n-1` and cluster `n`, so the
/// isolation margin of cluster `n` (for `n >= 2`) is exactly
/// `min(gap(n), gap(n+1)) = gap(n)` for a nondecreasing rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum GapRule {
    /// `gap(n) = a*n + b`.
    Linear { a: String, b: String },
    /// `gap(n) = base^n`.
    Geometric { base: String },
    /// `gap(n) = value`.
    Constant { value: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum GapRuleExact {
    Linear { a: BigRational, b: BigRational },
    Geometric { base: BigRational },
    Constant { value: BigRational },
}

impl GapRuleExact {
    fn parse(rule: &GapRule) -> Result<Self> {
        let bad = |what: &str| Error::InvalidModel(format!("gap rule: bad rational `{what}`"));
        Ok(match rule {
            GapRule::Linear { a, b } => GapRuleExact::Linear {
                a: parse_rational(a).ok_or_else(|| bad(a))?,
                b: parse_rational(b).ok_or_else(|| bad(b))?,
            },
            GapRule::Geometric { base } => {
                GapRuleExact::Geometric { base: parse_rational(base).ok_or_else(|| bad(base))? }
            }
            GapRule::Constant { value } => {
                GapRuleExact::Constant { value: parse_rational(value).ok_or_else(|| bad(value))? }
            }
        })
    }

    /// Monotone nondecreasing with strictly positive values.
    fn validate(&self) -> Result<()> {
        let ok = match self {
            GapRuleExact::Linear { a, b } => !a.is_negative() && (a + b).is_positive(),
            GapRuleExact::Geometric { base } => base >= &BigRational::one(),
            GapRuleExact::Constant { value } => value.is_positive(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(
                "gap rule must be nondecreasing with positive values".into(),
            ))
        }
    }

    pub fn gap(&self, n: u64) -> BigRational {
        match self {
            GapRuleExact::Linear { a, b } => a * BigRational::from_integer(BigInt::from(n)) + b,
            GapRuleExact::Geometric { base } => {
                let n = i32::try_from(n).expect("cluster index fits i32");
                base.pow(n)
            }
            GapRuleExact::Constant { value } => value.clone(),
        }
    }

    /// Whether gap(n) grows without bound.
    pub fn unbounded(&self) -> bool {
        match self {
            GapRuleExact::Linear { a, .. } => a.is_positive(),
            GapRuleExact::Geometric { base } => base > &BigRational::one(),
            GapRuleExact::Constant { .. } => false,
        }
    }

    /// Supremum of the gap values when bounded.
    fn sup(&self) -> Option<BigRational> {
        match self {
            GapRuleExact::Linear { a, b } if a.is_zero() => Some(b.clone()),
            GapRuleExact::Geometric { base } if base.is_one() => Some(BigRational::one()),
            GapRuleExact::Constant { value } => Some(value.clone()),
            _ => None,
        }
    }
}

/// Symbolic description of how a listed ray continues beyond its prefix.
/// The rule is anchored at the last listed point of the ray.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContinuationRule {
    /// Lattice half line `p + t * sign * e_axis`, `t >= 1`.
    AxisTail { axis: usize, sign: i8 },
    /// Ascend the wedge ray of the anchor point.
    WedgeTail,
    /// All model points strictly to the right of the anchor, in order.
    ClusterTail,
}

#[derive(Clone, Debug)]
pub(crate) enum ModelKind {
    FiniteCloud {
        labels: Vec<String>,
        coords: Vec<Vec<BigRational>>,
        index: BTreeMap<String, u32>,
    },
    Lattice {
        spacing: BigRational,
        offset: Vec<BigRational>,
    },
    LatticeWithDefects {
        spacing: BigRational,
        offset: Vec<BigRational>,
        removed: BTreeSet<Vec<i64>>,
        added: Vec<Vec<BigRational>>,
    },
    ClusterSequence {
        templates: Vec<Vec<BigRational>>,
        gap: GapRuleExact,
        offset: BigRational,
    },
    WedgeOfRays {
        rays: u32,
    },
}

/// Finite description of a uniformly discrete metric space.
#[derive(Clone, Debug)]
pub struct PointModel {
    pub(crate) kind: ModelKind,
    dim: usize,
    declared_separation: Option<BigRational>,
    declared_ball_bounds: Vec<(BigRational, usize)>,
}

/// Euclidean or wedge position of a site.
enum Position {
    Euclid(Vec<BigRational>),
    Wedge { ray: u32, k: u64 },
}

impl PointModel {
    pub fn finite_cloud(points: Vec<(String, Vec<BigRational>)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidModel("finite cloud needs at least one point".into()));
        }
        let dim = points[0].1.len();
        if dim == 0 {
            return Err(Error::InvalidModel("points need at least one coordinate".into()));
        }
        let mut sorted = points;
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        let mut index = BTreeMap::new();
        let mut seen_coords: BTreeSet<Vec<BigRational>> = BTreeSet::new();
        for (i, (label, coords)) in sorted.iter().enumerate() {
            if label.is_empty() || label.contains('~') {
                return Err(Error::InvalidModel(format!(
                    "bad label `{label}`: labels are nonempty and may not contain `~`"
                )));
            }
            if coords.len() != dim {
                return Err(Error::InvalidModel(format!(
                    "point `{label}` has {} coordinates, expected {dim}",
                    coords.len()
                )));
            }
            if index.insert(label.clone(), i as u32).is_some() {
                return Err(Error::InvalidModel(format!("duplicate label `{label}`")));
            }
            if !seen_coords.insert(coords.clone()) {
                return Err(Error::InvalidModel(format!(
                    "point `{label}` duplicates the coordinates of another point"
                )));
            }
        }
        let (labels, coords) = sorted.into_iter().unzip();
        Ok(PointModel {
            kind: ModelKind::FiniteCloud { labels, coords, index },
            dim,
            declared_separation: None,
            declared_ball_bounds: Vec::new(),
        })
    }

    pub fn lattice(dim: usize, spacing: BigRational) -> Result<Self> {
        Self::lattice_with_offset(dim, spacing, vec![BigRational::zero(); dim])
    }

    pub fn lattice_with_offset(
        dim: usize,
        spacing: BigRational,
        offset: Vec<BigRational>,
    ) -> Result<Self> {
        if dim == 0 || dim > 6 {
            return Err(Error::InvalidModel("lattice dimension must be in 1..=6".into()));
        }
        if !spacing.is_positive() {
            return Err(Error::InvalidModel("lattice spacing must be positive".into()));
        }
        if offset.len() != dim {
            return Err(Error::InvalidModel("offset dimension mismatch".into()));
        }
        Ok(PointModel {
            kind: ModelKind::Lattice { spacing, offset },
            dim,
            declared_separation: None,
            declared_ball_bounds: Vec::new(),
        })
    }

    pub fn lattice_with_defects(
        dim: usize,
        spacing: BigRational,
        offset: Vec<BigRational>,
        removed: Vec<Vec<i64>>,
        added: Vec<Vec<BigRational>>,
    ) -> Result<Self> {
        let base = Self::lattice_with_offset(dim, spacing.clone(), offset.clone())?;
        let _ = base;
        let mut removed_set = BTreeSet::new();
        for site in removed {
            if site.len() != dim {
                return Err(Error::InvalidModel("removed site dimension mismatch".into()));
            }
            if !removed_set.insert(site) {
                return Err(Error::InvalidModel("duplicate removed site".into()));
            }
        }
        let mut seen = BTreeSet::new();
        for point in &added {
            if point.len() != dim {
                return Err(Error::InvalidModel("added point dimension mismatch".into()));
            }
            if !seen.insert(point.clone()) {
                return Err(Error::InvalidModel("duplicate added point".into()));
            }
            // An added point that lands on a surviving lattice site would give
            // two labels at distance zero.
            let mut integral = Vec::with_capacity(dim);
            let mut on_lattice = true;
            for (a, o) in point.iter().zip(&offset) {
                let q = (a - o) / &spacing;
                if q.is_integer() {
                    integral.push(q.to_integer().to_i64().unwrap_or(i64::MAX));
                } else {
                    on_lattice = false;
                    break;
                }
            }
            if on_lattice && !removed_set.contains(&integral) {
                return Err(Error::InvalidModel(
                    "added point coincides with a lattice site that is not removed".into(),
                ));
            }
        }
        Ok(PointModel {
            kind: ModelKind::LatticeWithDefects { spacing, offset, removed: removed_set, added },
            dim,
            declared_separation: None,
            declared_ball_bounds: Vec::new(),
        })
    }

    pub fn cluster_sequence(
        templates: Vec<Vec<BigRational>>,
        gap: GapRule,
        offset: BigRational,
    ) -> Result<Self> {
        let gap = GapRuleExact::parse(&gap)?;
        gap.validate()?;
        if templates.is_empty() {
            return Err(Error::InvalidModel("cluster sequence needs a template".into()));
        }
        for t in &templates {
            if t.is_empty() {
                return Err(Error::InvalidModel("cluster template may not be empty".into()));
            }
            if !t[0].is_zero() {
                return Err(Error::InvalidModel("cluster template must start at offset 0".into()));
            }
            for w in t.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::InvalidModel(
                        "cluster template offsets must be strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(PointModel {
            kind: ModelKind::ClusterSequence { templates, gap, offset },
            dim: 1,
            declared_separation: None,
            declared_ball_bounds: Vec::new(),
        })
    }

    pub fn wedge_of_rays(rays: u32) -> Result<Self> {
        if rays == 0 {
            return Err(Error::InvalidModel("wedge needs at least one ray".into()));
        }
        Ok(PointModel {
            kind: ModelKind::WedgeOfRays { rays },
            dim: 1,
            declared_separation: None,
            declared_ball_bounds: Vec::new(),
        })
    }

    pub fn with_declared_separation(mut self, sep: BigRational) -> Self {
        self.declared_separation = Some(sep);
        self
    }

    pub fn with_declared_ball_bounds(mut self, bounds: Vec<(BigRational, usize)>) -> Self {
        self.declared_ball_bounds = bounds;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            ModelKind::FiniteCloud { .. } => "finite_cloud",
            ModelKind::Lattice { .. } => "lattice",
            ModelKind::LatticeWithDefects { .. } => "lattice_with_defects",
            ModelKind::ClusterSequence { .. } => "cluster_sequence",
            ModelKind::WedgeOfRays { .. } => "wedge_of_rays",
        }
    }

    pub fn is_finite_model(&self) -> bool {
        matches!(self.kind, ModelKind::FiniteCloud { .. })
    }

    pub fn declared_separation(&self) -> Option<&BigRational> {
        self.declared_separation.as_ref()
    }

    /// Structural lower bound on pairwise distances, when the kind provides
    /// one. Finite clouds have no structural bound; the audit measures them.
    pub fn structural_separation(&self) -> Option<BigRational> {
        match &self.kind {
            ModelKind::FiniteCloud { .. } => None,
            ModelKind::Lattice { spacing, .. } => Some(spacing.clone()),
            // Added points may sit arbitrarily close to surviving sites, so
            // the lattice spacing is only a bound when nothing was added.
            ModelKind::LatticeWithDefects { spacing, added, .. } => {
                if added.is_empty() {
                    Some(spacing.clone())
                } else {
                    None
                }
            }
            ModelKind::ClusterSequence { templates, gap, .. } => {
                let mut sep: Option<BigRational> = None;
                for t in templates {
                    for w in t.windows(2) {
                        let d = &w[1] - &w[0];
                        if sep.as_ref().map_or(true, |s| &d < s) {
                            sep = Some(d);
                        }
                    }
                }
                let g2 = gap.gap(2);
                Some(match sep {
                    Some(s) if s < g2 => s,
                    _ => g2,
                })
            }
            ModelKind::WedgeOfRays { .. } => Some(BigRational::one()),
        }
    }

    /// Packing bound on the number of model points in any closed ball of the
    /// given radius, from the kind and its separation. Extra bounds declared
    /// in the model description override the formula at their radius.
    pub fn declared_ball_bound(&self, radius: &BigRational) -> Option<usize> {
        for (r, b) in &self.declared_ball_bounds {
            if r == radius {
                return Some(*b);
            }
        }
        if radius.is_negative() {
            return Some(0);
        }
        let line_count = |step: &BigRational| -> Option<usize> {
            // At most 2R/step + 1 points of pairwise distance >= step fit in
            // a segment of length 2R.
            let q = (radius * BigRational::from_integer(BigInt::from(2))) / step;
            let f = q.floor().to_integer().to_usize()?;
            Some(f + 1)
        };
        match &self.kind {
            ModelKind::FiniteCloud { labels, .. } => Some(labels.len()),
            ModelKind::Lattice { spacing, .. } => {
                let per_axis = line_count(spacing)?;
                per_axis.checked_pow(self.dim as u32)
            }
            ModelKind::LatticeWithDefects { spacing, added, .. } => {
                let per_axis = line_count(spacing)?;
                per_axis.checked_pow(self.dim as u32).map(|c| c + added.len())
            }
            ModelKind::ClusterSequence { .. } => {
                let sep = self.structural_separation()?;
                line_count(&sep)
            }
            ModelKind::WedgeOfRays { rays } => {
                let per_ray = line_count(&BigRational::one())?;
                per_ray.checked_mul(*rays as usize)
            }
        }
    }

    // ------------------------------------------------------------------
    // labels and sites
    // ------------------------------------------------------------------

    pub fn label_of(&self, site: &Site) -> String {
        match site {
            Site::Cloud(i) => match &self.kind {
                ModelKind::FiniteCloud { labels, .. } => labels[*i as usize].clone(),
                _ => unreachable!("cloud site in non-cloud model"),
            },
            Site::Lattice(ks) => {
                ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
            }
            Site::Added(i) => format!("a{i}"),
            Site::Cluster { n, i } => format!("c{n}.{i}"),
            Site::Wedge { ray, k } => format!("r{ray}:{k}"),
        }
    }

    pub fn resolve(&self, label: &str) -> Result<Site> {
        let err = || Error::UnknownLabel(label.to_string());
        match &self.kind {
            ModelKind::FiniteCloud { index, .. } => {
                index.get(label).map(|i| Site::Cloud(*i)).ok_or_else(err)
            }
            ModelKind::Lattice { .. } => {
                let site = parse_lattice_label(label, self.dim).ok_or_else(err)?;
                Ok(Site::Lattice(site))
            }
            ModelKind::LatticeWithDefects { removed, added, .. } => {
                if let Some(rest) = label.strip_prefix('a') {
                    if let Ok(i) = rest.parse::<u32>() {
                        if (i as usize) < added.len() && label == format!("a{i}") {
                            return Ok(Site::Added(i));
                        }
                    }
                    return Err(err());
                }
                let ks = parse_lattice_label(label, self.dim).ok_or_else(err)?;
                if removed.contains(&ks) {
                    return Err(err());
                }
                Ok(Site::Lattice(ks))
            }
            ModelKind::ClusterSequence { .. } => {
                let rest = label.strip_prefix('c').ok_or_else(err)?;
                let (n, i) = rest.split_once('.').ok_or_else(err)?;
                let n: u64 = n.parse().map_err(|_| err())?;
                let i: u32 = i.parse().map_err(|_| err())?;
                if n == 0 || (i as usize) >= self.cluster_template(n).len() {
                    return Err(err());
                }
                Ok(Site::Cluster { n, i })
            }
            ModelKind::WedgeOfRays { rays } => {
                let rest = label.strip_prefix('r').ok_or_else(err)?;
                let (ray, k) = rest.split_once(':').ok_or_else(err)?;
                let ray: u32 = ray.parse().map_err(|_| err())?;
                let k: u64 = k.parse().map_err(|_| err())?;
                if ray >= *rays {
                    return Err(err());
                }
                Ok(Site::Wedge { ray, k })
            }
        }
    }

    /// Whether the site is a point of this model.
    pub(crate) fn contains_site(&self, site: &Site) -> bool {
        match (&self.kind, site) {
            (ModelKind::FiniteCloud { labels, .. }, Site::Cloud(i)) => {
                (*i as usize) < labels.len()
            }
            (ModelKind::Lattice { .. }, Site::Lattice(ks)) => ks.len() == self.dim,
            (ModelKind::LatticeWithDefects { removed, .. }, Site::Lattice(ks)) => {
                ks.len() == self.dim && !removed.contains(ks)
            }
            (ModelKind::LatticeWithDefects { added, .. }, Site::Added(i)) => {
                (*i as usize) < added.len()
            }
            (ModelKind::ClusterSequence { .. }, Site::Cluster { n, i }) => {
                *n >= 1 && (*i as usize) < self.cluster_template(*n).len()
            }
            (ModelKind::WedgeOfRays { rays }, Site::Wedge { ray, .. }) => ray < rays,
            _ => false,
        }
    }

    fn position(&self, site: &Site) -> Position {
        match (&self.kind, site) {
            (ModelKind::FiniteCloud { coords, .. }, Site::Cloud(i)) => {
                Position::Euclid(coords[*i as usize].clone())
            }
            (ModelKind::Lattice { spacing, offset }, Site::Lattice(ks))
            | (ModelKind::LatticeWithDefects { spacing, offset, .. }, Site::Lattice(ks)) => {
                Position::Euclid(
                    ks.iter()
                        .zip(offset)
                        .map(|(k, o)| o + spacing * BigRational::from_integer(BigInt::from(*k)))
                        .collect(),
                )
            }
            (ModelKind::LatticeWithDefects { added, .. }, Site::Added(i)) => {
                Position::Euclid(added[*i as usize].clone())
            }
            (ModelKind::ClusterSequence { .. }, Site::Cluster { n, i }) => {
                Position::Euclid(vec![self.cluster_position(*n, *i)])
            }
            (ModelKind::WedgeOfRays { .. }, Site::Wedge { ray, k }) => {
                Position::Wedge { ray: *ray, k: *k }
            }
            _ => unreachable!("site does not belong to this model kind"),
        }
    }

    /// Euclidean coordinates of a site, when the model embeds in some R^d.
    /// Wedges carry their own path metric and return `None`.
    pub(crate) fn euclid_position(&self, site: &Site) -> Option<Vec<BigRational>> {
        match self.position(site) {
            Position::Euclid(p) => Some(p),
            Position::Wedge { .. } => None,
        }
    }

    pub(crate) fn cluster_template(&self, n: u64) -> &[BigRational] {
        match &self.kind {
            ModelKind::ClusterSequence { templates, .. } => {
                &templates[((n - 1) % templates.len() as u64) as usize]
            }
            _ => unreachable!("cluster template on non-cluster model"),
        }
    }

    fn cluster_width(&self, n: u64) -> BigRational {
        let t = self.cluster_template(n);
        t.last().unwrap().clone()
    }

    /// Left endpoint of cluster `n`. Cluster 1 starts at the model offset and
    /// cluster `n` is separated from cluster `n-1` by `gap(n)`.
    pub(crate) fn cluster_start(&self, n: u64) -> BigRational {
        let (gap, offset) = match &self.kind {
            ModelKind::ClusterSequence { gap, offset, .. } => (gap, offset),
            _ => unreachable!("cluster start on non-cluster model"),
        };
        let mut start = offset.clone();
        for m in 2..=n {
            start = start + self.cluster_width(m - 1) + gap.gap(m);
        }
        start
    }

    fn cluster_position(&self, n: u64, i: u32) -> BigRational {
        self.cluster_start(n) + &self.cluster_template(n)[i as usize]
    }

    /// Largest step between consecutive points along the cluster line, when
    /// the gap rule is bounded. At any scale at least this value the whole
    /// model is one chain.
    pub(crate) fn cluster_chain_bound(&self) -> Option<BigRational> {
        let (templates, gap) = match &self.kind {
            ModelKind::ClusterSequence { templates, gap, .. } => (templates, gap),
            _ => return None,
        };
        let sup = gap.sup()?;
        let mut bound = sup;
        for t in templates {
            for w in t.windows(2) {
                let d = &w[1] - &w[0];
                if d > bound {
                    bound = d;
                }
            }
        }
        Some(bound)
    }

    // ------------------------------------------------------------------
    // distance
    // ------------------------------------------------------------------

    /// Exact distance between two labelled points.
    pub fn distance(&self, x: &str, y: &str) -> Result<Dist> {
        let a = self.resolve(x)?;
        let b = self.resolve(y)?;
        Ok(self.site_distance(&a, &b))
    }

    pub fn site_distance(&self, a: &Site, b: &Site) -> Dist {
        match (self.position(a), self.position(b)) {
            (Position::Euclid(p), Position::Euclid(q)) => {
                debug_assert_eq!(p.len(), q.len());
                let mut sq = BigRational::zero();
                for (x, y) in p.iter().zip(&q) {
                    let d = x - y;
                    sq = sq + &d * &d;
                }
                Dist::from_sq(sq)
            }
            (Position::Wedge { ray: r1, k: k1 }, Position::Wedge { ray: r2, k: k2 }) => {
                if r1 == r2 {
                    Dist::from_u64(k1.abs_diff(k2))
                } else {
                    // Paths between different rays pass through both
                    // basepoints, which are at distance 1 from each other.
                    Dist::from_u64(k1 + k2 + 1)
                }
            }
            _ => unreachable!("mixed position kinds"),
        }
    }

    // ------------------------------------------------------------------
    // windows
    // ------------------------------------------------------------------

    /// Enumerate every model point inside a bounded region, sorted by site.
    pub fn enumerate_window(&self, region: &Region) -> Result<Window> {
        region.validate(self)?;
        let mut sites = match region {
            Region::Explicit { labels } => {
                let mut sites = Vec::with_capacity(labels.len());
                for l in labels {
                    sites.push(self.resolve(l)?);
                }
                let before = sites.len();
                sites.sort();
                sites.dedup();
                if sites.len() != before {
                    return Err(Error::InvalidRegion("duplicate label in explicit region".into()));
                }
                sites
            }
            _ => self.enumerate_region_sites(region)?,
        };
        sites.sort();
        sites.dedup();
        if sites.len() > MAX_WINDOW_POINTS {
            return Err(Error::WindowTooLarge(sites.len(), MAX_WINDOW_POINTS));
        }
        let labels: Vec<String> = sites.iter().map(|s| self.label_of(s)).collect();
        let mut index = BTreeMap::new();
        for (i, s) in sites.iter().enumerate() {
            index.insert(s.clone(), i);
        }
        Ok(Window { region: region.clone(), sites, labels, index })
    }

    fn enumerate_region_sites(&self, region: &Region) -> Result<Vec<Site>> {
        match &self.kind {
            ModelKind::FiniteCloud { coords, .. } => {
                let mut out = Vec::new();
                for i in 0..coords.len() {
                    let site = Site::Cloud(i as u32);
                    if self.region_contains(region, &site)? {
                        out.push(site);
                    }
                }
                Ok(out)
            }
            ModelKind::Lattice { .. } | ModelKind::LatticeWithDefects { .. } => {
                self.enumerate_lattice_region(region)
            }
            ModelKind::ClusterSequence { .. } => self.enumerate_cluster_region(region),
            ModelKind::WedgeOfRays { .. } => self.enumerate_wedge_region(region),
        }
    }

    fn region_bounding_box(&self, region: &Region) -> Result<(Vec<BigRational>, Vec<BigRational>)> {
        match region {
            Region::Box { min, max } => Ok((min.clone(), max.clone())),
            Region::Ball { center, radius } => {
                let c = self.resolve(center)?;
                match self.position(&c) {
                    Position::Euclid(p) => Ok((
                        p.iter().map(|x| x - radius).collect(),
                        p.iter().map(|x| x + radius).collect(),
                    )),
                    Position::Wedge { .. } => {
                        Err(Error::InvalidRegion("wedge model has no box coordinates".into()))
                    }
                }
            }
            Region::Explicit { .. } => {
                Err(Error::InvalidRegion("explicit region has no bounding box".into()))
            }
        }
    }

    fn enumerate_lattice_region(&self, region: &Region) -> Result<Vec<Site>> {
        let (spacing, offset) = match &self.kind {
            ModelKind::Lattice { spacing, offset } => (spacing, offset),
            ModelKind::LatticeWithDefects { spacing, offset, .. } => (spacing, offset),
            _ => unreachable!(),
        };
        let (min, max) = self.region_bounding_box(region)?;
        let mut lows = Vec::with_capacity(self.dim);
        let mut highs = Vec::with_capacity(self.dim);
        let mut count: usize = 1;
        for a in 0..self.dim {
            let lo = ((&min[a] - &offset[a]) / spacing).ceil().to_integer();
            let hi = ((&max[a] - &offset[a]) / spacing).floor().to_integer();
            let lo = lo.to_i64().ok_or_else(|| {
                Error::InvalidRegion("region coordinate out of supported range".into())
            })?;
            let hi = hi.to_i64().ok_or_else(|| {
                Error::InvalidRegion("region coordinate out of supported range".into())
            })?;
            if hi < lo {
                return Ok(Vec::new());
            }
            let span = usize::try_from(hi - lo + 1)
                .map_err(|_| Error::WindowTooLarge(usize::MAX, MAX_WINDOW_POINTS))?;
            count = count
                .checked_mul(span)
                .ok_or(Error::WindowTooLarge(usize::MAX, MAX_WINDOW_POINTS))?;
            if count > MAX_WINDOW_POINTS {
                return Err(Error::WindowTooLarge(count, MAX_WINDOW_POINTS));
            }
            lows.push(lo);
            highs.push(hi);
        }
        let mut out = Vec::new();
        let mut cur = lows.clone();
        'outer: loop {
            let site = Site::Lattice(cur.clone());
            if self.contains_site(&site) && self.region_contains(region, &site)? {
                out.push(site);
            }
            for a in (0..self.dim).rev() {
                if cur[a] < highs[a] {
                    cur[a] += 1;
                    for (j, c) in cur.iter_mut().enumerate() {
                        if j > a {
                            *c = lows[j];
                        }
                    }
                    continue 'outer;
                }
            }
            break;
        }
        if let ModelKind::LatticeWithDefects { added, .. } = &self.kind {
            for i in 0..added.len() {
                let site = Site::Added(i as u32);
                if self.region_contains(region, &site)? {
                    out.push(site);
                }
            }
        }
        Ok(out)
    }

    fn enumerate_cluster_region(&self, region: &Region) -> Result<Vec<Site>> {
        let gap = match &self.kind {
            ModelKind::ClusterSequence { gap, .. } => gap.clone(),
            _ => unreachable!(),
        };
        let (min, max) = self.region_bounding_box(region)?;
        let (lo, hi) = (min[0].clone(), max[0].clone());
        let mut out = Vec::new();
        let mut n: u64 = 1;
        let mut start = self.cluster_start(1);
        while start <= hi {
            let width = self.cluster_width(n);
            if &start + &width >= lo {
                let count = self.cluster_template(n).len();
                for i in 0..count {
                    let site = Site::Cluster { n, i: i as u32 };
                    if self.region_contains(region, &site)? {
                        out.push(site);
                    }
                }
            }
            if out.len() > MAX_WINDOW_POINTS {
                return Err(Error::WindowTooLarge(out.len(), MAX_WINDOW_POINTS));
            }
            start = start + width + gap.gap(n + 1);
            n += 1;
            if n > 2_000_000 {
                return Err(Error::ContractViolation(
                    "cluster enumeration did not terminate".into(),
                ));
            }
        }
        Ok(out)
    }

    fn enumerate_wedge_region(&self, region: &Region) -> Result<Vec<Site>> {
        let rays = match &self.kind {
            ModelKind::WedgeOfRays { rays } => *rays,
            _ => unreachable!(),
        };
        let (center, radius) = match region {
            Region::Ball { center, radius } => (self.resolve(center)?, radius),
            Region::Box { .. } => {
                return Err(Error::InvalidRegion(
                    "wedge model supports ball regions only".into(),
                ))
            }
            Region::Explicit { .. } => unreachable!("explicit handled by caller"),
        };
        let (c_ray, c_k) = match center {
            Site::Wedge { ray, k } => (ray, k),
            _ => unreachable!(),
        };
        let r_floor = radius
            .floor()
            .to_integer()
            .to_i64()
            .ok_or(Error::WindowTooLarge(usize::MAX, MAX_WINDOW_POINTS))?
            .max(0) as u64;
        let mut out = Vec::new();
        // Own ray: |k - c_k| <= r.
        let lo = c_k.saturating_sub(r_floor);
        let hi = c_k.saturating_add(r_floor);
        for k in lo..=hi {
            out.push(Site::Wedge { ray: c_ray, k });
            if out.len() > MAX_WINDOW_POINTS {
                return Err(Error::WindowTooLarge(out.len(), MAX_WINDOW_POINTS));
            }
        }
        // Other rays: k + c_k + 1 <= r.
        if r_floor >= c_k + 1 {
            let max_k = r_floor - c_k - 1;
            for ray in 0..rays {
                if ray == c_ray {
                    continue;
                }
                for k in 0..=max_k {
                    out.push(Site::Wedge { ray, k });
                    if out.len() > MAX_WINDOW_POINTS {
                        return Err(Error::WindowTooLarge(out.len(), MAX_WINDOW_POINTS));
                    }
                }
            }
        }
        Ok(out)
    }

    fn region_contains(&self, region: &Region, site: &Site) -> Result<bool> {
        match region {
            Region::Box { min, max } => match self.position(site) {
                Position::Euclid(p) => {
                    Ok(p.iter().zip(min.iter().zip(max)).all(|(x, (lo, hi))| x >= lo && x <= hi))
                }
                Position::Wedge { .. } => {
                    Err(Error::InvalidRegion("wedge model supports ball regions only".into()))
                }
            },
            Region::Ball { center, radius } => {
                let c = self.resolve(center)?;
                Ok(self.site_distance(&c, site) <= Dist::from_value(radius))
            }
            Region::Explicit { labels } => {
                let l = self.label_of(site);
                Ok(labels.iter().any(|x| x == &l))
            }
        }
    }

    /// All model points within distance `rho` of a site, including the site.
    pub(crate) fn ball_sites(&self, center: &Site, rho: &BigRational) -> Result<Vec<Site>> {
        let region = Region::Ball { center: self.label_of(center), radius: rho.clone() };
        Ok(self.enumerate_window(&region)?.sites)
    }

    /// Exact distance from `set` to the rest of the model. `Infinite` when
    /// the set exhausts the model. Works by growing balls around the members,
    /// which terminates on every infinite model kind.
    pub fn min_dist_to_outside(&self, set: &BTreeSet<Site>) -> Result<Extended> {
        if set.is_empty() {
            return Err(Error::InvalidInput("empty set has no isolation margin".into()));
        }
        for s in set {
            if !self.contains_site(s) {
                return Err(Error::UnknownLabel(self.label_of(s)));
            }
        }
        if let ModelKind::FiniteCloud { coords, .. } = &self.kind {
            let mut best: Option<Dist> = None;
            for i in 0..coords.len() {
                let outside = Site::Cloud(i as u32);
                if set.contains(&outside) {
                    continue;
                }
                for s in set {
                    let d = self.site_distance(s, &outside);
                    if best.as_ref().map_or(true, |b| &d < b) {
                        best = Some(d);
                    }
                }
            }
            return Ok(best.map_or(Extended::Infinite, Extended::Finite));
        }
        let base = self
            .structural_separation()
            .unwrap_or_else(BigRational::one);
        let mut best: Option<Dist> = None;
        for s in set {
            let mut rho = base.clone();
            let mut found: Option<Dist> = None;
            for _ in 0..48 {
                let ball = self.ball_sites(s, &rho)?;
                let nearest = ball
                    .iter()
                    .filter(|t| !set.contains(*t))
                    .map(|t| self.site_distance(s, t))
                    .min();
                if let Some(d) = nearest {
                    found = Some(d);
                    break;
                }
                rho = rho * BigRational::from_integer(BigInt::from(2));
            }
            let d = found.ok_or_else(|| {
                Error::ContractViolation("no exterior point found near a finite set".into())
            })?;
            if best.as_ref().map_or(true, |b| &d < b) {
                best = Some(d);
            }
        }
        Ok(Extended::Finite(best.expect("nonempty set")))
    }

    // ------------------------------------------------------------------
    // infinitude oracles
    // ------------------------------------------------------------------

    /// Proof that `site` lies in an infinite component of the full model at
    /// scale `alpha`, as a human-readable rule, or `None` when the model
    /// cannot certify it.
    pub fn infinite_anchor(&self, site: &Site, alpha: &Dist) -> Option<String> {
        match (&self.kind, site) {
            (ModelKind::Lattice { spacing, .. }, Site::Lattice(_)) => {
                if alpha >= &Dist::from_value(spacing) {
                    Some(format!(
                        "lattice chain: consecutive sites along an axis are {} apart",
                        rational_to_string(spacing)
                    ))
                } else {
                    None
                }
            }
            (ModelKind::LatticeWithDefects { spacing, .. }, Site::Lattice(ks)) => {
                if alpha < &Dist::from_value(spacing) {
                    return None;
                }
                self.clean_direction(ks).map(|(axis, sign)| {
                    format!(
                        "defect-free lattice chain from {} in direction {}{}",
                        self.label_of(site),
                        if sign > 0 { "+" } else { "-" },
                        axis
                    )
                })
            }
            (ModelKind::LatticeWithDefects { .. }, Site::Added(_)) => None,
            (ModelKind::ClusterSequence { .. }, Site::Cluster { .. }) => {
                let bound = self.cluster_chain_bound()?;
                if alpha >= &Dist::from_value(&bound) {
                    Some(format!(
                        "bounded gaps: every step along the line is at most {}",
                        rational_to_string(&bound)
                    ))
                } else {
                    None
                }
            }
            (ModelKind::WedgeOfRays { .. }, Site::Wedge { ray, .. }) => {
                if alpha >= &Dist::from_u64(1) {
                    Some(format!("ascending chain along ray {ray} with unit steps"))
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Direction along which the half line from a lattice site meets no
    /// removed site.
    fn clean_direction(&self, ks: &[i64]) -> Option<(usize, i8)> {
        let removed = match &self.kind {
            ModelKind::LatticeWithDefects { removed, .. } => removed,
            _ => return None,
        };
        for axis in 0..self.dim {
            for sign in [1i8, -1i8] {
                let blocked = removed.iter().any(|q| {
                    q.iter().enumerate().all(|(j, v)| j == axis || *v == ks[j])
                        && (q[axis] - ks[axis]) * (sign as i64) > 0
                });
                if !blocked {
                    return Some((axis, sign));
                }
            }
        }
        None
    }

    /// Model-level certificate that at scale `alpha` every model point
    /// outside the window lies in an infinite component. Together with an
    /// all-infinite classification of the window itself this upgrades a
    /// finite computation to a statement about the whole space.
    pub fn off_window_points_infinite(&self, alpha: &Dist, window: &Window) -> bool {
        match &self.kind {
            ModelKind::FiniteCloud { .. } => false,
            ModelKind::Lattice { spacing, .. } => alpha >= &Dist::from_value(spacing),
            ModelKind::LatticeWithDefects { spacing, removed, added, .. } => {
                if alpha < &Dist::from_value(spacing) {
                    return false;
                }
                for i in 0..added.len() {
                    // Added points carry no chain rule of their own, so they
                    // must be inside the window to be classified there.
                    if !window.contains_site(&Site::Added(i as u32)) {
                        return false;
                    }
                }
                // A lattice site with some coordinate outside the removed
                // bounding box always has a clean direction. The remaining
                // candidates form a finite grid; each must be in the window
                // or anchored.
                if removed.is_empty() {
                    return true;
                }
                let mut axis_values: Vec<BTreeSet<i64>> = vec![BTreeSet::new(); self.dim];
                for q in removed {
                    for (a, v) in q.iter().enumerate() {
                        axis_values[a].insert(*v);
                    }
                }
                let candidates: Vec<Vec<i64>> = if self.dim == 1 {
                    let lo = *axis_values[0].iter().next().unwrap();
                    let hi = *axis_values[0].iter().last().unwrap();
                    if hi - lo > 10_000 {
                        return false;
                    }
                    (lo..=hi).map(|v| vec![v]).collect()
                } else {
                    let total: usize = axis_values.iter().map(|s| s.len()).product();
                    if total > 100_000 {
                        return false;
                    }
                    let mut acc: Vec<Vec<i64>> = vec![Vec::new()];
                    for vals in &axis_values {
                        let mut next = Vec::with_capacity(acc.len() * vals.len());
                        for prefix in &acc {
                            for v in vals {
                                let mut p = prefix.clone();
                                p.push(*v);
                                next.push(p);
                            }
                        }
                        acc = next;
                    }
                    acc
                };
                candidates.into_iter().all(|ks| {
                    let site = Site::Lattice(ks.clone());
                    !self.contains_site(&site)
                        || window.contains_site(&site)
                        || self.clean_direction(&ks).is_some()
                })
            }
            ModelKind::ClusterSequence { .. } => match self.cluster_chain_bound() {
                Some(bound) => alpha >= &Dist::from_value(&bound),
                None => false,
            },
            ModelKind::WedgeOfRays { .. } => alpha >= &Dist::from_u64(1),
        }
    }

    /// Proof obligation that finite components persist at every scale, when
    /// the model provides one.
    pub fn persistence_rule(&self) -> Option<String> {
        match &self.kind {
            ModelKind::FiniteCloud { .. } => {
                Some("finite model: every component is finite at every scale".into())
            }
            ModelKind::ClusterSequence { gap, .. } if gap.unbounded() => Some(
                "unbounded gap rule: for every scale some cluster is isolated beyond it".into(),
            ),
            _ => None,
        }
    }

    /// A finite set whose isolation margin exceeds `alpha`, produced from the
    /// persistence rule. The margin claim is checkable with
    /// [`PointModel::min_dist_to_outside`].
    pub fn persistence_witness(&self, alpha: &Dist) -> Option<(Vec<Site>, String)> {
        match &self.kind {
            ModelKind::FiniteCloud { labels, .. } => Some((
                (0..labels.len() as u32).map(Site::Cloud).collect(),
                "the whole model is finite".into(),
            )),
            ModelKind::ClusterSequence { gap, .. } if gap.unbounded() => {
                let mut n: u64 = 2;
                while Dist::from_value(&gap.gap(n)) <= *alpha {
                    n += 1;
                    if n > 1_000_000 {
                        return None;
                    }
                }
                let sites = (0..self.cluster_template(n).len() as u32)
                    .map(|i| Site::Cluster { n, i })
                    .collect();
                Some((sites, format!("cluster {n} is {} from the rest", rational_to_string(&gap.gap(n)))))
            }
            _ => None,
        }
    }

    // ------------------------------------------------------------------
    // continuation tails
    // ------------------------------------------------------------------

    /// Window sites from which a symbolic tail can extend a ray beyond the
    /// window: the tail is infinite, meets no window point, avoids removed
    /// sites, and distinct candidates have pairwise disjoint tails.
    pub fn continuation_candidates(&self, window: &Window) -> Vec<(usize, ContinuationRule)> {
        let mut out = Vec::new();
        match &self.kind {
            ModelKind::FiniteCloud { .. } => {}
            ModelKind::Lattice { .. } | ModelKind::LatticeWithDefects { .. } => {
                for (idx, site) in window.sites.iter().enumerate() {
                    let ks = match site {
                        Site::Lattice(ks) => ks,
                        _ => continue,
                    };
                    'dirs: for (axis, sign) in lattice_directions(self.dim) {
                        if !self.axis_tail_clear(ks, axis, sign, window) {
                            continue 'dirs;
                        }
                        out.push((idx, ContinuationRule::AxisTail { axis, sign }));
                        break 'dirs;
                    }
                }
                // Keep one candidate per line and direction; the extreme site
                // on each line is the only one whose tail avoids the window,
                // so this is already guaranteed, but assert it cheaply.
                debug_assert!(axis_tails_pairwise_disjoint(self, window, &out));
            }
            ModelKind::ClusterSequence { .. } => {
                if self.cluster_chain_bound().is_some() {
                    if let Some((idx, _)) = window
                        .sites
                        .iter()
                        .enumerate()
                        .max_by_key(|(_, s)| match s {
                            Site::Cluster { n, i } => (*n, *i),
                            _ => (0, 0),
                        })
                    {
                        out.push((idx, ContinuationRule::ClusterTail));
                    }
                }
            }
            ModelKind::WedgeOfRays { rays } => {
                for ray in 0..*rays {
                    let best = window
                        .sites
                        .iter()
                        .enumerate()
                        .filter_map(|(i, s)| match s {
                            Site::Wedge { ray: r, k } if *r == ray => Some((i, *k)),
                            _ => None,
                        })
                        .max_by_key(|(_, k)| *k);
                    if let Some((idx, _)) = best {
                        out.push((idx, ContinuationRule::WedgeTail));
                    }
                }
            }
        }
        out
    }

    /// Whether the half line from `ks` avoids removed sites and window sites.
    fn axis_tail_clear(&self, ks: &[i64], axis: usize, sign: i8, window: &Window) -> bool {
        let beyond = |q: &[i64]| -> bool {
            q.len() == ks.len()
                && q.iter().enumerate().all(|(j, v)| j == axis || *v == ks[j])
                && (q[axis] - ks[axis]) * (sign as i64) > 0
        };
        if let ModelKind::LatticeWithDefects { removed, .. } = &self.kind {
            if removed.iter().any(|q| beyond(q)) {
                return false;
            }
        }
        !window.sites.iter().any(|s| match s {
            Site::Lattice(q) => beyond(q),
            _ => false,
        })
    }

    /// First `count` points of a tail, as sites. Used to extend listed ray
    /// prefixes and to spot-check continuation rules.
    pub fn tail_points(&self, from: &Site, rule: &ContinuationRule, count: usize) -> Result<Vec<Site>> {
        match (rule, from) {
            (ContinuationRule::AxisTail { axis, sign }, Site::Lattice(ks)) => {
                if *axis >= self.dim {
                    return Err(Error::InvalidInput("tail axis out of range".into()));
                }
                let mut out = Vec::with_capacity(count);
                let mut cur = ks.clone();
                for _ in 0..count {
                    cur[*axis] += *sign as i64;
                    let site = Site::Lattice(cur.clone());
                    if !self.contains_site(&site) {
                        return Err(Error::InvalidInput(
                            "tail passes through a removed site".into(),
                        ));
                    }
                    out.push(site);
                }
                Ok(out)
            }
            (ContinuationRule::WedgeTail, Site::Wedge { ray, k }) => Ok((1..=count as u64)
                .map(|t| Site::Wedge { ray: *ray, k: k + t })
                .collect()),
            (ContinuationRule::ClusterTail, Site::Cluster { n, i }) => {
                let mut out = Vec::with_capacity(count);
                let (mut n, mut i) = (*n, *i as usize);
                for _ in 0..count {
                    if i + 1 < self.cluster_template(n).len() {
                        i += 1;
                    } else {
                        n += 1;
                        i = 0;
                    }
                    out.push(Site::Cluster { n, i: i as u32 });
                }
                Ok(out)
            }
            _ => Err(Error::InvalidInput(
                "continuation rule does not match the model kind".into(),
            )),
        }
    }

    /// Check a continuation rule: infinite, injective, consecutive steps at
    /// most `step_bound`, and disjoint from the window when one is given.
    pub fn validate_tail(
        &self,
        from: &Site,
        rule: &ContinuationRule,
        step_bound: &Dist,
        window: Option<&Window>,
    ) -> std::result::Result<(), String> {
        match (rule, from) {
            (ContinuationRule::AxisTail { axis, sign }, Site::Lattice(ks)) => {
                let spacing = match &self.kind {
                    ModelKind::Lattice { spacing, .. }
                    | ModelKind::LatticeWithDefects { spacing, .. } => spacing,
                    _ => return Err("axis tail on a non-lattice model".into()),
                };
                if *axis >= self.dim {
                    return Err("tail axis out of range".into());
                }
                if *sign != 1 && *sign != -1 {
                    return Err("tail sign must be +1 or -1".into());
                }
                if &Dist::from_value(spacing) > step_bound {
                    return Err(format!(
                        "tail step {} exceeds the declared bound",
                        rational_to_string(spacing)
                    ));
                }
                if let ModelKind::LatticeWithDefects { removed, .. } = &self.kind {
                    let blocked = removed.iter().any(|q| {
                        q.iter().enumerate().all(|(j, v)| j == *axis || *v == ks[j])
                            && (q[*axis] - ks[*axis]) * (*sign as i64) > 0
                    });
                    if blocked {
                        return Err("tail passes through a removed site".into());
                    }
                }
                if let Some(w) = window {
                    let hit = w.sites.iter().any(|s| match s {
                        Site::Lattice(q) => {
                            q.iter().enumerate().all(|(j, v)| j == *axis || *v == ks[j])
                                && (q[*axis] - ks[*axis]) * (*sign as i64) > 0
                        }
                        _ => false,
                    });
                    if hit {
                        return Err("tail re-enters the window".into());
                    }
                }
                Ok(())
            }
            (ContinuationRule::WedgeTail, Site::Wedge { ray, k }) => {
                if !matches!(self.kind, ModelKind::WedgeOfRays { .. }) {
                    return Err("wedge tail on a non-wedge model".into());
                }
                if &Dist::from_u64(1) > step_bound {
                    return Err("unit tail step exceeds the declared bound".into());
                }
                if let Some(w) = window {
                    let hit = w.sites.iter().any(|s| match s {
                        Site::Wedge { ray: r, k: kk } => r == ray && kk > k,
                        _ => false,
                    });
                    if hit {
                        return Err("tail re-enters the window".into());
                    }
                }
                Ok(())
            }
            (ContinuationRule::ClusterTail, Site::Cluster { n, i }) => {
                let bound = self
                    .cluster_chain_bound()
                    .ok_or_else(|| "cluster tail requires a bounded gap rule".to_string())?;
                if &Dist::from_value(&bound) > step_bound {
                    return Err(format!(
                        "tail step {} exceeds the declared bound",
                        rational_to_string(&bound)
                    ));
                }
                if let Some(w) = window {
                    let hit = w.sites.iter().any(|s| match s {
                        Site::Cluster { n: nn, i: ii } => {
                            (*nn, *ii) > (*n, *i)
                        }
                        _ => false,
                    });
                    if hit {
                        return Err("tail re-enters the window".into());
                    }
                }
                Ok(())
            }
            _ => Err("continuation rule does not match the anchor site".into()),
        }
    }

    /// Whether two tails share a point. Tails are half lines in the model.
    pub fn tails_disjoint(
        &self,
        a: (&Site, &ContinuationRule),
        b: (&Site, &ContinuationRule),
    ) -> bool {
        match (a, b) {
            ((Site::Lattice(p), ContinuationRule::AxisTail { axis: ax, sign: sx }),
             (Site::Lattice(q), ContinuationRule::AxisTail { axis: ay, sign: sy })) => {
                if ax == ay {
                    let same_line =
                        p.iter().enumerate().all(|(j, v)| j == *ax || *v == q[j]);
                    if !same_line {
                        return true;
                    }
                    if sx == sy {
                        return false;
                    }
                    // Opposite rays on one line: x > p and x < q overlap when
                    // there is an integer strictly between them.
                    let (plus, minus) = if *sx > 0 { (p[*ax], q[*ax]) } else { (q[*ax], p[*ax]) };
                    plus + 1 > minus - 1
                } else {
                    // Lines along different axes meet in at most one point:
                    // it must match p away from ax and q away from ay.
                    let mut candidate = p.clone();
                    candidate[*ax] = q[*ax];
                    let matches_q =
                        candidate.iter().enumerate().all(|(j, v)| j == *ay || *v == q[j]);
                    if !matches_q {
                        return true;
                    }
                    let on_a_tail = (candidate[*ax] - p[*ax]) * (*sx as i64) > 0;
                    let on_b_tail = (candidate[*ay] - q[*ay]) * (*sy as i64) > 0;
                    !(on_a_tail && on_b_tail)
                }
            }
            ((Site::Wedge { ray: r1, .. }, ContinuationRule::WedgeTail),
             (Site::Wedge { ray: r2, .. }, ContinuationRule::WedgeTail)) => r1 != r2,
            ((_, ContinuationRule::ClusterTail), (_, ContinuationRule::ClusterTail)) => false,
            _ => true,
        }
    }

    // ------------------------------------------------------------------
    // suggested windows
    // ------------------------------------------------------------------

    /// A default region suitable for analysis up to the given scale.
    pub fn suggest_window(&self, alpha_max: &BigRational) -> Region {
        match &self.kind {
            ModelKind::FiniteCloud { labels, .. } => {
                Region::Explicit { labels: labels.clone() }
            }
            ModelKind::Lattice { spacing, offset } => {
                let half = match self.dim {
                    1 => 10,
                    2 => 8,
                    3 => 4,
                    _ => 2,
                };
                let h = spacing * BigRational::from_integer(BigInt::from(half));
                Region::Box {
                    min: offset.iter().map(|o| o - &h).collect(),
                    max: offset.iter().map(|o| o + &h).collect(),
                }
            }
            ModelKind::LatticeWithDefects { spacing, offset, removed, added } => {
                let half = match self.dim {
                    1 => 10,
                    2 => 8,
                    3 => 4,
                    _ => 2,
                };
                let h = spacing * BigRational::from_integer(BigInt::from(half));
                let mut min: Vec<BigRational> = offset.iter().map(|o| o - &h).collect();
                let mut max: Vec<BigRational> = offset.iter().map(|o| o + &h).collect();
                let two = BigRational::from_integer(BigInt::from(2));
                let pad = (alpha_max.clone() + spacing) * two;
                let mut cover = |p: &[BigRational]| {
                    for a in 0..self.dim {
                        let lo = &p[a] - &pad;
                        let hi = &p[a] + &pad;
                        if lo < min[a] {
                            min[a] = lo;
                        }
                        if hi > max[a] {
                            max[a] = hi;
                        }
                    }
                };
                for q in removed {
                    let p: Vec<BigRational> = q
                        .iter()
                        .zip(offset)
                        .map(|(k, o)| o + spacing * BigRational::from_integer(BigInt::from(*k)))
                        .collect();
                    cover(&p);
                }
                for p in added {
                    cover(p);
                }
                Region::Box { min, max }
            }
            ModelKind::ClusterSequence { gap, offset, .. } => {
                let mut n: u64 = 2;
                while !Dist::from_value(&gap.gap(n)).exceeds_rational(alpha_max) && n < 64 {
                    n += 1;
                }
                let end = self.cluster_start(n + 1) + self.cluster_width(n + 1);
                Region::Box { min: vec![offset.clone() - BigRational::one()], max: vec![end + BigRational::one()] }
            }
            ModelKind::WedgeOfRays { .. } => {
                let twelve = BigRational::from_integer(BigInt::from(12));
                let three = BigRational::from_integer(BigInt::from(3));
                let r = if alpha_max * &three > twelve {
                    alpha_max * &three
                } else {
                    twelve
                };
                Region::Ball { center: "r0:0".into(), radius: r }
            }
        }
    }
}

impl Dist {
    fn exceeds_rational(&self, r: &BigRational) -> bool {
        if r.is_negative() {
            return true;
        }
        self > &Dist::from_value(r)
    }
}

fn lattice_directions(dim: usize) -> Vec<(usize, i8)> {
    let mut dirs = Vec::with_capacity(2 * dim);
    for axis in 0..dim {
        dirs.push((axis, 1i8));
        dirs.push((axis, -1i8));
    }
    dirs
}

#[cfg(debug_assertions)]
fn axis_tails_pairwise_disjoint(
    model: &PointModel,
    window: &Window,
    cands: &[(usize, ContinuationRule)],
) -> bool {
    for (i, (ia, ra)) in cands.iter().enumerate() {
        for (ib, rb) in cands.iter().skip(i + 1) {
            if !model.tails_disjoint((&window.sites[*ia], ra), (&window.sites[*ib], rb)) {
                return false;
            }
        }
    }
    true
}

#[cfg(not(debug_assertions))]
fn axis_tails_pairwise_disjoint(
    _model: &PointModel,
    _window: &Window,
    _cands: &[(usize, ContinuationRule)],
) -> bool {
    true
}

fn parse_lattice_label(label: &str, dim: usize) -> Option<Vec<i64>> {
    let parts: Vec<&str> = label.split(',').collect();
    if parts.len() != dim {
        return None;
    }
    let mut ks = Vec::with_capacity(dim);
    for p in parts {
        ks.push(p.trim().parse::<i64>().ok()?);
    }
    Some(ks)
}

/// A bounded region of a model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Box {
        #[serde(with = "rational_vec_serde")]
        min: Vec<BigRational>,
        #[serde(with = "rational_vec_serde")]
        max: Vec<BigRational>,
    },
    Ball {
        center: String,
        #[serde(with = "rational_serde")]
        radius: BigRational,
    },
    Explicit {
        labels: Vec<String>,
    },
}

impl Region {
    fn validate(&self, model: &PointModel) -> Result<()> {
        match self {
            Region::Box { min, max } => {
                if min.len() != model.dim() || max.len() != model.dim() {
                    return Err(Error::InvalidRegion(format!(
                        "box dimension {} does not match model dimension {}",
                        min.len(),
                        model.dim()
                    )));
                }
                for (lo, hi) in min.iter().zip(max) {
                    if lo > hi {
                        return Err(Error::InvalidRegion("box has min above max".into()));
                    }
                }
                Ok(())
            }
            Region::Ball { center, radius } => {
                model.resolve(center)?;
                if radius.is_negative() {
                    return Err(Error::InvalidRegion("ball radius must be nonnegative".into()));
                }
                Ok(())
            }
            Region::Explicit { labels } => {
                if labels.is_empty() {
                    return Err(Error::InvalidRegion("explicit region is empty".into()));
                }
                Ok(())
            }
        }
    }
}

pub(crate) mod rational_serde {
    use super::*;
    use serde::de::Error as _;

    pub fn serialize<S: serde::Serializer>(
        r: &BigRational,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&rational_to_string(r))
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BigRational, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        super::json::value_to_rational(&v)
            .ok_or_else(|| D::Error::custom(format!("bad rational `{v}`")))
    }
}

pub(crate) mod rational_vec_serde {
    use super::*;
    use serde::de::Error as _;

    pub fn serialize<S: serde::Serializer>(
        v: &[BigRational],
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for r in v {
            seq.serialize_element(&rational_to_string(r))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<BigRational>, D::Error> {
        let vals = Vec::<serde_json::Value>::deserialize(d)?;
        vals.iter()
            .map(|v| {
                super::json::value_to_rational(v)
                    .ok_or_else(|| D::Error::custom(format!("bad rational `{v}`")))
            })
            .collect()
    }
}

/// The model points inside a region, sorted, with stable labels.
#[derive(Clone, Debug)]
pub struct Window {
    pub(crate) region: Region,
    pub(crate) sites: Vec<Site>,
    labels: Vec<String>,
    index: BTreeMap<Site, usize>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn site(&self, i: usize) -> &Site {
        &self.sites[i]
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, site: &Site) -> Option<usize> {
        self.index.get(site).copied()
    }

    pub fn contains_site(&self, site: &Site) -> bool {
        self.index.contains_key(site)
    }

    /// Largest pairwise distance in the window.
    pub fn diameter(&self, model: &PointModel) -> Option<Dist> {
        let mut best: Option<Dist> = None;
        for i in 0..self.sites.len() {
            for j in (i + 1)..self.sites.len() {
                let d = model.site_distance(&self.sites[i], &self.sites[j]);
                if best.as_ref().map_or(true, |b| &d > b) {
                    best = Some(d);
                }
            }
        }
        best
    }
}

/// Exact pairwise distances of a window, computed once and shared by the
/// per-scale passes.
pub struct DistMatrix {
    n: usize,
    upper: Vec<Dist>,
    zero: Dist,
}

impl DistMatrix {
    pub fn get(&self, i: usize, j: usize) -> &Dist {
        if i == j {
            return &self.zero;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        &self.upper[i * (2 * self.n - i - 1) / 2 + (j - i - 1)]
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Compute all pairwise window distances exactly.
pub fn distance_matrix(model: &PointModel, window: &Window) -> DistMatrix {
    let n = window.len();
    let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            upper.push(model.site_distance(window.site(i), window.site(j)));
        }
    }
    DistMatrix { n, upper, zero: Dist::zero() }
}

/// Audit of uniform discreteness and bounded geometry on a window.
#[derive(Clone, Debug, Serialize)]
pub struct GeometryAudit {
    pub point_count: usize,
    /// Smallest pairwise distance observed in the window.
    pub separation: Extended,
    pub declared_separation: Option<Dist>,
    pub separation_ok: bool,
    pub ball_counts: Vec<BallCountEntry>,
    pub bounds_ok: bool,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BallCountEntry {
    pub radius: Dist,
    /// Largest number of window points in a closed ball of this radius
    /// centered at a window point.
    pub max_count: usize,
    pub declared_bound: Option<usize>,
    pub within_bound: bool,
}

/// Measure separation and ball counts on a window and compare them with the
/// declared constants. Violations are report content, not errors.
pub fn audit_geometry(
    model: &PointModel,
    window: &Window,
    radii: &[BigRational],
) -> GeometryAudit {
    let n = window.len();
    let matrix = distance_matrix(model, window);
    let mut separation = Extended::Infinite;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = matrix.get(i, j);
            match &separation {
                Extended::Finite(cur) if d >= cur => {}
                _ => separation = Extended::Finite(d.clone()),
            }
        }
    }
    let mut violations = Vec::new();
    let declared_separation = model
        .declared_separation()
        .map(Dist::from_value);
    let separation_ok = match (&separation, &declared_separation) {
        (Extended::Finite(d), Some(decl)) => {
            if d < decl {
                violations.push(format!(
                    "pairwise distance {} is below the declared separation {}",
                    d, decl
                ));
                false
            } else {
                true
            }
        }
        _ => true,
    };
    if let Extended::Finite(d) = &separation {
        if d.is_zero() {
            violations.push("two window points coincide".into());
        }
    }
    let mut ball_counts = Vec::with_capacity(radii.len());
    let mut bounds_ok = true;
    for r in radii {
        let rd = Dist::from_value(r);
        let mut max_count = 0usize;
        for i in 0..n {
            let count = (0..n).filter(|&j| matrix.get(i, j) <= &rd).count();
            max_count = max_count.max(count);
        }
        let declared_bound = model.declared_ball_bound(r);
        let within = declared_bound.map_or(true, |b| max_count <= b);
        if !within {
            bounds_ok = false;
            violations.push(format!(
                "ball of radius {} holds {} window points, declared bound {}",
                rational_to_string(r),
                max_count,
                declared_bound.unwrap()
            ));
        }
        ball_counts.push(BallCountEntry { radius: rd, max_count, declared_bound, within_bound: within });
    }
    GeometryAudit {
        point_count: n,
        separation,
        declared_separation,
        separation_ok,
        ball_counts,
        bounds_ok,
        violations,
    }
}

/// Sorted distinct scales at or below `alpha_max` where the windowed Rips
/// graph can change: all pairwise window distances, merged with structural
/// scales of the model (lattice spacing, occurring gap values).
pub fn critical_scales(
    model: &PointModel,
    window: &Window,
    alpha_max: &BigRational,
) -> Vec<Dist> {
    critical_scales_from(&distance_matrix(model, window), model, alpha_max)
}

/// Same as [`critical_scales`], reusing a precomputed distance matrix.
pub fn critical_scales_from(
    matrix: &DistMatrix,
    model: &PointModel,
    alpha_max: &BigRational,
) -> Vec<Dist> {
    let cap = Dist::from_value(alpha_max);
    let mut scales: BTreeSet<Dist> = BTreeSet::new();
    let n = matrix.n();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = matrix.get(i, j);
            if !d.is_zero() && d <= &cap {
                scales.insert(d.clone());
            }
        }
    }
    match &model.kind {
        ModelKind::Lattice { spacing, .. } | ModelKind::LatticeWithDefects { spacing, .. } => {
            let d = Dist::from_value(spacing);
            if d <= cap {
                scales.insert(d);
            }
        }
        ModelKind::ClusterSequence { gap, .. } => {
            let mut n: u64 = 2;
            loop {
                let g = Dist::from_value(&gap.gap(n));
                if g > cap {
                    break;
                }
                scales.insert(g);
                n += 1;
                if n > 4096 {
                    break;
                }
            }
        }
        ModelKind::WedgeOfRays { .. } => {
            let d = Dist::from_u64(1);
            if d <= cap {
                scales.insert(d);
            }
        }
        ModelKind::FiniteCloud { .. } => {}
    }
    scales.into_iter().collect()
}

/// Priority used to pick deterministic roots: prefer structurally small
/// sites, then the site order.
pub(crate) fn root_norm(site: &Site) -> u64 {
    match site {
        Site::Cloud(i) => *i as u64,
        Site::Lattice(ks) => ks.iter().map(|k| k.unsigned_abs()).sum(),
        Site::Added(_) => u64::MAX,
        Site::Cluster { n, .. } => *n,
        Site::Wedge { k, .. } => *k,
    }
}

//! Maximal separated nets in sampled regions.
//!
//! A continuous region is stood in for by a finite grid sample at pitch `h`.
//! [`build_net`] runs a deterministic greedy scan that keeps a point exactly
//! when it is further than `r` from everything kept so far; the result is a
//! maximal `r`-separated subset of the sample. Maximality makes the net an
//! `r`-cover of the sample, and on a connected region (with `r > 2h` so the
//! sampling cannot break adjacency) the net's proximity graph at scale `3r`
//! is connected. [`check_net`] verifies all three properties exactly and, on
//! a connectivity failure, reports the separating split.
//!
//! All geometry is exact: grid points are rational, and comparisons run on
//! scaled integers.

use crate::dist::{Dist, Extended};
use crate::space_models::{rational_serde, rational_vec_serde, PointModel};
use crate::union_find::DisjointSet;
use crate::{Error, Result};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

const MAX_SAMPLE_POINTS: usize = 400_000;
const MAX_SCALED_COORD: i128 = 1_000_000_000_000;

/// Region shapes that can be sampled on a rational grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainShape {
    Box {
        #[serde(with = "rational_vec_serde")]
        min: Vec<BigRational>,
        #[serde(with = "rational_vec_serde")]
        max: Vec<BigRational>,
    },
    Disk {
        #[serde(with = "rational_vec_serde")]
        center: Vec<BigRational>,
        #[serde(with = "rational_serde")]
        radius: BigRational,
    },
    Annulus {
        #[serde(with = "rational_vec_serde")]
        center: Vec<BigRational>,
        #[serde(with = "rational_serde")]
        inner: BigRational,
        #[serde(with = "rational_serde")]
        outer: BigRational,
    },
    Union { parts: Vec<DomainShape> },
}

impl DomainShape {
    fn dim(&self) -> Result<usize> {
        match self {
            DomainShape::Box { min, max } => {
                if min.is_empty() || min.len() != max.len() {
                    return Err(Error::InvalidRegion("box bounds disagree".into()));
                }
                Ok(min.len())
            }
            DomainShape::Disk { center, .. } | DomainShape::Annulus { center, .. } => {
                if center.is_empty() {
                    return Err(Error::InvalidRegion("empty centre".into()));
                }
                Ok(center.len())
            }
            DomainShape::Union { parts } => {
                let mut dims = parts.iter().map(|p| p.dim());
                let first = dims
                    .next()
                    .ok_or_else(|| Error::InvalidRegion("empty union".into()))??;
                for d in dims {
                    if d? != first {
                        return Err(Error::InvalidRegion("union mixes dimensions".into()));
                    }
                }
                Ok(first)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DomainShape::Box { min, max } => {
                if min.iter().zip(max).any(|(a, b)| a > b) {
                    return Err(Error::InvalidRegion("box with min above max".into()));
                }
            }
            DomainShape::Disk { radius, .. } => {
                if radius.is_negative() {
                    return Err(Error::InvalidRegion("negative radius".into()));
                }
            }
            DomainShape::Annulus { inner, outer, .. } => {
                if inner.is_negative() || inner > outer {
                    return Err(Error::InvalidRegion("annulus needs 0 <= inner <= outer".into()));
                }
            }
            DomainShape::Union { parts } => {
                for p in parts {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box.
    fn bbox(&self) -> (Vec<BigRational>, Vec<BigRational>) {
        match self {
            DomainShape::Box { min, max } => (min.clone(), max.clone()),
            DomainShape::Disk { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainShape::Annulus { center, outer, .. } => (
                center.iter().map(|c| c - outer).collect(),
                center.iter().map(|c| c + outer).collect(),
            ),
            DomainShape::Union { parts } => {
                let (mut lo, mut hi) = parts[0].bbox();
                for p in &parts[1..] {
                    let (l, h) = p.bbox();
                    for j in 0..lo.len() {
                        if l[j] < lo[j] {
                            lo[j] = l[j].clone();
                        }
                        if h[j] > hi[j] {
                            hi[j] = h[j].clone();
                        }
                    }
                }
                (lo, hi)
            }
        }
    }

    fn contains(&self, p: &[BigRational]) -> bool {
        match self {
            DomainShape::Box { min, max } => {
                p.iter().zip(min).all(|(x, l)| x >= l) && p.iter().zip(max).all(|(x, u)| x <= u)
            }
            DomainShape::Disk { center, radius } => {
                dist_sq(p, center) <= radius * radius
            }
            DomainShape::Annulus { center, inner, outer } => {
                let d = dist_sq(p, center);
                d >= inner * inner && d <= outer * outer
            }
            DomainShape::Union { parts } => parts.iter().any(|q| q.contains(p)),
        }
    }
}

fn dist_sq(p: &[BigRational], q: &[BigRational]) -> BigRational {
    let mut s = BigRational::zero();
    for (x, y) in p.iter().zip(q) {
        let d = x - y;
        s = s + &d * &d;
    }
    s
}

/// A finite stand-in for a region: grid points of pitch `h` inside the
/// shape, in ascending coordinate order. By construction every region point
/// lies within `h` of the grid near a sample point, so the sample inherits
/// the region's large-scale shape; connectivity is a declared property of
/// the generator, re-examined by [`check_net`].
#[derive(Clone, Debug)]
pub struct DomainSample {
    pub dim: usize,
    pub resolution: BigRational,
    pub declared_connected: bool,
    pub points: Vec<Vec<BigRational>>,
}

/// Enumerate the grid points of pitch `h` inside a shape.
pub fn sample_domain(
    shape: &DomainShape,
    h: &BigRational,
    declared_connected: bool,
) -> Result<DomainSample> {
    if !h.is_positive() {
        return Err(Error::InvalidInput("grid pitch must be positive".into()));
    }
    shape.validate()?;
    let dim = shape.dim()?;
    let (lo, hi) = shape.bbox();
    let mut k_lo = Vec::with_capacity(dim);
    let mut k_hi = Vec::with_capacity(dim);
    let mut count: u128 = 1;
    for j in 0..dim {
        let a = (&lo[j] / h).ceil().to_integer();
        let b = (&hi[j] / h).floor().to_integer();
        if b < a {
            return Err(Error::InvalidRegion(
                "the sampled region contains no grid points".into(),
            ));
        }
        let width = (&b - &a + BigInt::from(1))
            .to_u128()
            .ok_or_else(|| Error::WindowTooLarge(usize::MAX, MAX_SAMPLE_POINTS))?;
        count = count.saturating_mul(width);
        if count > MAX_SAMPLE_POINTS as u128 {
            return Err(Error::WindowTooLarge(count as usize, MAX_SAMPLE_POINTS));
        }
        k_lo.push(a);
        k_hi.push(b);
    }
    let mut points = Vec::new();
    let mut k = k_lo.clone();
    'outer: loop {
        let p: Vec<BigRational> =
            k.iter().map(|kj| BigRational::from(kj.clone()) * h).collect();
        if shape.contains(&p) {
            points.push(p);
        }
        for j in (0..dim).rev() {
            if k[j] < k_hi[j] {
                k[j] += 1;
                for (idx, kj) in k.iter_mut().enumerate() {
                    if idx > j {
                        *kj = k_lo[idx].clone();
                    }
                }
                continue 'outer;
            }
        }
        break;
    }
    if points.is_empty() {
        return Err(Error::InvalidRegion(
            "the sampled region contains no grid points".into(),
        ));
    }
    Ok(DomainSample { dim, resolution: h.clone(), declared_connected, points })
}

/// Scaled-integer view of the sample: all coordinates and the threshold are
/// multiplied by a common denominator so squared distances compare exactly
/// in machine integers.
struct Scaled {
    pts: Vec<Vec<i128>>,
    r: i128,
}

impl Scaled {
    fn build(domain: &DomainSample, r: &BigRational) -> Result<Scaled> {
        let l = domain.resolution.denom().lcm(r.denom());
        let to_scaled = |x: &BigRational| -> Result<i128> {
            let v = (x * BigRational::from(l.clone())).to_integer();
            let v = v.to_i128().ok_or_else(|| {
                Error::InvalidInput("coordinates too large for exact arithmetic".into())
            })?;
            if v.abs() > MAX_SCALED_COORD {
                return Err(Error::InvalidInput(
                    "coordinates too large for exact arithmetic".into(),
                ));
            }
            Ok(v)
        };
        let mut pts = Vec::with_capacity(domain.points.len());
        for p in &domain.points {
            let sp: Result<Vec<i128>> = p.iter().map(&to_scaled).collect();
            pts.push(sp?);
        }
        Ok(Scaled { pts, r: to_scaled(r)? })
    }

    fn d2(&self, i: usize, j: usize) -> i128 {
        self.pts[i]
            .iter()
            .zip(&self.pts[j])
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum()
    }
}

/// Squared distance in original units, as an exact rational.
fn sample_d2(domain: &DomainSample, i: usize, j: usize) -> BigRational {
    dist_sq(&domain.points[i], &domain.points[j])
}

/// Greedy maximal `r`-separated subset of the sample, scanned in sample
/// order. Requires `r > 2h`: at a coarser pitch the sample is dense enough
/// that separation and covering statements about the sample carry the
/// intended meaning for the region.
pub fn build_net(domain: &DomainSample, r: &BigRational) -> Result<Vec<usize>> {
    let two_h = BigRational::from(BigInt::from(2)) * &domain.resolution;
    if *r <= two_h {
        return Err(Error::InvalidInput(format!(
            "net separation must exceed twice the grid pitch: r = {} but 2h = {}",
            crate::dist::rational_to_string(r),
            crate::dist::rational_to_string(&two_h),
        )));
    }
    let scaled = Scaled::build(domain, r)?;
    let r2 = scaled.r * scaled.r;
    let mut chosen: Vec<usize> = Vec::new();
    for i in 0..scaled.pts.len() {
        if chosen.iter().all(|&j| scaled.d2(i, j) > r2) {
            chosen.push(i);
        }
    }
    Ok(chosen)
}

/// The two sides of a failed connectivity check, with the separating gap.
#[derive(Clone, Debug, Serialize)]
pub struct SplitReport {
    /// Sample indices of one proximity component of the net.
    pub side_a: Vec<usize>,
    /// Sample indices of the rest of the net.
    pub side_b: Vec<usize>,
    /// Smallest distance between the two sides.
    pub gap: Dist,
}

/// Everything [`check_net`] verifies about a net.
#[derive(Clone, Debug, Serialize)]
pub struct NetReport {
    pub net_size: usize,
    /// All pairwise net distances strictly exceed `r`.
    pub separation_ok: bool,
    /// Largest distance from a sample point to the net.
    pub covering_radius: Extended,
    /// Covering radius at most `r`.
    pub covering_ok: bool,
    /// No sample point can be added without breaking separation; for a
    /// greedy net this restates covering, and it is checked exhaustively.
    pub maximal: bool,
    /// The net's proximity graph at scale `3r` is connected.
    pub connectivity_3r_ok: bool,
    pub component_count: usize,
    pub split: Option<SplitReport>,
    pub declared_connected: bool,
}

/// Verify separation, covering, maximality, and `3r`-connectivity of a net
/// (given as sample indices), all with exact arithmetic.
pub fn check_net(net: &[usize], domain: &DomainSample, r: &BigRational) -> Result<NetReport> {
    if !r.is_positive() {
        return Err(Error::InvalidInput("net separation must be positive".into()));
    }
    let n = domain.points.len();
    let mut seen = vec![false; n];
    for &i in net {
        if i >= n {
            return Err(Error::InvalidInput(format!("net index {i} out of range")));
        }
        if seen[i] {
            return Err(Error::InvalidInput(format!("net index {i} listed twice")));
        }
        seen[i] = true;
    }
    let scaled = Scaled::build(domain, r)?;
    let r2 = scaled.r * scaled.r;
    let r3_2 = 9 * r2;

    let mut separation_ok = true;
    for (a, &i) in net.iter().enumerate() {
        for &j in &net[a + 1..] {
            if scaled.d2(i, j) <= r2 {
                separation_ok = false;
            }
        }
    }

    let mut covering_sq_max: Option<(i128, usize, usize)> = None;
    let mut covering_ok = true;
    let mut maximal = true;
    if net.is_empty() {
        covering_ok = false;
        maximal = false;
    } else {
        for i in 0..n {
            let (best, arg) = net
                .iter()
                .map(|&j| (scaled.d2(i, j), j))
                .min()
                .expect("net is nonempty");
            if covering_sq_max.as_ref().map_or(true, |(m, _, _)| best > *m) {
                covering_sq_max = Some((best, i, arg));
            }
            if best > r2 {
                covering_ok = false;
                // This point could be added to the net without breaking
                // separation, so the net is not maximal.
                maximal = false;
            }
        }
    }
    let covering_radius = match covering_sq_max {
        Some((_, i, j)) => Extended::Finite(Dist::from_sq(sample_d2(domain, i, j))),
        None => {
            if n == 0 {
                Extended::Finite(Dist::zero())
            } else {
                Extended::Infinite
            }
        }
    };

    // Proximity components at scale 3r.
    let mut ds = DisjointSet::new(net.len());
    for a in 0..net.len() {
        for b in (a + 1)..net.len() {
            if scaled.d2(net[a], net[b]) <= r3_2 {
                ds.union(a, b);
            }
        }
    }
    let mut comps: std::collections::BTreeMap<usize, Vec<usize>> =
        std::collections::BTreeMap::new();
    for a in 0..net.len() {
        comps.entry(ds.find(a)).or_default().push(a);
    }
    let component_count = comps.len();
    let connectivity_3r_ok = component_count <= 1;
    let split = if component_count >= 2 {
        let first = comps.values().next().expect("at least two components").clone();
        let in_first: std::collections::BTreeSet<usize> = first.iter().copied().collect();
        let rest: Vec<usize> =
            (0..net.len()).filter(|a| !in_first.contains(a)).collect();
        let mut gap: Option<i128> = None;
        let mut gap_pair = (0usize, 0usize);
        for &a in &first {
            for &b in &rest {
                let d = scaled.d2(net[a], net[b]);
                if gap.map_or(true, |g| d < g) {
                    gap = Some(d);
                    gap_pair = (net[a], net[b]);
                }
            }
        }
        Some(SplitReport {
            side_a: first.iter().map(|&a| net[a]).collect(),
            side_b: rest.iter().map(|&b| net[b]).collect(),
            gap: Dist::from_sq(sample_d2(domain, gap_pair.0, gap_pair.1)),
        })
    } else {
        None
    };

    Ok(NetReport {
        net_size: net.len(),
        separation_ok,
        covering_radius,
        covering_ok,
        maximal,
        connectivity_3r_ok,
        component_count,
        split,
        declared_connected: domain.declared_connected,
    })
}

/// Export a net as a finite point model usable by every other operation.
pub fn net_to_model(domain: &DomainSample, net: &[usize]) -> Result<PointModel> {
    let mut points = Vec::with_capacity(net.len());
    for (a, &i) in net.iter().enumerate() {
        let p = domain
            .points
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("net index {i} out of range")))?;
        points.push((format!("n{a}"), p.clone()));
    }
    PointModel::finite_cloud(points)
}

#[cfg(test)]
mod tests;

//! Wannier-type isometries and frame polar corrections over a discretized
//! domain.
//!
//! The domain is a finite family of weighted cells; a function is a vector
//! of cell values and inner products carry the cell weights. A family of
//! bump functions, one per center, is given by amplitudes on the cells of
//! its support. When supports are pairwise disjoint and every bump has unit
//! norm, stacking the bumps as columns gives an isometry whose range
//! projection is block diagonal and has finite propagation; that is the
//! [`build_wannier_isometry`] path, and its identities are certified in
//! exact rational arithmetic whenever the data admits it.
//!
//! When supports overlap the columns are only a frame. [`frame_polar`]
//! requires the Gram matrix to stay away from zero, forms the polar
//! correction `W = V (V*V)^{-1/2}` by symmetric eigendecomposition, and
//! certifies `W` against an independent orthonormalization of the same
//! columns, so no identity is taken from the construction that produced it.
//!
//! Amplitudes are signed square roots of rationals. That covers the typical
//! normalized indicator (amplitude `sqrt(1/5)` on five unit cells) while
//! keeping norms and Gram entries computable exactly: squares and products
//! of amplitudes are rational whenever the certificate needs them.

use super::{operator_norm, OperatorCertificate};
use crate::dist::Dist;
use crate::space_models::{rational_serde, rational_vec_serde};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Signed square root of a nonnegative rational.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Amplitude {
    negative: bool,
    magnitude: Dist,
}

impl Amplitude {
    pub fn rational(v: &BigRational) -> Self {
        Amplitude { negative: v.is_negative(), magnitude: Dist::from_value(&v.abs()) }
    }

    /// The amplitude `sqrt(sq)`, or its negative.
    pub fn sqrt_of(sq: &BigRational, negative: bool) -> Result<Self> {
        if sq.is_negative() {
            return Err(Error::OperatorInput("amplitude square must be nonnegative".into()));
        }
        Ok(Amplitude { negative: negative && !sq.is_zero(), magnitude: Dist::from_sq(sq.clone()) })
    }

    pub fn is_zero(&self) -> bool {
        self.magnitude.is_zero()
    }

    /// Exact square of the value; the sign drops out.
    pub fn square(&self) -> &BigRational {
        self.magnitude.sq()
    }

    pub fn approx(&self) -> f64 {
        let m = self.magnitude.approx();
        if self.negative {
            -m
        } else {
            m
        }
    }

    /// Exact product with another amplitude, when the product is rational
    /// (their squares multiply to a perfect rational square).
    fn product_rational(&self, other: &Amplitude) -> Option<BigRational> {
        let prod = Dist::from_sq(self.square() * other.square());
        let v = prod.as_value()?;
        Some(if self.negative != other.negative { -v } else { v })
    }

    pub fn parse(s: &str) -> Option<Self> {
        let t = s.trim();
        let (negative, rest) = match t.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, t),
        };
        let magnitude = Dist::parse(rest)?;
        Some(Amplitude { negative: negative && !magnitude.is_zero(), magnitude })
    }
}

impl fmt::Display for Amplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negative {
            write!(f, "-{}", self.magnitude.exact_string())
        } else {
            write!(f, "{}", self.magnitude.exact_string())
        }
    }
}

impl Serialize for Amplitude {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Amplitude {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Amplitude::parse(&s).ok_or_else(|| D::Error::custom(format!("bad amplitude `{s}`")))
    }
}

/// One grid cell: a labeled position with a positive measure weight.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    #[serde(with = "rational_vec_serde")]
    pub position: Vec<BigRational>,
    #[serde(with = "rational_serde")]
    pub weight: BigRational,
}

/// A finite weighted discretization of a domain.
#[derive(Clone, Debug)]
pub struct DiscretizedSpace {
    cells: Vec<Cell>,
    by_label: BTreeMap<String, usize>,
}

impl DiscretizedSpace {
    pub fn new(cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::OperatorInput("the discretization has no cells".into()));
        }
        let dim = cells[0].position.len();
        let mut by_label = BTreeMap::new();
        for (i, c) in cells.iter().enumerate() {
            if c.label.is_empty() {
                return Err(Error::OperatorInput("cell labels must be nonempty".into()));
            }
            if by_label.insert(c.label.clone(), i).is_some() {
                return Err(Error::OperatorInput(format!("duplicate cell label `{}`", c.label)));
            }
            if c.position.len() != dim {
                return Err(Error::OperatorInput(format!(
                    "cell `{}` has dimension {} instead of {dim}",
                    c.label,
                    c.position.len()
                )));
            }
            if !c.weight.is_positive() {
                return Err(Error::OperatorInput(format!(
                    "cell `{}` has nonpositive weight",
                    c.label
                )));
            }
        }
        Ok(DiscretizedSpace { cells, by_label })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.by_label
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Exact Euclidean distance between two cell positions.
    pub fn cell_distance(&self, i: usize, j: usize) -> Dist {
        let mut sq = BigRational::zero();
        for (a, b) in self.cells[i].position.iter().zip(&self.cells[j].position) {
            let d = a - b;
            sq = sq + &d * &d;
        }
        Dist::from_sq(sq)
    }
}

/// One bump: a labeled center with amplitudes on its support cells. The
/// home cell records where the center sits; it must be one of the support
/// cells.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WannierCenter {
    pub label: String,
    pub home: String,
    pub amplitudes: Vec<(String, Amplitude)>,
}

struct ResolvedCenter {
    /// Cell index and amplitude, one entry per support cell.
    cols: Vec<(usize, Amplitude)>,
}

impl ResolvedCenter {
    /// Squared norm in the weighted inner product, exactly.
    fn norm_sq(&self, space: &DiscretizedSpace) -> BigRational {
        let mut ns = BigRational::zero();
        for (c, a) in &self.cols {
            ns = ns + a.square() * &space.cells[*c].weight;
        }
        ns
    }

    /// Largest distance between support cells carrying nonzero amplitude.
    fn active_diameter(&self, space: &DiscretizedSpace) -> Dist {
        let active: Vec<usize> =
            self.cols.iter().filter(|(_, a)| !a.is_zero()).map(|(c, _)| *c).collect();
        let mut d = Dist::zero();
        for i in 0..active.len() {
            for j in (i + 1)..active.len() {
                let dd = space.cell_distance(active[i], active[j]);
                if dd > d {
                    d = dd;
                }
            }
        }
        d
    }

    /// Largest distance between any two support cells.
    fn support_diameter(&self, space: &DiscretizedSpace) -> Dist {
        let mut d = Dist::zero();
        for i in 0..self.cols.len() {
            for j in (i + 1)..self.cols.len() {
                let dd = space.cell_distance(self.cols[i].0, self.cols[j].0);
                if dd > d {
                    d = dd;
                }
            }
        }
        d
    }
}

fn resolve_centers(
    space: &DiscretizedSpace,
    centers: &[WannierCenter],
    allow_overlap: bool,
) -> Result<Vec<ResolvedCenter>> {
    if centers.is_empty() {
        return Err(Error::OperatorInput("no centers given".into()));
    }
    let mut labels = BTreeSet::new();
    let mut used: BTreeMap<usize, String> = BTreeMap::new();
    let mut out = Vec::with_capacity(centers.len());
    for center in centers {
        if center.label.is_empty() {
            return Err(Error::OperatorInput("center labels must be nonempty".into()));
        }
        if !labels.insert(center.label.clone()) {
            return Err(Error::OperatorInput(format!(
                "duplicate center label `{}`",
                center.label
            )));
        }
        if center.amplitudes.is_empty() {
            return Err(Error::OperatorInput(format!(
                "center `{}` has an empty support",
                center.label
            )));
        }
        let mut seen = BTreeSet::new();
        let mut cols = Vec::with_capacity(center.amplitudes.len());
        for (cell, a) in &center.amplitudes {
            let c = space.index_of(cell)?;
            if !seen.insert(c) {
                return Err(Error::OperatorInput(format!(
                    "center `{}` lists cell `{cell}` twice",
                    center.label
                )));
            }
            if !allow_overlap {
                if let Some(other) = used.insert(c, center.label.clone()) {
                    return Err(Error::OperatorInput(format!(
                        "supports overlap: cell `{cell}` belongs to `{other}` and `{}`; \
                         overlapping families go through the frame path",
                        center.label
                    )));
                }
            }
            cols.push((c, a.clone()));
        }
        let home = space.index_of(&center.home)?;
        if !seen.contains(&home) {
            return Err(Error::OperatorInput(format!(
                "center `{}` does not lie in its own support",
                center.label
            )));
        }
        out.push(ResolvedCenter { cols });
    }
    Ok(out)
}

fn approx_ratio(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::MAX)
}

/// Column matrix of the family in the weighted basis: entry (cell, center)
/// is the amplitude times the square root of the cell weight, so plain
/// matrix products compute weighted inner products.
fn column_matrix(space: &DiscretizedSpace, resolved: &[ResolvedCenter]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(space.len(), resolved.len());
    for (x, rc) in resolved.iter().enumerate() {
        for (c, a) in &rc.cols {
            m[(*c, x)] = a.approx() * approx_ratio(&space.cells[*c].weight).sqrt();
        }
    }
    m
}

/// Result of the disjoint-support isometry construction.
#[derive(Debug)]
pub struct IsometryBuild {
    /// Columns of the family in the weighted basis, one per center.
    pub u: DMatrix<f64>,
    /// The range projection `U U*`.
    pub projection: DMatrix<f64>,
    /// Exact propagation: beyond this distance all projection entries are
    /// exactly zero.
    pub propagation: Dist,
    pub max_support_diameter: Dist,
    pub certificate: OperatorCertificate,
}

/// Build the isometry sending the standard basis vector of each center to
/// its bump. Supports must be pairwise disjoint and every bump must have
/// unit norm up to one part in 10^12, exactly computed.
pub fn build_wannier_isometry(
    space: &DiscretizedSpace,
    centers: &[WannierCenter],
) -> Result<IsometryBuild> {
    let resolved = resolve_centers(space, centers, false)?;
    let one = BigRational::one();
    let norm_tol = BigRational::new(BigInt::from(1), BigInt::from(10u64.pow(12)));
    let mut exact_norms = true;
    for (rc, center) in resolved.iter().zip(centers) {
        let ns = rc.norm_sq(space);
        if (&ns - &one).abs() > norm_tol {
            return Err(Error::OperatorInput(format!(
                "center `{}` has squared norm {ns} instead of 1",
                center.label
            )));
        }
        if ns != one {
            exact_norms = false;
        }
    }

    let u = column_matrix(space, &resolved);
    let n = resolved.len();
    let projection = &u * u.transpose();
    let r_iso = operator_norm(&(u.transpose() * &u - DMatrix::identity(n, n)));
    let r_idem = operator_norm(&(&projection * &projection - &projection));
    let r_sa = operator_norm(&(projection.transpose() - &projection));
    if r_iso > 1e-10 || r_idem > 1e-9 || r_sa > 1e-9 {
        return Err(Error::ContractViolation(format!(
            "residuals out of bounds: isometry {r_iso:.3e}, idempotency {r_idem:.3e}, \
             self-adjointness {r_sa:.3e}"
        )));
    }

    // With disjoint supports the Gram matrix is diagonal with the exact
    // squared norms on the diagonal, and the projection splits into one
    // rank-one block per center with p^2 = ns * p; so both identities hold
    // exactly precisely when every squared norm equals 1.
    let mut propagation = Dist::zero();
    let mut max_support_diameter = Dist::zero();
    for rc in &resolved {
        let a = rc.active_diameter(space);
        if a > propagation {
            propagation = a;
        }
        let s = rc.support_diameter(space);
        if s > max_support_diameter {
            max_support_diameter = s;
        }
    }
    // Entries between cells further apart than the propagation bound are
    // sums of products with a zero factor, hence exactly zero floats.
    for i in 0..space.len() {
        for j in 0..space.len() {
            if space.cell_distance(i, j) > propagation && projection[(i, j)] != 0.0 {
                return Err(Error::ContractViolation(format!(
                    "nonzero projection entry between cells `{}` and `{}` beyond the \
                     propagation bound",
                    space.cells[i].label, space.cells[j].label
                )));
            }
        }
    }

    let mut dims = BTreeMap::new();
    dims.insert("cells".into(), space.len());
    dims.insert("centers".into(), n);
    let mut residuals = BTreeMap::new();
    residuals.insert("u_star_u_minus_identity".into(), r_iso);
    residuals.insert("projection_idempotency".into(), r_idem);
    residuals.insert("projection_self_adjointness".into(), r_sa);
    let mut exact_flags = BTreeMap::new();
    exact_flags.insert("u_star_u_identity".into(), exact_norms);
    exact_flags.insert("projection_idempotent".into(), exact_norms);
    exact_flags.insert("off_support_entries_zero".into(), true);
    let certificate = OperatorCertificate {
        kind: "wannier_isometry".into(),
        dims,
        residuals,
        exact_flags,
        propagation: Some(propagation.approx()),
        boundary_defect_rank: None,
    };
    Ok(IsometryBuild { u, projection, propagation, max_support_diameter, certificate })
}

/// Smallest length `R` such that every entry of `projection` between cells
/// at distance beyond `R` has absolute value at most `tol`. Exact distances;
/// with `tol = 0` the reported bound separates exact zeros.
pub fn propagation_bound(
    projection: &DMatrix<f64>,
    space: &DiscretizedSpace,
    tol: f64,
) -> Result<Dist> {
    let m = space.len();
    if projection.nrows() != m || projection.ncols() != m {
        return Err(Error::InvalidInput(format!(
            "projection is {}x{} but the space has {m} cells",
            projection.nrows(),
            projection.ncols()
        )));
    }
    let mut r = Dist::zero();
    for i in 0..m {
        for j in 0..m {
            if projection[(i, j)].abs() > tol {
                let d = space.cell_distance(i, j);
                if d > r {
                    r = d;
                }
            }
        }
    }
    Ok(r)
}

/// Independent rank factorization: orthonormalize the columns by modified
/// Gram-Schmidt with reorthogonalization and return the projector onto
/// their span.
fn gram_schmidt_projector(v: &DMatrix<f64>) -> DMatrix<f64> {
    let m = v.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..v.ncols() {
        let mut col: DVector<f64> = v.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&col);
                col -= b * c;
            }
        }
        let norm = col.norm();
        if norm > 1e-10 {
            basis.push(col / norm);
        }
    }
    let mut p = DMatrix::zeros(m, m);
    for b in &basis {
        p += b * b.transpose();
    }
    p
}

/// Exact Gram matrix of the family, when every pairwise product of
/// amplitudes on shared cells is rational.
fn rational_gram(
    space: &DiscretizedSpace,
    resolved: &[ResolvedCenter],
) -> Option<Vec<Vec<BigRational>>> {
    let n = resolved.len();
    let mut g = vec![vec![BigRational::zero(); n]; n];
    for x in 0..n {
        for y in x..n {
            let mut entry = BigRational::zero();
            for (cx, ax) in &resolved[x].cols {
                for (cy, ay) in &resolved[y].cols {
                    if cx == cy {
                        let prod = ax.product_rational(ay)?;
                        entry = entry + prod * &space.cells[*cx].weight;
                    }
                }
            }
            g[y][x] = entry.clone();
            g[x][y] = entry;
        }
    }
    Some(g)
}

/// Result of the frame polar construction.
#[derive(Debug)]
pub struct FrameBuild {
    /// Raw columns of the family in the weighted basis.
    pub v: DMatrix<f64>,
    /// Polar factor `V (V*V)^{-1/2}`, an isometry with the same range.
    pub w: DMatrix<f64>,
    /// The range projection `W W*`.
    pub projection: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub min_eigenvalue: f64,
    /// Distance beyond which projection entries stay below 1e-12.
    pub propagation: Dist,
    pub max_support_diameter: Dist,
    pub certificate: OperatorCertificate,
}

/// Build the polar isometry of a frame family. Supports may overlap; the
/// Gram matrix must have minimal eigenvalue at least `lambda_min`.
pub fn frame_polar(
    space: &DiscretizedSpace,
    centers: &[WannierCenter],
    lambda_min: f64,
) -> Result<FrameBuild> {
    if !(lambda_min > 0.0 && lambda_min.is_finite()) {
        return Err(Error::OperatorInput("the eigenvalue floor must be positive".into()));
    }
    let resolved = resolve_centers(space, centers, true)?;
    let v = column_matrix(space, &resolved);
    let n = resolved.len();
    let gram = v.transpose() * &v;

    let gram_identity = match rational_gram(space, &resolved) {
        Some(g) => {
            let one = BigRational::one();
            let zero = BigRational::zero();
            (0..n).all(|x| {
                (0..n).all(|y| g[x][y] == if x == y { one.clone() } else { zero.clone() })
            })
        }
        None => false,
    };

    let eigen = SymmetricEigen::new(gram.clone());
    let min_eigenvalue = eigen.eigenvalues.min();
    if min_eigenvalue < lambda_min {
        return Err(Error::OperatorInput(format!(
            "Gram matrix minimal eigenvalue {min_eigenvalue:.6e} is below the declared \
             floor {lambda_min:.6e}; the family is too close to rank deficient"
        )));
    }

    // The polar factor of a family whose Gram matrix is exactly the
    // identity is the family itself; taking it directly keeps the promise
    // bit for bit instead of within eigendecomposition error.
    let w = if gram_identity {
        v.clone()
    } else {
        let mut scaled = eigen.eigenvectors.clone();
        for j in 0..n {
            let f = 1.0 / eigen.eigenvalues[j].sqrt();
            scaled.column_mut(j).scale_mut(f);
        }
        let g_inv_sqrt = &scaled * eigen.eigenvectors.transpose();
        &v * g_inv_sqrt
    };
    let projection = &w * w.transpose();

    let r_wsw = operator_norm(&(w.transpose() * &w - DMatrix::identity(n, n)));
    let p_ref = gram_schmidt_projector(&v);
    let r_ref = operator_norm(&(&projection - &p_ref));
    let r_idem = operator_norm(&(&projection * &projection - &projection));
    if r_wsw > 1e-10 || r_ref > 1e-8 {
        return Err(Error::ContractViolation(format!(
            "residuals out of bounds: polar isometry {r_wsw:.3e}, reference projector \
             {r_ref:.3e}"
        )));
    }

    let propagation = propagation_bound(&projection, space, 1e-12)?;
    let mut max_support_diameter = Dist::zero();
    for rc in &resolved {
        let s = rc.support_diameter(space);
        if s > max_support_diameter {
            max_support_diameter = s;
        }
    }

    let mut dims = BTreeMap::new();
    dims.insert("cells".into(), space.len());
    dims.insert("centers".into(), n);
    let mut residuals = BTreeMap::new();
    residuals.insert("w_star_w_minus_identity".into(), r_wsw);
    residuals.insert("w_w_star_minus_reference".into(), r_ref);
    residuals.insert("projection_idempotency".into(), r_idem);
    let mut exact_flags = BTreeMap::new();
    exact_flags.insert("gram_identity".into(), gram_identity);
    exact_flags.insert("polar_factor_is_input".into(), gram_identity);
    let certificate = OperatorCertificate {
        kind: "frame_polar".into(),
        dims,
        residuals,
        exact_flags,
        propagation: Some(propagation.approx()),
        boundary_defect_rank: None,
    };
    Ok(FrameBuild {
        v,
        w,
        projection,
        gram,
        min_eigenvalue,
        propagation,
        max_support_diameter,
        certificate,
    })
}

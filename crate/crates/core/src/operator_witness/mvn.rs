//! Exact shift-style equivalence witness.
//!
//! Fix a fiber space of dimension `h_dim` with a chosen basis, and give every
//! site `n` in `1..=n_max` two copies of it, an A copy and a B copy. Rank
//! data is a bounded sequence `k`, with partial sums `l[0] = 0`,
//! `l[n] = k[1] + ... + k[n]`. The projection `P` keeps the first `k[n]`
//! basis vectors of each A copy, `Q` keeps the first `l[n]` basis vectors of
//! each B copy.
//!
//! The witness `T` is a partial permutation of basis vectors, so every
//! product below is computed exactly on index maps and cross-checked densely
//! in integer arithmetic on small instances:
//!
//! * the P block of site 1 moves to the B copy of site 1 (`l[1] = k[1]`),
//! * the Q block of site n and the P block of site n+1 move side by side
//!   into the B copy of site n+1 (`l[n] + k[n+1] = l[n+1]`).
//!
//! Then `T T* = Q` exactly, and `T* T = P ⊕ Q` except that the Q block of
//! the last site, of rank `l[n_max]`, has nowhere to go. That defect is the
//! whole difference between the truncation and the infinite ray: its rank
//! equals the rank of `P`, which is exactly the amount the naive rank count
//! of `P ⊕ Q ~ Q` must shed at infinity. The certificate reports it rather
//! than hiding it.

use super::OperatorCertificate;
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use std::collections::BTreeMap;

/// A copy or B copy of the fiber at a site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Side {
    A,
    B,
}

/// Exact partial permutation witness with its verified certificate.
#[derive(Clone, Debug, Serialize)]
pub struct ShiftWitness {
    pub n_max: usize,
    pub h_dim: usize,
    /// Rank sequence, `k[n-1]` is the P rank at site n.
    pub k: Vec<usize>,
    /// Partial sums, `l[n]` is the Q rank at site n; `l[0] = 0`.
    pub l: Vec<usize>,
    /// Basis map of T: `map[src] = Some(dst)` moves basis vector `src` to
    /// `dst`; indices run over all sites and copies.
    pub map: Vec<Option<usize>>,
    pub certificate: OperatorCertificate,
}

impl ShiftWitness {
    /// Total dimension of the truncated space.
    pub fn dim(&self) -> usize {
        2 * self.n_max * self.h_dim
    }

    /// Global basis index of coordinate `j` of the given copy at site `n`
    /// (1-based).
    pub fn index(&self, n: usize, side: Side, j: usize) -> usize {
        debug_assert!(n >= 1 && n <= self.n_max && j < self.h_dim);
        let c = match side {
            Side::A => 0,
            Side::B => 1,
        };
        ((n - 1) * 2 + c) * self.h_dim + j
    }

    fn site_of(&self, idx: usize) -> usize {
        idx / (2 * self.h_dim) + 1
    }

    /// Diagonal of P as a 0/1 vector.
    pub fn p_diag(&self) -> Vec<u8> {
        let mut d = vec![0u8; self.dim()];
        for n in 1..=self.n_max {
            for j in 0..self.k[n - 1] {
                d[self.index(n, Side::A, j)] = 1;
            }
        }
        d
    }

    /// Diagonal of Q as a 0/1 vector.
    pub fn q_diag(&self) -> Vec<u8> {
        let mut d = vec![0u8; self.dim()];
        for n in 1..=self.n_max {
            for j in 0..self.l[n] {
                d[self.index(n, Side::B, j)] = 1;
            }
        }
        d
    }

    /// Diagonal of T*T, the projection onto the domain of the map.
    pub fn t_star_t_diag(&self) -> Vec<u8> {
        self.map.iter().map(|m| u8::from(m.is_some())).collect()
    }

    /// Diagonal of TT*, the projection onto the range of the map.
    pub fn t_t_star_diag(&self) -> Vec<u8> {
        let mut d = vec![0u8; self.dim()];
        for m in self.map.iter().flatten() {
            d[*m] = 1;
        }
        d
    }

    /// Dense T with integer entries, for external audit and cross-checks.
    pub fn dense_t(&self) -> DMatrix<i64> {
        let dim = self.dim();
        let mut t = DMatrix::zeros(dim, dim);
        for (src, m) in self.map.iter().enumerate() {
            if let Some(dst) = m {
                t[(*dst, src)] = 1;
            }
        }
        t
    }

    pub fn dense_p(&self) -> DMatrix<i64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.p_diag().into_iter().map(i64::from),
        ))
    }

    pub fn dense_q(&self) -> DMatrix<i64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.q_diag().into_iter().map(i64::from),
        ))
    }
}

/// Build and verify the witness for the rank sequence `k` (site n has P rank
/// `k[n-1]`) on fibers of dimension `h_dim`.
pub fn mvn_shift_witness(k: &[usize], h_dim: usize) -> Result<ShiftWitness> {
    let n_max = k.len();
    if n_max < 3 {
        return Err(Error::OperatorInput(format!(
            "the rank sequence has {n_max} sites; the witness needs at least 3"
        )));
    }
    let mut l = Vec::with_capacity(n_max + 1);
    l.push(0usize);
    for (i, &kn) in k.iter().enumerate() {
        let next = l[i]
            .checked_add(kn)
            .ok_or_else(|| Error::OperatorInput("rank sequence overflows".into()))?;
        l.push(next);
    }
    if h_dim < l[n_max] {
        return Err(Error::OperatorInput(format!(
            "fiber dimension {h_dim} is below the accumulated rank {}",
            l[n_max]
        )));
    }

    let mut w = ShiftWitness {
        n_max,
        h_dim,
        k: k.to_vec(),
        l: l.clone(),
        map: vec![None; 2 * n_max * h_dim],
        certificate: OperatorCertificate {
            kind: "mvn_shift".into(),
            dims: BTreeMap::new(),
            residuals: BTreeMap::new(),
            exact_flags: BTreeMap::new(),
            propagation: None,
            boundary_defect_rank: None,
        },
    };

    // The P block of site 1 lands at the bottom of the B copy of site 1.
    for j in 0..k[0] {
        let src = w.index(1, Side::A, j);
        w.map[src] = Some(w.index(1, Side::B, j));
    }
    // The Q block of site n and the P block of site n+1 fill the B copy of
    // site n+1: coordinates 0..l[n], then l[n]..l[n+1].
    for n in 1..n_max {
        for j in 0..l[n] {
            let src = w.index(n, Side::B, j);
            w.map[src] = Some(w.index(n + 1, Side::B, j));
        }
        for j in 0..k[n] {
            let src = w.index(n + 1, Side::A, j);
            w.map[src] = Some(w.index(n + 1, Side::B, l[n] + j));
        }
    }

    // Injectivity: T moves distinct basis vectors to distinct targets, so
    // T*T and TT* are the diagonal projections onto domain and range.
    let mut seen = vec![false; w.dim()];
    for m in w.map.iter().flatten() {
        if seen[*m] {
            return Err(Error::ContractViolation(
                "shift witness map is not injective".into(),
            ));
        }
        seen[*m] = true;
    }

    // TT* = Q, exactly and everywhere.
    let range_is_q = w.t_t_star_diag() == w.q_diag();

    // T*T = P + Q minus exactly the B block of the last site.
    let domain = w.t_star_t_diag();
    let p = w.p_diag();
    let q = w.q_diag();
    let mut domain_matches = true;
    let mut defect = 0usize;
    for i in 0..w.dim() {
        let pq = p[i] | q[i];
        if domain[i] == pq {
            continue;
        }
        let at_last_b = i >= w.index(n_max, Side::B, 0);
        if domain[i] == 0 && pq == 1 && at_last_b {
            defect += 1;
        } else {
            domain_matches = false;
        }
    }
    let defect_matches = defect == l[n_max];

    // T T* T = T: compose the three index maps for real. T* is the inverse
    // map on the range and annihilates its complement.
    let mut inverse = vec![None; w.dim()];
    for (src, m) in w.map.iter().enumerate() {
        if let Some(dst) = m {
            inverse[*dst] = Some(src);
        }
    }
    let compose = |idx: usize| -> Option<usize> {
        let a = w.map[idx]?;
        let b = inverse[a]?;
        w.map[b]
    };
    let partial_isometry = (0..w.dim()).all(|i| compose(i) == w.map[i]);

    // Propagation: every move stays at its site or advances by one.
    let propagation_one = w
        .map
        .iter()
        .enumerate()
        .filter_map(|(src, m)| m.map(|dst| (src, dst)))
        .all(|(src, dst)| {
            let shift = w.site_of(dst) as i64 - w.site_of(src) as i64;
            shift == 0 || shift == 1
        });

    if !(range_is_q && domain_matches && defect_matches && partial_isometry) {
        return Err(Error::ContractViolation(
            "shift witness failed its exact verification".into(),
        ));
    }

    let rank_q: usize = l[1..].iter().sum();
    let cert = &mut w.certificate;
    cert.dims.insert("sites".into(), n_max);
    cert.dims.insert("fiber".into(), h_dim);
    cert.dims.insert("space".into(), 2 * n_max * h_dim);
    cert.dims.insert("rank_p".into(), l[n_max]);
    cert.dims.insert("rank_q".into(), rank_q);
    cert.dims.insert("rank_t".into(), rank_q);
    cert.exact_flags.insert("t_t_star_is_q".into(), range_is_q);
    cert.exact_flags
        .insert("t_star_t_is_p_plus_q_minus_defect".into(), domain_matches && defect_matches);
    cert.exact_flags.insert("partial_isometry".into(), partial_isometry);
    cert.exact_flags.insert("propagation_one".into(), propagation_one);
    cert.propagation = Some(1.0);
    cert.boundary_defect_rank = Some(l[n_max]);
    Ok(w)
}

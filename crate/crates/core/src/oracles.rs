//! Independent cross-checks used by the test suites.
//!
//! Everything here recomputes a quantity by a different method than the main
//! code paths: components by breadth-first search instead of union-find, and
//! the rank of degree-zero homology from the incidence matrix by
//! fraction-free integer elimination. Production code should not call these;
//! tests compare against them.

use num_bigint::BigInt;
use num_traits::Zero;

/// Connected components by breadth-first search over an adjacency list built
/// from scratch. Components are sorted internally and ordered by smallest
/// member.
pub fn components_bfs(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out
}

/// Rank of an integer matrix by Bareiss fraction-free elimination. Exact.
pub fn integer_rank(rows: usize, cols: usize, entries: &[Vec<BigInt>]) -> usize {
    assert_eq!(entries.len(), rows);
    let mut m: Vec<Vec<BigInt>> = entries.to_vec();
    for row in &m {
        assert_eq!(row.len(), cols);
    }
    let mut rank = 0;
    let mut prev = BigInt::from(1);
    for col in 0..cols {
        // Find a pivot at or below `rank`.
        let pivot_row = (rank..rows).find(|&r| !m[r][col].is_zero());
        let Some(p) = pivot_row else { continue };
        m.swap(rank, p);
        for r in (rank + 1)..rows {
            for c in (col + 1)..cols {
                let num = &m[rank][col] * &m[r][c] - &m[r][col] * &m[rank][c];
                m[r][c] = &num / &prev;
            }
            m[r][col] = BigInt::zero();
        }
        prev = m[rank][col].clone();
        assert!(!prev.is_zero());
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Rank of degree-zero homology of a finite graph: vertices minus the rank
/// of the incidence matrix. Equals the number of connected components.
pub fn h_zero_rank(n: usize, edges: &[(usize, usize)]) -> usize {
    if edges.is_empty() {
        return n;
    }
    // Incidence matrix of the edge boundary: one column per edge, +1 at the
    // head, -1 at the tail.
    let mut entries = vec![vec![BigInt::zero(); edges.len()]; n];
    for (e, &(i, j)) in edges.iter().enumerate() {
        entries[i][e] = BigInt::from(-1);
        entries[j][e] = BigInt::from(1);
    }
    n - integer_rank(n, edges.len(), &entries)
}

//! Dense linear assignment (Hungarian algorithm with potentials).
//!
//! Among all optimal assignments the lexicographically smallest permutation
//! is returned. The shortest-augmenting-path solver yields an optimal dual
//! `(u, v)`; by complementary slackness the optimal permutations are exactly
//! the perfect matchings that use only tight edges (`c_ij − u_i − v_j ≈ 0`),
//! and the smallest of those is found greedily row by row with augmenting
//! path repairs.

use ndarray::Array2;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `perm[i]` is the column assigned to row `i`.
    pub perm: Vec<usize>,
    pub total_cost: f64,
}

pub fn solve_assignment(cost: &Array2<f64>) -> Result<Assignment> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::dim("assignment cost columns", n, cost.ncols()));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assignment cost entries".into()));
    }
    if n == 0 {
        return Ok(Assignment {
            perm: Vec::new(),
            total_cost: 0.0,
        });
    }
    let (mut perm, u, v) = hungarian(cost);
    let scale = cost.iter().fold(1.0f64, |m, &c| m.max(c.abs()));
    let tol = 1e-10 * scale;
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| cost[[i, j]] - u[i] - v[j] <= tol)
                .collect()
        })
        .collect();
    debug_assert!((0..n).all(|i| tight[i].contains(&perm[i])));
    lexicographic_min_matching(&tight, &mut perm);
    let total_cost = perm.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
    Ok(Assignment { perm, total_cost })
}

/// O(n³) shortest augmenting path; returns row assignment and duals.
fn hungarian(cost: &Array2<f64>) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.nrows();
    // 1-based internal indexing, column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    (perm, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrite the perfect matching `perm` (contained in `adj`) into the
/// lexicographically smallest perfect matching of the graph.
fn lexicographic_min_matching(adj: &[Vec<usize>], perm: &mut [usize]) {
    let n = perm.len();
    let mut owner = vec![0usize; n];
    for (i, &j) in perm.iter().enumerate() {
        owner[j] = i;
    }
    let mut locked_col = vec![false; n];
    for i in 0..n {
        for &j in &adj[i] {
            if locked_col[j] {
                continue;
            }
            if perm[i] == j {
                break;
            }
            // Move row i onto column j; row r = owner[j] must find a new home,
            // and the column freed by row i is the only free one.
            let r = owner[j];
            let freed = perm[i];
            let saved_perm = perm.to_vec();
            let saved_owner = owner.clone();
            perm[i] = j;
            owner[j] = i;
            let mut visited = vec![false; n];
            visited[j] = true;
            if augment(r, freed, adj, perm, &mut owner, &locked_col, i, &mut visited) {
                break;
            }
            perm.copy_from_slice(&saved_perm);
            owner = saved_owner;
        }
        locked_col[perm[i]] = true;
    }
}

#[allow(clippy::too_many_arguments)]
fn augment(
    row: usize,
    free_col: usize,
    adj: &[Vec<usize>],
    perm: &mut [usize],
    owner: &mut [usize],
    locked_col: &[bool],
    pinned_row: usize,
    visited: &mut [bool],
) -> bool {
    for &c in &adj[row] {
        if locked_col[c] || visited[c] {
            continue;
        }
        visited[c] = true;
        if c == free_col {
            perm[row] = c;
            owner[c] = row;
            return true;
        }
        let next = owner[c];
        if next == pinned_row {
            continue;
        }
        if augment(next, free_col, adj, perm, owner, locked_col, pinned_row, visited) {
            perm[row] = c;
            owner[c] = row;
            return true;
        }
    }
    false
}

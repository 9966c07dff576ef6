//! Optimal assignment (Hungarian method) on small dense score matrices.

/// Returns `perm` maximising `Σ_i score[i][perm[i]]` over all permutations.
///
/// Shortest augmenting path with potentials, `O(n³)`. Among equal-cost
/// choices the lowest column index is taken first, so the result is
/// deterministic.
pub fn maximize_assignment(score: &[Vec<f64>]) -> Vec<usize> {
    let n = score.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(score.iter().all(|r| r.len() == n), "score matrix must be square");
    let cost = |i: usize, j: usize| -score[i][j];

    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[matched_row[j] - 1] = j - 1;
    }
    perm
}

//! Maximum-weight perfect assignment on a square matrix with forbidden cells
//! (Hungarian method with potentials, O(n^3)).

/// Returns `(column of each row, total weight)` for a maximum-weight perfect
/// assignment using only allowed (`Some`) cells, or `None` if no such
/// assignment exists.
pub fn max_weight_assignment(weights: &[Vec<Option<i64>>]) -> Option<(Vec<usize>, i64)> {
    let n = weights.len();
    if n == 0 {
        return Some((Vec::new(), 0));
    }
    assert!(weights.iter().all(|r| r.len() == n), "square matrix required");
    let max_abs = weights
        .iter()
        .flatten()
        .flatten()
        .map(|w| w.abs())
        .max()
        .unwrap_or(0);
    // any assignment touching a forbidden cell costs more than every allowed one
    let forbidden = 1 + 2 * (n as i64) * (max_abs + 1);
    let cost = |i: usize, j: usize| weights[i][j].map_or(forbidden, |w| -w);

    // 1-based arrays; row 0 / column 0 are the usual sentinels
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
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
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    let mut total = 0;
    for (i, &j) in col_of.iter().enumerate() {
        total += weights[i][j]?;
    }
    Some((col_of, total))
}

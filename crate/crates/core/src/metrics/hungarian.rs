/// Maximum-weight assignment between the rows and columns of `sim`.
///
/// Matches `min(rows, cols)` pairs. Returns `(row, col)` pairs sorted by
/// row, and their total weight.
pub fn hungarian_match(sim: &[Vec<f64>]) -> (Vec<(usize, usize)>, f64) {
    let rows = sim.len();
    let cols = sim.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (Vec::new(), 0.0);
    }
    assert!(sim.iter().all(|r| r.len() == cols), "similarity matrix is ragged");
    let pairs = if rows <= cols {
        min_cost(rows, cols, |i, j| -sim[i][j])
    } else {
        let mut t: Vec<(usize, usize)> = min_cost(cols, rows, |i, j| -sim[j][i]).into_iter().map(|(c, r)| (r, c)).collect();
        t.sort_unstable();
        t
    };
    let total = pairs.iter().map(|&(i, j)| sim[i][j]).sum();
    (pairs, total)
}

/// Shortest augmenting path method with potentials; requires `n <= m`.
fn min_cost(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    // 1-based arrays; column 0 is a virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
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
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize)> = (1..=m).filter(|&j| owner[j] != 0).map(|j| (owner[j] - 1, j - 1)).collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        let (a, t) = hungarian_match(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(a, vec![(0, 0), (1, 1)]);
        assert_eq!(t, 2.0);
        let (_, t) = hungarian_match(&[vec![0.9, 0.1], vec![0.2, 0.8]]);
        assert!((t - 1.7).abs() < 1e-12);
        let (a, t) = hungarian_match(&[vec![0.1], vec![0.7], vec![0.3]]);
        assert_eq!(a, vec![(1, 0)]);
        assert_eq!(t, 0.7);
        assert_eq!(hungarian_match(&[]).1, 0.0);
    }

    #[test]
    fn prefers_global_optimum_over_greedy() {
        let (a, t) = hungarian_match(&[vec![0.9, 0.8], vec![0.8, 0.0]]);
        assert_eq!(a, vec![(0, 1), (1, 0)]);
        assert!((t - 1.6).abs() < 1e-12);
    }
}

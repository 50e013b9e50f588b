//! Optimal one-to-one assignment (Kuhn–Munkres with potentials).

/// For a `rows × cols` score matrix, the column assigned to each row so that
/// the summed score is maximal. Rows beyond `cols` get `None`.
pub fn max_score_assignment(score: &[Vec<f64>], cols: usize) -> Vec<Option<usize>> {
    let rows = score.len();
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        let cost: Vec<Vec<f64>> = score.iter().map(|r| r.iter().map(|&s| -s).collect()).collect();
        min_cost(&cost, cols).into_iter().map(Some).collect()
    } else {
        let cost: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| -score[r][c]).collect()).collect();
        let mut out = vec![None; rows];
        for (c, r) in min_cost(&cost, rows).into_iter().enumerate() {
            out[r] = Some(c);
        }
        out
    }
}

/// Requires `cost.len() <= m`. Returns the column of every row.
fn min_cost(cost: &[Vec<f64>], m: usize) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row (1-based) holding column j; way[j]: previous column on the augmenting path.
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut col_of = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            col_of[p[j] - 1] = j - 1;
        }
    }
    col_of
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn total(score: &[Vec<f64>], a: &[Option<usize>]) -> f64 {
        a.iter().enumerate().filter_map(|(r, c)| c.map(|c| score[r][c])).sum()
    }

    /// Best total over every injective map from the smaller side.
    fn exhaustive(score: &[Vec<f64>], cols: usize) -> f64 {
        fn go(score: &[Vec<f64>], r: usize, used: &mut Vec<bool>, skips_left: usize) -> f64 {
            if r == score.len() {
                return 0.0;
            }
            let mut best = f64::NEG_INFINITY;
            if skips_left > 0 {
                best = go(score, r + 1, used, skips_left - 1);
            }
            for c in 0..used.len() {
                if !used[c] {
                    used[c] = true;
                    best = best.max(score[r][c] + go(score, r + 1, used, skips_left));
                    used[c] = false;
                }
            }
            best
        }
        let skips = score.len().saturating_sub(cols);
        go(score, 0, &mut vec![false; cols], skips)
    }

    #[test]
    fn identity_and_permutation() {
        let perm = [2usize, 0, 3, 1];
        let score: Vec<Vec<f64>> =
            (0..4).map(|r| (0..4).map(|c| if c == perm[r] { 0.9 } else { 0.1 * (r + c) as f64 / 10.0 }).collect()).collect();
        let a = max_score_assignment(&score, 4);
        assert_eq!(a, perm.iter().map(|&c| Some(c)).collect::<Vec<_>>());
    }

    #[test]
    fn extra_row_left_unmatched() {
        let score = vec![vec![0.8, 0.1], vec![0.7, 0.6], vec![0.2, 0.9]];
        let a = max_score_assignment(&score, 2);
        assert_eq!(a, vec![Some(0), None, Some(1)]);
        assert_eq!(total(&score, &a), exhaustive(&score, 2));
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let rows = rng.gen_range(1..=5);
            let cols = rng.gen_range(1..=5);
            let score: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen::<f64>()).collect()).collect();
            let a = max_score_assignment(&score, cols);
            assert_eq!(a.iter().filter(|c| c.is_some()).count(), rows.min(cols));
            let mut seen: Vec<usize> = a.iter().flatten().copied().collect();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), rows.min(cols));
            assert!((total(&score, &a) - exhaustive(&score, cols)).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_sides() {
        assert!(max_score_assignment(&[], 3).is_empty());
        assert_eq!(max_score_assignment(&[vec![], vec![]], 0), vec![None, None]);
    }
}

//! Dense O(n^3) Hungarian solver (shortest augmenting path formulation)
//! for rectangular cost matrices with forbidden cells.

/// Finite stand-in for forbidden and padded cells: strictly larger than any
/// real assignment total, so the solver uses such cells only when forced.
fn big_sentinel(costs: &[Vec<f64>], dim: usize) -> f64 {
    let max_finite = costs
        .iter()
        .flatten()
        .copied()
        .filter(|c| c.is_finite())
        .fold(0.0f64, f64::max);
    (max_finite + 1.0) * (dim as f64 + 1.0)
}

/// Minimum-total-cost one-to-one assignment.
///
/// `costs` is a rows x cols matrix; `f64::INFINITY` marks a forbidden pair.
/// Rectangular matrices are padded to square internally. The result maps
/// each row to its column, with `None` for rows left unassigned (padding or
/// forbidden cells). Among all assignments the solver maximizes the number
/// of allowed pairs first and minimizes their total cost second.
pub fn min_cost_assignment(costs: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = costs.len();
    let cols = costs.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let dim = rows.max(cols);
    let big = big_sentinel(costs, dim);
    let cell = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols {
            let v = costs[r][c];
            if v.is_finite() {
                v
            } else {
                big
            }
        } else {
            big
        }
    };

    // shortest augmenting path over the padded square matrix; indices are
    // 1-based with column 0 as the virtual source
    let inf = f64::INFINITY;
    let n = dim;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut assigned_row = vec![0usize; n + 1]; // column -> row
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cell(i0 - 1, j - 1) - u[i0] - v[j];
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
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut result = vec![None; rows];
    for j in 1..=n {
        let i = assigned_row[j];
        if i >= 1 && i <= rows && j <= cols && costs[i - 1][j - 1].is_finite() {
            result[i - 1] = Some(j - 1);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(costs: &[Vec<f64>], assignment: &[Option<usize>]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| costs[r][c]))
            .sum()
    }

    /// Exhaustive-permutation minimum over full-cardinality assignments.
    fn brute_force_min(costs: &[Vec<f64>]) -> f64 {
        let rows = costs.len();
        let cols = costs[0].len();
        let k = rows.min(cols);
        let mut best = f64::INFINITY;
        // permutations of column subsets of size k when rows <= cols,
        // otherwise row subsets
        let (outer, inner) = (rows.max(cols), k);
        let mut indices: Vec<usize> = (0..outer).collect();
        permute(&mut indices, 0, &mut |perm| {
            let mut sum = 0.0;
            for i in 0..inner {
                let (r, c) = if rows <= cols { (i, perm[i]) } else { (perm[i], i) };
                sum += costs[r][c];
            }
            if sum < best {
                best = sum;
            }
        });
        best
    }

    fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, visit);
            items.swap(k, i);
        }
    }

    #[test]
    fn known_small_instance() {
        let costs = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let assignment = min_cost_assignment(&costs);
        assert_eq!(total(&costs, &assignment), 5.0);
    }

    #[test]
    fn matches_brute_force_on_random_square_matrices() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for trial in 0..200 {
            let n = 2 + trial % 5;
            let costs: Vec<Vec<f64>> =
                (0..n).map(|_| (0..n).map(|_| next() * 10.0).collect()).collect();
            let assignment = min_cost_assignment(&costs);
            assert_eq!(assignment.iter().filter(|a| a.is_some()).count(), n);
            let got = total(&costs, &assignment);
            let want = brute_force_min(&costs);
            assert!((got - want).abs() < 1e-9, "n={n} got {got} want {want}");
        }
    }

    #[test]
    fn rectangular_matrices_leave_extra_rows_unassigned() {
        let costs = vec![vec![1.0, 9.0], vec![2.0, 3.0], vec![7.0, 1.0]];
        let assignment = min_cost_assignment(&costs);
        let matched: Vec<_> = assignment.iter().flatten().collect();
        assert_eq!(matched.len(), 2);
        let got = total(&costs, &assignment);
        assert!((got - brute_force_min(&costs)).abs() < 1e-9);
    }

    #[test]
    fn forbidden_cells_are_avoided_and_reduce_cardinality() {
        let inf = f64::INFINITY;
        // row 1 can only take column 1, forcing row 0 onto column 0 even
        // though the joint cost is higher
        let costs = vec![vec![5.0, 1.0], vec![inf, 2.0]];
        let assignment = min_cost_assignment(&costs);
        assert_eq!(assignment, vec![Some(0), Some(1)]);

        // fully forbidden matrix: nothing assigned
        let costs = vec![vec![inf, inf], vec![inf, inf]];
        let assignment = min_cost_assignment(&costs);
        assert_eq!(assignment, vec![None, None]);

        // forbidden diagonal: maximum matching still found
        let costs = vec![vec![inf, 1.0], vec![1.0, inf]];
        let assignment = min_cost_assignment(&costs);
        assert_eq!(assignment, vec![Some(1), Some(0)]);
    }

    #[test]
    fn prefers_more_matches_over_cheaper_partial_assignments() {
        let inf = f64::INFINITY;
        // matching both rows costs 100 + 100; matching only row 0 would cost
        // 1, but maximum cardinality wins
        let costs = vec![vec![1.0, 100.0], vec![inf, 100.0]];
        let assignment = min_cost_assignment(&costs);
        assert_eq!(assignment, vec![Some(0), Some(1)]);
    }
}

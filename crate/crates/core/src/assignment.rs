//! Maximum-weight bipartite assignment.
//!
//! Rows are MUs and columns are task instances. The solver matches every row
//! of the smaller side (the matrix is implicitly balanced with zero-weight
//! dummies). Callers that want "unassigned" as a real option append idle
//! columns with [`WeightMatrix::with_idle_columns`].

use crate::error::{Error, Result};

/// Weight of a cell that must not be matched.
pub const FORBIDDEN: f64 = -1e9;

fn is_forbidden(w: f64) -> bool {
    w <= FORBIDDEN * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, fill: f64) -> Self {
        WeightMatrix {
            rows,
            cols,
            data: vec![fill; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::MalformedAssignment("weight matrix is not rectangular".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|w| !w.is_finite()) {
            return Err(Error::MalformedAssignment("weights must be finite".into()));
        }
        Ok(WeightMatrix { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, w: f64) {
        self.data[r * self.cols + c] = w;
    }

    pub fn forbid(&mut self, r: usize, c: usize) {
        self.set(r, c, FORBIDDEN);
    }

    pub fn is_forbidden(&self, r: usize, c: usize) -> bool {
        is_forbidden(self.get(r, c))
    }

    /// Copy with one zero-weight column per row appended; matching a row to
    /// such a column means the row stays unassigned.
    pub fn with_idle_columns(&self) -> WeightMatrix {
        let cols = self.cols + self.rows;
        let mut out = WeightMatrix::new(self.rows, cols, 0.0);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, self.get(r, c));
            }
        }
        out
    }

    fn transposed(&self) -> WeightMatrix {
        let mut t = WeightMatrix::new(self.cols, self.rows, 0.0);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    /// `(row, col)` pairs sorted by row.
    pub matching: Vec<(usize, usize)>,
    pub total_value: f64,
}

impl AssignmentResult {
    fn from_pairs(w: &WeightMatrix, mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        pairs.sort_unstable();
        if pairs.iter().any(|&(r, c)| w.is_forbidden(r, c)) {
            return Err(Error::Infeasible(
                "every maximum matching uses a forbidden cell".into(),
            ));
        }
        let total_value = matching_value(w, &pairs);
        Ok(AssignmentResult {
            matching: pairs,
            total_value,
        })
    }

    /// Column matched to `row`, if any.
    pub fn col_of(&self, row: usize) -> Option<usize> {
        self.matching.iter().find(|&&(r, _)| r == row).map(|&(_, c)| c)
    }
}

/// Sum of matched weights in row order.
pub fn matching_value(w: &WeightMatrix, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(r, c)| w.get(r, c)).sum()
}

/// Shortest-augmenting-path Hungarian method on a `n x m` cost matrix with
/// `n <= m`. Returns the column of every row.
fn hungarian_min_cost(cost: &WeightMatrix) -> Vec<usize> {
    let n = cost.rows();
    let m = cost.cols();
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
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

    let mut col_of_row = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] > 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Maximum-weight matching that covers the smaller side of `w`.
///
/// Ties resolve deterministically in favour of lower column indices along the
/// row-by-row augmentation order.
pub fn solve_max_weight_assignment(w: &WeightMatrix) -> Result<AssignmentResult> {
    if w.rows() == 0 || w.cols() == 0 {
        return Ok(AssignmentResult {
            matching: Vec::new(),
            total_value: 0.0,
        });
    }
    let transpose = w.rows() > w.cols();
    let oriented = if transpose { w.transposed() } else { w.clone() };
    let mut cost = oriented.clone();
    for r in 0..cost.rows() {
        for c in 0..cost.cols() {
            cost.set(r, c, -oriented.get(r, c));
        }
    }
    let cols = hungarian_min_cost(&cost);
    let pairs: Vec<(usize, usize)> = cols
        .into_iter()
        .enumerate()
        .map(|(r, c)| if transpose { (c, r) } else { (r, c) })
        .collect();
    AssignmentResult::from_pairs(w, pairs)
}

/// Largest `min(rows, cols)` the exhaustive oracle accepts.
pub const BRUTE_FORCE_CAP: usize = 8;

/// Exhaustive enumeration of all matchings covering the smaller side.
///
/// Returns the lexicographically first maximizer.
pub fn brute_force_assignment(w: &WeightMatrix) -> Result<AssignmentResult> {
    let small = w.rows().min(w.cols());
    if small > BRUTE_FORCE_CAP {
        return Err(Error::OracleTooLarge(format!(
            "min(rows, cols) = {small} exceeds {BRUTE_FORCE_CAP}"
        )));
    }
    let large = w.rows().max(w.cols());
    let count: f64 = (0..small).map(|i| (large - i) as f64).product();
    if count > 5e7 {
        return Err(Error::OracleTooLarge(format!("{count:.0} matchings to enumerate")));
    }
    if small == 0 {
        return Ok(AssignmentResult {
            matching: Vec::new(),
            total_value: 0.0,
        });
    }
    let transpose = w.rows() > w.cols();
    let oriented = if transpose { w.transposed() } else { w.clone() };

    struct Search<'a> {
        w: &'a WeightMatrix,
        used: Vec<bool>,
        current: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }
    impl Search<'_> {
        fn go(&mut self, row: usize) {
            if row == self.w.rows() {
                let value: f64 = self
                    .current
                    .iter()
                    .enumerate()
                    .map(|(r, &c)| self.w.get(r, c))
                    .sum();
                if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
                    self.best = Some((value, self.current.clone()));
                }
                return;
            }
            for c in 0..self.w.cols() {
                if self.used[c] {
                    continue;
                }
                self.used[c] = true;
                self.current.push(c);
                self.go(row + 1);
                self.current.pop();
                self.used[c] = false;
            }
        }
    }

    let mut search = Search {
        w: &oriented,
        used: vec![false; oriented.cols()],
        current: Vec::with_capacity(oriented.rows()),
        best: None,
    };
    search.go(0);
    let (_, cols) = search.best.expect("at least one matching exists");
    let pairs = cols
        .into_iter()
        .enumerate()
        .map(|(r, c)| if transpose { (c, r) } else { (r, c) })
        .collect();
    AssignmentResult::from_pairs(w, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: Vec<Vec<f64>>) -> WeightMatrix {
        WeightMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn two_by_two_anti_diagonal() {
        let w = m(vec![vec![1.0, 2.0], vec![3.0, 1.0]]);
        let r = solve_max_weight_assignment(&w).unwrap();
        assert_eq!(r.matching, vec![(0, 1), (1, 0)]);
        assert_eq!(r.total_value, 5.0);
        assert_eq!(brute_force_assignment(&w).unwrap().total_value, 5.0);
    }

    #[test]
    fn zero_matrix_gives_diagonal() {
        let w = WeightMatrix::new(3, 3, 0.0);
        let r = solve_max_weight_assignment(&w).unwrap();
        assert_eq!(r.matching, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(r.total_value, 0.0);
    }

    #[test]
    fn diagonal_dominant() {
        let w = m(vec![vec![9.0, 0.0], vec![0.0, 9.0]]);
        let r = solve_max_weight_assignment(&w).unwrap();
        assert_eq!(r.matching, vec![(0, 0), (1, 1)]);
        assert_eq!(r.total_value, 18.0);
    }

    #[test]
    fn single_cell() {
        let w = m(vec![vec![5.0]]);
        assert_eq!(brute_force_assignment(&w).unwrap().total_value, 5.0);
        assert_eq!(solve_max_weight_assignment(&w).unwrap().total_value, 5.0);
    }

    #[test]
    fn rectangular_both_ways() {
        let tall = m(vec![vec![1.0], vec![4.0], vec![2.0]]);
        let r = solve_max_weight_assignment(&tall).unwrap();
        assert_eq!(r.matching, vec![(1, 0)]);
        let wide = m(vec![vec![1.0, 4.0, 2.0]]);
        let r = solve_max_weight_assignment(&wide).unwrap();
        assert_eq!(r.matching, vec![(0, 1)]);
    }

    #[test]
    fn forbidden_row_is_infeasible_unless_idle_allowed() {
        let mut w = WeightMatrix::new(2, 2, 1.0);
        w.forbid(0, 0);
        w.forbid(0, 1);
        assert!(matches!(solve_max_weight_assignment(&w), Err(Error::Infeasible(_))));
        assert!(matches!(brute_force_assignment(&w), Err(Error::Infeasible(_))));
        let r = solve_max_weight_assignment(&w.with_idle_columns()).unwrap();
        assert_eq!(r.total_value, 1.0);
        assert_eq!(r.col_of(0).map(|c| c >= 2), Some(true));
    }

    #[test]
    fn idle_columns_reject_negative_cells() {
        let w = m(vec![vec![-1.0, -2.0], vec![-3.0, -0.5]]);
        let r = solve_max_weight_assignment(&w.with_idle_columns()).unwrap();
        assert_eq!(r.total_value, 0.0);
        assert!(r.matching.iter().all(|&(_, c)| c >= 2));
    }

    #[test]
    fn oracle_refuses_large_inputs() {
        let w = WeightMatrix::new(9, 9, 1.0);
        assert!(matches!(brute_force_assignment(&w), Err(Error::OracleTooLarge(_))));
    }

    #[test]
    fn seeded_five_by_five_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let rows = (0..5).map(|_| (0..5).map(|_| rng.gen_range(-2.0..5.0)).collect()).collect();
        let w = m(rows);
        assert_eq!(
            solve_max_weight_assignment(&w).unwrap().total_value,
            brute_force_assignment(&w).unwrap().total_value
        );
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, c), r)
        })
    }

    proptest! {
        #[test]
        fn matches_oracle(rows in matrix_strategy()) {
            let w = m(rows);
            let h = solve_max_weight_assignment(&w).unwrap();
            let b = brute_force_assignment(&w).unwrap();
            prop_assert_eq!(h.total_value, b.total_value);
            let mut seen_r = std::collections::HashSet::new();
            let mut seen_c = std::collections::HashSet::new();
            for &(r, c) in &h.matching {
                prop_assert!(seen_r.insert(r));
                prop_assert!(seen_c.insert(c));
            }
            prop_assert_eq!(h.matching.len(), w.rows().min(w.cols()));
        }

        #[test]
        fn row_permutation_preserves_value(rows in matrix_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let w = m(rows.clone());
            let mut perm: Vec<usize> = (0..rows.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let permuted = m(perm.iter().map(|&i| rows[i].clone()).collect());
            let a = solve_max_weight_assignment(&w).unwrap().total_value;
            let b = solve_max_weight_assignment(&permuted).unwrap().total_value;
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }
}

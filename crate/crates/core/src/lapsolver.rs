//! Exact rectangular linear sum assignment with forbidden entries.
//!
//! The solver returns a maximum-cardinality matching of minimum total cost,
//! never pairing through a [`FORBIDDEN`] entry. It is a shortest augmenting
//! path method in the Jonker-Volgenant family (Crouse's rectangular variant)
//! run on a lexicographic weight `(unmatched rows, summed cost)`: every row
//! owns a private "unmatched" column of weight `(1, 0)` so infeasible rows
//! never block the search. Among equal-cost optima the lexicographically
//! smallest list of `(row, col)` pairs is selected by a greedy exchange pass
//! over the tight edges of the final dual solution.

use std::cmp::Ordering;
use std::ops::{Add, Sub};

use thiserror::Error;

/// Marks a disallowed pair. Distinct from every finite cost.
pub const FORBIDDEN: f64 = f64::INFINITY;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LapError {
    #[error("invalid cost {value} at ({row}, {col}): entries must be non-negative or FORBIDDEN")]
    InvalidCost { row: usize, col: usize, value: f64 },
    #[error("cost matrix shape {rows}x{cols} does not match {len} values")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
}

/// Row-major `rows x cols` table of non-negative costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, LapError> {
        if values.len() != rows * cols {
            return Err(LapError::ShapeMismatch {
                rows,
                cols,
                len: values.len(),
            });
        }
        for (idx, &value) in values.iter().enumerate() {
            if value.is_nan() || value < 0.0 {
                return Err(LapError::InvalidCost {
                    row: idx / cols.max(1),
                    col: idx % cols.max(1),
                    value,
                });
            }
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, LapError> {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn empty() -> Self {
        Self {
            rows: 0,
            cols: 0,
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn is_forbidden(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == FORBIDDEN
    }

    /// Entries strictly greater than `gate` become [`FORBIDDEN`].
    pub fn apply_gate(&self, gate: f64) -> CostMatrix {
        let values = self
            .values
            .iter()
            .map(|&v| if v > gate { FORBIDDEN } else { v })
            .collect();
        CostMatrix {
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }
}

/// Result of [`solve`]. Pairs are sorted by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
    pub total_cost: f64,
}

impl Matching {
    fn empty(rows: usize, cols: usize) -> Self {
        Self {
            pairs: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
            total_cost: 0.0,
        }
    }

    /// Column matched to `row`, if any.
    pub fn col_for_row(&self, row: usize) -> Option<usize> {
        self.pairs
            .binary_search_by_key(&row, |&(r, _)| r)
            .ok()
            .map(|i| self.pairs[i].1)
    }
}

/// Validates raw row-major costs and solves them.
pub fn solve_dense(rows: usize, cols: usize, values: &[f64]) -> Result<Matching, LapError> {
    let matrix = CostMatrix::new(rows, cols, values.to_vec())?;
    Ok(solve(&matrix))
}

/// Lexicographic `(unmatched rows, cost)` weight.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Weight {
    skips: i64,
    cost: f64,
}

impl Weight {
    const ZERO: Weight = Weight {
        skips: 0,
        cost: 0.0,
    };
    const INF: Weight = Weight {
        skips: i64::MAX,
        cost: f64::INFINITY,
    };

    fn is_inf(self) -> bool {
        self.skips == i64::MAX
    }
}

impl Add for Weight {
    type Output = Weight;
    fn add(self, rhs: Weight) -> Weight {
        Weight {
            skips: self.skips + rhs.skips,
            cost: self.cost + rhs.cost,
        }
    }
}

impl Sub for Weight {
    type Output = Weight;
    fn sub(self, rhs: Weight) -> Weight {
        Weight {
            skips: self.skips - rhs.skips,
            cost: self.cost - rhs.cost,
        }
    }
}

impl Eq for Weight {}

impl PartialOrd for Weight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Weight {
    fn cmp(&self, other: &Self) -> Ordering {
        self.skips
            .cmp(&other.skips)
            .then_with(|| self.cost.total_cmp(&other.cost))
    }
}

const NONE: usize = usize::MAX;

/// Working problem: real columns `0..cols`, then one private "unmatched"
/// column per row at `cols + row`.
struct Problem<'a> {
    matrix: &'a CostMatrix,
    rows: usize,
    cols: usize,
}

impl Problem<'_> {
    #[inline]
    fn width(&self) -> usize {
        self.cols + self.rows
    }

    #[inline]
    fn edge(&self, row: usize, col: usize) -> Option<Weight> {
        if col < self.cols {
            let v = self.matrix.get(row, col);
            (v != FORBIDDEN).then_some(Weight { skips: 0, cost: v })
        } else if col - self.cols == row {
            Some(Weight {
                skips: 1,
                cost: 0.0,
            })
        } else {
            None
        }
    }
}

struct Duals {
    u: Vec<Weight>,
    v: Vec<Weight>,
    col4row: Vec<usize>,
    row4col: Vec<usize>,
}

/// Solves the assignment. Deterministic and allocation-local.
pub fn solve(matrix: &CostMatrix) -> Matching {
    let (rows, cols) = (matrix.rows, matrix.cols);
    if rows == 0 || cols == 0 {
        return Matching::empty(rows, cols);
    }
    let problem = Problem { matrix, rows, cols };
    let mut duals = shortest_augmenting_paths(&problem);
    lexicographic_tie_break(&problem, &mut duals);

    let mut pairs = Vec::new();
    let mut unmatched_rows = Vec::new();
    let mut total_cost = 0.0;
    for (row, &col) in duals.col4row.iter().enumerate() {
        if col < cols {
            total_cost += matrix.get(row, col);
            pairs.push((row, col));
        } else {
            unmatched_rows.push(row);
        }
    }
    let unmatched_cols = (0..cols).filter(|&c| duals.row4col[c] == NONE).collect();
    Matching {
        pairs,
        unmatched_rows,
        unmatched_cols,
        total_cost,
    }
}

fn shortest_augmenting_paths(p: &Problem) -> Duals {
    let width = p.width();
    let mut u = vec![Weight::ZERO; p.rows];
    let mut v = vec![Weight::ZERO; width];
    let mut col4row = vec![NONE; p.rows];
    let mut row4col = vec![NONE; width];

    let mut shortest = vec![Weight::INF; width];
    let mut path = vec![NONE; width];
    let mut remaining = vec![0usize; width];
    let mut scanned_rows = vec![false; p.rows];
    let mut scanned_cols = vec![false; width];

    for cur_row in 0..p.rows {
        // Dijkstra over reduced costs from `cur_row` to the nearest free column.
        let mut min_val = Weight::ZERO;
        let mut num_remaining = width;
        for (it, slot) in remaining.iter_mut().enumerate() {
            *slot = width - it - 1;
        }
        scanned_rows.fill(false);
        scanned_cols.fill(false);
        shortest.fill(Weight::INF);

        let mut sink = NONE;
        let mut row = cur_row;
        while sink == NONE {
            let mut index = NONE;
            let mut lowest = Weight::INF;
            scanned_rows[row] = true;
            for (it, &col) in remaining[..num_remaining].iter().enumerate() {
                if let Some(w) = p.edge(row, col) {
                    let reduced = min_val + w - u[row] - v[col];
                    if reduced < shortest[col] {
                        path[col] = row;
                        shortest[col] = reduced;
                    }
                }
                if shortest[col] < lowest || (shortest[col] == lowest && row4col[col] == NONE) {
                    lowest = shortest[col];
                    index = it;
                }
            }
            // The row's private column is always reachable, so `lowest` is finite.
            debug_assert!(!lowest.is_inf());
            min_val = lowest;
            let col = remaining[index];
            if row4col[col] == NONE {
                sink = col;
            } else {
                row = row4col[col];
            }
            scanned_cols[col] = true;
            num_remaining -= 1;
            remaining[index] = remaining[num_remaining];
        }

        u[cur_row] = u[cur_row] + min_val;
        for r in 0..p.rows {
            if scanned_rows[r] && r != cur_row {
                u[r] = u[r] + min_val - shortest[col4row[r]];
            }
        }
        for c in 0..width {
            if scanned_cols[c] {
                v[c] = v[c] - (min_val - shortest[c]);
            }
        }

        let mut col = sink;
        loop {
            let r = path[col];
            row4col[col] = r;
            std::mem::swap(&mut col4row[r], &mut col);
            if r == cur_row {
                break;
            }
        }
    }

    Duals {
        u,
        v,
        col4row,
        row4col,
    }
}

/// Rewrites the optimal assignment into the lexicographically smallest one.
///
/// Every optimal assignment uses only tight edges (zero reduced cost under the
/// final duals) and leaves uncovered only columns whose dual is zero. Rows are
/// locked in increasing order, each to the smallest real column reachable by
/// an alternating exchange among the rows not yet locked.
fn lexicographic_tie_break(p: &Problem, duals: &mut Duals) {
    let scale = p
        .matrix
        .values
        .iter()
        .filter(|v| v.is_finite())
        .fold(1.0f64, |acc, &v| acc.max(v));
    let tol = 64.0 * f64::EPSILON * scale * (p.rows + p.cols) as f64;

    let tight = |duals: &Duals, row: usize, col: usize| -> bool {
        match p.edge(row, col) {
            Some(w) => {
                let reduced = w - duals.u[row] - duals.v[col];
                reduced.skips == 0 && reduced.cost.abs() <= tol
            }
            None => false,
        }
    };
    let zero_dual = |duals: &Duals, col: usize| -> bool {
        duals.v[col].skips == 0 && duals.v[col].cost.abs() <= tol
    };

    let width = p.width();
    let mut parent = vec![NONE; width];
    let mut visited = vec![false; width];
    let mut queue = Vec::with_capacity(p.rows);

    for row in 0..p.rows {
        let current = duals.col4row[row];
        let limit = current.min(p.cols);
        for cand in 0..limit {
            if !tight(duals, row, cand) {
                continue;
            }
            let old = current;
            let owner = duals.row4col[cand];
            if owner == NONE {
                if zero_dual(duals, old) {
                    duals.row4col[old] = NONE;
                    duals.col4row[row] = cand;
                    duals.row4col[cand] = row;
                    break;
                }
                continue;
            }
            if owner < row {
                continue;
            }

            // Search an alternating path that re-homes `owner` without `cand`.
            visited.fill(false);
            visited[cand] = true;
            queue.clear();
            queue.push(owner);
            let mut head = 0;
            let mut found = NONE;
            let old_may_free = zero_dual(duals, old);
            'search: while head < queue.len() {
                let x = queue[head];
                head += 1;
                for col in 0..width {
                    if visited[col] || !tight(duals, x, col) {
                        continue;
                    }
                    visited[col] = true;
                    parent[col] = x;
                    let y = duals.row4col[col];
                    if col == old || (y == NONE && old_may_free) {
                        found = col;
                        break 'search;
                    }
                    if y != NONE && y > row {
                        queue.push(y);
                    }
                }
            }
            if found == NONE {
                continue;
            }

            let mut col = found;
            loop {
                let x = parent[col];
                let prev = duals.col4row[x];
                duals.col4row[x] = col;
                duals.row4col[col] = x;
                if x == owner {
                    break;
                }
                col = prev;
            }
            if found != old {
                duals.row4col[old] = NONE;
            }
            duals.col4row[row] = cand;
            duals.row4col[cand] = row;
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const F: f64 = FORBIDDEN;

    #[test]
    fn empty_matrix() {
        let m = solve(&CostMatrix::empty());
        assert!(m.pairs.is_empty());
        assert_eq!(m.total_cost, 0.0);
    }

    #[test]
    fn zero_rows_or_cols_leave_everything_unmatched() {
        let m = solve(&CostMatrix::new(0, 3, vec![]).unwrap());
        assert_eq!(m.unmatched_cols, vec![0, 1, 2]);
        let m = solve(&CostMatrix::new(2, 0, vec![]).unwrap());
        assert_eq!(m.unmatched_rows, vec![0, 1]);
    }

    #[test]
    fn diagonal_optimum() {
        let m = solve(
            &CostMatrix::new(3, 3, vec![0., 1., 1., 1., 0., 1., 1., 1., 0.]).unwrap(),
        );
        assert_eq!(m.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(m.total_cost, 0.0);
    }

    #[test]
    fn rejects_nan_and_negative() {
        assert!(matches!(
            solve_dense(1, 2, &[0.5, f64::NAN]),
            Err(LapError::InvalidCost { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            solve_dense(2, 1, &[0.5, -0.1]),
            Err(LapError::InvalidCost { row: 1, col: 0, .. })
        ));
        assert!(matches!(
            solve_dense(1, 1, &[f64::NEG_INFINITY]),
            Err(LapError::InvalidCost { .. })
        ));
        assert!(matches!(
            CostMatrix::new(2, 2, vec![0.0; 3]),
            Err(LapError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn maximum_cardinality_beats_cost() {
        // Cheapest single pair is (0,0) but it blocks a two-pair matching.
        let m = solve(&CostMatrix::new(2, 2, vec![0.0, 0.1, 0.1, F]).unwrap());
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
        assert!((m.total_cost - 0.2).abs() < 1e-15);
    }

    #[test]
    fn fully_forbidden_rows_and_cols_are_unmatched() {
        let m = solve(&CostMatrix::new(3, 3, vec![F, F, F, 0.3, F, 0.2, F, F, 0.9]).unwrap());
        assert_eq!(m.pairs, vec![(1, 0), (2, 2)]);
        assert_eq!(m.unmatched_rows, vec![0]);
        assert_eq!(m.unmatched_cols, vec![1]);
    }

    #[test]
    fn rectangular_wide_and_tall() {
        let wide = solve(&CostMatrix::new(2, 4, vec![5., 1., 9., 9., 9., 9., 2., 0.5]).unwrap());
        assert_eq!(wide.pairs, vec![(0, 1), (1, 3)]);
        assert_eq!(wide.unmatched_cols, vec![0, 2]);
        let tall = solve(&CostMatrix::new(3, 1, vec![0.4, 0.1, 0.3]).unwrap());
        assert_eq!(tall.pairs, vec![(1, 0)]);
        assert_eq!(tall.unmatched_rows, vec![0, 2]);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let m = solve(&CostMatrix::new(3, 3, vec![1.0; 9]).unwrap());
        assert_eq!(m.pairs, vec![(0, 0), (1, 1), (2, 2)]);

        // Rows 0 and 1 are interchangeable; row 0 takes the smaller column.
        let m = solve(&CostMatrix::new(2, 2, vec![0.0, 0.0, 0.0, 0.0]).unwrap());
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);

        // One column, two equally good rows: the earlier row wins.
        let m = solve(&CostMatrix::new(2, 1, vec![0.5, 0.5]).unwrap());
        assert_eq!(m.pairs, vec![(0, 0)]);

        // An earlier row prefers being matched over staying unmatched.
        let m = solve(&CostMatrix::new(2, 1, vec![0.0, 0.0]).unwrap());
        assert_eq!(m.pairs, vec![(0, 0)]);

        // Cyclic tie: both perfect matchings cost 2.
        let m = solve(&CostMatrix::new(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap());
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
        let m = solve(&CostMatrix::new(2, 3, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn gate_behaviour() {
        let m = CostMatrix::new(1, 2, vec![0.2, 0.9]).unwrap();
        let gated = m.apply_gate(0.5);
        assert_eq!(gated.values(), &[0.2, F]);
        assert_eq!(m.apply_gate(f64::INFINITY), m);

        let all = CostMatrix::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap().apply_gate(0.0);
        assert!(all.values().iter().all(|&v| v == F));
        let res = solve(&all);
        assert!(res.pairs.is_empty());
        assert_eq!(res.unmatched_rows, vec![0, 1]);

        // Entries equal to the gate survive.
        let m = CostMatrix::new(1, 1, vec![0.5]).unwrap().apply_gate(0.5);
        assert_eq!(m.values(), &[0.5]);
    }

    #[test]
    fn col_for_row_lookup() {
        let m = solve(&CostMatrix::new(2, 2, vec![F, 0.0, F, F]).unwrap());
        assert_eq!(m.col_for_row(0), Some(1));
        assert_eq!(m.col_for_row(1), None);
    }
}

use std::fmt;

/// A cell of a rectangular grid, `(row, col)` with `(0, 0)` top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridState {
    pub row: usize,
    pub col: usize,
}

impl GridState {
    pub const fn new(row: usize, col: usize) -> Self {
        GridState { row, col }
    }
}

impl From<(usize, usize)> for GridState {
    fn from((row, col): (usize, usize)) -> Self {
        GridState { row, col }
    }
}

impl fmt::Display for GridState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

pub fn manhattan_distance(a: GridState, b: GridState) -> f64 {
    (a.row.abs_diff(b.row) + a.col.abs_diff(b.col)) as f64
}

pub fn chebyshev_distance(a: GridState, b: GridState) -> usize {
    a.row.abs_diff(b.row).max(a.col.abs_diff(b.col))
}

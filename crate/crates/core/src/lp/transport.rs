//! Balanced transportation simplex used by both matching designs.
//!
//! The unbalanced maximisation `max sum w x` with row sums `<= r` and column
//! sums `<= c` is balanced by a zero-weight slack column (capacity `sum r`) and
//! a zero-weight slack row (capacity `sum c`).  The slack row/slack column cell
//! then carries `sum c + sum r - 2 * matched`, which is positive whenever the
//! problem is non-trivial, so the balanced potentials convert directly into a
//! dual of the original problem.

use crate::error::{Error, Result};

pub(crate) struct TransportSolution {
    /// Row-major `rows x cols` flows of the original (unbalanced) problem.
    pub flow: Vec<f64>,
    pub row_duals: Vec<f64>,
    pub col_duals: Vec<f64>,
    pub objective: f64,
}

struct Balanced {
    m: usize,
    n: usize,
    w: Vec<f64>,
    row_cap: Vec<f64>,
    col_cap: Vec<f64>,
}

impl Balanced {
    fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }
}

/// Solves `max sum w x` s.t. row sums `<= row_cap`, column sums `<= col_cap`, `x >= 0`.
pub(crate) fn solve(
    weights: &[f64],
    rows: usize,
    cols: usize,
    row_cap: &[f64],
    col_cap: &[f64],
) -> Result<TransportSolution> {
    debug_assert_eq!(weights.len(), rows * cols);
    let total_rows: f64 = row_cap.iter().sum();
    let total_cols: f64 = col_cap.iter().sum();

    let (m, n) = (rows + 1, cols + 1);
    let mut w = vec![0.0; m * n];
    for i in 0..rows {
        w[i * n..i * n + cols].copy_from_slice(&weights[i * cols..(i + 1) * cols]);
    }
    let mut rc = row_cap.to_vec();
    rc.push(total_cols);
    let mut cc = col_cap.to_vec();
    cc.push(total_rows);
    let bal = Balanced { m, n, w, row_cap: rc, col_cap: cc };

    let scale = weights.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
    let tol = 1e-11 * scale;

    let (mut basis, mut x) = greedy_start(&bal);
    let max_iter = 50 * (m * n + 10);
    let mut iter = 0;
    loop {
        let (u, v) = potentials(&bal, &basis);
        let entering = (0..m * n).find(|&k| {
            x[k].is_nan() && {
                let (i, j) = (k / n, k % n);
                bal.weight(i, j) - u[i] - v[j] > tol
            }
        });
        let Some(enter) = entering else {
            return Ok(finish(&bal, rows, cols, &x, &u, &v));
        };
        iter += 1;
        if iter > max_iter {
            return Err(Error::Numerical(format!("transportation simplex exceeded {max_iter} pivots")));
        }
        pivot(&bal, &mut basis, &mut x, enter);
    }
}

/// Flows are stored densely; `NaN` marks a non-basic cell.
fn greedy_start(bal: &Balanced) -> (Vec<usize>, Vec<f64>) {
    let (m, n) = (bal.m, bal.n);
    let mut r = bal.row_cap.clone();
    let mut c = bal.col_cap.clone();
    let mut row_on = vec![true; m];
    let mut col_on = vec![true; n];
    let (mut nr, mut nc) = (m, n);
    let mut x = vec![f64::NAN; m * n];
    let mut basis = Vec::with_capacity(m + n - 1);

    loop {
        let mut best: Option<(usize, usize)> = None;
        for i in (0..m).filter(|&i| row_on[i]) {
            for j in (0..n).filter(|&j| col_on[j]) {
                if best.is_none_or(|(bi, bj)| bal.weight(i, j) > bal.weight(bi, bj)) {
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.expect("an active row and column always remain");
        let q = r[i].min(c[j]).max(0.0);
        x[i * n + j] = q;
        basis.push(i * n + j);
        if nr == 1 && nc == 1 {
            break;
        }
        let row_exhausted = r[i] <= c[j];
        if (row_exhausted && nr > 1) || nc == 1 {
            c[j] -= q;
            r[i] = 0.0;
            row_on[i] = false;
            nr -= 1;
        } else {
            r[i] -= q;
            c[j] = 0.0;
            col_on[j] = false;
            nc -= 1;
        }
    }
    (basis, x)
}

/// Tree potentials with `u[m-1] = 0` so that `u_i + v_j = w_ij` on every basic cell.
fn potentials(bal: &Balanced, basis: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (bal.m, bal.n);
    let adj = adjacency(m, n, basis);
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    u[m - 1] = 0.0;
    let mut stack = vec![m - 1];
    while let Some(node) = stack.pop() {
        for &(other, cell) in &adj[node] {
            let (i, j) = (cell / n, cell % n);
            if node < m {
                if v[j].is_nan() {
                    v[j] = bal.weight(i, j) - u[i];
                    stack.push(other);
                }
            } else if u[i].is_nan() {
                u[i] = bal.weight(i, j) - v[j];
                stack.push(other);
            }
        }
    }
    (u, v)
}

/// Nodes `0..m` are rows, `m..m+n` are columns; each entry is `(neighbour, cell)`.
fn adjacency(m: usize, n: usize, basis: &[usize]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); m + n];
    for &cell in basis {
        let (i, j) = (cell / n, cell % n);
        adj[i].push((m + j, cell));
        adj[m + j].push((i, cell));
    }
    adj
}

fn pivot(bal: &Balanced, basis: &mut [usize], x: &mut [f64], enter: usize) {
    let (m, n) = (bal.m, bal.n);
    let (ei, ej) = (enter / n, enter % n);
    let adj = adjacency(m, n, basis);

    // Tree path from the entering column node back to the entering row node.
    let start = m + ej;
    let target = ei;
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
    let mut seen = vec![false; m + n];
    seen[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == target {
            break;
        }
        for &(other, cell) in &adj[node] {
            if !seen[other] {
                seen[other] = true;
                parent[other] = Some((node, cell));
                queue.push_back(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = target;
    while node != start {
        let (prev, cell) = parent[node].expect("basis is a spanning tree");
        path.push(cell);
        node = prev;
    }
    path.reverse();

    // Along the cycle the signs alternate -, +, -, ... starting next to the entering cell.
    let mut theta = f64::INFINITY;
    let mut leave = usize::MAX;
    for (k, &cell) in path.iter().enumerate() {
        if k % 2 == 0 && (x[cell] < theta || (x[cell] == theta && cell < leave)) {
            theta = x[cell];
            leave = cell;
        }
    }
    for (k, &cell) in path.iter().enumerate() {
        if k % 2 == 0 {
            x[cell] -= theta;
        } else {
            x[cell] += theta;
        }
    }
    x[enter] = theta;
    x[leave] = f64::NAN;
    let pos = basis.iter().position(|&c| c == leave).expect("leaving cell is basic");
    basis[pos] = enter;
}

fn finish(bal: &Balanced, rows: usize, cols: usize, x: &[f64], u: &[f64], v: &[f64]) -> TransportSolution {
    let n = bal.n;
    let mut flow = vec![0.0; rows * cols];
    let mut objective = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let val = x[i * n + j];
            if !val.is_nan() && val > 0.0 {
                flow[i * cols + j] = val;
                objective += bal.weight(i, j) * val;
            }
        }
    }
    // Shift so the slack row/column carry zero price.
    let slack_col = v[n - 1];
    let slack_row = u[bal.m - 1];
    let row_duals = (0..rows).map(|i| u[i] + slack_col).collect();
    let col_duals = (0..cols).map(|j| v[j] + slack_row).collect();
    TransportSolution { flow, row_duals, col_duals, objective }
}

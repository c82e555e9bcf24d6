//! Full-boundary dynamic time warping with steps (1,1), (1,0), (0,1).

/// Minimum-cost monotonic alignment of a `rows`-long sequence against a
/// `cols`-long one. `cost(i, j)` is the local cost of pairing row `i` with
/// column `j`.
///
/// Returns the alignment as `(row, col)` pairs from `(0, 0)` to
/// `(rows - 1, cols - 1)` plus its total cost, or `None` if either side is
/// empty. On equal accumulated cost the traceback prefers the diagonal
/// predecessor, then the one that advanced the row sequence, then the one
/// that advanced the column sequence.
pub fn dtw<F>(rows: usize, cols: usize, mut cost: F) -> Option<(Vec<(usize, usize)>, f64)>
where
    F: FnMut(usize, usize) -> f64,
{
    if rows == 0 || cols == 0 {
        return None;
    }
    let mut acc = vec![f64::INFINITY; rows * cols];
    let at = |i: usize, j: usize| i * cols + j;

    for i in 0..rows {
        for j in 0..cols {
            let local = cost(i, j);
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(acc[at(i - 1, j - 1)]);
                }
                if i > 0 {
                    best = best.min(acc[at(i - 1, j)]);
                }
                if j > 0 {
                    best = best.min(acc[at(i, j - 1)]);
                }
                best
            };
            acc[at(i, j)] = prev + local;
        }
    }

    let mut path = vec![(rows - 1, cols - 1)];
    let (mut i, mut j) = (rows - 1, cols - 1);
    while (i, j) != (0, 0) {
        let mut candidates = Vec::with_capacity(3);
        if i > 0 && j > 0 {
            candidates.push((i - 1, j - 1));
        }
        if i > 0 {
            candidates.push((i - 1, j));
        }
        if j > 0 {
            candidates.push((i, j - 1));
        }
        let mut pick = candidates[0];
        for &c in &candidates[1..] {
            if acc[at(c.0, c.1)] < acc[at(pick.0, pick.1)] {
                pick = c;
            }
        }
        (i, j) = pick;
        path.push(pick);
    }
    path.reverse();
    Some((path, acc[at(rows - 1, cols - 1)]))
}

/// True when `path` is a monotonic boundary-to-boundary alignment for
/// sequences of the given lengths.
pub fn is_valid_path(path: &[(usize, usize)], rows: usize, cols: usize) -> bool {
    if rows == 0 || cols == 0 {
        return false;
    }
    if path.first() != Some(&(0, 0)) || path.last() != Some(&(rows - 1, cols - 1)) {
        return false;
    }
    path.windows(2).all(|w| {
        let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
        matches!((di, dj), (1, 1) | (1, 0) | (0, 1))
    })
}

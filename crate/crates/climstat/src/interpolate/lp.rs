//! Two-phase dense simplex used to evaluate the lower convex hull of lifted
//! scattered data: minimizing the lifted coordinate over convex combinations
//! that reproduce the query point selects the containing simplex of a
//! Delaunay triangulation.

const TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 20_000;

/// Finds w >= 0 with sum w_i = 1, sum w_i p_i = q minimizing
/// sum w_i |p_i - q|^2. Returns the sparse nonzero weights, or None when q
/// lies outside the convex hull (or the pivoting degenerates).
pub fn hull_weights(points: &[[f64; 4]], q: &[f64; 4]) -> Option<Vec<(usize, f64)>> {
    let n = points.len();
    let m = 5;
    if n == 0 {
        return None;
    }
    // Columns are recentered at q, so b = (0, 0, 0, 0, 1) and costs stay
    // small; the objective shift is constant under the constraints.
    let cost: Vec<f64> = points
        .iter()
        .map(|p| {
            let mut s = 0.0;
            for d in 0..4 {
                let diff = p[d] - q[d];
                s += diff * diff;
            }
            s
        })
        .collect();
    // Tableau: m rows x (n real + m artificial + 1 rhs).
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    for (j, p) in points.iter().enumerate() {
        for d in 0..4 {
            t[d][j] = p[d] - q[d];
        }
        t[4][j] = 1.0;
    }
    t[4][width - 1] = 1.0;
    // b >= 0 already (0s and a 1); artificial j gets column n + j.
    for i in 0..m {
        t[i][n + i] = 1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase 1: minimize the artificial sum.
    let mut z: Vec<f64> = vec![0.0; width];
    for i in 0..m {
        for (zj, tij) in z.iter_mut().zip(&t[i]) {
            *zj += *tij;
        }
    }
    if !run_simplex(&mut t, &mut basis, &mut z, n + m)? {
        return None;
    }
    let infeasibility: f64 = basis
        .iter()
        .enumerate()
        .filter(|&(_, &b)| b >= n)
        .map(|(i, _)| t[i][width - 1])
        .sum();
    if infeasibility > 1e-7 {
        return None; // outside the hull
    }

    // Phase 2: minimize the lifted coordinate over the real columns only.
    let mut z2: Vec<f64> = vec![0.0; width];
    for (j, &c) in cost.iter().enumerate() {
        z2[j] = -c;
    }
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            let cb = cost[b];
            for (z2j, tij) in z2.iter_mut().zip(&t[i]) {
                *z2j += cb * *tij;
            }
        }
    }
    // Artificial columns must not re-enter.
    for j in n..n + m {
        z2[j] = -f64::INFINITY;
    }
    run_simplex(&mut t, &mut basis, &mut z2, n)?;

    let mut weights: Vec<(usize, f64)> = basis
        .iter()
        .enumerate()
        .filter(|&(_, &b)| b < n)
        .map(|(i, &b)| (b, t[i][width - 1]))
        .filter(|&(_, w)| w > TOL)
        .collect();
    weights.sort_by_key(|&(j, _)| j);
    Some(weights)
}

/// Bland's-rule simplex on a tableau with reduced-cost row `z` (stored as
/// z_j = c_B B^{-1} A_j - c_j; entering columns have z_j > tol). Returns
/// Some(true) at optimality, None if the iteration cap is hit.
fn run_simplex(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    z: &mut [f64],
    candidate_columns: usize,
) -> Option<bool> {
    let m = t.len();
    let width = t[0].len();
    for _ in 0..MAX_ITERATIONS {
        // Bland: smallest eligible column index.
        let entering = (0..candidate_columns).find(|&j| z[j] > TOL);
        let entering = match entering {
            Some(j) => j,
            None => return Some(true),
        };
        // Ratio test; ties go to the smallest basis variable (Bland).
        let mut leaving: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][entering] > TOL {
                let ratio = t[i][width - 1] / t[i][entering];
                let better = match leaving {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - TOL || (ratio < lr + TOL && basis[i] < basis[li])
                    }
                };
                if better {
                    leaving = Some((i, ratio));
                }
            }
        }
        let (pivot_row, _) = leaving?; // unbounded: cannot happen on a bounded feasible set
        let pivot = t[pivot_row][entering];
        for v in t[pivot_row].iter_mut() {
            *v /= pivot;
        }
        for i in 0..m {
            if i != pivot_row && t[i][entering].abs() > 0.0 {
                let f = t[i][entering];
                for j in 0..width {
                    t[i][j] -= f * t[pivot_row][j];
                }
                t[i][entering] = 0.0;
            }
        }
        let f = z[entering];
        if f != 0.0 {
            for j in 0..width {
                if z[j].is_finite() {
                    z[j] -= f * t[pivot_row][j];
                }
            }
            z[entering] = 0.0;
        }
        basis[pivot_row] = entering;
    }
    None
}

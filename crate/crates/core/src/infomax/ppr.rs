//! Personalized-PageRank diffusion used as a second structural view.

use nalgebra::DMatrix;

use crate::autodiff::Matrix;
use crate::error::{invalid, Result};

pub const DEFAULT_DENSE_CAP: usize = 2000;

/// `alpha * (I - (1 - alpha) D^-1/2 (A + I) D^-1/2)^-1` for the symmetrized
/// graph with self-loops on local nodes `0..n`.
pub fn ppr_matrix(
    n: usize,
    edges: &[(usize, usize)],
    alpha: f64,
    dense_cap: usize,
) -> Result<Matrix> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("ppr alpha {alpha} outside (0, 1)"));
    }
    if n > dense_cap {
        return invalid(format!(
            "ppr on {n} nodes exceeds the dense cap of {dense_cap}; subsample the input graph"
        ));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let mut a = DMatrix::<f64>::identity(n, n);
    for &(u, v) in edges {
        if u >= n || v >= n {
            return invalid(format!("edge ({u}, {v}) outside {n} nodes"));
        }
        if u != v {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / a.row(i).sum().sqrt()).collect();
    let mut system = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                system[(i, j)] -= (1.0 - alpha) * inv_sqrt[i] * a[(i, j)] * inv_sqrt[j];
            }
        }
    }
    let rhs = DMatrix::<f64>::identity(n, n) * alpha;
    let pi = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| crate::error::PsiError::InvalidArgument("singular ppr system".into()))?;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, pi[(i, j)]);
        }
    }
    Ok(out)
}

/// Sparsified diffusion view: for every node `i`, the `top_t` largest
/// entries `pi[i][j]` become weighted edges `j -> i` (ties go to lower `j`).
pub fn ppr_diffusion(
    n: usize,
    edges: &[(usize, usize)],
    alpha: f64,
    top_t: usize,
    dense_cap: usize,
) -> Result<Vec<(usize, usize, f64)>> {
    if top_t == 0 {
        return invalid("ppr top_t must be >= 1");
    }
    let pi = ppr_matrix(n, edges, alpha, dense_cap)?;
    let mut out = Vec::with_capacity(n * top_t.min(n));
    for i in 0..n {
        let row = pi.row(i);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for &j in order.iter().take(top_t) {
            out.push((j, i, row[j]));
        }
    }
    Ok(out)
}

//! Exact check that conditional hard negatives lower-bound the GD estimator.

use rand::Rng;

use crate::autodiff::Matrix;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgdReport {
    pub i_gd: f64,
    pub i_cgd: f64,
    pub holds: bool,
}

fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Evaluates both estimators exactly. `f` and `p_xy` are |X| x |Y|; `p_xy`
/// must be strictly positive and sum to one.
///
/// `I_GD = E_p(x,y)[log s(f)] + E_p(x)p(y)[log(1 - s(f))]`; `I_CGD` replaces
/// the negative distribution by `p(y)` restricted to
/// `{ y : e^f(x,y) >= E_p(y) e^f(x,y) }` and renormalized.
pub fn verify_cgd_bound(f: &Matrix, p_xy: &Matrix) -> Result<CgdReport> {
    let (nx, ny) = f.shape();
    if p_xy.shape() != (nx, ny) {
        return invalid("score table and joint distribution differ in shape");
    }
    if nx == 0 || ny == 0 || nx > 8 || ny > 8 {
        return invalid(format!("|X| = {nx}, |Y| = {ny} must lie in 1..=8"));
    }
    if p_xy.as_slice().iter().any(|&p| !(p > 0.0)) {
        return invalid("joint distribution must be strictly positive");
    }
    let total: f64 = p_xy.as_slice().iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return invalid(format!("joint distribution sums to {total}"));
    }
    let px: Vec<f64> = (0..nx).map(|x| p_xy.row(x).iter().sum()).collect();
    let py: Vec<f64> = (0..ny)
        .map(|y| (0..nx).map(|x| p_xy.get(x, y)).sum())
        .collect();

    let mut positive = 0.0;
    let mut neg_marginal = 0.0;
    let mut neg_conditional = 0.0;
    for x in 0..nx {
        let row = f.row(x);
        let mut ex = 0.0;
        for y in 0..ny {
            positive += p_xy.get(x, y) * log_sigmoid(row[y]);
            neg_marginal += px[x] * py[y] * -softplus(row[y]);
            ex += py[y] * row[y].exp();
        }
        // Tolerance so that e^f == E e^f (constant rows) still qualifies.
        let threshold = ex.ln() - 1e-12;
        let mass: f64 = (0..ny)
            .filter(|&y| row[y] >= threshold)
            .map(|y| py[y])
            .sum();
        let cond: f64 = (0..ny)
            .filter(|&y| row[y] >= threshold)
            .map(|y| py[y] / mass * -softplus(row[y]))
            .sum();
        neg_conditional += px[x] * cond;
    }
    let i_gd = positive + neg_marginal;
    let i_cgd = positive + neg_conditional;
    Ok(CgdReport {
        i_gd,
        i_cgd,
        holds: i_cgd <= i_gd + 1e-12,
    })
}

/// A random instance: scores uniform in [-scale, scale] and a strictly
/// positive joint distribution.
pub fn random_cgd_instance<R: Rng + ?Sized>(
    nx: usize,
    ny: usize,
    scale: f64,
    rng: &mut R,
) -> (Matrix, Matrix) {
    let f = Matrix::from_vec(
        nx,
        ny,
        (0..nx * ny)
            .map(|_| rng.random_range(-scale..=scale))
            .collect(),
    )
    .expect("shape matches data");
    let raw: Vec<f64> = (0..nx * ny).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let p = Matrix::from_vec(nx, ny, raw.into_iter().map(|w| w / total).collect())
        .expect("shape matches data");
    (f, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_scores_give_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, p) = random_cgd_instance(3, 4, 1.0, &mut rng);
        let f = Matrix::filled(3, 4, 0.7);
        let r = verify_cgd_bound(&f, &p).unwrap();
        assert_eq!(r.i_gd, r.i_cgd);
        assert!(r.holds);
    }

    #[test]
    fn single_outcome_gives_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (f, p) = random_cgd_instance(5, 1, 3.0, &mut rng);
        let r = verify_cgd_bound(&f, &p).unwrap();
        assert_eq!(r.i_gd, r.i_cgd);
    }

    #[test]
    fn random_tables_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (f, p) = random_cgd_instance(4, 4, 3.0, &mut rng);
            assert!(verify_cgd_bound(&f, &p).unwrap().holds);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = Matrix::zeros(2, 2);
        assert!(verify_cgd_bound(&f, &Matrix::filled(2, 2, 0.3)).is_err());
        assert!(verify_cgd_bound(
            &f,
            &Matrix::from_rows(&[vec![0.5, 0.5], vec![0.0, 0.0]]).unwrap()
        )
        .is_err());
        assert!(verify_cgd_bound(&Matrix::zeros(9, 1), &Matrix::filled(9, 1, 1.0 / 9.0)).is_err());
    }
}

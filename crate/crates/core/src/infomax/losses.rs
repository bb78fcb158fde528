//! Mutual-information objectives expressed as losses to minimize.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{invalid, Result};

/// Weights of the auxiliary InfoMax terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_single: f64,
    pub lambda_khop: f64,
    pub lambda_second: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_single: 1.0,
            lambda_khop: 1.0,
            lambda_second: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("lambda", self.lambda_single),
            ("lambda_khop", self.lambda_khop),
            ("lambda_second", self.lambda_second),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return invalid(format!("{name} = {w} must be a finite value >= 0"));
            }
        }
        Ok(())
    }
}

/// GAN-like divergence loss: `mean(softplus(-pos)) + mean(softplus(neg))`,
/// i.e. `-mean(log sigmoid(pos)) - mean(log(1 - sigmoid(neg)))`.
pub fn gd_loss(tape: &mut Tape, pos: Var, neg: Var) -> Result<Var> {
    if tape.value(pos).is_empty() || tape.value(neg).is_empty() {
        return invalid("gd loss needs at least one positive and one negative score");
    }
    let np = tape.scale(pos, -1.0);
    let lp = tape.softplus(np);
    let lp = tape.mean_all(lp)?;
    let ln = tape.softplus(neg);
    let ln = tape.mean_all(ln)?;
    tape.add(lp, ln)
}

/// InfoNCE in its standard (negated) form. `pos` is n x 1, `neg` is n x K;
/// row `i` of `neg` holds the negatives of positive `i`.
pub fn infonce_loss(tape: &mut Tape, pos: Var, neg: Var) -> Result<Var> {
    let (n, one) = tape.shape(pos);
    let (rows, k) = tape.shape(neg);
    if n == 0 || one != 1 {
        return invalid(format!("positive scores must be n x 1, got {n} x {one}"));
    }
    if k == 0 {
        return invalid("infonce loss needs at least one negative per positive");
    }
    if rows != n {
        return invalid(format!("{rows} negative rows for {n} positives"));
    }
    let all = tape.concat_cols(&[pos, neg])?;
    let logp = tape.log_softmax_rows(all);
    let mut pick = Matrix::zeros(n, k + 1);
    for r in 0..n {
        pick.set(r, 0, 1.0);
    }
    let pick = tape.constant(pick);
    let chosen = tape.mul(logp, pick)?;
    let total = tape.sum_all(chosen);
    Ok(tape.scale(total, -1.0 / n as f64))
}

/// k-hop loss: one mean over every positive and negative term,
/// `-(sum log sigmoid(pos) + sum log(1 - sigmoid(neg))) / (|pos| + |neg|)`.
/// Either side may be missing, but not both.
pub fn khop_loss(tape: &mut Tape, pos: Option<Var>, neg: Option<Var>) -> Result<Var> {
    let pos = pos.filter(|&p| !tape.value(p).is_empty());
    let neg = neg.filter(|&n| !tape.value(n).is_empty());
    let mut terms = Vec::new();
    let mut count = 0;
    match (pos, neg) {
        (None, None) => return invalid("k-hop loss with no positive and no negative nodes"),
        (None, Some(_)) => log::warn!("k-hop loss without positives; using negatives only"),
        (Some(_), None) => log::warn!("k-hop loss without negatives; using positives only"),
        _ => {}
    }
    if let Some(p) = pos {
        count += tape.value(p).len();
        let np = tape.scale(p, -1.0);
        let sp = tape.softplus(np);
        terms.push(tape.sum_all(sp));
    }
    if let Some(n) = neg {
        count += tape.value(n).len();
        let sp = tape.softplus(n);
        terms.push(tape.sum_all(sp));
    }
    let total = if terms.len() == 2 {
        tape.add(terms[0], terms[1])?
    } else {
        terms[0]
    };
    Ok(tape.scale(total, 1.0 / count as f64))
}

fn eval_constant(f: impl FnOnce(&mut Tape) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new(false);
    let out = f(&mut tape)?;
    tape.scalar(out)
}

fn column(values: &[f64]) -> Matrix {
    Matrix::column_vector(values)
}

/// [`gd_loss`] on plain values.
pub fn gd_loss_value(pos: &[f64], neg: &[f64]) -> Result<f64> {
    eval_constant(|t| {
        let p = t.constant(column(pos));
        let n = t.constant(column(neg));
        gd_loss(t, p, n)
    })
}

/// [`infonce_loss`] on plain values; `neg[i]` are the negatives of `pos[i]`.
pub fn infonce_loss_value(pos: &[f64], neg: &[Vec<f64>]) -> Result<f64> {
    let k = neg.first().map_or(0, Vec::len);
    if neg.iter().any(|r| r.len() != k) {
        return invalid("ragged negative score rows");
    }
    let negm = Matrix::from_vec(neg.len(), k, neg.concat())?;
    eval_constant(|t| {
        let p = t.constant(column(pos));
        let n = t.constant(negm);
        infonce_loss(t, p, n)
    })
}

/// [`khop_loss`] on plain values.
pub fn khop_loss_value(pos: &[f64], neg: &[f64]) -> Result<f64> {
    eval_constant(|t| {
        let p = (!pos.is_empty()).then(|| t.constant(column(pos)));
        let n = (!neg.is_empty()).then(|| t.constant(column(neg)));
        khop_loss(t, p, n)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gd_reference_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((gd_loss_value(&[0.0, 0.0], &[0.0]).unwrap() - 2.0 * ln2).abs() < 1e-12);
        let direct =
            -(1.0 / (1.0 + (-1.0_f64).exp())).ln() - (1.0 - 1.0 / (1.0 + 1.0_f64.exp())).ln();
        assert!((gd_loss_value(&[1.0], &[-1.0]).unwrap() - direct).abs() < 1e-12);
        assert!((direct - 0.626523).abs() < 1e-6);
        assert!(gd_loss_value(&[800.0], &[-800.0]).unwrap() < 1e-300);
        assert!(gd_loss_value(&[], &[1.0]).is_err());
    }

    #[test]
    fn infonce_reference_values() {
        for k in 1..6 {
            let v = infonce_loss_value(&[0.3], &[vec![0.3; k]]).unwrap();
            assert!((v - ((k + 1) as f64).ln()).abs() < 1e-12);
        }
        assert!(
            (infonce_loss_value(&[0.0], &[vec![0.0, 0.0]]).unwrap() - 3.0_f64.ln()).abs() < 1e-12
        );
        assert!(infonce_loss_value(&[500.0], &[vec![0.0, -2.0]]).unwrap() < 1e-100);
        assert!(infonce_loss_value(&[0.0], &[vec![]]).is_err());
    }

    #[test]
    fn khop_reference_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((khop_loss_value(&[0.0, 0.0], &[0.0, 0.0]).unwrap() - ln2).abs() < 1e-12);
        assert!(khop_loss_value(&[], &[]).is_err());
        let mut prev = f64::INFINITY;
        for s in [1.0, 10.0, 100.0, 700.0] {
            let v = khop_loss_value(&[s, s, s], &[]).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-300);
        let (p, n) = ([0.3, -1.2, 2.0], [0.5, 0.1, -0.7]);
        let a = khop_loss_value(&p, &n).unwrap();
        let b = gd_loss_value(&p, &n).unwrap() / 2.0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let w = LossWeights {
            lambda_khop: -1.0,
            ..LossWeights::default()
        };
        assert!(w.validate().is_err());
    }
}

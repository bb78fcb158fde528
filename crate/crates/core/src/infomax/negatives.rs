//! Negative samplers.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeSampler {
    /// Uniform row permutation of the positive representations.
    RowShuffle,
    /// Representations from the other subgraphs of the batch.
    CrossSubgraph,
}

/// Uniform random permutation of `0..n`. Fixed points are allowed.
pub fn row_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Rows of `h` in a uniformly random order.
pub fn shuffle_negatives<R: Rng + ?Sized>(tape: &mut Tape, h: Var, rng: &mut R) -> Result<Var> {
    let n = tape.shape(h).0;
    if n <= 1 {
        return Ok(h);
    }
    let perm = row_permutation(n, rng);
    tape.gather_rows(h, &perm)
}

/// All node rows of every batch member except `target`, in batch order.
pub fn cross_subgraph_negatives(tape: &mut Tape, batch: &[Var], target: usize) -> Result<Var> {
    if batch.len() < 2 {
        return invalid("cross-subgraph negatives need a batch of at least 2 subgraphs; increase the batch size");
    }
    if target >= batch.len() {
        return invalid(format!("target {target} outside batch of {}", batch.len()));
    }
    let others: Vec<Var> = batch
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target)
        .map(|(_, &v)| v)
        .collect();
    if others.len() == 1 {
        return Ok(others[0]);
    }
    tape.concat_rows(&others)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rows(tape: &Tape, v: Var) -> Vec<Vec<f64>> {
        let m = tape.value(v);
        (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
    }

    #[test]
    fn shuffle_is_a_reproducible_permutation() {
        let h = Matrix::from_rows(
            &(0..9)
                .map(|i| vec![i as f64, -(i as f64)])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let run = |seed| {
            let mut tape = Tape::new(true);
            let v = tape.constant(h.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = shuffle_negatives(&mut tape, v, &mut rng).unwrap();
            rows(&tape, s)
        };
        let a = run(3);
        assert_eq!(a, run(3));
        let mut sorted = a.clone();
        sorted.sort_by(|x, y| x[0].total_cmp(&y[0]));
        let mut tape = Tape::new(false);
        let v = tape.constant(h.clone());
        assert_eq!(sorted, rows(&tape, v));

        let mut tape = Tape::new(true);
        let single = tape.constant(Matrix::row_vector(&[4.0, 2.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            shuffle_negatives(&mut tape, single, &mut rng).unwrap(),
            single
        );
    }

    #[test]
    fn cross_subgraph_counts() {
        let mut tape = Tape::new(true);
        let a = tape.constant(Matrix::filled(2, 3, 1.0));
        let b = tape.constant(Matrix::filled(3, 3, 2.0));
        let c = tape.constant(Matrix::filled(4, 3, 3.0));
        let only_b = cross_subgraph_negatives(&mut tape, &[a, b], 0).unwrap();
        assert_eq!(rows(&tape, only_b), rows(&tape, b));
        let ac = cross_subgraph_negatives(&mut tape, &[a, b, c], 1).unwrap();
        assert_eq!(tape.shape(ac), (6, 3));
        assert_eq!(tape.value(ac).row(0), &[1.0; 3]);
        assert_eq!(tape.value(ac).row(5), &[3.0; 3]);
        assert!(cross_subgraph_negatives(&mut tape, &[a], 0).is_err());
    }
}

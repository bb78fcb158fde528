use rand::Rng;

use super::layers::uniform_init;
use crate::autodiff::{Matrix, ParamId, ParameterStore, Tape, Var};
use crate::error::{invalid, Result};
use crate::graph::NodeId;

/// Node feature table, one row per global node.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub id: ParamId,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Trainable table with random initial values.
    pub fn random<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let id = store.add("embedding", uniform_init(rows, cols, cols, rng))?;
        Ok(Self {
            id,
            rows,
            cols,
            trainable: true,
        })
    }

    /// Table initialised from given values, optionally frozen.
    pub fn preloaded(store: &mut ParameterStore, values: Matrix, trainable: bool) -> Result<Self> {
        let (rows, cols) = values.shape();
        let id = if trainable {
            store.add("embedding", values)?
        } else {
            store.add_frozen("embedding", values)?
        };
        Ok(Self {
            id,
            rows,
            cols,
            trainable,
        })
    }

    /// Feature rows for `ids`, in order.
    pub fn gather(&self, tape: &mut Tape, store: &ParameterStore, ids: &[NodeId]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&v| v >= self.rows) {
            return invalid(format!(
                "node {bad} outside embedding table of {} rows",
                self.rows
            ));
        }
        if self.trainable {
            let table = tape.param(store, self.id);
            tape.gather_rows(table, ids)
        } else {
            let src = store.value(self.id);
            let mut data = Vec::with_capacity(ids.len() * self.cols);
            for &v in ids {
                data.extend_from_slice(src.row(v));
            }
            Ok(tape.constant(Matrix::from_vec(ids.len(), self.cols, data)?))
        }
    }
}

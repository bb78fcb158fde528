use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
struct Param {
    name: String,
    value: Matrix,
    grad: Option<Matrix>,
    first_moment: Matrix,
    second_moment: Matrix,
    step: u64,
    trainable: bool,
}

/// Owns every learnable tensor of a model plus its Adam state.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
}

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: [usize; 2],
    values: Vec<f64>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        self.insert(name.into(), value, true)
    }

    /// Registers a tensor that is read by the model but never updated.
    pub fn add_frozen(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        self.insert(name.into(), value, false)
    }

    fn insert(&mut self, name: String, value: Matrix, trainable: bool) -> Result<ParamId> {
        if self.by_name.contains_key(&name) {
            return invalid(format!("parameter {name:?} registered twice"));
        }
        let id = ParamId(self.params.len());
        let (r, c) = value.shape();
        self.params.push(Param {
            name: name.clone(),
            value,
            grad: None,
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
            step: 0,
            trainable,
        });
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> Option<&Matrix> {
        self.params[id.0].grad.as_ref()
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    pub fn step_count(&self, id: ParamId) -> u64 {
        self.params[id.0].step
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &Matrix) {
        let p = &mut self.params[id.0];
        if !p.trainable {
            return;
        }
        match &mut p.grad {
            Some(existing) => existing.add_assign(g),
            None => p.grad = Some(g.clone()),
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub(crate) fn adam_update(
        &mut self,
        id: ParamId,
        f: impl FnOnce(&mut Matrix, &Matrix, &mut Matrix, &mut Matrix, u64),
    ) -> bool {
        let p = &mut self.params[id.0];
        let Some(grad) = p.grad.take() else {
            return false;
        };
        p.step += 1;
        f(
            &mut p.value,
            &grad,
            &mut p.first_moment,
            &mut p.second_moment,
            p.step,
        );
        true
    }

    /// Values only, for best-checkpoint snapshots.
    pub fn snapshot(&self) -> Vec<Matrix> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Matrix]) -> Result<()> {
        if snapshot.len() != self.params.len() {
            return invalid("snapshot does not match parameter layout");
        }
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            if p.value.shape() != v.shape() {
                return invalid(format!("snapshot shape mismatch for {}", p.name));
            }
            p.value = v.clone();
        }
        Ok(())
    }

    /// JSON map name -> {shape, values}.
    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<&str, StoredTensor> = self
            .params
            .iter()
            .map(|p| {
                (
                    p.name.as_str(),
                    StoredTensor {
                        shape: [p.value.rows(), p.value.cols()],
                        values: p.value.as_slice().to_vec(),
                    },
                )
            })
            .collect();
        Ok(serde_json::to_string(&map)?)
    }

    /// Overwrites values of already-registered parameters from JSON.
    pub fn load_json(&mut self, json: &str) -> Result<()> {
        let map: BTreeMap<String, StoredTensor> = serde_json::from_str(json)?;
        for p in &self.params {
            if !map.contains_key(&p.name) {
                return invalid(format!("checkpoint lacks parameter {:?}", p.name));
            }
        }
        for (name, t) in map {
            let Some(&id) = self.by_name.get(&name) else {
                return invalid(format!("checkpoint has unknown parameter {name:?}"));
            };
            let m = Matrix::from_vec(t.shape[0], t.shape[1], t.values)?;
            if m.shape() != self.params[id.0].value.shape() {
                return invalid(format!("checkpoint shape mismatch for {name:?}"));
            }
            self.params[id.0].value = m;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.load_json(&text)
    }
}

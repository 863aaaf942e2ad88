use std::collections::HashMap;

use super::{Gradients, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Named tensors in insertion order, each with an optional gradient.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore<T> {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
    values: Vec<Tensor<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            names: Vec::new(),
            lookup: HashMap::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::contract(format!("duplicate parameter name {name}")));
        }
        let id = self.names.len();
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        self.grads.push(None);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.id(name).map(move |i| &mut self.values[i])
    }

    pub fn value(&self, id: usize) -> &Tensor<T> {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Tensor<T> {
        &mut self.values[id]
    }

    pub fn grad(&self, id: usize) -> Option<&Tensor<T>> {
        self.grads[id].as_ref()
    }

    pub fn set_grad(&mut self, id: usize, grad: Tensor<T>) -> Result<()> {
        if grad.shape() != self.values[id].shape() {
            return Err(Error::Dimension {
                op: "set_grad",
                lhs: self.values[id].shape().to_vec(),
                rhs: grad.shape().to_vec(),
            });
        }
        self.grads[id] = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// `(name, value)` pairs in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total scalar count over all tensors.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Registers every tensor as a gradient-carrying leaf, in store order.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.values.iter().map(|v| tape.param(v.clone())).collect()
    }

    /// Copies gradients of the registered leaves back into the store.
    /// Leaves that did not influence the loss get an all-zero gradient.
    pub fn collect_grads(&mut self, vars: &[Var], grads: &mut Gradients<T>) {
        for (id, &v) in vars.iter().enumerate() {
            let g = grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(self.values[id].shape().to_vec()));
            self.grads[id] = Some(g);
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            names: self.names.clone(),
            lookup: self.lookup.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            grads: self.grads.iter().map(|g| g.as_ref().map(Tensor::cast)).collect(),
        }
    }

    /// Sets every value to zero.
    pub fn zero_values(&mut self) {
        for v in &mut self.values {
            v.data_mut().iter_mut().for_each(|x| *x = T::ZERO);
        }
    }
}

use crate::error::{Error, Result};
use crate::float::Float;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Ordered, named trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Float> Default for Params<T> {
    fn default() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<T: Float> Params<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its index. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize) -> &Tensor<T> {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.tensors[i]
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replaces the value of parameter `i`, keeping its shape.
    pub fn set(&mut self, i: usize, value: Tensor<T>) -> Result<()> {
        if value.shape() != self.tensors[i].shape() {
            return Err(Error::CheckpointMismatch(format!(
                "{}: shape {:?}, expected {:?}",
                self.names[i],
                value.shape(),
                self.tensors[i].shape()
            )));
        }
        self.tensors[i] = value;
        Ok(())
    }

    /// Copies every parameter onto the graph as a leaf.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> Vec<Var> {
        self.tensors.iter().map(|t| g.leaf(t.clone(), requires_grad)).collect()
    }

    /// Gradients of bound parameters after a backward pass; parameters that
    /// did not influence the output get zeros.
    pub fn grads(&self, g: &mut Graph<T>, vars: &[Var]) -> Vec<Tensor<T>> {
        vars.iter()
            .zip(&self.tensors)
            .map(|(&v, t)| g.take_grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }
}

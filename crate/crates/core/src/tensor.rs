//! Dense tensors and the registry of learnable parameters.
//!
//! Image-like tensors are channel-major `[c, h, w]`; vectors are `[n]`,
//! matrices `[m, n]`, scalars `[1]`. Values are stored as `f32`; the
//! optional `grad` buffer always matches `data` in length.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Operand shapes are inconsistent; the message names the offending
    /// dimension.
    ShapeMismatch { op: &'static str, detail: String },
    /// Axis argument outside the tensor rank.
    InvalidAxis { op: &'static str, axis: usize, rank: usize },
    /// Spatial input too small for the requested window.
    InputTooSmall {
        op: &'static str,
        height: usize,
        width: usize,
        min: usize,
    },
    /// `backward` was called on a tensor that is not a scalar.
    NonScalarLoss { elements: usize },
    /// A parameter name was registered twice.
    DuplicateParam { name: String },
    /// Configuration rejected (bad kernel size, reduction ratio, ...).
    InvalidConfig { detail: String },
    /// Training diverged; names the iteration that produced the first
    /// non-finite loss.
    NonFiniteLoss { iteration: usize },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, detail } => {
                write!(f, "{op}: shape mismatch: {detail}")
            }
            TensorError::InvalidAxis { op, axis, rank } => {
                write!(f, "{op}: axis {axis} out of range for rank {rank}")
            }
            TensorError::InputTooSmall {
                op,
                height,
                width,
                min,
            } => write!(
                f,
                "{op}: input {height}x{width} is smaller than the {min}x{min} minimum"
            ),
            TensorError::NonScalarLoss { elements } => {
                write!(f, "backward: loss must be a scalar, got {elements} elements")
            }
            TensorError::DuplicateParam { name } => {
                write!(f, "parameter `{name}` registered twice")
            }
            TensorError::InvalidConfig { detail } => write!(f, "invalid config: {detail}"),
            TensorError::NonFiniteLoss { iteration } => {
                write!(f, "non-finite loss at iteration {iteration}; aborting")
            }
        }
    }
}

pub type Result<T> = core::result::Result<T, TensorError>;

/// N-dimensional array of `f32` with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, data.len(), "shape does not cover the data buffer");
        Self {
            shape,
            data,
            grad: None,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; numel],
            grad: None,
        }
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![value; numel],
            grad: None,
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self::new(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    /// Accumulate `delta` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f32]) {
        let len = self.data.len();
        assert_eq!(delta.len(), len);
        let grad = self.grad.get_or_insert_with(|| vec![0.0; len]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Ordered, uniquely named collection of learnable tensors.
///
/// Iteration order is insertion order, which fixes the serialization
/// layout, the optimizer state layout, and the seeded init stream.
#[derive(Debug, Clone, Default)]
pub struct ParamRegistry {
    entries: Vec<(String, Tensor)>,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(TensorError::DuplicateParam { name: name.into() });
        }
        self.entries.push((String::from(name), tensor));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor_at(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn tensor_at_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].1
    }

    /// Sum of element counts over all registered tensors.
    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_shape_covers_data() {
        let t = Tensor::new(vec![2, 3], vec![0.0; 6]);
        assert_eq!(t.numel(), 6);
        assert_eq!(t.shape(), &[2, 3]);
    }

    #[test]
    #[should_panic]
    fn tensor_rejects_short_buffer() {
        let _ = Tensor::new(vec![2, 3], vec![0.0; 5]);
    }

    #[test]
    fn grad_accumulates_across_calls() {
        let mut t = Tensor::zeros(vec![2]);
        t.accumulate_grad(&[1.0, 2.0]);
        t.accumulate_grad(&[0.5, 0.5]);
        assert_eq!(t.grad().unwrap(), &[1.5, 2.5]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn registry_rejects_duplicates_and_counts() {
        let mut reg = ParamRegistry::new();
        reg.register("w", Tensor::zeros(vec![2, 2])).unwrap();
        reg.register("b", Tensor::zeros(vec![2])).unwrap();
        assert_eq!(reg.param_count(), 6);
        let err = reg.register("w", Tensor::zeros(vec![1])).unwrap_err();
        assert!(matches!(err, TensorError::DuplicateParam { .. }));
        // order is insertion order
        let names: alloc::vec::Vec<&str> = reg.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["w", "b"]);
    }
}

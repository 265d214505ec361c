use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::error::{Result, TensorError};

struct TensorData {
    shape: Vec<usize>,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
    requires_grad: bool,
    /// Uid of the tape that produced this tensor (None for leaves/constants).
    tape_uid: Option<u64>,
}

/// Dense n-dimensional f32 array in row-major order, with an optional
/// gradient buffer. Cloning a `Tensor` clones the handle, not the storage;
/// an op recorded on a tape keeps its operands alive through such handles.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<TensorData>>,
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    /// Build a tensor from a flat buffer. Fails if the element count does not
    /// match the shape or if any value is non-finite.
    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        if shape.contains(&0) {
            return Err(TensorError::Dimension(format!(
                "zero-sized dimension in shape {shape:?}"
            )));
        }
        if numel_of(shape) != data.len() {
            return Err(TensorError::Dimension(format!(
                "shape {:?} implies {} elements, buffer has {}",
                shape,
                numel_of(shape),
                data.len()
            )));
        }
        ensure_finite(&data, "tensor construction")?;
        Ok(Self::from_parts(shape.to_vec(), data, false))
    }

    /// Trainable leaf: like [`Tensor::from_vec`] but with `requires_grad` set.
    pub fn param(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        let t = Tensor::from_vec(shape, data)?;
        t.inner.borrow_mut().requires_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Self::from_parts(shape.to_vec(), vec![0.0; numel_of(shape)], false)
    }

    pub fn full(shape: &[usize], value: f32) -> Tensor {
        Self::from_parts(shape.to_vec(), vec![value; numel_of(shape)], false)
    }

    pub fn scalar(value: f32) -> Tensor {
        Self::from_parts(vec![1], vec![value], false)
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f32>, requires_grad: bool) -> Tensor {
        Tensor {
            inner: Rc::new(RefCell::new(TensorData {
                shape,
                data,
                grad: None,
                requires_grad,
                tape_uid: None,
            })),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    /// Borrow the flat data buffer.
    pub fn data(&self) -> Ref<'_, [f32]> {
        Ref::map(self.inner.borrow(), |d| d.data.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.inner.borrow().data.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f32 {
        let d = self.inner.borrow();
        assert_eq!(d.data.len(), 1, "item() on tensor with {} elements", d.data.len());
        d.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Replace the contents in place (optimizer updates). The shape is fixed.
    pub fn set_data(&self, new: &[f32]) -> Result<()> {
        let mut d = self.inner.borrow_mut();
        if new.len() != d.data.len() {
            return Err(TensorError::Dimension(format!(
                "set_data: expected {} elements, got {}",
                d.data.len(),
                new.len()
            )));
        }
        d.data.copy_from_slice(new);
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<f32>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Upstream gradient of this tensor, or zeros if nothing accumulated yet.
    /// Op-author API: backward closures read the output gradient with this.
    pub fn grad_or_zeros(&self) -> Vec<f32> {
        let d = self.inner.borrow();
        match &d.grad {
            Some(g) => g.clone(),
            None => vec![0.0; d.data.len()],
        }
    }

    /// Add `delta` into the gradient buffer, allocating it on first use.
    /// Fan-out accumulates additively through repeated calls.
    pub fn accumulate_grad(&self, delta: &[f32]) {
        let mut d = self.inner.borrow_mut();
        assert_eq!(delta.len(), d.data.len(), "gradient length mismatch");
        match &mut d.grad {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => d.grad = Some(delta.to_vec()),
        }
    }

    /// Two handles referring to the same storage?
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// True for trainable leaves and for anything an op produced on a tape;
    /// false only for pure constants, whose gradients nobody will read.
    pub fn needs_grad(&self) -> bool {
        let d = self.inner.borrow();
        d.requires_grad || d.tape_uid.is_some()
    }

    pub(crate) fn set_tape_uid(&self, uid: u64) {
        self.inner.borrow_mut().tape_uid = Some(uid);
    }

    pub(crate) fn tape_uid(&self) -> Option<u64> {
        self.inner.borrow().tape_uid
    }

    pub(crate) fn seed_grad_ones(&self) {
        let mut d = self.inner.borrow_mut();
        let n = d.data.len();
        d.grad = Some(vec![1.0; n]);
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = self.inner.borrow();
        write!(
            f,
            "Tensor(shape={:?}, requires_grad={}, data[..{}]={:?})",
            d.shape,
            d.requires_grad,
            d.data.len().min(4),
            &d.data[..d.data.len().min(4)]
        )
    }
}

/// Reject NaN/Inf; every forward and backward buffer must stay finite.
pub fn ensure_finite(data: &[f32], context: &str) -> Result<()> {
    for &v in data {
        if !v.is_finite() {
            return Err(TensorError::Numeric(format!(
                "non-finite value {v} in {context}"
            )));
        }
    }
    Ok(())
}

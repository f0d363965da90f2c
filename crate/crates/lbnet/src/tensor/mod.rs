//! Minimal dense-tensor core.
//!
//! A `Tensor` is an immutable, contiguous, row-major `f64` buffer of rank 0
//! to 4 (interpreted as NCHW where four axes are present) behind an `Arc`.
//! Cloning a tensor clones the handle, not the data, so values can be shared
//! freely across threads once created. The only mutable piece is the
//! gradient accumulator on leaf tensors, guarded by a mutex; gradients
//! accumulate additively across backward passes until taken or zeroed.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

pub mod gradcheck;
pub mod ops;
pub mod tape;

pub use gradcheck::{check_gradients, check_gradients_sampled, check_gradients_with_step};
pub use tape::Tape;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

struct Storage {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
}

/// Shared handle to an immutable value, optionally carrying a gradient slot.
#[derive(Clone)]
pub struct Tensor(Arc<Storage>);

fn validate_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.len() > 4 {
        return Err(Error::dim("rank", format!("rank {} exceeds 4", shape.len())));
    }
    if shape.iter().any(|&e| e == 0) {
        return Err(Error::dim("extent", format!("zero extent in shape {shape:?}")));
    }
    let numel: usize = shape.iter().product();
    if numel != len {
        return Err(Error::dim(
            "numel",
            format!("shape {shape:?} implies {numel} elements, buffer holds {len}"),
        ));
    }
    Ok(())
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Result<Tensor> {
        validate_shape(&shape, data.len())?;
        Ok(Tensor(Arc::new(Storage {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
        })))
    }

    /// Plain value tensor (no gradient tracking).
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        Tensor::build(shape.to_vec(), data, false)
    }

    /// Leaf parameter: participates in gradient accumulation.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        Tensor::build(shape.to_vec(), data, true)
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape, vec![0.0; shape.iter().product()])
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Tensor> {
        Tensor::new(shape, vec![value; shape.iter().product()])
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::new(&[1], vec![value]).expect("scalar shape is valid")
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::build(shape, data, false).expect("internal op produced a valid shape")
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Row-major strides for the current shape.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.rank()];
        for i in (0..self.rank().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.0.shape[i + 1];
        }
        s
    }

    /// Element accessor for tests and small-scale inspection.
    pub fn at(&self, index: &[usize]) -> f64 {
        debug_assert_eq!(index.len(), self.rank());
        let strides = self.strides();
        let flat: usize = index.iter().zip(&strides).map(|(i, s)| i * s).sum();
        self.0.data[flat]
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().unwrap().clone()
    }

    /// Remove and return the accumulated gradient.
    pub fn take_grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().unwrap().take()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().unwrap() = None;
    }

    /// Add `delta` into the gradient accumulator (allocating it on first use).
    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.numel());
        let mut slot = self.0.grad.lock().unwrap();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Value copy with `requires_grad` set; used to promote inputs for checks.
    pub fn to_param(&self) -> Tensor {
        Tensor::param(self.shape(), self.data().to_vec()).expect("shape already valid")
    }

    /// Value copy without gradient tracking.
    pub fn detach(&self) -> Tensor {
        Tensor::from_parts(self.shape().to_vec(), self.data().to_vec())
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, requires_grad={})",
            self.0.id, self.0.shape, self.0.requires_grad
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_strides() {
        let t = Tensor::zeros(&[2, 3, 4, 5]).unwrap();
        assert_eq!(t.numel(), 120);
        assert_eq!(t.strides(), vec![60, 20, 5, 1]);
    }

    #[test]
    fn rejects_rank_5() {
        assert!(Tensor::zeros(&[1, 1, 1, 1, 1]).is_err());
    }

    #[test]
    fn rejects_zero_extent() {
        assert!(Tensor::zeros(&[2, 0, 3]).is_err());
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(Tensor::new(&[2, 2], vec![1.0; 5]).is_err());
    }

    #[test]
    fn grad_accumulates_additively() {
        let t = Tensor::param(&[3], vec![0.0; 3]).unwrap();
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        assert_eq!(t.grad().unwrap(), vec![2.0, 4.0, 6.0]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn clone_shares_storage() {
        let t = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let u = t.clone();
        u.accumulate_grad(&[5.0, 5.0]);
        assert_eq!(t.grad().unwrap(), vec![5.0, 5.0]);
        assert_eq!(t.id(), u.id());
    }

    #[test]
    fn tensors_are_shareable_across_threads() {
        let t = Tensor::new(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let t = t.clone();
                std::thread::spawn(move || t.data().iter().sum::<f64>())
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), 10.0);
        }
    }
}

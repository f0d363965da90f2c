//! Wengert tape for reverse-mode differentiation.
//!
//! Ops executed under a tape record one node each: the output id plus a
//! closure that maps the output gradient to per-input gradient contributions.
//! `backward` seeds the scalar loss with 1.0, replays the nodes in reverse
//! (each visited exactly once), routes contributions either to intermediate
//! buffers or to leaf accumulators, and finally clears the tape. Leaf values
//! survive clearing; only the recorded graph is dropped.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};

use super::Tensor;
use crate::error::{Error, Result};

/// Gradient contributions produced by one node: `(input, d_loss/d_input)`.
type Vjp = Box<dyn Fn(&[f64]) -> Vec<(Tensor, Vec<f64>)>>;

struct Node {
    out_id: u64,
    vjp: Vjp,
}

/// Explicit gradient tape. Single-threaded by design: forward and backward
/// over one tape happen on one thread, while tensors themselves stay
/// shareable.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    produced: RefCell<HashSet<u64>>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    /// Number of recorded operations.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when `t` is a leaf requiring grad or was produced on this tape.
    pub(crate) fn tracks(&self, t: &Tensor) -> bool {
        t.requires_grad() || self.produced.borrow().contains(&t.id())
    }

    /// Record one executed op. Call only when some input is tracked.
    pub(crate) fn record(&self, out: &Tensor, vjp: Vjp) {
        self.produced.borrow_mut().insert(out.id());
        self.nodes.borrow_mut().push(Node { out_id: out.id(), vjp });
    }

    /// Reverse sweep from a scalar loss. Populates `grad` on every
    /// `requires_grad` leaf reachable from `loss`, then clears the tape.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }

        let nodes = std::mem::take(&mut *self.nodes.borrow_mut());
        let produced = std::mem::take(&mut *self.produced.borrow_mut());

        let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
        grads.insert(loss.id(), vec![1.0]);
        if loss.requires_grad() && !produced.contains(&loss.id()) {
            loss.accumulate_grad(&[1.0]);
        }

        for node in nodes.iter().rev() {
            let gout = match grads.remove(&node.out_id) {
                Some(g) => g,
                None => continue, // not on a path to the loss
            };
            for (input, delta) in (node.vjp)(&gout) {
                if produced.contains(&input.id()) {
                    match grads.entry(input.id()) {
                        std::collections::hash_map::Entry::Occupied(mut e) => {
                            for (gi, di) in e.get_mut().iter_mut().zip(&delta) {
                                *gi += di;
                            }
                        }
                        std::collections::hash_map::Entry::Vacant(e) => {
                            e.insert(delta);
                        }
                    }
                } else if input.requires_grad() {
                    input.accumulate_grad(&delta);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops;

    #[test]
    fn sum_backward_gives_ones() {
        let tape = Tape::new();
        let x = Tensor::param(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let s = ops::sum_all(Some(&tape), &x).unwrap();
        tape.backward(&s).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn product_backward_matches_closed_form() {
        // d/dx sum(x * x) = 2x
        let tape = Tape::new();
        let x = Tensor::param(&[4], vec![1.0, 2.0, -3.0, 0.25]).unwrap();
        let y = ops::mul(Some(&tape), &x, &x).unwrap();
        let s = ops::sum_all(Some(&tape), &y).unwrap();
        tape.backward(&s).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0, -6.0, 0.5]);
    }

    #[test]
    fn two_backward_passes_double_leaf_grad() {
        let x = Tensor::param(&[2], vec![3.0, 4.0]).unwrap();
        for _ in 0..2 {
            let tape = Tape::new();
            let s = ops::sum_all(Some(&tape), &x).unwrap();
            tape.backward(&s).unwrap();
        }
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn backward_clears_tape_but_not_leaves() {
        let tape = Tape::new();
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let s = ops::sum_all(Some(&tape), &x).unwrap();
        assert_eq!(tape.len(), 1);
        tape.backward(&s).unwrap();
        assert!(tape.is_empty());
        assert_eq!(x.data(), &[1.0, 2.0]);
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_is_a_usage_error() {
        let tape = Tape::new();
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = ops::relu(Some(&tape), &x).unwrap();
        let err = tape.backward(&y).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn untracked_ops_record_nothing() {
        let tape = Tape::new();
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap(); // no requires_grad
        let _ = ops::relu(Some(&tape), &x).unwrap();
        assert!(tape.is_empty());
    }

    #[test]
    fn diamond_reuse_accumulates_through_intermediates() {
        // y = x*x; s = sum(y + y)  =>  ds/dx = 4x
        let tape = Tape::new();
        let x = Tensor::param(&[3], vec![1.0, -1.0, 2.0]).unwrap();
        let y = ops::mul(Some(&tape), &x, &x).unwrap();
        let z = ops::add(Some(&tape), &y, &y).unwrap();
        let s = ops::sum_all(Some(&tape), &z).unwrap();
        tape.backward(&s).unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0, -4.0, 8.0]);
    }
}

//! Mean absolute error over all elements.

use crate::error::Result;
use crate::tensor::{ops, Tape, Tensor};

pub fn l1_loss(tape: Option<&Tape>, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    let diff = ops::sub(tape, pred, target)?;
    ops::mean_all(tape, &ops::abs(tape, &diff)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check_gradients;

    #[test]
    fn matches_hand_computed_mean() {
        let a = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[1, 1, 2, 2], vec![2.0, 2.0, 1.0, 8.0]).unwrap();
        let l = l1_loss(None, &a, &b).unwrap();
        assert_eq!(l.data(), &[(1.0 + 0.0 + 2.0 + 4.0) / 4.0]);
    }

    #[test]
    fn zero_at_identity_and_symmetric() {
        let a = Tensor::new(&[2, 3], vec![0.3, -0.7, 1.5, 0.0, 2.0, -4.0]).unwrap();
        let b = Tensor::new(&[2, 3], vec![1.3, 0.7, -1.5, 3.0, 0.5, -4.5]).unwrap();
        assert_eq!(l1_loss(None, &a, &a).unwrap().data(), &[0.0]);
        assert_eq!(
            l1_loss(None, &a, &b).unwrap().data(),
            l1_loss(None, &b, &a).unwrap().data()
        );
    }

    #[test]
    fn gradient_is_signed_mean_weight() {
        // keep every difference well away from zero so |x| is smooth
        let a = Tensor::new(&[1, 4], vec![2.0, -3.0, 5.0, -1.0]).unwrap();
        let b = Tensor::new(&[1, 4], vec![-1.0, 2.0, 1.0, 4.0]).unwrap();
        let worst = check_gradients(&[a, b], |t, xs| l1_loss(t, &xs[0], &xs[1])).unwrap();
        assert!(worst < 1e-6, "worst rel err {worst}");
    }
}

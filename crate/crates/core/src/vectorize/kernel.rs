//! Negative-sampling loss for one (hidden, output-row) pair.
//!
//! For score `s = h·o` the loss is `softplus(-s)` for the true target and
//! `softplus(s)` for a noise sample, i.e. `-log σ(s)` and `-log σ(-s)`.
//! Generic over float width so the finite-difference check runs the exact code
//! used for training, in f64.

use num_traits::Float;

use crate::linalg::dot;

#[inline]
pub fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<F: Float>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

/// Loss and `dL/ds` for one pair.
#[inline]
pub fn pair_loss<F: Float>(h: &[F], o: &[F], positive: bool) -> (F, F) {
    let s = dot(h, o);
    if positive {
        (softplus(-s), sigmoid(s) - F::one())
    } else {
        (softplus(s), sigmoid(s))
    }
}

/// Adds `g·o` to `grad_h` (before `o` moves), then steps `o` by `-lr·g·h`.
#[inline]
pub fn backprop_pair<F: Float>(h: &[F], o: &mut [F], g: F, lr: F, grad_h: &mut [F]) {
    let step = lr * g;
    for i in 0..h.len() {
        grad_h[i] = grad_h[i] + g * o[i];
        o[i] = o[i] - step * h[i];
    }
}

/// Mutable access to output rows by index.
pub trait Rows<F> {
    fn row_mut(&mut self, i: usize) -> &mut [F];
}

impl<F> Rows<F> for Vec<Vec<F>> {
    fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self[i]
    }
}

/// One training example: `examples[0]` is the true target, the rest are noise
/// samples (`(row, positive)`). Rows are visited one at a time, so a row drawn
/// twice is simply updated twice. Returns the summed loss; `grad_h` receives
/// `dL/dh` and output rows are stepped in place.
pub fn ns_example<F: Float, R: Rows<F>>(h: &[F], examples: &[(usize, bool)], rows: &mut R, lr: F, grad_h: &mut [F]) -> F {
    let mut loss = F::zero();
    for &(r, positive) in examples {
        let o = rows.row_mut(r);
        let (l, g) = pair_loss(h, o, positive);
        loss = loss + l;
        backprop_pair(h, o, g, lr, grad_h);
    }
    loss
}

/// Like [`ns_example`] with output rows frozen: only `grad_h` is produced.
pub fn ns_example_frozen<F: Float>(h: &[F], examples: &[(usize, bool)], rows: &[F], dim: usize, grad_h: &mut [F]) -> F {
    let mut loss = F::zero();
    for &(r, positive) in examples {
        let o = &rows[r * dim..(r + 1) * dim];
        let (l, g) = pair_loss(h, o, positive);
        loss = loss + l;
        for i in 0..dim {
            grad_h[i] = grad_h[i] + g * o[i];
        }
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
        assert!(softplus(-1000.0f64) < 1e-300);
    }

    #[test]
    fn positive_pair_loss_falls_with_score() {
        let h = [1.0f64, 0.0];
        let (l_lo, _) = pair_loss(&h, &[0.1, 0.0], true);
        let (l_hi, _) = pair_loss(&h, &[3.0, 0.0], true);
        assert!(l_hi < l_lo);
    }
}

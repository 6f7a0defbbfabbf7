use crate::autodiff::{Backend, Eval, Tape, Tensor};
use crate::error::Result;

/// A scalar-valued function that can run on any backend.
pub trait ScalarFn {
    fn eval<B: Backend>(&self, b: &mut B, x: &B::T) -> Result<B::T>;
}

/// Reverse-mode gradient of `f` at `x`.
pub fn analytic_gradient<F: ScalarFn>(f: &F, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.param(x);
    let y = f.eval(&mut tape, &xv)?;
    Ok(tape.backward(y)?.get(xv))
}

/// Central differences of `f` at `x`.
pub fn numeric_gradient<F: ScalarFn>(f: &F, x: &Tensor, step: f64) -> Result<Tensor> {
    let mut g = Tensor::zeros(x.shape().to_vec());
    let mut probe = x.clone();
    for k in 0..x.numel() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + step;
        let hi = f.eval(&mut Eval, &probe)?.item();
        probe.data_mut()[k] = orig - step;
        let lo = f.eval(&mut Eval, &probe)?.item();
        probe.data_mut()[k] = orig;
        g.data_mut()[k] = (hi - lo) / (2.0 * step);
    }
    Ok(g)
}

/// Component-wise maximum of `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Max relative error between backward() and central differences.
pub fn grad_check<F: ScalarFn>(f: &F, x: &Tensor, fd_step: f64) -> Result<f64> {
    let a = analytic_gradient(f, x)?;
    let n = numeric_gradient(f, x, fd_step)?;
    Ok(relative_error(a.data(), n.data()))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct SumAll;
    impl ScalarFn for SumAll {
        fn eval<B: Backend>(&self, b: &mut B, x: &B::T) -> Result<B::T> {
            Ok(b.sum(x))
        }
    }

    #[test]
    fn sum_has_exact_gradient() {
        let x = Tensor::vector(vec![0.3, -1.2, 4.0]);
        assert!(grad_check(&SumAll, &x, 1e-5).unwrap() < 1e-10);
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let x = Tensor::vector(vec![0.3, -1.2, 4.0]);
        let a = analytic_gradient(&SumAll, &x).unwrap();
        let doubled: Vec<f64> = a.data().iter().map(|v| 2.0 * v).collect();
        let n = numeric_gradient(&SumAll, &x, 1e-5).unwrap();
        assert!((relative_error(&doubled, n.data()) - 0.5).abs() < 1e-6);
    }
}

use alloc::vec::Vec;

use super::{AutodiffError, ParamStore, Tape, Var};

/// Denominator floor of the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-3;

fn sample(len: usize, per_tensor: usize) -> Vec<usize> {
    if len <= per_tensor {
        (0..len).collect()
    } else {
        (0..per_tensor).map(|i| i * len / per_tensor).collect()
    }
}

/// Largest relative error between tape gradients and central differences
/// `(f(θ+εe) − f(θ−εe)) / 2ε`, over up to `per_tensor` evenly spaced
/// coordinates of every parameter. Relative error is
/// `|a − n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn grad_check<F>(f: F, params: &ParamStore, eps: f64, per_tensor: usize) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape<'_>) -> Result<Var, AutodiffError>,
{
    let eval = |p: &ParamStore| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new(p);
        let loss = f(&mut tape)?;
        let t = tape.value(loss);
        if t.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(t.shape().to_vec()));
        }
        Ok(t.item())
    };
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };
    let mut work = params.clone();
    let mut worst: f64 = 0.0;
    for id in params.ids() {
        for i in sample(params.get(id).len(), per_tensor) {
            let orig = params.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + eps;
            let up = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig - eps;
            let down = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.get(id).data()[i];
            let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

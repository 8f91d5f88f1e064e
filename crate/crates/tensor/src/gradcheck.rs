//! Central finite-difference gradient checking.
//!
//! Only forward evaluations are used here, so the check is independent of the
//! tape's backward rules.

use crate::tensor::Tensor;

/// Per-tensor outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, floor)`.
    pub rel_err: f64,
    pub max_abs_err: f64,
}

/// Numeric gradient of `f` with respect to `x` by central differences.
pub fn numeric_gradient(x: &Tensor<f64>, step: f64, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + step;
        let hi = f(&probe);
        probe.data_mut()[i] = orig - step;
        let lo = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((hi - lo) / (2.0 * step));
    }
    Tensor::from_vec(x.shape(), out).expect("same shape as input")
}

/// Compares an analytic gradient against its numeric counterpart.
pub fn compare(name: &str, analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> GradCheck {
    compare_with_floor(name, analytic, numeric, 1e-8)
}

/// [`compare`] with an explicit lower bound on the normalizer. Gradients
/// that vanish identically (a key bias under softmax, say) leave only
/// roundoff on both sides; a floor above the finite-difference noise level
/// turns their check into an absolute one.
pub fn compare_with_floor(name: &str, analytic: &Tensor<f64>, numeric: &Tensor<f64>, floor: f64) -> GradCheck {
    let mut diff2 = 0.0;
    let mut a2 = 0.0;
    let mut n2 = 0.0;
    let mut max_abs: f64 = 0.0;
    for (&a, &n) in analytic.data().iter().zip(numeric.data()) {
        diff2 += (a - n) * (a - n);
        a2 += a * a;
        n2 += n * n;
        max_abs = max_abs.max((a - n).abs());
    }
    let denom = a2.sqrt().max(n2.sqrt()).max(floor);
    GradCheck {
        name: name.to_string(),
        rel_err: diff2.sqrt() / denom,
        max_abs_err: max_abs,
    }
}

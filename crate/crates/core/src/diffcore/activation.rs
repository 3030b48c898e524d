use super::tensor::{Real, Tensor};
use crate::error::{dim_err, PaadError, Result};

fn reject_nan<F: Real>(x: &Tensor<F>, op: &str) -> Result<()> {
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(PaadError::Numeric(format!("{op}: NaN input")));
    }
    Ok(())
}

pub fn relu<F: Real>(x: &Tensor<F>) -> Result<Tensor<F>> {
    reject_nan(x, "relu")?;
    Ok(x.map(|v| if v > F::zero() { v } else { F::zero() }))
}

/// Gradient of relu given its forward output.
pub fn relu_backward<F: Real>(output: &Tensor<F>, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
    grad_out.expect_shape(output.shape(), "relu grad")?;
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > F::zero() { g } else { F::zero() })
        .collect();
    Tensor::from_vec(output.shape(), data)
}

fn sigmoid_scalar<F: Real>(v: F) -> F {
    // Branch keeps exp() from overflowing for large |v|.
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

pub fn sigmoid<F: Real>(x: &Tensor<F>) -> Result<Tensor<F>> {
    reject_nan(x, "sigmoid")?;
    Ok(x.map(sigmoid_scalar))
}

/// Gradient of sigmoid given its forward output.
pub fn sigmoid_backward<F: Real>(output: &Tensor<F>, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
    grad_out.expect_shape(output.shape(), "sigmoid grad")?;
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * y * (F::one() - y))
        .collect();
    Tensor::from_vec(output.shape(), data)
}

/// (outer, len, inner) strides for walking `axis` of `shape`.
fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return dim_err(format!("softmax axis {axis} out of range for {shape:?}"));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Max-shifted softmax along `axis`.
pub fn softmax<F: Real>(x: &Tensor<F>, axis: usize) -> Result<Tensor<F>> {
    reject_nan(x, "softmax")?;
    let (outer, len, inner) = axis_layout(x.shape(), axis)?;
    let src = x.data();
    let mut out = vec![F::zero(); src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let max = (0..len)
                .map(|k| src[idx(k)])
                .fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            for k in 0..len {
                let e = (src[idx(k)] - max).exp();
                out[idx(k)] = e;
                sum += e;
            }
            for k in 0..len {
                out[idx(k)] = out[idx(k)] / sum;
            }
        }
    }
    Tensor::from_vec(x.shape(), out)
}

/// Gradient of softmax given its forward output: `y ⊙ (g − Σ y·g)`.
pub fn softmax_backward<F: Real>(
    output: &Tensor<F>,
    grad_out: &Tensor<F>,
    axis: usize,
) -> Result<Tensor<F>> {
    grad_out.expect_shape(output.shape(), "softmax grad")?;
    let (outer, len, inner) = axis_layout(output.shape(), axis)?;
    let (y, g) = (output.data(), grad_out.data());
    let mut out = vec![F::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let dot: F = (0..len).map(|k| y[idx(k)] * g[idx(k)]).sum();
            for k in 0..len {
                out[idx(k)] = y[idx(k)] * (g[idx(k)] - dot);
            }
        }
    }
    Tensor::from_vec(output.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_of_zero_is_half() {
        let y = sigmoid(&Tensor::scalar(0.0f32)).unwrap();
        assert_eq!(y.data()[0], 0.5);
    }

    #[test]
    fn sigmoid_stays_open_interval_for_moderate_inputs() {
        let x = Tensor::from_vec(&[4], vec![-15.0f64, -3.0, 3.0, 15.0]).unwrap();
        for &v in sigmoid(&x).unwrap().data() {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn softmax_of_constant_row_is_uniform() {
        for c in [-50.0f32, 0.0, 3.5, 1e3] {
            let y = softmax(&Tensor::full(&[1, 3], c), 1).unwrap();
            for &v in y.data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_on_any_axis() {
        let x = Tensor::from_vec(&[2, 3, 2], (0..12).map(|v| v as f32 * 0.7 - 3.0).collect())
            .unwrap();
        for axis in 0..3 {
            let y = softmax(&x, axis).unwrap();
            let (outer, len, inner) = axis_layout(x.shape(), axis).unwrap();
            for o in 0..outer {
                for i in 0..inner {
                    let s: f32 = (0..len).map(|k| y.data()[(o * len + k) * inner + i]).sum();
                    assert!((s - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn relu_definition() {
        let y = relu(&Tensor::from_vec(&[2], vec![-2.5f32, 3.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.0, 3.0]);
    }

    #[test]
    fn nan_input_is_numeric_error() {
        let x = Tensor::from_vec(&[2], vec![f32::NAN, 1.0]).unwrap();
        assert!(matches!(relu(&x), Err(PaadError::Numeric(_))));
        assert!(matches!(sigmoid(&x), Err(PaadError::Numeric(_))));
        assert!(matches!(softmax(&x, 0), Err(PaadError::Numeric(_))));
    }
}

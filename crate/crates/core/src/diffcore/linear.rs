use rand::Rng;

use super::params::{ParamId, ParamSet};
use super::tensor::{Real, Tensor};
use crate::error::{dim_err, Result};

fn check_linear_shapes<F: Real>(input: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<()> {
    if input.rank() != 2 || w.rank() != 2 || b.rank() != 1 {
        return dim_err(format!(
            "linear expects [B,I]x[I,O]+[O], got input {:?}, weights {:?}, bias {:?}",
            input.shape(),
            w.shape(),
            b.shape()
        ));
    }
    if input.dim(1) != w.dim(0) || w.dim(1) != b.dim(0) {
        return dim_err(format!(
            "linear shape mismatch: input {:?} vs weights {:?} (bias {:?})",
            input.shape(),
            w.shape(),
            b.shape()
        ));
    }
    Ok(())
}

/// `output[b,o] = Σ_i input[b,i]·w[i,o] + bias[o]`.
pub fn linear<F: Real>(input: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    check_linear_shapes(input, w, b)?;
    let (batch, inputs) = (input.dim(0), input.dim(1));
    let outputs = w.dim(1);
    let wd = w.data();
    let mut out = Vec::with_capacity(batch * outputs);
    for r in 0..batch {
        let mut row = b.data().to_vec();
        for (i, &x) in input.row(r).iter().enumerate().take(inputs) {
            if x == F::zero() {
                continue;
            }
            let wrow = &wd[i * outputs..(i + 1) * outputs];
            for (acc, &wv) in row.iter_mut().zip(wrow) {
                *acc += x * wv;
            }
        }
        out.extend(row);
    }
    Tensor::from_vec(&[batch, outputs], out)
}

/// Accumulates weight and bias gradients; returns the input gradient when requested.
pub fn linear_backward_into<F: Real>(
    input: &Tensor<F>,
    w: &Tensor<F>,
    grad_out: &Tensor<F>,
    grad_w: &mut Tensor<F>,
    grad_b: &mut Tensor<F>,
    want_input_grad: bool,
) -> Result<Option<Tensor<F>>> {
    let (batch, inputs) = (input.dim(0), input.dim(1));
    let outputs = w.dim(1);
    grad_out.expect_shape(&[batch, outputs], "linear grad_out")?;
    grad_w.expect_shape(w.shape(), "linear grad_w")?;
    let gw = grad_w.data_mut();
    for r in 0..batch {
        let g = grad_out.row(r);
        for (i, &x) in input.row(r).iter().enumerate() {
            if x == F::zero() {
                continue;
            }
            let gw_row = &mut gw[i * outputs..(i + 1) * outputs];
            for (acc, &gv) in gw_row.iter_mut().zip(g) {
                *acc += x * gv;
            }
        }
    }
    let gb = grad_b.data_mut();
    for r in 0..batch {
        for (acc, &gv) in gb.iter_mut().zip(grad_out.row(r)) {
            *acc += gv;
        }
    }
    if !want_input_grad {
        return Ok(None);
    }
    let wd = w.data();
    let mut gin = Vec::with_capacity(batch * inputs);
    for r in 0..batch {
        let g = grad_out.row(r);
        for i in 0..inputs {
            let wrow = &wd[i * outputs..(i + 1) * outputs];
            gin.push(wrow.iter().zip(g).map(|(&a, &b)| a * b).sum());
        }
    }
    Ok(Some(Tensor::from_vec(&[batch, inputs], gin)?))
}

/// Gradients of [`linear`] for all three arguments.
pub struct LinearGrads<F: Real> {
    pub input: Tensor<F>,
    pub weights: Tensor<F>,
    pub bias: Tensor<F>,
}

pub fn linear_backward<F: Real>(
    input: &Tensor<F>,
    w: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> Result<LinearGrads<F>> {
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(&[w.dim(1)]);
    let gi = linear_backward_into(input, w, grad_out, &mut gw, &mut gb, true)?
        .expect("input gradient requested");
    Ok(LinearGrads {
        input: gi,
        weights: gw,
        bias: gb,
    })
}

/// Uniform fan-in initialization: `U(-sqrt(3/fan_in), sqrt(3/fan_in))`.
pub fn fan_in_uniform<F: Real, R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor<F> {
    let bound = (3.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| F::c(rng.random_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

/// Fully connected layer bound to parameters in a [`ParamSet`].
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weights: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<F: Real, R: Rng>(
        ps: &mut ParamSet<F>,
        rng: &mut R,
        name: &str,
        inputs: usize,
        outputs: usize,
    ) -> Linear {
        let weights = ps.add(
            format!("{name}.weight"),
            fan_in_uniform(rng, &[inputs, outputs], inputs),
        );
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[outputs]));
        Linear {
            weights,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn forward<F: Real>(&self, ps: &ParamSet<F>, input: &Tensor<F>) -> Result<Tensor<F>> {
        linear(input, ps.value(self.weights), ps.value(self.bias))
    }

    pub fn backward<F: Real>(
        &self,
        ps: &mut ParamSet<F>,
        input: &Tensor<F>,
        grad_out: &Tensor<F>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor<F>>> {
        let mut gw = ps.take_grad(self.weights);
        let mut gb = ps.take_grad(self.bias);
        let res = linear_backward_into(
            input,
            ps.value(self.weights),
            grad_out,
            &mut gw,
            &mut gb,
            want_input_grad,
        );
        ps.put_grad(self.weights, gw);
        ps.put_grad(self.bias, gb);
        res
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let x = Tensor::from_vec(&[1, 2], vec![1.0f32, 2.0]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[2]);
        assert_eq!(linear(&x, &w, &b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_input_yields_bias() {
        let x = Tensor::zeros(&[1, 2]);
        let w = Tensor::from_vec(&[2, 2], vec![0.3f32, -4.0, 7.0, 1.5]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0, -1.0]).unwrap();
        assert_eq!(linear(&x, &w, &b).unwrap().data(), &[3.0, -1.0]);
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let x = Tensor::<f32>::zeros(&[1, 3]);
        let w = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[2]);
        let msg = linear(&x, &w, &b).unwrap_err().to_string();
        assert!(msg.contains("[1, 3]") && msg.contains("[2, 2]"), "{msg}");
    }
}

use rand::Rng;

use super::linear::fan_in_uniform;
use super::params::{ParamId, ParamSet};
use super::tensor::{Real, Tensor};
use crate::error::{dim_err, Result};

pub const KERNEL: usize = 3;
pub const PADDING: usize = 1;

/// Spatial output size of a 3x3, zero-padded convolution followed by an
/// optional 2x2 max pool. `None` when the input cannot produce any output.
pub fn block_output_hw(h: usize, w: usize, stride: usize, pool: bool) -> Option<(usize, usize)> {
    if h + 2 * PADDING < KERNEL || w + 2 * PADDING < KERNEL || stride == 0 {
        return None;
    }
    let ho = (h + 2 * PADDING - KERNEL) / stride + 1;
    let wo = (w + 2 * PADDING - KERNEL) / stride + 1;
    let (ho, wo) = if pool { (ho / 2, wo / 2) } else { (ho, wo) };
    (ho > 0 && wo > 0).then_some((ho, wo))
}

/// Saved forward state of one conv block.
#[derive(Clone, Debug)]
pub struct ConvCache<F: Real> {
    input: Tensor<F>,
    activated: Tensor<F>,
    argmax: Option<Vec<u32>>,
    stride: usize,
}

/// conv(3x3, stride, zero padding 1) + bias → ReLU → optional 2x2 max pool.
pub fn conv2d_block<F: Real>(
    input: &Tensor<F>,
    filters: &Tensor<F>,
    bias: &Tensor<F>,
    stride: usize,
    pool: bool,
) -> Result<(Tensor<F>, ConvCache<F>)> {
    if input.rank() != 4 || filters.rank() != 4 {
        return dim_err(format!(
            "conv expects input [B,C,H,W] and filters [F,C,3,3], got {:?} and {:?}",
            input.shape(),
            filters.shape()
        ));
    }
    let (batch, channels, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let out_ch = filters.dim(0);
    if filters.shape() != [out_ch, channels, KERNEL, KERNEL] || bias.shape() != [out_ch] {
        return dim_err(format!(
            "conv filters {:?} / bias {:?} do not fit input {:?}",
            filters.shape(),
            bias.shape(),
            input.shape()
        ));
    }
    let Some((out_h, out_w)) = block_output_hw(h, w, stride, pool) else {
        return dim_err(format!(
            "conv input {:?} is smaller than the 3x3 kernel window (stride {stride}, pool {pool})",
            input.shape()
        ));
    };
    let ho = (h + 2 * PADDING - KERNEL) / stride + 1;
    let wo = (w + 2 * PADDING - KERNEL) / stride + 1;

    let src = input.data();
    let wts = filters.data();
    let mut act = vec![F::zero(); batch * out_ch * ho * wo];
    for b in 0..batch {
        for f in 0..out_ch {
            let plane = &mut act[(b * out_ch + f) * ho * wo..(b * out_ch + f + 1) * ho * wo];
            plane.iter_mut().for_each(|v| *v = bias.data()[f]);
            for c in 0..channels {
                let img = &src[(b * channels + c) * h * w..(b * channels + c + 1) * h * w];
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let wv = wts[((f * channels + c) * KERNEL + ky) * KERNEL + kx];
                        for oy in 0..ho {
                            let iy = (oy * stride + ky) as isize - PADDING as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let irow = &img[iy as usize * w..(iy as usize + 1) * w];
                            let orow = &mut plane[oy * wo..(oy + 1) * wo];
                            for (ox, o) in orow.iter_mut().enumerate() {
                                let ix = (ox * stride + kx) as isize - PADDING as isize;
                                if ix >= 0 && ix < w as isize {
                                    *o += wv * irow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
            plane.iter_mut().for_each(|v| {
                if *v < F::zero() {
                    *v = F::zero()
                }
            });
        }
    }
    let activated = Tensor::from_vec(&[batch, out_ch, ho, wo], act)?;

    if !pool {
        let cache = ConvCache {
            input: input.clone(),
            activated: activated.clone(),
            argmax: None,
            stride,
        };
        return Ok((activated, cache));
    }

    let a = activated.data();
    let mut out = Vec::with_capacity(batch * out_ch * out_h * out_w);
    let mut argmax = Vec::with_capacity(batch * out_ch * out_h * out_w);
    for p in 0..batch * out_ch {
        let plane = &a[p * ho * wo..(p + 1) * ho * wo];
        for py in 0..out_h {
            for px in 0..out_w {
                let mut best = 2 * py * wo + 2 * px;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (2 * py + dy) * wo + 2 * px + dx;
                    if plane[idx] > plane[best] {
                        best = idx;
                    }
                }
                out.push(plane[best]);
                argmax.push(best as u32);
            }
        }
    }
    let output = Tensor::from_vec(&[batch, out_ch, out_h, out_w], out)?;
    let cache = ConvCache {
        input: input.clone(),
        activated,
        argmax: Some(argmax),
        stride,
    };
    Ok((output, cache))
}

/// Accumulates filter and bias gradients; returns the input gradient when requested.
pub fn conv2d_block_backward_into<F: Real>(
    cache: &ConvCache<F>,
    filters: &Tensor<F>,
    grad_out: &Tensor<F>,
    grad_filters: &mut Tensor<F>,
    grad_bias: &mut Tensor<F>,
    want_input_grad: bool,
) -> Result<Option<Tensor<F>>> {
    let input = &cache.input;
    let (batch, channels, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let act_shape = cache.activated.shape();
    let (out_ch, ho, wo) = (act_shape[1], act_shape[2], act_shape[3]);
    let stride = cache.stride;
    grad_filters.expect_shape(filters.shape(), "conv grad_filters")?;

    // Gradient w.r.t. the pre-activation (through pool and ReLU).
    let mut g_pre = vec![F::zero(); batch * out_ch * ho * wo];
    match &cache.argmax {
        Some(argmax) => {
            let (ph, pw) = (ho / 2, wo / 2);
            grad_out.expect_shape(&[batch, out_ch, ph, pw], "conv grad_out")?;
            for p in 0..batch * out_ch {
                for k in 0..ph * pw {
                    let idx = argmax[p * ph * pw + k] as usize;
                    g_pre[p * ho * wo + idx] += grad_out.data()[p * ph * pw + k];
                }
            }
        }
        None => {
            grad_out.expect_shape(act_shape, "conv grad_out")?;
            g_pre.copy_from_slice(grad_out.data());
        }
    }
    for (g, &a) in g_pre.iter_mut().zip(cache.activated.data()) {
        if a <= F::zero() {
            *g = F::zero();
        }
    }

    let src = input.data();
    let wts = filters.data();
    let gf = grad_filters.data_mut();
    let gb = grad_bias.data_mut();
    let mut g_in = if want_input_grad {
        vec![F::zero(); src.len()]
    } else {
        Vec::new()
    };
    for b in 0..batch {
        for f in 0..out_ch {
            let gplane = &g_pre[(b * out_ch + f) * ho * wo..(b * out_ch + f + 1) * ho * wo];
            if gplane.iter().all(|&g| g == F::zero()) {
                continue;
            }
            gb[f] += gplane.iter().copied().sum();
            for c in 0..channels {
                let base = (b * channels + c) * h * w;
                let img = &src[base..base + h * w];
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let widx = ((f * channels + c) * KERNEL + ky) * KERNEL + kx;
                        let wv = wts[widx];
                        let mut acc = F::zero();
                        for oy in 0..ho {
                            let iy = (oy * stride + ky) as isize - PADDING as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let iy = iy as usize;
                            for ox in 0..wo {
                                let ix = (ox * stride + kx) as isize - PADDING as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let g = gplane[oy * wo + ox];
                                acc += g * img[iy * w + ix as usize];
                                if want_input_grad {
                                    g_in[base + iy * w + ix as usize] += g * wv;
                                }
                            }
                        }
                        gf[widx] += acc;
                    }
                }
            }
        }
    }
    if want_input_grad {
        Ok(Some(Tensor::from_vec(input.shape(), g_in)?))
    } else {
        Ok(None)
    }
}

/// Gradients of [`conv2d_block`] with respect to input, filters and bias.
pub fn conv2d_block_backward<F: Real>(
    cache: &ConvCache<F>,
    filters: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let mut gf = Tensor::zeros(filters.shape());
    let mut gb = Tensor::zeros(&[filters.dim(0)]);
    let gi = conv2d_block_backward_into(cache, filters, grad_out, &mut gf, &mut gb, true)?
        .expect("input gradient requested");
    Ok((gi, gf, gb))
}

/// Conv block bound to parameters in a [`ParamSet`].
#[derive(Clone, Copy, Debug)]
pub struct ConvBlock {
    pub filters: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pool: bool,
}

impl ConvBlock {
    pub fn new<F: Real, R: Rng>(
        ps: &mut ParamSet<F>,
        rng: &mut R,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        pool: bool,
    ) -> ConvBlock {
        let fan_in = in_channels * KERNEL * KERNEL;
        let filters = ps.add(
            format!("{name}.filters"),
            fan_in_uniform(rng, &[out_channels, in_channels, KERNEL, KERNEL], fan_in),
        );
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        ConvBlock {
            filters,
            bias,
            stride,
            pool,
        }
    }

    pub fn forward<F: Real>(
        &self,
        ps: &ParamSet<F>,
        input: &Tensor<F>,
    ) -> Result<(Tensor<F>, ConvCache<F>)> {
        conv2d_block(
            input,
            ps.value(self.filters),
            ps.value(self.bias),
            self.stride,
            self.pool,
        )
    }

    pub fn backward<F: Real>(
        &self,
        ps: &mut ParamSet<F>,
        cache: &ConvCache<F>,
        grad_out: &Tensor<F>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor<F>>> {
        let mut gf = ps.take_grad(self.filters);
        let mut gb = ps.take_grad(self.bias);
        let res = conv2d_block_backward_into(
            cache,
            ps.value(self.filters),
            grad_out,
            &mut gf,
            &mut gb,
            want_input_grad,
        );
        ps.put_grad(self.filters, gf);
        ps.put_grad(self.bias, gb);
        res
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero_output() {
        let x = Tensor::<f32>::zeros(&[1, 1, 4, 4]);
        let f = Tensor::full(&[5, 1, 3, 3], 0.7);
        let b = Tensor::zeros(&[5]);
        let (y, _) = conv2d_block(&x, &f, &b, 2, true).unwrap();
        assert_eq!(y.shape(), &[1, 5, 1, 1]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tiny_input_is_dimension_error() {
        let x = Tensor::<f32>::zeros(&[1, 1, 1, 1]);
        let f = Tensor::zeros(&[2, 1, 3, 3]);
        let b = Tensor::zeros(&[2]);
        assert!(conv2d_block(&x, &f, &b, 2, true).is_err());
    }

    #[test]
    fn single_tap_matches_hand_computation() {
        // Center tap only: stride-2 conv samples every other pixel.
        let x = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|v| v as f64).collect()).unwrap();
        let mut f = Tensor::zeros(&[1, 1, 3, 3]);
        f.data_mut()[4] = 1.0;
        let b = Tensor::zeros(&[1]);
        let (y, _) = conv2d_block(&x, &f, &b, 2, false).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0, 8.0, 10.0]);
        let (p, _) = conv2d_block(&x, &f, &b, 2, true).unwrap();
        assert_eq!(p.data(), &[10.0]);
    }
}

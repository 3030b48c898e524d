use rand::Rng;

use super::activation::{softmax, softmax_backward};
use super::linear::{linear, linear_backward, Linear};
use super::params::ParamSet;
use super::tensor::{Real, Tensor};
use crate::error::{config_err, dim_err, Result};

/// Projection weights for self-attention; every matrix is `[D, D]`, every bias `[D]`.
#[derive(Clone, Copy)]
pub struct MhaWeights<'a, F: Real> {
    pub wq: &'a Tensor<F>,
    pub bq: &'a Tensor<F>,
    pub wk: &'a Tensor<F>,
    pub bk: &'a Tensor<F>,
    pub wv: &'a Tensor<F>,
    pub bv: &'a Tensor<F>,
    pub wo: &'a Tensor<F>,
    pub bo: &'a Tensor<F>,
}

#[derive(Clone, Debug)]
pub struct MhaGrads<F: Real> {
    pub wq: Tensor<F>,
    pub bq: Tensor<F>,
    pub wk: Tensor<F>,
    pub bk: Tensor<F>,
    pub wv: Tensor<F>,
    pub bv: Tensor<F>,
    pub wo: Tensor<F>,
    pub bo: Tensor<F>,
}

#[derive(Clone, Debug)]
pub struct MhaCache<F: Real> {
    tokens: Tensor<F>,
    q: Tensor<F>,
    k: Tensor<F>,
    v: Tensor<F>,
    /// Attention weights `[B, heads, S, S]`.
    pub weights: Tensor<F>,
    context: Tensor<F>,
    batch: usize,
    seq: usize,
    heads: usize,
}

/// Self-attention (query = key = value = `seq`) without the residual term.
pub fn multi_head_attention<F: Real>(
    seq: &Tensor<F>,
    heads: usize,
    w: &MhaWeights<'_, F>,
) -> Result<(Tensor<F>, MhaCache<F>)> {
    if seq.rank() != 3 {
        return dim_err(format!("attention expects [B,S,D], got {:?}", seq.shape()));
    }
    let (batch, len, dim) = (seq.dim(0), seq.dim(1), seq.dim(2));
    if heads == 0 || dim % heads != 0 {
        return config_err(format!(
            "token dim {dim} is not divisible by {heads} heads"
        ));
    }
    let head_dim = dim / heads;
    let scale = F::one() / F::c(head_dim as f64).sqrt();
    let tokens = seq.clone().reshape(&[batch * len, dim])?;
    let q = linear(&tokens, w.wq, w.bq)?;
    let k = linear(&tokens, w.wk, w.bk)?;
    let v = linear(&tokens, w.wv, w.bv)?;

    let mut scores = vec![F::zero(); batch * heads * len * len];
    for b in 0..batch {
        for h in 0..heads {
            for s in 0..len {
                let qs = &q.row(b * len + s)[h * head_dim..(h + 1) * head_dim];
                for t in 0..len {
                    let kt = &k.row(b * len + t)[h * head_dim..(h + 1) * head_dim];
                    let dot: F = qs.iter().zip(kt).map(|(&a, &c)| a * c).sum();
                    scores[((b * heads + h) * len + s) * len + t] = dot * scale;
                }
            }
        }
    }
    let scores = Tensor::from_vec(&[batch, heads, len, len], scores)?;
    let weights = softmax(&scores, 3)?;

    let mut ctx = vec![F::zero(); batch * len * dim];
    for b in 0..batch {
        for h in 0..heads {
            for s in 0..len {
                let out = &mut ctx[(b * len + s) * dim + h * head_dim..][..head_dim];
                for t in 0..len {
                    let a = weights.data()[((b * heads + h) * len + s) * len + t];
                    let vt = &v.row(b * len + t)[h * head_dim..(h + 1) * head_dim];
                    for (o, &vv) in out.iter_mut().zip(vt) {
                        *o += a * vv;
                    }
                }
            }
        }
    }
    let context = Tensor::from_vec(&[batch * len, dim], ctx)?;
    let out = linear(&context, w.wo, w.bo)?.reshape(&[batch, len, dim])?;
    let cache = MhaCache {
        tokens,
        q,
        k,
        v,
        weights,
        context,
        batch,
        seq: len,
        heads,
    };
    Ok((out, cache))
}

pub fn multi_head_attention_backward<F: Real>(
    cache: &MhaCache<F>,
    w: &MhaWeights<'_, F>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, MhaGrads<F>)> {
    let (batch, len, heads) = (cache.batch, cache.seq, cache.heads);
    let dim = cache.tokens.dim(1);
    let head_dim = dim / heads;
    let scale = F::one() / F::c(head_dim as f64).sqrt();
    grad_out.expect_shape(&[batch, len, dim], "attention grad_out")?;
    let g_out = grad_out.clone().reshape(&[batch * len, dim])?;
    let out_grads = linear_backward(&cache.context, w.wo, &g_out)?;
    let g_ctx = out_grads.input;

    let mut g_weights = vec![F::zero(); batch * heads * len * len];
    let mut g_v = vec![F::zero(); batch * len * dim];
    for b in 0..batch {
        for h in 0..heads {
            for s in 0..len {
                let gc = &g_ctx.row(b * len + s)[h * head_dim..(h + 1) * head_dim];
                for t in 0..len {
                    let widx = ((b * heads + h) * len + s) * len + t;
                    let vt = &cache.v.row(b * len + t)[h * head_dim..(h + 1) * head_dim];
                    g_weights[widx] = gc.iter().zip(vt).map(|(&a, &c)| a * c).sum();
                    let a = cache.weights.data()[widx];
                    let gvt = &mut g_v[(b * len + t) * dim + h * head_dim..][..head_dim];
                    for (o, &g) in gvt.iter_mut().zip(gc) {
                        *o += a * g;
                    }
                }
            }
        }
    }
    let g_weights = Tensor::from_vec(cache.weights.shape(), g_weights)?;
    let g_scores = softmax_backward(&cache.weights, &g_weights, 3)?;

    let mut g_q = vec![F::zero(); batch * len * dim];
    let mut g_k = vec![F::zero(); batch * len * dim];
    for b in 0..batch {
        for h in 0..heads {
            for s in 0..len {
                for t in 0..len {
                    let gs = g_scores.data()[((b * heads + h) * len + s) * len + t] * scale;
                    let qs = &cache.q.row(b * len + s)[h * head_dim..(h + 1) * head_dim];
                    let kt = &cache.k.row(b * len + t)[h * head_dim..(h + 1) * head_dim];
                    let gqs = &mut g_q[(b * len + s) * dim + h * head_dim..][..head_dim];
                    for (o, &kv) in gqs.iter_mut().zip(kt) {
                        *o += gs * kv;
                    }
                    let gkt = &mut g_k[(b * len + t) * dim + h * head_dim..][..head_dim];
                    for (o, &qv) in gkt.iter_mut().zip(qs) {
                        *o += gs * qv;
                    }
                }
            }
        }
    }
    let g_q = Tensor::from_vec(&[batch * len, dim], g_q)?;
    let g_k = Tensor::from_vec(&[batch * len, dim], g_k)?;
    let g_v = Tensor::from_vec(&[batch * len, dim], g_v)?;
    let qg = linear_backward(&cache.tokens, w.wq, &g_q)?;
    let kg = linear_backward(&cache.tokens, w.wk, &g_k)?;
    let vg = linear_backward(&cache.tokens, w.wv, &g_v)?;
    let mut g_in = qg.input;
    g_in.add_assign(&kg.input)?;
    g_in.add_assign(&vg.input)?;
    let grads = MhaGrads {
        wq: qg.weights,
        bq: qg.bias,
        wk: kg.weights,
        bk: kg.bias,
        wv: vg.weights,
        bv: vg.bias,
        wo: out_grads.weights,
        bo: out_grads.bias,
    };
    Ok((g_in.reshape(&[batch, len, dim])?, grads))
}

/// Self-attention layer bound to parameters in a [`ParamSet`].
#[derive(Clone, Copy, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<F: Real, R: Rng>(
        ps: &mut ParamSet<F>,
        rng: &mut R,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Result<MultiHeadAttention> {
        if heads == 0 || dim % heads != 0 {
            return config_err(format!("token dim {dim} is not divisible by {heads} heads"));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(ps, rng, &format!("{name}.query"), dim, dim),
            key: Linear::new(ps, rng, &format!("{name}.key"), dim, dim),
            value: Linear::new(ps, rng, &format!("{name}.value"), dim, dim),
            output: Linear::new(ps, rng, &format!("{name}.output"), dim, dim),
            heads,
        })
    }

    fn weights<'a, F: Real>(&self, ps: &'a ParamSet<F>) -> MhaWeights<'a, F> {
        MhaWeights {
            wq: ps.value(self.query.weights),
            bq: ps.value(self.query.bias),
            wk: ps.value(self.key.weights),
            bk: ps.value(self.key.bias),
            wv: ps.value(self.value.weights),
            bv: ps.value(self.value.bias),
            wo: ps.value(self.output.weights),
            bo: ps.value(self.output.bias),
        }
    }

    pub fn forward<F: Real>(
        &self,
        ps: &ParamSet<F>,
        seq: &Tensor<F>,
    ) -> Result<(Tensor<F>, MhaCache<F>)> {
        multi_head_attention(seq, self.heads, &self.weights(ps))
    }

    pub fn backward<F: Real>(
        &self,
        ps: &mut ParamSet<F>,
        cache: &MhaCache<F>,
        grad_out: &Tensor<F>,
    ) -> Result<Tensor<F>> {
        let (g_in, g) = multi_head_attention_backward(cache, &self.weights(ps), grad_out)?;
        for (id, grad) in [
            (self.query.weights, &g.wq),
            (self.query.bias, &g.bq),
            (self.key.weights, &g.wk),
            (self.key.bias, &g.bk),
            (self.value.weights, &g.wv),
            (self.value.bias, &g.bv),
            (self.output.weights, &g.wo),
            (self.output.bias, &g.bo),
        ] {
            ps.grad_mut(id).add_assign(grad)?;
        }
        Ok(g_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn single_token_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 8;
        let mats: Vec<_> = (0..4).map(|_| random(&mut rng, &[d, d])).collect();
        let biases: Vec<_> = (0..4).map(|_| random(&mut rng, &[d])).collect();
        let w = MhaWeights {
            wq: &mats[0],
            bq: &biases[0],
            wk: &mats[1],
            bk: &biases[1],
            wv: &mats[2],
            bv: &biases[2],
            wo: &mats[3],
            bo: &biases[3],
        };
        let x = random(&mut rng, &[2, 1, d]);
        let (y, cache) = multi_head_attention(&x, 4, &w).unwrap();
        assert!(cache.weights.data().iter().all(|&a| a == 1.0));
        let flat = x.clone().reshape(&[2, d]).unwrap();
        let expected = linear(&linear(&flat, w.wv, w.bv).unwrap(), w.wo, w.bo).unwrap();
        for (a, b) in y.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_query_key_projection_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 4;
        let zero = Tensor::zeros(&[d, d]);
        let zb = Tensor::zeros(&[d]);
        let wv = random(&mut rng, &[d, d]);
        let wo = random(&mut rng, &[d, d]);
        let w = MhaWeights {
            wq: &zero,
            bq: &zb,
            wk: &zero,
            bk: &zb,
            wv: &wv,
            bv: &zb,
            wo: &wo,
            bo: &zb,
        };
        let x = random(&mut rng, &[1, 2, d]);
        let (_, cache) = multi_head_attention(&x, 2, &w).unwrap();
        assert!(cache.weights.data().iter().all(|&a| a == 0.5));
    }

    #[test]
    fn indivisible_heads_is_config_error() {
        let t = Tensor::<f32>::zeros(&[6, 6]);
        let b = Tensor::zeros(&[6]);
        let w = MhaWeights {
            wq: &t,
            bq: &b,
            wk: &t,
            bk: &b,
            wv: &t,
            bv: &b,
            wo: &t,
            bo: &b,
        };
        let err = multi_head_attention(&Tensor::zeros(&[1, 2, 6]), 4, &w).unwrap_err();
        assert!(matches!(err, crate::error::PaadError::Config(_)));
    }
}

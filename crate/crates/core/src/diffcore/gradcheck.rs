//! Central finite differences in 64-bit arithmetic, used to verify the
//! analytic backward passes.
//!
//! Piecewise-linear layers (ReLU, max pooling) have kinks. A coordinate
//! whose forward and backward one-sided slopes disagree by more than the
//! tolerance is reported as skipped instead of compared.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::{relu, relu_backward, sigmoid, sigmoid_backward, softmax, softmax_backward};
use super::attention::{multi_head_attention, multi_head_attention_backward, MhaWeights};
use super::conv::{conv2d_block, conv2d_block_backward};
use super::linear::{linear, linear_backward};
use super::reparam::{reparameterize, reparameterize_backward};
use super::tensor::Tensor;

/// Default perturbation for central differences.
pub const STEP: f64 = 1e-3;
/// Default pass threshold on [`relative_error`].
pub const TOLERANCE: f64 = 1e-3;

/// `∂f/∂x_i ≈ (f(x + h e_i) − f(x − h e_i)) / 2h` for every index in `indices`.
pub fn central_differences(
    x: &mut [f64],
    indices: &[usize],
    step: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    indices
        .iter()
        .map(|&i| {
            let orig = x[i];
            x[i] = orig + step;
            let plus = f(x);
            x[i] = orig - step;
            let minus = f(x);
            x[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Gradient magnitudes below this are treated as this size when scaling errors.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Largest componentwise deviation, relative to the largest gradient
/// magnitude of either vector (at least [`SCALE_FLOOR`]).
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(SCALE_FLOOR, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Finite-difference view of one coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub central: f64,
    /// `|forward slope − backward slope|`; large at kinks.
    pub one_sided_gap: f64,
}

/// Probes one coordinate. `eval(offset)` must evaluate the function with the
/// coordinate shifted by `offset` (and restore nothing; the caller owns state).
pub fn probe(step: f64, mut eval: impl FnMut(f64) -> f64) -> Probe {
    let f0 = eval(0.0);
    let plus = eval(step);
    let minus = eval(-step);
    Probe {
        central: (plus - minus) / (2.0 * step),
        one_sided_gap: ((plus - f0) / step - (f0 - minus) / step).abs(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradReport {
    pub rel_error: f64,
    pub compared: usize,
    /// Coordinates sitting on a kink within one step.
    pub skipped: usize,
}

impl GradReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.rel_error <= tol && self.compared > 0
    }

    pub fn merge(self, other: GradReport) -> GradReport {
        GradReport {
            rel_error: self.rel_error.max(other.rel_error),
            compared: self.compared + other.compared,
            skipped: self.skipped + other.skipped,
        }
    }
}

/// Compares analytic derivatives with probes, skipping kinked coordinates.
pub fn compare(analytic: &[f64], probes: &[Probe], tol: f64) -> GradReport {
    assert_eq!(analytic.len(), probes.len());
    let scale = analytic
        .iter()
        .zip(probes)
        .fold(SCALE_FLOOR, |m, (a, p)| m.max(a.abs()).max(p.central.abs()));
    let mut a_kept = Vec::new();
    let mut n_kept = Vec::new();
    let mut skipped = 0;
    for (&a, p) in analytic.iter().zip(probes) {
        if p.one_sided_gap > 2.0 * tol * scale {
            skipped += 1;
        } else {
            a_kept.push(a);
            n_kept.push(p.central);
        }
    }
    GradReport {
        rel_error: relative_error(&a_kept, &n_kept),
        compared: a_kept.len(),
        skipped,
    }
}

/// Up to `max` distinct coordinates of a tensor with `len` elements.
pub fn sample_indices<R: Rng>(rng: &mut R, len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    rand::seq::index::sample(rng, len, max).into_vec()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Checks every argument of a scalar function `Σ G ⊙ layer(args)`.
fn check_args(
    layer: &str,
    names: &[&str],
    args: &mut [Tensor<f64>],
    analytic: &[Tensor<f64>],
    rng: &mut ChaCha8Rng,
    eval: impl Fn(&[Tensor<f64>]) -> f64,
) -> Vec<(String, GradReport)> {
    let mut out = Vec::new();
    for (a, name) in names.iter().enumerate() {
        let idx = sample_indices(rng, args[a].len(), 24);
        let mut probes = Vec::with_capacity(idx.len());
        for &i in &idx {
            let orig = args[a].data()[i];
            let p = probe(STEP, |off| {
                args[a].data_mut()[i] = orig + off;
                eval(args)
            });
            args[a].data_mut()[i] = orig;
            probes.push(p);
        }
        let an: Vec<f64> = idx.iter().map(|&i| analytic[a].data()[i]).collect();
        out.push((format!("{layer}/{name}"), compare(&an, &probes, TOLERANCE)));
    }
    out
}

fn weighted(y: &Tensor<f64>, g: &Tensor<f64>) -> f64 {
    y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
}

/// Finite-difference checks of every layer primitive for one random seed.
pub fn layer_gradient_checks(seed: u64) -> Vec<(String, GradReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();

    // linear
    let mut args = vec![
        random(&mut rng, &[3, 5], -1.0, 1.0),
        random(&mut rng, &[5, 4], -1.0, 1.0),
        random(&mut rng, &[4], -1.0, 1.0),
    ];
    let g = random(&mut rng, &[3, 4], -1.0, 1.0);
    let lg = linear_backward(&args[0], &args[1], &g).expect("linear backward");
    reports.extend(check_args(
        "linear",
        &["input", "weights", "bias"],
        &mut args,
        &[lg.input, lg.weights, lg.bias],
        &mut rng,
        |a| weighted(&linear(&a[0], &a[1], &a[2]).expect("linear"), &g),
    ));

    // conv blocks, with and without pooling
    for (stride, pool, label) in [(2, true, "conv_pool"), (1, false, "conv")] {
        let mut args = vec![
            random(&mut rng, &[2, 2, 7, 9], -1.0, 1.0),
            random(&mut rng, &[3, 2, 3, 3], -0.5, 0.5),
            random(&mut rng, &[3], -0.2, 0.2),
        ];
        let (y, cache) = conv2d_block(&args[0], &args[1], &args[2], stride, pool).expect("conv");
        let g = random(&mut rng, y.shape(), -1.0, 1.0);
        let (gi, gf, gb) = conv2d_block_backward(&cache, &args[1], &g).expect("conv backward");
        reports.extend(check_args(
            label,
            &["input", "filters", "bias"],
            &mut args,
            &[gi, gf, gb],
            &mut rng,
            |a| weighted(&conv2d_block(&a[0], &a[1], &a[2], stride, pool).expect("conv").0, &g),
        ));
    }

    // elementwise activations and softmax
    let mut args = vec![random(&mut rng, &[4, 6], -2.0, 2.0)];
    let g = random(&mut rng, &[4, 6], -1.0, 1.0);
    let y = relu(&args[0]).expect("relu");
    let gi = relu_backward(&y, &g).expect("relu backward");
    reports.extend(check_args("relu", &["input"], &mut args, &[gi], &mut rng, |a| {
        weighted(&relu(&a[0]).expect("relu"), &g)
    }));
    let y = sigmoid(&args[0]).expect("sigmoid");
    let gi = sigmoid_backward(&y, &g).expect("sigmoid backward");
    reports.extend(check_args("sigmoid", &["input"], &mut args, &[gi], &mut rng, |a| {
        weighted(&sigmoid(&a[0]).expect("sigmoid"), &g)
    }));
    let mut args = vec![random(&mut rng, &[3, 5, 2], -2.0, 2.0)];
    let g = random(&mut rng, &[3, 5, 2], -1.0, 1.0);
    let y = softmax(&args[0], 1).expect("softmax");
    let gi = softmax_backward(&y, &g, 1).expect("softmax backward");
    reports.extend(check_args("softmax", &["input"], &mut args, &[gi], &mut rng, |a| {
        weighted(&softmax(&a[0], 1).expect("softmax"), &g)
    }));

    // multi-head self-attention
    let (b, s, d, heads) = (2, 3, 8, 2);
    let mut args = vec![random(&mut rng, &[b, s, d], -1.0, 1.0)];
    for _ in 0..4 {
        args.push(random(&mut rng, &[d, d], -0.6, 0.6));
        args.push(random(&mut rng, &[d], -0.2, 0.2));
    }
    let mha = |a: &[Tensor<f64>]| {
        let w = MhaWeights {
            wq: &a[1],
            bq: &a[2],
            wk: &a[3],
            bk: &a[4],
            wv: &a[5],
            bv: &a[6],
            wo: &a[7],
            bo: &a[8],
        };
        multi_head_attention(&a[0], heads, &w).expect("attention")
    };
    let (y, cache) = mha(&args);
    let g = random(&mut rng, y.shape(), -1.0, 1.0);
    let w = MhaWeights {
        wq: &args[1],
        bq: &args[2],
        wk: &args[3],
        bk: &args[4],
        wv: &args[5],
        bv: &args[6],
        wo: &args[7],
        bo: &args[8],
    };
    let (gi, mg) = multi_head_attention_backward(&cache, &w, &g).expect("attention backward");
    let analytic = [gi, mg.wq, mg.bq, mg.wk, mg.bk, mg.wv, mg.bv, mg.wo, mg.bo];
    reports.extend(check_args(
        "attention",
        &["input", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"],
        &mut args,
        &analytic,
        &mut rng,
        |a| weighted(&mha(a).0, &g),
    ));

    // reparameterization with frozen noise
    let noise = random(&mut rng, &[2, 4], -2.0, 2.0);
    let mut args = vec![
        random(&mut rng, &[2, 4], -1.0, 1.0),
        random(&mut rng, &[2, 4], 0.2, 2.0),
    ];
    let g = random(&mut rng, &[2, 4], -1.0, 1.0);
    let (gm, gs) = reparameterize_backward(&noise, &g).expect("reparam backward");
    reports.extend(check_args(
        "reparameterize",
        &["mu", "sigma"],
        &mut args,
        &[gm, gs],
        &mut rng,
        |a| weighted(&reparameterize(&a[0], &a[1], &noise).expect("reparam"), &g),
    ));
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differences_of_a_cubic() {
        let mut x = vec![1.0, 2.0];
        let g = central_differences(&mut x, &[0, 1], STEP, |v| v[0].powi(3) + 2.0 * v[1]);
        assert!((g[0] - 3.0).abs() < 1e-5);
        assert!((g[1] - 2.0).abs() < 1e-9);
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn kink_is_skipped_not_compared() {
        let p = probe(STEP, |off| (0.0f64 + off).abs());
        let r = compare(&[1.0], &[p], TOLERANCE);
        assert_eq!((r.compared, r.skipped), (0, 1));
        assert!(!r.passes(TOLERANCE));
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let p = probe(STEP, |off| (2.0 + off).powi(2));
        assert!(compare(&[4.0], &[p], TOLERANCE).passes(TOLERANCE));
        assert!(!compare(&[4.1], &[p], TOLERANCE).passes(TOLERANCE));
    }

    #[test]
    fn identically_zero_gradient_is_compared() {
        // Rounding noise only: the function does not depend on the coordinate.
        let p = probe(STEP, |off| (0.1f64 + off - off) * 3.0 + 1e-15 * off.signum());
        let r = compare(&[0.0], &[p], TOLERANCE);
        assert_eq!((r.compared, r.skipped), (1, 0));
        assert!(r.passes(TOLERANCE));
        assert!(!compare(&[1e-3], &[p], TOLERANCE).passes(TOLERANCE));
    }

    #[test]
    fn all_layers_pass_for_one_seed() {
        for (name, r) in layer_gradient_checks(0) {
            assert!(r.passes(TOLERANCE), "{name}: {r:?}");
        }
    }
}

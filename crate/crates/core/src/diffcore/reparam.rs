use super::tensor::{Real, Tensor};
use crate::error::{dim_err, PaadError, Result};

/// `z = mu + sigma ⊙ noise`, with `noise` drawn by the caller.
pub fn reparameterize<F: Real>(
    mu: &Tensor<F>,
    sigma: &Tensor<F>,
    noise: &Tensor<F>,
) -> Result<Tensor<F>> {
    if mu.shape() != sigma.shape() || mu.shape() != noise.shape() {
        return dim_err(format!(
            "reparameterize: mu {:?}, sigma {:?}, noise {:?}",
            mu.shape(),
            sigma.shape(),
            noise.shape()
        ));
    }
    if sigma.data().iter().any(|&s| !(s > F::zero())) {
        return Err(PaadError::Numeric("reparameterize: sigma must be positive".into()));
    }
    let data = mu
        .data()
        .iter()
        .zip(sigma.data())
        .zip(noise.data())
        .map(|((&m, &s), &n)| m + s * n)
        .collect();
    Tensor::from_vec(mu.shape(), data)
}

/// Returns `(d/dmu, d/dsigma)`; the noise is a constant.
pub fn reparameterize_backward<F: Real>(
    noise: &Tensor<F>,
    grad_z: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    grad_z.expect_shape(noise.shape(), "reparameterize grad")?;
    let g_sigma = grad_z
        .data()
        .iter()
        .zip(noise.data())
        .map(|(&g, &n)| g * n)
        .collect();
    Ok((grad_z.clone(), Tensor::from_vec(noise.shape(), g_sigma)?))
}

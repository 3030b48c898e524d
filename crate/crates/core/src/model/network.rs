use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{AttentionKind, PaadConfig};
use crate::diffcore::{
    relu, relu_backward, reparameterize, reparameterize_backward, sigmoid, ConvBlock, ConvCache,
    Linear, MhaCache, MultiHeadAttention, ParamSet, Real, Tensor,
};
use crate::error::{dim_err, PaadError, Result};

/// Log-variance is clamped to this magnitude before exponentiation.
pub const LOGVAR_LIMIT: f64 = 15.0;

/// Inference probabilities are kept this far inside `(0, 1)`.
pub const PROFILE_EPS: f64 = 1e-12;

/// Batched network inputs. Images and paths are `[B, 1, H, W]`, LiDAR is `[B, L]`.
#[derive(Clone, Debug)]
pub struct NetworkInput<F: Real> {
    pub images: Option<Tensor<F>>,
    pub lidar: Option<Tensor<F>>,
    pub paths: Tensor<F>,
    /// Standard-normal noise `[B, latent]` for the reparameterized sample;
    /// only read when training with reconstruction.
    pub noise: Option<Tensor<F>>,
}

impl<F: Real> NetworkInput<F> {
    pub fn batch_size(&self) -> usize {
        self.paths.shape().first().copied().unwrap_or(0)
    }
}

/// Diagonal Gaussian posterior of the LiDAR latent.
#[derive(Clone, Debug, PartialEq)]
pub struct LidarPosterior<F: Real> {
    pub mu: Tensor<F>,
    pub sigma: Tensor<F>,
}

/// Per-step failure probabilities for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FailureProfile {
    pub probs: Vec<f64>,
}

/// Result of a batched forward pass plus everything needed for backward.
pub struct ForwardPass<F: Real> {
    pub logits: Tensor<F>,
    pub probs: Tensor<F>,
    pub posterior: Option<LidarPosterior<F>>,
    /// Decoded LiDAR mean `[B, L]` (training with reconstruction only).
    pub reconstruction: Option<Tensor<F>>,
    cache: Cache<F>,
}

/// Loss gradients with respect to the network outputs.
#[derive(Clone, Debug)]
pub struct OutputGrads<F: Real> {
    pub logits: Tensor<F>,
    /// Direct (KL) gradients on the posterior parameters.
    pub mu: Option<Tensor<F>>,
    pub sigma: Option<Tensor<F>>,
    pub reconstruction: Option<Tensor<F>>,
}

struct ConvStack {
    blocks: Vec<ConvBlock>,
}

struct ConvStackCache<F: Real> {
    caches: Vec<ConvCache<F>>,
    out_shape: Vec<usize>,
}

impl ConvStack {
    fn new<F: Real>(
        ps: &mut ParamSet<F>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: &PaadConfig,
    ) -> ConvStack {
        let mut in_ch = 1;
        let blocks = cfg
            .conv_filters
            .iter()
            .zip(&cfg.conv_pool)
            .enumerate()
            .map(|(i, (&f, &pool))| {
                let b = ConvBlock::new(ps, rng, &format!("{name}.conv{i}"), in_ch, f, cfg.conv_stride, pool);
                in_ch = f;
                b
            })
            .collect();
        ConvStack { blocks }
    }

    /// Returns flattened features `[B, C*H*W]`.
    fn forward<F: Real>(&self, ps: &ParamSet<F>, x: &Tensor<F>) -> Result<(Tensor<F>, ConvStackCache<F>)> {
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for b in &self.blocks {
            let (out, c) = b.forward(ps, &h)?;
            caches.push(c);
            h = out;
        }
        let out_shape = h.shape().to_vec();
        let batch = out_shape[0];
        let flat = h.len() / batch;
        Ok((h.reshape(&[batch, flat])?, ConvStackCache { caches, out_shape }))
    }

    fn backward<F: Real>(&self, ps: &mut ParamSet<F>, cache: &ConvStackCache<F>, grad: Tensor<F>) -> Result<()> {
        let mut g = grad.reshape(&cache.out_shape)?;
        for (i, (b, c)) in self.blocks.iter().zip(&cache.caches).enumerate().rev() {
            match b.backward(ps, c, &g, i > 0)? {
                Some(gi) => g = gi,
                None => break,
            }
        }
        Ok(())
    }
}

struct CameraBranch {
    convs: ConvStack,
    hidden: Linear,
    token: Linear,
}

struct LidarBranch {
    encoder: Linear,
    mu: Linear,
    logvar: Linear,
    decoder: Option<(Linear, Linear)>,
}

enum Mixer {
    Attention(MultiHeadAttention),
    Mlp(Linear, Linear),
}

struct CameraCache<F: Real> {
    convs: ConvStackCache<F>,
    flat: Tensor<F>,
    hidden: Tensor<F>,
}

struct LidarCache<F: Real> {
    input: Tensor<F>,
    hidden: Tensor<F>,
    /// Multiplier turning dL/dsigma into dL/dlogvar (0 where clamped).
    dsigma_dlogvar: Tensor<F>,
    decode: Option<DecodeCache<F>>,
}

struct DecodeCache<F: Real> {
    noise: Tensor<F>,
    z: Tensor<F>,
    hidden: Tensor<F>,
}

enum MixCache<F: Real> {
    Attention(MhaCache<F>),
    Mlp { input: Tensor<F>, hidden: Tensor<F> },
}

struct Cache<F: Real> {
    path: ConvStackCache<F>,
    camera: Option<CameraCache<F>>,
    lidar: Option<LidarCache<F>>,
    mix: MixCache<F>,
    head_input: Tensor<F>,
    head_hidden: Tensor<F>,
    obs_len: usize,
}

/// Proactive anomaly detector: path CNN, camera CNN, LiDAR variational
/// encoder, attention fusion and a per-step sigmoid head.
pub struct Paad<F: Real> {
    config: PaadConfig,
    pub params: ParamSet<F>,
    training: bool,
    path: ConvStack,
    camera: Option<CameraBranch>,
    lidar: Option<LidarBranch>,
    mixer: Mixer,
    head_hidden: Linear,
    head_out: Linear,
}

impl<F: Real> Paad<F> {
    /// Builds and initializes a network; parameters are drawn from `config.init_seed`.
    pub fn new(config: PaadConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut ps = ParamSet::new();
        let d = config.token_dim;
        let path = ConvStack::new(&mut ps, &mut rng, "path", &config);
        let camera = if config.uses_camera() {
            let convs = ConvStack::new(&mut ps, &mut rng, "camera", &config);
            let flat = config.camera_feature_len()?;
            Some(CameraBranch {
                convs,
                hidden: Linear::new(&mut ps, &mut rng, "camera.fc_hidden", flat, config.image_fc_hidden),
                token: Linear::new(&mut ps, &mut rng, "camera.fc_out", config.image_fc_hidden, d),
            })
        } else {
            None
        };
        let lidar = if config.uses_lidar() {
            let (l, h, z) = (config.lidar_len, config.lidar_hidden, config.latent_dim);
            let decoder = config.trains_reconstruction().then(|| {
                (
                    Linear::new(&mut ps, &mut rng, "lidar.dec_hidden", z, h),
                    Linear::new(&mut ps, &mut rng, "lidar.dec_out", h, l),
                )
            });
            Some(LidarBranch {
                encoder: Linear::new(&mut ps, &mut rng, "lidar.enc_hidden", l, h),
                mu: Linear::new(&mut ps, &mut rng, "lidar.mu", h, z),
                logvar: Linear::new(&mut ps, &mut rng, "lidar.logvar", h, z),
                decoder,
            })
        } else {
            None
        };
        let obs_len = 2 * d;
        let mixer = match config.attention {
            AttentionKind::Mha => Mixer::Attention(MultiHeadAttention::new(&mut ps, &mut rng, "fusion.mha", d, config.heads)?),
            AttentionKind::Mlp => Mixer::Mlp(
                Linear::new(&mut ps, &mut rng, "fusion.mlp0", obs_len, obs_len),
                Linear::new(&mut ps, &mut rng, "fusion.mlp1", obs_len, obs_len),
            ),
        };
        let head_in = obs_len + config.path_feature_len()?;
        let head_hidden = Linear::new(&mut ps, &mut rng, "head.hidden", head_in, config.fusion_hidden);
        let head_out = Linear::new(&mut ps, &mut rng, "head.out", config.fusion_hidden, config.horizon);
        Ok(Paad {
            config,
            params: ps,
            training: false,
            path,
            camera,
            lidar,
            mixer,
            head_hidden,
            head_out,
        })
    }

    pub fn config(&self) -> &PaadConfig {
        &self.config
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Number of distinct sensor tokens (a lone token is fed twice).
    pub fn token_count(&self) -> usize {
        self.camera.is_some() as usize + self.lidar.is_some() as usize
    }

    fn check_image(&self, x: &Tensor<F>, rows: usize, cols: usize, what: &str) -> Result<usize> {
        if x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != rows || x.dim(3) != cols {
            return dim_err(format!(
                "{what} must be [B, 1, {rows}, {cols}], got {:?}",
                x.shape()
            ));
        }
        Ok(x.dim(0))
    }

    /// Flattened path features `[B, P]`.
    pub fn path_features(&self, paths: &Tensor<F>) -> Result<Tensor<F>> {
        let (r, c) = self.config.path_input_hw()?;
        self.check_image(paths, r, c, "path raster")?;
        Ok(self.path.forward(&self.params, paths)?.0)
    }

    fn camera_forward(&self, images: &Tensor<F>) -> Result<(Tensor<F>, CameraCache<F>)> {
        let cam = self
            .camera
            .as_ref()
            .ok_or_else(|| PaadError::State("camera branch is disabled".into()))?;
        self.check_image(images, self.config.image_rows, self.config.image_cols, "camera image")?;
        let (flat, convs) = cam.convs.forward(&self.params, images)?;
        let hidden = relu(&cam.hidden.forward(&self.params, &flat)?)?;
        let token = cam.token.forward(&self.params, &hidden)?;
        Ok((token, CameraCache { convs, flat, hidden }))
    }

    /// Camera token `[B, D]`.
    pub fn camera_features(&self, images: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.camera_forward(images)?.0)
    }

    fn lidar_encode_cached(&self, scans: &Tensor<F>) -> Result<(LidarPosterior<F>, LidarCache<F>)> {
        let br = self
            .lidar
            .as_ref()
            .ok_or_else(|| PaadError::State("LiDAR branch is disabled".into()))?;
        if scans.rank() != 2 || scans.dim(1) != self.config.lidar_len {
            return dim_err(format!(
                "LiDAR scan must be [B, {}], got {:?}",
                self.config.lidar_len,
                scans.shape()
            ));
        }
        let hidden = relu(&br.encoder.forward(&self.params, scans)?)?;
        let mu = br.mu.forward(&self.params, &hidden)?;
        let logvar = br.logvar.forward(&self.params, &hidden)?;
        let limit = F::c(LOGVAR_LIMIT);
        let half = F::c(0.5);
        let sigma = logvar.map(|lv| (half * lv.max(-limit).min(limit)).exp());
        let mut dsig = sigma.clone();
        for (d, &lv) in dsig.data_mut().iter_mut().zip(logvar.data()) {
            *d = if lv.abs() > limit { F::zero() } else { *d * half };
        }
        sigma.check_finite("LiDAR sigma")?;
        mu.check_finite("LiDAR mu")?;
        Ok((
            LidarPosterior { mu, sigma },
            LidarCache {
                input: scans.clone(),
                hidden,
                dsigma_dlogvar: dsig,
                decode: None,
            },
        ))
    }

    /// Posterior `q(z | scan)`; `sigma = exp(logvar / 2)` is strictly positive.
    pub fn lidar_encode(&self, scans: &Tensor<F>) -> Result<LidarPosterior<F>> {
        Ok(self.lidar_encode_cached(scans)?.0)
    }

    /// LiDAR token `[mu, sigma]`, `[B, 2·latent]`.
    pub fn lidar_features(&self, scans: &Tensor<F>) -> Result<Tensor<F>> {
        let post = self.lidar_encode(scans)?;
        Tensor::concat_features(&post.mu, &post.sigma)
    }

    /// Decoded scan mean for latent samples `[B, latent]`. Training only.
    pub fn lidar_decode(&self, z: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.decode_cached(z)?.0)
    }

    fn decode_cached(&self, z: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>)> {
        if !self.training {
            return Err(PaadError::State("LiDAR decoder is only available in training mode".into()));
        }
        let (dh, dout) = self
            .lidar
            .as_ref()
            .and_then(|b| b.decoder.as_ref())
            .ok_or_else(|| PaadError::State("reconstruction branch is disabled".into()))?;
        let hidden = relu(&dh.forward(&self.params, z)?)?;
        Ok((dout.forward(&self.params, &hidden)?, hidden))
    }

    /// Stacks the two tokens as a length-2 sequence and mixes them.
    fn mix_forward(&self, first: &Tensor<F>, second: &Tensor<F>) -> Result<(Tensor<F>, MixCache<F>)> {
        let batch = first.dim(0);
        let d = self.config.token_dim;
        first.expect_shape(&[batch, d], "fusion token")?;
        second.expect_shape(&[batch, d], "fusion token")?;
        let flat = Tensor::concat_features(first, second)?;
        let obs_len = flat.dim(1);
        match &self.mixer {
            Mixer::Attention(mha) => {
                let seq = flat.reshape(&[batch, 2, d])?;
                let (attended, cache) = mha.forward(&self.params, &seq)?;
                let mut out = seq;
                out.add_assign(&attended.reshape(&[batch, 2, d])?)?;
                Ok((out.reshape(&[batch, obs_len])?, MixCache::Attention(cache)))
            }
            Mixer::Mlp(l0, l1) => {
                let hidden = relu(&l0.forward(&self.params, &flat)?)?;
                let out = l1.forward(&self.params, &hidden)?;
                Ok((out, MixCache::Mlp { input: flat, hidden }))
            }
        }
    }

    /// Fused observation `f_obs` (`[B, 2D]`) from the per-sensor tokens,
    /// camera first. With a single active sensor pass just that token.
    pub fn fuse_observation(&self, camera: Option<&Tensor<F>>, lidar: Option<&Tensor<F>>) -> Result<Tensor<F>> {
        let given = camera.is_some() as usize + lidar.is_some() as usize;
        if given != self.token_count() {
            return Err(PaadError::Input(format!(
                "fusion expects {} tokens, got {given}",
                self.token_count()
            )));
        }
        let (a, b) = match (camera, lidar) {
            (Some(c), Some(l)) => (c, l),
            (Some(t), None) | (None, Some(t)) => (t, t),
            (None, None) => return Err(PaadError::Input("no sensor tokens".into())),
        };
        Ok(self.mix_forward(a, b)?.0)
    }

    /// Batched forward pass. In training mode with reconstruction the decoder
    /// is also run on `mu + sigma * noise`.
    pub fn forward(&self, input: &NetworkInput<F>) -> Result<ForwardPass<F>> {
        let batch = input.batch_size();
        if batch == 0 {
            return Err(PaadError::Input("empty batch".into()));
        }
        let (pr, pc) = self.config.path_input_hw()?;
        self.check_image(&input.paths, pr, pc, "path raster")?;
        let (f_path, path_cache) = self.path.forward(&self.params, &input.paths)?;

        let mut tokens = Vec::with_capacity(2);
        let camera = match &self.camera {
            Some(_) => {
                let images = input
                    .images
                    .as_ref()
                    .ok_or_else(|| PaadError::Input("camera images are required".into()))?;
                if images.dim(0) != batch {
                    return dim_err(format!("{} images for a batch of {batch}", images.dim(0)));
                }
                let (tok, cache) = self.camera_forward(images)?;
                tokens.push(tok);
                Some(cache)
            }
            None => None,
        };

        let mut posterior = None;
        let mut reconstruction = None;
        let lidar = match &self.lidar {
            Some(br) => {
                let scans = input
                    .lidar
                    .as_ref()
                    .ok_or_else(|| PaadError::Input("LiDAR scans are required".into()))?;
                if scans.dim(0) != batch {
                    return dim_err(format!("{} scans for a batch of {batch}", scans.dim(0)));
                }
                let (post, mut cache) = self.lidar_encode_cached(scans)?;
                tokens.push(Tensor::concat_features(&post.mu, &post.sigma)?);
                if self.training && br.decoder.is_some() {
                    let noise = input.noise.as_ref().ok_or_else(|| {
                        PaadError::Input("training with reconstruction needs reparameterization noise".into())
                    })?;
                    let z = reparameterize(&post.mu, &post.sigma, noise)?;
                    let (mean, hidden) = self.decode_cached(&z)?;
                    reconstruction = Some(mean);
                    cache.decode = Some(DecodeCache {
                        noise: noise.clone(),
                        z,
                        hidden,
                    });
                }
                posterior = Some(post);
                Some(cache)
            }
            None => None,
        };

        let (f_obs, mix) = match tokens.as_slice() {
            [a, b] => self.mix_forward(a, b)?,
            [t] => self.mix_forward(t, t)?,
            _ => unreachable!("at least one sensor branch is always active"),
        };
        let obs_len = f_obs.dim(1);
        let head_input = Tensor::concat_features(&f_obs, &f_path)?;
        let head_hidden = relu(&self.head_hidden.forward(&self.params, &head_input)?)?;
        let logits = self.head_out.forward(&self.params, &head_hidden)?;
        logits.check_finite("logits")?;
        let probs = sigmoid(&logits)?;
        Ok(ForwardPass {
            logits,
            probs,
            posterior,
            reconstruction,
            cache: Cache {
                path: path_cache,
                camera,
                lidar,
                mix,
                head_input,
                head_hidden,
                obs_len,
            },
        })
    }

    /// Per-frame failure profiles in inference mode.
    pub fn predict(&self, input: &NetworkInput<F>) -> Result<Vec<FailureProfile>> {
        if self.training {
            return Err(PaadError::State("predict requires inference mode".into()));
        }
        let out = self.forward(input)?;
        let t = self.config.horizon;
        // Recomputed from the logits in f64: a 32-bit sigmoid rounds to
        // exactly 1 beyond a logit of ~17.
        let prob = |l: f64| (1.0 / (1.0 + (-l).exp())).clamp(PROFILE_EPS, 1.0 - PROFILE_EPS);
        Ok(out
            .logits
            .data()
            .chunks(t)
            .map(|row| FailureProfile {
                probs: row.iter().map(|l| prob(l.as_f64())).collect(),
            })
            .collect())
    }

    /// Accumulates parameter gradients for one forward pass.
    pub fn backward(&mut self, pass: &ForwardPass<F>, grads: &OutputGrads<F>) -> Result<()> {
        let cache = &pass.cache;
        grads.logits.expect_shape(pass.logits.shape(), "logit gradient")?;
        let ps = &mut self.params;
        let g_hidden = self
            .head_out
            .backward(ps, &cache.head_hidden, &grads.logits, true)?
            .expect("input grad");
        let g_hidden = relu_backward(&cache.head_hidden, &g_hidden)?;
        let g_head_in = self
            .head_hidden
            .backward(ps, &cache.head_input, &g_hidden, true)?
            .expect("input grad");
        let (g_obs, g_path) = g_head_in.split_features(cache.obs_len)?;
        self.path.backward(ps, &cache.path, g_path)?;

        let batch = g_obs.dim(0);
        let d = self.config.token_dim;
        let g_flat = match (&self.mixer, &cache.mix) {
            (Mixer::Attention(mha), MixCache::Attention(mc)) => {
                let g_seq = g_obs.clone().reshape(&[batch, 2, d])?;
                let g_att = mha.backward(ps, mc, &g_seq)?;
                let mut g = g_obs;
                g.add_assign(&g_att.reshape(&[batch, cache.obs_len])?)?;
                g
            }
            (Mixer::Mlp(l0, l1), MixCache::Mlp { input, hidden }) => {
                let g_h = l1.backward(ps, hidden, &g_obs, true)?.expect("input grad");
                let g_h = relu_backward(hidden, &g_h)?;
                l0.backward(ps, input, &g_h, true)?.expect("input grad")
            }
            _ => unreachable!("mixer and cache variants always match"),
        };

        let (mut g_first, g_second) = g_flat.split_features(d)?;
        let (g_cam_tok, g_lidar_tok) = match (&self.camera, &self.lidar) {
            (Some(_), Some(_)) => (Some(g_first), Some(g_second)),
            (Some(_), None) => {
                g_first.add_assign(&g_second)?;
                (Some(g_first), None)
            }
            (None, Some(_)) => {
                g_first.add_assign(&g_second)?;
                (None, Some(g_first))
            }
            (None, None) => (None, None),
        };

        if let (Some(cam), Some(cc), Some(g)) = (&self.camera, &cache.camera, g_cam_tok) {
            let g_h = cam.token.backward(ps, &cc.hidden, &g, true)?.expect("input grad");
            let g_h = relu_backward(&cc.hidden, &g_h)?;
            let g_flat = cam.hidden.backward(ps, &cc.flat, &g_h, true)?.expect("input grad");
            cam.convs.backward(ps, &cc.convs, g_flat)?;
        }

        if let (Some(br), Some(lc), Some(g)) = (&self.lidar, &cache.lidar, g_lidar_tok) {
            let z_dim = self.config.latent_dim;
            let (mut g_mu, mut g_sigma) = g.split_features(z_dim)?;
            if let Some(extra) = &grads.mu {
                g_mu.add_assign(extra)?;
            }
            if let Some(extra) = &grads.sigma {
                g_sigma.add_assign(extra)?;
            }
            if let (Some((dh, dout)), Some(dc), Some(g_rec)) =
                (&br.decoder, &lc.decode, &grads.reconstruction)
            {
                let g_dh = dout.backward(ps, &dc.hidden, g_rec, true)?.expect("input grad");
                let g_dh = relu_backward(&dc.hidden, &g_dh)?;
                let g_z = dh.backward(ps, &dc.z, &g_dh, true)?.expect("input grad");
                let (gm, gs) = reparameterize_backward(&dc.noise, &g_z)?;
                g_mu.add_assign(&gm)?;
                g_sigma.add_assign(&gs)?;
            }
            let mut g_logvar = g_sigma;
            for (g, &k) in g_logvar.data_mut().iter_mut().zip(lc.dsigma_dlogvar.data()) {
                *g = *g * k;
            }
            let mut g_h = br.mu.backward(ps, &lc.hidden, &g_mu, true)?.expect("input grad");
            let g_h2 = br.logvar.backward(ps, &lc.hidden, &g_logvar, true)?.expect("input grad");
            g_h.add_assign(&g_h2)?;
            let g_h = relu_backward(&lc.hidden, &g_h)?;
            br.encoder.backward(ps, &lc.input, &g_h, false)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::FusionMode;

    fn input<F: Real>(cfg: &PaadConfig, batch: usize, seed: u64) -> NetworkInput<F> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand_t = |shape: &[usize]| {
            let n: usize = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| F::c(rng.random_range(0.0..1.0))).collect()).unwrap()
        };
        let (pr, pc) = cfg.path_input_hw().unwrap();
        NetworkInput {
            images: Some(rand_t(&[batch, 1, cfg.image_rows, cfg.image_cols])),
            lidar: Some(rand_t(&[batch, cfg.lidar_len])),
            paths: rand_t(&[batch, 1, pr, pc]),
            noise: Some(rand_t(&[batch, cfg.latent_dim])),
        }
    }

    #[test]
    fn output_shapes_and_ranges() {
        let cfg = PaadConfig::default();
        let net = Paad::<f32>::new(cfg.clone()).unwrap();
        let out = net.forward(&input(&cfg, 3, 0)).unwrap();
        assert_eq!(out.probs.shape(), &[3, 10]);
        assert!(out.probs.data().iter().all(|&p| p > 0.0 && p < 1.0));
        let post = out.posterior.unwrap();
        assert_eq!(post.mu.shape(), &[3, 32]);
        assert!(post.sigma.data().iter().all(|&s| s > 0.0));
        assert!(out.reconstruction.is_none());
    }

    #[test]
    fn decoder_needs_training_mode() {
        let mut net = Paad::<f32>::new(PaadConfig::default()).unwrap();
        let z = Tensor::zeros(&[1, 32]);
        assert!(matches!(net.lidar_decode(&z), Err(PaadError::State(_))));
        net.set_training(true);
        assert_eq!(net.lidar_decode(&z).unwrap().shape(), &[1, 1081]);
    }

    #[test]
    fn camera_only_has_no_lidar_params() {
        let cfg = PaadConfig {
            fusion_mode: FusionMode::CameraOnly,
            ..PaadConfig::default()
        };
        let net = Paad::<f32>::new(cfg.clone()).unwrap();
        assert!(net.params.iter().all(|p| !p.name.starts_with("lidar")));
        let mut x = input::<f32>(&cfg, 2, 1);
        x.lidar = None;
        assert_eq!(net.forward(&x).unwrap().probs.shape(), &[2, 10]);
    }

    #[test]
    fn batch_rows_are_independent() {
        let cfg = PaadConfig::default();
        let net = Paad::<f64>::new(cfg.clone()).unwrap();
        let x = input::<f64>(&cfg, 2, 5);
        let both = net.forward(&x).unwrap().probs;
        let first = NetworkInput {
            images: x.images.as_ref().map(|t| Tensor::from_vec(&[1, 1, 60, 80], t.data()[..4800].to_vec()).unwrap()),
            lidar: x.lidar.as_ref().map(|t| Tensor::from_vec(&[1, 1081], t.data()[..1081].to_vec()).unwrap()),
            paths: Tensor::from_vec(&[1, 1, 30, 80], x.paths.data()[..2400].to_vec()).unwrap(),
            noise: None,
        };
        let one = net.forward(&first).unwrap().probs;
        for (a, b) in one.data().iter().zip(&both.data()[..10]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_lidar_length_is_dimension_error() {
        let cfg = PaadConfig::default();
        let net = Paad::<f32>::new(cfg.clone()).unwrap();
        let mut x = input::<f32>(&cfg, 1, 2);
        x.lidar = Some(Tensor::zeros(&[1, 1080]));
        assert!(matches!(net.forward(&x), Err(PaadError::Dimension(_))));
    }
}

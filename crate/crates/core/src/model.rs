//! The PH-VAE network.
//!
//! One encoder branch per polynomial power: `h^s = g(W^s x^s + b^s)`, with
//! the mean and log-variance heads shared across branches. The branch
//! posteriors fuse into a single draw: the aggregated mean is the arithmetic
//! mean of the branch means, the aggregated variance the arithmetic mean of
//! the branch variances (held in log space via log-sum-exp). One shared
//! decoder maps the draw back to the input space.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Tape, Tensor};
use crate::data::ExpandedBatch;
use crate::error::{Error, Result};
use crate::rng::{streams, Rng};
use crate::scalar::Scalar;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Branch count S.
    pub branches: usize,
    /// Noise amplitude A in `z = mu + A * eps * sigma`.
    pub amplitude: f64,
    #[serde(default = "default_encoder_activation")]
    pub encoder_activation: Activation,
    #[serde(default = "default_decoder_activation")]
    pub decoder_activation: Activation,
    /// Adds one hidden decoder layer of this width; used for image data.
    #[serde(default)]
    pub decoder_hidden_dim: Option<usize>,
    /// Use one first-layer encoder for all branches instead of
    /// branch-specific weights.
    #[serde(default)]
    pub tied_encoders: bool,
    /// Master seed for the run: initialization, shuffling, and noise streams
    /// are derived from it independently.
    pub seed: u64,
}

fn default_encoder_activation() -> Activation {
    Activation::Relu
}

fn default_decoder_activation() -> Activation {
    Activation::Sigmoid
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidParam("model dimensions must be >= 1".into()));
        }
        if self.branches == 0 {
            return Err(Error::InvalidParam("branch count S must be >= 1".into()));
        }
        if self.amplitude < 0.0 || !self.amplitude.is_finite() {
            return Err(Error::InvalidParam(format!(
                "amplitude must be finite and >= 0, got {}",
                self.amplitude
            )));
        }
        if self.decoder_hidden_dim == Some(0) {
            return Err(Error::InvalidParam("decoder_hidden_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// One affine layer: row-major weight `[out_dim, in_dim]` plus bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<S> {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    pub(crate) fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Layer {
            out_dim,
            in_dim,
            weight: vec![S::zero(); out_dim * in_dim],
            bias: vec![S::zero(); out_dim],
        }
    }

    /// Symmetric uniform fan-in init: weights in [-1/sqrt(in), 1/sqrt(in)],
    /// biases zero.
    fn init(out_dim: usize, in_dim: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = (0..out_dim * in_dim)
            .map(|_| S::from_f64(rng.uniform(-bound, bound)))
            .collect();
        Layer {
            out_dim,
            in_dim,
            weight,
            bias: vec![S::zero(); out_dim],
        }
    }
}

/// All trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PhVaeParams<S> {
    /// Branch-specific first layers, indexed by s - 1.
    pub enc: Vec<Layer<S>>,
    /// Shared latent heads.
    pub head_mu: Layer<S>,
    pub head_logvar: Layer<S>,
    /// Optional extra decoder layer (image configs).
    pub dec_hidden: Option<Layer<S>>,
    pub dec: Layer<S>,
}

/// Borrowed view of one named parameter array, in canonical order.
pub struct ParamView<'a, S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [S],
}

impl<S: Scalar> Layer<S> {
    fn views<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a, S>>) {
        out.push(ParamView {
            name: format!("{prefix}.W"),
            shape: vec![self.out_dim, self.in_dim],
            data: &self.weight,
        });
        out.push(ParamView {
            name: format!("{prefix}.b"),
            shape: vec![self.out_dim],
            data: &self.bias,
        });
    }
}

impl<S: Scalar> PhVaeParams<S> {
    /// Canonical flat ordering: `enc.{s}.W`, `enc.{s}.b` for s = 1..=S, then
    /// `head.mu.*`, `head.logvar.*`, the optional `dec.hidden.*`, and `dec.*`.
    pub fn named_arrays(&self) -> Vec<ParamView<'_, S>> {
        let mut out = Vec::new();
        for (i, layer) in self.enc.iter().enumerate() {
            layer.views(&format!("enc.{}", i + 1), &mut out);
        }
        self.head_mu.views("head.mu", &mut out);
        self.head_logvar.views("head.logvar", &mut out);
        if let Some(h) = &self.dec_hidden {
            h.views("dec.hidden", &mut out);
        }
        self.dec.views("dec", &mut out);
        out
    }

    pub fn total_len(&self) -> usize {
        self.named_arrays().iter().map(|v| v.data.len()).sum()
    }

    /// Concatenate all arrays in canonical order.
    pub fn to_flat(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.total_len());
        for view in self.named_arrays() {
            out.extend_from_slice(view.data);
        }
        out
    }

    /// Overwrite all arrays from a canonical-order flat vector.
    pub fn assign_from_flat(&mut self, flat: &[S]) -> Result<()> {
        if flat.len() != self.total_len() {
            return Err(Error::ShapeMismatch {
                context: "assign_from_flat",
                lhs: vec![flat.len()],
                rhs: vec![self.total_len()],
            });
        }
        let mut offset = 0;
        for (_, data) in self.arrays_mut() {
            let n = data.len();
            data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Mutable (name, buffer) pairs in canonical order.
    pub fn arrays_mut(&mut self) -> Vec<(String, &mut Vec<S>)> {
        let mut out = Vec::new();
        for (i, layer) in self.enc.iter_mut().enumerate() {
            out.push((format!("enc.{}.W", i + 1), &mut layer.weight));
            out.push((format!("enc.{}.b", i + 1), &mut layer.bias));
        }
        out.push(("head.mu.W".into(), &mut self.head_mu.weight));
        out.push(("head.mu.b".into(), &mut self.head_mu.bias));
        out.push(("head.logvar.W".into(), &mut self.head_logvar.weight));
        out.push(("head.logvar.b".into(), &mut self.head_logvar.bias));
        if let Some(h) = self.dec_hidden.as_mut() {
            out.push(("dec.hidden.W".into(), &mut h.weight));
            out.push(("dec.hidden.b".into(), &mut h.bias));
        }
        out.push(("dec.W".into(), &mut self.dec.weight));
        out.push(("dec.b".into(), &mut self.dec.bias));
        out
    }
}

/// Deterministic parameter initialization from the config's seed.
pub fn init_params<S: Scalar>(config: &ModelConfig) -> Result<PhVaeParams<S>> {
    config.validate()?;
    let mut rng = Rng::stream(config.seed, streams::INIT);
    let enc_layers = if config.tied_encoders { 1 } else { config.branches };
    let enc = (0..enc_layers)
        .map(|_| Layer::init(config.hidden_dim, config.input_dim, &mut rng))
        .collect();
    let head_mu = Layer::init(config.latent_dim, config.hidden_dim, &mut rng);
    let head_logvar = Layer::init(config.latent_dim, config.hidden_dim, &mut rng);
    let (dec_hidden, dec_in) = match config.decoder_hidden_dim {
        Some(h) => (Some(Layer::init(h, config.latent_dim, &mut rng)), h),
        None => (None, config.latent_dim),
    };
    let dec = Layer::init(config.input_dim, dec_in, &mut rng);
    Ok(PhVaeParams {
        enc,
        head_mu,
        head_logvar,
        dec_hidden,
        dec,
    })
}

/// Tape handles for one registration of the parameters.
pub struct ParamHandles {
    pub enc: Vec<(Tensor, Tensor)>,
    pub head_mu: (Tensor, Tensor),
    pub head_logvar: (Tensor, Tensor),
    pub dec_hidden: Option<(Tensor, Tensor)>,
    pub dec: (Tensor, Tensor),
}

impl ParamHandles {
    /// Handles in the same canonical order as `PhVaeParams::named_arrays`.
    pub fn ordered(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (w, b) in &self.enc {
            out.push(w);
            out.push(b);
        }
        out.push(&self.head_mu.0);
        out.push(&self.head_mu.1);
        out.push(&self.head_logvar.0);
        out.push(&self.head_logvar.1);
        if let Some((w, b)) = &self.dec_hidden {
            out.push(w);
            out.push(b);
        }
        out.push(&self.dec.0);
        out.push(&self.dec.1);
        out
    }
}

/// Copy the parameters onto a tape as leaves.
pub fn register_params<S: Scalar>(
    tape: &mut Tape<S>,
    params: &PhVaeParams<S>,
) -> Result<ParamHandles> {
    let layer = |tape: &mut Tape<S>, l: &Layer<S>| -> Result<(Tensor, Tensor)> {
        let w = tape.matrix(l.weight.clone(), l.out_dim, l.in_dim)?;
        let b = tape.vector(l.bias.clone());
        Ok((w, b))
    };
    Ok(ParamHandles {
        enc: params
            .enc
            .iter()
            .map(|l| layer(tape, l))
            .collect::<Result<_>>()?,
        head_mu: layer(tape, &params.head_mu)?,
        head_logvar: layer(tape, &params.head_logvar)?,
        dec_hidden: params
            .dec_hidden
            .as_ref()
            .map(|l| layer(tape, l))
            .transpose()?,
        dec: layer(tape, &params.dec)?,
    })
}

/// Gradients aligned with the canonical array order; zeros where no gradient
/// flowed.
pub fn collect_grads<S: Scalar>(tape: &Tape<S>, handles: &ParamHandles) -> Vec<Vec<S>> {
    handles
        .ordered()
        .into_iter()
        .map(|t| match tape.grad(t) {
            Some(g) => g.to_vec(),
            None => vec![S::zero(); t.len()],
        })
        .collect()
}

/// Per-branch posterior tensors for one sample.
pub struct BranchStats {
    pub mu: Tensor,
    pub logvar: Tensor,
}

/// Everything the loss needs from one sample's forward pass.
pub struct SampleForward {
    pub xhat: Tensor,
    pub branches: Vec<BranchStats>,
    pub mu: Tensor,
    pub logvar: Tensor,
    pub z: Tensor,
}

/// Per-branch and aggregated posterior parameters as plain values.
#[derive(Clone, Debug)]
pub struct GaussianLatentStats<S> {
    /// `(mu_s, logvar_s)` per branch.
    pub per_branch: Vec<(Vec<S>, Vec<S>)>,
    pub mu: Vec<S>,
    pub logvar: Vec<S>,
}

impl<S: Scalar> GaussianLatentStats<S> {
    /// Aggregate branch stats by value: mean of the means, log of the mean
    /// variance (computed with max subtraction, mirroring the tape op).
    pub fn from_branches(per_branch: Vec<(Vec<S>, Vec<S>)>) -> Result<Self> {
        if per_branch.is_empty() {
            return Err(Error::Empty {
                context: "GaussianLatentStats",
            });
        }
        let dim = per_branch[0].0.len();
        let count = S::from_f64(per_branch.len() as f64);
        let mut mu = vec![S::zero(); dim];
        for (m, _) in &per_branch {
            for (acc, &v) in mu.iter_mut().zip(m.iter()) {
                *acc += v;
            }
        }
        for v in mu.iter_mut() {
            *v = *v / count;
        }
        let log_count = count.ln();
        let logvar = (0..dim)
            .map(|i| {
                let m = per_branch
                    .iter()
                    .map(|(_, lv)| lv[i])
                    .fold(per_branch[0].1[i], S::max);
                let sum: S = per_branch.iter().map(|(_, lv)| (lv[i] - m).exp()).sum();
                m + (sum.ln() - log_count)
            })
            .collect();
        Ok(GaussianLatentStats {
            per_branch,
            mu,
            logvar,
        })
    }

    pub fn branch_count(&self) -> usize {
        self.per_branch.len()
    }
}

impl SampleForward {
    /// Read the posterior parameters off the tape.
    pub fn stats<S: Scalar>(&self, tape: &Tape<S>) -> GaussianLatentStats<S> {
        GaussianLatentStats {
            per_branch: self
                .branches
                .iter()
                .map(|b| (tape.values(&b.mu).to_vec(), tape.values(&b.logvar).to_vec()))
                .collect(),
            mu: tape.values(&self.mu).to_vec(),
            logvar: tape.values(&self.logvar).to_vec(),
        }
    }
}

/// `h = g(W^s x^s + b^s)`, then the shared heads produce `(mu_s, logvar_s)`.
pub fn encode_branch<S: Scalar>(
    tape: &mut Tape<S>,
    config: &ModelConfig,
    handles: &ParamHandles,
    x_s: &Tensor,
    s: usize,
) -> Result<BranchStats> {
    let (w, b) = &handles.enc[if config.tied_encoders { 0 } else { s }];
    let pre = tape.affine(x_s, w, b)?;
    let h = tape.activation(&pre, config.encoder_activation);
    let mu = tape.affine(&h, &handles.head_mu.0, &handles.head_mu.1)?;
    let logvar = tape.affine(&h, &handles.head_logvar.0, &handles.head_logvar.1)?;
    Ok(BranchStats { mu, logvar })
}

/// Mean of the branch means; log-mean-exp of the branch log-variances.
pub fn aggregate_latent<S: Scalar>(
    tape: &mut Tape<S>,
    branches: &[BranchStats],
) -> Result<(Tensor, Tensor)> {
    if branches.is_empty() {
        return Err(Error::Empty {
            context: "aggregate_latent",
        });
    }
    let mut acc = branches[0].mu.clone();
    for b in branches.iter().skip(1) {
        acc = tape.add(&acc, &b.mu)?;
    }
    let mu = tape.scale(&acc, S::one() / S::from_f64(branches.len() as f64));
    let logvars: Vec<Tensor> = branches.iter().map(|b| b.logvar.clone()).collect();
    let logvar = tape.logsumexp_branches(&logvars)?;
    Ok((mu, logvar))
}

/// `z = mu + A * eps * exp(0.5 logvar)`. `eps` enters as a constant leaf.
pub fn reparameterize<S: Scalar>(
    tape: &mut Tape<S>,
    mu: &Tensor,
    logvar: &Tensor,
    amplitude: S,
    eps: &[S],
) -> Result<Tensor> {
    if eps.len() != mu.len() || mu.shape() != logvar.shape() {
        return Err(Error::ShapeMismatch {
            context: "reparameterize",
            lhs: mu.shape().to_vec(),
            rhs: vec![logvar.len(), eps.len()],
        });
    }
    let half = tape.scale(logvar, S::from_f64(0.5));
    let sigma = tape.exp(&half);
    let eps_leaf = tape.vector(eps.to_vec());
    let noise = tape.mul(&eps_leaf, &sigma)?;
    let scaled = tape.scale(&noise, amplitude);
    tape.add(mu, &scaled)
}

/// `xhat = f(W z + b)`, with the optional hidden decoder layer in front.
pub fn decode<S: Scalar>(
    tape: &mut Tape<S>,
    config: &ModelConfig,
    handles: &ParamHandles,
    z: &Tensor,
) -> Result<Tensor> {
    let mut cur = z.clone();
    if let Some((w, b)) = &handles.dec_hidden {
        let pre = tape.affine(&cur, w, b)?;
        cur = tape.activation(&pre, config.encoder_activation);
    }
    let pre = tape.affine(&cur, &handles.dec.0, &handles.dec.1)?;
    Ok(tape.activation(&pre, config.decoder_activation))
}

/// Forward pass for one sample: encode all branches, aggregate, draw, decode.
/// `x_powers` holds the S power slices of the sample; `eps` is one standard
/// normal draw per latent dimension.
pub fn forward_sample<S: Scalar>(
    tape: &mut Tape<S>,
    config: &ModelConfig,
    handles: &ParamHandles,
    x_powers: &[&[S]],
    eps: &[S],
) -> Result<SampleForward> {
    if x_powers.len() != config.branches {
        return Err(Error::ShapeMismatch {
            context: "forward_sample: batch power count vs config branches",
            lhs: vec![x_powers.len()],
            rhs: vec![config.branches],
        });
    }
    let mut branches = Vec::with_capacity(config.branches);
    for (s, xs) in x_powers.iter().enumerate() {
        let x = tape.vector(xs.to_vec());
        branches.push(encode_branch(tape, config, handles, &x, s)?);
    }
    let (mu, logvar) = aggregate_latent(tape, &branches)?;
    let z = reparameterize(tape, &mu, &logvar, S::from_f64(config.amplitude), eps)?;
    let xhat = decode(tape, config, handles, &z)?;
    Ok(SampleForward {
        xhat,
        branches,
        mu,
        logvar,
        z,
    })
}

/// Forward pass over a batch with explicit noise, one row of `eps` per sample.
pub fn forward_batch_with_eps<S: Scalar>(
    tape: &mut Tape<S>,
    config: &ModelConfig,
    handles: &ParamHandles,
    batch: &ExpandedBatch<S>,
    eps: &[Vec<S>],
) -> Result<Vec<SampleForward>> {
    (0..batch.batch_size())
        .map(|i| forward_sample(tape, config, handles, &batch.sample_powers(i), &eps[i]))
        .collect()
}

/// Forward pass over a batch, drawing one noise vector per sample from `rng`.
pub fn forward_batch<S: Scalar>(
    tape: &mut Tape<S>,
    config: &ModelConfig,
    handles: &ParamHandles,
    batch: &ExpandedBatch<S>,
    rng: &mut Rng,
) -> Result<Vec<SampleForward>> {
    let eps: Vec<Vec<S>> = (0..batch.batch_size())
        .map(|_| {
            (0..config.latent_dim)
                .map(|_| rng.standard_normal_scalar())
                .collect()
        })
        .collect();
    forward_batch_with_eps(tape, config, handles, batch, &eps)
}

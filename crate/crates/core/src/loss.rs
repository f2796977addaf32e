//! Loss algebra: per-branch Gaussian KL against the standard normal prior,
//! the polynomial hierarchical (PH) divergence, sum-squared reconstruction,
//! the total training loss, and the mutual-information split.
//!
//! Per branch, `KL_s = -0.5 * sum_i (1 + logvar_i - mu_i^2 - exp(logvar_i))`,
//! which is non-negative and zero exactly when the branch posterior equals
//! the prior. The PH divergence is the arithmetic mean of the branch KLs, so
//! it reduces to the ordinary KL at S = 1. The total loss adds the PH term
//! to the sum-squared reconstruction error, and splits as
//! `ph = mi + base_kl` with `mi = (1/S) sum_{s>=2} KL_s`.
//!
//! Two routes are provided on purpose. The plain-value functions in this
//! module are straightforward loops over slices; [`graph`] builds the same
//! quantities as tape nodes for training. Tests hold the two routes
//! against each other.

use crate::error::{Error, Result};
use crate::model::GaussianLatentStats;
use crate::scalar::Scalar;

/// All components of one loss evaluation, as plain doubles for logging.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    /// `KL_s` per branch, index s - 1.
    pub kl_per_branch: Vec<f64>,
    pub ph: f64,
    pub mi: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.recon.is_finite()
            && self.ph.is_finite()
            && self.mi.is_finite()
            && self.total.is_finite()
            && self.kl_per_branch.iter().all(|v| v.is_finite())
    }

    /// Elementwise sum, used to fold batch breakdowns into epoch totals.
    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.recon += other.recon;
        self.ph += other.ph;
        self.mi += other.mi;
        self.total += other.total;
        if self.kl_per_branch.len() < other.kl_per_branch.len() {
            self.kl_per_branch.resize(other.kl_per_branch.len(), 0.0);
        }
        for (a, b) in self.kl_per_branch.iter_mut().zip(other.kl_per_branch.iter()) {
            *a += *b;
        }
    }

    pub fn zero(branches: usize) -> Self {
        LossBreakdown {
            recon: 0.0,
            kl_per_branch: vec![0.0; branches],
            ph: 0.0,
            mi: 0.0,
            total: 0.0,
        }
    }
}

fn check_finite<S: Scalar>(what: &str, xs: &[S]) -> Result<()> {
    for (i, v) in xs.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: what.into(),
                index: i,
            });
        }
    }
    Ok(())
}

/// `KL(N(mu, diag exp(logvar)) || N(0, I))`, summed over dimensions.
pub fn kl_gaussian_standard<S: Scalar>(mu: &[S], logvar: &[S]) -> Result<S> {
    if mu.len() != logvar.len() {
        return Err(Error::ShapeMismatch {
            context: "kl_gaussian_standard",
            lhs: vec![mu.len()],
            rhs: vec![logvar.len()],
        });
    }
    check_finite("kl mu", mu)?;
    check_finite("kl logvar", logvar)?;
    let mut acc = S::zero();
    for (&m, &lv) in mu.iter().zip(logvar.iter()) {
        acc += S::one() + lv - m * m - lv.exp();
    }
    Ok(S::from_f64(-0.5) * acc)
}

/// Mean of the per-branch KL divergences.
pub fn ph_divergence<S: Scalar>(stats: &GaussianLatentStats<S>) -> Result<S> {
    if stats.per_branch.is_empty() {
        return Err(Error::Empty {
            context: "ph_divergence",
        });
    }
    let mut acc = S::zero();
    for (mu, logvar) in &stats.per_branch {
        acc += kl_gaussian_standard(mu, logvar)?;
    }
    Ok(acc / S::from_f64(stats.branch_count() as f64))
}

/// Sum of squared errors over the whole batch.
pub fn reconstruction_loss<S: Scalar>(xhat: &[Vec<S>], x: &[Vec<S>]) -> Result<S> {
    if xhat.len() != x.len() || xhat.iter().zip(x).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::ShapeMismatch {
            context: "reconstruction_loss",
            lhs: vec![xhat.len()],
            rhs: vec![x.len()],
        });
    }
    let mut acc = S::zero();
    for (ra, rb) in xhat.iter().zip(x.iter()) {
        for (&a, &b) in ra.iter().zip(rb.iter()) {
            acc += (a - b) * (a - b);
        }
    }
    Ok(acc)
}

/// `(mi, base_kl)`: the branch s >= 2 share and the s = 1 share of PH.
/// The identity `ph = mi + base_kl` holds by construction.
pub fn mi_decomposition<S: Scalar>(stats: &GaussianLatentStats<S>) -> Result<(S, S)> {
    if stats.per_branch.is_empty() {
        return Err(Error::Empty {
            context: "mi_decomposition",
        });
    }
    let count = S::from_f64(stats.branch_count() as f64);
    let base = kl_gaussian_standard(&stats.per_branch[0].0, &stats.per_branch[0].1)? / count;
    let mut upper = S::zero();
    for (mu, logvar) in stats.per_branch.iter().skip(1) {
        upper += kl_gaussian_standard(mu, logvar)?;
    }
    Ok((upper / count, base))
}

/// Full breakdown for one batch of reconstructions and per-sample stats.
pub fn total_loss<S: Scalar>(
    xhat: &[Vec<S>],
    x: &[Vec<S>],
    stats: &[GaussianLatentStats<S>],
) -> Result<LossBreakdown> {
    if stats.is_empty() {
        return Err(Error::Empty { context: "total_loss" });
    }
    let branches = stats[0].branch_count();
    let recon = reconstruction_loss(xhat, x)?.as_f64();
    let mut kl_per_branch = vec![0.0f64; branches];
    for st in stats {
        if st.branch_count() != branches {
            return Err(Error::ShapeMismatch {
                context: "total_loss branch counts",
                lhs: vec![branches],
                rhs: vec![st.branch_count()],
            });
        }
        for (s, (mu, logvar)) in st.per_branch.iter().enumerate() {
            kl_per_branch[s] += kl_gaussian_standard(mu, logvar)?.as_f64();
        }
    }
    let ph = kl_per_branch.iter().sum::<f64>() / branches as f64;
    let mi = kl_per_branch.iter().skip(1).sum::<f64>() / branches as f64;
    Ok(LossBreakdown {
        recon,
        kl_per_branch,
        ph,
        mi,
        total: recon + ph,
    })
}

/// Differentiable versions of the loss terms, built on a [`Tape`].
pub mod graph {
    use super::*;
    use crate::autodiff::{Tape, Tensor};
    use crate::model::SampleForward;

    /// Tape nodes for every component of the batch loss. `total` is the
    /// training objective; the rest exist for logging and identities.
    pub struct LossGraph {
        pub recon: Tensor,
        /// Batch-summed `KL_s`, one node per branch.
        pub kl_per_branch: Vec<Tensor>,
        pub ph: Tensor,
        pub mi: Tensor,
        pub base_kl: Tensor,
        pub total: Tensor,
    }

    impl LossGraph {
        /// Read the component values off the tape.
        pub fn breakdown<S: Scalar>(&self, tape: &Tape<S>) -> LossBreakdown {
            LossBreakdown {
                recon: tape.value_scalar(&self.recon).as_f64(),
                kl_per_branch: self
                    .kl_per_branch
                    .iter()
                    .map(|t| tape.value_scalar(t).as_f64())
                    .collect(),
                ph: tape.value_scalar(&self.ph).as_f64(),
                mi: tape.value_scalar(&self.mi).as_f64(),
                total: tape.value_scalar(&self.total).as_f64(),
            }
        }
    }

    /// `-0.5 * sum(1 + logvar - mu^2 - exp(logvar))` as a scalar node.
    pub fn kl_gaussian_standard<S: Scalar>(
        tape: &mut Tape<S>,
        mu: &Tensor,
        logvar: &Tensor,
    ) -> Result<Tensor> {
        let one = tape.scalar(S::one());
        let a = tape.add(&one, logvar)?;
        let mu_sq = tape.square(mu);
        let b = tape.sub(&a, &mu_sq)?;
        let var = tape.exp(logvar);
        let c = tape.sub(&b, &var)?;
        let summed = tape.sum(&c);
        Ok(tape.scale(&summed, S::from_f64(-0.5)))
    }

    fn chain_add<S: Scalar>(tape: &mut Tape<S>, terms: &[Tensor]) -> Result<Tensor> {
        let mut acc = terms[0].clone();
        for t in terms.iter().skip(1) {
            acc = tape.add(&acc, t)?;
        }
        Ok(acc)
    }

    /// Assemble the full batch loss from per-sample forward results.
    pub fn total_loss<S: Scalar>(
        tape: &mut Tape<S>,
        forwards: &[SampleForward],
        targets: &[Vec<S>],
    ) -> Result<LossGraph> {
        if forwards.is_empty() {
            return Err(Error::Empty {
                context: "graph total_loss",
            });
        }
        if forwards.len() != targets.len() {
            return Err(Error::ShapeMismatch {
                context: "graph total_loss targets",
                lhs: vec![forwards.len()],
                rhs: vec![targets.len()],
            });
        }
        let branches = forwards[0].branches.len();

        let mut recon_terms = Vec::with_capacity(forwards.len());
        for (fw, target) in forwards.iter().zip(targets.iter()) {
            let t = tape.vector(target.clone());
            recon_terms.push(tape.mse_sum(&fw.xhat, &t)?);
        }
        let recon = chain_add(tape, &recon_terms)?;

        let mut kl_per_branch = Vec::with_capacity(branches);
        for s in 0..branches {
            let mut terms = Vec::with_capacity(forwards.len());
            for fw in forwards {
                let b = &fw.branches[s];
                terms.push(kl_gaussian_standard(tape, &b.mu, &b.logvar)?);
            }
            kl_per_branch.push(chain_add(tape, &terms)?);
        }

        let inv_count = S::one() / S::from_f64(branches as f64);
        let kl_sum = chain_add(tape, &kl_per_branch)?;
        let ph = tape.scale(&kl_sum, inv_count);
        let base_kl = tape.scale(&kl_per_branch[0], inv_count);
        let mi = if branches > 1 {
            let upper = chain_add(tape, &kl_per_branch[1..])?;
            tape.scale(&upper, inv_count)
        } else {
            tape.scalar(S::zero())
        };
        let total = tape.add(&recon, &ph)?;
        Ok(LossGraph {
            recon,
            kl_per_branch,
            ph,
            mi,
            base_kl,
            total,
        })
    }
}

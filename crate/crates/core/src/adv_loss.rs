//! Non-saturating adversarial objective with an R1 penalty, over
//! discriminator logits and precomputed squared gradient norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_R1_WEIGHT: f64 = 10.0;

/// `ln(1 + eˣ)` in the overflow-free form `max(x, 0) + ln(1 + e^{−|x|})`.
pub fn softplus_f(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Which logit sign feeds the generator term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorSign {
    /// `E[f(−D(G))]`, the usual non-saturating form.
    #[default]
    NonSaturating,
    /// `E[f(D(G))]`, the formula read literally with `f` as softplus.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub generator: f64,
    /// `E[f(−D(I))]`.
    pub disc_real: f64,
    /// `E[f(D(G))]`.
    pub disc_fake: f64,
    /// `λ · E[‖∇D(I)‖²]`.
    pub r1_penalty: f64,
    pub lambda: f64,
}

impl LossTerms {
    pub fn discriminator(&self) -> f64 {
        self.disc_fake + self.disc_real + self.r1_penalty
    }
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

pub fn gan_losses(fake_logits: &[f64], real_logits: &[f64], real_grad_sq_norms: &[f64], lambda: f64) -> Result<LossTerms> {
    gan_losses_with(fake_logits, real_logits, real_grad_sq_norms, lambda, GeneratorSign::NonSaturating)
}

pub fn gan_losses_with(
    fake_logits: &[f64],
    real_logits: &[f64],
    real_grad_sq_norms: &[f64],
    lambda: f64,
    sign: GeneratorSign,
) -> Result<LossTerms> {
    if fake_logits.is_empty() || real_logits.is_empty() || real_grad_sq_norms.is_empty() {
        return Err(Error::Parameter("loss inputs must be non-empty".into()));
    }
    if real_grad_sq_norms.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::Parameter("squared gradient norms must be non-negative".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("λ = {lambda} must be a non-negative number")));
    }
    let all = fake_logits.iter().chain(real_logits);
    if all.clone().any(|x| !x.is_finite()) {
        return Err(Error::Parameter("logits must be finite".into()));
    }
    let g_sign = match sign {
        GeneratorSign::NonSaturating => -1.0,
        GeneratorSign::Literal => 1.0,
    };
    let nf = fake_logits.len();
    let r1 = mean(real_grad_sq_norms.iter().copied(), real_grad_sq_norms.len());
    Ok(LossTerms {
        generator: mean(fake_logits.iter().map(|x| softplus_f(g_sign * x)), nf),
        disc_real: mean(real_logits.iter().map(|x| softplus_f(-x)), real_logits.len()),
        disc_fake: mean(fake_logits.iter().map(|x| softplus_f(*x)), nf),
        r1_penalty: if lambda == 0.0 { 0.0 } else { lambda * r1 },
        lambda,
    })
}

//! Pairwise node-type alignment: one autoencoder and one domain discriminator
//! per type pair, joined by a gradient reversal layer.
//!
//! The discriminator minimises binary cross-entropy with source labelled 0 and
//! target labelled 1; the encoder sits behind a GRL and therefore receives the
//! reversed gradient, pushing the two domains' hidden states together.

use std::sync::Arc;

use rand::Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::params::{glorot, ParamId, ParamStore};

/// Encoder `tanh(x W + b)` to the common hidden width and an affine decoder.
#[derive(Debug, Clone)]
pub struct TypeAutoencoder {
    pub key: String,
    pub in_dim: usize,
    pub hidden_dim: usize,
    enc_w: ParamId,
    enc_b: ParamId,
    dec_w: ParamId,
    dec_b: ParamId,
}

impl TypeAutoencoder {
    /// Registers (or reuses) parameters named `{prefix}.enc.w` and friends.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        in_dim: usize,
        hidden_dim: usize,
    ) -> Self {
        let enc_w =
            store.get_or_insert_with(&format!("{prefix}.enc.w"), (in_dim, hidden_dim), || {
                glorot(rng, in_dim, hidden_dim)
            });
        let enc_b = store.get_or_insert_with(&format!("{prefix}.enc.b"), (1, hidden_dim), || {
            Matrix::zeros((1, hidden_dim))
        });
        let dec_w =
            store.get_or_insert_with(&format!("{prefix}.dec.w"), (hidden_dim, in_dim), || {
                glorot(rng, hidden_dim, in_dim)
            });
        let dec_b = store.get_or_insert_with(&format!("{prefix}.dec.b"), (1, in_dim), || {
            Matrix::zeros((1, in_dim))
        });
        Self {
            key: prefix.to_owned(),
            in_dim,
            hidden_dim,
            enc_w,
            enc_b,
            dec_w,
            dec_b,
        }
    }

    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(store, self.enc_w);
        let b = tape.param(store, self.enc_b);
        let h = tape.matmul(x, w);
        let h = tape.add_bias(h, b);
        tape.tanh(h)
    }

    pub fn decode(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Var {
        let w = tape.param(store, self.dec_w);
        let b = tape.param(store, self.dec_b);
        let x = tape.matmul(h, w);
        tape.add_bias(x, b)
    }

    pub fn encode_matrix(&self, store: &ParamStore, x: &Matrix) -> Matrix {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let h = self.encode(&mut t, store, xv);
        t.value(h).clone()
    }

    pub fn reconstruct_matrix(&self, store: &ParamStore, x: &Matrix) -> Matrix {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let h = self.encode(&mut t, store, xv);
        let r = self.decode(&mut t, store, h);
        t.value(r).clone()
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [self.enc_w, self.enc_b, self.dec_w, self.dec_b]
    }
}

/// Feed-forward domain classifier `d_h → hidden → 1`; the logit's sigmoid is
/// the probability that a row comes from the target domain.
#[derive(Debug, Clone)]
pub struct Discriminator {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

pub type TypeDiscriminator = Discriminator;

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Self {
        Self {
            w1: store.get_or_insert_with(&format!("{prefix}.w1"), (in_dim, hidden), || {
                glorot(rng, in_dim, hidden)
            }),
            b1: store.get_or_insert_with(&format!("{prefix}.b1"), (1, hidden), || {
                Matrix::zeros((1, hidden))
            }),
            w2: store.get_or_insert_with(&format!("{prefix}.w2"), (hidden, 1), || {
                glorot(rng, hidden, 1)
            }),
            b2: store.get_or_insert_with(&format!("{prefix}.b2"), (1, 1), || Matrix::zeros((1, 1))),
        }
    }

    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Var {
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let z = tape.matmul(h, w1);
        let z = tape.add_bias(z, b1);
        let z = tape.tanh(z);
        let z = tape.matmul(z, w2);
        tape.add_bias(z, b2)
    }

    /// `D(x)` for every row, strictly inside `(0, 1)` for finite inputs.
    pub fn probabilities(&self, store: &ParamStore, h: &Matrix) -> Matrix {
        let mut t = Tape::new();
        let hv = t.constant(h.clone());
        let z = self.logits(&mut t, store, hv);
        t.value(z).mapv(crate::autograd::sigmoid)
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrlSchedule {
    Constant,
    /// `λ·(2 / (1 + exp(−γ·p)) − 1)` over training progress `p ∈ [0, 1]`.
    Ramp {
        gamma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrlConfig {
    pub lambda: f64,
    pub schedule: GrlSchedule,
}

impl Default for GrlConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            schedule: GrlSchedule::Ramp { gamma: 10.0 },
        }
    }
}

impl GrlConfig {
    /// Reversal coefficient at `step` of `max_step`; never negative.
    pub fn coefficient(&self, step: usize, max_step: usize) -> f64 {
        let lambda = self.lambda.max(0.0);
        match self.schedule {
            GrlSchedule::Constant => lambda,
            GrlSchedule::Ramp { gamma } => {
                let p = if max_step == 0 {
                    1.0
                } else {
                    (step as f64 / max_step as f64).clamp(0.0, 1.0)
                };
                lambda * (2.0 / (1.0 + (-gamma * p).exp()) - 1.0)
            }
        }
    }
}

/// Forward pass of the reversal layer (identity).
pub fn grl_apply(x: &Matrix) -> Matrix {
    x.clone()
}

/// Gradient handed upstream by the reversal layer.
pub fn grl_backward(g: &Matrix, lambda: f64) -> Matrix {
    g * -lambda
}

/// `Σ_k MSE(X_k, X̂_k)`.
pub fn recon_loss_shared(pairs: &[(&Matrix, &Matrix)]) -> Result<f64> {
    pairs
        .iter()
        .map(|(x, xh)| {
            if x.dim() != xh.dim() {
                return Err(Error::contract(format!(
                    "reconstruction shape {:?} vs input {:?}",
                    xh.dim(),
                    x.dim()
                )));
            }
            let n = x.len().max(1) as f64;
            Ok(ndarray::Zip::from(*x)
                .and(*xh)
                .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b))
                / n)
        })
        .sum()
}

/// Pooled reconstruction MSE of one shared pair over both domains, on a tape.
pub fn pooled_mse(tape: &mut Tape, parts: &[(Var, Arc<Matrix>)]) -> Var {
    let n: usize = parts.iter().map(|(_, t)| t.len()).sum();
    let sums: Vec<Var> = parts
        .iter()
        .map(|(v, t)| tape.sum_squared_diff(*v, t.clone()))
        .collect();
    let s = tape.sum(&sums);
    tape.scale(s, 1.0 / n.max(1) as f64)
}

/// Domain-adversarial loss on a tape: both encodings pass through a GRL with
/// coefficient `lambda`, then `(BCE(D(h_S), 0) + BCE(D(h_T), 1)) / 2`.
pub fn domain_adversarial_loss(
    tape: &mut Tape,
    store: &ParamStore,
    disc: &Discriminator,
    encoded_source: Var,
    encoded_target: Var,
    lambda: f64,
) -> Result<Var> {
    if tape.value(encoded_source).nrows() == 0 || tape.value(encoded_target).nrows() == 0 {
        return Err(Error::contract(
            "domain discriminator needs samples from both domains",
        ));
    }
    let s = tape.grl(encoded_source, lambda);
    let t = tape.grl(encoded_target, lambda);
    let zs = disc.logits(tape, store, s);
    let zt = disc.logits(tape, store, t);
    let ls = tape.bce_with_logits(zs, 0.0);
    let lt = tape.bce_with_logits(zt, 1.0);
    let l = tape.add(ls, lt);
    Ok(tape.scale(l, 0.5))
}

/// Value of the domain-adversarial loss for fixed encodings.
pub fn nda_loss(
    store: &ParamStore,
    encoded_source: &Matrix,
    encoded_target: &Matrix,
    disc: &Discriminator,
) -> Result<f64> {
    let mut t = Tape::new();
    let s = t.constant(encoded_source.clone());
    let tg = t.constant(encoded_target.clone());
    let l = domain_adversarial_loss(&mut t, store, disc, s, tg, 1.0)?;
    Ok(t.scalar(l))
}

/// `L_nda = L_nda1 + L_nda2`.
pub fn nda_total(shared: &[f64], private: &[f64]) -> f64 {
    shared.iter().sum::<f64>() + private.iter().sum::<f64>()
}

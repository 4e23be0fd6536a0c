//! Loss terms over a batch of scored pairs.
//!
//! Every function takes clamped probabilities and mean-reduces over the batch.
//! The `*_grad` variants also return the partial derivative of the reduced
//! value with respect to each input probability.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Which specialization of the observation likelihood a batch uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Denoising positives: negatives are trusted, `h'` pinned to 1.
    Dp,
    /// Denoising negatives: positives are trusted, `h` pinned to 0.
    Dn,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Dp => "DP",
            Mode::Dn => "DN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig<T> {
    /// Weight of the forward KL term, in `[0, 1]`.
    pub alpha: T,
    /// Stands in for `-log(1 - h')` on negatives during DP.
    pub c1: T,
    /// Stands in for `-log h` on positives during DN.
    pub c2: T,
    pub mode: Mode,
}

impl<T: Scalar> ObjectiveConfig<T> {
    pub fn new(alpha: T, c1: T, c2: T, mode: Mode) -> Self {
        Self { alpha, c1, c2, mode }
    }

    pub fn with_mode(self, mode: Mode) -> Self {
        Self { mode, ..self }
    }
}

/// Reduced value plus per-pair partials with respect to each model's score.
/// `aux` is `None` when the second distribution is frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradients<T> {
    pub value: T,
    pub f: Vec<T>,
    pub aux: Option<Vec<T>>,
    pub h: Vec<T>,
    pub h_prime: Vec<T>,
}

fn inv_len<T: Scalar>(n: usize) -> T {
    if n == 0 {
        T::zero()
    } else {
        T::one() / T::of(n as f64)
    }
}

// ---- per-pair terms: (value, ∂/∂first, ∂/∂second) -------------------------

#[inline]
fn bce_pair<T: Scalar>(f: T, observed: bool) -> (T, T) {
    let one = T::one();
    if observed {
        (-f.ln(), -one / f)
    } else {
        (-(one - f).ln(), one / (one - f))
    }
}

#[inline]
fn kl_pair<T: Scalar>(p: T, q: T) -> (T, T, T) {
    let one = T::one();
    let a = (p / q).ln();
    let b = ((one - p) / (one - q)).ln();
    (p * a + (one - p) * b, a - b, -p / q + (one - p) / (one - q))
}

/// `(value, ∂f, ∂h, ∂h')`
#[inline]
fn full_pair<T: Scalar>(f: T, h: T, hp: T, observed: bool) -> (T, T, T, T) {
    let one = T::one();
    if observed {
        let (lhp, lh) = (hp.ln(), h.ln());
        (lhp * f + lh * (one - f), lhp - lh, (one - f) / h, f / hp)
    } else {
        let (lhp, lh) = ((one - hp).ln(), (one - h).ln());
        (lhp * f + lh * (one - f), lhp - lh, -(one - f) / (one - h), -f / (one - hp))
    }
}

/// `(value, ∂f, ∂h)`
#[inline]
fn dp_pair<T: Scalar>(f: T, h: T, observed: bool, c1: T) -> (T, T, T) {
    let one = T::one();
    if observed {
        let lh = h.ln();
        (lh * (one - f), -lh, (one - f) / h)
    } else {
        let l1h = (one - h).ln();
        (-c1 * f + l1h * (one - f), -c1 - l1h, -(one - f) / (one - h))
    }
}

/// `(value, ∂f, ∂h')`
#[inline]
fn dn_pair<T: Scalar>(f: T, hp: T, observed: bool, c2: T) -> (T, T, T) {
    let one = T::one();
    if observed {
        let lhp = hp.ln();
        (lhp * f - c2 * (one - f), lhp + c2, f / hp)
    } else {
        let l1hp = (one - hp).ln();
        (l1hp * f, l1hp, -f / (one - hp))
    }
}

// ---- reduced objectives ---------------------------------------------------

/// Binary cross-entropy against the observed labels.
pub fn bce<T: Scalar>(scores: &[T], labels: &[bool]) -> T {
    bce_grad(scores, labels).0
}

pub fn bce_grad<T: Scalar>(scores: &[T], labels: &[bool]) -> (T, Vec<T>) {
    debug_assert_eq!(scores.len(), labels.len());
    let w = inv_len::<T>(scores.len());
    let mut value = T::zero();
    let grads = scores
        .iter()
        .zip(labels)
        .map(|(&f, &y)| {
            let (v, d) = bce_pair(f, y);
            value += v;
            d * w
        })
        .collect();
    (value * w, grads)
}

/// Bernoulli KL divergence `D[Bern(p) ‖ Bern(q)]`.
pub fn kl_bernoulli<T: Scalar>(p: T, q: T) -> T {
    kl_pair(p, q).0
}

/// Mean of `D[Bern(p_k) ‖ Bern(q_k)]` over the batch.
pub fn kl_bernoulli_mean<T: Scalar>(p: &[T], q: &[T]) -> T {
    let w = inv_len::<T>(p.len());
    p.iter().zip(q).map(|(&a, &b)| kl_pair(a, b).0).sum::<T>() * w
}

/// `E_{R∼Bern(f)}[log P(R̃ | R)]` under the full two-channel corruption model.
pub fn likelihood_full<T: Scalar>(f: &[T], h: &[T], h_prime: &[T], observed: &[bool]) -> T {
    let w = inv_len::<T>(f.len());
    (0..f.len()).map(|k| full_pair(f[k], h[k], h_prime[k], observed[k]).0).sum::<T>() * w
}

/// DP specialization: `h' = 1`, with `C₁` in place of `-log(1 - h')`.
pub fn likelihood_dp<T: Scalar>(f: &[T], h: &[T], observed: &[bool], c1: T) -> T {
    let w = inv_len::<T>(f.len());
    (0..f.len()).map(|k| dp_pair(f[k], h[k], observed[k], c1).0).sum::<T>() * w
}

/// DN specialization: `h = 0`, with `C₂` in place of `-log h`.
pub fn likelihood_dn<T: Scalar>(f: &[T], h_prime: &[T], observed: &[bool], c2: T) -> T {
    let w = inv_len::<T>(f.len());
    (0..f.len()).map(|k| dn_pair(f[k], h_prime[k], observed[k], c2).0).sum::<T>() * w
}

/// Negative mode-specialized likelihood and its partials, added into the
/// accumulators (scaled by `w`).
fn neg_likelihood<T: Scalar>(
    f: &[T],
    h: &[T],
    h_prime: &[T],
    observed: &[bool],
    cfg: &ObjectiveConfig<T>,
    w: T,
    out: &mut ScoreGradients<T>,
) {
    for k in 0..f.len() {
        match cfg.mode {
            Mode::Dp => {
                let (v, df, dh) = dp_pair(f[k], h[k], observed[k], cfg.c1);
                out.value -= v * w;
                out.f[k] -= df * w;
                out.h[k] -= dh * w;
            }
            Mode::Dn => {
                let (v, df, dhp) = dn_pair(f[k], h_prime[k], observed[k], cfg.c2);
                out.value -= v * w;
                out.f[k] -= df * w;
                out.h_prime[k] -= dhp * w;
            }
        }
    }
}

fn zeros<T: Scalar>(n: usize, with_aux: bool) -> ScoreGradients<T> {
    ScoreGradients {
        value: T::zero(),
        f: vec![T::zero(); n],
        aux: with_aux.then(|| vec![T::zero(); n]),
        h: vec![T::zero(); n],
        h_prime: vec![T::zero(); n],
    }
}

/// `-E_{P_f}[log P(R̃|R)] + α D[P_g‖P_f] + (1-α) D[P_f‖P_g]`.
pub fn dpi_loss<T: Scalar>(f: &[T], g: &[T], h: &[T], h_prime: &[T], observed: &[bool], cfg: &ObjectiveConfig<T>) -> T {
    dpi_loss_grad(f, g, h, h_prime, observed, cfg).value
}

pub fn dpi_loss_grad<T: Scalar>(
    f: &[T],
    g: &[T],
    h: &[T],
    h_prime: &[T],
    observed: &[bool],
    cfg: &ObjectiveConfig<T>,
) -> ScoreGradients<T> {
    let n = f.len();
    let w = inv_len::<T>(n);
    let mut out = zeros(n, true);
    neg_likelihood(f, h, h_prime, observed, cfg, w, &mut out);
    let (a, b) = (cfg.alpha, T::one() - cfg.alpha);
    let dg = out.aux.as_mut().expect("aux allocated");
    for k in 0..n {
        let (v1, d1g, d1f) = kl_pair(g[k], f[k]);
        let (v2, d2f, d2g) = kl_pair(f[k], g[k]);
        out.value += (a * v1 + b * v2) * w;
        out.f[k] += (a * d1f + b * d2f) * w;
        dg[k] += (a * d1g + b * d2g) * w;
    }
    out
}

/// `-E_{Q_f}[log P(R̃|R)] + α D[Q_f‖P_prior] + (1-α) D[P_prior‖Q_f]`.
/// The prior is frozen, so no partials are produced for it.
pub fn dvae_loss<T: Scalar>(
    f: &[T],
    prior: &[T],
    h: &[T],
    h_prime: &[T],
    observed: &[bool],
    cfg: &ObjectiveConfig<T>,
) -> T {
    dvae_loss_grad(f, prior, h, h_prime, observed, cfg).value
}

pub fn dvae_loss_grad<T: Scalar>(
    f: &[T],
    prior: &[T],
    h: &[T],
    h_prime: &[T],
    observed: &[bool],
    cfg: &ObjectiveConfig<T>,
) -> ScoreGradients<T> {
    let n = f.len();
    let w = inv_len::<T>(n);
    let mut out = zeros(n, false);
    neg_likelihood(f, h, h_prime, observed, cfg, w, &mut out);
    let (a, b) = (cfg.alpha, T::one() - cfg.alpha);
    for k in 0..n {
        let (v1, d1f, _) = kl_pair(f[k], prior[k]);
        let (v2, _, d2f) = kl_pair(prior[k], f[k]);
        out.value += (a * v1 + b * v2) * w;
        out.f[k] += (a * d1f + b * d2f) * w;
    }
    out
}

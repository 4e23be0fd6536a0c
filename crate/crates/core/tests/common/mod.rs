//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use recdenoise::optim::{backward, LabeledPair, ModelSet, Objective};
use recdenoise::models::BlockKind;
use recdenoise::{Arch, Mode, ModelParams, ObjectiveConfig};

/// `E_{r∼Bern(f)}[log P(r̃|r)]` by enumerating both values of `r`, with
/// `P(r̃=1|r=1) = hp` and `P(r̃=1|r=0) = h`.
pub fn likelihood_enum(f: f64, h: f64, hp: f64, observed: bool) -> f64 {
    let mut total = 0.0;
    for r in [false, true] {
        let p_r = if r { f } else { 1.0 - f };
        let p_obs = if r { hp } else { h };
        let p = if observed { p_obs } else { 1.0 - p_obs };
        total += p_r * p.ln();
    }
    total
}

/// Same enumeration with the channel given by its logs
/// `(ln h, ln(1-h), ln h', ln(1-h'))`, for channels too close to 0 or 1 to
/// pass as probabilities.
pub fn likelihood_enum_logs(f: f64, logs: [f64; 4], observed: bool) -> f64 {
    let [lh, l1h, lhp, l1hp] = logs;
    if observed {
        (1.0 - f) * lh + f * lhp
    } else {
        (1.0 - f) * l1h + f * l1hp
    }
}

/// `P(r=1 | r̃=1)` from the joint table.
pub fn posterior_enum(f: f64, h: f64, hp: f64) -> f64 {
    let joint = |r: bool| if r { f * hp } else { (1.0 - f) * h };
    joint(true) / (joint(false) + joint(true))
}

pub fn kl(p: f64, q: f64) -> f64 {
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

pub fn dp_term(f: f64, h: f64, observed: bool, c1: f64) -> f64 {
    if observed {
        h.ln() * (1.0 - f)
    } else {
        -c1 * f + (1.0 - h).ln() * (1.0 - f)
    }
}

pub fn dn_term(f: f64, hp: f64, observed: bool, c2: f64) -> f64 {
    if observed {
        hp.ln() * f - c2 * (1.0 - f)
    } else {
        (1.0 - hp).ln() * f
    }
}

pub fn bce_term(f: f64, observed: bool) -> f64 {
    if observed {
        -f.ln()
    } else {
        -(1.0 - f).ln()
    }
}

/// Which objective a finite-difference check exercises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Check {
    Bce,
    Dpi(Mode),
    Dvae(Mode),
}

pub const ALPHA: f64 = 0.5;
pub const C1: f64 = 1000.0;
pub const C2: f64 = 10.0;

pub struct Fixture {
    pub check: Check,
    /// f, aux (g or prior), h, h'.
    pub models: Vec<ModelParams<f64>>,
    pub pairs: Vec<LabeledPair>,
}

fn spread(model: &mut ModelParams<f64>, rng: &mut ChaCha8Rng) {
    let n = Normal::new(0.0, 0.6).unwrap();
    for b in &mut model.blocks {
        for v in &mut b.data {
            *v = n.sample(rng);
        }
    }
}

impl Fixture {
    pub fn new(check: Check, arch: Arch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (users, items) = (5, 6);
        let models = (0..4)
            .map(|k| {
                let mut m = ModelParams::init(arch, users, items, 4, seed * 10 + k).unwrap();
                spread(&mut m, &mut rng);
                m
            })
            .collect();
        let pairs = (0..16)
            .map(|_| LabeledPair { user: rng.random_range(0..users), item: rng.random_range(0..items), observed: rng.random() })
            .collect();
        Self { check, models, pairs }
    }

    fn probs(&self, k: usize) -> Vec<f64> {
        self.pairs.iter().map(|p| self.models[k].forward(p.user, p.item).unwrap().get()).collect()
    }

    /// Loss from the reference formulas.
    pub fn oracle_loss(&self) -> f64 {
        let f = self.probs(0);
        let n = f.len() as f64;
        let obs: Vec<bool> = self.pairs.iter().map(|p| p.observed).collect();
        let lik = |mode: Mode, h: &[f64], hp: &[f64]| -> f64 {
            (0..f.len())
                .map(|k| match mode {
                    Mode::Dp => dp_term(f[k], h[k], obs[k], C1),
                    Mode::Dn => dn_term(f[k], hp[k], obs[k], C2),
                })
                .sum::<f64>()
        };
        let total = match self.check {
            Check::Bce => (0..f.len()).map(|k| bce_term(f[k], obs[k])).sum::<f64>(),
            Check::Dpi(mode) => {
                let (g, h, hp) = (self.probs(1), self.probs(2), self.probs(3));
                let kls: f64 = (0..f.len()).map(|k| ALPHA * kl(g[k], f[k]) + (1.0 - ALPHA) * kl(f[k], g[k])).sum();
                -lik(mode, &h, &hp) + kls
            }
            Check::Dvae(mode) => {
                let (p, h, hp) = (self.probs(1), self.probs(2), self.probs(3));
                let kls: f64 = (0..f.len()).map(|k| ALPHA * kl(f[k], p[k]) + (1.0 - ALPHA) * kl(p[k], f[k])).sum();
                -lik(mode, &h, &hp) + kls
            }
        };
        total / n
    }

    fn objective(&self) -> Objective<f64> {
        let cfg = |m| ObjectiveConfig::new(ALPHA, C1, C2, m);
        match self.check {
            Check::Bce => Objective::Bce,
            Check::Dpi(m) => Objective::Dpi(cfg(m)),
            Check::Dvae(m) => Objective::Dvae(cfg(m)),
        }
    }

    /// Model slots that receive gradients.
    pub fn trainable(&self) -> Vec<usize> {
        match self.check {
            Check::Bce => vec![0],
            Check::Dpi(_) => vec![0, 1, 2, 3],
            Check::Dvae(_) => vec![0, 2, 3],
        }
    }

    pub fn analytic(&self) -> recdenoise::optim::LossBundle<f64> {
        let m = &self.models;
        let set = match self.check {
            Check::Bce => ModelSet::target_only(&m[0]),
            _ => ModelSet { target: &m[0], aux: Some(&m[1]), h: Some(&m[2]), h_prime: Some(&m[3]) },
        };
        backward(&self.objective(), &set, &self.pairs).unwrap()
    }

    /// Largest relative error between analytic and central-difference
    /// gradients over `coords` random coordinates of touched parameters.
    pub fn max_relative_error(&mut self, coords: usize, step: f64, seed: u64) -> f64 {
        let bundle = self.analytic();
        let tapes = [Some(&bundle.target), bundle.aux.as_ref(), bundle.h.as_ref(), bundle.h_prime.as_ref()];
        let mut candidates = Vec::new();
        for &slot in &self.trainable() {
            for (b, block) in self.models[slot].blocks.iter().enumerate() {
                let rows: Vec<usize> = if block.kind.is_sparse() {
                    let mut r: Vec<usize> = self
                        .pairs
                        .iter()
                        .map(|p| if block.kind == BlockKind::UserRows { p.user } else { p.item })
                        .collect();
                    r.sort_unstable();
                    r.dedup();
                    r
                } else {
                    (0..block.rows).collect()
                };
                for r in rows {
                    for c in 0..block.cols {
                        candidates.push((slot, b, r * block.cols + c));
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..coords {
            let (slot, b, j) = candidates[rng.random_range(0..candidates.len())];
            let analytic = tapes[slot].expect("trainable slot has a tape").get(b, j);
            let x = self.models[slot].blocks[b].data[j];
            self.models[slot].blocks[b].data[j] = x + step;
            let up = self.oracle_loss();
            self.models[slot].blocks[b].data[j] = x - step;
            let down = self.oracle_loss();
            self.models[slot].blocks[b].data[j] = x;
            let numeric = (up - down) / (2.0 * step);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
        worst
    }
}

//! Analytic gradients for the composed objectives and lazy sparse Adam.

use std::collections::BTreeMap;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::interactions::Triple;
use crate::models::{ModelParams, ParamBlock};
use crate::objectives::{bce_grad, dpi_loss_grad, dvae_loss_grad, ObjectiveConfig, ScoreGradients};
use crate::scalar::{clamped_sigmoid, Scalar};

const ADAM_MAGIC: &[u8; 8] = b"RDNADAM\0";

/// Gradient of one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockGrad<T> {
    /// Embedding rows touched by the batch; all other rows are exactly zero.
    Rows { cols: usize, rows: BTreeMap<usize, Vec<T>> },
    Dense(Vec<T>),
}

/// Per-block gradient accumulators shaped like a [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape<T> {
    pub blocks: Vec<BlockGrad<T>>,
}

impl<T: Scalar> GradientTape<T> {
    /// A zeroed tape for `params`.
    pub fn for_params(params: &ModelParams<T>) -> Self {
        let blocks = params
            .blocks
            .iter()
            .map(|b| {
                if b.kind.is_sparse() {
                    BlockGrad::Rows { cols: b.cols, rows: BTreeMap::new() }
                } else {
                    BlockGrad::Dense(vec![T::zero(); b.data.len()])
                }
            })
            .collect();
        Self { blocks }
    }

    pub fn row_mut(&mut self, block: usize, row: usize) -> &mut [T] {
        match &mut self.blocks[block] {
            BlockGrad::Rows { cols, rows } => {
                let cols = *cols;
                rows.entry(row).or_insert_with(|| vec![T::zero(); cols])
            }
            BlockGrad::Dense(_) => panic!("block {block} is dense"),
        }
    }

    pub fn dense_mut(&mut self, block: usize) -> &mut [T] {
        match &mut self.blocks[block] {
            BlockGrad::Dense(v) => v,
            BlockGrad::Rows { .. } => panic!("block {block} is row-sparse"),
        }
    }

    /// Gradient at flat index `index` of `block`.
    pub fn get(&self, block: usize, index: usize) -> T {
        match &self.blocks[block] {
            BlockGrad::Dense(v) => v[index],
            BlockGrad::Rows { cols, rows } => rows.get(&(index / cols)).map_or(T::zero(), |r| r[index % cols]),
        }
    }

    pub fn touched_rows(&self, block: usize) -> Vec<usize> {
        match &self.blocks[block] {
            BlockGrad::Rows { rows, .. } => rows.keys().copied().collect(),
            BlockGrad::Dense(_) => Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == T::zero())
    }

    fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.blocks.iter().flat_map(|b| -> Box<dyn Iterator<Item = T> + '_> {
            match b {
                BlockGrad::Dense(v) => Box::new(v.iter().copied()),
                BlockGrad::Rows { rows, .. } => Box::new(rows.values().flatten().copied()),
            }
        })
    }

    /// Name of the first block holding a non-finite entry.
    fn first_non_finite(&self, params: &ModelParams<T>) -> Option<String> {
        self.blocks.iter().zip(&params.blocks).find_map(|(g, p)| {
            let bad = match g {
                BlockGrad::Dense(v) => v.iter().any(|x| !x.is_finite()),
                BlockGrad::Rows { rows, .. } => rows.values().flatten().any(|x| !x.is_finite()),
            };
            bad.then(|| p.name.clone())
        })
    }
}

/// Adam moments for one model, with the optimizer constants.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub t: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments; β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(params: &ModelParams<T>, lr: T) -> Self {
        let zeros = |b: &ParamBlock<T>| vec![T::zero(); b.data.len()];
        Self {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            t: 0,
            first: params.blocks.iter().map(zeros).collect(),
            second: params.blocks.iter().map(zeros).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(ADAM_MAGIC);
        w.str(T::DTYPE);
        w.scalars(&[self.lr, self.beta1, self.beta2, self.eps]);
        w.u64(self.t);
        w.u32(self.first.len() as u32);
        for (m, v) in self.first.iter().zip(&self.second) {
            w.scalars(m);
            w.scalars(v);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != ADAM_MAGIC {
            return Err(Error::Checkpoint("not an optimizer checkpoint".into()));
        }
        let dtype = r.str()?;
        if dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!("optimizer state holds {dtype}, expected {}", T::DTYPE)));
        }
        let consts: Vec<T> = r.scalars()?;
        if consts.len() != 4 {
            return Err(Error::Checkpoint("bad optimizer constants".into()));
        }
        let t = r.u64()?;
        let n = r.u32()? as usize;
        let (mut first, mut second) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            first.push(r.scalars()?);
            second.push(r.scalars()?);
        }
        r.finish()?;
        Ok(Self { lr: consts[0], beta1: consts[1], beta2: consts[2], eps: consts[3], t, first, second })
    }
}

fn check_shapes<T: Scalar>(params: &ModelParams<T>, tape: &GradientTape<T>, state: &AdamState<T>) -> Result<()> {
    let n = params.blocks.len();
    if tape.blocks.len() != n || state.first.len() != n || state.second.len() != n {
        return Err(Error::Shape(format!(
            "{n} parameter blocks, {} gradient blocks, {} moment blocks",
            tape.blocks.len(),
            state.first.len()
        )));
    }
    for (k, (p, g)) in params.blocks.iter().zip(&tape.blocks).enumerate() {
        let ok = match g {
            BlockGrad::Dense(v) => !p.kind.is_sparse() && v.len() == p.data.len(),
            BlockGrad::Rows { cols, rows } => {
                p.kind.is_sparse() && *cols == p.cols && rows.keys().all(|&r| r < p.rows)
            }
        };
        if !ok || state.first[k].len() != p.data.len() || state.second[k].len() != p.data.len() {
            return Err(Error::Shape(format!("block `{}` disagrees with its gradient or moments", p.name)));
        }
    }
    Ok(())
}

/// One bias-corrected Adam step. Only rows present in the tape are read or
/// written, moments included; dense blocks are updated in full.
pub fn adam_step<T: Scalar>(params: &mut ModelParams<T>, tape: &GradientTape<T>, state: &mut AdamState<T>) -> Result<()> {
    check_shapes(params, tape, state)?;
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let (lr, eps) = (state.lr, state.eps);
    // Returns false once the squared gradient overflows, which would
    // otherwise freeze the coordinate silently.
    let update = |theta: &mut T, m: &mut T, v: &mut T, g: T| -> bool {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        v.is_finite() && theta.is_finite()
    };
    for (k, (block, grad)) in params.blocks.iter_mut().zip(&tape.blocks).enumerate() {
        let (first, second) = (&mut state.first[k], &mut state.second[k]);
        let mut ok = true;
        match grad {
            BlockGrad::Dense(g) => {
                for j in 0..g.len() {
                    ok &= update(&mut block.data[j], &mut first[j], &mut second[j], g[j]);
                }
            }
            BlockGrad::Rows { cols, rows } => {
                for (&r, g) in rows {
                    for c in 0..*cols {
                        let j = r * cols + c;
                        ok &= update(&mut block.data[j], &mut first[j], &mut second[j], g[c]);
                    }
                }
            }
        }
        if !ok {
            return Err(Error::NonFiniteGradient { block: format!("{} (adam moment overflow)", block.name) });
        }
    }
    Ok(())
}

/// Adds the gradient of `λ‖θ‖²` to `tape`, restricted to the rows the batch
/// touched plus every dense block, and returns the penalty value.
pub fn add_l2<T: Scalar>(tape: &mut GradientTape<T>, params: &ModelParams<T>, lambda: T) -> T {
    if lambda == T::zero() {
        return T::zero();
    }
    let two = T::of(2.0);
    let mut penalty = T::zero();
    for (grad, block) in tape.blocks.iter_mut().zip(&params.blocks) {
        match grad {
            BlockGrad::Dense(g) => {
                for (gj, &x) in g.iter_mut().zip(&block.data) {
                    *gj += two * lambda * x;
                    penalty += lambda * x * x;
                }
            }
            BlockGrad::Rows { rows, .. } => {
                for (&r, g) in rows.iter_mut() {
                    for (gj, &x) in g.iter_mut().zip(block.row(r)) {
                        *gj += two * lambda * x;
                        penalty += lambda * x * x;
                    }
                }
            }
        }
    }
    penalty
}

/// A pair with its observed label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledPair {
    pub user: usize,
    pub item: usize,
    pub observed: bool,
}

/// Expands training triples into `(u, i₊, 1)`, `(u, i₋, 0)` pairs.
pub fn labeled_pairs(batch: &[Triple]) -> Vec<LabeledPair> {
    batch
        .iter()
        .flat_map(|t| {
            [
                LabeledPair { user: t.user, item: t.positive, observed: true },
                LabeledPair { user: t.user, item: t.negative, observed: false },
            ]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective<T> {
    /// Plain cross-entropy on the target model.
    Bce,
    /// Target `f`, co-trained auxiliary `g`, channels `h`, `h'`.
    Dpi(ObjectiveConfig<T>),
    /// Target `f`, frozen prior in the auxiliary slot, channels `h`, `h'`.
    Dvae(ObjectiveConfig<T>),
}

/// The models an objective reads.
#[derive(Debug, Clone, Copy)]
pub struct ModelSet<'a, T> {
    pub target: &'a ModelParams<T>,
    pub aux: Option<&'a ModelParams<T>>,
    pub h: Option<&'a ModelParams<T>>,
    pub h_prime: Option<&'a ModelParams<T>>,
}

impl<'a, T> ModelSet<'a, T> {
    pub fn target_only(target: &'a ModelParams<T>) -> Self {
        Self { target, aux: None, h: None, h_prime: None }
    }
}

/// Loss value and gradients for every trainable model named by the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBundle<T> {
    pub loss: T,
    pub target: GradientTape<T>,
    /// Only present for DPI; the DVAE prior is never differentiated.
    pub aux: Option<GradientTape<T>>,
    pub h: Option<GradientTape<T>>,
    pub h_prime: Option<GradientTape<T>>,
}

struct Scored<T> {
    prob: Vec<T>,
    slope: Vec<T>,
}

fn score_all<T: Scalar>(model: &ModelParams<T>, pairs: &[LabeledPair]) -> Result<Scored<T>> {
    let mut prob = Vec::with_capacity(pairs.len());
    let mut slope = Vec::with_capacity(pairs.len());
    for p in pairs {
        model.forward(p.user, p.item)?;
        let (s, ds) = clamped_sigmoid(model.logit(p.user, p.item));
        prob.push(s);
        slope.push(ds);
    }
    Ok(Scored { prob, slope })
}

fn chain<T: Scalar>(model: &ModelParams<T>, pairs: &[LabeledPair], scored: &Scored<T>, d_prob: &[T]) -> GradientTape<T> {
    let mut tape = GradientTape::for_params(model);
    for (k, p) in pairs.iter().enumerate() {
        model.backward_logit(p.user, p.item, d_prob[k] * scored.slope[k], &mut tape);
    }
    tape
}

fn require<'a, T>(m: Option<&'a ModelParams<T>>, what: &str) -> Result<&'a ModelParams<T>> {
    m.ok_or_else(|| Error::Config(format!("objective needs a {what} model")))
}

/// Evaluates `objective` on `pairs` and back-propagates analytically through
/// the clamped sigmoid into every trainable model.
pub fn backward<T: Scalar>(objective: &Objective<T>, models: &ModelSet<'_, T>, pairs: &[LabeledPair]) -> Result<LossBundle<T>> {
    let observed: Vec<bool> = pairs.iter().map(|p| p.observed).collect();
    let f = score_all(models.target, pairs)?;
    let bundle = match objective {
        Objective::Bce => {
            let (loss, d_f) = bce_grad(&f.prob, &observed);
            LossBundle { loss, target: chain(models.target, pairs, &f, &d_f), aux: None, h: None, h_prime: None }
        }
        Objective::Dpi(cfg) | Objective::Dvae(cfg) => {
            let aux_model = require(models.aux, "auxiliary/prior")?;
            let h_model = require(models.h, "h")?;
            let hp_model = require(models.h_prime, "h'")?;
            let aux = score_all(aux_model, pairs)?;
            let h = score_all(h_model, pairs)?;
            let hp = score_all(hp_model, pairs)?;
            let ScoreGradients { value, f: d_f, aux: d_aux, h: d_h, h_prime: d_hp } = match objective {
                Objective::Dpi(_) => dpi_loss_grad(&f.prob, &aux.prob, &h.prob, &hp.prob, &observed, cfg),
                _ => dvae_loss_grad(&f.prob, &aux.prob, &h.prob, &hp.prob, &observed, cfg),
            };
            LossBundle {
                loss: value,
                target: chain(models.target, pairs, &f, &d_f),
                aux: d_aux.map(|d| chain(aux_model, pairs, &aux, &d)),
                h: Some(chain(h_model, pairs, &h, &d_h)),
                h_prime: Some(chain(hp_model, pairs, &hp, &d_hp)),
            }
        }
    };
    let checks = [
        (Some(&bundle.target), Some(models.target), "target"),
        (bundle.aux.as_ref(), models.aux, "aux"),
        (bundle.h.as_ref(), models.h, "h"),
        (bundle.h_prime.as_ref(), models.h_prime, "h'"),
    ];
    for (tape, model, role) in checks {
        if let (Some(tape), Some(model)) = (tape, model) {
            if let Some(block) = tape.first_non_finite(model) {
                return Err(Error::NonFiniteGradient { block: format!("{role}/{block}") });
            }
        }
    }
    Ok(bundle)
}

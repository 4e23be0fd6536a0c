//! Scoring models mapping a `(user, item)` pair to a probability in `(0, 1)`.
//!
//! Every model role (target, auxiliary, corruption channels, frozen prior) is
//! one [`ModelParams`] instance. Parameters live in named row-major blocks so
//! the optimizer and checkpoint code can treat all architectures uniformly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::optim::GradientTape;
use crate::scalar::{clamped_sigmoid, Scalar};

pub const DEFAULT_DIM: usize = 32;
const EMBEDDING_STD: f64 = 0.01;
const CHECKPOINT_MAGIC: &[u8; 8] = b"RDNMODEL";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Mf,
    Gmf,
    NeuMf,
}

impl Arch {
    fn code(self) -> u8 {
        match self {
            Arch::Mf => 0,
            Arch::Gmf => 1,
            Arch::NeuMf => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Arch::Mf),
            1 => Ok(Arch::Gmf),
            2 => Ok(Arch::NeuMf),
            _ => Err(Error::Checkpoint(format!("unknown arch code {c}"))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Mf => "mf",
            Arch::Gmf => "gmf",
            Arch::NeuMf => "neumf",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(Arch::Mf),
            "gmf" => Ok(Arch::Gmf),
            "neumf" => Ok(Arch::NeuMf),
            _ => Err(Error::Config(format!("unknown arch `{s}`"))),
        }
    }
}

/// How a block is indexed by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// One row per user; updated sparsely.
    UserRows,
    /// One row per item; updated sparsely.
    ItemRows,
    /// Shared weights; updated every step.
    Dense,
}

impl BlockKind {
    pub fn is_sparse(self) -> bool {
        !matches!(self, BlockKind::Dense)
    }

    fn code(self) -> u8 {
        match self {
            BlockKind::UserRows => 0,
            BlockKind::ItemRows => 1,
            BlockKind::Dense => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(BlockKind::UserRows),
            1 => Ok(BlockKind::ItemRows),
            2 => Ok(BlockKind::Dense),
            _ => Err(Error::Checkpoint(format!("unknown block kind {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<T> {
    pub name: String,
    pub kind: BlockKind,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> ParamBlock<T> {
    fn zeros(name: &str, kind: BlockKind, rows: usize, cols: usize) -> Self {
        Self {
            name: name.to_owned(),
            kind,
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    fn normal(name: &str, kind: BlockKind, rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| T::of(std * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self {
            name: name.to_owned(),
            kind,
            rows,
            cols,
            data,
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// A model output already passed through the clamped sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Score<T>(T);

impl<T: Scalar> Score<T> {
    pub fn from_logit(logit: T) -> Self {
        Score(clamped_sigmoid(logit).0)
    }

    pub fn get(self) -> T {
        self.0
    }
}

/// Anything that can rank items for a user. Larger is better; only the order
/// matters.
pub trait Scorer {
    fn rank_score(&self, user: usize, item: usize) -> f64;
}

impl<F: Fn(usize, usize) -> f64> Scorer for F {
    fn rank_score(&self, user: usize, item: usize) -> f64 {
        self(user, item)
    }
}

// Block layout per architecture.
const USER: usize = 0;
const ITEM: usize = 1;
const GMF_OUT: usize = 2;
const N_USER_MLP: usize = 2;
const N_ITEM_MLP: usize = 3;
const N_W1: usize = 4;
const N_B1: usize = 5;
const N_W2: usize = 6;
const N_B2: usize = 7;
const N_OUT_GMF: usize = 8;
const N_OUT_MLP: usize = 9;

/// Parameters of one scoring model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub arch: Arch,
    pub num_users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub seed: u64,
    pub blocks: Vec<ParamBlock<T>>,
}

/// Intermediate NeuMF activations needed by the backward pass.
struct MlpCache<T> {
    input: Vec<T>,
    z1: Vec<T>,
    a1: Vec<T>,
    z2: Vec<T>,
    a2: Vec<T>,
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

impl<T: Scalar> ModelParams<T> {
    /// Embeddings ~ N(0, 0.01²); dense weights ~ N(0, 1/fan_in); biases zero.
    pub fn init(arch: Arch, num_users: usize, num_items: usize, dim: usize, seed: u64) -> Result<Self> {
        if num_users == 0 || num_items == 0 || dim == 0 {
            return Err(Error::Config(format!(
                "model dimensions must be positive (users {num_users}, items {num_items}, dim {dim})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dim;
        let mut blocks = vec![
            ParamBlock::normal("user_embedding", BlockKind::UserRows, num_users, d, EMBEDDING_STD, &mut rng),
            ParamBlock::normal("item_embedding", BlockKind::ItemRows, num_items, d, EMBEDDING_STD, &mut rng),
        ];
        match arch {
            Arch::Mf => {}
            Arch::Gmf => {
                blocks.push(ParamBlock::normal("output", BlockKind::Dense, 1, d, (1.0 / d as f64).sqrt(), &mut rng));
            }
            Arch::NeuMf => {
                let h2 = Self::mlp_out_width(d);
                blocks.push(ParamBlock::normal("user_embedding_mlp", BlockKind::UserRows, num_users, d, EMBEDDING_STD, &mut rng));
                blocks.push(ParamBlock::normal("item_embedding_mlp", BlockKind::ItemRows, num_items, d, EMBEDDING_STD, &mut rng));
                blocks.push(ParamBlock::normal("mlp_w1", BlockKind::Dense, d, 2 * d, (1.0 / (2 * d) as f64).sqrt(), &mut rng));
                blocks.push(ParamBlock::zeros("mlp_b1", BlockKind::Dense, 1, d));
                blocks.push(ParamBlock::normal("mlp_w2", BlockKind::Dense, h2, d, (1.0 / d as f64).sqrt(), &mut rng));
                blocks.push(ParamBlock::zeros("mlp_b2", BlockKind::Dense, 1, h2));
                let fan_in = (d + h2) as f64;
                blocks.push(ParamBlock::normal("output_gmf", BlockKind::Dense, 1, d, (1.0 / fan_in).sqrt(), &mut rng));
                blocks.push(ParamBlock::normal("output_mlp", BlockKind::Dense, 1, h2, (1.0 / fan_in).sqrt(), &mut rng));
            }
        }
        Ok(Self {
            arch,
            num_users,
            num_items,
            dim,
            seed,
            blocks,
        })
    }

    /// Width of the last NeuMF hidden layer: `[2d → d → d/2]`.
    pub fn mlp_out_width(dim: usize) -> usize {
        (dim / 2).max(1)
    }

    pub fn num_parameters(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.data.iter().all(|v| v.is_finite()))
    }

    fn check(&self, user: usize, item: usize) -> Result<()> {
        if user >= self.num_users {
            return Err(Error::IndexOutOfRange { what: "user", index: user, bound: self.num_users });
        }
        if item >= self.num_items {
            return Err(Error::IndexOutOfRange { what: "item", index: item, bound: self.num_items });
        }
        Ok(())
    }

    fn require(&self, arch: Arch) -> Result<()> {
        if self.arch == arch {
            Ok(())
        } else {
            Err(Error::Config(format!("model is {}, expected {arch}", self.arch)))
        }
    }

    fn mlp_forward(&self, user: usize, item: usize) -> MlpCache<T> {
        let b = &self.blocks;
        let mut input = b[N_USER_MLP].row(user).to_vec();
        input.extend_from_slice(b[N_ITEM_MLP].row(item));
        let layer = |w: &ParamBlock<T>, bias: &ParamBlock<T>, x: &[T]| -> (Vec<T>, Vec<T>) {
            let z: Vec<T> = (0..w.rows).map(|r| dot(w.row(r), x) + bias.data[r]).collect();
            let a = z.iter().map(|&v| v.max(T::zero())).collect();
            (z, a)
        };
        let (z1, a1) = layer(&b[N_W1], &b[N_B1], &input);
        let (z2, a2) = layer(&b[N_W2], &b[N_B2], &a1);
        MlpCache { input, z1, a1, z2, a2 }
    }

    /// Pre-sigmoid output. Indices are not checked.
    pub fn logit(&self, user: usize, item: usize) -> T {
        let p = self.blocks[USER].row(user);
        let q = self.blocks[ITEM].row(item);
        match self.arch {
            Arch::Mf => dot(p, q),
            Arch::Gmf => {
                let w = &self.blocks[GMF_OUT].data;
                (0..self.dim).fold(T::zero(), |acc, k| acc + w[k] * p[k] * q[k])
            }
            Arch::NeuMf => {
                let w = &self.blocks[N_OUT_GMF].data;
                let gmf = (0..self.dim).fold(T::zero(), |acc, k| acc + w[k] * p[k] * q[k]);
                let cache = self.mlp_forward(user, item);
                gmf + dot(&self.blocks[N_OUT_MLP].data, &cache.a2)
            }
        }
    }

    /// Clamped probability for any architecture.
    pub fn forward(&self, user: usize, item: usize) -> Result<Score<T>> {
        self.check(user, item)?;
        Ok(Score::from_logit(self.logit(user, item)))
    }

    /// `σ(⟨p_u, q_i⟩)`.
    pub fn forward_mf(&self, user: usize, item: usize) -> Result<Score<T>> {
        self.require(Arch::Mf)?;
        self.forward(user, item)
    }

    /// `σ(w · (p_u ⊙ q_i))`.
    pub fn forward_gmf(&self, user: usize, item: usize) -> Result<Score<T>> {
        self.require(Arch::Gmf)?;
        self.forward(user, item)
    }

    /// `σ(w_g · (p_u ⊙ q_i) + w_m · MLP([p'_u ; q'_i]))` with ReLU hidden layers.
    pub fn forward_neumf(&self, user: usize, item: usize) -> Result<Score<T>> {
        self.require(Arch::NeuMf)?;
        self.forward(user, item)
    }

    /// Accumulates `d_logit · ∂logit/∂θ` into `tape`.
    pub fn backward_logit(&self, user: usize, item: usize, d_logit: T, tape: &mut GradientTape<T>) {
        if d_logit == T::zero() {
            return;
        }
        let d = self.dim;
        let p = self.blocks[USER].row(user);
        let q = self.blocks[ITEM].row(item);
        match self.arch {
            Arch::Mf => {
                axpy(tape.row_mut(USER, user), d_logit, q);
                axpy(tape.row_mut(ITEM, item), d_logit, p);
            }
            Arch::Gmf | Arch::NeuMf => {
                let out = if self.arch == Arch::Gmf { GMF_OUT } else { N_OUT_GMF };
                let w = &self.blocks[out].data;
                {
                    let gw = tape.dense_mut(out);
                    for k in 0..d {
                        gw[k] += d_logit * p[k] * q[k];
                    }
                }
                {
                    let gp = tape.row_mut(USER, user);
                    for k in 0..d {
                        gp[k] += d_logit * w[k] * q[k];
                    }
                }
                let gq = tape.row_mut(ITEM, item);
                for k in 0..d {
                    gq[k] += d_logit * w[k] * p[k];
                }
                if self.arch == Arch::NeuMf {
                    self.mlp_backward(user, item, d_logit, tape);
                }
            }
        }
    }

    fn mlp_backward(&self, user: usize, item: usize, d_logit: T, tape: &mut GradientTape<T>) {
        let d = self.dim;
        let b = &self.blocks;
        let c = self.mlp_forward(user, item);
        axpy(tape.dense_mut(N_OUT_MLP), d_logit, &c.a2);
        let w_out = &b[N_OUT_MLP].data;
        let dz2: Vec<T> = (0..c.z2.len())
            .map(|r| if c.z2[r] > T::zero() { d_logit * w_out[r] } else { T::zero() })
            .collect();
        let w2 = &b[N_W2];
        {
            let g = tape.dense_mut(N_W2);
            for r in 0..w2.rows {
                for k in 0..w2.cols {
                    g[r * w2.cols + k] += dz2[r] * c.a1[k];
                }
            }
        }
        axpy(tape.dense_mut(N_B2), T::one(), &dz2);
        let dz1: Vec<T> = (0..c.z1.len())
            .map(|k| {
                if c.z1[k] > T::zero() {
                    (0..w2.rows).fold(T::zero(), |acc, r| acc + w2.data[r * w2.cols + k] * dz2[r])
                } else {
                    T::zero()
                }
            })
            .collect();
        let w1 = &b[N_W1];
        {
            let g = tape.dense_mut(N_W1);
            for r in 0..w1.rows {
                for k in 0..w1.cols {
                    g[r * w1.cols + k] += dz1[r] * c.input[k];
                }
            }
        }
        axpy(tape.dense_mut(N_B1), T::one(), &dz1);
        let dx: Vec<T> = (0..w1.cols)
            .map(|k| (0..w1.rows).fold(T::zero(), |acc, r| acc + w1.data[r * w1.cols + k] * dz1[r]))
            .collect();
        axpy(tape.row_mut(N_USER_MLP, user), T::one(), &dx[..d]);
        axpy(tape.row_mut(N_ITEM_MLP, item), T::one(), &dx[d..]);
    }

    /// Serializes to the checkpoint format: a header (magic, version, dtype,
    /// arch, users, items, dim, seed) followed by row-major blocks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(T::DTYPE);
        w.u8(self.arch.code());
        w.u64(self.num_users as u64);
        w.u64(self.num_items as u64);
        w.u64(self.dim as u64);
        w.u64(self.seed);
        w.u32(self.blocks.len() as u32);
        for b in &self.blocks {
            w.str(&b.name);
            w.u8(b.kind.code());
            w.u64(b.rows as u64);
            w.u64(b.cols as u64);
            w.scalars(&b.data);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a model checkpoint".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let dtype = r.str()?;
        if dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!("checkpoint holds {dtype}, expected {}", T::DTYPE)));
        }
        let arch = Arch::from_code(r.u8()?)?;
        let num_users = r.usize()?;
        let num_items = r.usize()?;
        let dim = r.usize()?;
        let seed = r.u64()?;
        let n = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.str()?;
            let kind = BlockKind::from_code(r.u8()?)?;
            let rows = r.usize()?;
            let cols = r.usize()?;
            let data = r.scalars()?;
            if data.len() != rows * cols {
                return Err(Error::Checkpoint(format!("block `{name}` has wrong length")));
            }
            blocks.push(ParamBlock { name, kind, rows, cols, data });
        }
        r.finish()?;
        let model = Self { arch, num_users, num_items, dim, seed, blocks };
        let layout = Self::init(arch, 1, 1, dim, 0)?;
        let same_layout = model.blocks.len() == layout.blocks.len()
            && model.blocks.iter().zip(&layout.blocks).all(|(a, b)| {
                a.name == b.name && a.kind == b.kind && a.cols == b.cols && (a.kind.is_sparse() || a.rows == b.rows)
            });
        if !same_layout {
            return Err(Error::Checkpoint(format!("block layout does not match arch {arch}")));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the checkpoint bytes, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl<T: Scalar> Scorer for ModelParams<T> {
    fn rank_score(&self, user: usize, item: usize) -> f64 {
        self.logit(user, item).as_f64()
    }
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{sigmoid, PROB_EPS};

    fn set_row(m: &mut ModelParams<f64>, block: usize, row: usize, v: &[f64]) {
        m.blocks[block].row_mut(row).copy_from_slice(v);
    }

    #[test]
    fn mf_closed_forms() {
        let mut m = ModelParams::<f64>::init(Arch::Mf, 2, 2, 2, 1).unwrap();
        set_row(&mut m, USER, 0, &[0.0, 0.0]);
        assert_eq!(m.forward_mf(0, 0).unwrap().get(), 0.5);
        set_row(&mut m, USER, 1, &[1.0, 0.0]);
        set_row(&mut m, ITEM, 1, &[1.0, 0.0]);
        let s = m.forward_mf(1, 1).unwrap().get();
        assert!((s - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((s - sigmoid(1.0)).abs() < 1e-15);
    }

    #[test]
    fn mf_is_symmetric_under_vector_swap() {
        let mut a = ModelParams::<f64>::init(Arch::Mf, 1, 1, 3, 2).unwrap();
        set_row(&mut a, USER, 0, &[0.3, -0.2, 0.9]);
        set_row(&mut a, ITEM, 0, &[-1.1, 0.4, 0.5]);
        let mut b = a.clone();
        set_row(&mut b, USER, 0, &[-1.1, 0.4, 0.5]);
        set_row(&mut b, ITEM, 0, &[0.3, -0.2, 0.9]);
        assert_eq!(a.forward(0, 0).unwrap(), b.forward(0, 0).unwrap());
    }

    #[test]
    fn gmf_examples() {
        let mut g = ModelParams::<f64>::init(Arch::Gmf, 1, 1, 2, 0).unwrap();
        set_row(&mut g, USER, 0, &[2.0, 1.0]);
        set_row(&mut g, ITEM, 0, &[1.0, -1.0]);
        g.blocks[GMF_OUT].data = vec![0.5, 1.0];
        assert_eq!(g.forward_gmf(0, 0).unwrap().get(), 0.5);
        set_row(&mut g, USER, 0, &[0.0, 0.0]);
        assert_eq!(g.forward_gmf(0, 0).unwrap().get(), 0.5);
    }

    #[test]
    fn gmf_with_unit_output_equals_mf() {
        let mut g = ModelParams::<f64>::init(Arch::Gmf, 5, 7, 4, 3).unwrap();
        g.blocks[GMF_OUT].data = vec![1.0; 4];
        let mut m = ModelParams::<f64>::init(Arch::Mf, 5, 7, 4, 99).unwrap();
        m.blocks[USER] = g.blocks[USER].clone();
        m.blocks[ITEM] = g.blocks[ITEM].clone();
        for u in 0..5 {
            for i in 0..7 {
                assert_eq!(g.forward(u, i).unwrap(), m.forward(u, i).unwrap());
            }
        }
    }

    #[test]
    fn neumf_zero_mlp_reduces_to_gmf() {
        let mut n = ModelParams::<f64>::init(Arch::NeuMf, 3, 3, 4, 5).unwrap();
        n.blocks[N_OUT_MLP].data.iter_mut().for_each(|w| *w = 0.0);
        let mut g = ModelParams::<f64>::init(Arch::Gmf, 3, 3, 4, 5).unwrap();
        g.blocks[USER] = n.blocks[USER].clone();
        g.blocks[ITEM] = n.blocks[ITEM].clone();
        g.blocks[GMF_OUT].data = n.blocks[N_OUT_GMF].data.clone();
        for u in 0..3 {
            for i in 0..3 {
                assert_eq!(n.logit(u, i), g.logit(u, i));
            }
        }
        for b in &mut n.blocks {
            b.data.iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(n.forward_neumf(1, 2).unwrap().get(), 0.5);
    }

    #[test]
    fn neumf_hand_evaluation() {
        // d = 2: MLP [4 → 2 → 1].
        let mut n = ModelParams::<f64>::init(Arch::NeuMf, 1, 1, 2, 0).unwrap();
        set_row(&mut n, USER, 0, &[1.0, 2.0]);
        set_row(&mut n, ITEM, 0, &[0.5, -1.0]);
        set_row(&mut n, N_USER_MLP, 0, &[1.0, 0.0]);
        set_row(&mut n, N_ITEM_MLP, 0, &[0.0, 2.0]);
        n.blocks[N_W1].data = vec![0.5, 0.0, 0.0, 0.25, /* row 2 */ -1.0, 0.0, 0.0, 0.0];
        n.blocks[N_B1].data = vec![0.1, 0.2];
        n.blocks[N_W2].data = vec![2.0, 3.0];
        n.blocks[N_B2].data = vec![-0.4];
        n.blocks[N_OUT_GMF].data = vec![1.0, 0.5];
        n.blocks[N_OUT_MLP].data = vec![0.5];
        // gmf: 1*1*0.5 + 0.5*2*(-1) = -0.5
        // z1 = [0.5*1 + 0.25*2 + 0.1, -1 + 0.2] = [1.1, -0.8]; a1 = [1.1, 0]
        // z2 = 2*1.1 - 0.4 = 1.8; mlp out = 0.5 * 1.8 = 0.9
        let expected = sigmoid(-0.5 + 0.9);
        assert!((n.forward_neumf(0, 0).unwrap().get() - expected).abs() < 1e-12);
    }

    #[test]
    fn arch_and_index_errors() {
        let m = ModelParams::<f64>::init(Arch::Mf, 2, 2, 2, 0).unwrap();
        assert!(m.forward_gmf(0, 0).is_err());
        assert!(matches!(m.forward(2, 0), Err(Error::IndexOutOfRange { what: "user", .. })));
        assert!(matches!(m.forward(0, 5), Err(Error::IndexOutOfRange { what: "item", .. })));
    }

    #[test]
    fn init_is_deterministic_and_near_half() {
        let a = ModelParams::<f64>::init(Arch::Gmf, 50, 40, DEFAULT_DIM, 7).unwrap();
        let b = ModelParams::<f64>::init(Arch::Gmf, 50, 40, DEFAULT_DIM, 7).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a.dim, 32);
        for arch in [Arch::Mf, Arch::Gmf, Arch::NeuMf] {
            let m = ModelParams::<f64>::init(arch, 50, 40, DEFAULT_DIM, 11).unwrap();
            for k in 0..1000 {
                let s = m.forward(k % 50, (k * 7) % 40).unwrap().get();
                assert!(s > 0.4 && s < 0.6, "{arch}: {s}");
            }
        }
    }

    #[test]
    fn clamp_bounds_output() {
        let mut m = ModelParams::<f64>::init(Arch::Mf, 1, 1, 1, 0).unwrap();
        set_row(&mut m, USER, 0, &[100.0]);
        set_row(&mut m, ITEM, 0, &[100.0]);
        assert_eq!(m.forward(0, 0).unwrap().get(), 1.0 - PROB_EPS);
        set_row(&mut m, ITEM, 0, &[-100.0]);
        assert_eq!(m.forward(0, 0).unwrap().get(), PROB_EPS);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        for arch in [Arch::Mf, Arch::Gmf, Arch::NeuMf] {
            let m = ModelParams::<f64>::init(arch, 4, 6, 8, 42).unwrap();
            let back = ModelParams::<f64>::from_bytes(&m.to_bytes()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.fingerprint(), m.fingerprint());
        }
        let m = ModelParams::<f32>::init(Arch::Gmf, 2, 2, 4, 1).unwrap();
        assert!(ModelParams::<f64>::from_bytes(&m.to_bytes()).is_err());
        let mut bytes = m.to_bytes();
        bytes.pop();
        assert!(ModelParams::<f32>::from_bytes(&bytes).is_err());
    }
}

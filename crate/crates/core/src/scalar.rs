//! Floating-point scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Probability clamp applied to every model output before a logarithm is taken.
pub const PROB_EPS: f64 = 1e-7;

/// Real scalar used by models, objectives and optimizers: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Tag written into checkpoints.
    const DTYPE: &'static str;
    /// Encoded width in bytes.
    const WIDTH: usize;

    fn write_le(self, out: &mut Vec<u8>);
    /// `bytes` must be exactly `WIDTH` long.
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const WIDTH: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 4];
        buf.copy_from_slice(bytes);
        f32::from_le_bytes(buf)
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const WIDTH: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(bytes);
        f64::from_le_bytes(buf)
    }
}

/// Logistic function.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Sigmoid clamped to `[PROB_EPS, 1 - PROB_EPS]`, together with its derivative
/// with respect to `x`. The derivative is zero where the clamp is engaged.
#[inline]
pub fn clamped_sigmoid<T: Scalar>(x: T) -> (T, T) {
    let eps = T::of(PROB_EPS);
    let p = sigmoid(x);
    if p < eps {
        (eps, T::zero())
    } else if p > T::one() - eps {
        (T::one() - eps, T::zero())
    } else {
        (p, p * (T::one() - p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(800.0f64) <= 1.0);
        let (p, d) = clamped_sigmoid(-50.0f64);
        assert_eq!(p, PROB_EPS);
        assert_eq!(d, 0.0);
        let (p, d) = clamped_sigmoid(50.0f32);
        assert_eq!(p, 1.0 - PROB_EPS as f32);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn byte_codec_round_trips() {
        for v in [0.0f64, -1.5, f64::MIN_POSITIVE, 1e300] {
            let mut out = Vec::new();
            v.write_le(&mut out);
            assert_eq!(f64::read_le(&out).to_bits(), v.to_bits());
        }
        let mut out = Vec::new();
        3.25f32.write_le(&mut out);
        assert_eq!(f32::read_le(&out), 3.25);
    }
}

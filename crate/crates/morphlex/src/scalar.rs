//! Floating-point scalar abstraction: f32 or f64.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, NumCast};

/// Scalar type the numeric core is generic over.
pub trait Scalar:
    Float + NumAssign + NumCast + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + NumCast
        + FromPrimitive
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Lossless-enough widening for internal accumulation.
#[inline]
pub fn to_f64<F: Scalar>(v: F) -> f64 {
    v.to_f64().expect("scalar convertible to f64")
}

/// Narrowing back to the storage scalar.
#[inline]
pub fn from_f64<F: Scalar>(v: f64) -> F {
    F::from(v).expect("f64 convertible to scalar")
}

/// Dot product accumulated in f64 regardless of the storage scalar.
#[inline]
pub fn dot64<F: Scalar>(a: &[F], b: &[F]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += to_f64(*x) * to_f64(*y);
    }
    acc
}

/// Euclidean norm accumulated in f64.
#[inline]
pub fn norm64<F: Scalar>(a: &[F]) -> f64 {
    dot64(a, a).sqrt()
}

/// Cosine similarity in f64; zero-norm vectors score 0.
#[inline]
pub fn cosine64<F: Scalar>(a: &[F], b: &[F]) -> f64 {
    let na = norm64(a);
    let nb = norm64(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot64(a, b) / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_widens_to_f64() {
        let a: Vec<f32> = vec![1.0, 2.0, 3.0];
        let b: Vec<f32> = vec![4.0, 5.0, 6.0];
        assert_eq!(dot64(&a, &b), 32.0);
    }

    #[test]
    fn cosine_of_zero_vector_is_zero() {
        let z: Vec<f64> = vec![0.0, 0.0];
        let a: Vec<f64> = vec![1.0, 0.0];
        assert_eq!(cosine64(&z, &a), 0.0);
    }

    #[test]
    fn cosine_is_scale_free() {
        let a: Vec<f64> = vec![3.0, 4.0];
        let b: Vec<f64> = vec![6.0, 8.0];
        assert!((cosine64(&a, &b) - 1.0).abs() < 1e-12);
    }
}

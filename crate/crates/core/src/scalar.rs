//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive};
use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used by paths, exponentials and estimators: `f32` or `f64`.
///
/// Sampling hooks live on the trait so generic code never has to spell out
/// `Exp1: Distribution<S>`-style bounds at every call site.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Uniform draw on the open interval (0, 1).
    fn sample_open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Standard exponential draw (mean 1).
    fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Standard normal draw.
    fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn sample_open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Open01.sample(rng)
            }

            #[inline]
            fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Exp1.sample(rng)
            }

            #[inline]
            fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

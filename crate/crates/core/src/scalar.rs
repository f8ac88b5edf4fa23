//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
}

/// `1 - e^{-a}` without cancellation for small `a`.
#[inline]
pub fn one_minus_exp_neg<T: Real>(a: T) -> T {
    -(-a).exp_m1()
}

/// `a - 1 + e^{-a}`, evaluated by its Taylor series `sum_{n>=2} (-a)^n / n!`
/// when `a` is small.
pub fn exp_neg_remainder2<T: Real>(a: T) -> T {
    if a.abs() <= T::one() {
        let mut term = a * a / T::lit(2.0);
        let mut sum = T::zero();
        let mut n = 2usize;
        while n < 60 {
            sum = sum + term;
            if term.abs() <= T::epsilon() * sum.abs() {
                break;
            }
            n += 1;
            term = -term * a / T::from_usize_lossy(n);
        }
        sum
    } else {
        a - one_minus_exp_neg(a)
    }
}

/// `2a - 3 + 4e^{-a} - e^{-2a}`, the bracket of the position variance of the
/// kinetic Ornstein–Uhlenbeck step. Cancels to third order at `a -> 0`, so
/// the series `sum_{n>=3} (-1)^n (4 - 2^n) a^n / n!` is used for `a <= 1`.
pub fn position_variance_bracket<T: Real>(a: T) -> T {
    if a.abs() <= T::one() {
        let mut sum = T::zero();
        let mut power = a * a * a;
        let mut factorial = T::lit(6.0);
        let mut two_pow = T::lit(8.0);
        let mut sign = -T::one();
        for n in 3..80usize {
            let term = sign * (T::lit(4.0) - two_pow) * power / factorial;
            sum = sum + term;
            if term.abs() <= T::epsilon() * sum.abs() {
                break;
            }
            power = power * a;
            factorial = factorial * T::from_usize_lossy(n + 1);
            two_pow = two_pow * T::lit(2.0);
            sign = -sign;
        }
        sum
    } else {
        let e1 = (-a).exp();
        let om = one_minus_exp_neg(a);
        // 3 - 4e1 + e1^2 = (1 - e1)(3 - e1)
        T::lit(2.0) * a - om * (T::lit(3.0) - e1)
    }
}

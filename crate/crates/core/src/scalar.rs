//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! Networks, losses and metrics are written once against [`Scalar`] and
//! instantiated with `f32` for training, `f64` for gradient checks, and
//! [`Dual`] when a forward-mode directional derivative has to be pushed
//! through a reverse-mode backward pass (the gradient-penalty term).

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, Num, NumAssign, NumCast, One, ToPrimitive, Zero};

pub trait Scalar: Float + FromPrimitive + NumAssign + Sum + Default + fmt::Debug + fmt::Display + Send + Sync + 'static {
    /// Converts an `f64` literal. Never fails for the implementors in this crate.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::lit(v as f64)
    }

    /// Value part as `f64` (the primal part for dual numbers).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// First-order dual number `re + eps·ε` with `ε² = 0`.
///
/// Comparisons only look at the primal part, so piecewise functions
/// (leaky ReLU, clamping) pick the same branch as their real counterpart.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Float> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    pub fn real(re: T) -> Self {
        Self { re, eps: T::zero() }
    }

    #[inline]
    fn chain(self, value: T, derivative: T) -> Self {
        Self {
            re: value,
            eps: self.eps * derivative,
        }
    }
}

impl<T: Float> PartialEq for Dual<T> {
    fn eq(&self, other: &Self) -> bool {
        self.re == other.re
    }
}

impl<T: Float> PartialOrd for Dual<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.re.partial_cmp(&other.re)
    }
}

impl<T: Float + fmt::Display> fmt::Display for Dual<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}ε", self.re, self.eps)
    }
}

impl<T: Float> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self {
            re: self.re + o.re,
            eps: self.eps + o.eps,
        }
    }
}

impl<T: Float> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self {
            re: self.re - o.re,
            eps: self.eps - o.eps,
        }
    }
}

impl<T: Float> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self {
            re: self.re * o.re,
            eps: self.re * o.eps + self.eps * o.re,
        }
    }
}

impl<T: Float> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.re;
        Self {
            re: self.re * inv,
            eps: (self.eps * o.re - self.re * o.eps) * inv * inv,
        }
    }
}

impl<T: Float> Rem for Dual<T> {
    type Output = Self;
    fn rem(self, o: Self) -> Self {
        // x mod y = x - y·trunc(x/y); trunc is locally constant.
        let q = (self.re / o.re).trunc();
        Self {
            re: self.re % o.re,
            eps: self.eps - o.eps * q,
        }
    }
}

impl<T: Float> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            re: -self.re,
            eps: -self.eps,
        }
    }
}

macro_rules! assign_ops {
    ($($tr:ident $f:ident $op:tt),*) => {$(
        impl<T: Float> $tr for Dual<T> {
            #[inline]
            fn $f(&mut self, o: Self) {
                *self = *self $op o;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /, RemAssign rem_assign %);

impl<T: Float> Sum for Dual<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

impl<T: Float> Zero for Dual<T> {
    fn zero() -> Self {
        Self::real(T::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero()
    }
}

impl<T: Float> One for Dual<T> {
    fn one() -> Self {
        Self::real(T::one())
    }
}

impl<T: Float> Num for Dual<T> {
    type FromStrRadixErr = T::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        T::from_str_radix(s, radix).map(Self::real)
    }
}

impl<T: Float> ToPrimitive for Dual<T> {
    fn to_i64(&self) -> Option<i64> {
        self.re.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.re.to_u64()
    }
    fn to_f32(&self) -> Option<f32> {
        self.re.to_f32()
    }
    fn to_f64(&self) -> Option<f64> {
        self.re.to_f64()
    }
}

impl<T: Float> NumCast for Dual<T> {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        <T as NumCast>::from(n).map(Self::real)
    }
}

impl<T: Float> FromPrimitive for Dual<T> {
    fn from_i64(n: i64) -> Option<Self> {
        <T as NumCast>::from(n).map(Self::real)
    }
    fn from_u64(n: u64) -> Option<Self> {
        <T as NumCast>::from(n).map(Self::real)
    }
    fn from_f64(n: f64) -> Option<Self> {
        <T as NumCast>::from(n).map(Self::real)
    }
}

impl<T: Float> Float for Dual<T> {
    fn nan() -> Self {
        Self::real(T::nan())
    }
    fn infinity() -> Self {
        Self::real(T::infinity())
    }
    fn neg_infinity() -> Self {
        Self::real(T::neg_infinity())
    }
    fn neg_zero() -> Self {
        Self::real(T::neg_zero())
    }
    fn min_value() -> Self {
        Self::real(T::min_value())
    }
    fn min_positive_value() -> Self {
        Self::real(T::min_positive_value())
    }
    fn epsilon() -> Self {
        Self::real(T::epsilon())
    }
    fn max_value() -> Self {
        Self::real(T::max_value())
    }
    fn is_nan(self) -> bool {
        self.re.is_nan() || self.eps.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.re.is_infinite() || self.eps.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
    fn is_normal(self) -> bool {
        self.re.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.re.classify()
    }
    fn floor(self) -> Self {
        Self::real(self.re.floor())
    }
    fn ceil(self) -> Self {
        Self::real(self.re.ceil())
    }
    fn round(self) -> Self {
        Self::real(self.re.round())
    }
    fn trunc(self) -> Self {
        Self::real(self.re.trunc())
    }
    fn fract(self) -> Self {
        Self {
            re: self.re.fract(),
            eps: self.eps,
        }
    }
    fn abs(self) -> Self {
        if self.re < T::zero() {
            -self
        } else {
            self
        }
    }
    fn signum(self) -> Self {
        Self::real(self.re.signum())
    }
    fn is_sign_positive(self) -> bool {
        self.re.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.re.is_sign_negative()
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        let r = self.re.recip();
        self.chain(r, -r * r)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        let pm1 = self.re.powi(n - 1);
        self.chain(pm1 * self.re, T::from(n).unwrap() * pm1)
    }
    fn powf(self, n: Self) -> Self {
        let value = self.re.powf(n.re);
        let d_base = if n.re.is_zero() {
            T::zero()
        } else {
            n.re * self.re.powf(n.re - T::one())
        };
        let d_exp = if n.eps.is_zero() { T::zero() } else { value * self.re.ln() };
        Self {
            re: value,
            eps: self.eps * d_base + n.eps * d_exp,
        }
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        let two = T::one() + T::one();
        self.chain(s, T::one() / (two * s))
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn exp2(self) -> Self {
        let e = self.re.exp2();
        self.chain(e, e * T::from(std::f64::consts::LN_2).unwrap())
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), self.re.recip())
    }
    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }
    fn log2(self) -> Self {
        self.chain(self.re.log2(), (self.re * T::from(std::f64::consts::LN_2).unwrap()).recip())
    }
    fn log10(self) -> Self {
        self.chain(self.re.log10(), (self.re * T::from(std::f64::consts::LN_10).unwrap()).recip())
    }
    fn max(self, other: Self) -> Self {
        if other.re > self.re || self.re.is_nan() {
            other
        } else {
            self
        }
    }
    fn min(self, other: Self) -> Self {
        if other.re < self.re || self.re.is_nan() {
            other
        } else {
            self
        }
    }
    fn abs_sub(self, other: Self) -> Self {
        if self.re > other.re {
            self - other
        } else {
            Self::zero()
        }
    }
    fn cbrt(self) -> Self {
        let c = self.re.cbrt();
        self.chain(c, T::one() / (T::from(3.0).unwrap() * c * c))
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn tan(self) -> Self {
        let t = self.re.tan();
        self.chain(t, T::one() + t * t)
    }
    fn asin(self) -> Self {
        self.chain(self.re.asin(), (T::one() - self.re * self.re).sqrt().recip())
    }
    fn acos(self) -> Self {
        self.chain(self.re.acos(), -(T::one() - self.re * self.re).sqrt().recip())
    }
    fn atan(self) -> Self {
        self.chain(self.re.atan(), (T::one() + self.re * self.re).recip())
    }
    fn atan2(self, other: Self) -> Self {
        let denom = self.re * self.re + other.re * other.re;
        Self {
            re: self.re.atan2(other.re),
            eps: (other.re * self.eps - self.re * other.eps) / denom,
        }
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn exp_m1(self) -> Self {
        self.chain(self.re.exp_m1(), self.re.exp())
    }
    fn ln_1p(self) -> Self {
        self.chain(self.re.ln_1p(), (T::one() + self.re).recip())
    }
    fn sinh(self) -> Self {
        self.chain(self.re.sinh(), self.re.cosh())
    }
    fn cosh(self) -> Self {
        self.chain(self.re.cosh(), self.re.sinh())
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.chain(t, T::one() - t * t)
    }
    fn asinh(self) -> Self {
        self.chain(self.re.asinh(), (self.re * self.re + T::one()).sqrt().recip())
    }
    fn acosh(self) -> Self {
        self.chain(self.re.acosh(), (self.re * self.re - T::one()).sqrt().recip())
    }
    fn atanh(self) -> Self {
        self.chain(self.re.atanh(), (T::one() - self.re * self.re).recip())
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        self.re.integer_decode()
    }
    fn to_degrees(self) -> Self {
        let k = T::from(180.0 / std::f64::consts::PI).unwrap();
        Self {
            re: self.re * k,
            eps: self.eps * k,
        }
    }
    fn to_radians(self) -> Self {
        let k = T::from(std::f64::consts::PI / 180.0).unwrap();
        Self {
            re: self.re * k,
            eps: self.eps * k,
        }
    }
}

impl<T: Scalar> Scalar for Dual<T> {}

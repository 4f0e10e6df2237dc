//! Scalar abstraction shared by every numerical module.
//!
//! The solver is written once against [`Real`] and instantiated for `f32`,
//! `f64` and the double-double type [`Dd`]. Double-double matters for the
//! high-order space-time norms: an H^{2,4} norm on a 64² grid weights the
//! top cosine modes by roughly 10^10, so plain `f64` round-off in the field
//! values sets a residual floor far above useful stopping thresholds.

use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{FloatConst, One, Zero};

use twofloat::TwoFloat;

/// Real scalar field used throughout the crate.
pub trait Real:
    Copy
    + Send
    + Sync
    + Debug
    + Display
    + PartialOrd
    + Default
    + 'static
    + Zero
    + One
    + FloatConst
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// Short identifier used in run records.
    const NAME: &'static str;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn is_finite(self) -> bool;
    fn epsilon() -> Self;

    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }

    fn powi(self, n: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self;
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

macro_rules! impl_native {
    ($t:ty, $name:expr) => {
        impl Real for $t {
            const NAME: &'static str = $name;

            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            fn sin(self) -> Self {
                <$t>::sin(self)
            }
            fn cos(self) -> Self {
                <$t>::cos(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            fn epsilon() -> Self {
                <$t>::EPSILON
            }
        }
    };
}

impl_native!(f32, "f32");
impl_native!(f64, "f64");

/// Double-double scalar (about 32 significant digits).
///
/// Thin wrapper over [`twofloat::TwoFloat`] that replaces its division,
/// which loses the low word, with a three-step long division.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Dd(TwoFloat);

impl Dd {
    #[inline]
    pub fn from_f64(x: f64) -> Self {
        Dd(TwoFloat::from_f64(x))
    }

    #[inline]
    pub fn hi(self) -> f64 {
        self.0.hi()
    }

    #[inline]
    pub fn lo(self) -> f64 {
        self.0.lo()
    }
}

impl Display for Dd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:e}", self.hi() + self.lo())
    }
}

macro_rules! dd_binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident, $op:tt) => {
        impl $tr for Dd {
            type Output = Dd;
            #[inline]
            fn $m(self, rhs: Dd) -> Dd {
                Dd(self.0 $op rhs.0)
            }
        }
        impl $atr for Dd {
            #[inline]
            fn $am(&mut self, rhs: Dd) {
                *self = *self $op rhs;
            }
        }
    };
}

dd_binop!(Add, add, AddAssign, add_assign, +);
dd_binop!(Sub, sub, SubAssign, sub_assign, -);
dd_binop!(Mul, mul, MulAssign, mul_assign, *);

impl Div for Dd {
    type Output = Dd;
    fn div(self, rhs: Dd) -> Dd {
        let b = rhs.0;
        let q1 = self.0.hi() / b.hi();
        let r = self.0 - b * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b * q2;
        let q3 = r.hi() / b.hi();
        Dd(TwoFloat::new_add(q1, q2) + q3)
    }
}

impl DivAssign for Dd {
    #[inline]
    fn div_assign(&mut self, rhs: Dd) {
        *self = *self / rhs;
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd(-self.0)
    }
}

impl Zero for Dd {
    fn zero() -> Self {
        Dd(TwoFloat::from_f64(0.0))
    }
    fn is_zero(&self) -> bool {
        self.hi() == 0.0
    }
}

impl One for Dd {
    fn one() -> Self {
        Dd(TwoFloat::from_f64(1.0))
    }
}

#[allow(non_snake_case)]
impl FloatConst for Dd {
    fn E() -> Self { Dd(TwoFloat::E()) }
    fn FRAC_1_PI() -> Self { Dd(TwoFloat::FRAC_1_PI()) }
    fn FRAC_1_SQRT_2() -> Self { Dd(TwoFloat::FRAC_1_SQRT_2()) }
    fn FRAC_2_PI() -> Self { Dd(TwoFloat::FRAC_2_PI()) }
    fn FRAC_2_SQRT_PI() -> Self { Dd(TwoFloat::FRAC_2_SQRT_PI()) }
    fn FRAC_PI_2() -> Self { Dd(TwoFloat::FRAC_PI_2()) }
    fn FRAC_PI_3() -> Self { Dd(TwoFloat::FRAC_PI_3()) }
    fn FRAC_PI_4() -> Self { Dd(TwoFloat::FRAC_PI_4()) }
    fn FRAC_PI_6() -> Self { Dd(TwoFloat::FRAC_PI_6()) }
    fn FRAC_PI_8() -> Self { Dd(TwoFloat::FRAC_PI_8()) }
    fn LN_10() -> Self { Dd(TwoFloat::LN_10()) }
    fn LN_2() -> Self { Dd(TwoFloat::LN_2()) }
    fn LOG10_E() -> Self { Dd(TwoFloat::LOG10_E()) }
    fn LOG2_E() -> Self { Dd(TwoFloat::LOG2_E()) }
    fn PI() -> Self { Dd(TwoFloat::PI()) }
    fn SQRT_2() -> Self { Dd(TwoFloat::SQRT_2()) }
}

impl Real for Dd {
    const NAME: &'static str = "double-double";

    #[inline]
    fn from_f64(x: f64) -> Self {
        Dd::from_f64(x)
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self.hi() + self.lo()
    }
    fn sqrt(self) -> Self {
        if self.hi() <= 0.0 {
            return if self.hi() == 0.0 { Dd::zero() } else { Dd::from_f64(f64::NAN) };
        }
        // one Newton step on the f64 root
        let x = Dd::from_f64(self.hi().sqrt());
        x + (self - x * x) / (x + x)
    }
    #[inline]
    fn abs(self) -> Self {
        if self.hi() < 0.0 {
            -self
        } else {
            self
        }
    }
    fn exp(self) -> Self {
        // exp(x) = 2^k exp(r), r = x - k ln2, Taylor on r / 2^8 then square
        let k = (self.to_f64() / std::f64::consts::LN_2).round();
        let r = (self - Dd::LN_2() * Dd::from_f64(k)) / Dd::from_f64(256.0);
        let mut term = Dd::one();
        let mut acc = Dd::one();
        for n in 1..24 {
            term = term * r / Dd::from_f64(n as f64);
            acc += term;
        }
        for _ in 0..8 {
            acc = acc * acc;
        }
        acc * Dd::from_f64(2f64.powi(k as i32))
    }
    fn ln(self) -> Self {
        // Newton on exp
        let mut y = Dd::from_f64(self.to_f64().ln());
        for _ in 0..2 {
            let e = y.exp();
            y += (self - e) / e;
        }
        y
    }
    fn sin(self) -> Self {
        dd_sin_cos(self).0
    }
    fn cos(self) -> Self {
        dd_sin_cos(self).1
    }
    #[inline]
    fn is_finite(self) -> bool {
        self.hi().is_finite() && self.lo().is_finite()
    }
    fn epsilon() -> Self {
        Dd::from_f64(f64::EPSILON * f64::EPSILON)
    }
}

/// sin/cos for double-double by octant reduction and Taylor series.
///
/// The cosine tables of the spectral transforms need full precision.
fn dd_sin_cos(x: Dd) -> (Dd, Dd) {
    let pi_2 = Dd::FRAC_PI_2();
    let q = (x / pi_2).to_f64().round();
    let r = x - pi_2 * Dd::from_f64(q);
    let (s, c) = taylor_sin_cos(r);
    match (q as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

fn taylor_sin_cos(r: Dd) -> (Dd, Dd) {
    // |r| <= pi/4, 28 terms reach well below 1e-32
    let r2 = r * r;
    let mut sin = Dd::zero();
    let mut cos = Dd::zero();
    let mut term_s = r;
    let mut term_c = Dd::one();
    for n in 0..28u32 {
        sin += term_s;
        cos += term_c;
        let a = Dd::from_f64(((2 * n + 2) * (2 * n + 3)) as f64);
        let b = Dd::from_f64(((2 * n + 1) * (2 * n + 2)) as f64);
        term_s = -(term_s * r2) / a;
        term_c = -(term_c * r2) / b;
    }
    (sin, cos)
}

/// Element type that a linear transform can act on: a scalar or a 3-vector.
pub trait Lane<S: Real>: Copy + Send + Sync + Debug + PartialEq {
    fn zeroed() -> Self;
    fn scale(self, a: S) -> Self;
    fn plus(self, other: Self) -> Self;
    fn minus(self, other: Self) -> Self;
    /// `self + a * x`
    fn fma(self, a: S, x: Self) -> Self;
    fn norm_sqr(self) -> S;
}

impl<S: Real> Lane<S> for S {
    #[inline]
    fn zeroed() -> Self {
        S::zero()
    }
    #[inline]
    fn scale(self, a: S) -> Self {
        self * a
    }
    #[inline]
    fn plus(self, other: Self) -> Self {
        self + other
    }
    #[inline]
    fn minus(self, other: Self) -> Self {
        self - other
    }
    #[inline]
    fn fma(self, a: S, x: Self) -> Self {
        self + a * x
    }
    #[inline]
    fn norm_sqr(self) -> S {
        self * self
    }
}

impl<S: Real> Lane<S> for [S; 3] {
    #[inline]
    fn zeroed() -> Self {
        [S::zero(); 3]
    }
    #[inline]
    fn scale(self, a: S) -> Self {
        [self[0] * a, self[1] * a, self[2] * a]
    }
    #[inline]
    fn plus(self, o: Self) -> Self {
        [self[0] + o[0], self[1] + o[1], self[2] + o[2]]
    }
    #[inline]
    fn minus(self, o: Self) -> Self {
        [self[0] - o[0], self[1] - o[1], self[2] - o[2]]
    }
    #[inline]
    fn fma(self, a: S, x: Self) -> Self {
        [self[0] + a * x[0], self[1] + a * x[1], self[2] + a * x[2]]
    }
    #[inline]
    fn norm_sqr(self) -> S {
        self[0] * self[0] + self[1] * self[1] + self[2] * self[2]
    }
}

/// Sums a sequence of reals in order (`Sum` is not implemented by `Dd`).
pub fn sum<S: Real, I: IntoIterator<Item = S>>(it: I) -> S {
    it.into_iter().fold(S::zero(), |a, b| a + b)
}

/// Convenience constructor for literals.
#[inline]
pub fn c<S: Real>(x: f64) -> S {
    S::from_f64(x)
}

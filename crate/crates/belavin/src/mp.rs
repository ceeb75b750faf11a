//! Multiprecision real and complex scalars.
//!
//! Thin wrappers around [`astro_float::BigFloat`] so the rest of the crate can
//! write formulas with ordinary operators. Every value carries its own
//! precision; binary operators work at the larger of the two operand
//! precisions. Transcendental functions need the shared constants cache and
//! therefore go through [`Ctx`].

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use num_rational::Rational64;

const RM: RoundingMode = RoundingMode::ToEven;

/// Decimal working precision requested by a caller.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Precision {
    /// Decimal digits the caller wants to trust.
    pub digits: u32,
    /// Extra guard digits carried internally.
    pub guard: u32,
}

impl Precision {
    pub fn new(digits: u32) -> Self {
        assert!(digits >= 15, "working precision below 15 digits");
        Precision { digits, guard: 10 }
    }

    pub fn with_guard(digits: u32, guard: u32) -> Self {
        assert!(digits >= 15, "working precision below 15 digits");
        Precision { digits, guard }
    }

    /// Mantissa bits for the internal representation (digits + guard, plus slack).
    pub fn bits(&self) -> usize {
        let d = (self.digits + self.guard) as f64;
        (d * std::f64::consts::LOG2_10).ceil() as usize + 32
    }
}

impl Default for Precision {
    fn default() -> Self {
        Precision::new(50)
    }
}

/// Evaluation context: precision plus the constants cache used by
/// exp/ln/sin/cos. Cheap to clone (each clone gets a fresh cache), which is
/// how worker threads obtain their own context.
pub struct Ctx {
    pub prec: Precision,
    bits: usize,
    consts: RefCell<Consts>,
}

impl Clone for Ctx {
    fn clone(&self) -> Self {
        Ctx::new(self.prec)
    }
}

impl fmt::Debug for Ctx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ctx({} digits + {} guard)", self.prec.digits, self.prec.guard)
    }
}

impl Ctx {
    pub fn new(prec: Precision) -> Self {
        Ctx {
            prec,
            bits: prec.bits(),
            consts: RefCell::new(Consts::new().expect("constants cache")),
        }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    /// A context carrying `extra` additional decimal digits.
    pub fn boosted(&self, extra: u32) -> Ctx {
        Ctx::new(Precision::with_guard(self.prec.digits + extra, self.prec.guard))
    }

    pub fn pi(&self) -> Real {
        Real(self.consts.borrow_mut().pi(self.bits, RM))
    }

    pub fn zero(&self) -> Real {
        Real(BigFloat::from_i64(0, self.bits))
    }

    pub fn one(&self) -> Real {
        Real(BigFloat::from_i64(1, self.bits))
    }

    pub fn int(&self, v: i64) -> Real {
        Real(BigFloat::from_i64(v, self.bits))
    }

    pub fn rational(&self, q: Rational64) -> Real {
        let n = BigFloat::from_i64(*q.numer(), self.bits);
        let d = BigFloat::from_i64(*q.denom(), self.bits);
        Real(n.div(&d, self.bits, RM))
    }

    /// Parses a decimal literal at full context precision.
    pub fn parse(&self, s: &str) -> Real {
        let mut cc = self.consts.borrow_mut();
        Real(BigFloat::parse(s, Radix::Dec, self.bits, RM, &mut cc))
    }

    /// 10^(-(digits+guard)): the tail threshold for series/product truncation.
    pub fn tail_eps(&self) -> Real {
        self.pow10(-((self.prec.digits + self.prec.guard) as i64))
    }

    /// 10^(-digits/2): the pole-proximity threshold.
    pub fn pole_eps(&self) -> Real {
        self.pow10(-((self.prec.digits / 2) as i64))
    }

    pub fn pow10(&self, e: i64) -> Real {
        let ten = BigFloat::from_i64(10, self.bits);
        let p = ten.powi(e.unsigned_abs() as usize, self.bits, RM);
        if e < 0 {
            Real(p.reciprocal(self.bits, RM))
        } else {
            Real(p)
        }
    }
}

/// Arbitrary-precision real number.
#[derive(Clone)]
pub struct Real(pub(crate) BigFloat);

fn prec2(a: &BigFloat, b: &BigFloat) -> usize {
    a.mantissa_max_bit_len()
        .unwrap_or(0)
        .max(b.mantissa_max_bit_len().unwrap_or(0))
        .max(64)
}

impl Real {
    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_finite(&self) -> bool {
        !self.0.is_nan() && !self.0.is_inf()
    }

    pub fn abs(&self) -> Real {
        Real(self.0.abs())
    }

    pub fn neg(&self) -> Real {
        Real(self.0.clone().neg())
    }

    pub fn cmp_abs(&self, other: &Real) -> Ordering {
        match self.0.abs_cmp(&other.0) {
            Some(c) => c.cmp(&0),
            None => Ordering::Equal,
        }
    }

    pub fn lt(&self, other: &Real) -> bool {
        matches!(self.0.cmp(&other.0), Some(c) if c < 0)
    }

    pub fn max_with(&self, other: &Real) -> Real {
        if self.lt(other) {
            other.clone()
        } else {
            self.clone()
        }
    }

    pub fn exp(&self, cx: &Ctx) -> Real {
        let mut cc = cx.consts.borrow_mut();
        Real(self.0.exp(cx.bits, RM, &mut cc))
    }

    pub fn ln(&self, cx: &Ctx) -> Real {
        let mut cc = cx.consts.borrow_mut();
        Real(self.0.ln(cx.bits, RM, &mut cc))
    }

    pub fn sin(&self, cx: &Ctx) -> Real {
        let mut cc = cx.consts.borrow_mut();
        Real(self.0.sin(cx.bits, RM, &mut cc))
    }

    pub fn cos(&self, cx: &Ctx) -> Real {
        let mut cc = cx.consts.borrow_mut();
        Real(self.0.cos(cx.bits, RM, &mut cc))
    }

    pub fn sqrt(&self, cx: &Ctx) -> Real {
        Real(self.0.sqrt(cx.bits, RM))
    }

    pub fn recip(&self, cx: &Ctx) -> Real {
        Real(self.0.reciprocal(cx.bits, RM))
    }

    pub fn powi(&self, e: i64, cx: &Ctx) -> Real {
        let p = self.0.powi(e.unsigned_abs() as usize, cx.bits, RM);
        if e < 0 {
            Real(p.reciprocal(cx.bits, RM))
        } else {
            Real(p)
        }
    }

    /// Lossy conversion for diagnostics, fits and coarse decisions.
    pub fn to_f64(&self) -> f64 {
        if self.0.is_nan() {
            return f64::NAN;
        }
        if self.0.is_inf_pos() {
            return f64::INFINITY;
        }
        if self.0.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        // exponent() is the binary exponent of a value in [0.5, 1)
        match self.0.exponent() {
            Some(e) if e > 1030 => {
                if self.0.is_negative() {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            }
            Some(e) if e < -1060 => 0.0,
            _ => format!("{}", self.0).parse::<f64>().unwrap_or(f64::NAN),
        }
    }

    /// Decimal string at full working precision.
    pub fn to_decimal(&self) -> String {
        format!("{}", self.0)
    }

    /// Base-2 exponent, as a crude magnitude probe. Zero/NaN map to i32::MIN.
    pub fn mag2(&self) -> i32 {
        if self.0.is_zero() || self.0.is_nan() {
            i32::MIN
        } else {
            self.0.exponent().unwrap_or(i32::MIN)
        }
    }
}

impl fmt::Debug for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

macro_rules! real_binop {
    ($trait:ident, $m:ident, $impl_m:ident) => {
        impl std::ops::$trait<&Real> for &Real {
            type Output = Real;
            fn $m(self, rhs: &Real) -> Real {
                let p = prec2(&self.0, &rhs.0);
                Real(self.0.$impl_m(&rhs.0, p, RM))
            }
        }
        impl std::ops::$trait<Real> for Real {
            type Output = Real;
            fn $m(self, rhs: Real) -> Real {
                (&self).$m(&rhs)
            }
        }
        impl std::ops::$trait<&Real> for Real {
            type Output = Real;
            fn $m(self, rhs: &Real) -> Real {
                (&self).$m(rhs)
            }
        }
        impl std::ops::$trait<Real> for &Real {
            type Output = Real;
            fn $m(self, rhs: Real) -> Real {
                self.$m(&rhs)
            }
        }
    };
}

real_binop!(Add, add, add);
real_binop!(Sub, sub, sub);
real_binop!(Mul, mul, mul);
real_binop!(Div, div, div);

impl std::ops::Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real(self.0.clone().neg())
    }
}

impl std::ops::Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real(self.0.clone().neg())
    }
}

/// Arbitrary-precision complex number.
#[derive(Clone)]
pub struct Cplx {
    pub re: Real,
    pub im: Real,
}

impl Cplx {
    pub fn new(re: Real, im: Real) -> Self {
        Cplx { re, im }
    }

    pub fn from_real(re: Real, cx: &Ctx) -> Self {
        Cplx { re, im: cx.zero() }
    }

    pub fn zero(cx: &Ctx) -> Self {
        Cplx { re: cx.zero(), im: cx.zero() }
    }

    pub fn one(cx: &Ctx) -> Self {
        Cplx { re: cx.one(), im: cx.zero() }
    }

    pub fn i(cx: &Ctx) -> Self {
        Cplx { re: cx.zero(), im: cx.one() }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn conj(&self) -> Cplx {
        Cplx { re: self.re.clone(), im: self.im.neg() }
    }

    pub fn norm_sqr(&self) -> Real {
        &(&self.re * &self.re) + &(&self.im * &self.im)
    }

    pub fn abs(&self, cx: &Ctx) -> Real {
        self.norm_sqr().sqrt(cx)
    }

    pub fn scale(&self, s: &Real) -> Cplx {
        Cplx { re: &self.re * s, im: &self.im * s }
    }

    pub fn recip(&self, cx: &Ctx) -> Cplx {
        let d = self.norm_sqr().recip(cx);
        Cplx { re: &self.re * &d, im: (&self.im * &d).neg() }
    }

    /// e^self.
    pub fn exp(&self, cx: &Ctx) -> Cplx {
        let m = self.re.exp(cx);
        Cplx {
            re: &m * &self.im.cos(cx),
            im: &m * &self.im.sin(cx),
        }
    }

    pub fn powi(&self, e: i64, cx: &Ctx) -> Cplx {
        if e == 0 {
            return Cplx::one(cx);
        }
        let mut base = if e < 0 { self.recip(cx) } else { self.clone() };
        let mut k = e.unsigned_abs();
        let mut acc = Cplx::one(cx);
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            k >>= 1;
        }
        acc
    }

    /// Crude magnitude probe: max of the component exponents.
    pub fn mag2(&self) -> i32 {
        self.re.mag2().max(self.im.mag2())
    }

    pub fn to_f64s(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }
}

impl fmt::Debug for Cplx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {})", self.re, self.im)
    }
}

impl fmt::Display for Cplx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {})", self.re, self.im)
    }
}

impl std::ops::Add<&Cplx> for &Cplx {
    type Output = Cplx;
    fn add(self, rhs: &Cplx) -> Cplx {
        Cplx { re: &self.re + &rhs.re, im: &self.im + &rhs.im }
    }
}

impl std::ops::Sub<&Cplx> for &Cplx {
    type Output = Cplx;
    fn sub(self, rhs: &Cplx) -> Cplx {
        Cplx { re: &self.re - &rhs.re, im: &self.im - &rhs.im }
    }
}

impl std::ops::Mul<&Cplx> for &Cplx {
    type Output = Cplx;
    fn mul(self, rhs: &Cplx) -> Cplx {
        Cplx {
            re: &(&self.re * &rhs.re) - &(&self.im * &rhs.im),
            im: &(&self.re * &rhs.im) + &(&self.im * &rhs.re),
        }
    }
}

impl std::ops::Neg for &Cplx {
    type Output = Cplx;
    fn neg(self) -> Cplx {
        Cplx { re: -&self.re, im: -&self.im }
    }
}

macro_rules! cplx_owned_variants {
    ($trait:ident, $m:ident) => {
        impl std::ops::$trait<Cplx> for Cplx {
            type Output = Cplx;
            fn $m(self, rhs: Cplx) -> Cplx {
                (&self).$m(&rhs)
            }
        }
        impl std::ops::$trait<&Cplx> for Cplx {
            type Output = Cplx;
            fn $m(self, rhs: &Cplx) -> Cplx {
                (&self).$m(rhs)
            }
        }
        impl std::ops::$trait<Cplx> for &Cplx {
            type Output = Cplx;
            fn $m(self, rhs: Cplx) -> Cplx {
                self.$m(&rhs)
            }
        }
    };
}

cplx_owned_variants!(Add, add);
cplx_owned_variants!(Sub, sub);
cplx_owned_variants!(Mul, mul);

/// Complex division via the conjugate; fine at big-float exponent range.
pub fn cdiv(a: &Cplx, b: &Cplx, cx: &Ctx) -> Cplx {
    let d = b.norm_sqr().recip(cx);
    let num = a * &b.conj();
    num.scale(&d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_bits_monotone() {
        assert!(Precision::new(50).bits() > Precision::new(20).bits());
    }

    #[test]
    fn real_roundtrip_and_ops() {
        let cx = Ctx::new(Precision::new(40));
        let a = cx.parse("0.3");
        let b = cx.parse("0.1");
        let s = &a + &b;
        let d = &s - &cx.parse("0.4");
        assert!(d.abs().lt(&cx.pow10(-45)));
        let ln = a.ln(&cx);
        let back = ln.exp(&cx);
        assert!((&back - &a).abs().lt(&cx.pow10(-45)));
    }

    #[test]
    fn complex_exp_matches_euler() {
        let cx = Ctx::new(Precision::new(40));
        let ipi = Cplx::new(cx.zero(), cx.pi());
        let e = ipi.exp(&cx);
        assert!((&e.re + &cx.one()).abs().lt(&cx.pow10(-45)));
        assert!(e.im.abs().lt(&cx.pow10(-45)));
    }

    #[test]
    fn complex_powi_and_recip() {
        let cx = Ctx::new(Precision::new(40));
        let z = Cplx::new(cx.parse("1.25"), cx.parse("-0.75"));
        let z3 = z.powi(3, &cx);
        let z3_direct = &(&z * &z) * &z;
        assert!((&z3 - &z3_direct).abs(&cx).lt(&cx.pow10(-40)));
        let inv = z.recip(&cx);
        let unit = &z * &inv;
        assert!((&unit.re - &cx.one()).abs().lt(&cx.pow10(-42)));
    }

    #[test]
    fn to_f64_magnitudes() {
        let cx = Ctx::new(Precision::new(30));
        assert!((cx.parse("2.5e-7").to_f64() - 2.5e-7).abs() < 1e-20);
        assert_eq!(cx.zero().to_f64(), 0.0);
    }
}

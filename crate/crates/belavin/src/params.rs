//! Global model parameters (n, r, x) and the evaluation environment that
//! caches the handful of transcendentals everything else is built from.

use num_rational::Rational64;
use num_traits::Signed;

use crate::error::{Error, Result};
use crate::mp::{Cplx, Ctx, Precision, Real};

/// The global parameter triple. `r` and `x` are kept as exact rationals
/// (decimal inputs are rationals) and realized as big-floats on demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelParams {
    pub n: usize,
    pub r: Rational64,
    pub x: Rational64,
}

impl ModelParams {
    pub fn new(n: usize, r: Rational64, x: Rational64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("n must be >= 2, got {n}")));
        }
        if r <= Rational64::from_integer(1) {
            return Err(Error::Config(format!("r must be > 1, got {r}")));
        }
        if x <= Rational64::from_integer(0) || x >= Rational64::from_integer(1) {
            return Err(Error::Config(format!("x must lie in (0,1), got {x}")));
        }
        Ok(ModelParams { n, r, x })
    }

    /// The text of the model asks for r > n-1 while the principal regime only
    /// needs r > 1; callers may warn on this instead of refusing to run.
    pub fn r_below_rank_bound(&self) -> bool {
        self.r <= Rational64::from_integer(self.n as i64 - 1)
    }
}

/// Parameters + precision, with cached constants. Clone to hand a private
/// copy to another thread (the constants cache is per-instance).
#[derive(Clone)]
pub struct Env {
    pub par: ModelParams,
    pub cx: Ctx,
    /// x as a big-float.
    pub x: Real,
    /// ln x (negative).
    pub lnx: Real,
    /// epsilon = -ln x > 0.
    pub eps: Real,
    pub r_real: Real,
    /// x^{2r}, the bracket nome.
    pub q2r: Real,
    /// x^{2r-2}, the primed-bracket nome.
    pub q2rm2: Real,
    /// x^{2n}.
    pub q2n: Real,
    /// x^2.
    pub q2: Real,
    /// (x^{2r}; x^{2r})_inf.
    pub qq2r: Real,
    /// (x^{2r-2}; x^{2r-2})_inf.
    pub qq2rm2: Real,
    /// omega = e^{2 pi i / n}.
    pub omega: Cplx,
    pub omega_inv: Cplx,
    pub pi: Real,
}

impl Env {
    pub fn new(par: ModelParams, prec: Precision) -> Result<Env> {
        let cx = Ctx::new(prec);
        let x = cx.rational(par.x);
        let lnx = x.ln(&cx);
        let eps = lnx.neg();
        let r_real = cx.rational(par.r);
        let two = cx.int(2);
        let q2r = (&(&two * &r_real) * &lnx).exp(&cx);
        let q2rm2 = (&(&two * &(&r_real - &cx.one())) * &lnx).exp(&cx);
        let q2n = (&cx.int(2 * par.n as i64) * &lnx).exp(&cx);
        let q2 = &x * &x;
        let pi = cx.pi();
        let theta = &(&two * &pi) / &cx.int(par.n as i64);
        let omega = Cplx::new(theta.cos(&cx), theta.sin(&cx));
        let omega_inv = omega.conj();
        let qq2r = real_euler_product(&q2r, &cx)?;
        let qq2rm2 = real_euler_product(&q2rm2, &cx)?;
        Ok(Env {
            par,
            cx,
            x,
            lnx,
            eps,
            r_real,
            q2r,
            q2rm2,
            q2n,
            q2,
            qq2r,
            qq2rm2,
            omega,
            omega_inv,
            pi,
        })
    }

    /// x^w for real w.
    pub fn x_pow_real(&self, w: &Real) -> Real {
        (w * &self.lnx).exp(&self.cx)
    }

    /// x^w for complex w (principal convention: exp(w ln x), ln x real).
    pub fn x_pow(&self, w: &Cplx) -> Cplx {
        Cplx::new(&w.re * &self.lnx, &w.im * &self.lnx).exp(&self.cx)
    }

    pub fn x_pow_rat(&self, w: Rational64) -> Real {
        self.x_pow_real(&self.cx.rational(w))
    }

    /// z = x^{2v}.
    pub fn z_of_v(&self, v: &Cplx) -> Cplx {
        let two = self.cx.int(2);
        self.x_pow(&Cplx::new(&v.re * &two, &v.im * &two))
    }

    pub fn creal(&self, s: &str) -> Cplx {
        Cplx::from_real(self.cx.parse(s), &self.cx)
    }

    pub fn crat(&self, q: Rational64) -> Cplx {
        Cplx::from_real(self.cx.rational(q), &self.cx)
    }

    /// omega^k with k reduced mod n.
    pub fn omega_pow(&self, k: i64, cx: &Ctx) -> Cplx {
        let n = self.par.n as i64;
        let k = k.rem_euclid(n);
        self.omega.powi(k, cx)
    }
}

/// (q; q)_inf for real 0 < q < 1.
pub fn real_euler_product(q: &Real, cx: &Ctx) -> Result<Real> {
    if q.is_negative() || !cx.one().cmp_abs(q).is_gt() {
        return Err(Error::NonConvergent(format!("euler product needs |q|<1, got {q}")));
    }
    let eps_mag = cx.tail_eps().mag2();
    let mut acc = cx.one();
    let mut w = q.clone();
    let mut it = 0u32;
    while w.mag2() >= eps_mag - 1 {
        acc = &acc * &(&cx.one() - &w);
        w = &w * q;
        it += 1;
        if it > 2_000_000 {
            return Err(Error::NonConvergent("euler product truncation overflow".into()));
        }
    }
    Ok(acc)
}

/// Check that the rational is representable as an f64-safe integer-ish value.
pub fn rat_to_f64(q: Rational64) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Nearest integer of a rational.
pub fn rat_round(q: Rational64) -> i64 {
    let f = q.floor();
    let frac = q - f;
    let half = Rational64::new(1, 2);
    let base = f.to_integer();
    if frac.abs() >= half {
        base + 1
    } else {
        base
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1, Rational64::new(4, 1), Rational64::new(3, 10)).is_err());
        assert!(ModelParams::new(2, Rational64::new(1, 1), Rational64::new(3, 10)).is_err());
        assert!(ModelParams::new(2, Rational64::new(4, 1), Rational64::new(11, 10)).is_err());
        let p = ModelParams::new(3, Rational64::new(5, 2), Rational64::new(1, 5)).unwrap();
        assert!(p.r_below_rank_bound() == false);
        let p2 = ModelParams::new(3, Rational64::new(3, 2), Rational64::new(1, 5)).unwrap();
        assert!(p2.r_below_rank_bound());
    }

    #[test]
    fn env_constants() {
        let p = ModelParams::new(2, Rational64::new(4, 1), Rational64::new(3, 10)).unwrap();
        let env = Env::new(p, Precision::new(40)).unwrap();
        // omega for n=2 is -1
        assert!((&env.omega.re + &env.cx.one()).abs().lt(&env.cx.pow10(-40)));
        assert!(env.omega.im.abs().lt(&env.cx.pow10(-40)));
        // x^{2r} = x^8
        let x8 = env.x.powi(8, &env.cx);
        assert!((&x8 - &env.q2r).abs().lt(&env.cx.pow10(-42)));
    }

    #[test]
    fn rat_round_behaviour() {
        assert_eq!(rat_round(Rational64::new(7, 2)), 4);
        assert_eq!(rat_round(Rational64::new(-7, 2)), -3);
        assert_eq!(rat_round(Rational64::new(1, 3)), 0);
        assert_eq!(rat_round(Rational64::new(-1, 3)), 0);
    }
}

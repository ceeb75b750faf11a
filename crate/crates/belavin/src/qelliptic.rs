//! Elliptic special functions: multi-Pochhammer products, the theta function
//! Theta_q, the Jacobi theta with characteristics, the bracket functions
//! [v], [v]', [v]_w, the nested-product symbols {z}, g_l, r_l and the kernel
//! ratios f, g.
//!
//! Truncation policy: infinite products stop when the current factor differs
//! from 1 by less than 10^-(digits+guard); sums stop when terms drop below
//! 10^-(digits+guard) of the running maximum. The theta-with-characteristics
//! series re-evaluates itself at boosted precision when cancellation eats
//! into the certified digits.

use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::mp::{cdiv, Cplx, Real};
use crate::params::Env;

/// (z; q)_inf = prod_{i>=0} (1 - z q^i).
pub fn pochhammer1(z: &Cplx, q: &Cplx, env: &Env) -> Result<Cplx> {
    let cx = &env.cx;
    let one = Cplx::one(cx);
    if z.is_zero() {
        return Ok(one);
    }
    let qmag = q.norm_sqr();
    if !qmag.lt(&cx.one()) {
        return Err(Error::NonConvergent(format!("pochhammer needs |q|<1, got |q|^2={qmag}")));
    }
    let eps_mag = cx.tail_eps().mag2();
    let mut acc = one.clone();
    let mut w = z.clone();
    let mut it = 0u32;
    while w.mag2() >= eps_mag - 1 {
        acc = &acc * &(&one - &w);
        w = &w * q;
        it += 1;
        if it > 2_000_000 {
            return Err(Error::NonConvergent("pochhammer truncation overflow".into()));
        }
    }
    Ok(acc)
}

/// (z; q_1, ..., q_m)_inf, the m-fold product over all multi-indices.
pub fn pochhammer_multi(z: &Cplx, qs: &[Cplx], env: &Env) -> Result<Cplx> {
    let cx = &env.cx;
    if qs.is_empty() {
        return Ok(&Cplx::one(cx) - z);
    }
    for q in qs {
        if !q.norm_sqr().lt(&cx.one()) {
            return Err(Error::NonConvergent("pochhammer_multi needs all |q_i|<1".into()));
        }
    }
    if z.is_zero() {
        return Ok(Cplx::one(cx));
    }
    if qs.len() == 1 {
        return pochhammer1(z, &qs[0], env);
    }
    let (last, rest) = qs.split_last().unwrap();
    let eps_mag = cx.tail_eps().mag2();
    let mut acc = Cplx::one(cx);
    let mut w = z.clone();
    let mut it = 0u32;
    while w.mag2() >= eps_mag - 1 {
        acc = &acc * &pochhammer_multi(&w, rest, env)?;
        w = &w * last;
        it += 1;
        if it > 2_000_000 {
            return Err(Error::NonConvergent("pochhammer_multi truncation overflow".into()));
        }
    }
    Ok(acc)
}

/// Theta_q(z) = (z;q)(q/z;q)(q;q), with the Euler factor supplied by the caller
/// when already cached.
pub fn theta_q_with_euler(z: &Cplx, q: &Cplx, euler: &Cplx, env: &Env) -> Result<Cplx> {
    if z.is_zero() {
        return Err(Error::DomainError("Theta_q needs z != 0".into()));
    }
    let zinv = z.recip(&env.cx);
    let a = pochhammer1(z, q, env)?;
    let b = pochhammer1(&(q * &zinv), q, env)?;
    Ok(&(&a * &b) * euler)
}

/// Theta_q(z) via the triple product (primary evaluator).
pub fn theta_q(z: &Cplx, q: &Cplx, env: &Env) -> Result<Cplx> {
    let euler = pochhammer1(q, q, env)?;
    theta_q_with_euler(z, q, &euler, env)
}

/// Theta_q(z) as the bilateral sum over m of q^{m(m-1)/2} (-z)^m.
/// Used as the independent series oracle for the product form.
pub fn theta_q_series(z: &Cplx, q: &Cplx, env: &Env) -> Result<Cplx> {
    let cx = &env.cx;
    if z.is_zero() {
        return Err(Error::DomainError("Theta_q needs z != 0".into()));
    }
    if !q.norm_sqr().lt(&cx.one()) {
        return Err(Error::NonConvergent("Theta_q series needs |q|<1".into()));
    }
    let eps_mag = cx.tail_eps().mag2();
    let mz = -z;
    let zinv = z.recip(cx);
    // ascending branch: t_{m+1} = t_m * (-z) * q^m, starting at t_0 = 1
    let mut sum = Cplx::one(cx);
    let mut maxmag = 0i32;
    let mut t = Cplx::one(cx);
    let mut qpow = Cplx::one(cx);
    for _ in 0..1_000_000 {
        t = &(&t * &mz) * &qpow;
        qpow = &qpow * q;
        sum = &sum + &t;
        maxmag = maxmag.max(t.mag2());
        if t.mag2() < maxmag + eps_mag {
            break;
        }
    }
    // descending branch: t_{m-1} = t_m * (-z)^{-1} * q^{1-m}, starting from t_0;
    // the power of q in the step multiplier is q^1, q^2, ... as m walks down
    let mzinv = -&zinv;
    let mut t = Cplx::one(cx);
    let mut qpow = q.clone();
    for _ in 0..1_000_000 {
        t = &(&t * &mzinv) * &qpow;
        qpow = &qpow * q;
        sum = &sum + &t;
        maxmag = maxmag.max(t.mag2());
        if t.mag2() < maxmag + eps_mag {
            break;
        }
    }
    Ok(sum)
}

/// Jacobi theta with characteristics (a, b):
/// sum_m exp{ pi i (m+a) [ (m+a) tau + 2 (v+b) ] }, Im tau > 0.
pub fn riemann_theta_char(
    a: Rational64,
    b: Rational64,
    v: &Cplx,
    tau: &Cplx,
    env: &Env,
) -> Result<Cplx> {
    if !env.cx.zero().lt(&tau.im) {
        return Err(Error::DomainError("theta characteristic series needs Im tau > 0".into()));
    }
    // cancellation-certified evaluation: retry with boosted precision until
    // the result magnitude is within reach of the largest term
    let mut boost = 0u32;
    loop {
        let envb;
        let e = if boost == 0 {
            env
        } else {
            envb = Env::new(env.par, crate::mp::Precision::with_guard(
                env.cx.prec.digits + boost,
                env.cx.prec.guard,
            ))?;
            &envb
        };
        let (sum, maxmag) = theta_char_once(a, b, v, tau, e)?;
        let lost_bits = maxmag.saturating_sub(sum.mag2());
        let budget = (boost as f64 * std::f64::consts::LOG2_10) as i32 + 16;
        if sum.is_zero() && maxmag > i32::MIN {
            // fully cancelled: either a true zero or catastrophic loss
            if boost >= 4 * env.cx.prec.digits {
                return Ok(sum);
            }
        } else if lost_bits <= budget || boost >= 4 * env.cx.prec.digits {
            return Ok(sum);
        }
        boost += env.cx.prec.digits.max(20);
    }
}

fn theta_char_once(
    a: Rational64,
    b: Rational64,
    v: &Cplx,
    tau: &Cplx,
    env: &Env,
) -> Result<(Cplx, i32)> {
    let cx = &env.cx;
    let eps_mag = cx.tail_eps().mag2();
    let ar = cx.rational(a);
    let br = cx.rational(b);
    let vb = &Cplx::from_real(br, cx) + v;
    // peak of |term| over m: (m+a) = -Im(v+b)/Im(tau)
    let peak = -(vb.im.to_f64()) / tau.im.to_f64() - crate::params::rat_to_f64(a);
    let mc = if peak.is_finite() && peak.abs() < 1.0e12 { peak.round() as i64 } else { 0 };
    let ipi = Cplx::new(cx.zero(), cx.pi());
    // term(m) = exp{pi i (m+a)[(m+a) tau + 2(v+b)]}; consecutive terms differ
    // by the geometric-step factor E0 E1^m, so only three exponentials are
    // needed for the whole sum
    let term_mc = {
        let ma = Cplx::from_real(&cx.int(mc) + &ar, cx);
        let inner = &(&ma * tau) + &(&vb + &vb);
        (&(&ipi * &ma) * &inner).exp(cx)
    };
    let e0 = {
        // exp{pi i [(2a+1) tau + 2(v+b)]}
        let two_a1 = &(&ar + &ar) + &cx.one();
        let inner = &(&Cplx::from_real(two_a1, cx) * tau) + &(&vb + &vb);
        (&ipi * &inner).exp(cx)
    };
    let e1 = (&(&ipi + &ipi) * tau).exp(cx);
    let e1_inv = e1.recip(cx);
    let mut sum = term_mc.clone();
    let mut maxmag = sum.mag2();
    // ascending: t_{m+1} = t_m * E0 * E1^m
    let mut ratio = &e0 * &e1.powi(mc, cx);
    let mut t = term_mc.clone();
    let mut small = 0;
    for _ in 0..1_000_000 {
        t = &t * &ratio;
        ratio = &ratio * &e1;
        sum = &sum + &t;
        maxmag = maxmag.max(t.mag2());
        if t.mag2() < maxmag + eps_mag {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
    }
    // descending: t_{m-1} = t_m / (E0 E1^{m-1})
    let mut ratio = (&e0 * &e1.powi(mc - 1, cx)).recip(cx);
    let mut t = term_mc;
    let mut small = 0;
    for _ in 0..1_000_000 {
        t = &t * &ratio;
        ratio = &ratio * &e1_inv;
        sum = &sum + &t;
        maxmag = maxmag.max(t.mag2());
        if t.mag2() < maxmag + eps_mag {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
    }
    Ok((sum, maxmag))
}

/// Bracket value together with its oscillatory theta part, kept separate so
/// pole/zero proximity can be judged on an O(1)-scaled quantity.
pub struct Bracket {
    pub value: Cplx,
    /// (z;q)(q/z;q) after argument reduction; vanishes exactly at the bracket zeros.
    pub theta_part: Cplx,
}

/// Twist of the theta argument inside a bracket: Theta_q(t x^{2v}) for
/// t = 1, omega, or -1. The quasi-period picks up [v + m r] = (-1/t)^m [v].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Twist {
    None,
    Omega,
    MinusOne,
    MinusOmega,
}

fn bracket_general(
    v: &Cplx,
    r: &Real,
    r_rat: Rational64,
    q: &Real,
    euler: &Real,
    twist: Twist,
    env: &Env,
) -> Result<Bracket> {
    let cx = &env.cx;
    // reduce Re(v) into [-r/2, r/2): [v + m r] = (-1/t)^m [v]
    let m = {
        let est = v.re.to_f64() / crate::params::rat_to_f64(r_rat);
        if est.is_finite() && est.abs() < 9.0e15 {
            est.round() as i64
        } else {
            return Err(Error::DomainError("bracket argument out of reducible range".into()));
        }
    };
    let vr = v - &Cplx::from_real(&cx.int(m) * r, cx);
    // x^{v^2/r - v}
    let v2 = &vr * &vr;
    let expo = &cdiv(&v2, &Cplx::from_real(r.clone(), cx), cx) - &vr;
    let pref = env.x_pow(&expo);
    // Theta_{q}(t z) with z = x^{2v}
    let mut z = env.z_of_v(&vr);
    match twist {
        Twist::None => {}
        Twist::Omega => z = &z * &env.omega,
        Twist::MinusOne => z = -&z,
        Twist::MinusOmega => z = -&(&z * &env.omega),
    }
    let qc = Cplx::from_real(q.clone(), cx);
    let zinv = z.recip(cx);
    let t1 = pochhammer1(&z, &qc, env)?;
    let t2 = pochhammer1(&(&qc * &zinv), &qc, env)?;
    let theta_part = &t1 * &t2;
    let mut value = (&(&pref * &theta_part)).scale(euler);
    match twist {
        Twist::None => {
            if m.rem_euclid(2) == 1 {
                value = -&value;
            }
        }
        Twist::Omega => {
            if m.rem_euclid(2) == 1 {
                value = -&value;
            }
            value = &value * &env.omega_pow(-m, cx);
        }
        Twist::MinusOne => {
            // (-1/t)^m = 1
        }
        Twist::MinusOmega => {
            // (-1/t)^m = omega^{-m}
            value = &value * &env.omega_pow(-m, cx);
        }
    }
    Ok(Bracket { value, theta_part })
}

/// [v] = x^{v^2/r - v} Theta_{x^{2r}}(x^{2v}).
pub fn bracket_r(v: &Cplx, env: &Env) -> Result<Cplx> {
    Ok(bracket_r_parts(v, env)?.value)
}

pub fn bracket_r_parts(v: &Cplx, env: &Env) -> Result<Bracket> {
    bracket_general(v, &env.r_real, env.par.r, &env.q2r, &env.qq2r, Twist::None, env)
}

/// [v] with the theta argument negated: x^{v^2/r-v} Theta_{x^{2r}}(-x^{2v}).
/// Zeros sit on the half-shifted lattice r Z + (i pi / eps)(Z + 1/2).
pub fn bracket_r_neg_parts(v: &Cplx, env: &Env) -> Result<Bracket> {
    bracket_general(v, &env.r_real, env.par.r, &env.q2r, &env.qq2r, Twist::MinusOne, env)
}

/// x^{v^2/r-v} Theta_{x^{2r}}(-omega x^{2v}).
pub fn bracket_omega_neg_parts(v: &Cplx, env: &Env) -> Result<Bracket> {
    bracket_general(v, &env.r_real, env.par.r, &env.q2r, &env.qq2r, Twist::MinusOmega, env)
}

/// Head bracket of the tail/trace closed forms: the theta argument carries
/// the extra sign (-1)^n (the interpolation zero moves off the real axis for
/// odd n).
pub fn bracket_head_parts(v: &Cplx, env: &Env) -> Result<Bracket> {
    if env.par.n % 2 == 0 {
        bracket_r_parts(v, env)
    } else {
        bracket_r_neg_parts(v, env)
    }
}

/// Omega-twisted head bracket with the same (-1)^n sign rule.
pub fn bracket_omega_head_parts(v: &Cplx, env: &Env) -> Result<Bracket> {
    if env.par.n % 2 == 0 {
        bracket_omega_parts(v, env)
    } else {
        bracket_omega_neg_parts(v, env)
    }
}

/// [v]' = x^{v^2/(r-1) - v} Theta_{x^{2r-2}}(x^{2v}).
pub fn bracket_rm1(v: &Cplx, env: &Env) -> Result<Cplx> {
    let rm1 = &env.r_real - &env.cx.one();
    let rr = env.par.r - Rational64::from_integer(1);
    Ok(bracket_general(v, &rm1, rr, &env.q2rm2, &env.qq2rm2, Twist::None, env)?.value)
}

/// [v]_w = x^{v^2/r - v} Theta_{x^{2r}}(omega x^{2v}).
pub fn bracket_omega(v: &Cplx, env: &Env) -> Result<Cplx> {
    Ok(bracket_omega_parts(v, env)?.value)
}

pub fn bracket_omega_parts(v: &Cplx, env: &Env) -> Result<Bracket> {
    bracket_general(v, &env.r_real, env.par.r, &env.q2r, &env.qq2r, Twist::Omega, env)
}

/// {z} = (z; x^{2r}, x^{2n})_inf.
pub fn braces(z: &Cplx, env: &Env) -> Result<Cplx> {
    let qs = [
        Cplx::from_real(env.q2r.clone(), &env.cx),
        Cplx::from_real(env.q2n.clone(), &env.cx),
    ];
    pochhammer_multi(z, &qs, env)
}

/// g_l(z) = {x^{2n+2r-l-1} z} {x^{l+1} z} / ({x^{2n-l+1} z} {x^{2r+l-1} z}).
pub fn g_l_func(z: &Cplx, l: usize, env: &Env) -> Result<Cplx> {
    let n = env.par.n;
    if l < 1 || l > n {
        return Err(Error::DomainError(format!("g_l needs 1 <= l <= n, got {l}")));
    }
    let cx = &env.cx;
    let shift = |e: i64| -> Result<Cplx> {
        let f = Cplx::from_real(env.x_pow_real(&cx.int(e)), cx);
        braces(&(&f * z), env)
    };
    let n = n as i64;
    let l = l as i64;
    let two_r = {
        // exponents 2r + const stay rational; realize x^{2r+c} = q2r * x^c
        |c: i64| -> Result<Cplx> {
            let f = Cplx::from_real(&env.q2r * &env.x_pow_real(&cx.int(c)), cx);
            braces(&(&f * z), env)
        }
    };
    let num = &two_r(2 * n - l - 1)? * &shift(l + 1)?;
    let den = &shift(2 * n - l + 1)? * &two_r(l - 1)?;
    Ok(cdiv(&num, &den, cx))
}

/// r_l(v) = z^{ (r-1)/r * (n-l)/n } g_l(z^{-1}) / g_l(z), z = x^{2v},
/// with the fractional power taken as x^{2 alpha v}.
pub fn r_l_func(v: &Cplx, l: usize, env: &Env) -> Result<Cplx> {
    let cx = &env.cx;
    let n = env.par.n as i64;
    let z = env.z_of_v(v);
    let zinv = z.recip(cx);
    // alpha = (r-1)/r * (n-l)/n
    let alpha = {
        let rm1 = &env.r_real - &cx.one();
        &(&rm1 / &env.r_real) * &cx.rational(Rational64::new(n - l as i64, n))
    };
    let two_alpha_v = (&Cplx::from_real(alpha, cx) * v).scale(&cx.int(2));
    let pow = env.x_pow(&two_alpha_v);
    let num = g_l_func(&zinv, l, env)?;
    let den = g_l_func(&z, l, env)?;
    Ok(&pow * &cdiv(&num, &den, cx))
}

fn pole_guard(b: &Bracket, what: &str, env: &Env) -> Result<()> {
    let tol = env.cx.pole_eps();
    if b.theta_part.norm_sqr().lt(&(&tol * &tol)) {
        return Err(Error::PoleError(format!("{what} vanishes within tolerance")));
    }
    Ok(())
}

/// f(v, w) = [v + 1/2 - w] / [v - 1/2].
pub fn f_func(v: &Cplx, w: &Cplx, env: &Env) -> Result<Cplx> {
    let cx = &env.cx;
    let half = env.crat(Rational64::new(1, 2));
    let num = bracket_r(&(&(v + &half) - w), env)?;
    let den = bracket_r_parts(&(v - &half), env)?;
    pole_guard(&den, "f denominator [v-1/2]", env)?;
    Ok(cdiv(&num, &den.value, cx))
}

/// g(v) = [v - 1] / [v + 1].
pub fn g_func(v: &Cplx, env: &Env) -> Result<Cplx> {
    let cx = &env.cx;
    let one = Cplx::one(cx);
    let num = bracket_r(&(v - &one), env)?;
    let den = bracket_r_parts(&(v + &one), env)?;
    pole_guard(&den, "g denominator [v+1]", env)?;
    Ok(cdiv(&num, &den.value, cx))
}

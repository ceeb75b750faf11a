//! The Z/nZ-symmetric R-matrix, built two independent ways (Heisenberg-group
//! character sum and elementwise theta quotients), the dual face Boltzmann
//! weights, Yang-Baxter residuals for both, and the low-temperature exponent
//! probe.

use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::lattice::{admissible_step, WeightState};
use crate::mp::{cdiv, Cplx, Real};
use crate::params::{Env, ModelParams};
use crate::qelliptic::{bracket_r, bracket_r_parts, r_l_func, riemann_theta_char};

/// Dense n^2 x n^2 tensor with (i,k; j,l) indexing, i.e. the matrix sending
/// e_j (x) e_l to sum_{ik} T^{ik}_{jl} e_i (x) e_k.
#[derive(Clone)]
pub struct WeightTensor {
    pub n: usize,
    entries: Vec<Cplx>,
}

impl WeightTensor {
    pub fn zeros(n: usize, env: &Env) -> Self {
        WeightTensor { n, entries: vec![Cplx::zero(&env.cx); n * n * n * n] }
    }

    #[inline]
    fn idx(&self, i: usize, k: usize, j: usize, l: usize) -> usize {
        ((i * self.n + k) * self.n + j) * self.n + l
    }

    pub fn get(&self, i: usize, k: usize, j: usize, l: usize) -> &Cplx {
        &self.entries[self.idx(i, k, j, l)]
    }

    pub fn set(&mut self, i: usize, k: usize, j: usize, l: usize, v: Cplx) {
        let at = self.idx(i, k, j, l);
        self.entries[at] = v;
    }

    pub fn add_to(&mut self, i: usize, k: usize, j: usize, l: usize, v: &Cplx) {
        let at = self.idx(i, k, j, l);
        self.entries[at] = &self.entries[at] + v;
    }

    pub fn scale(&self, s: &Cplx) -> WeightTensor {
        WeightTensor { n: self.n, entries: self.entries.iter().map(|e| e * s).collect() }
    }

    /// Largest |entry| (squared norm compared; the square root of the winner).
    pub fn max_abs(&self, env: &Env) -> Real {
        let mut best = env.cx.zero();
        for e in &self.entries {
            let m = e.norm_sqr();
            if best.lt(&m) {
                best = m;
            }
        }
        best.sqrt(&env.cx)
    }

    /// Max |self - other| entrywise.
    pub fn max_diff(&self, other: &WeightTensor, env: &Env) -> Real {
        let mut best = env.cx.zero();
        for (a, b) in self.entries.iter().zip(&other.entries) {
            let m = (a - b).norm_sqr();
            if best.lt(&m) {
                best = m;
            }
        }
        best.sqrt(&env.cx)
    }

    /// Exact-zero check of the Z/nZ selection rule i+k = j+l (mod n).
    pub fn zn_zero_pattern_ok(&self) -> bool {
        let n = self.n;
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        if (i + k) % n != (j + l) % n && !self.get(i, k, j, l).is_zero() {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Max |T^{i+p,k+p}_{j+p,l+p} - T^{ik}_{jl}| over all entries and shifts.
    pub fn shift_invariance_residual(&self, env: &Env) -> Real {
        let n = self.n;
        let mut best = env.cx.zero();
        for p in 1..n {
            for i in 0..n {
                for k in 0..n {
                    for j in 0..n {
                        for l in 0..n {
                            let a = self.get(i, k, j, l);
                            let b = self.get((i + p) % n, (k + p) % n, (j + p) % n, (l + p) % n);
                            let d = (a - b).norm_sqr();
                            if best.lt(&d) {
                                best = d;
                            }
                        }
                    }
                }
            }
        }
        best.sqrt(&env.cx)
    }
}

fn half() -> Rational64 {
    Rational64::new(1, 2)
}

/// Reduce an index difference into {0, ..., n-1}.
fn modn(d: i64, n: usize) -> i64 {
    d.rem_euclid(n as i64)
}

/// R-bar(v) from the Heisenberg-group character sum:
/// (1/n) sum_{alpha} c_alpha(v) I_alpha (x) I_alpha^{-1}.
pub fn rbar_charsum(v: &Cplx, env: &Env) -> Result<WeightTensor> {
    let cx = &env.cx;
    let n = env.par.n;
    let ni = n as i64;
    // tau = pi i / (eps r)
    let tau = Cplx::new(cx.zero(), &cx.pi() / &(&env.eps * &env.r_real));
    // theta argument 1/(nr) and 1/(nr) - v/r
    let inr = cdiv(
        &Cplx::one(cx),
        &Cplx::from_real(&cx.int(ni) * &env.r_real, cx),
        cx,
    );
    let arg_num = &inr - &cdiv(v, &Cplx::from_real(env.r_real.clone(), cx), cx);
    let mut t = WeightTensor::zeros(n, env);
    let ninv = cx.int(ni).recip(cx);
    for a1 in 0..ni {
        for a2 in 0..ni {
            let ca = Rational64::new(1, 2) - Rational64::new(a1, ni);
            let cb = Rational64::new(1, 2) + Rational64::new(a2, ni);
            let num = riemann_theta_char(ca, cb, &arg_num, &tau, env)?;
            let den = riemann_theta_char(ca, cb, &inr, &tau, env)?;
            if den.norm_sqr().lt(&(&cx.pole_eps() * &cx.pole_eps())) {
                return Err(Error::PoleError(format!(
                    "character-sum denominator theta vanishes at alpha=({a1},{a2})"
                )));
            }
            let c = cdiv(&num, &den, cx).scale(&ninv);
            for j in 0..ni {
                for l in 0..ni {
                    let i = modn(j - a2, n);
                    let k = modn(l + a2, n);
                    let phase = env.omega_pow(a1 * (j - a2 - l), cx);
                    t.add_to(i as usize, k as usize, j as usize, l as usize, &(&c * &phase));
                }
            }
        }
    }
    Ok(t)
}

/// Shared data for elementwise R-bar entries at a fixed spectral parameter.
struct ElementCtx {
    /// theta[1/2, 1/2 + c/n]((1-v)/(nr); tau_n) for c in 0..n
    th_num: Vec<Cplx>,
    /// theta[1/2, 1/2 + c/n](v/(nr); tau_n)
    th_v: Vec<Cplx>,
    /// theta[1/2, 1/2 + c/n](1/(nr); tau_n)
    th_1: Vec<Cplx>,
    /// h(v)
    h: Cplx,
}

fn element_ctx(v: &Cplx, env: &Env) -> Result<ElementCtx> {
    let cx = &env.cx;
    let n = env.par.n as i64;
    let tau_n = Cplx::new(cx.zero(), &cx.pi() / &(&cx.int(n) * &(&env.eps * &env.r_real)));
    let nr = Cplx::from_real(&cx.int(n) * &env.r_real, cx);
    let arg_1 = cdiv(&Cplx::one(cx), &nr, cx);
    let arg_v = cdiv(v, &nr, cx);
    let arg_num = cdiv(&(&Cplx::one(cx) - v), &nr, cx);
    // tables indexed by the raw difference c in -(n-1)..=(n-1), offset by n-1;
    // the characteristic shift b -> b+1 flips the sign of theta[1/2; b], so the
    // raw difference (not its mod-n class) is the faithful reading
    let mut th_num = Vec::new();
    let mut th_v = Vec::new();
    let mut th_1 = Vec::new();
    let mut th_0 = Vec::new();
    for c in -(n - 1)..n {
        let b = half() + Rational64::new(c, n);
        th_num.push(riemann_theta_char(half(), b, &arg_num, &tau_n, env)?);
        th_v.push(riemann_theta_char(half(), b, &arg_v, &tau_n, env)?);
        th_1.push(riemann_theta_char(half(), b, &arg_1, &tau_n, env)?);
        th_0.push(riemann_theta_char(half(), b, &Cplx::zero(cx), &tau_n, env)?);
    }
    // h(v) = prod_{j=0}^{n-1} th_v[j] / prod_{j=1}^{n-1} th_0[j]
    let off = (n - 1) as usize;
    let mut h = Cplx::one(cx);
    for c in 0..n as usize {
        h = &h * &th_v[off + c];
    }
    for c in 1..n as usize {
        let t0 = &th_0[off + c];
        if t0.norm_sqr().lt(&(&cx.pole_eps() * &cx.pole_eps())) {
            return Err(Error::PoleError("h(v) denominator theta vanishes".into()));
        }
        h = cdiv(&h, t0, cx);
    }
    Ok(ElementCtx { th_num, th_v, th_1, h })
}

/// Single elementwise entry of R-bar(v).
pub fn rbar_element(
    i: usize,
    k: usize,
    j: usize,
    l: usize,
    v: &Cplx,
    env: &Env,
) -> Result<Cplx> {
    let ec = element_ctx(v, env)?;
    rbar_element_with(&ec, i, k, j, l, env)
}

fn rbar_element_with(
    ec: &ElementCtx,
    i: usize,
    k: usize,
    j: usize,
    l: usize,
    env: &Env,
) -> Result<Cplx> {
    let cx = &env.cx;
    let n = env.par.n;
    if (i + k) % n != (j + l) % n {
        return Ok(Cplx::zero(cx));
    }
    let off = n - 1;
    let ki = (off as i64 + (k as i64 - i as i64)) as usize;
    let jk = (off as i64 + (j as i64 - k as i64)) as usize;
    let ji = (off as i64 + (j as i64 - i as i64)) as usize;
    let den = &ec.th_v[jk] * &ec.th_1[ji];
    if den.norm_sqr().lt(&(&cx.pole_eps() * &cx.pole_eps())) {
        return Err(Error::PoleError(format!("elementwise denominator vanishes at ({i},{k};{j},{l})")));
    }
    Ok(cdiv(&(&ec.h * &ec.th_num[ki]), &den, cx))
}

/// Full elementwise R-bar(v) tensor.
pub fn rbar_element_tensor(v: &Cplx, env: &Env) -> Result<WeightTensor> {
    let ec = element_ctx(v, env)?;
    let n = env.par.n;
    let mut t = WeightTensor::zeros(n, env);
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                for l in 0..n {
                    if (i + k) % n == (j + l) % n {
                        t.set(i, k, j, l, rbar_element_with(&ec, i, k, j, l, env)?);
                    }
                }
            }
        }
    }
    Ok(t)
}

/// R(v) = [1]/[1-v] r_1(v) R-bar(v).
pub fn r_full(v: &Cplx, env: &Env) -> Result<WeightTensor> {
    let pref = r_full_prefactor(v, env)?;
    Ok(rbar_charsum(v, env)?.scale(&pref))
}

pub fn r_full_prefactor(v: &Cplx, env: &Env) -> Result<Cplx> {
    let cx = &env.cx;
    let one = Cplx::one(cx);
    let num = bracket_r(&one, env)?;
    let den = bracket_r_parts(&(&one - v), env)?;
    if den.theta_part.norm_sqr().lt(&(&cx.pole_eps() * &cx.pole_eps())) {
        return Err(Error::PoleError("R(v) prefactor pole at [1-v] = 0".into()));
    }
    let r1 = r_l_func(v, 1, env)?;
    Ok(&cdiv(&num, &den.value, cx) * &r1)
}

/// Max-norm residual of the vertex Yang-Baxter equation with spectral
/// parameters (v1, v2, v3=0), relative to the largest entry of either side.
pub fn ybe_vertex_residual(v1: &Cplx, v2: &Cplx, env: &Env) -> Result<Real> {
    let cx = &env.cx;
    let r12 = rbar_charsum(&(v1 - v2), env)?;
    let r13 = rbar_charsum(v1, env)?;
    let r23 = rbar_charsum(v2, env)?;
    let n = env.par.n;
    let mut worst = cx.zero();
    let mut scale = cx.zero();
    // LHS^{a b t}_{d e f} = sum_{p q s} R12^{ab}_{pq} R13^{pt}_{ds} R23^{qs}_{ef}
    // RHS^{a b t}_{d e f} = sum_{p q s} R23^{bt}_{qs} R13^{at}'... computed below
    for a in 0..n {
        for b in 0..n {
            for t in 0..n {
                for d in 0..n {
                    for e in 0..n {
                        for f in 0..n {
                            if (a + b + t) % n != (d + e + f) % n {
                                continue;
                            }
                            let mut lhs = Cplx::zero(cx);
                            let mut rhs = Cplx::zero(cx);
                            for p in 0..n {
                                for q in 0..n {
                                    if (a + b) % n != (p + q) % n {
                                        continue;
                                    }
                                    for s in 0..n {
                                        // lhs: R23 first, then R13, then R12
                                        let x = r12.get(a, b, p, q);
                                        if !x.is_zero() {
                                            let y = r13.get(p, t, d, s);
                                            if !y.is_zero() {
                                                let z = r23.get(q, s, e, f);
                                                if !z.is_zero() {
                                                    lhs = &lhs + &(&(x * y) * z);
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                            for p in 0..n {
                                for q in 0..n {
                                    if (p + q) % n != (d + e) % n {
                                        continue;
                                    }
                                    for s in 0..n {
                                        // rhs: R12 first, then R13, then R23
                                        let x = r12.get(p, q, d, e);
                                        if !x.is_zero() {
                                            let y = r13.get(a, s, p, f);
                                            if !y.is_zero() {
                                                let z = r23.get(b, t, q, s);
                                                if !z.is_zero() {
                                                    rhs = &rhs + &(&(x * y) * z);
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                            let dmag = (&lhs - &rhs).norm_sqr();
                            if worst.lt(&dmag) {
                                worst = dmag;
                            }
                            let smag = lhs.norm_sqr().max_with(&rhs.norm_sqr());
                            if scale.lt(&smag) {
                                scale = smag;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(&worst.sqrt(cx) / &scale.sqrt(cx))
}

/// A^{(1)}_{n-1} face Boltzmann weight W[c d; b a | v], normalized by r_1(v).
/// `r1v` lets callers amortize the r_1(v) evaluation over many faces.
pub fn face_w(
    c: &WeightState,
    d: &WeightState,
    b: &WeightState,
    a: &WeightState,
    v: &Cplx,
    r1v: &Cplx,
    env: &Env,
) -> Result<Cplx> {
    let cx = &env.cx;
    let (nu_hat, mu_hat, bc, dc) = match (
        admissible_step(a, b),
        admissible_step(a, d),
        admissible_step(b, c),
        admissible_step(d, c),
    ) {
        (Some(nb), Some(md), Some(bc), Some(dc)) => (nb, md, bc, dc),
        _ => return Ok(Cplx::zero(cx)),
    };
    let _ = dc;
    if mu_hat == nu_hat {
        let kappa = bc;
        if kappa == mu_hat {
            return Ok(r1v.clone());
        }
        // case 3: b = d = a + eb_mu, c adds eb_nu
        let (mu, nu) = (mu_hat, kappa);
        let amn = a.a_diff(mu, nu);
        return face_case3(v, amn, r1v, env);
    }
    // case 2: d = a + eb_mu, b = a + eb_nu, mu != nu
    let (mu, nu) = (mu_hat, nu_hat);
    let amn = a.a_diff(mu, nu);
    face_case2(v, amn, r1v, env)
}

fn bracket_int(m: i64, env: &Env) -> Result<crate::qelliptic::Bracket> {
    bracket_r_parts(&env.crat(Rational64::from_integer(m)), env)
}

fn face_case2(v: &Cplx, amn: i64, r1v: &Cplx, env: &Env) -> Result<Cplx> {
    let cx = &env.cx;
    let den_b = bracket_int(amn, env)?;
    guard_state(&den_b, amn, env)?;
    let one_minus_v = bracket_r_parts(&(&Cplx::one(cx) - v), env)?;
    guard_v(&one_minus_v, env)?;
    let num = &bracket_r(v, env)? * &bracket_int(amn + 1, env)?.value;
    let den = &one_minus_v.value * &den_b.value;
    Ok(-&(r1v * &cdiv(&num, &den, cx)))
}

fn face_case3(v: &Cplx, amn: i64, r1v: &Cplx, env: &Env) -> Result<Cplx> {
    let cx = &env.cx;
    let den_b = bracket_int(amn, env)?;
    guard_state(&den_b, amn, env)?;
    let one_minus_v = bracket_r_parts(&(&Cplx::one(cx) - v), env)?;
    guard_v(&one_minus_v, env)?;
    let num = &bracket_r(&Cplx::one(cx), env)?
        * &bracket_r(&(v + &env.crat(Rational64::from_integer(amn))), env)?;
    let den = &one_minus_v.value * &den_b.value;
    Ok(r1v * &cdiv(&num, &den, cx))
}

fn guard_state(b: &crate::qelliptic::Bracket, amn: i64, env: &Env) -> Result<()> {
    let tol = env.cx.pole_eps();
    if b.theta_part.norm_sqr().lt(&(&tol * &tol)) {
        return Err(Error::PoleError(format!("resonant state: [a_mn] = [{amn}] vanishes")));
    }
    Ok(())
}

fn guard_v(b: &crate::qelliptic::Bracket, env: &Env) -> Result<()> {
    let tol = env.cx.pole_eps();
    if b.theta_part.norm_sqr().lt(&(&tol * &tol)) {
        return Err(Error::PoleError("face weight pole at [1-v] = 0".into()));
    }
    Ok(())
}

/// Face Yang-Baxter residual over the hexagon (a, b, c, d, e, f), internal
/// state summed; relative to the largest summand magnitude.
#[allow(clippy::too_many_arguments)]
pub fn ybe_face_residual(
    a: &WeightState,
    b: &WeightState,
    c: &WeightState,
    d: &WeightState,
    e: &WeightState,
    f: &WeightState,
    v1: &Cplx,
    v2: &Cplx,
    env: &Env,
) -> Result<Real> {
    let cx = &env.cx;
    let v12 = v1 - v2;
    let r1_v1 = r_l_func(v1, 1, env)?;
    let r1_v2 = r_l_func(v2, 1, env)?;
    let r1_v12 = r_l_func(&v12, 1, env)?;
    let n = env.par.n;
    let mut lhs = Cplx::zero(cx);
    let mut rhs = Cplx::zero(cx);
    let mut scale = cx.zero();
    for m in 0..n {
        // lhs internal state g above a
        let g = a.add_eps_bar(m);
        let w1 = face_w(d, e, c, &g, v1, &r1_v1, env)?;
        if !w1.is_zero() {
            let w2 = face_w(c, &g, b, a, v2, &r1_v2, env)?;
            if !w2.is_zero() {
                let w3 = face_w(e, f, &g, a, &v12, &r1_v12, env)?;
                let term = &(&w1 * &w2) * &w3;
                let m2 = term.norm_sqr();
                if scale.lt(&m2) {
                    scale = m2;
                }
                lhs = &lhs + &term;
            }
        }
        // rhs internal state g above b and f
        let g = b.add_eps_bar(m);
        let w1 = face_w(&g, f, b, a, v1, &r1_v1, env)?;
        if !w1.is_zero() {
            let w2 = face_w(d, e, &g, f, v2, &r1_v2, env)?;
            if !w2.is_zero() {
                let w3 = face_w(d, &g, c, b, &v12, &r1_v12, env)?;
                let term = &(&w1 * &w2) * &w3;
                let m2 = term.norm_sqr();
                if scale.lt(&m2) {
                    scale = m2;
                }
                rhs = &rhs + &term;
            }
        }
    }
    if scale.is_zero() {
        return Err(Error::NotAdmissible("hexagon supports no admissible internal state".into()));
    }
    Ok(&(&lhs - &rhs).abs(cx) / &scale.sqrt(cx))
}

/// Low-temperature exponent probe: fits log|R^{mu nu}_{mu' nu'}(v)| against
/// log zeta (zeta = x^{2v/n}) at x = 1e-2 and 1e-3 and returns the slope.
pub fn lowtemp_probe(
    mu: usize,
    nu: usize,
    mu_p: usize,
    nu_p: usize,
    v: Rational64,
    par: &ModelParams,
    prec: crate::mp::Precision,
) -> Result<f64> {
    let mut points = Vec::new();
    for x in [Rational64::new(1, 100), Rational64::new(1, 1000)] {
        let env = Env::new(ModelParams::new(par.n, par.r, x)?, prec)?;
        let vv = env.crat(v);
        let r = r_full(&vv, &env)?;
        let entry = r.get(mu, nu, mu_p, nu_p);
        let mag = entry.abs(&env.cx);
        if mag.is_zero() {
            return Err(Error::DegenerateFit(format!(
                "entry ({mu},{nu};{mu_p},{nu_p}) vanishes at x={x}"
            )));
        }
        let ln_entry = mag.ln(&env.cx).to_f64();
        // ln zeta = (2 v / n) ln x
        let ln_zeta =
            (&env.cx.rational(v * Rational64::new(2, par.n as i64)) * &env.lnx).to_f64();
        if !ln_entry.is_finite() || !ln_zeta.is_finite() {
            return Err(Error::DegenerateFit("non-finite probe sample".into()));
        }
        points.push((ln_zeta, ln_entry));
    }
    let slope = (points[0].1 - points[1].1) / (points[0].0 - points[1].0);
    Ok(slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mp::Precision;

    fn env(n: usize, r: Rational64, x: Rational64, digits: u32) -> Env {
        Env::new(ModelParams::new(n, r, x).unwrap(), Precision::new(digits)).unwrap()
    }

    #[test]
    fn charsum_at_zero_is_permutation() {
        for n in [2usize, 3] {
            let e = env(n, Rational64::new(4, 1), Rational64::new(3, 10), 40);
            let t = rbar_charsum(&Cplx::zero(&e.cx), &e).unwrap();
            for i in 0..n {
                for k in 0..n {
                    for j in 0..n {
                        for l in 0..n {
                            let expect = if i == l && k == j { 1i64 } else { 0 };
                            let d = (t.get(i, k, j, l) - &e.crat(Rational64::from_integer(expect)))
                                .abs(&e.cx);
                            assert!(
                                d.lt(&e.cx.pow10(-36)),
                                "R(0)^{{{i}{k}}}_{{{j}{l}}} = {} want {expect}",
                                t.get(i, k, j, l)
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn two_routes_agree_entrywise() {
        for n in [2usize, 3] {
            let e = env(n, Rational64::new(4, 1), Rational64::new(3, 10), 40);
            let v = e.creal("0.27");
            let a = rbar_charsum(&v, &e).unwrap();
            let b = rbar_element_tensor(&v, &e).unwrap();
            let rel = &a.max_diff(&b, &e) / &a.max_abs(&e);
            assert!(rel.lt(&e.cx.pow10(-34)), "n={n}: rel = {}", rel.to_decimal());
        }
    }

    #[test]
    fn zn_symmetry_and_shift_invariance() {
        for n in [2usize, 3] {
            let e = env(n, Rational64::new(4, 1), Rational64::new(3, 10), 40);
            let v = e.creal("0.3");
            for t in [rbar_charsum(&v, &e).unwrap(), rbar_element_tensor(&v, &e).unwrap()] {
                assert!(t.zn_zero_pattern_ok());
                let res = &t.shift_invariance_residual(&e) / &t.max_abs(&e);
                assert!(res.lt(&e.cx.pow10(-36)), "n={n}: shift residual {}", res.to_decimal());
            }
        }
    }

    #[test]
    fn eight_vertex_structure_at_n2() {
        let e = env(2, Rational64::new(4, 1), Rational64::new(3, 10), 40);
        let v = e.creal("0.27");
        let t = rbar_element_tensor(&v, &e).unwrap();
        // shift invariance with p=1 pairs up the eight weights
        let pairs = [
            ((0, 0, 0, 0), (1, 1, 1, 1)),
            ((0, 1, 0, 1), (1, 0, 1, 0)),
            ((0, 1, 1, 0), (1, 0, 0, 1)),
            ((0, 0, 1, 1), (1, 1, 0, 0)),
        ];
        for ((i, k, j, l), (i2, k2, j2, l2)) in pairs {
            let d = (t.get(i, k, j, l) - t.get(i2, k2, j2, l2)).abs(&e.cx);
            assert!(d.lt(&e.cx.pow10(-36)));
        }
        // off-class entries vanish identically
        assert!(t.get(0, 0, 0, 1).is_zero());
    }

    #[test]
    fn r_full_prefactor_is_scalar_multiple() {
        let e = env(2, Rational64::new(4, 1), Rational64::new(3, 10), 40);
        let v = e.creal("0.4");
        let full = r_full(&v, &e).unwrap();
        let bare = rbar_charsum(&v, &e).unwrap();
        let pref = r_full_prefactor(&v, &e).unwrap();
        // full / pref reproduces bare entrywise
        let back = full.scale(&pref.recip(&e.cx));
        let rel = &back.max_diff(&bare, &e) / &bare.max_abs(&e);
        assert!(rel.lt(&e.cx.pow10(-36)));
        // prefactor at v=0 is 1, so R(0) = P
        let p0 = r_full_prefactor(&Cplx::zero(&e.cx), &e).unwrap();
        let d = (&p0 - &Cplx::one(&e.cx)).abs(&e.cx);
        assert!(d.lt(&e.cx.pow10(-38)));
    }

    #[test]
    fn r_full_pole_at_v_equals_one() {
        let e = env(2, Rational64::new(4, 1), Rational64::new(3, 10), 30);
        assert!(matches!(
            r_full_prefactor(&Cplx::one(&e.cx), &e),
            Err(Error::PoleError(_))
        ));
    }

    #[test]
    fn vertex_ybe_residuals() {
        // v2 = v1 makes R12(0) = P and the equation collapses
        let e = env(2, Rational64::new(4, 1), Rational64::new(3, 10), 40);
        let v = e.creal("0.31");
        let res = ybe_vertex_residual(&v, &v, &e).unwrap();
        assert!(res.lt(&e.cx.pow10(-34)), "degenerate YBE residual {}", res.to_decimal());
        for n in [2usize, 3] {
            let e = env(n, Rational64::new(4, 1), Rational64::new(3, 10), 40);
            let v1 = e.creal("0.31");
            let v2 = e.creal("0.17");
            let res = ybe_vertex_residual(&v1, &v2, &e).unwrap();
            assert!(res.lt(&e.cx.pow10(-32)), "n={n} YBE residual {}", res.to_decimal());
        }
    }

    #[test]
    fn face_weights_special_values() {
        let e = env(3, Rational64::new(9, 2), Rational64::new(1, 4), 40);
        let cx = &e.cx;
        let v = e.creal("0.31");
        let r1v = r_l_func(&v, 1, &e).unwrap();
        let a = WeightState::new(vec![3, 1, 0]);
        // W[a+2eb_mu, a+eb_mu; a+eb_mu, a] = r_1(v)
        let mu = 1usize;
        let b = a.add_eps_bar(mu);
        let c = b.add_eps_bar(mu);
        let w = face_w(&c, &b, &b, &a, &v, &r1v, &e).unwrap();
        assert!((&w - &r1v).abs(cx).lt(&cx.pow10(-36)));
        // v = 0 reduces W to the Kronecker delta on paths
        let r10 = r_l_func(&Cplx::zero(cx), 1, &e).unwrap();
        for mu in 0..3 {
            for nu in 0..3 {
                let d = a.add_eps_bar(mu);
                let b2 = a.add_eps_bar(nu);
                let c2 = d.add_eps_bar(nu);
                if admissible_step(&b2, &c2).is_none() {
                    continue;
                }
                let w0 = face_w(&c2, &d, &b2, &a, &Cplx::zero(cx), &r10, &e).unwrap();
                let expect = if b2 == d { 1i64 } else { 0 };
                let dd = (&w0 - &e.crat(Rational64::from_integer(expect))).abs(cx);
                assert!(dd.lt(&cx.pow10(-36)), "W(0) != delta at mu={mu} nu={nu}: {w0}");
            }
        }
        // non-admissible quadruple maps to zero
        let far = a.add_eps_bar(0).add_eps_bar(0);
        let w = face_w(&far, &far, &far, &a, &v, &r1v, &e).unwrap();
        assert!(w.is_zero());
    }

    #[test]
    fn face_weight_resonance_raises() {
        // r = 4 integer: a_{mu nu} = 4 hits a bracket zero
        let e = env(2, Rational64::new(4, 1), Rational64::new(3, 10), 30);
        let v = e.creal("0.3");
        let r1v = r_l_func(&v, 1, &e).unwrap();
        let a = WeightState::new(vec![3, 0]); // a_{01} = 4
        let b = a.add_eps_bar(0);
        let d = a.add_eps_bar(1);
        let c = a.add_eps_bar(0).add_eps_bar(1);
        assert!(matches!(
            face_w(&c, &d, &b, &a, &v, &r1v, &e),
            Err(Error::PoleError(_))
        ));
    }

    #[test]
    fn face_ybe_residual_random_hexagons() {
        let e = env(3, Rational64::new(9, 2), Rational64::new(1, 4), 40);
        let v1 = e.creal("0.31");
        let v2 = e.creal("0.17");
        let a = WeightState::new(vec![4, 2, 0]);
        // two orderings of the step multiset {0, 1, 2}
        let b = a.add_eps_bar(0);
        let c = b.add_eps_bar(1);
        let d = c.add_eps_bar(2);
        let f = a.add_eps_bar(2);
        let ee = f.add_eps_bar(1);
        let res = ybe_face_residual(&a, &b, &c, &d, &ee, &f, &v1, &v2, &e).unwrap();
        assert!(res.lt(&e.cx.pow10(-32)), "face YBE residual {}", res.to_decimal());
    }

    #[test]
    fn lowtemp_probe_matches_energy_exponents() {
        let par = ModelParams::new(2, Rational64::new(4, 1), Rational64::new(3, 10)).unwrap();
        let prec = Precision::new(40);
        let v = Rational64::new(1, 2);
        // H_v(1,0) = 0, H_v(0,0) = 1 at n=2
        let s10 = lowtemp_probe(1, 0, 0, 1, v, &par, prec).unwrap();
        assert!((s10 - 0.0).abs() < 0.05, "H_v(1,0) probe {s10}");
        let s00 = lowtemp_probe(0, 0, 0, 0, v, &par, prec).unwrap();
        assert!((s00 - 1.0).abs() < 0.05, "H_v(0,0) probe {s00}");
        // n=3: H_v(0,2) = 0
        let par3 = ModelParams::new(3, Rational64::new(4, 1), Rational64::new(3, 10)).unwrap();
        let s02 = lowtemp_probe(0, 2, 2, 0, v, &par3, prec).unwrap();
        assert!((s02 - 0.0).abs() < 0.05, "H_v(0,2) probe {s02}");
    }
}

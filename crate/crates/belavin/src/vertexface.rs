//! Intertwining vectors between the vertex and face models, their duals
//! (by linear solve), the correspondence residuals, tail-operator local
//! weights L and finite tail products.

use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::lattice::{admissible_step, WeightState};
use crate::mp::{cdiv, Cplx, Real};
use crate::params::Env;
use crate::qelliptic::{bracket_r, bracket_r_parts, riemann_theta_char};
use crate::weights::{face_w, r_full};

/// t(v)^a_{a - eb_mu}: the n-vector with components
/// theta[0, 1/2 + nu/n](v/(nr) + abar_mu / r; pi i/(n eps r)).
pub fn intertwiner(v: &Cplx, a: &WeightState, mu: usize, env: &Env) -> Result<Vec<Cplx>> {
    let cx = &env.cx;
    let n = env.par.n as i64;
    let tau_n = Cplx::new(cx.zero(), &cx.pi() / &(&cx.int(n) * &(&env.eps * &env.r_real)));
    let nr = Cplx::from_real(&cx.int(n) * &env.r_real, cx);
    let abar = cx.rational(a.abar(mu));
    let arg = &cdiv(v, &nr, cx) + &Cplx::from_real(&abar / &env.r_real, cx);
    let mut comps = Vec::with_capacity(n as usize);
    for nu in 0..n {
        let b = Rational64::new(1, 2) + Rational64::new(nu, n);
        comps.push(riemann_theta_char(Rational64::from_integer(0), b, &arg, &tau_n, env)?);
    }
    Ok(comps)
}

/// Square complex linear solve by Gaussian elimination with partial pivoting.
/// Returns the inverse of `m` (given row-major, n x n).
pub fn invert(m: &[Vec<Cplx>], env: &Env) -> Result<Vec<Vec<Cplx>>> {
    let cx = &env.cx;
    let n = m.len();
    let mut a: Vec<Vec<Cplx>> = m.to_vec();
    let mut inv: Vec<Vec<Cplx>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Cplx::one(cx) } else { Cplx::zero(cx) }).collect())
        .collect();
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col][col].norm_sqr();
        for row in col + 1..n {
            let m2 = a[row][col].norm_sqr();
            if best.lt(&m2) {
                best = m2;
                piv = row;
            }
        }
        if best.is_zero() {
            return Err(Error::SingularMatrix("exact zero pivot".into()));
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col].recip(cx);
        for j in 0..n {
            a[col][j] = &a[col][j] * &p;
            inv[col][j] = &inv[col][j] * &p;
        }
        for row in 0..n {
            if row == col || a[row][col].is_zero() {
                continue;
            }
            let f = a[row][col].clone();
            for j in 0..n {
                a[row][j] = &a[row][j] - &(&f * &a[col][j]);
                inv[row][j] = &inv[row][j] - &(&f * &inv[col][j]);
            }
        }
    }
    Ok(inv)
}

fn max_norm(m: &[Vec<Cplx>], env: &Env) -> Real {
    let mut best = env.cx.zero();
    for row in m {
        for e in row {
            let v = e.norm_sqr();
            if best.lt(&v) {
                best = v;
            }
        }
    }
    best.sqrt(&env.cx)
}

/// Dual intertwining vectors t*_mu(v)^{a - eb_nu}_a for all nu, as the rows
/// of the inverse of the matrix whose columns are t(v)^a_{a - eb_nu}.
/// Returned as `dual[nu][mu]`; fails when the condition estimate exceeds
/// 10^{digits/2}.
pub fn dual_intertwiners(v: &Cplx, a: &WeightState, env: &Env) -> Result<Vec<Vec<Cplx>>> {
    let n = env.par.n;
    let mut m: Vec<Vec<Cplx>> = vec![Vec::with_capacity(n); n];
    for nu in 0..n {
        let t = intertwiner(v, a, nu, env)?;
        for (comp_row, tc) in m.iter_mut().zip(t) {
            comp_row.push(tc);
        }
    }
    let inv = invert(&m, env)?;
    let cond = &max_norm(&m, env) * &max_norm(&inv, env);
    let bound = env.cx.pow10((env.cx.prec.digits / 2) as i64);
    if bound.lt(&cond) {
        return Err(Error::SingularMatrix(format!(
            "condition estimate {} exceeds 1e{}",
            cond.to_decimal(),
            env.cx.prec.digits / 2
        )));
    }
    Ok(inv)
}

/// Max-norm residual of the vertex-face correspondence
/// R(v1-v2) t(v1)^d_a (x) t(v2)^c_d = sum_b t(v1)^c_b (x) t(v2)^b_a W[c d; b a].
pub fn check_vf(
    v1: &Cplx,
    v2: &Cplx,
    a: &WeightState,
    d: &WeightState,
    c: &WeightState,
    env: &Env,
) -> Result<Real> {
    let cx = &env.cx;
    let n = env.par.n;
    if admissible_step(a, d).is_none() || admissible_step(d, c).is_none() {
        return Err(Error::NotAdmissible("(a,d) and (d,c) must be admissible".into()));
    }
    let v12 = v1 - v2;
    let r = r_full(&v12, env)?;
    let t1 = intertwiner(v1, d, step_down(d, a)?, env)?;
    let t2 = intertwiner(v2, c, step_down(c, d)?, env)?;
    // lhs_{ik} = sum_{jl} R^{ik}_{jl} t1_j t2_l
    let mut lhs = vec![Cplx::zero(cx); n * n];
    for i in 0..n {
        for k in 0..n {
            let mut acc = Cplx::zero(cx);
            for j in 0..n {
                for l in 0..n {
                    let e = r.get(i, k, j, l);
                    if !e.is_zero() {
                        acc = &acc + &(&(e * &t1[j]) * &t2[l]);
                    }
                }
            }
            lhs[i * n + k] = acc;
        }
    }
    // rhs_{ik} = sum_b t(v1)^c_b_i t(v2)^b_a_k W[c d; b a | v12]
    let r1v = crate::qelliptic::r_l_func(&v12, 1, env)?;
    let mut rhs = vec![Cplx::zero(cx); n * n];
    for m in 0..n {
        let b = a.add_eps_bar(m);
        if admissible_step(&b, c).is_none() {
            continue;
        }
        let w = face_w(c, d, &b, a, &v12, &r1v, env)?;
        if w.is_zero() {
            continue;
        }
        let tb1 = intertwiner(v1, c, step_down(c, &b)?, env)?;
        let tb2 = intertwiner(v2, &b, step_down(&b, a)?, env)?;
        for i in 0..n {
            for k in 0..n {
                rhs[i * n + k] = &rhs[i * n + k] + &(&(&tb1[i] * &tb2[k]) * &w);
            }
        }
    }
    relative_residual(&lhs, &rhs, env)
}

/// Dual version: t*(v1)^b_c (x) t*(v2)^a_b R(v1-v2) = sum_d W[c d; b a] t*(v1)^a_d (x) t*(v2)^d_c.
pub fn check_vf_dual(
    v1: &Cplx,
    v2: &Cplx,
    a: &WeightState,
    b: &WeightState,
    c: &WeightState,
    env: &Env,
) -> Result<Real> {
    let cx = &env.cx;
    let n = env.par.n;
    if admissible_step(a, b).is_none() || admissible_step(b, c).is_none() {
        return Err(Error::NotAdmissible("(a,b) and (b,c) must be admissible".into()));
    }
    let v12 = v1 - v2;
    let r = r_full(&v12, env)?;
    let s1 = dual_row(v1, c, b, env)?;
    let s2 = dual_row(v2, b, a, env)?;
    // lhs_{jl} = sum_{ik} s1_i s2_k R^{ik}_{jl}
    let mut lhs = vec![Cplx::zero(cx); n * n];
    for j in 0..n {
        for l in 0..n {
            let mut acc = Cplx::zero(cx);
            for i in 0..n {
                for k in 0..n {
                    let e = r.get(i, k, j, l);
                    if !e.is_zero() {
                        acc = &acc + &(&(e * &s1[i]) * &s2[k]);
                    }
                }
            }
            lhs[j * n + l] = acc;
        }
    }
    let r1v = crate::qelliptic::r_l_func(&v12, 1, env)?;
    let mut rhs = vec![Cplx::zero(cx); n * n];
    for m in 0..n {
        let d = a.add_eps_bar(m);
        if admissible_step(&d, c).is_none() {
            continue;
        }
        let w = face_w(c, &d, b, a, &v12, &r1v, env)?;
        if w.is_zero() {
            continue;
        }
        let sd1 = dual_row(v1, &d, a, env)?;
        let sd2 = dual_row(v2, c, &d, env)?;
        for j in 0..n {
            for l in 0..n {
                rhs[j * n + l] = &rhs[j * n + l] + &(&(&sd1[j] * &sd2[l]) * &w);
            }
        }
    }
    relative_residual(&lhs, &rhs, env)
}

/// The dual row vector t*(v)^{lo}_{hi} for the admissible pair hi = lo + eb_nu,
/// i.e. row nu of the inverse intertwiner matrix at state hi.
fn dual_row(v: &Cplx, hi: &WeightState, lo: &WeightState, env: &Env) -> Result<Vec<Cplx>> {
    let nu = step_down(hi, lo)?;
    let dual = dual_intertwiners(v, hi, env)?;
    Ok(dual[nu].clone())
}

/// mu such that lo = hi - eb_mu.
fn step_down(hi: &WeightState, lo: &WeightState) -> Result<usize> {
    admissible_step(lo, hi)
        .ok_or_else(|| Error::NotAdmissible("states do not differ by one eps-bar".into()))
}

/// L[a' a'-eb_nu; a a-eb_mu | u] by the closed bracket formula. The head
/// bracket carries a negated theta argument when n is odd (the interpolation
/// zero sits at u + abar_mu + i pi/(2 eps) there, not on the real axis).
pub fn l_weight_closed(
    a_up: &WeightState,
    nu: usize,
    a_dn: &WeightState,
    mu: usize,
    u: &Cplx,
    env: &Env,
) -> Result<Cplx> {
    let cx = &env.cx;
    let n = env.par.n;
    let head_bracket = |w: &Cplx| -> Result<crate::qelliptic::Bracket> {
        crate::qelliptic::bracket_head_parts(w, env)
    };
    let ub = head_bracket(u)?;
    let tol = cx.pole_eps();
    if ub.theta_part.norm_sqr().lt(&(&tol * &tol)) {
        return Err(Error::PoleError("L weight needs [u] != 0".into()));
    }
    let abar_mu = cx.rational(a_dn.abar(mu));
    let apbar_nu = cx.rational(a_up.abar(nu));
    let head = cdiv(
        &head_bracket(&(u + &Cplx::from_real(&abar_mu - &apbar_nu, cx)))?.value,
        &ub.value,
        cx,
    );
    let mut prod = head;
    for j in 0..n {
        if j == mu {
            continue;
        }
        let num = bracket_r(
            &Cplx::from_real(&cx.rational(a_up.abar(nu)) - &cx.rational(a_dn.abar(j)), cx),
            env,
        )?;
        let den = bracket_r_parts(&env.crat(Rational64::from_integer(a_dn.a_diff(mu, j))), env)?;
        if den.theta_part.norm_sqr().lt(&(&tol * &tol)) {
            return Err(Error::PoleError(format!("L weight pole: [a_({mu}{j})] = 0")));
        }
        prod = &prod * &cdiv(&num, &den.value, cx);
    }
    Ok(prod)
}

/// L[a'_0 a'_1; a_0 a_1 | u] as the defining sum over components:
/// sum_mu t*_mu(-u)_{a_0}^{a_1} t^mu(-u)^{a'_0}_{a'_1}.
pub fn l_weight_sum(
    a_up0: &WeightState,
    a_up1: &WeightState,
    a_dn0: &WeightState,
    a_dn1: &WeightState,
    u: &Cplx,
    env: &Env,
) -> Result<Cplx> {
    let cx = &env.cx;
    let mu = let_down(a_up0, a_up1)?;
    let mv = -u;
    let dual = dual_row(&mv, a_dn0, a_dn1, env)?;
    let t = intertwiner(&mv, a_up0, mu, env)?;
    let mut acc = Cplx::zero(cx);
    for (d, tt) in dual.iter().zip(&t) {
        acc = &acc + &(d * tt);
    }
    Ok(acc)
}

fn let_down(hi: &WeightState, lo: &WeightState) -> Result<usize> {
    admissible_step(lo, hi)
        .ok_or_else(|| Error::NotAdmissible("upper path pair not admissible".into()))
}

/// Finite tail product Lambda(u)^{upper_0}_{lower_0} over two admissible
/// downward paths that coincide beyond their stored prefixes.
/// Paths are given as state sequences (a_0, a_1, ..., a_J) with
/// a_{j+1} = a_j - eb_{mu_j}; both must end at the same state.
pub fn tail_product(
    upper: &[WeightState],
    lower: &[WeightState],
    u: &Cplx,
    env: &Env,
) -> Result<Cplx> {
    if upper.len() != lower.len() || upper.is_empty() {
        return Err(Error::NotAdmissible("tail paths must have equal nonzero length".into()));
    }
    if upper.last().unwrap() != lower.last().unwrap() {
        return Err(Error::NotAdmissible("tail paths must merge at the end".into()));
    }
    let cx = &env.cx;
    let mut acc = Cplx::one(cx);
    for j in 0..upper.len() - 1 {
        let a_up0 = &upper[j];
        let a_up1 = &upper[j + 1];
        let a_dn0 = &lower[j];
        let a_dn1 = &lower[j + 1];
        if a_up0 == a_dn0 {
            // delta factor: 1 if the next states agree, else the product dies
            if a_up1 == a_dn1 {
                continue;
            } else {
                return Ok(Cplx::zero(cx));
            }
        }
        let nu = let_down(a_up0, a_up1)?;
        let mu = let_down(a_dn0, a_dn1)?;
        acc = &acc * &l_weight_closed(a_up0, nu, a_dn0, mu, u, env)?;
    }
    Ok(acc)
}

/// Both sides of the omega-weighted completeness identity:
/// sum_j w^j t*_j(v)^{a-eb_nu}_a t^j(v)^a_{a-eb_mu}
///   = [v + a_{mu nu}]_w / [v] * prod_{j != nu} [a_{mu j}]_w / [a_{nu j}],
/// where v is the difference argument (v - u in the trace pipeline).
pub fn omega_weighted_sum(
    a: &WeightState,
    mu: usize,
    nu: usize,
    v: &Cplx,
    env: &Env,
) -> Result<(Cplx, Cplx, Real)> {
    let cx = &env.cx;
    let n = env.par.n;
    let dual = dual_intertwiners(v, a, env)?;
    let t = intertwiner(v, a, mu, env)?;
    let mut lhs = Cplx::zero(cx);
    for j in 0..n {
        let w = env.omega_pow(j as i64, cx);
        lhs = &lhs + &(&(&w * &dual[nu][j]) * &t[j]);
    }
    let vb = crate::qelliptic::bracket_head_parts(v, env)?;
    let tol = cx.pole_eps();
    if vb.theta_part.norm_sqr().lt(&(&tol * &tol)) {
        return Err(Error::PoleError("omega-weighted sum needs a nonvanishing denominator".into()));
    }
    let amn = a.a_diff(mu, nu);
    let mut rhs = cdiv(
        &crate::qelliptic::bracket_omega_head_parts(
            &(v + &env.crat(Rational64::from_integer(amn))),
            env,
        )?
        .value,
        &vb.value,
        cx,
    );
    for j in 0..n {
        if j == nu {
            continue;
        }
        let num = crate::qelliptic::bracket_omega(
            &env.crat(Rational64::from_integer(a.a_diff(mu, j))),
            env,
        )?;
        let den = bracket_r_parts(&env.crat(Rational64::from_integer(a.a_diff(nu, j))), env)?;
        if den.theta_part.norm_sqr().lt(&(&tol * &tol)) {
            return Err(Error::PoleError(format!("omega-weighted sum pole: [a_({nu}{j})] = 0")));
        }
        rhs = &rhs * &cdiv(&num, &den.value, cx);
    }
    let scale = lhs.abs(cx).max_with(&rhs.abs(cx));
    let resid = &(&lhs - &rhs).abs(cx) / &scale;
    Ok((lhs, rhs, resid))
}

fn relative_residual(lhs: &[Cplx], rhs: &[Cplx], env: &Env) -> Result<Real> {
    let cx = &env.cx;
    let mut worst = cx.zero();
    let mut scale = cx.zero();
    for (a, b) in lhs.iter().zip(rhs) {
        let d = (a - b).norm_sqr();
        if worst.lt(&d) {
            worst = d;
        }
        for m in [a.norm_sqr(), b.norm_sqr()] {
            if scale.lt(&m) {
                scale = m;
            }
        }
    }
    if scale.is_zero() {
        return Err(Error::DomainError("residual of identically zero sides".into()));
    }
    Ok(&worst.sqrt(cx) / &scale.sqrt(cx))
}

#[cfg(test)]
mod tests {
#[test]
fn probe_l_ratios() {
    use super::*;
    
    
    
    
    let e = Env::new(
        ModelParams::new(3, Rational64::new(9, 2), Rational64::new(1, 4)).unwrap(),
        crate::mp::Precision::new(40),
    )
    .unwrap();
    let u = e.creal("0.8");
    let a = WeightState::new(vec![4, 2, 0]);
    for shift in 0..3usize {
        let a_up = a.add_eps_bar(shift);
        for nu in 0..3 {
            for mu in 0..3 {
                let closed = l_weight_closed(&a_up, nu, &a, mu, &u, &e);
                let summed = l_weight_sum(&a_up, &a_up.sub_eps_bar(nu), &a, &a.sub_eps_bar(mu), &u, &e);
                match (closed, summed) {
                    (Ok(c), Ok(s)) => {
                        let (cr, ci) = c.to_f64s();
                        let (sr, si) = s.to_f64s();
                        let rat = if sr.abs() + si.abs() > 1e-20 {
                            let d = sr * sr + si * si;
                            ((cr * sr + ci * si) / d, (ci * sr - cr * si) / d)
                        } else {
                            (f64::NAN, f64::NAN)
                        };
                        println!("shift={shift} nu={nu} mu={mu}: closed=({cr:.6},{ci:.6}) sum=({sr:.6},{si:.6}) ratio=({:.6},{:.6})", rat.0, rat.1);
                    }
                    (c, s) => println!("shift={shift} nu={nu} mu={mu}: {:?} {:?}", c.err(), s.err()),
                }
            }
        }
    }
}

    use super::*;
    use crate::mp::Precision;
    use crate::params::ModelParams;

    fn env(n: usize, r: Rational64, x: Rational64, digits: u32) -> Env {
        Env::new(ModelParams::new(n, r, x).unwrap(), Precision::new(digits)).unwrap()
    }



    #[test]
    fn intertwiner_components_nonzero_and_shift_stable() {
        let e = env(2, Rational64::new(4, 1), Rational64::new(1, 4), 40);
        let a = WeightState::new(vec![1, 0]); // a_{01} = 2
        assert_eq!(a.a_diff(0, 1), 2);
        let v = e.creal("0.3");
        let t = intertwiner(&v, &a, 0, &e).unwrap();
        for c in &t {
            assert!(!c.abs(&e.cx).lt(&e.cx.pow10(-30)), "vanishing component {c}");
        }
        // nu -> nu + n leaves a component invariant (characteristic shift by 1
        // at a = 0 contributes no phase)
        let n = e.par.n as i64;
        let tau_n =
            Cplx::new(e.cx.zero(), &e.cx.pi() / &(&e.cx.int(n) * &(&e.eps * &e.r_real)));
        let nr = Cplx::from_real(&e.cx.int(n) * &e.r_real, &e.cx);
        let arg = &cdiv(&v, &nr, &e.cx)
            + &Cplx::from_real(&e.cx.rational(a.abar(0)) / &e.r_real, &e.cx);
        let shifted = riemann_theta_char(
            Rational64::from_integer(0),
            Rational64::new(1, 2) + Rational64::new(n, n),
            &arg,
            &tau_n,
            &e,
        )
        .unwrap();
        let d = (&shifted - &t[0]).abs(&e.cx);
        assert!(d.lt(&e.cx.pow10(-36)));
    }

    #[test]
    fn dual_orthogonality_both_ways() {
        let e = env(3, Rational64::new(9, 2), Rational64::new(1, 4), 40);
        let a = WeightState::new(vec![4, 2, 0]);
        let v = e.creal("0.27");
        let dual = dual_intertwiners(&v, &a, &e).unwrap();
        let n = e.par.n;
        let ts: Vec<Vec<Cplx>> =
            (0..n).map(|mu| intertwiner(&v, &a, mu, &e).unwrap()).collect();
        // sum_mu t*_mu^{(nu)} t^mu_{(nu')} = delta and the transpose relation
        for nu in 0..n {
            for nup in 0..n {
                let mut acc = Cplx::zero(&e.cx);
                for mu in 0..n {
                    acc = &acc + &(&dual[nu][mu] * &ts[nup][mu]);
                }
                let expect = if nu == nup { 1 } else { 0 };
                let d = (&acc - &e.crat(Rational64::from_integer(expect))).abs(&e.cx);
                assert!(d.lt(&e.cx.pow10(-36)), "orthogonality failure {nu} {nup}");
            }
        }
        for mu in 0..n {
            for mup in 0..n {
                let mut acc = Cplx::zero(&e.cx);
                for nu in 0..n {
                    acc = &acc + &(&ts[mu][nu] * &dual[nu][mup]);
                }
                let expect = if mu == mup { 1 } else { 0 };
                let d = (&acc - &e.crat(Rational64::from_integer(expect))).abs(&e.cx);
                assert!(d.lt(&e.cx.pow10(-36)), "completeness failure {mu} {mup}");
            }
        }
    }

    #[test]
    fn dual_matches_cramer_at_n2() {
        let e = env(2, Rational64::new(4, 1), Rational64::new(1, 4), 40);
        let a = WeightState::new(vec![1, 0]);
        let v = e.creal("0.19");
        let cx = &e.cx;
        let t0 = intertwiner(&v, &a, 0, &e).unwrap();
        let t1 = intertwiner(&v, &a, 1, &e).unwrap();
        // matrix columns (t0 t1); Cramer inverse
        let det = &(&t0[0] * &t1[1]) - &(&t0[1] * &t1[0]);
        let inv = [
            [cdiv(&t1[1], &det, cx), -&cdiv(&t1[0], &det, cx)],
            [-&cdiv(&t0[1], &det, cx), cdiv(&t0[0], &det, cx)],
        ];
        let dual = dual_intertwiners(&v, &a, &e).unwrap();
        for nu in 0..2 {
            for mu in 0..2 {
                let d = (&dual[nu][mu] - &inv[nu][mu]).abs(cx);
                assert!(d.lt(&cx.pow10(-36)));
            }
        }
    }

    #[test]
    fn vertex_face_correspondence() {
        for n in [2usize, 3] {
            let e = env(n, Rational64::new(9, 2), Rational64::new(1, 4), 40);
            let v1 = e.creal("0.31");
            let v2 = e.creal("0.12");
            let a = WeightState::new((0..n as i64).map(|i| 2 * (n as i64 - 1 - i)).collect());
            let d = a.add_eps_bar(0);
            let c = d.add_eps_bar(1 % n);
            let res = check_vf(&v1, &v2, &a, &d, &c, &e).unwrap();
            assert!(res.lt(&e.cx.pow10(-32)), "n={n} vf residual {}", res.to_decimal());
            let b = a.add_eps_bar(1 % n);
            let c2 = b.add_eps_bar(0);
            let res = check_vf_dual(&v1, &v2, &a, &b, &c2, &e).unwrap();
            assert!(res.lt(&e.cx.pow10(-32)), "n={n} dual vf residual {}", res.to_decimal());
        }
    }

    #[test]
    fn l_weight_delta_property() {
        let e = env(3, Rational64::new(9, 2), Rational64::new(1, 4), 40);
        let u = e.creal("0.8");
        let a = WeightState::new(vec![4, 2, 0]);
        // L[a a'; a a''] = delta^{a'}_{a''}
        for nu in 0..3 {
            for mu in 0..3 {
                let got = l_weight_sum(
                    &a,
                    &a.sub_eps_bar(nu),
                    &a,
                    &a.sub_eps_bar(mu),
                    &u,
                    &e,
                )
                .unwrap();
                let expect = if nu == mu { 1 } else { 0 };
                let d = (&got - &e.crat(Rational64::from_integer(expect))).abs(&e.cx);
                assert!(d.lt(&e.cx.pow10(-34)), "delta failure nu={nu} mu={mu}: {got}");
            }
        }
    }

    #[test]
    fn l_weight_closed_matches_sum() {
        let e = env(3, Rational64::new(9, 2), Rational64::new(1, 4), 40);
        let u = e.creal("0.8");
        let a = WeightState::new(vec![4, 2, 0]);
        for shift in 0..3usize {
            let a_up = a.add_eps_bar(shift);
            for nu in 0..3 {
                for mu in 0..3 {
                    let closed =
                        l_weight_closed(&a_up, nu, &a, mu, &u, &e).unwrap();
                    let summed = l_weight_sum(
                        &a_up,
                        &a_up.sub_eps_bar(nu),
                        &a,
                        &a.sub_eps_bar(mu),
                        &u,
                        &e,
                    )
                    .unwrap();
                    let scale = closed.abs(&e.cx).max_with(&summed.abs(&e.cx));
                    if scale.lt(&e.cx.pow10(-30)) {
                        continue;
                    }
                    let rel = &(&closed - &summed).abs(&e.cx) / &scale;
                    assert!(
                        rel.lt(&e.cx.pow10(-32)),
                        "closed vs sum at shift={shift} nu={nu} mu={mu}: {}",
                        rel.to_decimal()
                    );
                }
            }
        }
    }

    #[test]
    fn l_weight_pole_guard() {
        let e = env(2, Rational64::new(4, 1), Rational64::new(1, 4), 30);
        let a = WeightState::new(vec![1, 0]);
        assert!(matches!(
            l_weight_closed(&a.add_eps_bar(0), 0, &a, 0, &Cplx::zero(&e.cx), &e),
            Err(Error::PoleError(_))
        ));
    }

    #[test]
    fn tail_products() {
        let e = env(2, Rational64::new(4, 1), Rational64::new(1, 4), 40);
        let u = e.creal("0.8");
        let a = WeightState::new(vec![1, 0]);
        // identical paths: Lambda = 1
        let path: Vec<WeightState> =
            vec![a.clone(), a.sub_eps_bar(0), a.sub_eps_bar(0).sub_eps_bar(1)];
        let lam = tail_product(&path, &path, &u, &e).unwrap();
        assert!((&lam - &Cplx::one(&e.cx)).abs(&e.cx).lt(&e.cx.pow10(-38)));
        // paths differing at the first site only: the single L weight
        let merge = a.sub_eps_bar(0).sub_eps_bar(1);
        let upper = vec![a.sub_eps_bar(0).add_eps_bar(1), a.sub_eps_bar(0), merge.clone()];
        let lower = vec![a.clone(), a.sub_eps_bar(0), merge.clone()];
        let lam = tail_product(&upper, &lower, &u, &e).unwrap();
        let single = l_weight_closed(&upper[0], 1, &lower[0], 0, &u, &e).unwrap();
        let d = (&lam - &single).abs(&e.cx);
        assert!(d.lt(&e.cx.pow10(-34)));
        // J-stability: padding both paths with five common steps changes nothing
        let mut up2 = upper.clone();
        let mut lo2 = lower.clone();
        let mut cur = merge;
        for j in 0..5 {
            cur = cur.sub_eps_bar(j % 2);
            up2.push(cur.clone());
            lo2.push(cur.clone());
        }
        let lam2 = tail_product(&up2, &lo2, &u, &e).unwrap();
        let d = (&lam - &lam2).abs(&e.cx);
        assert!(d.lt(&e.cx.pow10(-34)));
    }

    #[test]
    fn omega_weighted_identity() {
        for n in [2usize, 3] {
            let e = env(n, Rational64::new(9, 2), Rational64::new(1, 4), 40);
            let a = WeightState::new((0..n as i64).map(|i| 2 * (n as i64 - 1 - i)).collect());
            let v = e.creal("0.23");
            for mu in 0..n {
                for nu in 0..n {
                    let (_, _, resid) = omega_weighted_sum(&a, mu, nu, &v, &e).unwrap();
                    assert!(
                        resid.lt(&e.cx.pow10(-32)),
                        "n={n} mu={mu} nu={nu} residual {}",
                        resid.to_decimal()
                    );
                }
            }
        }
        // omega -> 1 analog is plain orthogonality: sum_j t*_j t^j = delta_{mu nu}
        let e = env(2, Rational64::new(9, 2), Rational64::new(1, 4), 40);
        let a = WeightState::new(vec![2, 0]);
        let v = e.creal("0.23");
        let dual = dual_intertwiners(&v, &a, &e).unwrap();
        let t = intertwiner(&v, &a, 0, &e).unwrap();
        let mut acc = Cplx::zero(&e.cx);
        for j in 0..2 {
            acc = &acc + &(&dual[1][j] * &t[j]);
        }
        assert!(acc.abs(&e.cx).lt(&e.cx.pow10(-36)));
    }
}

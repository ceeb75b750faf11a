//! Seeded residual suites: each family of identities gets a runner that
//! draws reproducible random configurations, evaluates the residuals and
//! returns them as reports.

use std::time::Instant;

use num_rational::Rational64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::correlation::{
    elliptic_sum_zero, generic_boundary, polarization_formula, polarization_pipeline,
    s_limit, s_limit_closed, s_sum_inner, PipelineSettings,
};
use crate::ctm;
use crate::error::{Error, Result};
use crate::lattice::WeightState;
use crate::mp::{cdiv, Cplx, Precision};
use crate::params::{rat_round, Env, ModelParams};
use crate::qelliptic::{bracket_r, theta_q, theta_q_series};
use crate::report::{ResidualReport, RunReport};
use crate::vertexface::{
    check_vf, check_vf_dual, dual_intertwiners, intertwiner, l_weight_closed, l_weight_sum,
    omega_weighted_sum, tail_product,
};
use crate::weights::{
    face_w, rbar_charsum, rbar_element_tensor, ybe_face_residual,
    ybe_vertex_residual,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckGroup {
    SpecialFunctions,
    Ybe,
    VertexFace,
    Tail,
    Characters,
    Correlation,
    All,
}

impl CheckGroup {
    pub fn parse(s: &str) -> Result<CheckGroup> {
        Ok(match s {
            "special-functions" => CheckGroup::SpecialFunctions,
            "ybe" => CheckGroup::Ybe,
            "vertex-face" => CheckGroup::VertexFace,
            "tail" => CheckGroup::Tail,
            "characters" => CheckGroup::Characters,
            "correlation" => CheckGroup::Correlation,
            "all" => CheckGroup::All,
            other => {
                return Err(Error::Config(format!(
                    "unknown check group '{other}' (expected special-functions, ybe, vertex-face, tail, characters, correlation or all)"
                )))
            }
        })
    }
}

/// Budgets for a verification run; every field has a default.
#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub params: ModelParams,
    pub digits: u32,
    pub seed: u64,
    pub draws: usize,
    pub radius: i64,
    pub sector: usize,
    pub pipeline: PipelineSettings,
    /// Run the full contour pipeline inside the correlation group.
    pub run_pipeline: bool,
}

impl CheckConfig {
    pub fn new(params: ModelParams) -> Self {
        let n = params.n;
        CheckConfig {
            params,
            digits: 40,
            seed: 7,
            draws: 50,
            radius: if n == 2 { 10 } else { 8 },
            sector: 0,
            pipeline: PipelineSettings::defaults_for(n),
            run_pipeline: n <= 3,
        }
    }

    fn env(&self) -> Result<Env> {
        Env::new(self.params, Precision::new(self.digits))
    }
}

/// Draws a spectral parameter in (1/20, 19/20) with three decimals.
fn draw_v(rng: &mut ChaCha8Rng) -> Rational64 {
    Rational64::new(rng.gen_range(50..950), 1000)
}

/// Draws a non-resonant state: all pairwise label differences (and their
/// neighbourhood of width `pad`) stay away from multiples of r.
fn draw_state(rng: &mut ChaCha8Rng, n: usize, r: Rational64, pad: i64) -> WeightState {
    loop {
        let a = WeightState::new((0..n).map(|_| rng.gen_range(-4i64..5)).collect());
        let mut ok = true;
        'outer: for mu in 0..n {
            for nu in 0..n {
                if mu == nu {
                    continue;
                }
                for s in -pad..=pad {
                    let d = Rational64::from_integer(a.a_diff(mu, nu) + s);
                    let m = d - r * Rational64::from_integer(rat_round(d / r));
                    if m.numer().abs() * 2 < *m.denom() {
                        // within 1/2 of a bracket zero
                        if (d - r * Rational64::from_integer(rat_round(d / r))).numer() == &0
                            || m.numer().abs() * 3 < *m.denom()
                        {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
            }
        }
        if ok {
            return a;
        }
    }
}

pub fn run_group(group: CheckGroup, cfg: &CheckConfig) -> Result<RunReport> {
    let mut config = serde_json::Map::new();
    config.insert("n".into(), cfg.params.n.into());
    config.insert("r".into(), cfg.params.r.to_string().into());
    config.insert("x".into(), cfg.params.x.to_string().into());
    config.insert("digits".into(), cfg.digits.into());
    config.insert("seed".into(), cfg.seed.into());
    config.insert("draws".into(), cfg.draws.into());
    config.insert("radius".into(), cfg.radius.into());
    if cfg.params.r_below_rank_bound() {
        config.insert("warning".into(), "r <= n-1: outside the stated parameter bound".into());
    }
    let mut report = RunReport::new(config);
    match group {
        CheckGroup::SpecialFunctions => special_functions(cfg, &mut report)?,
        CheckGroup::Ybe => ybe(cfg, &mut report)?,
        CheckGroup::VertexFace => vertex_face(cfg, &mut report)?,
        CheckGroup::Tail => tail(cfg, &mut report)?,
        CheckGroup::Characters => characters(cfg, &mut report)?,
        CheckGroup::Correlation => correlation_checks(cfg, &mut report)?,
        CheckGroup::All => {
            special_functions(cfg, &mut report)?;
            ybe(cfg, &mut report)?;
            vertex_face(cfg, &mut report)?;
            tail(cfg, &mut report)?;
            characters(cfg, &mut report)?;
            correlation_checks(cfg, &mut report)?;
        }
    }
    Ok(report)
}

fn special_functions(cfg: &CheckConfig, report: &mut RunReport) -> Result<()> {
    let env = cfg.env()?;
    let cx = &env.cx;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let digits = cfg.digits as i64;
    // theta product vs series over random points
    let t0 = Instant::now();
    let mut worst = cx.zero();
    for _ in 0..cfg.draws.max(20) {
        let zr = Rational64::new(rng.gen_range(-1500..1500), 1000);
        let zi = Rational64::new(rng.gen_range(-1500..1500), 1000);
        if zr.numer().abs() + zi.numer().abs() < 100 {
            continue;
        }
        let q = Rational64::new(rng.gen_range(50..800), 1000);
        let z = Cplx::new(cx.rational(zr), cx.rational(zi));
        let qc = env.crat(q);
        let prod = theta_q(&z, &qc, &env)?;
        let ser = theta_q_series(&z, &qc, &env)?;
        let scale = prod.abs(cx).max_with(&cx.pow10(-digits / 2));
        let rel = &(&prod - &ser).abs(cx) / &scale;
        worst = worst.max_with(&rel);
    }
    report.push(ResidualReport::from_real("theta-product-vs-series", &worst, -(digits - 2), t0));
    // bracket oddness and quasi-periodicity
    let t0 = Instant::now();
    let mut worst = cx.zero();
    for _ in 0..cfg.draws.max(20) {
        let v = env.crat(draw_v(&mut rng));
        let b = bracket_r(&v, &env)?;
        let odd = &bracket_r(&(-&v), &env)? + &b;
        let per = &bracket_r(&(&v + &env.crat(cfg.params.r)), &env)? + &b;
        let scale = b.abs(cx).max_with(&cx.pow10(-digits / 2));
        worst = worst.max_with(&(&odd.abs(cx) / &scale));
        worst = worst.max_with(&(&per.abs(cx) / &scale));
    }
    report.push(ResidualReport::from_real("bracket-oddness-quasi-periodicity", &worst, -(digits - 2), t0));
    // modular bridge on the stated grid
    let t0 = Instant::now();
    let mut worst = cx.zero();
    for rv in [Rational64::from_integer(2), Rational64::from_integer(5)] {
        for xv in [Rational64::new(1, 10), Rational64::new(1, 2)] {
            let e = Env::new(ModelParams::new(cfg.params.n, rv, xv)?, Precision::new(cfg.digits))?;
            for k in 1..=9i64 {
                let v = e.crat(Rational64::new(k, 10));
                let vr = cdiv(&v, &Cplx::from_real(e.r_real.clone(), &e.cx), &e.cx);
                let tau = Cplx::new(e.cx.zero(), &e.cx.pi() / &(&e.eps * &e.r_real));
                let lhs = crate::qelliptic::riemann_theta_char(
                    Rational64::new(1, 2),
                    Rational64::new(-1, 2),
                    &vr,
                    &tau,
                    &e,
                )?;
                let er = &e.eps * &e.r_real;
                let scale = (&er / &e.cx.pi()).sqrt(&e.cx)
                    * (&er / &e.cx.int(4)).neg().exp(&e.cx);
                let rhs = bracket_r(&v, &e)?.scale(&scale);
                let rel = &(&lhs - &rhs).abs(&e.cx) / &rhs.abs(&e.cx);
                worst = worst.max_with(&rel);
            }
        }
    }
    report.push(ResidualReport::from_real("theta-modular-bridge", &worst, -(digits - 4), t0));
    // precision escalation
    let t0 = Instant::now();
    let hi = Env::new(cfg.params, Precision::new(cfg.digits + 20))?;
    let v = env.creal("0.37");
    let vh = hi.creal("0.37");
    let d = (&bracket_r(&v, &env)? - &bracket_r(&vh, &hi)?).abs(&hi.cx);
    report.push(ResidualReport::from_real("precision-escalation", &d, -(digits - 2), t0));
    Ok(())
}

fn ybe(cfg: &CheckConfig, report: &mut RunReport) -> Result<()> {
    let env = cfg.env()?;
    let cx = &env.cx;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let digits = cfg.digits as i64;
    // two-route R agreement
    let t0 = Instant::now();
    let mut worst = cx.zero();
    for _ in 0..3 {
        let v = env.crat(draw_v(&mut rng));
        let a = rbar_charsum(&v, &env)?;
        let b = rbar_element_tensor(&v, &env)?;
        let rel = &a.max_diff(&b, &env) / &a.max_abs(&env);
        worst = worst.max_with(&rel);
    }
    report.push(ResidualReport::from_real("rbar-two-route-agreement", &worst, -(digits - 6), t0));
    // symmetry pattern + shift invariance + initial condition
    let t0 = Instant::now();
    let v = env.crat(draw_v(&mut rng));
    let tensor = rbar_charsum(&v, &env)?;
    let mut worst = if tensor.zn_zero_pattern_ok() { cx.zero() } else { cx.one() };
    worst = worst.max_with(&(&tensor.shift_invariance_residual(&env) / &tensor.max_abs(&env)));
    let p0 = rbar_charsum(&Cplx::zero(cx), &env)?;
    let n = cfg.params.n;
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                for lidx in 0..n {
                    let expect = if i == lidx && k == j { 1 } else { 0 };
                    let d = (p0.get(i, k, j, lidx)
                        - &env.crat(Rational64::from_integer(expect)))
                        .abs(cx);
                    worst = worst.max_with(&d);
                }
            }
        }
    }
    report.push(ResidualReport::from_real("r-symmetries-and-initial-condition", &worst, -(digits - 4), t0));
    // vertex YBE draws
    let t0 = Instant::now();
    let mut worst = cx.zero();
    for _ in 0..cfg.draws {
        let v1 = env.crat(draw_v(&mut rng));
        let v2 = env.crat(draw_v(&mut rng));
        worst = worst.max_with(&ybe_vertex_residual(&v1, &v2, &env)?);
    }
    report.push(
        ResidualReport::from_real("ybe-vertex", &worst, -(digits - 8), t0)
            .with_meta("draws", cfg.draws.into()),
    );
    // face YBE draws over random admissible hexagons
    let t0 = Instant::now();
    let mut worst = cx.zero();
    let mut done = 0usize;
    while done < cfg.draws {
        let a = draw_state(&mut rng, n, cfg.params.r, 3);
        let mut steps: Vec<usize> = (0..3).map(|_| rng.gen_range(0..n)).collect();
        let b = a.add_eps_bar(steps[0]);
        let c = b.add_eps_bar(steps[1]);
        let d = c.add_eps_bar(steps[2]);
        // second ordering of the same multiset
        use rand::seq::SliceRandom;
        steps.shuffle(&mut rng);
        let f = a.add_eps_bar(steps[0]);
        let e2 = f.add_eps_bar(steps[1]);
        if !crate::lattice::admissible(&e2, &d) {
            continue;
        }
        let v1 = env.crat(draw_v(&mut rng));
        let v2 = env.crat(draw_v(&mut rng));
        match ybe_face_residual(&a, &b, &c, &d, &e2, &f, &v1, &v2, &env) {
            Ok(res) => {
                worst = worst.max_with(&res);
                done += 1;
            }
            Err(Error::PoleError(_)) | Err(Error::NotAdmissible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    report.push(
        ResidualReport::from_real("ybe-face", &worst, -(digits - 8), t0)
            .with_meta("draws", cfg.draws.into()),
    );
    // face weights at v = 0 collapse to the path delta
    let t0 = Instant::now();
    let r10 = crate::qelliptic::r_l_func(&Cplx::zero(cx), 1, &env)?;
    let a = draw_state(&mut rng, n, cfg.params.r, 2);
    let mut worst = cx.zero();
    for mu in 0..n {
        for nu in 0..n {
            let d = a.add_eps_bar(mu);
            let b = a.add_eps_bar(nu);
            let c = d.add_eps_bar(nu);
            if !crate::lattice::admissible(&b, &c) {
                continue;
            }
            let w = face_w(&c, &d, &b, &a, &Cplx::zero(cx), &r10, &env)?;
            let expect = if b == d { 1 } else { 0 };
            let dd = (&w - &env.crat(Rational64::from_integer(expect))).abs(cx);
            worst = worst.max_with(&dd);
        }
    }
    report.push(ResidualReport::from_real("face-initial-condition", &worst, -(digits - 4), t0));
    Ok(())
}

fn vertex_face(cfg: &CheckConfig, report: &mut RunReport) -> Result<()> {
    let env = cfg.env()?;
    let cx = &env.cx;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let digits = cfg.digits as i64;
    let n = cfg.params.n;
    // dual orthogonality
    let t0 = Instant::now();
    let mut worst = cx.zero();
    for _ in 0..cfg.draws {
        let a = draw_state(&mut rng, n, cfg.params.r, 1);
        let v = env.crat(draw_v(&mut rng));
        let dual = match dual_intertwiners(&v, &a, &env) {
            Ok(d) => d,
            Err(Error::SingularMatrix(_)) => continue,
            Err(e) => return Err(e),
        };
        let ts: Vec<Vec<Cplx>> = (0..n)
            .map(|mu| intertwiner(&v, &a, mu, &env))
            .collect::<Result<_>>()?;
        for nu in 0..n {
            for nup in 0..n {
                let mut acc = Cplx::zero(cx);
                for mu in 0..n {
                    acc = &acc + &(&dual[nu][mu] * &ts[nup][mu]);
                }
                let expect = if nu == nup { 1 } else { 0 };
                let d = (&acc - &env.crat(Rational64::from_integer(expect))).abs(cx);
                worst = worst.max_with(&d);
            }
        }
    }
    report.push(ResidualReport::from_real("dual-orthogonality", &worst, -(digits - 6), t0));
    // vertex-face correspondence and its dual
    let t0 = Instant::now();
    let mut worst = cx.zero();
    let mut worst_dual = cx.zero();
    let mut done = 0;
    while done < cfg.draws {
        let a = draw_state(&mut rng, n, cfg.params.r, 3);
        let v1 = env.crat(draw_v(&mut rng));
        let v2 = env.crat(draw_v(&mut rng));
        let d = a.add_eps_bar(rng.gen_range(0..n));
        let c = d.add_eps_bar(rng.gen_range(0..n));
        let res = match check_vf(&v1, &v2, &a, &d, &c, &env) {
            Ok(r) => r,
            Err(Error::PoleError(_)) | Err(Error::SingularMatrix(_)) => continue,
            Err(e) => return Err(e),
        };
        worst = worst.max_with(&res);
        let b = a.add_eps_bar(rng.gen_range(0..n));
        let c2 = b.add_eps_bar(rng.gen_range(0..n));
        match check_vf_dual(&v1, &v2, &a, &b, &c2, &env) {
            Ok(r) => worst_dual = worst_dual.max_with(&r),
            Err(Error::PoleError(_)) | Err(Error::SingularMatrix(_)) => continue,
            Err(e) => return Err(e),
        }
        done += 1;
    }
    report.push(
        ResidualReport::from_real("vertex-face-correspondence", &worst, -(digits - 8), t0)
            .with_meta("draws", cfg.draws.into()),
    );
    report.push(ResidualReport::from_real("vertex-face-dual", &worst_dual, -(digits - 8), t0));
    // omega-weighted completeness
    let t0 = Instant::now();
    let mut worst = cx.zero();
    let mut done = 0;
    while done < cfg.draws {
        let a = draw_state(&mut rng, n, cfg.params.r, 1);
        let v = env.crat(draw_v(&mut rng));
        let mu = rng.gen_range(0..n);
        let nu = rng.gen_range(0..n);
        match omega_weighted_sum(&a, mu, nu, &v, &env) {
            Ok((_, _, resid)) => {
                worst = worst.max_with(&resid);
                done += 1;
            }
            Err(Error::PoleError(_)) | Err(Error::SingularMatrix(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    report.push(ResidualReport::from_real("omega-weighted-completeness", &worst, -(digits - 6), t0));
    Ok(())
}

fn tail(cfg: &CheckConfig, report: &mut RunReport) -> Result<()> {
    let env = cfg.env()?;
    let cx = &env.cx;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let digits = cfg.digits as i64;
    let n = cfg.params.n;
    // closed form vs defining sum
    let t0 = Instant::now();
    let mut worst = cx.zero();
    let mut done = 0;
    while done < cfg.draws {
        let a = draw_state(&mut rng, n, cfg.params.r, 2);
        let shift = rng.gen_range(0..n);
        let a_up = a.add_eps_bar(shift);
        let u = env.crat(draw_v(&mut rng));
        let nu = rng.gen_range(0..n);
        let mu = rng.gen_range(0..n);
        let closed = match l_weight_closed(&a_up, nu, &a, mu, &u, &env) {
            Ok(c) => c,
            Err(Error::PoleError(_)) => continue,
            Err(e) => return Err(e),
        };
        let summed = match l_weight_sum(
            &a_up,
            &a_up.sub_eps_bar(nu),
            &a,
            &a.sub_eps_bar(mu),
            &u,
            &env,
        ) {
            Ok(s) => s,
            Err(Error::SingularMatrix(_)) => continue,
            Err(e) => return Err(e),
        };
        let scale = closed.abs(cx).max_with(&summed.abs(cx));
        if scale.lt(&cx.pow10(-digits / 2)) {
            continue;
        }
        worst = worst.max_with(&(&(&closed - &summed).abs(cx) / &scale));
        done += 1;
    }
    report.push(ResidualReport::from_real("tail-weight-closed-vs-sum", &worst, -(digits - 6), t0));
    // delta property
    let t0 = Instant::now();
    let mut worst = cx.zero();
    let a = draw_state(&mut rng, n, cfg.params.r, 1);
    let u = env.crat(draw_v(&mut rng));
    for nu in 0..n {
        for mu in 0..n {
            let got = l_weight_sum(&a, &a.sub_eps_bar(nu), &a, &a.sub_eps_bar(mu), &u, &env)?;
            let expect = if nu == mu { 1 } else { 0 };
            worst = worst
                .max_with(&(&got - &env.crat(Rational64::from_integer(expect))).abs(cx));
        }
    }
    report.push(ResidualReport::from_real("tail-weight-delta", &worst, -(digits - 6), t0));
    // identical paths give 1; padding is inert
    let t0 = Instant::now();
    let a = draw_state(&mut rng, n, cfg.params.r, 2);
    let mut path = vec![a.clone()];
    for j in 0..6 {
        path.push(path[j].sub_eps_bar(rng.gen_range(0..n)));
    }
    let lam = tail_product(&path, &path, &u, &env)?;
    let worst = (&lam - &Cplx::one(cx)).abs(cx);
    report.push(ResidualReport::from_real("tail-product-identity", &worst, -(digits - 4), t0));
    Ok(())
}

fn characters(cfg: &CheckConfig, report: &mut RunReport) -> Result<()> {
    let env = cfg.env()?;
    let cx = &env.cx;
    let digits = cfg.digits as i64;
    let n = cfg.params.n;
    // product vs brute force coefficients
    let t0 = Instant::now();
    let order = 40;
    let prod = ctm::chi_vertex_product(n, order);
    let brute = ctm::chi_vertex_bruteforce(n, order);
    let ok = prod == brute;
    let mut rep = ResidualReport::from_real(
        "vertex-character-coefficients",
        &if ok { cx.zero() } else { cx.one() },
        -1,
        t0,
    );
    rep = rep.with_meta("order", order.into());
    report.push(rep);
    // beta identities
    let t0 = Instant::now();
    let (b1, b2) = ctm::beta_roots(&env);
    let mut worst = (&(&b1 * &b2) + &cx.one()).abs();
    let b0 = (&(&env.r_real * &(&env.r_real - &cx.one()))).sqrt(cx).recip(cx);
    worst = worst.max_with(&(&(&b1 + &b2) - &b0).abs());
    report.push(ResidualReport::from_real("beta-root-identities", &worst, -(digits - 2), t0));
    // face path sums vs colored partitions
    let t0 = Instant::now();
    let order = if n == 2 { 5 } else { 2 };
    let xi = WeightState::new((0..n).map(|iq| 2 * (n - 1 - iq) as i64).collect());
    let a0 = ctm::FacePath::ground_state(&xi, cfg.sector, 0);
    let sum = ctm::chi_face_bruteforce(&xi, &a0, cfg.sector, order, &env)?;
    let coeff = sum.coefficients(n)?;
    let oracle = ctm::colored_partitions(n - 1, order);
    let take = coeff.len().min(oracle.len());
    let ok = take >= order.min(3) && coeff[..take] == oracle[..take];
    report.push(
        ResidualReport::from_real(
            "face-path-character",
            &if ok { cx.zero() } else { cx.one() },
            -1,
            t0,
        )
        .with_meta("paths_visited", sum.paths_visited.into()),
    );
    // sum formula
    let t0 = Instant::now();
    let xi = WeightState::new((0..n).map(|iq| (n - 1 - iq) as i64).collect());
    match ctm::sum_formula(&xi, cfg.sector, cfg.radius, &env) {
        Ok((_, _, resid, tail)) => {
            report.push(
                ResidualReport::from_real("character-sum-formula", &resid, -15, t0)
                    .with_meta("tail", tail.to_decimal().into())
                    .with_meta("radius", cfg.radius.into()),
            );
        }
        Err(e) => report.push(ResidualReport::failure("character-sum-formula", &e.to_string(), t0)),
    }
    Ok(())
}

fn correlation_checks(cfg: &CheckConfig, report: &mut RunReport) -> Result<()> {
    let env = cfg.env()?;
    let cx = &env.cx;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let digits = cfg.digits as i64;
    let n = cfg.params.n;
    // elliptic cancellation identity
    let t0 = Instant::now();
    let mut worst = cx.zero();
    let mut done = 0;
    while done < cfg.draws {
        let vs: Vec<Cplx> = (0..n).map(|_| env.crat(draw_v(&mut rng))).collect();
        let pis: Vec<Cplx> = (0..n)
            .map(|_| env.crat(Rational64::new(rng.gen_range(-900..900), 1000)))
            .collect();
        match elliptic_sum_zero(&vs, &pis, &env) {
            Ok(res) => {
                worst = worst.max_with(&res);
                done += 1;
            }
            Err(Error::PoleError(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    report.push(ResidualReport::from_real("elliptic-sum-zero", &worst, -(digits - 6), t0));
    // boundary sum cancellation at u = v
    let t0 = Instant::now();
    let l = generic_boundary(n);
    let v = env.creal("0.35");
    let at_v = s_sum_inner(cfg.sector, &l, &v, &v, cfg.radius, &env)?;
    let probe = s_sum_inner(cfg.sector, &l, &v, &env.creal("0.5"), cfg.radius, &env)?;
    let rel = &at_v.abs(cx) / &probe.abs(cx);
    report.push(ResidualReport::from_real("boundary-sum-cancellation", &rel, -(digits / 2), t0));
    // S limit vs closed form
    let t0 = Instant::now();
    match (
        s_limit(cfg.sector, &l, &v, cfg.radius, &env),
        s_limit_closed(cfg.sector, &l, &env),
    ) {
        (Ok(lim), Ok(closed)) => {
            let rel = &(&lim - &closed).abs(cx) / &closed.abs(cx);
            report.push(ResidualReport::from_real(
                "s-limit-vs-closed",
                &rel,
                if n == 2 { -10 } else { -8 },
                t0,
            ));
        }
        (Err(e), _) | (_, Err(e)) => {
            report.push(ResidualReport::failure("s-limit-vs-closed", &e.to_string(), t0))
        }
    }
    // polarization: formula limit and (optionally) the full pipeline
    let t0 = Instant::now();
    let small = Env::new(
        ModelParams::new(n, cfg.params.r, Rational64::new(1, 10000))?,
        Precision::new(30),
    )?;
    let f = polarization_formula(cfg.sector, &small)?;
    let expect = small.omega_pow(cfg.sector as i64 + 1, &small.cx);
    let d = (&f - &expect).abs(&small.cx);
    report.push(ResidualReport::from_real("polarization-x0-limit", &d, -6, t0));
    if cfg.run_pipeline {
        let t0 = Instant::now();
        match polarization_pipeline(cfg.sector, &l, &v, &cfg.pipeline, &env) {
            Ok(run) => {
                let formula = polarization_formula(cfg.sector, &env)?;
                let d = (&run.value - &formula).abs(cx);
                report.push(
                    ResidualReport::from_real(
                        "polarization-pipeline-vs-formula",
                        &d,
                        if n == 2 { -6 } else { -4 },
                        t0,
                    )
                    .with_meta("pipeline", run.value.to_f64s().0.into())
                    .with_meta("error_estimate", run.error_estimate.to_decimal().into()),
                );
            }
            Err(e) => report.push(ResidualReport::failure(
                "polarization-pipeline-vs-formula",
                &e.to_string(),
                t0,
            )),
        }
    }
    Ok(())
}

//! Batch verification driver.
//!
//! Exit codes: 0 all checks pass, 1 some check failed, 2 configuration
//! error, 3 internal numeric error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_rational::Rational64;

use belavin::checks::{run_group, CheckConfig, CheckGroup};
use belavin::correlation::{
    generic_boundary, polarization_formula, polarization_pipeline, PipelineSettings,
};
use belavin::params::{Env, ModelParams};
use belavin::mp::Precision;
use belavin::Error;

mod config;

#[derive(Parser)]
#[command(name = "belavin", version, about = "Residual verification for the n-state symmetric vertex model and its face-model correlation pipeline")]
struct Cli {
    /// Flat key=value config file with dotted keys; flags override it.
    /// Defaults to $BELAVIN_CONFIG when set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap worker threads used by parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a residual check group and write a JSON report.
    Check {
        /// One of: special-functions, ybe, vertex-face, tail, characters,
        /// correlation, all.
        group: String,
        #[command(flatten)]
        common: CommonArgs,
        /// Random draws per residual family.
        #[arg(long)]
        draws: Option<usize>,
        /// Lattice truncation radius.
        #[arg(long)]
        radius: Option<i64>,
        /// Skip the full contour pipeline inside the correlation group.
        #[arg(long)]
        skip_pipeline: bool,
    },
    /// Evaluate the spontaneous polarization (closed formula and/or pipeline).
    Polarization {
        #[command(flatten)]
        common: CommonArgs,
        /// Boundary sector index i.
        #[arg(long, default_value_t = 0)]
        i: usize,
        /// formula | pipeline | both
        #[arg(long, default_value = "formula")]
        mode: String,
        /// Spectral parameter v for the pipeline.
        #[arg(long, default_value = "7/20")]
        v: String,
        /// Quadrature nodes per circle.
        #[arg(long)]
        m: Option<usize>,
        /// Lattice truncation radius for the pipeline.
        #[arg(long)]
        radius: Option<i64>,
        /// Sweep x over a:b:count and print a CSV table (formula mode).
        #[arg(long)]
        sweep_x: Option<String>,
    },
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Elliptic level r (> 1), as a decimal or fraction.
    #[arg(long)]
    r: Option<String>,
    /// Nome base x in (0, 0.9].
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    digits: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        // parallel sections currently run sequentially; accept and cap anyway
        std::env::set_var("RAYON_NUM_THREADS", t.to_string());
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(Error::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("numeric error: {e}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    let file_cfg = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Check { group, common, draws, radius, skip_pipeline } => {
            let group = CheckGroup::parse(&group)?;
            let params = resolve_params(&common, &file_cfg)?;
            let mut cfg = CheckConfig::new(params);
            if let Some(d) = common.digits.or(file_cfg.get_u32("digits")?) {
                cfg.digits = d;
            }
            if let Some(s) = common.seed.or(file_cfg.get_u64("seed")?) {
                cfg.seed = s;
            }
            if let Some(d) = draws.or(file_cfg.get_usize("draws")?) {
                cfg.draws = d;
            }
            if let Some(r) = radius.or(file_cfg.get_i64("radius")?) {
                cfg.radius = r;
            }
            if let Some(m) = file_cfg.get_usize("correlation.m")? {
                cfg.pipeline.m_points = m;
            }
            if let Some(r) = file_cfg.get_i64("correlation.radius")? {
                cfg.pipeline.radius = r;
            }
            if skip_pipeline {
                cfg.run_pipeline = false;
            }
            let report = run_group(group, &cfg)?;
            let json = report.to_json();
            write_out(&common.out, &json)?;
            for c in &report.checks {
                eprintln!(
                    "{} {}  residual {} (tol {})",
                    if c.pass { "pass" } else { "FAIL" },
                    c.id,
                    short(&c.residual),
                    c.tolerance
                );
            }
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Polarization { common, i, mode, v, m, radius, sweep_x } => {
            let params = resolve_params(&common, &file_cfg)?;
            let digits = common.digits.or(file_cfg.get_u32("digits")?).unwrap_or(50);
            if let Some(spec) = sweep_x {
                let csv = sweep(&spec, params, i, digits)?;
                write_out(&common.out, &csv)?;
                return Ok(ExitCode::SUCCESS);
            }
            let env = Env::new(params, Precision::new(digits))?;
            let mut out = serde_json::Map::new();
            out.insert("schema".into(), 1.into());
            out.insert("n".into(), params.n.into());
            out.insert("i".into(), i.into());
            out.insert("r".into(), params.r.to_string().into());
            out.insert("x".into(), params.x.to_string().into());
            out.insert("digits".into(), digits.into());
            let formula = polarization_formula(i, &env)?;
            out.insert("formula_re".into(), formula.re.to_decimal().into());
            out.insert("formula_im".into(), formula.im.to_decimal().into());
            let mut pass = true;
            if mode == "pipeline" || mode == "both" {
                if params.n > 3 {
                    return Err(Error::Config(
                        "pipeline mode supports n in {2, 3}; use --mode formula".into(),
                    ));
                }
                let mut settings = PipelineSettings::defaults_for(params.n);
                if let Some(m) = m.or(file_cfg.get_usize("correlation.m")?) {
                    settings.m_points = m;
                }
                if let Some(r) = radius.or(file_cfg.get_i64("correlation.radius")?) {
                    settings.radius = r;
                }
                let l = generic_boundary(params.n);
                let vv = env.creal(&parse_decimal(&v)?);
                let run = polarization_pipeline(i, &l, &vv, &settings, &env)?;
                out.insert("pipeline_re".into(), run.value.re.to_decimal().into());
                out.insert("pipeline_im".into(), run.value.im.to_decimal().into());
                out.insert("delta_error_estimate".into(), run.error_estimate.to_decimal().into());
                let discrepancy = (&run.value - &formula).abs(&env.cx);
                out.insert("discrepancy".into(), discrepancy.to_decimal().into());
                if mode == "both" {
                    pass = discrepancy.to_f64() < if params.n == 2 { 1e-6 } else { 1e-4 };
                    out.insert("pass".into(), pass.into());
                }
            }
            write_out(&common.out, &serde_json::to_string_pretty(&out).unwrap())?;
            Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn short(s: &str) -> String {
    if s.len() > 12 {
        let (head, tail) = s.split_at(8);
        match tail.find('e') {
            Some(p) => format!("{head}{}", &tail[p..]),
            None => head.to_string(),
        }
    } else {
        s.to_string()
    }
}

fn sweep(spec: &str, params: ModelParams, sector: usize, digits: u32) -> Result<String, Error> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("sweep-x wants a:b:count, got '{spec}'")));
    }
    let a = parse_rational(parts[0])?;
    let b = parse_rational(parts[1])?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| Error::Config(format!("sweep count '{}' is not an integer", parts[2])))?;
    if count < 2 {
        return Err(Error::Config("sweep count must be at least 2".into()));
    }
    let mut csv = String::from("x,formula_re,formula_im\n");
    for k in 0..count {
        let x = a + (b - a) * Rational64::new(k as i64, count as i64 - 1);
        let params = ModelParams::new(params.n, params.r, x)?;
        check_x_range(&params)?;
        let env = Env::new(params, Precision::new(digits))?;
        let f = polarization_formula(sector, &env)?;
        csv.push_str(&format!("{x},{},{}\n", f.re.to_decimal(), f.im.to_decimal()));
    }
    Ok(csv)
}

fn resolve_params(
    common: &CommonArgs,
    file_cfg: &config::FlatConfig,
) -> Result<ModelParams, Error> {
    let n = common
        .n
        .or(file_cfg.get_usize("n")?)
        .ok_or_else(|| Error::Config("missing required parameter 'n'".into()))?;
    let r = match (&common.r, file_cfg.get_str("r")) {
        (Some(s), _) => parse_rational(s)?,
        (None, Some(s)) => parse_rational(&s)?,
        _ => return Err(Error::Config("missing required parameter 'r'".into())),
    };
    let x = match (&common.x, file_cfg.get_str("x")) {
        (Some(s), _) => parse_rational(s)?,
        (None, Some(s)) => parse_rational(&s)?,
        _ => return Err(Error::Config("missing required parameter 'x'".into())),
    };
    let params = ModelParams::new(n, r, x)?;
    check_x_range(&params)?;
    Ok(params)
}

/// Certified truncation bounds degrade toward x = 1; refuse x > 0.9.
fn check_x_range(params: &ModelParams) -> Result<(), Error> {
    if params.x > Rational64::new(9, 10) {
        return Err(Error::Config(format!(
            "x = {} is outside the certified range (0, 0.9]",
            params.x
        )));
    }
    Ok(())
}

/// Parses "0.3", "3/10" or "4" into an exact rational.
fn parse_rational(s: &str) -> Result<Rational64, Error> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: i64 = num.trim().parse().map_err(|_| bad_number(s))?;
        let d: i64 = den.trim().parse().map_err(|_| bad_number(s))?;
        if d == 0 {
            return Err(bad_number(s));
        }
        return Ok(Rational64::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let i: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().map_err(|_| bad_number(s))? };
        let scale = 10i64.checked_pow(frac.len() as u32).ok_or_else(|| bad_number(s))?;
        let f: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad_number(s))? };
        let signed_f = if neg { -f } else { f };
        return Ok(Rational64::new(i * scale + signed_f, scale));
    }
    let i: i64 = s.parse().map_err(|_| bad_number(s))?;
    Ok(Rational64::from_integer(i))
}

fn parse_decimal(s: &str) -> Result<String, Error> {
    let q = parse_rational(s)?;
    Ok(format!("{}", *q.numer() as f64 / *q.denom() as f64))
}

fn bad_number(s: &str) -> Error {
    Error::Config(format!("'{s}' is not a number (decimal or fraction)"))
}

fn write_out(path: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

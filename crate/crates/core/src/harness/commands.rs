use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::lyapunov::{gamma_from_transmission, lyapunov_mc, transmission, transmission_trajectory};
use crate::disorder::PeriodSampler;
use crate::rng::{self, derive_seed};
use crate::scaling::{figure4_experiment, loglog_fit, Check, FitPoint, FitResult};
use crate::spectrum::{discriminant, scan_bands, BandStructure, EdgeKind, TwoLayerTrace};
use crate::waveguide::{period_transfer, LayerStack};
use crate::whitenoise::{gamma_quadrature, simulate_gamma_sde, stationary_density, SdeParams};

use super::config::{ExperimentConfig, GammaMethod};
use super::output::{now, num, version_string, Outputs, RunManifest};
use super::{Command, Figure, HarnessError, ModelArgs, RunArgs};

struct Ctx {
    cfg: ExperimentConfig,
    seed: u64,
    seed_generated: bool,
    command: Vec<String>,
    started: String,
}

impl Ctx {
    fn finish(self, outputs: Outputs, stem: &str) -> Result<(), HarnessError> {
        let manifest = RunManifest {
            version: version_string(),
            command: self.command,
            seed: self.seed,
            seed_generated: self.seed_generated,
            started: self.started,
            finished: String::new(),
            config: self.cfg,
            outputs: Vec::new(),
        };
        let path = outputs.commit(stem, manifest)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

pub(super) fn dispatch(
    command: Command,
    mut cfg: ExperimentConfig,
    seed: u64,
    seed_generated: bool,
    argv: Vec<String>,
) -> Result<(), HarnessError> {
    match &command {
        Command::Scan(a) | Command::Bands(a) => {
            apply_model(&mut cfg, &a.model);
            if let Some(v) = a.nu_min {
                cfg.scan.nu_min = v;
            }
            if let Some(v) = a.nu_max {
                cfg.scan.nu_max = v;
            }
        }
        Command::Lyapunov(a) => apply_run(&mut cfg, a),
        Command::Transmission(a) => apply_run(&mut cfg, &a.run),
        Command::Whitenoise(a) => {
            if let Some(v) = &a.lambda {
                cfg.whitenoise.lambda = v.clone();
            }
            if let Some(v) = a.realizations {
                cfg.whitenoise.realizations = v;
            }
            if let Some(v) = a.length {
                cfg.whitenoise.length = v;
            }
            if let Some(v) = a.delta {
                cfg.whitenoise.delta = v;
            }
        }
        Command::Fit(a) => {
            if a.input.is_some() {
                cfg.fit.input = a.input.clone();
            }
            cfg.fit.weighted |= a.weighted;
        }
        Command::Reproduce(a) => {
            if a.realizations.is_some() {
                cfg.figure4.realizations = a.realizations;
            }
        }
    }
    let ctx = Ctx { cfg, seed, seed_generated, command: argv, started: now() };
    let mut out = Outputs::new(&ctx.cfg.out_dir())?;
    let stem = match command {
        Command::Scan(_) => scan(&ctx, &mut out, true)?,
        Command::Bands(_) => scan(&ctx, &mut out, false)?,
        Command::Lyapunov(_) => lyapunov(&ctx, &mut out)?,
        Command::Transmission(a) => transmission_cmd(&ctx, &mut out, a.trajectory)?,
        Command::Whitenoise(_) => whitenoise(&ctx, &mut out)?,
        Command::Fit(_) => fit(&ctx, &mut out)?,
        Command::Reproduce(a) => match a.figure {
            Figure::Fig1 => fig1(&ctx, &mut out)?,
            Figure::Fig3 => fig3(&ctx, &mut out)?,
            Figure::Fig4 => fig4(&ctx, &mut out)?,
        },
    };
    ctx.finish(out, stem)
}

fn apply_model(cfg: &mut ExperimentConfig, m: &ModelArgs) {
    if let Some(l) = &m.layers {
        cfg.model.layers = l.clone();
    }
}

fn apply_run(cfg: &mut ExperimentConfig, a: &RunArgs) {
    apply_model(cfg, &a.model);
    if let Some(v) = &a.nu {
        cfg.run.nu = v.clone();
    }
    if let Some(v) = &a.sigma {
        cfg.disorder.sigma = v.clone();
    }
    if let Some(v) = a.n_periods {
        cfg.run.n_periods = v;
        if v < cfg.run.window.hi {
            cfg.run.window = crate::lyapunov::Window { lo: (v / 2).max(1), hi: v };
        }
    }
    if let Some(v) = a.realizations {
        cfg.run.realizations = v;
    }
    if let Some(v) = a.method {
        cfg.run.method = v;
    }
}

fn config_err(e: crate::Error) -> HarnessError {
    match e {
        crate::Error::Domain(m) => HarnessError::Config(m),
        other => HarnessError::Core(other),
    }
}

fn trace_table(stack: &LayerStack, nus: &[f64]) -> Result<Vec<f64>, HarnessError> {
    nus.par_iter().map(|&nu| discriminant(stack, nu).map_err(HarnessError::from)).collect()
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn gaps_csv(bs: &BandStructure) -> String {
    let mut s = String::from("lo,hi,width\n");
    for g in &bs.gaps {
        let _ = writeln!(s, "{},{},{}", num(g.lo), num(g.hi), num(g.width()));
    }
    s
}

fn scan(ctx: &Ctx, out: &mut Outputs, with_trace: bool) -> Result<&'static str, HarnessError> {
    let stack = ctx.cfg.model.stack()?;
    let (lo, hi) = (ctx.cfg.scan.nu_min, ctx.cfg.scan.nu_max);
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(HarnessError::Config(format!("empty or invalid frequency range [{lo}, {hi}]")));
    }
    let res = ctx.cfg.resolution();
    let bs = scan_bands(&stack, lo, hi, res).map_err(config_err)?;
    if with_trace {
        let nus = grid(lo, hi, res + 1);
        let tr = trace_table(&stack, &nus)?;
        let mut s = String::from("nu,trace\n");
        for (nu, t) in nus.iter().zip(&tr) {
            let _ = writeln!(s, "{},{}", num(*nu), num(*t));
        }
        out.add("discriminant.csv", s.as_bytes())?;
    }
    out.add("bands.csv", bs.to_csv().as_bytes())?;
    out.add("gaps.csv", gaps_csv(&bs).as_bytes())?;
    println!("bands: {}, gaps: {}", bs.bands.len(), bs.gaps.len());
    Ok(if with_trace { "scan" } else { "bands" })
}

fn cells(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    cfg.run.nu.iter().flat_map(|&nu| cfg.disorder.sigma.iter().map(move |&s| (nu, s))).collect()
}

fn lyapunov(ctx: &Ctx, out: &mut Outputs) -> Result<&'static str, HarnessError> {
    let stack = ctx.cfg.model.stack()?;
    let run = &ctx.cfg.run;
    let mut s = String::from("method,nu,sigma,n_periods,realizations,gamma,std_err,seed\n");
    for (k, (nu, sigma)) in cells(&ctx.cfg).into_iter().enumerate() {
        let spec = ctx.cfg.disorder.spec(&stack, sigma)?;
        let seed = derive_seed(ctx.seed, k as u64);
        let g = match run.method {
            GammaMethod::Mc => lyapunov_mc(&spec, nu, run.n_periods, run.realizations, seed),
            GammaMethod::Transmission => {
                gamma_from_transmission(&spec, nu, run.n_periods, run.window, run.realizations, seed)
            }
        }
        .map_err(config_err)?;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            g.method.as_str(),
            num(nu),
            num(sigma),
            g.n_periods,
            g.realizations,
            num(g.gamma),
            num(g.std_err),
            seed
        );
        println!("nu={nu} sigma={sigma}: gamma={:.6e} ± {:.2e}", g.gamma, g.std_err);
    }
    out.add("gamma.csv", s.as_bytes())?;
    Ok("lyapunov")
}

fn transmission_cmd(ctx: &Ctx, out: &mut Outputs, trajectory: bool) -> Result<&'static str, HarnessError> {
    let stack = ctx.cfg.model.stack()?;
    let n = ctx.cfg.run.n_periods;
    let mut s = String::from("nu,sigma,n_periods,t2,log_t2,decay,seed\n");
    let mut traj = String::from("nu,sigma,k,neg_log_t\n");
    for (k, (nu, sigma)) in cells(&ctx.cfg).into_iter().enumerate() {
        let spec = ctx.cfg.disorder.spec(&stack, sigma)?;
        let seed = derive_seed(ctx.seed, k as u64);
        let t = transmission(&spec, nu, n, seed).map_err(config_err)?;
        let _ = writeln!(s, "{},{},{},{},{},{},{}", num(nu), num(sigma), n, num(t.t2), num(t.log_t2), num(t.decay), seed);
        if trajectory {
            let sampler = PeriodSampler::new(&spec, nu).map_err(config_err)?;
            let path = transmission_trajectory(&sampler, nu, n, &mut rng::stream(seed, 0)).map_err(config_err)?;
            for (i, v) in path.iter().enumerate() {
                let _ = writeln!(traj, "{},{},{},{}", num(nu), num(sigma), i + 1, num(*v));
            }
        }
        println!("nu={nu} sigma={sigma}: |t|^2={:.6e} decay={:.6e}", t.t2, t.decay);
    }
    out.add("transmission.csv", s.as_bytes())?;
    if trajectory {
        out.add("transmission_trajectory.csv", traj.as_bytes())?;
    }
    Ok("transmission")
}

fn whitenoise(ctx: &Ctx, out: &mut Outputs) -> Result<&'static str, HarnessError> {
    let wn = &ctx.cfg.whitenoise;
    let mut pairs = Vec::new();
    for &l in &wn.lambda {
        let p = SdeParams::for_lambda(l, wn.delta, wn.length).map_err(config_err)?;
        pairs.push((p.omega, p.sigma));
    }
    pairs.extend(wn.pairs.iter().copied());
    let mut s = String::from("omega,sigma,lambda,gamma,err,method\n");
    for (k, &(omega, sigma)) in pairs.iter().enumerate() {
        let lambda = 2.0 * omega.powi(3) / (sigma * sigma);
        let q = gamma_quadrature(omega, sigma).map_err(config_err)?;
        let _ = writeln!(s, "{},{},{},{},{},quadrature", num(omega), num(sigma), num(lambda), num(q.gamma), num(q.std_err));
        println!("lambda={lambda:.4e}: quadrature gamma={:.6e}", q.gamma);
        if wn.realizations > 0 {
            let p = SdeParams::new(omega, sigma, wn.delta, wn.length).map_err(config_err)?;
            let g = simulate_gamma_sde(&p, wn.realizations, derive_seed(ctx.seed, k as u64)).map_err(config_err)?;
            let _ = writeln!(s, "{},{},{},{},{},sde", num(omega), num(sigma), num(lambda), num(g.gamma), num(g.std_err));
            println!("lambda={lambda:.4e}: sde gamma={:.6e} ± {:.2e}", g.gamma, g.std_err);
        }
    }
    out.add("whitenoise.csv", s.as_bytes())?;
    let mut d = String::from("lambda,z,p\n");
    for &l in &wn.density_lambda {
        let density = stationary_density(l).map_err(config_err)?;
        for (z, p) in density.table(wn.z_range.0, wn.z_range.1, wn.z_points) {
            let _ = writeln!(d, "{},{},{}", num(l), num(z), num(p));
        }
    }
    out.add("density.csv", d.as_bytes())?;
    Ok("whitenoise")
}

#[derive(Serialize)]
struct FitSummary<'a> {
    fits: BTreeMap<String, FitResult>,
    checks: &'a [Check],
}

fn fit(ctx: &Ctx, out: &mut Outputs) -> Result<&'static str, HarnessError> {
    let path = ctx.cfg.fit.input.as_ref().ok_or_else(|| HarnessError::Config("fit needs an input CSV (--input)".into()))?;
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| HarnessError::Config(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (si, gi) = match (col("sigma"), col("gamma")) {
        (Some(s), Some(g)) => (s, g),
        _ => return Err(HarnessError::Config("fit input needs sigma and gamma columns".into())),
    };
    let ei = col("std_err").or_else(|| col("err"));
    let pi = col("point");
    let mut groups: BTreeMap<String, Vec<FitPoint>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| HarnessError::Config(e.to_string()))?;
        let parse = |i: usize| -> Result<f64, HarnessError> {
            rec.get(i).unwrap_or("").trim().parse().map_err(|e| HarnessError::Config(format!("bad number: {e}")))
        };
        let err = match (ei, ctx.cfg.fit.weighted) {
            (Some(i), true) => Some(parse(i)?),
            _ => None,
        };
        let key = pi.and_then(|i| rec.get(i)).unwrap_or("all").to_string();
        groups.entry(key).or_default().push(FitPoint { sigma: parse(si)?, gamma: parse(gi)?, err });
    }
    if groups.is_empty() {
        return Err(HarnessError::Config("fit input has no rows".into()));
    }
    let mut s = String::from("point,slope,intercept,slope_err,intercept_err,r_squared,residual_std,n_points\n");
    let mut fits = BTreeMap::new();
    for (k, pts) in &groups {
        let f = loglog_fit(pts).map_err(config_err)?;
        let _ = writeln!(
            s,
            "{k},{},{},{},{},{},{},{}",
            num(f.slope),
            num(f.intercept),
            num(f.slope_err),
            num(f.intercept_err),
            num(f.r_squared),
            num(f.residual_std),
            f.n_points
        );
        println!("{k}: lg gamma = {:.4} lg sigma + {:.4}", f.slope, f.intercept);
        fits.insert(k.clone(), f);
    }
    out.add("fit.csv", s.as_bytes())?;
    let json = serde_json::to_vec_pretty(&FitSummary { fits, checks: &[] }).expect("serializable");
    out.add("fit.json", &json)?;
    Ok("fit")
}

fn report(checks: &[Check], label: &str) {
    for c in checks {
        println!("{}", c.line());
    }
    let all = checks.iter().all(|c| c.pass);
    println!("{label}: {}", if all { "PASS" } else { "FAIL" });
}

#[derive(Serialize)]
struct FigureSummary<'a, T: Serialize> {
    checks: &'a [Check],
    details: T,
}

fn fig1(ctx: &Ctx, out: &mut Outputs) -> Result<&'static str, HarnessError> {
    let stack = LayerStack::from_pairs(&[(2f64.sqrt(), 2.0), (6.0, 0.2)]).map_err(HarnessError::from)?;
    let closed = TwoLayerTrace::from_stack(&stack)?;
    let res = ctx.cfg.resolution();
    let hi = 30.0;
    let nus: Vec<f64> = (1..=res).map(|i| hi * i as f64 / res as f64).collect();
    let tr = trace_table(&stack, &nus)?;
    let env = closed.envelope();
    let mut s = String::from("nu,trace,closed_form,envelope\n");
    let mut max_abs: f64 = 0.0;
    let mut max_diff: f64 = 0.0;
    for (nu, t) in nus.iter().zip(&tr) {
        let c = closed.eval(*nu);
        max_abs = max_abs.max(t.abs());
        max_diff = max_diff.max((c - t).abs());
        let _ = writeln!(s, "{},{},{},{}", num(*nu), num(*t), num(c), num(env));
    }
    let bs = scan_bands(&stack, nus[0], hi, res)?;
    let checks = vec![
        Check { name: "sup|tr M| <= A+B".into(), value: max_abs, target: env, tol: 1e-9 * env, pass: max_abs <= env * (1.0 + 1e-9) },
        Check { name: "gaps detected >= 5".into(), value: bs.gaps.len() as f64, target: 5.0, tol: 0.0, pass: bs.gaps.len() >= 5 },
        Check::new("closed form vs matrix trace", max_diff, 0.0, 1e-12),
    ];
    report(&checks, "fig1");
    out.add("fig1_discriminant.csv", s.as_bytes())?;
    out.add("fig1_bands.csv", bs.to_csv().as_bytes())?;
    out.add("fig1_gaps.csv", gaps_csv(&bs).as_bytes())?;
    let json = serde_json::to_vec_pretty(&FigureSummary { checks: &checks, details: env }).expect("serializable");
    out.add("fig1_summary.json", &json)?;
    Ok("fig1")
}

fn fig3(ctx: &Ctx, out: &mut Outputs) -> Result<&'static str, HarnessError> {
    let stack = LayerStack::from_pairs(&[(1.0, 1.0), (2.5, 0.1)]).map_err(HarnessError::from)?;
    let res = ctx.cfg.resolution();
    let hi = 12.0;
    let nus: Vec<f64> = (1..=res).map(|i| hi * i as f64 / res as f64).collect();
    let tr = trace_table(&stack, &nus)?;
    let mut s = String::from("nu,trace\n");
    for (nu, t) in nus.iter().zip(&tr) {
        let _ = writeln!(s, "{},{}", num(*nu), num(*t));
    }
    let bs = scan_bands(&stack, nus[0], hi, res)?;
    let edge = bs
        .edges()
        .into_iter()
        .filter(|(_, k)| *k == EdgeKind::Nondegenerate)
        .map(|(e, _)| e)
        .min_by(|a, b| (a - 5.6288).abs().total_cmp(&(b - 5.6288).abs()))
        .unwrap_or(f64::NAN);
    let t9 = period_transfer(&stack, 9.0)?.trace();
    let checks = vec![
        Check::new("nondegenerate edge near 5.6288", edge, 5.6288, 5e-4),
        Check { name: "|tr M(9)| < 2".into(), value: t9.abs(), target: 2.0, tol: 0.0, pass: t9.abs() < 2.0 },
    ];
    report(&checks, "fig3");
    out.add("fig3_discriminant.csv", s.as_bytes())?;
    out.add("fig3_bands.csv", bs.to_csv().as_bytes())?;
    out.add("fig3_gaps.csv", gaps_csv(&bs).as_bytes())?;
    let json = serde_json::to_vec_pretty(&FigureSummary { checks: &checks, details: edge }).expect("serializable");
    out.add("fig3_summary.json", &json)?;
    Ok("fig3")
}

#[derive(Serialize)]
struct Fig4Details<'a> {
    config: &'a crate::scaling::Figure4Config,
    fits: &'a [FitResult],
}

fn fig4(ctx: &Ctx, out: &mut Outputs) -> Result<&'static str, HarnessError> {
    let config = ctx.cfg.figure4.apply(&ctx.cfg.model, ctx.seed)?;
    let result = figure4_experiment(&config).map_err(config_err)?;
    for c in &result.checks {
        println!("{}", c.line());
    }
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let slopes = result.checks.iter().filter(|c| c.name.ends_with("slope")).all(|c| c.pass);
    println!("fig4 slopes: {}", verdict(slopes));
    println!("fig4 all checks: {}", verdict(result.passed()));
    out.add("fig4.csv", result.to_csv(&config).as_bytes())?;
    let json = serde_json::to_vec_pretty(&FigureSummary {
        checks: &result.checks,
        details: Fig4Details { config: &config, fits: &result.fits },
    })
    .expect("serializable");
    out.add("fig4_summary.json", &json)?;
    Ok("fig4")
}

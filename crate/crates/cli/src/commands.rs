//! The six subcommands.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::Value;
use treeloc_core::cavity::{extrapolate_runs, plan_runs, ExtrapolationPlan};
use treeloc_core::checks::{self, Check};
use treeloc_core::disorder::{DisorderDensity, DisorderKind};
use treeloc_core::kernel::{assemble_kernel_with, build_grid, eigenvector_profile, leading_eigen, Quadrature};
use treeloc_core::rde::{coupling_scale, effective_density, init_pool, ConvergenceRule, EffectiveGridSpec, ModelParams};
use treeloc_core::thresholds::{
    disorder_strength, kernel_source, lambda_at, threshold_cavity, threshold_closed_form, threshold_eigen, CavityOptions,
    EigenOptions, Method, ThresholdResult,
};

use crate::config::{Command, CouplingArg, RunConfig};
use crate::output::{csv_field, fmt_g, fmt_opt, sibling, Header, OutputFile};
use crate::reference::{self, Expected, Family, Status};
use crate::CliError;

/// Default pool size for `rde-diag`.
const DIAG_POOL: usize = 100_000;
/// Default kernel cutoff for `profile`, wide enough to show the decay at large `|x|`.
const PROFILE_X_MAX: f64 = 1e5;
/// Histogram range and resolution for `rde-diag`.
const HIST_RANGE: f64 = 10.0;
const HIST_BINS: usize = 200;

/// How a successful run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Finished, but a comparison or check did not pass.
    ToleranceFailed,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start {} worker threads: {e}", cfg.threads)))?;
    pool.install(|| match cfg.command {
        Command::RdeDiag => rde_diag(cfg),
        Command::Eigen => eigen(cfg),
        Command::Profile => profile(cfg),
        Command::Cavity => cavity(cfg),
        Command::Threshold => threshold(cfg),
        Command::Table => table(cfg),
    })
}

pub fn eigen_options(cfg: &RunConfig) -> EigenOptions {
    let mut o = EigenOptions::default();
    o.grid_n = cfg.grid_n.unwrap_or(o.grid_n);
    o.x_max = cfg.x_max.unwrap_or(o.x_max);
    o.x_min_factor = cfg.x_min_factor.unwrap_or(o.x_min_factor);
    o.quadrature = cfg.quadrature.unwrap_or(o.quadrature);
    o.power_tol = cfg.power_tol.unwrap_or(o.power_tol);
    o.bracket = cfg.g_bracket.unwrap_or(o.bracket);
    o.tol = cfg.tol.unwrap_or(o.tol);
    if let Some(n) = cfg.pool_sizes.as_ref().and_then(|v| v.first()) {
        o.pool_size = *n;
    }
    o.seed = cfg.seed;
    o.effective = effective_spec(cfg);
    o
}

fn effective_spec(cfg: &RunConfig) -> EffectiveGridSpec {
    let mut spec = EffectiveGridSpec::default();
    spec.samples = cfg.samples.unwrap_or(spec.samples);
    spec.z_max = cfg.z_max.unwrap_or(spec.z_max);
    spec
}

pub fn cavity_options(cfg: &RunConfig) -> CavityOptions {
    let mut o = CavityOptions::default();
    let plan = &mut o.plan;
    if let Some(n) = &cfg.pool_sizes {
        plan.pool_sizes = n.clone();
    }
    if let Some(r) = &cfg.sweeps {
        plan.sweeps = r.clone();
    }
    plan.seeds = cfg.seeds.unwrap_or(plan.seeds);
    plan.burn_in_frac = cfg.burn_in_frac.unwrap_or(plan.burn_in_frac);
    plan.master_seed = cfg.seed;
    o.bracket = cfg.g_bracket.unwrap_or(o.bracket);
    o.tol = cfg.tol.unwrap_or(o.tol);
    o
}

fn list(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Header settings: the given entries plus the resolved value of every
/// option the command uses. Output location and timing are left out so
/// that headers do not depend on where or how a run was recorded.
fn header(cfg: &RunConfig, resolved: &[(&str, String)]) -> Header {
    let mut map: BTreeMap<String, String> = cfg.entries.clone();
    for key in ["out", "config", "timing", "seed", "threads"] {
        map.remove(key);
    }
    map.insert("disorder".into(), cfg.disorder.label());
    for (k, v) in resolved {
        map.entry((*k).to_string()).or_insert_with(|| v.clone());
    }
    Header {
        command: cfg.command.to_string(),
        settings: map.into_iter().collect(),
        seed: cfg.seed,
        started: cfg.timing.then(Instant::now),
    }
}

fn quadrature_name(q: Quadrature) -> &'static str {
    match q {
        Quadrature::Midpoint => "midpoint",
        Quadrature::CellIntegrated => "cell",
    }
}

fn eigen_settings(o: &EigenOptions, with_pool: bool) -> Vec<(&'static str, String)> {
    let mut v = vec![
        ("grid_n", o.grid_n.to_string()),
        ("x_max", fmt_g(o.x_max)),
        ("x_min_factor", fmt_g(o.x_min_factor)),
        ("quadrature", quadrature_name(o.quadrature).to_string()),
        ("power_tol", fmt_g(o.power_tol)),
    ];
    if with_pool {
        v.push(("pool_size", o.pool_size.to_string()));
        v.push(("samples", o.effective.samples.to_string()));
        v.push(("z_max", fmt_g(o.effective.z_max)));
    }
    v
}

fn plan_settings(p: &ExtrapolationPlan) -> Vec<(&'static str, String)> {
    vec![
        ("pool_size", list(&p.pool_sizes)),
        ("sweeps", list(&p.sweeps)),
        ("seeds", p.seeds.to_string()),
        ("burn_in_frac", fmt_g(p.burn_in_frac)),
    ]
}

fn params_for(cfg: &RunConfig, k: usize, s: f64) -> Result<ModelParams, CliError> {
    let p = match cfg.coupling {
        Some(CouplingArg::Hopping(t)) => ModelParams::with_hopping(k, t, cfg.energy, s)?,
        Some(CouplingArg::Scaled(g)) => ModelParams::with_coupling(k, g, cfg.energy, s)?,
        None => return Err(CliError::Runtime("no coupling given (use --t or --g)".into())),
    };
    Ok(p)
}

/// Runs `body` with the file open; on error the partial file is closed with
/// an `# INCOMPLETE` trailer before the error is passed on.
fn with_output<T>(
    out: OutputFile,
    body: impl FnOnce(&mut OutputFile) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let mut out = out;
    match body(&mut out) {
        Ok(v) => {
            out.finish()?;
            Ok(v)
        }
        Err(e) => {
            out.abort(&e.to_string())?;
            Err(e)
        }
    }
}

fn rde_diag(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let k = cfg.ks[0];
    let params = params_for(cfg, k, 1.0)?;
    let n = cfg.pool_sizes.as_ref().map(|v| v[0]).unwrap_or(DIAG_POOL);
    let spec = effective_spec(cfg);
    let h = header(
        cfg,
        &[
            ("pool_size", n.to_string()),
            ("samples", spec.samples.to_string()),
            ("z_max", fmt_g(spec.z_max)),
            ("s", fmt_g(cfg.s)),
            ("E", fmt_g(cfg.energy)),
        ],
    );
    let d = &cfg.disorder;
    let out = OutputFile::create(&cfg.out, &h)?;
    let (pool, report, eff) = with_output(out, |out| {
        let pool = init_pool(d, params, n, cfg.seed)?;
        let (pool, report) = pool.converge(d, ConvergenceRule::default());
        out.line(&format!(
            "# pool: depth={} sweeps={} converged={} last_ks={}",
            pool.depth(),
            report.sweeps,
            report.converged,
            fmt_g(report.last_ks)
        ))?;
        out.line("bin_lo,bin_hi,count,density")?;
        let width = 2.0 * HIST_RANGE / HIST_BINS as f64;
        let mut counts = vec![0usize; HIST_BINS];
        for &g in pool.samples() {
            if g.abs() < HIST_RANGE {
                counts[(((g + HIST_RANGE) / width) as usize).min(HIST_BINS - 1)] += 1;
            }
        }
        for (i, c) in counts.iter().enumerate() {
            let lo = -HIST_RANGE + width * i as f64;
            out.row(&[fmt_g(lo), fmt_g(lo + width), c.to_string(), fmt_g(*c as f64 / (n as f64 * width))])?;
        }
        let eff = effective_density(&pool, d, &spec)?;
        Ok((pool, report, eff))
    })?;

    let mut eff_file = BufWriter::new(File::create(sibling(&cfg.out, "effective.csv"))?);
    for line in h.lines() {
        writeln!(eff_file, "{line}")?;
    }
    eff.write_csv(&mut eff_file)?;
    eff_file.flush()?;

    let results: Vec<Check> = [
        Some(checks::quadratic_tail(&pool, d)),
        Some(checks::sup_norm(&eff, d)),
        checks::lipschitz_transfer(&eff, d),
        Some(checks::pareto_domination(&pool, d)),
        Some(checks::positivity(&pool)),
        Some(checks::envelope(&eff, d, cfg.s, params.coupling())),
    ]
    .into_iter()
    .flatten()
    .collect();
    let mut c = OutputFile::create(&sibling(&cfg.out, "checks.csv"), &h)?;
    c.line("check,value,bound,pass")?;
    c.row(&["pool_converged".into(), fmt_g(report.last_ks), "".into(), report.converged.to_string()])?;
    for r in &results {
        c.row(&[r.name.to_string(), fmt_g(r.value), fmt_g(r.bound), r.pass.to_string()])?;
        if !r.pass {
            log::warn!("check {} failed: {} against {}", r.name, r.value, r.bound);
        }
    }
    c.finish()?;
    Ok(if report.converged && results.iter().all(|r| r.pass) { Outcome::Ok } else { Outcome::ToleranceFailed })
}

fn eigen_method(cfg: &RunConfig) -> Method {
    cfg.methods.first().copied().unwrap_or(Method::A)
}

fn eigen(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let method = eigen_method(cfg);
    let opts = eigen_options(cfg);
    let (lo, hi) = opts.bracket;
    let mut resolved = eigen_settings(&opts, method == Method::B);
    resolved.push(("method", method.to_string()));
    resolved.push(("E", fmt_g(cfg.energy)));
    if cfg.coupling.is_none() {
        resolved.push(("g_bracket", format!("{},{}", fmt_g(lo), fmt_g(hi))));
        resolved.push(("g_steps", cfg.g_steps.to_string()));
    }
    let out = OutputFile::create(&cfg.out, &header(cfg, &resolved))?;
    with_output(out, |out| {
        out.line("K,g,t,lambda,iterations,residual")?;
        for &k in &cfg.ks {
            let gs: Vec<f64> = match cfg.coupling {
                Some(CouplingArg::Scaled(g)) => vec![g],
                Some(CouplingArg::Hopping(t)) => vec![t * coupling_scale(k)],
                None => {
                    let m = cfg.g_steps;
                    (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
                }
            };
            for g in gs {
                let ev = lambda_at(method, &cfg.disorder, k, cfg.energy, g, &opts)?;
                out.row(&[
                    k.to_string(),
                    fmt_g(g),
                    fmt_g(g / coupling_scale(k)),
                    fmt_g(ev.lambda),
                    ev.iterations.to_string(),
                    fmt_g(ev.residual),
                ])?;
            }
        }
        Ok(Outcome::Ok)
    })
}

fn profile(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let method = eigen_method(cfg);
    let k = cfg.ks[0];
    let params = params_for(cfg, k, cfg.s)?;
    let mut opts = eigen_options(cfg);
    opts.x_max = cfg.x_max.unwrap_or(PROFILE_X_MAX);
    let mut resolved = eigen_settings(&opts, method == Method::B);
    resolved.push(("method", method.to_string()));
    resolved.push(("s", fmt_g(cfg.s)));
    resolved.push(("E", fmt_g(cfg.energy)));
    let out = OutputFile::create(&cfg.out, &header(cfg, &resolved))?;
    with_output(out, |out| {
        let t = params.hopping();
        let grid = build_grid(opts.x_min_factor * t * t, opts.x_max, opts.grid_n)?;
        let (source, _) = kernel_source(method, &cfg.disorder, &params, &opts)?;
        let kernel = assemble_kernel_with(source, params, grid, opts.quadrature)?;
        if let Some(path) = &cfg.dump_kernel {
            let mut w = BufWriter::new(File::create(path)?);
            kernel.write_binary(&mut w)?;
            w.flush()?;
        }
        let res = leading_eigen(&kernel, opts.power_tol, opts.max_iter)?;
        out.line(&format!(
            "# lambda={} iterations={} residual={} t={} g={}",
            fmt_g(res.lambda),
            res.iterations,
            fmt_g(res.residual),
            fmt_g(t),
            fmt_g(params.coupling())
        ))?;
        out.line("x,x_abs_a")?;
        for (x, v) in eigenvector_profile(&res, kernel.grid()) {
            out.row(&[fmt_g(x), fmt_g(v)])?;
        }
        Ok(Outcome::Ok)
    })
}

fn cavity(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let k = cfg.ks[0];
    let params = params_for(cfg, k, cfg.s)?;
    let plan = cavity_options(cfg).plan;
    let mut resolved = plan_settings(&plan);
    resolved.push(("s", fmt_g(cfg.s)));
    resolved.push(("E", fmt_g(cfg.energy)));
    let h = header(cfg, &resolved);
    let out = OutputFile::create(&cfg.out, &h)?;
    let runs = with_output(out, |out| {
        let runs = plan_runs(&cfg.disorder, params, &plan)?;
        out.line("N,R,replica,sweep_index,delta_phi")?;
        for (j, run) in runs.iter().enumerate() {
            let replica = j % plan.seeds;
            for (i, x) in run.increments.iter().enumerate() {
                out.row(&[
                    run.pool_size.to_string(),
                    run.sweeps.to_string(),
                    replica.to_string(),
                    (i + 1).to_string(),
                    fmt_g(*x),
                ])?;
            }
        }
        Ok(runs)
    })?;

    let mut fits = OutputFile::create(&sibling(&cfg.out, "fits.csv"), &h)?;
    let result = (|| -> Result<(), CliError> {
        let f = &mut fits;
        f.line("kind,N,R,replica,phi,standard_error")?;
        for (j, run) in runs.iter().enumerate() {
            f.row(&[
                "run".into(),
                run.pool_size.to_string(),
                run.sweeps.to_string(),
                (j % plan.seeds).to_string(),
                fmt_g(run.estimate),
                String::new(),
            ])?;
        }
        let ex = extrapolate_runs(&runs, &plan)?;
        for (n, v, se) in &ex.per_pool {
            f.row(&["R_limit".into(), n.to_string(), "inf".into(), String::new(), fmt_g(*v), fmt_g(*se)])?;
        }
        let label = format!("N_limit_{}", ex.n_model);
        f.row(&[label, "inf".into(), "inf".into(), String::new(), fmt_g(ex.value), fmt_g(ex.standard_error)])?;
        f.line("# fit rows: stage,coefficients...,residual_rms")?;
        for fit in ex.r_fits.iter().chain(ex.n_fit.iter()) {
            f.line(&format!("# {}", fit.csv_row()))?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => {
            fits.finish()?;
            Ok(Outcome::Ok)
        }
        Err(e) => {
            fits.abort(&e.to_string())?;
            Err(e)
        }
    }
}

/// One threshold cell.
pub fn compute_threshold(cfg: &RunConfig, method: Method, k: usize) -> Result<ThresholdResult, CliError> {
    let d = &cfg.disorder;
    let r = match method {
        Method::A | Method::B => threshold_eigen(method, d, k, cfg.energy, &eigen_options(cfg))?,
        Method::C => threshold_cavity(d, k, cfg.energy, &cavity_options(cfg))?,
        Method::D | Method::E | Method::Asymptotic => threshold_closed_form(method, d, k, cfg.energy)?,
    };
    Ok(r)
}

fn threshold_settings(cfg: &RunConfig) -> Vec<(&'static str, String)> {
    let mut resolved = vec![("E", fmt_g(cfg.energy))];
    let uses = |m: Method| cfg.methods.contains(&m);
    if uses(Method::A) || uses(Method::B) {
        let o = eigen_options(cfg);
        resolved.extend(eigen_settings(&o, uses(Method::B)));
        resolved.push(("g_bracket", format!("{},{}", fmt_g(o.bracket.0), fmt_g(o.bracket.1))));
        resolved.push(("tol", fmt_g(o.tol)));
    }
    if uses(Method::C) {
        let o = cavity_options(cfg);
        for (k, v) in plan_settings(&o.plan) {
            if !resolved.iter().any(|(rk, _)| *rk == k) {
                resolved.push((k, v));
            }
        }
        resolved.push(("tol_cavity", fmt_g(o.tol)));
    }
    resolved
}

fn threshold(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let method = cfg.methods[0];
    let out = OutputFile::create(&cfg.out, &header(cfg, &threshold_settings(cfg)))?;
    with_output(out, |out| {
        out.line("method,disorder,K,E,g_c,t_c,uncertainty,W_c_or_gamma_c,diagnostics_json")?;
        for &k in &cfg.ks {
            let r = compute_threshold(cfg, method, k)?;
            out.row(&threshold_row(&r, &cfg.disorder))?;
        }
        Ok(Outcome::Ok)
    })
}

pub fn threshold_row(r: &ThresholdResult, d: &DisorderDensity) -> Vec<String> {
    let strength = r.g_c.and_then(|g| disorder_strength(d, g, r.k));
    vec![
        r.method.to_string(),
        csv_field(&r.disorder),
        r.k.to_string(),
        fmt_g(r.energy),
        fmt_opt(r.g_c),
        fmt_opt(r.t_c()),
        fmt_g(r.uncertainty),
        fmt_opt(strength),
        csv_field(&Value::Object(r.diagnostics.clone()).to_string()),
    ]
}

/// Reference family for a disorder law, when the tables apply to it.
pub fn family(d: &DisorderDensity, energy: f64) -> Option<Family> {
    if energy != 0.0 {
        return None;
    }
    match d.kind() {
        DisorderKind::Uniform { .. } => Some(Family::Uniform),
        DisorderKind::Cauchy { .. } => Some(Family::Cauchy),
        DisorderKind::Tabulated(_) => None,
    }
}

fn table(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fam = family(&cfg.disorder, cfg.energy);
    let cells: Vec<(usize, Method)> =
        cfg.ks.iter().flat_map(|&k| cfg.methods.iter().map(move |&m| (k, m))).collect();
    let out = OutputFile::create(&cfg.out, &header(cfg, &threshold_settings(cfg)))?;
    let results: Vec<Result<ThresholdResult, CliError>> =
        cells.par_iter().map(|&(k, m)| compute_threshold(cfg, m, k)).collect();

    let mut out = out;
    let mut cols = vec!["K".to_string()];
    for m in &cfg.methods {
        for suffix in ["", "_unc", "_ref", "_status"] {
            cols.push(format!("g_c_{m}{suffix}"));
        }
    }
    out.line(&cols.join(","))?;
    let mut all_pass = true;
    let mut errors = Vec::new();
    let mut it = results.into_iter();
    for &k in &cfg.ks {
        let mut row = vec![k.to_string()];
        for &m in &cfg.methods {
            let expected = fam.map(|f| reference::lookup(f, k, m)).unwrap_or(Expected::Unknown);
            let reference_cell = match expected {
                Expected::Value { g_c, tol } => format!("{}±{}", fmt_g(g_c), fmt_g(tol)),
                Expected::Absent => "absent".into(),
                Expected::Unknown => String::new(),
            };
            match it.next().expect("one result per cell") {
                Ok(r) => {
                    let status = reference::compare(expected, r.g_c);
                    all_pass &= status != Status::Fail;
                    let value = r.g_c.map(fmt_g).unwrap_or_else(|| "absent".into());
                    row.extend([value, fmt_g(r.uncertainty), reference_cell, status.as_str().into()]);
                }
                Err(e) => {
                    errors.push(format!("K={k} method {m}: {e}"));
                    row.extend([String::new(), String::new(), reference_cell, "error".into()]);
                }
            }
        }
        out.row(&row)?;
    }
    if !errors.is_empty() {
        let msg = errors.join("; ");
        out.abort(&msg)?;
        return Err(CliError::Runtime(msg));
    }
    out.finish()?;
    Ok(if all_pass { Outcome::Ok } else { Outcome::ToleranceFailed })
}

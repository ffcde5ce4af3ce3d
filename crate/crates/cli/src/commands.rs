//! Command implementations. Each returns `Ok(true)` when every declared
//! check passes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flatvp::casimir::{default_f_grid, validate_assumptions, CasimirModel};
use flatvp::functionals::{
    evaluate_steady, random_scaling_params, rescale_steady, scaling_report_from, split_diagnostic,
};
use flatvp::grid::{read_table, GridScheme, RadialGrid, RadialProfile};
use flatvp::potential::potential_from_density;
use flatvp::stability::{
    dynamical_time, run as run_simulation, time_series_csv, ForceMethod, Perturbation, SimConfig,
};
use flatvp::steady_state::{regularity_report, solve as solve_state, solve_with_history, SteadyState};
use log::info;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

/// Relative mass defect tolerated in the split partition check.
const PARTITION_TOL: f64 = 1e-8;

pub struct Context {
    pub config: RunConfig,
    pub config_hash: String,
    pub out: PathBuf,
    pub seed_override: Option<u64>,
}

impl Context {
    pub fn load(path: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<Self, CliError> {
        let (text, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (text, base)
            }
            None => (String::new(), PathBuf::new()),
        };
        let config = RunConfig::parse(&text, &base)?;
        std::fs::create_dir_all(out)?;
        Ok(Self {
            config,
            config_hash: hex::encode(Sha256::digest(text.as_bytes())),
            out: out.to_path_buf(),
            seed_override: seed,
        })
    }

    fn seed(&self) -> u64 {
        self.seed_override.or(self.config.evolve.seed).unwrap_or(1)
    }

    fn meta(&self, command: &str, grid_hash: Option<&str>) -> Vec<(String, String)> {
        vec![
            ("tool".into(), format!("flatvp {}", env!("CARGO_PKG_VERSION"))),
            ("command".into(), command.into()),
            ("config_sha256".into(), self.config_hash.clone()),
            ("seed".into(), self.seed().to_string()),
            ("grid_hash".into(), grid_hash.unwrap_or("none").into()),
        ]
    }

    fn meta_json(&self, command: &str, grid_hash: Option<&str>) -> Value {
        let m: serde_json::Map<String, Value> = self
            .meta(command, grid_hash)
            .into_iter()
            .map(|(k, v)| (k, Value::String(v)))
            .collect();
        Value::Object(m)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut s = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Failed(format!("serializing {name}: {e}")))?;
        s.push('\n');
        self.write(name, &s)
    }
}

fn model_json(model: &CasimirModel) -> String {
    serde_json::to_string(model).expect("model serializes")
}

pub fn validate(ctx: &Context) -> Result<bool, CliError> {
    let model = ctx.config.model()?;
    let (f_max, points) = ctx.config.validation_grid()?;
    let report = validate_assumptions(&model, &default_f_grid(f_max, points))?;
    let pass = report.all_pass();
    let path = ctx.write_json(
        "validation.json",
        &json!({ "meta": ctx.meta_json("validate", None), "model": model, "report": report, "pass": pass }),
    )?;
    for c in &report.checks {
        println!("{}: {} ({})", c.name, if c.pass { "pass" } else { "FAIL" }, c.detail);
    }
    println!("wrote {}", path.display());
    Ok(pass)
}

fn require_valid(ctx: &Context, model: &CasimirModel) -> Result<(), CliError> {
    let (f_max, points) = ctx.config.validation_grid()?;
    let report = validate_assumptions(model, &default_f_grid(f_max, points))?;
    if !report.all_pass() {
        return Err(CliError::Failed(format!(
            "model fails assumptions {:?}; run `validate` for details",
            report.failed()
        )));
    }
    Ok(())
}

fn state_csv(ss: &SteadyState, meta: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        let _ = writeln!(s, "# {k}: {v}");
    }
    let _ = writeln!(s, "# E0: {:.16e}", ss.e0);
    let _ = writeln!(s, "# model: {}", model_json(&ss.model));
    s.push_str("r,rho,U\n");
    let (r, rho, u) = ss.columns();
    for i in 0..r.len() {
        let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", r[i], rho[i], u[i]);
    }
    s
}

/// Reads a state written by `solve`, rejecting it when its grid hash or
/// model disagree with the file contents or the current configuration.
fn load_state(path: &Path, model: &CasimirModel) -> Result<SteadyState, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let table = read_table(&text, 3).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if table.header[..3] != ["r", "rho", "U"] {
        return Err(CliError::Usage(format!("{}: expected columns r,rho,U", path.display())));
    }
    let field = |key: &str| {
        table
            .comments
            .iter()
            .find_map(|c| c.strip_prefix(key).and_then(|r| r.strip_prefix(':')).map(str::trim))
            .ok_or_else(|| CliError::Usage(format!("{}: missing `# {key}:` line", path.display())))
    };
    let e0: f64 = field("E0")?
        .parse()
        .map_err(|e| CliError::Usage(format!("{}: bad E0: {e}", path.display())))?;
    let stored_hash = field("grid_hash")?;
    let grid = RadialGrid::new(table.columns[0].clone(), GridScheme::Tabulated)?;
    if grid.hash() != stored_hash {
        return Err(CliError::Failed(format!(
            "{}: stale artifact, grid hash {} does not match recorded {stored_hash}",
            path.display(),
            grid.hash()
        )));
    }
    if field("model")? != model_json(model) {
        return Err(CliError::Failed(format!(
            "{}: stale artifact, solved for a different model",
            path.display()
        )));
    }
    let c = table.columns;
    Ok(SteadyState::from_columns(model, e0, c[0].clone(), c[1].clone(), c[2].clone())?)
}

fn obtain_state(ctx: &Context, state: Option<&PathBuf>) -> Result<SteadyState, CliError> {
    let model = ctx.config.model()?;
    match state {
        Some(p) => load_state(&ctx.config.resolve(p), &model),
        None => {
            require_valid(ctx, &model)?;
            Ok(solve_state(&model, ctx.config.mass()?, &ctx.config.solver_options()?)?)
        }
    }
}

pub fn solve(ctx: &Context) -> Result<bool, CliError> {
    let model = ctx.config.model()?;
    let mass = ctx.config.mass()?;
    let opts = ctx.config.solver_options()?;
    require_valid(ctx, &model)?;
    let (res, history) = solve_with_history(&model, mass, &opts);
    let ss = match res {
        Ok(ss) => ss,
        Err(e) => {
            let mut s = String::new();
            for (k, v) in ctx.meta("solve", None) {
                let _ = writeln!(s, "# {k}: {v}");
            }
            s.push_str("iteration,residual\n");
            for (i, r) in history.iter().enumerate() {
                let _ = writeln!(s, "{i},{r:.16e}");
            }
            let path = ctx.write("residual_history.csv", &s)?;
            let err = CliError::from(e);
            return Err(match err {
                CliError::Failed(m) => CliError::Failed(format!("{m}; residual history in {}", path.display())),
                other => other,
            });
        }
    };
    let hash = ss.grid.hash();
    let meta = ctx.meta("solve", Some(&hash));
    let csv = ctx.write("steady.csv", &state_csv(&ss, &meta))?;
    let functionals = evaluate_steady(&ss)?;
    let regularity = regularity_report(&ss)?;
    let summary = ss.summary();
    let sidecar = json!({
        "meta": ctx.meta_json("solve", Some(&hash)),
        "model": ss.model,
        "options": opts,
        "E0": summary.e0,
        "mass": summary.mass,
        "support_radius": summary.support_radius,
        "edge_radius": summary.edge_radius,
        "residual": summary.residual,
        "iterations": summary.iterations,
        "functionals": functionals,
        "regularity": regularity,
    });
    let js = ctx.write_json("steady.json", &sidecar)?;
    println!(
        "converged: E0 = {:.10e}, D = {:.10e}, support {:.6e}, residual {:.2e} after {} iterations",
        ss.e0, functionals.d, ss.support_radius, ss.residual, ss.iterations
    );
    println!("wrote {} and {}", csv.display(), js.display());
    Ok(true)
}

pub fn scaling(ctx: &Context) -> Result<bool, CliError> {
    let model = ctx.config.model()?;
    let sc = &ctx.config.scaling;
    let m2 = sc
        .m2
        .or(ctx.config.solve.mass)
        .ok_or_else(|| CliError::Usage("config: [scaling] requires `m2` (or [solve] mass)".into()))?;
    let m1 = sc.m1.ok_or_else(|| CliError::Usage("config: [scaling] requires `m1`".into()))?;
    if !(m1 > 0.0 && m1 <= m2 && m2.is_finite()) {
        return Err(CliError::Usage(format!("config: need 0 < m1 <= m2, got m1 = {m1}, m2 = {m2}")));
    }
    if !(sc.identity_tol > 0.0) {
        return Err(CliError::Usage("config: [scaling] identity_tol must be positive".into()));
    }
    require_valid(ctx, &model)?;
    let opts = ctx.config.solver_options()?;
    let s2 = solve_state(&model, m2, &opts)?;
    let d2 = evaluate_steady(&s2)?.d;
    let d1 = if m1 == m2 { d2 } else { evaluate_steady(&solve_state(&model, m1, &opts)?)?.d };
    let inequality = scaling_report_from(&model, m1, m2, d1, d2, &s2)?;
    let params = random_scaling_params(sc.samples, sc.range, ctx.seed())?;
    let mut samples = Vec::with_capacity(params.len());
    let mut worst: f64 = 0.0;
    for p in params {
        let r = rescale_steady(&s2, p)?;
        worst = worst.max(r.max_rel_diff);
        samples.push(json!({
            "params": r.params,
            "predicted": r.predicted,
            "direct": r.direct,
            "max_rel_diff": r.max_rel_diff,
        }));
    }
    let identity_pass = worst <= sc.identity_tol;
    let pass = inequality.holds && inequality.mechanism_holds && identity_pass;
    let hash = s2.grid.hash();
    let path = ctx.write_json(
        "scaling.json",
        &json!({
            "meta": ctx.meta_json("scaling", Some(&hash)),
            "model": model,
            "inequality": inequality,
            "identity": { "samples": samples, "max_rel_diff": worst, "tolerance": sc.identity_tol, "pass": identity_pass },
            "pass": pass,
        }),
    )?;
    println!(
        "D(M1) = {:.10e}, (M1/M2)^(1+alpha) D(M2) = {:.10e}, margin {:.3e} (relative {:.3e})",
        inequality.d_m1, inequality.rhs, inequality.margin, inequality.relative_margin
    );
    println!("scaling laws: worst relative difference {worst:.3e} over {} samples", sc.samples);
    println!("wrote {}", path.display());
    Ok(pass)
}

pub fn split(ctx: &Context) -> Result<bool, CliError> {
    let sp = &ctx.config.split;
    let ss = obtain_state(ctx, sp.state.as_ref())?;
    let mut radii: Vec<f64> = sp.radii.clone().unwrap_or_default();
    if let Some(fr) = &sp.fractions {
        radii.extend(fr.iter().map(|f| f * ss.edge_radius));
    }
    if radii.is_empty() {
        radii = [0.25, 0.5, 0.75, 1.5].iter().map(|f| f * ss.edge_radius).collect();
    }
    let constant = sp.constant.unwrap_or(f64::INFINITY);
    let mut reports = Vec::new();
    let mut pass = true;
    for r in radii {
        let rep = split_diagnostic(&ss, r, constant)?;
        let partition = ((rep.interior_mass + rep.exterior_mass - ss.mass) / ss.mass).abs();
        let partition_ok = partition <= PARTITION_TOL;
        let sign_ok = rep.mixed_term <= 0.0;
        let bound_ok = sp.constant.is_none() || rep.pass;
        pass &= partition_ok && sign_ok && bound_ok;
        println!(
            "R = {:.6e}: lambda = {:.6e}, mixed = {:.6e}, empirical C = {:.4e}",
            r, rep.exterior_mass, rep.mixed_term, rep.empirical_constant
        );
        reports.push(json!({
            "report": rep,
            "partition_defect": partition,
            "checks": { "partition": partition_ok, "mixed_nonpositive": sign_ok, "bound": bound_ok },
        }));
    }
    let hash = ss.grid.hash();
    let path = ctx.write_json(
        "split.json",
        &json!({
            "meta": ctx.meta_json("split", Some(&hash)),
            "mass": ss.mass,
            "edge_radius": ss.edge_radius,
            "splits": reports,
            "pass": pass,
        }),
    )?;
    println!("wrote {}", path.display());
    Ok(pass)
}

pub fn evolve(ctx: &Context) -> Result<bool, CliError> {
    let ev = &ctx.config.evolve;
    let ss = obtain_state(ctx, ev.state.as_ref())?;
    let t_dyn = dynamical_time(&ss);
    let method = match ev.method.as_str() {
        "grid" => ForceMethod::Grid,
        "direct" => ForceMethod::DirectSum { softening: ev.softening * ss.edge_radius },
        other => return Err(CliError::Usage(format!("config: [evolve] unknown method `{other}` (grid, direct)"))),
    };
    let perturbation = match ev.perturbation.as_str() {
        "none" => Perturbation::None,
        "velocity_scale" => Perturbation::VelocityScale { delta: ev.delta },
        "radial_stretch" => Perturbation::RadialStretch { delta: ev.delta },
        other => {
            return Err(CliError::Usage(format!(
                "config: [evolve] unknown perturbation `{other}` (none, velocity_scale, radial_stretch)"
            )))
        }
    };
    if !(ev.dt > 0.0) || !(ev.duration >= 0.0) {
        return Err(CliError::Usage("config: [evolve] dt must be positive and duration non-negative".into()));
    }
    let cfg = SimConfig {
        n: ev.particles,
        dt: Some(ev.dt * t_dyn),
        t_end: Some(ev.duration * t_dyn),
        method,
        seed: ctx.seed(),
        output_every: ev.output_every,
    };
    cfg.validate().map_err(|e| CliError::Usage(format!("config: [evolve] {e}")))?;
    info!("evolving {} particles for {} dynamical times", cfg.n, ev.duration);
    let out = run_simulation(&ss, &cfg, perturbation)?;
    let hash = ss.grid.hash();
    let mut meta = ctx.meta("evolve", Some(&hash));
    meta.push(("N".into(), cfg.n.to_string()));
    meta.push(("dt".into(), format!("{:.16e}", out.summary.dt)));
    meta.push(("method".into(), serde_json::to_string(&method).expect("serializes")));
    meta.push(("rng".into(), out.summary.rng.clone()));
    let ts = ctx.write("timeseries.csv", &time_series_csv(&out.rows, &meta))?;
    if ev.snapshot {
        ctx.write("snapshot.csv", &out.final_ensemble.snapshot_csv(&meta))?;
    }
    let s = &out.summary;
    let baseline = perturbation == Perturbation::None;
    let checks = json!({
        "d_nonnegative_within_noise": s.d_dist_nonnegative,
        "d_within_initial_noise": s.d_dist_within_noise,
        "D_drift_below_1pct": s.d_drift <= 0.01,
        "L3_drift_below_1e-6": s.l3_drift <= 1e-6,
    });
    let pass = s.d_dist_nonnegative
        && (!baseline || (s.d_dist_within_noise && s.d_drift <= 0.01 && s.l3_drift <= 1e-6));
    let js = ctx.write_json(
        "evolve.json",
        &json!({
            "meta": ctx.meta_json("evolve", Some(&hash)),
            "summary": out.summary,
            "checks": checks,
            "baseline": baseline,
            "pass": pass,
        }),
    )?;
    println!(
        "D drift {:.3e}, L3 drift {:.3e}, max |d| {:.3e} (noise {:.3e})",
        s.d_drift, s.l3_drift, s.d_dist_max_abs, s.eps_mc_initial
    );
    println!("wrote {} and {}", ts.display(), js.display());
    Ok(pass)
}

pub fn potential_table(ctx: &Context, input: Option<PathBuf>) -> Result<bool, CliError> {
    let path = match input {
        Some(p) => p,
        None => ctx
            .config
            .potential_table
            .input
            .as_ref()
            .map(|p| ctx.config.resolve(p))
            .ok_or_else(|| CliError::Usage("potential-table needs --input or [potential_table] input".into()))?,
    };
    let rho = RadialProfile::read_csv(&path)?;
    rho.check_density()?;
    let u = potential_from_density(&rho)?;
    let hash = rho.grid().hash();
    let out = ctx.write("potential.csv", &u.to_csv_string(&ctx.meta("potential-table", Some(&hash)), "U"))?;
    println!("wrote {}", out.display());
    Ok(true)
}

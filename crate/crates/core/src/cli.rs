//! Config-driven experiment runner.

use crate::berry::{curvature_report, parallel_transport, TransportOptions};
use crate::error::{Error, Result};
use crate::lattice::{build_grid, dist_to_divisor, write_dump, Divisor, TorusGrid};
use crate::linops::{lanczos_min_ritz, HorizontalProjector};
use crate::loops::{duality_matrix, make_loop, CyclePath, LoopKind, LoopParams};
use crate::tangent::{build_frame, h_mass};
use crate::vortex::{
    bradlow_limit, dbar_contract, gl_energy, solve_vortex, taubes_bounds_check, SolveOptions, VortexField,
};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CONVENTION_VERSION: &str = "1";

#[derive(Parser, Debug)]
#[command(name = "vortexberry", version, about = "Vortex moduli, Berry curvature and holonomy on the lattice torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the vortex equations and report energy, residuals and decay.
    Solve(RunArgs),
    /// Build the horizontal frame and its Gram matrix.
    Frame(RunArgs),
    /// Berry curvature against its asymptotic profile.
    Curvature(RunArgs),
    /// Parallel transport around a loop of divisors.
    Holonomy(RunArgs),
    /// Windings of α/β-loop holonomies along the two period cycles.
    Duality(RunArgs),
    /// Several τ values with trend tables.
    Sweep(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Solve,
    Frame,
    Curvature,
    Holonomy,
    Duality,
    Sweep,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub side_length: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub kind: LoopKind,
    #[serde(default)]
    pub mover: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_pair")]
    pub pair: [usize; 2],
    #[serde(default = "default_bulge")]
    pub bulge: f64,
    #[serde(default)]
    pub reversed: bool,
    #[serde(default)]
    pub tracks: Vec<Vec<[f64; 2]>>,
}

impl LoopConfig {
    fn params(&self) -> LoopParams {
        LoopParams {
            mover: self.mover,
            radius: self.radius,
            pair: self.pair,
            bulge: self.bulge,
            reversed: self.reversed,
            tracks: self.tracks.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleConfig {
    pub name: String,
    #[serde(default)]
    pub row: Option<f64>,
    #[serde(default)]
    pub column: Option<f64>,
    #[serde(default)]
    pub samples: Option<Vec<[f64; 2]>>,
}

/// Optional thresholds; asymptotic checks run only when configured.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    pub energy_rel: Option<f64>,
    pub decay_r_squared: Option<f64>,
    pub gram_deviation: Option<f64>,
    pub y_norm_deviation: Option<f64>,
    pub h_mass_deviation: Option<f64>,
    pub curvature_rel: Option<f64>,
    pub sup_off_shadow: Option<f64>,
    pub crossing_tol: Option<f64>,
    pub expected_winding: Option<std::collections::BTreeMap<String, i64>>,
    pub decay_ratio_tol: Option<f64>,
    pub sweep_trends: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<Experiment>,
    pub grid: GridConfig,
    #[serde(default)]
    pub tau_over_tau0: Vec<f64>,
    #[serde(default)]
    pub tau: Vec<f64>,
    #[serde(default)]
    pub divisor: Vec<[f64; 2]>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "yes")]
    pub enforce_resolution: bool,
    #[serde(default, rename = "loop")]
    pub loop_: Option<LoopConfig>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub probes: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub cycles: Vec<CycleConfig>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "yes")]
    pub richardson: bool,
    #[serde(default)]
    pub mover: usize,
    #[serde(default = "yes")]
    pub dump_fields: bool,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_tol() -> f64 {
    1e-8
}
fn default_steps() -> usize {
    64
}
fn default_margin() -> f64 {
    0.1
}
fn default_radius() -> f64 {
    0.15
}
fn default_pair() -> [usize; 2] {
    [0, 1]
}
fn default_bulge() -> f64 {
    0.6
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

fn check(out: &mut Vec<CheckResult>, name: &str, value: f64, threshold: f64, passed: bool) {
    out.push(CheckResult { name: name.into(), passed, value, threshold });
}

/// Files produced by a run, written only after the run completes.
#[derive(Default)]
pub struct Artifacts {
    pub text: Vec<(String, String)>,
    pub dumps: Vec<(String, TorusGrid, String, Vec<f64>, usize)>,
}

/// Validated configuration plus derived quantities.
pub struct Plan {
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub grid: TorusGrid,
    pub divisor: Divisor,
    pub taus: Vec<f64>,
    pub tau_units: Vec<f64>,
    pub hash: String,
}

pub fn parse_config(raw: &[u8], experiment: Experiment) -> Result<Plan> {
    let config: ExperimentConfig =
        serde_json::from_slice(raw).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
    if let Some(e) = config.experiment {
        if e != experiment {
            return Err(Error::Config(format!("config is for {e:?}, not {experiment:?}")));
        }
    }
    let grid = build_grid(config.grid.n, config.grid.side_length)?;
    let divisor = Divisor::new(config.divisor.clone());
    divisor.validate(&grid)?;
    let d = divisor.d();
    if !(config.tol > 0.0) {
        return Err(Error::Config("tol must be positive".into()));
    }
    let (taus, units) = match (config.tau_over_tau0.is_empty(), config.tau.is_empty()) {
        (false, true) => {
            if d == 0 {
                return Err(Error::Config("tau_over_tau0 needs a non-empty divisor".into()));
            }
            let t0 = bradlow_limit(d as i64, grid.area)?;
            if let Some(u) = config.tau_over_tau0.iter().find(|&&u| !(u > 1.0)) {
                return Err(Error::Config(format!("tau_over_tau0 entries must exceed 1, got {u}")));
            }
            (config.tau_over_tau0.iter().map(|u| u * t0).collect::<Vec<_>>(), config.tau_over_tau0.clone())
        }
        (true, false) => {
            let t0 = if d > 0 { bradlow_limit(d as i64, grid.area)? } else { 0.0 };
            if let Some(t) = config.tau.iter().find(|&&t| !(t > t0)) {
                return Err(Error::Config(format!("tau {t} is not above the Bradlow limit {t0}")));
            }
            let units = config.tau.iter().map(|t| if t0 > 0.0 { t / t0 } else { f64::INFINITY }).collect();
            (config.tau.clone(), units)
        }
        (false, false) => return Err(Error::Config("give either tau or tau_over_tau0, not both".into())),
        (true, true) => return Err(Error::Config("no tau values configured".into())),
    };
    if config.enforce_resolution {
        for &t in &taus {
            if grid.spacing > 0.2 / t.sqrt() {
                return Err(Error::Config(format!(
                    "grid spacing {} does not resolve tau = {t:.4} (need <= {:.5})",
                    grid.spacing,
                    0.2 / t.sqrt()
                )));
            }
        }
    }
    let needs_divisor = !matches!(experiment, Experiment::Solve);
    if needs_divisor && d == 0 {
        return Err(Error::Config("this experiment needs a non-empty divisor".into()));
    }
    match experiment {
        Experiment::Holonomy => {
            if config.loop_.is_none() {
                return Err(Error::Config("holonomy needs a loop".into()));
            }
            if config.steps < 64 {
                return Err(Error::Config("steps must be at least 64".into()));
            }
        }
        Experiment::Duality => {
            if config.steps < 64 {
                return Err(Error::Config("steps must be at least 64".into()));
            }
            if config.mover >= d {
                return Err(Error::Config("mover index out of range".into()));
            }
        }
        Experiment::Sweep if taus.len() < 3 => {
            return Err(Error::Config("a sweep needs at least three tau values".into()));
        }
        _ => {}
    }
    if let Some(l) = &config.loop_ {
        make_loop(l.kind, &l.params(), &divisor, &grid, config.steps)?;
    }
    for c in &config.cycles {
        let kinds = c.row.is_some() as u8 + c.column.is_some() as u8 + c.samples.is_some() as u8;
        if kinds != 1 {
            return Err(Error::Config(format!("cycle {} needs exactly one of row, column, samples", c.name)));
        }
    }
    let hash: String = Sha256::digest(raw).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Plan { experiment, config, grid, divisor, taus, tau_units: units, hash })
}

impl Plan {
    fn solve_opts(&self) -> SolveOptions {
        SolveOptions { tol: self.config.tol, enforce_resolution: self.config.enforce_resolution, ..Default::default() }
    }

    fn cycles(&self) -> Vec<CyclePath> {
        self.config
            .cycles
            .iter()
            .map(|c| {
                if let Some(y) = c.row {
                    CyclePath::row(&c.name, y, &self.grid)
                } else if let Some(x) = c.column {
                    CyclePath::column(&c.name, x, &self.grid)
                } else {
                    CyclePath { name: c.name.clone(), samples: c.samples.clone().unwrap_or_default() }
                }
            })
            .collect()
    }

    fn transport_opts(&self) -> TransportOptions {
        TransportOptions {
            solve: self.solve_opts(),
            margin: self.config.margin,
            richardson: self.config.richardson,
            ..Default::default()
        }
    }
}

fn solve_run(plan: &Plan, tau: f64, checks: &mut Vec<CheckResult>) -> Result<(VortexField, Value)> {
    let (field, rep) = solve_vortex(&plan.divisor, tau, &plan.grid, &plan.solve_opts())?;
    let d = plan.divisor.d() as f64;
    let energy = gl_energy(&field, 1.0);
    let deg = crate::lattice::chern_degree(&field.links, &plan.grid)?;
    let max_phi_sq = field.phi.iter().map(|p| p.norm_sqr()).fold(0.0, f64::max);
    let wint = field.w_integral();
    let bound = 2.0 * PI * tau * d;
    let e_ratio = if d > 0.0 { energy / bound } else { f64::NAN };
    check(checks, "degree", deg as f64, d, deg as f64 == d);
    check(checks, "curvature_residual", field.residual_sup, plan.config.tol, field.residual_sup <= plan.config.tol);
    let contract = dbar_contract(&plan.grid, tau, plan.config.tol);
    check(checks, "holomorphicity_residual", field.dbar_sup, contract, field.dbar_sup <= contract);
    let wdev = (wint - 2.0 * PI * d).abs();
    let wtol = 1e-6 * tau * plan.grid.area;
    check(checks, "w_integral", wdev, wtol, wdev <= wtol);
    check(checks, "max_phi_sq", max_phi_sq / tau, 1.0 + 1e-6, max_phi_sq <= tau * (1.0 + 1e-6));
    if d > 0.0 {
        let tol = plan.config.checks.energy_rel.unwrap_or(0.01);
        check(checks, "energy_bound", e_ratio, tol, (e_ratio - 1.0).abs() <= tol);
    }
    let decay = if d > 0.0 { taubes_bounds_check(&field).ok().map(|(_, f)| f) } else { None };
    if let (Some(r2), Some(fit)) = (plan.config.checks.decay_r_squared, &decay) {
        check(checks, "decay_r_squared", fit.r_squared, r2, fit.r_squared >= r2);
    }
    let v = json!({
        "tau": tau,
        "energy": energy,
        "energy_over_bound": e_ratio,
        "degree": deg,
        "residuals": {"curvature": field.residual_sup, "holomorphicity": field.dbar_sup, "holomorphicity_contract": contract},
        "integrals": {"w": wint, "phi_norm_sq": field.phi_norm_sq(), "expected_w": 2.0 * PI * d},
        "max_phi_sq_over_tau": max_phi_sq / tau,
        "newton_iterations": rep.newton_iterations,
        "decay_fit": decay.as_ref().map(|f| json!({"c_fit": f.c_fit, "exponent_fit": f.exponent_fit, "r_squared": f.r_squared, "samples": f.samples.len()})),
    });
    Ok((field, v))
}

fn suffix_since(checks: &mut [CheckResult], start: usize, u: f64) {
    for c in &mut checks[start..] {
        c.name = format!("{}@{}", c.name, tag(u));
    }
}

fn tag(u: f64) -> String {
    format!("{u:.4}").trim_end_matches('0').trim_end_matches('.').replace('.', "p")
}

fn run_solve(plan: &Plan, art: &mut Artifacts, checks: &mut Vec<CheckResult>) -> Result<Value> {
    let mut runs = Vec::new();
    for (&tau, &u) in plan.taus.iter().zip(&plan.tau_units) {
        let start = checks.len();
        let (field, v) = solve_run(plan, tau, checks)?;
        suffix_since(checks, start, u);
        if plan.config.dump_fields {
            let t = tag(u);
            let phi: Vec<f64> = field.phi.iter().flat_map(|c| [c.re, c.im]).collect();
            art.dumps.push((format!("phi_{t}.bin"), plan.grid.clone(), "phi".into(), phi, field.phi.len()));
            let lx: Vec<f64> = field.links.x.iter().flat_map(|c| [c.re, c.im]).collect();
            let ly: Vec<f64> = field.links.y.iter().flat_map(|c| [c.re, c.im]).collect();
            art.dumps.push((format!("links_x_{t}.bin"), plan.grid.clone(), "links_x".into(), lx, field.phi.len()));
            art.dumps.push((format!("links_y_{t}.bin"), plan.grid.clone(), "links_y".into(), ly, field.phi.len()));
            art.dumps.push((format!("w_{t}.bin"), plan.grid.clone(), "w".into(), field.w.clone(), field.w.len()));
        }
        runs.push(v);
    }
    Ok(json!({ "runs": runs }))
}

fn frame_run(plan: &Plan, tau: f64, u: f64, art: &mut Artifacts, checks: &mut Vec<CheckResult>, curvature: bool) -> Result<Value> {
    let (field, _) = solve_vortex(&plan.divisor, tau, &plan.grid, &plan.solve_opts())?;
    let proj = HorizontalProjector::new(&field)?;
    let frame = build_frame(&field, &proj)?;
    let rep = &frame.report;
    let d = field.d() as f64;
    let lx = rep.rows.iter().map(|r| r.solve.lx_rel).fold(0.0, f64::max);
    check(checks, "horizontal_residual", lx, 1e-8, lx <= 1e-8);
    let sym = rep
        .gram
        .iter()
        .enumerate()
        .all(|(i, r)| r.iter().enumerate().all(|(j, v)| (v - rep.gram[j][i]).abs() <= 1e-12 * v.abs().max(1.0)));
    let diag_pos = rep.gram.iter().enumerate().all(|(i, r)| r[i] > 0.0);
    check(checks, "gram_symmetric_positive_diagonal", (sym && diag_pos) as u8 as f64, 1.0, sym && diag_pos);
    if let Some(t) = plan.config.checks.gram_deviation {
        check(checks, "gram_deviation", rep.gram_deviation, t, rep.gram_deviation <= t);
    }
    let ydev = (rep.y_norms.iter().sum::<f64>() - d).abs();
    if let Some(t) = plan.config.checks.y_norm_deviation {
        check(checks, "y_norm_deviation", ydev, t, ydev <= t);
    }
    let mass = h_mass(&field);
    if let Some(t) = plan.config.checks.h_mass_deviation {
        check(checks, "h_mass_deviation", (mass - d).abs(), t, (mass - d).abs() <= t);
    }
    let t = tag(u);
    let dist = dist_to_divisor(&field.divisor, &field.grid);
    let mut csv = String::from("dist_d,xy_diff\n");
    let mut diff = vec![0.0; field.grid.sites()];
    for (x, y) in frame.x.iter().zip(&frame.y) {
        for (o, v) in diff.iter_mut().zip(x.sub(y).pointwise_norm()) {
            *o += v;
        }
    }
    for k in 0..diff.len() {
        let _ = writeln!(csv, "{:.10e},{:.10e}", dist[k], diff[k]);
    }
    art.text.push((format!("xy_samples_{t}.csv"), csv));
    let mut gcsv = String::new();
    for r in &rep.gram {
        let line: Vec<String> = r.iter().map(|v| format!("{v:.12e}")).collect();
        let _ = writeln!(gcsv, "{}", line.join(","));
    }
    art.text.push((format!("gram_{t}.csv"), gcsv));
    let mut v = json!({
        "tau": tau,
        "tau_over_tau0": u,
        "frame": rep,
        "h_mass": mass,
        "y_norm_deviation": ydev,
        "cokernel": proj.report,
        "lanczos_min_ritz": lanczos_min_ritz(&field, 30),
    });
    if curvature {
        let cr = curvature_report(&field, &frame)?;
        check(checks, "curvature_positive", cr.min_diag, -1e-10, cr.min_diag >= -1e-10);
        if let Some(t) = plan.config.checks.curvature_rel {
            check(checks, "curvature_profile", cr.rel_sup_error, t, cr.rel_sup_error <= t);
        }
        let mut pcsv = String::from("x,y,omega,predicted\n");
        for k in 0..field.grid.sites() {
            let [x, y] = field.grid.coords(k);
            let _ = writeln!(pcsv, "{x:.8},{y:.8},{:.10e},{:.10e}", cr.diag_profile[k], cr.predicted[k]);
        }
        art.text.push((format!("curvature_profile_{t}.csv"), pcsv));
        v["curvature"] = serde_json::to_value(&cr)?;
    }
    Ok(v)
}

fn run_frame(plan: &Plan, art: &mut Artifacts, checks: &mut Vec<CheckResult>, curvature: bool) -> Result<Value> {
    let mut runs = Vec::new();
    for (&tau, &u) in plan.taus.iter().zip(&plan.tau_units) {
        let start = checks.len();
        runs.push(frame_run(plan, tau, u, art, checks, curvature)?);
        suffix_since(checks, start, u);
    }
    Ok(json!({ "runs": runs }))
}

fn run_holonomy(plan: &Plan, art: &mut Artifacts, checks: &mut Vec<CheckResult>) -> Result<Value> {
    let lc = plan.config.loop_.as_ref().unwrap();
    let path = make_loop(lc.kind, &lc.params(), &plan.divisor, &plan.grid, plan.config.steps)?;
    let cycles = plan.cycles();
    let mut runs = Vec::new();
    let mut ccsv = String::from("tau_over_tau0,probe,delta\n");
    for (&tau, &u) in plan.taus.iter().zip(&plan.tau_units) {
        let rep = parallel_transport(&path, tau, &plan.grid, &cycles, &plan.config.probes, &plan.transport_opts())?;
        let start = checks.len();
        if let Some(t) = plan.config.checks.sup_off_shadow {
            check(checks, "sup_off_shadow", rep.sup_off_shadow, t, rep.sup_off_shadow <= t);
        }
        if let Some(t) = plan.config.checks.crossing_tol {
            for (i, dlt) in rep.crossing_deltas.iter().enumerate() {
                check(checks, &format!("crossing_{i}"), *dlt, t, (dlt - 1.0).abs() <= t);
            }
        }
        if let Some(exp) = &plan.config.checks.expected_winding {
            for (name, want) in exp {
                let got = rep.winding.get(name).copied().unwrap_or(i64::MIN);
                check(checks, &format!("winding_{name}"), got as f64, *want as f64, got == *want);
            }
        }
        suffix_since(checks, start, u);
        for (i, dlt) in rep.crossing_deltas.iter().enumerate() {
            let _ = writeln!(ccsv, "{u},{i},{dlt:.10e}");
        }
        if plan.config.dump_fields {
            let t = tag(u);
            art.dumps.push((format!("phase_field_{t}.bin"), plan.grid.clone(), "phase_field".into(), rep.phase_field.clone(), rep.phase_field.len()));
            let g: Vec<f64> = rep.g.g.iter().flat_map(|c| [c.re, c.im]).collect();
            art.dumps.push((format!("holonomy_{t}.bin"), plan.grid.clone(), "holonomy".into(), g, rep.g.g.len()));
        }
        let mut v = serde_json::to_value(&rep)?;
        v["tau"] = json!(tau);
        v["tau_over_tau0"] = json!(u);
        runs.push(v);
    }
    art.text.push(("crossing.csv".into(), ccsv));
    Ok(json!({ "loop": path, "runs": runs }))
}

fn run_duality(plan: &Plan, checks: &mut Vec<CheckResult>) -> Result<Value> {
    let mut runs = Vec::new();
    for (&tau, &u) in plan.taus.iter().zip(&plan.tau_units) {
        let rep = duality_matrix(tau, &plan.grid, plan.config.steps, &plan.divisor, plan.config.mover, &plan.transport_opts())?;
        let ok = rep.matrix == [[0, 1], [-1, 0]];
        check(checks, &format!("duality@{}", tag(u)), ok as u8 as f64, 1.0, ok);
        runs.push(json!({"tau": tau, "tau_over_tau0": u, "matrix": rep.matrix, "runs": rep.runs}));
    }
    Ok(json!({ "runs": runs }))
}

#[derive(Clone, Debug, Serialize)]
struct SweepRow {
    tau_over_tau0: f64,
    tau: f64,
    decay_exponent: Option<f64>,
    xy_exponent: Option<f64>,
    gram_deviation: f64,
    y_norm_deviation: f64,
    h_mass_deviation: f64,
    crossing_delta: Option<f64>,
}

fn sweep_point(plan: &Plan, tau: f64, u: f64) -> Result<SweepRow> {
    let (field, _) = solve_vortex(&plan.divisor, tau, &plan.grid, &plan.solve_opts())?;
    let decay = taubes_bounds_check(&field).ok().map(|(_, f)| f.exponent_fit);
    let proj = HorizontalProjector::new(&field)?;
    let frame = build_frame(&field, &proj)?;
    let d = field.d() as f64;
    let crossing = match &plan.config.loop_ {
        Some(lc) => {
            let path = make_loop(lc.kind, &lc.params(), &plan.divisor, &plan.grid, plan.config.steps)?;
            let rep = parallel_transport(&path, tau, &plan.grid, &[], &plan.config.probes, &plan.transport_opts())?;
            rep.crossing_deltas.first().copied()
        }
        None => None,
    };
    Ok(SweepRow {
        tau_over_tau0: u,
        tau,
        decay_exponent: decay,
        xy_exponent: frame.report.decay.as_ref().map(|f| f.exponent_fit),
        gram_deviation: frame.report.gram_deviation,
        y_norm_deviation: (frame.report.y_norms.iter().sum::<f64>() - d).abs(),
        h_mass_deviation: (h_mass(&field) - d).abs(),
        crossing_delta: crossing,
    })
}

fn run_sweep(plan: &Plan, art: &mut Artifacts, checks: &mut Vec<CheckResult>) -> Result<Value> {
    let pts: Vec<(f64, f64)> = plan.taus.iter().cloned().zip(plan.tau_units.iter().cloned()).collect();
    let rows = pts
        .par_iter()
        .map(|&(t, u)| sweep_point(plan, t, u))
        .collect::<Result<Vec<SweepRow>>>()?;
    let mut csv = String::from(
        "tau_over_tau0,tau,sqrt_tau,decay_exponent,xy_exponent,gram_deviation,y_norm_deviation,h_mass_deviation,crossing_delta\n",
    );
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{:.10e},{:.10e},{},{},{:.10e},{:.10e},{:.10e},{}",
            r.tau_over_tau0,
            r.tau,
            r.tau.sqrt(),
            opt(r.decay_exponent),
            opt(r.xy_exponent),
            r.gram_deviation,
            r.y_norm_deviation,
            r.h_mass_deviation,
            opt(r.crossing_delta)
        );
    }
    art.text.push(("trends.csv".into(), csv));
    let ratio_tol = plan.config.checks.decay_ratio_tol.unwrap_or(0.15);
    let mut ratios = Vec::new();
    for w in rows.windows(2) {
        let expect = (w[1].tau / w[0].tau).sqrt();
        for (name, a, b) in [("decay", w[0].decay_exponent, w[1].decay_exponent), ("xy", w[0].xy_exponent, w[1].xy_exponent)] {
            if let (Some(a), Some(b)) = (a, b) {
                let r = b / a;
                let ok = (r / expect - 1.0).abs() <= ratio_tol;
                ratios.push(json!({"kind": name, "from": w[0].tau_over_tau0, "to": w[1].tau_over_tau0, "ratio": r, "expected": expect, "within_tol": ok}));
            }
        }
    }
    let decreasing = |f: &dyn Fn(&SweepRow) -> Option<f64>| -> Option<bool> {
        let v: Option<Vec<f64>> = rows.iter().map(f).collect();
        v.map(|v| v.windows(2).all(|w| w[1] <= w[0]))
    };
    let mass_trend = decreasing(&|r| Some(r.h_mass_deviation));
    let gram_trend = decreasing(&|r| Some(r.gram_deviation));
    let cross_trend = decreasing(&|r| r.crossing_delta.map(|c| (c - 1.0).abs()));
    if plan.config.checks.sweep_trends.unwrap_or(false) {
        for r in &ratios {
            let ok = r["within_tol"].as_bool().unwrap();
            check(checks, &format!("{}_ratio_{}_{}", r["kind"].as_str().unwrap(), r["from"], r["to"]), r["ratio"].as_f64().unwrap(), ratio_tol, ok);
        }
        if let Some(ok) = mass_trend {
            check(checks, "h_mass_trend", ok as u8 as f64, 1.0, ok);
        }
        if let Some(ok) = cross_trend {
            check(checks, "crossing_trend", ok as u8 as f64, 1.0, ok);
        }
    }
    Ok(json!({
        "rows": rows,
        "exponent_ratios": ratios,
        "trends": {"h_mass_decreasing": mass_trend, "gram_decreasing": gram_trend, "crossing_improving": cross_trend},
    }))
}

pub fn run_plan(plan: &Plan) -> Result<(Value, Artifacts, bool)> {
    let mut art = Artifacts::default();
    let mut checks = Vec::new();
    let results = match plan.experiment {
        Experiment::Solve => run_solve(plan, &mut art, &mut checks)?,
        Experiment::Frame => run_frame(plan, &mut art, &mut checks, false)?,
        Experiment::Curvature => run_frame(plan, &mut art, &mut checks, true)?,
        Experiment::Holonomy => run_holonomy(plan, &mut art, &mut checks)?,
        Experiment::Duality => run_duality(plan, &mut checks)?,
        Experiment::Sweep => run_sweep(plan, &mut art, &mut checks)?,
    };
    let passed = checks.iter().all(|c| c.passed);
    let report = json!({
        "experiment": plan.experiment,
        "config_sha256": plan.hash,
        "convention_version": CONVENTION_VERSION,
        "grid": plan.grid,
        "divisor": plan.divisor.points,
        "results": results,
        "checks": checks,
        "passed": passed,
    });
    Ok((report, art, passed))
}

fn write_outputs(dir: &Path, report: &Value, art: &Artifacts) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    for (name, body) in &art.text {
        std::fs::write(dir.join(name), body)?;
    }
    for (name, grid, kind, values, count) in &art.dumps {
        write_dump(&dir.join(name), grid, kind, values, *count)?;
    }
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Precondition(_) | Error::Json(_) => 2,
        Error::Io(_) => 2,
        _ => 3,
    }
}

/// Runs one subcommand; returns the process exit code.
pub fn execute(experiment: Experiment, args: &RunArgs) -> i32 {
    let raw = match std::fs::read(&args.config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", args.config.display());
            return 2;
        }
    };
    let plan = match parse_config(&raw, experiment) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let out = args
        .out
        .clone()
        .or_else(|| plan.config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let result = pool.install(|| run_plan(&plan));
    match result {
        Ok((report, art, passed)) => {
            if let Err(e) = write_outputs(&out, &report, &art) {
                eprintln!("error: {e}");
                return 2;
            }
            if let Some(checks) = report["checks"].as_array() {
                for c in checks.iter().filter(|c| c["passed"] == json!(false)) {
                    eprintln!(
                        "check failed: {} (value {}, threshold {})",
                        c["name"].as_str().unwrap_or("?"),
                        c["value"],
                        c["threshold"]
                    );
                }
            }
            if passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("VORTEXBERRY_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("VORTEXBERRY_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::Config("VORTEXBERRY_THREADS must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match &cli.command {
        Command::Solve(a) => execute(Experiment::Solve, a),
        Command::Frame(a) => execute(Experiment::Frame, a),
        Command::Curvature(a) => execute(Experiment::Curvature, a),
        Command::Holonomy(a) => execute(Experiment::Holonomy, a),
        Command::Duality(a) => execute(Experiment::Duality, a),
        Command::Sweep(a) => execute(Experiment::Sweep, a),
    }
}

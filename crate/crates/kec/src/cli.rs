//! Deterministic scenario runner: every experiment is a subcommand driven by
//! a TOML config, writing CSV/JSON outputs stamped with the config hash.

use std::fmt::Display;
use std::fs;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calib::data::{load_jhu_csv, load_simple_csv, EpiSeries, InfectedKind};
use crate::calib::fit::{
    fit_targets, fit_unconstrained, retrospective_swap, FitResult, PreFitConfig, TargetFitConfig,
    WindowFit,
};
use crate::compartment::{Compartment, PerCompartment};
use crate::contact::{equilibrium_density, ContactParams, DeltaValue};
use crate::control::{ControlKernel, ControlSpec, Selective};
use crate::fpsolve::{fp_step, FluxScheme, FpOptions};
use crate::grid::{DensityField, Grid1D};
use crate::macroscopic::{run_macro_uncertain, MacroState};
use crate::sgkinetic::{
    run_kinetic, sg_convergence_study, EpiParams, KineticScenario, KineticState,
};
use crate::uq::{build_basis, DeltaMap, UncertaintyLaw};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ASSERT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "kec", version, about = "kinetic epidemic contact-model scenario runner")]
pub struct Cli {
    /// scenario config file (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// fail (exit 4) when a scenario-level check does not hold
    #[arg(long, global = true, default_value_t = false)]
    pub assert: bool,
    /// worker-count cap (current solvers are single-threaded)
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// solve the Fokker-Planck relaxation and compare with the analytic equilibrium
    Equilibrium,
    /// full stochastic-Galerkin kinetic SEIR run, statistics time series
    Kinetic,
    /// error-vs-M table of the sG truncation
    SgConvergence,
    /// closed macroscopic SEIR run, statistics time series
    Macro,
    /// kinetic-vs-macro discrepancy over a τ list
    ClosureCheck,
    /// two-stage data calibration
    Calibrate {
        #[arg(long, value_enum)]
        stage: Stage,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Stage {
    Pre,
    Targets,
    Retro,
}

/// A failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

fn cfg_err(msg: impl Display) -> Failure {
    Failure { code: EXIT_CONFIG, msg: format!("config error: {msg}") }
}

fn num_err(msg: impl Display) -> Failure {
    Failure { code: EXIT_NUMERICAL, msg: format!("numerical failure: {msg}") }
}

fn assert_err(msg: impl Display) -> Failure {
    Failure { code: EXIT_ASSERT, msg: format!("assertion failed: {msg}") }
}

fn log(msg: impl Display) {
    if std::env::var("KEC_LOG").is_ok_and(|v| !v.is_empty() && v != "off") {
        eprintln!("[kec] {msg}");
    }
}

// ---------------------------------------------------------------- config ---

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub contact: Option<ContactSection>,
    pub uncertainty: Option<UncertaintySection>,
    pub epi: Option<EpiSection>,
    pub control: Option<ControlSection>,
    pub grid: Option<GridSection>,
    pub time: Option<TimeSection>,
    pub initial: Option<InitialSection>,
    pub equilibrium: Option<EquilibriumSection>,
    pub sg_convergence: Option<SgConvergenceSection>,
    pub closure: Option<ClosureSection>,
    pub calibrate: Option<CalibrateSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSection {
    pub mu: f64,
    pub sigma2: f64,
    pub tau: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    /// "uniform" or "bernoulli"
    pub law: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub p: Option<f64>,
    /// "identity" (default) or "affine_flip"
    pub delta_map: Option<String>,
    pub quad_order: Option<usize>,
    /// gPC truncation order M
    pub order: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpiSection {
    pub beta: f64,
    pub zeta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub selective: Selective,
    pub x_t: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
    pub output_stride: Option<usize>,
    /// "central" (default) or "chang_cooper"
    pub flux: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub rho0: [f64; 4],
    pub m0: f64,
    /// freeze m_I at this value (calibration-style runs)
    pub m_i_clamp: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSection {
    pub delta: f64,
    pub m: f64,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub l1_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgConvergenceSection {
    pub m_list: Vec<usize>,
    pub m_ref: usize,
    pub m0: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosureSection {
    pub tau_list: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    /// "simple" or "jhu"
    pub format: String,
    pub path: Option<PathBuf>,
    pub confirmed_path: Option<PathBuf>,
    pub recovered_path: Option<PathBuf>,
    pub region: String,
    pub population: Option<f64>,
    /// "active" (default) or "cumulative"
    pub infected: Option<String>,
    pub t0: String,
    pub lockdown: String,
    pub t_f: String,
    pub p: Option<f64>,
    pub theta: Option<f64>,
    pub beta_bounds: Option<[f64; 2]>,
    pub lambda_bounds: Option<[f64; 2]>,
    pub selective: Option<Selective>,
    pub nu: Option<f64>,
    pub x_t_max: Option<f64>,
    pub dt_pre: Option<f64>,
    pub dt_control: Option<f64>,
}

struct LoadedConfig {
    config: ScenarioConfig,
    hash: String,
}

fn load_config(cli: &Cli) -> Result<LoadedConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| cfg_err("--config is required"))?;
    let raw = fs::read(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
    let hash = hex(&Sha256::digest(&raw));
    let text = String::from_utf8(raw).map_err(|_| cfg_err("config is not UTF-8"))?;
    let config: ScenarioConfig =
        toml::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
    Ok(LoadedConfig { config, hash })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, Failure> {
    s.as_ref().ok_or_else(|| cfg_err(format!("missing [{name}] section")))
}

impl ContactSection {
    fn build(&self) -> Result<ContactParams<f64>, Failure> {
        ContactParams::new(self.mu, self.sigma2, self.tau, self.epsilon).map_err(cfg_err)
    }
}

impl UncertaintySection {
    fn law(&self) -> Result<UncertaintyLaw<f64>, Failure> {
        let delta_map = match self.delta_map.as_deref() {
            None | Some("identity") => DeltaMap::Identity,
            Some("affine_flip") => DeltaMap::AffineFlip,
            Some(other) => return Err(cfg_err(format!("unknown delta_map {other:?}"))),
        };
        let mut law = match self.law.as_str() {
            "uniform" => {
                let a = self.a.ok_or_else(|| cfg_err("uniform law needs a"))?;
                let b = self.b.ok_or_else(|| cfg_err("uniform law needs b"))?;
                UncertaintyLaw::uniform(a, b, delta_map)
            }
            "bernoulli" => {
                let p = self.p.ok_or_else(|| cfg_err("bernoulli law needs p"))?;
                UncertaintyLaw::bernoulli(p)
            }
            other => return Err(cfg_err(format!("unknown law {other:?}"))),
        };
        if let Some(q) = self.quad_order {
            law.quad_order = q;
        }
        law.validate().map_err(cfg_err)?;
        Ok(law)
    }
}

impl EpiSection {
    fn build(&self) -> Result<EpiParams<f64>, Failure> {
        let epi = EpiParams { beta: self.beta, zeta: self.zeta, gamma: self.gamma };
        epi.validate().map_err(cfg_err)?;
        Ok(epi)
    }
}

fn control_of(section: Option<&ControlSection>) -> Result<ControlSpec<f64>, Failure> {
    let spec = match section {
        None => ControlSpec::off(),
        Some(c) => ControlSpec {
            selective: c.selective,
            x_t: PerCompartment::splat(c.x_t),
            nu: c.nu,
            bbar: ControlKernel::Maxwellian,
        },
    };
    spec.validate().map_err(cfg_err)?;
    Ok(spec)
}

fn flux_of(time: &TimeSection) -> Result<FluxScheme, Failure> {
    match time.flux.as_deref() {
        None | Some("central") => Ok(FluxScheme::Central),
        Some("chang_cooper") => Ok(FluxScheme::ChangCooper),
        Some(other) => Err(cfg_err(format!("unknown flux scheme {other:?}"))),
    }
}

// --------------------------------------------------------------- outputs ---

fn create_output(out_dir: &Path, name: &str, hash: &str) -> Result<File, Failure> {
    fs::create_dir_all(out_dir).map_err(|e| num_err(format!("{}: {e}", out_dir.display())))?;
    let path = out_dir.join(name);
    let mut f = File::create(&path).map_err(|e| num_err(format!("{}: {e}", path.display())))?;
    writeln!(f, "# config_hash={hash} version={}", env!("CARGO_PKG_VERSION"))
        .map_err(|e| num_err(e))?;
    log(format!("writing {}", path.display()));
    Ok(f)
}

const STAT_NAMES: [&str; 4] = ["mean_rho", "var_rho", "mean_m", "var_m"];

fn write_stat_rows(
    f: &mut File,
    t: f64,
    j: Compartment,
    values: [f64; 4],
) -> Result<(), Failure> {
    for (name, v) in STAT_NAMES.iter().zip(values) {
        writeln!(f, "{t:.6},{},{name},{v:.10e}", j.label()).map_err(|e| num_err(e))?;
    }
    Ok(())
}

// -------------------------------------------------------------- commands ---

fn cmd_equilibrium(cli: &Cli, loaded: &LoadedConfig) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let contact = section(&cfg.contact, "contact")?.build()?;
    let gs = section(&cfg.grid, "grid")?;
    let eq = section(&cfg.equilibrium, "equilibrium")?;
    let grid = Grid1D::new(gs.x_max, gs.n_points).map_err(cfg_err)?;
    let delta = DeltaValue::new(eq.delta).map_err(cfg_err)?;
    if eq.m <= 0.0 {
        return Err(cfg_err(format!("equilibrium mean m = {} must be positive", eq.m)));
    }
    // the slow tail modes need a few hundred relaxation times
    let t_end = eq.t_end.unwrap_or(400.0 * contact.tau);
    let dt = eq.dt.unwrap_or(t_end / 4000.0);
    let analytic = equilibrium_density(&contact, delta, eq.m, &grid).map_err(num_err)?;

    // Gamma(2, m/2) start: positive, mean m, far from the target shape
    let vals: Vec<f64> = grid.nodes().iter().map(|&x| x * (-2.0 * x / eq.m).exp()).collect();
    let mut f = DensityField::new(grid, vals).map_err(num_err)?;
    let mass = f.mass();
    for v in f.values.iter_mut() {
        *v /= mass;
    }
    let mut t = 0.0;
    let opts = FpOptions { scheme: FluxScheme::ChangCooper, refine_mean: false };
    while t < t_end - dt * 1e-9 {
        f = fp_step(&f, &contact, delta, eq.m, None, dt, opts).map_err(num_err)?;
        t += dt;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, s) in analytic.values.iter().zip(&f.values) {
        num += (a - s).abs();
        den += a.abs();
    }
    let l1 = num / den;
    let mut out = create_output(&cli.out_dir, "equilibrium.csv", &loaded.hash)?;
    writeln!(out, "# l1_distance={l1:.10e}").map_err(|e| num_err(e))?;
    writeln!(out, "x,analytic,solved").map_err(|e| num_err(e))?;
    for (i, (a, s)) in analytic.values.iter().zip(&f.values).enumerate() {
        writeln!(out, "{:.6},{a:.10e},{s:.10e}", grid.node(i)).map_err(|e| num_err(e))?;
    }
    println!("l1_distance {l1:.6e}");
    let tol = eq.l1_tol.unwrap_or(1e-2);
    if cli.assert && !(l1 < tol) {
        return Err(assert_err(format!("L1 distance {l1:.3e} >= {tol:.3e}")));
    }
    Ok(())
}

fn kinetic_initial(
    cfg: &ScenarioConfig,
    contact: &ContactParams<f64>,
) -> Result<KineticState<f64>, Failure> {
    let us = section(&cfg.uncertainty, "uncertainty")?;
    let gs = section(&cfg.grid, "grid")?;
    let init = section(&cfg.initial, "initial")?;
    let law = us.law()?;
    let basis = build_basis(law, us.order).map_err(cfg_err)?;
    let grid = Grid1D::new(gs.x_max, gs.n_points).map_err(cfg_err)?;
    KineticState::from_gamma(
        basis,
        grid,
        contact.lambda(),
        PerCompartment(init.rho0),
        PerCompartment::splat(init.m0),
    )
    .map_err(cfg_err)
}

fn cmd_kinetic(cli: &Cli, loaded: &LoadedConfig) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let contact = section(&cfg.contact, "contact")?.build()?;
    let epi = section(&cfg.epi, "epi")?.build()?;
    let time = section(&cfg.time, "time")?;
    let control = control_of(cfg.control.as_ref())?;
    let state = kinetic_initial(cfg, &contact)?;
    let scenario = KineticScenario {
        params: contact,
        epi,
        control,
        dt: time.dt,
        t_end: time.t_end,
        output_stride: time.output_stride.unwrap_or(1),
        scheme: flux_of(time)?,
    };
    let run = run_kinetic(state, &scenario).map_err(num_err)?;
    let mut out = create_output(&cli.out_dir, "kinetic_stats.csv", &loaded.hash)?;
    writeln!(out, "t,J,stat,value").map_err(|e| num_err(e))?;
    for s in &run.samples {
        for j in Compartment::ALL {
            write_stat_rows(&mut out, s.t, j, [
                s.mean_rho[j],
                s.var_rho[j],
                s.mean_m[j],
                s.var_m[j],
            ])?;
        }
    }
    log(format!("{} samples, {} clipped contact steps", run.samples.len(), run.clipped_steps));
    Ok(())
}

fn cmd_sg_convergence(cli: &Cli, loaded: &LoadedConfig) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let contact = section(&cfg.contact, "contact")?.build()?;
    let us = section(&cfg.uncertainty, "uncertainty")?;
    let gs = section(&cfg.grid, "grid")?;
    let time = section(&cfg.time, "time")?;
    let sc = section(&cfg.sg_convergence, "sg_convergence")?;
    let grid = Grid1D::new(gs.x_max, gs.n_points).map_err(cfg_err)?;
    let table = sg_convergence_study(
        &contact,
        us.law()?,
        grid,
        sc.m0,
        time.dt,
        time.t_end,
        &sc.m_list,
        sc.m_ref,
    )
    .map_err(num_err)?;
    let mut out = create_output(&cli.out_dir, "sg_convergence.csv", &loaded.hash)?;
    writeln!(out, "M,error").map_err(|e| num_err(e))?;
    for &(m, err) in &table {
        writeln!(out, "{m},{err:.10e}").map_err(|e| num_err(e))?;
        println!("M={m} error={err:.6e}");
    }
    if cli.assert {
        let decreasing = table.windows(2).all(|w| w[1].1 < w[0].1);
        if !decreasing {
            return Err(assert_err("sG error is not strictly decreasing in M"));
        }
    }
    Ok(())
}

fn macro_run_from_config(
    cfg: &ScenarioConfig,
    tau_override: Option<f64>,
) -> Result<crate::macroscopic::UncertainMacroRun<f64>, Failure> {
    let mut contact = *section(&cfg.contact, "contact")?;
    if let Some(tau) = tau_override {
        contact.tau = tau;
    }
    let contact = contact.build()?;
    let epi = section(&cfg.epi, "epi")?.build()?;
    let us = section(&cfg.uncertainty, "uncertainty")?;
    let time = section(&cfg.time, "time")?;
    let init = section(&cfg.initial, "initial")?;
    let control = control_of(cfg.control.as_ref())?;
    let initial = MacroState {
        rho: PerCompartment(init.rho0),
        m: PerCompartment::splat(init.m0),
        t: 0.0,
    };
    run_macro_uncertain(
        initial,
        &epi,
        &us.law()?,
        contact.lambda(),
        &control,
        init.m_i_clamp,
        time.dt,
        time.t_end,
    )
    .map_err(num_err)
}

fn cmd_macro(cli: &Cli, loaded: &LoadedConfig) -> Result<(), Failure> {
    let run = macro_run_from_config(&loaded.config, None)?;
    let times = run.times();
    let mut out = create_output(&cli.out_dir, "macro_stats.csv", &loaded.hash)?;
    writeln!(out, "t,J,stat,value").map_err(|e| num_err(e))?;
    for j in Compartment::ALL {
        let (mean_rho, var_rho) = run.rho_stats(j);
        let (mean_m, var_m) = run.m_stats(j);
        for (k, &t) in times.iter().enumerate() {
            write_stat_rows(&mut out, t, j, [mean_rho[k], var_rho[k], mean_m[k], var_m[k]])?;
        }
    }
    Ok(())
}

fn cmd_closure_check(cli: &Cli, loaded: &LoadedConfig) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let closure = section(&cfg.closure, "closure")?;
    if closure.tau_list.is_empty() {
        return Err(cfg_err("closure.tau_list is empty"));
    }
    let time = section(&cfg.time, "time")?;
    let epi = section(&cfg.epi, "epi")?.build()?;
    let mut rows = Vec::new();
    for &tau in &closure.tau_list {
        let mut contact = *section(&cfg.contact, "contact")?;
        contact.tau = tau;
        let contact = contact.build()?;
        let control = control_of(cfg.control.as_ref())?;
        let state = kinetic_initial(cfg, &contact)?;
        let scenario = KineticScenario {
            params: contact,
            epi,
            control,
            dt: time.dt,
            t_end: time.t_end,
            output_stride: time.output_stride.unwrap_or(1),
            scheme: flux_of(time)?,
        };
        let kin = run_kinetic(state, &scenario).map_err(num_err)?;
        let mac = macro_run_from_config(cfg, Some(tau))?;
        let mac_times = mac.times();
        let (mac_rho_i, _) = mac.rho_stats(Compartment::I);
        let mut sup = 0.0f64;
        for s in &kin.samples {
            // nearest macro sample (uniform dt grid)
            let k = ((s.t / time.dt).round() as usize).min(mac_times.len() - 1);
            let d = (s.mean_rho[Compartment::I] - mac_rho_i[k]).abs();
            sup = sup.max(d);
        }
        log(format!("tau={tau:e}: sup discrepancy {sup:.6e}"));
        rows.push((tau, sup));
    }
    let mut out = create_output(&cli.out_dir, "closure.csv", &loaded.hash)?;
    writeln!(out, "tau,discrepancy").map_err(|e| num_err(e))?;
    for &(tau, sup) in &rows {
        writeln!(out, "{tau:e},{sup:.10e}").map_err(|e| num_err(e))?;
        println!("tau={tau:e} discrepancy={sup:.6e}");
    }
    if cli.assert {
        let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
        if !decreasing {
            return Err(assert_err("discrepancy does not decrease along tau_list"));
        }
    }
    Ok(())
}

// ------------------------------------------------------------- calibrate ---

#[derive(Debug, Serialize, Deserialize)]
struct Provenance {
    config_hash: String,
    version: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct FitResultFile {
    provenance: Provenance,
    fit: FitResult<f64>,
}

fn parse_date(s: &str, what: &str) -> Result<NaiveDate, Failure> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| cfg_err(format!("bad {what} date {s:?}, expected YYYY-MM-DD")))
}

fn load_series(cal: &CalibrateSection) -> Result<EpiSeries<f64>, Failure> {
    match cal.format.as_str() {
        "simple" => {
            let path = cal.path.as_ref().ok_or_else(|| cfg_err("simple format needs path"))?;
            load_simple_csv(path, &cal.region, cal.population).map_err(cfg_err)
        }
        "jhu" => {
            let confirmed = cal
                .confirmed_path
                .as_ref()
                .ok_or_else(|| cfg_err("jhu format needs confirmed_path"))?;
            let recovered = cal
                .recovered_path
                .as_ref()
                .ok_or_else(|| cfg_err("jhu format needs recovered_path"))?;
            let kind = match cal.infected.as_deref() {
                None | Some("active") => InfectedKind::Active,
                Some("cumulative") => InfectedKind::Cumulative,
                Some(other) => return Err(cfg_err(format!("unknown infected kind {other:?}"))),
            };
            load_jhu_csv(confirmed, recovered, &cal.region, kind, cal.population)
                .map_err(cfg_err)
        }
        other => Err(cfg_err(format!("unknown data format {other:?}"))),
    }
}

fn pre_config(cal: &CalibrateSection) -> Result<PreFitConfig<f64>, Failure> {
    let mut pre = PreFitConfig::for_population(cal.population.unwrap_or(1.0));
    if cal.population.is_none() {
        // fraction-valued data: keep the default per-person seeding out
        pre.rho0 = PerCompartment([0.97, 0.01, 0.01, 0.01]);
    }
    if let Some(p) = cal.p {
        pre.p = p;
    }
    if let Some(theta) = cal.theta {
        pre.theta = theta;
    }
    if let Some([lo, hi]) = cal.beta_bounds {
        pre.beta_bounds = (lo, hi);
    }
    if let Some([lo, hi]) = cal.lambda_bounds {
        pre.lambda_bounds = (lo, hi);
    }
    if let Some(dt) = cal.dt_pre {
        pre.dt = dt;
    }
    pre.validate().map_err(cfg_err)?;
    Ok(pre)
}

fn target_config(cal: &CalibrateSection) -> Result<TargetFitConfig<f64>, Failure> {
    let mut tc = TargetFitConfig::default_with(cal.selective.unwrap_or(Selective::Uniform));
    if let Some(nu) = cal.nu {
        tc.nu = nu;
    }
    if let Some(x) = cal.x_t_max {
        tc.x_t_max = x;
    }
    if let Some(dt) = cal.dt_control {
        tc.dt = dt;
    }
    tc.validate().map_err(cfg_err)?;
    Ok(tc)
}

fn read_fit_result(out_dir: &Path) -> Result<FitResultFile, Failure> {
    let path = out_dir.join("fit_result.json");
    let text = fs::read_to_string(&path).map_err(|_| {
        cfg_err(format!(
            "{} not found: run `kec calibrate --stage pre` into the same --out-dir first",
            path.display()
        ))
    })?;
    serde_json::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))
}

fn read_targets(out_dir: &Path) -> Result<Vec<WindowFit<f64>>, Failure> {
    let path = out_dir.join("targets.csv");
    let text = fs::read_to_string(&path).map_err(|_| {
        cfg_err(format!(
            "{} not found: run `kec calibrate --stage targets` into the same --out-dir first",
            path.display()
        ))
    })?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("window_start") || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(cfg_err(format!("malformed targets row {line:?}")));
        }
        let window_start = parse_date(fields[0], "window_start")?;
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| cfg_err(format!("bad number {s:?} in targets.csv")))
        };
        out.push(WindowFit {
            window_start,
            x_t: parse(fields[1])?,
            misfit: 0.0,
            degenerate: false,
            cost: PerCompartment([parse(fields[3])?, parse(fields[4])?, 0.0, parse(fields[5])?]),
            cost_total: parse(fields[2])?,
        });
    }
    if out.is_empty() {
        return Err(cfg_err("targets.csv holds no windows"));
    }
    Ok(out)
}

fn cmd_calibrate(cli: &Cli, loaded: &LoadedConfig, stage: Stage) -> Result<(), Failure> {
    let cal = section(&loaded.config.calibrate, "calibrate")?;
    let t0 = parse_date(&cal.t0, "t0")?;
    let t_lockdown = parse_date(&cal.lockdown, "lockdown")?;
    let t_f = parse_date(&cal.t_f, "t_f")?;
    let pre = pre_config(cal)?;
    match stage {
        Stage::Pre => {
            let series = load_series(cal)?;
            let fit = fit_unconstrained(&series, t0, t_lockdown, &pre).map_err(num_err)?;
            if !fit.converged {
                log(format!("optimizer not converged, best objective {}", fit.objective));
            }
            let file = FitResultFile {
                provenance: Provenance {
                    config_hash: loaded.hash.clone(),
                    version: env!("CARGO_PKG_VERSION").into(),
                },
                fit,
            };
            fs::create_dir_all(&cli.out_dir).map_err(|e| num_err(e))?;
            let path = cli.out_dir.join("fit_result.json");
            let json = serde_json::to_string_pretty(&file).map_err(|e| num_err(e))?;
            fs::write(&path, json + "\n").map_err(|e| num_err(e))?;
            println!(
                "beta_hat {:.6e} lambda_hat {:.6} objective {:.6e}",
                file.fit.beta_hat, file.fit.lambda_hat, file.fit.objective
            );
            if cli.assert && !file.fit.converged {
                return Err(assert_err("pre-lockdown fit did not converge"));
            }
            Ok(())
        }
        Stage::Targets => {
            let series = load_series(cal)?;
            let prior = read_fit_result(&cli.out_dir)?;
            let tc = target_config(cal)?;
            let fits = fit_targets(
                &series,
                t0,
                t_lockdown,
                t_f,
                prior.fit.beta_hat,
                prior.fit.lambda_hat,
                &pre,
                &tc,
            )
            .map_err(num_err)?;
            let mut out = create_output(&cli.out_dir, "targets.csv", &loaded.hash)?;
            writeln!(out, "window_start,x_T,cost_total,cost_S,cost_E,cost_R")
                .map_err(|e| num_err(e))?;
            use Compartment::{E, R as Rc, S};
            for w in &fits {
                writeln!(
                    out,
                    "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                    w.window_start, w.x_t, w.cost_total, w.cost[S], w.cost[E], w.cost[Rc]
                )
                .map_err(|e| num_err(e))?;
                println!("window {} x_T {:.4} cost {:.4e}", w.window_start, w.x_t, w.cost_total);
            }
            if cli.assert && fits.iter().any(|w| w.degenerate) {
                return Err(assert_err("degenerate target window (control impotent)"));
            }
            Ok(())
        }
        Stage::Retro => {
            let prior = read_fit_result(&cli.out_dir)?;
            let targets = read_targets(&cli.out_dir)?;
            let tc = target_config(cal)?;
            let retro = retrospective_swap(
                &targets,
                t0,
                t_lockdown,
                prior.fit.beta_hat,
                prior.fit.lambda_hat,
                &pre,
                &tc,
                &[0.0, 0.5, 1.0],
            )
            .map_err(num_err)?;
            let mut out = create_output(&cli.out_dir, "retro.csv", &loaded.hash)?;
            writeln!(out, "p,peak_rho_I").map_err(|e| num_err(e))?;
            for tr in &retro {
                writeln!(out, "{},{:.10e}", tr.p, tr.peak).map_err(|e| num_err(e))?;
                println!("p {} peak {:.6e}", tr.p, tr.peak);
            }
            let mut traj = create_output(&cli.out_dir, "retro_trajectories.csv", &loaded.hash)?;
            writeln!(traj, "p,day,rho_I").map_err(|e| num_err(e))?;
            for tr in &retro {
                for (day, v) in tr.rho_i.iter().enumerate() {
                    writeln!(traj, "{},{},{v:.10e}", tr.p, day + 1).map_err(|e| num_err(e))?;
                }
            }
            Ok(())
        }
    }
}

// ------------------------------------------------------------ entrypoint ---

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if cli.jobs == 0 {
        return Err(cfg_err("--jobs must be at least 1"));
    }
    let loaded = load_config(cli)?;
    match &cli.command {
        Command::Equilibrium => cmd_equilibrium(cli, &loaded),
        Command::Kinetic => cmd_kinetic(cli, &loaded),
        Command::SgConvergence => cmd_sg_convergence(cli, &loaded),
        Command::Macro => cmd_macro(cli, &loaded),
        Command::ClosureCheck => cmd_closure_check(cli, &loaded),
        Command::Calibrate { stage } => cmd_calibrate(cli, &loaded, *stage),
    }
}

/// Run a parsed invocation, returning the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

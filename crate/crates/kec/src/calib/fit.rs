//! Two-stage least-squares calibration against reported case data:
//! pre-lockdown (β, λ) estimation on the uncontrolled closed system, then
//! weekly lockdown-target estimation x_T(tⁿ) on the controlled one, plus the
//! retrospective selectivity swap.

use chrono::NaiveDate;
use serde::Serialize;

use crate::calib::data::EpiSeries;
use crate::calib::optimize::{minimize_scalar, nelder_mead, MinResult};
use crate::compartment::{Compartment, PerCompartment};
use crate::contact::{controlled_equilibrium_density, lambda_factor, ContactParams, DeltaValue};
use crate::control::{restriction_cost, ControlKernel, ControlSpec, Selective};
use crate::error::{KecError, Result};
use crate::grid::Grid1D;
use crate::macroscopic::{rk4_integrate, MacroState};
use crate::real::{r, Real};
use crate::sgkinetic::EpiParams;

use Compartment::{I, R as Rc};

/// Fixed epidemiological and initial-condition choices of the pre-lockdown
/// stage; the defaults are the calibration constants (ζ = 1/3.32, γ = 1/10,
/// m_I ≡ 3, m(0) = 10).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreFitConfig<R> {
    pub zeta: R,
    pub gamma: R,
    pub m_i_clamp: R,
    pub m0: R,
    pub rho0: PerCompartment<R>,
    /// recovered-misfit weight θ
    pub theta: R,
    /// Bernoulli weight of the δ = −1 atom
    pub p: R,
    /// integration step in days; must divide one day evenly
    pub dt: R,
    pub beta_bounds: (R, R),
    pub lambda_bounds: (R, R),
}

impl<R: Real> PreFitConfig<R> {
    /// Paper constants with one person in each of E, I, R at t0.
    pub fn for_population(population: R) -> Self {
        let one_person = R::one() / population;
        PreFitConfig {
            zeta: R::one() / r(3.32),
            gamma: r(0.1),
            m_i_clamp: r(3.0),
            m0: r(10.0),
            rho0: PerCompartment([
                R::one() - r::<R>(3.0) * one_person,
                one_person,
                one_person,
                one_person,
            ]),
            theta: r(1e-3),
            p: r(0.5),
            dt: r(0.05),
            beta_bounds: (R::zero(), r(0.01)),
            // the open bound λ > 3 enforced with a small shift
            lambda_bounds: (r(3.0 + 1e-9), r(10.0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("zeta", self.zeta),
            ("gamma", self.gamma),
            ("m_i_clamp", self.m_i_clamp),
            ("m0", self.m0),
            ("dt", self.dt),
        ] {
            if !(v > R::zero()) || !v.is_finite() {
                return Err(KecError::InvalidParameter(format!(
                    "{name} = {v} must be positive and finite"
                )));
            }
        }
        if !(self.theta >= R::zero() && self.theta <= R::one()) {
            return Err(KecError::InvalidParameter(format!(
                "theta = {} must lie in [0, 1]",
                self.theta
            )));
        }
        if !(self.p >= R::zero() && self.p <= R::one()) {
            return Err(KecError::InvalidParameter(format!(
                "p = {} must lie in [0, 1]",
                self.p
            )));
        }
        Ok(())
    }
}

/// Result of the pre-lockdown (β, λ) fit.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct FitResult<R> {
    pub region: String,
    pub beta_hat: R,
    pub lambda_hat: R,
    pub objective: R,
    pub converged: bool,
    pub trace: Vec<R>,
    pub beta_bounds: (R, R),
    pub lambda_bounds: (R, R),
    pub theta: R,
    pub p: R,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
}

/// ‖a − b‖₂ / ‖b‖₂ with `b` the data vector.
pub fn relative_l2<R: Real>(a: &[R], b: &[R]) -> Result<R> {
    if a.len() != b.len() {
        return Err(KecError::LengthMismatch { expected: b.len(), got: a.len() });
    }
    let mut num = R::zero();
    let mut den = R::zero();
    for (&ai, &bi) in a.iter().zip(b) {
        num = num + (ai - bi) * (ai - bi);
        den = den + bi * bi;
    }
    Ok(num.sqrt() / den.sqrt().max(r(1e-300)))
}

/// The Bernoulli atoms (δ, weight, closure factor Λ); zero-weight atoms are
/// dropped so degenerate p works without instantiating the other closure.
struct Atoms<R> {
    deltas: Vec<R>,
    weights: Vec<R>,
    lams: Vec<R>,
}

fn bernoulli_atoms<R: Real>(p: R, lambda: R) -> Result<Atoms<R>> {
    let mut atoms = Atoms { deltas: Vec::new(), weights: Vec::new(), lams: Vec::new() };
    for (delta, w) in [(-R::one(), p), (R::one(), R::one() - p)] {
        if w > R::zero() {
            atoms.deltas.push(delta);
            atoms.weights.push(w);
            atoms.lams.push(lambda_factor(DeltaValue::new(delta)?, lambda)?);
        }
    }
    Ok(atoms)
}

/// Index of day `k` in a trajectory stepped with `dt`.
fn day_index<R: Real>(day: usize, dt: R, len: usize) -> Result<usize> {
    let idx = (r::<R>(day as f64) / dt).round().to_f64().unwrap_or(f64::NAN);
    if !idx.is_finite() || idx < 0.0 {
        return Err(KecError::NanDetected(idx));
    }
    let idx = idx as usize;
    if idx >= len {
        return Err(KecError::Data(format!(
            "day {day} beyond the integrated trajectory ({len} samples)"
        )));
    }
    Ok(idx)
}

/// E_z[ρ_I] and E_z[ρ_R] at the daily marks of a per-atom trajectory set.
fn daily_means<R: Real>(
    trajectories: &[Vec<MacroState<R>>],
    weights: &[R],
    dt: R,
    n_days: usize,
) -> Result<(Vec<R>, Vec<R>)> {
    let mut rho_i = vec![R::zero(); n_days];
    let mut rho_r = vec![R::zero(); n_days];
    for (traj, &w) in trajectories.iter().zip(weights) {
        for day in 0..n_days {
            let k = day_index(day, dt, traj.len())?;
            rho_i[day] = rho_i[day] + w * traj[k].rho[I];
            rho_r[day] = rho_r[day] + w * traj[k].rho[Rc];
        }
    }
    Ok((rho_i, rho_r))
}

/// The two misfit components (infected, recovered) of the uncontrolled
/// closed system against a data window, both in relative L2.
pub fn pre_misfit<R: Real>(
    window: &EpiSeries<R>,
    beta: R,
    lambda: R,
    config: &PreFitConfig<R>,
) -> Result<(R, R)> {
    let n_days = window.len();
    let epi = EpiParams { beta, zeta: config.zeta, gamma: config.gamma };
    let atoms = bernoulli_atoms(config.p, lambda)?;
    let initial = MacroState {
        rho: config.rho0,
        m: PerCompartment::splat(config.m0),
        t: R::zero(),
    };
    let t_end = r::<R>((n_days - 1) as f64);
    let mut trajectories = Vec::new();
    for &lam in &atoms.lams {
        trajectories.push(rk4_integrate(
            initial,
            &epi,
            lam,
            &ControlSpec::off(),
            Some(config.m_i_clamp),
            config.dt,
            t_end,
        )?);
    }
    let (rho_i, rho_r) = daily_means(&trajectories, &atoms.weights, config.dt, n_days)?;
    Ok((
        relative_l2(&rho_i, &window.infected)?,
        relative_l2(&rho_r, &window.recovered)?,
    ))
}

/// Pre-lockdown objective (1 − θ)·‖ρ_I − ρ̂_I‖ + θ·‖ρ_R − ρ̂_R‖.
pub fn pre_objective<R: Real>(
    window: &EpiSeries<R>,
    beta: R,
    lambda: R,
    config: &PreFitConfig<R>,
) -> Result<R> {
    let (err_i, err_r) = pre_misfit(window, beta, lambda, config)?;
    Ok((R::one() - config.theta) * err_i + config.theta * err_r)
}

/// Stage one: fit (β, λ) on the window [t0, t_lockdown] of the series.
pub fn fit_unconstrained<R: Real>(
    series: &EpiSeries<R>,
    t0: NaiveDate,
    t_lockdown: NaiveDate,
    config: &PreFitConfig<R>,
) -> Result<FitResult<R>> {
    config.validate()?;
    series.validate()?;
    let window = series.window(t0, t_lockdown)?;
    if window.len() < 2 {
        return Err(KecError::Data(format!(
            "fit window {t0}..={t_lockdown} needs at least two days"
        )));
    }
    let lo = [config.beta_bounds.0, config.lambda_bounds.0];
    let hi = [config.beta_bounds.1, config.lambda_bounds.1];
    let MinResult { x, value, converged, trace } = nelder_mead(
        |q: &[R]| pre_objective(&window, q[0], q[1], config),
        &lo,
        &hi,
        3,
        400,
    )?;
    Ok(FitResult {
        region: series.region.clone(),
        beta_hat: x[0],
        lambda_hat: x[1],
        objective: value,
        converged,
        trace,
        beta_bounds: config.beta_bounds,
        lambda_bounds: config.lambda_bounds,
        theta: config.theta,
        p: config.p,
        window_start: t0,
        window_end: t_lockdown,
    })
}

/// Settings of the weekly lockdown-target stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetFitConfig<R> {
    pub selective: Selective,
    /// control penalization ν during the fit
    pub nu: R,
    /// contact-model σ² used for the cost equilibria (μ = λ̂·σ²)
    pub sigma2: R,
    pub tau: R,
    pub epsilon: R,
    /// window reach: k_l days back, k_r days forward of the weekly mark
    pub k_l: usize,
    pub k_r: usize,
    /// upper bound of x_T ∈ (0, x_t_max]
    pub x_t_max: R,
    /// integration step of the controlled phase; must resolve the control
    /// stiffness ~S²(m)·m/ν per day
    pub dt: R,
    /// warm start of the first window
    pub warm0: Option<R>,
    /// grid of the cost equilibria
    pub cost_x_max: R,
    pub cost_n_points: usize,
}

impl<R: Real> TargetFitConfig<R> {
    pub fn default_with(selective: Selective) -> Self {
        TargetFitConfig {
            selective,
            nu: r(1e-2),
            sigma2: r(0.1),
            tau: R::one(),
            epsilon: r(0.01),
            k_l: 3,
            k_r: 4,
            x_t_max: r(20.0),
            dt: r(2e-3),
            warm0: None,
            cost_x_max: r(100.0),
            cost_n_points: 2001,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.selective == Selective::Off {
            return Err(KecError::InvalidParameter(
                "target fitting needs an active selectivity function".into(),
            ));
        }
        if self.k_l + self.k_r == 0 {
            return Err(KecError::InvalidParameter("empty target window".into()));
        }
        if !(self.nu > R::zero()) || !(self.x_t_max > R::zero()) {
            return Err(KecError::InvalidParameter(format!(
                "nu = {} and x_t_max = {} must be positive",
                self.nu, self.x_t_max
            )));
        }
        Ok(())
    }
}

/// One fitted weekly window.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowFit<R> {
    pub window_start: NaiveDate,
    pub x_t: R,
    pub misfit: R,
    /// the misfit was flat in x_T over the scan grid (e.g. impotent control)
    pub degenerate: bool,
    pub cost: PerCompartment<R>,
    /// J_S + J_E + J_R (infectious compartment excluded)
    pub cost_total: R,
}

fn control_spec<R: Real>(config: &TargetFitConfig<R>, x_t: R) -> ControlSpec<R> {
    ControlSpec {
        selective: config.selective,
        x_t: PerCompartment::splat(x_t),
        nu: config.nu,
        bbar: ControlKernel::Maxwellian,
    }
}

/// Per-atom states of the closed system at the lockdown date, produced by
/// integrating the uncontrolled pre period [t0, t_lockdown].
pub fn states_at_lockdown<R: Real>(
    t0: NaiveDate,
    t_lockdown: NaiveDate,
    beta: R,
    lambda: R,
    config: &PreFitConfig<R>,
) -> Result<Vec<MacroState<R>>> {
    let span = (t_lockdown - t0).num_days();
    if span < 0 {
        return Err(KecError::Data(format!("lockdown {t_lockdown} before start {t0}")));
    }
    let epi = EpiParams { beta, zeta: config.zeta, gamma: config.gamma };
    let atoms = bernoulli_atoms(config.p, lambda)?;
    let initial = MacroState {
        rho: config.rho0,
        m: PerCompartment::splat(config.m0),
        t: R::zero(),
    };
    let mut out = Vec::new();
    for &lam in &atoms.lams {
        if span == 0 {
            let mut s = initial;
            s.m[I] = config.m_i_clamp;
            out.push(s);
        } else {
            let traj = rk4_integrate(
                initial,
                &epi,
                lam,
                &ControlSpec::off(),
                Some(config.m_i_clamp),
                config.dt,
                r(span as f64),
            )?;
            out.push(*traj.last().unwrap());
        }
    }
    Ok(out)
}

fn advance_atoms<R: Real>(
    states: &[MacroState<R>],
    atoms: &Atoms<R>,
    epi: &EpiParams<R>,
    control: &ControlSpec<R>,
    m_i_clamp: R,
    dt: R,
    days: usize,
) -> Result<Vec<Vec<MacroState<R>>>> {
    let mut out = Vec::new();
    for (s, &lam) in states.iter().zip(&atoms.lams) {
        let mut start = *s;
        start.t = R::zero();
        out.push(rk4_integrate(start, epi, lam, control, Some(m_i_clamp), dt, r(days as f64))?);
    }
    Ok(out)
}

/// Stage two: weekly moving-window estimation of the lockdown target
/// x_T(tⁿ) on [t_lockdown + 1, t_f], warm-started window to window, with the
/// per-window restriction cost on the controlled equilibria.
pub fn fit_targets<R: Real>(
    series: &EpiSeries<R>,
    t0: NaiveDate,
    t_lockdown: NaiveDate,
    t_f: NaiveDate,
    beta: R,
    lambda: R,
    pre: &PreFitConfig<R>,
    config: &TargetFitConfig<R>,
) -> Result<Vec<WindowFit<R>>> {
    pre.validate()?;
    config.validate()?;
    series.validate()?;
    let week = config.k_l + config.k_r;
    let epi = EpiParams { beta, zeta: pre.zeta, gamma: pre.gamma };
    let atoms = bernoulli_atoms(pre.p, lambda)?;
    let mut states = states_at_lockdown(t0, t_lockdown, beta, lambda, pre)?;
    let cost_grid = Grid1D::new(config.cost_x_max, config.cost_n_points)?;
    let contact = ContactParams::new(
        lambda * config.sigma2,
        config.sigma2,
        config.tau,
        config.epsilon,
    )?;
    let mut results = Vec::new();
    let mut warm = config.warm0;
    let mut window_start = t_lockdown + chrono::Duration::days(1);
    // only full windows are fitted
    while window_start + chrono::Duration::days(week as i64 - 1) <= t_f {
        let window_end = window_start + chrono::Duration::days(week as i64 - 1);
        let data = series.window(window_start, window_end)?;
        let x_lo = r::<R>(1e-6) * config.x_t_max;
        // states sit one day before window_start; integrate the full week and
        // compare the marks 1..=week against the data
        let scan = minimize_scalar(
            |x_t: R| {
                let trajs = advance_atoms(
                    &states,
                    &atoms,
                    &epi,
                    &control_spec(config, x_t),
                    pre.m_i_clamp,
                    config.dt,
                    week,
                )?;
                let (rho_i, rho_r) = daily_means(&trajs, &atoms.weights, config.dt, week + 1)?;
                let err_i = relative_l2(&rho_i[1..], &data.infected)?;
                let err_r = relative_l2(&rho_r[1..], &data.recovered)?;
                Ok((R::one() - pre.theta) * err_i + pre.theta * err_r)
            },
            x_lo,
            config.x_t_max,
            warm,
            r(1e-6),
        )?;
        let spec = control_spec(config, scan.x);
        let trajs = advance_atoms(&states, &atoms, &epi, &spec, pre.m_i_clamp, config.dt, week)?;
        // restriction cost on the controlled equilibria at the window-end means
        let mut cost = PerCompartment::splat(R::zero());
        let mut cost_total = R::zero();
        for ((traj, &w), &delta) in trajs.iter().zip(&atoms.weights).zip(&atoms.deltas) {
            let end = traj.last().unwrap();
            let mut densities = Vec::with_capacity(4);
            for j in Compartment::ALL {
                let ctrl = spec.for_compartment(j).expect("control is active");
                densities.push(controlled_equilibrium_density(
                    &contact,
                    DeltaValue::new(delta)?,
                    end.m[j],
                    &ctrl,
                    &cost_grid,
                )?);
            }
            let refs = PerCompartment([&densities[0], &densities[1], &densities[2], &densities[3]]);
            let (per, total) = restriction_cost(&refs, &spec, false);
            for j in Compartment::ALL {
                cost[j] = cost[j] + w * per[j];
            }
            cost_total = cost_total + w * total;
        }
        results.push(WindowFit {
            window_start,
            x_t: scan.x,
            misfit: scan.value,
            degenerate: scan.degenerate,
            cost,
            cost_total,
        });
        states = trajs.iter().map(|tr| *tr.last().unwrap()).collect();
        warm = Some(scan.x);
        window_start = window_end + chrono::Duration::days(1);
    }
    if results.is_empty() {
        return Err(KecError::Data(format!(
            "no full {week}-day window fits in {}..={t_f}",
            t_lockdown + chrono::Duration::days(1)
        )));
    }
    Ok(results)
}

/// One retrospective trajectory: E_z[ρ_I] per day of the lockdown phase.
#[derive(Debug, Clone, Serialize)]
pub struct RetroTrajectory<R> {
    pub p: R,
    pub rho_i: Vec<R>,
    pub peak: R,
}

/// Re-integrate the lockdown phase with a (possibly different) selectivity
/// and the already-fitted weekly targets, for each p in `p_values`.
#[allow(clippy::too_many_arguments)]
pub fn retrospective_swap<R: Real>(
    targets: &[WindowFit<R>],
    t0: NaiveDate,
    t_lockdown: NaiveDate,
    beta: R,
    lambda: R,
    pre: &PreFitConfig<R>,
    config: &TargetFitConfig<R>,
    p_values: &[R],
) -> Result<Vec<RetroTrajectory<R>>> {
    pre.validate()?;
    config.validate()?;
    if targets.is_empty() {
        return Err(KecError::Data("no fitted targets to replay".into()));
    }
    let week = config.k_l + config.k_r;
    let epi = EpiParams { beta, zeta: pre.zeta, gamma: pre.gamma };
    let mut out = Vec::new();
    for &p in p_values {
        let mut cfg = *pre;
        cfg.p = p;
        let atoms = bernoulli_atoms(p, lambda)?;
        let mut states = states_at_lockdown(t0, t_lockdown, beta, lambda, &cfg)?;
        let mut rho_i = Vec::new();
        for wfit in targets {
            let spec = control_spec(config, wfit.x_t);
            let trajs =
                advance_atoms(&states, &atoms, &epi, &spec, pre.m_i_clamp, config.dt, week)?;
            let (daily, _) = daily_means(&trajs, &atoms.weights, config.dt, week + 1)?;
            // mark 0 repeats the previous window's end; keep days 1..=week
            rho_i.extend_from_slice(&daily[1..]);
            states = trajs.iter().map(|tr| *tr.last().unwrap()).collect();
        }
        let peak = rho_i.iter().copied().fold(R::zero(), R::max);
        out.push(RetroTrajectory { p, rho_i, peak });
    }
    Ok(out)
}

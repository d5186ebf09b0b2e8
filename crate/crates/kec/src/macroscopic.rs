//! Closed macroscopic SEIR system for the mass fractions and mean contact
//! numbers, integrated with classical RK4, plus the exact two-atom Bernoulli
//! mixture statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::compartment::{Compartment, PerCompartment};
use crate::contact::lambda_factor;
use crate::contact::DeltaValue;
use crate::control::{macro_control_g, ControlSpec};
use crate::error::{KecError, Result};
use crate::real::{r, Real};
use crate::sgkinetic::EpiParams;
use crate::uq::{LawKind, UncertaintyLaw};

use Compartment::{E, I, R as Rc, S};

/// Below this mass fraction the mean equation of a compartment is frozen.
pub const MACRO_MASS_FLOOR: f64 = 1e-12;

/// Mass fractions and mean contact numbers of the four compartments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroState<R> {
    pub rho: PerCompartment<R>,
    pub m: PerCompartment<R>,
    pub t: R,
}

impl<R: Real> MacroState<R> {
    pub fn mass_sum(&self) -> R {
        self.rho.iter().map(|(_, v)| v).sum()
    }
}

/// Right-hand side of the closed system for one δ-atom (closure factor Λ).
///
/// `clamp_m_i` freezes the infectious mean at a constant (calibration mode).
pub fn macro_rhs<R: Real>(
    state: &MacroState<R>,
    epi: &EpiParams<R>,
    lam: R,
    control: &ControlSpec<R>,
    clamp_m_i: Option<R>,
) -> (PerCompartment<R>, PerCompartment<R>) {
    let floor: R = r(MACRO_MASS_FLOOR);
    let rho = &state.rho;
    let m = &state.m;
    let incidence = epi.beta * m[S] * rho[S] * m[I] * rho[I];

    let mut drho = PerCompartment::splat(R::zero());
    drho[S] = -incidence;
    drho[E] = incidence - epi.zeta * rho[E];
    drho[I] = epi.zeta * rho[E] - epi.gamma * rho[I];
    drho[Rc] = epi.gamma * rho[I];

    let g = |j: Compartment| {
        macro_control_g(control.for_compartment(j).as_ref(), m[j], lam)
    };

    let mut dm = PerCompartment::splat(R::zero());
    dm[S] = -epi.beta * (lam - R::one()) * m[S] * m[S] * m[I] * rho[I] + g(S);
    dm[E] = if rho[E] > floor {
        incidence / rho[E] * (lam * m[S] - m[E]) + g(E)
    } else {
        R::zero()
    };
    dm[I] = if clamp_m_i.is_some() {
        R::zero()
    } else if rho[I] > floor {
        epi.zeta * rho[E] / rho[I] * (m[E] - m[I]) + g(I)
    } else {
        R::zero()
    };
    dm[Rc] = if rho[Rc] > floor {
        epi.gamma * rho[I] / rho[Rc] * (m[I] - m[Rc]) + g(Rc)
    } else {
        R::zero()
    };
    (drho, dm)
}

fn axpy<R: Real>(y: &PerCompartment<R>, a: R, x: &PerCompartment<R>) -> PerCompartment<R> {
    let mut out = *y;
    for j in Compartment::ALL {
        out[j] = out[j] + a * x[j];
    }
    out
}

/// Classical fourth-order Runge-Kutta integration up to `t_end`.
/// The returned trajectory includes the initial state; the final step is
/// shortened to land exactly on `t_end`.
pub fn rk4_integrate<R: Real>(
    initial: MacroState<R>,
    epi: &EpiParams<R>,
    lam: R,
    control: &ControlSpec<R>,
    clamp_m_i: Option<R>,
    dt: R,
    t_end: R,
) -> Result<Vec<MacroState<R>>> {
    if dt <= R::zero() {
        return Err(KecError::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    epi.validate()?;
    control.validate()?;
    let mut state = initial;
    if let Some(c) = clamp_m_i {
        state.m[I] = c;
    }
    let mut out = vec![state];
    let sixth: R = r(1.0 / 6.0);
    let half: R = r(0.5);
    let two: R = r(2.0);
    while state.t < t_end - dt * r(1e-9) {
        let h = if state.t + dt > t_end { t_end - state.t } else { dt };
        let (k1r, k1m) = macro_rhs(&state, epi, lam, control, clamp_m_i);
        let mid1 = MacroState {
            rho: axpy(&state.rho, half * h, &k1r),
            m: axpy(&state.m, half * h, &k1m),
            t: state.t + half * h,
        };
        let (k2r, k2m) = macro_rhs(&mid1, epi, lam, control, clamp_m_i);
        let mid2 = MacroState {
            rho: axpy(&state.rho, half * h, &k2r),
            m: axpy(&state.m, half * h, &k2m),
            t: state.t + half * h,
        };
        let (k3r, k3m) = macro_rhs(&mid2, epi, lam, control, clamp_m_i);
        let end = MacroState {
            rho: axpy(&state.rho, h, &k3r),
            m: axpy(&state.m, h, &k3m),
            t: state.t + h,
        };
        let (k4r, k4m) = macro_rhs(&end, epi, lam, control, clamp_m_i);
        for j in Compartment::ALL {
            state.rho[j] = state.rho[j]
                + sixth * h * (k1r[j] + two * k2r[j] + two * k3r[j] + k4r[j]);
            state.m[j] =
                state.m[j] + sixth * h * (k1m[j] + two * k2m[j] + two * k3m[j] + k4m[j]);
        }
        state.t = state.t + h;
        let finite = Compartment::ALL
            .iter()
            .all(|&j| state.rho[j].is_finite() && state.m[j].is_finite());
        if !finite {
            return Err(KecError::NanDetected(state.t.to_f64().unwrap_or(f64::NAN)));
        }
        out.push(state);
    }
    Ok(out)
}

/// Trajectories of the two Bernoulli δ-atoms with their weights.
#[derive(Debug, Clone)]
pub struct UncertainMacroRun<R> {
    /// δ value of each atom
    pub deltas: Vec<R>,
    /// probability weight of each atom
    pub weights: Vec<R>,
    pub trajectories: Vec<Vec<MacroState<R>>>,
}

impl<R: Real> UncertainMacroRun<R> {
    pub fn times(&self) -> Vec<R> {
        self.trajectories[0].iter().map(|s| s.t).collect()
    }

    fn stats(&self, extract: impl Fn(&MacroState<R>) -> R) -> (Vec<R>, Vec<R>) {
        let n = self.trajectories[0].len();
        let mut mean = vec![R::zero(); n];
        let mut var = vec![R::zero(); n];
        for (traj, &w) in self.trajectories.iter().zip(&self.weights) {
            for (k, s) in traj.iter().enumerate() {
                mean[k] = mean[k] + w * extract(s);
            }
        }
        for (traj, &w) in self.trajectories.iter().zip(&self.weights) {
            for (k, s) in traj.iter().enumerate() {
                let d = extract(s) - mean[k];
                var[k] = var[k] + w * d * d;
            }
        }
        (mean, var)
    }

    /// (E_z, Var_z) of ρ_J over time.
    pub fn rho_stats(&self, j: Compartment) -> (Vec<R>, Vec<R>) {
        self.stats(|s| s.rho[j])
    }

    /// (E_z, Var_z) of m_J over time.
    pub fn m_stats(&self, j: Compartment) -> (Vec<R>, Vec<R>) {
        self.stats(|s| s.m[j])
    }
}

/// Integrate the closed system for a Bernoulli law: the two deterministic
/// atom trajectories (δ = −1 with weight p, δ = +1 with weight 1−p) combined
/// exactly. `contact_lambda` is λ = μ/σ² of the contact model.
#[allow(clippy::too_many_arguments)]
pub fn run_macro_uncertain<R: Real>(
    initial: MacroState<R>,
    epi: &EpiParams<R>,
    law: &UncertaintyLaw<R>,
    contact_lambda: R,
    control: &ControlSpec<R>,
    clamp_m_i: Option<R>,
    dt: R,
    t_end: R,
) -> Result<UncertainMacroRun<R>> {
    let LawKind::Bernoulli { p } = law.kind else {
        return Err(KecError::InvalidParameter(
            "the macroscopic closure is defined per Bernoulli atom only".into(),
        ));
    };
    law.validate()?;
    let mut deltas = Vec::new();
    let mut weights = Vec::new();
    // z = 1 carries weight p and maps to δ = -1 under the affine flip
    for (z, w) in [(R::one(), p), (R::zero(), R::one() - p)] {
        if w > R::zero() {
            deltas.push(law.delta_map.apply(z));
            weights.push(w);
        }
    }
    let mut trajectories = Vec::new();
    for &d in &deltas {
        let lam = lambda_factor(DeltaValue::new(d)?, contact_lambda)?;
        trajectories.push(rk4_integrate(initial, epi, lam, control, clamp_m_i, dt, t_end)?);
    }
    Ok(UncertainMacroRun { deltas, weights, trajectories })
}

/// Write one trajectory as CSV with the fixed column order
/// t,rho_S,rho_E,rho_I,rho_R,m_S,m_E,m_I,m_R.
pub fn write_trajectory_csv<R: Real, W: Write>(
    sink: &mut W,
    states: &[MacroState<R>],
) -> Result<()> {
    writeln!(sink, "t,rho_S,rho_E,rho_I,rho_R,m_S,m_E,m_I,m_R")?;
    for s in states {
        write!(sink, "{:.6}", s.t)?;
        for j in Compartment::ALL {
            write!(sink, ",{:.10e}", s.rho[j])?;
        }
        for j in Compartment::ALL {
            write!(sink, ",{:.10e}", s.m[j])?;
        }
        writeln!(sink)?;
    }
    Ok(())
}

//! Selective control of contact formation: the instantaneous optimal control,
//! its binary-interaction update, the macroscopic closures and the evaluation
//! functionals (damping index, restriction cost).

use serde::{Deserialize, Serialize};

use crate::compartment::{Compartment, PerCompartment};
use crate::error::{KecError, Result};
use crate::grid::{trapezoid, DensityField};
use crate::real::{r, Real};

/// Selectivity function S(x) applied to the control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selective {
    Off,
    /// S ≡ 1
    Uniform,
    /// S = √x
    SqrtX,
}

impl Selective {
    #[inline]
    pub fn s_at<R: Real>(self, x: R) -> R {
        match self {
            Selective::Off => R::zero(),
            Selective::Uniform => R::one(),
            Selective::SqrtX => x.sqrt(),
        }
    }

    #[inline]
    pub fn s2_at<R: Real>(self, x: R) -> R {
        match self {
            Selective::Off => R::zero(),
            Selective::Uniform => R::one(),
            Selective::SqrtX => x,
        }
    }
}

/// Control kernel B̄.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKernel {
    /// B̄ ≡ 1
    Maxwellian,
}

impl ControlKernel {
    #[inline]
    pub fn eval<R: Real>(self, _x: R) -> R {
        match self {
            ControlKernel::Maxwellian => R::one(),
        }
    }
}

/// Control law configuration shared by the kinetic and macroscopic solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec<R> {
    pub selective: Selective,
    /// target contacts per compartment
    pub x_t: PerCompartment<R>,
    /// scaled penalization ν (κ = ν·τ)
    pub nu: R,
    pub bbar: ControlKernel,
}

impl<R: Real> ControlSpec<R> {
    pub fn off() -> Self {
        ControlSpec {
            selective: Selective::Off,
            x_t: PerCompartment::splat(R::one()),
            nu: R::one(),
            bbar: ControlKernel::Maxwellian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.selective != Selective::Off {
            if self.nu <= R::zero() {
                return Err(KecError::InvalidParameter(format!(
                    "penalization nu = {} must be positive",
                    self.nu
                )));
            }
            for (j, xt) in self.x_t.iter() {
                if xt <= R::zero() {
                    return Err(KecError::InvalidParameter(format!(
                        "target x_T[{}] = {xt} must be positive",
                        j.label()
                    )));
                }
            }
        }
        Ok(())
    }

    /// The single-compartment view used by the Fokker-Planck drift;
    /// `None` when the control is switched off.
    pub fn for_compartment(&self, j: Compartment) -> Option<CompartmentControl<R>> {
        if self.selective == Selective::Off {
            return None;
        }
        Some(CompartmentControl {
            selective: self.selective,
            x_t: self.x_t[j],
            nu: self.nu,
            bbar: self.bbar,
        })
    }
}

/// Control parameters for one compartment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompartmentControl<R> {
    pub selective: Selective,
    pub x_t: R,
    pub nu: R,
    pub bbar: ControlKernel,
}

/// Instantaneous optimal control
/// u* = −(√(ετ)·S(x) / (κ + ετ·S²(x)))·(x − x_T).
pub fn optimal_control<R: Real>(
    x: R,
    x_t: R,
    kappa: R,
    eps_tau: R,
    s_at_x: R,
) -> Result<R> {
    if kappa <= R::zero() {
        return Err(KecError::InvalidParameter(format!(
            "penalization kappa = {kappa} must be positive"
        )));
    }
    let num = (eps_tau).sqrt() * s_at_x;
    let den = kappa + eps_tau * s_at_x * s_at_x;
    Ok(-(num / den) * (x - x_t))
}

/// Post-interaction value under the optimal control:
/// x'' = x − (ετ·S²(x)/(κ + ετ·S²(x)))·(x − x_T), a convex combination
/// of x and x_T.
pub fn controlled_update<R: Real>(
    x: R,
    x_t: R,
    kappa: R,
    eps_tau: R,
    s_at_x: R,
) -> Result<R> {
    if kappa <= R::zero() {
        return Err(KecError::InvalidParameter(format!(
            "penalization kappa = {kappa} must be positive"
        )));
    }
    let ets2 = eps_tau * s_at_x * s_at_x;
    let weight = ets2 / (kappa + ets2);
    Ok(x - weight * (x - x_t))
}

/// Macroscopic control contribution to dm/dt for one compartment.
///
/// Uniform selectivity relaxes the mean directly toward x_T; S = √x couples
/// to the second moment through the closure factor Λ.
pub fn macro_control_g<R: Real>(
    ctrl: Option<&CompartmentControl<R>>,
    m: R,
    lambda_factor: R,
) -> R {
    match ctrl {
        None => R::zero(),
        Some(c) => match c.selective {
            Selective::Off => R::zero(),
            Selective::Uniform => (c.x_t - m) / c.nu,
            Selective::SqrtX => m * (c.x_t - lambda_factor * m) / c.nu,
        },
    }
}

/// Distance of the contact density from the target:
/// G_ν = ∫ (x − x_T)² f(x) dx.
pub fn damping_index<R: Real>(f: &DensityField<R>, x_t: R) -> R {
    let vals: Vec<R> = f
        .grid
        .nodes()
        .iter()
        .zip(&f.values)
        .map(|(&x, &fx)| (x - x_t) * (x - x_t) * fx)
        .collect();
    trapezoid(&vals, f.grid.dx())
}

/// Instantaneous restriction cost of one compartment:
/// J_H = ½ ∫ (1 + S²(x)/ν)(x − x_T)² f_H(x) dx.
pub fn restriction_cost_one<R: Real>(
    f: &DensityField<R>,
    spec: &ControlSpec<R>,
    j: Compartment,
) -> R {
    let half: R = r(0.5);
    let x_t = spec.x_t[j];
    let vals: Vec<R> = f
        .grid
        .nodes()
        .iter()
        .zip(&f.values)
        .map(|(&x, &fx)| {
            let s2 = spec.selective.s2_at(x);
            half * (R::one() + s2 / spec.nu) * (x - x_t) * (x - x_t) * fx
        })
        .collect();
    trapezoid(&vals, f.grid.dx())
}

/// Per-compartment restriction costs and their total. The total omits the
/// infectious compartment unless `include_i` is set.
pub fn restriction_cost<R: Real>(
    densities: &PerCompartment<&DensityField<R>>,
    spec: &ControlSpec<R>,
    include_i: bool,
) -> (PerCompartment<R>, R) {
    let mut per = PerCompartment::splat(R::zero());
    let mut total = R::zero();
    for j in Compartment::ALL {
        let cost = restriction_cost_one(densities[j], spec, j);
        per[j] = cost;
        if include_i || j != Compartment::I {
            total = total + cost;
        }
    }
    (per, total)
}

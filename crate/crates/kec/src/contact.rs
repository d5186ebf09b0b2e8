//! Closed-form ingredients of the contact-formation model: transition
//! function, interaction kernel, Fokker-Planck drift/diffusion coefficients
//! and the analytic (generalized Gamma) equilibrium densities.

use serde::{Deserialize, Serialize};

use crate::control::CompartmentControl;
use crate::error::{KecError, Result};
use crate::grid::{cumulative_trapezoid, trapezoid, DensityField, Grid1D};
use crate::real::{ln_gamma, r, Real};

/// Threshold below which |δ| is treated as the δ = 0 limit.
pub const DELTA_ZERO_TOL: f64 = 1e-6;

/// Parameters of the contact-formation dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams<R> {
    /// maximal transition amplitude μ
    pub mu: R,
    /// diffusion strength σ²
    pub sigma2: R,
    /// relaxation scale τ
    pub tau: R,
    /// interaction-strength scale ε (un-scaled transition function only)
    pub epsilon: R,
}

impl<R: Real> ContactParams<R> {
    pub fn new(mu: R, sigma2: R, tau: R, epsilon: R) -> Result<Self> {
        let p = ContactParams { mu, sigma2, tau, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu <= R::zero()
            || self.sigma2 <= R::zero()
            || self.tau <= R::zero()
            || self.epsilon <= R::zero()
        {
            return Err(KecError::InvalidParameter(format!(
                "contact parameters must be positive: mu = {}, sigma2 = {}, tau = {}, epsilon = {}",
                self.mu, self.sigma2, self.tau, self.epsilon
            )));
        }
        Ok(())
    }

    /// λ = μ/σ², exact by construction.
    #[inline]
    pub fn lambda(&self) -> R {
        self.mu / self.sigma2
    }
}

/// A tail parameter δ ∈ [−1, 1] with its derived kernel exponent α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaValue<R> {
    delta: R,
}

impl<R: Real> DeltaValue<R> {
    pub fn new(delta: R) -> Result<Self> {
        if delta < -R::one() || delta > R::one() {
            return Err(KecError::InvalidParameter(format!(
                "delta = {delta} outside [-1, 1]"
            )));
        }
        Ok(DeltaValue { delta })
    }

    #[inline]
    pub fn delta(&self) -> R {
        self.delta
    }

    /// α(δ) = (1 + δ)/2
    #[inline]
    pub fn alpha(&self) -> R {
        (R::one() + self.delta) * r(0.5)
    }

    /// Whether this δ falls in the removable-singularity branch.
    #[inline]
    pub fn is_zero_branch(&self) -> bool {
        self.delta.abs() < r(DELTA_ZERO_TOL)
    }
}

/// Transition function Φ_ε^δ(s) = μ·(e^w − 1)/(e^w + 1) with
/// w = ε(s^δ − 1)/δ (w = ε·ln s in the δ → 0 limit).
pub fn transition_phi<R: Real>(
    params: &ContactParams<R>,
    delta: DeltaValue<R>,
    s: R,
) -> Result<R> {
    if s <= R::zero() {
        return Err(KecError::InvalidParameter(format!(
            "transition function needs s > 0, got {s}"
        )));
    }
    let w = if delta.is_zero_branch() {
        params.epsilon * s.ln()
    } else {
        params.epsilon * (s.powf(delta.delta()) - R::one()) / delta.delta()
    };
    Ok(params.mu * (w * r(0.5)).tanh())
}

/// Quasi-invariant scaling limit Φ^δ(s) = (μ/2δ)(s^δ − 1), with the
/// δ → 0 branch (μ/2)·ln s.
pub fn scaled_phi<R: Real>(
    params: &ContactParams<R>,
    delta: DeltaValue<R>,
    s: R,
) -> Result<R> {
    if s <= R::zero() {
        return Err(KecError::InvalidParameter(format!(
            "transition function needs s > 0, got {s}"
        )));
    }
    let half_mu = params.mu * r(0.5);
    if delta.is_zero_branch() {
        Ok(half_mu * s.ln())
    } else {
        Ok(half_mu * (s.powf(delta.delta()) - R::one()) / delta.delta())
    }
}

/// Interaction kernel B(x) = x^{−α(δ)}.
pub fn kernel_b<R: Real>(delta: DeltaValue<R>, x: R) -> Result<R> {
    if x <= R::zero() {
        return Err(KecError::InvalidParameter(format!(
            "kernel evaluated at nonpositive x = {x}"
        )));
    }
    Ok(x.powf(-delta.alpha()))
}

/// Fokker-Planck drift and diffusion at a point:
/// A = (μ/2δ)·x^{1−α}·((x/m)^δ − 1) [+ control], D = (σ²/2)·x^{2−α}.
///
/// The control term (τ/ν)·B̄(x)·S²(x)·(x − x_T) carries the factor τ because
/// the solver steps the combined operator (1/τ)·FP + C with a single flux.
pub fn fp_coefficients<R: Real>(
    params: &ContactParams<R>,
    delta: DeltaValue<R>,
    m: R,
    ctrl: Option<&CompartmentControl<R>>,
    x: R,
) -> Result<(R, R)> {
    if m <= R::zero() {
        return Err(KecError::InvalidParameter(format!(
            "mean m = {m} must be positive"
        )));
    }
    let alpha = delta.alpha();
    let mut a = if delta.is_zero_branch() {
        if x == R::zero() {
            R::zero()
        } else {
            params.mu * r::<R>(0.5) * x.sqrt() * (x / m).ln()
        }
    } else {
        let d = delta.delta();
        // x^{1-α}(x/m)^δ = x^{α}·m^{-δ}; IEEE pow gives the right x = 0 limits
        let term = x.powf(alpha) * m.powf(-d) - x.powf(R::one() - alpha);
        params.mu / (r::<R>(2.0) * d) * term
    };
    if let Some(c) = ctrl {
        let s2 = c.selective.s2_at(x);
        a = a + params.tau / c.nu * c.bbar.eval(x) * s2 * (x - c.x_t);
    }
    let d_coef = params.sigma2 * r::<R>(0.5) * x.powf(r::<R>(2.0) - alpha);
    Ok((a, d_coef))
}

/// Unnormalized log-density of the equilibrium at each grid node
/// (−∞ marks a vanishing value).
fn equilibrium_log_density<R: Real>(
    params: &ContactParams<R>,
    delta: DeltaValue<R>,
    m: R,
    grid: &Grid1D<R>,
) -> Vec<R> {
    let lambda = params.lambda();
    let alpha = delta.alpha();
    let n = grid.n_points;
    let mut out = vec![R::neg_infinity(); n];
    if delta.is_zero_branch() {
        // f ∝ x^{-3/2} exp{-(λ/2)·ln²(x/m)}
        for i in 1..n {
            let x = grid.node(i);
            let l = (x / m).ln();
            out[i] = r::<R>(-1.5) * x.ln() - lambda * r::<R>(0.5) * l * l;
        }
    } else {
        let d = delta.delta();
        let kappa = lambda / d - r::<R>(2.0) + alpha;
        let rate = lambda / (d * d);
        for i in 1..n {
            let x = grid.node(i);
            out[i] = kappa * x.ln() - rate * (x / m).powf(d);
        }
        // continuous extension at x = 0: finite only if both exponents vanish
        if kappa == R::zero() && d > R::zero() {
            out[0] = -rate * (R::zero() / m).powf(d);
        }
    }
    out
}

/// Closed-form log-mass of the unnormalized density on (0, ∞), when a
/// closed form exists (δ = ±1).
fn closed_form_log_mass<R: Real>(
    params: &ContactParams<R>,
    delta: DeltaValue<R>,
    m: R,
) -> Option<R> {
    let lambda = params.lambda();
    let d = delta.delta();
    let tol: R = r(1e-9);
    if (d - R::one()).abs() < tol {
        // ∫ x^{λ-1} e^{-λx/m} dx = Γ(λ)(m/λ)^λ
        Some(ln_gamma(lambda) + lambda * (m.ln() - lambda.ln()))
    } else if (d + R::one()).abs() < tol {
        // ∫ x^{-λ-2} e^{-λm/x} dx = Γ(λ+1)/(λm)^{λ+1}
        Some(ln_gamma(lambda + R::one()) - (lambda + R::one()) * (lambda * m).ln())
    } else {
        None
    }
}

fn normalize_log_density<R: Real>(
    log_vals: Vec<R>,
    grid: &Grid1D<R>,
    closed_log_mass: Option<R>,
) -> Result<DensityField<R>> {
    let max = log_vals
        .iter()
        .copied()
        .fold(R::neg_infinity(), |a, b| if b > a { b } else { a });
    if !max.is_finite() {
        return Err(KecError::GridTooCoarse(
            "equilibrium density vanishes on the whole grid".into(),
        ));
    }
    let mut vals: Vec<R> = log_vals
        .iter()
        .map(|&l| if l.is_finite() { (l - max).exp() } else { R::zero() })
        .collect();
    let mass = trapezoid(&vals, grid.dx());
    if mass <= R::zero() || !mass.is_finite() {
        return Err(KecError::GridTooCoarse("non-normalizable density".into()));
    }
    if let Some(lm) = closed_log_mass {
        let numeric_log_mass = max + mass.ln();
        let rel = ((numeric_log_mass - lm).exp() - R::one()).abs();
        if rel > r(0.01) {
            return Err(KecError::GridTooCoarse(format!(
                "trapezoid mass deviates {rel:.3e} (relative) from the closed form"
            )));
        }
    }
    for v in &mut vals {
        *v = *v / mass;
    }
    DensityField::new(*grid, vals)
}

/// Normalized equilibrium density f∞(x; m) on the grid.
pub fn equilibrium_density<R: Real>(
    params: &ContactParams<R>,
    delta: DeltaValue<R>,
    m: R,
    grid: &Grid1D<R>,
) -> Result<DensityField<R>> {
    if m <= R::zero() {
        return Err(KecError::InvalidParameter(format!(
            "mean m = {m} must be positive"
        )));
    }
    params.validate()?;
    let log_vals = equilibrium_log_density(params, delta, m, grid);
    normalize_log_density(log_vals, grid, closed_form_log_mass(params, delta, m))
}

/// Equilibrium density under control: the uncontrolled form times
/// exp{−(2/(σ²ν))·∫_{x_ref}^x B̄(y)·y^{α−2}·S²(y)·(y − x_T) dy}, with
/// x_ref the first interior grid point.
pub fn controlled_equilibrium_density<R: Real>(
    params: &ContactParams<R>,
    delta: DeltaValue<R>,
    m: R,
    ctrl: &CompartmentControl<R>,
    grid: &Grid1D<R>,
) -> Result<DensityField<R>> {
    if ctrl.nu <= R::zero() {
        return Err(KecError::InvalidParameter(format!(
            "penalization nu = {} must be positive",
            ctrl.nu
        )));
    }
    if m <= R::zero() {
        return Err(KecError::InvalidParameter(format!(
            "mean m = {m} must be positive"
        )));
    }
    params.validate()?;
    let alpha = delta.alpha();
    let exponent = alpha - r::<R>(2.0);
    let mut integrand: Vec<R> = grid
        .nodes()
        .iter()
        .map(|&x| ctrl.bbar.eval(x) * x.powf(exponent) * ctrl.selective.s2_at(x) * (x - ctrl.x_t))
        .collect();
    if !integrand[0].is_finite() {
        // node 0 never carries density here; keep the quadrature finite
        integrand[0] = R::zero();
    }
    let cum = cumulative_trapezoid(&integrand, grid.dx(), 1);
    let scale = r::<R>(2.0) / (params.sigma2 * ctrl.nu);
    let mut log_vals = equilibrium_log_density(params, delta, m, grid);
    for (lv, &c) in log_vals.iter_mut().zip(&cum) {
        if lv.is_finite() {
            *lv = *lv - scale * c;
        }
    }
    normalize_log_density(log_vals, grid, None)
}

/// Second-moment closure factor Λ_δ = ((λ + δ)/λ)^δ.
pub fn lambda_factor<R: Real>(delta: DeltaValue<R>, lambda: R) -> Result<R> {
    if lambda + delta.delta() <= R::zero() {
        return Err(KecError::InvalidParameter(format!(
            "second moment undefined: lambda = {lambda}, delta = {}",
            delta.delta()
        )));
    }
    Ok(((lambda + delta.delta()) / lambda).powf(delta.delta()))
}

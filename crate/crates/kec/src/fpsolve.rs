//! Flux-form Fokker-Planck stepper on a uniform grid with no-flux
//! boundaries. One call advances a single δ-realization; the
//! stochastic-Galerkin solver reuses the same flux assembly blockwise.

use std::io::Write;

use crate::contact::{fp_coefficients, ContactParams, DeltaValue};
use crate::control::CompartmentControl;
use crate::error::{KecError, Result};
use crate::grid::{trapezoid, DensityField};
use crate::linalg::solve_tridiagonal;
use crate::real::{r, Real};

/// Interface weighting for the advective part of the flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxScheme {
    /// arithmetic average, matching plain central differences
    Central,
    /// Chang-Cooper exponential fitting: positivity + exact local equilibria
    ChangCooper,
}

/// Weight λ_w of the left state in the advective interface value.
pub fn flux_weights<R: Real>(a_half: R, d_half: R, dx: R, scheme: FluxScheme) -> R {
    match scheme {
        FluxScheme::Central => r(0.5),
        FluxScheme::ChangCooper => {
            let w = dx * a_half / d_half;
            if w.abs() < r(1e-10) {
                // λ(w) = 1/2 - w/12 + O(w³)
                r::<R>(0.5) - w / r(12.0)
            } else {
                R::one() / w - R::one() / w.exp_m1()
            }
        }
    }
}

/// Options of a Fokker-Planck step.
#[derive(Debug, Clone, Copy)]
pub struct FpOptions {
    pub scheme: FluxScheme,
    /// re-solve with the updated mean until |Δm| < 1e-10 (max 5 sweeps)
    pub refine_mean: bool,
}

impl Default for FpOptions {
    fn default() -> Self {
        FpOptions { scheme: FluxScheme::ChangCooper, refine_mean: false }
    }
}

/// Interface coefficients of the discrete flux
/// F_{i+1/2} = am·f_i + ap·f_{i+1} at every interior half-point.
fn interface_coefficients<R: Real>(
    f: &DensityField<R>,
    params: &ContactParams<R>,
    delta: DeltaValue<R>,
    m_frozen: R,
    ctrl: Option<&CompartmentControl<R>>,
    scheme: FluxScheme,
) -> Result<(Vec<R>, Vec<R>)> {
    let grid = &f.grid;
    let n = grid.n_points;
    let dx = grid.dx();
    let half: R = r(0.5);
    let mut d_nodes = vec![R::zero(); n];
    for (i, d) in d_nodes.iter_mut().enumerate() {
        let (_, dc) = fp_coefficients(params, delta, m_frozen, None, grid.node(i))?;
        *d = dc;
    }
    let mut am = vec![R::zero(); n - 1];
    let mut ap = vec![R::zero(); n - 1];
    for i in 0..n - 1 {
        let x_half = (r::<R>(i as f64) + half) * dx;
        let (a_half, _) = fp_coefficients(params, delta, m_frozen, ctrl, x_half)?;
        let d_tilde = half * (d_nodes[i] + d_nodes[i + 1]);
        let a_tilde = a_half + (d_nodes[i + 1] - d_nodes[i]) / dx;
        let lam = flux_weights(a_tilde, d_tilde, dx, scheme);
        am[i] = a_tilde * lam - d_tilde / dx;
        ap[i] = a_tilde * (R::one() - lam) + d_tilde / dx;
    }
    Ok((am, ap))
}

fn fp_step_frozen<R: Real>(
    f: &DensityField<R>,
    params: &ContactParams<R>,
    delta: DeltaValue<R>,
    m_frozen: R,
    ctrl: Option<&CompartmentControl<R>>,
    dt: R,
    scheme: FluxScheme,
) -> Result<DensityField<R>> {
    let grid = &f.grid;
    let n = grid.n_points;
    let (am, ap) = interface_coefficients(f, params, delta, m_frozen, ctrl, scheme)?;
    let mut lower = vec![R::zero(); n];
    let mut diag = vec![R::zero(); n];
    let mut upper = vec![R::zero(); n];
    for i in 0..n {
        let c = dt / (params.tau * grid.cell_volume(i));
        let mut d = R::one();
        if i < n - 1 {
            d = d - c * am[i];
            upper[i] = -c * ap[i];
        }
        if i > 0 {
            d = d + c * ap[i - 1];
            lower[i] = c * am[i - 1];
        }
        diag[i] = d;
    }
    let mut rhs = f.values.clone();
    solve_tridiagonal(&lower, &diag, &upper, &mut rhs)?;
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(KecError::SolverBreakdown(
            "non-finite density after implicit step".into(),
        ));
    }
    DensityField::new(*grid, rhs)
}

/// Implicit-Euler step of ∂_t f = (1/τ)·∂_x[A f + ∂_x(D f)] with no-flux
/// boundaries. The nonlinear mean entering the drift is `m_frozen`; the
/// optional refinement loop re-solves with the post-step mean.
pub fn fp_step<R: Real>(
    f: &DensityField<R>,
    params: &ContactParams<R>,
    delta: DeltaValue<R>,
    m_frozen: R,
    ctrl: Option<&CompartmentControl<R>>,
    dt: R,
    opts: FpOptions,
) -> Result<DensityField<R>> {
    if dt <= R::zero() {
        return Err(KecError::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let mut m = m_frozen;
    let mut out = fp_step_frozen(f, params, delta, m, ctrl, dt, opts.scheme)?;
    if opts.refine_mean {
        for _ in 0..5 {
            let mom = moments(&out);
            let Some(m_new) = mom.m else { break };
            if (m_new - m).abs() < r(1e-10) {
                break;
            }
            m = m_new;
            out = fp_step_frozen(f, params, delta, m, ctrl, dt, opts.scheme)?;
        }
    }
    Ok(out)
}

/// Floor below which per-mass moments are reported as absent.
pub const MASS_FLOOR: f64 = 1e-14;

/// Mass and (per-mass) first and second moments of a density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<R> {
    pub rho: R,
    pub m: Option<R>,
    pub m2: Option<R>,
}

pub fn moments<R: Real>(f: &DensityField<R>) -> Moments<R> {
    let dx = f.grid.dx();
    let rho = f.mass();
    if rho <= r(MASS_FLOOR) {
        return Moments { rho, m: None, m2: None };
    }
    let xs = f.grid.nodes();
    let m1: Vec<R> = xs.iter().zip(&f.values).map(|(&x, &v)| x * v).collect();
    let m2: Vec<R> = xs.iter().zip(&f.values).map(|(&x, &v)| x * x * v).collect();
    Moments {
        rho,
        m: Some(trapezoid(&m1, dx) / rho),
        m2: Some(trapezoid(&m2, dx) / rho),
    }
}

/// Per-step moment dump for debugging; fixed column order t,rho,m,m2.
pub struct MomentLog<W: Write> {
    sink: W,
}

impl<W: Write> MomentLog<W> {
    pub fn new(mut sink: W) -> Result<Self> {
        writeln!(sink, "t,rho,m,m2")?;
        Ok(MomentLog { sink })
    }

    pub fn record<R: Real>(&mut self, t: R, mom: &Moments<R>) -> Result<()> {
        let fmt = |o: Option<R>| o.map_or("absent".to_string(), |v| format!("{v:.12e}"));
        writeln!(self.sink, "{t:.6},{:.12e},{},{}", mom.rho, fmt(mom.m), fmt(mom.m2))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::equilibrium_density;
    use crate::grid::Grid1D;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(mu: f64, lambda: f64, tau: f64) -> ContactParams<f64> {
        ContactParams::new(mu, mu / lambda, tau, 0.01).unwrap()
    }

    fn dv(d: f64) -> DeltaValue<f64> {
        DeltaValue::new(d).unwrap()
    }

    fn gamma_shape(grid: Grid1D<f64>, shape: f64, mean: f64) -> DensityField<f64> {
        let rate = shape / mean;
        let vals: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&x| if x > 0.0 { x.powf(shape - 1.0) * (-rate * x).exp() } else { 0.0 })
            .collect();
        let mass = trapezoid(&vals, grid.dx());
        DensityField::new(grid, vals.iter().map(|v| v / mass).collect()).unwrap()
    }

    #[test]
    fn flux_weight_values() {
        assert_eq!(flux_weights(3.0f64, 1.0, 0.1, FluxScheme::Central), 0.5);
        assert_relative_eq!(
            flux_weights(1.0f64, 1.0, 1.0, FluxScheme::ChangCooper),
            1.0 - 1.0 / (1.0f64.exp() - 1.0),
            epsilon = 1e-14
        );
        // continuity at w = 0 and full upwinding for large w
        assert_relative_eq!(flux_weights(0.0f64, 1.0, 0.1, FluxScheme::ChangCooper), 0.5);
        let near = flux_weights(1e-7f64, 1.0, 1.0, FluxScheme::ChangCooper);
        assert!((near - 0.5).abs() < 1e-7);
        assert!(flux_weights(500.0f64, 1.0, 1.0, FluxScheme::ChangCooper) < 0.01);
        assert!(flux_weights(-500.0f64, 1.0, 1.0, FluxScheme::ChangCooper) > 0.99);
    }

    #[test]
    fn chang_cooper_preserves_discrete_equilibrium() {
        let p = params(0.5, 5.0, 1.0);
        let grid = Grid1D::new(100.0f64, 2001).unwrap();
        let f = equilibrium_density(&p, dv(1.0), 10.0, &grid).unwrap();
        let out = fp_step(&f, &p, dv(1.0), 10.0, None, 1e-4, FpOptions::default()).unwrap();
        let l1: f64 = f.values.iter().zip(&out.values).map(|(a, b)| (a - b).abs()).sum();
        let norm: f64 = f.values.iter().map(|v| v.abs()).sum();
        assert!(l1 / norm < 1e-8, "relative L1 change {}", l1 / norm);
    }

    #[test]
    fn mass_conserved_per_step() {
        let p = params(0.5, 5.0, 0.01);
        let grid = Grid1D::new(50.0f64, 801).unwrap();
        let vals: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&x| (0.3 * x).sin().abs() * (-0.1 * x).exp())
            .collect();
        let f = DensityField::new(grid, vals).unwrap();
        for scheme in [FluxScheme::Central, FluxScheme::ChangCooper] {
            let opts = FpOptions { scheme, refine_mean: false };
            let out = fp_step(&f, &p, dv(0.5), 7.0, None, 0.5, opts).unwrap();
            assert!((out.mass() - f.mass()).abs() < 1e-12, "{scheme:?}");
        }
    }

    #[test]
    fn mean_conserved_at_delta_pm_one() {
        // τ = 1e-5 with Δt = 0.1: dt/τ = 1e4, only the implicit solve survives
        let p = params(0.5, 5.0, 1e-5);
        let grid = Grid1D::new(500.0f64, 25001).unwrap();
        for d in [-1.0, 1.0] {
            let mut f = gamma_shape(grid, 3.0, 10.0);
            let m0 = moments(&f).m.unwrap();
            let mut t = 0.0;
            while t < 1.0 - 1e-12 {
                let m = moments(&f).m.unwrap();
                f = fp_step(&f, &p, dv(d), m, None, 0.1, FpOptions::default()).unwrap();
                t += 0.1;
            }
            let m_t = moments(&f).m.unwrap();
            assert!((m_t - m0).abs() / m0 < 1e-3, "delta = {d}: {m0} -> {m_t}");
        }
    }

    #[test]
    fn l1_contraction() {
        let p = params(0.5, 5.0, 0.1);
        let grid = Grid1D::new(40.0f64, 401).unwrap();
        let f = gamma_shape(grid, 2.0, 8.0);
        let g = gamma_shape(grid, 6.0, 12.0);
        // identical coefficients: both stepped with the same frozen mean
        let opts = FpOptions::default();
        let f1 = fp_step(&f, &p, dv(0.3), 9.0, None, 0.7, opts).unwrap();
        let g1 = fp_step(&g, &p, dv(0.3), 9.0, None, 0.7, opts).unwrap();
        let dx = grid.dx();
        let before: f64 = trapezoid(
            &f.values.iter().zip(&g.values).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>(),
            dx,
        );
        let after: f64 = trapezoid(
            &f1.values.iter().zip(&g1.values).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>(),
            dx,
        );
        assert!(after <= before + 1e-10, "{after} > {before}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn chang_cooper_keeps_positivity(
            seed in 0u64..1000,
            dt in 1e-3f64..100.0,
            d in -1.0f64..=1.0,
        ) {
            let p = params(0.5, 5.0, 0.1);
            let grid = Grid1D::new(30.0f64, 101).unwrap();
            // deterministic scrambled nonnegative input
            let vals: Vec<f64> = (0..101)
                .map(|i| ((i as f64 * 12.9898 + seed as f64 * 78.233).sin() * 43758.5453).fract().abs())
                .collect();
            let f = DensityField::new(grid, vals).unwrap();
            let out = fp_step(&f, &p, dv(d), 5.0, None, dt, FpOptions::default()).unwrap();
            prop_assert!(out.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn relaxes_to_equilibrium() {
        // Gamma initial shape (the δ = +1 equilibrium) relaxed under δ = -1
        let p = params(0.5, 5.0, 1.0);
        let grid = Grid1D::new(200.0f64, 4001).unwrap();
        let mut f = gamma_shape(grid, 5.0, 10.0);
        let dt = 0.1;
        for _ in 0..500 {
            let m = moments(&f).m.unwrap();
            f = fp_step(&f, &p, dv(-1.0), m, None, dt, FpOptions::default()).unwrap();
        }
        let target = equilibrium_density(&p, dv(-1.0), 10.0, &grid).unwrap();
        let dist: f64 = trapezoid(
            &f.values.iter().zip(&target.values).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>(),
            grid.dx(),
        );
        assert!(dist < 1e-2, "L1 distance {dist}");
    }

    #[test]
    fn moment_examples() {
        let p = params(0.5, 5.0, 1.0);
        let grid = Grid1D::new(500.0f64, 25001).unwrap();
        let f = equilibrium_density(&p, dv(1.0), 10.0, &grid).unwrap();
        let mom = moments(&f);
        assert!((mom.rho - 1.0).abs() < 1e-6);
        assert!((mom.m.unwrap() - 10.0).abs() < 1e-6);
        assert!((mom.m2.unwrap() - 120.0).abs() < 1e-4 * 120.0);
        // homogeneity: scaling the density scales only the mass
        let scaled = DensityField::new(grid, f.values.iter().map(|v| 0.97 * v).collect()).unwrap();
        let ms = moments(&scaled);
        assert_relative_eq!(ms.rho, 0.97, epsilon = 1e-6);
        assert_relative_eq!(ms.m.unwrap(), mom.m.unwrap(), epsilon = 1e-10);
        assert_relative_eq!(ms.m2.unwrap(), mom.m2.unwrap(), epsilon = 1e-10);
        // vanishing density reports absent per-mass moments
        let zero = DensityField::zeros(Grid1D::new(10.0f64, 11).unwrap());
        let mz = moments(&zero);
        assert_eq!(mz.rho, 0.0);
        assert!(mz.m.is_none() && mz.m2.is_none());
    }

    #[test]
    fn nan_input_rejected() {
        let p = params(0.5, 5.0, 1.0);
        let grid = Grid1D::new(10.0f64, 11).unwrap();
        let mut vals = vec![1.0; 11];
        vals[5] = f64::NAN;
        let f = DensityField::new(grid, vals).unwrap();
        assert!(fp_step(&f, &p, dv(1.0), 5.0, None, 0.1, FpOptions::default()).is_err());
    }

    #[test]
    fn moment_log_format() {
        let mut buf = Vec::new();
        {
            let mut log = MomentLog::new(&mut buf).unwrap();
            log.record(0.5f64, &Moments { rho: 1.0, m: Some(10.0), m2: Some(120.0) }).unwrap();
            log.record(0.6f64, &Moments { rho: 0.0, m: None, m2: None }).unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,rho,m,m2");
        assert!(lines.next().unwrap().starts_with("0.500000,1.000000000000e0,1.000000000000e1"));
        assert!(lines.next().unwrap().ends_with("absent,absent"));
    }
}

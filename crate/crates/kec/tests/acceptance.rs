//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single PASS line on success (visible with --nocapture); slow large-scale
//! variants are #[ignore] and opt-in.

use std::time::Instant;

use chrono::NaiveDate;
use kec::calib::data::load_simple_csv;
use kec::calib::fit::{
    fit_targets, fit_unconstrained, retrospective_swap, PreFitConfig, TargetFitConfig,
};
use kec::compartment::{Compartment, PerCompartment};
use kec::contact::{
    controlled_equilibrium_density, equilibrium_density, lambda_factor, ContactParams, DeltaValue,
};
use kec::control::{damping_index, ControlKernel, ControlSpec, Selective};
use kec::fpsolve::{fp_step, moments, FluxScheme, FpOptions};
use kec::grid::{trapezoid, DensityField, Grid1D};
use kec::macroscopic::{rk4_integrate, run_macro_uncertain, MacroState};
use kec::real::ln_gamma;
use kec::sgkinetic::{
    run_kinetic, sg_contact_step, sg_convergence_study, EpiParams, KineticRun, KineticScenario,
    KineticState, SgOptions,
};
use kec::uq::{build_basis, DeltaMap, UncertaintyLaw};

use Compartment::{I, R as Rc, S};

fn pass(n: usize, what: &str) {
    println!("criterion {n} ({what}): PASS");
}

fn contact(tau: f64) -> ContactParams<f64> {
    ContactParams::new(0.5, 0.1, tau, 0.01).unwrap()
}

fn uniform(a: f64, b: f64) -> UncertaintyLaw<f64> {
    UncertaintyLaw::uniform(a, b, DeltaMap::Identity)
}

fn gamma_state(
    law: UncertaintyLaw<f64>,
    order: usize,
    grid: Grid1D<f64>,
    rho0: [f64; 4],
    m0: f64,
) -> KineticState<f64> {
    KineticState::from_gamma(
        build_basis(law, order).unwrap(),
        grid,
        5.0,
        PerCompartment(rho0),
        PerCompartment::splat(m0),
    )
    .unwrap()
}

/// Relax the single-z Fokker-Planck toward its frozen-mean steady state.
fn relax(
    params: &ContactParams<f64>,
    delta: f64,
    m: f64,
    grid: &Grid1D<f64>,
    t_end: f64,
    dt: f64,
) -> DensityField<f64> {
    let d = DeltaValue::new(delta).unwrap();
    // Gamma(2, m/2) start: positive, correct mean, wrong shape
    let vals: Vec<f64> = grid.nodes().iter().map(|&x| x * (-2.0 * x / m).exp()).collect();
    let mass = trapezoid(&vals, grid.dx());
    let vals: Vec<f64> = vals.iter().map(|v| v / mass).collect();
    let mut f = DensityField::new(*grid, vals).unwrap();
    let opts = FpOptions { scheme: FluxScheme::ChangCooper, refine_mean: false };
    let mut t = 0.0;
    while t < t_end - 1e-9 * dt {
        f = fp_step(&f, params, d, m, None, dt, opts).unwrap();
        t += dt;
    }
    f
}

fn rel_l1(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = b.iter().map(|y| y.abs()).sum();
    num / den
}

// criterion 1 -----------------------------------------------------------

#[test]
fn criterion_1_equilibrium_fidelity() {
    let params = contact(1.0);
    let lambda = params.lambda();
    let grid = Grid1D::new(500.0, 25001).unwrap();
    let m = 10.0;
    for delta in [-1.0, -0.5, 0.5, 1.0] {
        let start = Instant::now();
        let solved = relax(&params, delta, m, &grid, 400.0, 0.1);
        let analytic = equilibrium_density(
            &params,
            DeltaValue::new(delta).unwrap(),
            m,
            &grid,
        )
        .unwrap();
        let l1 = rel_l1(&solved.values, &analytic.values);
        assert!(l1 < 1e-2, "delta {delta}: relative L1 {l1:.3e}");

        // closed-form Gamma / inverse-Gamma cross-check at the endpoints
        if delta == 1.0 || delta == -1.0 {
            let pdf: Vec<f64> = grid
                .nodes()
                .iter()
                .map(|&x| {
                    if x <= 0.0 {
                        return 0.0;
                    }
                    if delta == 1.0 {
                        // Gamma(λ, λ/m)
                        let rate = lambda / m;
                        (lambda * rate.ln() + (lambda - 1.0) * x.ln()
                            - rate * x
                            - ln_gamma(lambda))
                        .exp()
                    } else {
                        // inverse-Gamma with shape λ+1, scale λm (mean m)
                        let a = lambda + 1.0;
                        let b = lambda * m;
                        (a * b.ln() - (a + 1.0) * x.ln() - b / x - ln_gamma(a)).exp()
                    }
                })
                .collect();
            let peak = pdf.iter().cloned().fold(0.0f64, f64::max);
            let sup = solved
                .values
                .iter()
                .zip(&pdf)
                .map(|(s, p)| (s - p).abs())
                .fold(0.0f64, f64::max);
            assert!(
                sup < 1e-3 * peak,
                "delta {delta}: sup deviation {sup:.3e} vs peak {peak:.3e}"
            );
        }
        let dt = start.elapsed().as_secs_f64();
        assert!(dt < 60.0, "delta {delta}: runtime {dt:.1}s exceeds 1 min");
    }
    pass(1, "equilibrium fidelity");
}

// criterion 2 -----------------------------------------------------------

#[test]
fn criterion_2_conservation() {
    // mass per single-z step
    let params = contact(1e-2);
    let grid = Grid1D::new(100.0, 1001).unwrap();
    let f = equilibrium_density(&params, DeltaValue::new(0.5).unwrap(), 10.0, &grid).unwrap();
    let opts = FpOptions { scheme: FluxScheme::ChangCooper, refine_mean: false };
    let stepped = fp_step(&f, &params, DeltaValue::new(0.5).unwrap(), 10.0, None, 0.1, opts)
        .unwrap();
    let drift = (stepped.mass() - f.mass()).abs() / f.mass();
    assert!(drift < 1e-12, "FP step mass drift {drift:.3e}");

    // mode-0 mass per sG contact step
    let state = gamma_state(uniform(-0.5, 0.5), 3, grid, [0.9, 0.05, 0.03, 0.02], 10.0);
    let (next, _) = sg_contact_step(
        &state,
        &params,
        &ControlSpec::off(),
        0.1,
        SgOptions { scheme: FluxScheme::ChangCooper, clip_negative: false },
    )
    .unwrap();
    for j in Compartment::ALL {
        let d = (next.mode0_mass(j) - state.mode0_mass(j)).abs();
        assert!(d < 1e-12, "{}: sG step mass drift {d:.3e}", j.label());
    }

    // total SEIR mass over T = 150
    let scenario = KineticScenario {
        params,
        epi: EpiParams { beta: 0.0025, zeta: 0.3, gamma: 0.1 },
        control: ControlSpec::off(),
        dt: 0.1,
        t_end: 150.0,
        output_stride: 100,
        scheme: FluxScheme::ChangCooper,
    };
    let state = gamma_state(uniform(-0.3, 0.3), 2, grid, [0.97, 0.01, 0.01, 0.01], 10.0);
    let before = state.total_mass();
    let run = run_kinetic(state, &scenario).unwrap();
    let after = run.final_state.total_mass();
    let d = (after - before).abs() / before;
    assert!(d < 1e-9, "total mass drift {d:.3e} over T = 150");

    // mean conservation at delta = ±1 (lagged self-consistent mean); needs
    // the fine grid or the discrete equilibrium mean offset shows up
    let stiff = contact(1e-5);
    let fine = Grid1D::new(500.0, 25001).unwrap();
    for delta in [-1.0, 1.0] {
        let d = DeltaValue::new(delta).unwrap();
        let mut f = equilibrium_density(&stiff, d, 10.0, &fine).unwrap();
        for _ in 0..10 {
            let m = moments(&f).m.unwrap();
            f = fp_step(&f, &stiff, d, m, None, 0.1, opts).unwrap();
        }
        let m = moments(&f).m.unwrap();
        let rel = (m - 10.0).abs() / 10.0;
        assert!(rel < 1e-3, "delta {delta}: mean drift {rel:.3e} over T = 1");
    }
    pass(2, "conservation suite");
}

// criterion 3 -----------------------------------------------------------

#[test]
fn criterion_3_positivity_and_contraction() {
    use rand::prelude::*;
    let mut rng = StdRng::seed_from_u64(7);
    let params = contact(0.05);
    let grid = Grid1D::new(50.0, 401).unwrap();
    let opts = FpOptions { scheme: FluxScheme::ChangCooper, refine_mean: false };
    for case in 0..100 {
        let delta = rng.gen_range(-1.0..=1.0);
        let d = DeltaValue::new(delta).unwrap();
        let mut vals = vec![0.0f64; grid.n_points];
        for v in vals.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        // sprinkle hard zeros so the field is not bounded away from the axis
        for _ in 0..40 {
            let k = rng.gen_range(0..grid.n_points);
            vals[k] = 0.0;
        }
        let f = DensityField::new(grid, vals.clone()).unwrap();
        let m = moments(&f).m.unwrap();
        let stepped = fp_step(&f, &params, d, m, None, 0.05, opts).unwrap();
        let min = stepped.values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(min >= -1e-13, "case {case}: negative value {min:.3e}");

        // L1 contraction between paired solutions of the same linear step
        let mut other = vals;
        for v in other.iter_mut() {
            *v *= rng.gen_range(0.5..1.5);
        }
        let g = DensityField::new(grid, other).unwrap();
        let stepped_g = fp_step(&g, &params, d, m, None, 0.05, opts).unwrap();
        let before: f64 = f
            .values
            .iter()
            .zip(&g.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * grid.dx();
        let after: f64 = stepped
            .values
            .iter()
            .zip(&stepped_g.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * grid.dx();
        assert!(
            after <= before + 1e-10,
            "case {case}: L1 grew {before:.6e} -> {after:.6e}"
        );
    }
    pass(3, "positivity and L1 contraction");
}

// criterion 4 -----------------------------------------------------------

#[test]
fn criterion_4_sg_spectral_convergence() {
    let start = Instant::now();
    let params = contact(1e-5);
    let grid = Grid1D::new(100.0, 2001).unwrap();
    let table = sg_convergence_study(
        &params,
        uniform(-1.0, 1.0),
        grid,
        10.0,
        0.1,
        1.0,
        &[2, 4, 6, 8, 12, 16],
        20,
    )
    .unwrap();
    for w in table.windows(2) {
        assert!(
            w[1].1 < w[0].1,
            "error not strictly decreasing: M={} {:.3e} -> M={} {:.3e}",
            w[0].0,
            w[0].1,
            w[1].0,
            w[1].1
        );
    }
    let ratio = table.last().unwrap().1 / table[0].1;
    assert!(ratio < 1e-6, "error(16)/error(2) = {ratio:.3e}");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 300.0, "runtime {dt:.1}s exceeds 5 min");
    pass(4, "sG spectral convergence");
}

/// Paper-scale reproduction of the convergence figure; several minutes.
#[test]
#[ignore = "paper-scale sG convergence (M_ref = 40, dx = 0.02)"]
fn criterion_4_sg_convergence_paper_scale() {
    let params = contact(1e-5);
    let grid = Grid1D::new(500.0, 25001).unwrap();
    let table = sg_convergence_study(
        &params,
        uniform(-1.0, 1.0),
        grid,
        10.0,
        0.1,
        1.0,
        &[2, 4, 6, 8, 12, 16, 20],
        40,
    )
    .unwrap();
    for w in table.windows(2) {
        assert!(w[1].1 < w[0].1, "error not strictly decreasing: {table:?}");
    }
    pass(4, "sG spectral convergence, paper scale");
}

// criterion 5 -----------------------------------------------------------

fn test1_run(a: f64, b: f64) -> KineticRun<f64> {
    let grid = Grid1D::new(150.0, 3001).unwrap();
    let scenario = KineticScenario {
        params: contact(1e-5),
        epi: EpiParams { beta: 0.0025, zeta: 0.3, gamma: 0.1 },
        control: ControlSpec::off(),
        dt: 0.1,
        t_end: 150.0,
        output_stride: 10,
        scheme: FluxScheme::ChangCooper,
    };
    let state = gamma_state(uniform(a, b), 5, grid, [0.97, 0.01, 0.01, 0.01], 10.0);
    run_kinetic(state, &scenario).unwrap()
}

#[test]
fn criterion_5_test1_ordering() {
    let runs = [test1_run(-1.0, 0.0), test1_run(-0.5, 0.5), test1_run(0.0, 1.0)];
    let final_s: Vec<f64> =
        runs.iter().map(|r| r.samples.last().unwrap().mean_rho[S]).collect();
    let final_r: Vec<f64> =
        runs.iter().map(|r| r.samples.last().unwrap().mean_rho[Rc]).collect();
    let peak_i: Vec<f64> = runs
        .iter()
        .map(|r| r.samples.iter().map(|s| s.mean_rho[I]).fold(0.0f64, f64::max))
        .collect();
    assert!(
        final_s[0] < final_s[1] && final_s[1] < final_s[2],
        "final S not ordered: {final_s:?}"
    );
    assert!(
        final_r[0] > final_r[1] && final_r[1] > final_r[2],
        "final R not reversed: {final_r:?}"
    );
    assert!(
        peak_i[0] > peak_i[1] && peak_i[1] > peak_i[2],
        "peak I not reversed: {peak_i:?}"
    );
    pass(5, "fat/slim tail ordering");
}

// criterion 6 -----------------------------------------------------------

/// sup_t |E_z[ρ_I] kinetic − macro| on the Bernoulli closure scenario.
fn closure_discrepancy(tau: f64, dt: f64) -> (f64, f64) {
    let params = contact(tau);
    let epi = EpiParams { beta: 0.02, zeta: 1.0 / 3.32, gamma: 0.1 };
    let grid = Grid1D::new(500.0, 25001).unwrap();
    let law = UncertaintyLaw::bernoulli(0.5);
    let state = KineticState::from_gamma(
        build_basis(law, 1).unwrap(),
        grid,
        params.lambda(),
        PerCompartment([0.97, 0.01, 0.01, 0.01]),
        PerCompartment::splat(10.0),
    )
    .unwrap();
    let scenario = KineticScenario {
        params,
        epi,
        control: ControlSpec::off(),
        dt,
        t_end: 20.0,
        output_stride: 1,
        scheme: FluxScheme::ChangCooper,
    };
    let kin = run_kinetic(state, &scenario).unwrap();
    let mac = run_macro_uncertain(
        MacroState {
            rho: PerCompartment([0.97, 0.01, 0.01, 0.01]),
            m: PerCompartment::splat(10.0),
            t: 0.0,
        },
        &epi,
        &law,
        params.lambda(),
        &ControlSpec::off(),
        None,
        dt,
        20.0,
    )
    .unwrap();
    let (mac_i, _) = mac.rho_stats(I);
    let mut sup = 0.0f64;
    for s in &kin.samples {
        let k = ((s.t / dt).round() as usize).min(mac_i.len() - 1);
        sup = sup.max((s.mean_rho[I] - mac_i[k]).abs());
    }
    let scale = mac_i.iter().cloned().fold(0.0f64, f64::max);
    (sup, scale)
}

#[test]
fn criterion_6_closure_improves_with_tau() {
    let (coarse, _) = closure_discrepancy(1e-1, 0.1);
    let (fine, _) = closure_discrepancy(1e-3, 0.1);
    assert!(
        fine < coarse,
        "discrepancy did not shrink: tau 1e-1 {coarse:.3e} vs 1e-3 {fine:.3e}"
    );
    pass(6, "closure consistency");
}

#[test]
#[ignore = "slow closure check at tau = 1e-5"]
fn criterion_6_closure_tau_1e5() {
    let (sup, scale) = closure_discrepancy(1e-5, 0.02);
    let rel = sup / scale;
    assert!(rel < 0.02, "relative sup discrepancy {rel:.3e} at tau = 1e-5");
    pass(6, "closure consistency, tau = 1e-5");
}

// criterion 7 -----------------------------------------------------------

fn contact_relax(
    control: &ControlSpec<f64>,
    tau: f64,
    n_steps: usize,
) -> KineticState<f64> {
    let params = contact(tau);
    let grid = Grid1D::new(100.0, 2001).unwrap();
    let mut state = gamma_state(uniform(-1.0, 1.0), 5, grid, [1.0, 1.0, 1.0, 1.0], 10.0);
    let opts = SgOptions { scheme: FluxScheme::ChangCooper, clip_negative: true };
    for _ in 0..n_steps {
        let (next, _) = sg_contact_step(&state, &params, control, 0.1, opts).unwrap();
        state = next;
    }
    state
}

fn spec(selective: Selective, nu: f64) -> ControlSpec<f64> {
    ControlSpec {
        selective,
        x_t: PerCompartment::splat(5.0),
        nu,
        bbar: ControlKernel::Maxwellian,
    }
}

/// Quadrature variance of the nodal means of compartment S.
fn mean_variance(state: &KineticState<f64>) -> f64 {
    let (_, mean) = state.nodal_moments(S);
    let w = &state.basis.weights;
    let avg: f64 = (0..state.basis.n_quad())
        .map(|q| w[q] * mean[q].expect("node carries mass"))
        .sum();
    (0..state.basis.n_quad())
        .map(|q| w[q] * (mean[q].unwrap() - avg).powi(2))
        .sum()
}

#[test]
fn criterion_7_control_damping() {
    // E_z[G_nu] grows with nu and selective control does at least as well
    let mut last = [0.0f64; 2];
    for (step, nu) in [0.1, 1.0, 10.0].into_iter().enumerate() {
        let mut g = [0.0f64; 2];
        for (k, sel) in [Selective::Uniform, Selective::SqrtX].into_iter().enumerate() {
            let state = contact_relax(&spec(sel, nu), 1e-5, 10);
            let w = &state.basis.weights;
            for q in 0..state.basis.n_quad() {
                let f = DensityField::new(state.grid, state.nodal_values(S, q)).unwrap();
                g[k] += w[q] * damping_index(&f, 5.0);
            }
        }
        if step > 0 {
            assert!(g[0] > last[0] && g[1] > last[1], "G_nu not increasing at nu {nu}");
        }
        assert!(
            g[1] <= g[0] * (1.0 + 1e-9),
            "sqrt-x damping {:.4e} above uniform {:.4e} at nu {nu}",
            g[1],
            g[0]
        );
        last = g;
    }

    // mean-to-target bound at the deterministic endpoints
    let params = contact(1.0);
    let grid = Grid1D::new(100.0, 2001).unwrap();
    for delta in [-1.0, 1.0] {
        for nu in [1e-2, 1e-1] {
            let ctrl = ControlSpec {
                selective: Selective::Uniform,
                x_t: PerCompartment::splat(5.0),
                nu,
                bbar: ControlKernel::Maxwellian,
            }
            .for_compartment(S)
            .unwrap();
            let d = DeltaValue::new(delta).unwrap();
            // self-consistent controlled equilibrium mean
            let mut m = 5.0;
            for _ in 0..50 {
                let f = controlled_equilibrium_density(&params, d, m, &ctrl, &grid).unwrap();
                m = moments(&f).m.unwrap();
            }
            let f = controlled_equilibrium_density(&params, d, m, &ctrl, &grid).unwrap();
            let alpha = d.alpha();
            let frac: Vec<f64> = grid
                .nodes()
                .iter()
                .zip(&f.values)
                .map(|(&x, &v)| x.powf(1.0 - alpha) * v)
                .collect();
            let m_frac = trapezoid(&frac, grid.dx());
            let bound = params.mu * nu / params.tau * m_frac;
            let gap = (m - 5.0).abs();
            assert!(
                gap <= bound * (1.0 + 1e-6),
                "delta {delta} nu {nu}: |m - x_T| = {gap:.4e} > {bound:.4e}"
            );
        }
    }

    // uncertainty damping of Var_z[m_inf] at nu = 0.01; run at tau = 1 so
    // the feedback dominates the relaxation (nu/tau small) while the
    // uncontrolled means spread through the delta-dependent discrete drift
    let var_c = mean_variance(&contact_relax(&spec(Selective::Uniform, 0.01), 1.0, 1000));
    let var_u = mean_variance(&contact_relax(&ControlSpec::off(), 1.0, 1000));
    assert!(
        var_c < 0.01 * var_u,
        "Var_z[m] {var_c:.4e} not below 1% of uncontrolled {var_u:.4e}"
    );
    pass(7, "control damping");
}

// criterion 8 -----------------------------------------------------------

#[test]
fn criterion_8_macro_fixed_points() {
    let epi = EpiParams { beta: 0.0, zeta: 0.0, gamma: 0.0 };
    let x_t: f64 = 5.0;
    for (selective, target_of) in [
        (Selective::Uniform, None),
        (Selective::SqrtX, Some(())),
    ] {
        for delta in [-1.0, 1.0] {
            let lam = lambda_factor(DeltaValue::new(delta).unwrap(), 5.0).unwrap();
            let control = ControlSpec {
                selective,
                x_t: PerCompartment::splat(x_t),
                nu: 1e-4,
                bbar: ControlKernel::Maxwellian,
            };
            let traj = rk4_integrate(
                MacroState {
                    rho: PerCompartment([0.97, 0.01, 0.01, 0.01]),
                    m: PerCompartment::splat(10.0),
                    t: 0.0,
                },
                &epi,
                lam,
                &control,
                None,
                5e-6,
                0.01,
            )
            .unwrap();
            let m_end = traj.last().unwrap().m[S];
            let expect = match target_of {
                None => x_t,
                Some(()) => x_t / lam,
            };
            let rel = (m_end - expect).abs() / expect.max(1e-30);
            assert!(
                rel < 0.01,
                "{selective:?} delta {delta}: m settles at {m_end:.4}, expected {expect:.4}"
            );
        }
    }
    pass(8, "controlled-macro fixed points");
}

// criterion 9 -----------------------------------------------------------

fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

#[test]
fn criterion_9_calibration_roundtrip() {
    let series = load_simple_csv::<f64>(&fixture_path("synthetic_epi.csv"), "synthetic", None).unwrap();
    let pre = PreFitConfig {
        rho0: PerCompartment([0.97, 0.01, 0.01, 0.01]),
        beta_bounds: (0.0, 0.05),
        ..PreFitConfig::for_population(1e6)
    };
    let t0 = date(2020, 2, 24);
    let t_lockdown = date(2020, 3, 9);
    let fit = fit_unconstrained(&series, t0, t_lockdown, &pre).unwrap();
    assert!(fit.converged, "pre fit did not converge: objective {}", fit.objective);
    assert!(
        (fit.beta_hat - 0.02).abs() / 0.02 < 0.05,
        "beta {} off the generating 0.02",
        fit.beta_hat
    );
    assert!(
        (fit.lambda_hat - 5.0).abs() / 5.0 < 0.05,
        "lambda {} off the generating 5",
        fit.lambda_hat
    );

    let tconf = TargetFitConfig::default_with(Selective::Uniform);
    let t_f = *series.dates.last().unwrap();
    let fits = fit_targets(
        &series,
        t0,
        t_lockdown,
        t_f,
        fit.beta_hat,
        fit.lambda_hat,
        &pre,
        &tconf,
    )
    .unwrap();
    assert_eq!(fits.len(), 2);
    for w in &fits {
        assert!(
            (w.x_t - 6.0).abs() / 6.0 < 0.05,
            "window {}: x_T {} off the generating 6",
            w.window_start,
            w.x_t
        );
    }
    pass(9, "calibration round-trip");
}

/// Real-data calibration; needs the two JHU CSSE global time-series CSVs in
/// $KEC_JHU_DATA (confirmed + recovered).
#[test]
#[ignore = "needs JHU CSSE data, set KEC_JHU_DATA"]
fn criterion_9_calibration_jhu_italy() {
    let dir = std::path::PathBuf::from(
        std::env::var("KEC_JHU_DATA").expect("KEC_JHU_DATA not set"),
    );
    let series = kec::calib::data::load_jhu_csv::<f64>(
        &dir.join("time_series_covid19_confirmed_global.csv"),
        &dir.join("time_series_covid19_recovered_global.csv"),
        "Italy",
        kec::calib::data::InfectedKind::Active,
        Some(59_641_488.0),
    )
    .unwrap();
    let pre = PreFitConfig::for_population(59_641_488.0);
    let t0 = date(2020, 2, 24);
    let t_lockdown = date(2020, 3, 9);
    let t_f = date(2020, 5, 18);
    let fit = fit_unconstrained(&series, t0, t_lockdown, &pre).unwrap();
    assert!(
        fit.beta_hat >= 0.0176 && fit.beta_hat <= 0.0226,
        "beta {} outside the reported band",
        fit.beta_hat
    );
    assert!((fit.lambda_hat - 5.0).abs() < 0.25, "lambda {}", fit.lambda_hat);

    let uniform_fit = fit_targets(
        &series,
        t0,
        t_lockdown,
        t_f,
        fit.beta_hat,
        fit.lambda_hat,
        &pre,
        &TargetFitConfig::default_with(Selective::Uniform),
    )
    .unwrap();
    let sqrtx_fit = fit_targets(
        &series,
        t0,
        t_lockdown,
        t_f,
        fit.beta_hat,
        fit.lambda_hat,
        &pre,
        &TargetFitConfig::default_with(Selective::SqrtX),
    )
    .unwrap();
    for k in 0..2 {
        assert!(
            sqrtx_fit[k].x_t > uniform_fit[k].x_t,
            "window {k}: sqrt-x target {} not above uniform {}",
            sqrtx_fit[k].x_t,
            uniform_fit[k].x_t
        );
    }

    // retrospective swap: replay the uniform-fitted targets selectively
    let ps = [0.0, 0.5, 1.0];
    let replay_uniform = retrospective_swap(
        &uniform_fit,
        t0,
        t_lockdown,
        fit.beta_hat,
        fit.lambda_hat,
        &pre,
        &TargetFitConfig::default_with(Selective::Uniform),
        &ps,
    )
    .unwrap();
    let replay_sqrtx = retrospective_swap(
        &uniform_fit,
        t0,
        t_lockdown,
        fit.beta_hat,
        fit.lambda_hat,
        &pre,
        &TargetFitConfig::default_with(Selective::SqrtX),
        &ps,
    )
    .unwrap();
    for (u, s) in replay_uniform.iter().zip(&replay_sqrtx) {
        assert!(
            s.peak < u.peak,
            "p = {}: selective peak {:.4e} not below uniform {:.4e}",
            u.p,
            s.peak,
            u.peak
        );
    }
    pass(9, "calibration on JHU data");
}

// criterion 10 ----------------------------------------------------------

#[test]
fn criterion_10_self_convergence() {
    // RK4 on the closed system: 4th-order dt refinement
    let epi = EpiParams { beta: 0.02, zeta: 1.0 / 3.32, gamma: 0.1 };
    let initial = MacroState {
        rho: PerCompartment([0.97, 0.01, 0.01, 0.01]),
        m: PerCompartment::splat(10.0),
        t: 0.0,
    };
    let lam = lambda_factor(DeltaValue::new(1.0).unwrap(), 5.0).unwrap();
    let run = |dt: f64| {
        *rk4_integrate(initial, &epi, lam, &ControlSpec::off(), None, dt, 10.0)
            .unwrap()
            .last()
            .unwrap()
    };
    let reference = run(1.0 / 256.0);
    let err = |s: MacroState<f64>| {
        let mut e = 0.0f64;
        for j in Compartment::ALL {
            e = e.max((s.rho[j] - reference.rho[j]).abs());
            e = e.max((s.m[j] - reference.m[j]).abs());
        }
        e
    };
    let e1 = err(run(0.5));
    let e2 = err(run(0.25));
    let order = (e1 / e2).log2();
    assert!(
        (3.5..=4.5).contains(&order),
        "RK4 order estimate {order:.2} (errors {e1:.3e}, {e2:.3e})"
    );

    // splitting: 1st-order self-convergence on a fixed kinetic scenario
    let grid = Grid1D::new(50.0, 501).unwrap();
    let scenario = |dt: f64| KineticScenario {
        params: contact(0.1),
        epi: EpiParams { beta: 0.0025, zeta: 0.3, gamma: 0.1 },
        control: ControlSpec::off(),
        dt,
        t_end: 2.0,
        output_stride: 1000,
        scheme: FluxScheme::ChangCooper,
    };
    let state = gamma_state(uniform(-0.2, 0.2), 2, grid, [0.97, 0.01, 0.01, 0.01], 10.0);
    let run = |dt: f64| run_kinetic(state.clone(), &scenario(dt)).unwrap().final_state;
    let reference = run(0.025);
    let diff = |s: &KineticState<f64>| {
        let mut e = 0.0f64;
        for j in Compartment::ALL {
            for (a, b) in s.coeffs[j].iter().zip(&reference.coeffs[j]) {
                e = e.max((a - b).abs());
            }
        }
        e
    };
    let d1 = diff(&run(0.2));
    let d2 = diff(&run(0.1));
    let ratio = d1 / d2;
    assert!(
        (1.4..=3.0).contains(&ratio),
        "splitting refinement ratio {ratio:.2} (errors {d1:.3e}, {d2:.3e})"
    );
    pass(10, "self-convergence orders");
}

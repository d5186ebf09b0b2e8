//! Regenerates fixtures/synthetic_epi.csv: a noiseless daily series produced
//! by the closed system itself (β = 0.02, λ = 5, p = 1/2), 14 uncontrolled
//! days followed by 14 days under a uniform lockdown with x_T = 6.

use chrono::NaiveDate;
use kec::calib::fit::{states_at_lockdown, PreFitConfig, TargetFitConfig};
use kec::compartment::{Compartment, PerCompartment};
use kec::contact::{lambda_factor, DeltaValue};
use kec::control::{ControlKernel, ControlSpec, Selective};
use kec::macroscopic::{rk4_integrate, run_macro_uncertain, MacroState};
use kec::sgkinetic::EpiParams;
use kec::uq::UncertaintyLaw;

const BETA: f64 = 0.02;
const LAMBDA: f64 = 5.0;
const TARGET: f64 = 6.0;
const PRE_DAYS: usize = 14;
const LOCKDOWN_DAYS: usize = 14;

fn main() {
    let start = NaiveDate::from_ymd_opt(2020, 2, 24).unwrap();
    let pre = PreFitConfig::<f64> {
        rho0: PerCompartment([0.97, 0.01, 0.01, 0.01]),
        beta_bounds: (0.0, 0.05),
        ..PreFitConfig::for_population(1e6)
    };
    let tconf = TargetFitConfig::default_with(Selective::Uniform);
    let epi = EpiParams { beta: BETA, zeta: pre.zeta, gamma: pre.gamma };

    // uncontrolled pre phase, daily marks 0..=PRE_DAYS
    let run = run_macro_uncertain(
        MacroState { rho: pre.rho0, m: PerCompartment::splat(pre.m0), t: 0.0 },
        &epi,
        &UncertaintyLaw::bernoulli(pre.p),
        LAMBDA,
        &ControlSpec::off(),
        Some(pre.m_i_clamp),
        pre.dt,
        PRE_DAYS as f64,
    )
    .unwrap();
    let (rho_i, _) = run.rho_stats(Compartment::I);
    let (rho_r, _) = run.rho_stats(Compartment::R);
    let per_day = (1.0 / pre.dt).round() as usize;
    let mut rows: Vec<(NaiveDate, f64, f64)> = (0..=PRE_DAYS)
        .map(|d| {
            (
                start + chrono::Duration::days(d as i64),
                rho_i[d * per_day],
                rho_r[d * per_day],
            )
        })
        .collect();

    // controlled lockdown phase from the pre-phase endpoint
    let t_lockdown = start + chrono::Duration::days(PRE_DAYS as i64);
    let states = states_at_lockdown(start, t_lockdown, BETA, LAMBDA, &pre).unwrap();
    let spec = ControlSpec {
        selective: Selective::Uniform,
        x_t: PerCompartment::splat(TARGET),
        nu: tconf.nu,
        bbar: ControlKernel::Maxwellian,
    };
    let atoms = [(-1.0, pre.p), (1.0, 1.0 - pre.p)];
    let mut trajs = Vec::new();
    for (s, &(delta, _)) in states.iter().zip(&atoms) {
        let lam = lambda_factor(DeltaValue::new(delta).unwrap(), LAMBDA).unwrap();
        let mut st = *s;
        st.t = 0.0;
        trajs.push(
            rk4_integrate(
                st,
                &epi,
                lam,
                &spec,
                Some(pre.m_i_clamp),
                tconf.dt,
                LOCKDOWN_DAYS as f64,
            )
            .unwrap(),
        );
    }
    let per_day = (1.0 / tconf.dt).round() as usize;
    for day in 1..=LOCKDOWN_DAYS {
        let mut i = 0.0;
        let mut r = 0.0;
        for (traj, &(_, w)) in trajs.iter().zip(&atoms) {
            i += w * traj[day * per_day].rho[Compartment::I];
            r += w * traj[day * per_day].rho[Compartment::R];
        }
        rows.push((t_lockdown + chrono::Duration::days(day as i64), i, r));
    }

    println!("date,infected,recovered");
    for (d, i, r) in rows {
        println!("{d},{i:.12e},{r:.12e}");
    }
}

//! Derivative-free minimizers used by the calibration: a bound-projected
//! Nelder-Mead with deterministic Latin-hypercube restarts and a bracketed
//! golden-section search with a coarse grid fallback.

use crate::error::{KecError, Result};
use crate::real::{r, Real};

/// Relative simplex-diameter convergence threshold.
pub const SIMPLEX_TOL: f64 = 1e-8;

/// Outcome of a multivariate minimization.
#[derive(Debug, Clone)]
pub struct MinResult<R> {
    pub x: Vec<R>,
    pub value: R,
    pub converged: bool,
    /// best objective value after each iteration, across restarts
    pub trace: Vec<R>,
}

fn project<R: Real>(x: &mut [R], lo: &[R], hi: &[R]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = (*v).max(l).min(h);
    }
}

/// Deterministic Latin-hypercube start points: stratum midpoints with a
/// fixed column permutation, scaled to the bounds.
pub fn lhs_starts<R: Real>(n_starts: usize, lo: &[R], hi: &[R]) -> Vec<Vec<R>> {
    let dim = lo.len();
    // fixed full-cycle permutation: stratum (k·(d+1) + d) mod n for point k
    (0..n_starts)
        .map(|k| {
            (0..dim)
                .map(|d| {
                    let stratum = (k * (d + 1) + d) % n_starts;
                    let frac = (r::<R>(stratum as f64) + r(0.5)) / r(n_starts as f64);
                    lo[d] + frac * (hi[d] - lo[d])
                })
                .collect()
        })
        .collect()
}

fn simplex_diameter<R: Real>(simplex: &[Vec<R>], scale: &[R]) -> R {
    let mut diam = R::zero();
    for a in simplex {
        for b in simplex {
            for ((&va, &vb), &s) in a.iter().zip(b).zip(scale) {
                let d = ((va - vb) / s).abs();
                if d > diam {
                    diam = d;
                }
            }
        }
    }
    diam
}

fn nelder_mead_once<R: Real>(
    f: &mut impl FnMut(&[R]) -> Result<R>,
    start: &[R],
    lo: &[R],
    hi: &[R],
    max_iter: usize,
    trace: &mut Vec<R>,
) -> Result<(Vec<R>, R, bool)> {
    let dim = start.len();
    let scale: Vec<R> = lo.iter().zip(hi).map(|(&l, &h)| (h - l).max(r(1e-30))).collect();
    // initial simplex: start plus a 5% bound-range step per coordinate
    let mut simplex: Vec<Vec<R>> = vec![start.to_vec()];
    for d in 0..dim {
        let mut v = start.to_vec();
        let step = r::<R>(0.05) * scale[d];
        v[d] = if v[d] + step <= hi[d] { v[d] + step } else { v[d] - step };
        project(&mut v, lo, hi);
        simplex.push(v);
    }
    let mut values: Vec<R> = Vec::with_capacity(dim + 1);
    for v in &simplex {
        values.push(f(v)?);
    }
    let (alpha, gamma, rho_c, sigma): (R, R, R, R) = (r(1.0), r(2.0), r(0.5), r(0.5));
    let mut converged = false;
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        let simplex_sorted: Vec<Vec<R>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let values_sorted: Vec<R> = order.iter().map(|&i| values[i]).collect();
        simplex = simplex_sorted;
        values = values_sorted;
        trace.push(values[0]);
        if simplex_diameter(&simplex, &scale) < r(SIMPLEX_TOL) {
            converged = true;
            break;
        }
        // centroid of all but the worst
        let mut centroid = vec![R::zero(); dim];
        for v in simplex.iter().take(dim) {
            for (c, &vi) in centroid.iter_mut().zip(v) {
                *c = *c + vi / r(dim as f64);
            }
        }
        let worst = simplex[dim].clone();
        let mut reflect: Vec<R> = centroid
            .iter()
            .zip(&worst)
            .map(|(&c, &w)| c + alpha * (c - w))
            .collect();
        project(&mut reflect, lo, hi);
        let f_r = f(&reflect)?;
        if f_r < values[0] {
            let mut expand: Vec<R> = centroid
                .iter()
                .zip(&worst)
                .map(|(&c, &w)| c + gamma * (c - w))
                .collect();
            project(&mut expand, lo, hi);
            let f_e = f(&expand)?;
            if f_e < f_r {
                simplex[dim] = expand;
                values[dim] = f_e;
            } else {
                simplex[dim] = reflect;
                values[dim] = f_r;
            }
        } else if f_r < values[dim - 1] {
            simplex[dim] = reflect;
            values[dim] = f_r;
        } else {
            let mut contract: Vec<R> = centroid
                .iter()
                .zip(&worst)
                .map(|(&c, &w)| c + rho_c * (w - c))
                .collect();
            project(&mut contract, lo, hi);
            let f_c = f(&contract)?;
            if f_c < values[dim] {
                simplex[dim] = contract;
                values[dim] = f_c;
            } else {
                // shrink toward the best vertex
                for k in 1..=dim {
                    let best = simplex[0].clone();
                    for (vi, &bi) in simplex[k].iter_mut().zip(&best) {
                        *vi = bi + sigma * (*vi - bi);
                    }
                    project(&mut simplex[k], lo, hi);
                    values[k] = f(&simplex[k])?;
                }
            }
        }
    }
    let mut best = 0;
    for k in 1..=dim {
        if values[k] < values[best] {
            best = k;
        }
    }
    Ok((simplex[best].clone(), values[best], converged))
}

/// Bound-projected Nelder-Mead restarted from `n_restarts` deterministic
/// Latin-hypercube points; the best converged result wins. If no restart
/// converges, the best-so-far point is returned flagged `converged: false`.
pub fn nelder_mead<R: Real>(
    mut f: impl FnMut(&[R]) -> Result<R>,
    lo: &[R],
    hi: &[R],
    n_restarts: usize,
    max_iter: usize,
) -> Result<MinResult<R>> {
    if lo.len() != hi.len() || lo.is_empty() {
        return Err(KecError::LengthMismatch { expected: lo.len(), got: hi.len() });
    }
    for (&l, &h) in lo.iter().zip(hi) {
        if !(l < h) {
            return Err(KecError::InvalidParameter(format!(
                "bad bound pair [{l}, {h}]"
            )));
        }
    }
    let starts = lhs_starts(n_restarts.max(1), lo, hi);
    let mut best: Option<(Vec<R>, R, bool)> = None;
    let mut trace = Vec::new();
    for s in &starts {
        let (x, v, conv) = nelder_mead_once(&mut f, s, lo, hi, max_iter, &mut trace)?;
        let better = match &best {
            None => true,
            Some((_, bv, _)) => v < *bv,
        };
        if better {
            best = Some((x, v, conv));
        }
    }
    let (x, value, converged) = best.unwrap();
    Ok(MinResult { x, value, converged, trace })
}

/// Golden-section search on [a, b]; `f` must be unimodal there.
pub fn golden_section<R: Real>(
    f: &mut impl FnMut(R) -> Result<R>,
    mut a: R,
    mut b: R,
    tol: R,
) -> Result<(R, R)> {
    let inv_phi: R = r((5.0f64.sqrt() - 1.0) / 2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let mid = (a + b) * r(0.5);
    let fm = f(mid)?;
    Ok((mid, fm))
}

/// Number of points of the bracketing grid scan.
pub const GRID_SCAN_POINTS: usize = 64;

/// Outcome of the 1-D bounded minimization.
#[derive(Debug, Clone, Copy)]
pub struct ScalarMin<R> {
    pub x: R,
    pub value: R,
    /// objective spread over the scan grid was negligible
    pub degenerate: bool,
}

/// Bounded scalar minimization: a 64-point grid scan brackets the minimum,
/// golden-section refines inside the bracketing neighbours. A window whose
/// objective is flat over the scan (relative spread < 1e-12) is flagged
/// degenerate and resolved at `warm` when given.
pub fn minimize_scalar<R: Real>(
    mut f: impl FnMut(R) -> Result<R>,
    lo: R,
    hi: R,
    warm: Option<R>,
    tol: R,
) -> Result<ScalarMin<R>> {
    if !(lo < hi) {
        return Err(KecError::InvalidParameter(format!("bad interval [{lo}, {hi}]")));
    }
    let n = GRID_SCAN_POINTS;
    let mut xs: Vec<R> = (0..n)
        .map(|k| lo + (hi - lo) * r::<R>(k as f64) / r((n - 1) as f64))
        .collect();
    if let Some(w) = warm {
        if w > lo && w < hi {
            xs.push(w);
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        }
    }
    let mut vals = Vec::with_capacity(xs.len());
    for &x in &xs {
        vals.push(f(x)?);
    }
    let mut kmin = 0;
    let (mut vmin, mut vmax) = (vals[0], vals[0]);
    for (k, &v) in vals.iter().enumerate() {
        if v < vmin {
            vmin = v;
            kmin = k;
        }
        if v > vmax {
            vmax = v;
        }
    }
    let spread = vmax - vmin;
    if spread < r::<R>(1e-12) * vmax.abs().max(r(1e-300)) {
        let x = warm.unwrap_or(xs[kmin]);
        return Ok(ScalarMin { x, value: f(x)?, degenerate: true });
    }
    let a = if kmin == 0 { lo } else { xs[kmin - 1] };
    let b = if kmin + 1 == xs.len() { hi } else { xs[kmin + 1] };
    let (x, value) = golden_section(&mut f, a, b, tol)?;
    Ok(ScalarMin { x, value, degenerate: false })
}

//! Small direct solvers: scalar tridiagonal (Thomas), dense LU for the
//! stochastic-Galerkin mode blocks, and a block-tridiagonal sweep built on it.

use crate::error::{KecError, Result};
use crate::real::Real;

/// Solve a tridiagonal system in place. `lower[i]` couples row `i` to `i-1`
/// (with `lower[0]` unused), `upper[i]` couples row `i` to `i+1` (with the
/// last entry unused).
pub fn solve_tridiagonal<R: Real>(
    lower: &[R],
    diag: &[R],
    upper: &[R],
    rhs: &mut [R],
) -> Result<()> {
    let n = diag.len();
    let mut c_prime = vec![R::zero(); n];
    let mut denom = diag[0];
    if denom == R::zero() || !denom.is_finite() {
        return Err(KecError::SolverBreakdown("zero pivot in tridiagonal solve".into()));
    }
    c_prime[0] = upper[0] / denom;
    rhs[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c_prime[i - 1];
        if denom == R::zero() || !denom.is_finite() {
            return Err(KecError::SolverBreakdown(format!(
                "zero or non-finite pivot at row {i} in tridiagonal solve"
            )));
        }
        if i < n - 1 {
            c_prime[i] = upper[i] / denom;
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - c_prime[i] * rhs[i + 1];
    }
    Ok(())
}

/// Dense LU factorization with partial pivoting of an `m x m` row-major matrix.
pub struct LuFactors<R> {
    m: usize,
    lu: Vec<R>,
    pivots: Vec<usize>,
}

impl<R: Real> LuFactors<R> {
    pub fn factor(mut a: Vec<R>, m: usize) -> Result<Self> {
        debug_assert_eq!(a.len(), m * m);
        let mut pivots = vec![0usize; m];
        for k in 0..m {
            let mut p = k;
            let mut max = a[k * m + k].abs();
            for i in k + 1..m {
                let v = a[i * m + k].abs();
                if v > max {
                    max = v;
                    p = i;
                }
            }
            if max == R::zero() || !max.is_finite() {
                return Err(KecError::SolverBreakdown(format!(
                    "singular block at pivot column {k}"
                )));
            }
            pivots[k] = p;
            if p != k {
                for j in 0..m {
                    a.swap(k * m + j, p * m + j);
                }
            }
            let inv_pivot = R::one() / a[k * m + k];
            for i in k + 1..m {
                let factor = a[i * m + k] * inv_pivot;
                a[i * m + k] = factor;
                for j in k + 1..m {
                    let upd = a[k * m + j];
                    a[i * m + j] = a[i * m + j] - factor * upd;
                }
            }
        }
        Ok(LuFactors { m, lu: a, pivots })
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [R]) {
        let m = self.m;
        for k in 0..m {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..m {
                b[i] = b[i] - self.lu[i * m + k] * bk;
            }
        }
        for i in (0..m).rev() {
            let mut acc = b[i];
            for j in i + 1..m {
                acc = acc - self.lu[i * m + j] * b[j];
            }
            b[i] = acc / self.lu[i * m + i];
        }
    }
}

/// In-place `m x m` row-major matrix multiply accumulate: `out -= a * b`.
fn sub_mat_mul<R: Real>(out: &mut [R], a: &[R], b: &[R], m: usize) {
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == R::zero() {
                continue;
            }
            for j in 0..m {
                out[i * m + j] = out[i * m + j] - aik * b[k * m + j];
            }
        }
    }
}

/// `out -= a * v` for an `m`-vector `v`.
fn sub_mat_vec<R: Real>(out: &mut [R], a: &[R], v: &[R], m: usize) {
    for i in 0..m {
        let mut acc = R::zero();
        for k in 0..m {
            acc = acc + a[i * m + k] * v[k];
        }
        out[i] = out[i] - acc;
    }
}

/// Solve a block-tridiagonal system with `n` blocks of size `m`.
///
/// `lower[i]` couples block-row `i` to `i-1` (entry 0 unused), `upper[i]`
/// couples block-row `i` to `i+1` (last entry unused). `rhs` is `n * m`
/// contiguous and is overwritten with the solution.
pub fn solve_block_tridiagonal<R: Real>(
    lower: &[Vec<R>],
    diag: &[Vec<R>],
    upper: &[Vec<R>],
    rhs: &mut [R],
    m: usize,
) -> Result<()> {
    let n = diag.len();
    debug_assert_eq!(rhs.len(), n * m);
    // forward sweep: G_i = D̃_i^{-1} U_i, g_i = D̃_i^{-1} y_i
    let mut g_mats: Vec<Vec<R>> = Vec::with_capacity(n);
    let mut col = vec![R::zero(); m];
    let mut prev_lu: Option<LuFactors<R>> = None;
    for i in 0..n {
        let mut d_tilde = diag[i].clone();
        if i > 0 {
            let lu_prev = prev_lu.as_ref().unwrap();
            let mut g_prev = rhs[(i - 1) * m..i * m].to_vec();
            lu_prev.solve(&mut g_prev);
            sub_mat_mul(&mut d_tilde, &lower[i], &g_mats[i - 1], m);
            let (head, tail) = rhs.split_at_mut(i * m);
            sub_mat_vec(&mut tail[..m], &lower[i], &g_prev, m);
            // keep g_{i-1} for the back substitution
            head[(i - 1) * m..].copy_from_slice(&g_prev);
        }
        let lu = LuFactors::factor(d_tilde, m)?;
        // G_i = D̃_i^{-1} upper_i, column by column
        let mut g_mat = vec![R::zero(); m * m];
        if i < n - 1 {
            for j in 0..m {
                for (k, c) in col.iter_mut().enumerate() {
                    *c = upper[i][k * m + j];
                }
                lu.solve(&mut col);
                for k in 0..m {
                    g_mat[k * m + j] = col[k];
                }
            }
        }
        g_mats.push(g_mat);
        prev_lu = Some(lu);
    }
    // last block rhs solve
    let lu = prev_lu.unwrap();
    let start = (n - 1) * m;
    lu.solve(&mut rhs[start..start + m]);
    // back substitution
    for i in (0..n - 1).rev() {
        let (head, tail) = rhs.split_at_mut((i + 1) * m);
        let x_next = &tail[..m];
        let x_cur = &mut head[i * m..];
        for row in 0..m {
            let mut acc = R::zero();
            for k in 0..m {
                acc = acc + g_mats[i][row * m + k] * x_next[k];
            }
            x_cur[row] = x_cur[row] - acc;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tridiagonal_known_solution() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1] -> x = [1, 1, 1]
        let lower = vec![0.0, -1.0, -1.0];
        let diag = vec![2.0, 2.0, 2.0];
        let upper = vec![-1.0, -1.0, 0.0];
        let mut rhs = vec![1.0, 0.0, 1.0];
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs).unwrap();
        for v in rhs {
            assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn lu_solves_random_system() {
        let a = vec![4.0, 1.0, 2.0, 1.0, 5.0, 1.0, 2.0, 1.0, 6.0];
        let x_true = [1.0, -2.0, 3.0];
        let mut b = [4.0 - 2.0 + 6.0, 1.0 - 10.0 + 3.0, 2.0 - 2.0 + 18.0];
        let lu = LuFactors::factor(a, 3).unwrap();
        lu.solve(&mut b);
        for (got, want) in b.iter().zip(x_true.iter()) {
            assert_relative_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn lu_pivots_zero_leading_entry() {
        let a = vec![0.0, 1.0, 1.0, 0.0];
        let lu = LuFactors::factor(a, 2).unwrap();
        let mut b = [2.0, 3.0];
        lu.solve(&mut b);
        assert_relative_eq!(b[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(b[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn block_tridiagonal_matches_scalar_thomas() {
        // blocks of size 1 must reduce to the scalar solver
        let n = 50;
        let lower_s: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { -(i as f64) * 0.01 - 0.3 }).collect();
        let diag_s: Vec<f64> = (0..n).map(|i| 2.0 + 0.05 * i as f64).collect();
        let upper_s: Vec<f64> = (0..n).map(|i| if i == n - 1 { 0.0 } else { -0.7 }).collect();
        let rhs0: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();

        let mut rhs_a = rhs0.clone();
        solve_tridiagonal(&lower_s, &diag_s, &upper_s, &mut rhs_a).unwrap();

        let lower: Vec<Vec<f64>> = lower_s.iter().map(|&v| vec![v]).collect();
        let diag: Vec<Vec<f64>> = diag_s.iter().map(|&v| vec![v]).collect();
        let upper: Vec<Vec<f64>> = upper_s.iter().map(|&v| vec![v]).collect();
        let mut rhs_b = rhs0;
        solve_block_tridiagonal(&lower, &diag, &upper, &mut rhs_b, 1).unwrap();
        for (a, b) in rhs_a.iter().zip(rhs_b.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn block_tridiagonal_residual_small() {
        // 2x2 blocks, verify A x = b by residual
        let n = 20;
        let m = 2;
        let mut lower = vec![vec![0.0; 4]; n];
        let mut diag = vec![vec![0.0; 4]; n];
        let mut upper = vec![vec![0.0; 4]; n];
        for i in 0..n {
            let s = i as f64 * 0.1;
            diag[i] = vec![4.0 + s, 0.5, -0.3, 5.0 - s * 0.2];
            if i > 0 {
                lower[i] = vec![-1.0, 0.2, 0.1, -0.8 - s * 0.05];
            }
            if i < n - 1 {
                upper[i] = vec![-0.9, -0.1, 0.3, -1.1];
            }
        }
        let b: Vec<f64> = (0..n * m).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut x = b.clone();
        solve_block_tridiagonal(&lower, &diag, &upper, &mut x, m).unwrap();
        // residual
        for i in 0..n {
            for row in 0..m {
                let mut acc = 0.0;
                for k in 0..m {
                    acc += diag[i][row * m + k] * x[i * m + k];
                    if i > 0 {
                        acc += lower[i][row * m + k] * x[(i - 1) * m + k];
                    }
                    if i < n - 1 {
                        acc += upper[i][row * m + k] * x[(i + 1) * m + k];
                    }
                }
                assert_relative_eq!(acc, b[i * m + row], epsilon = 1e-10);
            }
        }
    }
}

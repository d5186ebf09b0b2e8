//! Orthonormal polynomial bases, quadrature, projection and reconstruction
//! for a one-dimensional random input `z`.
//!
//! Uniform laws use shifted-scaled Legendre polynomials with Gauss-Legendre
//! quadrature; a two-atom Bernoulli law is handled by exact two-point
//! collocation, which makes every projected statistic exact.

use serde::{Deserialize, Serialize};

use crate::error::{KecError, Result};
use crate::real::{r, Real};

/// How the tail parameter depends on the random input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMap {
    /// δ(z) = z
    Identity,
    /// δ(z) = 1 - 2z
    AffineFlip,
}

impl DeltaMap {
    #[inline]
    pub fn apply<R: Real>(self, z: R) -> R {
        match self {
            DeltaMap::Identity => z,
            DeltaMap::AffineFlip => R::one() - r::<R>(2.0) * z,
        }
    }
}

/// Distribution of the random input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LawKind<R> {
    UniformInterval { a: R, b: R },
    Bernoulli { p: R },
}

/// The distribution of `z` together with the map δ(z) and quadrature order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyLaw<R> {
    pub kind: LawKind<R>,
    pub delta_map: DeltaMap,
    /// Requested quadrature node count; the basis enforces at least `2M + 2`.
    /// Ignored for Bernoulli laws.
    pub quad_order: usize,
}

impl<R: Real> UncertaintyLaw<R> {
    pub fn uniform(a: R, b: R, delta_map: DeltaMap) -> Self {
        UncertaintyLaw {
            kind: LawKind::UniformInterval { a, b },
            delta_map,
            quad_order: 0,
        }
    }

    pub fn bernoulli(p: R) -> Self {
        UncertaintyLaw {
            kind: LawKind::Bernoulli { p },
            delta_map: DeltaMap::AffineFlip,
            quad_order: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LawKind::UniformInterval { a, b } => {
                if a >= b {
                    return Err(KecError::InvalidParameter(format!(
                        "degenerate interval [{a}, {b}]"
                    )));
                }
                let one = R::one();
                for z in [a, b] {
                    let d = self.delta_map.apply(z);
                    if d < -one || d > one {
                        return Err(KecError::InvalidParameter(format!(
                            "delta({z}) = {d} outside [-1, 1]"
                        )));
                    }
                }
            }
            LawKind::Bernoulli { p } => {
                if p < R::zero() || p > R::one() {
                    return Err(KecError::InvalidParameter(format!("Bernoulli p = {p}")));
                }
            }
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] (weights sum to 2).
pub fn gauss_legendre<R: Real>(n: usize) -> (Vec<R>, Vec<R>) {
    let mut nodes = vec![R::zero(); n];
    let mut weights = vec![R::zero(); n];
    let two = r::<R>(2.0);
    for i in 0..n {
        // Chebyshev-like initial guess, refined by Newton iteration on P_n
        let guess =
            (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut x: R = r(guess);
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x = x - dx;
            if dx.abs() < r(1e-16) {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = two / ((R::one() - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre_with_derivative<R: Real>(n: usize, x: R) -> (R, R) {
    let one = R::one();
    if n == 0 {
        return (one, R::zero());
    }
    let mut p_prev = one;
    let mut p = x;
    for k in 1..n {
        let kf: R = r(k as f64);
        let next = ((r::<R>(2.0) * kf + one) * x * p - kf * p_prev) / (kf + one);
        p_prev = p;
        p = next;
    }
    let nf: R = r(n as f64);
    let dp = nf * (x * p - p_prev) / (x * x - one);
    (p, dp)
}

/// Orthonormal gPC basis with its quadrature rule.
#[derive(Debug, Clone)]
pub struct GpcBasis<R> {
    pub order: usize,
    pub law: UncertaintyLaw<R>,
    /// quadrature abscissae in z
    pub nodes: Vec<R>,
    /// nonnegative weights summing to 1
    pub weights: Vec<R>,
    /// basis_at_nodes[h][q] = Ψ_h(z_q)
    pub basis_at_nodes: Vec<Vec<R>>,
}

impl<R: Real> GpcBasis<R> {
    pub fn n_quad(&self) -> usize {
        self.nodes.len()
    }

    /// δ(z_q) for every quadrature node.
    pub fn delta_at_nodes(&self) -> Vec<R> {
        self.nodes.iter().map(|&z| self.law.delta_map.apply(z)).collect()
    }

    /// Evaluate Ψ_0..Ψ_M at an arbitrary point z.
    pub fn eval(&self, z: R) -> Vec<R> {
        match self.law.kind {
            LawKind::UniformInterval { a, b } => {
                let xi = (r::<R>(2.0) * z - a - b) / (b - a);
                let mut out = Vec::with_capacity(self.order + 1);
                let mut p_prev = R::one();
                let mut p = xi;
                for h in 0..=self.order {
                    let norm = (r::<R>(2.0 * h as f64) + R::one()).sqrt();
                    let value = if h == 0 { R::one() } else { p };
                    out.push(norm * value);
                    if h >= 1 {
                        let kf: R = r(h as f64);
                        let next =
                            ((r::<R>(2.0) * kf + R::one()) * xi * p - kf * p_prev) / (kf + R::one());
                        p_prev = p;
                        p = next;
                    }
                }
                out
            }
            LawKind::Bernoulli { p } => {
                let mut out = vec![R::one()];
                if self.order >= 1 {
                    let std = (p * (R::one() - p)).sqrt();
                    out.push((z - p) / std);
                }
                out
            }
        }
    }

    /// Project nodal samples onto the basis: ĝ_h = Σ_q w_q g(z_q) Ψ_h(z_q).
    pub fn project(&self, samples_at_nodes: &[R]) -> Result<Vec<R>> {
        if samples_at_nodes.len() != self.n_quad() {
            return Err(KecError::LengthMismatch {
                expected: self.n_quad(),
                got: samples_at_nodes.len(),
            });
        }
        let mut coeffs = vec![R::zero(); self.order + 1];
        for (h, coeff) in coeffs.iter_mut().enumerate() {
            let mut acc = R::zero();
            for q in 0..self.n_quad() {
                acc = acc + self.weights[q] * samples_at_nodes[q] * self.basis_at_nodes[h][q];
            }
            *coeff = acc;
        }
        Ok(coeffs)
    }

    /// Reconstruct the expansion at quadrature node `q`.
    pub fn reconstruct_at_node(&self, coeffs: &[R], q: usize) -> R {
        let mut acc = R::zero();
        for (h, &c) in coeffs.iter().enumerate() {
            acc = acc + c * self.basis_at_nodes[h][q];
        }
        acc
    }

    /// Reconstruct the expansion at an arbitrary z.
    pub fn reconstruct(&self, coeffs: &[R], z: R) -> R {
        let psi = self.eval(z);
        coeffs.iter().zip(psi.iter()).map(|(&c, &p)| c * p).sum()
    }
}

/// Build the orthonormal basis for `law` up to polynomial order `order`.
pub fn build_basis<R: Real>(law: UncertaintyLaw<R>, order: usize) -> Result<GpcBasis<R>> {
    law.validate()?;
    match law.kind {
        LawKind::UniformInterval { a, b } => {
            let n_quad = law.quad_order.max(2 * order + 2);
            let (xi, w) = gauss_legendre::<R>(n_quad);
            let half = r::<R>(0.5);
            let nodes: Vec<R> = xi
                .iter()
                .map(|&x| half * ((b - a) * x + a + b))
                .collect();
            let weights: Vec<R> = w.iter().map(|&wq| half * wq).collect();
            let mut basis = GpcBasis {
                order,
                law,
                nodes,
                weights,
                basis_at_nodes: Vec::new(),
            };
            let mut at_nodes = vec![vec![R::zero(); n_quad]; order + 1];
            for (q, &z) in basis.nodes.iter().enumerate() {
                let psi = basis.eval(z);
                for h in 0..=order {
                    at_nodes[h][q] = psi[h];
                }
            }
            basis.basis_at_nodes = at_nodes;
            Ok(basis)
        }
        LawKind::Bernoulli { p } => {
            let degenerate = p == R::zero() || p == R::one();
            let max_order = if degenerate { 0 } else { 1 };
            if order > max_order {
                return Err(KecError::BasisOrder {
                    order,
                    law: format!("Bernoulli({p})"),
                    reason: "a two-atom measure supports at most two orthonormal polynomials"
                        .into(),
                });
            }
            // z = 1 with probability p (δ = -1 under AffineFlip), z = 0 otherwise
            let nodes = vec![R::one(), R::zero()];
            let weights = vec![p, R::one() - p];
            let mut basis = GpcBasis {
                order,
                law,
                nodes,
                weights,
                basis_at_nodes: Vec::new(),
            };
            let mut at_nodes = vec![vec![R::zero(); 2]; order + 1];
            for (q, &z) in basis.nodes.iter().enumerate() {
                let psi = basis.eval(z);
                for h in 0..=order {
                    at_nodes[h][q] = psi[h];
                }
            }
            basis.basis_at_nodes = at_nodes;
            Ok(basis)
        }
    }
}

/// Mean and variance of an expansion in an orthonormal basis:
/// mean = ĝ_0, variance = Σ_{h≥1} ĝ_h².
pub fn expectation_and_variance<R: Real>(coeffs: &[R]) -> (R, R) {
    let mean = coeffs.first().copied().unwrap_or_else(R::zero);
    let var = coeffs.iter().skip(1).map(|&c| c * c).sum();
    (mean, var)
}

/// Mean and variance of nodal samples under the quadrature rule.
pub fn nodal_statistics<R: Real>(samples: &[R], weights: &[R]) -> (R, R) {
    let mean: R = samples.iter().zip(weights).map(|(&s, &w)| w * s).sum();
    let var: R = samples
        .iter()
        .zip(weights)
        .map(|(&s, &w)| w * (s - mean) * (s - mean))
        .sum();
    (mean, var)
}

//! Scalar abstraction for the numerical core.
//!
//! Every solver in this crate is generic over [`Real`] so the same code runs
//! in `f64` (the default throughout the CLI) or `f32`. Concrete aliases for
//! the common types live at the crate root.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the solvers.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
}

/// Shorthand for converting an `f64` literal into the working scalar type.
#[inline]
pub fn r<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("f64 constant not representable in scalar type")
}

/// Natural log of the Gamma function, Lanczos approximation (g = 7, n = 9).
///
/// Accurate to ~1e-13 in `f64` for positive arguments; used for the
/// closed-form Gamma / inverse-Gamma normalization constants.
pub fn ln_gamma<R: Real>(x: R) -> R {
    const COEFFS: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    let half: R = r(0.5);
    let one = R::one();
    if x < half {
        // reflection formula
        let pi: R = r(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(one - x);
    }
    let x = x - one;
    let g: R = r(7.0);
    let mut acc: R = r(COEFFS[0]);
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc = acc + r::<R>(c) / (x + r(i as f64));
    }
    let t = x + g + half;
    let sqrt_two_pi: R = r((2.0 * std::f64::consts::PI).sqrt());
    sqrt_two_pi.ln() + (x + half) * t.ln() - t + acc.ln()
}

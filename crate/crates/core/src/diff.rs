//! Finite differences with Richardson extrapolation.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// `eps^(1/3) · max(1, scale)`.
pub fn default_step(scale: f64) -> f64 {
    f64::EPSILON.cbrt() * scale.max(1.0)
}

/// A derivative estimate with its Richardson error estimate.
#[derive(Clone, Debug)]
pub struct Derivative {
    pub value: DVector<f64>,
    /// `max |D(h) - D(h/2)| / 15`.
    pub error: f64,
    /// `max |D(h) - D(h/2)|` before scaling.
    pub disagreement: f64,
}

/// Fourth-order central difference of `f` at 0.
pub fn five_point<F>(f: &F, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64) -> Result<DVector<f64>>,
{
    let p1 = f(h)?;
    let m1 = f(-h)?;
    let p2 = f(2.0 * h)?;
    let m2 = f(-2.0 * h)?;
    Ok(((p1 - m1) * 8.0 - (p2 - m2)) / (12.0 * h))
}

/// `(16 D(h/2) - D(h)) / 15` with the five-point stencil `D`.
pub fn richardson<F>(f: F, h: f64) -> Result<Derivative>
where
    F: Fn(f64) -> Result<DVector<f64>>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("finite-difference step {h}")));
    }
    let d1 = five_point(&f, h)?;
    let d2 = five_point(&f, 0.5 * h)?;
    let diff = (&d2 - &d1).amax();
    let value = (d2 * 16.0 - d1) / 15.0;
    if value.iter().any(|v| !v.is_finite()) {
        return Err(Error::UnreliableDerivative {
            disagreement: f64::INFINITY,
        });
    }
    Ok(Derivative {
        value,
        error: diff / 15.0,
        disagreement: diff,
    })
}

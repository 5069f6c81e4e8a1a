use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Vectors with an L2 norm at or below this cannot be normalized.
pub const NORMALIZE_EPS: f64 = 1e-8;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// Scales `v` onto the unit sphere.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if norm <= NORMALIZE_EPS || !norm.is_finite() {
        return Err(Error::DegenerateVector { norm });
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

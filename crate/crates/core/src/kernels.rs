//! Fourier symbols of the interaction kernels.
//!
//! All symbols are real, even in each frequency component, and bounded, so
//! every nonlocal term is applied as a Fourier multiplier.

use std::f64::consts::PI;

use thiserror::Error;

use crate::grid::Grid2D;
use crate::special::{erfcx, integrate_to_infinity};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("polarization component must satisfy 0 <= n3^2 <= 1, got n3^2 = {0}")]
    BadPolarization(f64),
    #[error("real-space kernel is not evaluated at the origin")]
    Origin,
    #[error("frequency magnitude must be positive and finite, got {0}")]
    BadFrequency(f64),
}

/// `ξ1²/|ξ|² − 1/2`; zero at the origin.
pub fn symbol_high_freq(xi1: f64, xi2: f64) -> f64 {
    let k2 = xi1 * xi1 + xi2 * xi2;
    if k2 == 0.0 {
        0.0
    } else {
        xi1 * xi1 / k2 - 0.5
    }
}

/// Weight of the quadratic form on frequency `ξ`; equals `a` at the origin.
pub fn symbol_fab(xi1: f64, xi2: f64, a: f64, b: f64) -> f64 {
    let k2 = xi1 * xi1 + xi2 * xi2;
    if k2 == 0.0 {
        a
    } else {
        ((a + 0.5 * b) * xi1 * xi1 + (a - 0.5 * b) * xi2 * xi2) / k2
    }
}

/// `G(k) = ∫ e^{-s²/(4π)} / (k² + s²) ds` in closed form.
pub fn g_closed_form(k: f64) -> f64 {
    (PI / k) * erfcx(k / (2.0 * PI.sqrt()))
}

/// `G(k)` by adaptive quadrature, for validating [`g_closed_form`].
pub fn g_quadrature(k: f64) -> Result<f64, KernelError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(KernelError::BadFrequency(k));
    }
    let k2 = k * k;
    let r = integrate_to_infinity(
        |s| (-s * s / (4.0 * PI)).exp() / (k2 + s * s),
        0.0,
        0.0,
        1e-13,
    );
    Ok(2.0 * r.value)
}

fn check_n3_squared(n3_sq: f64) -> Result<(), KernelError> {
    if n3_sq.is_finite() && (0.0..=1.0).contains(&n3_sq) {
        Ok(())
    } else {
        Err(KernelError::BadPolarization(n3_sq))
    }
}

/// Quasi-2D symbol `m(ξ)` parametrized by `n3²` directly; zero at the origin.
pub fn symbol_quasi2d_sq(xi1: f64, xi2: f64, n3_sq: f64) -> Result<f64, KernelError> {
    check_n3_squared(n3_sq)?;
    Ok(quasi2d_unchecked(xi1, xi2, n3_sq))
}

/// Quasi-2D symbol `m(ξ)` for polarization component `n3`.
pub fn symbol_quasi2d(xi1: f64, xi2: f64, n3: f64) -> Result<f64, KernelError> {
    if !(n3.is_finite() && n3.abs() <= 1.0) {
        return Err(KernelError::BadPolarization(n3 * n3));
    }
    symbol_quasi2d_sq(xi1, xi2, n3 * n3)
}

fn quasi2d_unchecked(xi1: f64, xi2: f64, n3_sq: f64) -> f64 {
    let k2 = xi1 * xi1 + xi2 * xi2;
    if k2 == 0.0 {
        return 0.0;
    }
    let numer = (1.0 - 2.0 * n3_sq) * xi1 * xi1 - n3_sq * xi2 * xi2;
    -numer * g_closed_form(k2.sqrt()) / PI
}

/// Real-space kernel `K(r)` of the quasi-2D interaction, by quadrature.
///
/// The transverse profile has variance `1/(2π)`, so the integration variable
/// enters as `s²/(2π)` under the square root.
pub fn kernel_k_realspace(x1: f64, x2: f64) -> Result<f64, KernelError> {
    let r2 = x1 * x1 + x2 * x2;
    if r2 == 0.0 {
        return Err(KernelError::Origin);
    }
    let c = 1.0 / (2.0 * 2f64.sqrt() * PI.powf(1.5));
    let inv = 1.0 / (2.0 * PI);
    let res = integrate_to_infinity(
        |s| (-0.5 * s * s).exp() / (r2 + inv * s * s).sqrt(),
        0.0,
        0.0,
        1e-13,
    );
    Ok(2.0 * c * res.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymbolKind {
    HighFreqU2D,
    Fab { a: f64, b: f64 },
    Quasi2D { n3_sq: f64 },
}

impl SymbolKind {
    pub fn evaluate(&self, xi1: f64, xi2: f64) -> f64 {
        match *self {
            SymbolKind::HighFreqU2D => symbol_high_freq(xi1, xi2),
            SymbolKind::Fab { a, b } => symbol_fab(xi1, xi2, a, b),
            SymbolKind::Quasi2D { n3_sq } => quasi2d_unchecked(xi1, xi2, n3_sq),
        }
    }
}

/// Symbol values tabulated on a grid's frequency lattice (FFT order).
#[derive(Debug, Clone)]
pub struct KernelSymbol {
    grid: Grid2D,
    values: Vec<f64>,
    kind: SymbolKind,
}

impl KernelSymbol {
    pub fn new(grid: &Grid2D, kind: SymbolKind) -> Result<Self, KernelError> {
        if let SymbolKind::Quasi2D { n3_sq } = kind {
            check_n3_squared(n3_sq)?;
        }
        Ok(Self {
            values: grid.map_frequencies(|a, b| kind.evaluate(a, b)),
            grid: grid.clone(),
            kind,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn kind(&self) -> SymbolKind {
        self.kind
    }
}

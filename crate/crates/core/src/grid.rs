//! Periodic 2D computational box and its discrete Fourier transform.
//!
//! Nodes sit at `x = -L/2 + i·dx`, so the box is centered on the origin. The
//! transform discretizes the isometric convention
//!
//! ```text
//! û(ξ) = (1/2π) ∫ u(x) e^{-iξ·x} dx,
//! ```
//!
//! with the normalization chosen so that `Σ|u|² dx1 dx2 = Σ|û|² dξ1 dξ2`
//! holds exactly (up to round-off). Frequencies are stored in FFT order.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use std::f64::consts::PI;

/// Smallest node count accepted by [`make_grid`].
pub const MIN_NODES: usize = 16;

/// Below this many nodes the row transforms run on the calling thread.
const PAR_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("node count n{axis} = {n} must be even")]
    OddCount { axis: u8, n: usize },
    #[error("node count n{axis} = {n} is below the minimum of {min}")]
    TooFewNodes { axis: u8, n: usize, min: usize },
    #[error("box length L{axis} = {value} must be positive and finite")]
    BadLength { axis: u8, value: f64 },
    #[error("field has {got} values but the grid has {expected} nodes")]
    SizeMismatch { expected: usize, got: usize },
    #[error("field value at node {0} is not finite")]
    NonFinite(usize),
    #[error("expected a {expected:?}-space field")]
    WrongSpace { expected: Space },
}

struct Plans {
    fwd1: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
}

struct GridInner {
    n1: usize,
    n2: usize,
    l1: f64,
    l2: f64,
    dx1: f64,
    dx2: f64,
    x1: Vec<f64>,
    x2: Vec<f64>,
    xi1: Vec<f64>,
    xi2: Vec<f64>,
    plans: Plans,
}

/// Immutable periodic grid. Cloning is cheap; FFT plans are shared.
#[derive(Clone)]
pub struct Grid2D {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid2D")
            .field("n1", &self.n1())
            .field("n2", &self.n2())
            .field("l1", &self.l1())
            .field("l2", &self.l2())
            .finish()
    }
}

impl PartialEq for Grid2D {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.n1() == other.n1()
                && self.n2() == other.n2()
                && self.l1() == other.l1()
                && self.l2() == other.l2())
    }
}

/// Builds a solver grid: even node counts of at least [`MIN_NODES`] per axis.
pub fn make_grid(n1: usize, n2: usize, l1: f64, l2: f64) -> Result<Grid2D, GridError> {
    Grid2D::with_min_nodes(n1, n2, l1, l2, MIN_NODES)
}

/// Lays out the symmetric frequency lattice `2π k / L` in FFT order.
fn frequencies(n: usize, l: f64) -> Vec<f64> {
    let n_i = n as i64;
    (0..n_i)
        .map(|m| {
            let k = if m < n_i / 2 { m } else { m - n_i };
            2.0 * PI * k as f64 / l
        })
        .collect()
}

impl Grid2D {
    /// Square grid with `n` nodes and side `l` per axis.
    pub fn square(n: usize, l: f64) -> Result<Self, GridError> {
        make_grid(n, n, l, l)
    }

    /// Like [`make_grid`] but with a caller-chosen minimum node count. Used for
    /// small lattices that only tabulate kernel symbols.
    pub fn with_min_nodes(
        n1: usize,
        n2: usize,
        l1: f64,
        l2: f64,
        min: usize,
    ) -> Result<Self, GridError> {
        let min = min.max(2);
        for (axis, n) in [(1u8, n1), (2u8, n2)] {
            if n % 2 != 0 {
                return Err(GridError::OddCount { axis, n });
            }
            if n < min {
                return Err(GridError::TooFewNodes { axis, n, min });
            }
        }
        for (axis, value) in [(1u8, l1), (2u8, l2)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(GridError::BadLength { axis, value });
            }
        }
        let dx1 = l1 / n1 as f64;
        let dx2 = l2 / n2 as f64;
        let x1 = (0..n1).map(|i| -0.5 * l1 + i as f64 * dx1).collect();
        let x2 = (0..n2).map(|j| -0.5 * l2 + j as f64 * dx2).collect();
        let mut planner = FftPlanner::new();
        let plans = Plans {
            fwd1: planner.plan_fft_forward(n1),
            inv1: planner.plan_fft_inverse(n1),
            fwd2: planner.plan_fft_forward(n2),
            inv2: planner.plan_fft_inverse(n2),
        };
        Ok(Self {
            inner: Arc::new(GridInner {
                n1,
                n2,
                l1,
                l2,
                dx1,
                dx2,
                x1,
                x2,
                xi1: frequencies(n1, l1),
                xi2: frequencies(n2, l2),
                plans,
            }),
        })
    }

    pub fn n1(&self) -> usize {
        self.inner.n1
    }
    pub fn n2(&self) -> usize {
        self.inner.n2
    }
    pub fn l1(&self) -> f64 {
        self.inner.l1
    }
    pub fn l2(&self) -> f64 {
        self.inner.l2
    }
    pub fn dx1(&self) -> f64 {
        self.inner.dx1
    }
    pub fn dx2(&self) -> f64 {
        self.inner.dx2
    }
    /// Total node count `n1·n2`.
    pub fn len(&self) -> usize {
        self.inner.n1 * self.inner.n2
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Position-space cell area `dx1·dx2`.
    pub fn cell_area(&self) -> f64 {
        self.inner.dx1 * self.inner.dx2
    }
    /// Frequency-space cell area `dξ1·dξ2 = (2π)²/(L1·L2)`.
    pub fn freq_cell_area(&self) -> f64 {
        4.0 * PI * PI / (self.inner.l1 * self.inner.l2)
    }
    pub fn x1(&self) -> &[f64] {
        &self.inner.x1
    }
    pub fn x2(&self) -> &[f64] {
        &self.inner.x2
    }
    /// Frequencies along axis 1, FFT order.
    pub fn xi1(&self) -> &[f64] {
        &self.inner.xi1
    }
    /// Frequencies along axis 2, FFT order.
    pub fn xi2(&self) -> &[f64] {
        &self.inner.xi2
    }
    /// Row-major index; axis 2 is contiguous.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.inner.n2 + j
    }
    pub fn max_dx(&self) -> f64 {
        self.inner.dx1.max(self.inner.dx2)
    }

    /// `|ξ|²` at every frequency node.
    pub fn xi_squared(&self) -> Vec<f64> {
        self.map_frequencies(|a, b| a * a + b * b)
    }

    /// Evaluates `f(ξ1, ξ2)` on the frequency lattice.
    pub fn map_frequencies(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for &a in self.xi1() {
            for &b in self.xi2() {
                out.push(f(a, b));
            }
        }
        out
    }

    /// Evaluates `f(x1, x2)` at the position nodes.
    pub fn map_nodes<T>(&self, f: impl Fn(f64, f64) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        for &a in self.x1() {
            for &b in self.x2() {
                out.push(f(a, b));
            }
        }
        out
    }

    /// Same box, node counts multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self, GridError> {
        make_grid(self.n1() * factor, self.n2() * factor, self.l1(), self.l2())
    }

    fn sign(m1: usize, m2: usize) -> f64 {
        if (m1 + m2) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn fft2(&self, data: &mut [Complex64], forward: bool) {
        let (n1, n2) = (self.n1(), self.n2());
        let plans = &self.inner.plans;
        let (row, col) = if forward {
            (&plans.fwd2, &plans.fwd1)
        } else {
            (&plans.inv2, &plans.inv1)
        };
        let rows_per_task = (PAR_THRESHOLD / n2).max(1);
        if data.len() >= PAR_THRESHOLD {
            data.par_chunks_mut(n2 * rows_per_task)
                .for_each(|chunk| row.process(chunk));
        } else {
            row.process(data);
        }
        let mut t = transpose(data, n1, n2);
        let cols_per_task = (PAR_THRESHOLD / n1).max(1);
        if t.len() >= PAR_THRESHOLD {
            t.par_chunks_mut(n1 * cols_per_task)
                .for_each(|chunk| col.process(chunk));
        } else {
            col.process(&mut t);
        }
        let back = transpose(&t, n2, n1);
        data.copy_from_slice(&back);
    }

    /// In-place forward transform of raw position-space samples.
    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len(), "buffer does not match grid");
        self.fft2(data, true);
        let scale = self.cell_area() / (2.0 * PI);
        let n2 = self.n2();
        for (idx, v) in data.iter_mut().enumerate() {
            *v *= scale * Self::sign(idx / n2, idx % n2);
        }
    }

    /// In-place inverse transform of raw frequency-space samples.
    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len(), "buffer does not match grid");
        let n2 = self.n2();
        for (idx, v) in data.iter_mut().enumerate() {
            *v *= Self::sign(idx / n2, idx % n2);
        }
        self.fft2(data, false);
        let scale = 2.0 * PI / (self.l1() * self.l2());
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Forward transform of a real array, returned as complex spectrum.
    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    /// Applies a real Fourier multiplier to a real array and returns the real
    /// part of the result.
    pub fn apply_multiplier_real(&self, data: &[f64], symbol: &[f64]) -> Vec<f64> {
        let mut buf = self.forward_real(data);
        for (v, s) in buf.iter_mut().zip(symbol) {
            *v *= *s;
        }
        self.inverse_in_place(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    const B: usize = 32;
    let mut dst = vec![Complex64::new(0.0, 0.0); src.len()];
    for ib in (0..rows).step_by(B) {
        for jb in (0..cols).step_by(B) {
            for i in ib..(ib + B).min(rows) {
                for j in jb..(jb + B).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
    dst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Position,
    Frequency,
}

/// Complex scalar field on a grid, tagged with the space it lives in.
#[derive(Clone)]
pub struct WaveField {
    grid: Grid2D,
    values: Vec<Complex64>,
    space: Space,
}

impl fmt::Debug for WaveField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaveField")
            .field("grid", &self.grid)
            .field("space", &self.space)
            .field("mass", &self.mass())
            .finish()
    }
}

impl WaveField {
    pub fn new(grid: Grid2D, values: Vec<Complex64>, space: Space) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::SizeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(idx) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(GridError::NonFinite(idx));
        }
        Ok(Self {
            grid,
            values,
            space,
        })
    }

    pub fn zeros(grid: Grid2D, space: Space) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self {
            grid,
            values,
            space,
        }
    }

    /// Samples `f` at the position nodes.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> Complex64) -> Result<Self, GridError> {
        let values = grid.map_nodes(f);
        Self::new(grid, values, Space::Position)
    }

    /// Samples a real profile at the position nodes.
    pub fn from_real_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self, GridError> {
        Self::from_fn(grid, |a, b| Complex64::new(f(a, b), 0.0))
    }

    pub(crate) fn from_parts_unchecked(grid: Grid2D, values: Vec<Complex64>, space: Space) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid,
            values,
            space,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
    pub fn space(&self) -> Space {
        self.space
    }

    pub fn require(&self, space: Space) -> Result<(), GridError> {
        if self.space == space {
            Ok(())
        } else {
            Err(GridError::WrongSpace { expected: space })
        }
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        match self
            .values
            .iter()
            .position(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            Some(idx) => Err(GridError::NonFinite(idx)),
            None => Ok(()),
        }
    }

    fn weight(&self) -> f64 {
        match self.space {
            Space::Position => self.grid.cell_area(),
            Space::Frequency => self.grid.freq_cell_area(),
        }
    }

    /// `Σ|u|²` times the cell area of whichever space the field lives in.
    pub fn mass(&self) -> f64 {
        self.weight() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// Weighted inner product `Σ conj(self)·other` in the field's space.
    pub fn inner(&self, other: &WaveField) -> Complex64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.weight()
    }

    /// `|u|²` with round-off negatives clamped to zero.
    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr().max(0.0)).collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Rescales so that the mass equals `target`. No-op for a zero field.
    pub fn normalize_mass(&mut self, target: f64) {
        let m = self.mass();
        if m > 0.0 {
            self.scale((target / m).sqrt());
        }
    }

    /// `∫|∇u|²`, computed spectrally.
    pub fn kinetic_integral(&self) -> f64 {
        let hat = match self.space {
            Space::Position => forward_transform(self).expect("position field"),
            Space::Frequency => self.clone(),
        };
        let xi2 = self.grid.xi_squared();
        self.grid.freq_cell_area()
            * hat
                .values
                .iter()
                .zip(&xi2)
                .map(|(v, k)| k * v.norm_sqr())
                .sum::<f64>()
    }

    /// Density-weighted centroid of a position-space field.
    pub fn centroid(&self) -> (f64, f64) {
        let g = &self.grid;
        let (mut m, mut c1, mut c2) = (0.0, 0.0, 0.0);
        for i in 0..g.n1() {
            for j in 0..g.n2() {
                let r = self.values[g.index(i, j)].norm_sqr();
                m += r;
                c1 += r * g.x1()[i];
                c2 += r * g.x2()[j];
            }
        }
        if m > 0.0 {
            (c1 / m, c2 / m)
        } else {
            (0.0, 0.0)
        }
    }
}

pub fn forward_transform(u: &WaveField) -> Result<WaveField, GridError> {
    u.require(Space::Position)?;
    u.check_finite()?;
    let mut values = u.values.clone();
    u.grid.forward_in_place(&mut values);
    Ok(WaveField::from_parts_unchecked(
        u.grid.clone(),
        values,
        Space::Frequency,
    ))
}

pub fn inverse_transform(u: &WaveField) -> Result<WaveField, GridError> {
    u.require(Space::Frequency)?;
    u.check_finite()?;
    let mut values = u.values.clone();
    u.grid.inverse_in_place(&mut values);
    Ok(WaveField::from_parts_unchecked(
        u.grid.clone(),
        values,
        Space::Position,
    ))
}

/// Rows of the 1D trigonometric-interpolation matrix: entry `(p, m)` is the
/// basis function of mode `m` evaluated at `points[p]`. The Nyquist mode uses
/// its real (cosine) form. Points outside `[-L/2, L/2)` get an all-zero row,
/// which extends the field by zero beyond the source box.
fn interpolation_rows(points: &[f64], xi: &[f64], l: f64) -> Vec<Complex64> {
    let n = xi.len();
    let nyq = n / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); points.len() * n];
    let tol = 1e-12 * l;
    for (p, &y) in points.iter().enumerate() {
        if y < -0.5 * l - tol || y >= 0.5 * l - tol {
            continue;
        }
        for (m, &k) in xi.iter().enumerate() {
            out[p * n + m] = if m == nyq {
                Complex64::new((k * y).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, k * y)
            };
        }
    }
    out
}

/// Evaluates the trigonometric interpolant of `u` at the tensor product of
/// `p1 × p2`, with `scale` applied to the result.
fn evaluate_interpolant(
    u: &WaveField,
    p1: &[f64],
    p2: &[f64],
    scale: f64,
) -> Result<Vec<Complex64>, GridError> {
    let src = u.grid();
    let hat = match u.space() {
        Space::Position => forward_transform(u)?,
        Space::Frequency => u.clone(),
    };
    let (n1, n2) = (src.n1(), src.n2());
    let e1 = interpolation_rows(p1, src.xi1(), src.l1());
    let e2 = interpolation_rows(p2, src.xi2(), src.l2());
    let c = hat.values();
    let (q1, q2) = (p1.len(), p2.len());
    // stage 1: contract axis 1 -> (q1 × n2)
    let mut stage = vec![Complex64::new(0.0, 0.0); q1 * n2];
    stage.par_chunks_mut(n2).enumerate().for_each(|(p, row)| {
        for m1 in 0..n1 {
            let w = e1[p * n1 + m1];
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            let src_row = &c[m1 * n2..(m1 + 1) * n2];
            for (acc, v) in row.iter_mut().zip(src_row) {
                *acc += w * v;
            }
        }
    });
    let norm = scale * 2.0 * PI / (src.l1() * src.l2());
    let mut out = vec![Complex64::new(0.0, 0.0); q1 * q2];
    out.par_chunks_mut(q2).enumerate().for_each(|(p, row)| {
        let s = &stage[p * n2..(p + 1) * n2];
        for (q, dst) in row.iter_mut().enumerate() {
            let e = &e2[q * n2..(q + 1) * n2];
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, b) in e.iter().zip(s) {
                acc += a * b;
            }
            *dst = acc * norm;
        }
    });
    Ok(out)
}

/// Spectral resampling onto another grid. Target nodes outside the source box
/// receive zero.
pub fn resample(u: &WaveField, target: &Grid2D) -> Result<WaveField, GridError> {
    let values = evaluate_interpolant(u, target.x1(), target.x2(), 1.0)?;
    WaveField::new(target.clone(), values, Space::Position)
}

/// Mass-preserving dilation `u_s(x) = s⁻¹ u(x/s)` on the same grid.
pub fn dilate(u: &WaveField, s: f64) -> Result<WaveField, GridError> {
    let g = u.grid();
    let p1: Vec<f64> = g.x1().iter().map(|x| x / s).collect();
    let p2: Vec<f64> = g.x2().iter().map(|x| x / s).collect();
    let values = evaluate_interpolant(u, &p1, &p2, 1.0 / s)?;
    WaveField::new(g.clone(), values, Space::Position)
}

/// Exact spectral translation `u(x - shift)`.
pub fn translate(u: &WaveField, shift: (f64, f64)) -> Result<WaveField, GridError> {
    let mut hat = forward_transform(u)?;
    let g = u.grid().clone();
    let n2 = g.n2();
    for (idx, v) in hat.values_mut().iter_mut().enumerate() {
        let phase = -(g.xi1()[idx / n2] * shift.0 + g.xi2()[idx % n2] * shift.1);
        *v *= Complex64::from_polar(1.0, phase);
    }
    inverse_transform(&hat)
}

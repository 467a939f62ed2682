//! Trapped ground states by preconditioned, mass-normalized gradient flow,
//! with collapse detection through the kinetic length `L = (∫|∇u|²)^{-1/2}`.

use num_complex::Complex64;
use thiserror::Error;

use crate::functionals::{EnergyBreakdown, EnergyModel, FunctionalError, PhysicalParams, TrapSpec};
use crate::grid::{Grid2D, GridError, Space, WaveField};

#[derive(Debug, Error)]
pub enum GroundStateError {
    #[error("collapse detected after {} iterations: kinetic length {:.4e}", .0.iterations, .0.l_history.last().copied().unwrap_or(f64::NAN))]
    CollapseDetected(Box<GroundStateResult>),
    #[error("no convergence after {} iterations (residual {:.3e})", .0.iterations, .0.residual)]
    NonConvergence(Box<GroundStateResult>),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid options: {0}")]
    BadOptions(String),
}

impl GroundStateError {
    /// The final flow state, when the flow ran.
    pub fn partial(&self) -> Option<&GroundStateResult> {
        match self {
            GroundStateError::CollapseDetected(r) | GroundStateError::NonConvergence(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseCriteria {
    /// Collapse when `L < resolution_factor · max(dx1, dx2)`.
    pub resolution_factor: f64,
    /// Number of trailing history entries inspected by the shrink rule.
    pub window: usize,
    /// Minimal monotone shrink of `L` across the window.
    pub shrink_factor: f64,
    /// The shrink rule also requires the energy to be below this value.
    pub energy_floor: f64,
}

impl Default for CollapseCriteria {
    fn default() -> Self {
        Self {
            resolution_factor: 4.0,
            window: 200,
            shrink_factor: 8.0,
            energy_floor: -1e3,
        }
    }
}

/// Collapse test on a kinetic-length history and the matching energies.
pub fn detect_collapse(
    l_history: &[f64],
    energies: &[f64],
    grid: &Grid2D,
    criteria: &CollapseCriteria,
) -> bool {
    let Some(&last) = l_history.last() else {
        return false;
    };
    if !(last >= criteria.resolution_factor * grid.max_dx()) {
        return true;
    }
    let w = criteria.window.min(l_history.len());
    if w < 2 {
        return false;
    }
    let tail = &l_history[l_history.len() - w..];
    let monotone = tail.windows(2).all(|p| p[1] <= p[0]);
    let energy_low = energies.last().is_some_and(|&e| e < criteria.energy_floor);
    monotone && tail[0] >= criteria.shrink_factor * last && energy_low
}

#[derive(Debug, Clone)]
pub struct GroundStateOptions {
    pub max_iter: usize,
    pub tol_energy: f64,
    pub tol_residual: f64,
    /// Scale of the kinetic and potential preconditioners.
    pub tau0: f64,
    pub collapse: CollapseCriteria,
    /// Starting field; defaults to the Gaussian matched to the trap.
    pub initial: Option<WaveField>,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            tol_energy: 1e-10,
            tol_residual: 1e-6,
            tau0: 1.0,
            collapse: CollapseCriteria::default(),
            initial: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub u: WaveField,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub collapse_detected: bool,
    pub l_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    /// `‖δE/δū − μu‖₂` at the final iterate.
    pub residual: f64,
    /// Chemical potential `μ = Re⟨u, δE/δū⟩`.
    pub mu: f64,
}

/// Classical turning radius of the trap at energy `e`, along its weakest axis.
pub fn turning_radius(trap: &TrapSpec, e: f64) -> f64 {
    let e = e.max(0.0);
    match trap {
        TrapSpec::Harmonic { omega1, omega2 } => (2.0 * e).sqrt() / omega1.min(*omega2),
        TrapSpec::Quartic { c } => (e / c).powf(0.25),
        TrapSpec::Radial { knots } => {
            // first crossing of V = e along the piecewise-linear profile
            let n = knots.len();
            for w in knots.windows(2) {
                let ((r0, v0), (r1, v1)) = (w[0], w[1]);
                if v1 >= e && v1 != v0 && v0 <= e {
                    return r0 + (e - v0) * (r1 - r0) / (v1 - v0);
                }
            }
            let ((r0, v0), (r1, v1)) = (knots[n - 2], knots[n - 1]);
            r1 + (e - v1).max(0.0) * (r1 - r0) / (v1 - v0)
        }
        TrapSpec::Free => f64::INFINITY,
    }
}

/// Box side giving a half-width of six turning radii at energy `e`
/// (floored at the harmonic ground value 1).
pub fn suggested_box(trap: &TrapSpec, e: f64) -> f64 {
    12.0 * turning_radius(trap, e.max(1.0))
}

/// Gaussian ground mode of the harmonic part of the trap, unit mass.
pub fn trap_matched_gaussian(grid: &Grid2D, trap: &TrapSpec) -> WaveField {
    let (w1, w2) = match trap {
        TrapSpec::Harmonic { omega1, omega2 } => (*omega1, *omega2),
        _ => (1.0, 1.0),
    };
    let norm = (w1 * w2).sqrt().sqrt() / std::f64::consts::PI.sqrt();
    let mut u = WaveField::from_real_fn(grid.clone(), |a, b| {
        norm * (-0.5 * (w1 * a * a + w2 * b * b)).exp()
    })
    .expect("finite Gaussian");
    u.normalize_mass(1.0);
    u
}

struct Flow<'a> {
    model: &'a EnergyModel,
    kin_pre: Vec<f64>,
    pot_pre: Vec<f64>,
}

impl Flow<'_> {
    fn dot(&self, x: &[Complex64], y: &[Complex64]) -> f64 {
        self.model.grid().cell_area()
            * x.iter().zip(y).map(|(a, b)| (a.conj() * b).re).sum::<f64>()
    }

    /// `P_V^{1/2} P_K P_V^{1/2} x`.
    fn precondition(&self, x: &[Complex64]) -> Vec<Complex64> {
        let g = self.model.grid();
        let mut y: Vec<Complex64> = x.iter().zip(&self.pot_pre).map(|(v, s)| v * *s).collect();
        g.forward_in_place(&mut y);
        for (v, k) in y.iter_mut().zip(&self.kin_pre) {
            *v *= *k;
        }
        g.inverse_in_place(&mut y);
        for (v, s) in y.iter_mut().zip(&self.pot_pre) {
            *v *= *s;
        }
        y
    }

    fn tangent(&self, x: &mut [Complex64], u: &[Complex64]) {
        let c = self.dot(u, x);
        for (v, ui) in x.iter_mut().zip(u) {
            *v -= ui * c;
        }
    }
}

fn kinetic_length(e: &EnergyBreakdown) -> f64 {
    let t = 2.0 * e.kinetic / e.mass;
    if t > 0.0 {
        t.sqrt().recip()
    } else {
        f64::INFINITY
    }
}

pub fn minimize_trapped(
    p: &PhysicalParams,
    grid: &Grid2D,
    opts: &GroundStateOptions,
) -> Result<GroundStateResult, GroundStateError> {
    if !(opts.tau0 > 0.0 && opts.tol_energy > 0.0 && opts.tol_residual > 0.0) {
        return Err(GroundStateError::BadOptions(
            "tau0 and tolerances must be positive".into(),
        ));
    }
    let model = EnergyModel::new(grid, p)?;
    let flow = Flow {
        model: &model,
        kin_pre: grid.xi_squared().iter().map(|k| 1.0 / (1.0 + 0.5 * opts.tau0 * k)).collect(),
        pot_pre: model
            .potential()
            .iter()
            .map(|v| (1.0 / (1.0 + opts.tau0 * v)).sqrt())
            .collect(),
    };

    let mut u = match &opts.initial {
        Some(w) => {
            w.require(Space::Position)?;
            if w.grid() != grid {
                return Err(GroundStateError::BadOptions(
                    "initial field lives on a different grid".into(),
                ));
            }
            w.clone()
        }
        None => trap_matched_gaussian(grid, &p.trap),
    };
    u.normalize_mass(1.0);
    let (mut energy, mut grad) = model.energy_and_gradient(&u)?;
    let mut l_history = vec![kinetic_length(&energy)];
    let mut energy_history = vec![energy.total];
    let mut prev: Option<(Vec<Complex64>, Vec<Complex64>)> = None;
    let mut dir: Vec<Complex64> = Vec::new();
    let mut tau = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut collapse = false;
    let (mut residual, mut mu);

    loop {
        mu = flow.dot(u.values(), grad.values());
        let r: Vec<Complex64> = grad
            .values()
            .iter()
            .zip(u.values())
            .map(|(g, ui)| g - ui * mu)
            .collect();
        residual = flow.dot(&r, &r).sqrt();
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let mut z = flow.precondition(&r);
        flow.tangent(&mut z, u.values());

        let beta = match &prev {
            Some((pr, pz)) => {
                let den = flow.dot(pz, pr);
                let num = flow.dot(&z, &r) - flow.dot(&z, pr);
                if den > 0.0 {
                    (num / den).max(0.0)
                } else {
                    0.0
                }
            }
            None => 0.0,
        };
        if beta == 0.0 || dir.is_empty() {
            dir = z.iter().map(|v| -v).collect();
        } else {
            for (d, zi) in dir.iter_mut().zip(&z) {
                *d = *d * beta - zi;
            }
            flow.tangent(&mut dir, u.values());
        }
        let mut slope = 2.0 * flow.dot(grad.values(), &dir);
        if slope >= 0.0 {
            dir = z.iter().map(|v| -v).collect();
            slope = 2.0 * flow.dot(grad.values(), &dir);
        }
        if !(slope < 0.0) {
            converged = residual < opts.tol_residual;
            break;
        }

        let mut accepted = None;
        let mut step = tau * 2.0;
        for _ in 0..60 {
            let vals: Vec<Complex64> =
                u.values().iter().zip(&dir).map(|(a, d)| a + d * step).collect();
            let mut trial = WaveField::new(grid.clone(), vals, Space::Position)?;
            trial.normalize_mass(1.0);
            let et = model.energy(&trial)?;
            if et.total <= energy.total + 1e-4 * step * slope {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            converged = residual < opts.tol_residual;
            break;
        };
        tau = step;
        let old_total = energy.total;
        u = next;
        let (e, g) = model.energy_and_gradient(&u)?;
        energy = e;
        grad = g;
        l_history.push(kinetic_length(&energy));
        energy_history.push(energy.total);
        prev = Some((r, z));

        if detect_collapse(&l_history, &energy_history, grid, &opts.collapse) {
            collapse = true;
            break;
        }
        let change = (energy.total - old_total).abs() / energy.total.abs().max(1e-300);
        if change < opts.tol_energy && residual < opts.tol_residual {
            converged = true;
            break;
        }
    }

    let result = GroundStateResult {
        u,
        energy,
        iterations,
        converged,
        collapse_detected: collapse,
        l_history,
        energy_history,
        residual,
        mu,
    };
    if collapse {
        Err(GroundStateError::CollapseDetected(Box::new(result)))
    } else if !converged {
        Err(GroundStateError::NonConvergence(Box::new(result)))
    } else {
        Ok(result)
    }
}

//! Energy functional of the quasi-2D dipolar condensate, the effective
//! quadratic form `F_{a,b}`, and their first variations.

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{forward_transform, Grid2D, GridError, Space, WaveField};
use crate::kernels::{KernelError, KernelSymbol, SymbolKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("field has zero mass")]
    ZeroMass,
    #[error("density has {got} values but the grid has {expected} nodes")]
    DensitySize { expected: usize, got: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("invalid trap: {0}")]
    BadTrap(String),
}

/// External potential.
#[derive(Debug, Clone, PartialEq)]
pub enum TrapSpec {
    /// `V = (ω1² x1² + ω2² x2²)/2`.
    Harmonic { omega1: f64, omega2: f64 },
    /// `V = c |x|⁴`.
    Quartic { c: f64 },
    /// Piecewise-linear radial profile through `(r, V)` knots starting at
    /// `r = 0`, extended linearly past the last knot.
    Radial { knots: Vec<(f64, f64)> },
    /// `V = 0`. Only meaningful for scale-invariant studies.
    Free,
}

impl Default for TrapSpec {
    fn default() -> Self {
        TrapSpec::Harmonic {
            omega1: 1.0,
            omega2: 1.0,
        }
    }
}

impl TrapSpec {
    pub fn validate(&self) -> Result<(), FunctionalError> {
        let bad = |m: &str| Err(FunctionalError::BadTrap(m.to_string()));
        match self {
            TrapSpec::Harmonic { omega1, omega2 } => {
                if !(omega1.is_finite() && omega2.is_finite() && *omega1 > 0.0 && *omega2 > 0.0) {
                    return bad("harmonic frequencies must be positive and finite");
                }
            }
            TrapSpec::Quartic { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return bad("quartic coefficient must be positive and finite");
                }
            }
            TrapSpec::Radial { knots } => {
                if knots.len() < 2 {
                    return bad("radial table needs at least two knots");
                }
                if knots[0].0 != 0.0 {
                    return bad("radial table must start at r = 0");
                }
                if knots.iter().any(|(r, v)| !r.is_finite() || !v.is_finite() || *v < 0.0) {
                    return bad("radial table entries must be finite with V >= 0");
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("radial table radii must be strictly increasing");
                }
                let n = knots.len();
                if knots[n - 1].1 <= knots[n - 2].1 {
                    return bad("radial table must increase on its last segment");
                }
            }
            TrapSpec::Free => {}
        }
        Ok(())
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self {
            TrapSpec::Harmonic { omega1, omega2 } => {
                0.5 * (omega1 * omega1 * x1 * x1 + omega2 * omega2 * x2 * x2)
            }
            TrapSpec::Quartic { c } => {
                let r2 = x1 * x1 + x2 * x2;
                c * r2 * r2
            }
            TrapSpec::Radial { knots } => {
                let r = x1.hypot(x2);
                let seg = knots
                    .windows(2)
                    .position(|w| r < w[1].0)
                    .unwrap_or(knots.len() - 2);
                let (r0, v0) = knots[seg];
                let (r1, v1) = knots[seg + 1];
                v0 + (v1 - v0) * (r - r0) / (r1 - r0)
            }
            TrapSpec::Free => 0.0,
        }
    }

    pub fn tabulate(&self, grid: &Grid2D) -> Vec<f64> {
        grid.map_nodes(|a, b| self.eval(a, b))
    }
}

/// Physical model parameters. The polarization enters only through `n3²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub beta: f64,
    pub lambda: f64,
    n3_sq: f64,
    pub trap: TrapSpec,
}

impl PhysicalParams {
    pub fn new(beta: f64, lambda: f64, n3: f64, trap: TrapSpec) -> Result<Self, FunctionalError> {
        if !(n3.is_finite() && n3.abs() <= 1.0) {
            return Err(FunctionalError::BadParams(format!(
                "polarization component n3 = {n3} must satisfy |n3| <= 1"
            )));
        }
        Self::with_n3_squared(beta, lambda, n3 * n3, trap)
    }

    pub fn with_n3_squared(
        beta: f64,
        lambda: f64,
        n3_sq: f64,
        trap: TrapSpec,
    ) -> Result<Self, FunctionalError> {
        if !(beta.is_finite() && lambda.is_finite()) {
            return Err(FunctionalError::BadParams(
                "beta and lambda must be finite".into(),
            ));
        }
        if !(n3_sq.is_finite() && (0.0..=1.0).contains(&n3_sq)) {
            return Err(FunctionalError::BadParams(format!(
                "n3^2 = {n3_sq} must lie in [0, 1]"
            )));
        }
        trap.validate()?;
        Ok(Self {
            beta,
            lambda,
            n3_sq,
            trap,
        })
    }

    pub fn n3_squared(&self) -> f64 {
        self.n3_sq
    }

    /// Coefficient `g` of the local term `(g/2)∫|u|⁴`.
    pub fn quartic_coefficient(&self) -> f64 {
        self.beta - self.lambda + 3.0 * self.n3_sq * self.lambda
    }

    /// Sign-determining factor `λ(1 − 3n3²)` of the logarithmic correction.
    pub fn log_factor(&self) -> f64 {
        self.lambda * (1.0 - 3.0 * self.n3_sq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams {
    pub a: f64,
    pub b: f64,
}

impl EffectiveParams {
    /// Neither axis weight is positive, so `F_{a,b} ≤ 0` on every density.
    pub fn trivial_regime(&self) -> bool {
        self.a + 0.5 * self.b <= 0.0 && self.a - 0.5 * self.b <= 0.0
    }
    pub fn max_weight(&self) -> f64 {
        (self.a + 0.5 * self.b).max(self.a - 0.5 * self.b)
    }
}

pub fn effective_params(p: &PhysicalParams) -> EffectiveParams {
    let d = p.n3_sq - 1.0;
    EffectiveParams {
        a: p.lambda - p.beta + 1.5 * p.lambda * d,
        b: 3.0 * p.lambda * d,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub quartic: f64,
    pub dipolar: f64,
    pub total: f64,
    pub mass: f64,
}

/// Precomputed multipliers and potential for one `(grid, params)` pair.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    grid: Grid2D,
    params: PhysicalParams,
    xi_sq: Vec<f64>,
    symbol: Vec<f64>,
    potential: Vec<f64>,
}

/// Spectral data shared between the energy and its gradient.
struct Evaluation {
    breakdown: EnergyBreakdown,
    u_hat: Vec<Complex64>,
    rho: Vec<f64>,
    rho_hat: Option<Vec<Complex64>>,
}

impl EnergyModel {
    pub fn new(grid: &Grid2D, params: &PhysicalParams) -> Result<Self, FunctionalError> {
        params.trap.validate()?;
        let symbol = KernelSymbol::new(
            grid,
            SymbolKind::Quasi2D {
                n3_sq: params.n3_sq,
            },
        )?;
        Ok(Self {
            grid: grid.clone(),
            params: params.clone(),
            xi_sq: grid.xi_squared(),
            symbol: symbol.values().to_vec(),
            potential: params.trap.tabulate(grid),
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }
    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }
    pub fn xi_squared(&self) -> &[f64] {
        &self.xi_sq
    }

    fn check(&self, u: &WaveField) -> Result<(), FunctionalError> {
        u.require(Space::Position)?;
        if u.grid() != &self.grid {
            return Err(FunctionalError::BadParams(
                "field grid differs from model grid".into(),
            ));
        }
        u.check_finite()?;
        Ok(())
    }

    fn evaluate(&self, u: &WaveField) -> Result<Evaluation, FunctionalError> {
        self.check(u)?;
        let g = &self.grid;
        let dx = g.cell_area();
        let dxi = g.freq_cell_area();
        let u_hat = forward_transform(u)?.into_values();
        let kinetic =
            0.5 * dxi * u_hat.iter().zip(&self.xi_sq).map(|(v, k)| k * v.norm_sqr()).sum::<f64>();
        let rho = u.density();
        let mass = dx * rho.iter().sum::<f64>();
        let potential = dx * rho.iter().zip(&self.potential).map(|(r, v)| r * v).sum::<f64>();
        let gq = self.params.quartic_coefficient();
        let quartic = 0.5 * gq * dx * rho.iter().map(|r| r * r).sum::<f64>();
        let (dipolar, rho_hat) = if self.params.lambda != 0.0 {
            let rho_hat = g.forward_real(&rho);
            let f_int = dxi
                * rho_hat
                    .iter()
                    .zip(&self.symbol)
                    .map(|(v, m)| m * v.norm_sqr())
                    .sum::<f64>();
            (-0.75 * self.params.lambda * f_int, Some(rho_hat))
        } else {
            (0.0, None)
        };
        Ok(Evaluation {
            breakdown: EnergyBreakdown {
                kinetic,
                potential,
                quartic,
                dipolar,
                total: kinetic + potential + quartic + dipolar,
                mass,
            },
            u_hat,
            rho,
            rho_hat,
        })
    }

    pub fn energy(&self, u: &WaveField) -> Result<EnergyBreakdown, FunctionalError> {
        let e = self.evaluate(u)?;
        if e.breakdown.mass <= 0.0 {
            return Err(FunctionalError::ZeroMass);
        }
        Ok(e.breakdown)
    }

    /// Energy and `δE/δū` together; the gradient reuses the energy's spectra.
    pub fn energy_and_gradient(
        &self,
        u: &WaveField,
    ) -> Result<(EnergyBreakdown, WaveField), FunctionalError> {
        let e = self.evaluate(u)?;
        let g = &self.grid;
        let mut lap: Vec<Complex64> = e
            .u_hat
            .iter()
            .zip(&self.xi_sq)
            .map(|(v, k)| v * (0.5 * k))
            .collect();
        g.inverse_in_place(&mut lap);
        let field = match &e.rho_hat {
            Some(rho_hat) => {
                let mut w: Vec<Complex64> =
                    rho_hat.iter().zip(&self.symbol).map(|(v, m)| v * *m).collect();
                g.inverse_in_place(&mut w);
                w.into_iter().map(|c| -1.5 * self.params.lambda * c.re).collect()
            }
            None => vec![0.0; g.len()],
        };
        let gq = self.params.quartic_coefficient();
        let values: Vec<Complex64> = u
            .values()
            .iter()
            .enumerate()
            .map(|(i, ui)| lap[i] + ui * (self.potential[i] + gq * e.rho[i] + field[i]))
            .collect();
        let grad = WaveField::new(g.clone(), values, Space::Position)?;
        Ok((e.breakdown, grad))
    }

    pub fn gradient(&self, u: &WaveField) -> Result<WaveField, FunctionalError> {
        Ok(self.energy_and_gradient(u)?.1)
    }
}

pub fn energy_2d(u: &WaveField, p: &PhysicalParams) -> Result<EnergyBreakdown, FunctionalError> {
    EnergyModel::new(u.grid(), p)?.energy(u)
}

pub fn gradient_energy(u: &WaveField, p: &PhysicalParams) -> Result<WaveField, FunctionalError> {
    EnergyModel::new(u.grid(), p)?.gradient(u)
}

fn check_density(grid: &Grid2D, rho: &[f64]) -> Result<(), FunctionalError> {
    if rho.len() != grid.len() {
        return Err(FunctionalError::DensitySize {
            expected: grid.len(),
            got: rho.len(),
        });
    }
    if rho.iter().any(|r| !r.is_finite()) {
        return Err(FunctionalError::NonFinite);
    }
    Ok(())
}

/// `F_{a,b}[ρ] = Σ s_{a,b}(ξ)|ρ̂(ξ)|² dξ`.
pub fn fab_energy(grid: &Grid2D, rho: &[f64], a: f64, b: f64) -> Result<f64, FunctionalError> {
    check_density(grid, rho)?;
    let rho_hat = grid.forward_real(rho);
    let sym = KernelSymbol::new(grid, SymbolKind::Fab { a, b })?;
    Ok(grid.freq_cell_area()
        * rho_hat
            .iter()
            .zip(sym.values())
            .map(|(v, s)| s * v.norm_sqr())
            .sum::<f64>())
}

/// `(a − b/2)∫ρ² − b∫(∂₁²U)ρ` with `U = (−Δ)⁻¹ρ`, evaluated in position space.
///
/// `U` carries no zero mode; the mean of `ρ` contributes to `∂₁²U` through the
/// angular average `−1/2` of `−ξ₁²/|ξ|²`.
pub fn fab_energy_coulomb_form(
    grid: &Grid2D,
    rho: &[f64],
    a: f64,
    b: f64,
) -> Result<f64, FunctionalError> {
    check_density(grid, rho)?;
    let dx = grid.cell_area();
    let local = (a - 0.5 * b) * dx * rho.iter().map(|r| r * r).sum::<f64>();

    let inv_lap: Vec<f64> = grid
        .xi_squared()
        .into_iter()
        .map(|k| if k == 0.0 { 0.0 } else { 1.0 / k })
        .collect();
    let potential = grid.apply_multiplier_real(rho, &inv_lap);
    let d11: Vec<f64> = grid.map_frequencies(|x1, _| -x1 * x1);
    let mut u11 = grid.apply_multiplier_real(&potential, &d11);
    let mean = rho.iter().sum::<f64>() / rho.len() as f64;
    for v in &mut u11 {
        *v -= 0.5 * mean;
    }
    let cross = dx * u11.iter().zip(rho).map(|(u, r)| u * r).sum::<f64>();
    Ok(local - b * cross)
}

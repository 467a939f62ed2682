//! Optimal constant of the generalized Gagliardo–Nirenberg inequality
//!
//! ```text
//! F_{a,b}[|u|²] ≤ C(a,b) · ∫|∇u|² · ∫|u|²,
//! ```
//!
//! computed by maximizing the scale-invariant quotient
//! `R(u) = F_{a,b}[|u|²] / (∫|∇u|² ∫|u|²)` with preconditioned nonlinear
//! conjugate-gradient ascent.

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{
    forward_transform, make_grid, resample, translate, Grid2D, GridError, Space, WaveField,
};
use crate::kernels::{KernelSymbol, SymbolKind};

#[derive(Debug, Error)]
pub enum GnError {
    #[error("neither a + b/2 = {plus} nor a - b/2 = {minus} is positive; C(a,b) is undefined")]
    ConditionViolated { plus: f64, minus: f64 },
    #[error("no initialization produced a positive quadratic form")]
    NoPositiveF,
    #[error("ascent did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        partial: Box<GnResult>,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid solver options: {0}")]
    BadOptions(String),
}

/// One square computational scene: `n` nodes per axis on a box of side `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scene {
    pub n: usize,
    pub l: f64,
}

#[derive(Debug, Clone)]
pub struct GnOptions {
    /// Scenes always visited, coarse to fine.
    pub scenes: Vec<Scene>,
    /// Visited in order while successive estimates still differ by more
    /// than `refine_tol`.
    pub extra_scenes: Vec<Scene>,
    pub refine_tol: f64,
    pub tol_rel: f64,
    /// Tangential gradient tolerance, relative to `max(|a ± b/2|)`.
    pub tol_grad: f64,
    pub max_iter: usize,
    /// Aspect ratio of the two elongated Gaussian starts.
    pub aspect: f64,
    /// Extra starting field, tried alongside the Gaussians on the first scene.
    pub warm_start: Option<WaveField>,
    /// Threshold on the spread across starts above which a warning is emitted.
    pub spread_warn: f64,
}

impl Default for GnOptions {
    fn default() -> Self {
        Self {
            scenes: vec![Scene { n: 128, l: 24.0 }, Scene { n: 256, l: 32.0 }],
            extra_scenes: vec![Scene { n: 512, l: 40.0 }],
            refine_tol: 1e-3,
            tol_rel: 1e-9,
            tol_grad: 1e-6,
            max_iter: 20_000,
            aspect: 3.0,
            warm_start: None,
            spread_warn: 1e-3,
        }
    }
}

impl GnOptions {
    fn validate(&self) -> Result<(), GnError> {
        let bad = |m: &str| Err(GnError::BadOptions(m.to_string()));
        if self.scenes.is_empty() {
            return bad("at least one scene is required");
        }
        if !(self.tol_rel > 0.0 && self.tol_grad > 0.0 && self.refine_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.aspect.is_finite() && self.aspect >= 1.0) {
            return bad("aspect must be a finite number >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEstimate {
    pub n1: usize,
    pub n2: usize,
    pub l1: f64,
    pub l2: f64,
    pub c: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct StartOutcome {
    pub label: &'static str,
    pub c: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct GnResult {
    pub c: f64,
    /// Half the difference of the two finest estimates (zero with one scene).
    pub c_error: f64,
    /// Optimizer on the finest grid, scaled to `∫|∇u|² = ∫|u|² = 1`.
    pub optimizer: WaveField,
    pub residual: f64,
    pub grid_study: Vec<GridEstimate>,
    pub starts: Vec<StartOutcome>,
    pub warnings: Vec<String>,
    /// Quotient value after every accepted step on the finest grid.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Outcome of a single ascent on one grid.
#[derive(Debug, Clone)]
pub struct AscentRun {
    pub u: WaveField,
    pub r: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

/// Evaluator for `R(u)` on a fixed grid.
///
/// The ascent runs on the constraint set `∫|u|² = ∫|∇u|² = 1`, where `R`
/// equals `F_{a,b}`. Iterates are kept in frequency space; the retraction onto
/// the constraint set is a spectral filter `e^{-θ|ξ|²}` followed by a mass
/// rescaling, so no interpolation is involved.
#[derive(Debug, Clone)]
pub struct Quotient {
    grid: Grid2D,
    // symbol divided by `scale`, so the ascent is invariant under (a,b) → t(a,b)
    symbol: Vec<f64>,
    scale: f64,
    xi_sq: Vec<f64>,
}

struct Eval {
    f: f64,
    t: f64,
    m: f64,
    u: Vec<Complex64>,
    rho_hat: Vec<Complex64>,
}

impl Eval {
    fn r(&self) -> f64 {
        self.f / (self.t * self.m)
    }
}

impl Quotient {
    pub fn new(grid: &Grid2D, a: f64, b: f64) -> Self {
        let symbol = KernelSymbol::new(grid, SymbolKind::Fab { a, b })
            .expect("fab symbol has no parameter constraints");
        let scale = (a + 0.5 * b).abs().max((a - 0.5 * b).abs());
        let scale = if scale > 0.0 { scale } else { 1.0 };
        Self {
            grid: grid.clone(),
            symbol: symbol.values().iter().map(|v| v / scale).collect(),
            scale,
            xi_sq: grid.xi_squared(),
        }
    }

    fn dxi(&self) -> f64 {
        self.grid.freq_cell_area()
    }

    /// `Re Σ conj(x)·y·w(|ξ|²) dξ` over frequency arrays.
    fn fdot(&self, x: &[Complex64], y: &[Complex64], w: impl Fn(f64) -> f64) -> f64 {
        self.dxi()
            * x.iter()
                .zip(y)
                .zip(&self.xi_sq)
                .map(|((a, b), k)| w(*k) * (a.conj() * b).re)
                .sum::<f64>()
    }

    fn eval_hat(&self, u_hat: &[Complex64]) -> Eval {
        let g = &self.grid;
        let dxi = self.dxi();
        let t = dxi * u_hat.iter().zip(&self.xi_sq).map(|(v, k)| k * v.norm_sqr()).sum::<f64>();
        let m = dxi * u_hat.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let mut u = u_hat.to_vec();
        g.inverse_in_place(&mut u);
        let rho: Vec<f64> = u.iter().map(|v| v.norm_sqr()).collect();
        let rho_hat = g.forward_real(&rho);
        let f = dxi
            * rho_hat
                .iter()
                .zip(&self.symbol)
                .map(|(v, s)| s * v.norm_sqr())
                .sum::<f64>();
        Eval {
            f,
            t,
            m,
            u,
            rho_hat,
        }
    }

    /// `R(u)`; zero for a field with vanishing kinetic energy or mass.
    pub fn value(&self, u: &WaveField) -> f64 {
        let hat = match u.space() {
            Space::Position => forward_transform(u).expect("finite field").into_values(),
            Space::Frequency => u.values().to_vec(),
        };
        let e = self.eval_hat(&hat);
        if e.t > 0.0 && e.m > 0.0 {
            self.scale * e.r()
        } else {
            0.0
        }
    }

    /// Spectrum of `2 W u`, the gradient of `F` with `dF[δ] = 2 Re⟨·, δ⟩`.
    fn f_gradient_hat(&self, e: &Eval) -> Vec<Complex64> {
        let g = &self.grid;
        let mut w: Vec<Complex64> = e
            .rho_hat
            .iter()
            .zip(&self.symbol)
            .map(|(v, s)| v * *s)
            .collect();
        g.inverse_in_place(&mut w);
        let mut out: Vec<Complex64> =
            w.iter().zip(&e.u).map(|(wi, ui)| 2.0 * wi.re * ui).collect();
        g.forward_in_place(&mut out);
        out
    }

    /// Removes from `x` its components along `u` and `−Δu` in the metric
    /// weighted by `w`, after applying `w` to `x`.
    fn project(
        &self,
        x: &[Complex64],
        u_hat: &[Complex64],
        w: impl Fn(f64) -> f64 + Copy,
    ) -> Vec<Complex64> {
        // Tangency: Re⟨u, z⟩ = Re⟨−Δu, z⟩ = 0 for z = w·(x − α u − γ(−Δu)).
        let a11 = self.fdot(u_hat, u_hat, w);
        let a12 = self.fdot(u_hat, u_hat, |k| w(k) * k);
        let a22 = self.fdot(u_hat, u_hat, |k| w(k) * k * k);
        let b1 = self.fdot(u_hat, x, w);
        let b2 = self.fdot(u_hat, x, |k| w(k) * k);
        let det = a11 * a22 - a12 * a12;
        let (alpha, gamma) = if det.abs() > 0.0 {
            ((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det)
        } else {
            (b1 / a11, 0.0)
        };
        x.iter()
            .zip(u_hat)
            .zip(&self.xi_sq)
            .map(|((xi, ui), k)| (xi - ui * (alpha + gamma * k)) * w(*k))
            .collect()
    }

    /// Maps a nonzero spectrum onto `∫|u|² = ∫|∇u|² = 1`.
    fn retract(&self, v: &mut [Complex64]) -> bool {
        let pw: Vec<f64> = v.iter().map(|c| c.norm_sqr()).collect();
        // log(T/M)(θ) is nonincreasing in θ for the filter e^{-θ|ξ|²}
        let ratio = |theta: f64| -> (f64, f64) {
            let kmax = self.xi_sq.iter().cloned().fold(0.0, f64::max);
            let shift = if theta < 0.0 { -2.0 * theta * kmax } else { 0.0 };
            let (mut m, mut t, mut t2) = (0.0, 0.0, 0.0);
            for (p, k) in pw.iter().zip(&self.xi_sq) {
                let e = p * (-2.0 * theta * k - shift).exp();
                m += e;
                t += e * k;
                t2 += e * k * k;
            }
            ((t / m).ln(), -2.0 * (t2 / t - t / m))
        };
        let mut theta = 0.0;
        for _ in 0..60 {
            let (h, dh) = ratio(theta);
            if !(h.is_finite() && dh.is_finite()) {
                return false;
            }
            if h.abs() < 1e-15 {
                break;
            }
            if dh >= 0.0 {
                return false;
            }
            let step = (-h / dh).clamp(-0.5, 0.5);
            theta += step;
            if theta.abs() > 5.0 {
                return false;
            }
        }
        for (c, k) in v.iter_mut().zip(&self.xi_sq) {
            *c *= (-theta * k).exp();
        }
        let m = self.dxi() * v.iter().map(|c| c.norm_sqr()).sum::<f64>();
        if !(m > 0.0 && m.is_finite()) {
            return false;
        }
        let s = 1.0 / m.sqrt();
        for c in v.iter_mut() {
            *c *= s;
        }
        // global phase: zero mode real-positive
        let z = v[0];
        if z.norm() > 0.0 {
            let ph = z.conj() / z.norm();
            for c in v.iter_mut() {
                *c *= ph;
            }
        }
        true
    }

    /// `L²` norm of the gradient of `F` tangent to the constraint set.
    fn residual(&self, gf_hat: &[Complex64], u_hat: &[Complex64]) -> f64 {
        let p = self.project(gf_hat, u_hat, |_| 1.0);
        self.fdot(&p, &p, |_| 1.0).sqrt()
    }

    /// Runs the ascent from `u0`. `tol_grad` is measured relative to the
    /// largest symbol weight `max(|a ± b/2|)`.
    pub fn maximize(
        &self,
        u0: &WaveField,
        tol_rel: f64,
        tol_grad: f64,
        max_iter: usize,
    ) -> Result<AscentRun, GnError> {
        u0.require(Space::Position)?;
        u0.check_finite()?;
        let g = &self.grid;
        let mut u_hat = forward_transform(u0)?.into_values();
        if !self.retract(&mut u_hat) {
            return Err(GnError::NoPositiveF);
        }
        let precond = |k: f64| 1.0 / (1.0 + k);

        let mut e = self.eval_hat(&u_hat);
        let mut r = e.f;
        let mut history = vec![r];
        let mut prev: Option<(Vec<Complex64>, Vec<Complex64>)> = None;
        let mut dir: Vec<Complex64> = Vec::new();
        let mut tau = 1.0;
        let mut residual;
        let mut converged = false;
        let mut iterations = 0;

        loop {
            let gf = self.f_gradient_hat(&e);
            residual = self.residual(&gf, &u_hat);
            if iterations >= max_iter {
                break;
            }
            iterations += 1;
            let z = self.project(&gf, &u_hat, precond);

            let beta = match &prev {
                Some((pg, pz)) => {
                    let den = self.fdot(pz, pg, |_| 1.0);
                    let num = self.fdot(&z, &gf, |_| 1.0) - self.fdot(&z, pg, |_| 1.0);
                    if den > 0.0 {
                        (num / den).max(0.0)
                    } else {
                        0.0
                    }
                }
                None => 0.0,
            };
            if beta == 0.0 || dir.is_empty() {
                dir = z.clone();
            } else {
                let carried: Vec<Complex64> = dir.iter().map(|d| d * beta).collect();
                let carried = self.project(&carried, &u_hat, |_| 1.0);
                for ((d, zi), ci) in dir.iter_mut().zip(&z).zip(&carried) {
                    *d = zi + ci;
                }
            }
            let mut slope = 2.0 * self.fdot(&gf, &dir, |_| 1.0);
            if slope <= 0.0 {
                dir = z.clone();
                slope = 2.0 * self.fdot(&gf, &dir, |_| 1.0);
            }
            if !(slope > 0.0) {
                converged = residual < tol_grad;
                break;
            }

            let mut accepted = None;
            let mut step = tau * 2.0;
            for _ in 0..60 {
                let mut trial: Vec<Complex64> =
                    u_hat.iter().zip(&dir).map(|(a, d)| a + d * step).collect();
                if self.retract(&mut trial) {
                    let et = self.eval_hat(&trial);
                    if et.f >= r + 1e-4 * step * slope {
                        accepted = Some((trial, et));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((trial, et)) = accepted else {
                converged = residual < tol_grad;
                break;
            };
            tau = step;
            u_hat = trial;
            e = et;
            let change = (e.f - r).abs() / r.abs().max(f64::MIN_POSITIVE);
            r = e.f;
            history.push(r);
            prev = Some((gf, z));
            if change < tol_rel && residual < tol_grad {
                converged = true;
                break;
            }
        }

        let mut u = WaveField::from_parts_unchecked(g.clone(), u_hat, Space::Frequency);
        let pos = crate::grid::inverse_transform(&u)?;
        u = pos;
        let (c1, c2) = u.centroid();
        if c1.hypot(c2) > 1e-3 * g.max_dx() {
            u = translate(&u, (-c1, -c2))?;
        }
        Ok(AscentRun {
            u,
            r: r * self.scale,
            residual: residual * self.scale,
            iterations,
            converged,
            history: history.into_iter().map(|h| h * self.scale).collect(),
        })
    }
}


/// Gaussian `(π σ1 σ2)^{-1/2} exp(-x1²/2σ1² - x2²/2σ2²)` with
/// `∫|u|² = ∫|∇u|² = 1` and `σ1/σ2 = aspect`.
pub fn gaussian_start(grid: &Grid2D, aspect: f64) -> WaveField {
    let s2 = 0.5 * (aspect + 1.0 / aspect);
    let s1 = (s2 * aspect).sqrt();
    let s2b = (s2 / aspect).sqrt();
    let norm = 1.0 / (std::f64::consts::PI * s1 * s2b).sqrt();
    WaveField::from_real_fn(grid.clone(), |x, y| {
        norm * (-(x * x) / (2.0 * s1 * s1) - y * y / (2.0 * s2b * s2b)).exp()
    })
    .expect("finite Gaussian")
}

/// `C·∫|∇u|²·∫|u|² − F_{a,b}[|u|²]`; nonnegative when `C` is the optimal constant.
pub fn verify_inequality(u: &WaveField, a: f64, b: f64, c: f64) -> Result<f64, GnError> {
    u.require(Space::Position)?;
    u.check_finite()?;
    let q = Quotient::new(u.grid(), a, b);
    let e = q.eval_hat(forward_transform(u)?.values());
    Ok(c * e.t * e.m - q.scale * e.f)
}

fn estimate_of(run: &AscentRun) -> GridEstimate {
    let g = run.u.grid();
    GridEstimate {
        n1: g.n1(),
        n2: g.n2(),
        l1: g.l1(),
        l2: g.l2(),
        c: run.r,
        residual: run.residual,
        iterations: run.iterations,
    }
}

pub fn compute_gn_constant(a: f64, b: f64, opts: &GnOptions) -> Result<GnResult, GnError> {
    opts.validate()?;
    let (plus, minus) = (a + 0.5 * b, a - 0.5 * b);
    if !(plus > 0.0 || minus > 0.0) {
        return Err(GnError::ConditionViolated { plus, minus });
    }
    let first = opts.scenes[0];
    let grid = make_grid(first.n, first.n, first.l, first.l)?;
    let q = Quotient::new(&grid, a, b);

    let mut candidates: Vec<(&'static str, WaveField)> = vec![
        ("isotropic", gaussian_start(&grid, 1.0)),
        ("elongated_x1", gaussian_start(&grid, opts.aspect)),
        ("elongated_x2", gaussian_start(&grid, 1.0 / opts.aspect)),
    ];
    if let Some(w) = &opts.warm_start {
        candidates.push(("warm_start", resample(w, &grid)?));
    }

    let mut starts = Vec::new();
    let mut best: Option<AscentRun> = None;
    for (label, u0) in candidates {
        if q.value(&u0) <= 0.0 {
            starts.push(StartOutcome {
                label,
                c: f64::NAN,
                converged: false,
            });
            continue;
        }
        let run = q.maximize(&u0, opts.tol_rel, opts.tol_grad, opts.max_iter)?;
        starts.push(StartOutcome {
            label,
            c: run.r,
            converged: run.converged,
        });
        if best.as_ref().map_or(true, |b| run.r > b.r) {
            best = Some(run);
        }
    }
    let Some(mut run) = best else {
        return Err(GnError::NoPositiveF);
    };

    let mut warnings = Vec::new();
    let found: Vec<f64> = starts.iter().map(|s| s.c).filter(|c| c.is_finite()).collect();
    let lo = found.iter().cloned().fold(f64::INFINITY, f64::min);
    if (run.r - lo) / run.r > opts.spread_warn {
        warnings.push(format!(
            "starts disagree: best {:.6e}, worst {:.6e}; reporting the best",
            run.r, lo
        ));
    }

    let mut study = vec![estimate_of(&run)];
    let mut all_converged = run.converged;
    let mut pending = opts.scenes[1..].iter().chain(opts.extra_scenes.iter()).enumerate();
    let mandatory = opts.scenes.len() - 1;
    loop {
        let Some((i, scene)) = pending.next() else { break };
        if i >= mandatory {
            let k = study.len();
            let settled = k >= 2 && (study[k - 1].c - study[k - 2].c).abs() < opts.refine_tol * study[k - 1].c.abs();
            if settled {
                break;
            }
        }
        let g = make_grid(scene.n, scene.n, scene.l, scene.l)?;
        let q = Quotient::new(&g, a, b);
        let u0 = resample(&run.u, &g)?;
        run = q.maximize(&u0, opts.tol_rel, opts.tol_grad, opts.max_iter)?;
        all_converged &= run.converged;
        study.push(estimate_of(&run));
    }
    let k = study.len();
    let c_error = if k >= 2 {
        0.5 * (study[k - 1].c - study[k - 2].c).abs()
    } else {
        0.0
    };
    if k >= 2 && 2.0 * c_error >= opts.refine_tol * run.r.abs() {
        warnings.push(format!(
            "grid refinement not settled: finest pair differs by {:.3e}",
            2.0 * c_error
        ));
    }

    let optimizer = run.u.clone();
    let result = GnResult {
        c: run.r,
        c_error,
        optimizer,
        residual: run.residual,
        grid_study: study,
        starts,
        warnings,
        history: run.history,
        converged: all_converged,
    };
    if !all_converged {
        return Err(GnError::NonConvergence {
            iterations: result.grid_study.iter().map(|s| s.iterations).sum(),
            residual: result.residual,
            partial: Box::new(result),
        });
    }
    Ok(result)
}

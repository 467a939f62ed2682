//! Stability classification from the effective parameters `(a, b)` and the
//! optimal constant `C(a,b)`, borderline tuning, and collapse scans of the
//! energy along the concentrating trial states `u_L = L^{-1} u(·/L)`.

use num_complex::Complex64;
use thiserror::Error;

use crate::functionals::{
    effective_params, EffectiveParams, EnergyBreakdown, EnergyModel, FunctionalError,
    PhysicalParams, TrapSpec,
};
use crate::gn::{compute_gn_constant, GnError, GnOptions, GridEstimate};
use crate::grid::{make_grid, resample, Grid2D, GridError, Space, WaveField};

/// Absolute tolerance on `λ(1 − 3n3²)` below which it counts as zero.
pub const SIGN_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("no beta >= {beta_min} brings C(a,b) to 1 (C stays below 1 up to a = {a_max:.4})")]
    BracketFailure { beta_min: f64, a_max: f64 },
    #[error("scale L = {l} needs {needed} nodes per axis, above the cap of {cap}")]
    UnresolvedScale { l: f64, needed: usize, cap: usize },
    #[error("invalid scan: {0}")]
    BadScan(String),
    #[error(transparent)]
    Gn(#[from] GnError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityCase {
    StableTrivial,
    StableSubcritical,
    Unstable,
    BorderlineStable,
    BorderlineMarginal,
    BorderlineUnstable,
    Indeterminate,
}

impl StabilityCase {
    pub fn name(&self) -> &'static str {
        match self {
            StabilityCase::StableTrivial => "StableTrivial",
            StabilityCase::StableSubcritical => "StableSubcritical",
            StabilityCase::Unstable => "Unstable",
            StabilityCase::BorderlineStable => "BorderlineStable",
            StabilityCase::BorderlineMarginal => "BorderlineMarginal",
            StabilityCase::BorderlineUnstable => "BorderlineUnstable",
            StabilityCase::Indeterminate => "Indeterminate",
        }
    }

    pub fn is_stable(&self) -> bool {
        matches!(
            self,
            StabilityCase::StableTrivial
                | StabilityCase::StableSubcritical
                | StabilityCase::BorderlineStable
        )
    }
}

#[derive(Debug, Clone)]
pub struct StabilityVerdict {
    pub case: StabilityCase,
    pub params: EffectiveParams,
    pub c: Option<f64>,
    /// Grid-refinement error bar of `c`.
    pub c_error: Option<f64>,
    /// Half-width of the band around 1 treated as undecided: `max(c_error, tol)`.
    pub margin: Option<f64>,
    pub borderline_sign: Option<i8>,
    /// Whether the optimal-constant solve converged; `None` when none ran.
    pub converged: Option<bool>,
    pub grid_study: Vec<GridEstimate>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub tol: f64,
    /// Resolve `|C − 1| ≤ margin` by the borderline sign rule instead of
    /// reporting `Indeterminate`.
    pub borderline_analysis: bool,
    /// The caller asserts `C = 1` (parameters from [`tune_to_borderline`]).
    pub exact_borderline: bool,
    pub gn: GnOptions,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-2,
            borderline_analysis: false,
            exact_borderline: false,
            gn: GnOptions::default(),
        }
    }
}

/// Sign of `λ(1 − 3n3²)`, zero within [`SIGN_TOL`].
pub fn borderline_sign(p: &PhysicalParams) -> i8 {
    let s = p.log_factor();
    if s.abs() <= SIGN_TOL {
        0
    } else if s > 0.0 {
        1
    } else {
        -1
    }
}

fn borderline_case(sign: i8) -> StabilityCase {
    match sign {
        -1 => StabilityCase::BorderlineStable,
        0 => StabilityCase::BorderlineMarginal,
        _ => StabilityCase::BorderlineUnstable,
    }
}

pub fn classify(p: &PhysicalParams, opts: &ClassifyOptions) -> StabilityVerdict {
    let params = effective_params(p);
    let mut verdict = StabilityVerdict {
        case: StabilityCase::Indeterminate,
        params,
        c: None,
        c_error: None,
        margin: None,
        borderline_sign: None,
        converged: None,
        grid_study: Vec::new(),
        notes: Vec::new(),
    };
    if params.trivial_regime() {
        verdict.case = StabilityCase::StableTrivial;
        verdict
            .notes
            .push("a + b/2 <= 0 and a - b/2 <= 0: interaction form is nonpositive".into());
        return verdict;
    }
    if opts.exact_borderline {
        let sign = borderline_sign(p);
        verdict.case = borderline_case(sign);
        verdict.borderline_sign = Some(sign);
        verdict.notes.push("C(a,b) = 1 asserted by caller".into());
        return verdict;
    }
    if !(opts.tol > 0.0) {
        verdict.notes.push("classifier tolerance must be positive".into());
        return verdict;
    }
    let res = match compute_gn_constant(params.a, params.b, &opts.gn) {
        Ok(r) => r,
        Err(GnError::NonConvergence { partial, .. }) => {
            verdict.c = Some(partial.c);
            verdict.c_error = Some(partial.c_error);
            verdict.converged = Some(false);
            verdict.grid_study = partial.grid_study.clone();
            verdict
                .notes
                .push("optimal-constant solver did not converge".into());
            return verdict;
        }
        Err(e) => {
            verdict.notes.push(format!("optimal-constant solver failed: {e}"));
            return verdict;
        }
    };
    let margin = res.c_error.max(opts.tol);
    verdict.c = Some(res.c);
    verdict.c_error = Some(res.c_error);
    verdict.margin = Some(margin);
    verdict.converged = Some(true);
    verdict.grid_study = res.grid_study.clone();
    verdict.notes.extend(res.warnings.iter().cloned());
    if res.c + margin < 1.0 {
        verdict.case = StabilityCase::StableSubcritical;
    } else if res.c - margin > 1.0 {
        verdict.case = StabilityCase::Unstable;
    } else if opts.borderline_analysis {
        let sign = borderline_sign(p);
        verdict.case = borderline_case(sign);
        verdict.borderline_sign = Some(sign);
        verdict
            .notes
            .push(format!("|C - 1| <= {margin:.3e}: resolved by the borderline sign rule"));
    } else {
        verdict.notes.push(format!(
            "|C - 1| <= {margin:.3e}: refine the grid or request borderline analysis"
        ));
    }
    verdict
}

#[derive(Debug, Clone)]
pub struct TuneOptions {
    pub gn: GnOptions,
    /// Target accuracy on `|C − 1|`.
    pub tol: f64,
    pub beta_min: f64,
    pub max_steps: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            gn: GnOptions::default(),
            tol: 5e-4,
            beta_min: 0.0,
            max_steps: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TunedBorderline {
    pub params: PhysicalParams,
    pub c: f64,
    pub c_error: f64,
    pub steps: usize,
    /// Optimizer at the tuned point; the natural collapse-scan seed.
    pub optimizer: WaveField,
}

/// Finds `β ≥ beta_min` with `|C(a,b) − 1| < tol` at fixed `λ`, `n3²`.
///
/// `b` does not depend on `β` and `a` decreases with slope −1, so `C` is
/// monotone along the search. Safeguarded regula falsi in `a`.
pub fn tune_to_borderline(
    lambda: f64,
    n3_sq: f64,
    trap: TrapSpec,
    opts: &TuneOptions,
) -> Result<TunedBorderline, StabilityError> {
    let base = PhysicalParams::with_n3_squared(opts.beta_min, lambda, n3_sq, trap.clone())?;
    let eff0 = effective_params(&base);
    let b = eff0.b;
    // a(β) = a_of_beta0 − β
    let a_shift = eff0.a + opts.beta_min;
    let a_max = eff0.a;
    let a_min = -0.5 * b.abs();
    if a_max <= a_min {
        return Err(StabilityError::BracketFailure {
            beta_min: opts.beta_min,
            a_max,
        });
    }
    let mut gn = opts.gn.clone();
    let eval = |a: f64, gn: &mut GnOptions| -> Result<(f64, f64, WaveField), StabilityError> {
        let r = compute_gn_constant(a, b, gn)?;
        gn.warm_start = Some(r.optimizer.clone());
        Ok((r.c - 1.0, r.c_error, r.optimizer))
    };
    let (f_hi, err_hi, u_hi) = eval(a_max, &mut gn)?;
    if f_hi < 0.0 {
        return Err(StabilityError::BracketFailure {
            beta_min: opts.beta_min,
            a_max,
        });
    }
    let finish = |a: f64, c: f64, err: f64, steps: usize, u: WaveField| -> Result<TunedBorderline, StabilityError> {
        let params = PhysicalParams::with_n3_squared(a_shift - a, lambda, n3_sq, trap.clone())?;
        Ok(TunedBorderline {
            params,
            c,
            c_error: err,
            steps,
            optimizer: u,
        })
    };
    if f_hi.abs() < opts.tol {
        return finish(a_max, f_hi + 1.0, err_hi, 1, u_hi);
    }
    // C → 0 as a approaches the trivial regime
    let (mut lo, mut f_lo) = (a_min, -1.0);
    let (mut hi, mut f_hiv) = (a_max, f_hi);
    let mut side = 0i8;
    for step in 2..=opts.max_steps {
        let mut a = hi - f_hiv * (hi - lo) / (f_hiv - f_lo);
        if !(a > lo && a < hi) {
            a = 0.5 * (lo + hi);
        }
        let (f, err, u) = eval(a, &mut gn)?;
        if f.abs() < opts.tol {
            return finish(a, f + 1.0, err, step, u);
        }
        if f > 0.0 {
            hi = a;
            f_hiv = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = a;
            f_lo = f;
            if side == -1 {
                f_hiv *= 0.5;
            }
            side = -1;
        }
    }
    Err(StabilityError::BracketFailure {
        beta_min: opts.beta_min,
        a_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanFit {
    pub c2: f64,
    pub clog: f64,
    pub c0: f64,
    /// Coefficient of `L²`, present only when the trap column is fitted.
    pub c_trap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub l: f64,
    pub n: usize,
    pub box_len: f64,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone)]
pub struct ScalingScan {
    pub points: Vec<ScanPoint>,
    pub fit: ScanFit,
    /// Root-mean-square misfit of the least-squares fit.
    pub fit_residual: f64,
}

impl ScalingScan {
    pub fn l_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.l).collect()
    }
    pub fn energies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.energy.total).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    /// Minimal physical box side for every `L`.
    pub box_len: f64,
    /// Required kinetic length of `u_L` in grid spacings.
    pub points_per_length: f64,
    pub max_nodes: usize,
    /// Adds an `L²` column for the trap contribution to the fit.
    pub trap_column: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            box_len: 12.0,
            points_per_length: 8.0,
            max_nodes: 4096,
            trap_column: false,
        }
    }
}

/// `n` log-spaced values from `l_max` down to `l_min`.
pub fn log_spaced(l_max: f64, l_min: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1).max(1) as f64;
            l_max * (l_min / l_max).powf(t)
        })
        .collect()
}

/// Samples `u_L` exactly: nodes spaced `L·dx_seed` with the seed's node
/// offsets, the seed zero-extended beyond its box.
fn concentrated(seed: &WaveField, l: f64, n: usize) -> Result<WaveField, StabilityError> {
    let sg = seed.grid();
    let (ns1, ns2) = (sg.n1(), sg.n2());
    let grid = make_grid(n, n, n as f64 * l * sg.dx1(), n as f64 * l * sg.dx2())?;
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    let off1 = n as isize / 2 - ns1 as isize / 2;
    let off2 = n as isize / 2 - ns2 as isize / 2;
    let inv = 1.0 / l;
    for j1 in 0..ns1 {
        let i1 = j1 as isize + off1;
        if i1 < 0 || i1 >= n as isize {
            continue;
        }
        for j2 in 0..ns2 {
            let i2 = j2 as isize + off2;
            if i2 < 0 || i2 >= n as isize {
                continue;
            }
            values[grid.index(i1 as usize, i2 as usize)] = seed.values()[sg.index(j1, j2)] * inv;
        }
    }
    Ok(WaveField::new(grid, values, Space::Position)?)
}

/// Least squares by normal equations on column-scaled data.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let k = rows[0].len();
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            let s = rows.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, yi) in rows.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += r[i] / scale[i] * r[j] / scale[j];
            }
            a[i][k] += r[i] / scale[i] * yi;
        }
    }
    // Gaussian elimination with partial pivoting
    for c in 0..k {
        let piv = (c..k)
            .max_by(|&x, &z| a[x][c].abs().total_cmp(&a[z][c].abs()))
            .unwrap_or(c);
        a.swap(c, piv);
        for r in 0..k {
            if r != c && a[c][c] != 0.0 {
                let f = a[r][c] / a[c][c];
                for j in c..=k {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    let coef: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i] / scale[i]).collect();
    let ssr: f64 = rows
        .iter()
        .zip(y)
        .map(|(r, yi)| {
            let fit: f64 = r.iter().zip(&coef).map(|(x, c)| x * c).sum();
            (yi - fit).powi(2)
        })
        .sum();
    (coef, (ssr / y.len() as f64).sqrt())
}

/// Fits `E ≈ c2 L⁻² + clog log L + c0 (+ c_trap L²)`.
pub fn fit_scaling(l: &[f64], e: &[f64], trap_column: bool) -> (ScanFit, f64) {
    let rows: Vec<Vec<f64>> = l
        .iter()
        .map(|&x| {
            let mut r = vec![x.powi(-2), x.ln(), 1.0];
            if trap_column {
                r.push(x * x);
            }
            r
        })
        .collect();
    let (c, res) = least_squares(&rows, e);
    (
        ScanFit {
            c2: c[0],
            clog: c[1],
            c0: c[2],
            c_trap: trap_column.then(|| c[3]),
        },
        res,
    )
}

/// Upsamples `seed` spectrally until its spacing is at most `dx_max`.
fn refine_seed(seed: &WaveField, dx_max: f64) -> Result<WaveField, StabilityError> {
    let g = seed.grid();
    let mut factor = 1usize;
    while g.max_dx() / factor as f64 > dx_max * (1.0 + 1e-12) {
        factor *= 2;
    }
    if factor == 1 {
        return Ok(seed.clone());
    }
    let fine: Grid2D = g.refined(factor)?;
    Ok(resample(seed, &fine)?)
}

pub fn collapse_scan(
    p: &PhysicalParams,
    seed: &WaveField,
    l_values: &[f64],
    opts: &ScanOptions,
) -> Result<ScalingScan, StabilityError> {
    seed.require(Space::Position)?;
    let min_points = if opts.trap_column { 5 } else { 4 };
    if l_values.len() < min_points {
        return Err(StabilityError::BadScan(format!(
            "need at least {min_points} scale values"
        )));
    }
    if l_values.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(StabilityError::BadScan("scale values must be positive".into()));
    }
    if l_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(StabilityError::BadScan(
            "scale values must be strictly decreasing".into(),
        ));
    }
    if seed.grid().dx1() != seed.grid().dx2() {
        return Err(StabilityError::BadScan("seed grid must have square cells".into()));
    }
    let mut seed = seed.clone();
    seed.normalize_mass(1.0);
    let t = seed.kinetic_integral();
    if (t - 1.0).abs() > 1e-6 {
        return Err(StabilityError::BadScan(format!(
            "seed must satisfy kinetic integral = 1, got {t}"
        )));
    }
    let seed = refine_seed(&seed, 1.0 / opts.points_per_length)?;
    let dx = seed.grid().dx1();
    let ns = seed.grid().n1().max(seed.grid().n2());

    let mut points = Vec::with_capacity(l_values.len());
    for &l in l_values {
        let cells = (opts.box_len / (l * dx)).ceil() as usize;
        let n = (cells + cells % 2).max(ns);
        if n > opts.max_nodes {
            return Err(StabilityError::UnresolvedScale {
                l,
                needed: n,
                cap: opts.max_nodes,
            });
        }
        let u = concentrated(&seed, l, n)?;
        let model = EnergyModel::new(u.grid(), p)?;
        let energy = model.energy(&u)?;
        points.push(ScanPoint {
            l,
            n,
            box_len: u.grid().l1(),
            energy,
        });
    }
    let l: Vec<f64> = points.iter().map(|q| q.l).collect();
    let e: Vec<f64> = points.iter().map(|q| q.energy.total).collect();
    let (fit, fit_residual) = fit_scaling(&l, &e, opts.trap_column);
    Ok(ScalingScan {
        points,
        fit,
        fit_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_example() {
        let p = PhysicalParams::new(10.0, 1.0, 0.0, TrapSpec::default()).unwrap();
        let v = classify(&p, &ClassifyOptions::default());
        assert_eq!(v.case, StabilityCase::StableTrivial);
        assert_eq!(v.params.a, -10.5);
        assert_eq!(v.params.b, -3.0);
        assert!(v.c.is_none());
    }

    #[test]
    fn sign_rule() {
        let t = TrapSpec::default();
        let third = PhysicalParams::with_n3_squared(0.0, 5.0, 1.0 / 3.0, t.clone()).unwrap();
        assert_eq!(borderline_sign(&third), 0);
        let one = PhysicalParams::with_n3_squared(0.0, 5.0, 1.0, t.clone()).unwrap();
        assert_eq!(borderline_sign(&one), -1);
        let zero = PhysicalParams::with_n3_squared(0.0, 5.0, 0.0, t.clone()).unwrap();
        assert_eq!(borderline_sign(&zero), 1);
        let opts = ClassifyOptions {
            exact_borderline: true,
            ..ClassifyOptions::default()
        };
        assert_eq!(classify(&third, &opts).case, StabilityCase::BorderlineMarginal);
        assert_eq!(classify(&one, &opts).case, StabilityCase::BorderlineStable);
        assert_eq!(classify(&zero, &opts).case, StabilityCase::BorderlineUnstable);
    }

    #[test]
    fn zero_lambda_cannot_be_tuned() {
        let err = tune_to_borderline(0.0, 0.5, TrapSpec::default(), &TuneOptions::default())
            .unwrap_err();
        assert!(matches!(err, StabilityError::BracketFailure { .. }));
    }

    #[test]
    fn fit_recovers_exact_coefficients() {
        let l = log_spaced(0.4, 0.04, 8);
        let e: Vec<f64> = l.iter().map(|x| -0.1 / (x * x) + 0.7 * x.ln() + 2.0).collect();
        let (fit, res) = fit_scaling(&l, &e, false);
        assert!((fit.c2 + 0.1).abs() < 1e-10);
        assert!((fit.clog - 0.7).abs() < 1e-9);
        assert!((fit.c0 - 2.0).abs() < 1e-9);
        assert!(res < 1e-10);
        let e: Vec<f64> = l.iter().map(|x| 0.3 * x.ln() + 0.5 * x * x).collect();
        let (fit, _) = fit_scaling(&l, &e, true);
        assert!((fit.clog - 0.3).abs() < 1e-9);
        assert!((fit.c_trap.unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn scan_rejects_bad_scales() {
        let g = make_grid(32, 32, 16.0, 16.0).unwrap();
        let seed = crate::gn::gaussian_start(&g, 1.0);
        let p = PhysicalParams::new(0.0, 1.0, 1.0, TrapSpec::default()).unwrap();
        let o = ScanOptions::default();
        assert!(collapse_scan(&p, &seed, &[0.1, 0.2, 0.05, 0.01], &o).is_err());
        assert!(collapse_scan(&p, &seed, &[0.1, 0.05], &o).is_err());
        let err = collapse_scan(&p, &seed, &[0.4, 0.2, 0.1, 1e-4], &o).unwrap_err();
        assert!(matches!(err, StabilityError::UnresolvedScale { .. }));
    }

    #[test]
    fn concentrated_state_scales_exactly() {
        let g = make_grid(64, 64, 20.0, 20.0).unwrap();
        let seed = crate::gn::gaussian_start(&g, 2.0);
        let u = concentrated(&seed, 0.25, 128).unwrap();
        assert!((u.mass() - seed.mass()).abs() < 1e-12);
        let ratio = u.kinetic_integral() / seed.kinetic_integral();
        assert!((ratio - 16.0).abs() < 1e-9, "{ratio}");
    }
}

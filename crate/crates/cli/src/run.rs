//! Dispatch from a validated configuration to the library, and the mapping
//! from outcomes to exit codes.

use crate::config::{Command, RunConfig, SymbolChoice};
use crate::output::{num, Table};
use crate::record::*;
use dipolar_core::gn::{compute_gn_constant, GnError, GnOptions, GnResult};
use dipolar_core::ground_state::{
    minimize_trapped, suggested_box, trap_matched_gaussian, GroundStateError, GroundStateOptions,
    GroundStateResult,
};
use dipolar_core::kernels::{KernelSymbol, SymbolKind};
use dipolar_core::stability::*;
use dipolar_core::{effective_params, Grid2D, PhysicalParams, TrapSpec, WaveField};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INDETERMINATE: i32 = 3;
pub const EXIT_COLLAPSE: i32 = 4;
pub const EXIT_NONCONVERGENCE: i32 = 5;

pub struct RunOutput {
    pub record: ResultRecord,
    pub tables: Vec<Table>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        self.record.status.exit_code
    }
}

/// Record of a run that never reached the library, e.g. a config error.
pub fn failure_record(command: &str, exit_code: i32, outcome: &str, message: String) -> ResultRecord {
    ResultRecord {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config: Default::default(),
        status: Status {
            exit_code,
            outcome: outcome.into(),
            message: Some(message),
        },
        outputs: None,
        refinement: Vec::new(),
        warnings: Vec::new(),
        timestamp: None,
    }
}

struct Builder {
    record: ResultRecord,
    tables: Vec<Table>,
}

impl Builder {
    fn new(cfg: &RunConfig) -> Self {
        let mut record = failure_record(cfg.command.name(), EXIT_OK, "ok", String::new());
        record.status.message = None;
        record.config = cfg.entries.clone();
        Self {
            record,
            tables: Vec::new(),
        }
    }
    fn status(&mut self, code: i32, outcome: &str, message: Option<String>) {
        self.record.status = Status {
            exit_code: code,
            outcome: outcome.into(),
            message,
        };
    }
    fn finish(self) -> RunOutput {
        RunOutput {
            record: self.record,
            tables: self.tables,
        }
    }
}

fn gn_options(cfg: &RunConfig) -> GnOptions {
    GnOptions {
        tol_rel: cfg.solver.tol_rel,
        tol_grad: cfg.solver.tol_grad,
        max_iter: cfg.solver.max_iter,
        ..GnOptions::default()
    }
}

/// Smooth random start for the GN solver, reproducible from `seed`.
fn seeded_start(seed: u64) -> WaveField {
    let grid = Grid2D::square(128, 24.0).expect("valid grid");
    let mut rng = StdRng::seed_from_u64(seed);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..1.5),
            )
        })
        .collect();
    WaveField::from_real_fn(grid, |x, y| {
        bumps
            .iter()
            .map(|&(c1, c2, w, amp)| amp * (-((x - c1).powi(2) + (y - c2).powi(2)) / (2.0 * w * w)).exp())
            .sum()
    })
    .expect("finite start")
}

/// Multiplies `u` by `1 + amplitude·η` with η uniform in [−1, 1] per node.
fn perturbed(mut u: WaveField, amplitude: f64, seed: u64) -> WaveField {
    let mut rng = StdRng::seed_from_u64(seed);
    for v in u.values_mut() {
        *v *= 1.0 + amplitude * rng.gen_range(-1.0..1.0);
    }
    u.normalize_mass(1.0);
    u
}

fn gn_outputs(res: &GnResult, a: f64, b: f64) -> Outputs {
    Outputs::GnConstant {
        a,
        b,
        c: res.c,
        c_error: res.c_error,
        residual: res.residual,
        converged: res.converged,
        starts: res
            .starts
            .iter()
            .map(|s| StartRecord {
                label: s.label.to_string(),
                c: s.c.is_finite().then_some(s.c),
                converged: s.converged,
            })
            .collect(),
    }
}

fn run_gn(cfg: &RunConfig, out: &mut Builder) {
    let (a, b) = match (cfg.a, cfg.b) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let p = cfg.physical(None).expect("validated physical parameters");
            let e = effective_params(&p);
            (e.a, e.b)
        }
    };
    let mut opts = gn_options(cfg);
    if cfg.solver.seed != 0 {
        opts.warm_start = Some(seeded_start(cfg.solver.seed));
    }
    match compute_gn_constant(a, b, &opts) {
        Ok(res) => {
            out.record.refinement = res.grid_study.iter().map(GridStep::from).collect();
            out.record.warnings = res.warnings.clone();
            out.record.outputs = Some(gn_outputs(&res, a, b));
        }
        Err(GnError::NonConvergence { partial, .. }) => {
            out.record.refinement = partial.grid_study.iter().map(GridStep::from).collect();
            out.record.outputs = Some(gn_outputs(&partial, a, b));
            out.status(EXIT_NONCONVERGENCE, "non-convergence", Some("optimal-constant ascent did not converge".into()));
        }
        Err(e) => out.status(EXIT_FAILURE, "error", Some(e.to_string())),
    }
}

fn tuned_record(t: &TunedBorderline) -> Tuned {
    Tuned {
        beta: t.params.beta,
        c: t.c,
        c_error: t.c_error,
        steps: t.steps,
    }
}

fn tune(cfg: &RunConfig) -> Result<TunedBorderline, StabilityError> {
    let opts = TuneOptions {
        gn: gn_options(cfg),
        ..TuneOptions::default()
    };
    tune_to_borderline(
        cfg.lambda.expect("validated"),
        cfg.n3sq.as_ref().expect("validated").value,
        cfg.trap.clone(),
        &opts,
    )
}

fn stability_error(out: &mut Builder, e: StabilityError) {
    let code = match &e {
        StabilityError::Gn(GnError::NonConvergence { .. }) => EXIT_NONCONVERGENCE,
        _ => EXIT_FAILURE,
    };
    let outcome = if code == EXIT_NONCONVERGENCE { "non-convergence" } else { "error" };
    out.status(code, outcome, Some(e.to_string()));
}

fn run_stability(cfg: &RunConfig, out: &mut Builder) {
    let (p, tuned) = if cfg.scan.tune {
        match tune(cfg) {
            Ok(t) => (t.params.clone(), Some(tuned_record(&t))),
            Err(e) => return stability_error(out, e),
        }
    } else {
        (cfg.physical(None).expect("validated"), None)
    };
    let opts = ClassifyOptions {
        tol: cfg.solver.tol,
        borderline_analysis: cfg.solver.borderline_analysis,
        exact_borderline: cfg.solver.exact_borderline || tuned.is_some(),
        gn: gn_options(cfg),
    };
    let v = classify(&p, &opts);
    out.record.refinement = v.grid_study.iter().map(GridStep::from).collect();
    out.record.outputs = Some(Outputs::Stability {
        verdict: v.case.name().into(),
        stable: v.case.is_stable(),
        a: v.params.a,
        b: v.params.b,
        c: v.c,
        c_error: v.c_error,
        margin: v.margin,
        borderline_sign: v.borderline_sign,
        tuned,
        notes: v.notes.clone(),
    });
    if v.converged == Some(false) {
        out.status(EXIT_NONCONVERGENCE, "non-convergence", Some("optimal-constant ascent did not converge".into()));
    } else if v.case == StabilityCase::Indeterminate {
        out.status(EXIT_INDETERMINATE, "indeterminate", v.notes.last().cloned());
    }
}

fn ground_outputs(r: &GroundStateResult, n: usize, box_len: f64) -> Outputs {
    Outputs::GroundState {
        energy: Energies::from(&r.energy),
        mu: r.mu,
        residual: r.residual,
        iterations: r.iterations,
        converged: r.converged,
        collapse_detected: r.collapse_detected,
        n,
        box_len,
        l_history: r.l_history.clone(),
        energy_history: r.energy_history.clone(),
    }
}

fn history_table(r: &GroundStateResult) -> Table {
    Table {
        file: "history.csv",
        header: vec!["iteration", "width", "energy"],
        rows: r
            .l_history
            .iter()
            .zip(&r.energy_history)
            .enumerate()
            .map(|(i, (l, e))| vec![i.to_string(), num(*l), num(*e)])
            .collect(),
        trailer: None,
    }
}

fn run_ground_state(cfg: &RunConfig, out: &mut Builder) {
    let p = cfg.physical(None).expect("validated");
    let box_len = match (cfg.grid.box_len, &cfg.trap) {
        (Some(l), _) => l,
        (None, TrapSpec::Free) => {
            return out.status(EXIT_CONFIG, "config-error", Some("key `box`: required with trap = free".into()))
        }
        (None, trap) => suggested_box(trap, 1.0),
    };
    let grid = match Grid2D::square(cfg.grid.n, box_len) {
        Ok(g) => g,
        Err(e) => return out.status(EXIT_CONFIG, "config-error", Some(e.to_string())),
    };
    let mut initial = trap_matched_gaussian(&grid, &cfg.trap);
    if cfg.solver.perturb > 0.0 {
        initial = perturbed(initial, cfg.solver.perturb, cfg.solver.seed);
    }
    let opts = GroundStateOptions {
        max_iter: cfg.solver.max_iter,
        tol_energy: cfg.solver.tol_energy,
        tol_residual: cfg.solver.tol_grad,
        initial: Some(initial),
        ..GroundStateOptions::default()
    };
    let n = cfg.grid.n;
    match minimize_trapped(&p, &grid, &opts) {
        Ok(r) => {
            out.record.outputs = Some(ground_outputs(&r, n, box_len));
            out.tables.push(history_table(&r));
        }
        Err(e) => {
            let (code, outcome) = match &e {
                GroundStateError::CollapseDetected(_) => (EXIT_COLLAPSE, "collapse-detected"),
                GroundStateError::NonConvergence(_) => (EXIT_NONCONVERGENCE, "non-convergence"),
                GroundStateError::BadOptions(_) => (EXIT_CONFIG, "config-error"),
                _ => (EXIT_FAILURE, "error"),
            };
            if let Some(r) = e.partial() {
                out.record.outputs = Some(ground_outputs(r, n, box_len));
                out.tables.push(history_table(r));
            }
            out.status(code, outcome, Some(e.to_string()));
        }
    }
}

fn run_scan(cfg: &RunConfig, out: &mut Builder) {
    let (p, seed, tuned): (PhysicalParams, WaveField, Option<Tuned>) = if cfg.scan.tune {
        match tune(cfg) {
            Ok(t) => (t.params.clone(), t.optimizer.clone(), Some(tuned_record(&t))),
            Err(e) => return stability_error(out, e),
        }
    } else {
        let p = cfg.physical(None).expect("validated");
        let e = effective_params(&p);
        match compute_gn_constant(e.a, e.b, &gn_options(cfg)) {
            Ok(r) => {
                out.record.refinement = r.grid_study.iter().map(GridStep::from).collect();
                (p, r.optimizer, None)
            }
            Err(e) => return stability_error(out, StabilityError::Gn(e)),
        }
    };
    let ls = log_spaced(cfg.scan.l_max, cfg.scan.l_min, cfg.scan.l_count);
    let defaults = ScanOptions::default();
    let opts = ScanOptions {
        trap_column: cfg.scan.trap_column,
        box_len: cfg.grid.box_len.unwrap_or(defaults.box_len),
        ..defaults
    };
    let scan = match collapse_scan(&p, &seed, &ls, &opts) {
        Ok(s) => s,
        Err(e) => return stability_error(out, e),
    };
    let rows: Vec<ScanRow> = scan
        .points
        .iter()
        .map(|q| ScanRow {
            l: q.l,
            n: q.n,
            box_len: q.box_len,
            energy: Energies::from(&q.energy),
        })
        .collect();
    let fit = Fit {
        c2: scan.fit.c2,
        clog: scan.fit.clog,
        c0: scan.fit.c0,
        c_trap: scan.fit.c_trap,
        residual: scan.fit_residual,
    };
    let mut trailer = vec![
        vec!["c2".into(), num(fit.c2)],
        vec!["clog".into(), num(fit.clog)],
        vec!["c0".into(), num(fit.c0)],
    ];
    if let Some(t) = fit.c_trap {
        trailer.push(vec!["c_trap".into(), num(t)]);
    }
    trailer.push(vec!["residual".into(), num(fit.residual)]);
    out.tables.push(Table {
        file: "scan.csv",
        header: vec!["L", "n", "box", "energy", "kinetic", "potential", "quartic", "dipolar"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    num(r.l),
                    r.n.to_string(),
                    num(r.box_len),
                    num(r.energy.total),
                    num(r.energy.kinetic),
                    num(r.energy.potential),
                    num(r.energy.quartic),
                    num(r.energy.dipolar),
                ]
            })
            .collect(),
        trailer: Some((vec!["fit_term", "value"], trailer)),
    });
    out.record.outputs = Some(Outputs::CollapseScan {
        beta: p.beta,
        tuned,
        fit,
        log_factor: p.log_factor(),
        rows,
    });
}

fn run_symbols(cfg: &RunConfig, out: &mut Builder) {
    let n = cfg.grid.n;
    let box_len = cfg.grid.box_len.unwrap_or(2.0 * std::f64::consts::PI);
    let grid = match Grid2D::with_min_nodes(n, n, box_len, box_len, 2) {
        Ok(g) => g,
        Err(e) => return out.status(EXIT_CONFIG, "config-error", Some(e.to_string())),
    };
    let (kind, name) = match cfg.symbol {
        SymbolChoice::HighFreq => (SymbolKind::HighFreqU2D, "high_freq"),
        SymbolChoice::Fab => (
            SymbolKind::Fab {
                a: cfg.a.expect("validated"),
                b: cfg.b.expect("validated"),
            },
            "fab",
        ),
        SymbolChoice::Quasi2D => (
            SymbolKind::Quasi2D {
                n3_sq: cfg.n3sq.as_ref().expect("validated").value,
            },
            "quasi2d",
        ),
    };
    let sym = match KernelSymbol::new(&grid, kind) {
        Ok(s) => s,
        Err(e) => return out.status(EXIT_CONFIG, "config-error", Some(e.to_string())),
    };
    let mut rows = Vec::with_capacity(grid.len());
    for (i, &x1) in grid.xi1().iter().enumerate() {
        for (j, &x2) in grid.xi2().iter().enumerate() {
            rows.push(vec![num(x1), num(x2), num(sym.values()[grid.index(i, j)])]);
        }
    }
    let (min, max) = sym
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    out.record.outputs = Some(Outputs::SymbolDump {
        symbol: name.into(),
        n,
        box_len,
        min,
        max,
        rows: rows.len(),
    });
    out.tables.push(Table {
        file: "symbol.csv",
        header: vec!["xi1", "xi2", "value"],
        rows,
        trailer: None,
    });
}

pub fn run_command(cfg: &RunConfig) -> RunOutput {
    let mut out = Builder::new(cfg);
    match cfg.command {
        Command::GnConstant => run_gn(cfg, &mut out),
        Command::Stability => run_stability(cfg, &mut out),
        Command::GroundState => run_ground_state(cfg, &mut out),
        Command::CollapseScan => run_scan(cfg, &mut out),
        Command::SymbolDump => run_symbols(cfg, &mut out),
    }
    out.finish()
}

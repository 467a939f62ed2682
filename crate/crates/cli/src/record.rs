//! Serializable result records. Floats are written in shortest round-trip
//! form, so a record parses back to identical values.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Every configuration entry as given, after overrides.
    pub config: BTreeMap<String, String>,
    pub status: Status,
    pub outputs: Option<Outputs>,
    /// Grid-refinement trail of every GN solve, in execution order.
    pub refinement: Vec<GridStep>,
    pub warnings: Vec<String>,
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub exit_code: i32,
    pub outcome: String,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStep {
    pub n1: usize,
    pub n2: usize,
    pub l1: f64,
    pub l2: f64,
    pub c: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub label: String,
    /// Absent when the start had `F ≤ 0` and was skipped.
    pub c: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    pub kinetic: f64,
    pub potential: f64,
    pub quartic: f64,
    pub dipolar: f64,
    pub total: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub l: f64,
    pub n: usize,
    pub box_len: f64,
    pub energy: Energies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub c2: f64,
    pub clog: f64,
    pub c0: f64,
    pub c_trap: Option<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub beta: f64,
    pub c: f64,
    pub c_error: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outputs {
    GnConstant {
        a: f64,
        b: f64,
        c: f64,
        c_error: f64,
        residual: f64,
        converged: bool,
        starts: Vec<StartRecord>,
    },
    Stability {
        verdict: String,
        stable: bool,
        a: f64,
        b: f64,
        c: Option<f64>,
        c_error: Option<f64>,
        margin: Option<f64>,
        borderline_sign: Option<i8>,
        tuned: Option<Tuned>,
        notes: Vec<String>,
    },
    GroundState {
        energy: Energies,
        mu: f64,
        residual: f64,
        iterations: usize,
        converged: bool,
        collapse_detected: bool,
        n: usize,
        box_len: f64,
        l_history: Vec<f64>,
        energy_history: Vec<f64>,
    },
    CollapseScan {
        beta: f64,
        tuned: Option<Tuned>,
        fit: Fit,
        log_factor: f64,
        rows: Vec<ScanRow>,
    },
    SymbolDump {
        symbol: String,
        n: usize,
        box_len: f64,
        min: f64,
        max: f64,
        rows: usize,
    },
}

impl From<&dipolar_core::EnergyBreakdown> for Energies {
    fn from(e: &dipolar_core::EnergyBreakdown) -> Self {
        Self {
            kinetic: e.kinetic,
            potential: e.potential,
            quartic: e.quartic,
            dipolar: e.dipolar,
            total: e.total,
            mass: e.mass,
        }
    }
}

impl From<&dipolar_core::gn::GridEstimate> for GridStep {
    fn from(g: &dipolar_core::gn::GridEstimate) -> Self {
        Self {
            n1: g.n1,
            n2: g.n2,
            l1: g.l1,
            l2: g.l2,
            c: g.c,
            residual: g.residual,
            iterations: g.iterations,
        }
    }
}

//! Numerical stability analysis for quasi-two-dimensional dipolar
//! Bose–Einstein condensates.
//!
//! The crate computes the optimal constant `C(a,b)` of the generalized
//! Gagliardo–Nirenberg inequality that decides stability, minimizes the
//! trapped energy, and measures the collapse asymptotics of the energy.

pub mod functionals;
pub mod gn;
pub mod grid;
pub mod ground_state;
pub mod kernels;
pub mod special;
pub mod stability;

pub use functionals::{
    effective_params, energy_2d, fab_energy, fab_energy_coulomb_form, gradient_energy,
    EffectiveParams, EnergyBreakdown, EnergyModel, FunctionalError, PhysicalParams, TrapSpec,
};
pub use grid::{forward_transform, inverse_transform, make_grid, Grid2D, GridError, Space, WaveField};

//! Configuration, dispatch and serialization for the `dipolar-stab` binary.

pub mod config;
pub mod output;
pub mod record;
pub mod run;

//! Compact port-Hamiltonian analysis of linear RLC circuits with sources.

pub mod analysis;
pub mod assign;
pub mod batch;
pub mod circgen;
pub mod codegen;
pub mod cph;
pub mod ddreduce;
pub mod error;
pub mod exact;
pub mod graph;
pub mod loopcut;
pub mod mna;
pub mod netlist;
pub mod ode;
pub mod sigma;
pub mod theorem;
pub mod waveform;

pub use error::CphError;

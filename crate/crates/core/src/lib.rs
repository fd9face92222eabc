pub mod admm;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod prox;
pub mod simulate;
pub mod stats;
pub mod tuning;

//! Hardware trojan detection on RTL designs.
//!
//! The pipeline runs Verilog source through [`verilog`] (parse + flatten),
//! turns the flat design into a data-flow graph with [`dfg`], and classifies
//! graphs with the dense GNN engine in [`gnn`]. [`quant`] compresses trained
//! models to 4-bit weights, [`inject`] synthesizes labeled trojan corpora,
//! and [`eval`] provides splits, k-fold cross-validation, and metrics.

pub mod checkpoint;
pub mod dfg;
pub mod eval;
pub mod fixtures;
pub mod gnn;
pub mod inject;
pub mod quant;
pub mod verilog;

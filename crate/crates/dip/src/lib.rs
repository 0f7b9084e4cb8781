//! Power flow front end, file formats and command line for `dip-core`.

pub mod cli;
pub mod opf;
pub mod pnlp;
pub mod report;

pub use dip_core;

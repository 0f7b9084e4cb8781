//! AC optimal power flow front end.

pub mod admittance;
pub mod case;
pub mod interconnect;
pub mod matpower;
pub mod model;

pub use admittance::{build_admittance, Admittance};
pub use case::{Branch, Bus, BusType, Cost, Generator, OpfCase};
pub use interconnect::{interconnect_copies, parse_tie_specs, Interconnection, TieSpec};
pub use matpower::{parse_matpower_case, write_matpower_case, ParseError};
pub use model::{build_opf_nlp, partition_opf, Component, CouplingRow, OpfNlp, OpfPartition, OpfPoint, RegionLayout};

#[derive(Debug, thiserror::Error)]
pub enum OpfError {
    #[error("branch {from}-{to} has zero impedance")]
    ZeroImpedance { from: usize, to: usize },
    #[error("expected exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("bus {bus} has no path to the slack bus")]
    Disconnected { bus: usize },
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("region {region} is not connected")]
    RegionDisconnected { region: usize },
    #[error("region {region} has no tie line")]
    NoTies { region: usize },
    #[error("invalid tie list: {0}")]
    Tie(String),
    #[error(transparent)]
    Core(#[from] dip_core::Error),
}

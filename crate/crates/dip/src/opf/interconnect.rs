//! Several copies of one case joined by tie lines.

use serde::{Deserialize, Serialize};

use super::case::{Branch, BusType, OpfCase};
use super::OpfError;

/// A tie line from bus `bus_a` of copy `copy_a` to bus `bus_b` of copy
/// `copy_b`. Copies are numbered from 1, buses by their id in the base case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TieSpec {
    pub copy_a: usize,
    pub bus_a: usize,
    pub copy_b: usize,
    pub bus_b: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
}

/// Result of [`interconnect_copies`]: the joined case and one region per
/// copy, as lists of bus ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Interconnection {
    pub case: OpfCase,
    pub regions: Vec<Vec<usize>>,
    /// Offset between the bus ids of consecutive copies.
    pub stride: usize,
}

/// Bus `id` of copy `copy` (from 1) becomes `(copy - 1) * stride + id`,
/// where `stride` is the smallest power of ten above every bus id. Copies
/// after the first keep their buses but lose the slack role (it becomes PV).
pub fn interconnect_copies(case: &OpfCase, k: usize, ties: &[TieSpec]) -> Result<Interconnection, OpfError> {
    if k < 2 {
        return Err(OpfError::Tie(format!("need at least 2 copies, got {k}")));
    }
    let max_id = case.buses.iter().map(|b| b.id).max().unwrap_or(0);
    let mut stride = 10;
    while stride <= max_id {
        stride *= 10;
    }
    let lookup = case.bus_lookup();
    let renumber = |copy: usize, id: usize| (copy - 1) * stride + id;

    let mut joined = OpfCase {
        name: format!("{}x{}", case.name, k),
        base_mva: case.base_mva,
        buses: Vec::with_capacity(k * case.buses.len()),
        branches: Vec::with_capacity(k * case.branches.len() + ties.len()),
        generators: Vec::with_capacity(k * case.generators.len()),
    };
    let mut regions = Vec::with_capacity(k);
    for copy in 1..=k {
        let mut region = Vec::with_capacity(case.buses.len());
        for b in &case.buses {
            let mut nb = b.clone();
            nb.id = renumber(copy, b.id);
            if copy > 1 && nb.kind == BusType::Slack {
                nb.kind = BusType::Pv;
            }
            region.push(nb.id);
            joined.buses.push(nb);
        }
        for br in &case.branches {
            let mut nb = br.clone();
            nb.from = renumber(copy, br.from);
            nb.to = renumber(copy, br.to);
            joined.branches.push(nb);
        }
        for g in &case.generators {
            let mut ng = g.clone();
            ng.bus = renumber(copy, g.bus);
            joined.generators.push(ng);
        }
        regions.push(region);
    }
    for (i, t) in ties.iter().enumerate() {
        for (copy, bus) in [(t.copy_a, t.bus_a), (t.copy_b, t.bus_b)] {
            if copy == 0 || copy > k {
                return Err(OpfError::Tie(format!("tie {}: copy {copy} out of range 1..={k}", i + 1)));
            }
            if !lookup.contains_key(&bus) {
                return Err(OpfError::Tie(format!("tie {}: unknown bus {bus}", i + 1)));
            }
        }
        if t.copy_a == t.copy_b {
            return Err(OpfError::Tie(format!("tie {} connects copy {} to itself", i + 1, t.copy_a)));
        }
        joined.branches.push(Branch {
            from: renumber(t.copy_a, t.bus_a),
            to: renumber(t.copy_b, t.bus_b),
            r: t.r,
            x: t.x,
            b: t.b,
            rate_a: 0.0,
            rate_b: 0.0,
            rate_c: 0.0,
            tap: 0.0,
            in_service: true,
            angmin: -360.0,
            angmax: 360.0,
        });
    }
    Ok(Interconnection {
        case: joined,
        regions,
        stride,
    })
}

pub fn parse_tie_specs(json: &str) -> Result<Vec<TieSpec>, serde_json::Error> {
    serde_json::from_str(json)
}

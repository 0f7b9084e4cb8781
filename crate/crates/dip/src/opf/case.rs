//! In-memory power grid case. Quantities are per unit on `base_mva` except
//! generator cost coefficients, which stay in $/MW-based units.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

impl BusType {
    pub fn code(self) -> u8 {
        match self {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Slack => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub kind: BusType,
    pub pd: f64,
    pub qd: f64,
    /// Shunt conductance and susceptance, per unit.
    pub gs: f64,
    pub bs: f64,
    pub area: f64,
    pub vm: f64,
    /// Degrees.
    pub va: f64,
    pub base_kv: f64,
    pub zone: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    /// Off-nominal ratio as written in the file; 0 means 1.
    pub tap: f64,
    pub in_service: bool,
    pub angmin: f64,
    pub angmax: f64,
}

impl Branch {
    pub fn ratio(&self) -> f64 {
        if self.tap == 0.0 {
            1.0
        } else {
            self.tap
        }
    }
}

/// Quadratic cost `c2 P^2 + c1 P + c0` in MW.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cost {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub mbase: f64,
    pub in_service: bool,
    pub pmax: f64,
    pub pmin: f64,
    pub cost: Cost,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpfCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl OpfCase {
    /// Position of bus `id` in `buses`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus_lookup(&self) -> std::collections::HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_buses(&self) -> Vec<usize> {
        (0..self.buses.len())
            .filter(|&i| self.buses[i].kind == BusType::Slack)
            .collect()
    }

    pub fn active_branches(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|b| b.in_service)
    }

    pub fn active_generators(&self) -> impl Iterator<Item = (usize, &Generator)> {
        self.generators.iter().enumerate().filter(|(_, g)| g.in_service)
    }
}

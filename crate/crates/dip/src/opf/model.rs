//! AC OPF in rectangular voltage coordinates `v = e + jf`.
//!
//! Per region the variables are `(e, f)` of every owned bus, `(e, f)` of
//! every foreign tie-line endpoint (a local copy) and `(p, q)` of every
//! in-service generator at an owned bus, in that order. Equalities are the
//! active and reactive balance of the owned buses,
//!
//! ```text
//! P_k(e, f) - sum_{g at k} p_g + pd_k = 0
//! Q_k(e, f) - sum_{g at k} q_g + qd_k = 0
//! ```
//!
//! with `P + jQ = diag(v) conj(Y v)`, plus `e = |v_slack|, f = 0` at the
//! slack bus. Inequalities are generator boxes and
//! `vmin^2 <= e^2 + f^2 <= vmax^2`.

use std::collections::{HashMap, VecDeque};

use dip_core::{CooMatrix, PartitionedNlp, QuadraticFunction, QuadraticSubsystem, Subsystem};

use super::admittance::{build_admittance, Admittance};
use super::case::OpfCase;
use super::OpfError;

/// Variable layout of one region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionLayout {
    /// Owned buses, as positions in `case.buses`.
    pub buses: Vec<usize>,
    /// Foreign buses with a local copy.
    pub copies: Vec<usize>,
    /// In-service generators at owned buses, as indices into
    /// `case.generators`.
    pub generators: Vec<usize>,
}

impl RegionLayout {
    pub fn n_x(&self) -> usize {
        2 * (self.buses.len() + self.copies.len() + self.generators.len())
    }

    /// Slot of a bus among owned buses followed by copies.
    pub fn voltage_slot(&self, bus: usize) -> Option<usize> {
        self.buses
            .iter()
            .chain(&self.copies)
            .position(|&b| b == bus)
    }

    pub fn e(slot: usize) -> usize {
        2 * slot
    }

    pub fn f(slot: usize) -> usize {
        2 * slot + 1
    }

    pub fn p(&self, g: usize) -> usize {
        2 * (self.buses.len() + self.copies.len() + g)
    }

    pub fn q(&self, g: usize) -> usize {
        self.p(g) + 1
    }
}

/// A full-network operating point: voltages per bus position, outputs per
/// generator index (out-of-service generators are ignored).
#[derive(Clone, Debug, PartialEq)]
pub struct OpfPoint {
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl OpfPoint {
    /// `e = 1, f = 0`, generators at the midpoints of their bounds.
    pub fn flat(case: &OpfCase) -> Self {
        let mid = |lo: f64, hi: f64| if lo.is_finite() && hi.is_finite() { 0.5 * (lo + hi) } else { 0.0 };
        Self {
            e: vec![1.0; case.buses.len()],
            f: vec![0.0; case.buses.len()],
            p: case.generators.iter().map(|g| mid(g.pmin, g.pmax)).collect(),
            q: case.generators.iter().map(|g| mid(g.qmin, g.qmax)).collect(),
        }
    }

    /// Local vector of a region.
    pub fn restrict(&self, layout: &RegionLayout) -> Vec<f64> {
        let mut x = vec![0.0; layout.n_x()];
        for (slot, &b) in layout.buses.iter().chain(&layout.copies).enumerate() {
            x[RegionLayout::e(slot)] = self.e[b];
            x[RegionLayout::f(slot)] = self.f[b];
        }
        for (g, &gi) in layout.generators.iter().enumerate() {
            x[layout.p(g)] = self.p[gi];
            x[layout.q(g)] = self.q[gi];
        }
        x
    }

    /// Inverse of [`restrict`](Self::restrict) over all regions, taking each
    /// bus from its owner and ignoring copies.
    pub fn assemble(case: &OpfCase, layouts: &[RegionLayout], xs: &[Vec<f64>]) -> Self {
        let mut pt = OpfPoint {
            e: vec![0.0; case.buses.len()],
            f: vec![0.0; case.buses.len()],
            p: vec![0.0; case.generators.len()],
            q: vec![0.0; case.generators.len()],
        };
        for (layout, x) in layouts.iter().zip(xs) {
            for (slot, &b) in layout.buses.iter().enumerate() {
                pt.e[b] = x[RegionLayout::e(slot)];
                pt.f[b] = x[RegionLayout::f(slot)];
            }
            for (g, &gi) in layout.generators.iter().enumerate() {
                pt.p[gi] = x[layout.p(g)];
                pt.q[gi] = x[layout.q(g)];
            }
        }
        pt
    }
}

/// The unpartitioned problem.
#[derive(Clone, Debug)]
pub struct OpfNlp {
    pub layout: RegionLayout,
    pub evaluator: QuadraticSubsystem,
}

pub fn build_opf_nlp(case: &OpfCase) -> Result<OpfNlp, OpfError> {
    let slack = single_slack(case)?;
    let y = build_admittance(case)?;
    check_connected(case, &(0..case.buses.len()).collect::<Vec<_>>(), slack).map_err(|bus| {
        OpfError::Disconnected {
            bus: case.buses[bus].id,
        }
    })?;
    let layout = RegionLayout {
        buses: (0..case.buses.len()).collect(),
        copies: Vec::new(),
        generators: case.active_generators().map(|(i, _)| i).collect(),
    };
    let evaluator = build_region(case, &y, &layout, Some(slack));
    Ok(OpfNlp { layout, evaluator })
}

pub(crate) fn single_slack(case: &OpfCase) -> Result<usize, OpfError> {
    match case.slack_buses().as_slice() {
        [s] => Ok(*s),
        other => Err(OpfError::SlackCount(other.len())),
    }
}

/// Breadth-first search over in-service branches restricted to `buses`,
/// returning the first bus not reached from `root`.
pub(crate) fn check_connected(case: &OpfCase, buses: &[usize], root: usize) -> Result<(), usize> {
    let lookup = case.bus_lookup();
    let member: HashMap<usize, bool> = buses.iter().map(|&b| (b, true)).collect();
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for br in case.active_branches() {
        let (f, t) = (lookup[&br.from], lookup[&br.to]);
        if member.contains_key(&f) && member.contains_key(&t) {
            adj.entry(f).or_default().push(t);
            adj.entry(t).or_default().push(f);
        }
    }
    let mut seen: HashMap<usize, bool> = HashMap::new();
    let mut queue = VecDeque::from([root]);
    seen.insert(root, true);
    while let Some(b) = queue.pop_front() {
        for &n in adj.get(&b).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(n, true).is_none() {
                queue.push_back(n);
            }
        }
    }
    match buses.iter().find(|b| !seen.contains_key(b)) {
        Some(&b) => Err(b),
        None => Ok(()),
    }
}

/// Objective, equalities and inequalities of one region.
pub(crate) fn build_region(
    case: &OpfCase,
    y: &Admittance,
    layout: &RegionLayout,
    slack: Option<usize>,
) -> QuadraticSubsystem {
    let base = case.base_mva;
    let slot: HashMap<usize, usize> = layout
        .buses
        .iter()
        .chain(&layout.copies)
        .enumerate()
        .map(|(s, &b)| (b, s))
        .collect();

    let mut objective = QuadraticFunction::new();
    for (g, &gi) in layout.generators.iter().enumerate() {
        let c = case.generators[gi].cost;
        let p = layout.p(g);
        objective
            .add_product(p, p, c.c2 * base * base)
            .add_linear(p, c.c1 * base)
            .add_constant(c.c0);
    }

    let mut gens_at: HashMap<usize, Vec<usize>> = HashMap::new();
    for (g, &gi) in layout.generators.iter().enumerate() {
        let bus = case.bus_index(case.generators[gi].bus).expect("generator bus");
        gens_at.entry(bus).or_default().push(g);
    }

    let mut equalities = Vec::with_capacity(2 * layout.buses.len() + 2);
    for &k in &layout.buses {
        let (ek, fk) = (RegionLayout::e(slot[&k]), RegionLayout::f(slot[&k]));
        let mut p = QuadraticFunction::constant(case.buses[k].pd);
        let mut q = QuadraticFunction::constant(case.buses[k].qd);
        for (m, ykm) in y.row(k) {
            let s = *slot
                .get(&m)
                .expect("neighbour of an owned bus must be owned or copied");
            let (em, fm) = (RegionLayout::e(s), RegionLayout::f(s));
            let (g, b) = (ykm.re, ykm.im);
            // P += G(e_k e_m + f_k f_m) + B(f_k e_m - e_k f_m)
            p.add_product(ek, em, g)
                .add_product(fk, fm, g)
                .add_product(fk, em, b)
                .add_product(ek, fm, -b);
            // Q += G(f_k e_m - e_k f_m) - B(e_k e_m + f_k f_m)
            q.add_product(fk, em, g)
                .add_product(ek, fm, -g)
                .add_product(ek, em, -b)
                .add_product(fk, fm, -b);
        }
        for &g in gens_at.get(&k).map(Vec::as_slice).unwrap_or(&[]) {
            p.add_linear(layout.p(g), -1.0);
            q.add_linear(layout.q(g), -1.0);
        }
        equalities.push(p);
        equalities.push(q);
    }
    if let Some(s) = slack.filter(|s| layout.buses.contains(s)) {
        let sl = slot[&s];
        let mut e = QuadraticFunction::constant(-case.buses[s].vm);
        e.add_linear(RegionLayout::e(sl), 1.0);
        let mut f = QuadraticFunction::new();
        f.add_linear(RegionLayout::f(sl), 1.0);
        equalities.push(e);
        equalities.push(f);
    }

    let mut inequalities = Vec::new();
    for (g, &gi) in layout.generators.iter().enumerate() {
        let gen = &case.generators[gi];
        upper(&mut inequalities, layout.p(g), gen.pmax);
        lower(&mut inequalities, layout.p(g), gen.pmin);
        upper(&mut inequalities, layout.q(g), gen.qmax);
        lower(&mut inequalities, layout.q(g), gen.qmin);
    }
    for &k in &layout.buses {
        let s = slot[&k];
        let (e, f) = (RegionLayout::e(s), RegionLayout::f(s));
        let bus = &case.buses[k];
        let mut lo = QuadraticFunction::constant(bus.vmin * bus.vmin);
        lo.add_product(e, e, -1.0).add_product(f, f, -1.0);
        let mut hi = QuadraticFunction::constant(-bus.vmax * bus.vmax);
        hi.add_product(e, e, 1.0).add_product(f, f, 1.0);
        inequalities.push(lo);
        inequalities.push(hi);
    }
    QuadraticSubsystem::new(layout.n_x(), objective, equalities, inequalities)
}

fn upper(out: &mut Vec<QuadraticFunction>, i: usize, hi: f64) {
    if hi.is_finite() {
        let mut h = QuadraticFunction::constant(-hi);
        h.add_linear(i, 1.0);
        out.push(h);
    }
}

fn lower(out: &mut Vec<QuadraticFunction>, i: usize, lo: f64) {
    if lo.is_finite() {
        let mut h = QuadraticFunction::constant(lo);
        h.add_linear(i, -1.0);
        out.push(h);
    }
}

/// Which voltage component a coupling row equates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    E,
    F,
}

/// Coupling row `x_owner - x_copy = 0` for one component of one bus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CouplingRow {
    pub bus: usize,
    pub component: Component,
    pub owner: usize,
    pub holder: usize,
}

/// A partitioned OPF instance together with its variable bookkeeping.
#[derive(Debug)]
pub struct OpfPartition {
    pub problem: PartitionedNlp,
    pub layouts: Vec<RegionLayout>,
    /// Indices into `case.branches` of lines between regions.
    pub tie_lines: Vec<usize>,
    pub rows: Vec<CouplingRow>,
}

impl OpfPartition {
    pub fn flat_start(&self, case: &OpfCase) -> Vec<Vec<f64>> {
        let flat = OpfPoint::flat(case);
        self.layouts.iter().map(|l| flat.restrict(l)).collect()
    }
}

/// Splits the case into regions given as lists of bus ids. The first region
/// must contain the slack bus.
pub fn partition_opf(case: &OpfCase, regions: &[Vec<usize>]) -> Result<OpfPartition, OpfError> {
    let slack = single_slack(case)?;
    let lookup = case.bus_lookup();
    if regions.is_empty() {
        return Err(OpfError::Partition("no regions given".into()));
    }
    let mut region_of = vec![usize::MAX; case.buses.len()];
    let mut owned: Vec<Vec<usize>> = Vec::with_capacity(regions.len());
    for (r, ids) in regions.iter().enumerate() {
        let mut buses = Vec::with_capacity(ids.len());
        for id in ids {
            let &b = lookup
                .get(id)
                .ok_or_else(|| OpfError::Partition(format!("region {} lists unknown bus {id}", r + 1)))?;
            if region_of[b] != usize::MAX {
                return Err(OpfError::Partition(format!("bus {id} is assigned twice")));
            }
            region_of[b] = r;
            buses.push(b);
        }
        if buses.is_empty() {
            return Err(OpfError::Partition(format!("region {} is empty", r + 1)));
        }
        owned.push(buses);
    }
    if let Some(b) = region_of.iter().position(|&r| r == usize::MAX) {
        return Err(OpfError::Partition(format!(
            "bus {} is not assigned to a region",
            case.buses[b].id
        )));
    }
    if region_of[slack] != 0 {
        return Err(OpfError::Partition("the first region must contain the slack bus".into()));
    }
    for (r, buses) in owned.iter().enumerate() {
        check_connected(case, buses, buses[0]).map_err(|_| OpfError::RegionDisconnected { region: r + 1 })?;
    }

    let y = build_admittance(case)?;
    let mut copies: Vec<Vec<usize>> = vec![Vec::new(); regions.len()];
    let mut tie_lines = Vec::new();
    for (i, br) in case.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let (f, t) = (lookup[&br.from], lookup[&br.to]);
        let (rf, rt) = (region_of[f], region_of[t]);
        if rf != rt {
            tie_lines.push(i);
            if !copies[rf].contains(&t) {
                copies[rf].push(t);
            }
            if !copies[rt].contains(&f) {
                copies[rt].push(f);
            }
        }
    }
    if regions.len() > 1 {
        if let Some(r) = copies.iter().position(Vec::is_empty) {
            return Err(OpfError::NoTies { region: r + 1 });
        }
    }

    let mut layouts = Vec::with_capacity(regions.len());
    for (r, buses) in owned.into_iter().enumerate() {
        let generators = case
            .active_generators()
            .filter(|(_, g)| region_of[lookup[&g.bus]] == r)
            .map(|(i, _)| i)
            .collect();
        layouts.push(RegionLayout {
            buses,
            copies: std::mem::take(&mut copies[r]),
            generators,
        });
    }

    let mut rows = Vec::new();
    for (holder, layout) in layouts.iter().enumerate() {
        for &bus in &layout.copies {
            for component in [Component::E, Component::F] {
                rows.push(CouplingRow {
                    bus,
                    component,
                    owner: region_of[bus],
                    holder,
                });
            }
        }
    }
    // A single region still needs one (empty) coupling row.
    let n_c = rows.len().max(1);
    let mut couplings: Vec<CooMatrix> = layouts.iter().map(|l| CooMatrix::new(n_c, l.n_x())).collect();
    for (i, row) in rows.iter().enumerate() {
        let pick = |slot: usize| match row.component {
            Component::E => RegionLayout::e(slot),
            Component::F => RegionLayout::f(slot),
        };
        let os = layouts[row.owner].voltage_slot(row.bus).expect("owned bus");
        let hs = layouts[row.holder].voltage_slot(row.bus).expect("copied bus");
        couplings[row.owner].push(i, pick(os), 1.0);
        couplings[row.holder].push(i, pick(hs), -1.0);
    }

    let mut subsystems = Vec::with_capacity(layouts.len());
    for (layout, a) in layouts.iter().zip(couplings) {
        let s = if layout.buses.contains(&slack) { Some(slack) } else { None };
        let ev = build_region(case, &y, layout, s);
        subsystems.push(Subsystem::new(Box::new(ev), a)?);
    }
    let problem = PartitionedNlp::new(subsystems, vec![0.0; n_c])?;
    Ok(OpfPartition {
        problem,
        layouts,
        tie_lines,
        rows,
    })
}

use std::collections::BTreeMap;

use num_complex::Complex64;

use super::case::OpfCase;
use super::OpfError;

/// Bus admittance matrix, one sorted sparse row per bus (indices are
/// positions in `case.buses`).
#[derive(Clone, Debug, PartialEq)]
pub struct Admittance {
    rows: Vec<BTreeMap<usize, Complex64>>,
}

impl Admittance {
    pub fn order(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.rows[k].iter().map(|(&m, &y)| (m, y))
    }

    pub fn get(&self, k: usize, m: usize) -> Complex64 {
        self.rows[k].get(&m).copied().unwrap_or_default()
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.order();
        (0..n).map(|k| (0..n).map(|m| self.get(k, m)).collect()).collect()
    }

    /// Complex power injections `diag(v) conj(Y v)`.
    pub fn injections(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.order())
            .map(|k| {
                let i: Complex64 = self.row(k).map(|(m, y)| y * v[m]).sum();
                v[k] * i.conj()
            })
            .collect()
    }

    fn add(&mut self, k: usize, m: usize, y: Complex64) {
        *self.rows[k].entry(m).or_default() += y;
    }
}

/// Builds `Y` from the in-service branches and bus shunts.
pub fn build_admittance(case: &OpfCase) -> Result<Admittance, OpfError> {
    let lookup = case.bus_lookup();
    let mut y = Admittance {
        rows: vec![BTreeMap::new(); case.buses.len()],
    };
    for (k, bus) in case.buses.iter().enumerate() {
        if bus.gs != 0.0 || bus.bs != 0.0 {
            y.add(k, k, Complex64::new(bus.gs, bus.bs));
        }
    }
    for br in case.active_branches() {
        let z = Complex64::new(br.r, br.x);
        if z.norm() == 0.0 {
            return Err(OpfError::ZeroImpedance {
                from: br.from,
                to: br.to,
            });
        }
        let ys = z.inv();
        let charging = Complex64::new(0.0, 0.5 * br.b);
        let tau = br.ratio();
        let f = lookup[&br.from];
        let t = lookup[&br.to];
        y.add(f, f, (ys + charging) / (tau * tau));
        y.add(t, t, ys + charging);
        y.add(f, t, -ys / tau);
        y.add(t, f, -ys / tau);
    }
    Ok(y)
}

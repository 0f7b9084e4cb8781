//! Reader and writer for the MATPOWER case format, restricted to `baseMVA`
//! and the `bus`, `gen`, `branch` and `gencost` matrices. Other `mpc.*`
//! assignments are skipped.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::case::{Branch, Bus, BusType, Cost, Generator, OpfCase};

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

type Rows = Vec<(usize, Vec<f64>)>;

struct Matrix {
    name: String,
    start: usize,
    rows: Rows,
}

pub fn parse_matpower_case(text: &str) -> Result<OpfCase, ParseError> {
    let mut name = String::from("case");
    let mut base_mva = None;
    let mut matrices: HashMap<String, (usize, Rows)> = HashMap::new();
    let mut open: Option<Matrix> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(m) = open.as_mut() {
            if let Some(end) = line.find(']') {
                push_rows(&mut m.rows, &line[..end], line_no)?;
                let m = open.take().unwrap();
                matrices.insert(m.name, (m.start, m.rows));
            } else {
                push_rows(&mut m.rows, line, line_no)?;
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                name = rest[eq + 1..].trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else {
            return Err(err(line_no, format!("unexpected statement `{line}`")));
        };
        let Some(eq) = rest.find('=') else {
            return Err(err(line_no, "expected an assignment"));
        };
        let field = rest[..eq].trim().to_string();
        let value = rest[eq + 1..].trim();
        if let Some(body) = value.strip_prefix('[') {
            let mut m = Matrix {
                name: field,
                start: line_no,
                rows: Vec::new(),
            };
            if let Some(end) = body.find(']') {
                push_rows(&mut m.rows, &body[..end], line_no)?;
                matrices.insert(m.name, (m.start, m.rows));
            } else {
                push_rows(&mut m.rows, body, line_no)?;
                open = Some(m);
            }
        } else if field == "baseMVA" {
            let v = value.trim_end_matches(';').trim();
            base_mva = Some(parse_number(v, line_no)?);
        } else if value.starts_with('{') {
            return Err(err(line_no, format!("cell array `mpc.{field}` is not supported")));
        }
        // remaining scalars (version, ...) carry nothing we use
    }
    if let Some(m) = open {
        return Err(err(m.start, format!("matrix `mpc.{}` is not terminated", m.name)));
    }

    let base_mva = base_mva.ok_or_else(|| err(last_line, "missing mpc.baseMVA"))?;
    if !(base_mva > 0.0) {
        return Err(err(last_line, "baseMVA must be positive"));
    }
    let take = |key: &str| {
        matrices
            .get(key)
            .cloned()
            .ok_or_else(|| err(last_line, format!("missing mpc.{key}")))
    };
    let (_, bus_rows) = take("bus")?;
    let (_, gen_rows) = take("gen")?;
    let (_, branch_rows) = take("branch")?;
    let (gencost_start, gencost_rows) = take("gencost")?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut ids = HashMap::new();
    for (line, row) in &bus_rows {
        need_columns(row, 13, *line, "bus")?;
        let id = as_index(row[0], *line, "bus number")?;
        if ids.insert(id, buses.len()).is_some() {
            return Err(err(*line, format!("duplicate bus {id}")));
        }
        let kind = match row[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            other => return Err(err(*line, format!("unsupported bus type {other}"))),
        };
        let (vmax, vmin) = (row[11], row[12]);
        if vmin > vmax {
            return Err(err(*line, format!("bus {id}: VMIN {vmin} exceeds VMAX {vmax}")));
        }
        buses.push(Bus {
            id,
            kind,
            pd: row[2] / base_mva,
            qd: row[3] / base_mva,
            gs: row[4] / base_mva,
            bs: row[5] / base_mva,
            area: row[6],
            vm: row[7],
            va: row[8],
            base_kv: row[9],
            zone: row[10],
            vmax,
            vmin,
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (line, row) in &branch_rows {
        need_columns(row, 11, *line, "branch")?;
        let from = as_index(row[0], *line, "from bus")?;
        let to = as_index(row[1], *line, "to bus")?;
        for b in [from, to] {
            if !ids.contains_key(&b) {
                return Err(err(*line, format!("branch references unknown bus {b}")));
            }
        }
        if row[9] != 0.0 {
            return Err(err(*line, "phase shifting transformers are not supported"));
        }
        branches.push(Branch {
            from,
            to,
            r: row[2],
            x: row[3],
            b: row[4],
            rate_a: row[5],
            rate_b: row[6],
            rate_c: row[7],
            tap: row[8],
            in_service: row[10] != 0.0,
            angmin: row.get(11).copied().unwrap_or(-360.0),
            angmax: row.get(12).copied().unwrap_or(360.0),
        });
    }

    if gencost_rows.len() != gen_rows.len() {
        return Err(err(
            gencost_start,
            format!(
                "gencost has {} rows for {} generators (reactive cost rows are not supported)",
                gencost_rows.len(),
                gen_rows.len()
            ),
        ));
    }
    let mut generators = Vec::with_capacity(gen_rows.len());
    for ((line, row), (cline, crow)) in gen_rows.iter().zip(&gencost_rows) {
        need_columns(row, 10, *line, "gen")?;
        let bus = as_index(row[0], *line, "generator bus")?;
        if !ids.contains_key(&bus) {
            return Err(err(*line, format!("generator at unknown bus {bus}")));
        }
        let (qmax, qmin, pmax, pmin) = (row[3], row[4], row[8], row[9]);
        if qmin > qmax || pmin > pmax {
            return Err(err(*line, "generator bounds are not ordered"));
        }
        generators.push(Generator {
            bus,
            pg: row[1] / base_mva,
            qg: row[2] / base_mva,
            qmax: qmax / base_mva,
            qmin: qmin / base_mva,
            vg: row[5],
            mbase: row[6],
            in_service: row[7] > 0.0,
            pmax: pmax / base_mva,
            pmin: pmin / base_mva,
            cost: parse_cost(crow, *cline)?,
        });
    }

    Ok(OpfCase {
        name,
        base_mva,
        buses,
        branches,
        generators,
    })
}

fn parse_cost(row: &[f64], line: usize) -> Result<Cost, ParseError> {
    need_columns(row, 4, line, "gencost")?;
    match row[0] as i64 {
        1 => return Err(err(line, "piecewise linear cost model is not supported")),
        2 => {}
        other => return Err(err(line, format!("unknown cost model {other}"))),
    }
    let n = as_index(row[3], line, "number of cost coefficients")?;
    if n > 3 {
        return Err(err(line, format!("polynomial cost of degree {} is not supported", n - 1)));
    }
    if row.len() < 4 + n {
        return Err(err(line, format!("expected {n} cost coefficients")));
    }
    let c = &row[4..4 + n];
    let mut cost = Cost::default();
    // highest order first
    for (k, &v) in c.iter().rev().enumerate() {
        match k {
            0 => cost.c0 = v,
            1 => cost.c1 = v,
            _ => cost.c2 = v,
        }
    }
    Ok(cost)
}

fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\'' => in_string = !in_string,
            '%' if !in_string => return &line[..i],
            _ => {}
        }
    }
    line
}

fn push_rows(rows: &mut Rows, text: &str, line: usize) -> Result<(), ParseError> {
    for segment in text.split(';') {
        let values = segment
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| parse_number(t, line))
            .collect::<Result<Vec<_>, _>>()?;
        if !values.is_empty() {
            rows.push((line, values));
        }
    }
    Ok(())
}

fn parse_number(token: &str, line: usize) -> Result<f64, ParseError> {
    let v = match token {
        "Inf" | "inf" => f64::INFINITY,
        "-Inf" | "-inf" => f64::NEG_INFINITY,
        t => t
            .parse::<f64>()
            .map_err(|_| err(line, format!("malformed number `{t}`")))?,
    };
    if v.is_nan() {
        return Err(err(line, "NaN in case data"));
    }
    Ok(v)
}

fn need_columns(row: &[f64], n: usize, line: usize, what: &str) -> Result<(), ParseError> {
    if row.len() < n {
        Err(err(line, format!("{what} row has {} columns, expected at least {n}", row.len())))
    } else {
        Ok(())
    }
}

fn as_index(v: f64, line: usize, what: &str) -> Result<usize, ParseError> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(err(line, format!("{what} must be a nonnegative integer, got {v}")))
    }
}

/// Writes the case back in MATPOWER format. Parsing the output reproduces
/// the case up to floating point formatting.
pub fn write_matpower_case(case: &OpfCase) -> String {
    let base = case.base_mva;
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {}", case.name);
    s.push_str("mpc.version = '2';\n");
    let _ = writeln!(s, "mpc.baseMVA = {};\n", base);

    s.push_str("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for b in &case.buses {
        let cols = [
            b.id as f64,
            b.kind.code() as f64,
            b.pd * base,
            b.qd * base,
            b.gs * base,
            b.bs * base,
            b.area,
            b.vm,
            b.va,
            b.base_kv,
            b.zone,
            b.vmax,
            b.vmin,
        ];
        write_row(&mut s, &cols);
    }
    s.push_str("];\n\n");

    s.push_str("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n");
    for g in &case.generators {
        let cols = [
            g.bus as f64,
            g.pg * base,
            g.qg * base,
            g.qmax * base,
            g.qmin * base,
            g.vg,
            g.mbase,
            if g.in_service { 1.0 } else { 0.0 },
            g.pmax * base,
            g.pmin * base,
        ];
        write_row(&mut s, &cols);
    }
    s.push_str("];\n\n");

    s.push_str("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = [\n");
    for br in &case.branches {
        let cols = [
            br.from as f64,
            br.to as f64,
            br.r,
            br.x,
            br.b,
            br.rate_a,
            br.rate_b,
            br.rate_c,
            br.tap,
            0.0,
            if br.in_service { 1.0 } else { 0.0 },
            br.angmin,
            br.angmax,
        ];
        write_row(&mut s, &cols);
    }
    s.push_str("];\n\n");

    s.push_str("%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0\nmpc.gencost = [\n");
    for g in &case.generators {
        write_row(&mut s, &[2.0, 0.0, 0.0, 3.0, g.cost.c2, g.cost.c1, g.cost.c0]);
    }
    s.push_str("];\n");
    s
}

fn write_row(s: &mut String, cols: &[f64]) {
    s.push('\t');
    for (i, v) in cols.iter().enumerate() {
        if i > 0 {
            s.push('\t');
        }
        let _ = write!(s, "{v}");
    }
    s.push_str(";\n");
}

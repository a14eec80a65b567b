//! CSV persistence for demonstrations and result tables.
//!
//! Floats are written as `{:.16e}` (17 significant digits), so a write/read
//! round trip reproduces every value bit for bit. Demonstration files hold
//! one row per timestep of every demo:
//!
//! `demo, t, q_i…, x_i…, xi_i…, J{k}_{r}_{c}…, obj_i…`
//!
//! Column groups that a demo set does not record are omitted; `J` columns
//! carry the shape of each task Jacobian in their names. Demos read back
//! without `obj` columns hold `None` object poses at every step.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use crate::error::{invalid, Error, Result};
use crate::kinematics::Pose;
use crate::quat::UnitQuaternion;
use crate::tpgmm::Demonstration;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, column: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("column `{column}`: `{s}` is not a number")))
}

pub fn write_table<W: Write>(w: W, columns: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(columns)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return invalid(format!("table row {i} has {} values for {} columns", row.len(), columns.len()));
        }
        out.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .zip(&columns)
            .map(|(v, c)| parse_f64(v, c))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((columns, rows))
}

/// Column counts shared by every demo in a file.
#[derive(Debug, Clone, PartialEq, Default)]
struct Layout {
    nq: usize,
    nx: usize,
    nxi: usize,
    /// `(rows, cols)` per task Jacobian.
    jac: Vec<(usize, usize)>,
    nobj: usize,
}

impl Layout {
    fn of(d: &Demonstration) -> Result<Self> {
        let width = |v: &[DVector<f64>]| v.first().map_or(0, |x| x.len());
        let nobj = match d.object.first() {
            None | Some(None) => 0,
            Some(Some(p)) => p.to_vector().len(),
        };
        if d.object.iter().any(|o| o.is_some() != (nobj > 0)) {
            return invalid("object poses must be recorded at every step or at none");
        }
        Ok(Self {
            nq: width(&d.q),
            nx: width(&d.x),
            nxi: d.xi.ncols(),
            jac: d
                .jacobians
                .first()
                .map(|js| js.iter().map(|j| j.shape()).collect())
                .unwrap_or_default(),
            nobj,
        })
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["demo".to_string(), "t".to_string()];
        h.extend((0..self.nq).map(|i| format!("q_{i}")));
        h.extend((0..self.nx).map(|i| format!("x_{i}")));
        h.extend((0..self.nxi).map(|i| format!("xi_{i}")));
        for (k, &(r, c)) in self.jac.iter().enumerate() {
            for i in 0..r {
                h.extend((0..c).map(|j| format!("J{k}_{i}_{j}")));
            }
        }
        h.extend((0..self.nobj).map(|i| format!("obj_{i}")));
        h
    }

    fn parse(header: &[String]) -> Result<Self> {
        if header.len() < 2 || header[0] != "demo" || header[1] != "t" {
            return invalid("demonstration CSV must start with `demo,t`");
        }
        let mut l = Layout::default();
        let mut jac: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for name in &header[2..] {
            let unknown = || Error::Parse(format!("unknown demonstration column `{name}`"));
            if let Some(rest) = name.strip_prefix("J") {
                let parts: Vec<usize> = rest
                    .split('_')
                    .map(|p| p.parse().map_err(|_| unknown()))
                    .collect::<Result<_>>()?;
                let [k, r, c] = parts[..] else {
                    return Err(unknown());
                };
                let e = jac.entry(k).or_insert((0, 0));
                e.0 = e.0.max(r + 1);
                e.1 = e.1.max(c + 1);
            } else {
                let (prefix, _) = name.rsplit_once('_').ok_or_else(unknown)?;
                match prefix {
                    "q" => l.nq += 1,
                    "x" => l.nx += 1,
                    "xi" => l.nxi += 1,
                    "obj" => l.nobj += 1,
                    _ => return Err(unknown()),
                }
            }
        }
        if jac.keys().copied().ne(0..jac.len()) {
            return invalid("Jacobian columns must be numbered from J0 without gaps");
        }
        l.jac = jac.into_values().collect();
        let expected = l.header();
        if expected != header {
            return invalid("demonstration CSV columns are not in canonical order");
        }
        if !matches!(l.nobj, 0 | 3 | 7) {
            return invalid(format!("object poses need 3 or 7 columns, found {}", l.nobj));
        }
        Ok(l)
    }
}

pub fn write_demos<W: Write>(w: W, demos: &[Demonstration]) -> Result<()> {
    let Some(first) = demos.first() else {
        return invalid("no demonstrations to write");
    };
    let layout = Layout::of(first)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(layout.header())?;
    for (d, demo) in demos.iter().enumerate() {
        demo.validate()?;
        if Layout::of(demo)? != layout {
            return invalid(format!("demonstration {d} records different dimensions than demonstration 0"));
        }
        for t in 0..demo.len() {
            let mut row = vec![d.to_string(), fmt_f64(demo.times[t])];
            if layout.nq > 0 {
                row.extend(demo.q[t].iter().map(|v| fmt_f64(*v)));
            }
            if layout.nx > 0 {
                row.extend(demo.x[t].iter().map(|v| fmt_f64(*v)));
            }
            row.extend(demo.xi.row(t).iter().map(|v| fmt_f64(*v)));
            if !layout.jac.is_empty() {
                for j in &demo.jacobians[t] {
                    // Row-major, matching the header.
                    row.extend(j.transpose().iter().map(|v| fmt_f64(*v)));
                }
            }
            if let Some(Some(p)) = demo.object.get(t) {
                row.extend(p.to_vector().iter().map(|v| fmt_f64(*v)));
            }
            let expected = layout.header().len();
            if row.len() != expected {
                return invalid(format!("demonstration {d} step {t} has inconsistent dimensions"));
            }
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn pose_from(v: &[f64]) -> Pose {
    if v.len() == 3 {
        Pose::Planar {
            position: Vector2::new(v[0], v[1]),
            angle: v[2],
        }
    } else {
        Pose::Spatial {
            position: Vector3::new(v[0], v[1], v[2]),
            orientation: UnitQuaternion::new(v[3], v[4], v[5], v[6]),
        }
    }
}

pub fn read_demos<R: Read>(r: R) -> Result<Vec<Demonstration>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let layout = Layout::parse(&header)?;
    let mut demos: Vec<Demonstration> = Vec::new();
    let mut xi_rows: Vec<Vec<Vec<f64>>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("demo index `{}` is not an integer", &rec[0])))?;
        if id > demos.len() {
            return invalid(format!("demo index {id} skips an index"));
        }
        if id == demos.len() {
            demos.push(Demonstration::default());
            xi_rows.push(Vec::new());
        } else if id + 1 != demos.len() {
            return invalid("demonstration rows must be grouped by demo index");
        }
        let vals = rec
            .iter()
            .zip(&header)
            .skip(1)
            .map(|(v, c)| parse_f64(v, c))
            .collect::<Result<Vec<_>>>()?;
        let demo = &mut demos[id];
        demo.times.push(vals[0]);
        let mut at = 1;
        let mut take = |n: usize| {
            let s = &vals[at..at + n];
            at += n;
            s.to_vec()
        };
        if layout.nq > 0 {
            demo.q.push(DVector::from_vec(take(layout.nq)));
        }
        if layout.nx > 0 {
            demo.x.push(DVector::from_vec(take(layout.nx)));
        }
        xi_rows[id].push(take(layout.nxi));
        if !layout.jac.is_empty() {
            let js = layout
                .jac
                .iter()
                .map(|&(r, c)| DMatrix::from_row_slice(r, c, &take(r * c)))
                .collect();
            demo.jacobians.push(js);
        }
        demo.object.push((layout.nobj > 0).then(|| pose_from(&take(layout.nobj))));
    }
    for (demo, rows) in demos.iter_mut().zip(xi_rows) {
        demo.xi = DMatrix::from_fn(rows.len(), layout.nxi, |r, c| rows[r][c]);
        demo.validate()?;
    }
    Ok(demos)
}

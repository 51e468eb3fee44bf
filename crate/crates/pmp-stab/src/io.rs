//! CSV exports and a reader for plotting them back.
//!
//! Numbers are written with the shortest representation that round-trips,
//! so identical results give byte-identical files.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use pmp_stab_core::manifold::{Illumination, LagrangianManifold, SwitchPoint};
use pmp_stab_core::observer::ErrorSample;
use pmp_stab_core::simulate::Trajectory;
use pmp_stab_core::synthesis::FeedbackLaw;

use crate::error::CliError;

/// Formats a float so that it parses back to the same bits.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn header(prefix: &[&str], groups: &[(&str, usize)], suffix: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    for &(name, count) in groups {
        h.extend((1..=count).map(|i| format!("{name}{i}")));
    }
    h.extend(suffix.iter().map(|s| s.to_string()));
    h
}

fn csv_error(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

struct Rows<W: Write> {
    w: csv::Writer<W>,
    row: Vec<String>,
}

impl<W: Write> Rows<W> {
    fn new(out: W, header: Vec<String>) -> io::Result<Self> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&header).map_err(csv_error)?;
        Ok(Rows { w, row: Vec::new() })
    }

    fn push(&mut self, vals: impl IntoIterator<Item = f64>) -> &mut Self {
        self.row.extend(vals.into_iter().map(num));
        self
    }

    fn push_int(&mut self, v: i64) -> &mut Self {
        self.row.push(v.to_string());
        self
    }

    fn end(&mut self) -> io::Result<()> {
        self.w.write_record(&self.row).map_err(csv_error)?;
        self.row.clear();
        Ok(())
    }

    fn finish(self) -> io::Result<()> {
        let mut w = self.w;
        w.flush()
    }
}

/// One row per sample: `psi,tau,x..,nu..,u..,W,S,event_flag`.
pub fn write_manifold<W: Write>(out: W, man: &LagrangianManifold) -> io::Result<()> {
    let (n, m) = (man.dim(), man.control_dim());
    let u_cols: Vec<(&str, usize)> = if m == 1 { vec![] } else { vec![("u", m)] };
    let mut groups = vec![("x", n), ("nu", n)];
    groups.extend(u_cols);
    let suffix: &[&str] = if m == 1 { &["u", "W", "S", "event_flag"] } else { &["W", "S", "event_flag"] };
    let mut rows = Rows::new(out, header(&["psi", "tau"], &groups, suffix))?;
    for br in man.branches() {
        for s in br.samples() {
            rows.push([br.seed.psi, s.tau])
                .push(s.x.iter().copied())
                .push(s.nu.iter().copied())
                .push(s.u.iter().copied())
                .push([s.w, s.s])
                .push_int(s.event.map_or(0, |e| e.code()) as i64)
                .end()?;
        }
    }
    rows.finish()
}

/// The manifold file behind a block of `#` lines holding the rest of the
/// law: inner expressions, the level, the amplitude and the bound.
pub fn write_law<W: Write>(mut out: W, law: &FeedbackLaw) -> io::Result<()> {
    for (j, e) in law.inner().iter().enumerate() {
        writeln!(out, "# inner{} = {e}", j + 1)?;
    }
    writeln!(out, "# lyapunov = {}", law.lyapunov().expr())?;
    writeln!(out, "# epsilon = {}", num(law.lyapunov().epsilon()))?;
    match law.amplitude() {
        Some(k) => writeln!(out, "# amplitude = {}", num(k))?,
        None => writeln!(out, "# amplitude = minimizer")?,
    }
    writeln!(out, "# bound = {}", num(law.bound()))?;
    write_manifold(out, law.manifold())
}

/// `t,x..,u..,event_flag`.
pub fn write_trajectory<W: Write>(out: W, tr: &Trajectory) -> io::Result<()> {
    let mut rows = Rows::new(out, header(&["t"], &[("x", tr.dim()), ("u", tr.control_dim())], &["event_flag"]))?;
    for i in 0..tr.len() {
        rows.push([tr.t(i)])
            .push(tr.state(i).iter().copied())
            .push(tr.control(i).iter().copied())
            .push_int(tr.flag(i) as i64)
            .end()?;
    }
    rows.finish()
}

/// `t,e1,e2,V_e,W`.
pub fn write_error_log<W: Write>(out: W, log: &[ErrorSample]) -> io::Result<()> {
    let h = ["t", "e1", "e2", "V_e", "W"].map(String::from).to_vec();
    let mut rows = Rows::new(out, h)?;
    for s in log {
        rows.push([s.t, s.e.e1, s.e.e2, s.v_e, s.w]).end()?;
    }
    rows.finish()
}

/// Reference curve arc: its points as `(tau, x)`.
pub type Arc = Vec<(f64, [f64; 2])>;

/// `curve,psi,tau,x1,x2`. Computed curves are numbered from 0 and carry the
/// seed angle; reference arcs get negative numbers and `psi = NaN`.
pub fn write_switching_curves<W: Write>(out: W, computed: &[Vec<SwitchPoint>], reference: &[Arc]) -> io::Result<()> {
    let h = ["curve", "psi", "tau", "x1", "x2"].map(String::from).to_vec();
    let mut rows = Rows::new(out, h)?;
    for (c, curve) in computed.iter().enumerate() {
        for p in curve {
            rows.push_int(c as i64).push([p.psi, p.tau]).push(p.x.iter().copied()).end()?;
        }
    }
    for (c, arc) in reference.iter().enumerate() {
        for (tau, x) in arc {
            rows.push_int(-(c as i64) - 1).push([f64::NAN, *tau, x[0], x[1]]).end()?;
        }
    }
    rows.finish()
}

pub fn illumination_code(c: Illumination) -> i64 {
    match c {
        Illumination::Inner => 0,
        Illumination::Illuminated => 1,
        Illumination::Dark => 2,
    }
}

/// `x..,class` with class 0 inner, 1 illuminated, 2 dark.
pub fn write_illumination<W: Write>(out: W, points: &[Vec<f64>], classes: &[Illumination]) -> io::Result<()> {
    let n = points.first().map_or(0, Vec::len);
    let mut rows = Rows::new(out, header(&[], &[("x", n)], &["class"]))?;
    for (p, &c) in points.iter().zip(classes) {
        rows.push(p.iter().copied()).push_int(illumination_code(c)).end()?;
    }
    rows.finish()
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn to_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// A numeric table read back from an export.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

/// Reads a CSV with a header row. Lines starting with `#` are skipped and
/// non-numeric cells read as NaN.
pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::io(path, csv_error(e)))?;
    let headers = r.headers().map_err(|e| CliError::io(path, csv_error(e)))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::io(path, csv_error(e)))?;
        rows.push(rec.iter().map(|c| c.trim().parse().unwrap_or(f64::NAN)).collect());
    }
    Ok(Table { headers, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, -2.5, 1e-300, 123456.789, 1e20, std::f64::consts::PI, -1.914213562373095] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits(), "{v}");
        }
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(1e-7), "1e-7");
    }

    #[test]
    fn error_log_has_the_documented_header() {
        let mut buf = Vec::new();
        write_error_log(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,e1,e2,V_e,W\n");
    }
}

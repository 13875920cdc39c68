//! CSV and JSON interchange formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! artifact reloads bit-for-bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::bellman::{Policy, ValueFunction};
use crate::error::{Error, Result};
use crate::markov::{Provenance, SampleSet, StateSpace};
use crate::matrix::{SquareMatrix, StochasticMatrix};
use crate::thermal::EnsembleTrace;

const CORNER: &str = "to\\from";

fn state_header(lead: &[&str], n: usize) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain((0..n).map(|i| format!("s{i}")))
        .collect()
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::data(format!("{what}: cannot parse {s:?} as a number")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::data(format!("{what}: cannot parse {s:?} as an index")))
}

fn parse_state(s: &str) -> Result<usize> {
    let s = s.trim();
    let idx = s.strip_prefix('s').unwrap_or(s);
    parse_usize(idx, "state label")
}

/// Dense matrix, rows are destinations, columns origins.
pub fn write_matrix<W: Write>(w: W, m: &SquareMatrix) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(state_header(&[CORNER], m.n()))?;
    for a in 0..m.n() {
        let mut rec = vec![format!("s{a}")];
        rec.extend(m.row(a).iter().map(|&v| fmt(v)));
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

type KeyedRows = Vec<(Vec<String>, Vec<f64>)>;

/// Reads rows keyed by `lead` leading columns; returns (keys, values) per row.
fn read_keyed<R: Read>(r: R, lead: &[&str]) -> Result<(usize, KeyedRows)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.len() <= lead.len() {
        return Err(Error::data("matrix CSV has no state columns"));
    }
    for (i, name) in lead.iter().enumerate() {
        if header.get(i).map(str::trim) != Some(*name) {
            return Err(Error::data(format!("expected column {i} to be {name:?}")));
        }
    }
    let n = header.len() - lead.len();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let keys = rec.iter().take(lead.len()).map(str::to_string).collect();
        let vals = rec
            .iter()
            .skip(lead.len())
            .map(|s| parse_f64(s, "matrix entry"))
            .collect::<Result<Vec<_>>>()?;
        rows.push((keys, vals));
    }
    Ok((n, rows))
}

pub fn read_matrix<R: Read>(r: R) -> Result<SquareMatrix> {
    let (n, rows) = read_keyed(r, &[CORNER])?;
    if rows.len() != n {
        return Err(Error::data(format!("matrix CSV has {} rows for {n} columns", rows.len())));
    }
    let mut m = SquareMatrix::zeros(n);
    for (keys, vals) in rows {
        let a = parse_state(&keys[0])?;
        if a >= n {
            return Err(Error::data(format!("row label {} out of range", keys[0])));
        }
        for (b, v) in vals.into_iter().enumerate() {
            m.set(a, b, v);
        }
    }
    Ok(m)
}

pub fn read_stochastic<R: Read>(r: R) -> Result<StochasticMatrix> {
    StochasticMatrix::new(read_matrix(r)?)
}

/// Matrices stacked with a leading key column (`sample_id` or `t`).
fn write_stack<W: Write>(w: W, key: &str, mats: &[&SquareMatrix]) -> Result<()> {
    let n = mats.first().map_or(0, |m| m.n());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(state_header(&[key, CORNER], n))?;
    for (j, m) in mats.iter().enumerate() {
        for a in 0..n {
            let mut rec = vec![j.to_string(), format!("s{a}")];
            rec.extend(m.row(a).iter().map(|&v| fmt(v)));
            out.write_record(rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_stack<R: Read>(r: R, key: &str) -> Result<Vec<SquareMatrix>> {
    let (n, rows) = read_keyed(r, &[key, CORNER])?;
    let mut mats: Vec<SquareMatrix> = Vec::new();
    for (keys, vals) in rows {
        let j = parse_usize(&keys[0], key)?;
        let a = parse_state(&keys[1])?;
        if a >= n {
            return Err(Error::data(format!("row label {} out of range", keys[1])));
        }
        if j > mats.len() {
            return Err(Error::data(format!("{key} {j} out of order")));
        }
        if j == mats.len() {
            mats.push(SquareMatrix::zeros(n));
        }
        for (b, v) in vals.into_iter().enumerate() {
            mats[j].set(a, b, v);
        }
    }
    Ok(mats)
}

pub fn write_sample_set<W: Write>(w: W, set: &SampleSet) -> Result<()> {
    let mats: Vec<&SquareMatrix> = set.samples().iter().map(|s| s.matrix()).collect();
    write_stack(w, "sample_id", &mats)
}

pub fn read_sample_set<R: Read>(r: R, provenance: Provenance) -> Result<SampleSet> {
    let mats = read_stack(r, "sample_id")?;
    let samples = mats.into_iter().map(StochasticMatrix::new).collect::<Result<Vec<_>>>()?;
    SampleSet::new(samples, provenance)
}

pub fn write_policy<W: Write>(w: W, policy: &Policy) -> Result<()> {
    let mats: Vec<&SquareMatrix> = policy.steps.iter().map(|s| s.matrix()).collect();
    write_stack(w, "t", &mats)
}

pub fn read_policy<R: Read>(r: R) -> Result<Policy> {
    let mats = read_stack(r, "t")?;
    Policy::new(mats.into_iter().map(StochasticMatrix::new).collect::<Result<Vec<_>>>()?)
}

/// `t,state,phi,z`.
pub fn write_value_function<W: Write>(w: W, vf: &ValueFunction) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "state", "phi", "z"])?;
    for (t, row) in vf.ln_z.iter().enumerate() {
        for s in 0..row.len() {
            out.write_record([t.to_string(), s.to_string(), fmt(vf.phi(t, s)), fmt(vf.z(t, s))])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `step,aggregate_power_kw`.
pub fn write_power_trace<W: Write>(w: W, power: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "aggregate_power_kw"])?;
    for (i, p) in power.iter().enumerate() {
        out.write_record([i.to_string(), fmt(*p)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_power_trace<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let col = header
        .iter()
        .position(|h| h.trim() == "aggregate_power_kw")
        .ok_or_else(|| Error::data("trace CSV lacks an aggregate_power_kw column"))?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            parse_f64(rec.get(col).unwrap_or(""), "aggregate power")
        })
        .collect()
}

/// `step,device_id,theta_c`; no-op when temperatures were not recorded.
pub fn write_temperatures<W: Write>(w: W, trace: &EnsembleTrace) -> Result<()> {
    let Some(temps) = &trace.temperatures else {
        return Err(Error::data("trace has no recorded temperatures"));
    };
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "device_id", "theta_c"])?;
    for step in 0..trace.steps {
        for d in 0..trace.devices {
            out.write_record([step.to_string(), d.to_string(), fmt(temps[step * trace.devices + d])])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One value per line under a `price` header (other columns ignored).
pub fn read_prices<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let col = header
        .iter()
        .position(|h| h.trim() == "price")
        .ok_or_else(|| Error::data("price CSV lacks a price column"))?;
    rdr.records()
        .map(|rec| parse_f64(rec?.get(col).unwrap_or(""), "price"))
        .collect()
}

/// `t,s0,...` distribution path.
pub fn write_rho_path<W: Write>(w: W, path: &[Vec<f64>]) -> Result<()> {
    let n = path.first().map_or(0, Vec::len);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(state_header(&["t"], n))?;
    for (t, rho) in path.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(rho.iter().map(|&v| fmt(v)));
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Serde rows with a header taken from the field names.
pub fn write_records<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records<R: Read, T: DeserializeOwned>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_json<W: Write, T: Serialize>(w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(w, value)?;
    Ok(())
}

pub fn read_json<R: Read, T: DeserializeOwned>(r: R) -> Result<T> {
    Ok(serde_json::from_reader(r)?)
}

pub fn read_state_space<R: Read>(r: R) -> Result<StateSpace> {
    let s: StateSpace = read_json(r)?;
    s.validate()?;
    Ok(s)
}

/// Opens `path` for buffered reading, naming the path on failure.
pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written artifact.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

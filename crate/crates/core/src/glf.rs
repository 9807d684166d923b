//! `GLF1` snapshot records: one text header line followed by little-endian
//! `f64` payload in storage order.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::bundle::{Configuration, Coupling};
use crate::error::{GlError, Result};
use crate::lattice::{LatticeTorus, OneForm, ScalarField, TwoForm};

/// A decoded snapshot record.
#[derive(Clone, Debug, PartialEq)]
pub enum Record {
    Scalar(ScalarField),
    OneForm(OneForm),
    TwoForm(TwoForm),
}

impl Record {
    fn kind(&self) -> &'static str {
        match self {
            Record::Scalar(_) => "scalar",
            Record::OneForm(_) => "oneform",
            Record::TwoForm(_) => "twoform",
        }
    }
}

fn header(lat: &LatticeTorus, kind: &str) -> String {
    format!("GLF1 {} {} {:?} {:?} {} {}\n", lat.n1, lat.n2, lat.len1, lat.len2, lat.degree, kind)
}

pub fn write_record<W: Write>(w: &mut W, lat: &LatticeTorus, rec: &Record) -> Result<()> {
    let payload: Vec<f64> = match rec {
        Record::Scalar(s) => {
            s.check(lat)?;
            s.values.iter().flat_map(|z| [z.re, z.im]).collect()
        }
        Record::OneForm(a) => {
            a.check(lat)?;
            a.comp1.iter().chain(&a.comp2).copied().collect()
        }
        Record::TwoForm(b) => {
            b.check(lat)?;
            b.values.clone()
        }
    };
    w.write_all(header(lat, rec.kind()).as_bytes())?;
    let mut bytes = Vec::with_capacity(payload.len() * 8);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn read_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    let n = r.read_line(&mut line)?;
    if n == 0 {
        return Err(GlError::Format("unexpected end of file".into()));
    }
    Ok(line.trim_end_matches('\n').to_string())
}

fn parse<T: std::str::FromStr>(s: Option<&str>, what: &str) -> Result<T> {
    s.and_then(|v| v.parse().ok()).ok_or_else(|| GlError::Format(format!("bad header field {what}")))
}

pub fn read_record<R: BufRead>(r: &mut R) -> Result<(LatticeTorus, Record)> {
    let line = read_line(r)?;
    let mut it = line.split_whitespace();
    if it.next() != Some("GLF1") {
        return Err(GlError::Format(format!("not a GLF1 header: {line:?}")));
    }
    let n1: usize = parse(it.next(), "n1")?;
    let n2: usize = parse(it.next(), "n2")?;
    let len1: f64 = parse(it.next(), "len1")?;
    let len2: f64 = parse(it.next(), "len2")?;
    let degree: u32 = parse(it.next(), "degree")?;
    let kind = it.next().ok_or_else(|| GlError::Format("missing kind".into()))?.to_string();
    let lat = LatticeTorus::new(n1, n2, len1, len2, degree)?;
    let n = lat.sites();
    let count = match kind.as_str() {
        "scalar" | "oneform" => 2 * n,
        "twoform" => n,
        other => return Err(GlError::Format(format!("unknown kind {other}"))),
    };
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let vals: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let rec = match kind.as_str() {
        "scalar" => Record::Scalar(ScalarField {
            values: vals.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
        }),
        "oneform" => Record::OneForm(OneForm { comp1: vals[..n].to_vec(), comp2: vals[n..].to_vec() }),
        _ => Record::TwoForm(TwoForm { values: vals }),
    };
    Ok((lat, rec))
}

/// Writes a configuration as a oneform record, a scalar record and a
/// `META` line with the couplings.
pub fn write_configuration<W: Write>(
    w: &mut W,
    lat: &LatticeTorus,
    cfg: &Configuration,
    cpl: &Coupling,
) -> Result<()> {
    write_record(w, lat, &Record::OneForm(cfg.a.clone()))?;
    write_record(w, lat, &Record::Scalar(cfg.phi.clone()))?;
    w.write_all(format!("META tau={:?} kappa={:?}\n", cpl.tau, cpl.kappa).as_bytes())?;
    Ok(())
}

pub fn read_configuration<R: BufRead>(r: &mut R) -> Result<(LatticeTorus, Configuration, Coupling)> {
    let (lat, a) = read_record(r)?;
    let (lat2, phi) = read_record(r)?;
    if lat != lat2 {
        return Err(GlError::Format("records describe different lattices".into()));
    }
    let (Record::OneForm(a), Record::Scalar(phi)) = (a, phi) else {
        return Err(GlError::Format("expected oneform then scalar record".into()));
    };
    let meta = read_line(r)?;
    let mut tau = None;
    let mut kappa = None;
    for tok in meta.split_whitespace().skip(1) {
        if let Some(v) = tok.strip_prefix("tau=") {
            tau = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("kappa=") {
            kappa = v.parse().ok();
        }
    }
    let (Some(tau), Some(kappa)) = (tau, kappa) else {
        return Err(GlError::Format(format!("bad META line {meta:?}")));
    };
    Ok((lat, Configuration { a, phi }, Coupling::new(tau, kappa)?))
}

pub fn save_configuration(path: &std::path::Path, lat: &LatticeTorus, cfg: &Configuration, cpl: &Coupling) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_configuration(&mut f, lat, cfg, cpl)?;
    f.flush()?;
    Ok(())
}

pub fn load_configuration(path: &std::path::Path) -> Result<(LatticeTorus, Configuration, Coupling)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_configuration(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let lat = LatticeTorus::new(5, 6, 0.1 + 0.2, 1.0 / 3.0, 2).unwrap();
        let n = lat.sites();
        let s = ScalarField {
            values: (0..n).map(|k| Complex64::new((k as f64).sin() / 7.0, f64::MIN_POSITIVE * k as f64)).collect(),
        };
        let a = OneForm {
            comp1: (0..n).map(|k| (k as f64 * 0.37).cos()).collect(),
            comp2: (0..n).map(|k| -(k as f64) / 3.0).collect(),
        };
        let b = TwoForm { values: (0..n).map(|k| 1e300 / (k as f64 + 1.0)).collect() };
        for rec in [Record::Scalar(s), Record::OneForm(a), Record::TwoForm(b)] {
            let mut buf = Vec::new();
            write_record(&mut buf, &lat, &rec).unwrap();
            let (lat2, rec2) = read_record(&mut buf.as_slice()).unwrap();
            assert_eq!(lat2, lat);
            assert_eq!(rec2, rec);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_record(&mut b"NOPE 1 2\n".as_slice()).is_err());
        assert!(read_record(&mut b"GLF1 4 4 1.0 1.0 0 scalar\n\x00\x01".as_slice()).is_err());
    }
}

//! CSV and JSON serialization with 17-significant-digit floats.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::paths::SampledPath;
use crate::rough::RoughPath;
use crate::signature::Signature;
use crate::tensor::TruncatedTensor;

pub const SIGNATURE_SCHEMA: &str = "sig-v1";
pub const ROUGH_PATH_SCHEMA: &str = "rp-v1";

/// Formats a float with 17 significant digits, which round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A float serialized as a 17-significant-digit JSON number.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct Sci(pub f64);

impl Serialize for Sci {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom(format!("cannot encode non-finite value {}", self.0)));
        }
        RawValue::from_string(fmt_f64(self.0))
            .map_err(serde::ser::Error::custom)?
            .serialize(s)
    }
}

pub fn sci_vec(xs: &[f64]) -> Vec<Sci> {
    xs.iter().copied().map(Sci).collect()
}

fn unsci(xs: &[Sci]) -> Vec<f64> {
    xs.iter().map(|x| x.0).collect()
}

/// Writes a path as CSV with header `t,x1,...,xd`.
pub fn write_path_csv(path: &SampledPath, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=path.dim()).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for k in 0..path.len() {
        let mut rec = vec![fmt_f64(path.time(k))];
        rec.extend(path.value(k).iter().map(|&x| fmt_f64(x)));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, msg: format!("{other:?}") },
    }
}

/// Reads a CSV path with header `t,x1,...,xd`; errors carry the 1-based line.
pub fn read_path_csv(input: impl Read) -> Result<SampledPath> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(csv_error)?.clone();
    if header.is_empty() || &header[0] != "t" {
        return Err(Error::Parse { line: 1, msg: "header must start with `t`".into() });
    }
    for (i, name) in header.iter().enumerate().skip(1) {
        if name != format!("x{i}") {
            return Err(Error::Parse { line: 1, msg: format!("expected column `x{i}`, found `{name}`") });
        }
    }
    let dim = header.len() - 1;
    if dim == 0 {
        return Err(Error::Parse { line: 1, msg: "no value columns".into() });
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != dim + 1 {
            return Err(Error::Parse { line, msg: format!("expected {} fields, found {}", dim + 1, rec.len()) });
        }
        for (j, field) in rec.iter().enumerate() {
            let x: f64 = field
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("not a number: `{field}`") })?;
            if !x.is_finite() {
                return Err(Error::Parse { line, msg: format!("non-finite value `{field}`") });
            }
            if j == 0 {
                times.push(x);
            } else {
                values.push(x);
            }
        }
    }
    SampledPath::from_flat(times, values, dim)
}

#[derive(Serialize, Deserialize)]
struct PathRecord {
    t: Sci,
    x: Vec<Sci>,
}

/// JSON array of `{"t": .., "x": [..]}` records.
pub fn path_to_json(path: &SampledPath) -> Result<String> {
    let recs: Vec<PathRecord> = (0..path.len())
        .map(|k| PathRecord { t: Sci(path.time(k)), x: sci_vec(path.value(k)) })
        .collect();
    Ok(serde_json::to_string(&recs)?)
}

pub fn path_from_json(s: &str) -> Result<SampledPath> {
    let recs: Vec<PathRecord> = serde_json::from_str(s)?;
    let times = recs.iter().map(|r| r.t.0).collect();
    let rows = recs.iter().map(|r| unsci(&r.x)).collect();
    SampledPath::new(times, rows)
}

#[derive(Serialize, Deserialize)]
struct SignatureDoc {
    version: String,
    dim: usize,
    level: usize,
    start: Sci,
    end: Sci,
    levels: Vec<Vec<Sci>>,
}

/// `sig-v1` document: each level as a row-major array.
pub fn signature_to_json(sig: &Signature) -> Result<String> {
    let (start, end) = sig.interval();
    let doc = SignatureDoc {
        version: SIGNATURE_SCHEMA.into(),
        dim: sig.dim(),
        level: sig.level(),
        start: Sci(start),
        end: Sci(end),
        levels: sig.tensor().levels().iter().map(|l| sci_vec(l)).collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

fn check_version(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Parse { line: 1, msg: format!("unsupported version `{found}`, expected `{expected}`") });
    }
    Ok(())
}

pub fn signature_from_json(s: &str) -> Result<Signature> {
    let doc: SignatureDoc = serde_json::from_str(s)?;
    check_version(&doc.version, SIGNATURE_SCHEMA)?;
    if doc.levels.len() != doc.level + 1 {
        return Err(Error::Parse { line: 1, msg: "level count does not match `level`".into() });
    }
    let tensor = TruncatedTensor::from_levels(doc.dim, doc.levels.iter().map(|l| unsci(l)).collect())?;
    Signature::from_tensor(tensor, doc.start.0, doc.end.0)
}

#[derive(Serialize, Deserialize)]
struct RoughPathDoc {
    version: String,
    base: String,
    dim: usize,
    geometric: bool,
    segments: Vec<Vec<Sci>>,
}

/// `rp-v1` document: a reference to the base-path CSV plus each segment's
/// second-level matrix flattened row-major.
pub fn rough_path_to_json(rp: &RoughPath, base_csv: &str) -> Result<String> {
    let doc = RoughPathDoc {
        version: ROUGH_PATH_SCHEMA.into(),
        base: base_csv.into(),
        dim: rp.dim(),
        geometric: rp.is_geometric(),
        segments: (0..rp.len().saturating_sub(1)).map(|i| sci_vec(rp.segment_area(i))).collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Rebuilds a rough path from an `rp-v1` document and its base path; returns
/// the path together with the CSV reference recorded in the document.
pub fn rough_path_from_json(s: &str, base: SampledPath) -> Result<(RoughPath, String)> {
    let doc: RoughPathDoc = serde_json::from_str(s)?;
    check_version(&doc.version, ROUGH_PATH_SCHEMA)?;
    if doc.dim != base.dim() {
        return Err(Error::Parse { line: 1, msg: "dimension does not match base path".into() });
    }
    let segs = doc.segments.iter().flat_map(|m| unsci(m)).collect();
    Ok((RoughPath::from_segments(base, segs, doc.geometric)?, doc.base))
}

/// Reads any JSON config, mapping errors to [`Error::Json`].
pub fn read_json<T: DeserializeOwned>(input: impl Read) -> Result<T> {
    Ok(serde_json::from_reader(input)?)
}

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use super::PipelineError;
use crate::dynamics::{ControlProtocol, ProtocolSource};
use crate::liealg::SubspaceSplit;

/// Pretty JSON that writes every float with 17 significant digits.
struct FullPrecision<'a>(PrettyFormatter<'a>);

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, PipelineError> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io { path: path.to_path_buf(), source: e }
}

/// Writes to a sibling temporary file, syncs it and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    write_atomic(path, &to_json_bytes(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes rows of floats under a header as CSV.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| fmt17(*x)))?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Invalid(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), PipelineError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| PipelineError::Invalid(format!("{}: row {} has non-numeric field '{s}'", path.display(), i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Geodesic seed a protocol came from, for overlay plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSeed {
    pub q: f64,
    pub h0: Vec<f64>,
}

/// JSON companion of a protocol CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSidecar {
    pub schema_version: u32,
    pub problem: String,
    pub config_hash: String,
    pub energy: f64,
    pub time: f64,
    pub infidelity: f64,
    pub samples: usize,
    pub interpolation: String,
    pub allowed_labels: Vec<String>,
    pub forbidden_labels: Vec<String>,
    pub source: ProtocolSource,
    /// (μ⁰, λ⁰) of the brachistochrone solution on [0, 1].
    pub initial_data: Vec<f64>,
    pub geodesic: Option<GeodesicSeed>,
}

pub const INTERPOLATION: &str = "cubic spline on the exported grid, end slopes from the four nearest samples";

pub fn protocol_header(na: usize, nb: usize) -> Vec<String> {
    std::iter::once("t".to_string()).chain((1..=na).map(|j| format!("mu_{j}"))).chain((1..=nb).map(|k| format!("lambda_{k}"))).collect()
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `<name>.csv` and its `<name>.json` sidecar.
pub fn write_protocol(csv_path: &Path, protocol: &ControlProtocol, sidecar: &ProtocolSidecar) -> Result<(), PipelineError> {
    let na = sidecar.allowed_labels.len();
    let nb = sidecar.forbidden_labels.len();
    let rows: Vec<Vec<f64>> = protocol
        .times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut r = vec![*t];
            r.extend_from_slice(&protocol.mu[i]);
            match protocol.lambda.get(i) {
                Some(l) => r.extend_from_slice(l),
                None => r.extend(std::iter::repeat_n(0.0, nb)),
            }
            r
        })
        .collect();
    if rows.iter().any(|r| r.len() != 1 + na + nb) {
        return Err(PipelineError::Invalid("protocol rows do not match the sidecar labels".into()));
    }
    write_csv(csv_path, &protocol_header(na, nb), &rows)?;
    write_json(&sidecar_path(csv_path), sidecar)
}

/// Reads a protocol CSV and its sidecar.
pub fn read_protocol(csv_path: &Path) -> Result<(ControlProtocol, ProtocolSidecar), PipelineError> {
    let sidecar: ProtocolSidecar = read_json(&sidecar_path(csv_path))?;
    let (header, rows) = read_csv(csv_path)?;
    let na = sidecar.allowed_labels.len();
    let nb = sidecar.forbidden_labels.len();
    if header != protocol_header(na, nb) {
        return Err(PipelineError::Dimension(format!(
            "{}: header has {} columns, sidecar declares 1 + {na} + {nb}",
            csv_path.display(),
            header.len()
        )));
    }
    if rows.iter().any(|r| r.len() != 1 + na + nb) {
        return Err(PipelineError::Dimension(format!("{}: ragged rows", csv_path.display())));
    }
    let protocol = ControlProtocol {
        times: rows.iter().map(|r| r[0]).collect(),
        mu: rows.iter().map(|r| r[1..=na].to_vec()).collect(),
        lambda: rows.iter().map(|r| r[1 + na..].to_vec()).collect(),
        energy: sidecar.energy,
        time: sidecar.time,
        infidelity: sidecar.infidelity,
        source: sidecar.source.clone(),
    };
    Ok((protocol, sidecar))
}

pub fn split_labels(split: &SubspaceSplit) -> (Vec<String>, Vec<String>) {
    let labels = split.labels();
    (labels[..split.n_allowed()].to_vec(), labels[split.n_allowed()..].to_vec())
}

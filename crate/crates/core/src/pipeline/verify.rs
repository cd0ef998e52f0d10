use std::path::Path;

use serde::{Deserialize, Serialize};

use super::persist::{read_protocol, write_csv, write_json, GeodesicSeed, INTERPOLATION};
use super::{PipelineError, Problem};
use crate::dynamics::{gate_fidelity, integrate_geodesic, qbe_residual, ControlProtocol, CubicSpline, FlowOptions};
use crate::liealg::{HermitianOperator, SubspaceSplit};

/// Replay fidelity may fall this far below the declared value before the
/// artifact is flagged.
pub const MISMATCH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayReport {
    pub samples: usize,
    pub interpolation: String,
    pub time: f64,
    pub fidelity: f64,
    pub infidelity: f64,
    pub declared_infidelity: f64,
    /// Largest relative deviation of ‖μ(t_i)‖ from E.
    pub norm_drift: f64,
    pub qbe_residual: f64,
    pub mismatch: bool,
}

/// Re-integrates the Schrödinger equation with the sampled μ controls.
pub fn verify_loaded(problem: &Problem, protocol: &ControlProtocol) -> Result<ReplayReport, PipelineError> {
    let split = &problem.split;
    let (na, nb) = (split.n_allowed(), split.n_forbidden());
    if protocol.mu.iter().any(|m| m.len() != na) || protocol.lambda.iter().any(|l| l.len() != nb) {
        return Err(PipelineError::Dimension(format!("protocol controls do not match the split ({na} allowed, {nb} forbidden)")));
    }
    let u = protocol.replay(split, problem.spec.tolerances.final_shoot)?;
    let fidelity = gate_fidelity(&u, &problem.target)?;
    let qbe = if protocol.times.len() >= 4 && protocol.lambda.len() == protocol.mu.len() {
        qbe_residual(split, &protocol.times, &protocol.mu, &protocol.lambda)?
    } else {
        f64::NAN
    };
    let declared = protocol.infidelity;
    let mismatch = declared.is_finite() && fidelity < 1.0 - declared - MISMATCH_TOL;
    Ok(ReplayReport {
        samples: protocol.times.len(),
        interpolation: INTERPOLATION.into(),
        time: protocol.time,
        fidelity,
        infidelity: (1.0 - fidelity).max(0.0),
        declared_infidelity: declared,
        norm_drift: protocol.norm_drift(),
        qbe_residual: qbe,
        mismatch,
    })
}

/// Loads a protocol CSV plus sidecar and replays it against the problem.
pub fn verify_protocol(protocol_path: &Path, problem: &Problem) -> Result<ReplayReport, PipelineError> {
    let (protocol, _) = read_protocol(protocol_path)?;
    verify_loaded(problem, &protocol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub first: String,
    pub second: String,
    pub max_difference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotData {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// μ curves equal pointwise within `PAIR_TOL`.
    pub coinciding_pairs: Vec<CurvePair>,
    pub distinct_curves: usize,
    /// max |μ_j| over the grid.
    pub amplitude: f64,
    /// max_j,t |μ_j(t) − α_j(t)| when an overlay is present.
    pub overlay_max_deviation: Option<f64>,
}

pub const PAIR_TOL: f64 = 1e-6;

/// Columns t, μ_1..μ_dA and, given the geodesic seed, α_1..α_dA of the
/// q-geodesic on the same time axis: the geodesic is solved on [0, 1] like
/// the brachistochrone, so both are mapped by t = sT and scaled by 1/T.
pub fn emit_plot_data(
    split: &SubspaceSplit,
    protocol: &ControlProtocol,
    overlay: Option<&GeodesicSeed>,
    tol: f64,
) -> Result<PlotData, PipelineError> {
    let na = split.n_allowed();
    let k = protocol.times.len();
    if protocol.mu.iter().any(|m| m.len() != na) {
        return Err(PipelineError::Dimension(format!("protocol has controls of the wrong dimension (expected {na})")));
    }
    let labels = &split.labels()[..na];
    let mut header = vec!["t".to_string()];
    header.extend((1..=na).map(|j| format!("mu_{j}")));
    let mut rows: Vec<Vec<f64>> =
        (0..k).map(|i| std::iter::once(protocol.times[i]).chain(protocol.mu[i].iter().copied()).collect()).collect();
    let mut overlay_max_deviation = None;
    if let (Some(g), true) = (overlay, protocol.time > 0.0 && k >= 2) {
        header.extend((1..=na).map(|j| format!("alpha_{j}")));
        let samples = k.max(64);
        let tr = integrate_geodesic(split, &HermitianOperator::from_slice(&g.h0), g.q, 1.0, &FlowOptions::sampled(tol, samples))?;
        let values: Vec<Vec<f64>> = tr.generators.iter().map(|h| h.as_slice()[..na].to_vec()).collect();
        let spline = CubicSpline::new(&tr.times, &values)?;
        let mut a = vec![0.0; na];
        let mut worst = 0.0f64;
        for (i, row) in rows.iter_mut().enumerate() {
            spline.eval(protocol.times[i] / protocol.time, &mut a);
            for j in 0..na {
                let v = a[j] / protocol.time;
                worst = worst.max((v - protocol.mu[i][j]).abs());
                row.push(v);
            }
        }
        overlay_max_deviation = Some(worst);
    }
    let mut coinciding_pairs = Vec::new();
    let mut class: Vec<usize> = (0..na).collect();
    for a in 0..na {
        for b in a + 1..na {
            let d = protocol.mu.iter().map(|m| (m[a] - m[b]).abs()).fold(0.0, f64::max);
            if d < PAIR_TOL {
                coinciding_pairs.push(CurvePair { first: labels[a].clone(), second: labels[b].clone(), max_difference: d });
                let (from, to) = (class[b], class[a]);
                class.iter_mut().filter(|c| **c == from).for_each(|c| *c = to);
            }
        }
    }
    let mut classes = class.clone();
    classes.sort_unstable();
    classes.dedup();
    let amplitude = protocol.mu.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(PlotData { header, rows, coinciding_pairs, distinct_curves: classes.len(), amplitude, overlay_max_deviation })
}

#[derive(Serialize)]
struct PlotSummary<'a> {
    columns: &'a [String],
    coinciding_pairs: &'a [CurvePair],
    distinct_curves: usize,
    amplitude: f64,
    overlay_max_deviation: Option<f64>,
}

/// Writes the plot CSV and a JSON summary next to it.
pub fn write_plot_data(csv_path: &Path, data: &PlotData) -> Result<(), PipelineError> {
    write_csv(csv_path, &data.header, &data.rows)?;
    write_json(
        &csv_path.with_extension("json"),
        &PlotSummary {
            columns: &data.header,
            coinciding_pairs: &data.coinciding_pairs,
            distinct_curves: data.distinct_curves,
            amplitude: data.amplitude,
            overlay_max_deviation: data.overlay_max_deviation,
        },
    )
}

//! Cluster-level ISS analysis.
//!
//! For a connected induced subgraph the dynamics split into ideal internal
//! consensus plus a perturbation `p`. Only its non-uniform part `p~` drives
//! internal disagreement, which is bounded by
//! `||e(0)|| e^{-alpha_in t} + sup ||p~|| / alpha_in` when `alpha_in > 0`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::graph::{Graph, SubgraphDecomposition};
use crate::linalg::symmetric_eigenvalues;
use crate::signal::SignalFunction;

/// Relative slack on the ISS inequality at each sample.
pub const ISS_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct ClusterAnalysis {
    pub decomposition: SubgraphDecomposition,
    pub k: f64,
    /// `1 - K max |lambda_i(D_in^-1 A_in)|` over all but the top eigenvalue.
    pub alpha_in: f64,
    /// Eigenvalues of `D_in^-1 A_in`, ascending. Empty for one vertex.
    pub internal_spectrum: Vec<f64>,
    pub cohesion_met: bool,
    pub degenerate: bool,
    /// `2 sum d_in (d_ext / d)^2`, compared against `sup ||p~||^2`.
    pub structural_bound: f64,
    /// Same sum with constant 4, which follows directly from `|s| <= 1`.
    pub structural_bound_conservative: f64,
    /// Sup of `||p~||_{D_in}` over the recorded samples.
    pub empirical_sup_residual: f64,
    /// `empirical_sup_residual / alpha_in`; `None` without cohesion.
    pub ultimate_bound: Option<f64>,
}

impl ClusterAnalysis {
    pub fn require_cohesion(&self) -> Result<()> {
        if self.cohesion_met {
            Ok(())
        } else {
            Err(Error::CohesionNotMet(self.alpha_in))
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IssTrace {
    pub times: Vec<f64>,
    /// `||e(t)||_{D_in}`.
    pub internal_disagreement: Vec<f64>,
    /// `||p~(x(t))||_{D_in}`.
    pub residual_perturbation: Vec<f64>,
    /// `None` when `alpha_in <= 0`.
    pub iss_bound: Option<Vec<f64>>,
    pub holds_at_all_samples: Option<bool>,
}

impl IssTrace {
    /// Writes `t,disagreement,residual_perturbation,iss_bound`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,disagreement,residual_perturbation,iss_bound")?;
        for i in 0..self.times.len() {
            let bound = match &self.iss_bound {
                Some(b) => b[i].to_string(),
                None => "n/a".to_string(),
            };
            writeln!(
                w,
                "{},{},{},{}",
                self.times[i], self.internal_disagreement[i], self.residual_perturbation[i], bound
            )?;
        }
        Ok(())
    }

    /// Whether the last `fraction` of samples stay under `bound * (1 + ISS_SLACK)`.
    pub fn tail_within(&self, fraction: f64, bound: f64) -> bool {
        let n = self.times.len();
        let start = n - ((n as f64 * fraction).ceil() as usize).min(n);
        self.internal_disagreement[start..]
            .iter()
            .all(|&e| e <= bound * (1.0 + ISS_SLACK))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub tilde: Vec<f64>,
    /// `D_in`-weighted mean of `p`.
    pub mean: f64,
}

fn check_decomposition(g: &Graph, dec: &SubgraphDecomposition) -> Result<()> {
    for (a, &v) in dec.vertex_set.iter().enumerate() {
        if v >= g.n() {
            return Err(Error::IndexOutOfRange { index: v, n: g.n() });
        }
        if g.degree(v) != dec.total_degrees[a] {
            return Err(Error::Config(format!("decomposition does not belong to this graph (vertex {v})")));
        }
    }
    Ok(())
}

/// `p = (D~_in^-1 - D_in^-1) A_in s(x') + D~_in^-1 S A_ext s(x)`.
pub fn perturbation(g: &Graph, s: &SignalFunction, x: &[f64], dec: &SubgraphDecomposition) -> Result<Vec<f64>> {
    if x.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            got: x.len(),
        });
    }
    check_decomposition(g, dec)?;
    let sx = s.evaluate_vec(x);
    let internal = dec.internal_neighbors();
    let external = dec.external_neighbors();
    let p = (0..dec.size())
        .map(|a| {
            let d = dec.total_degrees[a] as f64;
            let d_in = dec.internal_degrees[a] as f64;
            let inner: f64 = internal[a].iter().map(|&b| sx[dec.vertex_set[b]]).sum();
            let outer: f64 = external[a].iter().map(|&w| sx[w]).sum();
            let mismatch = if d_in > 0.0 { (1.0 / d - 1.0 / d_in) * inner } else { 0.0 };
            mismatch + outer / d
        })
        .collect();
    Ok(p)
}

fn weighted_mean(v: &[f64], dec: &SubgraphDecomposition) -> f64 {
    let total: f64 = dec.internal_degrees.iter().map(|&d| d as f64).sum();
    if total == 0.0 {
        return v.iter().sum::<f64>() / v.len() as f64;
    }
    v.iter()
        .zip(&dec.internal_degrees)
        .map(|(vi, &d)| d as f64 * vi)
        .sum::<f64>()
        / total
}

/// `p~ = p - pbar 1` with `pbar` the `D_in`-weighted mean.
pub fn residual(p: &[f64], dec: &SubgraphDecomposition) -> Result<Residual> {
    if p.len() != dec.size() {
        return Err(Error::DimensionMismatch {
            expected: dec.size(),
            got: p.len(),
        });
    }
    let mean = weighted_mean(p, dec);
    Ok(Residual {
        tilde: p.iter().map(|pi| pi - mean).collect(),
        mean,
    })
}

/// `||v||_{D_in}`.
pub fn d_in_norm(v: &[f64], dec: &SubgraphDecomposition) -> f64 {
    v.iter()
        .zip(&dec.internal_degrees)
        .map(|(vi, &d)| d as f64 * vi * vi)
        .sum::<f64>()
        .sqrt()
}

/// `||x' - xbar' 1||_{D_in}`.
pub fn internal_disagreement(x: &[f64], dec: &SubgraphDecomposition) -> f64 {
    let xs = dec.select(x);
    let mean = weighted_mean(&xs, dec);
    let e: Vec<f64> = xs.iter().map(|xi| xi - mean).collect();
    d_in_norm(&e, dec)
}

/// Spectrum of `D_in^-1 A_in` and the cohesion rate at gain `k`.
pub fn cohesion(dec: &SubgraphDecomposition, k: f64) -> Result<(f64, Vec<f64>)> {
    if dec.is_degenerate() {
        return Ok((1.0, Vec::new()));
    }
    let inv_sqrt: Vec<f64> = dec
        .internal_degrees
        .iter()
        .map(|&d| 1.0 / (d as f64).sqrt())
        .collect();
    let sym = dec.internal_adjacency().scale_rows_cols(&inv_sqrt, &inv_sqrt);
    let spectrum = symmetric_eigenvalues(&sym)?;
    let m = spectrum.len();
    let top = spectrum[..m - 1].iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    Ok((1.0 - k * top, spectrum))
}

/// `c * sum d_in (d_ext / d)^2`.
pub fn structural_sum(dec: &SubgraphDecomposition) -> f64 {
    (0..dec.size())
        .map(|a| {
            let ratio = dec.external_degrees[a] as f64 / dec.total_degrees[a] as f64;
            dec.internal_degrees[a] as f64 * ratio * ratio
        })
        .sum()
}

/// Runs the ISS check for one cluster along a recorded trajectory.
///
/// Without cohesion the analysis is still returned; the bound and verdict
/// are left empty and [`ClusterAnalysis::require_cohesion`] reports it.
pub fn analyze_cluster(
    g: &Graph,
    s: &SignalFunction,
    dec: &SubgraphDecomposition,
    traj: &Trajectory,
) -> Result<(ClusterAnalysis, IssTrace)> {
    check_decomposition(g, dec)?;
    let k = s.lipschitz();
    let (alpha_in, internal_spectrum) = cohesion(dec, k)?;
    let cohesion_met = alpha_in > 0.0;

    let mut disagreement = Vec::with_capacity(traj.len());
    let mut perturb = Vec::with_capacity(traj.len());
    for x in &traj.states {
        disagreement.push(internal_disagreement(x, dec));
        let p = perturbation(g, s, x, dec)?;
        perturb.push(d_in_norm(&residual(&p, dec)?.tilde, dec));
    }
    let sup = perturb.iter().copied().fold(0.0_f64, f64::max);

    let (iss_bound, holds) = if cohesion_met {
        let e0 = disagreement.first().copied().unwrap_or(0.0);
        let mut running = 0.0_f64;
        let bound: Vec<f64> = traj
            .times
            .iter()
            .zip(&perturb)
            .map(|(&t, &p)| {
                running = running.max(p);
                e0 * (-alpha_in * t).exp() + running / alpha_in
            })
            .collect();
        let holds = disagreement
            .iter()
            .zip(&bound)
            .all(|(&e, &b)| e <= b * (1.0 + ISS_SLACK));
        (Some(bound), Some(holds))
    } else {
        (None, None)
    };

    let sum = structural_sum(dec);
    let analysis = ClusterAnalysis {
        decomposition: dec.clone(),
        k,
        alpha_in,
        internal_spectrum,
        cohesion_met,
        degenerate: dec.is_degenerate(),
        structural_bound: 2.0 * sum,
        structural_bound_conservative: 4.0 * sum,
        empirical_sup_residual: sup,
        ultimate_bound: cohesion_met.then(|| sup / alpha_in),
    };
    let trace = IssTrace {
        times: traj.times.clone(),
        internal_disagreement: disagreement,
        residual_perturbation: perturb,
        iss_bound,
        holds_at_all_samples: holds,
    };
    Ok((analysis, trace))
}

/// Analyses several clusters of one trajectory in parallel, in input order.
pub fn analyze_clusters(
    g: &Graph,
    s: &SignalFunction,
    decs: &[SubgraphDecomposition],
    traj: &Trajectory,
) -> Result<Vec<(ClusterAnalysis, IssTrace)>> {
    decs.par_iter().map(|dec| analyze_cluster(g, s, dec, traj)).collect()
}

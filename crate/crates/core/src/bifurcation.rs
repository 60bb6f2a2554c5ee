//! Gain sweep on the five-agent line: synchronized branches, the
//! unsynchronized branch on the anti-symmetric subspace, and the two critical
//! gains where the origin loses stability along `v_{N-1}` and where the
//! unsynchronized branch becomes transversally stable.

use std::io::Write;

use serde::Serialize;

use crate::dynamics::residual;
use crate::equilibrium::{has_gain, jacobian_spectrum, ReducedLine5, Stability, ACCEPT_TOL};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::signal::{find_fixed_points, SignalFunction};
use crate::spectral::normalized_spectrum;

/// Allowed gain window.
pub const K_RANGE: (f64, f64) = (0.5, 3.5);
/// Bracket width at which crossing refinement stops.
pub const CROSSING_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct BranchPoint {
    pub k: f64,
    pub branch_id: String,
    pub state: Vec<f64>,
    pub x1: f64,
    pub residual: f64,
    pub stab_full: Stability,
    /// Stability inside the anti-symmetric subspace, when the point lies on it.
    pub stab_manifold: Option<Stability>,
    pub max_full_eigenvalue: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BifurcationDiagram {
    pub gains: Vec<f64>,
    pub points: Vec<BranchPoint>,
    pub lambda_second: f64,
    /// Gain where the origin's eigenvalue on `v_{N-1}` crosses zero.
    pub detected_k_bif: Option<f64>,
    /// Gain where the largest transverse eigenvalue of the unsynchronized branch crosses zero.
    pub detected_k_stab: Option<f64>,
}

impl BifurcationDiagram {
    pub fn branch(&self, id: &str) -> impl Iterator<Item = &BranchPoint> {
        let id = id.to_string();
        self.points.iter().filter(move |p| p.branch_id == id)
    }

    pub fn at_gain(&self, k: f64) -> impl Iterator<Item = &BranchPoint> {
        self.points.iter().filter(move |p| (p.k - k).abs() < 1e-9)
    }

    /// Writes `K,branch_id,x1,stab_full,stab_manifold`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "K,branch_id,x1,stab_full,stab_manifold")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                p.k,
                p.branch_id,
                p.x1,
                p.stab_full.label(),
                p.stab_manifold.map_or("n/a", |s| s.label())
            )?;
        }
        Ok(())
    }
}

fn is_line5(g: &Graph) -> bool {
    g.n() == 5 && g.edges() == vec![(0, 1), (1, 2), (2, 3), (3, 4)]
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn full_point(g: &Graph, s: &SignalFunction, k: f64, id: &str, state: Vec<f64>) -> Result<BranchPoint> {
    let r = residual(g, s, &state)?;
    if !(r < ACCEPT_TOL) {
        return Err(Error::BranchLost {
            branch: id.to_string(),
            k,
        });
    }
    let spec = jacobian_spectrum(g, s, &state)
        .ok_or_else(|| Error::Config(format!("signal `{}` has no slope", s.spec())))??;
    let max = max_of(&spec);
    Ok(BranchPoint {
        k,
        branch_id: id.to_string(),
        x1: state[0],
        state,
        residual: r,
        stab_full: Stability::from_max_real_part(max),
        stab_manifold: None,
        max_full_eigenvalue: max,
    })
}

/// Sweeps `K` from `k_min` to `k_max` on line(5) for an odd gain family.
///
/// The unsynchronized branch is continued with warm-started Newton on the
/// reduced two-dimensional system; it is born from the positive root of
/// `x = s(s(x)/2)` and mirrored to the negative side by oddness.
pub fn bifurcation_sweep(
    g: &Graph,
    base: &SignalFunction,
    k_min: f64,
    k_max: f64,
    k_step: f64,
) -> Result<BifurcationDiagram> {
    if !is_line5(g) {
        return Err(Error::Config("the bifurcation sweep runs on line:5".into()));
    }
    if !(k_step > 0.0) || !(k_min < k_max) || k_min < K_RANGE.0 - 1e-12 || k_max > K_RANGE.1 + 1e-12 {
        return Err(Error::Config(format!(
            "gain range [{k_min}, {k_max}] step {k_step} must lie in [{}, {}]",
            K_RANGE.0, K_RANGE.1
        )));
    }
    if !has_gain(base) {
        return Err(Error::Config(format!("signal `{}` has no gain parameter", base.spec())));
    }
    let at = |k: f64| base.with_gain(k);
    at(k_min)?.check_odd()?;

    let lambda = normalized_spectrum(g)?.lambda_second;
    let count = ((k_max - k_min) / k_step + 1e-9).floor() as usize + 1;
    let gains: Vec<f64> = (0..count).map(|i| k_min + i as f64 * k_step).collect();

    let mut points = Vec::new();
    let mut previous: Option<(f64, f64)> = None;
    let mut transverse: Vec<Option<f64>> = Vec::with_capacity(count);

    for &k in &gains {
        let s = at(k)?;
        let red = ReducedLine5::new(&s)?;

        let mut fse = Vec::new();
        for rec in find_fixed_points(&s)? {
            for c in rec.representatives() {
                let id = if c < -1e-9 {
                    "fse_minus"
                } else if c > 1e-9 {
                    "fse_plus"
                } else {
                    "fse_zero"
                };
                let mut p = full_point(g, &s, k, id, vec![c; 5])?;
                if id == "fse_zero" {
                    p.stab_manifold = red
                        .manifold_eigenvalues(0.0, 0.0)
                        .map(|ev| Stability::from_max_real_part(ev[1]));
                }
                fse.push(p);
            }
        }
        points.extend(fse);

        let current = continue_branch(&red, previous, k)?;
        match current {
            Some((x1, x2)) => {
                for (id, sign) in [("nfse_minus", -1.0), ("nfse_plus", 1.0)] {
                    let mut p = full_point(g, &s, k, id, ReducedLine5::embed(sign * x1, sign * x2))?;
                    p.stab_manifold = red
                        .manifold_eigenvalues(x1, x2)
                        .map(|ev| Stability::from_max_real_part(ev[1]));
                    points.push(p);
                }
                transverse.push(red.transverse_eigenvalues(x1, x2).map(|ev| ev[2]));
            }
            None => transverse.push(None),
        }
        previous = current;
    }

    // origin along v_{N-1}: s'(0) lambda_{N-1} - 1
    let origin_mode = |k: f64| -> Result<f64> {
        let slope = at(k)?
            .slope(0.0)
            .ok_or_else(|| Error::Config("signal has no slope".into()))?;
        Ok(slope * lambda - 1.0)
    };
    let mut detected_k_bif = None;
    for w in gains.windows(2) {
        let (a, b) = (origin_mode(w[0])?, origin_mode(w[1])?);
        if a < 0.0 && b >= 0.0 {
            detected_k_bif = Some(refine_crossing(w[0], w[1], |k| origin_mode(k))?);
            break;
        }
    }

    let mut detected_k_stab = None;
    for i in 1..gains.len() {
        if let (Some(a), Some(b)) = (transverse[i - 1], transverse[i]) {
            if a > 0.0 && b <= 0.0 {
                let k_lo = gains[i - 1];
                let f = |k: f64| -> Result<f64> {
                    let red = ReducedLine5::new(&at(k)?)?;
                    let (x1, x2) = red.positive_equilibrium().ok_or(Error::BranchLost {
                        branch: "nfse_plus".into(),
                        k,
                    })?;
                    red.transverse_eigenvalues(x1, x2)
                        .map(|ev| -ev[2])
                        .ok_or_else(|| Error::Config("signal has no slope".into()))
                };
                detected_k_stab = Some(refine_crossing(k_lo, gains[i], f)?);
                break;
            }
        }
    }

    Ok(BifurcationDiagram {
        gains,
        points,
        lambda_second: lambda,
        detected_k_bif,
        detected_k_stab,
    })
}

fn continue_branch(red: &ReducedLine5, previous: Option<(f64, f64)>, k: f64) -> Result<Option<(f64, f64)>> {
    let warm = previous
        .and_then(|(x1, x2)| red.newton(x1, x2))
        .filter(|(x1, _)| *x1 > 1e-6);
    match (warm, previous) {
        (Some(p), _) => Ok(Some(p)),
        (None, _) => match red.positive_equilibrium() {
            Some(p) => Ok(Some(p)),
            None if previous.map_or(false, |(x1, _)| x1 > 1e-3) => Err(Error::BranchLost {
                branch: "nfse_plus".into(),
                k,
            }),
            None => Ok(None),
        },
    }
}

// Bisection for the gain where `f` goes from negative to non-negative.
fn refine_crossing(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    while hi - lo > CROSSING_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;
    use approx::assert_abs_diff_eq;

    fn sweep(step: f64) -> BifurcationDiagram {
        let g = Topology::Line(5).build().unwrap();
        let s = SignalFunction::tanh_gain(1.0).unwrap();
        bifurcation_sweep(&g, &s, 0.5, 3.5, step).unwrap()
    }

    #[test]
    fn critical_gains() {
        let d = sweep(0.05);
        assert_abs_diff_eq!(d.detected_k_bif.unwrap(), 2f64.sqrt(), epsilon = 1e-5);
        let k_stab = d.detected_k_stab.unwrap();
        assert!((k_stab - 2.463).abs() < 0.01, "{k_stab}");
    }

    #[test]
    fn branch_structure() {
        let d = sweep(0.05);
        let at_one: Vec<&BranchPoint> = d.at_gain(1.0).collect();
        assert!(at_one.iter().all(|p| p.branch_id.starts_with("fse")));
        assert_eq!(at_one.len(), 1);

        let at_three: Vec<&str> = d.at_gain(3.0).map(|p| p.branch_id.as_str()).collect();
        assert_eq!(at_three, vec!["fse_minus", "fse_zero", "fse_plus", "nfse_minus", "nfse_plus"]);
        for p in &d.points {
            assert!(p.residual < ACCEPT_TOL);
        }
        // branch is born just above sqrt(2) and is stable on the subspace
        let first = d.branch("nfse_plus").next().unwrap();
        assert!(first.k > 2f64.sqrt() && first.k < 2f64.sqrt() + 0.05 + 1e-9);
        assert!(d
            .branch("nfse_plus")
            .all(|p| p.stab_manifold == Some(Stability::Stable)));
        // full-space stability flips at k_stab
        let k_stab = d.detected_k_stab.unwrap();
        for p in d.branch("nfse_plus") {
            let want = if p.k < k_stab { Stability::Unstable } else { Stability::Stable };
            assert_eq!(p.stab_full, want, "K = {}", p.k);
        }
        let mut csv = Vec::new();
        d.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().next().unwrap(), "K,branch_id,x1,stab_full,stab_manifold");
        assert_eq!(text.lines().count(), d.points.len() + 1);
    }

    #[test]
    fn rejects_bad_input() {
        let s = SignalFunction::tanh_gain(1.0).unwrap();
        let line = Topology::Line(5).build().unwrap();
        let ring = Topology::Ring(5).build().unwrap();
        assert!(matches!(bifurcation_sweep(&ring, &s, 0.5, 3.5, 0.1), Err(Error::Config(_))));
        assert!(matches!(bifurcation_sweep(&line, &s, 0.1, 3.5, 0.1), Err(Error::Config(_))));
        assert!(matches!(bifurcation_sweep(&line, &s, 0.5, 3.5, 0.0), Err(Error::Config(_))));
        assert!(bifurcation_sweep(&line, &SignalFunction::sine_staircase(), 0.5, 3.5, 0.1).is_err());
    }
}

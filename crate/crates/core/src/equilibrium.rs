//! Equilibria of the consensus flow: multi-start search, Jacobian stability,
//! the necessary conditions for unsynchronized equilibria, an exact
//! enumeration for the clip family and the reduced line(5) system.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{residual, settle};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{norm_inf, solve_linear, SquareMatrix, SymmetricEigen};
use crate::signal::{
    classify_fixed_point, find_fixed_points, Family, FixedPointClass, FixedPointRecord, SignalFunction,
    KINK_TOL,
};
use crate::spectral::{normalized_spectrum, symmetric_normalized};

/// Residual below which a state is reported as an equilibrium.
pub const ACCEPT_TOL: f64 = 1e-8;
/// Spread `max x - min x` below which an equilibrium is synchronized.
pub const SYNC_TOL: f64 = 1e-6;
/// Infinity-distance below which two equilibria are merged.
pub const DEDUP_TOL: f64 = 1e-6;
/// Real parts within this band of zero are marginal.
pub const STABILITY_MARGIN: f64 = 1e-8;

const SETTLE_DT: f64 = 0.05;
const SETTLE_TOL: f64 = 1e-4;
const SETTLE_T_MAX: f64 = 400.0;
const FALLBACK_TOL: f64 = 1e-10;
const FALLBACK_T_MAX: f64 = 2000.0;
const NEWTON_STEPS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn from_max_real_part(max: f64) -> Stability {
        if max < -STABILITY_MARGIN {
            Stability::Stable
        } else if max > STABILITY_MARGIN {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquilibriumKind {
    Fse { c: f64 },
    Nfse,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumReport {
    pub state: Vec<f64>,
    pub residual: f64,
    #[serde(flatten)]
    pub kind: EquilibriumKind,
    /// Ascending eigenvalues of `D^-1 A diag(s'(x)) - I`; absent without a slope.
    pub jacobian_spectrum: Option<Vec<f64>>,
    pub local_stability: Option<Stability>,
    /// Some component lies within 1e-6 of a kink of `s`.
    pub near_kink: bool,
    /// Scalar class of `c` for synchronized equilibria.
    pub scalar_class: Option<FixedPointClass>,
    /// Jacobian verdict agrees with the scalar class (synchronized equilibria only).
    pub consistent_with_scalar: Option<bool>,
    pub basin_samples: Option<usize>,
}

impl EquilibriumReport {
    pub fn is_fse(&self) -> bool {
        matches!(self.kind, EquilibriumKind::Fse { .. })
    }

    pub fn spread(&self) -> f64 {
        spread(&self.state)
    }
}

pub fn spread(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// `D^-1 A diag(s'(x)) - I`, or `None` without a slope.
pub fn jacobian(g: &Graph, s: &SignalFunction, x: &[f64]) -> Option<SquareMatrix> {
    let slopes: Option<Vec<f64>> = x.iter().map(|&v| s.slope(v)).collect();
    let slopes = slopes?;
    let n = g.n();
    let mut j = SquareMatrix::zeros(n);
    for i in 0..n {
        let d = g.degree(i) as f64;
        for &k in g.neighbors(i) {
            j[(i, k)] = slopes[k] / d;
        }
        j[(i, i)] -= 1.0;
    }
    Some(j)
}

/// Eigenvalues of the Jacobian, ascending.
///
/// `D^-1 A M` with `M = diag(s')` has the spectrum of the symmetric matrix
/// `M^1/2 D^-1/2 A D^-1/2 M^1/2`, so the eigenvalues are real and computed
/// with the symmetric solver.
pub fn jacobian_spectrum(g: &Graph, s: &SignalFunction, x: &[f64]) -> Option<Result<Vec<f64>>> {
    let slopes: Option<Vec<f64>> = x.iter().map(|&v| s.slope(v)).collect();
    let root: Vec<f64> = slopes?.iter().map(|m| m.max(0.0).sqrt()).collect();
    let sym = symmetric_normalized(g).scale_rows_cols(&root, &root);
    Some(SymmetricEigen::new(&sym).map(|e| e.values.iter().map(|v| v - 1.0).collect()))
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn nearest_fixed_point(fps: &[FixedPointRecord], c: f64) -> Option<f64> {
    fps.iter()
        .filter_map(|r| {
            if r.contains(c, 0.0) {
                Some((0.0, c))
            } else {
                let p = if c < r.lo() { r.lo() } else { r.hi() };
                Some(((p - c).abs(), p))
            }
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .filter(|(d, _)| *d < SYNC_TOL)
        .map(|(_, p)| p)
}

/// Classifies an equilibrium by synchronization and Jacobian spectrum. For
/// synchronized states the Jacobian verdict is cross-checked against the
/// scalar class of `c`: a stable `c` must give a stable or marginal
/// Jacobian, any other `c` an unstable or marginal one.
pub fn classify_equilibrium(g: &Graph, s: &SignalFunction, x: &[f64]) -> Result<EquilibriumReport> {
    let r = residual(g, s, x)?;
    if !(r < ACCEPT_TOL) {
        return Err(Error::NotAnEquilibrium(r));
    }
    let spectrum = jacobian_spectrum(g, s, x).transpose()?;
    let local_stability = spectrum.as_ref().map(|ev| Stability::from_max_real_part(max_of(ev)));
    let near_kink = x.iter().any(|&v| s.kink_distance(v) < KINK_TOL);

    let mut report = EquilibriumReport {
        state: x.to_vec(),
        residual: r,
        kind: EquilibriumKind::Nfse,
        jacobian_spectrum: spectrum,
        local_stability,
        near_kink,
        scalar_class: None,
        consistent_with_scalar: None,
        basin_samples: None,
    };
    if spread(x) < SYNC_TOL {
        let c = x.iter().sum::<f64>() / x.len() as f64;
        report.kind = EquilibriumKind::Fse { c };
        let fps = find_fixed_points(s)?;
        let snapped = nearest_fixed_point(&fps, c).unwrap_or(c);
        if let Ok(rec) = classify_fixed_point(s, snapped) {
            report.scalar_class = Some(rec.classification);
            report.consistent_with_scalar = local_stability.map(|st| match rec.classification {
                FixedPointClass::Stable => st != Stability::Unstable,
                _ => st != Stability::Stable,
            });
        }
    }
    Ok(report)
}

/// Multi-start plan for `find_equilibria`.
#[derive(Clone, Debug, Serialize)]
pub struct SeedPlan {
    /// Include `c 1` for every fixed point `c` of `s`.
    pub fixed_points: bool,
    /// `eps = scale / K` for the `+-eps v_{N-1}` seeds.
    pub eigen_scales: Vec<f64>,
    /// Latin-hypercube points in `[-1, 1]^N`.
    pub random: usize,
    pub seed: u64,
}

impl Default for SeedPlan {
    fn default() -> Self {
        SeedPlan {
            fixed_points: true,
            eigen_scales: vec![0.1, 0.5, 1.0],
            random: 64,
            seed: 0,
        }
    }
}

impl SeedPlan {
    pub fn with_random(random: usize, seed: u64) -> SeedPlan {
        SeedPlan {
            random,
            seed,
            ..SeedPlan::default()
        }
    }

    pub fn seeds(&self, g: &Graph, s: &SignalFunction) -> Result<Vec<Vec<f64>>> {
        let n = g.n();
        let mut out = Vec::new();
        if self.fixed_points {
            for rec in find_fixed_points(s)? {
                for c in rec.representatives() {
                    out.push(vec![c; n]);
                }
            }
        }
        if !self.eigen_scales.is_empty() {
            let v = normalized_spectrum(g)?.top_eigenvector;
            for &scale in &self.eigen_scales {
                let eps = scale / s.lipschitz();
                for sign in [1.0, -1.0] {
                    out.push(v.iter().map(|vi| (sign * eps * vi).clamp(-1.0, 1.0)).collect());
                }
            }
        }
        out.extend(latin_hypercube(n, self.random, self.seed));
        Ok(out)
    }
}

/// `m` Latin-hypercube points in `[-1, 1]^n`.
pub fn latin_hypercube(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; n]; m];
    for dim in 0..n {
        let mut strata: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            strata.swap(i, rng.gen_range(0..=i));
        }
        for (p, &stratum) in points.iter_mut().zip(&strata) {
            p[dim] = -1.0 + 2.0 * (stratum as f64 + rng.gen::<f64>()) / m as f64;
        }
    }
    points
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SearchLog {
    pub seeds: usize,
    pub converged: usize,
    pub dropped: usize,
    pub integration_fallbacks: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumSearch {
    pub equilibria: Vec<EquilibriumReport>,
    pub log: SearchLog,
}

impl EquilibriumSearch {
    pub fn nfse(&self) -> impl Iterator<Item = &EquilibriumReport> {
        self.equilibria.iter().filter(|e| !e.is_fse())
    }
}

/// Damped Newton on `F(x) = D^-1 A s(x) - x`: the step is halved while the
/// residual does not decrease. Iteration continues below the residual noise
/// floor until the step itself is negligible, so that degenerate equilibria
/// (where the residual is flat) are still located accurately. Returns the
/// last iterate and its residual.
pub fn newton_refine(g: &Graph, s: &SignalFunction, x0: &[f64]) -> Result<(Vec<f64>, f64)> {
    const NOISE_FLOOR: f64 = 1e-14;
    let mut x = x0.to_vec();
    let mut f = crate::dynamics::rhs(g, s, &x)?;
    let mut r = norm_inf(&f);
    for _ in 0..NEWTON_STEPS {
        if r == 0.0 {
            break;
        }
        let Some(j) = jacobian(g, s, &x) else { break };
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let Some(delta) = solve_linear(&j, &neg_f) else { break };
        if norm_inf(&delta) < 1e-15 {
            break;
        }
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-6 {
            let trial: Vec<f64> = x
                .iter()
                .zip(&delta)
                .map(|(xi, di)| (xi + lambda * di).clamp(-1.0, 1.0))
                .collect();
            let ft = crate::dynamics::rhs(g, s, &trial)?;
            let rt = norm_inf(&ft);
            if rt < r || (rt <= NOISE_FLOOR && r <= NOISE_FLOOR) {
                x = trial;
                f = ft;
                r = rt;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((x, r))
}

// One seed: settle, refine, fall back to longer integration if needed.
fn solve_seed(g: &Graph, s: &SignalFunction, x0: &[f64]) -> Result<(Option<Vec<f64>>, bool)> {
    let (x, _) = settle(g, s, x0, SETTLE_DT, SETTLE_TOL, SETTLE_T_MAX)?;
    let (x, r) = if s.has_slope() {
        newton_refine(g, s, &x)?
    } else {
        settle(g, s, &x, SETTLE_DT, FALLBACK_TOL, FALLBACK_T_MAX)?
    };
    if r < ACCEPT_TOL {
        return Ok((Some(x), false));
    }
    let (x, mut r) = settle(g, s, &x, SETTLE_DT, FALLBACK_TOL, FALLBACK_T_MAX)?;
    let mut x = x;
    if r >= ACCEPT_TOL && s.has_slope() {
        (x, r) = newton_refine(g, s, &x)?;
    }
    Ok(((r < ACCEPT_TOL).then_some(x), true))
}

/// Multi-start equilibrium search. Seeds run in parallel; deduplication and
/// reporting follow seed order, so results are deterministic.
pub fn find_equilibria(g: &Graph, s: &SignalFunction, plan: &SeedPlan) -> Result<EquilibriumSearch> {
    let seeds = plan.seeds(g, s)?;
    let outcomes: Vec<Result<(Option<Vec<f64>>, bool)>> =
        seeds.par_iter().map(|x0| solve_seed(g, s, x0)).collect();

    let mut log = SearchLog {
        seeds: seeds.len(),
        ..SearchLog::default()
    };
    let mut found: Vec<(Vec<f64>, usize)> = Vec::new();
    for outcome in outcomes {
        let (point, fallback) = outcome?;
        if fallback {
            log.integration_fallbacks += 1;
        }
        let Some(x) = point else {
            log.dropped += 1;
            continue;
        };
        log.converged += 1;
        match found.iter_mut().find(|(y, _)| {
            x.iter().zip(y.iter()).all(|(a, b)| (a - b).abs() < DEDUP_TOL)
        }) {
            Some((_, count)) => *count += 1,
            None => found.push((x, 1)),
        }
    }

    let equilibria = found
        .into_iter()
        .map(|(x, count)| {
            let mut report = classify_equilibrium(g, s, &x)?;
            report.basin_samples = Some(count);
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumSearch { equilibria, log })
}

/// Signal-level feasibility of unsynchronized equilibria: they need a
/// non-stable fixed point, a left-unstable one and a right-unstable one.
#[derive(Clone, Debug, Serialize)]
pub struct NfseFeasibility {
    pub has_non_stable: bool,
    pub has_left_unstable: bool,
    pub has_right_unstable: bool,
    pub possible: bool,
}

pub fn nfse_feasibility(s: &SignalFunction) -> Result<NfseFeasibility> {
    let fps = find_fixed_points(s)?;
    let has_non_stable = fps.iter().any(|r| !r.is_stable());
    let has_left_unstable = fps.iter().any(|r| r.in_left_unstable_set);
    let has_right_unstable = fps.iter().any(|r| r.in_right_unstable_set);
    Ok(NfseFeasibility {
        has_non_stable,
        has_left_unstable,
        has_right_unstable,
        possible: has_non_stable && has_left_unstable && has_right_unstable,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct NfseConditionsReport {
    /// First non-stable fixed point splitting the agents into two groups of at least two.
    pub splitting_point: Option<f64>,
    /// `{i | x_i < c}` for the splitting point.
    pub set_i: Vec<usize>,
    /// `{j | x_j > c}` for the splitting point.
    pub set_j: Vec<usize>,
    pub card_i: usize,
    pub card_j: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub non_stable_fixed_points: Vec<f64>,
    pub has_left_unstable_between: bool,
    pub has_right_unstable_between: bool,
    /// A left-unstable `cL` and right-unstable `cR` with `x_min < cL <= cR < x_max`.
    pub ordered_pair_between: bool,
    pub overall_pass: bool,
}

/// Checks the necessary conditions at an unsynchronized equilibrium `x`.
pub fn nfse_conditions(g: &Graph, s: &SignalFunction, x: &[f64]) -> Result<NfseConditionsReport> {
    let report = classify_equilibrium(g, s, x)?;
    if report.is_fse() {
        return Err(Error::NotNfse);
    }
    let fps = find_fixed_points(s)?;
    let x_min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let non_stable: Vec<f64> = fps
        .iter()
        .filter(|r| !r.is_stable())
        .flat_map(|r| r.representatives())
        .collect();
    let mut chosen = None;
    for &c in &non_stable {
        let set_i: Vec<usize> = (0..x.len()).filter(|&i| x[i] < c).collect();
        let set_j: Vec<usize> = (0..x.len()).filter(|&j| x[j] > c).collect();
        if set_i.len() >= 2 && set_j.len() >= 2 {
            chosen = Some((c, set_i, set_j));
            break;
        }
    }

    let between = |c: f64| x_min < c && c < x_max;
    let lefts: Vec<f64> = fps
        .iter()
        .filter(|r| r.in_left_unstable_set)
        .map(|r| r.lo())
        .filter(|&c| between(c))
        .collect();
    let rights: Vec<f64> = fps
        .iter()
        .filter(|r| r.in_right_unstable_set)
        .map(|r| r.hi())
        .filter(|&c| between(c))
        .collect();
    let ordered_pair_between = lefts.iter().any(|cl| rights.iter().any(|cr| cl <= cr));

    let (splitting_point, set_i, set_j) = match chosen {
        Some((c, i, j)) => (Some(c), i, j),
        None => (None, Vec::new(), Vec::new()),
    };
    let overall_pass = !non_stable.is_empty() && splitting_point.is_some() && ordered_pair_between;
    Ok(NfseConditionsReport {
        splitting_point,
        card_i: set_i.len(),
        card_j: set_j.len(),
        set_i,
        set_j,
        x_min,
        x_max,
        non_stable_fixed_points: non_stable,
        has_left_unstable_between: !lefts.is_empty(),
        has_right_unstable_between: !rights.is_empty(),
        ordered_pair_between,
        overall_pass,
    })
}

/// Exact equilibria for `clip_linear` by enumerating the region of every
/// agent (saturated low, linear, saturated high). In each region assignment
/// the equilibrium equation is linear. Assignments whose linear block is
/// singular hold a continuum and are only counted. Limited to `N <= 10`.
#[derive(Clone, Debug, Serialize)]
pub struct ClipEnumeration {
    pub equilibria: Vec<Vec<f64>>,
    pub singular_regions: usize,
}

pub fn clip_exact_equilibria(g: &Graph, k: f64) -> Result<ClipEnumeration> {
    let n = g.n();
    if n > 10 {
        return Err(Error::Config(format!(
            "exact clip enumeration is limited to 10 agents, got {n}"
        )));
    }
    if !(k > 0.0) {
        return Err(Error::NonPositiveK(k));
    }
    let p = g.random_walk_matrix();
    let mut equilibria: Vec<Vec<f64>> = Vec::new();
    let mut singular_regions = 0;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        // region: 0 low, 1 linear, 2 high
        let region: Vec<u8> = (0..n).map(|i| ((code / 3usize.pow(i as u32)) % 3) as u8).collect();
        let lin: Vec<usize> = (0..n).filter(|&i| region[i] == 1).collect();
        let sat = |j: usize| match region[j] {
            0 => -1.0,
            _ => 1.0,
        };
        // (I - K P_LL) x_L = P_LS b
        let m = lin.len();
        let mut a = SquareMatrix::identity(m);
        let mut rhs_vec = vec![0.0; m];
        for (r, &i) in lin.iter().enumerate() {
            for (c, &j) in lin.iter().enumerate() {
                a[(r, c)] -= k * p[(i, j)];
            }
            rhs_vec[r] = (0..n).filter(|&j| region[j] != 1).map(|j| p[(i, j)] * sat(j)).sum();
        }
        let x_lin = if m == 0 {
            Vec::new()
        } else {
            match solve_linear(&a, &rhs_vec) {
                Some(v) => v,
                None => {
                    singular_regions += 1;
                    continue;
                }
            }
        };
        let mut sx = vec![0.0; n];
        for i in 0..n {
            sx[i] = if region[i] == 1 {
                k * x_lin[lin.iter().position(|&l| l == i).unwrap()]
            } else {
                sat(i)
            };
        }
        let x = p.mul_vec(&sx);
        let consistent = (0..n).all(|i| {
            let kx = k * x[i];
            match region[i] {
                0 => kx <= -1.0 + 1e-12,
                1 => kx.abs() <= 1.0 + 1e-12,
                _ => kx >= 1.0 - 1e-12,
            }
        });
        if consistent
            && !equilibria
                .iter()
                .any(|y| y.iter().zip(&x).all(|(a, b)| (a - b).abs() < DEDUP_TOL))
        {
            equilibria.push(x);
        }
    }
    Ok(ClipEnumeration {
        equilibria,
        singular_regions,
    })
}

/// The line(5) dynamics restricted to the anti-symmetric subspace
/// `(x1, x2, 0, -x2, -x1)`, valid for odd signals.
#[derive(Clone, Debug)]
pub struct ReducedLine5 {
    s: SignalFunction,
}

impl ReducedLine5 {
    pub fn new(s: &SignalFunction) -> Result<ReducedLine5> {
        s.check_odd()?;
        Ok(ReducedLine5 { s: s.clone() })
    }

    pub fn signal(&self) -> &SignalFunction {
        &self.s
    }

    /// `(s(x2) - x1, s(x1)/2 - x2)`.
    pub fn rhs(&self, x1: f64, x2: f64) -> [f64; 2] {
        [self.s.evaluate(x2) - x1, self.s.evaluate(x1) / 2.0 - x2]
    }

    pub fn embed(x1: f64, x2: f64) -> Vec<f64> {
        vec![x1, x2, 0.0, -x2, -x1]
    }

    fn slopes(&self, x1: f64, x2: f64) -> Option<(f64, f64, f64)> {
        Some((self.s.slope(x1)?, self.s.slope(x2)?, self.s.slope(0.0)?))
    }

    /// Eigenvalues of the reduced Jacobian, `-1 +- sqrt(s'(x1) s'(x2) / 2)`, ascending.
    pub fn manifold_eigenvalues(&self, x1: f64, x2: f64) -> Option<[f64; 2]> {
        let (d1, d2, _) = self.slopes(x1, x2)?;
        let r = (d1 * d2 / 2.0).max(0.0).sqrt();
        Some([-1.0 - r, -1.0 + r])
    }

    /// Eigenvalues of the full Jacobian on the symmetric complement
    /// `(a, b, c, b, a)`: `-1` and `-1 +- sqrt(s'(x2) (s'(x1) + s'(0)) / 2)`.
    pub fn transverse_eigenvalues(&self, x1: f64, x2: f64) -> Option<[f64; 3]> {
        let (d1, d2, d0) = self.slopes(x1, x2)?;
        let r = (d2 * (d1 + d0) / 2.0).max(0.0).sqrt();
        Some([-1.0 - r, -1.0, -1.0 + r])
    }

    /// Newton on the reduced system. Returns `None` if it does not reach 1e-13.
    pub fn newton(&self, x1: f64, x2: f64) -> Option<(f64, f64)> {
        let (mut a, mut b) = (x1, x2);
        for _ in 0..100 {
            let [f1, f2] = self.rhs(a, b);
            if f1.abs().max(f2.abs()) < 1e-13 {
                return Some((a, b));
            }
            let (d1, d2, _) = self.slopes(a, b)?;
            // J = [[-1, d2], [d1/2, -1]]
            let det = 1.0 - d1 * d2 / 2.0;
            if det.abs() < 1e-14 {
                return None;
            }
            let da = (-f1 - d2 * f2) / det;
            let db = (-f2 - d1 / 2.0 * f1) / det;
            a = (a + da).clamp(-1.0, 1.0);
            b = (b + db).clamp(-1.0, 1.0);
        }
        let [f1, f2] = self.rhs(a, b);
        (f1.abs().max(f2.abs()) < 1e-13).then_some((a, b))
    }

    /// Positive root of `x = s(s(x)/2)` on `(0, 1]`, the nonzero equilibrium
    /// on the subspace, if it exists.
    pub fn positive_equilibrium(&self) -> Option<(f64, f64)> {
        let h = |x: f64| self.s.evaluate(self.s.evaluate(x) / 2.0) - x;
        if h(1.0) > 0.0 {
            return None;
        }
        // the smallest grid point with h > 0 brackets the root from the left
        let left = (1..=100_000)
            .map(|i| i as f64 * 1e-5)
            .find(|&x| h(x) > 0.0)?;
        let right = (1..=200)
            .map(|i| left + i as f64 * 5e-3)
            .map(|x| x.min(1.0))
            .find(|&x| h(x) <= 0.0)?;
        let (mut lo, mut hi) = (left, right);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x1 = 0.5 * (lo + hi);
        self.newton(x1, self.s.evaluate(x1) / 2.0)
    }
}

/// Whether `s` belongs to a family with a gain parameter.
pub(crate) fn has_gain(s: &SignalFunction) -> bool {
    matches!(s.family(), Family::TanhGain { .. } | Family::ClipLinear { .. })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn line5() -> Graph {
        Topology::Line(5).build().unwrap()
    }

    fn plan(random: usize) -> SeedPlan {
        SeedPlan::with_random(random, 42)
    }

    // General eigenvalues of the explicit Jacobian from the reference library.
    fn reference_jacobian_eigenvalues(g: &Graph, s: &SignalFunction, x: &[f64]) -> Vec<f64> {
        let j = jacobian(g, s, x).unwrap();
        let n = g.n();
        let shift = 0.37;
        let m = DMatrix::from_row_slice(n, n, j.as_slice()) + DMatrix::identity(n, n) * shift;
        let schur = nalgebra::linalg::Schur::try_new(m, 1e-14, 100_000).unwrap();
        let mut v: Vec<f64> = schur
            .complex_eigenvalues()
            .iter()
            .map(|z| {
                assert!(z.im.abs() < 1e-7);
                z.re - shift
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn jacobian_spectrum_matches_general_solver() {
        let g = Graph::karate();
        let s = SignalFunction::tanh_gain(2.0).unwrap();
        let x: Vec<f64> = (0..34).map(|i| ((i * 7) % 11) as f64 / 6.0 - 0.9).collect();
        let ours = jacobian_spectrum(&g, &s, &x).unwrap().unwrap();
        for (a, b) in ours.iter().zip(reference_jacobian_eigenvalues(&g, &s, &x)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn synchronized_classification() {
        let g = Graph::karate();
        let s = SignalFunction::tanh_gain(2.5).unwrap();
        let c = find_fixed_points(&s).unwrap()[2].value;
        let r = classify_equilibrium(&g, &s, &vec![c; 34]).unwrap();
        assert!(matches!(r.kind, EquilibriumKind::Fse { c: v } if (v - 0.98562).abs() < 1e-5));
        assert_eq!(r.local_stability, Some(Stability::Stable));
        assert_eq!(r.scalar_class, Some(FixedPointClass::Stable));
        assert_eq!(r.consistent_with_scalar, Some(true));

        for g in [line5(), Graph::karate(), Topology::Ring(6).build().unwrap()] {
            let n = g.n();
            let r = classify_equilibrium(&g, &s, &vec![0.0; n]).unwrap();
            let spec = r.jacobian_spectrum.unwrap();
            assert_abs_diff_eq!(*spec.last().unwrap(), 1.5, epsilon = 1e-12);
            assert_eq!(r.local_stability, Some(Stability::Unstable));
            assert_eq!(r.consistent_with_scalar, Some(true));
        }

        assert!(matches!(
            classify_equilibrium(&line5(), &s, &[0.3; 5]),
            Err(Error::NotAnEquilibrium(_))
        ));
    }

    #[test]
    fn synchronized_classification_across_families() {
        for s in [
            SignalFunction::clip_linear(1.0).unwrap(),
            SignalFunction::clip_linear(3.0).unwrap(),
            SignalFunction::sine_staircase(),
            SignalFunction::tanh_gain(0.7).unwrap(),
        ] {
            for g in [line5(), Topology::Star(4).build().unwrap()] {
                for rec in find_fixed_points(&s).unwrap() {
                    for c in rec.representatives() {
                        let r = classify_equilibrium(&g, &s, &vec![c; g.n()]).unwrap();
                        assert_eq!(r.consistent_with_scalar, Some(true), "{} at {c}", s.spec());
                    }
                }
            }
        }
    }

    #[test]
    fn contraction_gives_single_equilibrium() {
        let s = SignalFunction::tanh_gain(1.0).unwrap();
        let found = find_equilibria(&line5(), &s, &plan(64)).unwrap();
        assert_eq!(found.equilibria.len(), 1);
        assert!(found.equilibria[0].state.iter().all(|v| v.abs() < 1e-6));
        assert_eq!(found.log.dropped, 0);
    }

    #[test]
    fn high_gain_line_has_unsynchronized_equilibria() {
        let g = line5();
        let s = SignalFunction::tanh_gain(3.0).unwrap();
        let found = find_equilibria(&g, &s, &plan(64)).unwrap();
        let fse = found.equilibria.iter().filter(|e| e.is_fse()).count();
        assert_eq!(fse, 3);
        assert!(found.nfse().count() >= 2);

        let reduced = ReducedLine5::new(&s).unwrap();
        let (x1, x2) = reduced.positive_equilibrium().unwrap();
        let on_manifold: Vec<&EquilibriumReport> = found
            .nfse()
            .filter(|e| e.state[2].abs() < 1e-9 && (e.state[0] + e.state[4]).abs() < 1e-9)
            .collect();
        assert!(on_manifold.len() >= 2);
        for e in on_manifold {
            let sign = e.state[0].signum();
            assert_abs_diff_eq!(e.state[0], sign * x1, epsilon = 1e-8);
            assert_abs_diff_eq!(e.state[1], sign * x2, epsilon = 1e-8);
            let cond = nfse_conditions(&g, &s, &e.state).unwrap();
            assert!(cond.overall_pass);
            assert_eq!(cond.splitting_point, Some(0.0));
            assert!(cond.card_i >= 2 && cond.card_j >= 2);
        }
        for e in found.nfse() {
            assert!(nfse_conditions(&g, &s, &e.state).unwrap().overall_pass);
        }
    }

    #[test]
    fn complete_graph_synchronizes() {
        let g = Topology::Complete(6).build().unwrap();
        let s = SignalFunction::clip_linear(5.0).unwrap();
        let found = find_equilibria(&g, &s, &plan(64)).unwrap();
        assert!(!found.equilibria.is_empty());
        assert!(found.equilibria.iter().all(|e| e.is_fse()));
    }

    #[test]
    fn exact_clip_enumeration_matches_search() {
        let g = line5();
        for k in [1.2, 3.0] {
            let s = SignalFunction::clip_linear(k).unwrap();
            let exact = clip_exact_equilibria(&g, k).unwrap();
            for x in &exact.equilibria {
                assert!(residual(&g, &s, x).unwrap() < 1e-12);
            }
            let found = find_equilibria(&g, &s, &plan(256)).unwrap();
            for e in &found.equilibria {
                assert!(
                    exact
                        .equilibria
                        .iter()
                        .any(|x| x.iter().zip(&e.state).all(|(a, b)| (a - b).abs() < 1e-6)),
                    "search found an equilibrium missing from the enumeration"
                );
            }
        }
        // below threshold every exact equilibrium is synchronized
        let exact = clip_exact_equilibria(&g, 1.2).unwrap();
        assert!(exact.equilibria.iter().all(|x| spread(x) < 1e-9));
        let exact = clip_exact_equilibria(&g, 3.0).unwrap();
        assert!(exact.equilibria.iter().any(|x| spread(x) > 0.5));
    }

    #[test]
    fn sine_staircase_cannot_split() {
        let f = nfse_feasibility(&SignalFunction::sine_staircase()).unwrap();
        assert!(!f.possible && !f.has_left_unstable && f.has_right_unstable);
        let g = line5();
        let found = find_equilibria(&g, &SignalFunction::sine_staircase(), &plan(64)).unwrap();
        assert!(found.equilibria.iter().all(|e| e.is_fse()));
        assert!(nfse_feasibility(&SignalFunction::tanh_gain(3.0).unwrap()).unwrap().possible);
    }

    #[test]
    fn nfse_conditions_reject_synchronized_states() {
        let s = SignalFunction::tanh_gain(3.0).unwrap();
        assert!(matches!(
            nfse_conditions(&line5(), &s, &[0.0; 5]),
            Err(Error::NotNfse)
        ));
    }

    #[test]
    fn reduced_system() {
        let s = SignalFunction::tanh_gain(3.0).unwrap();
        let red = ReducedLine5::new(&s).unwrap();
        assert_eq!(red.rhs(0.0, 0.0), [0.0, 0.0]);
        let g = line5();
        for (x1, x2) in [(0.3, -0.2), (0.9, 0.45), (-0.7, 0.1)] {
            let full = crate::dynamics::rhs(&g, &s, &ReducedLine5::embed(x1, x2)).unwrap();
            let [r1, r2] = red.rhs(x1, x2);
            let want = [r1, r2, 0.0, -r2, -r1];
            for (a, b) in full.iter().zip(want) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
            }
            // full Jacobian spectrum is the union of both blocks
            let mut blocks: Vec<f64> = red.manifold_eigenvalues(x1, x2).unwrap().to_vec();
            blocks.extend(red.transverse_eigenvalues(x1, x2).unwrap());
            blocks.sort_by(f64::total_cmp);
            let x = ReducedLine5::embed(x1, x2);
            let full_spec = jacobian_spectrum(&g, &s, &x).unwrap().unwrap();
            for (a, b) in full_spec.iter().zip(&blocks) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
            }
        }
        assert!(matches!(
            ReducedLine5::new(&SignalFunction::sine_staircase()),
            Err(Error::NotOdd { .. })
        ));
        assert!(ReducedLine5::new(&SignalFunction::tanh_gain(1.2).unwrap())
            .unwrap()
            .positive_equilibrium()
            .is_none());
    }

    #[test]
    fn small_graphs_only_synchronize() {
        let graphs = [
            Graph::from_edge_list(&[(0, 1)], 2).unwrap(),
            Graph::from_edge_list(&[(0, 1), (1, 2)], 3).unwrap(),
            Graph::from_edge_list(&[(0, 1), (1, 2), (0, 2)], 3).unwrap(),
        ];
        for g in &graphs {
            for s in [
                SignalFunction::tanh_gain(4.0).unwrap(),
                SignalFunction::clip_linear(6.0).unwrap(),
                SignalFunction::sine_staircase(),
            ] {
                let found = find_equilibria(g, &s, &plan(128)).unwrap();
                assert!(found.equilibria.iter().all(|e| e.is_fse()), "{} on n={}", s.spec(), g.n());
            }
        }
    }

    #[test]
    fn latin_hypercube_strata() {
        let pts = latin_hypercube(3, 10, 1);
        for dim in 0..3 {
            let mut strata: Vec<usize> = pts
                .iter()
                .map(|p| (((p[dim] + 1.0) / 2.0) * 10.0).floor() as usize)
                .collect();
            strata.sort();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
        assert_eq!(latin_hypercube(3, 10, 1), pts);
    }
}

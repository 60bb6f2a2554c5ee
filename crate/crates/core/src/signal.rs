//! Admissible signal functions: non-decreasing, K-Lipschitz self-maps of
//! `[-1, 1]`, together with their fixed points and one-sided stability.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Points of the assumption-validation grid (10^4 + 1).
pub const VALIDATION_GRID: usize = 10_001;
/// Step of the fixed-point search grid.
const SEARCH_STEP: f64 = 1e-3;
/// `|s(x) - x|` below this on the search grid counts as zero.
const PLATEAU_TOL: f64 = 1e-12;
/// Fixed-point acceptance used by `classify_fixed_point`.
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// One-sided stability probe offsets.
pub const PROBE_LADDER: [f64; 7] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
/// Distance below which a state component counts as sitting on a kink.
pub const KINK_TOL: f64 = 1e-6;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Family {
    TanhGain { k: f64 },
    ClipLinear { k: f64 },
    /// Ascending breakpoints `(x, y)` spanning `[-1, 1]`.
    PiecewiseLinear { points: Vec<(f64, f64)> },
    SineStaircase,
    Custom {
        name: String,
        eval: ScalarFn,
        slope: Option<ScalarFn>,
    },
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::TanhGain { k } => write!(f, "TanhGain({k})"),
            Family::ClipLinear { k } => write!(f, "ClipLinear({k})"),
            Family::PiecewiseLinear { points } => write!(f, "PiecewiseLinear({points:?})"),
            Family::SineStaircase => write!(f, "SineStaircase"),
            Family::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// A signal function with its declared Lipschitz constant.
///
/// The declared constant is what threshold formulas use; grid estimates only
/// validate it.
#[derive(Clone, Debug)]
pub struct SignalFunction {
    family: Family,
    lipschitz_k: f64,
    spec: String,
}

fn check_k(k: f64) -> Result<f64> {
    if k > 0.0 && k.is_finite() {
        Ok(k)
    } else {
        Err(Error::NonPositiveK(k))
    }
}

impl SignalFunction {
    /// `s(x) = tanh(K x)`.
    pub fn tanh_gain(k: f64) -> Result<SignalFunction> {
        let k = check_k(k)?;
        Ok(SignalFunction {
            family: Family::TanhGain { k },
            lipschitz_k: k,
            spec: format!("tanh:K={k}"),
        })
    }

    /// `s(x) = max(-1, min(1, K x))`.
    pub fn clip_linear(k: f64) -> Result<SignalFunction> {
        let k = check_k(k)?;
        Ok(SignalFunction {
            family: Family::ClipLinear { k },
            lipschitz_k: k,
            spec: format!("clip:K={k}"),
        })
    }

    /// Linear interpolation through ascending breakpoints. The first and last
    /// abscissae must be -1 and 1, values must lie in `[-1, 1]` and be
    /// non-decreasing. The declared constant is the steepest segment slope.
    pub fn piecewise_linear(points: Vec<(f64, f64)>) -> Result<SignalFunction> {
        if points.len() < 2 {
            return Err(Error::AssumptionViolation(
                "piecewise-linear signal needs at least two breakpoints".into(),
            ));
        }
        let (x0, xn) = (points[0].0, points[points.len() - 1].0);
        if (x0 + 1.0).abs() > 1e-12 || (xn - 1.0).abs() > 1e-12 {
            return Err(Error::AssumptionViolation(format!(
                "breakpoints must span [-1, 1], got [{x0}, {xn}]"
            )));
        }
        let mut k: f64 = 0.0;
        for w in points.windows(2) {
            let ((xa, ya), (xb, yb)) = (w[0], w[1]);
            if !(xb > xa) {
                return Err(Error::AssumptionViolation(format!(
                    "breakpoints must be strictly ascending ({xa} then {xb})"
                )));
            }
            if yb < ya {
                return Err(Error::AssumptionViolation(format!(
                    "values must be non-decreasing ({ya} then {yb})"
                )));
            }
            k = k.max((yb - ya) / (xb - xa));
        }
        if let Some(&(x, y)) = points.iter().find(|(_, y)| !(-1.0..=1.0).contains(y)) {
            return Err(Error::AssumptionViolation(format!(
                "value {y} at x = {x} leaves [-1, 1]"
            )));
        }
        let k = check_k(k)?;
        let spec = format!(
            "pwl:{}",
            points
                .iter()
                .map(|(x, y)| format!("{x}/{y}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        Ok(SignalFunction {
            family: Family::PiecewiseLinear { points },
            lipschitz_k: k,
            spec,
        })
    }

    /// `s(x) = x - min(sin(2 pi x), sin(2 pi x + pi)) / (2 pi)`, i.e.
    /// `x + |sin(2 pi x)| / (2 pi)`. Lipschitz constant 2.
    pub fn sine_staircase() -> SignalFunction {
        SignalFunction {
            family: Family::SineStaircase,
            lipschitz_k: 2.0,
            spec: "sinestair".into(),
        }
    }

    pub fn custom<F>(name: &str, lipschitz_k: f64, eval: F) -> Result<SignalFunction>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Ok(SignalFunction {
            family: Family::Custom {
                name: name.to_string(),
                eval: Arc::new(eval),
                slope: None,
            },
            lipschitz_k: check_k(lipschitz_k)?,
            spec: format!("custom:{name}"),
        })
    }

    pub fn with_slope<F>(mut self, slope: F) -> SignalFunction
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if let Family::Custom { slope: ref mut sl, .. } = self.family {
            *sl = Some(Arc::new(slope));
        }
        self
    }

    /// Parses `tanh:K=2.5`, `clip:K=1.2`, `pwl:file=path.json` or `sinestair`.
    pub fn from_spec(spec: &str) -> Result<SignalFunction> {
        let spec = spec.trim();
        let (name, params) = match spec.split_once(':') {
            Some((n, p)) => (n.trim(), p.trim()),
            None => (spec, ""),
        };
        let mut pairs = Vec::new();
        for item in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("signal parameter `{item}` is not key=value")))?;
            pairs.push((key.trim().to_ascii_lowercase(), value.trim().to_string()));
        }
        let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let gain = || -> Result<f64> {
            let v = get("k").ok_or_else(|| Error::Config(format!("signal `{spec}` needs K=<gain>")))?;
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad gain `{v}` in signal `{spec}`")))
        };
        let mut s = match name {
            "tanh" => SignalFunction::tanh_gain(gain()?)?,
            "clip" => SignalFunction::clip_linear(gain()?)?,
            "sinestair" => SignalFunction::sine_staircase(),
            "pwl" => {
                let file = get("file")
                    .ok_or_else(|| Error::Config(format!("signal `{spec}` needs file=<path>")))?;
                SignalFunction::read_piecewise_linear(file)?
            }
            other => return Err(Error::Config(format!("unknown signal family `{other}`"))),
        };
        s.spec = spec.to_string();
        Ok(s)
    }

    /// Reads a JSON array of `[x, y]` pairs.
    pub fn read_piecewise_linear(path: impl AsRef<Path>) -> Result<SignalFunction> {
        let text = std::fs::read_to_string(path)?;
        let points: Vec<(f64, f64)> = serde_json::from_str(&text)?;
        SignalFunction::piecewise_linear(points)
    }

    /// Same family at another gain. Only the tanh and clip families carry a gain.
    pub fn with_gain(&self, k: f64) -> Result<SignalFunction> {
        match self.family {
            Family::TanhGain { .. } => SignalFunction::tanh_gain(k),
            Family::ClipLinear { .. } => SignalFunction::clip_linear(k),
            _ => Err(Error::Config(format!(
                "signal `{}` has no adjustable gain",
                self.spec
            ))),
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz_k
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match &self.family {
            Family::TanhGain { k } => (k * x).tanh(),
            Family::ClipLinear { k } => (k * x).clamp(-1.0, 1.0),
            Family::PiecewiseLinear { points } => pwl_eval(points, x.clamp(-1.0, 1.0)),
            Family::SineStaircase => {
                let x = x.clamp(-1.0, 1.0);
                x + (2.0 * std::f64::consts::PI * x).sin().abs() / (2.0 * std::f64::consts::PI)
            }
            Family::Custom { eval, .. } => eval(x),
        }
    }

    pub fn evaluate_vec(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.evaluate(v)).collect()
    }

    pub fn has_slope(&self) -> bool {
        !matches!(&self.family, Family::Custom { slope: None, .. })
    }

    /// Derivative, or the larger one-sided derivative at a kink. `None` for
    /// custom functions without a slope.
    pub fn slope(&self, x: f64) -> Option<f64> {
        let kink = |c: f64| (x - c).abs() <= 1e-12 * (1.0 + c.abs());
        Some(match &self.family {
            Family::TanhGain { k } => {
                let t = (k * x).tanh();
                k * (1.0 - t * t)
            }
            Family::ClipLinear { k } => {
                let edge = 1.0 / k;
                if x.abs() < edge || kink(edge) || kink(-edge) {
                    *k
                } else {
                    0.0
                }
            }
            Family::PiecewiseLinear { points } => {
                let x = x.clamp(-1.0, 1.0);
                let slopes: Vec<f64> = points
                    .windows(2)
                    .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                    .collect();
                let mut best: Option<f64> = None;
                for (i, w) in points.windows(2).enumerate() {
                    if (x >= w[0].0 || kink(w[0].0)) && (x <= w[1].0 || kink(w[1].0)) {
                        best = Some(best.map_or(slopes[i], |b: f64| b.max(slopes[i])));
                    }
                }
                best.unwrap_or(0.0)
            }
            Family::SineStaircase => {
                let two_pi = 2.0 * std::f64::consts::PI;
                if kink(1.0) || x > 1.0 {
                    0.0
                } else if self.kinks().iter().any(|&c| kink(c)) {
                    2.0
                } else {
                    let arg = two_pi * x;
                    1.0 + arg.cos() * arg.sin().signum()
                }
            }
            Family::Custom { slope, .. } => return slope.as_ref().map(|f| f(x)),
        })
    }

    /// Points where the slope jumps.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.family {
            Family::TanhGain { .. } | Family::Custom { .. } => Vec::new(),
            Family::ClipLinear { k } => {
                if 1.0 / k <= 1.0 {
                    vec![-1.0 / k, 1.0 / k]
                } else {
                    Vec::new()
                }
            }
            Family::PiecewiseLinear { points } => points[1..points.len() - 1]
                .iter()
                .map(|p| p.0)
                .collect(),
            Family::SineStaircase => vec![-1.0, -0.5, 0.0, 0.5, 1.0],
        }
    }

    /// Distance from `x` to the nearest kink, infinite for smooth families.
    pub fn kink_distance(&self, x: f64) -> f64 {
        self.kinks()
            .iter()
            .map(|c| (x - c).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks `|s(-x) + s(x)| < 1e-10` on the validation grid.
    pub fn check_odd(&self) -> Result<()> {
        for x in grid(VALIDATION_GRID) {
            let gap = (self.evaluate(-x) + self.evaluate(x)).abs();
            if gap >= 1e-10 {
                return Err(Error::NotOdd { x, gap });
            }
        }
        Ok(())
    }
}

fn pwl_eval(points: &[(f64, f64)], x: f64) -> f64 {
    let idx = points.partition_point(|p| p.0 <= x);
    if idx == 0 {
        return points[0].1;
    }
    if idx >= points.len() {
        return points[points.len() - 1].1;
    }
    let (xa, ya) = points[idx - 1];
    let (xb, yb) = points[idx];
    ya + (yb - ya) * (x - xa) / (xb - xa)
}

/// `count` uniform points from -1 to 1 inclusive.
fn grid(count: usize) -> impl Iterator<Item = f64> {
    let steps = (count - 1) as f64;
    (0..count).map(move |k| -1.0 + 2.0 * k as f64 / steps)
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub range_ok: bool,
    pub monotone_ok: bool,
    pub lipschitz_ok: bool,
    pub passed: bool,
    /// Largest difference quotient seen on the grid.
    pub estimated_lipschitz: f64,
    /// `x (s(x) - x) <= 0` on the whole grid.
    pub underestimation: bool,
    /// `x (s(x) - x) >= 0` on the whole grid.
    pub overestimation: bool,
    pub failures: Vec<String>,
}

pub fn validate_assumptions(s: &SignalFunction) -> ValidationReport {
    let xs: Vec<f64> = grid(VALIDATION_GRID).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| s.evaluate(x)).collect();
    let k = s.lipschitz();
    let mut failures = Vec::new();

    let range_bad = xs
        .iter()
        .zip(&ys)
        .find(|(_, y)| !(-1.0..=1.0).contains(*y) || !y.is_finite());
    if let Some((x, y)) = range_bad {
        failures.push(format!("s({x}) = {y} outside [-1, 1]"));
    }

    let mut monotone_ok = true;
    let mut lipschitz_ok = true;
    let mut estimated_lipschitz: f64 = 0.0;
    for i in 0..xs.len() - 1 {
        let dx = xs[i + 1] - xs[i];
        let dy = ys[i + 1] - ys[i];
        estimated_lipschitz = estimated_lipschitz.max(dy.abs() / dx);
        if monotone_ok && ys[i + 1] < ys[i] - 1e-12 {
            monotone_ok = false;
            failures.push(format!("decreasing between x = {} and {}", xs[i], xs[i + 1]));
        }
        if lipschitz_ok && dy.abs() > k * dx * (1.0 + 1e-9) {
            lipschitz_ok = false;
            failures.push(format!(
                "difference quotient {} exceeds declared K = {k} near x = {}",
                dy.abs() / dx,
                xs[i]
            ));
        }
    }

    let products: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x * (y - x)).collect();
    let range_ok = range_bad.is_none();
    ValidationReport {
        range_ok,
        monotone_ok,
        lipschitz_ok,
        passed: range_ok && monotone_ok && lipschitz_ok,
        estimated_lipschitz,
        underestimation: products.iter().all(|&p| p <= 1e-12),
        overestimation: products.iter().all(|&p| p >= -1e-12),
        failures,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointClass {
    Stable,
    Unstable,
    SemiStable,
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointRecord {
    /// The fixed point, or the lower end of a continuum.
    pub value: f64,
    /// `(lo, hi)` when the record is a continuum of fixed points.
    pub interval: Option<(f64, f64)>,
    pub left_stable: bool,
    pub right_stable: bool,
    pub classification: FixedPointClass,
    pub in_left_unstable_set: bool,
    pub in_right_unstable_set: bool,
}

impl FixedPointRecord {
    pub fn lo(&self) -> f64 {
        self.value
    }

    pub fn hi(&self) -> f64 {
        self.interval.map_or(self.value, |(_, hi)| hi)
    }

    pub fn is_stable(&self) -> bool {
        self.classification == FixedPointClass::Stable
    }

    pub fn contains(&self, c: f64, tol: f64) -> bool {
        c >= self.lo() - tol && c <= self.hi() + tol
    }

    /// Representative points: the value itself, or both ends of a continuum.
    pub fn representatives(&self) -> Vec<f64> {
        match self.interval {
            Some((lo, hi)) => vec![lo, hi],
            None => vec![self.value],
        }
    }
}

/// All fixed points of `s`, ascending.
///
/// Sign changes of `g(x) = s(x) - x` on a grid of step 1e-3 are refined by
/// bisection. Runs of two or more grid points with `|g| < 1e-12` become
/// continuum records. Local minima of `|g|` without a sign change are
/// refined by golden-section search to catch tangential fixed points.
pub fn find_fixed_points(s: &SignalFunction) -> Result<Vec<FixedPointRecord>> {
    let report = validate_assumptions(s);
    if !report.passed {
        return Err(Error::AssumptionViolation(report.failures.join("; ")));
    }
    let spans = locate(s);
    Ok((0..spans.len()).map(|i| classify_span(s, &spans, i)).collect())
}

/// Classifies a single fixed point `c` of `s`.
pub fn classify_fixed_point(s: &SignalFunction, c: f64) -> Result<FixedPointRecord> {
    let gap = (s.evaluate(c) - c).abs();
    if gap >= FIXED_POINT_TOL || !(-1.0..=1.0).contains(&c) {
        return Err(Error::NotAFixedPoint { value: c, gap });
    }
    let mut spans = locate(s);
    let idx = match spans.iter().position(|&(lo, hi)| c >= lo - 1e-9 && c <= hi + 1e-9) {
        Some(i) => {
            let (lo, hi) = spans[i];
            if hi > lo && c > lo + 1e-9 && c < hi - 1e-9 {
                // interior of a continuum: fixed points on both sides arbitrarily close
                return Ok(record(c, None, true, true));
            }
            if hi == lo {
                spans[i] = (c, c);
            }
            i
        }
        None => {
            let i = spans.partition_point(|&(lo, _)| lo < c);
            spans.insert(i, (c, c));
            i
        }
    };
    let mut rec = classify_span(s, &spans, idx);
    if rec.interval.is_none() {
        rec.value = c;
    }
    Ok(rec)
}

fn record(value: f64, interval: Option<(f64, f64)>, left: bool, right: bool) -> FixedPointRecord {
    let classification = match (left, right) {
        (true, true) => FixedPointClass::Stable,
        (false, false) => FixedPointClass::Unstable,
        _ => FixedPointClass::SemiStable,
    };
    FixedPointRecord {
        value,
        interval,
        left_stable: left,
        right_stable: right,
        classification,
        in_left_unstable_set: !left,
        in_right_unstable_set: !right,
    }
}

fn classify_span(s: &SignalFunction, spans: &[(f64, f64)], i: usize) -> FixedPointRecord {
    let (lo, hi) = spans[i];
    let prev = if i > 0 { spans[i - 1].1 } else { f64::NEG_INFINITY };
    let next = spans.get(i + 1).map_or(f64::INFINITY, |sp| sp.0);
    let g = |x: f64| s.evaluate(x) - x;

    // A side is unstable iff every admissible probe on it is repelling.
    let side_unstable = |c: f64, dir: f64, bound: f64| {
        let mut probed = false;
        let mut last = f64::NAN;
        for d in PROBE_LADDER {
            let x = (c + dir * d).clamp(-1.0, 1.0);
            let inside = if dir < 0.0 { x > bound && x < c } else { x < bound && x > c };
            if !inside || x == last {
                continue;
            }
            last = x;
            probed = true;
            if g(x) * dir <= 0.0 {
                return false;
            }
        }
        probed
    };

    let left_stable = lo <= -1.0 || !side_unstable(lo, -1.0, prev);
    let right_stable = hi >= 1.0 || !side_unstable(hi, 1.0, next);
    let interval = (hi > lo).then_some((lo, hi));
    record(lo, interval, left_stable, right_stable)
}

// Fixed-point spans (lo, hi), ascending; lo == hi for isolated points.
fn locate(s: &SignalFunction) -> Vec<(f64, f64)> {
    let n = (2.0 / SEARCH_STEP).round() as usize;
    let xs: Vec<f64> = (0..=n).map(|k| (2.0 * k as f64 - n as f64) / n as f64).collect();
    let g = |x: f64| s.evaluate(x) - x;
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let zero = |v: f64| v.abs() < PLATEAU_TOL;

    let mut spans: Vec<(f64, f64)> = Vec::new();
    let mut k = 0;
    while k <= n {
        if zero(gs[k]) {
            let start = k;
            while k < n && zero(gs[k + 1]) {
                k += 1;
            }
            spans.push((xs[start], xs[k]));
        } else if k < n && !zero(gs[k + 1]) && gs[k].signum() != gs[k + 1].signum() {
            spans.push(bisect(&g, xs[k], xs[k + 1], gs[k]));
        }
        k += 1;
    }

    // tangential touches between grid points
    for k in 1..n {
        let (a, b, c) = (gs[k - 1], gs[k], gs[k + 1]);
        if zero(a) || zero(b) || zero(c) || a.signum() != b.signum() || b.signum() != c.signum() {
            continue;
        }
        if b.abs() <= a.abs() && b.abs() <= c.abs() && b.abs() < 1e-2 {
            let x = golden_min(|x| g(x).abs(), xs[k - 1], xs[k + 1]);
            if g(x).abs() < PLATEAU_TOL {
                spans.push((x, x));
            }
        }
    }

    spans.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for sp in spans {
        match merged.last_mut() {
            Some(last) if sp.0 <= last.1 + 1e-9 => last.1 = last.1.max(sp.1),
            _ => merged.push(sp),
        }
    }
    merged
}

// Bisects down to adjacent floats, well below the 1e-12 bracket width, so
// that steep segments still meet the fixed-point tolerance.
fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64) -> (f64, f64) {
    loop {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return (m, m);
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    let root = if g(a).abs() <= g(b).abs() { a } else { b };
    (root, root)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a < 1e-15 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

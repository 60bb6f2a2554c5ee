//! RK4 integration of `x' = D^-1 A s(x) - x` with per-sample diagnostics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::signal::{SignalFunction, FIXED_POINT_TOL};

/// Residual below which a recorded sample counts as stationary.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;
/// Consecutive stationary samples that end an integration early.
pub const EQUILIBRIUM_SAMPLES: usize = 10;
/// Slack allowed outside `[-1, 1]` before clamping.
pub const STATE_SPACE_TOL: f64 = 1e-9;
const ORDER_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSettings {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        IntegrationSettings {
            dt: 0.01,
            t_end: 200.0,
            record_every: 10,
        }
    }
}

impl IntegrationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidSettings(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::InvalidSettings(format!(
                "t_end must be at least dt, got {}",
                self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidSettings("record_every must be at least 1".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Recorded states, clamped to `[-1, 1]`.
    pub states: Vec<Vec<f64>>,
    /// `||D^-1 A s(x) - x||_inf` per sample.
    pub residuals: Vec<f64>,
    /// `||x - xbar 1||_D` per sample, `xbar` the degree-weighted mean.
    pub disagreement: Vec<f64>,
    /// True when the run stopped early on the stationarity test.
    pub converged: bool,
    /// Largest distance outside `[-1, 1]` seen before clamping.
    pub max_excursion: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least the initial sample")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Writes `t,x_0,...,x_{N-1},residual,disagreement`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x_{i}")));
        header.push("residual".into());
        header.push("disagreement".into());
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![format!("{}", self.times[k])];
            row.extend(self.states[k].iter().map(|v| format!("{v}")));
            row.push(format!("{}", self.residuals[k]));
            row.push(format!("{}", self.disagreement[k]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_dim(g: &Graph, x: &[f64]) -> Result<()> {
    if x.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            got: x.len(),
        });
    }
    Ok(())
}

fn check_state_space(x: &[f64]) -> Result<()> {
    match x
        .iter()
        .position(|v| !(v.abs() <= 1.0 + STATE_SPACE_TOL))
    {
        Some(index) => Err(Error::OutOfStateSpace {
            index,
            value: x[index],
        }),
        None => Ok(()),
    }
}

fn rhs_into(g: &Graph, s: &SignalFunction, x: &[f64], sx: &mut [f64], out: &mut [f64]) {
    for (v, &xi) in sx.iter_mut().zip(x) {
        *v = s.evaluate(xi);
    }
    for i in 0..x.len() {
        let nbrs = g.neighbors(i);
        let sum: f64 = nbrs.iter().map(|&j| sx[j]).sum();
        out[i] = sum / nbrs.len() as f64 - x[i];
    }
}

/// `(D^-1 A s(x) - x)_i = (1/d_i) sum_j a_ij s(x_j) - x_i`.
pub fn rhs(g: &Graph, s: &SignalFunction, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(g, x)?;
    let mut sx = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    rhs_into(g, s, x, &mut sx, &mut out);
    Ok(out)
}

/// `||D^-1 A s(x) - x||_inf`.
pub fn residual(g: &Graph, s: &SignalFunction, x: &[f64]) -> Result<f64> {
    Ok(crate::linalg::norm_inf(&rhs(g, s, x)?))
}

/// Degree-weighted mean `sum d_i x_i / sum d_i`.
pub fn center_of_mass(g: &Graph, x: &[f64]) -> f64 {
    let (num, den) = (0..g.n()).fold((0.0, 0.0), |(a, b), i| {
        let d = g.degree(i) as f64;
        (a + d * x[i], b + d)
    });
    num / den
}

/// `||e||_D = sqrt(sum d_i e_i^2)` with `e = x - xbar 1`.
pub fn disagreement(g: &Graph, x: &[f64]) -> f64 {
    let xbar = center_of_mass(g, x);
    (0..g.n())
        .map(|i| g.degree(i) as f64 * (x[i] - xbar).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Reusable RK4 stepper.
struct Rk4<'a> {
    g: &'a Graph,
    s: &'a SignalFunction,
    sx: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn new(g: &'a Graph, s: &'a SignalFunction) -> Self {
        let n = g.n();
        Rk4 {
            g,
            s,
            sx: vec![0.0; n],
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, x: &mut [f64], dt: f64) {
        let n = x.len();
        let [k1, k2, k3, k4] = &mut self.k;
        rhs_into(self.g, self.s, x, &mut self.sx, k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        rhs_into(self.g, self.s, &self.tmp, &mut self.sx, k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        rhs_into(self.g, self.s, &self.tmp, &mut self.sx, k3);
        for i in 0..n {
            self.tmp[i] = x[i] + dt * k3[i];
        }
        rhs_into(self.g, self.s, &self.tmp, &mut self.sx, k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    fn residual(&mut self, x: &[f64]) -> f64 {
        let mut out = std::mem::take(&mut self.tmp);
        rhs_into(self.g, self.s, x, &mut self.sx, &mut out);
        let r = crate::linalg::norm_inf(&out);
        self.tmp = out;
        r
    }
}

/// Fixed-step RK4 from `x0`. States are clamped to `[-1, 1]` only when
/// recorded; the run stops early once the residual stays below 1e-10 for 10
/// consecutive samples.
pub fn integrate(
    g: &Graph,
    s: &SignalFunction,
    x0: &[f64],
    settings: &IntegrationSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    check_dim(g, x0)?;
    check_state_space(x0)?;

    let mut rk = Rk4::new(g, s);
    let mut x = x0.to_vec();
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        residuals: Vec::new(),
        disagreement: Vec::new(),
        converged: false,
        max_excursion: 0.0,
    };
    let mut quiet = 0;
    let steps = settings.steps();

    let mut record = |x: &[f64], t: f64, rk: &mut Rk4, traj: &mut Trajectory| -> bool {
        let excursion = x.iter().fold(0.0_f64, |m, v| m.max(v.abs() - 1.0));
        traj.max_excursion = traj.max_excursion.max(excursion);
        let clamped: Vec<f64> = x.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let r = rk.residual(&clamped);
        traj.times.push(t);
        traj.residuals.push(r);
        traj.disagreement.push(disagreement(g, &clamped));
        traj.states.push(clamped);
        if r < EQUILIBRIUM_TOL {
            quiet += 1;
        } else {
            quiet = 0;
        }
        quiet >= EQUILIBRIUM_SAMPLES
    };

    record(&x, 0.0, &mut rk, &mut traj);
    for step in 1..=steps {
        rk.step(&mut x, settings.dt);
        let t = step as f64 * settings.dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(t));
        }
        if step % settings.record_every == 0 || step == steps {
            if record(&x, t, &mut rk, &mut traj) {
                traj.converged = true;
                break;
            }
        }
    }
    Ok(traj)
}

/// Integrates without recording until the residual drops below `tol` or
/// `t_max` elapses. Returns the clamped final state and its residual.
pub fn settle(
    g: &Graph,
    s: &SignalFunction,
    x0: &[f64],
    dt: f64,
    tol: f64,
    t_max: f64,
) -> Result<(Vec<f64>, f64)> {
    check_dim(g, x0)?;
    let mut rk = Rk4::new(g, s);
    let mut x = x0.to_vec();
    let steps = (t_max / dt).round() as usize;
    let mut r = rk.residual(&x);
    let mut step = 0;
    while r >= tol && step < steps {
        for _ in 0..10 {
            rk.step(&mut x, dt);
        }
        step += 10;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(step as f64 * dt));
        }
        x.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        r = rk.residual(&x);
    }
    Ok((x, r))
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderCheck {
    pub ordered: bool,
    pub first_violation: Option<f64>,
}

/// Integrates two ordered initial states in lockstep and checks that the
/// component-wise order survives every step within 1e-9.
pub fn check_order_preservation(
    g: &Graph,
    s: &SignalFunction,
    x0_low: &[f64],
    x0_high: &[f64],
    settings: &IntegrationSettings,
) -> Result<OrderCheck> {
    settings.validate()?;
    check_dim(g, x0_low)?;
    check_dim(g, x0_high)?;
    if let Some(i) = (0..g.n()).find(|&i| x0_low[i] > x0_high[i]) {
        return Err(Error::OrderPreconditionViolated(i));
    }
    let mut lo = x0_low.to_vec();
    let mut hi = x0_high.to_vec();
    let mut rk_lo = Rk4::new(g, s);
    let mut rk_hi = Rk4::new(g, s);
    for step in 1..=settings.steps() {
        rk_lo.step(&mut lo, settings.dt);
        rk_hi.step(&mut hi, settings.dt);
        if lo.iter().zip(&hi).any(|(a, b)| *a > *b + ORDER_TOL) {
            return Ok(OrderCheck {
                ordered: false,
                first_violation: Some(step as f64 * settings.dt),
            });
        }
    }
    Ok(OrderCheck {
        ordered: true,
        first_violation: None,
    })
}

/// True iff every recorded sample stays in `[a, b]^N` within 1e-9.
///
/// Requires `s(a) >= a`, `s(b) <= b` (to the fixed-point tolerance 1e-10) and
/// an initial state inside the box.
pub fn check_hypercube_invariance(traj: &Trajectory, s: &SignalFunction, a: f64, b: f64) -> Result<bool> {
    if s.evaluate(a) < a - FIXED_POINT_TOL {
        return Err(Error::PreconditionNotChecked(format!("s({a}) < {a}")));
    }
    if s.evaluate(b) > b + FIXED_POINT_TOL {
        return Err(Error::PreconditionNotChecked(format!("s({b}) > {b}")));
    }
    let inside = |x: &[f64]| {
        x.iter()
            .all(|&v| v >= a - STATE_SPACE_TOL && v <= b + STATE_SPACE_TOL)
    };
    match traj.states.first() {
        Some(x0) if inside(x0) => Ok(traj.states.iter().all(|x| inside(x))),
        _ => Err(Error::PreconditionNotChecked(format!(
            "initial state outside [{a}, {b}]^N"
        ))),
    }
}

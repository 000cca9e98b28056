//! Fixed-step method-of-steps integration of the delayed system with cubic
//! dense output.
//!
//! The mesh step is `h = tau / steps_per_delay`, so every propagated breaking
//! point `t = j*tau` (where the solution gains one degree of smoothness)
//! lands exactly on a mesh node and no step integrates across a kink. States
//! advance with the classical fourth-order scheme; delayed values at stage
//! times come from cubic value-derivative interpolation on the already
//! completed part of the mesh, which is always at least three steps in the
//! past because `h <= tau/4`. For `tau = 0` the system degenerates to an ODE
//! and is stepped with `dt`.

use crate::model::{proliferating_series, History, ModelParams};
use crate::{Error, Result};

/// Default mesh resolution per delay interval.
pub const DEFAULT_STEPS_PER_DELAY: usize = 128;
/// Default integration horizon (days); long enough for the slow transients of
/// the model at its day-scale rates.
pub const DEFAULT_T_END: f64 = 1500.0;
/// Default step for the `tau = 0` ordinary system.
pub const DEFAULT_ODE_DT: f64 = 0.05;
/// States above this magnitude abort integration; the model is dissipative,
/// so reaching it signals a bug or inadmissible inputs.
pub const BLOWUP_LIMIT: f64 = 1e12;
/// Roundoff-scale negativity is clamped to zero; anything below is an error.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-12;

/// Integration settings. `steps_per_delay` applies when `tau > 0` (at least
/// 4 so delayed stage lookups stay in the completed past); `dt` applies when
/// `tau = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub steps_per_delay: usize,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            steps_per_delay: DEFAULT_STEPS_PER_DELAY,
            t_end: DEFAULT_T_END,
            dt: DEFAULT_ODE_DT,
        }
    }
}

impl SolverConfig {
    fn validate(&self, tau: f64) -> Result<()> {
        if self.t_end <= 0.0 || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if tau > 0.0 && self.steps_per_delay < 4 {
            return Err(Error::Config(format!(
                "steps_per_delay must be at least 4, got {}",
                self.steps_per_delay
            )));
        }
        if tau == 0.0 && (self.dt <= 0.0 || !self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Dense-output solution on a uniform mesh starting at `t = 0`, with the node
/// derivatives stored for cubic interpolation and the generating history kept
/// for lookups on `[-tau, 0]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: ModelParams,
    history: History,
    h: f64,
    states: Vec<(f64, f64)>,
    derivs: Vec<(f64, f64)>,
}

impl Trajectory {
    /// Assembles a trajectory from raw mesh data (`states[i]` and `derivs[i]`
    /// at `t = i*h`). Intended for post-processing tooling and tests; the
    /// integrator is the normal producer.
    pub fn from_parts(
        params: ModelParams,
        history: History,
        h: f64,
        states: Vec<(f64, f64)>,
        derivs: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if h <= 0.0 || !h.is_finite() {
            return Err(Error::Config(format!("mesh step must be > 0, got {h}")));
        }
        if states.len() < 2 || states.len() != derivs.len() {
            return Err(Error::Config(format!(
                "need at least 2 mesh nodes with matching derivatives, got {} states and {} derivatives",
                states.len(),
                derivs.len()
            )));
        }
        Ok(Self { params, history, h, states, derivs })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Mesh spacing (days).
    pub fn step(&self) -> f64 {
        self.h
    }

    /// Number of mesh nodes.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Final mesh time; at least the requested horizon.
    pub fn t_end(&self) -> f64 {
        (self.states.len() - 1) as f64 * self.h
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn state(&self, i: usize) -> (f64, f64) {
        self.states[i]
    }

    pub fn derivative(&self, i: usize) -> (f64, f64) {
        self.derivs[i]
    }

    pub fn states(&self) -> &[(f64, f64)] {
        &self.states
    }

    /// Dense output at `t` in `[-tau, t_end]`: history values for `t < 0`,
    /// exact node values at mesh points, cubic value-derivative interpolation
    /// between them.
    pub fn sample(&self, t: f64) -> Result<(f64, f64)> {
        let t_end = self.t_end();
        let lo = -self.params.tau();
        let slack = 1e-9 * (1.0 + t_end.abs());
        if t < lo - slack || t > t_end + slack {
            return Err(Error::Domain(format!(
                "sample time {t} outside [{lo}, {t_end}]"
            )));
        }
        if t < 0.0 {
            return Ok(self.history.eval(t.max(lo)));
        }
        let t = t.min(t_end);
        let i = ((t / self.h).floor() as usize).min(self.states.len() - 2);
        let u = ((t - i as f64 * self.h) / self.h).clamp(0.0, 1.0);
        Ok(hermite(self.states[i], self.derivs[i], self.states[i + 1], self.derivs[i + 1], self.h, u))
    }

    /// Proliferating-compartment series `P(t_i) = S(t_i) - N(t_i)`.
    pub fn proliferating(&self) -> Vec<f64> {
        let s: Vec<f64> = self.states.iter().map(|v| v.0).collect();
        let n: Vec<f64> = self.states.iter().map(|v| v.1).collect();
        proliferating_series(&s, &n)
    }
}

fn hermite(
    y0: (f64, f64),
    d0: (f64, f64),
    y1: (f64, f64),
    d1: (f64, f64),
    h: f64,
    u: f64,
) -> (f64, f64) {
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    (
        h00 * y0.0 + h10 * h * d0.0 + h01 * y1.0 + h11 * h * d1.0,
        h00 * y0.1 + h10 * h * d0.1 + h01 * y1.1 + h11 * h * d1.1,
    )
}

/// Integrates the delayed system from the given history. The history must be
/// defined on `[-tau, 0]` and nonnegative; the solution then stays
/// nonnegative up to roundoff, which the integrator clamps to zero.
pub fn integrate(params: &ModelParams, history: &History, config: &SolverConfig) -> Result<Trajectory> {
    config.validate(params.tau())?;
    if !history.covers(-params.tau()) {
        return Err(Error::Config(format!(
            "history does not cover the delay window [-{}, 0]",
            params.tau()
        )));
    }
    if params.tau() == 0.0 {
        integrate_ode(params, history, config)
    } else {
        integrate_dde(params, history, config)
    }
}

fn integrate_dde(params: &ModelParams, history: &History, config: &SolverConfig) -> Result<Trajectory> {
    let tau = params.tau();
    let m = config.steps_per_delay;
    let h = tau / m as f64;
    let n_steps = ((config.t_end / h).ceil() as usize).max(1);

    let mut states: Vec<(f64, f64)> = Vec::with_capacity(n_steps + 1);
    let mut derivs: Vec<(f64, f64)> = Vec::with_capacity(n_steps + 1);

    let y0 = guard_state(history.eval(0.0), 0.0)?;
    states.push(y0);
    derivs.push(params.rhs(y0, history.eval(-tau)));

    for i in 0..n_steps {
        let t = i as f64 * h;
        let y = states[i];
        let lag = i as isize - m as isize;

        // Delayed lookups: node values at integer offsets, cubic dense output
        // at the half-step. Everything referenced is at least 3 steps old.
        let at_node = |idx: isize| -> (f64, f64) {
            if idx < 0 {
                history.eval((idx as f64 * h).max(-tau))
            } else {
                states[idx as usize]
            }
        };
        let at_half = |idx: isize| -> (f64, f64) {
            if idx < 0 {
                history.eval(((idx as f64 + 0.5) * h).max(-tau))
            } else {
                let i = idx as usize;
                hermite(states[i], derivs[i], states[i + 1], derivs[i + 1], h, 0.5)
            }
        };

        let d_start = clamp_state(at_node(lag), t)?;
        let d_half = clamp_state(at_half(lag), t)?;
        let d_end = clamp_state(at_node(lag + 1), t)?;

        let k1 = params.rhs(y, d_start);
        let k2 = params.rhs(clamp_state(advance(y, 0.5 * h, k1), t)?, d_half);
        let k3 = params.rhs(clamp_state(advance(y, 0.5 * h, k2), t)?, d_half);
        let k4 = params.rhs(clamp_state(advance(y, h, k3), t)?, d_end);

        let y_next = (
            y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        );
        let t_next = (i + 1) as f64 * h;
        let y_next = guard_state(y_next, t_next)?;
        let d_next = params.rhs(y_next, clamp_state(at_node(lag + 1), t_next)?);
        states.push(y_next);
        derivs.push(d_next);
    }

    Trajectory::from_parts(params.clone(), history.clone(), h, states, derivs)
}

fn integrate_ode(params: &ModelParams, history: &History, config: &SolverConfig) -> Result<Trajectory> {
    let n_steps = ((config.t_end / config.dt).ceil() as usize).max(1);
    let h = config.t_end / n_steps as f64;

    let mut states = Vec::with_capacity(n_steps + 1);
    let mut derivs = Vec::with_capacity(n_steps + 1);
    let f = |y: (f64, f64)| params.rhs(y, y);

    let y0 = guard_state(history.eval(0.0), 0.0)?;
    states.push(y0);
    derivs.push(f(y0));

    for i in 0..n_steps {
        let t = i as f64 * h;
        let y = states[i];
        let k1 = f(y);
        let k2 = f(clamp_state(advance(y, 0.5 * h, k1), t)?);
        let k3 = f(clamp_state(advance(y, 0.5 * h, k2), t)?);
        let k4 = f(clamp_state(advance(y, h, k3), t)?);
        let y_next = (
            y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        );
        let y_next = guard_state(y_next, (i + 1) as f64 * h)?;
        states.push(y_next);
        derivs.push(f(y_next));
    }

    Trajectory::from_parts(params.clone(), history.clone(), h, states, derivs)
}

fn advance(y: (f64, f64), w: f64, k: (f64, f64)) -> (f64, f64) {
    (y.0 + w * k.0, y.1 + w * k.1)
}

/// Clamp roundoff negativity before the state feeds the introduction rate.
fn clamp_state(y: (f64, f64), t: f64) -> Result<(f64, f64)> {
    Ok((clamp_pop(y.0, t)?, clamp_pop(y.1, t)?))
}

fn clamp_pop(x: f64, t: f64) -> Result<f64> {
    if x >= 0.0 {
        Ok(x)
    } else if x >= -NEGATIVITY_TOLERANCE {
        Ok(0.0)
    } else if x.is_nan() {
        Err(Error::Blowup { t })
    } else {
        Err(Error::NegativeState { t, value: x })
    }
}

/// Mesh-node guard: blow-up detection plus the negativity clamp.
fn guard_state(y: (f64, f64), t: f64) -> Result<(f64, f64)> {
    for x in [y.0, y.1] {
        if !x.is_finite() || x.abs() > BLOWUP_LIMIT {
            return Err(Error::Blowup { t });
        }
    }
    clamp_state(y, t)
}

/// Observed convergence order from a three-resolution self-comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservedOrder {
    Measured(f64),
    /// Errors at the probe point are at roundoff level (e.g. an equilibrium
    /// history), so no order can be extracted.
    NotMeasurable,
}

/// Integrates at the configured resolution and at 2x and 4x refinement,
/// compares the two coarser solutions against the finest at `t_probe`, and
/// returns the base-2 logarithm of the error ratio.
pub fn convergence_order(
    params: &ModelParams,
    history: &History,
    config: &SolverConfig,
    t_probe: f64,
) -> Result<ObservedOrder> {
    if t_probe <= 0.0 || !t_probe.is_finite() {
        return Err(Error::Config(format!("t_probe must be > 0, got {t_probe}")));
    }
    let run = |refine: usize| -> Result<(f64, f64)> {
        let cfg = SolverConfig {
            steps_per_delay: config.steps_per_delay * refine,
            t_end: t_probe,
            dt: config.dt / refine as f64,
        };
        integrate(params, history, &cfg)?.sample(t_probe)
    };
    let coarse = run(1)?;
    let mid = run(2)?;
    let fine = run(4)?;

    let dist = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs().max((a.1 - b.1).abs());
    let e_coarse = dist(coarse, fine);
    let e_mid = dist(mid, fine);
    let floor = 1e-13 * (1.0 + fine.0.abs().max(fine.1.abs()));
    if e_mid <= floor || e_coarse <= floor {
        return Ok(ObservedOrder::NotMeasurable);
    }
    Ok(ObservedOrder::Measured((e_coarse / e_mid).log2()))
}

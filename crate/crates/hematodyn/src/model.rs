//! Model definition: introduction rate, parameters, steady states, initial
//! histories, and recovery of the proliferating compartment.
//!
//! The delayed system for the total population `S` and the nonproliferating
//! population `N` is
//!
//! ```text
//! S'(t) = -delta * S(t) + exp(-delta*tau) * beta(S(t-tau)) * N(t-tau)
//! N'(t) = -delta * N(t) - beta(S(t)) * N(t) + 2 * exp(-delta*tau) * beta(S(t-tau)) * N(t-tau)
//! ```
//!
//! with the proliferating population recovered as `P = S - N`.

use std::fmt;
use std::sync::Arc;

use crate::numeric::bisect;
use crate::{Error, Result};

/// Default node count for the history-condition quadrature.
pub const DEFAULT_QUAD_POINTS: usize = 256;

/// Hill-type introduction rate `beta(S) = beta0 * theta^n / (theta^n + S^n)`.
///
/// `beta0` is the maximal rate, `theta` the population at which the rate
/// halves, and `n` the sensitivity exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillBeta {
    beta0: f64,
    theta: f64,
    n: f64,
}

impl HillBeta {
    /// Requires `beta0 >= 0`, `theta > 0` and `n > 1`. `theta = 0` is
    /// rejected because it makes the rate identically zero. `beta0 = 0` is
    /// accepted but leaves only the degenerate dynamics without influx; the
    /// steady-state machinery then reports absence.
    pub fn new(beta0: f64, theta: f64, n: f64) -> Result<Self> {
        if beta0 < 0.0 || !beta0.is_finite() {
            return Err(Error::Config(format!("beta0 must be >= 0, got {beta0}")));
        }
        if theta <= 0.0 || !theta.is_finite() {
            return Err(Error::Config(format!("theta must be > 0, got {theta}")));
        }
        if n <= 1.0 || !n.is_finite() {
            return Err(Error::Config(format!("n must be > 1, got {n}")));
        }
        Ok(Self { beta0, theta, n })
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    fn eval(&self, s: f64) -> f64 {
        let tn = self.theta.powf(self.n);
        self.beta0 * tn / (tn + s.powf(self.n))
    }

    fn derivative(&self, s: f64) -> f64 {
        let tn = self.theta.powf(self.n);
        let sn = s.powf(self.n);
        -self.beta0 * tn * self.n * s.powf(self.n - 1.0) / ((tn + sn) * (tn + sn))
    }

    fn second_derivative(&self, s: f64) -> f64 {
        let tn = self.theta.powf(self.n);
        let sn = s.powf(self.n);
        let denom = (tn + sn).powi(3);
        -self.beta0 * tn * self.n * s.powf(self.n - 2.0) * ((self.n - 1.0) * tn - (self.n + 1.0) * sn)
            / denom
    }

    /// Closed-form inverse `theta * (beta0/x - 1)^(1/n)` on `(0, beta0]`.
    fn inv(&self, x: f64) -> f64 {
        self.theta * (self.beta0 / x - 1.0).max(0.0).powf(1.0 / self.n)
    }
}

type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Caller-supplied introduction rate given by value, first and second
/// derivative callbacks. The value must be continuous, positive and strictly
/// decreasing on `[0, inf)` with limit 0; the caller is responsible for
/// supplying consistent derivatives (the characteristic-equation coefficient
/// derivatives depend on both).
#[derive(Clone)]
pub struct GenericBeta {
    value: RateFn,
    derivative: RateFn,
    second_derivative: RateFn,
}

impl GenericBeta {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        second_derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            second_derivative: Arc::new(second_derivative),
        }
    }
}

impl fmt::Debug for GenericBeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("GenericBeta { .. }")
    }
}

/// The introduction rate `beta`: positive, strictly decreasing, vanishing at
/// infinity, together with its first two derivatives.
#[derive(Debug, Clone)]
pub enum BetaRate {
    Hill(HillBeta),
    Generic(GenericBeta),
}

impl BetaRate {
    pub fn hill(beta0: f64, theta: f64, n: f64) -> Result<Self> {
        Ok(Self::Hill(HillBeta::new(beta0, theta, n)?))
    }

    pub fn generic(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        second_derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::Generic(GenericBeta::new(value, derivative, second_derivative))
    }

    /// `beta(S)`. Domain error for `S < 0` (or NaN).
    pub fn eval(&self, s: f64) -> Result<f64> {
        self.check_population(s)?;
        Ok(self.eval_raw(s))
    }

    /// `beta'(S)`. Domain error for `S < 0`.
    pub fn derivative(&self, s: f64) -> Result<f64> {
        self.check_population(s)?;
        Ok(self.derivative_raw(s))
    }

    /// `beta''(S)`. Domain error for `S < 0`.
    pub fn second_derivative(&self, s: f64) -> Result<f64> {
        self.check_population(s)?;
        Ok(match self {
            Self::Hill(h) => h.second_derivative(s),
            Self::Generic(g) => (g.second_derivative)(s),
        })
    }

    /// `beta(0)`, the supremum of the rate.
    pub fn at_zero(&self) -> f64 {
        match self {
            Self::Hill(h) => h.beta0,
            Self::Generic(g) => (g.value)(0.0),
        }
    }

    /// The unique `S >= 0` with `beta(S) = x`, for `0 < x <= beta(0)`.
    ///
    /// The Hill variant uses the closed form; the generic variant brackets by
    /// doubling and bisects (the rate is strictly decreasing).
    pub fn inv(&self, x: f64) -> Result<f64> {
        let b0 = self.at_zero();
        if x.is_nan() || x <= 0.0 {
            return Err(Error::Domain(format!(
                "beta inverse requires 0 < x <= beta(0); got x = {x}"
            )));
        }
        if x > b0 * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "beta inverse requires x <= beta(0) = {b0}; got x = {x}"
            )));
        }
        match self {
            Self::Hill(h) => Ok(h.inv(x.min(b0))),
            Self::Generic(_) => {
                let x = x.min(b0);
                if x == b0 {
                    return Ok(0.0);
                }
                // Decreasing rate: expand [0, hi] until beta(hi) < x.
                let mut hi = 1.0;
                let mut doublings = 0;
                while self.eval_raw(hi) >= x {
                    hi *= 2.0;
                    doublings += 1;
                    if doublings > 1024 {
                        return Err(Error::Domain(format!(
                            "could not bracket beta inverse for x = {x}; beta may not vanish at infinity"
                        )));
                    }
                }
                let f = |s: f64| self.eval_raw(s) - x;
                let tol = 1e-15 * hi.max(1.0);
                Ok(bisect(0.0, hi, b0 - x, tol, f))
            }
        }
    }

    pub(crate) fn eval_raw(&self, s: f64) -> f64 {
        match self {
            Self::Hill(h) => h.eval(s),
            Self::Generic(g) => (g.value)(s),
        }
    }

    pub(crate) fn derivative_raw(&self, s: f64) -> f64 {
        match self {
            Self::Hill(h) => h.derivative(s),
            Self::Generic(g) => (g.derivative)(s),
        }
    }

    fn check_population(&self, s: f64) -> Result<()> {
        if s >= 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "introduction rate is defined on [0, inf); got S = {s}"
            )))
        }
    }
}

/// Steady state of the delayed system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyState {
    /// Extinction equilibrium `(0, 0)`; always exists.
    Trivial,
    /// The unique positive equilibrium, when it exists.
    Positive { s: f64, n: f64 },
}

impl SteadyState {
    pub fn s(&self) -> f64 {
        match self {
            Self::Trivial => 0.0,
            Self::Positive { s, .. } => *s,
        }
    }

    pub fn n(&self) -> f64 {
        match self {
            Self::Trivial => 0.0,
            Self::Positive { n, .. } => *n,
        }
    }

    pub fn is_trivial(&self) -> bool {
        matches!(self, Self::Trivial)
    }
}

/// Death rate `delta` (1/day), cell-cycle delay `tau` (days), and the
/// introduction rate. Both compartments die at the same rate.
#[derive(Debug, Clone)]
pub struct ModelParams {
    delta: f64,
    tau: f64,
    beta: BetaRate,
}

impl ModelParams {
    pub fn new(delta: f64, tau: f64, beta: BetaRate) -> Result<Self> {
        if delta <= 0.0 || !delta.is_finite() {
            return Err(Error::Config(format!("delta must be > 0, got {delta}")));
        }
        if tau < 0.0 || !tau.is_finite() {
            return Err(Error::Config(format!("tau must be >= 0, got {tau}")));
        }
        Ok(Self { delta, tau, beta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn beta(&self) -> &BetaRate {
        &self.beta
    }

    /// Same parameters with a different delay.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.delta, tau, self.beta.clone())
    }

    /// Fraction of proliferating cells surviving the cycle, `exp(-delta*tau)`.
    pub fn survival(&self) -> f64 {
        (-self.delta * self.tau).exp()
    }

    /// Net offspring factor `2*exp(-delta*tau) - 1`: each cell entering the
    /// proliferating phase returns two survivors in expectation, minus the one
    /// that left the nonproliferating pool.
    pub fn net_renewal_factor(&self) -> f64 {
        2.0 * self.survival() - 1.0
    }

    /// Right-hand side of the delayed system at `current = (S, N)` with
    /// delayed values `delayed = (S(t-tau), N(t-tau))`. All populations are
    /// assumed nonnegative.
    pub fn rhs(&self, current: (f64, f64), delayed: (f64, f64)) -> (f64, f64) {
        let (s, n) = current;
        let (s_lag, n_lag) = delayed;
        let influx = self.survival() * self.beta.eval_raw(s_lag) * n_lag;
        let ds = -self.delta * s + influx;
        let dn = -self.delta * n - self.beta.eval_raw(s) * n + 2.0 * influx;
        (ds, dn)
    }

    /// The positive steady state `(S*, N*)`, or `None` when
    /// `(2*exp(-delta*tau) - 1) * beta(0) <= delta` (only the trivial steady
    /// state exists). `S*` solves `(2*exp(-delta*tau) - 1) * beta(S*) = delta`
    /// and `N* = (2*exp(-delta*tau) - 1) * exp(delta*tau) * S*`.
    pub fn steady_positive(&self) -> Option<SteadyState> {
        let g = self.net_renewal_factor();
        if g * self.beta.at_zero() <= self.delta {
            return None;
        }
        let s = self.beta.inv(self.delta / g).ok()?;
        let n = g * (self.delta * self.tau).exp() * s;
        Some(SteadyState::Positive { s, n })
    }

    /// The delay threshold above which the positive steady state ceases to
    /// exist: `(1/delta) * ln(2*beta(0) / (delta + beta(0)))`. Returns `None`
    /// when `delta >= beta(0)`, in which case no delay admits a positive
    /// steady state.
    pub fn existence_threshold_tau_bar(&self) -> Option<f64> {
        let b0 = self.beta.at_zero();
        if self.delta >= b0 {
            return None;
        }
        Some((2.0 * b0 / (self.delta + b0)).ln() / self.delta)
    }

    /// Composite-trapezoid value of
    /// `int_{-tau}^{0} exp(delta*theta) * beta(S(theta)) * N(theta) dtheta`
    /// on `quad_points` nodes: the cohort introduced during the history window
    /// that is still proliferating at `t = 0`.
    pub fn proliferating_history_integral(
        &self,
        history: &History,
        quad_points: usize,
    ) -> Result<f64> {
        if quad_points < 2 {
            return Err(Error::Config(format!(
                "quadrature needs at least 2 nodes, got {quad_points}"
            )));
        }
        if self.tau == 0.0 {
            return Ok(0.0);
        }
        let h = self.tau / (quad_points - 1) as f64;
        let mut sum = 0.0;
        for j in 0..quad_points {
            let theta = -self.tau + j as f64 * h;
            let (s, n) = history.eval(theta);
            let weight = if j == 0 || j == quad_points - 1 { 0.5 } else { 1.0 };
            sum += weight * (self.delta * theta).exp() * self.beta.eval_raw(s) * n;
        }
        Ok(sum * h)
    }

    /// Whether `S(0) >= N(0) + int_{-tau}^{0} exp(delta*theta) beta(S) N`,
    /// the condition under which the recovered proliferating population
    /// `P = S - N` stays nonnegative.
    pub fn proliferating_history_condition(
        &self,
        history: &History,
        quad_points: usize,
    ) -> Result<bool> {
        let integral = self.proliferating_history_integral(history, quad_points)?;
        let (s0, n0) = history.eval(0.0);
        Ok(s0 >= n0 + integral)
    }
}

/// Initial data on `[-tau, 0]`. Values must be nonnegative so that solutions
/// stay nonnegative.
#[derive(Debug, Clone)]
pub enum History {
    Constant { s: f64, n: f64 },
    /// Piecewise-linear interpolation of samples at strictly increasing
    /// times. Queries are clamped to the sampled range.
    Sampled {
        times: Vec<f64>,
        values: Vec<(f64, f64)>,
    },
}

impl History {
    pub fn constant(s: f64, n: f64) -> Result<Self> {
        if s < 0.0 || n < 0.0 || !s.is_finite() || !n.is_finite() {
            return Err(Error::Config(format!(
                "history values must be finite and nonnegative, got ({s}, {n})"
            )));
        }
        Ok(Self::Constant { s, n })
    }

    pub fn sampled(times: Vec<f64>, values: Vec<(f64, f64)>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::Config(format!(
                "sampled history needs matching times/values with at least 2 samples, got {} and {}",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::Config(
                "sampled history times must be strictly increasing".into(),
            ));
        }
        for (&t, &(s, n)) in times.iter().zip(&values) {
            if !t.is_finite() || !s.is_finite() || !n.is_finite() || s < 0.0 || n < 0.0 {
                return Err(Error::Config(format!(
                    "sampled history must be finite and nonnegative, got ({s}, {n}) at t = {t}"
                )));
            }
        }
        Ok(Self::Sampled { times, values })
    }

    /// `(S(theta), N(theta))`. Sampled histories clamp `theta` to the sampled
    /// range.
    pub fn eval(&self, theta: f64) -> (f64, f64) {
        match self {
            Self::Constant { s, n } => (*s, *n),
            Self::Sampled { times, values } => {
                let first = times[0];
                let last = *times.last().expect("nonempty");
                if theta <= first {
                    return values[0];
                }
                if theta >= last {
                    return *values.last().expect("nonempty");
                }
                let idx = match times.binary_search_by(|t| t.total_cmp(&theta)) {
                    Ok(i) => return values[i],
                    Err(i) => i - 1,
                };
                let (t0, t1) = (times[idx], times[idx + 1]);
                let w = (theta - t0) / (t1 - t0);
                let (s0, n0) = values[idx];
                let (s1, n1) = values[idx + 1];
                (s0 + w * (s1 - s0), n0 + w * (n1 - n0))
            }
        }
    }

    /// Whether the history is defined down to `lo <= 0` (sampled variants
    /// must cover the delay window; constants always do).
    pub(crate) fn covers(&self, lo: f64) -> bool {
        match self {
            Self::Constant { .. } => true,
            Self::Sampled { times, .. } => {
                let slack = 1e-9 * (1.0 + lo.abs());
                times[0] <= lo + slack && *times.last().expect("nonempty") >= -slack
            }
        }
    }
}

/// Pointwise recovery of the proliferating population `P = S - N`.
pub fn proliferating_series(s: &[f64], n: &[f64]) -> Vec<f64> {
    debug_assert_eq!(s.len(), n.len());
    s.iter().zip(n).map(|(a, b)| a - b).collect()
}

//! Characteristic-equation analytics for the linearized system.
//!
//! Around a steady state the linearization has the characteristic equation
//! `lambda + A(tau) - B(tau) * exp(-lambda*tau) = 0` with delay-dependent
//! coefficients `A(tau) = delta + beta(S*(tau))` and
//! `B(tau) = A(tau) + (2*exp(-delta*tau) - 1) * S*(tau) * beta'(S*(tau))`.
//! Purely imaginary roots `±i*omega` can appear only where `B < 0` and
//! `|B| > A`, i.e. for delays below a threshold `tau_star`; the candidate
//! crossing delays are the roots of the branch functions
//!
//! ```text
//! Z_k(tau) = tau - (arccos(A/B) + 2*k*pi) / sqrt(B^2 - A^2)
//! ```
//!
//! Each root `tau_c` carries a crossing frequency `omega(tau_c)` and a
//! transversality sign telling whether the conjugate root pair enters (+1) or
//! leaves (-1) the right half-plane, which is what flips stability on the
//! chart.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::model::{BetaRate, ModelParams};
use crate::numeric::bisect;
use crate::{Error, Result};

/// Default number of scan points per branch when hunting for crossings.
pub const DEFAULT_SCAN_GRID: usize = 2000;
/// Default bisection tolerance (days) for crossing refinement.
pub const DEFAULT_ROOT_TOL: f64 = 1e-8;
/// Below this magnitude the transversality expression counts as degenerate.
pub const TRANSVERSALITY_DEGENERATE_TOL: f64 = 1e-12;

/// Coefficients of the characteristic equation at a given delay, with their
/// derivatives in `tau`. On the existence region `A > 0` and `B < A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharCoeffs {
    pub tau: f64,
    pub a: f64,
    pub b: f64,
    pub a_prime: f64,
    pub b_prime: f64,
}

/// Coefficients at delay `tau`. Requires the positive steady state to exist
/// there (`tau < tau_bar` and `delta < beta(0)`).
///
/// The Hill variant evaluates closed forms; other rates go through
/// [`coeffs_at_generic`]. Both agree on Hill rates.
pub fn coeffs_at(params: &ModelParams, tau: f64) -> Result<CharCoeffs> {
    match params.beta() {
        BetaRate::Hill(h) => {
            ensure_positive_steady_state(params, tau)?;
            Ok(coeffs_hill(params.delta(), h.beta0(), h.n(), tau))
        }
        BetaRate::Generic(_) => coeffs_at_generic(params, tau),
    }
}

/// Coefficients computed from the steady state and the rate callbacks alone:
/// `A = delta + beta(S*)`, `B` from the steady-state relation, and the
/// `tau`-derivatives by the chain rule with `dS*/dtau` obtained by implicit
/// differentiation of `(2*exp(-delta*tau) - 1) * beta(S*) = delta`.
pub fn coeffs_at_generic(params: &ModelParams, tau: f64) -> Result<CharCoeffs> {
    let p = params.with_tau(tau)?;
    let steady = p
        .steady_positive()
        .ok_or_else(|| no_steady_state(params, tau))?;
    let s_star = steady.s();
    let delta = p.delta();
    let g = p.net_renewal_factor();
    let surv = p.survival();
    let value = p.beta().eval(s_star)?;
    let d1 = p.beta().derivative(s_star)?;
    let d2 = p.beta().second_derivative(s_star)?;

    let a = delta + value;
    let b = a + g * s_star * d1;
    let ds_dtau = 2.0 * delta * surv * value / (g * d1);
    let a_prime = d1 * ds_dtau;
    let b_prime = a_prime - 2.0 * delta * surv * s_star * d1 + g * (d1 + s_star * d2) * ds_dtau;
    Ok(CharCoeffs { tau, a, b, a_prime, b_prime })
}

fn coeffs_hill(delta: f64, beta0: f64, n: f64, tau: f64) -> CharCoeffs {
    let e = (-delta * tau).exp();
    let g = 2.0 * e - 1.0;
    CharCoeffs {
        tau,
        a: 2.0 * delta * e / g,
        b: (2.0 * delta * beta0 * e - n * delta * (g * beta0 - delta)) / (g * beta0),
        a_prime: 2.0 * delta * delta * e / (g * g),
        b_prime: 2.0 * delta * delta * e * (beta0 + n * delta) / (g * g * beta0),
    }
}

fn ensure_positive_steady_state(params: &ModelParams, tau: f64) -> Result<()> {
    let p = params.with_tau(tau)?;
    if p.net_renewal_factor() * p.beta().at_zero() > p.delta() {
        Ok(())
    } else {
        Err(no_steady_state(params, tau))
    }
}

fn no_steady_state(params: &ModelParams, tau: f64) -> Error {
    Error::NoPositiveSteadyState(format!(
        "characteristic coefficients need the positive steady state; none at tau = {tau} \
         (delta = {}, beta(0) = {})",
        params.delta(),
        params.beta().at_zero()
    ))
}

/// The unique real root `lambda_0` of the trivial-state characteristic
/// equation `lambda + delta + beta(0) - 2*beta(0)*exp(-delta*tau)*exp(-lambda*tau) = 0`.
/// Every other root has real part strictly below it.
pub fn trivial_dominant_root(params: &ModelParams) -> f64 {
    let delta = params.delta();
    let b0 = params.beta().at_zero();
    let tau = params.tau();
    let gain = 2.0 * b0 * (-delta * tau).exp();
    let f = |lam: f64| lam + delta + b0 - gain * (-lam * tau).exp();

    // The map is increasing in lambda from -inf to +inf.
    let mut lo = -(delta + b0 + 1.0);
    let mut f_lo = f(lo);
    for _ in 0..64 {
        if f_lo < 0.0 {
            break;
        }
        lo *= 2.0;
        f_lo = f(lo);
    }
    let hi = (b0 - delta).max(0.0) + 1.0;
    bisect(lo, hi, f_lo, 1e-12, f)
}

/// Local stability of the extinction state. In the `Stable` and `Critical`
/// cases it is in fact globally asymptotically stable and the populations die
/// out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrivialStability {
    Stable,
    Unstable,
    Critical,
}

/// Classifies the trivial steady state by the sign of
/// `(2*exp(-delta*tau) - 1) * beta(0) - delta`.
pub fn trivial_stability(params: &ModelParams) -> TrivialStability {
    let margin = params.net_renewal_factor() * params.beta().at_zero() - params.delta();
    if margin.abs() <= 1e-12 {
        TrivialStability::Critical
    } else if margin > 0.0 {
        TrivialStability::Unstable
    } else {
        TrivialStability::Stable
    }
}

/// `chi(y) = y * beta'(y)`, the weighted slope of the introduction rate.
pub fn chi(beta: &BetaRate, y: f64) -> Result<f64> {
    Ok(y * beta.derivative(y)?)
}

/// Report on the hypotheses under which the crossing threshold `tau_star` is
/// guaranteed unique: `chi` decreasing on `[0, beta^{-1}(delta)]` (checked on
/// a grid) and `chi(beta^{-1}(delta)) < -4*delta`. The first may legitimately
/// fail while `tau_star` is still unique; it is reported, not required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesesReport {
    pub h2_holds: bool,
    pub h1_holds_on_grid: bool,
    pub chi_at_beta_inv_delta: f64,
    pub tau_star: Option<f64>,
}

/// Evaluates the hypotheses report on `grid` sample points. Requires
/// `delta < beta(0)`.
pub fn check_hypotheses(params: &ModelParams, grid: usize) -> Result<HypothesesReport> {
    let beta = params.beta();
    if params.delta() >= beta.at_zero() {
        return Err(Error::NoPositiveSteadyState(format!(
            "hypotheses are about the positive steady state; delta = {} >= beta(0) = {}",
            params.delta(),
            beta.at_zero()
        )));
    }
    let y_max = beta.inv(params.delta())?;
    let chi_val = chi(beta, y_max)?;
    let h2_holds = chi_val < -4.0 * params.delta();

    let grid = grid.max(2);
    let mut h1_holds_on_grid = true;
    let mut prev = chi(beta, 0.0)?;
    for i in 1..grid {
        let y = y_max * i as f64 / (grid - 1) as f64;
        let cur = chi(beta, y)?;
        if cur > prev + 1e-12 {
            h1_holds_on_grid = false;
            break;
        }
        prev = cur;
    }

    Ok(HypothesesReport {
        h2_holds,
        h1_holds_on_grid,
        chi_at_beta_inv_delta: chi_val,
        tau_star: tau_star(params),
    })
}

/// The delay threshold below which purely imaginary characteristic roots are
/// admissible (`B < 0` and `|B| > A`), or `None` when no delay admits them.
///
/// Hill rates use the closed form
/// `(1/delta) * ln(2*beta0*(n-2) / (n*(beta0+delta)))`, valid exactly when
/// `n > 4*beta0/(beta0-delta)`; other rates go through [`tau_star_generic`].
pub fn tau_star(params: &ModelParams) -> Option<f64> {
    match params.beta() {
        BetaRate::Hill(h) => {
            if params.delta() >= h.beta0() || h.n() <= 4.0 * h.beta0() / (h.beta0() - params.delta())
            {
                return None;
            }
            Some(
                (2.0 * h.beta0() * (h.n() - 2.0) / (h.n() * (h.beta0() + params.delta()))).ln()
                    / params.delta(),
            )
        }
        BetaRate::Generic(_) => tau_star_generic(params),
    }
}

/// Threshold search that only uses the rate callbacks: locates the sign
/// change of `f1(tau) - f2(tau)` on `[0, tau_bar)`, where
/// `f1(tau) = chi(beta^{-1}(delta / (2*exp(-delta*tau) - 1)))` and
/// `f2(tau) = -4*delta*exp(-delta*tau) / (2*exp(-delta*tau) - 1)^2`.
/// Returns `None` when `f1(0) >= f2(0)` (no admissible delay).
pub fn tau_star_generic(params: &ModelParams) -> Option<f64> {
    let tau_bar = params.existence_threshold_tau_bar()?;
    let delta = params.delta();
    let beta = params.beta();
    let b0 = beta.at_zero();
    let diff = |tau: f64| -> Option<f64> {
        let e = (-delta * tau).exp();
        let g = 2.0 * e - 1.0;
        let y = beta.inv((delta / g).min(b0)).ok()?;
        let f1 = chi(beta, y).ok()?;
        let f2 = -4.0 * delta * e / (g * g);
        Some(f1 - f2)
    };

    let at_zero = diff(0.0)?;
    if at_zero >= 0.0 {
        return None;
    }
    let hi = tau_bar * (1.0 - 1e-12);
    let at_hi = diff(hi)?;
    if at_hi <= 0.0 {
        return None;
    }
    let f = |tau: f64| diff(tau).unwrap_or(f64::NAN);
    Some(bisect(0.0, hi, at_zero, 1e-12 * tau_bar.max(1.0), f))
}

/// Crossing frequency `omega(tau) = sqrt(B^2 - A^2)` when admissible
/// (`B < 0`, `|B| > A`, equivalently `tau < tau_star`); `None` otherwise,
/// including delays without a positive steady state.
pub fn omega_at(params: &ModelParams, tau: f64) -> Option<f64> {
    let c = coeffs_at(params, tau).ok()?;
    if c.b < 0.0 && -c.b > c.a {
        Some((c.b * c.b - c.a * c.a).sqrt())
    } else {
        None
    }
}

/// Branch function `Z_k(tau) = tau - (arccos(A/B) + 2*k*pi) / omega(tau)`.
/// Domain error where `omega` is undefined (`tau >= tau_star`).
pub fn z_k(params: &ModelParams, k: u32, tau: f64) -> Result<f64> {
    let c = coeffs_at(params, tau)?;
    let omega = if c.b < 0.0 && -c.b > c.a {
        (c.b * c.b - c.a * c.a).sqrt()
    } else {
        return Err(Error::Domain(format!(
            "Z_{k} is undefined at tau = {tau}: no admissible crossing frequency there"
        )));
    };
    // A/B lies in (-1, 0) analytically; clamp against rounding.
    let ratio = (c.a / c.b).clamp(-1.0, 1.0);
    Ok(tau - (ratio.acos() + 2.0 * PI * k as f64) / omega)
}

/// A root of some `Z_k`: a delay at which the characteristic equation has the
/// conjugate pair `±i*omega`. `trans_sign` is the sign of the transversality
/// expression `expr_value` (0 marks a degenerate/tangential crossing, which
/// does not flip the stability count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingPoint {
    pub k: u32,
    pub tau_c: f64,
    pub omega: f64,
    pub trans_sign: i8,
    pub expr_value: f64,
}

/// Scans the `Z_k` branches for roots on `[0, tau_star)` and refines each by
/// bisection to `root_tol` days. Branches are scanned in increasing `k`; once
/// a branch has no root, one more is scanned as a safety check and the search
/// stops (later branches sit strictly below earlier ones). `grid` is clamped
/// to at least 100 scan intervals. Returns crossings sorted by delay; empty
/// when no delay admits crossings.
pub fn find_crossings(params: &ModelParams, grid: usize, root_tol: f64) -> Vec<CrossingPoint> {
    let Some(tau_star) = tau_star(params) else {
        return Vec::new();
    };
    let grid = grid.max(100);
    let hi = tau_star * (1.0 - 1e-6);
    let root_tol = if root_tol > 0.0 { root_tol } else { DEFAULT_ROOT_TOL };

    let mut crossings = Vec::new();
    let mut empty_streak = 0;
    let mut k = 0u32;
    while empty_streak < 2 && k < 64 {
        let f = |tau: f64| z_k(params, k, tau).unwrap_or(f64::NAN);
        let values: Vec<f64> = (0..=grid).map(|i| f(hi * i as f64 / grid as f64)).collect();
        let node = |i: usize| hi * i as f64 / grid as f64;

        let mut roots: Vec<(f64, bool)> = Vec::new();
        for i in 0..grid {
            let (va, vb) = (values[i], values[i + 1]);
            if va == 0.0 {
                roots.push((node(i), false));
            } else if va * vb < 0.0 {
                let root = bisect(node(i), node(i + 1), va, root_tol, f);
                roots.push((root, false));
            }
        }
        if values[grid] == 0.0 {
            roots.push((hi, false));
        }
        // Tangential touch: a near-zero node whose neighbors agree in sign is
        // a local extremum grazing the axis rather than a transversal root.
        for i in 1..grid {
            if values[i] != 0.0
                && values[i].abs() <= root_tol
                && values[i - 1] * values[i + 1] > 0.0
                && values[i] * values[i - 1] > 0.0
            {
                roots.push((node(i), true));
            }
        }
        roots.sort_by(|a, b| a.0.total_cmp(&b.0));
        roots.dedup_by(|a, b| (a.0 - b.0).abs() <= 2.0 * root_tol);

        let found = roots.len();
        for (tau_c, tangential) in roots {
            let Some(omega) = omega_at(params, tau_c) else {
                continue;
            };
            let Ok(coeffs) = coeffs_at(params, tau_c) else {
                continue;
            };
            let (mut sign, expr_value) = transversality_sign(&coeffs);
            if tangential {
                sign = 0;
            }
            crossings.push(CrossingPoint { k, tau_c, omega, trans_sign: sign, expr_value });
        }

        if found == 0 {
            empty_streak += 1;
        } else {
            empty_streak = 0;
        }
        k += 1;
    }

    crossings.sort_by(|a, b| a.tau_c.total_cmp(&b.tau_c));
    crossings
}

/// Sign of `d Re(lambda) / d tau` at a crossing, via the expression
/// `E = B*(A^2 + A' + A*A'*tau) - B^3 - B^2*B'*tau - B'*A` evaluated at the
/// crossing coefficients. Returns `(sign, E)`; sign 0 means `|E|` fell below
/// [`TRANSVERSALITY_DEGENERATE_TOL`] and the crossing is degenerate.
pub fn transversality_sign(coeffs: &CharCoeffs) -> (i8, f64) {
    let CharCoeffs { tau, a, b, a_prime, b_prime } = *coeffs;
    let e = b * (a * a + a_prime + a * a_prime * tau) - b * b * b - b * b * b_prime * tau - b_prime * a;
    let sign = if e.abs() < TRANSVERSALITY_DEGENERATE_TOL {
        0
    } else if e > 0.0 {
        1
    } else {
        -1
    };
    (sign, e)
}

/// Classification of a delay interval on the stability chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalClass {
    /// Only the trivial steady state exists; it is globally stable.
    TrivialOnlyStable,
    /// The positive steady state exists and is locally stable.
    PositiveStable,
    /// The positive steady state exists and is unstable.
    PositiveUnstable,
}

/// One delay interval with its classification and the number of unstable
/// characteristic root pairs on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartInterval {
    pub lo: f64,
    pub hi: f64,
    pub class: IntervalClass,
    pub unstable_pairs: i32,
}

/// Stability chart over `[0, tau_max]`: thresholds, crossings, and the
/// partition into classified intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityChart {
    pub tau_bar: Option<f64>,
    pub tau_star: Option<f64>,
    pub crossings: Vec<CrossingPoint>,
    pub intervals: Vec<ChartInterval>,
}

impl StabilityChart {
    /// The interval containing `tau`, if inside the charted range.
    pub fn interval_at(&self, tau: f64) -> Option<&ChartInterval> {
        self.intervals
            .iter()
            .find(|iv| tau >= iv.lo && (tau < iv.hi || tau == iv.hi && iv.hi == self.charted_end()))
    }

    fn charted_end(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.hi)
    }
}

/// Builds the chart on `[0, tau_max]` with default scan settings.
///
/// The unstable-pair count starts at 0 at `tau = 0` (the positive state is
/// stable there) and changes by the transversality sign at each crossing;
/// delays past `tau_bar` are classified [`IntervalClass::TrivialOnlyStable`].
/// When `delta >= beta(0)` the whole chart is trivial-only.
pub fn build_chart(params: &ModelParams, tau_max: f64) -> Result<StabilityChart> {
    build_chart_with(params, tau_max, DEFAULT_SCAN_GRID, DEFAULT_ROOT_TOL)
}

/// [`build_chart`] with explicit scan grid and root tolerance.
pub fn build_chart_with(
    params: &ModelParams,
    tau_max: f64,
    grid: usize,
    root_tol: f64,
) -> Result<StabilityChart> {
    if tau_max <= 0.0 || !tau_max.is_finite() {
        return Err(Error::Config(format!("tau_max must be > 0, got {tau_max}")));
    }
    let Some(tau_bar) = params.existence_threshold_tau_bar() else {
        return Ok(StabilityChart {
            tau_bar: None,
            tau_star: None,
            crossings: Vec::new(),
            intervals: vec![ChartInterval {
                lo: 0.0,
                hi: tau_max,
                class: IntervalClass::TrivialOnlyStable,
                unstable_pairs: 0,
            }],
        });
    };

    let tau_star = tau_star(params);
    let crossings = find_crossings(params, grid, root_tol);
    let edge = tau_bar.min(tau_max);

    let mut intervals = Vec::new();
    let mut lo = 0.0;
    let mut pairs: i32 = 0;
    let positive = |lo: f64, hi: f64, pairs: i32| ChartInterval {
        lo,
        hi,
        class: if pairs == 0 { IntervalClass::PositiveStable } else { IntervalClass::PositiveUnstable },
        unstable_pairs: pairs,
    };
    for c in crossings.iter().filter(|c| c.tau_c < edge) {
        intervals.push(positive(lo, c.tau_c, pairs));
        pairs = (pairs + i32::from(c.trans_sign)).max(0);
        lo = c.tau_c;
    }
    if lo < edge {
        intervals.push(positive(lo, edge, pairs));
    }
    if tau_max > tau_bar {
        intervals.push(ChartInterval {
            lo: tau_bar,
            hi: tau_max,
            class: IntervalClass::TrivialOnlyStable,
            unstable_pairs: 0,
        });
    }

    Ok(StabilityChart { tau_bar: Some(tau_bar), tau_star, crossings, intervals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HillBeta;

    fn reference_params(n: f64) -> ModelParams {
        ModelParams::new(0.05, 0.0, BetaRate::hill(1.77, 1.0, n).unwrap()).unwrap()
    }

    fn generic_hill_params(n: f64) -> ModelParams {
        let (beta0, theta): (f64, f64) = (1.77, 1.0);
        let tn = theta.powf(n);
        let beta = BetaRate::generic(
            move |s: f64| beta0 * tn / (tn + s.powf(n)),
            move |s: f64| -beta0 * tn * n * s.powf(n - 1.0) / (tn + s.powf(n)).powi(2),
            move |s: f64| {
                -beta0 * tn * n * s.powf(n - 2.0) * ((n - 1.0) * tn - (n + 1.0) * s.powf(n))
                    / (tn + s.powf(n)).powi(3)
            },
        );
        ModelParams::new(0.05, 0.0, beta).unwrap()
    }

    #[test]
    fn coeffs_at_zero_delay() {
        let c = coeffs_at(&reference_params(12.0), 0.0).unwrap();
        assert!((c.a - 0.1).abs() < 1e-15, "A(0) = {}", c.a);
        assert!((c.b + 0.4830508474576271).abs() < 1e-13, "B(0) = {}", c.b);
        assert!((c.a_prime - 0.005).abs() < 1e-15);
        assert!((c.b_prime - 0.006694915254237289).abs() < 1e-15);
    }

    #[test]
    fn coeffs_at_sample_delay() {
        let c = coeffs_at(&reference_params(12.0), 4.52).unwrap();
        assert!((c.a - 0.1339720522874824).abs() < 1e-12, "A = {}", c.a);
        assert!((c.b + 0.43756284524218464).abs() < 1e-12, "B = {}", c.b);
        assert!((c.a_prime - 0.0112499081797458).abs() < 1e-12, "A' = {}", c.a_prime);
        assert!((c.b_prime - 0.0150634363762698).abs() < 1e-12, "B' = {}", c.b_prime);
    }

    #[test]
    fn coeffs_error_outside_existence_region() {
        assert!(matches!(
            coeffs_at(&reference_params(12.0), 13.4),
            Err(Error::NoPositiveSteadyState(_))
        ));
    }

    #[test]
    fn generic_route_matches_hill_closed_forms() {
        let hill = reference_params(12.0);
        let generic = generic_hill_params(12.0);
        let tau_bar = hill.existence_threshold_tau_bar().unwrap();
        for i in 0..60 {
            let tau = tau_bar * 0.995 * i as f64 / 60.0;
            let ch = coeffs_at(&hill, tau).unwrap();
            let cg = coeffs_at_generic(&generic, tau).unwrap();
            let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-12);
            assert!(rel(cg.a, ch.a) < 1e-9, "A at tau = {tau}: {} vs {}", cg.a, ch.a);
            assert!(rel(cg.b, ch.b) < 1e-9, "B at tau = {tau}: {} vs {}", cg.b, ch.b);
            assert!(rel(cg.a_prime, ch.a_prime) < 1e-9, "A' at tau = {tau}");
            assert!(rel(cg.b_prime, ch.b_prime) < 1e-9, "B' at tau = {tau}");
        }
        // The generic route through Hill parameters must agree with itself too.
        let via_hill_enum = coeffs_at_generic(&hill, 4.52).unwrap();
        let ch = coeffs_at(&hill, 4.52).unwrap();
        assert!((via_hill_enum.b_prime - ch.b_prime).abs() < 1e-9 * ch.b_prime.abs());
    }

    #[test]
    fn coefficient_derivatives_match_central_differences() {
        let p = reference_params(12.0);
        let step = 1e-5;
        for tau in [0.5, 2.0, 4.52, 7.0, 9.0, 12.0] {
            let c = coeffs_at(&p, tau).unwrap();
            let plus = coeffs_at(&p, tau + step).unwrap();
            let minus = coeffs_at(&p, tau - step).unwrap();
            let fd_a = (plus.a - minus.a) / (2.0 * step);
            let fd_b = (plus.b - minus.b) / (2.0 * step);
            assert!(
                (c.a_prime - fd_a).abs() / fd_a.abs() < 1e-5,
                "A'({tau}) = {} vs fd {fd_a}",
                c.a_prime
            );
            assert!(
                (c.b_prime - fd_b).abs() / fd_b.abs() < 1e-5,
                "B'({tau}) = {} vs fd {fd_b}",
                c.b_prime
            );
        }
    }

    #[test]
    fn coefficients_ordered_on_existence_region() {
        let p = reference_params(12.0);
        let tau_bar = p.existence_threshold_tau_bar().unwrap();
        for i in 0..500 {
            let tau = tau_bar * 0.999999 * i as f64 / 500.0;
            let c = coeffs_at(&p, tau).unwrap();
            assert!(c.a > 0.0, "A({tau}) = {}", c.a);
            assert!(c.b < c.a, "B({tau}) = {} !< A = {}", c.b, c.a);
        }
    }

    #[test]
    fn dominant_root_landmarks() {
        let lam = trivial_dominant_root(&reference_params(12.0));
        assert!((lam - 1.72).abs() < 1e-10, "tau = 0: lambda_0 = {lam}");

        let p = reference_params(12.0);
        let tau_bar = p.existence_threshold_tau_bar().unwrap();
        let lam = trivial_dominant_root(&p.with_tau(tau_bar).unwrap());
        assert!(lam.abs() < 1e-8, "lambda_0(tau_bar) = {lam}");

        let lam = trivial_dominant_root(&p.with_tau(14.0).unwrap());
        assert!(lam < 0.0);
        assert!((lam + 0.0023855824677562754).abs() < 1e-8, "lambda_0(14) = {lam}");
    }

    #[test]
    fn trivial_stability_splits_at_tau_bar() {
        let p = reference_params(12.0);
        assert_eq!(trivial_stability(&p), TrivialStability::Unstable);
        assert_eq!(
            trivial_stability(&p.with_tau(14.0).unwrap()),
            TrivialStability::Stable
        );
        let tau_bar = p.existence_threshold_tau_bar().unwrap();
        assert_eq!(
            trivial_stability(&p.with_tau(tau_bar).unwrap()),
            TrivialStability::Critical
        );
    }

    #[test]
    fn hypotheses_report_for_reference_rates() {
        let rep = check_hypotheses(&reference_params(12.0), 512).unwrap();
        assert!((rep.chi_at_beta_inv_delta + 0.5830508474576273).abs() < 1e-12);
        assert!(rep.h2_holds);
        assert!(!rep.h1_holds_on_grid, "chi turns increasing past theta");
        assert!(rep.tau_star.is_some());

        let rep = check_hypotheses(&reference_params(4.0), 512).unwrap();
        assert!(!rep.h2_holds, "n = 4 is below the sensitivity threshold");
        assert!(rep.tau_star.is_none());

        let gentle = ModelParams::new(0.05, 0.0, BetaRate::hill(0.08, 1.0, 12.0).unwrap()).unwrap();
        let rep = check_hypotheses(&gentle, 512).unwrap();
        assert!(rep.h1_holds_on_grid, "beta0 < 2*delta keeps chi decreasing");
    }

    #[test]
    fn tau_star_landmarks() {
        let ts = tau_star(&reference_params(12.0)).unwrap();
        assert!((ts - 9.65937338526049).abs() < 1e-12, "tau_star = {ts}");
        let ts = tau_star(&reference_params(10.0)).unwrap();
        assert!((ts - 8.842933494855387).abs() < 1e-12, "tau_star(n=10) = {ts}");
        assert!(tau_star(&reference_params(4.0)).is_none());
    }

    #[test]
    fn tau_star_generic_agrees_with_closed_form() {
        for n in [6.0, 8.0, 10.0, 12.0, 14.0] {
            let closed = tau_star(&reference_params(n)).unwrap();
            let searched = tau_star_generic(&generic_hill_params(n)).unwrap();
            assert!(
                (closed - searched).abs() < 1e-8,
                "n = {n}: closed {closed} vs searched {searched}"
            );
            // The search must also kick in directly on Hill parameters.
            let on_hill = tau_star_generic(&reference_params(n)).unwrap();
            assert!((closed - on_hill).abs() < 1e-8);
        }
        assert!(tau_star_generic(&generic_hill_params(4.0)).is_none());
    }

    #[test]
    fn omega_landmarks() {
        let p = reference_params(12.0);
        let w = omega_at(&p, 4.52).unwrap();
        assert!((w - 0.4165485958952642).abs() < 1e-12, "omega(4.52) = {w}");
        assert!(omega_at(&p, 9.8).is_none(), "past tau_star");
        let ts = tau_star(&p).unwrap();
        let w = omega_at(&p, ts - 1e-6).unwrap();
        assert!(w < 1e-2, "omega collapses at tau_star: {w}");
    }

    #[test]
    fn z0_landmarks_and_branch_ordering() {
        let p = reference_params(12.0);
        let z0 = z_k(&p, 0, 0.0).unwrap();
        assert!((z0 + 3.7650701405560136).abs() < 1e-9, "Z_0(0) = {z0}");
        assert!(z0 < 0.0);
        let z0_at_crossing = z_k(&p, 0, 4.52).unwrap();
        assert!(z0_at_crossing.abs() < 0.02, "Z_0(4.52) = {z0_at_crossing}");

        let ts = tau_star(&p).unwrap();
        for i in 0..200 {
            let tau = ts * (1.0 - 1e-6) * i as f64 / 200.0;
            let z0 = z_k(&p, 0, tau).unwrap();
            let z1 = z_k(&p, 1, tau).unwrap();
            let z2 = z_k(&p, 2, tau).unwrap();
            assert!(z1 < z0, "Z_1 !< Z_0 at tau = {tau}");
            assert!(z2 < z1, "Z_2 !< Z_1 at tau = {tau}");
        }
        // Z_0 falls away toward -inf at the right endpoint.
        let mid = z_k(&p, 0, ts / 2.0).unwrap();
        let near_end = z_k(&p, 0, ts - 1e-4).unwrap();
        assert!(near_end < mid, "Z_0 should collapse near tau_star");
    }

    #[test]
    fn z_k_domain_error_past_tau_star() {
        let p = reference_params(12.0);
        assert!(matches!(z_k(&p, 0, 9.8), Err(Error::Domain(_))));
    }

    #[test]
    fn crossings_for_reference_parameters() {
        let p = reference_params(12.0);
        let crossings = find_crossings(&p, DEFAULT_SCAN_GRID, DEFAULT_ROOT_TOL);
        assert_eq!(crossings.len(), 2, "expected exactly two crossings");
        let (t1, t2) = (crossings[0], crossings[1]);
        assert!((t1.tau_c - 4.517152112189979).abs() < 1e-6, "tau_1 = {}", t1.tau_c);
        assert!((t2.tau_c - 8.36468613972134).abs() < 1e-6, "tau_2 = {}", t2.tau_c);
        assert_eq!((t1.k, t2.k), (0, 0), "branch 1 contributes nothing");
        assert_eq!((t1.trans_sign, t2.trans_sign), (1, -1));
        assert!((t1.expr_value - 0.05301508633958973).abs() < 1e-6);
        assert!((t2.expr_value + 0.05768705276394067).abs() < 1e-6);

        // Both endpoint signs of Z_0 are negative, so the root count is even.
        let branch0 = crossings.iter().filter(|c| c.k == 0 && c.trans_sign != 0).count();
        assert_eq!(branch0 % 2, 0);
    }

    #[test]
    fn crossing_system_is_satisfied() {
        let p = reference_params(12.0);
        for c in find_crossings(&p, DEFAULT_SCAN_GRID, 1e-10) {
            let coeffs = coeffs_at(&p, c.tau_c).unwrap();
            let omega_sq = coeffs.b * coeffs.b - coeffs.a * coeffs.a;
            assert!((c.omega * c.omega - omega_sq).abs() < 1e-10);
            let cos_err = (c.omega * c.tau_c).cos() - coeffs.a / coeffs.b;
            let sin_err = (c.omega * c.tau_c).sin() + c.omega / coeffs.b;
            assert!(cos_err.abs() < 1e-8, "cos residual {cos_err:e} at tau_c = {}", c.tau_c);
            assert!(sin_err.abs() < 1e-8, "sin residual {sin_err:e} at tau_c = {}", c.tau_c);
        }
    }

    #[test]
    fn no_crossings_for_low_sensitivity() {
        for n in [6.0, 8.0, 10.0] {
            let crossings = find_crossings(&reference_params(n), DEFAULT_SCAN_GRID, DEFAULT_ROOT_TOL);
            assert!(crossings.is_empty(), "n = {n} produced {crossings:?}");
        }
        assert!(find_crossings(&reference_params(4.0), DEFAULT_SCAN_GRID, DEFAULT_ROOT_TOL).is_empty());
    }

    #[test]
    fn transversality_hand_value() {
        let c = CharCoeffs { tau: 0.0, a: 1.0, b: -2.0, a_prime: 0.0, b_prime: 0.0 };
        let (sign, e) = transversality_sign(&c);
        assert_eq!(sign, 1);
        assert!((e - 6.0).abs() < 1e-15, "E = {e}");
    }

    #[test]
    fn chart_reproduces_stability_switch() {
        let p = reference_params(12.0);
        let chart = build_chart(&p, 14.0).unwrap();
        let classes: Vec<IntervalClass> = chart.intervals.iter().map(|iv| iv.class).collect();
        assert_eq!(
            classes,
            vec![
                IntervalClass::PositiveStable,
                IntervalClass::PositiveUnstable,
                IntervalClass::PositiveStable,
                IntervalClass::TrivialOnlyStable,
            ]
        );
        let pairs: Vec<i32> = chart.intervals.iter().map(|iv| iv.unstable_pairs).collect();
        assert_eq!(pairs, vec![0, 1, 0, 0]);
        assert!((chart.intervals[1].lo - 4.517152112189979).abs() < 1e-6);
        assert!((chart.intervals[2].lo - 8.36468613972134).abs() < 1e-6);
        assert!((chart.intervals[3].lo - 13.305804521139581).abs() < 1e-9);
        assert_eq!(chart.intervals[3].hi, 14.0);

        // Partition: contiguous, covering [0, tau_max].
        assert_eq!(chart.intervals[0].lo, 0.0);
        for w in chart.intervals.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
        assert_eq!(chart.interval_at(7.0).unwrap().class, IntervalClass::PositiveUnstable);
        assert_eq!(chart.interval_at(3.5).unwrap().class, IntervalClass::PositiveStable);
        assert_eq!(chart.interval_at(14.0).unwrap().class, IntervalClass::TrivialOnlyStable);
    }

    #[test]
    fn chart_single_stable_interval_for_gentle_rates() {
        let chart = build_chart(&reference_params(8.0), 14.0).unwrap();
        assert_eq!(chart.intervals.len(), 2);
        assert_eq!(chart.intervals[0].class, IntervalClass::PositiveStable);
        assert_eq!(chart.intervals[1].class, IntervalClass::TrivialOnlyStable);
        assert!(chart.crossings.is_empty());
    }

    #[test]
    fn chart_degenerate_when_delta_dominates() {
        let p = ModelParams::new(2.0, 0.0, BetaRate::Hill(HillBeta::new(1.77, 1.0, 12.0).unwrap()))
            .unwrap();
        let chart = build_chart(&p, 10.0).unwrap();
        assert!(chart.tau_bar.is_none());
        assert_eq!(chart.intervals.len(), 1);
        assert_eq!(chart.intervals[0].class, IntervalClass::TrivialOnlyStable);
    }

    #[test]
    fn chart_rejects_bad_range() {
        assert!(build_chart(&reference_params(12.0), 0.0).is_err());
        assert!(build_chart(&reference_params(12.0), f64::NAN).is_err());
    }
}

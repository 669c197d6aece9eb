//! Weighted Levenberg–Marquardt fit of a Gaussian-windowed sinusoid
//!
//! ```text
//! f(x) = A · exp(−(x − x₀)²/w²) · [1 + V·cos(2πx/Λ + φ)]
//! ```
//!
//! with Poisson weights `1/max(count, 1)` and box constraints `A ≥ 0`,
//! `w > 0`, `Λ > 0`, `0 ≤ V ≤ 1` enforced by projecting each proposed step.
//! The envelope center `x₀` is held at zero unless the histogram mean sits
//! more than one bin away from it.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::Histogram;

pub const MAX_ITERATIONS: usize = 500;
pub const PARAMETER_TOLERANCE: f64 = 1e-8;
pub const MIN_NON_EMPTY_BINS: usize = 8;

const A: usize = 0;
const W: usize = 1;
const V: usize = 2;
const L: usize = 3;
const PHI: usize = 4;
const X0: usize = 5;

/// Starting point for the fit; any field left `None` is estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitGuess {
    pub amplitude: Option<f64>,
    pub envelope_width: Option<f64>,
    pub visibility: Option<f64>,
    pub period: Option<f64>,
    pub phase: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    pub initial_guess: Option<FitGuess>,
    /// Try eight evenly spaced starting phases and keep the best.
    pub multistart: bool,
    /// Force the envelope center free (`Some(true)`) or fixed at zero
    /// (`Some(false)`); `None` decides from the histogram mean.
    pub free_center: Option<bool>,
}

/// One-sigma parameter uncertainties.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterUncertainties {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub envelope_width: f64,
    pub visibility: f64,
    pub center: Option<f64>,
    /// Uncertainty of the product A·V.
    pub fringe_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub envelope_width: f64,
    pub visibility: f64,
    pub center: Option<f64>,
    /// Weighted sum of squared residuals per degree of freedom.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub parameter_uncertainties: ParameterUncertainties,
}

impl FringeFit {
    /// A·V, the counts-per-bin swing of the fringe.
    pub fn fringe_amplitude(&self) -> f64 {
        self.amplitude * self.visibility
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let p = self.params();
        model(&p, x)
    }

    fn params(&self) -> Vec<f64> {
        let mut p = vec![self.amplitude, self.envelope_width, self.visibility, self.period, self.phase];
        if let Some(c) = self.center {
            p.push(c);
        }
        p
    }
}

#[inline]
fn model(p: &[f64], x: f64) -> f64 {
    let x0 = p.get(X0).copied().unwrap_or(0.0);
    let u = (x - x0) / p[W];
    let env = (-u * u).exp();
    p[A] * env * (1.0 + p[V] * (2.0 * PI * x / p[L] + p[PHI]).cos())
}

/// Model value and gradient with respect to each parameter.
fn model_with_gradient(p: &[f64], x: f64, grad: &mut [f64]) -> f64 {
    let x0 = p.get(X0).copied().unwrap_or(0.0);
    let dx = x - x0;
    let w = p[W];
    let env = (-(dx * dx) / (w * w)).exp();
    let theta = 2.0 * PI * x / p[L] + p[PHI];
    let (s, c) = theta.sin_cos();
    let fringe = 1.0 + p[V] * c;
    let f = p[A] * env * fringe;
    grad[A] = env * fringe;
    grad[W] = f * 2.0 * dx * dx / (w * w * w);
    grad[V] = p[A] * env * c;
    grad[L] = p[A] * env * p[V] * s * 2.0 * PI * x / (p[L] * p[L]);
    grad[PHI] = -p[A] * env * p[V] * s;
    if grad.len() > X0 {
        grad[X0] = f * 2.0 * dx / (w * w);
    }
    f
}

/// Bin centers and (possibly non-integer) counts to fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub bin_width: f64,
}

impl FitData {
    /// Uniformly spaced samples; `x` must be increasing.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::FitPrecondition("need matching x and y with at least two points".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) || y.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::FitPrecondition("x must increase and y must be finite and non-negative".into()));
        }
        let bin_width = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
        Ok(Self { x, y, bin_width })
    }

    pub fn span(&self) -> f64 {
        self.bin_width * self.x.len() as f64
    }

    fn non_empty(&self) -> usize {
        self.y.iter().filter(|&&v| v > 0.0).count()
    }

    fn mean(&self) -> Option<f64> {
        let total: f64 = self.y.iter().sum();
        (total > 0.0).then(|| self.x.iter().zip(&self.y).map(|(x, y)| x * y).sum::<f64>() / total)
    }
}

impl From<&Histogram> for FitData {
    fn from(hist: &Histogram) -> Self {
        Self {
            x: hist.centers(),
            y: hist.counts().iter().map(|&c| c as f64).collect(),
            bin_width: hist.bin_width(),
        }
    }
}

struct Problem {
    x: Vec<f64>,
    y: Vec<f64>,
    weight: Vec<f64>,
    min_width: f64,
}

impl Problem {
    fn from_data(data: &FitData) -> Self {
        let weight = data.y.iter().map(|&c| 1.0 / c.max(1.0)).collect();
        Self {
            x: data.x.clone(),
            y: data.y.clone(),
            weight,
            min_width: 1e-6 * data.bin_width,
        }
    }

    fn cost(&self, p: &[f64]) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .zip(&self.weight)
            .map(|((&x, &y), &w)| {
                let r = model(p, x) - y;
                w * r * r
            })
            .sum()
    }

    /// Normal matrix JᵀWJ and gradient JᵀWr.
    fn normal_equations(&self, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let k = p.len();
        let mut jtj = DMatrix::<f64>::zeros(k, k);
        let mut jtr = DVector::<f64>::zeros(k);
        let mut g = vec![0.0; k];
        for ((&x, &y), &w) in self.x.iter().zip(&self.y).zip(&self.weight) {
            let f = model_with_gradient(p, x, &mut g);
            let r = f - y;
            for i in 0..k {
                jtr[i] += w * g[i] * r;
                for j in 0..=i {
                    jtj[(i, j)] += w * g[i] * g[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                jtj[(j, i)] = jtj[(i, j)];
            }
        }
        (jtj, jtr)
    }

    fn project(&self, p: &mut [f64]) {
        p[A] = p[A].max(0.0);
        p[W] = p[W].max(self.min_width);
        p[V] = p[V].clamp(0.0, 1.0);
        p[L] = p[L].max(self.min_width);
        p[PHI] = wrap_phase(p[PHI]);
    }
}

fn wrap_phase(phi: f64) -> f64 {
    let mut w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

fn parameter_scale(p: &[f64], i: usize) -> f64 {
    match i {
        PHI => 1.0,
        X0 => p[W],
        _ => p[i].abs().max(f64::MIN_POSITIVE),
    }
}

struct LmOutcome {
    params: Vec<f64>,
    cost: f64,
    converged: bool,
    iterations: usize,
}

fn levenberg_marquardt(problem: &Problem, start: Vec<f64>) -> LmOutcome {
    let mut p = start;
    problem.project(&mut p);
    let mut cost = problem.cost(&p);
    let mut lambda = 1e-3;
    let k = p.len();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = problem.normal_equations(&p);
        let mut improved = false;
        let mut last_change = f64::INFINITY;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for i in 0..k {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            problem.project(&mut trial);
            let change = (0..k)
                .map(|i| {
                    let d = if i == PHI { wrap_phase(trial[i] - p[i]) } else { trial[i] - p[i] };
                    (d / parameter_scale(&p, i)).abs()
                })
                .fold(0.0, f64::max);
            let trial_cost = problem.cost(&trial);
            last_change = change;
            if trial_cost.is_finite() && trial_cost <= cost {
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                break;
            }
            if change < PARAMETER_TOLERANCE {
                break;
            }
            lambda *= 10.0;
        }
        if last_change < PARAMETER_TOLERANCE {
            converged = true;
            break;
        }
        if !improved {
            // no damping level reduces the cost: stalled at a minimum only
            // if the undamped step is negligible
            converged = gauss_newton_change(&jtj, &jtr, &p) < 1e-6;
            break;
        }
    }
    LmOutcome {
        params: p,
        cost,
        converged,
        iterations,
    }
}

fn gauss_newton_change(jtj: &DMatrix<f64>, jtr: &DVector<f64>, p: &[f64]) -> f64 {
    match jtj.clone().pseudo_inverse(1e-14) {
        Ok(inv) => {
            let step = inv * (-jtr);
            step.iter()
                .enumerate()
                .map(|(i, d)| (d / parameter_scale(p, i)).abs())
                .fold(0.0, f64::max)
        }
        Err(_) => f64::INFINITY,
    }
}

/// Initial period from the dominant peak of the zero-padded Fourier spectrum
/// of the envelope-subtracted counts, searched above two cycles per span.
fn spectral_guess(x: &[f64], d: &[f64], span: f64, bin: f64) -> Result<(f64, f64, f64)> {
    let f_min = 2.0 / span;
    let f_max = 0.5 / bin;
    let df = 1.0 / (8.0 * span);
    let steps = ((f_max - f_min) / df).floor() as usize;
    if steps < 2 {
        return Err(Error::AmbiguousPeriod("histogram too short for a spectral estimate".into()));
    }
    let mut spectrum = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let f = f_min + j as f64 * df;
        let (mut re, mut im) = (0.0, 0.0);
        for (&xi, &di) in x.iter().zip(d) {
            let (s, c) = (2.0 * PI * f * xi).sin_cos();
            re += di * c;
            im -= di * s;
        }
        spectrum.push((f, re, im, re.hypot(im)));
    }
    let (best_idx, best) = spectrum
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
        .map(|(i, s)| (i, *s))
        .unwrap();
    let mut mags: Vec<f64> = spectrum.iter().map(|s| s.3).collect();
    mags.sort_by(f64::total_cmp);
    let median = mags[mags.len() / 2];
    // runner-up local maximum; comparable sidelobes mean leakage, not a fringe
    let runner_up = (1..spectrum.len().saturating_sub(1))
        .filter(|&i| i != best_idx && spectrum[i].3 >= spectrum[i - 1].3 && spectrum[i].3 >= spectrum[i + 1].3)
        .map(|i| spectrum[i].3)
        .fold(0.0, f64::max);
    if !(best.3 > 0.0) || best.3 < 3.0 * median || best_idx == 0 || best.3 < 2.0 * runner_up {
        return Err(Error::AmbiguousPeriod(format!(
            "no dominant spectral peak (peak {:.3e}, median {:.3e})",
            best.3, median
        )));
    }
    // parabolic refinement on the magnitude
    let mut f0 = best.0;
    if best_idx > 0 && best_idx + 1 < spectrum.len() {
        let (a, b, c) = (spectrum[best_idx - 1].3, best.3, spectrum[best_idx + 1].3);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            f0 += 0.5 * (a - c) / denom * df;
        }
    }
    let phase = best.2.atan2(best.1);
    Ok((1.0 / f0, phase, best.3))
}

fn initial_parameters(problem: &Problem, data: &FitData, free_center: bool, guess: Option<FitGuess>) -> Result<Vec<f64>> {
    let guess = guess.unwrap_or_default();
    let total: f64 = problem.y.iter().sum();
    let mean = problem.x.iter().zip(&problem.y).map(|(x, y)| x * y).sum::<f64>() / total;
    let center = if free_center { mean } else { 0.0 };
    let var = problem.x.iter().zip(&problem.y).map(|(x, y)| (x - center).powi(2) * y).sum::<f64>() / total;
    let width = guess
        .envelope_width
        .unwrap_or_else(|| (2.0 * var).sqrt().max(data.bin_width));

    let env: Vec<f64> = problem.x.iter().map(|x| (-((x - center) / width).powi(2)).exp()).collect();
    let amp_est = problem.y.iter().zip(&env).map(|(y, e)| y * e).sum::<f64>() / env.iter().map(|e| e * e).sum::<f64>();
    let amplitude = guess.amplitude.unwrap_or(amp_est);

    let (period, phase, visibility) = match guess.period {
        Some(period) => (period, guess.phase.unwrap_or(0.0), guess.visibility.unwrap_or(0.8)),
        None => {
            let d: Vec<f64> = problem.y.iter().zip(&env).map(|(y, e)| y - amp_est * e).collect();
            let (period, phase, mag) = spectral_guess(&problem.x, &d, data.span(), data.bin_width)?;
            let env_sum: f64 = env.iter().sum();
            let vis = (2.0 * mag / (amp_est * env_sum)).clamp(0.05, 1.0);
            (period, guess.phase.unwrap_or(phase), guess.visibility.unwrap_or(vis))
        }
    };

    let mut p = vec![amplitude, width, visibility, period, phase];
    if free_center {
        p.push(center);
    }
    Ok(p)
}

/// Fit the windowed-fringe model to a histogram.
pub fn fit_fringe(hist: &Histogram, options: &FitOptions) -> Result<FringeFit> {
    fit_fringe_data(&FitData::from(hist), options)
}

pub fn fit_fringe_data(data: &FitData, options: &FitOptions) -> Result<FringeFit> {
    if data.non_empty() < MIN_NON_EMPTY_BINS {
        return Err(Error::FitPrecondition(format!(
            "need at least {MIN_NON_EMPTY_BINS} non-empty bins, got {}",
            data.non_empty()
        )));
    }
    let problem = Problem::from_data(data);
    let free_center = options
        .free_center
        .unwrap_or_else(|| data.mean().map(|m| m.abs() > data.bin_width).unwrap_or(false));
    let start = initial_parameters(&problem, data, free_center, options.initial_guess)?;
    if start[L] * 2.0 > data.span() {
        return Err(Error::FitPrecondition("histogram spans fewer than two periods".into()));
    }

    let mut best = levenberg_marquardt(&problem, start.clone());
    if options.multistart {
        for k in 1..8 {
            let mut s = start.clone();
            s[PHI] = wrap_phase(s[PHI] + k as f64 * PI / 4.0);
            let out = levenberg_marquardt(&problem, s);
            if out.cost < best.cost {
                best = out;
            }
        }
    }

    let p = best.params;
    let dof = problem.x.len().saturating_sub(p.len()).max(1);
    let (jtj, _) = problem.normal_equations(&p);
    let cov = jtj.clone().try_inverse().or_else(|| jtj.pseudo_inverse(1e-14).ok());
    let sd = |i: usize| cov.as_ref().map(|c| c[(i, i)].max(0.0).sqrt()).unwrap_or(f64::NAN);
    let fringe_amp_err = cov
        .as_ref()
        .map(|c| {
            let var = p[V] * p[V] * c[(A, A)] + p[A] * p[A] * c[(V, V)] + 2.0 * p[A] * p[V] * c[(A, V)];
            var.max(0.0).sqrt()
        })
        .unwrap_or(f64::NAN);

    Ok(FringeFit {
        amplitude: p[A],
        period: p[L],
        phase: p[PHI],
        envelope_width: p[W],
        visibility: p[V],
        center: p.get(X0).copied(),
        residual: best.cost / dof as f64,
        converged: best.converged,
        iterations: best.iterations,
        parameter_uncertainties: ParameterUncertainties {
            amplitude: sd(A),
            period: sd(L),
            phase: sd(PHI),
            envelope_width: sd(W),
            visibility: sd(V),
            center: free_center.then(|| sd(X0)),
            fringe_amplitude: fringe_amp_err,
        },
    })
}

/// A ratio with its propagated one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub uncertainty: f64,
}

fn quotient(a: f64, sa: f64, b: f64, sb: f64) -> Ratio {
    let value = a / b;
    let rel = ((sa / a).powi(2) + (sb / b).powi(2)).sqrt();
    Ratio {
        value,
        uncertainty: value.abs() * rel,
    }
}

/// Period enhancement Λ_ref / Λ_test.
pub fn enhancement_ratio(fit_ref: &FringeFit, fit_test: &FringeFit) -> Result<Ratio> {
    if !fit_ref.converged || !fit_test.converged {
        return Err(Error::InvalidArgument("enhancement ratio needs converged fits".into()));
    }
    Ok(quotient(
        fit_ref.period,
        fit_ref.parameter_uncertainties.period,
        fit_test.period,
        fit_test.parameter_uncertainties.period,
    ))
}

/// Fringe amplitude per generated event, run `a` over run `b`:
/// `(A_a·V_a/G_a) / (A_b·V_b/G_b)`.
pub fn amplitude_ratio(hist_a: &Histogram, hist_b: &Histogram, fit_a: &FringeFit, fit_b: &FringeFit) -> Result<Ratio> {
    if !fit_a.converged || !fit_b.converged {
        return Err(Error::InvalidArgument("amplitude ratio needs converged fits".into()));
    }
    if hist_a.total_generated() == 0 || hist_b.total_generated() == 0 {
        return Err(Error::InvalidArgument("both runs must record generated events".into()));
    }
    let b = fit_b.fringe_amplitude();
    if b == 0.0 {
        return Err(Error::UndefinedRatio("denominator fit has zero visibility or amplitude".into()));
    }
    let ga = hist_a.total_generated() as f64;
    let gb = hist_b.total_generated() as f64;
    Ok(quotient(
        fit_a.fringe_amplitude() / ga,
        fit_a.parameter_uncertainties.fringe_amplitude / ga,
        b / gb,
        fit_b.parameter_uncertainties.fringe_amplitude / gb,
    ))
}

//! Derived constants and coupling thresholds, synchronization gaps, decay-rate
//! fitting and the empirical checks built on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{norm_l2, norm_l4, seminorm_h1, Field, Grid};
use crate::model::{ModelError, NetworkState, Parameters};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("neuron pair ({i}, {j}) invalid for m = {m}")]
    Pair { i: usize, j: usize, m: usize },
    #[error("need at least {need} samples, got {have}")]
    TooFewSamples { need: usize, have: usize },
    #[error("times and gaps differ in length ({times} vs {gaps})")]
    Length { times: usize, gaps: usize },
    #[error("every sampled field was degenerate (zero gradient)")]
    AllDegenerate,
    #[error("at least one sample required")]
    NoSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Constants and thresholds derived from a parameter set, a domain measure
/// and an interpolation constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub lambda: f64,
    #[serde(rename = "M")]
    pub m_bound: f64,
    #[serde(rename = "K")]
    pub k_radius: f64,
    /// Multiplier `C = 8β²/b` on the potential gap.
    #[serde(rename = "Cmult")]
    pub c_mult: f64,
    #[serde(rename = "Pmin")]
    pub p_min: f64,
    #[serde(rename = "Qmin")]
    pub q_min: f64,
    /// `ξ(P)` at the parameter set's own P.
    pub xi: f64,
    pub kappa: f64,
    pub cstar: f64,
    pub omega_measure: f64,
}

impl DerivedConstants {
    /// `max{C₁,1} / min{C₁,1}`
    pub fn envelope_prefactor(&self) -> f64 {
        self.c1.max(1.0) / self.c1.min(1.0)
    }

    /// `M·|Ω| / (λ·min{C₁,1})`, the large-time level of the absorbing envelope.
    pub fn envelope_asymptote(&self) -> f64 {
        self.m_bound * self.omega_measure / (self.lambda * self.c1.min(1.0))
    }

    /// Envelope value at elapsed time `t` for initial quasi-norm `y0`.
    pub fn envelope(&self, t: f64, y0: f64) -> f64 {
        self.envelope_prefactor() * (-self.lambda * t).exp() * y0 + self.envelope_asymptote()
    }

    /// `ξ(P) = 2m(P − P_min)` for an arbitrary coupling strength.
    pub fn xi_at(&self, coupling_p: f64, m: usize) -> f64 {
        2.0 * (m as f64 * coupling_p - m as f64 * self.p_min)
    }
}

/// `C₁ = (β²/2 + 1/(2k₂³) + 4)/b`
fn c1_of(p: &Parameters) -> f64 {
    (p.beta * p.beta / 2.0 + 1.0 / (2.0 * p.k2.powi(3)) + 4.0) / p.b
}

/// `κ(ξ) = min{ξ, 1, r/2, 2k₂}`
pub fn kappa_of(xi: f64, p: &Parameters) -> f64 {
    xi.min(1.0).min(p.r / 2.0).min(2.0 * p.k2)
}

pub fn compute_constants(p: &Parameters, omega_measure: f64, cstar: f64) -> Result<DerivedConstants, AnalysisError> {
    p.validate()?;
    for (name, value) in [("omega_measure", omega_measure), ("cstar", cstar)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(AnalysisError::NonPositive { name, value });
        }
    }
    let m = p.m as f64;
    let c1 = c1_of(p);
    let c2 = 0.25 * (c1 * p.k1 * (p.c.abs() + p.gamma * p.gamma / p.delta) + 0.25).powi(2);
    let lambda = 0.5 * 1f64.min(p.r).min(p.k2);
    let m_bound = m
        * (c2
            + (c1 * p.a).powi(4)
            + c1 * p.je * p.je
            + (c1 * c1 * (2.0 + 1.0 / p.r) + c1).powi(2)
            + 2.0 * p.alpha * p.alpha
            + p.q * p.q * p.ue * p.ue / p.r
            + p.q.powi(4) / (p.r * p.r));
    let level = m_bound / (lambda * c1.min(1.0));
    let k_radius = (level + level.sqrt()) * omega_measure + 1.0;
    let beta2 = p.beta * p.beta;
    let c_mult = 8.0 * beta2 / p.b;
    let p_min = (4.0 * p.a * p.a / p.b
        + c_mult * (1.0 + 1.0 / p.r)
        + p.b / (16.0 * beta2) * (1.0 + p.q * p.q / p.r)
        + p.k1 * (p.c.abs() + p.gamma * p.gamma / (4.0 * p.delta)))
        / m;
    let k1sq = p.k1 * p.k1;
    let q_min = ((1.0 + 32.0 * beta2 * k1sq * p.gamma * p.gamma / (p.b * p.b))
        + k_radius * k_radius / (8.0 * p.eta2.powi(3))
            * (64.0 * beta2 * cstar * k1sq * p.delta * p.delta / (p.b * p.b)).powi(4))
        / (2.0 * m);
    let xi = 2.0 * (m * p.coupling_p - m * p_min);
    let kappa = kappa_of(xi, p);
    Ok(DerivedConstants {
        c1,
        c2,
        lambda,
        m_bound,
        k_radius,
        c_mult,
        p_min,
        q_min,
        xi,
        kappa,
        cstar,
        omega_measure,
    })
}

/// Squared E-norm of the difference of neurons `i` and `j`:
/// `‖u_i−u_j‖² + ‖v_i−v_j‖² + ‖w_i−w_j‖² + ‖ρ_i−ρ_j‖²`.
pub fn pairwise_gap(net: &NetworkState, grid: &Grid, i: usize, j: usize) -> Result<f64, AnalysisError> {
    let m = net.m();
    if i == j || i >= m || j >= m {
        return Err(AnalysisError::Pair { i, j, m });
    }
    Ok(gap_unchecked(net, grid.cell_volume(), i, j))
}

pub(crate) fn gap_unchecked(net: &NetworkState, cell_volume: f64, i: usize, j: usize) -> f64 {
    let (a, b) = (&net.neurons[i], &net.neurons[j]);
    [(&a.u, &b.u), (&a.v, &b.v), (&a.w, &b.w), (&a.rho, &b.rho)]
        .into_iter()
        .map(|(x, y)| {
            let sq: f64 = x.values().iter().zip(y.values()).map(|(p, q)| (p - q) * (p - q)).sum();
            sq * cell_volume
        })
        .sum()
}

/// Minimum number of samples handed to [`fit_decay_rate`].
pub const MIN_FIT_INPUT: usize = 40;
/// Minimum number of samples inside the fitting window.
pub const MIN_FIT_WINDOW: usize = 20;
pub const DEFAULT_FIT_FLOOR: f64 = 1e-20;
pub const DEFAULT_TRANSIENT_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `κ̂ = −slope` of `log(gap)` against time; zero when the gap does not decay.
    pub rate: f64,
    pub window: (f64, f64),
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    pub samples: usize,
    pub decaying: bool,
}

/// Least-squares exponential rate of a gap series. The first
/// `transient_fraction` of the samples is discarded and the window ends at the
/// first sample below `floor`.
pub fn fit_decay_rate(times: &[f64], gaps: &[f64], floor: f64, transient_fraction: f64) -> Result<DecayFit, AnalysisError> {
    if times.len() != gaps.len() {
        return Err(AnalysisError::Length { times: times.len(), gaps: gaps.len() });
    }
    if times.len() < MIN_FIT_INPUT {
        return Err(AnalysisError::TooFewSamples { need: MIN_FIT_INPUT, have: times.len() });
    }
    let start = ((transient_fraction.clamp(0.0, 1.0) * times.len() as f64).ceil() as usize).min(times.len());
    let end = gaps[start..].iter().position(|&g| !(g >= floor && g > 0.0)).map_or(times.len(), |k| start + k);
    let n = end - start;
    if n < MIN_FIT_WINDOW {
        return Err(AnalysisError::TooFewSamples { need: MIN_FIT_WINDOW, have: n });
    }
    let xs = &times[start..end];
    let ys: Vec<f64> = gaps[start..end].iter().map(|g| g.ln()).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / nf).sqrt();
    let decaying = slope < 0.0;
    Ok(DecayFit {
        rate: if decaying { -slope } else { 0.0 },
        window: (xs[0], xs[n - 1]),
        residual,
        samples: n,
        decaying,
    })
}

/// Finite-horizon surrogate of the asynchronous degree: the sum over pairs of
/// the largest gap in the last `tail_window` fraction of samples.
pub fn estimate_async_degree(pair_gaps: &[Vec<f64>], tail_window: f64) -> f64 {
    pair_gaps
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let tail = ((tail_window.clamp(0.0, 1.0) * g.len() as f64).ceil() as usize).clamp(1, g.len());
            g[g.len() - tail..].iter().copied().fold(0.0, f64::max)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub pass: bool,
    /// Largest ratio of the sample to the envelope; `< 1` means inside.
    pub margin: f64,
}

/// Checks `y(t) ≤ (max{C₁,1}/min{C₁,1})·e^{−λ(t−t₀)}·y(t₀) + M|Ω|/(λ·min{C₁,1})`
/// at every sample, where `y` is the quasi-norm.
pub fn check_absorbing_envelope(times: &[f64], y: &[f64], dc: &DerivedConstants) -> EnvelopeCheck {
    let (Some(&t0), Some(&y0)) = (times.first(), y.first()) else {
        return EnvelopeCheck { pass: true, margin: 0.0 };
    };
    let mut pass = true;
    let mut margin: f64 = 0.0;
    for (&t, &yt) in times.iter().zip(y) {
        let env = dc.envelope(t - t0, y0);
        pass &= yt <= env;
        margin = margin.max(yt / env);
    }
    EnvelopeCheck { pass, margin }
}

/// Interpolation index for `‖R‖²_{L⁴} ≤ C*‖∇R‖^{2θ}‖R‖^{2(1−θ)}` in dimension n,
/// solving `−n/4 = θ(1 − n/2) − (1 − θ)n/2`, i.e. `θ = n/4`.
pub fn interpolation_index(dim: usize) -> f64 {
    dim as f64 / 4.0
}

/// `‖R‖²_{L⁴} / (|R|_{H¹}^{2θ}·‖R‖^{2(1−θ)})`, or `None` for a zero-gradient field.
pub fn gn_ratio(field: &Field, grid: &Grid) -> Option<f64> {
    let theta = interpolation_index(grid.dim());
    let grad = seminorm_h1(field, grid);
    let l2 = norm_l2(field, grid);
    if !(grad > 0.0 && l2 > 0.0 && grad.is_finite()) {
        return None;
    }
    let l4 = norm_l4(field, grid);
    Some(l4 * l4 / (grad.powf(2.0 * theta) * l2.powf(2.0 * (1.0 - theta))))
}

/// Highest cosine mode per axis used by the interpolation-constant estimator.
const GN_MAX_MODE: usize = 8;
/// Upper bound of the random smoothing time (in units of mode index²).
const GN_MAX_SMOOTHING: f64 = 0.1;

/// Seeded zero-mean random smooth field: a cosine series in the Neumann
/// eigenmodes with uniform coefficients, damped by a random diffusion time.
pub fn random_smooth_field(grid: &Grid, rng: &mut impl Rng) -> Field {
    let modes: Vec<usize> = grid.axes().iter().map(|a| GN_MAX_MODE.min((a.cells / 4).max(1))).collect();
    let smoothing = rng.gen::<f64>() * GN_MAX_SMOOTHING;
    let mut terms = Vec::new();
    let ky_max = if grid.dim() == 2 { modes[1] } else { 0 };
    for ky in 0..=ky_max {
        for kx in 0..=modes[0] {
            if kx == 0 && ky == 0 {
                continue;
            }
            let amp = (2.0 * rng.gen::<f64>() - 1.0) * (-smoothing * (kx * kx + ky * ky) as f64).exp();
            terms.push((kx as f64, ky as f64, amp));
        }
    }
    let lx = grid.axis(0).extent;
    let ly = if grid.dim() == 2 { grid.axis(1).extent } else { 1.0 };
    grid.sample(|[x, y]| {
        terms
            .iter()
            .map(|&(kx, ky, a)| {
                a * (kx * std::f64::consts::PI * x / lx).cos() * (ky * std::f64::consts::PI * y / ly).cos()
            })
            .sum()
    })
}

/// Empirical lower bound for the interpolation constant `C*(Ω)`: the largest
/// [`gn_ratio`] over `n_samples` seeded random smooth zero-mean fields.
pub fn estimate_gn_constant(grid: &Grid, n_samples: usize, seed: u64) -> Result<f64, AnalysisError> {
    if n_samples == 0 {
        return Err(AnalysisError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_samples)
        .filter_map(|_| gn_ratio(&random_smooth_field(grid, &mut rng), grid))
        .fold(None, |best: Option<f64>, r| Some(best.map_or(r, |b| b.max(r))))
        .ok_or(AnalysisError::AllDegenerate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "synchronized")]
    Synchronized,
    #[serde(rename = "synchronized (trivial)")]
    SynchronizedTrivial,
    #[serde(rename = "not synchronized")]
    NotSynchronized,
    #[serde(rename = "diverged")]
    Diverged,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Synchronized => "synchronized",
            Verdict::SynchronizedTrivial => "synchronized (trivial)",
            Verdict::NotSynchronized => "not synchronized",
            Verdict::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub i: usize,
    pub j: usize,
    /// Timeseries column holding this pair's gap, if it was written out.
    pub column: Option<String>,
    pub rate: Option<f64>,
    pub window: Option<(f64, f64)>,
    pub residual: Option<f64>,
    pub fit_samples: usize,
    pub decaying: Option<bool>,
    pub fit_error: Option<String>,
    pub final_gap: f64,
}

/// Knobs for turning a gap history into a [`SyncReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncCriteria {
    pub fit_floor: f64,
    pub transient_fraction: f64,
    pub tail_window: f64,
    /// Final gap at or below which every pair counts as synchronized.
    pub sync_tolerance: f64,
}

impl Default for SyncCriteria {
    fn default() -> Self {
        Self {
            fit_floor: DEFAULT_FIT_FLOOR,
            transient_fraction: DEFAULT_TRANSIENT_FRACTION,
            tail_window: 0.1,
            sync_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub per_pair: Vec<PairReport>,
    /// Slowest fitted pair rate, when every pair could be fitted.
    pub fitted_rate: Option<f64>,
    pub predicted_kappa: f64,
    pub p_min: f64,
    pub q_min: f64,
    pub coupling_p: f64,
    pub coupling_q: f64,
    pub p_above_threshold: bool,
    pub q_above_threshold: bool,
    pub degs_estimate: f64,
    pub final_max_gap: f64,
    pub envelope: EnvelopeCheck,
    pub verdict: Verdict,
}

/// Assembles a [`SyncReport`] from sampled times, per-pair gap histories and
/// quasi-norm samples (all sharing `times`).
pub fn assess_synchronization(
    times: &[f64],
    pairs: &[((usize, usize), Vec<f64>)],
    quasi_norms: &[f64],
    p: &Parameters,
    dc: &DerivedConstants,
    criteria: &SyncCriteria,
) -> SyncReport {
    let per_pair: Vec<PairReport> = pairs
        .iter()
        .map(|&((i, j), ref gaps)| {
            let fit = fit_decay_rate(times, gaps, criteria.fit_floor, criteria.transient_fraction);
            let (rate, window, residual, fit_samples, decaying, fit_error) = match fit {
                Ok(f) => (Some(f.rate), Some(f.window), Some(f.residual), f.samples, Some(f.decaying), None),
                Err(e) => (None, None, None, 0, None, Some(e.to_string())),
            };
            PairReport {
                i,
                j,
                column: Some(format!("gap_{}_{}", i + 1, j + 1)),
                rate,
                window,
                residual,
                fit_samples,
                decaying,
                fit_error,
                final_gap: gaps.last().copied().unwrap_or(0.0),
            }
        })
        .collect();
    let fitted_rate = per_pair
        .iter()
        .map(|pr| pr.rate)
        .collect::<Option<Vec<f64>>>()
        .and_then(|rates| rates.into_iter().reduce(f64::min));
    let final_max_gap = per_pair.iter().map(|pr| pr.final_gap).fold(0.0, f64::max);
    let trivially_zero = pairs.iter().all(|(_, g)| g.iter().all(|&x| x == 0.0));
    let verdict = if trivially_zero {
        Verdict::SynchronizedTrivial
    } else if final_max_gap <= criteria.sync_tolerance {
        Verdict::Synchronized
    } else {
        Verdict::NotSynchronized
    };
    let gap_series: Vec<Vec<f64>> = pairs.iter().map(|(_, g)| g.clone()).collect();
    SyncReport {
        per_pair,
        fitted_rate,
        predicted_kappa: dc.kappa,
        p_min: dc.p_min,
        q_min: dc.q_min,
        coupling_p: p.coupling_p,
        coupling_q: p.coupling_q,
        p_above_threshold: p.coupling_p > dc.p_min,
        q_above_threshold: p.coupling_q >= dc.q_min,
        degs_estimate: estimate_async_degree(&gap_series, criteria.tail_window),
        final_max_gap,
        envelope: check_absorbing_envelope(times, quasi_norms, dc),
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NeuronState;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn all_ones_constants() {
        let dc = compute_constants(&Parameters::all_ones(2), 1.0, 1.0).unwrap();
        assert!(rel(dc.c1, 5.0) < 1e-15);
        assert!(rel(dc.c2, 26.265625) < 1e-15);
        assert!(rel(dc.m_bound, 14120.53125) < 1e-15);
        assert!(rel(dc.p_min, 10.6875) < 1e-15);
        assert!(rel(dc.envelope_asymptote(), 28241.0625) < 1e-15);
        assert!(rel(dc.lambda, 0.5) < 1e-15);
        assert!(rel(dc.c_mult, 8.0) < 1e-15);
        assert!(dc.k_radius > 1.0);
    }

    #[test]
    fn lambda_takes_half_minimum() {
        let mut p = Parameters::all_ones(2);
        p.r = 0.5;
        p.k2 = 2.0;
        assert_eq!(compute_constants(&p, 1.0, 1.0).unwrap().lambda, 0.25);
    }

    #[test]
    fn xi_and_kappa_above_threshold() {
        let mut p = Parameters::all_ones(2);
        p.coupling_p = 2.0 * 10.6875;
        let dc = compute_constants(&p, 1.0, 1.0).unwrap();
        assert!(rel(dc.xi, 42.75) < 1e-15);
        assert_eq!(dc.kappa, 0.5);
    }

    #[test]
    fn xi_sign_flips_at_threshold() {
        let base = compute_constants(&Parameters::all_ones(3), 1.0, 1.0).unwrap();
        for (dp, positive) in [(1e-9, true), (-1e-9, false)] {
            let mut p = Parameters::all_ones(3);
            p.coupling_p = base.p_min + dp;
            let dc = compute_constants(&p, 1.0, 1.0).unwrap();
            assert_eq!(dc.xi > 0.0, positive);
            assert_eq!(dc.kappa > 0.0, positive);
        }
    }

    #[test]
    fn threshold_monotonicity() {
        let pmin = |m| compute_constants(&Parameters::all_ones(m), 1.0, 1.0).unwrap().p_min;
        assert!(pmin(3) < pmin(2) && pmin(5) < pmin(3));
        let p = Parameters::all_ones(2);
        let q1 = compute_constants(&p, 1.0, 0.5).unwrap().q_min;
        let q2 = compute_constants(&p, 1.0, 0.6).unwrap().q_min;
        assert!(q2 > q1);
        // K grows with |Ω|, and Qmin with K
        let a = compute_constants(&p, 1.0, 1.0).unwrap();
        let b = compute_constants(&p, 2.0, 1.0).unwrap();
        assert!(b.k_radius > a.k_radius && b.q_min > a.q_min);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..50 {
            let mut p = Parameters::all_ones(2);
            p.coupling_p = k as f64;
            let dc = compute_constants(&p, 1.0, 1.0).unwrap();
            assert!(dc.kappa >= prev);
            assert!(dc.kappa <= 0.5);
            prev = dc.kappa;
        }
        assert_eq!(prev, 0.5);
    }

    #[test]
    fn constants_reject_bad_inputs() {
        let p = Parameters::all_ones(2);
        assert!(matches!(compute_constants(&p, 0.0, 1.0), Err(AnalysisError::NonPositive { name: "omega_measure", .. })));
        assert!(matches!(compute_constants(&p, 1.0, -1.0), Err(AnalysisError::NonPositive { name: "cstar", .. })));
        let mut bad = p.clone();
        bad.k2 = 0.0;
        assert!(matches!(compute_constants(&bad, 1.0, 1.0), Err(AnalysisError::Model(_))));
    }

    fn two_neurons(g: &Grid, du: f64) -> NetworkState {
        let s = NeuronState {
            u: g.sample(|[x, _]| x.sin()),
            v: g.sample(|[x, _]| x),
            w: g.constant(0.2),
            rho: g.sample(|[x, _]| x.cos()),
        };
        let mut t = s.clone();
        t.u.values_mut().iter_mut().for_each(|x| *x += du);
        NetworkState::new(vec![s, t], 0.0).unwrap()
    }

    #[test]
    fn gap_examples() {
        let g = Grid::line(1.0, 32).unwrap();
        let net = two_neurons(&g, 1.0);
        assert!(rel(pairwise_gap(&net, &g, 0, 1).unwrap(), 1.0) < 1e-13);
        assert_eq!(pairwise_gap(&net, &g, 0, 1), pairwise_gap(&net, &g, 1, 0));
        assert_eq!(pairwise_gap(&two_neurons(&g, 0.0), &g, 0, 1).unwrap(), 0.0);
        assert!(matches!(pairwise_gap(&net, &g, 1, 1), Err(AnalysisError::Pair { .. })));
        assert!(matches!(pairwise_gap(&net, &g, 0, 2), Err(AnalysisError::Pair { .. })));
    }

    #[test]
    fn gap_square_root_satisfies_triangle_inequality() {
        let g = Grid::line(1.0, 16).unwrap();
        let mk = |s: f64| NeuronState {
            u: g.sample(|[x, _]| (s * x).sin()),
            v: g.sample(|[x, _]| s * x * x),
            w: g.constant(s),
            rho: g.sample(|[x, _]| (x + s).cos()),
        };
        let net = NetworkState::new(vec![mk(0.3), mk(1.7), mk(-2.2)], 0.0).unwrap();
        let d = |i, j| pairwise_gap(&net, &g, i, j).unwrap().sqrt();
        assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-14);
        assert!(d(0, 1) <= d(0, 2) + d(2, 1) + 1e-14);
    }

    fn series(n: usize, dt: f64, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let g = t.iter().map(|&t| f(t)).collect();
        (t, g)
    }

    #[test]
    fn fit_recovers_exact_exponential() {
        let (t, g) = series(100, 0.2, |t| (-0.5 * t).exp());
        let fit = fit_decay_rate(&t, &g, DEFAULT_FIT_FLOOR, DEFAULT_TRANSIENT_FRACTION).unwrap();
        assert!((fit.rate - 0.5).abs() < 1e-6);
        assert!(fit.decaying);
        assert_eq!(fit.samples, 70);
        let (t, g8) = series(100, 0.2, |t| 8.0 * (-0.5 * t).exp());
        let fit8 = fit_decay_rate(&t, &g8, DEFAULT_FIT_FLOOR, DEFAULT_TRANSIENT_FRACTION).unwrap();
        assert!((fit8.rate - 0.5).abs() < 1e-6);
    }

    #[test]
    fn fit_ignores_noisy_plateau_in_transient() {
        // plateau with deterministic wiggle for t < 6, then clean decay at 0.8
        let (t, g) = series(200, 0.1, |t| {
            if t < 6.0 {
                1.0 + 0.3 * (7.3 * t).sin()
            } else {
                (-0.8 * (t - 6.0)).exp()
            }
        });
        let fit = fit_decay_rate(&t, &g, DEFAULT_FIT_FLOOR, 0.35).unwrap();
        assert!((fit.rate - 0.8).abs() < 0.05 * 0.8, "rate {}", fit.rate);
    }

    #[test]
    fn fit_stops_at_floor_and_flags_growth() {
        let (t, g) = series(100, 1.0, |t| (-2.0 * t).exp());
        // e^{-2t} < 1e-20 from t = 24 on: window 30.. is empty
        assert!(matches!(
            fit_decay_rate(&t, &g, 1e-20, 0.3),
            Err(AnalysisError::TooFewSamples { need: MIN_FIT_WINDOW, have: 0 })
        ));
        let (t, g) = series(60, 0.5, |t| (0.1 * t).exp());
        let fit = fit_decay_rate(&t, &g, 1e-20, 0.3).unwrap();
        assert!(!fit.decaying);
        assert_eq!(fit.rate, 0.0);
        assert!(matches!(fit_decay_rate(&t[..39], &g[..39], 1e-20, 0.3), Err(AnalysisError::TooFewSamples { .. })));
    }

    #[test]
    fn async_degree_examples() {
        assert_eq!(estimate_async_degree(&[vec![0.0; 10], vec![0.0; 10]], 0.2), 0.0);
        let mut a = vec![5.0; 10];
        a[8] = 0.25;
        a[9] = 0.1;
        assert_eq!(estimate_async_degree(&[a, vec![0.0; 10], vec![0.0; 10]], 0.2), 0.25);
        let small = vec![vec![1e-9; 10]; 3];
        assert!(estimate_async_degree(&small, 0.5) <= 3.0 * 1e-9);
    }

    #[test]
    fn envelope_examples() {
        let dc = compute_constants(&Parameters::all_ones(2), 1.0, 1.0).unwrap();
        let t: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let zero = vec![0.0; 20];
        assert_eq!(check_absorbing_envelope(&t, &zero, &dc), EnvelopeCheck { pass: true, margin: 0.0 });

        let y0 = 1e5;
        let mut y: Vec<f64> = t.iter().map(|&s| 0.5 * dc.envelope(s, y0)).collect();
        y[0] = y0;
        let ok = check_absorbing_envelope(&t, &y, &dc);
        assert!(ok.pass && ok.margin < 1.0);
        y[7] = 1.01 * dc.envelope(7.0, y0);
        let bad = check_absorbing_envelope(&t, &y, &dc);
        assert!(!bad.pass && bad.margin > 1.0);
    }

    #[test]
    fn gn_ratio_skips_constants_and_is_scale_invariant() {
        let g = Grid::line(1.0, 64).unwrap();
        assert_eq!(gn_ratio(&g.constant(3.0), &g), None);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = random_smooth_field(&g, &mut rng);
        let r = gn_ratio(&f, &g).unwrap();
        let mut scaled = f.clone();
        scaled.scale(-37.5);
        assert!(rel(gn_ratio(&scaled, &g).unwrap(), r) < 1e-12);
        assert!(f.mean().abs() < 1e-12);
    }

    #[test]
    fn gn_estimate_is_deterministic_and_refinement_stable() {
        let coarse = Grid::line(1.0, 128).unwrap();
        let fine = Grid::line(1.0, 256).unwrap();
        let a = estimate_gn_constant(&coarse, 200, 5).unwrap();
        assert_eq!(a.to_bits(), estimate_gn_constant(&coarse, 200, 5).unwrap().to_bits());
        let b = estimate_gn_constant(&fine, 200, 5).unwrap();
        assert!(rel(a, b) < 0.10, "{a} vs {b}");
        assert_eq!(estimate_gn_constant(&coarse, 0, 5), Err(AnalysisError::NoSamples));
        let g2 = Grid::rect([1.0, 1.0], [32, 32]).unwrap();
        assert!(estimate_gn_constant(&g2, 20, 1).unwrap() > 0.0);
    }

    #[test]
    fn interpolation_indices() {
        assert_eq!(interpolation_index(3), 0.75);
        assert_eq!(interpolation_index(2), 0.5);
        assert_eq!(interpolation_index(1), 0.25);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn field(g: &Grid, values: &[f64]) -> Field {
            assert_eq!(values.len(), g.len());
            Field::from_vec(values.to_vec())
        }

        proptest! {
            #[test]
            fn fit_recovers_any_exponential(rate in 0.01..5.0f64, amp in 1e-6..1e6f64, n in 40usize..200) {
                let dt = 5.0 / (rate * n as f64);
                let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
                let g: Vec<f64> = t.iter().map(|&t| amp * (-rate * t).exp()).collect();
                let fit = fit_decay_rate(&t, &g, 1e-300, 0.3).unwrap();
                prop_assert!((fit.rate - rate).abs() <= 1e-6 * rate);
            }

            #[test]
            fn xi_positive_iff_above_threshold(m in 2usize..10, offset in -5.0..5.0f64) {
                let base = compute_constants(&Parameters::all_ones(m), 1.0, 1.0).unwrap();
                let mut p = Parameters::all_ones(m);
                p.coupling_p = (base.p_min + offset).max(0.0);
                let dc = compute_constants(&p, 1.0, 1.0).unwrap();
                prop_assert_eq!(dc.xi > 0.0, p.coupling_p > base.p_min);
            }

            #[test]
            fn gap_root_is_pseudometric(
                vals in proptest::collection::vec(proptest::collection::vec(-3.0..3.0f64, 4 * 12), 3)
            ) {
                let g = Grid::line(2.0, 12).unwrap();
                let neurons = vals
                    .iter()
                    .map(|v| NeuronState {
                        u: field(&g, &v[0..12]),
                        v: field(&g, &v[12..24]),
                        w: field(&g, &v[24..36]),
                        rho: field(&g, &v[36..48]),
                    })
                    .collect();
                let net = NetworkState::new(neurons, 0.0).unwrap();
                let d = |i, j| pairwise_gap(&net, &g, i, j).unwrap().sqrt();
                prop_assert_eq!(d(0, 1), d(1, 0));
                prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
            }

            #[test]
            fn gn_ratio_scale_invariant(seed in 0u64..1000, s in -1e3..1e3f64) {
                prop_assume!(s.abs() > 1e-3);
                let g = Grid::rect([1.0, 1.5], [16, 12]).unwrap();
                let f = random_smooth_field(&g, &mut ChaCha8Rng::seed_from_u64(seed));
                let mut scaled = f.clone();
                scaled.scale(s);
                let (a, b) = (gn_ratio(&f, &g).unwrap(), gn_ratio(&scaled, &g).unwrap());
                prop_assert!((a - b).abs() <= 1e-12 * a);
            }
        }
    }
}

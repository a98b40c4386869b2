//! Fixed-step time integration of the network.
//!
//! Two schemes are provided:
//!
//! * `explicit-rk4`: classical four-stage Runge–Kutta on the full right-hand side.
//!   Subject to the explicit-diffusion limit `h_min² / (2·dim·max(η₁, η₂))`.
//! * `imex-be`: backward Euler for everything linear in u and ρ (diffusion and
//!   the all-to-all coupling), forward Euler for the reaction terms. The
//!   coupling operator `Σ_j P(x_j − x_i) = −mP(x_i − x̄)` is diagonal in the
//!   mean/deviation split, so each implicit solve is a Neumann tridiagonal
//!   system (per line in 1D, x then y sweeps in 2D).
//!
//! Blow-up is detected after every accepted step: any non-finite value, or a
//! quasi-norm above [`BLOWUP_QUASI_NORM`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{quasi_norm, Grid};
use crate::model::{full_rhs_into, reaction_into, Component, ModelError, NetworkState, NeuronState, Parameters};

/// Quasi-norm above which a trajectory is declared divergent.
pub const BLOWUP_QUASI_NORM: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Divergence {
    NonFinite { neuron: usize, component: Component },
    QuasiNorm { value: f64 },
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Divergence::NonFinite { neuron, component } => {
                write!(f, "non-finite {} in neuron {}", component.name(), neuron + 1)
            }
            Divergence::QuasiNorm { value } => write!(f, "quasi-norm {value:e} exceeds {BLOWUP_QUASI_NORM:e}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("time step must be positive and finite, got {0}")]
    TimeStep(f64),
    #[error("t_end must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("observe_every must be at least 1")]
    ObserveEvery,
    #[error("safety factor must lie in (0, 1], got {0}")]
    Safety(f64),
    #[error("dt = {dt} exceeds safety x stability limit = {limit} for explicit RK4")]
    Unstable { dt: f64, limit: f64 },
    #[error("solution diverged at t = {t}: {cause}")]
    BlowUp { t: f64, cause: Divergence },
    #[error("tridiagonal solve failed (zero pivot)")]
    Solver,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "explicit-rk4")]
    ExplicitRk4,
    #[serde(rename = "imex-be")]
    ImexBe,
}

fn default_safety() -> f64 {
    0.9
}

fn default_true() -> bool {
    true
}

fn default_observe_every() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_observe_every")]
    pub observe_every: usize,
    #[serde(default = "default_safety")]
    pub safety: f64,
    /// When false, explicit RK4 runs even above the stability limit.
    #[serde(default = "default_true")]
    pub enforce_stability: bool,
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, dt: f64, t_end: f64, observe_every: usize) -> Self {
        Self { scheme, dt, t_end, observe_every, safety: default_safety(), enforce_stability: true }
    }

    pub fn validate(&self, grid: &Grid, p: &Parameters) -> Result<(), IntegrateError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(IntegrateError::TimeStep(self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(IntegrateError::Horizon(self.t_end));
        }
        if self.observe_every == 0 {
            return Err(IntegrateError::ObserveEvery);
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(IntegrateError::Safety(self.safety));
        }
        if self.scheme == Scheme::ExplicitRk4 && self.enforce_stability {
            let limit = self.safety * stability_limit(grid, p);
            if self.dt > limit {
                return Err(IntegrateError::Unstable { dt: self.dt, limit });
            }
        }
        Ok(())
    }

    /// Number of steps taken to reach `t_end` (at least one).
    pub fn steps(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let nearest = ratio.round();
        let n = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { ratio.ceil() };
        (n as usize).max(1)
    }
}

/// Explicit-diffusion limit `h_min² / (2·dim·max(η₁, η₂))`.
pub fn stability_limit(grid: &Grid, p: &Parameters) -> f64 {
    let h = grid.min_spacing();
    h * h / (2.0 * grid.dim() as f64 * p.eta1.max(p.eta2))
}

/// Prefactored Thomas solver for the constant-coefficient Neumann matrix
/// `σI − c·D₂`, where `D₂` is the unit-spacing reflection second difference.
#[derive(Debug, Clone)]
struct LineSolver {
    off: f64,
    cp: Vec<f64>,
    inv_den: Vec<f64>,
}

impl LineSolver {
    fn new(n: usize, sigma: f64, c: f64) -> Result<Self, IntegrateError> {
        let diag = |i: usize| if i == 0 || i == n - 1 { sigma + c } else { sigma + 2.0 * c };
        let off = -c;
        let mut cp = vec![0.0; n];
        let mut inv_den = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let den = diag(i) - if i > 0 { off * prev } else { 0.0 };
            if den == 0.0 || !den.is_finite() {
                return Err(IntegrateError::Solver);
            }
            inv_den[i] = 1.0 / den;
            cp[i] = if i + 1 < n { off * inv_den[i] } else { 0.0 };
            prev = cp[i];
        }
        Ok(Self { off, cp, inv_den })
    }

    fn solve(&self, d: &mut [f64]) {
        let n = d.len();
        d[0] *= self.inv_den[0];
        for i in 1..n {
            d[i] = (d[i] - self.off * d[i - 1]) * self.inv_den[i];
        }
        for i in (0..n - 1).rev() {
            d[i] -= self.cp[i] * d[i + 1];
        }
    }
}

/// Approximate inverse of `σI − dt·η·Δ`: exact in 1D, x-then-y factored in 2D,
/// `(σI − dtηΔx)(I − (dtη/σ)Δy)`.
#[derive(Debug, Clone)]
struct ImplicitOperator {
    key: (u64, u64, u64),
    x: LineSolver,
    y: Option<LineSolver>,
}

impl ImplicitOperator {
    fn new(grid: &Grid, dt: f64, eta: f64, sigma: f64) -> Result<Self, IntegrateError> {
        let ax = grid.axis(0);
        let x = LineSolver::new(ax.cells, sigma, dt * eta / (ax.spacing() * ax.spacing()))?;
        let y = if grid.dim() == 2 {
            let ay = grid.axis(1);
            Some(LineSolver::new(ay.cells, 1.0, dt * eta / (sigma * ay.spacing() * ay.spacing()))?)
        } else {
            None
        };
        Ok(Self { key: (dt.to_bits(), eta.to_bits(), sigma.to_bits()), x, y })
    }

    fn solve(&self, grid: &Grid, f: &mut [f64], column: &mut Vec<f64>) {
        let nx = grid.axis(0).cells;
        for line in f.chunks_exact_mut(nx) {
            self.x.solve(line);
        }
        if let Some(ys) = &self.y {
            let ny = grid.axis(1).cells;
            column.resize(ny, 0.0);
            for ix in 0..nx {
                for iy in 0..ny {
                    column[iy] = f[iy * nx + ix];
                }
                ys.solve(column);
                for iy in 0..ny {
                    f[iy * nx + ix] = column[iy];
                }
            }
        }
    }
}

/// Reusable workspace for stepping one network on one grid.
pub struct Stepper {
    p: Parameters,
    grid: Grid,
    k: [Vec<NeuronState>; 4],
    stage: Vec<NeuronState>,
    scratch: Vec<f64>,
    mean: Vec<f64>,
    column: Vec<f64>,
    operators: Vec<ImplicitOperator>,
}

impl Stepper {
    pub fn new(p: &Parameters, grid: &Grid) -> Self {
        let blank = vec![NeuronState::zeros(grid); p.m];
        Self {
            p: p.clone(),
            grid: grid.clone(),
            k: [blank.clone(), blank.clone(), blank.clone(), blank.clone()],
            stage: blank,
            scratch: vec![0.0; grid.len()],
            mean: vec![0.0; grid.len()],
            column: Vec::new(),
            operators: Vec::new(),
        }
    }

    pub fn step(&mut self, scheme: Scheme, net: &mut NetworkState, dt: f64) -> Result<(), IntegrateError> {
        match scheme {
            Scheme::ExplicitRk4 => self.rk4(net, dt),
            Scheme::ImexBe => self.imex(net, dt)?,
        }
        net.t += dt;
        check_state(net, &self.grid)
    }

    fn rk4(&mut self, net: &mut NetworkState, dt: f64) {
        let (p, grid) = (&self.p, &self.grid);
        let [k1, k2, k3, k4] = &mut self.k;
        let y = &mut net.neurons;
        full_rhs_into(y, p, grid, k1, &mut self.scratch);
        combine(&mut self.stage, y, &[(0.5 * dt, &k1[..])]);
        full_rhs_into(&self.stage, p, grid, k2, &mut self.scratch);
        combine(&mut self.stage, y, &[(0.5 * dt, &k2[..])]);
        full_rhs_into(&self.stage, p, grid, k3, &mut self.scratch);
        combine(&mut self.stage, y, &[(dt, &k3[..])]);
        full_rhs_into(&self.stage, p, grid, k4, &mut self.scratch);
        let w = dt / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            for c in Component::ALL {
                let (a, b, cc, d) = (
                    k1[i].component(c).values(),
                    k2[i].component(c).values(),
                    k3[i].component(c).values(),
                    k4[i].component(c).values(),
                );
                for (k, x) in yi.component_mut(c).values_mut().iter_mut().enumerate() {
                    *x += w * (a[k] + 2.0 * b[k] + 2.0 * cc[k] + d[k]);
                }
            }
        }
    }

    fn operator(&mut self, dt: f64, eta: f64, sigma: f64) -> Result<usize, IntegrateError> {
        let key = (dt.to_bits(), eta.to_bits(), sigma.to_bits());
        if let Some(i) = self.operators.iter().position(|op| op.key == key) {
            return Ok(i);
        }
        self.operators.push(ImplicitOperator::new(&self.grid, dt, eta, sigma)?);
        Ok(self.operators.len() - 1)
    }

    fn imex(&mut self, net: &mut NetworkState, dt: f64) -> Result<(), IntegrateError> {
        let m = net.m();
        let mf = m as f64;
        let plain_u = self.operator(dt, self.p.eta1, 1.0)?;
        let coupled_u = self.operator(dt, self.p.eta1, 1.0 + dt * mf * self.p.coupling_p)?;
        let plain_rho = self.operator(dt, self.p.eta2, 1.0)?;
        let coupled_rho = self.operator(dt, self.p.eta2, 1.0 + dt * mf * self.p.coupling_q)?;

        let tend = &mut self.k[0];
        for (s, t) in net.neurons.iter_mut().zip(tend.iter_mut()) {
            reaction_into(s, &self.p, t);
            for c in Component::ALL {
                let x = s.component_mut(c).values_mut();
                for (xv, tv) in x.iter_mut().zip(t.component(c).values()) {
                    *xv += dt * tv;
                }
            }
        }

        for (c, plain, coupled) in [(Component::U, plain_u, coupled_u), (Component::Rho, plain_rho, coupled_rho)] {
            // mean over neurons in index order
            self.mean.iter_mut().for_each(|x| *x = 0.0);
            for s in &net.neurons {
                for (acc, x) in self.mean.iter_mut().zip(s.component(c).values()) {
                    *acc += x;
                }
            }
            self.mean.iter_mut().for_each(|x| *x /= mf);
            for s in net.neurons.iter_mut() {
                let x = s.component_mut(c).values_mut();
                for (xv, mv) in x.iter_mut().zip(&self.mean) {
                    *xv -= mv;
                }
                self.operators[coupled].solve(&self.grid, x, &mut self.column);
            }
            self.operators[plain].solve(&self.grid, &mut self.mean, &mut self.column);
            for s in net.neurons.iter_mut() {
                for (xv, mv) in s.component_mut(c).values_mut().iter_mut().zip(&self.mean) {
                    *xv += mv;
                }
            }
        }
        Ok(())
    }
}

/// `dst = base + Σ a·k`
fn combine(dst: &mut [NeuronState], base: &[NeuronState], terms: &[(f64, &[NeuronState])]) {
    for (i, (d, b)) in dst.iter_mut().zip(base).enumerate() {
        for c in Component::ALL {
            let out = d.component_mut(c).values_mut();
            out.copy_from_slice(b.component(c).values());
            for (a, k) in terms {
                for (o, kv) in out.iter_mut().zip(k[i].component(c).values()) {
                    *o += a * kv;
                }
            }
        }
    }
}

/// Divergence check applied after each accepted step.
pub fn check_state(net: &NetworkState, grid: &Grid) -> Result<(), IntegrateError> {
    for (neuron, s) in net.neurons.iter().enumerate() {
        if let Some(component) = s.first_non_finite() {
            return Err(IntegrateError::BlowUp { t: net.t, cause: Divergence::NonFinite { neuron, component } });
        }
    }
    let value = quasi_norm(net, grid);
    if value > BLOWUP_QUASI_NORM {
        return Err(IntegrateError::BlowUp { t: net.t, cause: Divergence::QuasiNorm { value } });
    }
    Ok(())
}

pub fn step_rk4(net: &NetworkState, p: &Parameters, grid: &Grid, dt: f64) -> Result<NetworkState, IntegrateError> {
    single_step(Scheme::ExplicitRk4, net, p, grid, dt)
}

pub fn step_imex(net: &NetworkState, p: &Parameters, grid: &Grid, dt: f64) -> Result<NetworkState, IntegrateError> {
    single_step(Scheme::ImexBe, net, p, grid, dt)
}

fn single_step(
    scheme: Scheme,
    net: &NetworkState,
    p: &Parameters,
    grid: &Grid,
    dt: f64,
) -> Result<NetworkState, IntegrateError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(IntegrateError::TimeStep(dt));
    }
    net.validate(p, grid)?;
    let mut next = net.clone();
    Stepper::new(p, grid).step(scheme, &mut next, dt)?;
    Ok(next)
}

/// Steps from `net0` until `t ≥ t_end`, calling `observer(t, state)` after every
/// `observe_every`-th step and after the final step. Time is tracked as
/// `t₀ + k·dt` to avoid accumulated drift.
pub fn integrate(
    net0: &NetworkState,
    p: &Parameters,
    grid: &Grid,
    cfg: &IntegratorConfig,
    mut observer: impl FnMut(f64, &NetworkState),
) -> Result<NetworkState, IntegrateError> {
    cfg.validate(grid, p)?;
    p.validate()?;
    net0.validate(p, grid)?;
    let n_steps = cfg.steps();
    let t0 = net0.t;
    let mut net = net0.clone();
    let mut stepper = Stepper::new(p, grid);
    for k in 1..=n_steps {
        stepper.step(cfg.scheme, &mut net, cfg.dt)?;
        net.t = t0 + k as f64 * cfg.dt;
        if k % cfg.observe_every == 0 || k == n_steps {
            observer(net.t, &net);
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{laplacian_neumann, norm_l2, Field};
    use std::f64::consts::PI;

    /// Parameters for which `u ≡ 0, ρ ≡ 0` is invariant and `v − w + Je ≡ 0`
    /// holds along the flow (requires r = 1, ue = −(α + Je)/q, w₀ = v₀ + Je).
    fn v_subsystem() -> Parameters {
        let mut p = Parameters::all_ones(2);
        p.alpha = 1.0;
        p.je = 1.0;
        p.q = 1.0;
        p.r = 1.0;
        p.ue = -(p.alpha + p.je) / p.q;
        p
    }

    fn dense_neumann_solve(n: usize, sigma: f64, c: f64, rhs: &[f64]) -> Vec<f64> {
        // Gaussian elimination on the full matrix.
        let mut a = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            let nb = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
            a[i][i] = sigma + nb * c;
            if i > 0 {
                a[i][i - 1] = -c;
            }
            if i + 1 < n {
                a[i][i + 1] = -c;
            }
            a[i][n] = rhs[i];
        }
        for col in 0..n {
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                let pivot = a[col].clone();
                a[row].iter_mut().zip(&pivot).skip(col).for_each(|(x, p)| *x -= f * p);
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (a[i][n] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn line_solver_matches_dense_elimination() {
        let n = 9;
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 0.1 * i as f64).collect();
        for (sigma, c) in [(1.0, 0.3), (1.0 + 5e3, 40.0), (2.5, 1e4)] {
            let solver = LineSolver::new(n, sigma, c).unwrap();
            let mut x = rhs.clone();
            solver.solve(&mut x);
            let y = dense_neumann_solve(n, sigma, c, &rhs);
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn stability_limit_examples() {
        let g = Grid::line(1.0, 10).unwrap();
        let p = Parameters::all_ones(2);
        assert!((stability_limit(&g, &p) - 0.005).abs() < 1e-15);
        let mut p2 = p.clone();
        p2.eta1 = 2.0;
        p2.eta2 = 2.0;
        assert!((stability_limit(&g, &p2) - 0.0025).abs() < 1e-15);
        let g2 = Grid::rect([1.0, 1.0], [10, 10]).unwrap();
        assert!((stability_limit(&g2, &p) - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let g = Grid::line(1.0, 10).unwrap();
        let p = Parameters::all_ones(2);
        let mut cfg = IntegratorConfig::new(Scheme::ExplicitRk4, 0.01, 1.0, 1);
        assert!(matches!(cfg.validate(&g, &p), Err(IntegrateError::Unstable { .. })));
        cfg.enforce_stability = false;
        assert!(cfg.validate(&g, &p).is_ok());
        cfg.scheme = Scheme::ImexBe;
        cfg.enforce_stability = true;
        assert!(cfg.validate(&g, &p).is_ok());
        cfg.t_end = 0.0;
        assert_eq!(cfg.validate(&g, &p), Err(IntegrateError::Horizon(0.0)));
        cfg.t_end = 1.0;
        cfg.observe_every = 0;
        assert_eq!(cfg.validate(&g, &p), Err(IntegrateError::ObserveEvery));
        cfg.observe_every = 1;
        cfg.safety = 1.5;
        assert_eq!(cfg.validate(&g, &p), Err(IntegrateError::Safety(1.5)));
    }

    #[test]
    fn step_counts() {
        let cfg = |dt, t_end| IntegratorConfig::new(Scheme::ImexBe, dt, t_end, 1);
        assert_eq!(cfg(0.1, 1.0).steps(), 10);
        assert_eq!(cfg(0.3, 1.0).steps(), 4);
        assert_eq!(cfg(1.0, 0.5).steps(), 1);
        assert_eq!(cfg(0.01, 60.0).steps(), 6000);
    }

    #[test]
    fn exact_equilibrium_is_preserved() {
        let g = Grid::line(1.0, 12).unwrap();
        let p = v_subsystem();
        // u = 0, v = α, w = −q·ue/r = α + Je, ρ = 0
        let eq = NeuronState::constant(&g, [0.0, p.alpha, -p.q * p.ue / p.r, 0.0]);
        let net = NetworkState::replicated(eq, 2).unwrap();
        for next in [step_rk4(&net, &p, &g, 1e-3).unwrap(), step_imex(&net, &p, &g, 0.1).unwrap()] {
            for (a, b) in next.neurons.iter().zip(&net.neurons) {
                for c in Component::ALL {
                    assert_eq!(a.component(c), b.component(c));
                }
            }
        }
    }

    #[test]
    fn rk4_matches_closed_form_v_relaxation() {
        let g = Grid::line(1.0, 8).unwrap();
        let p = v_subsystem();
        let v0 = 3.0;
        let s = NeuronState::constant(&g, [0.0, v0, v0 + p.je, 0.0]);
        let net = NetworkState::replicated(s, 2).unwrap();
        let cfg = IntegratorConfig::new(Scheme::ExplicitRk4, 1e-3, 1.0, 1000);
        let out = integrate(&net, &p, &g, &cfg, |_, _| {}).unwrap();
        let exact = p.alpha + (v0 - p.alpha) * (-1.0f64).exp();
        for s in &out.neurons {
            assert!(s.v.values().iter().all(|v| (v - exact).abs() <= 1e-10));
            assert!(s.u.max_abs() < 1e-12);
        }
    }

    #[test]
    fn imex_diffusion_step_is_discrete_eigen_factor() {
        let l = 2.0;
        let n = 40;
        let g = Grid::line(l, n).unwrap();
        let mut p = v_subsystem();
        p.eta1 = 0.8;
        let dt = 0.05;
        let cosine = g.sample(|[x, _]| (PI * x / l).cos());
        let s = NeuronState {
            u: cosine.clone(),
            v: g.constant(p.alpha),
            w: g.constant(p.alpha + p.je),
            rho: g.zeros(),
        };
        // reaction is not zero for u ≠ 0, so isolate diffusion by subtracting
        // one explicit reaction increment from the expected result
        let net = NetworkState::replicated(s.clone(), 2).unwrap();
        let next = step_imex(&net, &p, &g, dt).unwrap();
        let reaction = crate::model::reaction_rhs(&s, &p);
        let h = l / n as f64;
        let mu = 4.0 / (h * h) * (PI * h / (2.0 * l)).sin().powi(2);
        let factor = 1.0 / (1.0 + dt * p.eta1 * mu);
        // backward Euler: (I − dtηL) u⁺ = u + dt·R(u); the cosine part scales by `factor`
        let rhs: Vec<f64> = s.u.values().iter().zip(reaction.u.values()).map(|(u, r)| u + dt * r).collect();
        let expected_from_cos: Vec<f64> = cosine.values().iter().map(|c| c * factor).collect();
        let remainder = {
            let mut x: Vec<f64> = rhs.iter().zip(cosine.values()).map(|(r, c)| r - c).collect();
            LineSolver::new(n, 1.0, dt * p.eta1 / (h * h)).unwrap().solve(&mut x);
            x
        };
        for k in 0..n {
            let expected = expected_from_cos[k] + remainder[k];
            assert!((next.neurons[0].u.values()[k] - expected).abs() < 1e-13);
        }
        // and the factor itself is the continuum one up to O(h²)
        let continuum = 1.0 / (1.0 + dt * p.eta1 * (PI / l).powi(2));
        assert!((factor - continuum).abs() < 1e-3);
    }

    #[test]
    fn imex_pure_diffusion_preserves_constants_and_mean() {
        let g = Grid::rect([1.0, 2.0], [8, 6]).unwrap();
        let mut p = v_subsystem();
        p.k2 = 0.5;
        p.eta2 = 3.0;
        let rho = g.sample(|[x, y]| 1.0 + (3.0 * x).sin() * y);
        let s = NeuronState { rho, ..NeuronState::constant(&g, [0.0, p.alpha, p.alpha + p.je, 0.0]) };
        let mut net = NetworkState::replicated(s, 2).unwrap();
        let mean0 = net.neurons[0].rho.mean();
        let dt = 0.01;
        let mut stepper = Stepper::new(&p, &g);
        for _ in 0..50 {
            stepper.step(Scheme::ImexBe, &mut net, dt).unwrap();
        }
        let expected = mean0 * (1.0 - dt * p.k2).powi(50);
        assert!((net.neurons[0].rho.mean() - expected).abs() < 1e-13);
        assert!(net.neurons[0].u.max_abs() < 1e-15);
    }

    #[test]
    fn explicit_step_above_limit_grows() {
        let g = Grid::line(1.0, 32).unwrap();
        let p = v_subsystem();
        let limit = stability_limit(&g, &p);
        let zigzag = g.sample(|[x, _]| 1e-3 * (32.0 * PI * x).cos());
        let s = NeuronState { u: zigzag, ..NeuronState::constant(&g, [0.0, p.alpha, p.alpha + p.je, 0.0]) };
        let run = |dt: f64| {
            let mut net = NetworkState::replicated(s.clone(), 2).unwrap();
            let mut stepper = Stepper::new(&p, &g);
            for _ in 0..40 {
                match stepper.step(Scheme::ExplicitRk4, &mut net, dt) {
                    Ok(()) => {}
                    Err(IntegrateError::BlowUp { .. }) => return f64::INFINITY,
                    Err(e) => panic!("{e}"),
                }
            }
            norm_l2(&net.neurons[0].u, &g)
        };
        let n0 = norm_l2(&s.u, &g);
        assert!(run(limit) < n0);
        assert!(run(2.0 * limit) > 10.0 * n0);
    }

    #[test]
    fn integrate_single_step_single_observation() {
        let g = Grid::line(1.0, 8).unwrap();
        let p = Parameters::all_ones(2);
        let net = NetworkState::replicated(NeuronState::constant(&g, [0.1, 0.2, 0.3, 0.4]), 2).unwrap();
        let cfg = IntegratorConfig::new(Scheme::ImexBe, 0.1, 0.05, 1);
        let mut calls = Vec::new();
        integrate(&net, &p, &g, &cfg, |t, _| calls.push(t)).unwrap();
        assert_eq!(calls, vec![0.1]);
    }

    #[test]
    fn blow_up_reports_time_and_location() {
        let g = Grid::line(1.0, 8).unwrap();
        let mut net = NetworkState::replicated(NeuronState::zeros(&g), 2).unwrap();
        net.neurons[1].w = Field::from_vec(vec![f64::INFINITY; 8]);
        net.t = 0.1;
        match check_state(&net, &g) {
            Err(IntegrateError::BlowUp { t, cause }) => {
                assert!((t - 0.1).abs() < 1e-15);
                assert_eq!(cause, Divergence::NonFinite { neuron: 1, component: Component::W });
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn laplacian_consistency_with_rk4_small_step() {
        // one tiny RK4 step of pure diffusion matches u + dt·η·Δu to O(dt²)
        let g = Grid::line(1.0, 16).unwrap();
        let p = v_subsystem();
        let u = g.sample(|[x, _]| 1e-6 * (PI * x).cos());
        let s = NeuronState { u: u.clone(), ..NeuronState::constant(&g, [0.0, p.alpha, p.alpha + p.je, 0.0]) };
        let net = NetworkState::replicated(s, 2).unwrap();
        let dt = 1e-5;
        let next = step_rk4(&net, &p, &g, dt).unwrap();
        let lap = laplacian_neumann(&u, &g).unwrap();
        let reaction = crate::model::reaction_rhs(&net.neurons[0], &p);
        for k in 0..16 {
            let predicted = u.values()[k] + dt * (p.eta1 * lap.values()[k] + reaction.u.values()[k]);
            assert!((next.neurons[0].u.values()[k] - predicted).abs() < 1e-14);
        }
    }

    fn wavy_network(g: &Grid, m: usize) -> NetworkState {
        let neurons = (0..m)
            .map(|i| {
                let s = 0.3 + 0.2 * i as f64;
                NeuronState {
                    u: g.sample(|[x, _]| s * (PI * x).cos()),
                    v: g.sample(|[x, _]| s * x),
                    w: g.constant(-s),
                    rho: g.sample(|[x, _]| 0.5 * s * (2.0 * PI * x).cos()),
                }
            })
            .collect();
        NetworkState::new(neurons, 0.0).unwrap()
    }

    #[test]
    fn repeated_runs_are_bitwise_identical() {
        let g = Grid::line(1.0, 16).unwrap();
        let p = Parameters::all_ones(3);
        let net = wavy_network(&g, 3);
        let cfg = IntegratorConfig::new(Scheme::ImexBe, 1e-2, 3.0, 50);
        let a = integrate(&net, &p, &g, &cfg, |_, _| {}).unwrap();
        let b = integrate(&net, &p, &g, &cfg, |_, _| {}).unwrap();
        assert_eq!(quasi_norm(&a, &g).to_bits(), quasi_norm(&b, &g).to_bits());
    }

    #[test]
    fn identical_uncoupled_neurons_stay_identical() {
        let g = Grid::line(1.0, 8).unwrap();
        let mut p = Parameters::all_ones(2);
        p.coupling_p = 0.0;
        p.coupling_q = 0.0;
        let one = wavy_network(&g, 2).neurons[1].clone();
        let net = NetworkState::replicated(one, 2).unwrap();
        let cfg = IntegratorConfig::new(Scheme::ImexBe, 1e-3, 100.0, 1000);
        assert_eq!(cfg.steps(), 100_000);
        let mut worst: f64 = 0.0;
        let last = integrate(&net, &p, &g, &cfg, |_, n| {
            worst = worst.max(n.neurons[0].u.sub(&n.neurons[1].u).max_abs());
        })
        .unwrap();
        assert_eq!(worst, 0.0);
        assert_eq!(last.neurons[0], last.neurons[1]);
    }

    #[test]
    fn imex_converges_to_rk4_at_first_order() {
        let g = Grid::line(1.0, 8).unwrap();
        let p = Parameters::all_ones(2);
        let net = wavy_network(&g, 2);
        let run = |scheme, dt: f64| {
            let cfg = IntegratorConfig::new(scheme, dt, 0.5, 1_000_000);
            integrate(&net, &p, &g, &cfg, |_, _| {}).unwrap()
        };
        let reference = run(Scheme::ExplicitRk4, 1e-3);
        let err = |dt| {
            let x = run(Scheme::ImexBe, dt);
            x.neurons[0].u.sub(&reference.neurons[0].u).max_abs()
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!(e2 < e1);
        let ratio = e1 / e2;
        assert!((1.7..2.3).contains(&ratio), "ratio {ratio}");
    }
}

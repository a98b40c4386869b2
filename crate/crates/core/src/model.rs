//! Parameters, neuron and network state, and the continuous-time right-hand
//! side of the memristive Hindmarsh–Rose network:
//!
//! ```text
//! u_t = η₁Δu + a u² − b u³ + v − w + Je − k₁ φ(ρ) u + Σ_j P (u_j − u)
//! v_t = α − β u² − v
//! w_t = q (u − ue) − r w
//! ρ_t = η₂Δρ + u − k₂ ρ + Σ_j Q (ρ_j − ρ)
//! φ(ρ) = c + γ ρ + δ ρ²
//! ```
//!
//! with homogeneous Neumann conditions on u and ρ.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{laplacian_into, Field, Grid, GridError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("network needs at least 2 neurons, got m = {0}")]
    NeuronCount(usize),
    #[error("network has {got} neurons but parameters declare m = {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("neuron index {index} out of range for m = {m}")]
    NeuronIndex { index: usize, m: usize },
    #[error("non-finite value in {0}")]
    InvalidField(&'static str),
    #[error("neuron {neuron}: components do not share one grid")]
    Ragged { neuron: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The seventeen model scalars plus the network size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    pub a: f64,
    pub b: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub q: f64,
    pub r: f64,
    pub delta: f64,
    pub k1: f64,
    pub k2: f64,
    /// Coupling strength in the membrane-potential equations.
    #[serde(rename = "P")]
    pub coupling_p: f64,
    /// Coupling strength in the memductance equations.
    #[serde(rename = "Q")]
    pub coupling_q: f64,
    #[serde(rename = "Je")]
    pub je: f64,
    pub c: f64,
    pub gamma: f64,
    pub ue: f64,
    pub m: usize,
}

impl Parameters {
    /// Every scalar set to one, `m` neurons.
    pub fn all_ones(m: usize) -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            eta1: 1.0,
            eta2: 1.0,
            alpha: 1.0,
            beta: 1.0,
            q: 1.0,
            r: 1.0,
            delta: 1.0,
            k1: 1.0,
            k2: 1.0,
            coupling_p: 1.0,
            coupling_q: 1.0,
            je: 1.0,
            c: 1.0,
            gamma: 1.0,
            ue: 1.0,
            m,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("a", self.a),
            ("b", self.b),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("q", self.q),
            ("r", self.r),
            ("delta", self.delta),
            ("k1", self.k1),
            ("k2", self.k2),
            ("Je", self.je),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParameter { name, value, reason: "must be positive and finite" });
            }
        }
        for (name, value) in [("P", self.coupling_p), ("Q", self.coupling_q)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidParameter { name, value, reason: "must be nonnegative and finite" });
            }
        }
        for (name, value) in [("c", self.c), ("gamma", self.gamma), ("ue", self.ue)] {
            if !value.is_finite() {
                return Err(ModelError::InvalidParameter { name, value, reason: "must be finite" });
            }
        }
        if self.m < 2 {
            return Err(ModelError::NeuronCount(self.m));
        }
        Ok(())
    }

    /// `φ(ρ) = c + γρ + δρ²`
    #[inline]
    pub fn phi(&self, rho: f64) -> f64 {
        self.c + self.gamma * rho + self.delta * rho * rho
    }

    /// Pointwise reaction tendencies `(u, v, w, ρ)`, excluding diffusion and coupling.
    #[inline]
    pub fn reaction(&self, u: f64, v: f64, w: f64, rho: f64) -> [f64; 4] {
        let u2 = u * u;
        [
            self.a * u2 - self.b * u2 * u + v - w + self.je - self.k1 * self.phi(rho) * u,
            self.alpha - self.beta * u2 - v,
            self.q * (u - self.ue) - self.r * w,
            u - self.k2 * rho,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    U,
    V,
    W,
    Rho,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::U, Component::V, Component::W, Component::Rho];

    pub fn name(self) -> &'static str {
        match self {
            Component::U => "u",
            Component::V => "v",
            Component::W => "w",
            Component::Rho => "rho",
        }
    }
}

/// Membrane potential, spiking and bursting variables and memductance of one
/// neuron, all sampled on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub u: Field,
    pub v: Field,
    pub w: Field,
    pub rho: Field,
}

impl NeuronState {
    pub fn zeros(grid: &Grid) -> Self {
        Self { u: grid.zeros(), v: grid.zeros(), w: grid.zeros(), rho: grid.zeros() }
    }

    pub fn constant(grid: &Grid, [u, v, w, rho]: [f64; 4]) -> Self {
        Self { u: grid.constant(u), v: grid.constant(v), w: grid.constant(w), rho: grid.constant(rho) }
    }

    pub fn component(&self, c: Component) -> &Field {
        match c {
            Component::U => &self.u,
            Component::V => &self.v,
            Component::W => &self.w,
            Component::Rho => &self.rho,
        }
    }

    pub fn component_mut(&mut self, c: Component) -> &mut Field {
        match c {
            Component::U => &mut self.u,
            Component::V => &mut self.v,
            Component::W => &mut self.w,
            Component::Rho => &mut self.rho,
        }
    }

    pub fn cells(&self) -> usize {
        self.u.len()
    }

    fn is_consistent(&self) -> bool {
        let n = self.u.len();
        self.v.len() == n && self.w.len() == n && self.rho.len() == n
    }

    /// First non-finite component, if any.
    pub fn first_non_finite(&self) -> Option<Component> {
        Component::ALL.into_iter().find(|&c| !self.component(c).is_finite())
    }
}

/// States of all `m` neurons at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub neurons: Vec<NeuronState>,
    pub t: f64,
}

impl NetworkState {
    pub fn new(neurons: Vec<NeuronState>, t: f64) -> Result<Self, ModelError> {
        if neurons.len() < 2 {
            return Err(ModelError::NeuronCount(neurons.len()));
        }
        let n = neurons[0].cells();
        for (i, s) in neurons.iter().enumerate() {
            if !s.is_consistent() || s.cells() != n {
                return Err(ModelError::Ragged { neuron: i });
            }
        }
        Ok(Self { neurons, t })
    }

    /// `m` copies of one neuron state.
    pub fn replicated(neuron: NeuronState, m: usize) -> Result<Self, ModelError> {
        Self::new(vec![neuron; m], 0.0)
    }

    pub fn m(&self) -> usize {
        self.neurons.len()
    }

    pub fn cells(&self) -> usize {
        self.neurons[0].cells()
    }

    /// Neuron `k` of the result is neuron `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { neurons: perm.iter().map(|&k| self.neurons[k].clone()).collect(), t: self.t }
    }

    /// Checks the state against parameters and grid.
    pub fn validate(&self, p: &Parameters, grid: &Grid) -> Result<(), ModelError> {
        if self.m() != p.m {
            return Err(ModelError::SizeMismatch { expected: p.m, got: self.m() });
        }
        for s in &self.neurons {
            if !s.is_consistent() {
                return Err(ModelError::Ragged { neuron: 0 });
            }
            grid.check(&s.u)?;
        }
        Ok(())
    }
}

pub fn memductance(rho: &Field, p: &Parameters) -> Result<Field, ModelError> {
    if !rho.is_finite() {
        return Err(ModelError::InvalidField("rho"));
    }
    Ok(Field::from_vec(rho.values().iter().map(|&r| p.phi(r)).collect()))
}

/// Reaction tendencies of one neuron (no diffusion, no coupling), returned as
/// a neuron-shaped set of fields.
pub fn reaction_rhs(s: &NeuronState, p: &Parameters) -> NeuronState {
    let n = s.cells();
    let mut out = NeuronState {
        u: Field::from_vec(vec![0.0; n]),
        v: Field::from_vec(vec![0.0; n]),
        w: Field::from_vec(vec![0.0; n]),
        rho: Field::from_vec(vec![0.0; n]),
    };
    reaction_into(s, p, &mut out);
    out
}

pub(crate) fn reaction_into(s: &NeuronState, p: &Parameters, out: &mut NeuronState) {
    let (u, v, w, rho) = (s.u.values(), s.v.values(), s.w.values(), s.rho.values());
    let (ou, ov, ow, orho) = (
        out.u.values_mut(),
        out.v.values_mut(),
        out.w.values_mut(),
        out.rho.values_mut(),
    );
    for k in 0..u.len() {
        let [du, dv, dw, dr] = p.reaction(u[k], v[k], w[k], rho[k]);
        ou[k] = du;
        ov[k] = dv;
        ow[k] = dw;
        orho[k] = dr;
    }
}

/// Writes `Σ_j strength·(x_j − x_i)` into `out`. The sum runs over every j in
/// index order, including the zero j = i term.
pub(crate) fn coupling_into<'a>(
    component: impl Fn(&'a NeuronState) -> &'a Field,
    neurons: &'a [NeuronState],
    i: usize,
    strength: f64,
    out: &mut [f64],
) {
    let xi = component(&neurons[i]).values();
    out.iter_mut().for_each(|o| *o = 0.0);
    for nj in neurons {
        let xj = component(nj).values();
        for k in 0..out.len() {
            out[k] += strength * (xj[k] - xi[k]);
        }
    }
}

/// Network coupling on neuron `i`: `(Σ_j P(u_j − u_i), Σ_j Q(ρ_j − ρ_i))`.
pub fn coupling_rhs(net: &NetworkState, i: usize, p: &Parameters) -> Result<(Field, Field), ModelError> {
    if i >= net.m() {
        return Err(ModelError::NeuronIndex { index: i, m: net.m() });
    }
    let n = net.cells();
    let mut cu = vec![0.0; n];
    let mut crho = vec![0.0; n];
    coupling_into(|s| &s.u, &net.neurons, i, p.coupling_p, &mut cu);
    coupling_into(|s| &s.rho, &net.neurons, i, p.coupling_q, &mut crho);
    Ok((Field::from_vec(cu), Field::from_vec(crho)))
}

/// Full tendency: reaction, coupling, and `η₁Δu`, `η₂Δρ` with the Neumann Laplacian.
pub fn full_rhs(net: &NetworkState, p: &Parameters, grid: &Grid) -> Result<Vec<NeuronState>, ModelError> {
    net.validate(p, grid)?;
    let mut out = vec![NeuronState::zeros(grid); net.m()];
    let mut scratch = vec![0.0; grid.len()];
    full_rhs_into(&net.neurons, p, grid, &mut out, &mut scratch);
    Ok(out)
}

pub(crate) fn full_rhs_into(
    neurons: &[NeuronState],
    p: &Parameters,
    grid: &Grid,
    out: &mut [NeuronState],
    scratch: &mut [f64],
) {
    for (i, (s, o)) in neurons.iter().zip(out.iter_mut()).enumerate() {
        reaction_into(s, p, o);

        coupling_into(|s| &s.u, neurons, i, p.coupling_p, scratch);
        add_scaled(o.u.values_mut(), scratch, 1.0);
        laplacian_into(s.u.values(), grid, scratch);
        add_scaled(o.u.values_mut(), scratch, p.eta1);

        coupling_into(|s| &s.rho, neurons, i, p.coupling_q, scratch);
        add_scaled(o.rho.values_mut(), scratch, 1.0);
        laplacian_into(s.rho.values(), grid, scratch);
        add_scaled(o.rho.values_mut(), scratch, p.eta2);
    }
}

#[inline]
fn add_scaled(dst: &mut [f64], src: &[f64], s: f64) {
    for (d, x) in dst.iter_mut().zip(src) {
        *d += s * x;
    }
}

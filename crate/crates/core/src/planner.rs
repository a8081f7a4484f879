//! Distributed privacy-preserving reference-trajectory generator.
//!
//! Each agent `i` carries a position `Q_i`, a local estimate `η̂_i` of the
//! fleet centroid and an auxiliary integrator state `ω_i`. Only `η̂_i` is
//! exchanged with neighbors:
//!
//! ```text
//! Q̇_i = −G_i
//! η̂̇_i = −γ_i Σ_{j∈N_i}(η̂_i − η̂_j) − Ψ_i − k1_i ω_i
//! ω̇_i = k1_i (γ_i Σ_{j∈N_i}(η̂_i − η̂_j) + Ψ_i) − k2_i ω_i
//! ```
//!
//! with `G_i = Q_i − η̂_i − δ*_i = −Ψ_i` and `k2_i = 1 − k1_i²`. The same
//! flow is a port-Hamiltonian system `Ẋ = (J_d − R_d)∇H_d`; both forms are
//! available here so they can be checked against each other.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::Exec;
use crate::ode::OdeState;
use crate::topology::GraphTopology;

pub type Vec2 = Vector2<f64>;

/// Per-axis tolerance on `Σ δ*_i` for user-supplied offsets.
pub const OFFSET_SUM_TOLERANCE: f64 = 0.05;

/// All three steady-state residuals below this value means converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-8;

/// Desired offsets `δ*_i` of each agent from the formation centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    offsets: Vec<Vec2>,
}

impl FormationSpec {
    /// Offsets given directly. Their sum must vanish to within
    /// [`OFFSET_SUM_TOLERANCE`] per axis.
    pub fn new(offsets: Vec<Vec2>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(domain("formation needs at least one offset"));
        }
        if offsets.iter().any(|d| !d.iter().all(|x| x.is_finite())) {
            return Err(domain("formation offsets must be finite"));
        }
        let spec = Self { offsets };
        let sum = spec.offset_sum();
        if sum.x.abs() > OFFSET_SUM_TOLERANCE || sum.y.abs() > OFFSET_SUM_TOLERANCE {
            return Err(domain(format!(
                "formation offsets sum to ({}, {}), not zero",
                sum.x, sum.y
            )));
        }
        Ok(spec)
    }

    /// `δ*_i = Q*_i − mean(Q*)`.
    pub fn from_desired_positions(positions: &[Vec2]) -> Result<Self> {
        if positions.is_empty() {
            return Err(domain("cannot derive offsets from an empty position list"));
        }
        let n = positions.len() as f64;
        let center = positions.iter().fold(Vec2::zeros(), |acc, p| acc + p) / n;
        Self::new(positions.iter().map(|p| p - center).collect())
    }

    pub fn offsets(&self) -> &[Vec2] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offset_sum(&self) -> Vec2 {
        self.offsets.iter().fold(Vec2::zeros(), |acc, d| acc + d)
    }
}

/// Local gains of one agent. `k2` is always derived from `k1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentGains {
    gamma: f64,
    k1: f64,
    k2: f64,
}

impl AgentGains {
    pub fn new(gamma: f64, k1: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(domain(format!("gamma must be positive, got {gamma}")));
        }
        if !(k1 > 0.0 && k1 < 1.0) {
            return Err(domain(format!("k1 must lie in (0, 1), got {k1}")));
        }
        Ok(Self {
            gamma,
            k1,
            k2: 1.0 - k1 * k1,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerParams {
    agents: Vec<AgentGains>,
}

impl PlannerParams {
    pub fn new(gamma: &[f64], k1: &[f64]) -> Result<Self> {
        if gamma.len() != k1.len() {
            return Err(domain("gamma and k1 lists differ in length"));
        }
        let agents = gamma
            .iter()
            .zip(k1)
            .map(|(&g, &k)| AgentGains::new(g, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { agents })
    }

    pub fn uniform(n: usize, gamma: f64, k1: f64) -> Result<Self> {
        Ok(Self {
            agents: vec![AgentGains::new(gamma, k1)?; n],
        })
    }

    pub fn agent(&self, i: usize) -> &AgentGains {
        &self.agents[i]
    }

    pub fn agents(&self) -> &[AgentGains] {
        &self.agents
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn is_uniform_gamma(&self) -> bool {
        self.agents.windows(2).all(|w| w[0].gamma == w[1].gamma)
    }

    pub fn min_gamma(&self) -> f64 {
        self.agents.iter().map(|a| a.gamma).fold(f64::INFINITY, f64::min)
    }

    pub fn min_k2(&self) -> f64 {
        self.agents.iter().map(|a| a.k2).fold(f64::INFINITY, f64::min)
    }

    /// Guaranteed exponential decay rate of the planner energy,
    /// `min{1, 2 min k2, (2/3) min γ}`.
    pub fn decay_rate_bound(&self) -> f64 {
        1.0_f64.min(2.0 * self.min_k2()).min(2.0 / 3.0 * self.min_gamma())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlannerAgentState {
    pub q: Vec2,
    pub eta_hat: Vec2,
    pub omega: Vec2,
}

impl PlannerAgentState {
    pub fn at(q: Vec2) -> Self {
        Self { q, ..Self::default() }
    }

    /// `θ_i = Q_i − k1_i ω_i`.
    pub fn theta(&self, k1: f64) -> Vec2 {
        self.q - self.omega * k1
    }
}

impl OdeState for PlannerAgentState {
    fn add_scaled(&self, h: f64, rate: &Self) -> Self {
        Self {
            q: self.q + rate.q * h,
            eta_hat: self.eta_hat + rate.eta_hat * h,
            omega: self.omega + rate.omega * h,
        }
    }

    fn is_finite(&self) -> bool {
        self.q
            .iter()
            .chain(self.eta_hat.iter())
            .chain(self.omega.iter())
            .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FleetPlannerState {
    pub agents: Vec<PlannerAgentState>,
    pub time: f64,
}

impl FleetPlannerState {
    /// Positions given, estimates and auxiliary states at the origin.
    pub fn from_positions(q: &[Vec2]) -> Self {
        Self {
            agents: q.iter().copied().map(PlannerAgentState::at).collect(),
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn centroid(&self) -> Vec2 {
        self.agents.iter().fold(Vec2::zeros(), |acc, a| acc + a.q) / self.agents.len() as f64
    }
}

/// `(G_i, Ψ_i)`, the gradients of `½‖Q_i − η̂_i − δ*_i‖²` with respect to
/// `Q_i` and `η̂_i`.
pub fn local_gradient(q: Vec2, eta_hat: Vec2, delta: Vec2) -> (Vec2, Vec2) {
    let g = q - eta_hat - delta;
    (g, -g)
}

/// The local cost `½‖Q_i − η̂_i − δ*_i‖²`.
pub fn local_cost(q: Vec2, eta_hat: Vec2, delta: Vec2) -> f64 {
    0.5 * (q - eta_hat - delta).norm_squared()
}

/// Residuals of the steady-state equations, each an ∞-norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateResidual {
    pub gradient: f64,
    pub consensus: f64,
    pub omega: f64,
}

impl SteadyStateResidual {
    pub fn max(&self) -> f64 {
        self.gradient.max(self.consensus).max(self.omega)
    }

    pub fn is_converged(&self) -> bool {
        self.gradient < CONVERGENCE_TOLERANCE
            && self.consensus < CONVERGENCE_TOLERANCE
            && self.omega < CONVERGENCE_TOLERANCE
    }
}

/// The planner flow for a fixed topology, gain set and formation.
#[derive(Debug, Clone)]
pub struct PlannerModel {
    topology: GraphTopology,
    neighbors: Vec<Vec<usize>>,
    params: PlannerParams,
    spec: FormationSpec,
    exec: Exec,
}

/// Below this many agents the per-agent work is too small to split.
const PARALLEL_AGENT_THRESHOLD: usize = 4096;

impl PlannerModel {
    pub fn new(topology: GraphTopology, params: PlannerParams, spec: FormationSpec) -> Result<Self> {
        let n = topology.len();
        if params.len() != n || spec.len() != n {
            return Err(domain(format!(
                "planner sizes disagree: {n} nodes, {} gain sets, {} offsets",
                params.len(),
                spec.len()
            )));
        }
        Ok(Self {
            neighbors: topology.adjacency_lists(),
            topology,
            params,
            spec,
            exec: Exec::default(),
        })
    }

    /// Same as [`PlannerModel::new`] but refuses a disconnected graph.
    pub fn connected(topology: GraphTopology, params: PlannerParams, spec: FormationSpec) -> Result<Self> {
        if !topology.is_connected() {
            return Err(Error::Disconnected);
        }
        Self::new(topology, params, spec)
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn topology(&self) -> &GraphTopology {
        &self.topology
    }

    pub fn params(&self) -> &PlannerParams {
        &self.params
    }

    pub fn spec(&self) -> &FormationSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.topology.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topology.is_empty()
    }

    /// Swap the formation, e.g. for a mid-run reconfiguration.
    pub fn set_formation(&mut self, spec: FormationSpec) -> Result<()> {
        if spec.len() != self.len() {
            return Err(domain("new formation has the wrong number of offsets"));
        }
        self.spec = spec;
        Ok(())
    }

    fn consensus_sum(&self, agents: &[PlannerAgentState], i: usize) -> Vec2 {
        let own = agents[i].eta_hat;
        self.neighbors[i]
            .iter()
            .fold(Vec2::zeros(), |acc, &j| acc + (own - agents[j].eta_hat))
    }

    fn agent_rate(&self, agents: &[PlannerAgentState], i: usize) -> PlannerAgentState {
        let a = &agents[i];
        let gains = &self.params.agents[i];
        let (g, psi) = local_gradient(a.q, a.eta_hat, self.spec.offsets[i]);
        let coupling = self.consensus_sum(agents, i) * gains.gamma;
        PlannerAgentState {
            q: -g,
            eta_hat: -coupling - psi - a.omega * gains.k1,
            omega: (coupling + psi) * gains.k1 - a.omega * gains.k2,
        }
    }

    /// Time derivative of every agent's `(Q, η̂, ω)`, read from one snapshot.
    pub fn rhs(&self, agents: &[PlannerAgentState]) -> Vec<PlannerAgentState> {
        let exec = if agents.len() >= PARALLEL_AGENT_THRESHOLD {
            self.exec
        } else {
            Exec::Sequential
        };
        exec.map_range(agents.len(), |i| self.agent_rate(agents, i))
    }

    /// `Q̇*_i = −G_i`, the reference velocity handed to the tracking layer.
    pub fn reference_velocity(&self, agents: &[PlannerAgentState], i: usize) -> Vec2 {
        let a = &agents[i];
        -local_gradient(a.q, a.eta_hat, self.spec.offsets[i]).0
    }

    /// Planner Hamiltonian, computed term by term as
    /// `Σ_i ½‖G_i‖² + ½‖ω_i‖² + (γ_i/2) η̂_iᵀ Σ_{j∈N_i}(η̂_i − η̂_j)`.
    pub fn energy(&self, agents: &[PlannerAgentState]) -> f64 {
        let mut h = 0.0;
        for (i, a) in agents.iter().enumerate() {
            let gamma = self.params.agents[i].gamma;
            h += local_cost(a.q, a.eta_hat, self.spec.offsets[i]);
            h += 0.5 * a.omega.norm_squared();
            h += 0.5 * gamma * a.eta_hat.dot(&self.consensus_sum(agents, i));
        }
        if self.params.is_uniform_gamma() {
            let coupling: f64 = agents
                .iter()
                .enumerate()
                .map(|(i, a)| 0.5 * self.params.agents[i].gamma * a.eta_hat.dot(&self.consensus_sum(agents, i)))
                .sum();
            let quad = 0.5 * self.params.agents[0].gamma * self.laplacian_quadratic_form(agents);
            debug_assert!(
                !quad.is_finite() || (coupling - quad).abs() <= 1e-9 * (1.0 + quad.abs()),
                "coupling potential {coupling} disagrees with ½γ η̂ᵀ(L⊗I₂)η̂ = {quad}"
            );
        }
        h
    }

    /// `η̂ᵀ (L ⊗ I₂) η̂` evaluated through the Laplacian matrix.
    pub fn laplacian_quadratic_form(&self, agents: &[PlannerAgentState]) -> f64 {
        let l = self.topology.laplacian();
        let n = agents.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if l[(i, j)] != 0.0 {
                    s += l[(i, j)] * agents[i].eta_hat.dot(&agents[j].eta_hat);
                }
            }
        }
        s
    }

    pub fn steady_state_residual(&self, agents: &[PlannerAgentState]) -> SteadyStateResidual {
        let mut r = SteadyStateResidual {
            gradient: 0.0,
            consensus: 0.0,
            omega: 0.0,
        };
        for (i, a) in agents.iter().enumerate() {
            let (g, psi) = local_gradient(a.q, a.eta_hat, self.spec.offsets[i]);
            let c = self.consensus_sum(agents, i) * self.params.agents[i].gamma + psi;
            r.gradient = r.gradient.max(g.amax());
            r.consensus = r.consensus.max(c.amax());
            r.omega = r.omega.max(a.omega.amax());
        }
        r
    }

    /// Block-diagonal `(J_d, R_d)` in the per-agent ordering
    /// `[Q_1, η̂_1, ω_1, Q_2, …]`, each block 6×6.
    pub fn interconnection_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.len();
        let mut j = DMatrix::zeros(6 * n, 6 * n);
        let mut r = DMatrix::zeros(6 * n, 6 * n);
        for (i, gains) in self.params.agents.iter().enumerate() {
            let b = 6 * i;
            for d in 0..2 {
                j[(b + 2 + d, b + 4 + d)] = -gains.k1;
                j[(b + 4 + d, b + 2 + d)] = gains.k1;
                r[(b + d, b + d)] = 1.0;
                r[(b + 2 + d, b + 2 + d)] = 1.0;
                r[(b + 4 + d, b + 4 + d)] = gains.k2;
            }
        }
        (j, r)
    }

    /// Analytic gradient of [`PlannerModel::energy`] in the same ordering as
    /// [`PlannerModel::interconnection_matrices`].
    pub fn energy_gradient(&self, agents: &[PlannerAgentState]) -> DVector<f64> {
        let n = self.len();
        let mut grad = DVector::zeros(6 * n);
        for (k, a) in agents.iter().enumerate() {
            let gk = self.params.agents[k].gamma;
            let (g, psi) = local_gradient(a.q, a.eta_hat, self.spec.offsets[k]);
            // ∂/∂η̂_k of Σ_i (γ_i/2)(d_i‖η̂_i‖² − Σ_{j∈N_i} η̂_iᵀη̂_j)
            let deg = self.neighbors[k].len() as f64;
            let mut coupling = a.eta_hat * (gk * deg);
            for &j in &self.neighbors[k] {
                coupling -= agents[j].eta_hat * (0.5 * (gk + self.params.agents[j].gamma));
            }
            let eta = psi + coupling;
            let b = 6 * k;
            grad[b] = g.x;
            grad[b + 1] = g.y;
            grad[b + 2] = eta.x;
            grad[b + 3] = eta.y;
            grad[b + 4] = a.omega.x;
            grad[b + 5] = a.omega.y;
        }
        grad
    }

    /// Largest absolute difference between the explicit flow and
    /// `(J_d − R_d)∇H_d`. Zero up to roundoff when γ is uniform.
    pub fn ph_residual(&self, agents: &[PlannerAgentState]) -> f64 {
        let (j, r) = self.interconnection_matrices();
        let structured = (j - r) * self.energy_gradient(agents);
        let explicit = self.rhs(agents);
        let mut worst = 0.0_f64;
        for (i, rate) in explicit.iter().enumerate() {
            let b = 6 * i;
            let flat = [
                rate.q.x,
                rate.q.y,
                rate.eta_hat.x,
                rate.eta_hat.y,
                rate.omega.x,
                rate.omega.y,
            ];
            for (d, v) in flat.iter().enumerate() {
                worst = worst.max((v - structured[b + d]).abs());
            }
        }
        worst
    }
}

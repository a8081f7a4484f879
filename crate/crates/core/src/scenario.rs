//! Scenario files: TOML, unknown keys rejected, agent indices 1-based.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{FleetPlannerState, FormationSpec, PlannerAgentState, PlannerModel, PlannerParams, Vec2};
use crate::privacy::AdversarySpec;
use crate::topology::GraphTopology;
use crate::tracking::TrackingGains;
use crate::vessel::{DisturbanceModel, Vec3, VesselParams, VesselState};

/// A value given once for the whole fleet or once per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent<T> {
    Shared(T),
    Each(Vec<T>),
}

impl<T: Clone> PerAgent<T> {
    pub fn resolve(&self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            PerAgent::Shared(v) => Ok(vec![v.clone(); n]),
            PerAgent::Each(v) if v.len() == n => Ok(v.clone()),
            PerAgent::Each(v) => Err(invalid(format!("{what}: expected 1 or {n} entries, got {}", v.len()))),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidScenario(msg.into())
}

fn to_vec2(v: &[[f64; 2]]) -> Vec<Vec2> {
    v.iter().map(|p| Vec2::new(p[0], p[1])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub agents: usize,
    /// Undirected edges, 1-based.
    pub edges: Vec<[usize; 2]>,
}

/// Either offsets from the centroid or desired absolute positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired_positions: Option<Vec<[f64; 2]>>,
}

impl FormationConfig {
    pub fn offsets(offsets: &[[f64; 2]]) -> Self {
        Self {
            offsets: Some(offsets.to_vec()),
            desired_positions: None,
        }
    }

    pub fn build(&self) -> Result<FormationSpec> {
        match (&self.offsets, &self.desired_positions) {
            (Some(o), None) => FormationSpec::new(to_vec2(o)),
            (None, Some(p)) => FormationSpec::from_desired_positions(&to_vec2(p)),
            _ => Err(invalid(
                "formation needs exactly one of `offsets` or `desired_positions`",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSwitch {
    pub time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired_positions: Option<Vec<[f64; 2]>>,
}

impl FormationSwitch {
    pub fn formation(&self) -> FormationConfig {
        FormationConfig {
            offsets: self.offsets.clone(),
            desired_positions: self.desired_positions.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub gamma: PerAgent<f64>,
    pub k1: PerAgent<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub positions: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_hat: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<[f64; 2]>>,
    /// Initial headings (rad); zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<Vec<f64>>,
    /// Initial body velocities `[u, v, r]`; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub planner_step: f64,
    pub plant_step: f64,
    /// Controller update rate (Hz).
    pub controller_rate: f64,
    pub horizon: f64,
    /// Spacing of recorded samples (s).
    pub record_interval: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            planner_step: 1e-3,
            plant_step: 1e-3,
            controller_rate: 1000.0,
            horizon: 60.0,
            record_interval: 1e-2,
        }
    }
}

impl IntegrationConfig {
    pub fn controller_period(&self) -> f64 {
        1.0 / self.controller_rate
    }

    /// Plant steps per controller update.
    pub fn plant_steps_per_update(&self) -> usize {
        whole_ratio(self.controller_period(), self.plant_step).unwrap_or(0)
    }

    /// Planner steps per controller update.
    pub fn planner_steps_per_update(&self) -> usize {
        whole_ratio(self.controller_period(), self.planner_step).unwrap_or(0)
    }

    pub fn planner_steps_per_record(&self) -> usize {
        whole_ratio(self.record_interval, self.planner_step).unwrap_or(0)
    }

    pub fn updates_per_record(&self) -> usize {
        whole_ratio(self.record_interval, self.controller_period()).unwrap_or(0)
    }

    pub fn record_count(&self) -> usize {
        (self.horizon / self.record_interval).round() as usize
    }

    pub fn validate(&self, closed_loop: bool) -> Result<()> {
        for (name, v) in [
            ("planner_step", self.planner_step),
            ("plant_step", self.plant_step),
            ("controller_rate", self.controller_rate),
            ("horizon", self.horizon),
            ("record_interval", self.record_interval),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("integration.{name} must be positive and finite")));
            }
        }
        if whole_ratio(self.record_interval, self.planner_step).is_none() {
            return Err(invalid("record_interval must be a whole multiple of planner_step"));
        }
        if whole_ratio(self.horizon, self.record_interval).is_none() {
            return Err(invalid("horizon must be a whole multiple of record_interval"));
        }
        if closed_loop {
            if whole_ratio(self.controller_period(), self.plant_step).is_none() {
                return Err(invalid("controller_rate must divide the plant rate 1/plant_step"));
            }
            if whole_ratio(self.controller_period(), self.planner_step).is_none() {
                return Err(invalid("controller period must be a whole multiple of planner_step"));
            }
            if whole_ratio(self.record_interval, self.controller_period()).is_none() {
                return Err(invalid(
                    "record_interval must be a whole multiple of the controller period",
                ));
            }
        }
        Ok(())
    }
}

/// `a / b` when it is a positive integer up to rounding.
pub(crate) fn whole_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() <= 1e-9 * n).then_some(n as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    /// Honest-but-curious members, 1-based.
    #[serde(default)]
    pub hbc: Vec<usize>,
    #[serde(default)]
    pub collusion: bool,
    #[serde(default)]
    pub eavesdropper: bool,
}

impl AdversaryConfig {
    pub fn build(&self, n: usize) -> Result<AdversarySpec> {
        let hbc = self
            .hbc
            .iter()
            .map(|&h| {
                if h == 0 || h > n {
                    Err(invalid(format!("adversary member {h} is outside 1..={n}")))
                } else {
                    Ok(h - 1)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        AdversarySpec::new(n, hbc, self.collusion, self.eavesdropper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub topology: TopologyConfig,
    pub formation: FormationConfig,
    #[serde(default, rename = "switch", skip_serializing_if = "Vec::is_empty")]
    pub switches: Vec<FormationSwitch>,
    pub planner: PlannerConfig,
    pub initial: InitialConfig,
    #[serde(default = "default_vessel")]
    pub vessel: PerAgent<VesselParams>,
    #[serde(default = "default_tracking")]
    pub tracking: PerAgent<TrackingGains>,
    #[serde(default = "default_disturbance")]
    pub disturbance: PerAgent<DisturbanceModel>,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversaryConfig>,
}

fn default_vessel() -> PerAgent<VesselParams> {
    PerAgent::Shared(VesselParams::default())
}

fn default_tracking() -> PerAgent<TrackingGains> {
    PerAgent::Shared(TrackingGains::default())
}

fn default_disturbance() -> PerAgent<DisturbanceModel> {
    PerAgent::Shared(DisturbanceModel::pond_experiment())
}

/// Initial positions of the four-vessel pond experiment.
pub const POND_POSITIONS: [[f64; 2]; 4] = [[-17.12, 17.76], [-11.91, -25.27], [13.24, -34.10], [8.68, 9.45]];

/// Desired displacements of the four-vessel pond experiment.
pub const POND_OFFSETS: [[f64; 2]; 4] = [[-25.87, -25.87], [-17.71, -17.71], [26.33, 26.33], [17.26, 17.26]];

impl Default for Scenario {
    /// The four-vessel pond ring with its experimental constants.
    fn default() -> Self {
        Self {
            name: "pond-4-ring".into(),
            topology: TopologyConfig {
                agents: 4,
                edges: vec![[1, 2], [2, 3], [3, 4], [4, 1]],
            },
            formation: FormationConfig::offsets(&POND_OFFSETS),
            switches: Vec::new(),
            planner: PlannerConfig {
                gamma: PerAgent::Shared(1.0),
                k1: PerAgent::Shared(0.5),
            },
            initial: InitialConfig {
                positions: POND_POSITIONS.to_vec(),
                eta_hat: None,
                omega: None,
                heading: None,
                velocity: None,
            },
            vessel: default_vessel(),
            tracking: default_tracking(),
            disturbance: default_disturbance(),
            integration: IntegrationConfig::default(),
            adversary: Some(AdversaryConfig {
                hbc: vec![3, 4],
                collusion: true,
                eavesdropper: true,
            }),
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(crate::error::io_err(path))?;
        let s: Scenario = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario fields are all TOML-representable")
    }

    pub fn len(&self) -> usize {
        self.topology.agents
    }

    pub fn is_empty(&self) -> bool {
        self.topology.agents == 0
    }

    /// Structural checks shared by every run mode; the closed-loop-only
    /// rate constraints are checked by [`IntegrationConfig::validate`].
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(invalid("scenario needs at least one agent"));
        }
        let topology = self.topology()?;
        if !topology.is_connected() {
            return Err(Error::Disconnected);
        }
        let count = |what: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(invalid(format!("{what}: expected {n} entries, got {len}")))
            }
        };
        count("initial.positions", self.initial.positions.len())?;
        let finite = self.initial.positions.iter().flatten().all(|v| v.is_finite())
            && self.initial.eta_hat.iter().flatten().flatten().all(|v| v.is_finite())
            && self.initial.omega.iter().flatten().flatten().all(|v| v.is_finite())
            && self.initial.heading.iter().flatten().all(|v| v.is_finite())
            && self.initial.velocity.iter().flatten().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(invalid("initial state must be finite"));
        }
        if let Some(v) = &self.initial.eta_hat {
            count("initial.eta_hat", v.len())?;
        }
        if let Some(v) = &self.initial.omega {
            count("initial.omega", v.len())?;
        }
        if let Some(v) = &self.initial.heading {
            count("initial.heading", v.len())?;
        }
        if let Some(v) = &self.initial.velocity {
            count("initial.velocity", v.len())?;
        }
        count("formation", self.formation.build()?.len())?;
        let mut last = 0.0;
        for s in &self.switches {
            if !(s.time > last && s.time < self.integration.horizon) {
                return Err(invalid(
                    "formation switch times must increase strictly inside (0, horizon)",
                ));
            }
            last = s.time;
            count("switch formation", s.formation().build()?.len())?;
        }
        self.planner_params()?;
        for v in self.vessel.resolve(n, "vessel")? {
            v.validate()?;
        }
        for g in self.tracking.resolve(n, "tracking")? {
            g.validate()?;
        }
        for d in self.disturbance.resolve(n, "disturbance")? {
            d.validate()?;
        }
        if let Some(a) = &self.adversary {
            a.build(n)?;
        }
        self.integration.validate(false)
    }

    pub fn topology(&self) -> Result<GraphTopology> {
        let n = self.topology.agents;
        let mut edges = Vec::with_capacity(self.topology.edges.len());
        for &[a, b] in &self.topology.edges {
            if a == 0 || b == 0 || a > n || b > n {
                return Err(invalid(format!("edge ({a}, {b}) is outside 1..={n}")));
            }
            edges.push((a - 1, b - 1));
        }
        GraphTopology::new(n, edges)
    }

    pub fn planner_params(&self) -> Result<PlannerParams> {
        let n = self.len();
        PlannerParams::new(
            &self.planner.gamma.resolve(n, "planner.gamma")?,
            &self.planner.k1.resolve(n, "planner.k1")?,
        )
    }

    pub fn formation(&self) -> Result<FormationSpec> {
        self.formation.build()
    }

    /// `(time, formation)` pairs after the initial one.
    pub fn formation_schedule(&self) -> Result<Vec<(f64, FormationSpec)>> {
        self.switches
            .iter()
            .map(|s| Ok((s.time, s.formation().build()?)))
            .collect()
    }

    pub fn planner_model(&self) -> Result<PlannerModel> {
        PlannerModel::connected(self.topology()?, self.planner_params()?, self.formation()?)
    }

    pub fn initial_planner_state(&self) -> FleetPlannerState {
        let agents = self
            .initial
            .positions
            .iter()
            .enumerate()
            .map(|(i, q)| PlannerAgentState {
                q: Vec2::new(q[0], q[1]),
                eta_hat: self
                    .initial
                    .eta_hat
                    .as_ref()
                    .map_or(Vec2::zeros(), |v| Vec2::new(v[i][0], v[i][1])),
                omega: self
                    .initial
                    .omega
                    .as_ref()
                    .map_or(Vec2::zeros(), |v| Vec2::new(v[i][0], v[i][1])),
            })
            .collect();
        FleetPlannerState { agents, time: 0.0 }
    }

    /// Hulls start on their planner positions.
    pub fn initial_vessel_states(&self) -> Result<Vec<VesselState>> {
        let params = self.vessel.resolve(self.len(), "vessel")?;
        Ok(self
            .initial
            .positions
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let psi = self.initial.heading.as_ref().map_or(0.0, |h| h[i]);
                let nu = self
                    .initial
                    .velocity
                    .as_ref()
                    .map_or(Vec3::zeros(), |v| Vec3::from(v[i]));
                VesselState {
                    q: Vec3::new(q[0], q[1], psi),
                    p: params[i].momentum(&nu),
                }
            })
            .collect())
    }

    pub fn adversary(&self) -> Result<Option<AdversarySpec>> {
        self.adversary.as_ref().map(|a| a.build(self.len())).transpose()
    }
}

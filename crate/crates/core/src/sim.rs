//! Fixed-step runs of the planner alone and of the full planner, controller
//! and vessel stack.
//!
//! The planner never reads vessel states, so a closed-loop run first
//! integrates the planner over the horizon, sampling `Q*_i` and `Q̇*_i = −G_i`
//! at every controller update, and then runs each vessel's sampled
//! controller and continuous plant on its own.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ode::{rk4_step, OdeState};
use crate::planner::{FleetPlannerState, FormationSpec, PlannerAgentState, PlannerModel, SteadyStateResidual, Vec2};
use crate::scenario::Scenario;
use crate::trace::{Event, EventKind, Message, PlannerSample, SimTrace, VesselSample};
use crate::tracking::{
    error_hamiltonian, estimate, estimator_init, estimator_rhs, uub_certificate, ControlOutput, TrackingController,
    TrackingGains, UubCertificate,
};
use crate::vessel::{allocate_thrusters, vessel_rhs, DisturbanceModel, Vec3, VesselParams, VesselState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannerOptions {
    /// Stop at the first record where every steady-state residual is below
    /// tolerance and no formation switch is pending.
    pub early_stop: bool,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self { early_stop: true }
    }
}

#[derive(Debug, Clone)]
pub struct PlannerRun {
    pub trace: SimTrace,
    pub final_state: FleetPlannerState,
    /// Time of the most recent convergence, if the run ended converged.
    pub converged_at: Option<f64>,
    /// Final residuals against the formation in force at the end.
    pub residual: SteadyStateResidual,
}

/// Steps the planner and applies scheduled formation switches.
struct PlannerDriver {
    model: PlannerModel,
    agents: Vec<PlannerAgentState>,
    h: f64,
    steps: usize,
    schedule: Vec<(f64, FormationSpec)>,
    next_switch: usize,
    converged_at: Option<f64>,
    events: Vec<Event>,
}

impl PlannerDriver {
    fn new(scenario: &Scenario, initial: &FleetPlannerState, exec: Exec) -> Result<Self> {
        let model = scenario.planner_model()?.with_exec(exec);
        if initial.len() != model.len() {
            return Err(Error::InvalidScenario(
                "initial planner state has the wrong agent count".into(),
            ));
        }
        Ok(Self {
            model,
            agents: initial.agents.clone(),
            h: scenario.integration.planner_step,
            steps: 0,
            schedule: scenario.formation_schedule()?,
            next_switch: 0,
            converged_at: None,
            events: Vec::new(),
        })
    }

    fn time(&self) -> f64 {
        self.steps as f64 * self.h
    }

    fn switches_pending(&self) -> bool {
        self.next_switch < self.schedule.len()
    }

    fn apply_due_switches(&mut self) -> Result<()> {
        while let Some((t, spec)) = self.schedule.get(self.next_switch) {
            if self.time() < t - 0.5 * self.h {
                break;
            }
            self.model.set_formation(spec.clone())?;
            self.events.push(Event {
                time: self.time(),
                kind: EventKind::FormationSwitch {
                    index: self.next_switch + 1,
                },
            });
            self.next_switch += 1;
            self.converged_at = None;
        }
        Ok(())
    }

    fn check_convergence(&mut self) -> bool {
        let converged = self.model.steady_state_residual(&self.agents).is_converged();
        if converged && self.converged_at.is_none() {
            self.converged_at = Some(self.time());
            self.events.push(Event {
                time: self.time(),
                kind: EventKind::PlannerConverged,
            });
        }
        if !converged {
            self.converged_at = None;
        }
        converged
    }

    fn advance(&mut self) -> Result<()> {
        let last_good = self.time();
        let model = &self.model;
        let next = rk4_step(&self.agents, last_good, self.h, |_, s: &Vec<PlannerAgentState>| {
            model.rhs(s)
        });
        self.steps += 1;
        if !next.is_finite() {
            return Err(Error::Divergence {
                what: "planner".into(),
                time: self.time(),
                last_good,
            });
        }
        self.agents = next;
        Ok(())
    }

    fn sample(&self) -> Vec<PlannerSample> {
        self.agents
            .iter()
            .zip(self.model.spec().offsets())
            .map(|(a, d)| PlannerSample {
                q: a.q,
                eta_hat: a.eta_hat,
                omega: a.omega,
                delta: *d,
            })
            .collect()
    }

    /// Every estimate on the wire at this instant.
    fn messages(&self) -> Vec<Message> {
        let mut out = Vec::new();
        for (from, a) in self.agents.iter().enumerate() {
            for to in self.model.topology().neighbors(from) {
                out.push(Message {
                    from,
                    to,
                    payload: a.eta_hat,
                });
            }
        }
        out
    }

    fn record(&self, trace: &mut SimTrace) {
        trace.time.push(self.time());
        trace.planner.push(self.sample());
        trace.energy.push(self.model.energy(&self.agents));
        trace.messages.push(self.messages());
    }

    fn reference(&self) -> Vec<(Vec2, Vec2)> {
        (0..self.agents.len())
            .map(|i| (self.agents[i].q, self.model.reference_velocity(&self.agents, i)))
            .collect()
    }
}

/// Planner-only run from the scenario's initial state, stopping early once
/// converged.
pub fn integrate_planner(scenario: &Scenario) -> Result<PlannerRun> {
    integrate_planner_from(
        scenario,
        &scenario.initial_planner_state(),
        PlannerOptions::default(),
        Exec::default(),
    )
}

pub fn integrate_planner_from(
    scenario: &Scenario,
    initial: &FleetPlannerState,
    options: PlannerOptions,
    exec: Exec,
) -> Result<PlannerRun> {
    scenario.validate()?;
    let cfg = &scenario.integration;
    let per_record = cfg.planner_steps_per_record();
    let records = cfg.record_count();
    let mut driver = PlannerDriver::new(scenario, initial, exec)?;
    let mut trace = SimTrace::new(scenario.len());

    for k in 0..=records {
        if k > 0 {
            for _ in 0..per_record {
                driver.advance()?;
                driver.apply_due_switches()?;
            }
        } else {
            driver.apply_due_switches()?;
        }
        driver.record(&mut trace);
        let converged = driver.check_convergence();
        if options.early_stop && converged && !driver.switches_pending() {
            break;
        }
    }

    trace.events = driver.events.clone();
    Ok(PlannerRun {
        final_state: FleetPlannerState {
            agents: driver.agents.clone(),
            time: driver.time(),
        },
        converged_at: driver.converged_at,
        residual: driver.model.steady_state_residual(&driver.agents),
        trace,
    })
}

/// One sample of the per-vessel Lyapunov check `L̇ ≤ −c1 L + c2`, with
/// `L = H_e + ½‖τ̂_d − τ_d‖²` taken at consecutive controller updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub time: f64,
    pub value: f64,
    /// Forward difference to the next update.
    pub rate: f64,
    /// `−c1 L + c2` at the interval midpoint.
    pub bound: f64,
}

impl LyapunovSample {
    pub fn excess(&self) -> f64 {
        self.rate - self.bound
    }
}

#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub trace: SimTrace,
    /// Per vessel; `None` when the gains do not certify a bound.
    pub certificates: Vec<Option<UubCertificate>>,
    /// Per vessel, one entry per controller interval.
    pub lyapunov: Vec<Vec<LyapunovSample>>,
    pub warnings: Vec<String>,
}

struct VesselSetup {
    params: VesselParams,
    gains: TrackingGains,
    disturbance: DisturbanceModel,
    initial: VesselState,
    certificate: Option<UubCertificate>,
}

struct VesselRun {
    samples: Vec<VesselSample>,
    lyapunov: Vec<LyapunovSample>,
}

type PlantState = (VesselState, Vec3);

impl OdeState for (VesselState, Vec3) {
    fn add_scaled(&self, h: f64, rate: &Self) -> Self {
        (self.0.add_scaled(h, &rate.0), self.1 + rate.1 * h)
    }

    fn is_finite(&self) -> bool {
        self.0.is_finite() && self.1.iter().all(|x| x.is_finite())
    }
}

fn simulate_vessel(
    index: usize,
    setup: &VesselSetup,
    reference: &[Vec<(Vec2, Vec2)>],
    period: f64,
    plant_steps: usize,
    h: f64,
    updates_per_record: usize,
) -> Result<VesselRun> {
    let VesselSetup {
        params,
        gains,
        disturbance,
        initial,
        certificate,
    } = setup;
    let alpha = gains.alpha;
    let mut controller = TrackingController::new(*gains, *params, period)?;
    let mut x: PlantState = (*initial, estimator_init(&Vec3::zeros(), initial, alpha));
    let mut samples = Vec::with_capacity(reference.len() / updates_per_record + 1);
    let mut values: Vec<(f64, f64)> = Vec::with_capacity(reference.len());

    for (u, row) in reference.iter().enumerate() {
        let t = u as f64 * period;
        let (q_ref, qdot_ref) = row[index];
        let tau_hat = estimate(&x.1, &x.0, alpha);
        let out: ControlOutput = controller.update(&x.0, &tau_hat, &q_ref, &qdot_ref);
        let tau_d = disturbance.eval(t);
        let e_d = tau_hat - tau_d.tau;
        values.push((
            t,
            error_hamiltonian(&out.e_b, &out.p_tilde, gains, params) + 0.5 * e_d.norm_squared(),
        ));

        if u % updates_per_record == 0 {
            let (f1, f2) = allocate_thrusters(out.tau_u, out.tau_r, params.thruster_separation)?;
            samples.push(VesselSample {
                q: x.0.q,
                nu: params.velocity(&x.0.p),
                e_b: out.e_b,
                tau_hat,
                tau_d: tau_d.tau,
                tau_u: out.tau_u,
                tau_r: out.tau_r,
                f1,
                f2,
            });
        }
        if u + 1 == reference.len() {
            break;
        }

        let tau_c = out.wrench();
        for s in 0..plant_steps {
            let t0 = t + s as f64 * h;
            let next = rk4_step(&x, t0, h, |tt, y: &PlantState| {
                let tau_d = disturbance.eval(tt);
                let dx = vessel_rhs(&y.0, params, &tau_c, &tau_d);
                (dx, estimator_rhs(&y.1, &y.0, params, &tau_c, alpha))
            });
            if !next.is_finite() {
                return Err(Error::Divergence {
                    what: format!("vessel {}", index + 1),
                    time: t0 + h,
                    last_good: t0,
                });
            }
            x = next;
        }
    }

    let lyapunov = match certificate {
        Some(c) => values
            .windows(2)
            .map(|w| {
                let (t0, l0) = w[0];
                let (_, l1) = w[1];
                LyapunovSample {
                    time: t0,
                    value: l0,
                    rate: (l1 - l0) / period,
                    bound: -c.c1 * 0.5 * (l0 + l1) + c.c2,
                }
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(VesselRun { samples, lyapunov })
}

/// Planner, sampled controllers with zero-order hold and continuous plants.
pub fn integrate_closed_loop(scenario: &Scenario, exec: Exec) -> Result<ClosedLoopRun> {
    scenario.validate()?;
    let cfg = &scenario.integration;
    cfg.validate(true)?;
    let n = scenario.len();
    let period = cfg.controller_period();
    let planner_per_update = cfg.planner_steps_per_update();
    let updates_per_record = cfg.updates_per_record();
    let updates = cfg.record_count() * updates_per_record;

    let mut driver = PlannerDriver::new(scenario, &scenario.initial_planner_state(), exec)?;
    let mut trace = SimTrace::new(n);
    let mut reference = Vec::with_capacity(updates + 1);
    for u in 0..=updates {
        if u > 0 {
            for _ in 0..planner_per_update {
                driver.advance()?;
                driver.apply_due_switches()?;
            }
        } else {
            driver.apply_due_switches()?;
        }
        reference.push(driver.reference());
        if u % updates_per_record == 0 {
            driver.record(&mut trace);
            driver.check_convergence();
        }
    }
    trace.events = driver.events.clone();

    let params = scenario.vessel.resolve(n, "vessel")?;
    let gains = scenario.tracking.resolve(n, "tracking")?;
    let disturbances = scenario.disturbance.resolve(n, "disturbance")?;
    let initial = scenario.initial_vessel_states()?;
    let mut warnings = Vec::new();
    let setups: Vec<VesselSetup> = (0..n)
        .map(|i| {
            let certificate = match uub_certificate(&gains[i], &params[i], disturbances[i].tau_max()) {
                Ok(c) => Some(c),
                Err(e) => {
                    warnings.push(format!("vessel {}: {e}", i + 1));
                    None
                }
            };
            VesselSetup {
                params: params[i],
                gains: gains[i],
                disturbance: disturbances[i].clone(),
                initial: initial[i],
                certificate,
            }
        })
        .collect();

    let plant_steps = cfg.plant_steps_per_update();
    let runs = exec.map_range(n, |i| {
        simulate_vessel(
            i,
            &setups[i],
            &reference,
            period,
            plant_steps,
            cfg.plant_step,
            updates_per_record,
        )
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    trace.vessels = (0..trace.len())
        .map(|k| runs.iter().map(|r| r.samples[k]).collect())
        .collect();
    Ok(ClosedLoopRun {
        trace,
        certificates: setups.iter().map(|s| s.certificate).collect(),
        lyapunov: runs.into_iter().map(|r| r.lyapunov).collect(),
        warnings,
    })
}

/// Planner decay rate and per-vessel ultimate-bound constants of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    /// `ρ`, the guaranteed exponential decay rate of the planner energy.
    pub decay_rate: f64,
    /// Per vessel; `None` when the gains do not certify a bound.
    pub vessels: Vec<Option<UubCertificate>>,
}

pub fn certify(scenario: &Scenario) -> Result<CertificateReport> {
    scenario.validate()?;
    let n = scenario.len();
    let params = scenario.vessel.resolve(n, "vessel")?;
    let gains = scenario.tracking.resolve(n, "tracking")?;
    let disturbances = scenario.disturbance.resolve(n, "disturbance")?;
    let vessels = (0..n)
        .map(|i| uub_certificate(&gains[i], &params[i], disturbances[i].tau_max()).ok())
        .collect();
    Ok(CertificateReport {
        decay_rate: scenario.planner_params()?.decay_rate_bound(),
        vessels,
    })
}

/// Manifest metadata describing the run: scenario name, certificate
/// constants and formation switch times.
pub fn trace_metadata(scenario: &Scenario) -> Result<BTreeMap<String, serde_json::Value>> {
    let report = certify(scenario)?;
    let mut meta = BTreeMap::new();
    meta.insert("scenario".into(), scenario.name.clone().into());
    meta.insert("decay_rate".into(), report.decay_rate.into());
    meta.insert(
        "certificates".into(),
        serde_json::to_value(&report.vessels).expect("certificates are plain numbers"),
    );
    meta.insert(
        "switch_times".into(),
        scenario.switches.iter().map(|s| s.time).collect::<Vec<_>>().into(),
    );
    Ok(meta)
}

/// Largest body-frame tracking error over all vessels, per record.
pub fn max_tracking_error(trace: &SimTrace) -> Vec<f64> {
    trace
        .vessels
        .iter()
        .map(|row| row.iter().map(|s| s.e_b.norm()).fold(0.0, f64::max))
        .collect()
}

/// First record time after which `series` stays at or below `bound` for
/// good, if any.
pub fn settle_time(time: &[f64], series: &[f64], bound: f64) -> Option<f64> {
    match series.iter().rposition(|&v| !(v <= bound)) {
        None => time.first().copied(),
        Some(k) if k + 1 < time.len() => Some(time[k + 1]),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{FormationSwitch, PerAgent};

    fn short(horizon: f64) -> Scenario {
        let mut s = Scenario::default();
        s.integration.horizon = horizon;
        s
    }

    #[test]
    fn default_certificate_report() {
        let report = certify(&Scenario::default()).unwrap();
        assert!((report.decay_rate - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(report.vessels.len(), 4);
        let c = report.vessels[0].unwrap();
        assert!((c.radius - (c.c2 / c.c1).sqrt()).abs() < 1e-18);
        let meta = trace_metadata(&Scenario::default()).unwrap();
        assert_eq!(meta["scenario"], "pond-4-ring");
        assert_eq!(meta["certificates"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn planner_from_steady_state_stops_at_zero() {
        let mut s = Scenario::default();
        let spec = s.formation().unwrap();
        let c = nalgebra::Vector2::new(3.0, -2.0);
        s.initial.positions = spec.offsets().iter().map(|d| [c.x + d.x, c.y + d.y]).collect();
        s.initial.eta_hat = Some(vec![[c.x, c.y]; 4]);
        let run = integrate_planner(&s).unwrap();
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.converged_at, Some(0.0));
        assert_eq!(
            run.final_state.agents[0].q,
            nalgebra::Vector2::new(c.x - 25.87, c.y - 25.87)
        );
    }

    #[test]
    fn planner_trace_shares_one_grid() {
        let run = integrate_planner_from(
            &short(1.0),
            &Scenario::default().initial_planner_state(),
            PlannerOptions { early_stop: false },
            Exec::Sequential,
        )
        .unwrap();
        let t = &run.trace;
        assert_eq!(t.len(), 101);
        assert_eq!(t.planner.len(), t.len());
        assert_eq!(t.energy.len(), t.len());
        assert_eq!(t.messages.len(), t.len());
        assert_eq!(t.messages[0].len(), 8);
        assert!((t.time[100] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_reports_last_good_time() {
        let s = short(1.0);
        let mut init = s.initial_planner_state();
        init.agents[0].omega.x = f64::NAN;
        match integrate_planner_from(&s, &init, PlannerOptions::default(), Exec::Sequential) {
            Err(Error::Divergence { last_good, time, .. }) => assert!(last_good < time),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn switch_is_recorded_and_applied() {
        let mut s = short(2.0);
        s.switches.push(FormationSwitch {
            time: 1.0,
            offsets: Some(vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]),
            desired_positions: None,
        });
        let run = integrate_planner(&s).unwrap();
        let switch = run
            .trace
            .events
            .iter()
            .find(|e| matches!(e.kind, EventKind::FormationSwitch { index: 1 }))
            .unwrap();
        assert!((switch.time - 1.0).abs() < 1e-12);
        let last = run.trace.last_planner().unwrap();
        assert_eq!(last[0].delta, nalgebra::Vector2::new(1.0, 0.0));
    }

    #[test]
    fn closed_loop_modes_agree_bitwise() {
        let s = short(0.5);
        let a = integrate_closed_loop(&s, Exec::Sequential).unwrap();
        let b = integrate_closed_loop(&s, Exec::Parallel).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.vessels.len(), a.trace.len());
    }

    #[test]
    fn undisturbed_run_is_certified_with_zero_radius() {
        let mut s = short(0.1);
        s.disturbance = PerAgent::Shared(DisturbanceModel::none());
        let run = integrate_closed_loop(&s, Exec::Sequential).unwrap();
        assert!(run.warnings.is_empty());
        assert!(run.certificates.iter().all(|c| c.unwrap().radius == 0.0));
        assert_eq!(run.lyapunov[0].len(), 100);
    }

    #[test]
    fn settle_time_examples() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(settle_time(&t, &[5.0, 0.5, 0.1, 0.1], 1.0), Some(1.0));
        assert_eq!(settle_time(&t, &[0.0, 0.0, 0.0, 0.0], 1.0), Some(0.0));
        assert_eq!(settle_time(&t, &[0.0, 0.0, 0.0, 2.0], 1.0), None);
    }
}

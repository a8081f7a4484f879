//! Adversary models and the paired-simulation indistinguishability audit.
//!
//! An honest-but-curious (HBC) member `h` sees its own `Q_h, η̂_h, ω_h, δ*_h`
//! and the estimates its neighbors send it. Colluding members pool their
//! views with HBC neighbors. An eavesdropper knows the graph and every
//! transmitted estimate. No adversary learns a neutral agent's gains.
//!
//! Writing `θ_i = Q_i − k1_i ω_i`, the estimate obeys
//! `η̂̇ = −γLη̂ + θ − η̂ − δ*` and `θ̇ = −k2 θ + (k2 − k1²γL)η̂ + k2 δ*`, so the
//! transmitted signal depends on `Q_r(0)` only through `θ_r(0)`. Moving
//! `Q_r(0)` by `ΔQ` and `ω_r(0)` by `ΔQ / k1_r` leaves every observed
//! stream unchanged while the private trajectory differs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{domain, io_err, Result};
use crate::exec::Exec;
use crate::planner::{FleetPlannerState, PlannerParams, Vec2};
use crate::scenario::Scenario;
use crate::sim::{integrate_planner_from, PlannerOptions};
use crate::topology::GraphTopology;
use crate::trace::{export_trace, SimTrace, TraceFormat};

/// Largest stream deviation still counted as identical.
pub const STREAM_TOLERANCE: f64 = 1e-10;

/// The witness trajectories must differ by at least this fraction of `‖ΔQ‖`
/// at `t = 0`.
pub const WITNESS_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    Position,
    Estimate,
    Auxiliary,
    Offset,
}

impl SignalKind {
    fn symbol(self) -> &'static str {
        match self {
            SignalKind::Position => "Q",
            SignalKind::Estimate => "eta",
            SignalKind::Auxiliary => "omega",
            SignalKind::Offset => "delta",
        }
    }
}

/// A signal of one agent; `owner` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct StreamId {
    pub owner: usize,
    pub kind: SignalKind,
}

impl StreamId {
    pub fn new(owner: usize, kind: SignalKind) -> Self {
        Self { owner, kind }
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.symbol(), self.owner + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversarySpec {
    agents: usize,
    hbc: BTreeSet<usize>,
    collusion: bool,
    eavesdropper: bool,
    /// Streams granted outside the threat model, for negative controls.
    extra: BTreeSet<StreamId>,
}

impl AdversarySpec {
    /// `hbc` is 0-based and must leave at least one neutral agent.
    pub fn new(
        agents: usize,
        hbc: impl IntoIterator<Item = usize>,
        collusion: bool,
        eavesdropper: bool,
    ) -> Result<Self> {
        let hbc: BTreeSet<usize> = hbc.into_iter().collect();
        if let Some(&h) = hbc.iter().find(|&&h| h >= agents) {
            return Err(domain(format!(
                "adversary member {} is not one of the {agents} agents",
                h + 1
            )));
        }
        if hbc.len() >= agents {
            return Err(domain("at least one agent must be neutral"));
        }
        Ok(Self {
            agents,
            hbc,
            collusion,
            eavesdropper,
            extra: BTreeSet::new(),
        })
    }

    pub fn eavesdropper_only(agents: usize) -> Self {
        Self::new(agents, [], false, true).expect("an empty member set is always valid")
    }

    /// The same adversary additionally observing `stream`.
    pub fn augmented(mut self, stream: StreamId) -> Self {
        self.extra.insert(stream);
        self
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn members(&self) -> &BTreeSet<usize> {
        &self.hbc
    }

    pub fn is_neutral(&self, i: usize) -> bool {
        i < self.agents && !self.hbc.contains(&i)
    }

    pub fn collusion(&self) -> bool {
        self.collusion
    }

    pub fn eavesdropper(&self) -> bool {
        self.eavesdropper
    }

    fn check_topology(&self, topology: &GraphTopology) -> Result<()> {
        if topology.len() != self.agents {
            return Err(domain(format!(
                "adversary is defined on {} agents, topology has {}",
                self.agents,
                topology.len()
            )));
        }
        Ok(())
    }

    /// `ℐ_h`: own signals plus the estimates received from neighbors.
    pub fn local_view(&self, h: usize, topology: &GraphTopology) -> Result<BTreeSet<StreamId>> {
        self.check_topology(topology)?;
        if !self.hbc.contains(&h) {
            return Err(domain(format!("agent {} is not an adversary member", h + 1)));
        }
        let mut out: BTreeSet<StreamId> = [
            SignalKind::Position,
            SignalKind::Estimate,
            SignalKind::Auxiliary,
            SignalKind::Offset,
        ]
        .into_iter()
        .map(|k| StreamId::new(h, k))
        .collect();
        out.extend(
            topology
                .neighbors(h)
                .into_iter()
                .map(|l| StreamId::new(l, SignalKind::Estimate)),
        );
        Ok(out)
    }

    /// `ℐ^c_h`: `ℐ_h` pooled with every HBC neighbor's local view; equals
    /// `ℐ_h` without collusion.
    pub fn colluding_view(&self, h: usize, topology: &GraphTopology) -> Result<BTreeSet<StreamId>> {
        let mut out = self.local_view(h, topology)?;
        if self.collusion {
            for j in topology.neighbors(h).into_iter().filter(|j| self.hbc.contains(j)) {
                out.extend(self.local_view(j, topology)?);
            }
        }
        Ok(out)
    }

    /// `E^c`: every transmitted estimate plus each member's (colluding) view.
    pub fn eavesdropper_view(&self, topology: &GraphTopology) -> Result<BTreeSet<StreamId>> {
        self.check_topology(topology)?;
        let mut out: BTreeSet<StreamId> = (0..self.agents)
            .filter(|&i| topology.degree(i) > 0)
            .map(|i| StreamId::new(i, SignalKind::Estimate))
            .collect();
        for &h in &self.hbc {
            out.extend(self.colluding_view(h, topology)?);
        }
        Ok(out)
    }

    /// Everything this adversary can observe.
    pub fn observed_streams(&self, topology: &GraphTopology) -> Result<BTreeSet<StreamId>> {
        let mut out = if self.eavesdropper {
            self.eavesdropper_view(topology)?
        } else {
            let mut s = BTreeSet::new();
            for &h in &self.hbc {
                s.extend(self.colluding_view(h, topology)?);
            }
            s
        };
        for s in &self.extra {
            if s.owner >= self.agents {
                return Err(domain(format!("diagnostic stream {s} names an unknown agent")));
            }
        }
        out.extend(self.extra.iter().copied());
        Ok(out)
    }
}

/// Time series an adversary holds, on the trace grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationSet {
    pub time: Vec<f64>,
    pub streams: BTreeMap<StreamId, Vec<Vec2>>,
    pub topology_known: bool,
}

impl InformationSet {
    pub fn stream_ids(&self) -> BTreeSet<StreamId> {
        self.streams.keys().copied().collect()
    }
}

/// Own signals are read from the agent's state; estimates of other agents
/// come from the message log, as received by a member or overheard.
pub fn extract_information_set(
    trace: &SimTrace,
    topology: &GraphTopology,
    adversary: &AdversarySpec,
) -> Result<InformationSet> {
    if trace.agents != adversary.agents() {
        return Err(domain(format!(
            "trace has {} agents, adversary expects {}",
            trace.agents,
            adversary.agents()
        )));
    }
    let wanted = adversary.observed_streams(topology)?;
    let mut streams = BTreeMap::new();
    for id in wanted {
        let own = adversary.members().contains(&id.owner) || adversary.extra.contains(&id);
        let series: Vec<Vec2> = if own || id.kind != SignalKind::Estimate {
            trace
                .planner_series(id.owner)
                .map(|s| match id.kind {
                    SignalKind::Position => s.q,
                    SignalKind::Estimate => s.eta_hat,
                    SignalKind::Auxiliary => s.omega,
                    SignalKind::Offset => s.delta,
                })
                .collect()
        } else {
            trace
                .messages
                .iter()
                .enumerate()
                .map(|(k, round)| {
                    round
                        .iter()
                        .find(|m| {
                            m.from == id.owner && (adversary.eavesdropper() || adversary.members().contains(&m.to))
                        })
                        .map(|m| m.payload)
                        .ok_or_else(|| domain(format!("no message from agent {} at record {k}", id.owner + 1)))
                })
                .collect::<Result<_>>()?
        };
        streams.insert(id, series);
    }
    Ok(InformationSet {
        time: trace.time.clone(),
        streams,
        topology_known: adversary.eavesdropper(),
    })
}

/// Shift `ω_r(0)` by `ΔQ / k1_r` to keep `θ_r(0)` fixed.
pub fn compensating_omega_shift(k1: f64, dq: Vec2) -> Vec2 {
    dq / k1
}

/// Alternative initial state for agent `target` (0-based): `Q_r` moved by
/// `dq`, `ω_r` compensated, everything else identical.
pub fn shadow_initialization(
    base: &FleetPlannerState,
    params: &PlannerParams,
    adversary: &AdversarySpec,
    target: usize,
    dq: Vec2,
) -> Result<FleetPlannerState> {
    check_target(base.len(), adversary, target)?;
    let mut out = base.clone();
    let a = &mut out.agents[target];
    a.q += dq;
    a.omega += compensating_omega_shift(params.agent(target).k1(), dq);
    Ok(out)
}

fn check_target(n: usize, adversary: &AdversarySpec, target: usize) -> Result<()> {
    if target >= n {
        return Err(domain(format!("target {} is not one of the {n} agents", target + 1)));
    }
    if !adversary.is_neutral(target) {
        return Err(domain(format!(
            "target {} is an adversary member, not a neutral agent",
            target + 1
        )));
    }
    Ok(())
}

/// How the alternative run is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShadowMode {
    #[default]
    Compensated,
    /// `Q_r(0)` moved, `ω_r(0)` left alone.
    Uncompensated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamDeviation {
    pub stream: String,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    /// 1-based.
    pub target: usize,
    pub dq: [f64; 2],
    pub mode: ShadowMode,
    pub streams: Vec<StreamDeviation>,
    pub max_stream_deviation: f64,
    /// `‖Q_r(0) − Q'_r(0)‖`.
    pub witness_deviation_t0: f64,
    pub witness_max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl AuditReport {
    /// First record time at which an observed stream deviates by more than
    /// `threshold`.
    pub fn first_exceedance(base: &InformationSet, shadow: &InformationSet, threshold: f64) -> Option<f64> {
        for (k, t) in base.time.iter().enumerate() {
            for (id, s) in &base.streams {
                if (s[k] - shadow.streams[id][k]).amax() > threshold {
                    return Some(*t);
                }
            }
        }
        None
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "privacy audit: {}", if self.pass { "PASS" } else { "FAIL" })?;
        writeln!(f, "target: {}", self.target)?;
        writeln!(f, "dq: ({}, {})", self.dq[0], self.dq[1])?;
        writeln!(f, "shadow: {:?}", self.mode)?;
        writeln!(
            f,
            "max stream deviation: {:.3e} (tolerance {:.0e})",
            self.max_stream_deviation, self.tolerance
        )?;
        writeln!(f, "witness deviation at t=0: {:.6}", self.witness_deviation_t0)?;
        writeln!(f, "witness max deviation: {:.6}", self.witness_max_deviation)?;
        writeln!(f, "streams:")?;
        for s in &self.streams {
            writeln!(f, "  {:<8} {:.3e}", s.stream, s.max_deviation)?;
        }
        Ok(())
    }
}

/// Report plus both runs and what the adversary saw in each.
#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub report: AuditReport,
    pub base: SimTrace,
    pub shadow: SimTrace,
    pub base_view: InformationSet,
    pub shadow_view: InformationSet,
}

/// Simulates the scenario and its shadow over the full horizon and
/// compares every stream the adversary observes.
pub fn indistinguishability_audit(
    scenario: &Scenario,
    adversary: &AdversarySpec,
    target: usize,
    dq: Vec2,
    mode: ShadowMode,
    exec: Exec,
) -> Result<AuditOutcome> {
    scenario.validate()?;
    check_target(scenario.len(), adversary, target)?;
    if dq == Vec2::zeros() {
        return Err(domain("a zero perturbation gives a vacuous witness"));
    }
    let topology = scenario.topology()?;
    let params = scenario.planner_params()?;
    let base_init = scenario.initial_planner_state();
    let shadow_init = match mode {
        ShadowMode::Compensated => shadow_initialization(&base_init, &params, adversary, target, dq)?,
        ShadowMode::Uncompensated => {
            let mut s = base_init.clone();
            s.agents[target].q += dq;
            s
        }
    };
    let options = PlannerOptions { early_stop: false };
    // each run is sequential inside; the pair is the unit of parallelism
    let (base, shadow) = exec.join(
        || integrate_planner_from(scenario, &base_init, options, Exec::Sequential),
        || integrate_planner_from(scenario, &shadow_init, options, Exec::Sequential),
    );
    let (base, shadow) = (base?.trace, shadow?.trace);
    let base_view = extract_information_set(&base, &topology, adversary)?;
    let shadow_view = extract_information_set(&shadow, &topology, adversary)?;

    let mut streams = Vec::new();
    let mut worst = 0.0_f64;
    for (id, a) in &base_view.streams {
        let b = &shadow_view.streams[id];
        let d = a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
        worst = worst.max(d);
        streams.push(StreamDeviation {
            stream: id.to_string(),
            max_deviation: d,
        });
    }
    let witness: Vec<f64> = base
        .planner_series(target)
        .zip(shadow.planner_series(target))
        .map(|(a, b)| (a.q - b.q).norm())
        .collect();
    let witness_t0 = witness.first().copied().unwrap_or(0.0);
    let report = AuditReport {
        target: target + 1,
        dq: [dq.x, dq.y],
        mode,
        streams,
        max_stream_deviation: worst,
        witness_deviation_t0: witness_t0,
        witness_max_deviation: witness.iter().copied().fold(0.0, f64::max),
        tolerance: STREAM_TOLERANCE,
        pass: worst <= STREAM_TOLERANCE && witness_t0 >= WITNESS_FRACTION * dq.norm(),
    };
    Ok(AuditOutcome {
        report,
        base,
        shadow,
        base_view,
        shadow_view,
    })
}

/// One independent audit in a batch.
#[derive(Debug, Clone)]
pub struct AuditCase {
    pub scenario: Scenario,
    pub adversary: AdversarySpec,
    /// 0-based.
    pub target: usize,
    pub dq: Vec2,
    pub mode: ShadowMode,
}

/// Audits every case, spreading cases over `exec`. Reports come back in
/// case order whatever the execution mode.
pub fn audit_batch(cases: &[AuditCase], exec: Exec) -> Vec<Result<AuditReport>> {
    exec.map_slice(cases, |c| {
        indistinguishability_audit(&c.scenario, &c.adversary, c.target, c.dq, c.mode, Exec::Sequential)
            .map(|o| o.report)
    })
}

/// Runs the audit with the scenario's adversary (an eavesdropper when none
/// is configured) and writes `base`, `shadow` traces plus `audit.json` and
/// `audit.txt` into `out_dir`.
pub fn run_privacy_audit(
    scenario: &Scenario,
    target: usize,
    dq: Vec2,
    out_dir: impl AsRef<Path>,
) -> Result<AuditOutcome> {
    let out_dir = out_dir.as_ref();
    let adversary = scenario
        .adversary()?
        .unwrap_or_else(|| AdversarySpec::eavesdropper_only(scenario.len()));
    let outcome = indistinguishability_audit(
        scenario,
        &adversary,
        target,
        dq,
        ShadowMode::Compensated,
        Exec::default(),
    )?;
    let meta = BTreeMap::new();
    export_trace(&outcome.base, TraceFormat::Both, out_dir, "audit_base", &meta)?;
    export_trace(&outcome.shadow, TraceFormat::Both, out_dir, "audit_shadow", &meta)?;
    let json = serde_json::to_string_pretty(&outcome.report).expect("report is plain data");
    let path = out_dir.join("audit.json");
    std::fs::write(&path, json + "\n").map_err(io_err(&path))?;
    let path = out_dir.join("audit.txt");
    std::fs::write(&path, outcome.report.to_string()).map_err(io_err(&path))?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ring4() -> GraphTopology {
        GraphTopology::ring(4).unwrap()
    }

    fn example_adversary() -> AdversarySpec {
        AdversarySpec::new(4, [2, 3], true, false).unwrap()
    }

    fn short() -> Scenario {
        let mut s = Scenario::default();
        s.integration.horizon = 2.0;
        s
    }

    #[test]
    fn eavesdropper_alone_sees_only_estimates() {
        let set = AdversarySpec::eavesdropper_only(4).observed_streams(&ring4()).unwrap();
        let want: BTreeSet<_> = (0..4).map(|i| StreamId::new(i, SignalKind::Estimate)).collect();
        assert_eq!(set, want);
    }

    #[test]
    fn colluding_pair_view() {
        let view = example_adversary().colluding_view(2, &ring4()).unwrap();
        for (i, k) in [
            (2, SignalKind::Position),
            (3, SignalKind::Position),
            (2, SignalKind::Auxiliary),
            (3, SignalKind::Auxiliary),
            (1, SignalKind::Estimate),
            (2, SignalKind::Estimate),
            (3, SignalKind::Estimate),
        ] {
            assert!(view.contains(&StreamId::new(i, k)), "{i} {k:?}");
        }
        for i in [0, 1] {
            assert!(!view.contains(&StreamId::new(i, SignalKind::Position)));
            assert!(!view.contains(&StreamId::new(i, SignalKind::Auxiliary)));
        }
    }

    #[test]
    fn no_collusion_means_local_view() {
        let adv = AdversarySpec::new(4, [2, 3], false, false).unwrap();
        assert_eq!(
            adv.colluding_view(2, &ring4()).unwrap(),
            adv.local_view(2, &ring4()).unwrap()
        );
    }

    #[test]
    fn non_adjacent_members_do_not_pool() {
        let adv = AdversarySpec::new(4, [0, 2], true, false).unwrap();
        assert_eq!(
            adv.colluding_view(0, &ring4()).unwrap(),
            adv.local_view(0, &ring4()).unwrap()
        );
    }

    #[test]
    fn invalid_adversaries_rejected() {
        assert!(AdversarySpec::new(4, [0, 1, 2, 3], false, false).is_err());
        assert!(AdversarySpec::new(4, [4], false, false).is_err());
        let adv = AdversarySpec::new(3, [0], false, true).unwrap();
        assert!(adv.observed_streams(&ring4()).is_err());
    }

    #[test]
    fn shadow_examples() {
        let base = Scenario::default().initial_planner_state();
        let params = PlannerParams::uniform(4, 1.0, 0.5).unwrap();
        let adv = example_adversary();
        let same = shadow_initialization(&base, &params, &adv, 0, Vec2::zeros()).unwrap();
        assert_eq!(same, base);
        let s = shadow_initialization(&base, &params, &adv, 0, Vec2::new(5.0, -3.0)).unwrap();
        assert_eq!(s.agents[0].omega - base.agents[0].omega, Vec2::new(10.0, -6.0));
        assert_eq!(s.agents[0].theta(0.5), base.agents[0].theta(0.5));
        assert_eq!(s.agents[0].eta_hat, base.agents[0].eta_hat);
        assert_eq!(&s.agents[1..], &base.agents[1..]);
        assert!(shadow_initialization(&base, &params, &adv, 2, Vec2::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn audit_preconditions() {
        let s = short();
        let adv = example_adversary();
        assert!(indistinguishability_audit(
            &s,
            &adv,
            2,
            Vec2::new(5.0, -3.0),
            ShadowMode::Compensated,
            Exec::Sequential
        )
        .is_err());
        assert!(
            indistinguishability_audit(&s, &adv, 0, Vec2::zeros(), ShadowMode::Compensated, Exec::Sequential).is_err()
        );
        assert!(indistinguishability_audit(
            &s,
            &adv,
            7,
            Vec2::new(1.0, 0.0),
            ShadowMode::Compensated,
            Exec::Sequential
        )
        .is_err());
    }

    #[test]
    fn short_audit_passes_and_controls_fail() {
        let s = short();
        let adv = AdversarySpec::new(4, [2, 3], true, true).unwrap();
        let dq = Vec2::new(5.0, -3.0);
        let ok = indistinguishability_audit(&s, &adv, 0, dq, ShadowMode::Compensated, Exec::Sequential).unwrap();
        assert!(ok.report.pass, "{}", ok.report);
        assert!((ok.report.witness_deviation_t0 - dq.norm()).abs() < 1e-12);

        let bad = indistinguishability_audit(&s, &adv, 0, dq, ShadowMode::Uncompensated, Exec::Sequential).unwrap();
        assert!(!bad.report.pass);
        assert!(bad.report.max_stream_deviation > 1e-3);

        let seen = adv.augmented(StreamId::new(0, SignalKind::Position));
        let leak = indistinguishability_audit(&s, &seen, 0, dq, ShadowMode::Compensated, Exec::Sequential).unwrap();
        assert!(!leak.report.pass);
        assert!(leak.report.max_stream_deviation >= 5.0 - 1e-12);
    }

    #[test]
    fn batch_matches_single_audits() {
        let adv = example_adversary();
        let cases: Vec<_> = [
            (0, Vec2::new(5.0, -3.0), ShadowMode::Compensated),
            (1, Vec2::new(0.5, 0.5), ShadowMode::Uncompensated),
        ]
        .into_iter()
        .map(|(target, dq, mode)| AuditCase {
            scenario: short(),
            adversary: adv.clone(),
            target,
            dq,
            mode,
        })
        .collect();
        let seq: Vec<_> = audit_batch(&cases, Exec::Sequential)
            .into_iter()
            .map(|r| r.unwrap())
            .collect();
        let par: Vec<_> = audit_batch(&cases, Exec::Parallel)
            .into_iter()
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(seq, par);
        assert!(seq[0].pass);
        assert!(!seq[1].pass);
        let single = indistinguishability_audit(
            &short(),
            &adv,
            0,
            Vec2::new(5.0, -3.0),
            ShadowMode::Compensated,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(seq[0], single.report);
    }

    #[test]
    fn audit_is_mode_independent() {
        let s = short();
        let adv = example_adversary();
        let a = indistinguishability_audit(
            &s,
            &adv,
            1,
            Vec2::new(1.0, 2.0),
            ShadowMode::Compensated,
            Exec::Sequential,
        )
        .unwrap();
        let b = indistinguishability_audit(
            &s,
            &adv,
            1,
            Vec2::new(1.0, 2.0),
            ShadowMode::Compensated,
            Exec::Parallel,
        )
        .unwrap();
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn information_set_is_deterministic_and_on_grid() {
        let s = short();
        let run = integrate_planner_from(
            &s,
            &s.initial_planner_state(),
            PlannerOptions { early_stop: false },
            Exec::Sequential,
        )
        .unwrap();
        let adv = example_adversary();
        let a = extract_information_set(&run.trace, &ring4(), &adv).unwrap();
        let b = extract_information_set(&run.trace, &ring4(), &adv).unwrap();
        assert_eq!(a, b);
        assert!(a.streams.values().all(|s| s.len() == run.trace.len()));
        assert!(!a.topology_known);
    }

    fn arb_graph() -> impl Strategy<Value = GraphTopology> {
        (2usize..=6).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            proptest::collection::vec(any::<bool>(), pairs.len()).prop_map(move |mask| {
                let edges: Vec<_> = pairs.iter().zip(&mask).filter(|(_, &m)| m).map(|(e, _)| *e).collect();
                GraphTopology::new(n, edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn views_are_monotone(g in arb_graph(), bits in any::<u8>(), collusion in any::<bool>()) {
            let n = g.len();
            let members: Vec<usize> = (0..n - 1).filter(|i| bits & (1 << i) != 0).collect();
            let adv = AdversarySpec::new(n, members.clone(), collusion, true).unwrap();
            let colluding = AdversarySpec::new(n, members.clone(), true, true).unwrap();
            let e = colluding.eavesdropper_view(&g).unwrap();
            for &h in &members {
                let local = adv.local_view(h, &g).unwrap();
                let pooled = colluding.colluding_view(h, &g).unwrap();
                prop_assert!(local.is_subset(&pooled));
                prop_assert!(pooled.is_subset(&e));
            }
            for id in &e {
                if !members.contains(&id.owner) {
                    prop_assert_eq!(id.kind, SignalKind::Estimate);
                }
            }
        }
    }
}

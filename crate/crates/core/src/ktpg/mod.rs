//! Iterative reserved-interval splitting over a temporal plan graph.
//!
//! Every vertex carries a reserved interval, initially `[0, ∞)`. Each
//! iteration picks one agent, plans its unlocked prefix with the speed
//! planner and splits the intervals of every conflicting Type-2 edge leaving
//! that prefix at the agent's leave time (plus a safety margin under
//! uncertainty). Once no edge conflicts, agents whose profile does not yet
//! reach their goal get one final planning pass over the full chain.

mod uncertainty;

pub use uncertainty::{
    normal_quantile, propagate_belief, ReachTimeBelief, UncertaintyError, UncertaintyModel,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinodynamics::{
    plan_speed_profile, KinematicState, PlanError, PrimitiveSet, ReservedInterval, SpeedProfile,
};
use crate::tpg::{Tpg, VertexId};

#[derive(Debug, Error, PartialEq)]
pub enum KtpgError {
    #[error("temporal plan graph is cyclic")]
    Cyclic,
    #[error("speed planning failed for agent {agent}: {source}")]
    Planner {
        agent: usize,
        #[source]
        source: PlanError,
    },
    #[error("conflicting edges remain but no agent can satisfy any of them")]
    Stalled,
    #[error("interval at a{}:{} became empty", .vertex.agent, .vertex.seq)]
    EmptyInterval { vertex: VertexId },
    #[error("expected {expected} start states, got {got}")]
    StartStates { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeStatus {
    Satisfied,
    Conflicting,
}

/// Interval table, edge statuses and committed profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KtpgState {
    /// One interval per vertex, indexed by [`Tpg::index`].
    pub intervals: Vec<ReservedInterval>,
    /// One status per Type-2 edge, in [`Tpg::type2_edges`] order.
    pub status: Vec<EdgeStatus>,
    pub profiles: Vec<Option<SpeedProfile>>,
}

#[derive(Serialize)]
struct SnapshotInterval {
    agent: usize,
    seq: usize,
    lower: f64,
    #[serde(with = "crate::kinodynamics::infinite_f64")]
    upper: f64,
}

#[derive(Serialize)]
struct SnapshotEdge {
    from: VertexId,
    to: VertexId,
    status: EdgeStatus,
}

#[derive(Serialize)]
struct Snapshot {
    intervals: Vec<SnapshotInterval>,
    edges: Vec<SnapshotEdge>,
}

impl KtpgState {
    pub fn interval(&self, tpg: &Tpg, v: VertexId) -> ReservedInterval {
        self.intervals[tpg.index(v)]
    }

    pub fn conflicting_count(&self) -> usize {
        self.status
            .iter()
            .filter(|s| **s == EdgeStatus::Conflicting)
            .count()
    }

    pub fn is_terminal(&self) -> bool {
        self.conflicting_count() == 0
    }

    /// Interval table and edge statuses as JSON.
    pub fn snapshot_json(&self, tpg: &Tpg) -> String {
        let mut intervals = Vec::with_capacity(self.intervals.len());
        for agent in 0..tpg.num_agents() {
            for seq in 0..tpg.chain_len(agent) {
                let iv = self.interval(tpg, VertexId::new(agent, seq));
                intervals.push(SnapshotInterval {
                    agent,
                    seq,
                    lower: iv.lower,
                    upper: iv.upper,
                });
            }
        }
        let edges = tpg
            .type2_edges()
            .iter()
            .zip(&self.status)
            .map(|(e, s)| SnapshotEdge {
                from: e.from,
                to: e.to,
                status: *s,
            })
            .collect();
        serde_json::to_string(&Snapshot { intervals, edges }).expect("snapshot serializes")
    }
}

/// Fresh state: every interval `[0, ∞)`, every Type-2 edge conflicting.
pub fn init_state(tpg: &Tpg) -> Result<KtpgState, KtpgError> {
    if !tpg.is_acyclic() {
        return Err(KtpgError::Cyclic);
    }
    Ok(KtpgState {
        intervals: vec![ReservedInterval::full(); tpg.num_vertices()],
        status: vec![EdgeStatus::Conflicting; tpg.type2_edges().len()],
        profiles: vec![None; tpg.num_agents()],
    })
}

/// Length of the longest prefix of `agent`'s chain without incoming
/// conflicting edges. The agent's current vertex always counts as unlocked.
pub fn unlocked_prefix(tpg: &Tpg, state: &KtpgState, agent: usize) -> usize {
    let n = tpg.chain_len(agent);
    (1..n)
        .find(|&seq| {
            tpg.incoming_ids(VertexId::new(agent, seq))
                .iter()
                .any(|&e| state.status[e] == EdgeStatus::Conflicting)
        })
        .unwrap_or(n)
}

fn conflicting_out_of_prefix(tpg: &Tpg, state: &KtpgState, agent: usize, prefix: usize) -> Vec<usize> {
    (1..prefix)
        .flat_map(|seq| tpg.outgoing_ids(VertexId::new(agent, seq)).iter().copied())
        .filter(|&e| state.status[e] == EdgeStatus::Conflicting)
        .collect()
}

/// Agent whose unlocked prefix is the source of the most conflicting edges;
/// ties go to the lowest id. `None` if no agent can satisfy any edge.
pub fn select_agent(tpg: &Tpg, state: &KtpgState) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for agent in 0..tpg.num_agents() {
        let prefix = unlocked_prefix(tpg, state, agent);
        let count = conflicting_out_of_prefix(tpg, state, agent, prefix).len();
        if count > 0 && best.map_or(true, |(_, c)| count > c) {
            best = Some((agent, count));
        }
    }
    best.map(|(a, _)| a)
}

/// Variance bookkeeping for safety margins: reach-time variance at local
/// vertex `seq` of `agent` is `K_agent · (moves_before[agent] + seq)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginModel {
    pub uncertainty: UncertaintyModel,
    /// Unobserved moves between each agent's anchor and its first vertex.
    pub moves_before: Vec<usize>,
    /// Maps local agent ids to rows of `uncertainty.k`.
    pub agent_ids: Vec<usize>,
}

impl MarginModel {
    /// Anchored at every agent's first vertex.
    pub fn anchored_at_start(uncertainty: UncertaintyModel) -> Self {
        let n = uncertainty.k.len();
        Self {
            uncertainty,
            moves_before: vec![0; n],
            agent_ids: (0..n).collect(),
        }
    }

    pub fn variance(&self, v: VertexId) -> f64 {
        self.uncertainty
            .variance(self.agent_ids[v.agent], self.moves_before[v.agent] + v.seq)
    }

    /// Margin for a Type-2 edge `from -> to`.
    pub fn margin(&self, from: VertexId, to: VertexId) -> f64 {
        self.uncertainty
            .margin(self.variance(from), self.variance(to))
    }
}

/// Splits the intervals of every conflicting edge leaving the first
/// `profile.len()` vertices of `agent` at the agent's leave time, marks those
/// edges satisfied and commits the profile.
pub fn satisfy_edges(
    tpg: &Tpg,
    state: &mut KtpgState,
    agent: usize,
    profile: SpeedProfile,
    margins: Option<&MarginModel>,
) -> Result<usize, KtpgError> {
    let edges = conflicting_out_of_prefix(tpg, state, agent, profile.len());
    for &e in &edges {
        let edge = *tpg.edge(e);
        let leave = profile.reach_time(edge.from.seq);
        let held = VertexId::new(agent, edge.from.seq - 1);
        let margin = margins.map_or(0.0, |m| m.margin(edge.from, edge.to));
        let hi = tpg.index(held);
        let ti = tpg.index(edge.to);
        state.intervals[hi].cap_upper(leave);
        state.intervals[ti].raise_lower_open(leave + margin);
        for (i, v) in [(hi, held), (ti, edge.to)] {
            if state.intervals[i].is_empty() {
                return Err(KtpgError::EmptyInterval { vertex: v });
            }
        }
        state.status[e] = EdgeStatus::Satisfied;
    }
    state.profiles[agent] = Some(profile);
    Ok(edges.len())
}

/// Inputs of one kTPG solve.
#[derive(Debug, Clone)]
pub struct KtpgProblem<'a> {
    pub tpg: &'a Tpg,
    pub prims: &'a PrimitiveSet,
    /// Kinematic state of each agent at its first chain vertex.
    pub starts: Vec<KinematicState>,
    /// Extra fixed lower bounds per vertex (by [`Tpg::index`]); empty for none.
    pub lower_bounds: Vec<f64>,
    pub margins: Option<MarginModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KtpgOutcome {
    pub profiles: Vec<SpeedProfile>,
    pub state: KtpgState,
    /// Agent-selection iterations, each satisfying at least one edge.
    pub iterations: usize,
    /// Final passes planning agents over their whole chain.
    pub commit_passes: usize,
    pub planner_calls: usize,
}

fn plan_prefix(
    problem: &KtpgProblem,
    state: &KtpgState,
    agent: usize,
    len: usize,
) -> Result<SpeedProfile, KtpgError> {
    let tpg = problem.tpg;
    let chain = &tpg.chain(agent)[..len];
    let intervals: Vec<ReservedInterval> = (0..len)
        .map(|seq| state.interval(tpg, VertexId::new(agent, seq)))
        .collect();
    let mut profile = plan_speed_profile(chain, &intervals, problem.starts[agent], problem.prims)
        .map_err(|source| KtpgError::Planner { agent, source })?;
    profile.agent = agent;
    Ok(profile)
}

/// Runs the loop until every Type-2 edge is satisfied and every agent holds a
/// profile over its full chain.
pub fn solve(problem: &KtpgProblem) -> Result<KtpgOutcome, KtpgError> {
    let tpg = problem.tpg;
    if problem.starts.len() != tpg.num_agents() {
        return Err(KtpgError::StartStates {
            expected: tpg.num_agents(),
            got: problem.starts.len(),
        });
    }
    let mut state = init_state(tpg)?;
    for (iv, lb) in state.intervals.iter_mut().zip(&problem.lower_bounds) {
        iv.lower = iv.lower.max(*lb);
    }
    let margins = problem.margins.as_ref();
    let mut iterations = 0;
    let mut planner_calls = 0;
    while !state.is_terminal() {
        let agent = select_agent(tpg, &state).ok_or(KtpgError::Stalled)?;
        let prefix = unlocked_prefix(tpg, &state, agent);
        let profile = plan_prefix(problem, &state, agent, prefix)?;
        planner_calls += 1;
        satisfy_edges(tpg, &mut state, agent, profile, margins)?;
        iterations += 1;
    }
    let mut commit_passes = 0;
    for agent in 0..tpg.num_agents() {
        let full = tpg.chain_len(agent);
        if state.profiles[agent].as_ref().map_or(true, |p| p.len() < full) {
            let profile = plan_prefix(problem, &state, agent, full)?;
            planner_calls += 1;
            commit_passes += 1;
            state.profiles[agent] = Some(profile);
        }
    }
    let profiles = state
        .profiles
        .iter()
        .map(|p| p.clone().expect("every agent committed"))
        .collect();
    Ok(KtpgOutcome {
        profiles,
        state,
        iterations,
        commit_passes,
        planner_calls,
    })
}

/// One-shot kTPG (or kTPGu with `uncertainty`) from standstill at `t = 0`.
pub fn run_ktpg(
    tpg: &Tpg,
    prims: &PrimitiveSet,
    uncertainty: Option<&UncertaintyModel>,
    starts: Option<Vec<KinematicState>>,
) -> Result<KtpgOutcome, KtpgError> {
    let starts = starts.unwrap_or_else(|| vec![KinematicState::at_rest(0.0); tpg.num_agents()]);
    solve(&KtpgProblem {
        tpg,
        prims,
        starts,
        lower_bounds: Vec::new(),
        margins: uncertainty.map(|u| MarginModel::anchored_at_start(u.clone())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;
    use crate::kinodynamics::{build_primitives, RobotModel};
    use crate::plan::{MapfPlan, TimedPath};
    use crate::tpg::build_tpg;

    fn c(x: u32, y: u32) -> Cell {
        Cell::new(x, y)
    }

    fn omni() -> PrimitiveSet {
        build_primitives(&RobotModel::omnidirectional()).unwrap()
    }

    /// Agent 1 passes (1,1) first; agent 0 waits for it.
    fn crossing() -> Tpg {
        build_tpg(&MapfPlan::new(vec![
            TimedPath::from_cells(0, &[c(1, 0), c(1, 0), c(1, 1), c(1, 2)]),
            TimedPath::from_cells(1, &[c(0, 1), c(1, 1), c(2, 1)]),
        ]))
        .unwrap()
    }

    #[test]
    fn init_without_edges_is_terminal() {
        let g = build_tpg(&MapfPlan::new(vec![TimedPath::from_cells(0, &[c(0, 0), c(1, 0)])])).unwrap();
        let s = init_state(&g).unwrap();
        assert!(s.is_terminal());
        assert_eq!(s.intervals.len(), g.num_vertices());
    }

    #[test]
    fn prefix_and_selection() {
        let g = crossing();
        let s = init_state(&g).unwrap();
        assert_eq!(s.conflicting_count(), 1);
        assert_eq!(unlocked_prefix(&g, &s, 0), 1);
        assert_eq!(unlocked_prefix(&g, &s, 1), 3);
        assert_eq!(select_agent(&g, &s), Some(1));
    }

    #[test]
    fn split_at_leave_time() {
        let g = crossing();
        let mut s = init_state(&g).unwrap();
        let prims = omni();
        let p = plan_speed_profile(
            g.chain(1),
            &[ReservedInterval::full(); 3],
            KinematicState::at_rest(0.0),
            &prims,
        )
        .unwrap();
        let leave = p.vertex_times[2];
        assert_eq!(satisfy_edges(&g, &mut s, 1, p, None).unwrap(), 1);
        assert_eq!(s.interval(&g, VertexId::new(1, 1)).upper, leave);
        let lower = s.interval(&g, VertexId::new(0, 1)).lower;
        assert!(lower > leave && lower - leave < 1e-5);
        assert_eq!(unlocked_prefix(&g, &s, 0), 3);
        assert!(s.is_terminal());
        let json = s.snapshot_json(&g);
        assert!(json.contains("\"Satisfied\""));
        assert!(json.contains("null"));
    }

    #[test]
    fn margin_shifts_successor() {
        let g = crossing();
        let mut s = init_state(&g).unwrap();
        let u = UncertaintyModel::uniform(2, 0.1, 0.99).unwrap();
        let m = MarginModel::anchored_at_start(u);
        let prims = omni();
        let p = plan_speed_profile(
            g.chain(1),
            &[ReservedInterval::full(); 3],
            KinematicState::at_rest(0.0),
            &prims,
        )
        .unwrap();
        let leave = p.vertex_times[2];
        satisfy_edges(&g, &mut s, 1, p, Some(&m)).unwrap();
        // Source a1:2 has 2 moves, target a0:1 one move: var 0.03.
        let expected = leave + m.uncertainty.z() * 0.03f64.sqrt();
        assert!((s.interval(&g, VertexId::new(0, 1)).lower - expected).abs() < 1e-5);
    }

    #[test]
    fn single_agent_gets_solo_optimum() {
        let g = build_tpg(&MapfPlan::new(vec![TimedPath::from_cells(
            0,
            &[c(0, 0), c(1, 0), c(2, 0), c(3, 0), c(4, 0)],
        )]))
        .unwrap();
        let out = run_ktpg(&g, &omni(), None, None).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.planner_calls, 1);
        assert!((out.profiles[0].end_time() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn crossing_profiles_are_disjoint() {
        let g = crossing();
        let out = run_ktpg(&g, &omni(), None, None).unwrap();
        assert_eq!(out.iterations, 1);
        let leave = out.profiles[1].vertex_times[2];
        let reach = out.profiles[0].vertex_times[1];
        assert!(reach > leave);
    }

    #[test]
    fn cyclic_graph_is_rejected() {
        let edges = vec![
            crate::tpg::Type2Edge {
                from: VertexId::new(0, 1),
                to: VertexId::new(1, 1),
                location: c(0, 0),
            },
            crate::tpg::Type2Edge {
                from: VertexId::new(1, 1),
                to: VertexId::new(0, 1),
                location: c(1, 0),
            },
        ];
        let g = Tpg::from_parts(
            vec![vec![c(0, 0), c(1, 0), c(2, 0)], vec![c(1, 0), c(0, 0), c(0, 1)]],
            edges,
        )
        .unwrap();
        assert_eq!(init_state(&g), Err(KtpgError::Cyclic));
    }
}

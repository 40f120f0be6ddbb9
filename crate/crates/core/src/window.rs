//! Windowed execution: every `t_e` seconds, re-anchor reach-time estimates
//! at the latest reports and re-solve a closed sub-graph of at least `t_p`
//! vertices per agent beyond what agents are already committed to.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinodynamics::{KinematicState, PrimitiveSet, SpeedProfile, OPEN_BOUND_DELTA};
use crate::ktpg::{solve, KtpgError, KtpgProblem, MarginModel, UncertaintyModel};
use crate::sim::{AgentFeedback, ExecError, ExecutionTrace, NoiseModel, RunStats, SimError, Simulator};
use crate::tpg::{Tpg, Type2Edge, VertexId};

#[derive(Debug, Error, PartialEq)]
pub enum WindowError {
    #[error("replan period must be positive (got {0})")]
    Period(f64),
    #[error("planning window must span at least one vertex")]
    Depth,
    #[error("at least one vertex must be enqueued")]
    Enqueued,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Replan period (s); infinite to replan only when every agent has stopped.
    pub t_e: f64,
    /// Planning-window depth in vertices per agent; `usize::MAX` for all.
    pub t_p: usize,
    /// Vertices beyond the last report that keep their previous profile.
    pub n_e: usize,
}

impl WindowConfig {
    pub fn new(t_e: f64, t_p: usize, n_e: usize) -> Result<Self, WindowError> {
        if !(t_e > 0.0) {
            return Err(WindowError::Period(t_e));
        }
        if t_p == 0 {
            return Err(WindowError::Depth);
        }
        if n_e == 0 {
            return Err(WindowError::Enqueued);
        }
        Ok(Self { t_e, t_p, n_e })
    }

    /// Single window over the whole graph.
    pub fn unbounded() -> Self {
        Self {
            t_e: f64::INFINITY,
            t_p: usize::MAX,
            n_e: 1,
        }
    }
}

/// Last enqueued vertex of each agent: `n_e` vertices past its last report,
/// clamped at the goal.
pub fn mark_enqueued(feedback: &[AgentFeedback], chain_lens: &[usize], n_e: usize) -> Vec<usize> {
    feedback
        .iter()
        .zip(chain_lens)
        .map(|(fb, len)| fb.last_vertex.saturating_add(n_e).min(len - 1))
        .collect()
}

/// Extends frontiers until the source of every Type-2 edge into an enqueued
/// vertex is enqueued as well. `snap` moves a vertex to the next vertex the
/// agent can be committed to (a primitive boundary).
pub fn close_frontiers(
    tpg: &Tpg,
    frontiers: &mut [usize],
    mut snap: impl FnMut(usize, usize) -> usize,
) {
    loop {
        let mut changed = false;
        for e in tpg.type2_edges() {
            if e.to.seq <= frontiers[e.to.agent] && e.from.seq > frontiers[e.from.agent] {
                frontiers[e.from.agent] = snap(e.from.agent, e.from.seq);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Per-agent vertex ranges of one planning window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanningWindow {
    /// Last committed vertex of each agent; the window starts right after it.
    pub frontier: Vec<usize>,
    /// Last window vertex of each agent (equal to the frontier if inactive).
    pub end: Vec<usize>,
    /// Type-2 edges with both endpoints inside the window.
    pub internal: Vec<usize>,
    /// Type-2 edges into the window whose source is already committed.
    pub fixed: Vec<usize>,
}

impl PlanningWindow {
    pub fn is_active(&self, agent: usize) -> bool {
        self.end[agent] > self.frontier[agent]
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.seq > self.frontier[v.agent] && v.seq <= self.end[v.agent]
    }
}

/// `t_p` vertices after each frontier, then extended until every Type-2 edge
/// into the window starts inside it or at a committed vertex.
pub fn extract_window(tpg: &Tpg, frontiers: &[usize], t_p: usize) -> PlanningWindow {
    let n = tpg.num_agents();
    let mut end: Vec<usize> = (0..n)
        .map(|a| frontiers[a].saturating_add(t_p).min(tpg.chain_len(a) - 1))
        .collect();
    loop {
        let mut changed = false;
        for e in tpg.type2_edges() {
            let target_in = e.to.seq > frontiers[e.to.agent] && e.to.seq <= end[e.to.agent];
            if target_in && e.from.seq > frontiers[e.from.agent] && e.from.seq > end[e.from.agent] {
                end[e.from.agent] = e.from.seq;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut window = PlanningWindow {
        frontier: frontiers.to_vec(),
        end,
        internal: Vec::new(),
        fixed: Vec::new(),
    };
    for (i, e) in tpg.type2_edges().iter().enumerate() {
        if !window.contains(e.to) {
            continue;
        }
        if window.contains(e.from) {
            window.internal.push(i);
        } else {
            window.fixed.push(i);
        }
    }
    window
}

/// Everything the controller knows when a window is planned.
#[derive(Debug, Clone)]
pub struct WindowContext<'a> {
    pub tpg: &'a Tpg,
    pub prims: &'a PrimitiveSet,
    pub uncertainty: Option<&'a UncertaintyModel>,
    /// Profile each agent currently follows, from its first chain vertex.
    pub current: &'a [SpeedProfile],
    pub feedback: &'a [AgentFeedback],
    /// Reported reach times.
    pub reached: &'a [Vec<f64>],
    pub now: f64,
}

impl WindowContext<'_> {
    /// Expected reach time of vertex `k` of `agent` given its reports.
    pub fn expected_reach(&self, agent: usize, k: usize) -> f64 {
        if let Some(&t) = self.reached[agent].get(k) {
            return t;
        }
        let fb = self.feedback[agent];
        self.current[agent].estimate_from(fb.last_vertex, fb.reach_time)[k - fb.last_vertex]
    }

    fn variance(&self, agent: usize, k: usize) -> f64 {
        self.uncertainty.map_or(0.0, |u| {
            u.variance(agent, k.saturating_sub(self.feedback[agent].last_vertex))
        })
    }
}

/// Result of solving one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    /// New profile for every active agent, starting at its frontier.
    pub profiles: Vec<Option<SpeedProfile>>,
    pub iterations: usize,
    pub planner_calls: usize,
}

/// Solves the sub-graph of `window` with starts taken from the current
/// profiles at the frontiers and estimates re-anchored at the last reports.
pub fn replan_window(ctx: &WindowContext, window: &PlanningWindow) -> Result<WindowPlan, KtpgError> {
    let tpg = ctx.tpg;
    let active: Vec<usize> = (0..tpg.num_agents()).filter(|&a| window.is_active(a)).collect();
    let mut local_of = vec![usize::MAX; tpg.num_agents()];
    for (l, &a) in active.iter().enumerate() {
        local_of[a] = l;
    }
    let chains: Vec<Vec<_>> = active
        .iter()
        .map(|&a| tpg.chain(a)[window.frontier[a]..=window.end[a]].to_vec())
        .collect();
    let local = |v: VertexId| VertexId::new(local_of[v.agent], v.seq - window.frontier[v.agent]);
    let edges: Vec<Type2Edge> = window
        .internal
        .iter()
        .map(|&i| {
            let e = tpg.edge(i);
            Type2Edge {
                from: local(e.from),
                to: local(e.to),
                location: e.location,
            }
        })
        .collect();
    let sub = Tpg::from_parts(chains, edges).expect("window edges are well formed");

    let mut lower_bounds = vec![0.0_f64; sub.num_vertices()];
    for &i in &window.fixed {
        let e = tpg.edge(i);
        let leave = ctx.expected_reach(e.from.agent, e.from.seq);
        let margin = ctx.uncertainty.map_or(0.0, |u| {
            u.margin(ctx.variance(e.from.agent, e.from.seq), ctx.variance(e.to.agent, e.to.seq))
        });
        let idx = sub.index(local(e.to));
        lower_bounds[idx] = lower_bounds[idx].max(leave + margin + OPEN_BOUND_DELTA);
    }

    let starts: Vec<KinematicState> = active
        .iter()
        .map(|&a| {
            let f = window.frontier[a];
            let mut s = ctx.current[a].state_at(f).expect("frontier is a boundary");
            s.time = ctx.expected_reach(a, f).max(ctx.now);
            s
        })
        .collect();

    let margins = ctx.uncertainty.map(|u| MarginModel {
        uncertainty: u.clone(),
        moves_before: active
            .iter()
            .map(|&a| window.frontier[a] - ctx.feedback[a].last_vertex)
            .collect(),
        agent_ids: active.clone(),
    });

    let out = solve(&KtpgProblem {
        tpg: &sub,
        prims: ctx.prims,
        starts,
        lower_bounds,
        margins,
    })
    .map_err(|e| match e {
        KtpgError::Planner { agent, source } => KtpgError::Planner {
            agent: active[agent],
            source,
        },
        other => other,
    })?;

    let mut profiles = vec![None; tpg.num_agents()];
    for (l, mut p) in out.profiles.into_iter().enumerate() {
        let a = active[l];
        p.agent = a;
        p.first_vertex = window.frontier[a];
        profiles[a] = Some(p);
    }
    Ok(WindowPlan {
        profiles,
        iterations: out.iterations,
        planner_calls: out.planner_calls,
    })
}

/// Limits of one execution run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopLimits {
    /// Simulated-time cap (s).
    pub max_time: f64,
    /// Wall-clock cap (s).
    pub time_limit: f64,
}

impl Default for LoopLimits {
    fn default() -> Self {
        Self {
            max_time: 1e6,
            time_limit: f64::INFINITY,
        }
    }
}

/// Windows without arrivals or scheduled motion before declaring deadlock.
const STALL_WINDOWS: usize = 3;

fn snap_to_boundary(profile: &SpeedProfile, v: usize) -> usize {
    profile
        .boundary_at_or_after(v)
        .unwrap_or_else(|| panic!("vertex {v} beyond the committed profile of agent {}", profile.agent))
}

/// Alternates replanning and simulation until every agent reaches its goal.
pub fn run_execution_loop(
    tpg: &Tpg,
    prims: &PrimitiveSet,
    uncertainty: Option<&UncertaintyModel>,
    config: WindowConfig,
    noise: NoiseModel,
    limits: LoopLimits,
) -> Result<(ExecutionTrace, RunStats), ExecError> {
    let n = tpg.num_agents();
    let wall = Instant::now();
    let mut sim = Simulator::new(tpg.chains().to_vec(), noise);
    let mut current: Vec<SpeedProfile> = (0..n)
        .map(|a| SpeedProfile::stationary(a, 0, 0.0, None))
        .collect();
    let lens: Vec<usize> = (0..n).map(|a| tpg.chain_len(a)).collect();
    let mut stats = RunStats::default();
    let mut now = 0.0;
    let mut stalled = 0;

    while !sim.all_done() {
        if wall.elapsed().as_secs_f64() > limits.time_limit {
            return Err(ExecError::Runtime(limits.time_limit));
        }
        if now > limits.max_time {
            return Err(SimError::TimeLimit {
                limit: limits.max_time,
            }
            .into());
        }
        let t0 = Instant::now();
        let feedback: Vec<AgentFeedback> = (0..n).map(|a| sim.feedback(a)).collect();
        let enqueued = mark_enqueued(&feedback, &lens, config.n_e);
        let mut frontiers: Vec<usize> = (0..n)
            .map(|a| snap_to_boundary(&current[a], enqueued[a].min(current[a].last_vertex())))
            .collect();
        let trace = sim.trace();
        let plan = loop {
            close_frontiers(tpg, &mut frontiers, |a, v| snap_to_boundary(&current[a], v));
            let window = extract_window(tpg, &frontiers, config.t_p);
            let ctx = WindowContext {
                tpg,
                prims,
                uncertainty,
                current: &current,
                feedback: &feedback,
                reached: &trace.reach_times,
                now,
            };
            match replan_window(&ctx, &window) {
                Ok(plan) => break plan,
                Err(KtpgError::Planner { agent, source }) => {
                    // Keep following the old profile one primitive further.
                    let f = frontiers[agent];
                    if f >= current[agent].last_vertex() {
                        return Err(ExecError::Planner { agent, source });
                    }
                    log::debug!("agent {agent} cannot leave its frontier {f}; extending");
                    frontiers[agent] = snap_to_boundary(&current[agent], f + 1);
                }
                Err(e) => return Err(e.into()),
            }
        };
        for (a, p) in plan.profiles.iter().enumerate() {
            if let Some(p) = p {
                sim.dispatch(a, p)?;
                current[a] = current[a].splice(p);
            }
        }
        stats.rounds += 1;
        stats.planner_calls += plan.planner_calls;
        stats.ktpg_iterations += plan.iterations;
        stats.round_runtimes.push(t0.elapsed().as_secs_f64());

        let until = now + config.t_e;
        let events = sim.advance(until)?;
        now = if until.is_finite() { until } else { sim.now().max(now) };
        if events.is_empty() && sim.next_event_time().is_none() && !sim.all_done() {
            stalled += 1;
            if stalled >= STALL_WINDOWS {
                return Err(SimError::Deadlock { time: now }.into());
            }
        } else {
            stalled = 0;
        }
    }
    Ok((sim.trace(), stats))
}

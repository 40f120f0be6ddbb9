//! Action-dependency-graph executor: an agent only plans through vertices
//! whose Type-2 predecessors have already been reached.

use std::time::Instant;

use thiserror::Error;

use super::{ExecutionTrace, NoiseModel, RunStats, SimError, Simulator};
use crate::kinodynamics::{
    plan_speed_profile, KinematicState, PlanError, PrimitiveSet, ReservedInterval, SpeedProfile,
};
use crate::tpg::{Tpg, VertexId};

#[derive(Debug, Error, PartialEq)]
pub enum ExecError {
    #[error("speed planning failed for agent {agent}: {source}")]
    Planner {
        agent: usize,
        #[source]
        source: PlanError,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ktpg(#[from] crate::ktpg::KtpgError),
    #[error("wall-clock limit of {0} s exceeded")]
    Runtime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdgConfig {
    /// Replanning happens on multiples of this period (s).
    pub replan_period: f64,
    /// Simulated-time cap (s).
    pub max_time: f64,
    /// Wall-clock cap (s).
    pub time_limit: f64,
}

impl Default for AdgConfig {
    fn default() -> Self {
        Self {
            replan_period: 0.01,
            max_time: 1e6,
            time_limit: f64::INFINITY,
        }
    }
}

/// First vertex from which an agent's motion may still be replanned, and its
/// kinematic state there. An agent resting at its last reached vertex can be
/// replanned from that vertex; otherwise the current primitive is kept.
pub fn replan_point(
    profile: &SpeedProfile,
    last_vertex: usize,
    reach_time: f64,
    departed: bool,
    now: f64,
) -> (usize, KinematicState) {
    let at_rest = profile.vertex_speeds[last_vertex - profile.first_vertex] == 0.0;
    let c = if !departed && at_rest {
        last_vertex
    } else {
        profile
            .boundary_at_or_after(last_vertex + 1)
            .expect("profiles end at a boundary")
    };
    let mut state = profile.state_at(c).expect("boundary vertex");
    let est = profile.estimate_from(last_vertex, reach_time)[c - last_vertex];
    state.time = est.max(now);
    (c, state)
}

fn update_enqueued(tpg: &Tpg, sim: &Simulator, enq: &mut [usize]) {
    for (agent, e) in enq.iter_mut().enumerate() {
        while *e + 1 < tpg.chain_len(agent)
            && tpg
                .incoming_ids(VertexId::new(agent, *e + 1))
                .iter()
                .all(|&i| {
                    let src = tpg.edge(i).from;
                    sim.last_reached(src.agent) >= src.seq
                })
        {
            *e += 1;
        }
    }
}

struct AdgRun<'a> {
    tpg: &'a Tpg,
    prims: &'a PrimitiveSet,
    sim: Simulator,
    current: Vec<SpeedProfile>,
    enqueued: Vec<usize>,
    stats: RunStats,
}

impl AdgRun<'_> {
    fn replan(&mut self, agent: usize, now: f64) -> Result<(), ExecError> {
        let fb = self.sim.feedback(agent);
        let (c, start) = replan_point(
            &self.current[agent],
            fb.last_vertex,
            fb.reach_time,
            fb.departed,
            now,
        );
        let end = self.enqueued[agent];
        if c >= end {
            return Ok(());
        }
        let chain = &self.tpg.chain(agent)[c..=end];
        let intervals = vec![ReservedInterval::full(); chain.len()];
        let mut p = plan_speed_profile(chain, &intervals, start, self.prims)
            .map_err(|source| ExecError::Planner { agent, source })?;
        self.stats.planner_calls += 1;
        p.agent = agent;
        p.first_vertex = c;
        self.sim.dispatch(agent, &p)?;
        self.current[agent] = self.current[agent].splice(&p);
        Ok(())
    }

    /// Replans every agent whose enqueued set grew.
    fn round(&mut self, now: f64) -> Result<(), ExecError> {
        let before = self.enqueued.clone();
        update_enqueued(self.tpg, &self.sim, &mut self.enqueued);
        let t0 = Instant::now();
        let mut any = false;
        for agent in 0..self.tpg.num_agents() {
            if self.enqueued[agent] != before[agent] {
                self.replan(agent, now)?;
                any = true;
            }
        }
        if any {
            self.stats.rounds += 1;
            self.stats.round_runtimes.push(t0.elapsed().as_secs_f64());
        }
        Ok(())
    }
}

/// Runs the baseline to completion. Enqueued vertices grow as Type-2
/// predecessors are reached; affected agents replan on the next multiple of
/// the replan period.
pub fn run_adg_baseline(
    tpg: &Tpg,
    prims: &PrimitiveSet,
    noise: NoiseModel,
    config: AdgConfig,
) -> Result<(ExecutionTrace, RunStats), ExecError> {
    let n = tpg.num_agents();
    let wall = Instant::now();
    let mut run = AdgRun {
        tpg,
        prims,
        sim: Simulator::new(tpg.chains().to_vec(), noise),
        current: (0..n)
            .map(|a| SpeedProfile::stationary(a, 0, 0.0, None))
            .collect(),
        enqueued: vec![0; n],
        stats: RunStats::default(),
    };
    run.round(0.0)?;
    while !run.sim.all_done() {
        if wall.elapsed().as_secs_f64() > config.time_limit {
            return Err(ExecError::Runtime(config.time_limit));
        }
        let Some(t) = run.sim.next_event_time() else {
            return Err(SimError::Deadlock { time: run.sim.now() }.into());
        };
        if t > config.max_time {
            return Err(SimError::TimeLimit {
                limit: config.max_time,
            }
            .into());
        }
        if run.sim.advance(t)?.is_empty() {
            continue;
        }
        let tick = ((t / config.replan_period - 1e-9).ceil() * config.replan_period).max(t);
        run.sim.advance(tick)?;
        run.round(tick)?;
    }
    Ok((run.sim.trace(), run.stats))
}

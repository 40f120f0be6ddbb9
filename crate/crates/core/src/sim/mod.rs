//! Discrete-event execution of dispatched speed profiles under Gaussian
//! move-time noise.
//!
//! Each agent follows its chain move by move. At a vertex passed at speed the
//! next move starts on arrival; at a stop the agent turns if needed and then
//! holds until the planned departure time. Move durations are perturbed per
//! move; waits and turns are exact.

mod adg;
mod check;
mod metrics;

pub use adg::{replan_point, run_adg_baseline, AdgConfig, ExecError};
pub use check::{check_trace, CollisionReport, OccupancyOverlap, OrderViolation};
pub use metrics::{compute_metrics, Metrics, RunStats};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, CELL_SIZE};
use crate::kinodynamics::SpeedProfile;

/// Default lower clamp on a sampled move time, as a fraction of nominal.
pub const DEFAULT_CLAMP_FLOOR: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("agent {agent} reached vertex {vertex} at speed without a continuation")]
    MissingContinuation { agent: usize, vertex: usize },
    #[error("dispatch for agent {agent} rewrites committed vertex {vertex}")]
    CommittedRewrite { agent: usize, vertex: usize },
    #[error("dispatched profile for agent {agent} does not fit its chain")]
    ChainMismatch { agent: usize },
    #[error("no agent can make progress at t = {time}")]
    Deadlock { time: f64 },
    #[error("simulated time exceeded {limit} s")]
    TimeLimit { limit: f64 },
}

/// Per-agent noise coefficients `K_i` (s²/m) with a reproducible seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub k: Vec<f64>,
    pub seed: u64,
    pub clamp_floor: f64,
}

impl NoiseModel {
    /// Standard deviation `eps` per meter for every agent.
    pub fn uniform(num_agents: usize, eps: f64, seed: u64) -> Self {
        Self {
            k: vec![eps * eps; num_agents],
            seed,
            clamp_floor: DEFAULT_CLAMP_FLOOR,
        }
    }

    pub fn noiseless(num_agents: usize) -> Self {
        Self::uniform(num_agents, 0.0, 0)
    }

    /// Generator of `agent`: ChaCha8 seeded with `seed`, stream `agent`.
    pub fn agent_rng(&self, agent: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(agent as u64);
        rng
    }
}

/// `nominal + N(0, K·distance)`, clamped below at `floor · nominal`.
pub fn sample_move_time_clamped<R: Rng + ?Sized>(
    nominal: f64,
    k: f64,
    distance: f64,
    floor: f64,
    rng: &mut R,
) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    if k <= 0.0 {
        return nominal;
    }
    (nominal + (k * distance).sqrt() * z).max(floor * nominal)
}

/// [`sample_move_time_clamped`] with the default floor.
pub fn sample_move_time<R: Rng + ?Sized>(nominal: f64, k: f64, distance: f64, rng: &mut R) -> f64 {
    sample_move_time_clamped(nominal, k, distance, DEFAULT_CLAMP_FLOOR, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PlannedMove {
    departure: f64,
    turn: f64,
    duration: f64,
    from_rest: bool,
    arrives_moving: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalEvent {
    pub agent: usize,
    pub vertex_seq: usize,
    pub location: Cell,
    pub t_actual: f64,
}

/// Actual reach times of every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub chains: Vec<Vec<Cell>>,
    /// Reach time of each vertex reached so far; vertex 0 at `t = 0`.
    pub reach_times: Vec<Vec<f64>>,
    /// Simulation clock when the trace was taken.
    pub end_time: f64,
}

impl ExecutionTrace {
    pub fn is_complete(&self) -> bool {
        self.chains
            .iter()
            .zip(&self.reach_times)
            .all(|(c, r)| r.len() == c.len())
    }

    /// Goal reach time of `agent`, if reached.
    pub fn finish_time(&self, agent: usize) -> Option<f64> {
        let r = &self.reach_times[agent];
        (r.len() == self.chains[agent].len()).then(|| r[r.len() - 1])
    }

    /// Occupancy of `agent` at vertex `k`: from its reach time to the reach
    /// time of the next vertex (or forever at the goal, or while unresolved).
    pub fn occupancy(&self, agent: usize, k: usize) -> Option<(f64, f64)> {
        let r = &self.reach_times[agent];
        let start = *r.get(k)?;
        Some((start, r.get(k + 1).copied().unwrap_or(f64::INFINITY)))
    }

    /// Arrival events sorted by time, then agent.
    pub fn events(&self) -> Vec<ArrivalEvent> {
        let mut ev: Vec<ArrivalEvent> = self
            .reach_times
            .iter()
            .enumerate()
            .flat_map(|(agent, r)| {
                r.iter().enumerate().map(move |(k, &t)| ArrivalEvent {
                    agent,
                    vertex_seq: k,
                    location: self.chains[agent][k],
                    t_actual: t,
                })
            })
            .collect();
        ev.sort_by(|a, b| {
            a.t_actual
                .total_cmp(&b.t_actual)
                .then(a.agent.cmp(&b.agent))
                .then(a.vertex_seq.cmp(&b.vertex_seq))
        });
        ev
    }

    /// One JSON object per arrival event, one per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in self.events() {
            out.push_str(&serde_json::to_string(&e).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

/// What the controller knows about one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentFeedback {
    pub last_vertex: usize,
    pub reach_time: f64,
    /// True once the move away from `last_vertex` has started.
    pub departed: bool,
}

/// Event-driven executor of dispatched profiles.
#[derive(Debug, Clone)]
pub struct Simulator {
    chains: Vec<Vec<Cell>>,
    noise: NoiseModel,
    rngs: Vec<ChaCha8Rng>,
    planned: Vec<Vec<Option<PlannedMove>>>,
    reach: Vec<Vec<f64>>,
    arrived_moving: Vec<bool>,
    in_flight: Vec<Option<(f64, f64)>>,
    now: f64,
}

impl Simulator {
    pub fn new(chains: Vec<Vec<Cell>>, noise: NoiseModel) -> Self {
        let n = chains.len();
        assert_eq!(noise.k.len(), n, "one noise coefficient per agent");
        Self {
            rngs: (0..n).map(|a| noise.agent_rng(a)).collect(),
            planned: chains.iter().map(|c| vec![None; c.len()]).collect(),
            reach: vec![vec![0.0]; n],
            arrived_moving: vec![false; n],
            in_flight: vec![None; n],
            chains,
            noise,
            now: 0.0,
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn num_agents(&self) -> usize {
        self.chains.len()
    }

    pub fn last_reached(&self, agent: usize) -> usize {
        self.reach[agent].len() - 1
    }

    pub fn reach_time(&self, agent: usize, k: usize) -> Option<f64> {
        self.reach[agent].get(k).copied()
    }

    pub fn is_done(&self, agent: usize) -> bool {
        self.reach[agent].len() == self.chains[agent].len()
    }

    pub fn all_done(&self) -> bool {
        (0..self.num_agents()).all(|a| self.is_done(a))
    }

    pub fn feedback(&self, agent: usize) -> AgentFeedback {
        let k = self.last_reached(agent);
        AgentFeedback {
            last_vertex: k,
            reach_time: self.reach[agent][k],
            departed: self.in_flight[agent].is_some(),
        }
    }

    /// Installs the moves of `profile` from its first vertex on, replacing
    /// any previously planned moves there and dropping those beyond its end.
    pub fn dispatch(&mut self, agent: usize, profile: &SpeedProfile) -> Result<(), SimError> {
        let f = profile.first_vertex;
        let last = profile.last_vertex();
        if last >= self.chains[agent].len() {
            return Err(SimError::ChainMismatch { agent });
        }
        let reached = self.last_reached(agent);
        if f < reached || (f == reached && self.in_flight[agent].is_some()) {
            return Err(SimError::CommittedRewrite { agent, vertex: f });
        }
        for k in f..self.chains[agent].len() {
            self.planned[agent][k] = (k < last).then(|| {
                let i = k - f;
                PlannedMove {
                    departure: profile.departure_times[i],
                    turn: profile.turn_times[i],
                    duration: profile.vertex_times[i + 1] - profile.departure_times[i],
                    from_rest: profile.vertex_speeds[i] == 0.0,
                    arrives_moving: profile.vertex_speeds[i + 1] > 0.0,
                }
            });
        }
        Ok(())
    }

    fn departure_of(&self, agent: usize) -> Option<f64> {
        let k = self.last_reached(agent);
        let m = self.planned[agent][k]?;
        let arrival = self.reach[agent][k];
        Some(if m.from_rest {
            (arrival + m.turn).max(m.departure)
        } else {
            arrival
        })
    }

    /// Earliest pending departure or arrival.
    pub fn next_event_time(&self) -> Option<f64> {
        (0..self.num_agents())
            .filter(|&a| !self.is_done(a))
            .filter_map(|a| match self.in_flight[a] {
                Some((_, arr)) => Some(arr),
                None => self.departure_of(a),
            })
            .min_by(f64::total_cmp)
    }

    /// Executes every departure and arrival up to `until`.
    pub fn advance(&mut self, until: f64) -> Result<Vec<ArrivalEvent>, SimError> {
        let mut events = Vec::new();
        for agent in 0..self.num_agents() {
            loop {
                if let Some((_, arr)) = self.in_flight[agent] {
                    if arr > until {
                        break;
                    }
                    self.in_flight[agent] = None;
                    let k = self.last_reached(agent);
                    self.arrived_moving[agent] =
                        self.planned[agent][k].is_some_and(|m| m.arrives_moving);
                    self.reach[agent].push(arr);
                    events.push(ArrivalEvent {
                        agent,
                        vertex_seq: k + 1,
                        location: self.chains[agent][k + 1],
                        t_actual: arr,
                    });
                    continue;
                }
                if self.is_done(agent) {
                    break;
                }
                let k = self.last_reached(agent);
                let Some(m) = self.planned[agent][k] else {
                    if self.arrived_moving[agent] {
                        return Err(SimError::MissingContinuation { agent, vertex: k });
                    }
                    break;
                };
                let dep = self.departure_of(agent).expect("planned move");
                if dep > until {
                    break;
                }
                let d = self.chains[agent][k].manhattan(self.chains[agent][k + 1]) as f64 * CELL_SIZE;
                let actual = sample_move_time_clamped(
                    m.duration,
                    self.noise.k[agent],
                    d,
                    self.noise.clamp_floor,
                    &mut self.rngs[agent],
                );
                self.in_flight[agent] = Some((dep, dep + actual));
            }
        }
        events.sort_by(|a, b| a.t_actual.total_cmp(&b.t_actual).then(a.agent.cmp(&b.agent)));
        if until.is_finite() {
            self.now = self.now.max(until);
        } else if let Some(t) = events.last().map(|e| e.t_actual) {
            self.now = self.now.max(t);
        }
        Ok(events)
    }

    pub fn trace(&self) -> ExecutionTrace {
        ExecutionTrace {
            chains: self.chains.clone(),
            reach_times: self.reach.clone(),
            end_time: self.now,
        }
    }
}

/// Dispatches complete profiles and runs them to the end.
pub fn execute_profiles(
    chains: Vec<Vec<Cell>>,
    profiles: &[SpeedProfile],
    noise: NoiseModel,
) -> Result<ExecutionTrace, SimError> {
    let mut sim = Simulator::new(chains, noise);
    for (a, p) in profiles.iter().enumerate() {
        sim.dispatch(a, p)?;
    }
    sim.advance(f64::INFINITY)?;
    if !sim.all_done() {
        return Err(SimError::Deadlock { time: sim.now() });
    }
    Ok(sim.trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinodynamics::{
        build_primitives, plan_speed_profile, KinematicState, ReservedInterval, RobotModel,
    };

    fn straight(n: u32) -> Vec<Cell> {
        (0..n).map(|x| Cell::new(x, 0)).collect()
    }

    fn solo(chain: &[Cell]) -> SpeedProfile {
        let prims = build_primitives(&RobotModel::omnidirectional()).unwrap();
        plan_speed_profile(
            chain,
            &vec![ReservedInterval::full(); chain.len()],
            KinematicState::at_rest(0.0),
            &prims,
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_is_nominal() {
        let mut rng = NoiseModel::noiseless(1).agent_rng(0);
        assert_eq!(sample_move_time(0.5, 0.0, 1.0, &mut rng), 0.5);
    }

    #[test]
    fn clamp_floor() {
        // With a huge coefficient every sufficiently negative draw lands on
        // the floor of 0.1 × nominal.
        let mut rng = NoiseModel::uniform(1, 0.0, 3).agent_rng(0);
        let mut hit = false;
        for _ in 0..1000 {
            let t = sample_move_time(0.5, 100.0, 1.0, &mut rng);
            assert!(t >= 0.05);
            hit |= t == 0.05;
        }
        assert!(hit);
    }

    #[test]
    fn noiseless_run_matches_profile() {
        let chain = straight(5);
        let p = solo(&chain);
        let trace = execute_profiles(vec![chain], &[p.clone()], NoiseModel::noiseless(1)).unwrap();
        assert!((trace.finish_time(0).unwrap() - 4.0).abs() < 1e-12);
        for (a, b) in trace.reach_times[0].iter().zip(&p.vertex_times) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn agents_without_instructions_hold() {
        let mut sim = Simulator::new(vec![straight(3)], NoiseModel::noiseless(1));
        assert!(sim.advance(10.0).unwrap().is_empty());
        assert_eq!(sim.last_reached(0), 0);
        assert_eq!(sim.next_event_time(), None);
    }

    #[test]
    fn goal_event_at_profile_end() {
        let chain = straight(2);
        let mut sim = Simulator::new(vec![chain.clone()], NoiseModel::noiseless(1));
        sim.dispatch(0, &solo(&chain)).unwrap();
        let ev = sim.advance(10.0).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0].t_actual - 2.0).abs() < 1e-12);
        assert!(sim.all_done());
    }

    #[test]
    fn committed_moves_cannot_be_rewritten() {
        let chain = straight(4);
        let p = solo(&chain);
        let mut sim = Simulator::new(vec![chain], NoiseModel::noiseless(1));
        sim.dispatch(0, &p).unwrap();
        sim.advance(0.1).unwrap();
        assert!(sim.feedback(0).departed);
        assert_eq!(
            sim.dispatch(0, &p),
            Err(SimError::CommittedRewrite { agent: 0, vertex: 0 })
        );
    }

    #[test]
    fn same_seed_same_trace() {
        let chain = straight(6);
        let p = solo(&chain);
        let run = |seed| {
            execute_profiles(vec![chain.clone()], &[p.clone()], NoiseModel::uniform(1, 0.05, seed))
                .unwrap()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn stops_hold_until_planned_departure() {
        let chain = straight(3);
        let prims = build_primitives(&RobotModel::omnidirectional()).unwrap();
        let first = solo(&chain[..2]);
        let mut second = plan_speed_profile(
            &chain[1..],
            &[ReservedInterval::full(); 2],
            KinematicState::at_rest(10.0),
            &prims,
        )
        .unwrap();
        second.first_vertex = 1;
        let p = first.splice(&second);
        assert_eq!(p.len(), 3);
        for seed in 0..20 {
            let t = execute_profiles(vec![chain.clone()], &[p.clone()], NoiseModel::uniform(1, 0.05, seed))
                .unwrap();
            assert!(t.reach_times[0][1] < 3.0);
            // Departure is exactly at 10 s whatever the first move did.
            assert!((t.reach_times[0][2] - 12.0).abs() < 0.5);
        }
    }

    #[test]
    fn json_lines() {
        let chain = straight(2);
        let trace = execute_profiles(vec![chain.clone()], &[solo(&chain)], NoiseModel::noiseless(1))
            .unwrap();
        let text = trace.to_json_lines();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"vertex_seq\":1"));
    }
}

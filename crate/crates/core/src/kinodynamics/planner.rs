//! Time-optimal speed planning along a fixed vertex chain.
//!
//! A* over `(vertex, discrete speed, heading)` states where every search node
//! carries the whole interval of arrival times reachable through its parent
//! path (safe-interval search with interval projection). Moving states can
//! only shift their interval forward by primitive durations; states at rest
//! may wait, so their interval extends to infinity. Each vertex `k` has one
//! admissible reach-time window `[lower_k, upper_{k-1}]`, derived from the
//! reserved intervals.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use thiserror::Error;

use super::model::ModelError;
use super::primitive::{build_primitives, PrimitiveSet};
use super::profile::{
    KinematicState, ProfileSegment, ReservedInterval, SegmentKind, SpeedProfile, TIME_TOL,
};
use super::RobotModel;
use crate::grid::{Cell, Direction, CELL_SIZE};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("no primitive sequence satisfies the reserved intervals")]
    Infeasible,
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy)]
enum Via {
    Start,
    Move { primitive: usize, turn: f64, quarter_turns: u8 },
}

#[derive(Debug, Clone, Copy)]
struct Node {
    vertex: usize,
    speed: usize,
    heading: Option<Direction>,
    lo: f64,
    hi: f64,
    parent: Option<usize>,
    via: Via,
}

#[derive(Debug)]
struct OpenEntry {
    f: f64,
    g: f64,
    speed: f64,
    seq: usize,
    node: usize,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for OpenEntry {}
impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OpenEntry {
    // Max-heap: reverse so that lower f, then lower g, then higher speed,
    // then earlier insertion pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| self.speed.total_cmp(&other.speed))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn heading_key(h: Option<Direction>) -> u8 {
    match h {
        Some(Direction::North) => 0,
        Some(Direction::East) => 1,
        Some(Direction::South) => 2,
        Some(Direction::West) => 3,
        None => 4,
    }
}

/// Directions of the moves along `chain`.
pub fn chain_directions(chain: &[Cell]) -> Result<Vec<Direction>, PlanError> {
    chain
        .windows(2)
        .map(|w| {
            w[0].direction_to(w[1]).ok_or_else(|| {
                PlanError::InvalidChain(format!("{} and {} are not adjacent", w[0], w[1]))
            })
        })
        .collect()
}

/// Plans the fastest motion from `start` at `chain[0]` to a standstill at the
/// last chain vertex such that every vertex is occupied within its reserved
/// interval. The last interval must be unbounded above.
pub fn plan_speed_profile(
    chain: &[Cell],
    intervals: &[ReservedInterval],
    start: KinematicState,
    prims: &PrimitiveSet,
) -> Result<SpeedProfile, PlanError> {
    if chain.is_empty() {
        return Err(PlanError::InvalidChain("empty chain".into()));
    }
    if intervals.len() != chain.len() {
        return Err(PlanError::InvalidChain(format!(
            "{} intervals for {} vertices",
            intervals.len(),
            chain.len()
        )));
    }
    if intervals.iter().any(|iv| iv.is_empty()) {
        return Err(PlanError::Infeasible);
    }
    if intervals[intervals.len() - 1].upper.is_finite() {
        return Err(PlanError::InvalidChain(
            "last vertex must have an unbounded interval".into(),
        ));
    }
    if start.speed >= prims.speeds().len() {
        return Err(PlanError::InvalidChain(format!(
            "start speed index {} out of range",
            start.speed
        )));
    }
    let dirs = chain_directions(chain)?;
    let model = &prims.model;
    let differential = model.is_differential();
    let last = chain.len() - 1;
    let start_heading = if differential {
        start.heading.or_else(|| dirs.first().copied())
    } else {
        start.heading
    };

    // Reach-time window of each vertex.
    let windows: Vec<(f64, f64)> = (0..chain.len())
        .map(|k| {
            let upper = if k == 0 {
                f64::INFINITY
            } else {
                intervals[k - 1].upper
            };
            (intervals[k].lower, upper)
        })
        .collect();

    let heuristic = |k: usize| (last - k) as f64 * CELL_SIZE / model.v_max;

    let mut nodes: Vec<Node> = Vec::new();
    let mut open = BinaryHeap::new();
    let mut seq = 0usize;
    let mut closed: HashMap<(usize, usize, u8), Vec<(f64, f64)>> = HashMap::new();

    let root = Node {
        vertex: 0,
        speed: start.speed,
        heading: start_heading,
        lo: start.time,
        hi: if start.speed == 0 {
            f64::INFINITY
        } else {
            start.time
        },
        parent: None,
        via: Via::Start,
    };
    nodes.push(root);
    open.push(OpenEntry {
        f: start.time + heuristic(0),
        g: start.time,
        speed: prims.speed(start.speed),
        seq,
        node: 0,
    });

    while let Some(entry) = open.pop() {
        let id = entry.node;
        let node = nodes[id];
        let key = (node.vertex, node.speed, heading_key(node.heading));
        let at_rest = node.speed == 0;

        // Remove the part of the arrival interval already covered by
        // expanded nodes of the same state.
        let covered = closed.entry(key).or_default();
        if at_rest {
            if !covered.is_empty() {
                continue;
            }
        } else {
            let mut lo = node.lo;
            let mut dominated = false;
            loop {
                let mut moved = false;
                for &(a, b) in covered.iter() {
                    if a <= lo + TIME_TOL && b >= lo - TIME_TOL {
                        if b >= node.hi - TIME_TOL {
                            dominated = true;
                            break;
                        }
                        if b > lo {
                            lo = b;
                            moved = true;
                        }
                    }
                }
                if dominated || !moved {
                    break;
                }
            }
            if dominated {
                continue;
            }
            if lo > node.lo {
                let mut trimmed = node;
                trimmed.lo = lo;
                nodes.push(trimmed);
                seq += 1;
                open.push(OpenEntry {
                    f: lo + heuristic(node.vertex),
                    g: lo,
                    speed: prims.speed(node.speed),
                    seq,
                    node: nodes.len() - 1,
                });
                continue;
            }
        }
        covered.push((node.lo, node.hi));

        if node.vertex == last && at_rest {
            return Ok(reconstruct(&nodes, id, chain, &dirs, start, start_heading, prims));
        }
        if node.vertex == last {
            continue;
        }

        let dir = dirs[node.vertex];
        for (pi, prim) in prims.from_speed(node.speed) {
            let end = node.vertex + prim.cells;
            if end > last || (end == last && prim.exit_speed != 0) {
                continue;
            }
            if differential && dirs[node.vertex..end].iter().any(|d| *d != dir) {
                continue;
            }
            let (mut dlo, mut dhi, turn, quarter_turns) = if at_rest {
                let (turn, q) = match (differential, node.heading) {
                    (true, Some(h)) => (model.turn_time(h, dir), h.quarter_turns_to(dir)),
                    _ => (0.0, 0),
                };
                (node.lo + turn, f64::INFINITY, turn, q)
            } else {
                if differential && node.heading != Some(dir) {
                    continue;
                }
                (node.lo, node.hi, 0.0, 0)
            };
            for (j, off) in prim.crossing_offsets.iter().enumerate() {
                let (wl, wh) = windows[node.vertex + j + 1];
                dlo = dlo.max(wl - off);
                dhi = dhi.min(wh - off);
            }
            if dlo > dhi + TIME_TOL {
                continue;
            }
            let dhi = dhi.max(dlo);
            let child = Node {
                vertex: end,
                speed: prim.exit_speed,
                heading: Some(dirs[end - 1]),
                lo: dlo + prim.duration,
                hi: if prim.exit_speed == 0 {
                    f64::INFINITY
                } else {
                    dhi + prim.duration
                },
                parent: Some(id),
                via: Via::Move {
                    primitive: pi,
                    turn,
                    quarter_turns,
                },
            };
            nodes.push(child);
            seq += 1;
            open.push(OpenEntry {
                f: child.lo + heuristic(end),
                g: child.lo,
                speed: prims.speed(child.speed),
                seq,
                node: nodes.len() - 1,
            });
        }
    }
    Err(PlanError::Infeasible)
}

fn reconstruct(
    nodes: &[Node],
    goal: usize,
    chain: &[Cell],
    dirs: &[Direction],
    start: KinematicState,
    start_heading: Option<Direction>,
    prims: &PrimitiveSet,
) -> SpeedProfile {
    // Walk back assigning a concrete arrival time to each node.
    let mut path = Vec::new();
    let mut cur = goal;
    let mut t = nodes[goal].lo;
    loop {
        let node = nodes[cur];
        path.push((cur, t));
        let Some(parent) = node.parent else { break };
        let Via::Move { primitive, .. } = node.via else {
            unreachable!("non-root node without a move")
        };
        let departure = t - prims.moves[primitive].duration;
        let p = nodes[parent];
        t = if p.parent.is_none() {
            start.time
        } else if p.speed == 0 {
            p.lo
        } else {
            departure
        };
        cur = parent;
    }
    path.reverse();

    let n = chain.len();
    let mut vertex_times = vec![0.0; n];
    let mut departure_times = vec![0.0; n];
    let mut turn_times = vec![0.0; n];
    let mut vertex_speeds = vec![0.0; n];
    let mut boundary_speed = vec![None; n];
    let mut arrival_heading = vec![None; n];
    let mut segments = Vec::new();

    vertex_times[0] = start.time;
    departure_times[0] = start.time;
    vertex_speeds[0] = prims.speed(start.speed);
    boundary_speed[0] = Some(start.speed);
    arrival_heading[0] = start_heading;

    for pair in path.windows(2) {
        let (pid, p_time) = pair[0];
        let (cid, c_time) = pair[1];
        let p = nodes[pid];
        let c = nodes[cid];
        let Via::Move {
            primitive,
            turn,
            quarter_turns,
        } = c.via
        else {
            unreachable!()
        };
        let prim = &prims.moves[primitive];
        let k = p.vertex;
        let departure = c_time - prim.duration;
        let wait = departure - turn - p_time;
        if wait > TIME_TOL {
            segments.push(ProfileSegment {
                vertex: k,
                start: p_time,
                duration: wait,
                kind: SegmentKind::Wait,
            });
        }
        if turn > 0.0 {
            segments.push(ProfileSegment {
                vertex: k,
                start: departure - turn,
                duration: turn,
                kind: SegmentKind::Turn { quarter_turns },
            });
        }
        segments.push(ProfileSegment {
            vertex: k,
            start: departure,
            duration: prim.duration,
            kind: SegmentKind::Move {
                primitive,
                entry_speed: prims.speed(prim.entry_speed),
                exit_speed: prims.speed(prim.exit_speed),
                cells: prim.cells,
            },
        });
        departure_times[k] = departure;
        turn_times[k] = turn;
        for (j, off) in prim.crossing_offsets.iter().enumerate() {
            let v = k + j + 1;
            vertex_times[v] = departure + off;
            departure_times[v] = departure + off;
            vertex_speeds[v] = prim.crossing_speeds[j];
            arrival_heading[v] = Some(dirs[v - 1]);
        }
        vertex_times[c.vertex] = c_time;
        departure_times[c.vertex] = c_time;
        boundary_speed[c.vertex] = Some(prim.exit_speed);
    }

    SpeedProfile {
        agent: 0,
        first_vertex: 0,
        segments,
        vertex_times,
        departure_times,
        turn_times,
        vertex_speeds,
        boundary_speed,
        arrival_heading,
    }
}

/// Fastest traversal time of `chain` from and to a standstill with no other
/// agents around.
pub fn min_traverse_time(chain: &[Cell], model: &RobotModel) -> Result<f64, PlanError> {
    if chain.len() <= 1 {
        return Ok(0.0);
    }
    let prims = build_primitives(model)?;
    let intervals = vec![ReservedInterval::full(); chain.len()];
    let profile = plan_speed_profile(chain, &intervals, KinematicState::at_rest(0.0), &prims)?;
    Ok(profile.duration())
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ExecutionTrace;
use crate::grid::Cell;
use crate::tpg::{Tpg, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyOverlap {
    pub location: Cell,
    pub agents: (usize, usize),
    pub start: f64,
    #[serde(with = "crate::kinodynamics::infinite_f64")]
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderViolation {
    pub edge: usize,
    pub from: VertexId,
    pub to: VertexId,
    /// Reach time of the edge source, i.e. when its agent left the location;
    /// `None` if it never got there.
    pub source_time: Option<f64>,
    pub target_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub overlaps: Vec<OccupancyOverlap>,
    pub order_violations: Vec<OrderViolation>,
}

impl CollisionReport {
    pub fn is_clean(&self) -> bool {
        self.overlaps.is_empty() && self.order_violations.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Occupancy overlaps per location and Type-2 edges whose target was reached
/// no later than its source.
pub fn check_trace(trace: &ExecutionTrace, tpg: &Tpg) -> CollisionReport {
    let mut report = CollisionReport::default();
    let mut by_location: HashMap<Cell, Vec<(usize, f64, f64)>> = HashMap::new();
    for (agent, chain) in trace.chains.iter().enumerate() {
        for k in 0..trace.reach_times[agent].len() {
            let (s, e) = trace.occupancy(agent, k).expect("reached vertex");
            by_location.entry(chain[k]).or_default().push((agent, s, e));
        }
    }
    let mut locations: Vec<_> = by_location.into_iter().collect();
    locations.sort_by_key(|(c, _)| *c);
    for (location, mut spans) in locations {
        spans.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        for (i, &(a, s1, e1)) in spans.iter().enumerate() {
            for &(b, s2, e2) in &spans[i + 1..] {
                if s2 >= e1 {
                    break;
                }
                if a != b {
                    report.overlaps.push(OccupancyOverlap {
                        location,
                        agents: (a, b),
                        start: s2.max(s1),
                        end: e1.min(e2),
                    });
                }
            }
        }
    }
    for (i, e) in tpg.type2_edges().iter().enumerate() {
        let Some(&target_time) = trace.reach_times[e.to.agent].get(e.to.seq) else {
            continue;
        };
        let source_time = trace.reach_times[e.from.agent].get(e.from.seq).copied();
        if source_time.map_or(true, |s| target_time <= s) {
            report.order_violations.push(OrderViolation {
                edge: i,
                from: e.from,
                to: e.to,
                source_time,
                target_time,
            });
        }
    }
    report
}

//! Discrete-time MAPF plans: the `.plan` text format, validation, and the
//! ideal (collision-free, delay-free) cost baseline.
//!
//! A plan file holds one record per agent:
//!
//! ```text
//! 0: (3,4)@0, (4,4)@1, (4,4)@2, (5,4)@3
//! 1: (0,0)@0, (0,1)@1
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Agents stay parked at
//! their last cell after their path ends.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, GridMap};
use crate::kinodynamics::{min_traverse_time, PlanError, RobotModel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanParseError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: non-adjacent step from {from} to {to}")]
    NonAdjacentStep { line: usize, from: Cell, to: Cell },
    #[error("line {line}: timestep gap, expected {expected} found {found}")]
    TimestepGap {
        line: usize,
        expected: u32,
        found: u32,
    },
    #[error("line {line}: cell {cell} is out of bounds or blocked")]
    InvalidCell { line: usize, cell: Cell },
    #[error("agent ids must be 0..n-1 without duplicates (offending id {0})")]
    AgentIds(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedPath {
    pub agent_id: usize,
    /// `(cell, timestep)` pairs; timesteps start at 0 and increase by one.
    pub steps: Vec<(Cell, u32)>,
}

impl TimedPath {
    /// Builds a path from consecutive cells starting at timestep 0.
    pub fn from_cells(agent_id: usize, cells: &[Cell]) -> Self {
        Self {
            agent_id,
            steps: cells.iter().enumerate().map(|(t, c)| (*c, t as u32)).collect(),
        }
    }

    pub fn start(&self) -> Cell {
        self.steps[0].0
    }

    pub fn goal(&self) -> Cell {
        self.steps[self.steps.len() - 1].0
    }

    /// Last timestep of the path; the agent is parked at its goal afterwards.
    pub fn end_time(&self) -> u32 {
        self.steps[self.steps.len() - 1].1
    }

    /// Cell occupied at `t`, holding the goal after the path ends.
    pub fn cell_at(&self, t: u32) -> Cell {
        let idx = (t as usize).min(self.steps.len() - 1);
        self.steps[idx].0
    }

    /// Location sequence with repeated (wait) entries removed.
    pub fn collapsed(&self) -> Vec<Cell> {
        let mut out: Vec<Cell> = Vec::with_capacity(self.steps.len());
        for (c, _) in &self.steps {
            if out.last() != Some(c) {
                out.push(*c);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapfPlan {
    pub paths: Vec<TimedPath>,
}

impl MapfPlan {
    pub fn new(paths: Vec<TimedPath>) -> Self {
        Self { paths }
    }

    pub fn num_agents(&self) -> usize {
        self.paths.len()
    }

    pub fn horizon(&self) -> u32 {
        self.paths.iter().map(|p| p.end_time()).max().unwrap_or(0)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.paths {
            out.push_str(&format!("{}: ", p.agent_id));
            let steps: Vec<String> = p
                .steps
                .iter()
                .map(|(c, t)| format!("({},{})@{}", c.x, c.y, t))
                .collect();
            out.push_str(&steps.join(", "));
            out.push('\n');
        }
        out
    }
}

fn syntax(line: usize, reason: impl Into<String>) -> PlanParseError {
    PlanParseError::Syntax {
        line,
        reason: reason.into(),
    }
}

fn parse_step(line: usize, token: &str) -> Result<(Cell, u32), PlanParseError> {
    let token = token.trim();
    let (cell, t) = token
        .rsplit_once('@')
        .ok_or_else(|| syntax(line, format!("expected (x,y)@t, got {token:?}")))?;
    let inner = cell
        .trim()
        .strip_prefix('(')
        .and_then(|c| c.strip_suffix(')'))
        .ok_or_else(|| syntax(line, format!("expected (x,y), got {cell:?}")))?;
    let (x, y) = inner
        .split_once(',')
        .ok_or_else(|| syntax(line, format!("expected (x,y), got {cell:?}")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<u32>()
            .map_err(|_| syntax(line, format!("invalid number {s:?}")))
    };
    Ok((Cell::new(parse(x)?, parse(y)?), parse(t)?))
}

/// Parses a `.plan` file and checks every path against `map`.
pub fn parse_plan(text: &str, map: &GridMap) -> Result<MapfPlan, PlanParseError> {
    let mut paths: Vec<(usize, TimedPath)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let (id, rest) = raw
            .split_once(':')
            .ok_or_else(|| syntax(line, "missing `agent_id:` prefix"))?;
        let agent_id: usize = id
            .trim()
            .parse()
            .map_err(|_| syntax(line, format!("invalid agent id {id:?}")))?;

        // Steps are separated by `,` outside parentheses.
        let mut steps = Vec::new();
        let mut depth = 0i32;
        let mut start = 0usize;
        let bytes = rest.as_bytes();
        for (i, b) in bytes.iter().enumerate() {
            match b {
                b'(' => depth += 1,
                b')' => depth -= 1,
                b',' if depth == 0 => {
                    steps.push(parse_step(line, &rest[start..i])?);
                    start = i + 1;
                }
                _ => {}
            }
        }
        if !rest[start..].trim().is_empty() {
            steps.push(parse_step(line, &rest[start..])?);
        }
        if steps.is_empty() {
            return Err(syntax(line, "empty path"));
        }

        for (k, (cell, t)) in steps.iter().enumerate() {
            if !map.in_bounds(*cell) || map.is_blocked(*cell) {
                return Err(PlanParseError::InvalidCell { line, cell: *cell });
            }
            if *t != k as u32 {
                return Err(PlanParseError::TimestepGap {
                    line,
                    expected: k as u32,
                    found: *t,
                });
            }
            if k > 0 {
                let prev = steps[k - 1].0;
                if prev != *cell && !prev.is_adjacent(*cell) {
                    return Err(PlanParseError::NonAdjacentStep {
                        line,
                        from: prev,
                        to: *cell,
                    });
                }
            }
        }
        paths.push((agent_id, TimedPath { agent_id, steps }));
    }

    paths.sort_by_key(|(id, _)| *id);
    for (expected, (id, _)) in paths.iter().enumerate() {
        if *id != expected {
            return Err(PlanParseError::AgentIds(*id));
        }
    }
    Ok(MapfPlan::new(paths.into_iter().map(|(_, p)| p).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanCollision {
    /// Two agents in the same cell at the same timestep.
    Vertex {
        agents: (usize, usize),
        cell: Cell,
        t: u32,
    },
    /// Two agents swapping cells between `t` and `t + 1`.
    Edge {
        agents: (usize, usize),
        cells: (Cell, Cell),
        t: u32,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub collisions: Vec<PlanCollision>,
}

impl ValidationReport {
    pub fn is_collision_free(&self) -> bool {
        self.collisions.is_empty()
    }
}

/// Lists every vertex and edge collision in `plan`, including collisions with
/// agents parked at their goals.
pub fn validate_plan(plan: &MapfPlan) -> ValidationReport {
    let mut report = ValidationReport::default();
    let horizon = plan.horizon();
    let mut occupied: HashMap<Cell, usize> = HashMap::new();
    for t in 0..=horizon {
        occupied.clear();
        for p in &plan.paths {
            let cell = p.cell_at(t);
            if let Some(&other) = occupied.get(&cell) {
                report.collisions.push(PlanCollision::Vertex {
                    agents: (other, p.agent_id),
                    cell,
                    t,
                });
            } else {
                occupied.insert(cell, p.agent_id);
            }
        }
        if t == horizon {
            break;
        }
        for (i, a) in plan.paths.iter().enumerate() {
            let (a0, a1) = (a.cell_at(t), a.cell_at(t + 1));
            if a0 == a1 {
                continue;
            }
            for b in &plan.paths[i + 1..] {
                if b.cell_at(t) == a1 && b.cell_at(t + 1) == a0 {
                    report.collisions.push(PlanCollision::Edge {
                        agents: (a.agent_id, b.agent_id),
                        cells: (a0, a1),
                        t,
                    });
                }
            }
        }
    }
    report
}

/// Sum over agents of the fastest kinodynamically feasible traversal of each
/// collapsed path, ignoring every other agent.
pub fn ideal_time_sum(plan: &MapfPlan, model: &RobotModel) -> Result<f64, PlanError> {
    plan.paths
        .iter()
        .map(|p| min_traverse_time(&p.collapsed(), model))
        .sum()
}

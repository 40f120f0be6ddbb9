//! MovingAI `.scen` scenario files.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, GridMap};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("missing `version` header")]
    MissingVersion,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("requested {requested} agents but the file has {available}")]
    NotEnoughTasks { requested: usize, available: usize },
    #[error("line {line}: coordinate {cell} outside {width}x{height} map")]
    OutOfBounds {
        line: usize,
        cell: Cell,
        width: u32,
        height: u32,
    },
    #[error("agent {agent}: {cell} is blocked")]
    Blocked { agent: usize, cell: Cell },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTask {
    pub agent_id: usize,
    pub start: Cell,
    pub goal: Cell,
}

/// Parses the first `count` tasks of a scenario file, in file order.
///
/// Each row is `bucket map width height start_x start_y goal_x goal_y optimal`
/// separated by tabs (any whitespace is accepted). Coordinates are checked
/// against the width and height stored on the row itself.
pub fn parse_scenario(text: &str, count: usize) -> Result<Vec<AgentTask>, ScenarioError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    match lines.next() {
        Some((_, l)) if l.starts_with("version") => {}
        _ => return Err(ScenarioError::MissingVersion),
    }

    let rows: Vec<(usize, &str)> = lines.collect();
    if count > rows.len() {
        return Err(ScenarioError::NotEnoughTasks {
            requested: count,
            available: rows.len(),
        });
    }

    rows.into_iter()
        .take(count)
        .enumerate()
        .map(|(agent_id, (line, row))| parse_row(agent_id, line, row))
        .collect()
}

fn parse_row(agent_id: usize, line: usize, row: &str) -> Result<AgentTask, ScenarioError> {
    let cols: Vec<&str> = if row.contains('\t') {
        row.split('\t').collect()
    } else {
        row.split_whitespace().collect()
    };
    if cols.len() < 9 {
        return Err(ScenarioError::Malformed {
            line,
            reason: format!("expected 9 columns, found {}", cols.len()),
        });
    }
    let num = |idx: usize, name: &str| -> Result<u32, ScenarioError> {
        cols[idx].trim().parse().map_err(|_| ScenarioError::Malformed {
            line,
            reason: format!("invalid {name} {:?}", cols[idx]),
        })
    };
    let width = num(2, "width")?;
    let height = num(3, "height")?;
    let start = Cell::new(num(4, "start_x")?, num(5, "start_y")?);
    let goal = Cell::new(num(6, "goal_x")?, num(7, "goal_y")?);
    for cell in [start, goal] {
        if cell.x >= width || cell.y >= height {
            return Err(ScenarioError::OutOfBounds {
                line,
                cell,
                width,
                height,
            });
        }
    }
    Ok(AgentTask {
        agent_id,
        start,
        goal,
    })
}

/// Checks that every task lies on a free cell of `map`.
pub fn validate_tasks(tasks: &[AgentTask], map: &GridMap) -> Result<(), ScenarioError> {
    for task in tasks {
        for cell in [task.start, task.goal] {
            if !map.in_bounds(cell) {
                return Err(ScenarioError::OutOfBounds {
                    line: 0,
                    cell,
                    width: map.width(),
                    height: map.height(),
                });
            }
            if map.is_blocked(cell) {
                return Err(ScenarioError::Blocked {
                    agent: task.agent_id,
                    cell,
                });
            }
        }
    }
    Ok(())
}

/// Writes tasks as a version-1 scenario file. The optimal-length column holds
/// the Manhattan distance.
pub fn write_scenario(tasks: &[AgentTask], map_name: &str, map: &GridMap) -> String {
    let mut out = String::from("version 1\n");
    for t in tasks {
        out.push_str(&format!(
            "0\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            map_name,
            map.width(),
            map.height(),
            t.start.x,
            t.start.y,
            t.goal.x,
            t.goal.y,
            t.start.manhattan(t.goal)
        ));
    }
    out
}

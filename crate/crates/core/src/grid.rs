//! Four-connected grid maps in the MovingAI `.map` format.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance between the centres of two neighbouring cells, in meters.
pub const CELL_SIZE: f64 = 1.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("line {line}: malformed header: {reason}")]
    Header { line: usize, reason: String },
    #[error("line {line}: expected {expected} cells, found {found}")]
    RowLength { line: usize, expected: usize, found: usize },
    #[error("line {line}: unknown cell character {ch:?}")]
    UnknownCell { line: usize, ch: char },
    #[error("expected {expected} map rows, found {found}")]
    RowCount { expected: usize, found: usize },
}

/// A grid cell as `(column, row)` with the origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    /// Direction of the unit move `self -> other`, if the cells are 4-adjacent.
    pub fn direction_to(self, other: Cell) -> Option<Direction> {
        let dx = other.x as i64 - self.x as i64;
        let dy = other.y as i64 - self.y as i64;
        match (dx, dy) {
            (0, -1) => Some(Direction::North),
            (1, 0) => Some(Direction::East),
            (0, 1) => Some(Direction::South),
            (-1, 0) => Some(Direction::West),
            _ => None,
        }
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.direction_to(other).is_some()
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Heading on the grid. North is towards row 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::East,
        Direction::South,
        Direction::West,
    ];

    fn index(self) -> u8 {
        match self {
            Direction::North => 0,
            Direction::East => 1,
            Direction::South => 2,
            Direction::West => 3,
        }
    }

    /// Number of quarter turns (0, 1 or 2) needed to rotate from `self` to `other`.
    pub fn quarter_turns_to(self, other: Direction) -> u8 {
        let d = (other.index() + 4 - self.index()) % 4;
        if d == 3 {
            1
        } else {
            d
        }
    }

    pub fn step(self, cell: Cell) -> Option<Cell> {
        match self {
            Direction::North => cell.y.checked_sub(1).map(|y| Cell::new(cell.x, y)),
            Direction::East => Some(Cell::new(cell.x + 1, cell.y)),
            Direction::South => Some(Cell::new(cell.x, cell.y + 1)),
            Direction::West => cell.x.checked_sub(1).map(|x| Cell::new(x, cell.y)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridMap {
    width: u32,
    height: u32,
    blocked: Vec<bool>,
}

impl GridMap {
    /// An obstacle-free map.
    pub fn empty(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "map dimensions must be positive");
        Self {
            width,
            height,
            blocked: vec![false; (width * height) as usize],
        }
    }

    pub fn from_blocked(width: u32, height: u32, blocked: Vec<bool>) -> Self {
        assert!(width > 0 && height > 0, "map dimensions must be positive");
        assert_eq!(blocked.len(), (width * height) as usize);
        Self {
            width,
            height,
            blocked,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        CELL_SIZE
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn index(&self, cell: Cell) -> usize {
        (cell.y * self.width + cell.x) as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        let index = index as u32;
        Cell::new(index % self.width, index / self.width)
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        !self.in_bounds(cell) || self.blocked[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        !self.is_blocked(cell)
    }

    pub fn set_blocked(&mut self, cell: Cell, blocked: bool) {
        let idx = self.index(cell);
        self.blocked[idx] = blocked;
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.iter().filter(|b| **b).count()
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.blocked.len())
            .filter(|i| !self.blocked[*i])
            .map(|i| self.cell_at(i))
    }

    /// Free 4-neighbours of `cell`.
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        Direction::ALL
            .into_iter()
            .filter_map(move |d| d.step(cell))
            .filter(|c| self.is_free(*c))
    }

    /// Serializes to MovingAI format with `.` for free and `@` for blocked cells.
    pub fn to_movingai(&self) -> String {
        let mut out = format!(
            "type octile\nheight {}\nwidth {}\nmap\n",
            self.height, self.width
        );
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(if self.is_blocked(Cell::new(x, y)) { '@' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

fn header_value(line: Option<(usize, &str)>, key: &str) -> Result<(usize, String), MapError> {
    let (no, text) = line.ok_or(MapError::Header {
        line: 0,
        reason: format!("missing `{key}` line"),
    })?;
    let mut parts = text.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(v), None) if k == key => Ok((no, v.to_string())),
        _ => Err(MapError::Header {
            line: no,
            reason: format!("expected `{key} <value>`, got {text:?}"),
        }),
    }
}

/// Parses MovingAI `.map` text.
///
/// Passable characters are `.`, `G` and `S`; `@`, `O`, `T` and `W` are blocked.
pub fn parse_map(text: &str) -> Result<GridMap, MapError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));

    header_value(lines.next(), "type")?;
    let (hline, h) = header_value(lines.next(), "height")?;
    let (wline, w) = header_value(lines.next(), "width")?;
    let height: u32 = h.parse().ok().filter(|v| *v > 0).ok_or(MapError::Header {
        line: hline,
        reason: format!("invalid height {h:?}"),
    })?;
    let width: u32 = w.parse().ok().filter(|v| *v > 0).ok_or(MapError::Header {
        line: wline,
        reason: format!("invalid width {w:?}"),
    })?;
    match lines.next() {
        Some((_, "map")) => {}
        Some((no, other)) => {
            return Err(MapError::Header {
                line: no,
                reason: format!("expected `map`, got {other:?}"),
            })
        }
        None => {
            return Err(MapError::Header {
                line: 0,
                reason: "missing `map` line".into(),
            })
        }
    }

    let mut blocked = Vec::with_capacity((width * height) as usize);
    let mut rows = 0usize;
    for (no, line) in lines {
        if line.is_empty() && rows == height as usize {
            continue;
        }
        if rows == height as usize {
            return Err(MapError::RowCount {
                expected: height as usize,
                found: rows + 1,
            });
        }
        let found = line.chars().count();
        if found != width as usize {
            return Err(MapError::RowLength {
                line: no,
                expected: width as usize,
                found,
            });
        }
        for ch in line.chars() {
            blocked.push(match ch {
                '.' | 'G' | 'S' => false,
                '@' | 'O' | 'T' | 'W' => true,
                _ => return Err(MapError::UnknownCell { line: no, ch }),
            });
        }
        rows += 1;
    }
    if rows != height as usize {
        return Err(MapError::RowCount {
            expected: height as usize,
            found: rows,
        });
    }
    Ok(GridMap {
        width,
        height,
        blocked,
    })
}

//! Grid-map text format: one row per line over the alphabet {S,F,H,G},
//! optional spaces between cells ("SFFF" and "S F F F" both parse).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("empty map")]
    Empty,
    #[error("ragged row at line {row}: expected {expected} cells, got {got}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("unknown character '{ch}' at ({row},{col})")]
    UnknownCharacter { row: usize, col: usize, ch: char },
    #[error("no start cell 'S'")]
    NoStart,
    #[error("multiple start cells: second at ({row},{col})")]
    MultipleStarts { row: usize, col: usize },
    #[error("no goal cell 'G'")]
    NoGoal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Start,
    Frozen,
    Hole,
    Goal,
}

/// A validated rectangular map with a unique start and at least one goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    cells: Vec<Cell>,
    height: usize,
    width: usize,
    start: usize,
}

impl GridMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.width + col]
    }

    #[inline]
    pub fn cell_at(&self, state: usize) -> Cell {
        self.cells[state]
    }

    pub fn start_state(&self) -> usize {
        self.start
    }

    pub fn start_pos(&self) -> (usize, usize) {
        (self.start / self.width, self.start % self.width)
    }

    pub fn goal_positions(&self) -> Vec<(usize, usize)> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == Cell::Goal)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }
}

/// Parses and validates map text. Blank lines are ignored; spaces between
/// cells are optional.
pub fn parse_map(text: &str) -> Result<GridMap, MapError> {
    let mut cells = Vec::new();
    let mut width = None;
    let mut start = None;
    let mut row_idx = 0;
    let mut saw_goal = false;

    for line in text.lines() {
        let compact: Vec<char> = line.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(compact.len());
        if compact.len() != expected {
            return Err(MapError::Ragged { row: row_idx, expected, got: compact.len() });
        }
        for (col, ch) in compact.iter().enumerate() {
            let cell = match ch {
                'S' => {
                    if start.is_some() {
                        return Err(MapError::MultipleStarts { row: row_idx, col });
                    }
                    start = Some(row_idx * expected + col);
                    Cell::Start
                }
                'F' => Cell::Frozen,
                'H' => Cell::Hole,
                'G' => {
                    saw_goal = true;
                    Cell::Goal
                }
                other => return Err(MapError::UnknownCharacter { row: row_idx, col, ch: *other }),
            };
            cells.push(cell);
        }
        row_idx += 1;
    }

    let width = width.ok_or(MapError::Empty)?;
    let start = start.ok_or(MapError::NoStart)?;
    if !saw_goal {
        return Err(MapError::NoGoal);
    }
    Ok(GridMap { cells, height: row_idx, width, start })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_two_cell_map() {
        let map = parse_map("SG").unwrap();
        assert_eq!((map.height(), map.width()), (1, 2));
        assert_eq!(map.start_state(), 0);
        assert_eq!(map.cell(0, 1), Cell::Goal);
    }

    #[test]
    fn spaces_between_cells_accepted() {
        let a = parse_map("S F\nF G").unwrap();
        let b = parse_map("SF\nFG").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_character_positions() {
        let err = parse_map("SX").unwrap_err();
        assert_eq!(err, MapError::UnknownCharacter { row: 0, col: 1, ch: 'X' });
        assert!(err.to_string().contains("at (0,1)"));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(parse_map("SF\nFGF"), Err(MapError::Ragged { row: 1, .. })));
    }

    #[test]
    fn start_multiplicity() {
        assert_eq!(parse_map("FG"), Err(MapError::NoStart));
        assert!(matches!(parse_map("SS\nFG"), Err(MapError::MultipleStarts { row: 0, col: 1 })));
    }

    #[test]
    fn goal_required() {
        assert_eq!(parse_map("SF"), Err(MapError::NoGoal));
    }
}

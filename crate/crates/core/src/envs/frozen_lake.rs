//! Slippery grid-world on a parsed map. Four actions (up/down/left/right);
//! the mover goes in the intended direction w.p. 1 − p_slip and to either
//! perpendicular direction w.p. p_slip/2 each; off-grid moves stay in place.
//! Holes and goals are absorbing. Reward 1 is earned exactly when occupying
//! a goal on the final step; everything else pays 0.
//!
//! The test perturbation flips the chosen action to its opposite w.p.
//! p_perturb before the slip applies, i.e. rows mix as
//! `(1 − p_perturb)·P₀(·|s,a) + p_perturb·P₀(·|s,opposite(a))`.
//! `p_perturb = 0` is the nominal model.

use super::{EnvError, ModelSimulator};
use crate::envs::gridmap::{Cell, GridMap};
use crate::model::{ModelDims, TabularMDP};

pub const ACTIONS: usize = 4;
const UP: usize = 0;
const DOWN: usize = 1;
const LEFT: usize = 2;
const RIGHT: usize = 3;

/// The default 8×8 map (start top-left, goal bottom-right).
pub const DEFAULT_LAKE_MAP: &str = "\
SFFFFFFF
FFFFFFFF
FFFHFFFF
FFFFFHFF
FFFHFFFF
FHHFFFHF
FHFFHFHF
FFFHFFFG
";

fn opposite(a: usize) -> usize {
    match a {
        UP => DOWN,
        DOWN => UP,
        LEFT => RIGHT,
        RIGHT => LEFT,
        _ => unreachable!("4 actions"),
    }
}

fn perpendicular(a: usize) -> [usize; 2] {
    match a {
        UP | DOWN => [LEFT, RIGHT],
        LEFT | RIGHT => [UP, DOWN],
        _ => unreachable!("4 actions"),
    }
}

fn destination(map: &GridMap, state: usize, dir: usize) -> usize {
    let (row, col) = (state / map.width(), state % map.width());
    let (nr, nc) = match dir {
        UP => (row.wrapping_sub(1), col),
        DOWN => (row + 1, col),
        LEFT => (row, col.wrapping_sub(1)),
        RIGHT => (row, col + 1),
        _ => unreachable!("4 actions"),
    };
    if nr >= map.height() || nc >= map.width() {
        state // off-grid: stay in place
    } else {
        nr * map.width() + nc
    }
}

/// Movement row for an effective (post-flip) direction.
fn slip_row(map: &GridMap, state: usize, dir: usize, p_slip: f64, row: &mut [f64]) {
    row.fill(0.0);
    row[destination(map, state, dir)] += 1.0 - p_slip;
    for perp in perpendicular(dir) {
        row[destination(map, state, perp)] += p_slip / 2.0;
    }
}

/// Builds the (possibly perturbed) model and its simulator.
pub fn build_frozen_lake(
    map: &GridMap,
    horizon: usize,
    p_slip: f64,
    p_perturb: f64,
) -> Result<(TabularMDP, ModelSimulator), EnvError> {
    if !(0.0..1.0).contains(&p_slip) {
        return Err(EnvError::ParameterOutOfRange { name: "p_slip", value: p_slip, range: "[0, 1)" });
    }
    if !(0.0..1.0).contains(&p_perturb) {
        return Err(EnvError::ParameterOutOfRange {
            name: "p_perturb",
            value: p_perturb,
            range: "[0, 1)",
        });
    }
    let states = map.n_cells();
    let dims = ModelDims::new(states, ACTIONS, horizon);
    let mut m = TabularMDP::zeroed(dims, map.start_state());

    let mut intended = vec![0.0; states];
    let mut flipped = vec![0.0; states];
    let mut row = vec![0.0; states];
    for s in 0..states {
        let absorbing = matches!(map.cell_at(s), Cell::Hole | Cell::Goal);
        for a in 0..ACTIONS {
            if absorbing {
                row.fill(0.0);
                row[s] = 1.0;
            } else {
                slip_row(map, s, a, p_slip, &mut intended);
                slip_row(map, s, opposite(a), p_slip, &mut flipped);
                for i in 0..states {
                    row[i] = (1.0 - p_perturb) * intended[i] + p_perturb * flipped[i];
                }
            }
            for h in 0..horizon {
                m.set_p_row(h, s, a, &row);
            }
        }
        if map.cell_at(s) == Cell::Goal {
            for a in 0..ACTIONS {
                m.set_reward(horizon - 1, s, a, 1.0);
            }
        }
    }
    let sim = ModelSimulator::new(m.clone());
    Ok((m, sim))
}

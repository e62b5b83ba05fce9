//! FrozenLake gridworld with perpendicular slips.
//!
//! Actions are indexed Left, Down, Right, Up. The intended move happens with
//! probability `1 − 2β` and each perpendicular move with `β`; moves that
//! would leave the grid keep the agent in place. Holes and the goal are
//! absorbing, and the only reward is `+1` for entering the goal.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::mdp::Mdp;

pub const LEFT: usize = 0;
pub const DOWN: usize = 1;
pub const RIGHT: usize = 2;
pub const UP: usize = 3;
pub const NUM_ACTIONS: usize = 4;

pub const MAP_4X4: [&str; 4] = ["SFFF", "FHFH", "FFFH", "HFFG"];

pub const MAP_8X8: [&str; 8] = [
    "SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF", "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Start,
    Frozen,
    Hole,
    Goal,
}

impl Cell {
    fn from_char(c: char) -> Option<Self> {
        match c {
            'S' => Some(Self::Start),
            'F' => Some(Self::Frozen),
            'H' => Some(Self::Hole),
            'G' => Some(Self::Goal),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Self::Start => 'S',
            Self::Frozen => 'F',
            Self::Hole => 'H',
            Self::Goal => 'G',
        }
    }

    fn is_terminal(self) -> bool {
        matches!(self, Self::Hole | Self::Goal)
    }
}

/// Square grid of cells, row-major, state index `row·side + col`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    side: usize,
    cells: Vec<Cell>,
}

impl Layout {
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let side = rows.len();
        if side == 0 {
            return Err(invalid("layout has no rows"));
        }
        let mut cells = Vec::with_capacity(side * side);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != side {
                return Err(Error::Parse(format!(
                    "layout row {} has {} cells, expected {side}",
                    r + 1,
                    row.chars().count()
                )));
            }
            for (c, ch) in row.chars().enumerate() {
                cells.push(Cell::from_char(ch).ok_or_else(|| {
                    Error::Parse(format!("layout row {} column {}: unknown cell {ch:?}", r + 1, c + 1))
                })?);
            }
        }
        let count = |kind| cells.iter().filter(|&&c| c == kind).count();
        if count(Cell::Start) != 1 {
            return Err(invalid("layout needs exactly one start cell"));
        }
        if count(Cell::Goal) != 1 {
            return Err(invalid("layout needs exactly one goal cell"));
        }
        Ok(Self { side, cells })
    }

    pub fn standard(side: usize) -> Result<Self> {
        match side {
            4 => Self::from_rows(&MAP_4X4),
            8 => Self::from_rows(&MAP_8X8),
            _ => Err(invalid(format!(
                "no built-in {side}x{side} map (use 4, 8 or a layout file)"
            ))),
        }
    }

    /// Reads one row per line; blank lines are ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cell(&self, state: usize) -> Cell {
        self.cells[state]
    }

    pub fn start_state(&self) -> usize {
        self.cells
            .iter()
            .position(|&c| c == Cell::Start)
            .expect("validated layout has a start")
    }

    pub fn goal_state(&self) -> usize {
        self.cells
            .iter()
            .position(|&c| c == Cell::Goal)
            .expect("validated layout has a goal")
    }

    fn step(&self, state: usize, action: usize) -> usize {
        let (r, c) = (state / self.side, state % self.side);
        let (r, c) = match action {
            LEFT => (r, c.saturating_sub(1)),
            DOWN => ((r + 1).min(self.side - 1), c),
            RIGHT => (r, (c + 1).min(self.side - 1)),
            UP => (r.saturating_sub(1), c),
            _ => unreachable!("FrozenLake has four actions"),
        };
        r * self.side + c
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rows: Vec<&str> = s.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        Self::from_rows(&rows)
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.cells.chunks(self.side) {
            let line: String = row.iter().map(|c| c.as_char()).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FrozenLakeSpec {
    pub layout: Layout,
    /// Perpendicular-slip probability, `0 ≤ β ≤ 1/3`.
    pub beta: f64,
    pub discount: f64,
}

impl FrozenLakeSpec {
    pub fn standard(side: usize, beta: f64, discount: f64) -> Result<Self> {
        Ok(Self {
            layout: Layout::standard(side)?,
            beta,
            discount,
        })
    }

    pub fn side(&self) -> usize {
        self.layout.side()
    }
}

pub fn build_frozen_lake(spec: &FrozenLakeSpec) -> Result<Mdp> {
    let beta = spec.beta;
    if !(0.0..=1.0 / 3.0).contains(&beta) {
        return Err(invalid(format!("slip probability {beta} outside [0, 1/3]")));
    }
    let layout = &spec.layout;
    let ns = layout.side() * layout.side();
    let goal = layout.goal_state();
    let mut p = vec![0.0; ns * NUM_ACTIONS * ns];
    let mut r = vec![0.0; ns * NUM_ACTIONS * ns];
    let mut terminal = Vec::new();
    for s in 0..ns {
        let cell = layout.cell(s);
        if cell.is_terminal() {
            terminal.push(s);
        }
        for a in 0..NUM_ACTIONS {
            let base = (s * NUM_ACTIONS + a) * ns;
            if cell.is_terminal() {
                p[base + s] = 1.0;
                continue;
            }
            let moves = [(a, 1.0 - 2.0 * beta), ((a + 1) % 4, beta), ((a + 3) % 4, beta)];
            for (dir, prob) in moves {
                if prob == 0.0 {
                    continue;
                }
                p[base + layout.step(s, dir)] += prob;
            }
            r[base + goal] = 1.0;
        }
    }
    Mdp::new(ns, NUM_ACTIONS, p, r, &terminal, spec.discount)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{assemble_lse, classical_policy_iteration, DeterministicPolicy};
    use crate::numerics::{sparsity_stats, ZERO_TOL};

    fn lake(beta: f64) -> Mdp {
        build_frozen_lake(&FrozenLakeSpec::standard(4, beta, 0.9).unwrap()).unwrap()
    }

    #[test]
    fn deterministic_step_down() {
        let mdp = lake(0.0);
        assert_eq!(mdp.num_states(), 16);
        assert_eq!(mdp.num_actions(), 4);
        assert_eq!(mdp.system_size(), 64);
        assert_eq!(mdp.transition(0, DOWN, 4), 1.0);
    }

    #[test]
    fn slip_probabilities() {
        let mdp = lake(0.1);
        // state 6 (row 1, col 2) is frozen with all four neighbours on the grid
        assert!((mdp.transition(6, DOWN, 10) - 0.8).abs() < 1e-15);
        assert!((mdp.transition(6, DOWN, 5) - 0.1).abs() < 1e-15);
        assert!((mdp.transition(6, DOWN, 7) - 0.1).abs() < 1e-15);
        assert_eq!(mdp.transition(6, DOWN, 2), 0.0);
    }

    #[test]
    fn off_grid_mass_folds_onto_current_cell() {
        let mdp = lake(0.1);
        // corner: Left intended stays, Up slip stays, Down slip moves
        assert!((mdp.transition(0, LEFT, 0) - 0.9).abs() < 1e-15);
        assert!((mdp.transition(0, LEFT, 4) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn holes_and_goal_absorb_and_reward_on_entry() {
        let mdp = lake(0.1);
        let terminals: Vec<usize> = mdp.terminal_states().collect();
        assert_eq!(terminals, vec![5, 7, 11, 12, 15]);
        for t in terminals {
            for a in 0..4 {
                assert_eq!(mdp.transition(t, a, t), 1.0);
                assert_eq!(mdp.reward(t, a, t), 0.0);
            }
        }
        assert_eq!(mdp.reward(14, RIGHT, 15), 1.0);
        assert_eq!(mdp.reward(14, RIGHT, 13), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_frozen_lake(&FrozenLakeSpec::standard(4, 0.5, 0.9).unwrap()).is_err());
        assert!(build_frozen_lake(&FrozenLakeSpec::standard(4, -0.1, 0.9).unwrap()).is_err());
        assert!(Layout::from_rows(&["SF", "FF"]).is_err());
        assert!(Layout::from_rows(&["FF", "FG"]).is_err());
        assert!(Layout::from_rows(&["SFG", "FF"]).is_err());
        assert!("SX\nFG".parse::<Layout>().is_err());
        assert!(FrozenLakeSpec::standard(5, 0.1, 0.9).is_err());
    }

    #[test]
    fn layout_text_round_trip() {
        let layout = Layout::standard(8).unwrap();
        let text = layout.to_string();
        assert_eq!(text.parse::<Layout>().unwrap(), layout);
        assert_eq!(layout.start_state(), 0);
        assert_eq!(layout.goal_state(), 63);
    }

    #[test]
    fn assembled_rows_are_sparse() {
        for (beta, cap) in [(0.0, 2), (0.1, 4), (1.0 / 3.0, 4)] {
            let mdp = lake(beta);
            for seed in 0..20 {
                let pi = DeterministicPolicy::random(&mdp, seed);
                let lse = assemble_lse(&mdp, &pi);
                assert!(sparsity_stats(&lse.matrix, ZERO_TOL).max_row_nnz <= cap);
            }
        }
    }

    #[test]
    fn optimal_deterministic_policy_reaches_goal() {
        let mdp = lake(0.0);
        let (pi, iters) =
            classical_policy_iteration(&mdp, &DeterministicPolicy::constant(16, 0)).unwrap();
        assert!(iters <= 10);
        let layout = Layout::standard(4).unwrap();
        let mut s = layout.start_state();
        for _ in 0..16 {
            if s == layout.goal_state() {
                break;
            }
            s = layout.step(s, pi.action(s));
        }
        assert_eq!(s, layout.goal_state());
    }
}

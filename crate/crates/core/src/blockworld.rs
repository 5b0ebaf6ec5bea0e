//! Discrete pick-and-place block environment and its scripted expert.
//!
//! Blocks live on a W x H grid of cells and can stack. An action picks the
//! topmost block at one cell and drops it on top of another cell's stack.
//! Task specs define initial positions, per-block goal positions, and the
//! sub-goal orderings the expert is allowed to demonstrate.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::mix64;

/// One block: identity plus grid position and stack height.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: String,
    pub color: String,
    pub col: usize,
    pub row: usize,
    /// Stack height at the cell: 0 = on the desk.
    pub level: usize,
}

/// Grid occupancy of all blocks. Value-semantic; `step` returns a new state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockWorldState {
    pub grid_w: usize,
    pub grid_h: usize,
    pub blocks: Vec<Block>,
}

impl BlockWorldState {
    pub fn new(grid_w: usize, grid_h: usize, blocks: Vec<Block>) -> Result<Self> {
        let state = BlockWorldState {
            grid_w,
            grid_h,
            blocks,
        };
        state.check_valid()?;
        Ok(state)
    }

    fn check_valid(&self) -> Result<()> {
        if self.grid_w == 0 || self.grid_h == 0 {
            return Err(Error::InvalidTask("grid dimensions must be positive".into()));
        }
        let mut seen = BTreeMap::new();
        for b in &self.blocks {
            if b.col >= self.grid_w || b.row >= self.grid_h {
                return Err(Error::InvalidTask(format!(
                    "block `{}` outside the {}x{} grid",
                    b.id, self.grid_w, self.grid_h
                )));
            }
            if seen.insert((b.col, b.row, b.level), b.id.clone()).is_some() {
                return Err(Error::InvalidTask(format!(
                    "two blocks occupy cell ({},{}) level {}",
                    b.col, b.row, b.level
                )));
            }
        }
        // stacks must be contiguous from the desk up
        let mut per_cell: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for b in &self.blocks {
            per_cell.entry((b.col, b.row)).or_default().push(b.level);
        }
        for ((c, r), mut levels) in per_cell {
            levels.sort_unstable();
            for (i, l) in levels.iter().enumerate() {
                if *l != i {
                    return Err(Error::InvalidTask(format!(
                        "floating block at cell ({c},{r}): stack levels not contiguous"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of blocks stacked at a cell.
    pub fn stack_height(&self, col: usize, row: usize) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.col == col && b.row == row)
            .count()
    }

    /// Index of the topmost block at a cell, if any.
    fn top_block(&self, col: usize, row: usize) -> Option<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.col == col && b.row == row)
            .max_by_key(|(_, b)| b.level)
            .map(|(i, _)| i)
    }

    pub fn block(&self, id: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    /// Canonical text key: blocks sorted by id, `id=col,row,level` joined
    /// with `|`. Used as Q-table key and ground-truth configuration id.
    pub fn canonical_key(&self) -> String {
        let mut parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| format!("{}={},{},{}", b.id, b.col, b.row, b.level))
            .collect();
        parts.sort();
        parts.join("|")
    }
}

/// A pick cell and a place cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PickPlaceAction {
    pub pick: (usize, usize),
    pub place: (usize, usize),
}

impl PickPlaceAction {
    /// Dense action index over (pick cell, place cell) pairs.
    pub fn index(&self, grid_w: usize, grid_h: usize) -> usize {
        let cells = grid_w * grid_h;
        let pick = self.pick.1 * grid_w + self.pick.0;
        let place = self.place.1 * grid_w + self.place.0;
        pick * cells + place
    }

    pub fn from_index(index: usize, grid_w: usize, grid_h: usize) -> Self {
        let cells = grid_w * grid_h;
        let pick = index / cells;
        let place = index % cells;
        PickPlaceAction {
            pick: (pick % grid_w, pick / grid_w),
            place: (place % grid_w, place / grid_w),
        }
    }
}

/// Declared block: start cell (desk level) and goal (cell, stack level).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSpec {
    pub id: String,
    pub color: String,
    pub start: [usize; 2],
    pub goal: [usize; 3],
}

fn default_step_cap() -> usize {
    50
}

fn default_dwell() -> usize {
    1
}

/// A pick-and-place task: grid, blocks, goals, and expert orderings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    /// `[W, H]` grid cells.
    pub grid: [usize; 2],
    #[serde(default = "default_step_cap")]
    pub step_cap: usize,
    /// Frames recorded per reached configuration when featurizing demos.
    #[serde(default = "default_dwell")]
    pub dwell_frames: usize,
    #[serde(default)]
    pub randomize_initial: bool,
    /// Allowed sub-goal orderings (block ids, in move order) for the expert.
    pub orderings: Vec<Vec<String>>,
    pub blocks: Vec<BlockSpec>,
}

impl TaskSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let spec: TaskSpec = toml::from_str(&text).map_err(|e| {
            Error::Config(format!(
                "task file {}: {e}",
                path.as_ref().display()
            ))
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn grid_w(&self) -> usize {
        self.grid[0]
    }

    pub fn grid_h(&self) -> usize {
        self.grid[1]
    }

    pub fn num_actions(&self) -> usize {
        let cells = self.grid_w() * self.grid_h();
        cells * cells
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.blocks.len()
    }

    /// Blocks that must move to reach the goal configuration.
    pub fn moving_blocks(&self) -> Vec<&BlockSpec> {
        self.blocks
            .iter()
            .filter(|b| b.start[0] != b.goal[0] || b.start[1] != b.goal[1] || b.goal[2] != 0)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid[0] == 0 || self.grid[1] == 0 {
            return Err(Error::InvalidTask("grid dimensions must be positive".into()));
        }
        if self.step_cap == 0 {
            return Err(Error::InvalidTask("step_cap must be positive".into()));
        }
        if self.dwell_frames == 0 {
            return Err(Error::InvalidTask("dwell_frames must be positive".into()));
        }
        if self.blocks.is_empty() {
            return Err(Error::InvalidTask("task defines no blocks".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        let mut start_cells = std::collections::BTreeSet::new();
        for b in &self.blocks {
            if b.id.is_empty() {
                return Err(Error::InvalidTask("block with empty id".into()));
            }
            if !ids.insert(b.id.clone()) {
                return Err(Error::InvalidTask(format!("duplicate block id `{}`", b.id)));
            }
            if b.start[0] >= self.grid_w() || b.start[1] >= self.grid_h() {
                return Err(Error::InvalidTask(format!(
                    "block `{}` starts outside the grid",
                    b.id
                )));
            }
            if b.goal[0] >= self.grid_w() || b.goal[1] >= self.grid_h() {
                return Err(Error::InvalidTask(format!(
                    "block `{}` goal outside the grid",
                    b.id
                )));
            }
            if !start_cells.insert((b.start[0], b.start[1])) {
                return Err(Error::InvalidTask(format!(
                    "block `{}` starts on an occupied cell",
                    b.id
                )));
            }
        }
        // goal stacks must be contiguous from the desk up
        let mut goal_cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for b in &self.blocks {
            goal_cells
                .entry((b.goal[0], b.goal[1]))
                .or_default()
                .push(b.goal[2]);
        }
        for ((c, r), mut levels) in goal_cells {
            levels.sort_unstable();
            for (i, l) in levels.iter().enumerate() {
                if *l != i {
                    return Err(Error::InvalidTask(format!(
                        "goal stack at cell ({c},{r}) is not contiguous"
                    )));
                }
            }
        }
        // orderings must each move exactly the moving blocks
        if self.orderings.is_empty() {
            return Err(Error::InvalidTask("task defines no orderings".into()));
        }
        let moving: std::collections::BTreeSet<&str> =
            self.moving_blocks().iter().map(|b| b.id.as_str()).collect();
        for (i, ordering) in self.orderings.iter().enumerate() {
            let set: std::collections::BTreeSet<&str> =
                ordering.iter().map(|s| s.as_str()).collect();
            if set.len() != ordering.len() || set != moving {
                return Err(Error::InvalidTask(format!(
                    "ordering {i} is not a permutation of the blocks that move"
                )));
            }
        }
        // blocks that do not move must already satisfy their goal
        for b in &self.blocks {
            let moves = moving.contains(b.id.as_str());
            if !moves && (b.start[0] != b.goal[0] || b.start[1] != b.goal[1] || b.goal[2] != 0) {
                return Err(Error::InvalidTask(format!(
                    "block `{}` neither moves nor starts at its goal",
                    b.id
                )));
            }
        }
        Ok(())
    }

    /// The target configuration as a state.
    pub fn goal_state(&self) -> BlockWorldState {
        let blocks = self
            .blocks
            .iter()
            .map(|b| Block {
                id: b.id.clone(),
                color: b.color.clone(),
                col: b.goal[0],
                row: b.goal[1],
                level: b.goal[2],
            })
            .collect();
        BlockWorldState {
            grid_w: self.grid_w(),
            grid_h: self.grid_h(),
            blocks,
        }
    }
}

/// Initial state for an episode. With `randomize_initial` the blocks are
/// jittered onto seeded distinct free cells (desk level); otherwise the
/// spec's fixed start cells are used and the seed is irrelevant.
pub fn reset(spec: &TaskSpec, seed: u64) -> BlockWorldState {
    let mut blocks: Vec<Block> = spec
        .blocks
        .iter()
        .map(|b| Block {
            id: b.id.clone(),
            color: b.color.clone(),
            col: b.start[0],
            row: b.start[1],
            level: 0,
        })
        .collect();
    if spec.randomize_initial {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells: Vec<(usize, usize)> = (0..spec.grid_h())
            .flat_map(|r| (0..spec.grid_w()).map(move |c| (c, r)))
            .collect();
        for i in 0..blocks.len() {
            let j = rng.random_range(i..cells.len());
            cells.swap(i, j);
            blocks[i].col = cells[i].0;
            blocks[i].row = cells[i].1;
        }
    }
    BlockWorldState {
        grid_w: spec.grid_w(),
        grid_h: spec.grid_h(),
        blocks,
    }
}

/// Applies a pick-and-place action. Picking an empty cell, placing onto the
/// pick cell, or addressing cells outside the grid is a no-op that still
/// consumes the timestep.
pub fn step(state: &BlockWorldState, action: &PickPlaceAction) -> BlockWorldState {
    let mut next = state.clone();
    let (pc, pr) = action.pick;
    let (qc, qr) = action.place;
    if pc >= state.grid_w || pr >= state.grid_h || qc >= state.grid_w || qr >= state.grid_h {
        return next;
    }
    if (pc, pr) == (qc, qr) {
        return next;
    }
    let Some(idx) = state.top_block(pc, pr) else {
        return next;
    };
    let target_level = state.stack_height(qc, qr);
    let b = &mut next.blocks[idx];
    b.col = qc;
    b.row = qr;
    b.level = target_level;
    next
}

/// Mean per-block distance to goal: Euclidean cell distance plus one unit
/// per stack-level mismatch.
pub fn placement_error(state: &BlockWorldState, spec: &TaskSpec) -> f64 {
    let mut total = 0.0;
    for bs in &spec.blocks {
        let b = state
            .block(&bs.id)
            .expect("state is missing a block declared by the task");
        let dc = b.col as f64 - bs.goal[0] as f64;
        let dr = b.row as f64 - bs.goal[1] as f64;
        let dl = (b.level as i64 - bs.goal[2] as i64).unsigned_abs() as f64;
        total += (dc * dc + dr * dr).sqrt() + dl;
    }
    total / spec.blocks.len() as f64
}

/// One recorded expert demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub id: String,
    pub ordering: Vec<String>,
    pub states: Vec<BlockWorldState>,
    pub actions: Vec<PickPlaceAction>,
}

/// Generates `n` expert demonstrations cycling through the spec's allowed
/// orderings. In coverage mode `n` must reach every ordering at least once.
pub fn expert_demos(spec: &TaskSpec, n: usize, coverage: bool, seed: u64) -> Result<Vec<Demo>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput("expert demo count is zero"));
    }
    if coverage && n < spec.orderings.len() {
        return Err(Error::Coverage {
            required: spec.orderings.len(),
            requested: n,
        });
    }
    let mut demos = Vec::with_capacity(n);
    for i in 0..n {
        let ordering = &spec.orderings[i % spec.orderings.len()];
        let mut state = reset(spec, mix64(seed, i as u64));
        let mut states = vec![state.clone()];
        let mut actions = Vec::with_capacity(ordering.len());
        for id in ordering {
            let block = state
                .block(id)
                .ok_or_else(|| Error::InvalidTask(format!("ordering names unknown block `{id}`")))?;
            let goal = spec
                .blocks
                .iter()
                .find(|b| &b.id == id)
                .expect("validated ordering id");
            let action = PickPlaceAction {
                pick: (block.col, block.row),
                place: (goal.goal[0], goal.goal[1]),
            };
            state = step(&state, &action);
            let placed = state.block(id).expect("block survives step");
            if placed.col != goal.goal[0] || placed.row != goal.goal[1] || placed.level != goal.goal[2]
            {
                return Err(Error::InvalidTask(format!(
                    "ordering {:?} places `{id}` at level {} instead of {}",
                    ordering, placed.level, goal.goal[2]
                )));
            }
            actions.push(action);
            states.push(state.clone());
        }
        if placement_error(&state, spec) != 0.0 {
            return Err(Error::InvalidTask(format!(
                "ordering {ordering:?} does not reach the goal configuration"
            )));
        }
        demos.push(Demo {
            id: i.to_string(),
            ordering: ordering.clone(),
            states,
            actions,
        });
    }
    Ok(demos)
}

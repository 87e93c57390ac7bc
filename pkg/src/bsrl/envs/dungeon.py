"""Procedural multi-floor gridworld with five reward channels.

Each main floor has one down-stair; floor ``branch_floor`` carries an extra
up-stair that leads into a side branch climbed through up-stairs. The agent
arrives on the connecting stair of the destination level, like NetHack.

Reward channels (full order, select a subset with ``channels``):
    scout  newly revealed tiles this step (also the task reward)
    dlvl   +1 per dungeon level deeper, -1 per level shallower
    ac     +1 when stepping onto armour (armour class decremented)
    food   fraction of hunger restored when eating on a food tile
    xp     +1 per monster stepped on (monster removed)
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from ..core import ConfigurationError, RewardVector, make_rng

WALL, FLOOR, DOWN, UP, FOOD, ARMOUR, MONSTER = range(7)
TILE_CHARS = "#.><%[M"

N, S, E, W, DESCEND, ASCEND, EAT, WAIT = range(8)
ACTIONS = ("N", "S", "E", "W", "descend", "ascend", "eat", "wait")
MOVES = {N: (-1, 0), S: (1, 0), E: (0, 1), W: (0, -1)}

CHANNELS = ("scout", "dlvl", "ac", "food", "xp")


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DungeonConfig:
    floors: int = 6
    branch_floor: int = 2
    branch_levels: int = 2
    grid_size: int = 9
    reveal_radius: int = 1
    view_radius: int = 2
    hunger_max: int = 200
    food_per_floor: int = 1
    armour_per_floor: int = 1
    monsters_per_floor: int = 2
    carve_fraction: float = 0.5
    max_steps: int = 500
    channels: tuple = CHANNELS
    fixed_layout: bool = False

    def __post_init__(self):
        if not 1 <= self.branch_floor < self.floors:
            raise ConfigurationError(
                f"need 1 <= branch_floor < floors, got branch_floor={self.branch_floor}, floors={self.floors}"
            )
        if self.grid_size < 5:
            raise ConfigurationError(f"grid_size must be >= 5, got {self.grid_size}")
        if self.branch_levels < 1:
            raise ConfigurationError("branch_levels must be >= 1")
        unknown = [c for c in self.channels if c not in CHANNELS]
        if unknown or not self.channels:
            raise ConfigurationError(f"unknown reward channels {unknown}; choose from {CHANNELS}")
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def n_levels(self) -> int:
        return self.floors + self.branch_levels


@dataclass(frozen=True)
class DungeonLayout:
    """Static per-dungeon data shared by every state of an episode."""

    seed: int
    dlvl: tuple  # dungeon level of each level index
    is_branch: tuple
    links: dict  # (level, r, c) -> (level, r, c)
    start_pos: tuple


@dataclass(frozen=True)
class DungeonGridState:
    layout: DungeonLayout = field(repr=False)
    tiles: np.ndarray = field(repr=False)  # (levels, G, G) uint8
    revealed: np.ndarray = field(repr=False)  # (levels, G, G) bool
    level: int
    pos: tuple
    hunger: int
    armour_class: int
    experience: int
    turn: int
    steps: int
    visited_levels: frozenset
    done: bool = False

    @property
    def floor(self) -> int:
        """Dungeon level (depth) of the current level."""
        return self.layout.dlvl[self.level]

    @property
    def in_branch(self) -> bool:
        return self.layout.is_branch[self.level]

    @property
    def entered_branch(self) -> bool:
        return any(self.layout.is_branch[lv] for lv in self.visited_levels)

    def to_bytes(self) -> bytes:
        head = np.array(
            [self.level, *self.pos, self.hunger, self.armour_class, self.experience, self.turn, self.steps, self.done],
            dtype=np.int64,
        )
        visited = np.array(sorted(self.visited_levels), dtype=np.int64)
        links = repr(sorted(self.layout.links.items())).encode()
        return b"".join(
            [head.tobytes(), visited.tobytes(), self.tiles.tobytes(), self.revealed.tobytes(), links]
        )

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


# --------------------------------------------------------------------------- #
# generation
# --------------------------------------------------------------------------- #


def _carve(rng: np.random.Generator, G: int, fraction: float) -> np.ndarray:
    grid = np.zeros((G, G), dtype=np.uint8)
    interior = (G - 2) ** 2
    target = max(8, int(fraction * interior))
    r, c = (int(x) for x in rng.integers(1, G - 1, size=2))
    grid[r, c] = FLOOR
    carved = 1
    # drunkard's walk keeps the carved region a single connected component
    for _ in range(200 * interior):
        if carved >= target:
            break
        dr, dc = MOVES[int(rng.integers(4))]
        r = min(max(r + dr, 1), G - 2)
        c = min(max(c + dc, 1), G - 2)
        if grid[r, c] == WALL:
            grid[r, c] = FLOOR
            carved += 1
    return grid


def _connected(grid: np.ndarray, start: tuple) -> np.ndarray:
    seen = np.zeros(grid.shape, dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for dr, dc in MOVES.values():
            nr, nc = r + dr, c + dc
            if grid[nr, nc] != WALL and not seen[nr, nc]:
                seen[nr, nc] = True
                queue.append((nr, nc))
    return seen


def generate_dungeon(
    seed: int,
    floors: int = 6,
    branch_floor: int = 2,
    grid_size: int = 9,
    *,
    config: DungeonConfig | None = None,
    max_retries: int = 50,
) -> DungeonGridState:
    """Deterministic dungeon for ``seed``; see module docstring for structure.

    ``config`` takes precedence over the three shape arguments when given.
    """
    cfg = config or DungeonConfig(floors=floors, branch_floor=branch_floor, grid_size=grid_size)
    for attempt in range(max_retries):
        state = _try_generate(seed, attempt, cfg)
        if state is not None:
            return state
    raise GenerationError(f"no valid layout for seed {seed} after {max_retries} attempts")


def _try_generate(seed: int, attempt: int, cfg: DungeonConfig) -> DungeonGridState | None:
    rng = make_rng(seed, "dungeon", attempt)
    G, F, B = cfg.grid_size, cfg.floors, cfg.branch_levels
    n_levels = F + B
    dlvl = tuple(list(range(1, F + 1)) + [cfg.branch_floor - (j + 1) for j in range(B)])
    is_branch = tuple([False] * F + [True] * B)
    tiles = np.zeros((n_levels, G, G), dtype=np.uint8)
    stairs: dict[str, tuple] = {}
    start_pos = None
    per_floor_items = [FOOD] * cfg.food_per_floor + [ARMOUR] * cfg.armour_per_floor
    per_floor_items += [MONSTER] * cfg.monsters_per_floor

    for lv in range(n_levels):
        grid = _carve(rng, G, cfg.carve_fraction)
        cells = [tuple(int(v) for v in x) for x in np.argwhere(grid == FLOOR)]
        wanted = []
        if lv < F:
            wanted.append(("down", lv))
            if lv > 0:
                wanted.append(("up", lv))
            else:
                wanted.append(("start", lv))
            if lv == cfg.branch_floor - 1:
                wanted.append(("branch_up", lv))
        else:
            wanted.append(("down", lv))
            if lv < n_levels - 1:
                wanted.append(("up", lv))
        if len(cells) < len(wanted) + len(per_floor_items):
            return None
        order = rng.permutation(len(cells))
        picks = [cells[i] for i in order]
        for (kind, _), cell in zip(wanted, picks):
            if kind == "start":
                start_pos = cell
            else:
                stairs[(kind, lv)] = cell
                grid[cell] = DOWN if kind == "down" else UP
        for item, cell in zip(per_floor_items, picks[len(wanted):]):
            grid[cell] = item
        if not _connected(grid, picks[0]).sum() == (grid != WALL).sum():
            return None
        tiles[lv] = grid

    links = {}

    def link(a_kind, a_lv, b_kind, b_lv):
        a, b = stairs[(a_kind, a_lv)], stairs[(b_kind, b_lv)]
        links[(a_lv, *a)] = (b_lv, *b)
        links[(b_lv, *b)] = (a_lv, *a)

    for lv in range(F - 1):
        link("down", lv, "up", lv + 1)
    link("branch_up", cfg.branch_floor - 1, "down", F)
    for j in range(B - 1):
        link("up", F + j, "down", F + j + 1)
    # the deepest main floor's down-stair is the goal and has no link

    layout = DungeonLayout(seed=seed, dlvl=dlvl, is_branch=is_branch, links=links, start_pos=start_pos)
    state = DungeonGridState(
        layout=layout,
        tiles=tiles,
        revealed=np.zeros(tiles.shape, dtype=bool),
        level=0,
        pos=start_pos,
        hunger=cfg.hunger_max,
        armour_class=10,
        experience=0,
        turn=0,
        steps=0,
        visited_levels=frozenset([0]),
    )
    revealed, _ = _reveal(state.revealed, 0, start_pos, cfg.reveal_radius)
    return replace(state, revealed=revealed)


def _reveal(revealed: np.ndarray, level: int, pos: tuple, radius: int):
    G = revealed.shape[1]
    r0, r1 = max(pos[0] - radius, 0), min(pos[0] + radius + 1, G)
    c0, c1 = max(pos[1] - radius, 0), min(pos[1] + radius + 1, G)
    window = revealed[level, r0:r1, c0:c1]
    new = int(window.size - np.count_nonzero(window))
    if new == 0:
        return revealed, 0
    revealed = revealed.copy()
    revealed[level, r0:r1, c0:c1] = True
    return revealed, new


# --------------------------------------------------------------------------- #
# dynamics
# --------------------------------------------------------------------------- #


def dungeon_step(state: DungeonGridState, action: int, config: DungeonConfig | None = None):
    """Advance one turn. Returns (next_state, RewardVector over all five channels, done)."""
    cfg = config or DungeonConfig()
    if state.done:
        raise ValueError("dungeon_step called on a terminal state")
    if not 0 <= action < len(ACTIONS):
        raise ValueError(f"invalid action id {action}")
    ch = np.zeros(len(CHANNELS))
    tiles = state.tiles
    level, pos = state.level, state.pos
    hunger, ac, xp = state.hunger, state.armour_class, state.experience
    here = int(tiles[level][pos])

    if action in MOVES:
        dr, dc = MOVES[action]
        target = (pos[0] + dr, pos[1] + dc)
        G = tiles.shape[1]
        if 0 <= target[0] < G and 0 <= target[1] < G and tiles[level][target] != WALL:
            pos = target
            kind = int(tiles[level][pos])
            if kind in (ARMOUR, MONSTER):
                tiles = tiles.copy()
                tiles[level][pos] = FLOOR
                if kind == ARMOUR:
                    ac -= 1
                    ch[2] = 1.0
                else:
                    xp += 1
                    ch[4] = 1.0
    elif action in (DESCEND, ASCEND):
        wanted = DOWN if action == DESCEND else UP
        dest = state.layout.links.get((level, *pos))
        if here == wanted and dest is not None:
            ch[1] = state.layout.dlvl[dest[0]] - state.layout.dlvl[level]
            level, pos = dest[0], (dest[1], dest[2])
    elif action == EAT:
        if here == FOOD:
            ch[3] = (cfg.hunger_max - hunger) / cfg.hunger_max
            hunger = cfg.hunger_max
            tiles = tiles.copy()
            tiles[level][pos] = FLOOR

    hunger -= 1
    revealed, new = _reveal(state.revealed, level, pos, cfg.reveal_radius)
    ch[0] = new
    steps = state.steps + 1
    goal = level == cfg.floors - 1 and tiles[level][pos] == DOWN
    done = bool(goal or hunger <= 0 or steps >= cfg.max_steps)
    nxt = replace(
        state,
        tiles=tiles,
        revealed=revealed,
        level=level,
        pos=pos,
        hunger=max(hunger, 0),
        armour_class=ac,
        experience=xp,
        turn=state.turn + 1,
        steps=steps,
        visited_levels=state.visited_levels | {level},
        done=done,
    )
    return nxt, RewardVector(ch, ch[0]), done


def milestones(state: DungeonGridState) -> frozenset:
    layout = state.layout
    out = {f"reached-floor-{layout.dlvl[lv]}" for lv in state.visited_levels if not layout.is_branch[lv]}
    if state.entered_branch:
        out.add("entered-branch")
    if (len(layout.dlvl) - 1) in state.visited_levels:
        out.add("reached-branch-bottom")
    return frozenset(out)


def milestone_ids(config: DungeonConfig) -> list[str]:
    return [f"reached-floor-{k}" for k in range(1, config.floors + 1)] + ["entered-branch", "reached-branch-bottom"]


def render(state: DungeonGridState, reveal_all: bool = False) -> str:
    """One character per tile for every level; unrevealed tiles are blanks."""
    blocks = []
    for lv in range(state.tiles.shape[0]):
        kind = "branch" if state.layout.is_branch[lv] else "main"
        lines = [f"level {lv} ({kind}, dlvl {state.layout.dlvl[lv]})"]
        for r in range(state.tiles.shape[1]):
            row = []
            for c in range(state.tiles.shape[2]):
                if lv == state.level and (r, c) == state.pos:
                    row.append("@")
                elif reveal_all or state.revealed[lv, r, c]:
                    row.append(TILE_CHARS[state.tiles[lv, r, c]])
                else:
                    row.append(" ")
            lines.append("".join(row))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


# --------------------------------------------------------------------------- #
# environment wrapper
# --------------------------------------------------------------------------- #


class DungeonEnv:
    """Stepping wrapper emitting the selected reward channels.

    Observation layout (concatenated):
        local view   (2v+1)^2 cells x 8 one-hot kinds [unknown, wall, floor,
                     down, up, food, armour, monster], v = view_radius
        level        one-hot over level indices
        visited      per-level visited flags
        stairs       (dr, dc, known) for the down-stair, main up-stair and
                     branch up-stair of the current level, offsets / grid size
        scalars      hunger fraction, step fraction, revealed fraction of the
                     current level, row / G, col / G, in-branch flag
    """

    N_KINDS = 8

    def __init__(self, config: DungeonConfig | None = None, seed: int = 0):
        self.config = cfg = config or DungeonConfig()
        self.seed = seed
        self.channel_idx = np.array([CHANNELS.index(c) for c in cfg.channels])
        self.n_channels = len(cfg.channels)
        self.n_actions = len(ACTIONS)
        self.max_steps = cfg.max_steps
        v = cfg.view_radius
        self.view_cells = (2 * v + 1) ** 2
        L = cfg.n_levels
        self.obs_dim = self.view_cells * self.N_KINDS + 2 * L + 9 + 6
        self._episode = -1
        self.state: DungeonGridState | None = None

    def reset(self) -> np.ndarray:
        self._episode += 1
        layout_seed = self.seed if self.config.fixed_layout else self.seed * 1_000_003 + self._episode
        self.state = generate_dungeon(layout_seed, config=self.config)
        self._index_stairs()
        return self.observe()

    def _index_stairs(self):
        # per level: down, main-up, branch-up positions
        st = self.state
        cfg = self.config
        self._stairs = []
        for lv in range(cfg.n_levels):
            down = up = bup = None
            for (l, r, c), (dl, _, _) in st.layout.links.items():
                if l != lv:
                    continue
                if st.tiles[lv, r, c] == DOWN:
                    down = (r, c)
                elif st.layout.is_branch[dl] and not st.layout.is_branch[lv]:
                    bup = (r, c)
                else:
                    up = (r, c)
            if lv == cfg.floors - 1:
                down = tuple(int(x) for x in np.argwhere(st.tiles[lv] == DOWN)[0])
            self._stairs.append((down, up, bup))

    def step(self, action: int):
        self.state, reward, done = dungeon_step(self.state, int(action), self.config)
        sel = RewardVector(reward.channels[self.channel_idx], reward.task)
        return self.observe(), sel, done

    def milestones(self) -> frozenset:
        return milestones(self.state)

    def observe(self) -> np.ndarray:
        st, cfg = self.state, self.config
        G, v = cfg.grid_size, cfg.view_radius
        lv = st.level
        kinds = np.where(st.revealed[lv], st.tiles[lv].astype(np.int64) + 1, 0)
        padded = np.full((G + 2 * v, G + 2 * v), 1, dtype=np.int64)  # outside the map reads as wall
        padded[v:v + G, v:v + G] = kinds
        r, c = st.pos
        window = padded[r:r + 2 * v + 1, c:c + 2 * v + 1].ravel()
        view = np.zeros((self.view_cells, self.N_KINDS))
        view[np.arange(self.view_cells), window] = 1.0
        L = cfg.n_levels
        level = np.zeros(L)
        level[lv] = 1.0
        visited = np.zeros(L)
        visited[list(st.visited_levels)] = 1.0
        stairs = []
        for p in self._stairs[lv]:
            if p is not None and st.revealed[lv][p]:
                stairs += [(p[0] - r) / G, (p[1] - c) / G, 1.0]
            else:
                stairs += [0.0, 0.0, 0.0]
        scalars = [
            st.hunger / cfg.hunger_max,
            st.steps / cfg.max_steps,
            float(st.revealed[lv].mean()),
            r / G,
            c / G,
            float(st.in_branch),
        ]
        return np.concatenate([view.ravel(), level, visited, stairs, scalars])

    def render(self) -> str:
        return render(self.state)

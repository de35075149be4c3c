"""Grid-world navigation environment.

A map is a rectangular occupancy grid (default 20x20 cells of 0.5 m) with a
start cell, a goal cell and optional dynamic obstacles that cycle through
waypoints.  The agent has a cell and a heading and picks one of four actions:
forward, turn left, turn right, wait.

Coordinates are ``(x, y)`` with ``x`` the column and ``y`` the row of the map
text; row 0 is the first grid line of the file.  North is ``y - 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

GOAL_REWARD = 100.0
FALL_REWARD = -50.0
COLLISION_REWARD = -100.0
STEP_PENALTY_FAR = -10.0
STEP_PENALTY_NEAR = -1.0

N_FEATURES = 35
WINDOW = 5

Cell = tuple[int, int]


class Occupancy(enum.IntEnum):
    EMPTY = 0
    PARTIAL = 1
    FULL = 2


class Heading(enum.IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3


class Action(enum.IntEnum):
    FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    WAIT = 3


N_ACTIONS = len(Action)

_DELTAS = {
    Heading.NORTH: (0, -1),
    Heading.EAST: (1, 0),
    Heading.SOUTH: (0, 1),
    Heading.WEST: (-1, 0),
}

_HEADINGS = tuple(Heading)
_STEPS = tuple(_DELTAS[h] for h in _HEADINGS)
# plain ints: enum attribute lookups are slow on the per-step path
_FORWARD, _TURN_LEFT, _TURN_RIGHT = int(Action.FORWARD), int(Action.TURN_LEFT), int(Action.TURN_RIGHT)

_CHARS = {".": Occupancy.EMPTY, "~": Occupancy.PARTIAL, "#": Occupancy.FULL,
          "S": Occupancy.EMPTY, "G": Occupancy.EMPTY}


class MapError(ValueError):
    """Invalid map content. ``line``/``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class DynamicObstacle:
    """Obstacle following ``waypoints`` one cell per ``period`` ticks.

    If the last waypoint neighbours (or equals) the first, the list is a
    closed loop; otherwise the obstacle walks it back and forth.  ``route`` is
    the expanded cycle the phase index runs over.
    """

    id: str
    waypoints: tuple[Cell, ...]
    period: int = 1

    def __post_init__(self):
        if self.period < 1:
            raise MapError(f"obstacle {self.id}: period must be >= 1")
        if not self.waypoints:
            raise MapError(f"obstacle {self.id}: no waypoints")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if not _adjacent(a, b):
                raise MapError(f"obstacle {self.id}: waypoints {a} and {b} are not 4-neighbours")

    @property
    def route(self) -> tuple[Cell, ...]:
        w = self.waypoints
        if len(w) <= 2 or _adjacent(w[-1], w[0]):
            return w
        return w + w[-2:0:-1]


def _adjacent(a: Cell, b: Cell) -> bool:
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) <= 1


@dataclass(frozen=True)
class GridMap:
    cells: np.ndarray  # (height, width) of Occupancy values
    start_cell: Cell
    goal_cell: Cell
    cell_size: float = 0.5
    obstacles: tuple[DynamicObstacle, ...] = ()
    name: str = ""

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int8)
        if cells.ndim != 2 or cells.size == 0:
            raise MapError("cells must be a non-empty 2-D grid")
        if not np.isin(cells, [o.value for o in Occupancy]).all():
            raise MapError("cells contain unknown occupancy values")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "start_cell", tuple(int(v) for v in self.start_cell))
        object.__setattr__(self, "goal_cell", tuple(int(v) for v in self.goal_cell))
        if self.cell_size <= 0:
            raise MapError("cell_size must be positive")
        for label, c in (("start", self.start_cell), ("goal", self.goal_cell)):
            if not self.in_bounds(c):
                raise MapError(f"{label} cell {c} out of bounds")
            if self.occupancy(c) != Occupancy.EMPTY:
                raise MapError(f"{label} cell {c} is not empty")
        if self.start_cell == self.goal_cell:
            raise MapError("start and goal coincide; distance scale would be zero")
        for ob in self.obstacles:
            for w in ob.waypoints:
                if not self.in_bounds(w):
                    raise MapError(f"obstacle {ob.id}: waypoint {w} out of bounds")
                if w == self.goal_cell or w == self.start_cell:
                    raise MapError(f"obstacle {ob.id}: waypoint {w} on start or goal")
                if self.occupancy(w) == Occupancy.FULL:
                    raise MapError(f"obstacle {ob.id}: waypoint {w} on a full cell")

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def extent(self) -> tuple[float, float]:
        return self.width * self.cell_size, self.height * self.cell_size

    @property
    def d_max(self) -> int:
        return distance_to_goal(self.start_cell, self)

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def occupancy(self, cell: Cell) -> Occupancy:
        return Occupancy(int(self.cells[cell[1], cell[0]]))


def load_map(text: str, name: str = "") -> GridMap:
    """Parse map-file text.

    Format::

        grid <width> <height> <cell_size_m>
        <height rows of . ~ # S G>
        O x1,y1 x2,y2 ... period=<k>     (zero or more)

    Blank lines and lines starting with ``;`` are ignored.
    """
    lines = [(i + 1, raw.rstrip("\r\n")) for i, raw in enumerate(text.splitlines())]
    lines = [(n, s) for n, s in lines if s.strip() and not s.lstrip().startswith(";")]
    if not lines:
        raise MapError("empty map")
    lineno, header = lines[0]
    parts = header.split()
    if len(parts) != 4 or parts[0] != "grid":
        raise MapError("expected header 'grid <width> <height> <cell_size_m>'", lineno, 1)
    try:
        width, height, cell_size = int(parts[1]), int(parts[2]), float(parts[3])
    except ValueError:
        raise MapError("malformed grid header values", lineno, 1) from None
    if width < 1 or height < 1 or not cell_size > 0:
        raise MapError("grid dimensions and cell size must be positive", lineno, 1)

    rows = lines[1:1 + height]
    if len(rows) < height:
        raise MapError(f"expected {height} grid rows, found {len(rows)}", lineno)
    cells = np.zeros((height, width), dtype=np.int8)
    start = goal = None
    for y, (n, row) in enumerate(rows):
        if row.startswith("O "):
            raise MapError(f"expected {height} grid rows, found {y}", n, 1)
        if len(row) != width:
            raise MapError(f"row has {len(row)} cells, expected {width}", n, min(len(row), width) + 1)
        for x, ch in enumerate(row):
            if ch not in _CHARS:
                raise MapError(f"unknown cell character {ch!r}", n, x + 1)
            cells[y, x] = _CHARS[ch]
            if ch == "S":
                if start is not None:
                    raise MapError("duplicate start 'S'", n, x + 1)
                start = (x, y)
            elif ch == "G":
                if goal is not None:
                    raise MapError("duplicate goal 'G'", n, x + 1)
                goal = (x, y)
    if start is None:
        raise MapError("missing start 'S'")
    if goal is None:
        raise MapError("missing goal 'G'")

    obstacles = []
    for n, line in lines[1 + height:]:
        ob = _parse_obstacle(line, n, len(obstacles), width, height)
        for w in ob.waypoints:
            if w in (start, goal) or cells[w[1], w[0]] == Occupancy.FULL:
                raise MapError(f"waypoint {w} lies on start, goal or a full cell", n)
        obstacles.append(ob)
    return GridMap(cells, start, goal, cell_size, tuple(obstacles), name)


def _parse_obstacle(line: str, n: int, index: int, width: int, height: int) -> DynamicObstacle:
    parts = line.split()
    if parts[0] != "O":
        raise MapError("expected obstacle line 'O x,y ... period=<k>' or end of file", n, 1)
    period = 1
    waypoints = []
    col = len(parts[0]) + 2
    for tok in parts[1:]:
        if tok.startswith("period="):
            try:
                period = int(tok[len("period="):])
            except ValueError:
                raise MapError(f"bad period {tok!r}", n, col) from None
        else:
            try:
                xs, ys = tok.split(",")
                w = (int(xs), int(ys))
            except ValueError:
                raise MapError(f"bad waypoint {tok!r}", n, col) from None
            if not (0 <= w[0] < width and 0 <= w[1] < height):
                raise MapError(f"waypoint {w} out of bounds", n, col)
            waypoints.append(w)
        col += len(tok) + 1
    if not waypoints:
        raise MapError("obstacle without waypoints", n, 1)
    try:
        return DynamicObstacle(f"o{index}", tuple(waypoints), period)
    except MapError as exc:
        raise MapError(str(exc), n) from None


def bundled_maps() -> list[str]:
    return sorted(p.name for p in resources.files("navbench.maps").iterdir() if p.name.endswith(".map"))


def read_map(path: str | Path) -> GridMap:
    """Load a map from a file path, or by bundled name (``simple``, ``dynamic.map``)."""
    p = Path(path)
    if p.is_file():
        return load_map(p.read_text(encoding="utf-8"), name=p.stem)
    name = p.name if p.name.endswith(".map") else p.name + ".map"
    res = resources.files("navbench.maps") / name
    if str(path) in (p.name, p.stem) and res.is_file():
        return load_map(res.read_text(encoding="utf-8"), name=Path(name).stem)
    raise FileNotFoundError(f"no such map file or bundled map: {path}")


def world_to_cell(x: float, y: float, grid: GridMap) -> Cell:
    w, h = grid.extent
    if not (0.0 <= x < w and 0.0 <= y < h):
        raise ValueError(f"({x}, {y}) outside the {w} x {h} m world")
    return int(math.floor(x / grid.cell_size)), int(math.floor(y / grid.cell_size))


def cell_to_world(cx: int, cy: int, grid: GridMap) -> tuple[float, float]:
    if not grid.in_bounds((cx, cy)):
        raise ValueError(f"cell {(cx, cy)} out of bounds")
    return (cx + 0.5) * grid.cell_size, (cy + 0.5) * grid.cell_size


def distance_to_goal(cell: Cell, grid: GridMap) -> int:
    return abs(cell[0] - grid.goal_cell[0]) + abs(cell[1] - grid.goal_cell[1])


def step_reward(collided: bool, fell: bool, reached_goal: bool, dist: float, d_max: float) -> float:
    """Reward for one tick.  Precedence: goal > fall > collision > step penalty.

    The step penalty interpolates linearly from -10 at the start distance to
    -1 at the goal; agents behind the start are clamped to -10.
    """
    if reached_goal:
        return GOAL_REWARD
    if fell:
        return FALL_REWARD
    if collided:
        return COLLISION_REWARD
    if d_max <= 0:
        raise ValueError("d_max must be positive")
    ratio = min(max(dist / d_max, 0.0), 1.0)
    return STEP_PENALTY_NEAR + (STEP_PENALTY_FAR - STEP_PENALTY_NEAR) * ratio


class Pose(NamedTuple):
    cell: Cell
    heading: Heading = Heading.EAST


_new_tuple = tuple.__new__


class StepOutcome(NamedTuple):
    next_pose: Pose
    reward: float
    collided: bool = False
    fell: bool = False
    reached_goal: bool = False
    timed_out: bool = False

    @property
    def terminal(self) -> bool:
        return self.fell or self.reached_goal or self.timed_out


@dataclass(frozen=True)
class EpisodeEvent:
    """Terminal event record with the supervisor message keys."""

    fall: bool = False
    goal: bool = False
    time: bool = False

    @classmethod
    def from_outcome(cls, outcome: StepOutcome) -> "EpisodeEvent":
        # goal > fall > time, so at most one flag is set
        return cls(fall=outcome.fell and not outcome.reached_goal,
                   goal=outcome.reached_goal,
                   time=outcome.timed_out and not (outcome.fell or outcome.reached_goal))

    def to_dict(self) -> dict[str, bool]:
        return {"fall": self.fall, "goal": self.goal, "time": self.time}


def observe_discrete(pose: Pose, grid: GridMap) -> int:
    x, y = pose.cell
    return (y * grid.cells.shape[1] + x) * 4 + pose.heading


def decode_discrete(index: int, grid: GridMap) -> Pose:
    cell_index, heading = divmod(index, 4)
    y, x = divmod(cell_index, grid.width)
    return Pose((x, y), Heading(heading))


class GridEnv:
    """Stateful episode runner over a :class:`GridMap`.

    ``rng`` only drives the fall draws; with ``p_fall == 0`` the environment
    never touches it.
    """

    def __init__(self, grid: GridMap, max_steps: int = 200, p_fall: float = 0.01,
                 rng: np.random.Generator | int | None = None):
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 <= p_fall <= 1.0:
            raise ValueError("p_fall must lie in [0, 1]")
        self.grid = grid
        self.max_steps = max_steps
        self.p_fall = p_fall
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.n_states = grid.width * grid.height * 4
        self._d_max = grid.d_max
        self._width, self._height = grid.width, grid.height
        self._goal = grid.goal_cell
        self._routes = [ob.route for ob in grid.obstacles]
        self._full = (grid.cells == Occupancy.FULL).tolist()
        gx, gy = grid.goal_cell
        # every pose is prebuilt; step() looks them up instead of constructing
        self._poses = [[[Pose((x, y), h) for h in _HEADINGS] for x in range(grid.width)]
                       for y in range(grid.height)]
        self._penalty = [[step_reward(False, False, False, abs(x - gx) + abs(y - gy), grid.d_max)
                          for x in range(grid.width)] for y in range(grid.height)]
        self._scale_x = 1.0 / max(grid.width - 1, 1)
        self._scale_y = 1.0 / max(grid.height - 1, 1)
        occ = np.where(grid.cells == Occupancy.FULL, 1.0,
                       np.where(grid.cells == Occupancy.PARTIAL, 0.5, 0.0))
        pad = WINDOW // 2
        self._padded = np.pad(occ, pad, constant_values=1.0)
        self._feature_cache: dict[int, np.ndarray] = {}
        self.reset()

    # -- episode lifecycle -------------------------------------------------
    def reset(self) -> Pose:
        self.pose = Pose(self.grid.start_cell, Heading.EAST)
        self.phases = [0] * len(self.grid.obstacles)
        self.t = 0
        self.done = False
        return self.pose

    def set_pose(self, pose: Pose) -> None:
        if not self.grid.in_bounds(pose.cell):
            raise ValueError(f"pose {pose} out of bounds")
        self.pose = pose

    def obstacle_cells(self) -> list[Cell]:
        return [route[ph] for route, ph in zip(self._routes, self.phases)]

    def step(self, action: Action | int) -> StepOutcome:
        if self.done:
            raise RuntimeError("step() on a finished episode; call reset()")
        if not 0 <= action < N_ACTIONS:
            raise ValueError(f"invalid action {action!r}")
        (x, y), heading = self.pose.cell, self.pose.heading
        collided = fell = goal = False
        if action == _TURN_LEFT:
            heading = _HEADINGS[(heading - 1) % 4]
        elif action == _TURN_RIGHT:
            heading = _HEADINGS[(heading + 1) % 4]
        elif action == _FORWARD:
            dx, dy = _STEPS[heading]
            nx, ny = x + dx, y + dy
            if (not (0 <= nx < self._width and 0 <= ny < self._height)
                    or self._full[ny][nx]
                    or (self.phases and (nx, ny) in self.obstacle_cells())):
                collided = True
            else:
                x, y = nx, ny
                goal = (nx, ny) == self._goal
                if not goal and self.p_fall > 0.0:
                    fell = bool(self.rng.random() < self.p_fall)
        self.pose = pose = self._poses[y][x][heading]
        self.t += 1
        if self.phases:
            self._advance_obstacles()
        timed_out = not (goal or fell) and self.t >= self.max_steps
        if goal:
            reward = GOAL_REWARD
        elif fell:
            reward = FALL_REWARD
        elif collided:
            reward = COLLISION_REWARD
        else:
            reward = self._penalty[y][x]
        # tuple.__new__ skips the generated NamedTuple constructor (hot path)
        out = _new_tuple(StepOutcome, (pose, reward, collided, fell, goal, timed_out))
        self.done = goal or fell or timed_out
        return out

    def _advance_obstacles(self) -> None:
        for i, ob in enumerate(self.grid.obstacles):
            if self.t % ob.period:
                continue
            route = self._routes[i]
            nxt = (self.phases[i] + 1) % len(route)
            # obstacles yield to the agent instead of moving onto it
            if route[nxt] != self.pose.cell:
                self.phases[i] = nxt

    # -- observations --------------------------------------------------------
    def observe_discrete(self, pose: Pose | None = None) -> int:
        pose = self.pose if pose is None else pose
        x, y = pose.cell
        return (y * self._width + x) * 4 + pose.heading

    def observe_features(self, pose: Pose | None = None) -> np.ndarray:
        """35 features in [-1, 1]: position (2), heading one-hot (4), goal
        delta (2), 5x5 occupancy window (25), nearest-obstacle delta (2)."""
        pose = self.pose if pose is None else pose
        static = not self.grid.obstacles
        if static:
            key = observe_discrete(pose, self.grid)
            cached = self._feature_cache.get(key)
            if cached is not None:
                return cached
        (x, y), gx, gy = pose.cell, *self.grid.goal_cell
        f = np.zeros(N_FEATURES)
        f[0] = x * self._scale_x
        f[1] = y * self._scale_y
        f[2 + int(pose.heading)] = 1.0
        f[6] = (gx - x) * self._scale_x
        f[7] = (gy - y) * self._scale_y
        f[8:33] = self._padded[y:y + WINDOW, x:x + WINDOW].ravel()
        if not static:
            cells = self.obstacle_cells()
            ox, oy = min(cells, key=lambda c: abs(c[0] - x) + abs(c[1] - y))
            f[33] = (ox - x) * self._scale_x
            f[34] = (oy - y) * self._scale_y
        else:
            f.setflags(write=False)
            self._feature_cache[key] = f
        return f

"""Deterministic indoor gridworld with synthetic per-category perception.

Cells sit on a 0.25 m lattice. The agent pose is (row, col, rotation,
horizon) with rotation a multiple of 45 degrees (0 = north, i.e. row
decreasing) and horizon in {-30, 0, 30}. Obstacle cells block movement and
line of sight; object cells block movement only.

Perception is an oracle: a category is detected when some instance lies in
the 90-degree cone about the facing direction, within 5 m, with clear line
of sight and a height tag compatible with the camera pitch. One instance
per visible category is sampled with the episode RNG. Detections are turned
into synthetic bounding boxes by a pinhole rule (horizontally centred when
on boresight, size shrinking with distance), plus the true distance as
depth and a confidence that decays with distance. A 7x7x3 egocentric patch
(obstacle / free / object channels, rotated so "ahead" is up) accompanies
the detections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ACTIONS",
    "MOVE_AHEAD",
    "ROTATE_LEFT",
    "ROTATE_RIGHT",
    "LOOK_UP",
    "LOOK_DOWN",
    "DONE",
    "N_CATEGORIES",
    "CATEGORY_NAMES",
    "GRID_METERS",
    "SUCCESS_DISTANCE",
    "SceneObject",
    "Scene",
    "AgentState",
    "Detection",
    "Observation",
    "SceneGenerationError",
    "generate_scene",
    "visible_instances",
    "observe",
    "egocentric_patch",
    "line_blocked",
    "GridEnv",
    "ShortestPathOracle",
    "serialize_observation",
    "deserialize_observation",
    "OBS_FLOATS",
]

ACTIONS = ("MoveAhead", "RotateLeft", "RotateRight", "LookUp", "LookDown", "Done")
MOVE_AHEAD, ROTATE_LEFT, ROTATE_RIGHT, LOOK_UP, LOOK_DOWN, DONE = range(6)

N_CATEGORIES = 22
CATEGORY_NAMES = (
    "Television", "Sink", "Microwave", "Pot", "CoffeeMachine", "GarbageCan",
    "Toaster", "StoveBurner", "Fridge", "Laptop", "Book", "AlarmClock",
    "Bed", "Lamp", "Mirror", "Toilet", "Bathtub", "TowelHolder",
    "SoapBottle", "Chair", "Sofa", "HousePlant",
)

HEIGHT_TAGS = ("low", "mid", "high")
GRID_METERS = 0.25
FOV_HALF_DEG = 45.0
DETECT_RANGE = 5.0
SUCCESS_DISTANCE = 1.5
ROTATIONS = (0, 45, 90, 135, 180, 225, 270, 315)
HORIZONS = (-30, 0, 30)
PATCH_SIZE = 7
PATCH_CHANNELS = 3

# rotation -> (d_col, d_row); rotation 0 faces north (row decreasing)
MOVE_OFFSETS = {
    0: (0, -1), 45: (1, -1), 90: (1, 0), 135: (1, 1),
    180: (0, 1), 225: (-1, 1), 270: (-1, 0), 315: (-1, -1),
}


class SceneGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneObject:
    category: int
    row: int
    col: int
    height: str


@dataclass(frozen=True)
class Scene:
    rows: int
    cols: int
    obstacles: frozenset
    objects: tuple

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols

    def object_cells(self) -> frozenset:
        return frozenset((o.row, o.col) for o in self.objects)

    def is_walkable(self, row: int, col: int) -> bool:
        return (
            self.in_bounds(row, col)
            and (row, col) not in self.obstacles
            and (row, col) not in self.object_cells()
        )

    def free_cells(self) -> list:
        occupied = self.object_cells()
        return [
            (r, c)
            for r in range(self.rows)
            for c in range(self.cols)
            if (r, c) not in self.obstacles and (r, c) not in occupied
        ]

    def categories_present(self) -> list:
        return sorted({o.category for o in self.objects})

    def instances_of(self, category: int) -> list:
        return [o for o in self.objects if o.category == category]

    # -- scene file format: SCENE v1 <rows> <cols> <n_objects> ------------
    def to_text(self) -> str:
        lines = [f"SCENE v1 {self.rows} {self.cols} {len(self.objects)}"]
        for r in range(self.rows):
            lines.append("".join("#" if (r, c) in self.obstacles else "." for c in range(self.cols)))
        for o in self.objects:
            lines.append(f"obj {o.category} {o.row} {o.col} {o.height}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Scene":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty scene file")
        head = lines[0].split()
        if len(head) != 5 or head[0] != "SCENE" or head[1] != "v1":
            raise ValueError(f"bad scene header: {lines[0]!r}")
        rows, cols, n_objects = int(head[2]), int(head[3]), int(head[4])
        if len(lines) != 1 + rows + n_objects:
            raise ValueError(f"scene file has {len(lines)} lines, expected {1 + rows + n_objects}")
        obstacles = set()
        for r in range(rows):
            line = lines[1 + r]
            if len(line) != cols:
                raise ValueError(f"scene row {r} has {len(line)} cells, expected {cols}")
            for c, ch in enumerate(line):
                if ch == "#":
                    obstacles.add((r, c))
                elif ch != ".":
                    raise ValueError(f"scene row {r}: unexpected character {ch!r}")
        objects = []
        for i in range(n_objects):
            parts = lines[1 + rows + i].split()
            if len(parts) != 5 or parts[0] != "obj":
                raise ValueError(f"bad object line: {lines[1 + rows + i]!r}")
            cat, row, col = int(parts[1]), int(parts[2]), int(parts[3])
            height = parts[4]
            if height not in HEIGHT_TAGS:
                raise ValueError(f"unknown height tag {height!r}")
            if not (0 <= cat < N_CATEGORIES):
                raise ValueError(f"category {cat} out of range")
            if (row, col) in obstacles:
                raise ValueError(f"object at ({row},{col}) sits on an obstacle")
            objects.append(SceneObject(cat, row, col, height))
        return cls(rows, cols, frozenset(obstacles), tuple(objects))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "Scene":
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass(frozen=True)
class AgentState:
    row: int
    col: int
    rotation: int
    horizon: int
    steps_taken: int = 0

    @property
    def x(self) -> float:
        return self.col * GRID_METERS

    @property
    def y(self) -> float:
        return self.row * GRID_METERS


@dataclass(frozen=True)
class Detection:
    category: int
    bbox: tuple          # (x1, y1, x2, y2) normalized to [0, 1]
    confidence: float
    depth: float         # meters
    label: int           # semantic label == category id
    appearance_index: int


@dataclass(frozen=True)
class Observation:
    detections: tuple
    patch: np.ndarray    # (7, 7, 3) float
    t: int

    def detected_categories(self) -> frozenset:
        return frozenset(d.category for d in self.detections)


# -- geometry --------------------------------------------------------------


def line_blocked(scene: Scene, r0: int, c0: int, r1: int, c1: int) -> bool:
    """True when the open segment between cell centres crosses the interior
    of an obstacle cell strictly between the endpoints.

    Runs entirely on integers (doubled coordinates: centres at odd values,
    cell boundaries at even values) so exact corner crossings are handled
    deterministically: the line jumps diagonally and touched corners never
    block.
    """
    if (r0, c0) == (r1, c1):
        return False
    sx, sy = 2 * c0 + 1, 2 * r0 + 1
    ex, ey = 2 * c1 + 1, 2 * r1 + 1
    dx, dy = ex - sx, ey - sy
    step_c = (dx > 0) - (dx < 0)
    step_r = (dy > 0) - (dy < 0)
    r, c = r0, c0
    adx, ady = abs(dx), abs(dy)
    while True:
        if dx == 0:
            r += step_r
        elif dy == 0:
            c += step_c
        else:
            nx = abs((2 * c + (2 if step_c > 0 else 0)) - sx)
            ny = abs((2 * r + (2 if step_r > 0 else 0)) - sy)
            lhs = nx * ady
            rhs = ny * adx
            if lhs < rhs:
                c += step_c
            elif lhs > rhs:
                r += step_r
            else:
                c += step_c
                r += step_r
        if (r, c) == (r1, c1):
            return False
        if (r, c) in scene.obstacles:
            return True


def _wrap_deg(a: float) -> float:
    a = math.fmod(a, 360.0)
    if a > 180.0:
        a -= 360.0
    elif a <= -180.0:
        a += 360.0
    return a


def _height_visible(tag: str, horizon: int) -> bool:
    if tag == "mid":
        return True
    if tag == "low":
        return horizon in (-30, 0)
    return horizon in (0, 30)


def _instance_geometry(state_row, state_col, obj: SceneObject):
    dc = obj.col - state_col
    dr = obj.row - state_row
    dist = GRID_METERS * math.hypot(dc, dr)
    bearing_world = math.degrees(math.atan2(dc, -dr))
    return dist, bearing_world


def visible_instances(scene: Scene, row: int, col: int, rotation: int, horizon: int) -> dict:
    """category -> list of visible object indices (sorted by object index)."""
    out: dict[int, list[int]] = {}
    for i, obj in enumerate(scene.objects):
        dist, bearing_world = _instance_geometry(row, col, obj)
        if dist == 0.0 or dist > DETECT_RANGE + 1e-9:
            continue
        bearing = _wrap_deg(bearing_world - rotation)
        if abs(bearing) > FOV_HALF_DEG + 1e-9:
            continue
        if not _height_visible(obj.height, horizon):
            continue
        if line_blocked(scene, row, col, obj.row, obj.col):
            continue
        out.setdefault(obj.category, []).append(i)
    return out


def egocentric_patch(scene: Scene, state: AgentState) -> np.ndarray:
    """7x7x3 map around the agent, rotated so ahead is up.

    Channels: obstacle-or-out-of-bounds, walkable, object.
    """
    theta = math.radians(state.rotation)
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    patch = np.zeros((PATCH_SIZE, PATCH_SIZE, PATCH_CHANNELS))
    half = PATCH_SIZE // 2
    object_cells = scene.object_cells()
    for pr in range(PATCH_SIZE):
        for pc in range(PATCH_SIZE):
            forward = half - pr
            right = pc - half
            ox = right * cos_t + forward * sin_t
            oy = right * sin_t - forward * cos_t
            cell = (state.row + int(math.floor(oy + 0.5)), state.col + int(math.floor(ox + 0.5)))
            if not scene.in_bounds(*cell) or cell in scene.obstacles:
                patch[pr, pc, 0] = 1.0
            elif cell in object_cells:
                patch[pr, pc, 2] = 1.0
            else:
                patch[pr, pc, 1] = 1.0
    return patch


def _clamp(v: float, lo: float, hi: float) -> float:
    return max(lo, min(hi, v))


def observe(scene: Scene, state: AgentState, rng: np.random.Generator) -> Observation:
    """Synthetic perception at the given pose; one sampled instance per
    visible category."""
    vis = visible_instances(scene, state.row, state.col, state.rotation, state.horizon)
    detections = []
    for cat in sorted(vis):
        idxs = vis[cat]
        pick = idxs[int(rng.integers(len(idxs)))]
        obj = scene.objects[pick]
        dist, bearing_world = _instance_geometry(state.row, state.col, obj)
        bearing = _wrap_deg(bearing_world - state.rotation)
        size = _clamp(0.5 / dist, 0.05, 1.0)
        cx = 0.5 + bearing / 90.0
        x1 = max(0.0, cx - size / 2)
        x2 = min(1.0, cx + size / 2)
        y1 = max(0.0, 0.5 - size / 2)
        y2 = min(1.0, 0.5 + size / 2)
        conf = _clamp(1.0 - dist / 6.0, 0.1, 1.0)
        detections.append(Detection(cat, (x1, y1, x2, y2), conf, dist, cat, cat))
    return Observation(tuple(detections), egocentric_patch(scene, state), state.steps_taken)


# -- scene generation --------------------------------------------------------


def _connected_components_ok(scene_rows, scene_cols, obstacles, occupied) -> bool:
    """All walkable cells form a single 8-connected component."""
    walkable = {
        (r, c)
        for r in range(scene_rows)
        for c in range(scene_cols)
        if (r, c) not in obstacles and (r, c) not in occupied
    }
    if not walkable:
        return False
    start = next(iter(walkable))
    seen = {start}
    frontier = [start]
    while frontier:
        r, c = frontier.pop()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                nb = (r + dr, c + dc)
                if nb in walkable and nb not in seen:
                    seen.add(nb)
                    frontier.append(nb)
    return len(seen) == len(walkable)


def _object_reachable(scene: Scene, obj: SceneObject) -> bool:
    """Some walkable cell within the success radius has line of sight."""
    radius_cells = int(SUCCESS_DISTANCE / GRID_METERS)
    for dr in range(-radius_cells, radius_cells + 1):
        for dc in range(-radius_cells, radius_cells + 1):
            r, c = obj.row + dr, obj.col + dc
            if not scene.is_walkable(r, c):
                continue
            if GRID_METERS * math.hypot(dr, dc) >= SUCCESS_DISTANCE:
                continue
            if not line_blocked(scene, r, c, obj.row, obj.col):
                return True
    return False


def generate_scene(
    seed: int,
    rows: int = 10,
    cols: int = 10,
    obstacle_density: float = 0.15,
    object_count: int = 6,
    max_retries: int = 200,
) -> Scene:
    """Random scene with the reachability guarantee; identical seed gives an
    identical scene."""
    if obstacle_density >= 0.4:
        raise ValueError(f"obstacle density {obstacle_density} must be < 0.4")
    if object_count < 4:
        raise ValueError(f"object count {object_count} must be >= 4")
    if rows * cols < object_count + 4:
        raise ValueError("scene too small for requested objects")
    rng = np.random.default_rng(seed)
    all_cells = [(r, c) for r in range(rows) for c in range(cols)]
    n_obstacles = int(round(obstacle_density * rows * cols))
    for _ in range(max_retries):
        order = rng.permutation(len(all_cells))
        obstacle_cells = frozenset(all_cells[i] for i in order[:n_obstacles])
        free = [all_cells[i] for i in order[n_obstacles:]]
        if len(free) < object_count + 1:
            continue
        pick = rng.choice(len(free), size=object_count, replace=False)
        object_cells = [free[i] for i in pick]
        # at least 4 distinct categories among the objects
        cats = list(rng.choice(N_CATEGORIES, size=4, replace=False))
        while len(cats) < object_count:
            cats.append(int(rng.integers(N_CATEGORIES)))
        heights = [HEIGHT_TAGS[int(rng.integers(3))] for _ in range(object_count)]
        objects = tuple(
            SceneObject(int(cats[i]), object_cells[i][0], object_cells[i][1], heights[i])
            for i in range(object_count)
        )
        scene = Scene(rows, cols, obstacle_cells, objects)
        if not _connected_components_ok(rows, cols, obstacle_cells, scene.object_cells()):
            continue
        if not all(_object_reachable(scene, o) for o in objects):
            continue
        return scene
    raise SceneGenerationError(
        f"could not generate a valid scene in {max_retries} tries "
        f"(rows={rows}, cols={cols}, density={obstacle_density}, objects={object_count})"
    )


# -- episode dynamics --------------------------------------------------------

STEP_PENALTY = -0.01
SUCCESS_REWARD = 5.0


class GridEnv:
    """One navigation episode at a time over an immutable scene."""

    def __init__(self, scene: Scene, max_steps: int = 50):
        self.scene = scene
        self.max_steps = max_steps
        self.state: AgentState | None = None
        self.target: int | None = None
        self._rng: np.random.Generator | None = None
        self._obs: Observation | None = None
        self._done = True

    def reset(self, target: int, seed) -> tuple:
        if target not in self.scene.categories_present():
            raise ValueError(f"target category {target} not present in scene")
        self.target = target
        self._rng = np.random.default_rng(seed)
        free = self.scene.free_cells()
        cell = free[int(self._rng.integers(len(free)))]
        rotation = ROTATIONS[int(self._rng.integers(len(ROTATIONS)))]
        self.state = AgentState(cell[0], cell[1], rotation, 0, 0)
        self._obs = observe(self.scene, self.state, self._rng)
        self._done = False
        return self.state, self._obs

    def _target_distance(self) -> float:
        return min(
            _instance_geometry(self.state.row, self.state.col, o)[0]
            for o in self.scene.instances_of(self.target)
        )

    def done_would_succeed(self) -> bool:
        visible = self.target in self._obs.detected_categories()
        return visible and self._target_distance() < SUCCESS_DISTANCE

    def step(self, action: int) -> tuple:
        """Returns (state, observation, reward, done, success)."""
        if self._done:
            raise RuntimeError("step() after episode end")
        if not 0 <= action < len(ACTIONS):
            raise ValueError(f"unknown action {action}")
        s = self.state
        success = False
        if action == DONE:
            success = self.done_would_succeed()
            self.state = replace(s, steps_taken=s.steps_taken + 1)
            self._done = True
        else:
            if action == MOVE_AHEAD:
                dc, dr = MOVE_OFFSETS[s.rotation]
                nr, nc = s.row + dr, s.col + dc
                if self.scene.is_walkable(nr, nc):
                    s = replace(s, row=nr, col=nc)
            elif action == ROTATE_LEFT:
                s = replace(s, rotation=(s.rotation - 45) % 360)
            elif action == ROTATE_RIGHT:
                s = replace(s, rotation=(s.rotation + 45) % 360)
            elif action == LOOK_UP:
                s = replace(s, horizon=max(s.horizon - 30, HORIZONS[0]))
            elif action == LOOK_DOWN:
                s = replace(s, horizon=min(s.horizon + 30, HORIZONS[-1]))
            self.state = replace(s, steps_taken=s.steps_taken + 1)
            self._obs = observe(self.scene, self.state, self._rng)
        if self.state.steps_taken >= self.max_steps:
            self._done = True
        reward = SUCCESS_REWARD + STEP_PENALTY if success else STEP_PENALTY
        return self.state, self._obs, reward, self._done, success

    @property
    def current_observation(self) -> Observation:
        return self._obs

    @property
    def episode_done(self) -> bool:
        return self._done


# -- shortest-path oracle ------------------------------------------------------

_UNREACHABLE = -1
_N_ROT = len(ROTATIONS)
_N_HOR = len(HORIZONS)
_ROT_INDEX = {r: i for i, r in enumerate(ROTATIONS)}
_HOR_INDEX = {h: i for i, h in enumerate(HORIZONS)}


class ShortestPathOracle:
    """Exact per-target distance tables over the full pose graph.

    The distance of a pose is the minimum number of actions (Done included)
    to finish the episode successfully; success poses therefore have
    distance 1. Expert actions break ties in the fixed order MoveAhead,
    RotateLeft, RotateRight, LookUp, LookDown, Done.
    """

    def __init__(self, scene: Scene):
        self.scene = scene
        self._n_states = scene.rows * scene.cols * _N_ROT * _N_HOR
        self._trans = self._build_transitions()
        self._dist: dict[int, np.ndarray] = {}
        self._success: dict[int, np.ndarray] = {}

    def _index(self, row, col, rot_i, hor_i) -> int:
        return ((row * self.scene.cols + col) * _N_ROT + rot_i) * _N_HOR + hor_i

    def state_index(self, state: AgentState) -> int:
        return self._index(state.row, state.col, _ROT_INDEX[state.rotation], _HOR_INDEX[state.horizon])

    def _build_transitions(self) -> np.ndarray:
        trans = np.full((self._n_states, 5), -1, dtype=np.int64)
        for (row, col) in self.scene.free_cells():
            for rot_i, rot in enumerate(ROTATIONS):
                dc, dr = MOVE_OFFSETS[rot]
                move_cell = (row + dr, col + dc)
                can_move = self.scene.is_walkable(*move_cell)
                for hor_i in range(_N_HOR):
                    s = self._index(row, col, rot_i, hor_i)
                    trans[s, MOVE_AHEAD] = (
                        self._index(move_cell[0], move_cell[1], rot_i, hor_i) if can_move else s
                    )
                    trans[s, ROTATE_LEFT] = self._index(row, col, (rot_i - 1) % _N_ROT, hor_i)
                    trans[s, ROTATE_RIGHT] = self._index(row, col, (rot_i + 1) % _N_ROT, hor_i)
                    trans[s, LOOK_UP] = self._index(row, col, rot_i, max(hor_i - 1, 0))
                    trans[s, LOOK_DOWN] = self._index(row, col, rot_i, min(hor_i + 1, _N_HOR - 1))
        return trans

    def _success_table(self, target: int) -> np.ndarray:
        if target in self._success:
            return self._success[target]
        instances = self.scene.instances_of(target)
        if not instances:
            raise ValueError(f"target category {target} not present in scene")
        success = np.zeros(self._n_states, dtype=bool)
        for (row, col) in self.scene.free_cells():
            per_instance = []
            min_dist = math.inf
            for obj in instances:
                dist, bearing_world = _instance_geometry(row, col, obj)
                min_dist = min(min_dist, dist)
                if dist > DETECT_RANGE + 1e-9:
                    continue
                if line_blocked(self.scene, row, col, obj.row, obj.col):
                    continue
                per_instance.append((bearing_world, obj.height))
            if min_dist >= SUCCESS_DISTANCE or not per_instance:
                continue
            for rot_i, rot in enumerate(ROTATIONS):
                for hor_i, hor in enumerate(HORIZONS):
                    ok = any(
                        abs(_wrap_deg(bw - rot)) <= FOV_HALF_DEG + 1e-9 and _height_visible(h, hor)
                        for bw, h in per_instance
                    )
                    if ok:
                        success[self._index(row, col, rot_i, hor_i)] = True
        self._success[target] = success
        return success

    def distances(self, target: int) -> np.ndarray:
        if target in self._dist:
            return self._dist[target]
        success = self._success_table(target)
        # reverse adjacency over movement actions (self-loops dropped)
        rev_heads = [[] for _ in range(self._n_states)]
        for s in range(self._n_states):
            for a in range(5):
                t = self._trans[s, a]
                if t >= 0 and t != s:
                    rev_heads[t].append(s)
        dist = np.full(self._n_states, _UNREACHABLE, dtype=np.int64)
        from collections import deque

        queue = deque()
        for s in np.flatnonzero(success):
            dist[s] = 1
            queue.append(int(s))
        while queue:
            u = queue.popleft()
            du = dist[u]
            for v in rev_heads[u]:
                if dist[v] == _UNREACHABLE:
                    dist[v] = du + 1
                    queue.append(v)
        self._dist[target] = dist
        return dist

    def optimal_path_length(self, state: AgentState, target: int) -> int:
        dist = self.distances(target)
        d = int(dist[self.state_index(state)])
        if d == _UNREACHABLE:
            raise ValueError(f"target {target} unreachable from {state}")
        return d

    def expert_action(self, state: AgentState, target: int) -> int:
        dist = self.distances(target)
        s = self.state_index(state)
        d = int(dist[s])
        if d == _UNREACHABLE:
            raise ValueError(f"target {target} unreachable from {state}")
        if self._success_table(target)[s]:
            return DONE
        for a in (MOVE_AHEAD, ROTATE_LEFT, ROTATE_RIGHT, LOOK_UP, LOOK_DOWN):
            t = self._trans[s, a]
            if t != s and dist[t] == d - 1:
                return a
        raise AssertionError("no descending action from a reachable state")


# -- observation serialization (fixed width, float32 on the wire) -------------

# per category: present flag, bbox(4), confidence, depth
_DET_FLOATS = 7
OBS_FLOATS = 1 + N_CATEGORIES * _DET_FLOATS + PATCH_SIZE * PATCH_SIZE * PATCH_CHANNELS


def serialize_observation(obs: Observation) -> np.ndarray:
    out = np.zeros(OBS_FLOATS, dtype=np.float32)
    out[0] = obs.t
    for d in obs.detections:
        base = 1 + d.category * _DET_FLOATS
        out[base] = 1.0
        out[base + 1: base + 5] = d.bbox
        out[base + 5] = d.confidence
        out[base + 6] = d.depth
    out[1 + N_CATEGORIES * _DET_FLOATS:] = obs.patch.reshape(-1)
    return out


def deserialize_observation(buf: np.ndarray) -> Observation:
    if buf.size != OBS_FLOATS:
        raise ValueError(f"observation buffer has {buf.size} floats, expected {OBS_FLOATS}")
    buf = np.asarray(buf, dtype=np.float32)
    t = int(buf[0])
    detections = []
    for cat in range(N_CATEGORIES):
        base = 1 + cat * _DET_FLOATS
        if buf[base] > 0.5:
            bbox = tuple(float(v) for v in buf[base + 1: base + 5])
            detections.append(Detection(cat, bbox, float(buf[base + 5]), float(buf[base + 6]), cat, cat))
    patch = buf[1 + N_CATEGORIES * _DET_FLOATS:].astype(np.float64).reshape(PATCH_SIZE, PATCH_SIZE, PATCH_CHANNELS)
    return Observation(tuple(detections), patch, t)

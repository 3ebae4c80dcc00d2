"""Gridworld tests: dynamics, rewards, perception against a brute-force
visibility oracle, scene generation with a flood-fill oracle, file format."""

import math

import numpy as np
import pytest

from crgtsr.env import (
    ACTIONS,
    DONE,
    GRID_METERS,
    LOOK_DOWN,
    LOOK_UP,
    MOVE_AHEAD,
    N_CATEGORIES,
    ROTATE_LEFT,
    ROTATE_RIGHT,
    AgentState,
    GridEnv,
    Scene,
    SceneObject,
    deserialize_observation,
    egocentric_patch,
    generate_scene,
    line_blocked,
    observe,
    serialize_observation,
    visible_instances,
)


# -- independent oracles ----------------------------------------------------


def oracle_blocked(scene, r0, c0, r1, c1):
    """Segment/box geometry: blocked when the open segment between cell
    centres overlaps the interior of an obstacle cell."""
    ax, ay = c0 + 0.5, r0 + 0.5
    bx, by = c1 + 0.5, r1 + 0.5
    dx, dy = bx - ax, by - ay
    for (r, c) in scene.obstacles:
        t0, t1 = 0.0, 1.0
        inside = True
        for p, d, lo, hi in ((ax, dx, c, c + 1.0), (ay, dy, r, r + 1.0)):
            if d == 0.0:
                if not (lo < p < hi):
                    inside = False
                    break
            else:
                ta = (lo - p) / d
                tb = (hi - p) / d
                if ta > tb:
                    ta, tb = tb, ta
                t0 = max(t0, ta)
                t1 = min(t1, tb)
        if inside and t1 - t0 > 1e-12:
            return True
    return False


def oracle_visible_set(scene, row, col, rotation, horizon):
    """Re-derives the visible category set with dot-product angles and the
    segment/box line-of-sight test."""
    theta = math.radians(rotation)
    fx, fy = math.sin(theta), -math.cos(theta)
    cos_limit = math.cos(math.radians(45.0))
    cats = set()
    for obj in scene.objects:
        dx = obj.col - col
        dy = obj.row - row
        dist = GRID_METERS * math.hypot(dx, dy)
        if dist == 0.0 or dist > 5.0 + 1e-9:
            continue
        norm = math.hypot(dx, dy)
        if (fx * dx + fy * dy) / norm < cos_limit - 1e-12:
            continue
        if obj.height == "low" and horizon not in (-30, 0):
            continue
        if obj.height == "high" and horizon not in (0, 30):
            continue
        if oracle_blocked(scene, row, col, obj.row, obj.col):
            continue
        cats.add(obj.category)
    return cats


def corridor_scene(length=12, obj_col=10, height="mid"):
    return Scene(1, length, frozenset(), (SceneObject(3, 0, obj_col, height),))


# -- scene generation ---------------------------------------------------------


class TestGenerateScene:
    def test_same_seed_identical(self):
        a = generate_scene(7, 8, 8, 0.2, 5)
        b = generate_scene(7, 8, 8, 0.2, 5)
        assert a == b

    def test_zero_density_no_obstacles(self):
        scene = generate_scene(3, 6, 6, 0.0, 4)
        assert not scene.obstacles

    def test_rejects_bad_specs(self):
        with pytest.raises(ValueError, match="density"):
            generate_scene(1, 8, 8, 0.5, 4)
        with pytest.raises(ValueError, match="object count"):
            generate_scene(1, 8, 8, 0.1, 3)

    def test_at_least_four_categories(self):
        for seed in range(10):
            scene = generate_scene(seed, 9, 9, 0.15, 6)
            assert len(scene.categories_present()) >= 4

    def test_reachability_flood_fill_oracle(self):
        # every walkable cell reaches every object's success neighborhood
        for seed in range(100):
            scene = generate_scene(seed, 7, 7, 0.18, 4)
            walkable = set(scene.free_cells())
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
            assert seen == walkable
            for obj in scene.objects:
                near = [
                    cell
                    for cell in walkable
                    if GRID_METERS * math.hypot(cell[0] - obj.row, cell[1] - obj.col) < 1.5
                    and not oracle_blocked(scene, cell[0], cell[1], obj.row, obj.col)
                ]
                assert near, f"object {obj} unreachable in scene seed {seed}"


class TestSceneFile:
    def test_round_trip(self):
        scene = generate_scene(11, 6, 9, 0.2, 5)
        text = scene.to_text()
        again = Scene.from_text(text)
        assert again == scene
        assert again.to_text() == text

    def test_header_format(self):
        scene = generate_scene(2, 4, 5, 0.1, 4)
        first = scene.to_text().splitlines()[0]
        assert first == f"SCENE v1 4 5 {len(scene.objects)}"

    def test_parse_errors(self):
        with pytest.raises(ValueError, match="header"):
            Scene.from_text("NOPE v1 2 2 0\n..\n..\n")
        with pytest.raises(ValueError, match="height"):
            Scene.from_text("SCENE v1 1 2 1\n..\nobj 1 0 0 tall\n")
        with pytest.raises(ValueError, match="obstacle"):
            Scene.from_text("SCENE v1 1 2 1\n#.\nobj 1 0 0 low\n")


# -- line of sight -------------------------------------------------------------


class TestLineOfSight:
    def test_straight_blocked(self):
        scene = Scene(1, 5, frozenset({(0, 2)}), ())
        assert line_blocked(scene, 0, 0, 0, 4)
        assert not line_blocked(scene, 0, 0, 0, 1)

    def test_corner_touch_not_blocking(self):
        # diagonal through the corner between (0,1) and (1,0)
        scene = Scene(3, 3, frozenset({(0, 1), (1, 0)}), ())
        assert not line_blocked(scene, 0, 0, 2, 2)

    def test_diagonal_cell_blocking(self):
        scene = Scene(3, 3, frozenset({(1, 1)}), ())
        assert line_blocked(scene, 0, 0, 2, 2)

    def test_matches_geometry_oracle(self):
        rng = np.random.default_rng(5)
        for trial in range(300):
            rows, cols = 8, 8
            cells = [(r, c) for r in range(rows) for c in range(cols)]
            k = int(rng.integers(4, 14))
            obs = frozenset(tuple(cells[i]) for i in rng.choice(len(cells), size=k, replace=False))
            scene = Scene(rows, cols, obs, ())
            free = [cell for cell in cells if cell not in obs]
            a = free[int(rng.integers(len(free)))]
            b = free[int(rng.integers(len(free)))]
            assert line_blocked(scene, a[0], a[1], b[0], b[1]) == oracle_blocked(scene, a[0], a[1], b[0], b[1]), (
                f"trial {trial}: {a}->{b} obstacles {sorted(obs)}"
            )


# -- perception -----------------------------------------------------------------


class TestObserve:
    def test_object_behind_not_detected(self):
        scene = corridor_scene()
        state = AgentState(0, 11, 90, 0)  # east of object, facing east
        assert 3 not in {d.category for d in observe(scene, state, np.random.default_rng(0)).detections}

    def test_boresight_bbox_centered(self):
        scene = Scene(1, 12, frozenset(), (SceneObject(4, 0, 9, "mid"),))
        state = AgentState(0, 1, 90, 0)  # 8 cells = 2.0 m straight ahead
        obs = observe(scene, state, np.random.default_rng(0))
        det = next(d for d in obs.detections if d.category == 4)
        x1, _, x2, _ = det.bbox
        assert abs((x1 + x2) / 2 - 0.5) < 1e-12
        assert abs(det.depth - 2.0) < 1e-12
        assert abs(det.confidence - (1 - 2.0 / 6)) < 1e-12

    def test_confidence_clamped(self):
        scene = Scene(1, 24, frozenset(), (SceneObject(4, 0, 21, "mid"),))
        obs = observe(scene, AgentState(0, 1, 90, 0), np.random.default_rng(0))
        det = obs.detections[0]
        assert abs(det.depth - 5.0) < 1e-12
        assert det.confidence == pytest.approx(max(0.1, 1 - 5.0 / 6))

    def test_height_tags(self):
        scene = Scene(1, 8, frozenset(), (
            SceneObject(1, 0, 4, "low"), SceneObject(2, 0, 5, "high"), SceneObject(3, 0, 6, "mid"),
        ))
        at = lambda hor: {d.category for d in observe(scene, AgentState(0, 0, 90, hor), np.random.default_rng(0)).detections}
        assert at(0) == {1, 2, 3}
        assert at(-30) == {1, 3}
        assert at(30) == {2, 3}

    def test_visible_set_matches_oracle(self):
        rng = np.random.default_rng(9)
        for seed in range(40):
            scene = generate_scene(seed, 9, 9, 0.2, 6)
            free = scene.free_cells()
            for _ in range(10):
                r, c = free[int(rng.integers(len(free)))]
                rot = int(rng.integers(8)) * 45
                hor = (-30, 0, 30)[int(rng.integers(3))]
                got = set(visible_instances(scene, r, c, rot, hor))
                want = oracle_visible_set(scene, r, c, rot, hor)
                assert got == want, f"scene {seed} pose {(r, c, rot, hor)}"

    def test_one_detection_per_category(self):
        objs = tuple(SceneObject(5, 0, c, "mid") for c in (3, 4, 5))
        scene = Scene(1, 8, frozenset(), objs)
        obs = observe(scene, AgentState(0, 0, 90, 0), np.random.default_rng(1))
        assert len(obs.detections) == 1
        assert obs.detections[0].category == 5

    def test_patch_pure_and_rotated(self):
        scene = generate_scene(4, 9, 9, 0.2, 5)
        state = AgentState(4, 4, 90, 0)
        p1 = egocentric_patch(scene, state)
        p2 = egocentric_patch(scene, state)
        assert np.array_equal(p1, p2)
        assert p1.shape == (7, 7, 3)
        assert np.array_equal(p1.sum(axis=2), np.ones((7, 7)))  # channels one-hot
        # out-of-bounds shows as obstacle channel
        edge = egocentric_patch(Scene(3, 3, frozenset(), ()), AgentState(0, 0, 0, 0))
        assert edge[0, 3, 0] == 1.0  # three cells ahead is outside

    def test_serialization_round_trip(self):
        scene = generate_scene(6, 9, 9, 0.15, 6)
        env = GridEnv(scene)
        _, obs = env.reset(scene.categories_present()[0], seed=5)
        buf = serialize_observation(obs)
        back = deserialize_observation(buf)
        assert back.t == obs.t
        assert back.detected_categories() == obs.detected_categories()
        for a, b in zip(obs.detections, back.detections):
            assert a.category == b.category
            assert np.allclose(a.bbox, b.bbox, atol=1e-6)
            assert abs(a.depth - b.depth) < 1e-6
        assert np.allclose(back.patch, obs.patch, atol=1e-6)


# -- episode dynamics -----------------------------------------------------------


class TestGridEnv:
    def make_env(self, seed=3):
        return GridEnv(generate_scene(seed, 9, 9, 0.15, 6))

    def test_reset_determinism_and_free_start(self):
        env = self.make_env()
        target = env.scene.categories_present()[0]
        s1, o1 = env.reset(target, seed=42)
        s2, o2 = env.reset(target, seed=42)
        assert s1 == s2
        assert o1.detected_categories() == o2.detected_categories()
        assert s1.horizon == 0
        assert env.scene.is_walkable(s1.row, s1.col)

    def test_reset_unknown_target(self):
        env = self.make_env()
        missing = next(c for c in range(N_CATEGORIES) if c not in env.scene.categories_present())
        with pytest.raises(ValueError, match="target"):
            env.reset(missing, seed=0)

    def test_move_north_decreases_y(self):
        scene = Scene(3, 3, frozenset(), (SceneObject(0, 2, 2, "mid"),))
        env = GridEnv(scene)
        env.reset(0, seed=1)
        env.state = AgentState(2, 0, 0, 0, 0)
        before_y = env.state.y
        state, _, reward, done, success = env.step(MOVE_AHEAD)
        assert state.y == pytest.approx(before_y - 0.25)
        assert reward == pytest.approx(-0.01)
        assert not done and not success

    def test_look_clamp(self):
        env = self.make_env()
        env.reset(env.scene.categories_present()[0], seed=0)
        env.step(LOOK_UP)
        state, _, reward, _, _ = env.step(LOOK_UP)
        assert state.horizon == -30
        assert reward == pytest.approx(-0.01)
        env.step(LOOK_DOWN)
        env.step(LOOK_DOWN)
        state, _, _, _, _ = env.step(LOOK_DOWN)
        assert state.horizon == 30

    def test_blocked_move_is_noop_with_cost(self):
        scene = Scene(1, 4, frozenset({(0, 2)}), (SceneObject(0, 0, 3, "mid"),))
        env = GridEnv(scene)
        env.reset(0, seed=0)
        env.state = AgentState(0, 1, 90, 0, 0)
        state, _, reward, _, _ = env.step(MOVE_AHEAD)
        assert (state.row, state.col) == (0, 1)
        assert state.steps_taken == 1
        assert reward == pytest.approx(-0.01)

    def test_successful_done_at_one_meter(self):
        scene = corridor_scene()
        env = GridEnv(scene)
        env.reset(3, seed=0)
        env.state = AgentState(0, 6, 90, 0, 0)  # 4 cells = 1.0 m from object
        env._obs = observe(scene, env.state, np.random.default_rng(0))
        _, _, reward, done, success = env.step(DONE)
        assert success and done
        assert reward == pytest.approx(4.99)

    def test_done_out_of_range_fails(self):
        scene = corridor_scene()
        env = GridEnv(scene)
        env.reset(3, seed=0)
        env.state = AgentState(0, 1, 90, 0, 0)  # 2.25 m away, visible
        env._obs = observe(scene, env.state, np.random.default_rng(0))
        _, _, reward, done, success = env.step(DONE)
        assert done and not success
        assert reward == pytest.approx(-0.01)

    def test_step_after_done_raises(self):
        env = self.make_env()
        env.reset(env.scene.categories_present()[0], seed=0)
        env.step(DONE)
        with pytest.raises(RuntimeError, match="episode end"):
            env.step(MOVE_AHEAD)

    def test_max_steps_cap(self):
        env = GridEnv(generate_scene(8, 9, 9, 0.1, 5), max_steps=7)
        env.reset(env.scene.categories_present()[0], seed=1)
        done = False
        n = 0
        while not done:
            _, _, _, done, _ = env.step(ROTATE_LEFT)
            n += 1
        assert n == 7

    def test_reward_accounting_property(self):
        rng = np.random.default_rng(17)
        for trial in range(30):
            env = GridEnv(generate_scene(int(rng.integers(100)), 8, 8, 0.15, 5), max_steps=30)
            target = env.scene.categories_present()[int(rng.integers(len(env.scene.categories_present())))]
            env.reset(target, seed=int(rng.integers(1000)))
            total = 0.0
            done = False
            success = False
            steps = 0
            while not done:
                _, _, r, done, success = env.step(int(rng.integers(6)))
                total += r
                steps += 1
            assert total == pytest.approx(-0.01 * steps + 5.0 * int(success), abs=1e-9)

    def test_full_determinism(self):
        actions = [MOVE_AHEAD, ROTATE_LEFT, MOVE_AHEAD, LOOK_DOWN, ROTATE_RIGHT, MOVE_AHEAD] * 4
        traces = []
        for _ in range(2):
            env = GridEnv(generate_scene(21, 9, 9, 0.2, 6), max_steps=50)
            target = env.scene.categories_present()[1]
            state, obs = env.reset(target, seed=77)
            rows = [(state, obs.detected_categories())]
            for a in actions:
                state, obs, r, done, success = env.step(a)
                rows.append((state, obs.detected_categories(), r, done, success))
            traces.append(rows)
        assert traces[0] == traces[1]

    def test_success_implies_visible_and_close(self):
        rng = np.random.default_rng(23)
        hits = 0
        for trial in range(400):
            scene = generate_scene(int(rng.integers(50)), 6, 6, 0.1, 5)
            env = GridEnv(scene, max_steps=20)
            cats = scene.categories_present()
            target = cats[int(rng.integers(len(cats)))]
            env.reset(target, seed=int(rng.integers(10_000)))
            done = False
            while not done:
                last_obs = env.current_observation
                state_before = env.state
                action = int(rng.integers(6))
                _, _, _, done, success = env.step(action)
                if success:
                    hits += 1
                    assert target in last_obs.detected_categories()
                    d = min(
                        GRID_METERS * math.hypot(o.row - state_before.row, o.col - state_before.col)
                        for o in scene.instances_of(target)
                    )
                    assert d < 1.5
        assert hits > 5  # the property was actually exercised

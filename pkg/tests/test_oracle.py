import json

import numpy as np
import pytest

from envaff import oracle
from envaff.cloud import LabeledCloud, mirror_cloud, sample_cloud
from envaff.errors import InvalidPoint
from envaff.geometry import Capsule, OrientedBox, RigidTransform, segment_point_distance
from envaff.oracle import (
    APPROACH_COLLISION,
    INSUFFICIENT_MOTION,
    MANIPULATION_COLLISION,
    NOT_GRASPABLE,
    PULL,
    PUSH,
    SUCCESS,
    UNREACHABLE,
    OracleConfig,
    Verdict,
    evaluate,
    explain_path,
    recheck_path,
)
from envaff.scene import PRISMATIC, ArticulatedTarget, Joint, Part, Scene, SceneSpec, generate_scene, mirror_scene

CFG = OracleConfig()


def drawer_scene(state=0.15, occluders=(), robot=(0.8, 0.0, 0.0)):
    """A plinth with one drawer on top; the drawer front is at x = state."""
    plinth = OrientedBox((-0.15, 0.0, 0.15), (0.15, 0.25, 0.15))
    drawer = OrientedBox((-0.15, 0.0, 0.5), (0.15, 0.2, 0.15))
    handle = OrientedBox((0.01, 0.0, 0.6), (0.01, 0.04, 0.01))
    joint = Joint(PRISMATIC, (1.0, 0.0, 0.0), (0.0, 0.0, 0.0), 0.0, 0.25, state)
    target = ArticulatedTarget((plinth,), (Part(drawer, joint, handle, (0, -1.0), "drawer"),))
    return Scene(1, target, tuple(occluders), np.array(robot))


def probe_cloud(state=0.15):
    """Drawer-face center (no handle) and the handle's front face."""
    pts = np.array([[state, 0.0, 0.5], [state + 0.02, 0.0, 0.6], [-0.15, 0.25, 0.15]])
    normals = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]])
    return LabeledCloud(pts, normals, [0, 0, -1], [False, True, False])


class TestHandBuiltDrawer:
    def test_push_succeeds(self):
        scene, cloud = drawer_scene(), probe_cloud()
        tp = cloud.points[0]
        # (a) reach
        assert CFG.r_min <= np.linalg.norm(tp - scene.robot) <= CFG.r_max
        # (b) the approach corridor stays clear of the plinth: it runs at z = 0.5, the plinth top is z = 0.3
        start = scene.robot + [0, 0, CFG.ee_height]
        assert segment_point_distance(start, tp + CFG.d_approach * cloud.normals[0], (0.0, 0.0, 0.3)) > CFG.r_ee
        # (d) pushing 0.10 m along -x closes the drawer from 0.15 to 0.05
        q, q_end = oracle.joint_motion(scene, 0, tp, -CFG.push_travel * cloud.normals[0])
        assert (q, q_end) == pytest.approx((0.15, 0.05))
        assert evaluate(scene, cloud, 0, PUSH) == SUCCESS

    def test_pull_off_handle(self):
        assert evaluate(drawer_scene(), probe_cloud(), 0, PULL) == Verdict(0, NOT_GRASPABLE)
        assert evaluate(drawer_scene(), probe_cloud(), 1, PULL) == SUCCESS

    def test_corridor_occluder(self):
        # a post standing across the straight robot -> target corridor
        post = (OrientedBox((0, 0, 0), (0.05, 0.1, 0.3)), RigidTransform(translation=(0.5, 0.0, 0.3)))
        scene, cloud = drawer_scene(occluders=(post,)), probe_cloud()
        approach = explain_path(scene, cloud, 0, PUSH)[0]
        box = scene.occluder_world(0)
        assert min(box.sdf(approach.samples(CFG.step))) < CFG.r_ee
        assert evaluate(scene, cloud, 0, PUSH) == Verdict(0, APPROACH_COLLISION)

    def test_unreachable(self):
        scene = drawer_scene(robot=(1.6, 0.0, 0.0))
        assert evaluate(scene, probe_cloud(), 0, PUSH) == Verdict(0, UNREACHABLE)

    def test_insufficient_motion(self):
        # a closed drawer cannot be pushed further in
        assert evaluate(drawer_scene(0.0), probe_cloud(0.0), 0, PUSH) == Verdict(0, INSUFFICIENT_MOTION)

    def test_part_sweep_collision(self):
        # a block just in front of the open drawer stops it being pulled out,
        # but it is below the stroke so the end effector itself is clear
        block = (OrientedBox((0, 0, 0), (0.02, 0.1, 0.2)), RigidTransform(translation=(0.21, 0.0, 0.2)))
        scene, cloud = drawer_scene(occluders=(block,)), probe_cloud()
        assert oracle.recheck_path(scene, cloud, 1, PULL, explain_path(scene, cloud, 1, PULL))
        assert evaluate(scene, cloud, 1, PULL) == Verdict(0, MANIPULATION_COLLISION)

    def test_invalid_point(self):
        with pytest.raises(InvalidPoint):
            evaluate(drawer_scene(), probe_cloud(), 2, PUSH)
        with pytest.raises(InvalidPoint):
            evaluate(drawer_scene(), probe_cloud(), 7, PUSH)

    def test_unknown_action(self):
        with pytest.raises(ValueError):
            evaluate(drawer_scene(), probe_cloud(), 0, "twist")


class TestExplainPath:
    def test_push_three_legs(self):
        caps = explain_path(drawer_scene(), probe_cloud(), 0, PUSH)
        assert len(caps) == 3
        assert np.allclose(caps[2].b - caps[2].a, [-CFG.push_travel, 0, 0])
        assert np.array_equal(caps[0].b, caps[1].a) and np.array_equal(caps[1].b, caps[2].a)

    def test_pull_stroke_along_normal(self):
        caps = explain_path(drawer_scene(), probe_cloud(), 1, PULL)
        assert len(caps) == 3
        assert np.allclose(caps[2].b - caps[2].a, [CFG.pull_travel, 0, 0])

    def test_json(self):
        caps = explain_path(drawer_scene(), probe_cloud(), 0, PUSH)
        back = [Capsule.from_dict(d) for d in json.loads(oracle.path_json(caps))]
        assert all(np.array_equal(a.a, b.a) and np.array_equal(a.b, b.b) for a, b in zip(caps, back))

    @pytest.mark.parametrize("seed", range(4))
    def test_recheck_reproduces_collision_verdicts(self, seed):
        scene = generate_scene(SceneSpec(num_occluders=2, seed=seed))
        cloud = sample_cloud(scene, 2048, 512, seed=seed)
        for p in cloud.target_indices[::9]:
            for action in (PUSH, PULL):
                v = evaluate(scene, cloud, int(p), action)
                if v.failure_reason == UNREACHABLE:
                    continue
                clear = recheck_path(scene, cloud, int(p), action, explain_path(scene, cloud, int(p), action))
                if not clear:
                    assert v.failure_reason in (APPROACH_COLLISION, MANIPULATION_COLLISION)
                if v.failure_reason == APPROACH_COLLISION:
                    assert not clear


class TestConfig:
    def test_defaults(self):
        assert (CFG.r_min, CFG.r_max, CFG.r_ee, CFG.d_approach, CFG.step) == (0.25, 1.05, 0.04, 0.08, 0.01)

    @pytest.mark.parametrize("kw", [{"r_ee": -1}, {"r_min": 2.0}, {"step": 0.02}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            OracleConfig(**kw)

    def test_verdict_invariant(self):
        with pytest.raises(ValueError):
            Verdict(1, NOT_GRASPABLE)
        with pytest.raises(ValueError):
            Verdict(0)


def scene_and_cloud(seed, n_occ=1):
    scene = generate_scene(SceneSpec(num_occluders=n_occ, seed=seed))
    return scene, sample_cloud(scene, 2048, 512, seed=seed)


@pytest.mark.parametrize("seed", range(6))
def test_mirror_symmetry(seed):
    scene, cloud = scene_and_cloud(seed, 2)
    ms, mc = mirror_scene(scene), mirror_cloud(cloud)
    for action in (PUSH, PULL):
        assert np.array_equal(oracle.census(scene, cloud, action), oracle.census(ms, mc, action))


@pytest.mark.parametrize("seed", range(3))
def test_census_and_determinism(seed):
    scene, cloud = scene_and_cloud(seed)
    labels = oracle.census(scene, cloud, PUSH)
    assert np.all(labels[cloud.seg < 0] == -1)
    assert set(np.unique(labels[cloud.seg >= 0])) <= {0, 1}
    again = oracle.census(*scene_and_cloud(seed), PUSH)
    assert labels.tobytes() == again.tobytes()


def test_precedence_reach_before_collision():
    post = (OrientedBox((0, 0, 0), (0.05, 0.1, 0.3)), RigidTransform(translation=(1.0, 0.0, 0.3)))
    scene = drawer_scene(occluders=(post,), robot=(1.6, 0.0, 0.0))
    assert evaluate(scene, probe_cloud(), 0, PULL).failure_reason == UNREACHABLE

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entikit.core import MotionParams, PedestrianState
from entikit.errors import InvalidInputError, ValidationError
from entikit.scenarios import cohesion_trio, crossing_trios
from entikit.sim import (
    Agent,
    GroupSpec,
    Scenario,
    compute_new_velocity,
    integrate,
    mean_member_distance,
    pairwise_min_distance_margin,
    preferred_velocity,
    simulate,
    spawn,
)


def walker(aid, pos, goal, params=MotionParams(), vel=(0.0, 0.0), group=-1, pref=(0.0, 0.0)):
    return Agent(aid, PedestrianState(pos, vel, pref), params, goal, group)


class TestPreferredVelocity:
    def test_straight(self):
        v = preferred_velocity(walker(0, (0, 0), (10, 0)))
        np.testing.assert_allclose(v, [1.5, 0.0], atol=1e-12)

    def test_arrived(self):
        v = preferred_velocity(walker(0, (9.95, 0), (10, 0)))
        np.testing.assert_array_equal(v, [0.0, 0.0])

    def test_cohesion_rotates_toward_centroid(self):
        def angle(gc):
            p = MotionParams(group_cohesion=gc)
            me = walker(0, (0, 3), (50, 3), p, group=1)
            # centroid (self included) at the origin, 3 m to the side
            mates = [walker(1, (-1, -1.5), (50, -1.5), p, group=1),
                     walker(2, (1, -1.5), (50, -1.5), p, group=1)]
            v = preferred_velocity(me, mates)
            return math.atan2(-v[1], v[0])

        assert angle(1.0) > angle(0.1) > 0

    def test_speed_is_pref_speed(self):
        p = MotionParams(pref_speed=1.3, group_cohesion=0.9)
        me = walker(0, (0, 4), (50, 0), p, group=0)
        mate = walker(1, (0, -4), (50, 0), p, group=0)
        assert np.linalg.norm(preferred_velocity(me, [mate])) == pytest.approx(1.3)

    def test_other_groups_ignored(self):
        me = walker(0, (0, 0), (10, 0), group=0)
        stranger = walker(1, (0, 3), (10, 3), group=1)
        np.testing.assert_allclose(preferred_velocity(me, [stranger]), [1.5, 0])


class TestNewVelocity:
    def test_unconstrained(self):
        a = walker(0, (0, 0), (10, 0), pref=(1.5, 0))
        np.testing.assert_allclose(compute_new_velocity(a), [1.5, 0], atol=1e-12)

    def test_culling(self):
        a = walker(0, (0, 0), (10, 0), vel=(1.5, 0), pref=(1.5, 0))
        far = walker(1, (4.5, 0), (-10, 0), vel=(-1.5, 0))
        np.testing.assert_array_equal(compute_new_velocity(a, [far]), compute_new_velocity(a))

    def test_head_on_symmetric(self):
        a = walker(0, (-2, 0), (20, 0), vel=(1.5, 0))
        b = walker(1, (2, 0), (-20, 0), vel=(-1.5, 0))
        tr = simulate(Scenario((a, b), duration=20.0))
        # mirror symmetry through the origin
        np.testing.assert_allclose(tr.positions[0], -tr.positions[1], atol=1e-9)
        assert np.abs(tr.positions[0, :, 1]).max() > 0.5
        d = np.linalg.norm(tr.positions[0] - tr.positions[1], axis=1)
        assert d.min() >= 2.0 - 1e-9

    def test_obstacle_segment_blocks(self):
        a = walker(0, (0, 0), (10, 0), vel=(1.5, 0), pref=(1.5, 0))
        v = compute_new_velocity(a, obstacles=[((1.2, -5), (1.2, 5))], dt=0.1)
        assert v[0] < 1.5


class TestIntegrate:
    def test_step(self):
        s = integrate(PedestrianState((0, 0)), (1.5, 0), 0.1)
        assert s.position == pytest.approx((0.15, 0.0))

    def test_rest(self):
        s = integrate(PedestrianState((2, 3)), (0, 0), 0.1)
        assert s.position == (2.0, 3.0)

    def test_two_steps_equal_one_double(self):
        s0 = PedestrianState((0.3, -1.0))
        two = integrate(integrate(s0, (1.1, 0.7), 0.1), (1.1, 0.7), 0.1)
        one = integrate(s0, (1.1, 0.7), 0.2)
        assert two.position == pytest.approx(one.position, abs=1e-12)

    def test_bad_dt(self):
        with pytest.raises(InvalidInputError):
            integrate(PedestrianState((0, 0)), (1, 0), 0.0)


class TestSimulate:
    def test_straight_corridor_arrival(self):
        a = walker(0, (0, 0), (12, 0), vel=(1.5, 0))
        tr = simulate(Scenario((a,), obstacles=[((-1, -2), (20, -2)), ((-1, 2), (20, 2))],
                               duration=10.0))
        np.testing.assert_allclose(tr.positions[0, :, 1], 0.0, atol=1e-9)
        arrived = np.flatnonzero(np.linalg.norm(tr.positions[0] - [12, 0], axis=1) <= 0.1)[0]
        assert abs(tr.times[arrived] - 12 / 1.5) <= 2 * 0.1 + 1e-9

    def test_two_samples(self):
        tr = simulate(Scenario((walker(0, (0, 0), (5, 0)),), timestep=0.1, duration=0.1))
        assert tr.positions.shape == (1, 2, 2)

    def test_cohesion_tightens_group(self):
        tight = [mean_member_distance(simulate(cohesion_trio(1.0, seed=s))) for s in range(10)]
        loose = [mean_member_distance(simulate(cohesion_trio(0.1, seed=s))) for s in range(10)]
        assert np.mean(tight) < np.mean(loose)

    def test_deterministic(self):
        sc = crossing_trios(3, steps=200)
        a, b = simulate(sc), simulate(sc)
        assert a.positions.tobytes() == b.positions.tobytes()

    def test_culling_far_agent(self):
        sc = crossing_trios(1, steps=200)
        far = walker(99, (500, 500), (600, 500))
        base = simulate(sc)
        more = simulate(Scenario(sc.agents + (far,), duration=sc.duration))
        np.testing.assert_array_equal(base.positions, more.positions[:-1])

    def test_invalid(self):
        bad = walker(0, (0, 0), (5, 0), MotionParams(radius=-1.0))
        with pytest.raises(ValidationError) as exc:
            simulate(Scenario((bad,)))
        assert any("radius" in v for v in exc.value.violations)

    def test_empty(self):
        tr = simulate(Scenario((), duration=1.0))
        assert tr.positions.shape == (0, 11, 2)

    def test_arrived_agents_hold(self):
        a = walker(0, (0, 0), (1, 0), vel=(1.5, 0))
        tr = simulate(Scenario((a,), duration=5.0))
        np.testing.assert_allclose(tr.positions[0, -1], tr.positions[0, -10])

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000), st.floats(1.2, 1.8), st.floats(0.1, 1.0))
    def test_speed_cap(self, seed, speed, gc):
        p = MotionParams(pref_speed=speed, group_cohesion=gc)
        sc = spawn([GroupSpec(3, (0, 0), (30, 0), p), GroupSpec(3, (15, -15), (15, 15), p)],
                   duration=15, rng_seed=seed, jitter=0.5)
        tr = simulate(sc)
        assert tr.speeds().max() <= 1.2 * speed + 1e-9

    def test_velocity_noise_uses_seed(self):
        p = MotionParams()
        mk = lambda seed: spawn([GroupSpec(2, (0, 0), (20, 0), p)], duration=5, rng_seed=seed,
                                velocity_noise=0.1)
        a, b, c = simulate(mk(1)), simulate(mk(1)), simulate(mk(2))
        assert a.positions.tobytes() == b.positions.tobytes()
        assert not np.array_equal(a.positions, c.positions)


class TestSpawn:
    def test_line_abreast(self):
        sc = spawn([GroupSpec(3, (0, 0), (10, 0), MotionParams(radius=1.0))])
        ys = sorted(a.state.position[1] for a in sc.agents)
        assert ys == pytest.approx([-2.2, 0.0, 2.2])
        assert all(a.state.position[0] == 0 for a in sc.agents)

    def test_singleton(self):
        sc = spawn([GroupSpec(1, (3, 4), (10, 4))])
        assert sc.agents[0].state.position == (3.0, 4.0)

    def test_two_groups_no_overlap(self):
        sc = spawn([GroupSpec(3, (0, 0), (10, 0)), GroupSpec(3, (0, 10), (10, 10))])
        assert pairwise_min_distance_margin(simulate(
            Scenario(sc.agents, duration=0.1)), [1.0] * 6) > 0

    def test_overlap_rejected(self):
        with pytest.raises(ValidationError):
            spawn([GroupSpec(3, (0, 0), (10, 0)), GroupSpec(3, (0, 1), (10, 1))])

    def test_group_ids(self):
        sc = spawn([GroupSpec(2, (0, 0), (10, 0)), GroupSpec(2, (0, 20), (10, 20), group_id=7)])
        assert [a.group_id for a in sc.agents] == [0, 0, 7, 7]

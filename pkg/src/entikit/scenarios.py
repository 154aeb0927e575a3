"""Reusable scenario layouts for demos, presets and the test suite."""

from __future__ import annotations

import itertools

import numpy as np

from entikit.core import DEFAULT_BOX, MotionParams, ParamBox
from entikit.sim import GroupSpec, Scenario, spawn

# Wide enough that outer members start beyond the largest neighbor distance,
# so the cohesion pull is saturated at first and then relaxes once the
# spread drops below neighbor_dist. Both regimes are visible to a fit.
OBSERVABLE_SPACING = 6.0
TRAVEL = 100.0


def observable_trio(params: MotionParams, *, seed: int = 0, duration: float = 20.0,
                    jitter: float = 0.3, start=(0.0, 0.0), heading_deg: float = 0.0,
                    group_id: int | None = None) -> Scenario:
    """Three members on parallel lanes, 6 m apart, walking 100 m."""
    a = np.radians(heading_deg)
    goal = (start[0] + TRAVEL * np.cos(a), start[1] + TRAVEL * np.sin(a))
    spec = GroupSpec(3, tuple(start), goal, params, spacing=OBSERVABLE_SPACING, group_id=group_id)
    return spawn([spec], duration=duration, rng_seed=seed, jitter=jitter)


def cohesion_trio(group_cohesion: float, *, seed: int = 0, duration: float = 20.0) -> Scenario:
    """Three default members whose goals fan out by +/-20 degrees over 40 m."""
    params = MotionParams(group_cohesion=group_cohesion)
    return spawn([GroupSpec(3, (0.0, 0.0), (40.0, 0.0), params, spread_deg=20.0)],
                 duration=duration, rng_seed=seed, jitter=0.3)


def crossing_trios(seed: int, *, steps: int = 1000, params: MotionParams = MotionParams()) -> Scenario:
    """Two trios whose paths cross at right angles; starts jittered by +/-0.5 m."""
    rng = np.random.default_rng(seed)

    def j():
        return rng.uniform(-0.5, 0.5)

    groups = [GroupSpec(3, (-12.0 + j(), j()), (30.0, 0.0), params),
              GroupSpec(3, (j(), -12.0 + j()), (0.0, 30.0), params)]
    return spawn(groups, duration=steps * 0.1, rng_seed=seed)


def crowd(n_groups: int = 10, size: int = 10, *, duration: float = 100.0, seed: int = 0) -> Scenario:
    """Stacked groups walking roughly parallel, slightly converging lanes."""
    groups = [GroupSpec(size, (0.0, 30.0 * g), (200.0, 30.0 * g + 5.0 * (g % 3 - 1)))
              for g in range(n_groups)]
    return spawn(groups, duration=duration, rng_seed=seed)


def round_trip_grid(box: ParamBox = DEFAULT_BOX) -> np.ndarray:
    """Sixteen GP rows spanning the box.

    Group cohesion takes four evenly spaced levels. The other three
    parameters sit at their range ends in a 2^(3-1) half fraction with
    pref_speed high exactly when neighbor_dist and radius are both low or both
    high, so each level of each factor appears equally often.
    """
    lo, hi, _ = box.arrays()
    rows = []
    for gc in np.linspace(lo[3], hi[3], 4):
        for a, b in itertools.product((0, 1), repeat=2):
            c = 1 - (a ^ b)
            rows.append([(lo[0], hi[0])[a], (lo[1], hi[1])[b], (lo[2], hi[2])[c], gc])
    return np.array(rows)

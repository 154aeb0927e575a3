"""Choose motion parameters that realize a target entitativity or feature profile."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from entikit.core import (
    PUBLISHED,
    DEFAULT_BOX,
    EntitativityModel,
    FeatureVector,
    MotionParams,
    ParamBox,
    denormalize_entitativity,
    entitativity_extremes,
    extreme_corners,
    predict_entitativity,
)
from entikit.errors import InvalidInputError
from entikit.scenarios import observable_trio
from entikit.sim import GroupSpec, Scenario, spawn

FEATURE_STEP = 0.1
FEATURE_MAX_ITER = 500
FEATURE_TOL = 1e-6

PRESETS = {
    "highest": ((3.0, 0.8, 1.8, 1.0), 0.0),
    "high": ((3.5, 1.0, 1.65, 0.8), 0.0),
    "medium": ((4.5, 1.4, 1.5, 0.3), 20.0),
    "low": ((5.0, 1.7, 1.2, 0.1), 40.0),
}
LEVELS = tuple(PRESETS)


@dataclass(frozen=True)
class DesignTarget:
    target_entitativity: float | None = None
    target_features: FeatureVector | None = None
    box: ParamBox = DEFAULT_BOX

    def __post_init__(self):
        if (self.target_entitativity is None) == (self.target_features is None):
            raise InvalidInputError("set exactly one of target_entitativity, target_features")
        if self.target_features is not None and not isinstance(self.target_features, FeatureVector):
            object.__setattr__(self, "target_features", FeatureVector.from_array(self.target_features))


def design_for_entitativity(target: float, box: ParamBox = DEFAULT_BOX,
                            model: EntitativityModel = PUBLISHED) -> MotionParams:
    """GP with the requested normalized entitativity, as close to the defaults as possible.

    Distance is Euclidean after scaling each parameter by its range. The
    closest point of the level set inside the box is the default point moved
    along the scaled coefficient direction and clipped, so a scalar root
    search along that ray is exact.
    """
    if not (np.isfinite(target) and 0.0 <= target <= 1.0):
        raise InvalidInputError(f"target {target} outside [0, 1]")
    lo, hi, d = box.arrays()
    span = hi - lo
    if target == 0.0 or target == 1.0:
        return MotionParams.from_gp(extreme_corners(box, model)[int(target)])
    goal = denormalize_entitativity(target, box, model)
    a = np.asarray(model.coefficients[1:])
    w = a * span                     # gradient in range-scaled coordinates
    if not np.any(w):
        return MotionParams.from_gp(d)

    def point(s):
        return np.clip(d + s * w * span, lo, hi)

    def f(s):
        return predict_entitativity(point(s), model) - goal

    # far enough along the ray that every moving coordinate is pinned
    reach = np.max(1.0 / np.abs(w[w != 0])) * 1.01
    s = brentq(f, -reach, reach, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return MotionParams.from_gp(point(s))


def design_for_features(target, box: ParamBox = DEFAULT_BOX,
                        model: EntitativityModel = PUBLISHED) -> tuple[MotionParams, float]:
    """Box-constrained least squares against the affine feature map.

    Projected gradient descent in range-scaled coordinates from the defaults,
    moving each coordinate at most ``FEATURE_STEP`` per iteration. Returns
    the best point and the residual norm there.
    """
    f = target.as_array() if isinstance(target, FeatureVector) else np.asarray(target, dtype=float)
    if f.shape != (4,) or not np.all(np.isfinite(f)):
        raise InvalidInputError("target features must be 4 finite values")
    lo, hi, d = box.arrays()
    span = hi - lo
    M = np.asarray(model.feature_matrix)
    J = M[:, 1:] * span              # Jacobian w.r.t. scaled coordinates
    free = span > 0
    L = float(np.linalg.norm(J, 2) ** 2)

    def residual(z):
        return M[:, 0] + M[:, 1:] @ (lo + z * span) - f

    z = np.where(free, (d - lo) / np.where(free, span, 1.0), 0.0)
    if L > 0:
        # accelerated projected gradient; restarts when the residual grows
        y, z_prev, t = z.copy(), z.copy(), 1.0
        best = float(np.linalg.norm(residual(z)))
        for _ in range(FEATURE_MAX_ITER):
            g = J.T @ residual(y)
            move = np.clip(-g / L, -FEATURE_STEP, FEATURE_STEP)
            z_new = np.where(free, np.clip(y + move, 0.0, 1.0), 0.0)
            r_new = float(np.linalg.norm(residual(z_new)))
            if r_new > best:
                y, t = z.copy(), 1.0
                continue
            best = r_new
            step = float(np.max(np.abs(z_new - z)))
            t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
            y = z_new + (t - 1) / t_new * (z_new - z)
            z_prev, z, t = z, z_new, t_new
            if step < FEATURE_TOL:
                break
    gp = np.clip(lo + z * span, lo, hi)
    return MotionParams.from_gp(gp), float(np.linalg.norm(residual(z)))


def design(target: DesignTarget, model: EntitativityModel = PUBLISHED):
    """Dispatch on whichever target is set; returns (params, residual)."""
    if target.target_entitativity is not None:
        params = design_for_entitativity(target.target_entitativity, target.box, model)
        e_min, e_max = entitativity_extremes(target.box, model)
        achieved = (predict_entitativity(params, model) - e_min) / (e_max - e_min)
        return params, abs(achieved - target.target_entitativity)
    return design_for_features(target.target_features, target.box, model)


def preset_scenario(level: str, *, agents: int = 3, duration: float = 20.0,
                    seed: int = 0) -> Scenario:
    """One group at a fixed entitativity level.

    The two upper levels walk on parallel lanes; medium and low members
    fan out by +/-20 and +/-40 degrees.
    """
    if level not in PRESETS:
        raise InvalidInputError(f"unknown level {level!r}; choose from {', '.join(LEVELS)}")
    gp, spread = PRESETS[level]
    spec = GroupSpec(agents, (0.0, 0.0), (40.0, 0.0), MotionParams.from_gp(gp), spread_deg=spread,
                     group_id=0)
    return spawn([spec], duration=duration, rng_seed=seed)


def designed_scenario(params: MotionParams, *, duration: float = 20.0, seed: int = 0) -> Scenario:
    """A trio laid out so the parameters can be recovered from its tracks."""
    return observable_trio(params, seed=seed, duration=duration, group_id=0)

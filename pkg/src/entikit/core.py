"""Domain types and the closed-form entitativity mappings.

Two independent pathways are exposed and they are *not* mutually consistent:

* ``predict_entitativity`` maps motion parameters straight to a scalar
  entitativity value. Its coefficients were fit against min-max normalized
  labels.
* ``predict_features`` maps motion parameters to the four socio-emotional
  scores, fit on raw (unnormalized) stimulus means. Feeding those scores
  through ``combine_features`` gives a different number (about -0.77 at the
  default parameters versus -0.17 from ``predict_entitativity``).

Neither path should be checked against the other.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from entikit.errors import DegenerateRangeError, InvalidBoxError, InvalidInputError

GP_NAMES = ("neighbor_dist", "radius", "pref_speed", "group_cohesion")
FEATURE_NAMES = ("friendliness", "creepiness", "comfort", "unnerving")

DEFAULT_MAX_NEIGHBORS = 10
DEFAULT_PLANNING_HORIZON = 2.0


class OutOfBoxWarning(UserWarning):
    """Parameters or labels fell outside the validated parameter box."""


def _finite(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{what} must be finite, got {values!r}")
    return arr


@dataclass(frozen=True)
class PedestrianState:
    position: tuple[float, float]
    current_velocity: tuple[float, float] = (0.0, 0.0)
    preferred_velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("position", "current_velocity", "preferred_velocity"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 2:
                raise InvalidInputError(f"{name} must be a 2D vector")
            _finite(value, name)
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        """Six-vector ``[p, v_current, v_pref]``."""
        return np.array(self.position + self.current_velocity + self.preferred_velocity)


@dataclass(frozen=True)
class MotionParams:
    """Full motion-model parameter set.

    The first four fields form the analyzed subset (``gp``); neighbour count
    and planning horizon are simulator settings held at their defaults in
    every study.
    """

    neighbor_dist: float = 4.0
    radius: float = 1.0
    pref_speed: float = 1.5
    group_cohesion: float = 0.5
    max_neighbors: int = DEFAULT_MAX_NEIGHBORS
    planning_horizon: float = DEFAULT_PLANNING_HORIZON

    def __post_init__(self):
        _finite(
            [self.neighbor_dist, self.radius, self.pref_speed, self.group_cohesion,
             self.planning_horizon],
            "motion parameters",
        )
        if int(self.max_neighbors) < 1:
            raise InvalidInputError("max_neighbors must be >= 1")
        if self.planning_horizon <= 0:
            raise InvalidInputError("planning_horizon must be > 0")

    @classmethod
    def from_gp(cls, gp, **extra) -> MotionParams:
        nd, r, ps, gc = (float(v) for v in gp)
        return cls(neighbor_dist=nd, radius=r, pref_speed=ps, group_cohesion=gc, **extra)

    @property
    def gp(self) -> np.ndarray:
        return np.array([self.neighbor_dist, self.radius, self.pref_speed, self.group_cohesion])

    def in_box(self, box: ParamBox | None = None, tol: float = 1e-9) -> bool:
        box = DEFAULT_BOX if box is None else box
        return box.contains(self.gp, tol)

    def replace(self, **changes) -> MotionParams:
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return MotionParams(**values)


@dataclass(frozen=True)
class FeatureVector:
    friendliness: float
    creepiness: float
    comfort: float
    unnerving: float

    def __post_init__(self):
        _finite(self.as_array(), "feature vector")

    @classmethod
    def from_array(cls, values) -> FeatureVector:
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([self.friendliness, self.creepiness, self.comfort, self.unnerving],
                        dtype=float)


@dataclass(frozen=True)
class EntitativityLabel:
    raw: float
    normalized: float
    clamped: bool = False


@dataclass(frozen=True)
class ParamBox:
    """Per-dimension (min, max, default) over the four analyzed parameters."""

    mins: tuple[float, ...]
    maxs: tuple[float, ...]
    defaults: tuple[float, ...]

    def __post_init__(self):
        for name in ("mins", "maxs", "defaults"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 4:
                raise InvalidBoxError(f"{name} must have 4 entries")
            object.__setattr__(self, name, value)
        lo, hi, d = self.arrays()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(np.isfinite(d))):
            raise InvalidBoxError("box bounds must be finite")
        if np.any(lo > hi):
            bad = [GP_NAMES[i] for i in np.flatnonzero(lo > hi)]
            raise InvalidBoxError(f"min > max for {', '.join(bad)}")
        if np.any(d < lo) or np.any(d > hi):
            raise InvalidBoxError("defaults must lie inside [min, max]")

    @classmethod
    def point(cls, gp) -> ParamBox:
        gp = tuple(float(v) for v in gp)
        return cls(gp, gp, gp)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.array(self.mins), np.array(self.maxs), np.array(self.defaults)

    @property
    def ranges(self) -> np.ndarray:
        return np.array(self.maxs) - np.array(self.mins)

    def corners(self) -> np.ndarray:
        """All 16 corners, shape (16, 4)."""
        return np.array(list(itertools.product(*zip(self.mins, self.maxs))))

    def contains(self, gp, tol: float = 1e-9) -> bool:
        gp = np.asarray(gp, dtype=float)
        return bool(np.all(gp >= np.array(self.mins) - tol) and np.all(gp <= np.array(self.maxs) + tol))

    def clip(self, gp) -> np.ndarray:
        return np.clip(np.asarray(gp, dtype=float), self.mins, self.maxs)


DEFAULT_BOX = ParamBox(
    mins=(3.0, 0.8, 1.2, 0.1),
    maxs=(5.0, 1.7, 1.8, 1.0),
    defaults=(4.0, 1.0, 1.5, 0.5),
)

PUBLISHED_LOADINGS = (-0.31, 0.66, -0.46, 0.51)
PUBLISHED_COEFFICIENTS = (0.60, -0.42, -0.58, 0.75, 0.73)
PUBLISHED_FEATURE_MATRIX = (
    (0.32, 0.20, 0.33, -0.23, -0.42),
    (0.56, -0.45, -0.51, 0.73, 0.69),
    (0.34, 0.28, 0.36, -0.49, -0.59),
    (0.57, -0.29, -0.52, 0.68, 0.47),
)


@dataclass(frozen=True)
class EntitativityModel:
    """Coefficient sets used by the forward mappings.

    ``loadings`` combine features into a label, ``coefficients`` is the
    intercept-augmented entitativity vector and ``feature_matrix`` the 4x5
    per-feature map. A refit bundle can stand in for the published values.
    """

    loadings: tuple[float, ...] = PUBLISHED_LOADINGS
    coefficients: tuple[float, ...] = PUBLISHED_COEFFICIENTS
    feature_matrix: tuple[tuple[float, ...], ...] = PUBLISHED_FEATURE_MATRIX
    name: str = field(default="published", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "loadings", tuple(float(v) for v in self.loadings))
        object.__setattr__(self, "coefficients", tuple(float(v) for v in self.coefficients))
        object.__setattr__(
            self, "feature_matrix", tuple(tuple(float(v) for v in row) for row in self.feature_matrix)
        )
        if len(self.loadings) != 4 or len(self.coefficients) != 5:
            raise InvalidInputError("model needs 4 loadings and 5 coefficients")
        if np.asarray(self.feature_matrix).shape != (4, 5):
            raise InvalidInputError("feature matrix must be 4x5")


PUBLISHED = EntitativityModel()


def _gp_array(gp) -> np.ndarray:
    if isinstance(gp, MotionParams):
        arr = gp.gp
    else:
        arr = np.asarray(gp, dtype=float)
    if arr.shape[-1:] != (4,):
        raise InvalidInputError(f"expected 4 analyzed parameters, got shape {arr.shape}")
    return _finite(arr, "motion parameters")


def combine_features(features, model: EntitativityModel = PUBLISHED) -> float:
    """Weighted sum of the four socio-emotional scores (the entitativity label)."""
    if isinstance(features, FeatureVector):
        arr = features.as_array()
    else:
        arr = _finite(features, "feature vector")
    return float(np.dot(model.loadings, arr))


def predict_entitativity(gp, model: EntitativityModel = PUBLISHED):
    """Raw entitativity ``a0 + a . gp``.

    Accepts a ``MotionParams``, a 4-sequence or an ``(n, 4)`` array; the
    latter returns an array of predictions.
    """
    arr = _gp_array(gp)
    a = np.asarray(model.coefficients)
    out = a[0] + arr @ a[1:]
    return float(out) if np.ndim(out) == 0 else out


def predict_features(gp, model: EntitativityModel = PUBLISHED) -> FeatureVector:
    arr = _gp_array(gp)
    if arr.ndim != 1:
        raise InvalidInputError("predict_features takes a single parameter vector")
    return FeatureVector.from_array(np.asarray(model.feature_matrix) @ np.concatenate(([1.0], arr)))


def entitativity_extremes(box: ParamBox = DEFAULT_BOX,
                          model: EntitativityModel = PUBLISHED) -> tuple[float, float]:
    """Minimum and maximum of the affine entitativity map over ``box``.

    Each dimension independently takes whichever end its coefficient sign
    favours.
    """
    if not isinstance(box, ParamBox):
        raise InvalidBoxError("expected a ParamBox")
    lo, hi, _ = box.arrays()
    if np.any(lo > hi):
        raise InvalidBoxError("min > max")
    w = np.asarray(model.coefficients[1:])
    at_max = np.where(w >= 0, hi, lo)
    at_min = np.where(w >= 0, lo, hi)
    return predict_entitativity(at_min, model), predict_entitativity(at_max, model)


def extreme_corners(box: ParamBox = DEFAULT_BOX,
                    model: EntitativityModel = PUBLISHED) -> tuple[np.ndarray, np.ndarray]:
    """Parameter vectors attaining (e_min, e_max)."""
    lo, hi, _ = box.arrays()
    w = np.asarray(model.coefficients[1:])
    return np.where(w >= 0, lo, hi), np.where(w >= 0, hi, lo)


def entitativity_error(e_ground: float, e_pred: float, box: ParamBox = DEFAULT_BOX,
                       model: EntitativityModel = PUBLISHED) -> float:
    """Absolute disagreement as a fraction of the attainable range."""
    _finite([e_ground, e_pred], "entitativity values")
    e_min, e_max = entitativity_extremes(box, model)
    span = e_max - e_min
    if span <= 0:
        raise DegenerateRangeError("box has a single attainable entitativity value")
    return abs(e_ground - e_pred) / span


def normalize_entitativity(raw: float, box: ParamBox = DEFAULT_BOX,
                           model: EntitativityModel = PUBLISHED) -> EntitativityLabel:
    """Min-max scale a raw value onto the box's attainable range.

    Values outside [0, 1] are clamped with an ``OutOfBoxWarning``.
    """
    _finite([raw], "entitativity value")
    e_min, e_max = entitativity_extremes(box, model)
    span = e_max - e_min
    if span <= 0:
        raise DegenerateRangeError("box has a single attainable entitativity value")
    value = (raw - e_min) / span
    clamped = False
    # a hair of slack so corner evaluations are not flagged
    if value < -1e-12 or value > 1 + 1e-12:
        warnings.warn(f"normalized entitativity {value:.4f} clamped to [0, 1]", OutOfBoxWarning,
                      stacklevel=2)
        clamped = True
    return EntitativityLabel(raw=float(raw), normalized=float(min(1.0, max(0.0, value))),
                             clamped=clamped)


def entitativity_label(gp, box: ParamBox = DEFAULT_BOX,
                       model: EntitativityModel = PUBLISHED) -> EntitativityLabel:
    return normalize_entitativity(predict_entitativity(gp, model), box, model)


def denormalize_entitativity(normalized: float, box: ParamBox = DEFAULT_BOX,
                             model: EntitativityModel = PUBLISHED) -> float:
    e_min, e_max = entitativity_extremes(box, model)
    return e_min + normalized * (e_max - e_min)


def is_finite_number(x) -> bool:
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False

"""Recover group motion parameters and entitativity from observed 2D tracks.

Pipeline: ``resample`` each track onto a uniform grid, ``enkf_em_estimate``
filtered states and noise levels, ``cluster_groups`` into coherent groups,
``estimate_params`` by fitting re-simulations, then evaluate the forward
entitativity model. ``classify`` runs the whole chain.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from entikit import _kernel
from entikit.core import (
    PUBLISHED,
    DEFAULT_BOX,
    EntitativityLabel,
    EntitativityModel,
    FeatureVector,
    MotionParams,
    OutOfBoxWarning,
    ParamBox,
    PedestrianState,
    entitativity_label,
    predict_features,
)
from entikit.errors import EntikitError, EstimationError, InvalidInputError, TooShortError

log = logging.getLogger(__name__)

MIN_SAMPLES = 5
ENSEMBLE_SIZE = 50
EM_MAX_ITER = 20
EM_TOL = 1e-3
VAR_FLOOR = 1e-12
SPREAD_LIMIT = 1e8
PREF_SPEED_BOUNDS = (1.0, 2.0)
LOW_CONFIDENCE_M = 5.0
GOAL_LOOKAHEAD = 100.0
SEGMENT_SECONDS = 4.0
SEGMENT_SEPARATION = 1000.0


@dataclass(frozen=True)
class ObservedTrack:
    agent_id: int
    times: np.ndarray
    positions: np.ndarray
    group_id: int = -1

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        p = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if len(t) != len(p):
            raise InvalidInputError(f"track {self.agent_id}: times and positions differ in length")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise InvalidInputError(f"track {self.agent_id}: times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)

    @property
    def usable(self) -> bool:
        return len(self.times) >= MIN_SAMPLES

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self.times) else 0.0


@dataclass
class TrackEstimate:
    """Filter output for one agent; arrays share the ``times`` grid."""

    agent_id: int
    times: np.ndarray
    observations: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    preferred_velocities: np.ndarray
    smoothed_positions: np.ndarray
    smoothed_velocities: np.ndarray
    obs_var: np.ndarray
    process_var: np.ndarray
    em_iterations: int = 0
    group_id: int = -1

    def state(self, k: int) -> PedestrianState:
        return PedestrianState(tuple(self.positions[k]), tuple(self.velocities[k]),
                               tuple(self.preferred_velocities[k]))


@dataclass
class EstimatedStates:
    dt: float
    tracks: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tracks)

    def __getitem__(self, agent_id):
        return self.tracks[agent_id]


@dataclass(frozen=True)
class GroupAssignment:
    groups: dict

    @property
    def labels(self) -> dict:
        return {a: g for g, members in self.groups.items() for a in members}

    def members(self, group_id) -> tuple:
        return self.groups[group_id]


@dataclass(frozen=True)
class ClusterConfig:
    """Pairing gates. Two tracks pair when, over ``min_fraction`` of their common
    samples, they are closer than ``max_distance`` (m), headed within
    ``max_angle_deg`` and differ in speed by less than ``max_speed_diff`` (m/s).

    The distance gate is wide because members with a large personal radius
    already stand 3.6 m apart and loose groups spread further still.
    """

    max_distance: float = 6.5
    max_angle_deg: float = 30.0
    max_speed_diff: float = 0.5
    min_fraction: float = 0.7


@dataclass(frozen=True)
class ParamEstimate:
    params: MotionParams
    loss: float
    low_confidence: bool = False
    out_of_box: bool = False
    cohesion_identifiable: bool = True
    evaluations: int = 0


@dataclass(frozen=True)
class GroupReport:
    group_id: int
    members: tuple
    params: MotionParams
    features: FeatureVector | None
    label: EntitativityLabel | None
    loss: float = float("nan")
    low_confidence: bool = False
    out_of_box: bool = False
    cohesion_identifiable: bool = True
    error: str | None = None
    source_group_id: int = -1


# ---------------------------------------------------------------- resampling


def resample(track: ObservedTrack, dt: float) -> ObservedTrack:
    """Linearly interpolate ``track`` onto ``t0, t0 + dt, ...`` within its span."""
    if not dt > 0:
        raise InvalidInputError("dt must be > 0")
    if len(track.times) < 2 or track.duration < 2 * dt - 1e-9:
        raise TooShortError(f"track {track.agent_id} spans {track.duration:.3f}s, "
                            f"need at least {2 * dt:g}s")
    t0 = track.times[0]
    n = int(math.floor(track.duration / dt + 1e-6)) + 1
    grid = t0 + dt * np.arange(n)
    x = np.interp(grid, track.times, track.positions[:, 0])
    y = np.interp(grid, track.times, track.positions[:, 1])
    return ObservedTrack(track.agent_id, grid, np.column_stack((x, y)), track.group_id)


# ---------------------------------------------------------- EnKF + EM


def _cv_matrices(dt):
    F = np.array([[1, 0, dt, 0], [0, 1, 0, dt], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    # white-noise acceleration, unit intensity, for one axis (position, velocity)
    Q1 = np.array([[dt ** 3 / 3, dt ** 2 / 2], [dt ** 2 / 2, dt]])
    return F, Q1


def _process_cov(q, Q1):
    Q = np.zeros((4, 4))
    for axis in range(2):
        idx = np.ix_([axis, axis + 2], [axis, axis + 2])
        Q[idx] = q[axis] * Q1
    return Q


def _sample_cov(rng, cov, n):
    """Zero-mean ensemble perturbations with covariance ``cov``.

    The sample mean is removed so perturbations never shift the ensemble mean.
    """
    # eigh tolerates the rank-deficient covariances that appear near the floor
    w, U = np.linalg.eigh(cov)
    w = np.clip(w, 0, None)
    E = (U * np.sqrt(w)) @ rng.standard_normal((cov.shape[0], n))
    return E - E.mean(axis=1, keepdims=True)


class _Diverged(Exception):
    pass


def _analysis(X, y, r):
    """Serial square-root update, one position component at a time."""
    n_ens = X.shape[1]
    for c in range(2):
        mean = X.mean(axis=1)
        A = X - mean[:, None]
        hA = A[c]
        phh = hA @ hA / (n_ens - 1)
        pxh = A @ hA / (n_ens - 1)
        denom = phh + r[c]
        K = pxh / denom
        alpha = 1.0 / (1.0 + math.sqrt(r[c] / denom))
        mean = mean + K * (y[c] - mean[c])
        A = A - alpha * np.outer(K, hA)
        X = mean[:, None] + A
    return X


def _enkf_pass(y, dt, q, r, rng, n_ens):
    """One forward ensemble square-root filter sweep plus an ensemble RTS smoother."""
    F, Q1 = _cv_matrices(dt)
    Q = _process_cov(q, Q1)
    T = len(y)
    v0 = (y[min(2, T - 1)] - y[0]) / (dt * min(2, T - 1))
    mean0 = np.concatenate((y[0], v0))
    P0 = np.diag([max(r[0], 1e-4), max(r[1], 1e-4), 1.0, 1.0])
    Xa = np.empty((T, 4, n_ens))
    Xf = np.empty((T, 4, n_ens))
    X = mean0[:, None] + _sample_cov(rng, P0, n_ens)
    for k in range(T):
        if k > 0:
            X = F @ X + _sample_cov(rng, Q, n_ens)
        Xf[k] = X
        X = _analysis(X, y[k], r)
        spread = float(np.sum(np.var(X, axis=1)))
        if not np.all(np.isfinite(X)) or spread > SPREAD_LIMIT:
            raise _Diverged(k)
        Xa[k] = X

    Xs = np.empty_like(Xa)
    Xs[-1] = Xa[-1]
    for k in range(T - 2, -1, -1):
        Aa = Xa[k] - Xa[k].mean(axis=1, keepdims=True)
        Af = Xf[k + 1] - Xf[k + 1].mean(axis=1, keepdims=True)
        C_af = Aa @ Af.T / (n_ens - 1)
        C_ff = Af @ Af.T / (n_ens - 1)
        J = C_af @ np.linalg.pinv(C_ff, rcond=1e-12)
        Xs[k] = Xa[k] + J @ (Xs[k + 1] - Xf[k + 1])
    return Xa, Xs


def _m_step(y, Xs, dt):
    F, Q1 = _cv_matrices(dt)
    resid = y[:, :, None] - Xs[:, :2, :]
    r = np.mean(resid ** 2, axis=(0, 2))
    Q1inv = np.linalg.inv(Q1)
    q = np.empty(2)
    if len(y) < 2:
        return np.maximum(r, VAR_FLOOR), np.full(2, VAR_FLOOR)
    W = Xs[1:] - np.einsum("ij,tjm->tim", F, Xs[:-1])
    for axis in range(2):
        w = W[:, [axis, axis + 2], :]
        q[axis] = np.mean(np.einsum("tim,ij,tjm->tm", w, Q1inv, w)) / 2
    return np.maximum(r, VAR_FLOOR), np.maximum(q, VAR_FLOOR)


def _preferred_velocities(pos, vel):
    speeds = np.linalg.norm(vel, axis=1)
    mag = float(np.clip(np.percentile(speeds, 90), *PREF_SPEED_BOUNDS))
    to_end = pos[-1] - pos
    d = np.linalg.norm(to_end, axis=1, keepdims=True)
    out = np.zeros_like(pos)
    moving = d[:, 0] > 1e-9
    out[moving] = mag * to_end[moving] / d[moving]
    if len(pos) > 1:
        # at the endpoint keep the last heading rather than stopping
        out[~moving] = out[moving][-1] if np.any(moving) else 0.0
    return out


def estimate_track(track: ObservedTrack, dt: float | None = None, *, seed: int = 0,
                   n_ens: int = ENSEMBLE_SIZE, max_iter: int = EM_MAX_ITER,
                   tol: float = EM_TOL, init_obs_var: float = 0.01,
                   init_process_var: float = 0.1) -> TrackEstimate:
    """EnKF state estimate of one track with EM-adapted noise variances.

    The track must already be on a uniform grid (see ``resample``).
    """
    y = track.positions
    if dt is None:
        dt = float(track.times[1] - track.times[0])
    rng_seed = np.random.SeedSequence([seed, abs(int(track.agent_id))])
    r = np.full(2, init_obs_var)
    q = np.full(2, init_process_var)
    it = 0
    for it in range(1, max_iter + 1):
        rng = np.random.default_rng(rng_seed)
        try:
            # divergence is detected explicitly, so silence the overflow noise
            with np.errstate(over="ignore", invalid="ignore"):
                Xa, Xs = _enkf_pass(y, dt, q, r, rng, n_ens)
        except _Diverged as exc:
            raise EstimationError(f"filter diverged on track {track.agent_id} at step {exc.args[0]}",
                                  agent_id=track.agent_id) from None
        r_new, q_new = _m_step(y, Xs, dt)
        old = np.concatenate((r, q))
        new = np.concatenate((r_new, q_new))
        r, q = r_new, q_new
        if np.max(np.abs(new - old) / np.maximum(old, VAR_FLOOR)) < tol:
            break
    rng = np.random.default_rng(rng_seed)
    Xa, Xs = _enkf_pass(y, dt, q, r, rng, n_ens)
    mean_a = Xa.mean(axis=2)
    mean_s = Xs.mean(axis=2)
    return TrackEstimate(
        agent_id=track.agent_id,
        times=track.times.copy(),
        observations=y.copy(),
        positions=mean_a[:, :2],
        velocities=mean_a[:, 2:],
        preferred_velocities=_preferred_velocities(mean_a[:, :2], mean_a[:, 2:]),
        smoothed_positions=mean_s[:, :2],
        smoothed_velocities=mean_s[:, 2:],
        obs_var=r,
        process_var=q,
        em_iterations=it,
        group_id=track.group_id,
    )


def enkf_em_estimate(tracks, dt: float | None = None, *, seed: int = 0,
                     **kwargs) -> EstimatedStates:
    """Estimate every (already resampled) track; errors name the failing track."""
    tracks = list(tracks)
    if dt is None:
        dt = float(tracks[0].times[1] - tracks[0].times[0]) if tracks else 0.1
    out = EstimatedStates(dt=dt)
    for tr in tracks:
        out.tracks[tr.agent_id] = estimate_track(tr, dt, seed=seed, **kwargs)
    return out


# ---------------------------------------------------------------- clustering


def _overlap(a: TrackEstimate, b: TrackEstimate, dt: float):
    ka = np.rint(a.times / dt).astype(np.int64)
    kb = np.rint(b.times / dt).astype(np.int64)
    common, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
    return ia, ib


def _pairs(a: TrackEstimate, b: TrackEstimate, dt: float, cfg: ClusterConfig) -> bool:
    ia, ib = _overlap(a, b, dt)
    if len(ia) == 0:
        return False
    pa, pb = a.smoothed_positions[ia], b.smoothed_positions[ib]
    va, vb = a.smoothed_velocities[ia], b.smoothed_velocities[ib]
    close = np.linalg.norm(pa - pb, axis=1) < cfg.max_distance
    sa, sb = np.linalg.norm(va, axis=1), np.linalg.norm(vb, axis=1)
    cos = np.einsum("ij,ij->i", va, vb) / np.maximum(sa * sb, 1e-12)
    angle = np.degrees(np.arccos(np.clip(cos, -1, 1)))
    # both (nearly) standing still: heading is meaningless, count as aligned
    aligned = (angle < cfg.max_angle_deg) | ((sa < 0.1) & (sb < 0.1))
    similar = np.abs(sa - sb) < cfg.max_speed_diff
    ok = close & aligned & similar
    return float(ok.mean()) >= cfg.min_fraction


def cluster_groups(states: EstimatedStates, config: ClusterConfig = ClusterConfig()) -> GroupAssignment:
    """Transitive closure of the pairwise coherence relation.

    Group ids are assigned 0, 1, ... in order of each group's smallest agent id.
    """
    ids = sorted(states.tracks)
    n = len(ids)
    rows, cols = [], []
    for i, j in itertools.combinations(range(n), 2):
        if _pairs(states.tracks[ids[i]], states.tracks[ids[j]], states.dt, config):
            rows.append(i)
            cols.append(j)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    order = {}
    for k in range(n):
        order.setdefault(comp[k], len(order))
    groups = {}
    for k in range(n):
        groups.setdefault(order[comp[k]], []).append(ids[k])
    return GroupAssignment({g: tuple(m) for g, m in groups.items()})


# ------------------------------------------------------ parameter recovery


@dataclass
class _FitProblem:
    """Observed group window split into restartable segments.

    Each segment is re-simulated from the smoothed state at its start, which
    keeps the fit insensitive to the chaotic growth of small initial errors
    over long horizons. All segments run in one kernel call, spatially
    separated so they never interact.
    """

    obs: np.ndarray          # (S, L + 1, n, 2) per-segment observations
    pos0: np.ndarray         # (S, n, 2)
    vel0: np.ndarray         # (S, n, 2)
    goals: np.ndarray        # (n, 2) fixed destinations shared by all segments
    dt: float
    max_neighbors: int
    planning_horizon: float
    evaluations: int = 0

    def simulate(self, gp) -> np.ndarray:
        S, n = self.pos0.shape[:2]
        offset = np.zeros((S, 1, 2))
        offset[:, 0, 1] = SEGMENT_SEPARATION * np.arange(S)
        pos = (self.pos0 + offset).reshape(S * n, 2)
        goals = (self.goals[None] + offset).reshape(S * n, 2)
        params = np.empty((S * n, 6))
        params[:] = (gp[0], self.max_neighbors, self.planning_horizon, gp[1], gp[2], gp[3])
        vel = self.vel0.reshape(S * n, 2).copy()
        cap = _kernel.SPEED_CAP * gp[2]
        sp = np.linalg.norm(vel, axis=1, keepdims=True)
        vel = np.where(sp > cap, vel * cap / np.maximum(sp, 1e-12), vel)
        steps = self.obs.shape[1] - 1
        groups = np.repeat(np.arange(S, dtype=np.int64), n)
        P, _ = _kernel.run(pos, vel, goals, params, groups, S,
                           np.zeros(S * n, dtype=np.bool_), np.zeros((0, 4)), self.dt, steps,
                           _kernel.DISK, np.zeros((steps, S * n, 2)))
        # (T, S*n, 2) -> (S, T, n, 2), undo the separation
        P = P.reshape(steps + 1, S, n, 2).transpose(1, 0, 2, 3)
        return P - offset[:, None]

    def loss(self, gp) -> float:
        self.evaluations += 1
        P = self.simulate(gp)
        return float(np.mean(np.linalg.norm(P - self.obs, axis=3)))


def _group_window(states: EstimatedStates, members):
    dt = states.dt
    keys = [np.rint(states[m].times / dt).astype(np.int64) for m in members]
    common = keys[0]
    for k in keys[1:]:
        common = np.intersect1d(common, k)
    return common


def _build_problem(states: EstimatedStates, members, base: MotionParams) -> _FitProblem:
    dt = states.dt
    common = _group_window(states, members)
    if len(common) < 2 or (len(common) - 1) * dt < 3.0 - 1e-9:
        span = max(len(common) - 1, 0) * dt
        raise TooShortError(f"group overlap is {span:.2f}s, need at least 3s")
    obs, pos, vel = [], [], []
    for m in members:
        tr = states[m]
        idx = np.searchsorted(np.rint(tr.times / dt).astype(np.int64), common)
        obs.append(tr.observations[idx])
        pos.append(tr.smoothed_positions[idx])
        vel.append(tr.smoothed_velocities[idx])
    obs = np.stack(obs, axis=1)
    pos = np.stack(pos, axis=1)
    vel = np.stack(vel, axis=1)
    # members share a destination heading: the group centroid's net displacement
    travel = pos[-1].mean(axis=0) - pos[0].mean(axis=0)
    dist = np.linalg.norm(travel)
    heading = travel / dist if dist > 1e-6 else np.array([1.0, 0.0])
    goals = pos[0] + GOAL_LOOKAHEAD * heading
    L = max(1, int(round(SEGMENT_SECONDS / dt)))
    T = obs.shape[0]
    starts = list(range(0, T - 1, L))
    if len(starts) > 1 and T - 1 - starts[-1] < L:
        starts.pop()
    L = min(L, T - 1)
    segs = np.stack([obs[s:s + L + 1] for s in starts])
    # the integrator's velocity state is the backward difference of positions
    v0 = np.stack([vel[0] if s == 0 else (pos[s] - pos[s - 1]) / dt for s in starts])
    return _FitProblem(segs, pos[starts], v0, goals, dt,
                       base.max_neighbors, base.planning_horizon)


def _mean_speed(states: EstimatedStates, members) -> float:
    return float(np.mean([np.mean(np.linalg.norm(states[m].smoothed_velocities, axis=1))
                          for m in members]))


def estimate_params(states: EstimatedStates, group: GroupAssignment, group_id, *,
                    box: ParamBox = DEFAULT_BOX, base: MotionParams = MotionParams(),
                    tol_fraction: float = 0.01) -> ParamEstimate:
    """Fit the analyzed parameters of one group by re-simulation.

    A 3x3x3x3 grid (preferred speed centred on the observed mean speed) is
    refined by coordinate descent with step halving until every step is
    below ``tol_fraction`` of its parameter range.
    """
    members = tuple(group.members(group_id))
    if len(members) < 2:
        raise TooShortError(f"group {group_id} has {len(members)} member(s), need 2")
    prob = _build_problem(states, members, base)
    lo, hi, _ = box.arrays()
    rng = hi - lo
    speed_seed = float(np.clip(_mean_speed(states, members), lo[2], hi[2]))
    axes = [np.linspace(lo[d], hi[d], 3) for d in range(4)]
    axes[2] = np.unique(np.clip([speed_seed - rng[2] / 4, speed_seed, speed_seed + rng[2] / 4],
                                lo[2], hi[2]))
    best_gp, best = None, math.inf
    for cand in itertools.product(*axes):
        val = prob.loss(np.array(cand))
        if val < best - 1e-12:
            best, best_gp = val, np.array(cand)

    step = rng / 4
    while np.any(step >= tol_fraction * rng):
        improved = False
        for d in range(4):
            if step[d] < tol_fraction * rng[d]:
                continue
            for sign in (1.0, -1.0):
                cand = best_gp.copy()
                cand[d] = np.clip(cand[d] + sign * step[d], lo[d], hi[d])
                if cand[d] == best_gp[d]:
                    continue
                val = prob.loss(cand)
                if val < best - 1e-12:
                    best, best_gp, improved = val, cand, True
                    break
        if not improved:
            step = step / 2
    params = base.replace(neighbor_dist=best_gp[0], radius=best_gp[1], pref_speed=best_gp[2],
                          group_cohesion=best_gp[3])
    return ParamEstimate(params=params, loss=best, low_confidence=best > LOW_CONFIDENCE_M,
                         out_of_box=False, evaluations=prob.evaluations)


def estimate_singleton(states: EstimatedStates, agent_id, *, box: ParamBox = DEFAULT_BOX,
                       base: MotionParams = MotionParams()) -> ParamEstimate:
    """Only preferred speed is observable for a lone pedestrian."""
    lo, hi, d = box.arrays()
    raw_speed = _mean_speed(states, [agent_id])
    speed = float(np.clip(raw_speed, lo[2], hi[2]))
    params = base.replace(neighbor_dist=d[0], radius=d[1], pref_speed=speed, group_cohesion=d[3])
    return ParamEstimate(params=params, loss=float("nan"),
                         out_of_box=not (lo[2] - 1e-9 <= raw_speed <= hi[2] + 1e-9),
                         cohesion_identifiable=False)


# ------------------------------------------------------------- full chain


def _report(group_id, members, est: ParamEstimate, box, model, source) -> GroupReport:
    gp = est.params.gp
    clipped = box.clip(gp)
    out_of_box = est.out_of_box or not np.allclose(clipped, gp)
    params = MotionParams.from_gp(clipped, max_neighbors=est.params.max_neighbors,
                                  planning_horizon=est.params.planning_horizon)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfBoxWarning)
        label = entitativity_label(params, box, model)
    return GroupReport(group_id=group_id, members=tuple(members), params=params,
                       features=predict_features(params, model), label=label, loss=est.loss,
                       low_confidence=est.low_confidence, out_of_box=out_of_box,
                       cohesion_identifiable=est.cohesion_identifiable, source_group_id=source)


def _source_label(states, members):
    labels = {states[m].group_id for m in members}
    return labels.pop() if len(labels) == 1 else -1


def classify(tracks, *, dt: float = 0.1, box: ParamBox = DEFAULT_BOX,
             model: EntitativityModel = PUBLISHED, cluster: ClusterConfig = ClusterConfig(),
             seed: int = 0, base: MotionParams = MotionParams()) -> list[GroupReport]:
    """Per-group entitativity reports for a set of observed tracks.

    Unusable tracks (fewer than 5 samples or too short to resample) are
    dropped. A failure inside one group is reported on that group only.
    Reports are sorted by group id.
    """
    usable = []
    for tr in tracks:
        if not tr.usable:
            continue
        try:
            usable.append(resample(tr, dt))
        except TooShortError:
            log.info("dropping short track %s", tr.agent_id)
    if not usable:
        return []
    states = enkf_em_estimate(usable, dt, seed=seed)
    assignment = cluster_groups(states, cluster)
    reports = []
    for gid in sorted(assignment.groups):
        members = assignment.members(gid)
        source = _source_label(states, members)
        try:
            if len(members) == 1:
                est = estimate_singleton(states, members[0], box=box, base=base)
            else:
                est = estimate_params(states, assignment, gid, box=box, base=base)
            reports.append(_report(gid, members, est, box, model, source))
        except EntikitError as exc:
            log.warning("group %s failed: %s", gid, exc)
            reports.append(GroupReport(gid, tuple(members), base, None, None, error=str(exc),
                                       source_group_id=source))
    return reports


def tracks_from_trajectories(traj, noise_sigma: float = 0.0, rng=None) -> list[ObservedTrack]:
    """Turn a simulated ``TrajectorySet`` into observed tracks, optionally noisy."""
    out = []
    for k, aid in enumerate(traj.agent_ids):
        pos = traj.positions[k]
        if noise_sigma > 0:
            pos = pos + rng.normal(0.0, noise_sigma, size=pos.shape)
        out.append(ObservedTrack(int(aid), traj.times.copy(), pos, int(traj.group_ids[k])))
    return out


class OnlineClassifier:
    """Sliding-window classification over a growing stream of samples.

    Windows of ``window`` seconds advance by ``stride`` seconds; each
    group's parameter vector is exponentially smoothed across windows with
    weight ``alpha`` on the newest estimate. Groups are matched across
    windows by their member sets. Single writer: call ``push`` from one
    thread; ``snapshot`` returns an immutable copy for readers.
    """

    def __init__(self, *, window: float = 4.0, stride: float = 1.0, alpha: float = 0.5,
                 dt: float = 0.1, box: ParamBox = DEFAULT_BOX,
                 model: EntitativityModel = PUBLISHED, cluster: ClusterConfig = ClusterConfig()):
        self.window = window
        self.stride = stride
        self.alpha = alpha
        self.dt = dt
        self.box = box
        self.model = model
        self.cluster = cluster
        self._samples: dict[int, list] = {}
        self._next_end = None
        self._smoothed: dict[tuple, np.ndarray] = {}
        self._latest: tuple = ()

    def push(self, agent_id: int, t: float, position) -> None:
        self._samples.setdefault(int(agent_id), []).append((float(t), float(position[0]),
                                                            float(position[1])))
        if self._next_end is None:
            self._next_end = t + self.window
        while t >= self._next_end - 1e-9:
            self._process(self._next_end)
            self._next_end += self.stride

    def _process(self, t_end: float) -> None:
        t_start = t_end - self.window
        tracks = []
        for aid, samples in self._samples.items():
            arr = np.array([s for s in samples if t_start - 1e-9 <= s[0] <= t_end + 1e-9])
            if len(arr) >= MIN_SAMPLES:
                tracks.append(ObservedTrack(aid, arr[:, 0], arr[:, 1:]))
        reports = classify(tracks, dt=self.dt, box=self.box, model=self.model,
                           cluster=self.cluster)
        out = []
        for rep in reports:
            key = tuple(sorted(rep.members))
            if rep.label is None:
                out.append(rep)
                continue
            prev = self._smoothed.get(key)
            gp = rep.params.gp if prev is None else self.alpha * rep.params.gp + (1 - self.alpha) * prev
            self._smoothed[key] = gp
            params = MotionParams.from_gp(gp)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OutOfBoxWarning)
                label = entitativity_label(params, self.box, self.model)
            out.append(replace(rep, params=params, features=predict_features(params, self.model),
                               label=label))
        # drop samples no future window can use
        horizon = t_end + self.stride - self.window
        for aid in list(self._samples):
            self._samples[aid] = [s for s in self._samples[aid] if s[0] >= horizon - 1e-9]
        self._latest = tuple(out)

    def snapshot(self) -> tuple:
        return self._latest

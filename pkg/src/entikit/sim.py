"""Group-aware velocity-obstacle crowd simulator.

Each step decomposes into four pieces: ``preferred_velocity`` (goal seeking
plus a pull toward the group centroid), ``compute_new_velocity`` (reciprocal
half-plane avoidance solved by candidate search), ``integrate`` (explicit
Euler) and, once per scenario, ``spawn`` (initial placement).

The crowd-level loop lives in :mod:`entikit._kernel` and is compiled with
numba; the per-agent functions here call the same compiled pieces so the two
paths cannot drift apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from entikit import _kernel
from entikit.core import MotionParams, PedestrianState
from entikit.errors import InvalidInputError, ValidationError

SPEED_CAP = _kernel.SPEED_CAP
GOAL_TOLERANCE = _kernel.GOAL_TOLERANCE
OVERLAP_SLACK = 0.05
SPAWN_GAP = 0.2


@dataclass(frozen=True)
class Agent:
    id: int
    state: PedestrianState
    params: MotionParams
    goal: tuple[float, float]
    group_id: int = -1

    def __post_init__(self):
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))


@dataclass(frozen=True)
class Scenario:
    agents: tuple[Agent, ...]
    obstacles: tuple[tuple[tuple[float, float], tuple[float, float]], ...] = ()
    timestep: float = 0.1
    duration: float = 20.0
    rng_seed: int = 0
    # std-dev (m/s) of a per-step jitter on preferred velocities; 0 = none
    velocity_noise: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(
            self, "obstacles",
            tuple((tuple(map(float, a)), tuple(map(float, b))) for a, b in self.obstacles),
        )

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.timestep))


@dataclass
class TrajectorySet:
    """Uniformly sampled positions (and velocities) for every agent.

    ``positions`` has shape (n_agents, n_samples, 2).
    """

    agent_ids: np.ndarray
    group_ids: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray = field(default=None)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def track(self, agent_id: int) -> np.ndarray:
        k = int(np.flatnonzero(self.agent_ids == agent_id)[0])
        return self.positions[k]

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.velocities, axis=-1)


def validate_scenario(scenario: Scenario) -> list[str]:
    """Every problem found, as messages naming the offending field."""
    problems = []
    if not (scenario.timestep > 0 and math.isfinite(scenario.timestep)):
        problems.append(f"timestep must be > 0 (got {scenario.timestep})")
    elif not (scenario.duration >= scenario.timestep - 1e-12):
        problems.append(f"duration must be >= timestep (got {scenario.duration})")
    if scenario.velocity_noise < 0:
        problems.append("velocity_noise must be >= 0")
    ids = [a.id for a in scenario.agents]
    if len(set(ids)) != len(ids):
        problems.append("agent ids must be unique")
    for k, a in enumerate(scenario.agents):
        p = a.params
        tag = f"agents[{k}].params"
        if not p.radius > 0:
            problems.append(f"{tag}.radius must be > 0 (got {p.radius})")
        if not p.neighbor_dist > 0:
            problems.append(f"{tag}.neighbor_dist must be > 0 (got {p.neighbor_dist})")
        if not p.pref_speed > 0:
            problems.append(f"{tag}.pref_speed must be > 0 (got {p.pref_speed})")
        if not 0 <= p.group_cohesion <= 1:
            problems.append(f"{tag}.group_cohesion must be in [0, 1] (got {p.group_cohesion})")
        if not all(math.isfinite(v) for v in a.goal):
            problems.append(f"agents[{k}].goal must be finite")
        speed = math.hypot(*a.state.current_velocity)
        if p.pref_speed > 0 and speed > SPEED_CAP * p.pref_speed + 1e-9:
            problems.append(f"agents[{k}].state.current_velocity exceeds {SPEED_CAP} x pref_speed")
    for i in range(len(scenario.agents)):
        for j in range(i + 1, len(scenario.agents)):
            a, b = scenario.agents[i], scenario.agents[j]
            d = math.dist(a.state.position, b.state.position)
            if d < a.params.radius + b.params.radius - 1e-9:
                problems.append(f"agents[{i}] and agents[{j}] overlap at start "
                                f"(distance {d:.3f} < {a.params.radius + b.params.radius:.3f})")
    return problems


def _pack(agents):
    n = len(agents)
    pos = np.array([a.state.position for a in agents], dtype=float).reshape(n, 2)
    vel = np.array([a.state.current_velocity for a in agents], dtype=float).reshape(n, 2)
    goals = np.array([a.goal for a in agents], dtype=float).reshape(n, 2)
    params = np.array([[a.params.neighbor_dist, a.params.max_neighbors, a.params.planning_horizon,
                        a.params.radius, a.params.pref_speed, a.params.group_cohesion]
                       for a in agents], dtype=float).reshape(n, 6)
    labels = sorted({a.group_id for a in agents if a.group_id >= 0})
    index = {g: k for k, g in enumerate(labels)}
    group_index = np.array([index.get(a.group_id, -1) for a in agents], dtype=np.int64)
    return pos, vel, goals, params, group_index, len(labels)


def _obstacle_array(obstacles) -> np.ndarray:
    if not obstacles:
        return np.zeros((0, 4))
    return np.array([[a[0], a[1], b[0], b[1]] for a, b in obstacles], dtype=float)


def _group_centroid(agent: Agent, members) -> tuple[bool, float, float]:
    pts = [m.state.position for m in members if m.group_id == agent.group_id and m.id != agent.id]
    if agent.group_id < 0 or not pts:
        return False, 0.0, 0.0
    pts.append(agent.state.position)
    c = np.mean(np.asarray(pts, dtype=float), axis=0)
    return True, float(c[0]), float(c[1])


def preferred_velocity(agent: Agent, others=(), t: float = 0.0, dt: float = 0.0) -> np.ndarray:
    """Goal-seeking velocity of ``agent`` bent toward its group's centroid.

    ``others`` supplies the environment snapshot; only members sharing the
    agent's ``group_id`` affect the result. The blend weight is
    ``group_cohesion * clamp(d_centroid / neighbor_dist, 0, 1)``. Within the
    goal tolerance the result is zero. A positive ``dt`` limits the speed so
    the goal is not overshot in one step. ``t`` is accepted for interface
    symmetry; the rule is time-invariant.
    """
    has_c, cx, cy = _group_centroid(agent, others)
    p = agent.params
    vx, vy = _kernel.preferred_velocity_one(
        agent.state.position[0], agent.state.position[1], agent.goal[0], agent.goal[1],
        p.pref_speed, p.group_cohesion, p.neighbor_dist, has_c, cx, cy, float(dt))
    return np.array([vx, vy])


def compute_new_velocity(agent: Agent, neighbors=(), obstacles=(), dt: float = 0.1,
                         arrived=None) -> np.ndarray:
    """Collision-avoiding velocity nearest ``agent.state.preferred_velocity``.

    Neighbours farther than ``neighbor_dist`` are ignored and at most
    ``max_neighbors`` of the nearest are kept. ``arrived`` optionally flags
    neighbours that hold still (the agent then takes full responsibility).
    """
    everyone = [agent, *neighbors]
    pos, vel, _, params, _, _ = _pack(everyone)
    pref = np.zeros_like(pos)
    pref[0] = agent.state.preferred_velocity
    flags = np.zeros(len(everyone), dtype=np.bool_)
    if arrived is not None:
        flags[1:] = np.asarray(arrived, dtype=bool)
    lines = np.empty((_kernel.MAX_LINES, 4))
    vx, vy = _kernel.agent_velocity(0, pos, vel, pref, params, flags, _obstacle_array(obstacles),
                                    float(dt), _kernel.DISK, lines)
    return np.array([vx, vy])


def integrate(state: PedestrianState, v_new, dt: float) -> PedestrianState:
    """Explicit Euler position update."""
    if not dt > 0:
        raise InvalidInputError("dt must be > 0")
    v = (float(v_new[0]), float(v_new[1]))
    p = state.position
    return PedestrianState(position=(p[0] + v[0] * dt, p[1] + v[1] * dt), current_velocity=v,
                           preferred_velocity=state.preferred_velocity)


def simulate(scenario: Scenario) -> TrajectorySet:
    """Run a scenario; raises ``ValidationError`` listing all violations."""
    problems = validate_scenario(scenario)
    if problems:
        raise ValidationError(problems)
    agents = scenario.agents
    n = len(agents)
    n_steps = scenario.n_steps
    times = np.arange(n_steps + 1) * scenario.timestep
    if n == 0:
        empty = np.zeros((0, n_steps + 1, 2))
        return TrajectorySet(np.zeros(0, dtype=int), np.zeros(0, dtype=int), times, empty,
                             empty.copy())
    pos, vel, goals, params, group_index, n_groups = _pack(agents)
    arrived = np.linalg.norm(goals - pos, axis=1) <= GOAL_TOLERANCE
    vel[arrived] = 0.0
    if scenario.velocity_noise > 0:
        rng = np.random.default_rng(scenario.rng_seed)
        noise = rng.normal(0.0, scenario.velocity_noise, size=(n_steps, n, 2))
    else:
        noise = np.zeros((n_steps, n, 2))
    P, V = _kernel.run(pos, vel, goals, params, group_index, n_groups, arrived,
                       _obstacle_array(scenario.obstacles), float(scenario.timestep), n_steps,
                       _kernel.DISK, noise)
    return TrajectorySet(
        agent_ids=np.array([a.id for a in agents]),
        group_ids=np.array([a.group_id for a in agents]),
        times=times,
        positions=np.ascontiguousarray(P.transpose(1, 0, 2)),
        velocities=np.ascontiguousarray(V.transpose(1, 0, 2)),
    )


@dataclass(frozen=True)
class GroupSpec:
    """One group to place: ``size`` members walking from ``start`` to ``goal``.

    ``spread_deg`` fans the members' goal directions outward (0 keeps
    parallel lanes; the outermost members get +/- spread_deg).
    """

    size: int
    start: tuple[float, float]
    goal: tuple[float, float]
    params: MotionParams = MotionParams()
    spread_deg: float = 0.0
    group_id: int | None = None
    spacing: float | None = None


def _rotate(v, deg):
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def spawn(groups, *, timestep: float = 0.1, duration: float = 20.0, rng_seed: int = 0,
          obstacles=(), jitter: float = 0.0, velocity_noise: float = 0.0,
          first_id: int = 0) -> Scenario:
    """Place each group line-abreast at its start point, facing its goal.

    Members are spaced ``2 * radius + 0.2`` m apart unless the group sets
    ``spacing``. ``jitter`` staggers each member by a uniform +/- offset along
    the heading (drawn from ``rng_seed``), which keeps lateral spacing. Overlapping starts raise ``ValidationError``.
    """
    rng = np.random.default_rng(rng_seed)
    agents = []
    next_id = first_id
    for g_index, spec in enumerate(groups):
        if spec.size < 1:
            raise ValidationError(f"groups[{g_index}].size must be >= 1")
        start = np.asarray(spec.start, dtype=float)
        goal = np.asarray(spec.goal, dtype=float)
        travel = goal - start
        length = float(np.linalg.norm(travel))
        heading = travel / length if length > 0 else np.array([1.0, 0.0])
        lateral = np.array([-heading[1], heading[0]])
        spacing = spec.spacing if spec.spacing is not None else 2 * spec.params.radius + SPAWN_GAP
        gid = spec.group_id if spec.group_id is not None else g_index
        half = (spec.size - 1) / 2
        for m in range(spec.size):
            offset = (m - half) * spacing
            p = start + offset * lateral
            if jitter > 0:
                p = p + rng.uniform(-jitter, jitter) * heading
            frac = (m - half) / half if half > 0 else 0.0
            direction = _rotate(heading, spec.spread_deg * frac)
            g = start + offset * lateral + direction * length
            v = heading * spec.params.pref_speed
            agents.append(Agent(
                id=next_id,
                state=PedestrianState(position=tuple(p), current_velocity=tuple(v),
                                      preferred_velocity=tuple(v)),
                params=spec.params,
                goal=tuple(g),
                group_id=gid,
            ))
            next_id += 1
    scenario = Scenario(agents=tuple(agents), obstacles=obstacles, timestep=timestep,
                        duration=duration, rng_seed=rng_seed, velocity_noise=velocity_noise)
    overlaps = [msg for msg in validate_scenario(scenario) if "overlap" in msg]
    if overlaps:
        raise ValidationError(overlaps)
    return scenario


def pairwise_min_distance_margin(traj: TrajectorySet, radii) -> float:
    """Smallest ``|p_i - p_j| - (r_i + r_j)`` over all sampled steps and pairs."""
    radii = np.asarray(radii, dtype=float)
    P = traj.positions
    n = P.shape[0]
    worst = math.inf
    for i in range(n):
        for j in range(i + 1, n):
            d = np.linalg.norm(P[i] - P[j], axis=1) - (radii[i] + radii[j])
            worst = min(worst, float(d.min()))
    return worst


def mean_member_distance(traj: TrajectorySet, members=None) -> float:
    """Mean pairwise distance among ``members`` (indices) over all samples."""
    P = traj.positions if members is None else traj.positions[list(members)]
    n = P.shape[0]
    total = []
    for i in range(n):
        for j in range(i + 1, n):
            total.append(np.linalg.norm(P[i] - P[j], axis=1))
    return float(np.mean(total)) if total else 0.0

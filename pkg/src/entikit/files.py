"""Readers and writers for the on-disk formats.

Trajectories and study data are CSV; scenarios, reports and model bundles
are JSON objects carrying ``format_version``. Every writer is atomic.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile
from pathlib import Path

import numpy as np
import yaml

from entikit.core import FEATURE_NAMES, GP_NAMES, MotionParams, PedestrianState
from entikit.errors import ValidationError
from entikit.estimation import ObservedTrack
from entikit.fitting import DEFAULT_SCALE, FitDiagnostics, ModelBundle, StudyDataset
from entikit.sim import Agent, Scenario, TrajectorySet

FORMAT_VERSION = 1
TRAJECTORY_HEADER = ("agent_id", "group_id", "frame", "t", "x", "y")
STUDY_HEADER = ("participant_id", "stimulus_id") + GP_NAMES + FEATURE_NAMES
LABEL_HEADER = ("group_id", "entitativity")


def atomic_write(path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise ValidationError(f"{path}: not UTF-8 text") from exc


# ------------------------------------------------------------ trajectories


def format_trajectories(traj: TrajectorySet) -> str:
    out = io.StringIO()
    out.write(",".join(TRAJECTORY_HEADER) + "\n")
    for k, aid in enumerate(traj.agent_ids):
        gid = int(traj.group_ids[k])
        for f, t in enumerate(traj.times):
            x, y = traj.positions[k, f]
            out.write(f"{int(aid)},{gid},{f},{t:.6f},{x:.4f},{y:.4f}\n")
    return out.getvalue()


def write_trajectories(path, traj: TrajectorySet) -> None:
    atomic_write(path, format_trajectories(traj))


def read_trajectories(path) -> list[ObservedTrack]:
    """Parse a trajectory CSV into tracks sorted by agent id.

    Problems are collected with their line numbers and raised together.
    """
    text = _read_text(path)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != TRAJECTORY_HEADER:
        raise ValidationError(f"line 1: header must be {','.join(TRAJECTORY_HEADER)}")
    problems = []
    data: dict[int, list] = {}
    groups: dict[int, int] = {}
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(TRAJECTORY_HEADER):
            problems.append(f"line {line}: expected {len(TRAJECTORY_HEADER)} fields, got {len(row)}")
            continue
        try:
            aid, gid, frame = int(row[0]), int(row[1]), int(row[2])
            t, x, y = float(row[3]), float(row[4]), float(row[5])
        except ValueError:
            problems.append(f"line {line}: cannot parse {','.join(row)!r}")
            continue
        if not all(math.isfinite(v) for v in (t, x, y)):
            problems.append(f"line {line}: non-finite value")
            continue
        if groups.setdefault(aid, gid) != gid:
            problems.append(f"line {line}: agent {aid} changes group_id")
            continue
        data.setdefault(aid, []).append((t, x, y, line))
    tracks = []
    for aid in sorted(data):
        rec = sorted(data[aid])
        times = np.array([r[0] for r in rec])
        dup = np.flatnonzero(np.diff(times) <= 0)
        if len(dup):
            problems.append(f"line {rec[dup[0] + 1][3]}: agent {aid} repeats time {times[dup[0]]}")
            continue
        tracks.append(ObservedTrack(aid, times, np.array([[r[1], r[2]] for r in rec]), groups[aid]))
    if problems:
        raise ValidationError(problems)
    return tracks


# ------------------------------------------------------------ JSON helpers


def _json_lines(text: str) -> dict:
    """Map dotted paths like ``agents[0].params.radius`` to 1-based line numbers."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines = {}

    def walk(node, path):
        lines.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                sub = f"{path}.{key.value}" if path else str(key.value)
                lines[sub] = key.start_mark.line + 1
                walk(value, sub)
        elif isinstance(node, yaml.SequenceNode):
            for i, value in enumerate(node.value):
                walk(value, f"{path}[{i}]")

    if root is not None:
        walk(root, "")
    return lines


def _locate(message: str, lines: dict) -> str:
    m = re.match(r"([A-Za-z_][\w\[\].]*)", message)
    if m:
        path = m.group(1).rstrip(".")
        # fall back to the nearest enclosing element that exists in the file
        while path:
            if path in lines:
                return f"line {lines[path]}: {message}"
            shorter = re.sub(r"(\.[^.\[]+|\[\d+\])$", "", path)
            if shorter == path:
                break
            path = shorter
    return message


def _load_json(path, kind: str):
    text = _read_text(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"line 1: {kind} must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValidationError(f"format_version must be {FORMAT_VERSION} (got {version!r})")
    return doc, _json_lines(text)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _num(x):
    """JSON-safe float: non-finite values become strings."""
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _unnum(x) -> float:
    return float(x)


# ------------------------------------------------------------ scenarios


def scenario_to_dict(sc: Scenario) -> dict:
    agents = []
    for a in sc.agents:
        p = a.params
        agents.append({
            "id": a.id,
            "group_id": a.group_id,
            "position": list(a.state.position),
            "velocity": list(a.state.current_velocity),
            "preferred_velocity": list(a.state.preferred_velocity),
            "goal": list(a.goal),
            "params": {
                "neighbor_dist": p.neighbor_dist, "radius": p.radius, "pref_speed": p.pref_speed,
                "group_cohesion": p.group_cohesion, "max_neighbors": int(p.max_neighbors),
                "planning_horizon": p.planning_horizon,
            },
        })
    return {
        "format_version": FORMAT_VERSION,
        "timestep": sc.timestep,
        "duration": sc.duration,
        "rng_seed": sc.rng_seed,
        "velocity_noise": sc.velocity_noise,
        "obstacles": [list(a) + list(b) for a, b in sc.obstacles],
        "agents": agents,
    }


def write_scenario(path, sc: Scenario) -> None:
    atomic_write(path, _dump(scenario_to_dict(sc)))


def _vec2(value, where, problems):
    if (isinstance(value, list) and len(value) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
            and all(math.isfinite(v) for v in value)):
        return tuple(float(v) for v in value)
    problems.append(f"{where} must be a pair of finite numbers")
    return None


def _number(d, key, where, problems, default=None, kind=float):
    if key not in d:
        if default is None:
            problems.append(f"{where}.{key} is required")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        problems.append(f"{where}.{key} must be a finite number")
        return default
    return kind(v)


def scenario_from_dict(doc: dict) -> Scenario:
    problems = []
    dt = _number(doc, "timestep", "", problems, 0.1)
    duration = _number(doc, "duration", "", problems, 20.0)
    seed = _number(doc, "rng_seed", "", problems, 0, int)
    noise = _number(doc, "velocity_noise", "", problems, 0.0)
    problems = [p.lstrip(".") for p in problems]
    obstacles = []
    for i, ob in enumerate(doc.get("obstacles", []) or []):
        if (isinstance(ob, list) and len(ob) == 4
                and all(isinstance(v, (int, float)) and math.isfinite(v) for v in ob)):
            obstacles.append(((ob[0], ob[1]), (ob[2], ob[3])))
        else:
            problems.append(f"obstacles[{i}] must be [x1, y1, x2, y2]")
    raw_agents = doc.get("agents")
    if not isinstance(raw_agents, list):
        problems.append("agents must be a list")
        raw_agents = []
    agents = []
    for k, ra in enumerate(raw_agents):
        tag = f"agents[{k}]"
        if not isinstance(ra, dict):
            problems.append(f"{tag} must be an object")
            continue
        before = len(problems)
        aid = _number(ra, "id", tag, problems, k, int)
        gid = _number(ra, "group_id", tag, problems, -1, int)
        pos = _vec2(ra.get("position"), f"{tag}.position", problems)
        vel = _vec2(ra.get("velocity", [0.0, 0.0]), f"{tag}.velocity", problems)
        pref = _vec2(ra.get("preferred_velocity", [0.0, 0.0]), f"{tag}.preferred_velocity", problems)
        goal = _vec2(ra.get("goal"), f"{tag}.goal", problems)
        rp = ra.get("params", {})
        if not isinstance(rp, dict):
            problems.append(f"{tag}.params must be an object")
            rp = {}
        base = MotionParams()
        vals = {f: _number(rp, f, f"{tag}.params", problems, getattr(base, f))
                for f in ("neighbor_dist", "radius", "pref_speed", "group_cohesion",
                          "planning_horizon")}
        vals["max_neighbors"] = _number(rp, "max_neighbors", f"{tag}.params", problems,
                                        base.max_neighbors, int)
        if vals["max_neighbors"] < 1:
            problems.append(f"{tag}.params.max_neighbors must be >= 1")
        if not vals["planning_horizon"] > 0:
            problems.append(f"{tag}.params.planning_horizon must be > 0")
        if len(problems) > before:
            continue
        agents.append(Agent(aid, PedestrianState(pos, vel, pref), MotionParams(**vals), goal, gid))
    if problems:
        raise ValidationError(problems)
    return Scenario(tuple(agents), tuple(obstacles), dt, duration, seed, noise)


def read_scenario(path) -> Scenario:
    """Parse and validate a scenario file; messages carry line numbers."""
    from entikit.sim import validate_scenario

    doc, lines = _load_json(path, "scenario")
    try:
        sc = scenario_from_dict(doc)
    except ValidationError as exc:
        raise ValidationError([_locate(m, lines) for m in exc.violations]) from exc
    problems = validate_scenario(sc)
    if problems:
        raise ValidationError([_locate(m, lines) for m in problems])
    return sc


# ------------------------------------------------------------ reports


def write_report(path, doc: dict) -> None:
    atomic_write(path, _dump({"format_version": FORMAT_VERSION, **doc}))


def read_report(path) -> dict:
    return _load_json(path, "report")[0]


# ------------------------------------------------------------ bundles


def _diag_dict(d: FitDiagnostics) -> dict:
    return {"r2": _num(d.r2), "f": _num(d.f), "p": _num(d.p), "df_model": d.df_model,
            "df_resid": d.df_resid}


def _diag_from(d: dict) -> FitDiagnostics:
    return FitDiagnostics(_unnum(d["r2"]), _unnum(d["f"]), _unnum(d["p"]), int(d["df_model"]),
                          int(d["df_resid"]))


def bundle_to_dict(b: ModelBundle, extra: dict | None = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "pca_loadings": [float(v) for v in b.pca_loadings],
        "explained_variance_ratio": float(b.explained_variance_ratio),
        "coefficients": [float(v) for v in b.coefficients],
        "feature_matrix": [[float(v) for v in row] for row in b.feature_matrix],
        "n_stimuli": b.n_stimuli,
        "diagnostics": {
            "entitativity": _diag_dict(b.entitativity_fit),
            **{name: _diag_dict(d) for name, d in zip(FEATURE_NAMES, b.feature_fits)},
        },
    }
    if extra:
        doc.update(extra)
    return doc


def write_bundle(path, b: ModelBundle, extra: dict | None = None) -> None:
    atomic_write(path, _dump(bundle_to_dict(b, extra)))


def read_bundle(path) -> ModelBundle:
    doc, lines = _load_json(path, "bundle")
    try:
        diags = doc["diagnostics"]
        b = ModelBundle(
            pca_loadings=np.array(doc["pca_loadings"], dtype=float),
            explained_variance_ratio=float(doc["explained_variance_ratio"]),
            coefficients=np.array(doc["coefficients"], dtype=float),
            feature_matrix=np.array(doc["feature_matrix"], dtype=float),
            entitativity_fit=_diag_from(diags["entitativity"]),
            feature_fits=tuple(_diag_from(diags[name]) for name in FEATURE_NAMES),
            n_stimuli=int(doc.get("n_stimuli", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed bundle: {exc!r}") from exc
    if b.pca_loadings.shape != (4,) or b.coefficients.shape != (5,) or b.feature_matrix.shape != (4, 5):
        raise ValidationError("bundle arrays have the wrong shape")
    return b


# ------------------------------------------------------------ study data


def format_study(ds: StudyDataset) -> str:
    out = io.StringIO()
    if tuple(ds.scale) != DEFAULT_SCALE:
        out.write(f"# scale: {ds.scale[0]:g},{ds.scale[1]:g}\n")
    out.write(",".join(STUDY_HEADER) + "\n")
    for k in range(len(ds)):
        vals = [str(ds.participant_ids[k]), str(ds.stimulus_ids[k])]
        vals += [repr(float(v)) for v in ds.gp[k]] + [repr(float(v)) for v in ds.responses[k]]
        out.write(",".join(vals) + "\n")
    return out.getvalue()


def write_study(path, ds: StudyDataset) -> None:
    atomic_write(path, format_study(ds))


def read_study(path) -> StudyDataset:
    """Parse a study CSV. An optional ``# scale: lo,hi`` comment sets the rating scale."""
    text = _read_text(path)
    lines = text.splitlines()
    scale = DEFAULT_SCALE
    start = 0
    problems = []
    while start < len(lines) and lines[start].startswith("#"):
        m = re.match(r"#\s*scale\s*:\s*([-\d.eE+]+)\s*,\s*([-\d.eE+]+)\s*$", lines[start])
        if m:
            scale = (float(m.group(1)), float(m.group(2)))
            if not scale[0] < scale[1]:
                problems.append(f"line {start + 1}: scale bounds must increase")
        start += 1
    rows = list(csv.reader(lines[start:]))
    if not rows or tuple(c.strip() for c in rows[0]) != STUDY_HEADER:
        raise ValidationError(f"line {start + 1}: header must be {','.join(STUDY_HEADER)}")
    pid, sid, gp, resp = [], [], [], []
    for offset, row in enumerate(rows[1:], start=start + 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(STUDY_HEADER):
            problems.append(f"line {offset}: expected {len(STUDY_HEADER)} fields, got {len(row)}")
            continue
        try:
            vals = [float(c) for c in row[2:]]
        except ValueError:
            problems.append(f"line {offset}: non-numeric value")
            continue
        if not all(math.isfinite(v) for v in vals):
            problems.append(f"line {offset}: non-finite value")
            continue
        pid.append(row[0].strip())
        sid.append(row[1].strip())
        gp.append(vals[:4])
        resp.append(vals[4:])
    if problems:
        raise ValidationError(problems)
    if not pid:
        raise ValidationError("study file has no data rows")
    return StudyDataset(np.array(pid), np.array(sid), np.array(gp), np.array(resp), scale)


# ------------------------------------------------------------ labels


def read_labels(path) -> dict[int, float]:
    text = _read_text(path)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != LABEL_HEADER:
        raise ValidationError(f"line 1: header must be {','.join(LABEL_HEADER)}")
    labels, problems = {}, []
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            gid, value = int(row[0]), float(row[1])
        except (ValueError, IndexError):
            problems.append(f"line {line}: cannot parse {','.join(row)!r}")
            continue
        if not (math.isfinite(value) and 0.0 <= value <= 1.0):
            problems.append(f"line {line}: entitativity must be in [0, 1]")
        elif gid in labels:
            problems.append(f"line {line}: duplicate group_id {gid}")
        else:
            labels[gid] = value
    if problems:
        raise ValidationError(problems)
    return labels


def write_labels(path, labels: dict) -> None:
    body = "".join(f"{int(g)},{float(v)!r}\n" for g, v in sorted(labels.items()))
    atomic_write(path, ",".join(LABEL_HEADER) + "\n" + body)

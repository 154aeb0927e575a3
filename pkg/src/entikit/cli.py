"""Command-line front end: simulate, classify, fit, design, validate.

Exit codes: 0 success, 2 input or validation error, 3 empty result.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import warnings

import numpy as np

from entikit import __version__
from entikit.core import (
    FEATURE_NAMES,
    GP_NAMES,
    PUBLISHED,
    DEFAULT_BOX,
    FeatureVector,
    MotionParams,
    OutOfBoxWarning,
    entitativity_label,
    predict_entitativity,
    predict_features,
)
from entikit.design import (
    LEVELS,
    design_for_entitativity,
    design_for_features,
    designed_scenario,
    preset_scenario,
)
from entikit.errors import EntikitError, ValidationError
from entikit.estimation import ClusterConfig, classify
from entikit.files import (
    FORMAT_VERSION,
    read_bundle,
    read_labels,
    read_scenario,
    read_study,
    read_trajectories,
    write_bundle,
    write_report,
    write_scenario,
    write_trajectories,
)
from entikit.fitting import refit_pipeline, study_alpha
from entikit.sim import simulate

EXIT_OK, EXIT_INPUT, EXIT_EMPTY = 0, 2, 3
SEED_ENV = "ENTIKIT_SEED"

log = logging.getLogger("entikit")


def _seed_override():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{SEED_ENV} must be an integer (got {raw!r})") from None


def _model(args):
    if getattr(args, "bundle", None):
        return read_bundle(args.bundle).to_model(name=os.path.basename(args.bundle))
    return PUBLISHED


def _gp_dict(gp) -> dict:
    return {name: float(v) for name, v in zip(GP_NAMES, gp)}


def _features_dict(fv: FeatureVector | None) -> dict | None:
    if fv is None:
        return None
    return {name: float(v) for name, v in zip(FEATURE_NAMES, fv.as_array())}


def _label(gp, model):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfBoxWarning)
        return entitativity_label(gp, DEFAULT_BOX, model)


# ------------------------------------------------------------ simulate


def simulate_report(scenario, model=PUBLISHED) -> dict:
    """Forward-model report for each configured group (ungrouped agents alone)."""
    buckets: dict = {}
    for a in scenario.agents:
        key = ("group", a.group_id) if a.group_id >= 0 else ("agent", a.id)
        buckets.setdefault(key, []).append(a)
    groups = []
    for key in sorted(buckets):
        members = buckets[key]
        gps = np.array([m.params.gp for m in members])
        gp = gps.mean(axis=0)
        label = _label(gp, model)
        groups.append({
            "group_id": key[1] if key[0] == "group" else -1,
            "members": [m.id for m in members],
            "params": _gp_dict(gp),
            "features": _features_dict(predict_features(gp, model)),
            "entitativity": {"raw": label.raw, "normalized": label.normalized},
            "flags": {
                "out_of_box": not DEFAULT_BOX.contains(gp),
                "heterogeneous_params": bool(np.ptp(gps, axis=0).max() > 0),
            },
        })
    return {"kind": "simulate", "model": model.name, "groups": groups}


def cmd_simulate(args) -> int:
    seed = _seed_override()
    if args.level:
        scenario = preset_scenario(args.level, agents=args.agents, duration=args.duration,
                                   seed=seed if seed is not None else 0)
    elif args.scenario:
        scenario = read_scenario(args.scenario)
        if seed is not None:
            scenario = dataclasses.replace(scenario, rng_seed=seed)
    else:
        raise ValidationError("give a scenario file or --level")
    model = _model(args)
    traj = simulate(scenario)
    write_trajectories(args.out, traj)
    report = simulate_report(scenario, model)
    if args.report:
        write_report(args.report, report)
    for g in report["groups"]:
        print(f"group {g['group_id']}: normalized entitativity {g['entitativity']['normalized']:.4f}")
    return EXIT_OK


# ------------------------------------------------------------ classify


def _report_entry(r) -> dict:
    entry = {
        "group_id": r.group_id,
        "members": list(r.members),
        "source_group_id": r.source_group_id,
        "params": _gp_dict(r.params.gp),
        "features": _features_dict(r.features),
        "entitativity": None if r.label is None else {"raw": r.label.raw,
                                                      "normalized": r.label.normalized},
        "loss": None if r.loss is None or not np.isfinite(r.loss) else float(r.loss),
        "flags": {
            "out_of_box": bool(r.out_of_box),
            "low_confidence": bool(r.low_confidence),
            "cohesion_not_identifiable": not r.cohesion_identifiable,
        },
    }
    if r.error:
        entry["error"] = r.error
    return entry


def _classify(args, model):
    tracks = read_trajectories(args.trajectories)
    cfg = ClusterConfig(max_distance=args.cluster_distance) if args.cluster_distance else ClusterConfig()
    return classify(tracks, dt=args.dt, model=model, cluster=cfg, seed=args.seed)


def cmd_classify(args) -> int:
    model = _model(args)
    reports = _classify(args, model)
    if not reports:
        print("no usable tracks", file=sys.stderr)
        return EXIT_EMPTY
    doc = {"kind": "classify", "model": model.name, "groups": [_report_entry(r) for r in reports]}
    if args.out:
        write_report(args.out, doc)
    for r in reports:
        e = "failed" if r.label is None else f"{r.label.normalized:.4f}"
        print(f"group {r.group_id} members {list(r.members)}: normalized entitativity {e}")
    return EXIT_OK


# ------------------------------------------------------------ fit


def cmd_fit(args) -> int:
    ds = read_study(args.study)
    bundle = refit_pipeline(ds)
    extra = {"scale": list(ds.scale)}
    try:
        extra["cronbach_alpha"] = study_alpha(ds)
    except EntikitError:
        extra["cronbach_alpha"] = None
    write_bundle(args.out, bundle, extra)
    print(f"explained variance ratio {bundle.explained_variance_ratio:.4f}; "
          f"entitativity R2 {bundle.entitativity_fit.r2:.4f}")
    return EXIT_OK


# ------------------------------------------------------------ design


def cmd_design(args) -> int:
    model = _model(args)
    seed = _seed_override()
    seed = args.seed if seed is None else seed
    if args.level:
        scenario = preset_scenario(args.level, duration=args.duration, seed=seed)
        gp = scenario.agents[0].params.gp
        print(f"preset {args.level}: normalized entitativity {_label(gp, model).normalized:.6f}")
    elif args.target is not None:
        if not (np.isfinite(args.target) and 0.0 <= args.target <= 1.0):
            raise ValidationError(f"--target must be in [0, 1] (got {args.target})")
        params = design_for_entitativity(args.target, DEFAULT_BOX, model)
        scenario = designed_scenario(params, duration=args.duration, seed=seed)
        achieved = _label(params, model).normalized
        print(f"params {_gp_dict(params.gp)}; achieved {achieved:.6f}; "
              f"residual {abs(achieved - args.target):.2e}")
    else:
        params, residual = design_for_features(np.array(args.features), DEFAULT_BOX, model)
        scenario = designed_scenario(params, duration=args.duration, seed=seed)
        print(f"params {_gp_dict(params.gp)}; residual {residual:.6f}")
    write_scenario(args.out, scenario)
    return EXIT_OK


# ------------------------------------------------------------ validate


def cmd_validate(args) -> int:
    model = _model(args)
    labels = read_labels(args.labels)
    reports = _classify(args, model)
    if not reports:
        print("no usable tracks", file=sys.stderr)
        return EXIT_EMPTY
    seen = {r.source_group_id for r in reports if r.source_group_id >= 0}
    unknown = sorted(set(labels) - seen)
    if unknown:
        raise ValidationError(f"labels name groups not in the trajectories: {unknown}")
    missing = sorted(seen - set(labels))
    if missing:
        raise ValidationError(f"no label for groups {missing}")
    errors = []
    for r in reports:
        if r.source_group_id < 0:
            print(f"cluster {r.group_id}: mixed or unknown source group, skipped")
            continue
        if r.label is None:
            print(f"group {r.source_group_id}: estimation failed ({r.error}), scored as error 1")
            err = 1.0
        else:
            # both sides are already on the normalized scale, so the range is 1
            err = abs(labels[r.source_group_id] - r.label.normalized)
        errors.append(err)
        print(f"group {r.source_group_id}: error {err:.4f}")
    mean = float(np.mean(errors)) if errors else float("nan")
    print(f"mean error {mean:.4f}")
    if args.out:
        write_report(args.out, {"kind": "validate", "errors": errors, "mean_error": mean})
    return EXIT_OK


# ------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="entikit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=f"entikit {__version__} (format_version {FORMAT_VERSION})")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario and report forward-model entitativity")
    s.add_argument("scenario", nargs="?")
    s.add_argument("--level", choices=LEVELS)
    s.add_argument("--agents", type=int, default=3)
    s.add_argument("--duration", type=float, default=20.0)
    s.add_argument("-o", "--out", required=True, help="trajectory CSV to write")
    s.add_argument("-r", "--report", help="report JSON to write")
    s.add_argument("--bundle")
    s.set_defaults(func=cmd_simulate)

    def tracking_opts(q):
        q.add_argument("trajectories")
        q.add_argument("--dt", type=float, default=0.1)
        q.add_argument("--cluster-distance", type=float)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--bundle")

    c = sub.add_parser("classify", help="estimate per-group entitativity from tracks")
    tracking_opts(c)
    c.add_argument("-o", "--out", help="report JSON to write")
    c.set_defaults(func=cmd_classify)

    f = sub.add_parser("fit", help="refit the model from study responses")
    f.add_argument("study")
    f.add_argument("-o", "--out", required=True, help="bundle JSON to write")
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("design", help="write a scenario realizing a target")
    target = d.add_mutually_exclusive_group(required=True)
    target.add_argument("--target", type=float)
    target.add_argument("--features", type=float, nargs=4, metavar=("F", "C", "CO", "U"))
    target.add_argument("--level", choices=LEVELS)
    d.add_argument("--duration", type=float, default=20.0)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("-o", "--out", required=True, help="scenario JSON to write")
    d.add_argument("--bundle")
    d.set_defaults(func=cmd_design)

    v = sub.add_parser("validate", help="score classification against ground-truth labels")
    tracking_opts(v)
    v.add_argument("labels")
    v.add_argument("-o", "--out", help="report JSON to write")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        for msg in exc.violations:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except EntikitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

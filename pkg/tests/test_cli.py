import dataclasses
import json
import os

import numpy as np
import pytest

from entikit import __version__
from entikit.cli import main
from entikit.core import MotionParams, entitativity_label, predict_entitativity
from entikit.design import preset_scenario
from entikit.files import (
    FORMAT_VERSION,
    atomic_write,
    read_bundle,
    read_report,
    read_scenario,
    scenario_to_dict,
    write_labels,
    write_scenario,
    write_study,
)
from entikit.scenarios import observable_trio, round_trip_grid
from entikit.sim import Scenario
from study_fixtures import A, M, U, feature_study, rank_one_study


def run(*argv):
    return main([str(a) for a in argv])


def simulate_file(tmp_path, scenario, name="sc"):
    sc = tmp_path / f"{name}.json"
    write_scenario(sc, scenario)
    out, rep = tmp_path / f"{name}.csv", tmp_path / f"{name}.report.json"
    assert run("simulate", sc, "-o", out, "-r", rep) == 0
    return out, read_report(rep)


def merge(*scenarios):
    agents = tuple(a for s in scenarios for a in s.agents)
    agents = tuple(dataclasses.replace(a, id=k) for k, a in enumerate(agents))
    return Scenario(agents, timestep=scenarios[0].timestep, duration=scenarios[0].duration)


class TestSimulate:
    def test_preset_highest(self, tmp_path):
        rep = tmp_path / "r.json"
        assert run("simulate", "--level", "highest", "--agents", 3, "--duration", 20,
                   "-o", tmp_path / "t.csv", "-r", rep) == 0
        [g] = read_report(rep)["groups"]
        assert g["entitativity"]["normalized"] == pytest.approx(1.0)
        assert read_report(rep)["format_version"] == FORMAT_VERSION

    def test_negative_radius(self, tmp_path, capsys):
        doc = scenario_to_dict(observable_trio(MotionParams()))
        doc["agents"][0]["params"]["radius"] = -1.0
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc, indent=2))
        assert run("simulate", path, "-o", tmp_path / "t.csv") == 2
        err = capsys.readouterr().err
        assert "radius" in err and "line " in err
        assert not (tmp_path / "t.csv").exists()

    def test_byte_identical(self, tmp_path):
        sc = tmp_path / "sc.json"
        write_scenario(sc, observable_trio(MotionParams(), seed=4))
        for name in ("a.csv", "b.csv"):
            assert run("simulate", sc, "-o", tmp_path / name) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_trajectory_header(self, tmp_path):
        out, _ = simulate_file(tmp_path, observable_trio(MotionParams(), duration=1.0))
        lines = out.read_bytes().split(b"\n")
        assert lines[0] == b"agent_id,group_id,frame,t,x,y"
        assert b"\r" not in out.read_bytes()

    def test_seed_env_override(self, tmp_path, monkeypatch):
        sc = tmp_path / "sc.json"
        write_scenario(sc, observable_trio(MotionParams(), seed=1))
        monkeypatch.setenv("ENTIKIT_SEED", "9")
        assert run("simulate", sc, "-o", tmp_path / "a.csv") == 0
        monkeypatch.setenv("ENTIKIT_SEED", "9")
        assert run("simulate", sc, "-o", tmp_path / "b.csv") == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        monkeypatch.setenv("ENTIKIT_SEED", "oops")
        assert run("simulate", sc, "-o", tmp_path / "c.csv") == 2


class TestClassify:
    def test_round_trip_gc_one(self, tmp_path):
        out, rep = simulate_file(tmp_path, observable_trio(MotionParams(group_cohesion=1.0),
                                                           seed=3, group_id=0))
        report = tmp_path / "c.json"
        assert run("classify", out, "-o", report) == 0
        [g] = read_report(report)["groups"]
        expected = rep["groups"][0]["entitativity"]["normalized"]
        assert abs(g["entitativity"]["normalized"] - expected) <= 0.15
        assert set(g["flags"]) == {"out_of_box", "low_confidence", "cohesion_not_identifiable"}

    def test_no_usable_tracks(self, tmp_path, capsys):
        path = tmp_path / "t.csv"
        path.write_text("agent_id,group_id,frame,t,x,y\n0,-1,0,0.000000,0.0000,0.0000\n"
                        "0,-1,1,0.100000,0.1000,0.0000\n")
        assert run("classify", path) == 3
        assert "no usable tracks" in capsys.readouterr().err

    def test_parse_error_row(self, tmp_path, capsys):
        path = tmp_path / "t.csv"
        path.write_text("agent_id,group_id,frame,t,x,y\n0,-1,0,0.0,abc,0.0\n")
        assert run("classify", path) == 2
        assert "line 2" in capsys.readouterr().err

    def test_two_trios(self, tmp_path):
        p = MotionParams()
        both = merge(observable_trio(p, seed=1, group_id=0),
                     observable_trio(p, seed=2, start=(0.0, 80.0), group_id=1))
        out, _ = simulate_file(tmp_path, both)
        report = tmp_path / "c.json"
        assert run("classify", out, "-o", report) == 0
        groups = read_report(report)["groups"]
        assert len(groups) == 2
        assert sorted(len(g["members"]) for g in groups) == [3, 3]


class TestFit:
    def test_noiseless_bundles(self, tmp_path):
        write_study(tmp_path / "labels.csv", rank_one_study())
        assert run("fit", tmp_path / "labels.csv", "-o", tmp_path / "b1.json") == 0
        b1 = read_bundle(tmp_path / "b1.json")
        np.testing.assert_allclose(b1.pca_loadings, U, atol=1e-6)
        np.testing.assert_allclose(b1.coefficients, A, atol=1e-6)

        write_study(tmp_path / "features.csv", feature_study())
        assert run("fit", tmp_path / "features.csv", "-o", tmp_path / "b2.json") == 0
        np.testing.assert_allclose(read_bundle(tmp_path / "b2.json").feature_matrix, M, atol=1e-6)

    def test_four_stimuli(self, tmp_path):
        write_study(tmp_path / "s.csv", feature_study(feature_study().gp[:4]))
        assert run("fit", tmp_path / "s.csv", "-o", tmp_path / "b.json") == 2
        assert not (tmp_path / "b.json").exists()

    def test_bundle_round_trip_predictions(self, tmp_path):
        write_study(tmp_path / "s.csv", feature_study(noise=0.05, seed=3))
        assert run("fit", tmp_path / "s.csv", "-o", tmp_path / "b.json") == 0
        doc = json.loads((tmp_path / "b.json").read_text())
        assert doc["format_version"] == FORMAT_VERSION
        from entikit.fitting import refit_pipeline
        from entikit.files import read_study

        direct = refit_pipeline(read_study(tmp_path / "s.csv")).to_model()
        loaded = read_bundle(tmp_path / "b.json").to_model()
        gp = round_trip_grid()
        assert np.array_equal(predict_entitativity(gp, direct), predict_entitativity(gp, loaded))

    def test_bundle_flag_swaps_model(self, tmp_path):
        write_study(tmp_path / "s.csv", rank_one_study())
        assert run("fit", tmp_path / "s.csv", "-o", tmp_path / "b.json") == 0
        rep = tmp_path / "r.json"
        assert run("simulate", "--level", "medium", "-o", tmp_path / "t.csv", "-r", rep,
                   "--bundle", tmp_path / "b.json") == 0
        assert read_report(rep)["model"] == "b.json"


class TestDesign:
    def test_target_half_round_trip(self, tmp_path):
        sc = tmp_path / "d.json"
        assert run("design", "--target", 0.5, "-o", sc) == 0
        out = tmp_path / "t.csv"
        assert run("simulate", sc, "-o", out) == 0
        report = tmp_path / "c.json"
        assert run("classify", out, "-o", report) == 0
        [g] = read_report(report)["groups"]
        assert abs(g["entitativity"]["normalized"] - 0.5) <= 0.15

    def test_target_out_of_range(self, tmp_path):
        assert run("design", "--target", 1.5, "-o", tmp_path / "d.json") == 2
        assert not (tmp_path / "d.json").exists()

    def test_level_passthrough(self, tmp_path):
        assert run("design", "--level", "medium", "-o", tmp_path / "d.json") == 0
        assert read_scenario(tmp_path / "d.json") == preset_scenario("medium")

    def test_features(self, tmp_path, capsys):
        assert run("design", "--features", 3, 3, 3, 3, "-o", tmp_path / "d.json") == 0
        assert "residual" in capsys.readouterr().out


class TestValidate:
    def test_identity_labels(self, tmp_path, capsys):
        out, _ = simulate_file(tmp_path, observable_trio(MotionParams(), seed=0, group_id=5))
        rep = tmp_path / "c.json"
        assert run("classify", out, "-o", rep) == 0
        [g] = read_report(rep)["groups"]
        write_labels(tmp_path / "l.csv", {5: g["entitativity"]["normalized"]})
        vrep = tmp_path / "v.json"
        assert run("validate", out, tmp_path / "l.csv", "-o", vrep) == 0
        assert read_report(vrep)["mean_error"] == 0.0

    def test_suite_of_eight(self, tmp_path):
        grid = round_trip_grid()[::2]
        scenarios = [observable_trio(MotionParams.from_gp(gp), seed=k, start=(0.0, 60.0 * k),
                                     group_id=k) for k, gp in enumerate(grid)]
        out, _ = simulate_file(tmp_path, merge(*scenarios))
        labels = {k: entitativity_label(gp).normalized for k, gp in enumerate(grid)}
        write_labels(tmp_path / "l.csv", labels)
        vrep = tmp_path / "v.json"
        assert run("validate", out, tmp_path / "l.csv", "-o", vrep) == 0
        doc = read_report(vrep)
        assert len(doc["errors"]) == 8
        assert doc["mean_error"] <= 0.10

    def test_unknown_group(self, tmp_path, capsys):
        out, _ = simulate_file(tmp_path, observable_trio(MotionParams(), seed=0, group_id=0))
        write_labels(tmp_path / "l.csv", {0: 0.5, 42: 0.5})
        assert run("validate", out, tmp_path / "l.csv") == 2
        assert "42" in capsys.readouterr().err


class TestPlumbing:
    def test_version(self, capsys):
        assert run("--version") == 0
        out = capsys.readouterr().out
        assert __version__ in out and f"format_version {FORMAT_VERSION}" in out

    def test_atomic_write_keeps_old_file_on_failure(self, tmp_path, monkeypatch):
        path = tmp_path / "x.txt"
        atomic_write(path, "old\n")

        def boom(*a, **k):
            raise OSError("disk full")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(OSError):
            atomic_write(path, "new\n")
        assert path.read_text() == "old\n"
        assert os.listdir(tmp_path) == ["x.txt"]

    def test_missing_subcommand(self):
        assert run() == 2

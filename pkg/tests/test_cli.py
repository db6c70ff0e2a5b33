"""Tests for the command line interface: artifacts, exit codes, determinism."""

import json
import subprocess
import sys

import pytest

import conefold
from conefold.cli import CSV_COLUMNS, _config_hash, canonical_json, main
from conefold.systems import scenario_from_dict


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def elliptic(workdir):
    out = workdir / "elliptic"
    code = main(["build", "--cT", "1", "--s", "2", "--out", str(out)])
    assert code == 0
    path = out / "scenario.json"
    return {
        "dir": out,
        "path": path,
        "bytes": path.read_bytes(),
        "doc": json.loads(path.read_text()),
    }


@pytest.fixture(scope="module")
def mixed(workdir):
    out = workdir / "mixed"
    code = main(["build", "--cT", "2", "--s", "3", "--out", str(out)])
    assert code == 0
    path = out / "scenario.json"
    return {"path": path, "doc": json.loads(path.read_text())}


@pytest.fixture(scope="module")
def verified(workdir, elliptic):
    out = workdir / "verified"
    code = main(["verify", str(elliptic["path"]), "--out", str(out)])
    doc = json.loads((out / "certificates.json").read_text())
    return code, doc


@pytest.fixture(scope="module")
def found(workdir, elliptic):
    out = workdir / "found"
    code = main(["find", str(elliptic["path"]), "--out", str(out)])
    docs = {
        name: json.loads((out / f"{name}.json").read_text())
        for name in ("report_newton", "report_sweep", "agreement")
    }
    return code, docs


@pytest.fixture(scope="module")
def robustness_runs(workdir, elliptic):
    codes, paths = [], []
    for label in ("rob_a", "rob_b"):
        out = workdir / label
        codes.append(
            main(
                [
                    "robustness",
                    str(elliptic["path"]),
                    "--ladder",
                    "1e-3,1e-4",
                    "--trials",
                    "2",
                    "--out",
                    str(out),
                ]
            )
        )
        paths.append(out)
    return codes, paths


# ---------------------------------------------------------------------------
# build


def test_build_writes_scenario_with_header(elliptic):
    doc = elliptic["doc"]
    assert doc["d"] == 3
    assert set(doc["header"]) == {"tool_version", "seed", "config_hash"}
    assert doc["header"]["tool_version"] == conefold.__version__
    assert len(doc["header"]["config_hash"]) == 64


def test_built_scenario_round_trips(elliptic):
    body = dict(elliptic["doc"])
    body.pop("header")
    scenario = scenario_from_dict(body)
    assert scenario.d == 3
    assert scenario.fold.k == 2


def test_build_mixed_echoes_dimensions(mixed, capsys):
    doc = mixed["doc"]
    assert (doc["d"], doc["n"], doc["fold"]["kind"]) == (8, 6, "mixed")


def test_build_rejects_codimension_at_least_s(workdir, capsys):
    code = main(["build", "--cT", "3", "--s", "2", "--out", str(workdir / "bad")])
    assert code == 2
    assert "s > c_T" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# verify


def test_verify_default_elliptic_passes(verified):
    code, doc = verified
    assert code == 0
    assert doc["pass"] is True
    for name in ("trapping", "cone", "folding"):
        assert doc[name]["pass"] is True
    assert set(doc["header"]) == {"tool_version", "seed", "config_hash"}


def test_verify_missing_file_exits_2(workdir, capsys):
    code = main(["verify", str(workdir / "nope.json")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_verify_names_failing_certificate(workdir, elliptic, capsys):
    doc = json.loads(json.dumps(elliptic["doc"]))
    doc["fold"]["gradients"] = [[3.0, 0.0]]
    path = workdir / "displaced.json"
    path.write_text(json.dumps(doc))
    out = workdir / "displaced"
    code = main(["verify", str(path), "--out", str(out)])
    assert code == 1
    assert "certificate failed: folding" in capsys.readouterr().err
    written = json.loads((out / "certificates.json").read_text())
    assert written["pass"] is False
    assert written["folding"]["pass"] is False
    assert written["folding"]["out_of_domain"] > 0


def test_wide_aperture_still_certifies(workdir, elliptic):
    # With the standard elliptic anchor every sampled plane solves to
    # |t|_inf <= alpha/2, so widening the cone to 0.9 stays in the patch.
    doc = json.loads(json.dumps(elliptic["doc"]))
    doc["alpha"] = 0.9
    path = workdir / "wide.json"
    path.write_text(json.dumps(doc))
    out = workdir / "wide"
    code = main(["verify", str(path), "--out", str(out)])
    assert code == 0
    written = json.loads((out / "certificates.json").read_text())
    assert written["folding"]["alpha"] == 0.9
    assert written["folding"]["out_of_domain"] == 0


def test_unknown_scenario_keys_rejected(workdir, elliptic, capsys):
    doc = json.loads(json.dumps(elliptic["doc"]))
    doc["extra_key"] = 1
    path = workdir / "extra.json"
    path.write_text(json.dumps(doc))
    code = main(["verify", str(path)])
    assert code == 2
    assert "unknown" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# find


def test_find_both_reports_agree(found):
    code, docs = found
    assert code == 0
    agreement = docs["agreement"]
    assert agreement["agree"] is True
    assert agreement["class_equal"] is True
    assert agreement["distance"] < 1e-6


def test_find_reports_carry_class_and_residual(found):
    _, docs = found
    for name in ("report_newton", "report_sweep"):
        doc = docs[name]
        assert doc["class"] == {"cT": 1, "dT": 2, "kT": 1}
        assert doc["residual_norm"] < 1e-9
        assert set(doc["header"]) == {"tool_version", "seed", "config_hash"}


def test_find_geometry_block_shapes(found):
    _, docs = found
    geometry = docs["report_newton"]["geometry"]
    rows, cols = geometry["patch_shape"]
    assert len(geometry["patch"]) == rows * cols
    assert all(len(point) == 3 for point in geometry["patch"][:5])
    rows, cols = geometry["leaf_shape"]
    assert len(geometry["leaf"]) == rows * cols
    assert geometry["leaf_half_width"] > 0


def test_find_sweep_on_mixed_exits_2(workdir, mixed, capsys):
    code = main(
        ["find", str(mixed["path"]), "--detector", "sweep", "--out", str(workdir / "ms")]
    )
    assert code == 2
    assert "elliptic" in capsys.readouterr().err


def test_find_newton_on_mixed(workdir, mixed):
    out = workdir / "mixed_newton"
    code = main(["find", str(mixed["path"]), "--detector", "newton", "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "report_newton.json").read_text())
    assert doc["class"] == {"cT": 2, "dT": 3, "kT": 1}
    assert not (out / "agreement.json").exists()


# ---------------------------------------------------------------------------
# robustness


def test_robustness_csv_layout(robustness_runs):
    codes, paths = robustness_runs
    assert codes == [0, 0]
    lines = (paths[0] / "stats.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    body = [line.split(",") for line in lines[1:]]
    per_detector = {}
    for cells in body:
        per_detector.setdefault(cells[3], []).append(cells)
    # trials x magnitudes rows for each detector that ran
    assert sorted(per_detector) == ["newton", "sweep"]
    assert len(per_detector["newton"]) == 4
    assert len(per_detector["sweep"]) == 4
    for cells in body:
        assert cells[4] in ("true", "false")
        float(cells[0])
        int(cells[2])


def test_robustness_summary_layout(robustness_runs):
    _, paths = robustness_runs
    doc = json.loads((paths[0] / "summary.json").read_text())
    assert doc["trials_per_magnitude"] == 2
    assert [s["magnitude"] for s in doc["stats"]] == [1e-3, 1e-4]
    for stats in doc["stats"]:
        assert 0.0 <= stats["success_rate"] <= 1.0
        assert stats["trials"] == 2
    assert doc["monotone_ok"] is True


def test_robustness_byte_identical_across_runs(robustness_runs):
    _, paths = robustness_runs
    for name in ("stats.csv", "summary.json"):
        assert (paths[0] / name).read_bytes() == (paths[1] / name).read_bytes()


def test_robustness_rejects_increasing_ladder(workdir, elliptic, capsys):
    code = main(
        ["robustness", str(elliptic["path"]), "--ladder", "1e-4,1e-3"]
    )
    assert code == 2
    assert "decreas" in capsys.readouterr().err


def test_robustness_rejects_zero_trials(workdir, elliptic, capsys):
    code = main(
        ["robustness", str(elliptic["path"]), "--ladder", "1e-3", "--trials", "0"]
    )
    assert code == 2


# ---------------------------------------------------------------------------
# cross-cutting contracts


def test_commands_never_mutate_inputs(elliptic, verified, found, robustness_runs):
    assert elliptic["path"].read_bytes() == elliptic["bytes"]


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["build", "--cT", "1"]) == 2
    capsys.readouterr()


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert "conefold" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "conefold.cli", "verify", "does-not-exist.json"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert "error:" in proc.stderr


def test_canonical_json_floats_round_trip():
    values = [0.1, 1.0 / 3.0, 1e-17, 1234.5678901234567, 4.9406564584124654e-324]
    for value in values:
        assert float(canonical_json(value)) == value


def test_canonical_json_nested_document():
    doc = {"a": [1, 2.5, None, True], "b": {"c": "text"}, "empty": [], "none": {}}
    parsed = json.loads(canonical_json(doc))
    assert parsed == doc


def test_config_hash_tracks_content():
    base = {"command": "build", "seed": 0}
    other = {"command": "build", "seed": 1}
    assert _config_hash(base) != _config_hash(other)
    assert _config_hash(base) == _config_hash({"command": "build", "seed": 0})

"""Tests for cli.py - subcommands, result files, run manifests and exit codes."""

import argparse
import json
import os
from unittest.mock import patch

import pytest

from cli import EXIT_CONTRACT, EXIT_IO, EXIT_OK, _int_list, build_parser, main
from synth import NoiseConfig, write_synthetic_tree
from tests.builders import clean_dataset, random_pose, sequence_csv, static_sequence

RUN_KEYS = {
    "command",
    "env_overrides",
    "finished_at",
    "inputs",
    "outputs",
    "parameters",
    "seed",
    "started_at",
    "version",
}


@pytest.fixture(autouse=True)
def _keep_test_logging():
    """``main`` would replace the root handlers that ``caplog`` relies on."""
    with patch("cli.configure_logging") as mock_configure:
        yield mock_configure


@pytest.fixture(scope="module")
def small_tree(tmp_path_factory):
    """Four noise-free subjects with three 60-frame walks each."""
    root = tmp_path_factory.mktemp("tree")
    return write_synthetic_tree(root, clean_dataset(4, 3, 60, seed=2))


def _read_lines(path) -> list[str]:
    return path.read_text(encoding="utf-8").splitlines()


def test_synth_then_cross_validate(tmp_path) -> None:
    data = tmp_path / "data"
    argv = ["synth", "-n", "10", "-s", "5", "-f", "300", "--noise", "0", "--seed", "1"]
    assert main([*argv, "--out", str(data)]) == EXIT_OK
    assert (data / "manifest.csv").is_file()
    assert len(list((data / "sequences").glob("*.csv"))) == 50
    truth = json.loads((data / "truth.json").read_text(encoding="utf-8"))
    assert truth["seed"] == 1

    out = tmp_path / "res"
    argv = ["eval", "cv", "--manifest", str(data / "manifest.csv")]
    argv += ["--features", "AF", "RDF", "CF", "--folds", "10", "--seed", "7", "--out", str(out)]
    assert main(argv) == EXIT_OK
    rows = [line.split(",") for line in _read_lines(out / "cv.csv")[1:]]
    overall = {row[0]: row[4] for row in rows if row[1] == "all"}
    assert overall == {"AF": "1", "RDF": "1", "CF": "1"}
    assert len(_read_lines(out / "probes.csv")) == 1 + 3 * 50


def test_eval_is_reproducible(tmp_path, small_tree) -> None:
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        argv = ["eval", "cv", "--manifest", str(small_tree), "--folds", "3", "--seed", "5"]
        assert main([*argv, "--out", str(out), "--workers", "1" if name == "a" else "3"]) == EXIT_OK
        outputs.append(out)
    for name in ("cv.csv", "probes.csv"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()


def test_eval_run_manifest(tmp_path, small_tree) -> None:
    out = tmp_path / "res"
    main(["eval", "cv", "--manifest", str(small_tree), "--folds", "3", "--seed", "9", "--out", str(out)])
    run = json.loads((out / "run.json").read_text(encoding="utf-8"))
    assert set(run) == RUN_KEYS
    assert run["command"] == "eval cv"
    assert run["seed"] == 9
    assert run["inputs"] == [str(small_tree)]
    assert run["parameters"]["features"] == ["CF"]
    assert run["parameters"]["folds"] == 3
    assert run["outputs"] == [str(out / "cv.csv"), str(out / "probes.csv")]


@pytest.mark.parametrize(
    ("experiment", "extra", "result", "header"),
    [
        ("ksweep", ["--k-values", "1-3", "--folds", "3"], "ksweep.csv", "feature_set,K,accuracy"),
        (
            "gallery",
            ["--sizes", "2,4", "--reps", "2"],
            "gallery.csv",
            "feature_set,size,repetitions,mean_accuracy,std_accuracy",
        ),
        ("cmc", ["--max-rank", "3"], "cmc.csv", "feature_set,rank,accuracy"),
        ("ablate", ["--folds", "3"], "ablate.csv", "feature_set,fold,probes,correct,accuracy"),
        (
            "rsm",
            ["--folds", "3", "--features", "AF", "RDF"],
            "rsm.csv",
            "feature_set,accuracy_without_rsm,accuracy_with_rsm,improvement",
        ),
    ],
)
def test_eval_experiments(tmp_path, small_tree, experiment, extra, result, header) -> None:
    out = tmp_path / experiment
    argv = ["eval", experiment, "--manifest", str(small_tree), "--out", str(out), *extra]
    assert main(argv) == EXIT_OK
    lines = _read_lines(out / result)
    assert lines[0] == header
    assert len(lines) > 1
    assert (out / "probes.csv").is_file()
    assert (out / "run.json").is_file()


def test_ksweep_rows(tmp_path, small_tree) -> None:
    out = tmp_path / "k"
    main(["eval", "ksweep", "--manifest", str(small_tree), "--k-values", "1,2", "--folds", "3", "--out", str(out)])
    assert [line.split(",")[1] for line in _read_lines(out / "ksweep.csv")[1:]] == ["1", "2"]


def test_extract(tmp_path, small_tree) -> None:
    out = tmp_path / "features" / "af.csv"
    assert main(["extract", "--manifest", str(small_tree), "--features", "af", "--out", str(out)]) == EXIT_OK
    lines = _read_lines(out)
    assert lines[0].startswith("subject_id,sequence_id,len_head_shoulder_center,")
    assert lines[0].endswith(",height")
    assert len(lines) == 13
    assert _read_lines(out.with_name("af.skipped.csv")) == ["subject_id,sequence_id,reason"]
    run = json.loads(out.with_name("af.run.json").read_text(encoding="utf-8"))
    assert run["command"] == "extract"
    assert run["seed"] is None


def test_extract_reports_skipped(tmp_path) -> None:
    (tmp_path / "short.csv").write_text(sequence_csv(static_sequence(random_pose(0), 1)), encoding="utf-8")
    (tmp_path / "long.csv").write_text(sequence_csv(static_sequence(random_pose(1), 4)), encoding="utf-8")
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("S1,a,short.csv\nS2,a,long.csv\n", encoding="utf-8")
    out = tmp_path / "rdf.csv"
    assert main(["extract", "--manifest", str(manifest), "--features", "RDF", "--out", str(out)]) == EXIT_OK
    assert len(_read_lines(out)) == 2
    skipped = _read_lines(tmp_path / "rdf.skipped.csv")
    assert skipped[1].startswith("S1,a,")


def test_synth_options(tmp_path) -> None:
    out = tmp_path / "noisy"
    argv = ["synth", "-n", "2", "-s", "2", "-f", "20", "--occlusion", "0.5", "--occlusion-mode", "lost"]
    assert main([*argv, "--seed", "3", "--out", str(out)]) == EXIT_OK
    truth = json.loads((out / "truth.json").read_text(encoding="utf-8"))
    assert truth["noise"]["occlusion_mode"] == "lost"
    assert truth["noise"]["inferred_std"] == NoiseConfig.inferred_std
    run = json.loads((out / "run.json").read_text(encoding="utf-8"))
    assert run["parameters"]["occlusion"] == 0.5


def test_synth_is_reproducible(tmp_path) -> None:
    argv = ["synth", "-n", "2", "-s", "5", "-f", "100", "--seed", "1"]
    trees = []
    for name in ("a", "b"):
        assert main([*argv, "--out", str(tmp_path / name)]) == EXIT_OK
        trees.append(
            {
                str(p.relative_to(tmp_path / name)): p.read_bytes()
                for p in sorted((tmp_path / name).rglob("*"))
                if p.is_file() and p.name != "run.json"
            }
        )
    assert len(trees[0]) == 12
    assert trees[0] == trees[1]


def test_extract_empty_manifest(tmp_path) -> None:
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("", encoding="utf-8")
    out = tmp_path / "cf.csv"
    assert main(["extract", "--manifest", str(manifest), "--features", "CF", "--out", str(out)]) == EXIT_OK
    lines = _read_lines(out)
    assert len(lines) == 1
    assert lines[0].startswith("subject_id,sequence_id,")
    assert _read_lines(tmp_path / "cf.skipped.csv") == ["subject_id,sequence_id,reason"]


def test_verbose_flag_configures_debug_logging(tmp_path, _keep_test_logging) -> None:
    main(["-v", "synth", "-n", "1", "-s", "1", "-f", "5", "--out", str(tmp_path)])
    _keep_test_logging.assert_called_once_with(verbose=True)


# ---------------------------------------------------------------------------
# Exit codes
# ---------------------------------------------------------------------------


def test_missing_manifest_is_io_error(tmp_path) -> None:
    argv = ["eval", "cv", "--manifest", str(tmp_path / "absent.csv"), "--out", str(tmp_path)]
    assert main(argv) == EXIT_IO


def test_malformed_manifest_is_contract_error(tmp_path, caplog) -> None:
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("S1,a\n", encoding="utf-8")
    assert main(["extract", "--manifest", str(manifest), "--out", str(tmp_path / "x.csv")]) == EXIT_CONTRACT
    assert "line 1: expected 3 columns" in caplog.text


def test_too_many_folds_is_contract_error(tmp_path, small_tree) -> None:
    argv = ["eval", "cv", "--manifest", str(small_tree), "--folds", "13", "--out", str(tmp_path)]
    assert main(argv) == EXIT_CONTRACT


def test_unknown_feature_set_exits_from_parser(capsys) -> None:
    with pytest.raises(SystemExit) as excinfo:
        main(["extract", "--manifest", "m.csv", "--features", "XYZ", "--out", "o.csv"])
    assert excinfo.value.code == EXIT_CONTRACT
    assert "unknown feature set" in capsys.readouterr().err


@pytest.mark.parametrize(
    "extra",
    [["--features", "XYZ"], ["--folds", "ten"], ["--K", "0.5"]],
)
def test_bad_eval_flag_is_contract_error(extra, capsys) -> None:
    with pytest.raises(SystemExit) as excinfo:
        main(["eval", "cv", "--manifest", "m.csv", *extra])
    assert excinfo.value.code == EXIT_CONTRACT
    assert "usage: gait-rdf eval" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Parser helpers
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    ("text", "expected"),
    [
        ("5", [5]),
        ("1,3,7", [1, 3, 7]),
        ("1-4", [1, 2, 3, 4]),
        ("10-40:10", [10, 20, 30, 40]),
        ("1-2, 9", [1, 2, 9]),
    ],
)
def test_int_list(text, expected) -> None:
    assert _int_list(text) == expected


@pytest.mark.parametrize("text", ["", "a", "1-b", ","])
def test_int_list_rejects(text) -> None:
    with pytest.raises(argparse.ArgumentTypeError):
        _int_list(text)


def test_parser_defaults_follow_config(monkeypatch) -> None:
    monkeypatch.setenv("GAIT_SEED", "42")
    monkeypatch.setenv("GAIT_WORKERS", "2")
    args = build_parser().parse_args(["eval", "cv", "--manifest", "m.csv"])
    assert args.seed == 42
    assert args.workers == 2
    assert args.rsm is True
    assert (args.K, args.L, args.N) == (1, 100, 10)
    assert args.folds is None
    assert build_parser().parse_args(["eval", "cv", "--manifest", "m", "--no-rsm"]).rsm is False


def test_serve_sets_gallery_environment(monkeypatch, tmp_path) -> None:
    monkeypatch.setenv("GAIT_GALLERY_MANIFEST", "")
    monkeypatch.setenv("GAIT_GALLERY_FEATURES", "")
    with patch("app.run") as mock_run:
        argv = ["serve", "--manifest", str(tmp_path / "m.csv"), "--features", "rdf", "--port", "5001"]
        assert main(argv) == EXIT_OK
    mock_run.assert_called_once_with(host="0.0.0.0", port=5001)  # noqa: S104
    assert os.environ["GAIT_GALLERY_MANIFEST"] == str(tmp_path / "m.csv")
    assert os.environ["GAIT_GALLERY_FEATURES"] == "RDF"


def test_serve_falls_back_on_invalid_port(monkeypatch, caplog) -> None:
    monkeypatch.setenv("FLASK_PORT", "http")
    monkeypatch.setenv("FLASK_DEBUG", "yes")
    with patch("app.app.run") as mock_flask_run:
        assert main(["serve"]) == EXIT_OK
    mock_flask_run.assert_called_once_with(host="0.0.0.0", debug=True, port=5000)  # noqa: S104
    assert "Invalid FLASK_PORT value 'http'" in caplog.text

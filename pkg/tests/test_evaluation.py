"""Tests for evaluation.py - fold plans, protocols and result CSVs."""

import io
import logging
from collections import Counter

import numpy as np
import pytest

from _common import ContractError, FeatureKind
from ensemble import EnsembleConfig, knn_classify
from evaluation import (
    ProbeRecord,
    ablate_rdf_subsets,
    cmc,
    compare_rsm,
    gallery_sweep,
    k_sweep,
    kfold_cv,
    make_fold_plan,
    write_cmc_csv,
    write_cv_csv,
    write_gallery_csv,
    write_ksweep_csv,
    write_probes_csv,
    write_rsm_csv,
)
from features import build_feature_table
from skeleton import Dataset
from synth import NoiseConfig, generate_dataset
from tests.builders import clean_dataset, random_pose, static_sequence

PLAIN = EnsembleConfig(K=1)


def _keys(n: int) -> list[tuple[str, str]]:
    return [(f"S{i % 5}", f"q{i}") for i in range(n)]


class TestFoldPlan:
    def test_balanced_and_exhaustive(self) -> None:
        keys = _keys(23)
        plan = make_fold_plan(keys, 5, seed=3)
        assert sorted(plan.sizes) == [4, 4, 5, 5, 5]
        assert set(plan.assignment) == set(keys)
        members = [set(plan.members(f)) for f in range(5)]
        assert set().union(*members) == set(keys)
        assert sum(len(m) for m in members) == len(keys)

    def test_deterministic(self) -> None:
        keys = _keys(30)
        a = make_fold_plan(keys, 10, seed=1)
        b = make_fold_plan(keys, 10, seed=1)
        c = make_fold_plan(keys, 10, seed=2)
        assert dict(a.assignment) == dict(b.assignment)
        assert dict(a.assignment) != dict(c.assignment)

    def test_leave_one_out_plan(self) -> None:
        plan = make_fold_plan(_keys(7), 7, seed=0)
        assert plan.sizes == (1,) * 7

    @pytest.mark.parametrize("folds", [0, 8])
    def test_folds_out_of_range(self, folds) -> None:
        with pytest.raises(ContractError):
            make_fold_plan(_keys(7), folds, seed=0)


class TestKfoldCv:
    def test_clean_dataset_is_perfect(self, small_dataset) -> None:
        report = kfold_cv(small_dataset, "CF", folds=4, seed=5)
        assert report.accuracy == 1.0
        assert report.pooled_accuracy == 1.0
        assert report.total == 16
        assert report.feature_set is FeatureKind.CF

    def test_aggregates_follow_probe_log(self, small_dataset) -> None:
        report = kfold_cv(small_dataset, "RDF", folds=3, use_rsm=False, seed=2)
        per_fold = Counter(p.fold for p in report.probes)
        assert sorted(per_fold) == [0, 1, 2]
        assert report.accuracy == pytest.approx(np.mean(report.fold_accuracies))
        assert report.pooled_accuracy == pytest.approx(report.correct / report.total)
        for fold, accuracy in enumerate(report.fold_accuracies):
            hits = [p.correct for p in report.probes if p.fold == fold]
            assert accuracy == pytest.approx(np.mean(hits))

    def test_leave_one_out_matches_explicit_loop(self, small_dataset) -> None:
        report = kfold_cv(
            small_dataset,
            "RDF",
            folds=len(small_dataset),
            classifier_config=PLAIN,
            use_rsm=False,
        )
        table = build_feature_table(small_dataset, "RDF")
        expected = []
        for row in range(len(table)):
            rows = [r for r in range(len(table)) if r != row]
            expected.append(knn_classify(table.vector(row), table.gallery(rows), 1))
        assert [p.predicted_label for p in report.probes] == expected

    def test_full_dimension_subspaces_equal_plain_knn(self, small_dataset) -> None:
        plain = kfold_cv(small_dataset, "RDF", folds=4, use_rsm=False, seed=9)
        ensemble = kfold_cv(
            small_dataset,
            "RDF",
            folds=4,
            classifier_config=EnsembleConfig(L=5, N=20, K=1),
            seed=9,
        )
        assert [p.predicted_label for p in ensemble.probes] == [
            p.predicted_label for p in plain.probes
        ]

    def test_workers_and_reruns_agree(self, small_dataset) -> None:
        config = EnsembleConfig(L=20, N=8, K=1, seed=4)
        serial = kfold_cv(small_dataset, "CF", 4, config, True, 6, workers=1)
        parallel = kfold_cv(small_dataset, "CF", 4, config, True, 6, workers=4)
        again = kfold_cv(small_dataset, "CF", 4, config, True, 6, workers=1)
        assert serial.probes == parallel.probes == again.probes
        assert serial.accuracy == parallel.accuracy

    def test_config_echo(self, small_dataset) -> None:
        report = kfold_cv(small_dataset, "AF", folds=4, use_rsm=False, seed=1)
        assert report.config["folds"] == 4
        assert report.config["rsm"] is False
        assert report.config["K"] == 1

    def test_too_many_folds(self, small_dataset) -> None:
        with pytest.raises(ContractError, match="exceeds the number of sequences"):
            kfold_cv(small_dataset, "CF", folds=17)

    def test_single_sequence_subject_is_reported(self, caplog) -> None:
        dataset = clean_dataset(3, 2, 40, seed=8)
        trimmed = Dataset(dataset.sequences[:-1])
        with caplog.at_level(logging.WARNING, logger="evaluation"):
            report = kfold_cv(trimmed, "AF", folds=5, use_rsm=False)
        assert "fewer than 2 usable sequences: S003" in caplog.text
        orphan = next(p for p in report.probes if p.subject_id == "S003")
        assert orphan.true_rank == 0
        assert not orphan.correct


def test_constant_sequences_under_std_block() -> None:
    sequences = tuple(
        static_sequence(random_pose(seed), 2, subject, seq)
        for seed, (subject, seq) in enumerate(
            [("S1", "a"), ("S1", "b"), ("S2", "a"), ("S2", "b"), ("S3", "a"), ("S3", "b")],
        )
    )
    reports = ablate_rdf_subsets(Dataset(sequences), PLAIN, folds=6, use_rsm=False)
    assert list(reports) == [FeatureKind.MEAN, FeatureKind.STD, FeatureKind.RDF]
    # All STD vectors are zero, so every probe matches the first remaining row.
    std = reports[FeatureKind.STD]
    assert std.pooled_accuracy == pytest.approx(1 / 3)
    assert std.accuracy == pytest.approx(1 / 3)
    assert {p.predicted_label for p in std.probes if p.subject_id != "S1"} == {"S1"}


class TestKSweep:
    def test_curve(self, small_dataset) -> None:
        points = k_sweep(small_dataset, "CF", [1, 2, 3], seed=4, folds=4, use_rsm=False)
        assert [p.K for p in points] == [1, 2, 3]
        assert points[0].accuracy == 1.0
        assert all(p.report.config["K"] == p.K for p in points)
        assert {p.report.probes[0].fold for p in points} == {points[0].report.probes[0].fold}

    def test_k_larger_than_gallery(self, small_dataset) -> None:
        with pytest.raises(ContractError, match="smallest fold gallery"):
            k_sweep(small_dataset, "CF", [1, 13], folds=4)


class TestGallerySweep:
    def test_full_draw_is_leave_one_out(self, small_dataset) -> None:
        sweep = gallery_sweep(small_dataset, "RDF", [4], 1, PLAIN, use_rsm=False)
        loo = kfold_cv(small_dataset, "RDF", 16, PLAIN, use_rsm=False)
        (record,) = sweep.records
        assert record.mean_accuracy == pytest.approx(loo.pooled_accuracy)
        assert record.std_accuracy == 0.0
        assert record.accuracies == (record.mean_accuracy,)

    def test_repetitions_and_determinism(self, small_dataset) -> None:
        a = gallery_sweep(small_dataset, "AF", [2, 3], 3, PLAIN, seed=5, use_rsm=False)
        b = gallery_sweep(small_dataset, "AF", [2, 3], 3, PLAIN, seed=5, use_rsm=False)
        assert a.records == b.records
        assert [r.size for r in a.records] == [2, 3]
        assert all(len(r.accuracies) == 3 for r in a.records)
        assert len(a.probes) == 3 * 8 + 3 * 12
        draw = {p.subject_id for p in a.probes if p.group == "P=2,rep=0"}
        assert len(draw) == 2

    @pytest.mark.parametrize(("sizes", "repetitions"), [([0], 1), ([5], 1), ([2], 0)])
    def test_invalid_arguments(self, small_dataset, sizes, repetitions) -> None:
        with pytest.raises(ContractError):
            gallery_sweep(small_dataset, "AF", sizes, repetitions)

    @pytest.mark.slow
    def test_accuracy_does_not_rise_with_gallery_size(self) -> None:
        sizes = (2, 8, 30)
        totals = np.zeros(len(sizes))
        for seed in range(3):
            dataset = generate_dataset(30, 4, 100, NoiseConfig(coord_std=0.05), seed)
            sweep = gallery_sweep(dataset, "CF", sizes, 10, PLAIN, seed=seed, use_rsm=False)
            totals += [r.mean_accuracy for r in sweep.records]
        means = totals / 3
        # slack for the random subject draws
        assert means[0] >= means[1] - 0.01
        assert means[1] >= means[2] - 0.01


class TestCmc:
    @pytest.mark.parametrize("use_rsm", [False, True])
    def test_curve_is_monotone_and_complete(self, small_dataset, use_rsm) -> None:
        report = cmc(small_dataset, "RDF", max_rank=4, use_rsm=use_rsm)
        curve = report.cmc
        assert len(curve) == 4
        assert all(a <= b for a, b in zip(curve, curve[1:], strict=False))
        assert curve[-1] == 1.0

    def test_rank_one_is_knn_accuracy(self, small_dataset) -> None:
        report = cmc(small_dataset, "MEAN", max_rank=2, config=PLAIN, use_rsm=False)
        assert report.cmc[0] == pytest.approx(report.pooled_accuracy)
        assert report.config["folds"] == 16

    def test_seeded_folds(self, small_dataset) -> None:
        report = cmc(small_dataset, "CF", max_rank=3, folds=4, seed=2, use_rsm=False)
        assert report.config["folds"] == 4
        assert len(report.fold_accuracies) == 4

    @pytest.mark.parametrize("max_rank", [0, 5])
    def test_max_rank_range(self, small_dataset, max_rank) -> None:
        with pytest.raises(ContractError, match="max_rank"):
            cmc(small_dataset, "CF", max_rank=max_rank)


def test_compare_rsm_shares_folds(small_dataset) -> None:
    comparisons = compare_rsm(small_dataset, ["AF", FeatureKind.RDF], folds=4, seed=3)
    assert [c.feature_set for c in comparisons] == [FeatureKind.AF, FeatureKind.RDF]
    for c in comparisons:
        assert c.improvement == pytest.approx(c.with_rsm.accuracy - c.without_rsm.accuracy)
        assert [p.fold for p in c.with_rsm.probes] == [p.fold for p in c.without_rsm.probes]
        assert c.without_rsm.config["rsm"] is False


class TestCsv:
    def test_cv_csv(self, small_dataset) -> None:
        report = kfold_cv(small_dataset, "CF", folds=4, use_rsm=False, seed=1)
        buf = io.StringIO()
        write_cv_csv([report], buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "feature_set,fold,probes,correct,accuracy"
        assert lines[1:5] == [f"CF,{f},4,4,1" for f in range(4)]
        assert lines[5:] == ["CF,all,16,16,1", "CF,pooled,16,16,1"]

    def test_ksweep_and_cmc_csv(self, small_dataset) -> None:
        points = k_sweep(small_dataset, "AF", [1], folds=4, use_rsm=False)
        buf = io.StringIO()
        write_ksweep_csv({FeatureKind.AF: points}, buf)
        assert buf.getvalue() == "feature_set,K,accuracy\nAF,1,1\n"

        buf = io.StringIO()
        write_cmc_csv([cmc(small_dataset, "AF", max_rank=2, use_rsm=False)], buf)
        assert buf.getvalue().splitlines() == ["feature_set,rank,accuracy", "AF,1,1", "AF,2,1"]

    def test_gallery_csv(self, small_dataset) -> None:
        sweep = gallery_sweep(small_dataset, "AF", [2], 2, PLAIN, use_rsm=False)
        buf = io.StringIO()
        write_gallery_csv([sweep], buf)
        assert buf.getvalue().splitlines() == [
            "feature_set,size,repetitions,mean_accuracy,std_accuracy",
            "AF,2,2,1,0",
        ]

    def test_rsm_csv(self, small_dataset) -> None:
        buf = io.StringIO()
        write_rsm_csv(compare_rsm(small_dataset, ["AF"], folds=4), buf)
        assert buf.getvalue().splitlines() == [
            "feature_set,accuracy_without_rsm,accuracy_with_rsm,improvement",
            "AF,1,1,0",
        ]

    def test_probes_csv(self) -> None:
        record = ProbeRecord("cv", "CF", "", 2, "S1", "a", "S2", 3)
        buf = io.StringIO()
        write_probes_csv([record], buf)
        assert buf.getvalue().splitlines() == [
            "experiment,feature_set,group,fold,subject_id,sequence_id,"
            "predicted_label,true_rank,correct",
            "cv,CF,,2,S1,a,S2,3,0",
        ]

"""evaluation.py - Identification experiments and their CSV results.

Protocols:

* :func:`kfold_cv` - sequences are split at random into ``folds`` groups;
  each group in turn is the probe set and the rest the gallery.  The
  reported accuracy is the mean of the per-fold accuracies.
* :func:`k_sweep` - :func:`kfold_cv` for every K on one shared fold plan.
* :func:`gallery_sweep` - for each gallery size P, ``repetitions`` random
  draws of P subjects, leave-one-sequence-out inside each draw.
* :func:`cmc` - cumulative match curve, leave-one-sequence-out by default.
* :func:`ablate_rdf_subsets` - MEAN, STD and the full RDF side by side.
* :func:`compare_rsm` - the same folds with and without the ensemble.

Every experiment keeps a per-probe log (:class:`ProbeRecord`) from which
all of its aggregates can be recomputed.  Randomness comes only from the
``seed`` argument (fold plans, subject draws) and ``config.seed``
(subspaces), so results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from types import MappingProxyType
from typing import TYPE_CHECKING, Any, NamedTuple, TypeVar

import numpy as np

from _common import ContractError, FeatureKind, derive_seed, format_number
from ensemble import EnsembleConfig, identify
from features import FeatureTable, build_feature_table

if TYPE_CHECKING:
    from typing import TextIO

    from skeleton import Dataset

logger = logging.getLogger(__name__)

__all__ = [
    "EvalReport",
    "FoldPlan",
    "GallerySizeRecord",
    "GallerySweepReport",
    "KSweepPoint",
    "ProbeRecord",
    "RsmComparison",
    "ablate_rdf_subsets",
    "cmc",
    "compare_rsm",
    "gallery_sweep",
    "k_sweep",
    "kfold_cv",
    "make_fold_plan",
    "write_cmc_csv",
    "write_cv_csv",
    "write_gallery_csv",
    "write_ksweep_csv",
    "write_probes_csv",
    "write_rsm_csv",
]

# Stream tags keep fold and subject draws independent of the subspace seeds,
# which use ``derive_seed(seed, i)`` for small classifier indices i.
_FOLD_STREAM = 0x5EED_F01D
_GALLERY_STREAM = 0x5EED_6A11

_T = TypeVar("_T")
_R = TypeVar("_R")


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    """Sequence-level fold assignment (0-based fold indices)."""

    folds: int
    seed: int
    assignment: Mapping[tuple[str, str], int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignment", MappingProxyType(dict(self.assignment)))

    def fold_of(self, key: tuple[str, str]) -> int:
        return self.assignment[key]

    def members(self, fold: int) -> tuple[tuple[str, str], ...]:
        return tuple(k for k, f in self.assignment.items() if f == fold)

    @property
    def sizes(self) -> tuple[int, ...]:
        counts = Counter(self.assignment.values())
        return tuple(counts.get(f, 0) for f in range(self.folds))


class ProbeRecord(NamedTuple):
    """One classified probe.

    ``true_rank`` is the 1-based rank of the probe's own class in the
    candidate ranking, or 0 when the gallery holds no entry of that class.
    """

    experiment: str
    feature_set: str
    group: str
    fold: int
    subject_id: str
    sequence_id: str
    predicted_label: str
    true_rank: int

    @property
    def correct(self) -> bool:
        return self.predicted_label == self.subject_id


@dataclass(frozen=True)
class EvalReport:
    """Result of one cross-validation or CMC run.

    Attributes:
        feature_set: Feature set evaluated.
        accuracy: Mean of the per-fold accuracies.
        pooled_accuracy: Correct probes over all probes.
        fold_accuracies: Accuracy of each fold, in fold order.
        config: Echo of the classifier settings and protocol parameters.
        probes: Per-probe log.
        cmc: Rank-1..max_rank identification rates, when requested.

    """

    feature_set: FeatureKind
    accuracy: float
    pooled_accuracy: float
    fold_accuracies: tuple[float, ...]
    config: Mapping[str, Any]
    probes: tuple[ProbeRecord, ...] = ()
    cmc: tuple[float, ...] | None = None

    @property
    def total(self) -> int:
        return len(self.probes)

    @property
    def correct(self) -> int:
        return sum(p.correct for p in self.probes)


class KSweepPoint(NamedTuple):
    K: int
    accuracy: float
    report: EvalReport


class GallerySizeRecord(NamedTuple):
    size: int
    mean_accuracy: float
    std_accuracy: float
    repetitions: int
    accuracies: tuple[float, ...]


@dataclass(frozen=True)
class GallerySweepReport:
    feature_set: FeatureKind
    records: tuple[GallerySizeRecord, ...]
    config: Mapping[str, Any]
    probes: tuple[ProbeRecord, ...] = field(default=(), repr=False)


class RsmComparison(NamedTuple):
    """Accuracy of one feature set without and with the ensemble."""

    feature_set: FeatureKind
    without_rsm: EvalReport
    with_rsm: EvalReport

    @property
    def improvement(self) -> float:
        return self.with_rsm.accuracy - self.without_rsm.accuracy


# ---------------------------------------------------------------------------
# Fold plans
# ---------------------------------------------------------------------------


def make_fold_plan(keys: Sequence[tuple[str, str]], folds: int, seed: int) -> FoldPlan:
    """Assign every key to one of *folds* folds.

    The keys are shuffled with a generator seeded from *seed*; position p of
    the shuffle goes to fold ``p % folds``, so fold sizes differ by at most
    one.

    Raises:
        ContractError: *folds* is not in ``[1, len(keys)]``.

    """
    if folds < 1:
        msg = f"folds must be positive, got {folds}"
        raise ContractError(msg)
    if folds > len(keys):
        msg = f"folds={folds} exceeds the number of sequences ({len(keys)})"
        raise ContractError(msg)
    rng = np.random.default_rng(derive_seed(seed, _FOLD_STREAM))
    order = rng.permutation(len(keys))
    assignment = {keys[int(i)]: p % folds for p, i in enumerate(order)}
    return FoldPlan(folds, seed, assignment)


# ---------------------------------------------------------------------------
# Shared machinery
# ---------------------------------------------------------------------------


def _pmap(fn: Callable[[_T], _R], items: Sequence[_T], workers: int) -> list[_R]:
    """Ordered map, on a thread pool when *workers* > 1."""
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _true_rank(ranking: Iterable[Any], label: str) -> int:
    for position, candidate in enumerate(ranking, start=1):
        if candidate.label == label:
            return position
    return 0


def _classify(
    table: FeatureTable,
    fold_of: np.ndarray,
    config: EnsembleConfig,
    *,
    use_rsm: bool,
    experiment: str,
    group: str = "",
    workers: int = 1,
) -> list[ProbeRecord]:
    """Classify every row with ``fold_of >= 0`` against the other folds.

    Rows with a negative fold take part in neither role.
    """
    rows = [int(r) for r in np.flatnonzero(fold_of >= 0)]
    labels = table.labels

    def _one(row: int) -> ProbeRecord:
        fold = int(fold_of[row])
        gallery_rows = np.flatnonzero((fold_of >= 0) & (fold_of != fold))
        if gallery_rows.size == 0:
            msg = f"fold {fold} leaves an empty gallery"
            raise ContractError(msg)
        result = identify(
            table.vector(row),
            table.gallery(gallery_rows),
            config,
            use_rsm=use_rsm,
        )
        subject_id, sequence_id = table.keys[row]
        return ProbeRecord(
            experiment,
            table.kind.value,
            group,
            fold,
            subject_id,
            sequence_id,
            result.label,
            _true_rank(result.ranking, labels[row]),
        )

    records = _pmap(_one, rows, workers)
    orphans = sum(1 for r in records if r.true_rank == 0)
    if orphans:
        logger.warning(
            "%d probe(s) in %s %s have no same-subject entry in their gallery",
            orphans,
            experiment,
            group or table.kind.value,
        )
    return records


def _accuracies(records: Sequence[ProbeRecord]) -> tuple[tuple[float, ...], float, float]:
    """Per-fold accuracies, their mean and the pooled accuracy."""
    by_fold: dict[int, list[bool]] = {}
    for r in records:
        by_fold.setdefault(r.fold, []).append(r.correct)
    per_fold = tuple(float(np.mean(by_fold[f])) for f in sorted(by_fold))
    mean = float(np.mean(per_fold)) if per_fold else 0.0
    pooled = sum(r.correct for r in records) / len(records) if records else 0.0
    return per_fold, mean, pooled


def _config_echo(config: EnsembleConfig, *, use_rsm: bool, **extra: Any) -> dict[str, Any]:
    echo: dict[str, Any] = {**asdict(config), "rsm": use_rsm}
    echo.update(extra)
    return echo


def _check_subject_coverage(table: FeatureTable) -> None:
    single = sorted(s for s, n in Counter(table.labels).items() if n < 2)  # noqa: PLR2004
    if single:
        logger.warning(
            "%d subject(s) have fewer than 2 usable sequences: %s",
            len(single),
            ", ".join(single[:10]),
        )


def _plan_array(table: FeatureTable, plan: FoldPlan) -> np.ndarray:
    return np.array([plan.fold_of(k) for k in table.keys], dtype=np.int64)


def _report(
    table: FeatureTable,
    records: list[ProbeRecord],
    config: dict[str, Any],
    cmc_values: tuple[float, ...] | None = None,
) -> EvalReport:
    per_fold, mean, pooled = _accuracies(records)
    return EvalReport(
        table.kind,
        mean,
        pooled,
        per_fold,
        MappingProxyType(config),
        tuple(records),
        cmc_values,
    )


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------


def _cv_on_table(
    table: FeatureTable,
    plan: FoldPlan,
    config: EnsembleConfig,
    *,
    use_rsm: bool,
    experiment: str,
    group: str = "",
    workers: int = 1,
) -> EvalReport:
    records = _classify(
        table,
        _plan_array(table, plan),
        config,
        use_rsm=use_rsm,
        experiment=experiment,
        group=group,
        workers=workers,
    )
    report = _report(
        table,
        records,
        _config_echo(config, use_rsm=use_rsm, folds=plan.folds, plan_seed=plan.seed),
    )
    logger.debug(
        "%s %s%s fold accuracies: %s",
        experiment,
        table.kind.value,
        f" {group}" if group else "",
        ", ".join(format_number(a) for a in report.fold_accuracies),
    )
    return report


def _table_and_plan(
    dataset: Dataset,
    feature_set: FeatureKind | str,
    folds: int,
    seed: int,
    workers: int,
) -> tuple[FeatureTable, FoldPlan]:
    if folds > len(dataset):
        msg = f"folds={folds} exceeds the number of sequences ({len(dataset)})"
        raise ContractError(msg)
    table = build_feature_table(dataset, feature_set, workers=workers)
    _check_subject_coverage(table)
    return table, make_fold_plan(table.keys, folds, seed)


def kfold_cv(
    dataset: Dataset,
    feature_set: FeatureKind | str,
    folds: int = 10,
    classifier_config: EnsembleConfig | None = None,
    use_rsm: bool = True,  # noqa: FBT001, FBT002
    seed: int = 0,
    *,
    workers: int = 1,
) -> EvalReport:
    """Run *folds*-fold cross-validation at sequence level.

    Args:
        dataset: Labelled sequences.
        feature_set: Feature set to extract.
        folds: Number of folds; ``len(dataset)`` gives leave-one-out.
        classifier_config: KNN / ensemble settings.
        use_rsm: Use the random subspace ensemble, or plain KNN.
        seed: Seed of the fold plan.
        workers: Threads used for extraction and classification.

    Returns:
        The report; ``accuracy`` is the mean of the fold accuracies.

    Raises:
        ContractError: *folds* exceeds the sequence count, or the classifier
            settings do not fit a fold's gallery.

    """
    config = classifier_config or EnsembleConfig()
    table, plan = _table_and_plan(dataset, feature_set, folds, seed, workers)
    report = _cv_on_table(
        table,
        plan,
        config,
        use_rsm=use_rsm,
        experiment="cv",
        workers=workers,
    )
    logger.info(
        "%d-fold CV %s (rsm=%s): accuracy %s over %d probes",
        folds,
        table.kind.value,
        use_rsm,
        format_number(report.accuracy),
        report.total,
    )
    return report


def k_sweep(
    dataset: Dataset,
    feature_set: FeatureKind | str,
    k_values: Iterable[int],
    config: EnsembleConfig | None = None,
    seed: int = 0,
    *,
    folds: int = 10,
    use_rsm: bool = True,
    workers: int = 1,
) -> list[KSweepPoint]:
    """Cross-validated accuracy for every K in *k_values*, one shared fold plan.

    Raises:
        ContractError: The largest K exceeds the smallest fold gallery.

    """
    base = config or EnsembleConfig()
    ks = list(k_values)
    table, plan = _table_and_plan(dataset, feature_set, folds, seed, workers)
    smallest_gallery = len(table) - max(plan.sizes)
    if ks and max(ks) > smallest_gallery:
        msg = f"K={max(ks)} exceeds the smallest fold gallery ({smallest_gallery})"
        raise ContractError(msg)
    points = []
    for k in ks:
        report = _cv_on_table(
            table,
            plan,
            EnsembleConfig(L=base.L, N=base.N, K=k, seed=base.seed),
            use_rsm=use_rsm,
            experiment="ksweep",
            group=f"K={k}",
            workers=workers,
        )
        points.append(KSweepPoint(k, report.accuracy, report))
    if points:
        best = max(points, key=lambda p: p.accuracy)
        logger.info(
            "K sweep %s: best accuracy %s at K=%d",
            table.kind.value,
            format_number(best.accuracy),
            best.K,
        )
    return points


def gallery_sweep(
    dataset: Dataset,
    feature_set: FeatureKind | str,
    sizes: Iterable[int],
    repetitions: int = 10,
    config: EnsembleConfig | None = None,
    seed: int = 0,
    *,
    use_rsm: bool = True,
    workers: int = 1,
) -> GallerySweepReport:
    """Accuracy as a function of the number of enrolled subjects.

    For each size P and repetition r, P subjects are drawn without
    replacement (seeded by ``(seed, P, r)``) and every sequence of those
    subjects is classified against the others (leave-one-sequence-out).

    Raises:
        ContractError: A size is not in ``[1, subject count]`` or
            *repetitions* is not positive.

    """
    config = config or EnsembleConfig()
    if repetitions < 1:
        msg = f"repetitions must be positive, got {repetitions}"
        raise ContractError(msg)
    size_list = list(sizes)
    table = build_feature_table(dataset, feature_set, workers=workers)
    subjects = sorted(set(table.labels))
    for size in size_list:
        if not 1 <= size <= len(subjects):
            msg = f"gallery size {size} not in [1, {len(subjects)}]"
            raise ContractError(msg)

    records: list[GallerySizeRecord] = []
    probes: list[ProbeRecord] = []
    for size in size_list:
        accuracies = []
        for rep in range(repetitions):
            rng = np.random.default_rng(derive_seed(seed, _GALLERY_STREAM, size, rep))
            chosen = [subjects[int(i)] for i in rng.choice(len(subjects), size, replace=False)]
            drawn = table.restrict(chosen)
            # one fold per sequence: leave-one-sequence-out within the draw
            rep_records = _classify(
                drawn,
                np.arange(len(drawn)),
                config,
                use_rsm=use_rsm,
                experiment="gallery",
                group=f"P={size},rep={rep}",
                workers=workers,
            )
            probes.extend(rep_records)
            accuracies.append(sum(r.correct for r in rep_records) / len(rep_records))
        record = GallerySizeRecord(
            size,
            float(np.mean(accuracies)),
            float(np.std(accuracies)),
            repetitions,
            tuple(accuracies),
        )
        logger.debug(
            "Gallery size %d: mean %s std %s",
            size,
            format_number(record.mean_accuracy),
            format_number(record.std_accuracy),
        )
        records.append(record)
    return GallerySweepReport(
        table.kind,
        tuple(records),
        MappingProxyType(_config_echo(config, use_rsm=use_rsm, sweep_seed=seed)),
        tuple(probes),
    )


def cmc(
    dataset: Dataset,
    feature_set: FeatureKind | str,
    max_rank: int = 10,
    config: EnsembleConfig | None = None,
    seed: int = 0,
    *,
    use_rsm: bool = True,
    folds: int | None = None,
    workers: int = 1,
) -> EvalReport:
    """Cumulative match curve up to *max_rank*.

    Each probe's candidate classes are ranked (by nearest-entry distance, or
    by ensemble votes with ``use_rsm``); the rank-r rate is the fraction of
    probes whose own class is among the first r.  The default protocol is
    leave-one-sequence-out; pass *folds* to use a seeded k-fold plan.

    Returns:
        An :class:`EvalReport` whose ``cmc`` holds *max_rank* values.

    Raises:
        ContractError: *max_rank* is not in ``[1, number of subjects]``.

    """
    config = config or EnsembleConfig()
    table = build_feature_table(dataset, feature_set, workers=workers)
    n_classes = len(set(table.labels))
    if not 1 <= max_rank <= n_classes:
        msg = f"max_rank={max_rank} not in [1, {n_classes}]"
        raise ContractError(msg)
    _check_subject_coverage(table)
    if folds is None:
        fold_of = np.arange(len(table), dtype=np.int64)
        n_folds = len(table)
    else:
        fold_of = _plan_array(table, make_fold_plan(table.keys, folds, seed))
        n_folds = folds
    records = _classify(
        table,
        fold_of,
        config,
        use_rsm=use_rsm,
        experiment="cmc",
        workers=workers,
    )
    ranks = np.array([r.true_rank for r in records])
    found = ranks > 0
    curve = tuple(
        float(np.mean(found & (ranks <= r))) for r in range(1, max_rank + 1)
    )
    logger.info(
        "CMC %s: rank-1 %s, rank-%d %s",
        table.kind.value,
        format_number(curve[0]),
        max_rank,
        format_number(curve[-1]),
    )
    return _report(
        table,
        records,
        _config_echo(config, use_rsm=use_rsm, folds=n_folds, max_rank=max_rank),
        curve,
    )


def ablate_rdf_subsets(
    dataset: Dataset,
    config: EnsembleConfig | None = None,
    seed: int = 0,
    *,
    folds: int = 10,
    use_rsm: bool = True,
    workers: int = 1,
) -> dict[FeatureKind, EvalReport]:
    """Cross-validate the MEAN block, the STD block and the full RDF."""
    return {
        kind: kfold_cv(dataset, kind, folds, config, use_rsm, seed, workers=workers)
        for kind in (FeatureKind.MEAN, FeatureKind.STD, FeatureKind.RDF)
    }


def compare_rsm(
    dataset: Dataset,
    feature_sets: Iterable[FeatureKind | str],
    folds: int = 10,
    config: EnsembleConfig | None = None,
    seed: int = 0,
    *,
    workers: int = 1,
) -> list[RsmComparison]:
    """Cross-validate each feature set with plain KNN and with the ensemble.

    Both runs of a feature set share one fold plan.
    """
    config = config or EnsembleConfig()
    comparisons = []
    for kind in feature_sets:
        table, plan = _table_and_plan(dataset, kind, folds, seed, workers)
        without, with_ = (
            _cv_on_table(
                table,
                plan,
                config,
                use_rsm=flag,
                experiment="rsm",
                group=f"rsm={'on' if flag else 'off'}",
                workers=workers,
            )
            for flag in (False, True)
        )
        comparison = RsmComparison(table.kind, without, with_)
        logger.info(
            "%s: %s without RSM, %s with RSM (%+.4f)",
            table.kind.value,
            format_number(without.accuracy),
            format_number(with_.accuracy),
            comparison.improvement,
        )
        comparisons.append(comparison)
    return comparisons


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------


def _writer(stream: TextIO) -> Any:
    return csv.writer(stream, lineterminator="\n")


def write_cv_csv(reports: Iterable[EvalReport], stream: TextIO) -> None:
    """Write ``feature_set,fold,probes,correct,accuracy``.

    Each report contributes one row per fold, an ``all`` row holding the
    mean of the fold accuracies and a ``pooled`` row holding correct/total.
    """
    w = _writer(stream)
    w.writerow(["feature_set", "fold", "probes", "correct", "accuracy"])
    for report in reports:
        by_fold: dict[int, list[ProbeRecord]] = {}
        for p in report.probes:
            by_fold.setdefault(p.fold, []).append(p)
        for fold in sorted(by_fold):
            members = by_fold[fold]
            correct = sum(p.correct for p in members)
            w.writerow(
                [
                    report.feature_set.value,
                    fold,
                    len(members),
                    correct,
                    format_number(correct / len(members)),
                ],
            )
        for name, value in (("all", report.accuracy), ("pooled", report.pooled_accuracy)):
            w.writerow(
                [report.feature_set.value, name, report.total, report.correct, format_number(value)],
            )


def write_ksweep_csv(
    curves: Mapping[FeatureKind, Sequence[KSweepPoint]],
    stream: TextIO,
) -> None:
    w = _writer(stream)
    w.writerow(["feature_set", "K", "accuracy"])
    for kind, points in curves.items():
        for point in points:
            w.writerow([FeatureKind(kind).value, point.K, format_number(point.accuracy)])


def write_gallery_csv(reports: Iterable[GallerySweepReport], stream: TextIO) -> None:
    w = _writer(stream)
    w.writerow(["feature_set", "size", "repetitions", "mean_accuracy", "std_accuracy"])
    for report in reports:
        for r in report.records:
            w.writerow(
                [
                    report.feature_set.value,
                    r.size,
                    r.repetitions,
                    format_number(r.mean_accuracy),
                    format_number(r.std_accuracy),
                ],
            )


def write_cmc_csv(reports: Iterable[EvalReport], stream: TextIO) -> None:
    w = _writer(stream)
    w.writerow(["feature_set", "rank", "accuracy"])
    for report in reports:
        for rank, value in enumerate(report.cmc or (), start=1):
            w.writerow([report.feature_set.value, rank, format_number(value)])


def write_rsm_csv(comparisons: Iterable[RsmComparison], stream: TextIO) -> None:
    w = _writer(stream)
    w.writerow(["feature_set", "accuracy_without_rsm", "accuracy_with_rsm", "improvement"])
    for c in comparisons:
        w.writerow(
            [
                c.feature_set.value,
                format_number(c.without_rsm.accuracy),
                format_number(c.with_rsm.accuracy),
                format_number(c.improvement),
            ],
        )


def write_probes_csv(records: Iterable[ProbeRecord], stream: TextIO) -> None:
    """Write the per-probe log, one row per classified probe."""
    w = _writer(stream)
    w.writerow([*ProbeRecord._fields, "correct"])
    for r in records:
        w.writerow([*r, int(r.correct)])

"""Evaluation losses and the split/repeat experiment protocol.

The protocol per repeat: draw a disjoint train/test split, z-score with
train-fold statistics, build constraints on each fold with its own sigma, fit
every learner on the train fold, and score each learned metric on the test fold
with the triplet-violation loss and the two kNN losses. Repeats share splits
across learners (paired comparison) and aggregate to mean and sample standard
deviation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constraints import build_pairs, build_triplets, subsample_triplets
from .core import (
    LOSS_KNN_L1,
    LOSS_KNN_L2,
    LOSS_NAMES,
    LOSS_TRIPLET,
    CellStats,
    EvalReport,
    ExperimentConfig,
    LabeledDataset,
    MahalanobisMetric,
    PairSets,
    TripletSet,
    subseed,
)
from .errors import ConfigurationError, EvaluationError, FairmetricError
from .ingest import standardize
from .numerics import quad_forms
from .learners import (
    MMCOptions,
    OptimizerOptions,
    OptimizerTrace,
    euclidean_baseline,
    fit_lmnn,
    fit_lsml,
    fit_mmc,
    precision_baseline,
)

ZERO_NEIGHBOR_DISTANCE = 1e-12


def _pair_distances(metric: MahalanobisMetric, x: np.ndarray, rows_a, rows_b) -> np.ndarray:
    diff = x[rows_a] - x[rows_b]
    return np.sqrt(np.maximum(quad_forms(diff, metric.matrix), 0.0))


def triplet_violation_loss(
    metric: MahalanobisMetric, test: LabeledDataset, triplets: TripletSet
) -> float:
    """Fraction of triplets with d_M(a,b) strictly greater than d_M(a,c)."""
    if len(triplets) == 0:
        raise EvaluationError("cannot score an empty triplet set")
    idx = triplets.indices
    if idx.max() >= test.n:
        raise ConfigurationError("triplet indices exceed test set size")
    d_ab = _pair_distances(metric, test.features, idx[:, 0], idx[:, 1])
    d_ac = _pair_distances(metric, test.features, idx[:, 0], idx[:, 2])
    return float(np.mean(d_ab > d_ac))


def knn_predict(metric: MahalanobisMetric, train: LabeledDataset, x, k: int) -> float:
    """Inverse-distance weighted rating of the k nearest training points.

    Ties at the k-boundary break toward the lower training index; neighbors at
    (numerically) zero distance short-circuit to the plain mean of their labels.
    """
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    if k > train.n:
        raise ConfigurationError(f"k={k} exceeds training size {train.n}")
    xa = np.asarray(x, dtype=float).ravel()
    if xa.shape[0] != train.d:
        raise ConfigurationError(f"query has dimension {xa.shape[0]}, train has {train.d}")
    diff = train.features - xa
    dists = np.sqrt(np.maximum(quad_forms(diff, metric.matrix), 0.0))
    nearest = np.argsort(dists, kind="stable")[:k]
    labels = train.labels[nearest].astype(float)
    near_d = dists[nearest]
    exact = near_d < ZERO_NEIGHBOR_DISTANCE
    if np.any(exact):
        return float(labels[exact].mean())
    inv = 1.0 / near_d
    return float((inv / inv.sum()) @ labels)


def knn_l1(metric: MahalanobisMetric, train: LabeledDataset, test: LabeledDataset, k: int) -> float:
    """Mean absolute gap between the weighted-neighbor rating and the true rating."""
    preds = [knn_predict(metric, train, row, k) for row in test.features]
    return float(np.mean(np.abs(np.asarray(preds) - test.labels)))


def knn_l2(metric: MahalanobisMetric, train: LabeledDataset, test: LabeledDataset, k: int) -> float:
    """Mean squared gap between the weighted-neighbor rating and the true rating."""
    preds = [knn_predict(metric, train, row, k) for row in test.features]
    return float(np.mean(np.square(np.asarray(preds) - test.labels)))


# ---------------------------------------------------------------------------
# Experiment runner


@dataclass(frozen=True)
class RepeatData:
    """One repeat's folds and constraint sets (features already standardized)."""

    repeat: int
    train: LabeledDataset
    test: LabeledDataset
    train_pairs: PairSets
    train_triplets: TripletSet
    test_triplets: TripletSet | None


@dataclass
class RepeatOutcome:
    repeat: int
    losses: dict[str, dict[str, float]] = field(default_factory=dict)
    metrics: dict[str, MahalanobisMetric] = field(default_factory=dict)
    traces: dict[str, OptimizerTrace | None] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)


@dataclass
class ExperimentResult:
    report: EvalReport
    outcomes: list[RepeatOutcome]


def split_indices(n: int, config: ExperimentConfig, repeat: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint train/test row indices for one repeat, derived from the root seed."""
    if config.train_size + config.test_size > n:
        raise ConfigurationError(
            f"train+test = {config.train_size + config.test_size} exceeds n = {n}"
        )
    rng = subseed(config.rng_seed, repeat, 0)
    chosen = rng.choice(n, size=config.train_size + config.test_size, replace=False)
    return chosen[: config.train_size], chosen[config.train_size :]


def prepare_repeat(dataset: LabeledDataset, config: ExperimentConfig, repeat: int) -> RepeatData:
    sigma = config.sigma_train
    train_idx, test_idx = split_indices(dataset.n, config, repeat)
    train, stats = standardize(dataset.subset(train_idx))
    test, _ = standardize(dataset.subset(test_idx), stats)
    full = build_triplets(train, sigma, config.triplet_variant)
    sub = subsample_triplets(full, config.triplet_subsample, subseed(config.rng_seed, repeat, 1))
    try:
        test_triplets = build_triplets(test, config.sigma_test, config.triplet_variant)
    except ConfigurationError:
        test_triplets = None
    if test_triplets is not None and len(test_triplets) == 0:
        test_triplets = None
    return RepeatData(
        repeat=repeat,
        train=train,
        test=test,
        train_pairs=build_pairs(train),
        train_triplets=sub,
        test_triplets=test_triplets,
    )


def _learner_entry(name: str, config: ExperimentConfig):
    if name == "euclidean":
        return lambda data: (euclidean_baseline(data.train.d), None)
    if name == "precision":
        return lambda data: (precision_baseline(data.train), None)
    if name == "lmnn":
        opts = OptimizerOptions(max_iter=config.lmnn_max_iter, tol=config.lmnn_tol)
        return lambda data: fit_lmnn(data.train, config.lmnn_k_targets, config.lmnn_mu, opts)
    if name == "mmc":
        opts = MMCOptions(max_iter=config.mmc_max_iter, tol=config.mmc_tol)
        return lambda data: fit_mmc(data.train, data.train_pairs, config.mmc_form, opts)
    if name == "lsml":
        opts = OptimizerOptions(max_iter=config.lsml_max_iter, tol=config.lsml_tol)
        return lambda data: fit_lsml(data.train, data.train_triplets, config.alpha, opts)
    raise ConfigurationError(f"unknown learner {name!r}")


DEFAULT_MENU = ("euclidean", "precision", "lmnn", "mmc", "lsml")


def build_learner_menu(names, config: ExperimentConfig):
    return {name: _learner_entry(name, config) for name in names}


def score_metric(
    metric: MahalanobisMetric, data: RepeatData, k: int
) -> dict[str, float]:
    losses: dict[str, float] = {}
    if data.test_triplets is not None:
        losses[LOSS_TRIPLET] = triplet_violation_loss(metric, data.test, data.test_triplets)
    losses[LOSS_KNN_L1] = knn_l1(metric, data.train, data.test, k)
    losses[LOSS_KNN_L2] = knn_l2(metric, data.train, data.test, k)
    return losses


def _run_one_repeat(dataset, config, menu, repeat) -> RepeatOutcome:
    data = prepare_repeat(dataset, config, repeat)
    outcome = RepeatOutcome(repeat=repeat)
    for name, fit in menu.items():
        try:
            fitted = fit(data)
            metric, trace = fitted if isinstance(fitted, tuple) else (fitted, None)
            outcome.metrics[name] = metric
            outcome.traces[name] = trace
            outcome.losses[name] = score_metric(metric, data, config.k_neighbors)
        except FairmetricError as exc:
            outcome.failures[name] = str(exc)
    return outcome


def aggregate_cells(
    outcomes: list[RepeatOutcome], metric_names, loss_names=LOSS_NAMES
) -> dict[tuple[str, str], CellStats]:
    cells: dict[tuple[str, str], CellStats] = {}
    for metric in metric_names:
        for loss in loss_names:
            values = [
                o.losses[metric][loss]
                for o in outcomes
                if metric in o.losses and loss in o.losses[metric]
            ]
            if not values:
                continue
            arr = np.asarray(values, dtype=float)
            std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
            cells[(metric, loss)] = CellStats(float(arr.mean()), std, arr.size)
    return cells


def run_experiment_detailed(
    config: ExperimentConfig,
    dataset: LabeledDataset,
    learner_menu=None,
    threads: int = 1,
) -> ExperimentResult:
    menu = learner_menu if learner_menu is not None else build_learner_menu(DEFAULT_MENU, config)
    repeats = range(config.n_repeats)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda r: _run_one_repeat(dataset, config, menu, r), repeats))
    else:
        outcomes = [_run_one_repeat(dataset, config, menu, r) for r in repeats]
    cells = aggregate_cells(outcomes, tuple(menu))
    report = EvalReport(
        cells=cells,
        metric_names=tuple(menu),
        loss_names=LOSS_NAMES,
        provenance={
            "label_source": dataset.source_tag,
            "triplet_variant": config.triplet_variant,
            "sigma_train": repr(config.sigma_train),
            "sigma_test": repr(config.sigma_test),
            "seed": repr(config.rng_seed),
            "dispersion": "sample standard deviation",
        },
    )
    return ExperimentResult(report=report, outcomes=outcomes)


def run_experiment(
    config: ExperimentConfig, dataset: LabeledDataset, learner_menu=None
) -> EvalReport:
    """Run the full split/repeat protocol and aggregate per (metric, loss)."""
    return run_experiment_detailed(config, dataset, learner_menu).report


# ---------------------------------------------------------------------------
# Sigma sweep (train-threshold columns vs test-threshold rows)


@dataclass(frozen=True)
class SweepCell:
    mean: float | None
    std: float | None
    n_repeats: int

    @property
    def is_missing(self) -> bool:
        return self.mean is None


@dataclass
class SweepResult:
    sigma_test_values: tuple[float, ...]
    columns: tuple[str, ...]
    cells: dict[tuple[float, str], SweepCell]
    provenance: dict[str, str]
    metrics: dict[tuple[int, str], MahalanobisMetric]


def lsml_column_name(sigma: float) -> str:
    return f"lsml(sigma={sigma:g})"


def sigma_sweep(
    config: ExperimentConfig,
    dataset: LabeledDataset,
    sigma_train_list,
    sigma_test_list,
    threads: int = 1,
) -> SweepResult:
    """Triplet-violation loss of Euclidean vs LSML(sigma) across test thresholds.

    All cells of one repeat share the same split, so columns are paired; the
    Euclidean column varies only through the test-side triplet sets.
    """
    sigma_train_list = [float(s) for s in sigma_train_list]
    sigma_test_list = [float(s) for s in sigma_test_list]
    if not sigma_train_list or not sigma_test_list:
        raise ConfigurationError("sigma sweep needs nonempty train and test sigma lists")
    columns = ("euclidean",) + tuple(lsml_column_name(s) for s in sigma_train_list)

    def run_repeat(repeat: int):
        train_idx, test_idx = split_indices(dataset.n, config, repeat)
        train, stats = standardize(dataset.subset(train_idx))
        test, _ = standardize(dataset.subset(test_idx), stats)
        fitted: dict[str, MahalanobisMetric] = {"euclidean": euclidean_baseline(train.d)}
        for sigma in sigma_train_list:
            full = build_triplets(train, sigma, config.triplet_variant)
            sub = subsample_triplets(
                full, config.triplet_subsample, subseed(config.rng_seed, repeat, 1)
            )
            opts = OptimizerOptions(max_iter=config.lsml_max_iter, tol=config.lsml_tol)
            metric, _ = fit_lsml(train, sub, config.alpha, opts)
            fitted[lsml_column_name(sigma)] = metric
        losses: dict[tuple[float, str], float] = {}
        for sigma_t in sigma_test_list:
            test_triplets = build_triplets(test, sigma_t, config.triplet_variant)
            if len(test_triplets) == 0:
                continue
            for name, metric in fitted.items():
                losses[(sigma_t, name)] = triplet_violation_loss(metric, test, test_triplets)
        return repeat, fitted, losses

    repeats = range(config.n_repeats)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_repeat, repeats))
    else:
        results = [run_repeat(r) for r in repeats]

    metrics: dict[tuple[int, str], MahalanobisMetric] = {}
    cells: dict[tuple[float, str], SweepCell] = {}
    for repeat, fitted, _ in results:
        for name, metric in fitted.items():
            if name != "euclidean":
                metrics[(repeat, name)] = metric
    for sigma_t in sigma_test_list:
        for name in columns:
            values = [
                losses[(sigma_t, name)] for _, _, losses in results if (sigma_t, name) in losses
            ]
            if not values:
                cells[(sigma_t, name)] = SweepCell(None, None, 0)
                continue
            arr = np.asarray(values, dtype=float)
            std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
            cells[(sigma_t, name)] = SweepCell(float(arr.mean()), std, arr.size)
    return SweepResult(
        sigma_test_values=tuple(sigma_test_list),
        columns=columns,
        cells=cells,
        provenance={
            "label_source": dataset.source_tag,
            "triplet_variant": config.triplet_variant,
            "seed": repr(config.rng_seed),
            "loss": LOSS_TRIPLET,
            "dispersion": "sample standard deviation",
        },
        metrics=metrics,
    )

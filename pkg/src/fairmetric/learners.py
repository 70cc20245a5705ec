"""Metric learners: LMNN, MMC, LSML, plus the Euclidean and precision baselines.

All iterative learners share one backtracking projected-gradient engine and are
deterministic: same data, constraints, and options give the same metric. Each
fit returns the learned metric together with an OptimizerTrace of accepted
objective values.

Objectives (X is the training matrix, d_M the Mahalanobis distance):

  LSML   J(M) = alpha * (tr(M) - logdet(M) - d)
               + sum over triplets (a,b,c) of max(0, d_M(a,b) - d_M(a,c))^2,
         minimized from M = I; the logdet anchors M at the identity prior.

  LMNN   eps(M) = (1-mu) * sum over target pairs of d^2_M(i,j)
                + mu * sum over (i,j,l), y_l != y_i, of
                       [1 + d^2_M(i,j) - d^2_M(i,l)]_+,
         with target neighbors fixed under the Euclidean metric up front.

  MMC    minimize sum over similar pairs of d^2_M subject to
         sum over dissimilar pairs of d_M >= 1 and M PSD. The full form runs
         gradient ascent on the dissimilar-distance sum against the linear
         similar-sum cap (iterated half-space / PSD-cone projections); the
         diagonal form minimizes
             g(w) = sum_sim d^2_w - log(sum_dis d_w)
         over nonnegative axis weights. Either way the returned matrix is
         rescaled so the dissimilar-distance sum equals 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import LabeledDataset, MahalanobisMetric, PairSets, TripletSet
from .errors import (
    ConfigurationError,
    ConditionWarning,
    ConstraintError,
    NumericalError,
    SmallClassWarning,
)
from .numerics import (
    ABSOLUTE_EIG_FLOOR,
    RELATIVE_EIG_FLOOR,
    covariance,
    psd_project,
    quad_forms,
    safe_inverse,
)

DEGENERATE_TRACE = 1e-8
ZERO_DISTANCE = 1e-15


@dataclass(frozen=True)
class OptimizerTrace:
    """Accepted objective values per iteration (index 0 is the starting point).

    projection_count counts iterations where the feasibility projection actually
    altered the iterate.
    """

    iterations: int
    objective_values: tuple[float, ...]
    converged: bool
    projection_count: int

    def __post_init__(self):
        if len(self.objective_values) != self.iterations:
            raise ConfigurationError("trace length must equal iteration count")


@dataclass(frozen=True)
class OptimizerOptions:
    max_iter: int = 1000
    tol: float = 1e-6
    init_step: float = 1.0
    min_step: float = 1e-14


@dataclass(frozen=True)
class MMCOptions(OptimizerOptions):
    max_iter: int = 300
    max_projection_cycles: int = 100


def _projected_descent(x0, fun, grad, project, opts: OptimizerOptions):
    """Backtracking projected gradient descent; accepts only strictly improving steps.

    Convergence needs two consecutive sub-tolerance improvements, the second
    from a fresh full-size step, so a collapsed step memory cannot end the run
    while a good descent direction is still available.
    """

    def line_search(x, f, g, start):
        t = start
        while t >= opts.min_step:
            cand, n_proj = project(x - t * g)
            if cand is None:  # projection refused the point: treat as infeasible
                t *= 0.5
                continue
            fc = fun(cand)
            if fc < f:
                return cand, fc, t, n_proj
            t *= 0.5
        return None, f, 0.0, 0

    x, n_proj = project(np.array(x0, dtype=float))
    if x is None:
        raise ConfigurationError("infeasible starting point for projected descent")
    f = fun(x)
    values = [f]
    projection_count = n_proj
    step = opts.init_step
    small_streak = 0
    converged = False
    for _ in range(opts.max_iter - 1):
        g = grad(x)
        cand, fc, t, n_proj = line_search(x, f, g, step)
        if cand is None and step < opts.init_step:
            cand, fc, t, n_proj = line_search(x, f, g, opts.init_step)
        if cand is None:
            converged = True  # stationary within float resolution
            break
        rel_change = (f - fc) / max(abs(f), 1.0)
        x, f = cand, fc
        values.append(f)
        projection_count += n_proj
        if rel_change <= opts.tol:
            small_streak += 1
            if small_streak >= 2:
                converged = True
                break
            step = opts.init_step
        else:
            small_streak = 0
            step = t * 2.0
    return x, values, converged, projection_count


def _finalize_metric(m: np.ndarray) -> MahalanobisMetric:
    m = psd_project(0.5 * (m + m.T))
    tr = float(np.trace(m))
    d = m.shape[0]
    if tr < DEGENERATE_TRACE:
        # a collapsed metric breaks kNN tie handling; losses are scale-invariant
        m = np.eye(d) if tr <= 0.0 else m * (d / tr)
    return MahalanobisMetric(m)


# ---------------------------------------------------------------------------
# Baselines


def euclidean_baseline(d: int) -> MahalanobisMetric:
    """Identity metric: plain l2 distance in feature space."""
    return MahalanobisMetric.identity(d)


def precision_baseline(train: LabeledDataset) -> MahalanobisMetric:
    """Inverse covariance of the training features (decorrelating baseline)."""
    cov = covariance(train.features)
    inv, floored = safe_inverse(cov)
    if floored:
        warnings.warn(
            "training covariance is ill-conditioned; eigenvalue flooring applied",
            ConditionWarning,
            stacklevel=2,
        )
    return MahalanobisMetric(psd_project(inv))


# ---------------------------------------------------------------------------
# LSML


def _triplet_diffs(train: LabeledDataset, triplets: TripletSet):
    idx = triplets.indices
    if idx.size and idx.max() >= train.n:
        raise ConfigurationError("triplet indices exceed dataset size")
    x = train.features
    vab = x[idx[:, 0]] - x[idx[:, 1]]
    vac = x[idx[:, 0]] - x[idx[:, 2]]
    return vab, vac


def _hinge_residuals(m: np.ndarray, vab: np.ndarray, vac: np.ndarray):
    dab = np.sqrt(np.maximum(quad_forms(vab, m), 0.0))
    dac = np.sqrt(np.maximum(quad_forms(vac, m), 0.0))
    return dab, dac, dab - dac


def _floored_log_eigvals(m: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    floor = max(RELATIVE_EIG_FLOOR * float(w[-1]), ABSOLUTE_EIG_FLOOR)
    return np.log(np.maximum(w, floor))


def lsml_objective(m: np.ndarray, train: LabeledDataset, triplets: TripletSet, alpha: float) -> float:
    vab, vac = _triplet_diffs(train, triplets)
    return _lsml_value(np.asarray(m, dtype=float), vab, vac, alpha)


def lsml_gradient(m: np.ndarray, train: LabeledDataset, triplets: TripletSet, alpha: float) -> np.ndarray:
    vab, vac = _triplet_diffs(train, triplets)
    return _lsml_grad(np.asarray(m, dtype=float), vab, vac, alpha)


def _lsml_value(m, vab, vac, alpha):
    _, _, resid = _hinge_residuals(m, vab, vac)
    hinge = float(np.sum(np.square(np.maximum(resid, 0.0))))
    logdet_floored = float(np.sum(_floored_log_eigvals(m)))
    d_ld = float(np.trace(m)) - logdet_floored - m.shape[0]
    return alpha * d_ld + hinge


def _lsml_grad(m, vab, vac, alpha):
    d = m.shape[0]
    dab, dac, resid = _hinge_residuals(m, vab, vac)
    inv, _ = safe_inverse(0.5 * (m + m.T))
    grad = alpha * (np.eye(d) - inv)
    active = resid > 0
    if np.any(active):
        wab = np.where(active & (dab > ZERO_DISTANCE), resid / np.maximum(dab, ZERO_DISTANCE), 0.0)
        wac = np.where(active & (dac > ZERO_DISTANCE), resid / np.maximum(dac, ZERO_DISTANCE), 0.0)
        grad = grad + (vab * wab[:, None]).T @ vab - (vac * wac[:, None]).T @ vac
    return 0.5 * (grad + grad.T)


def _clip_to_floored_cone(m: np.ndarray):
    """Eigenvalue clip with the relative floor that keeps the logdet term finite.

    A candidate whose whole spectrum is nonpositive is a grossly overshot step;
    flooring it would produce an isotropic near-zero matrix whose capped logdet
    looks spuriously attractive, so such points are rejected instead (None).
    """
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    if w[-1] <= 0.0:
        return None, 0
    floor = RELATIVE_EIG_FLOOR * float(w[-1])
    if w[0] >= floor:
        return m, 0
    out = (v * np.maximum(w, floor)) @ v.T
    return 0.5 * (out + out.T), 1


def fit_lsml(
    train: LabeledDataset,
    triplets: TripletSet,
    alpha: float = 0.01,
    opts: OptimizerOptions | None = None,
) -> tuple[MahalanobisMetric, OptimizerTrace]:
    """Least squared-residual metric learning from triplet relative comparisons."""
    if len(triplets) == 0:
        raise ConstraintError("LSML needs a nonempty triplet set")
    if alpha <= 0:
        raise ConfigurationError(f"alpha must be > 0, got {alpha}")
    opts = opts or OptimizerOptions()
    vab, vac = _triplet_diffs(train, triplets)

    def fun(m):
        return _lsml_value(m, vab, vac, alpha)

    def grad(m):
        return _lsml_grad(m, vab, vac, alpha)

    m, values, converged, n_proj = _projected_descent(
        np.eye(train.d), fun, grad, _clip_to_floored_cone, opts
    )
    trace = OptimizerTrace(len(values), tuple(values), converged, n_proj)
    return _finalize_metric(m), trace


# ---------------------------------------------------------------------------
# LMNN


@dataclass(frozen=True)
class LmnnProblem:
    """Fixed target-neighbor structure LMNN optimizes over."""

    features: np.ndarray
    target_pairs: np.ndarray  # (p, 2) rows (i, target j), same rating
    impostor_lists: tuple[np.ndarray, ...]  # per target pair: indices with y != y_i
    pull_gram: np.ndarray  # sum over target pairs of (x_i - x_j)(x_i - x_j)^T


def lmnn_problem(train: LabeledDataset, k_targets: int, strict: bool = False) -> LmnnProblem:
    if k_targets < 1:
        raise ConfigurationError(f"k_targets must be >= 1, got {k_targets}")
    x = train.features
    labels = train.labels
    pairs: list[tuple[int, int]] = []
    impostors: list[np.ndarray] = []
    warned: set[int] = set()
    for i in range(train.n):
        same = np.flatnonzero(labels == labels[i])
        same = same[same != i]
        if same.size == 0:
            if strict:
                raise ConstraintError(
                    f"rating class {int(labels[i])} has a single member (strict mode)"
                )
            if int(labels[i]) not in warned:
                warned.add(int(labels[i]))
                warnings.warn(
                    f"rating class {int(labels[i])} has a single member; skipped",
                    SmallClassWarning,
                    stacklevel=2,
                )
            continue
        if same.size < k_targets and strict:
            raise ConstraintError(
                f"rating class {int(labels[i])} has only {same.size + 1} members "
                f"for k_targets={k_targets} (strict mode)"
            )
        diffs = x[same] - x[i]
        order = np.argsort(np.einsum("ij,ij->i", diffs, diffs), kind="stable")
        targets = same[order[: min(k_targets, same.size)]]
        diff_class = np.flatnonzero(labels != labels[i])
        for j in targets:
            pairs.append((i, int(j)))
            impostors.append(diff_class)
    if not pairs:
        raise ConstraintError("no rating class has two members; LMNN cannot build target pairs")
    tp = np.asarray(pairs, dtype=np.int64)
    vp = x[tp[:, 0]] - x[tp[:, 1]]
    return LmnnProblem(
        features=x,
        target_pairs=tp,
        impostor_lists=tuple(impostors),
        pull_gram=vp.T @ vp,
    )


def _pairwise_sq(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    g = x @ m @ x.T
    s = np.diag(g)
    return s[:, None] + s[None, :] - 2.0 * g


def lmnn_objective(m: np.ndarray, problem: LmnnProblem, mu: float) -> float:
    m = np.asarray(m, dtype=float)
    d2 = _pairwise_sq(m, problem.features)
    tp = problem.target_pairs
    pull = float(d2[tp[:, 0], tp[:, 1]].sum())
    push = 0.0
    for (i, j), cand in zip(tp, problem.impostor_lists):
        if cand.size == 0:
            continue
        z = 1.0 + d2[i, j] - d2[i, cand]
        push += float(z[z > 0].sum())
    return (1.0 - mu) * pull + mu * push


def lmnn_gradient(m: np.ndarray, problem: LmnnProblem, mu: float) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    x = problem.features
    n = x.shape[0]
    d2 = _pairwise_sq(m, x)
    c = np.zeros((n, n))
    for (i, j), cand in zip(problem.target_pairs, problem.impostor_lists):
        if cand.size == 0:
            continue
        active = cand[1.0 + d2[i, j] - d2[i, cand] > 0]
        if active.size == 0:
            continue
        c[i, j] += active.size
        c[i, active] -= 1.0
    s = c + c.T
    lap = np.diag(s.sum(axis=1)) - s
    push = x.T @ lap @ x
    grad = (1.0 - mu) * problem.pull_gram + mu * 0.5 * (push + push.T)
    return 0.5 * (grad + grad.T)


def _clip_to_cone(m: np.ndarray):
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    if w[0] >= 0.0:
        return m, 0
    out = (v * np.maximum(w, 0.0)) @ v.T
    return 0.5 * (out + out.T), 1


def fit_lmnn(
    train: LabeledDataset,
    k_targets: int = 3,
    mu: float = 0.5,
    opts: OptimizerOptions | None = None,
    strict: bool = False,
) -> tuple[MahalanobisMetric, OptimizerTrace]:
    """Large-margin nearest neighbor with rating values as classes."""
    if not 0.0 < mu < 1.0:
        raise ConfigurationError(f"mu must lie in (0, 1), got {mu}")
    opts = opts or OptimizerOptions(max_iter=300)
    problem = lmnn_problem(train, k_targets, strict=strict)

    def fun(m):
        return lmnn_objective(m, problem, mu)

    def grad(m):
        return lmnn_gradient(m, problem, mu)

    m, values, converged, n_proj = _projected_descent(
        np.eye(train.d), fun, grad, _clip_to_cone, opts
    )
    trace = OptimizerTrace(len(values), tuple(values), converged, n_proj)
    return _finalize_metric(m), trace


# ---------------------------------------------------------------------------
# MMC


def _pair_diffs(train: LabeledDataset, pairs: PairSets):
    if pairs.n_similar == 0:
        raise ConstraintError("MMC needs at least one similar pair")
    if pairs.n_dissimilar == 0:
        raise ConstraintError("MMC needs at least one dissimilar pair")
    hi = max(int(pairs.similar.max()), int(pairs.dissimilar.max()))
    if hi >= train.n:
        raise ConfigurationError("pair indices exceed dataset size")
    x = train.features
    vs = x[pairs.similar[:, 0]] - x[pairs.similar[:, 1]]
    vd = x[pairs.dissimilar[:, 0]] - x[pairs.dissimilar[:, 1]]
    return vs, vd


def _fit_mmc_diagonal(vs, vd, opts: MMCOptions):
    d = vs.shape[1]
    sim_col = np.einsum("ij,ij->j", vs, vs)
    dis_sq = vd * vd

    def fun(w):
        dw = dis_sq @ w
        total = float(np.sqrt(np.maximum(dw, 0.0)).sum())
        if total <= 0.0:
            return math.inf
        return float(sim_col @ w) - math.log(total)

    def grad(w):
        dist = np.sqrt(np.maximum(dis_sq @ w, 0.0))
        total = float(dist.sum())
        inv2d = np.where(dist > ZERO_DISTANCE, 0.5 / np.maximum(dist, ZERO_DISTANCE), 0.0)
        return sim_col - (dis_sq.T @ inv2d) / max(total, ZERO_DISTANCE)

    def project(w):
        clipped = np.maximum(w, 0.0)
        return clipped, int(bool(np.any(w < 0.0)))

    w, values, converged, n_proj = _projected_descent(np.ones(d), fun, grad, project, opts)
    w = np.maximum(w, 0.0)
    total = float(np.sqrt(np.maximum(dis_sq @ w, 0.0)).sum())
    if total <= 0.0:
        raise NumericalError("dissimilar pairs have zero distance under every nonneg weighting")
    w = w / total**2  # scale so the dissimilar-distance sum is exactly 1
    trace = OptimizerTrace(len(values), tuple(values), converged, n_proj)
    return MahalanobisMetric.from_diagonal(w), trace


def _fit_mmc_full(vs, vd, opts: MMCOptions):
    d = vs.shape[1]
    xs = vs.T @ vs  # <M, xs> = similar-pair squared-distance sum, linear in M
    xs_norm2 = float((xs * xs).sum())

    def dissimilar_sum(m):
        return float(np.sqrt(np.maximum(quad_forms(vd, m), 0.0)).sum())

    def fun(m):
        return -dissimilar_sum(m)

    def grad(m):
        dist = np.sqrt(np.maximum(quad_forms(vd, m), 0.0))
        w = np.where(dist > ZERO_DISTANCE, 0.5 / np.maximum(dist, ZERO_DISTANCE), 0.0)
        g = (vd * w[:, None]).T @ vd
        g = 0.5 * (g + g.T)
        # when the similar-sum cap is active, ascend along its boundary so the
        # projection does not undo the step
        if xs_norm2 > 0.0 and float((m * xs).sum()) >= 1.0 - 1e-9:
            g = g - (float((g * xs).sum()) / xs_norm2) * xs
        return -g

    def project(m):
        count = 0
        for _ in range(opts.max_projection_cycles):
            m = 0.5 * (m + m.T)
            changed = False
            w, v = np.linalg.eigh(m)
            if w[0] < 0.0:
                m = (v * np.maximum(w, 0.0)) @ v.T
                m = 0.5 * (m + m.T)
                changed = True
            if xs_norm2 > 0.0:
                val = float((m * xs).sum())
                if val > 1.0 + 1e-12:
                    m = m - ((val - 1.0) / xs_norm2) * xs
                    changed = True
            if changed:
                count += 1
            else:
                break
        # the alternation may stop short of the intersection; finish with an
        # exact feasibility step (clip, then scale down, which stays in the cone)
        m = psd_project(0.5 * (m + m.T))
        if xs_norm2 > 0.0:
            val = float((m * xs).sum())
            if val > 1.0:
                m = m / val
        return m, count

    m0 = np.eye(d)
    init_val = float((m0 * xs).sum())
    if init_val > 1.0:
        m0 = m0 / init_val
    m, neg_values, converged, n_proj = _projected_descent(m0, fun, grad, project, opts)
    # projection first: rescaling by a positive scalar preserves the cone, so the
    # dissimilar constraint ends up active with equality to float precision
    m = psd_project(0.5 * (m + m.T))
    total = dissimilar_sum(m)
    if total <= 0.0:
        raise NumericalError("dissimilar-distance sum collapsed to zero in MMC")
    m = m / total**2
    values = tuple(-v for v in neg_values)  # ascent trace of the dissimilar sum
    trace = OptimizerTrace(len(values), values, converged, n_proj)
    return MahalanobisMetric(m), trace


def fit_mmc(
    train: LabeledDataset,
    pairs: PairSets,
    form: str = "full",
    opts: MMCOptions | None = None,
) -> tuple[MahalanobisMetric, OptimizerTrace]:
    """Mahalanobis metric for clustering from similar/dissimilar pairs."""
    if form not in ("full", "diagonal"):
        raise ConfigurationError(f"unknown MMC form {form!r}")
    opts = opts or MMCOptions()
    vs, vd = _pair_diffs(train, pairs)
    if form == "diagonal":
        return _fit_mmc_diagonal(vs, vd, opts)
    return _fit_mmc_full(vs, vd, opts)


# ---------------------------------------------------------------------------
# Metric serialization: first line d, then d rows of d decimals (repr round-trips)


def save_metric(metric: MahalanobisMetric, path) -> None:
    lines = [str(metric.d)]
    for row in metric.matrix:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_metric(path) -> MahalanobisMetric:
    raw = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not raw:
        raise ConfigurationError(f"{path}: empty metric file")
    try:
        d = int(raw[0])
    except ValueError:
        raise ConfigurationError(f"{path}: first line must be the dimension") from None
    if len(raw) != d + 1:
        raise ConfigurationError(f"{path}: expected {d} matrix rows, got {len(raw) - 1}")
    rows = []
    for line in raw[1:]:
        values = [float(tok) for tok in line.split()]
        if len(values) != d:
            raise ConfigurationError(f"{path}: expected {d} values per row")
        rows.append(values)
    return MahalanobisMetric(np.asarray(rows))

"""Stratified splits, PR/ROC metrics, bootstrap intervals and timeliness.

All curve metrics come from an exhaustive sweep over the unique score
thresholds (predict positive at score >= threshold), which makes them
invariant under strictly increasing score transforms and lets tests check
them against a quadratic brute-force oracle exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPLIT_RATIOS = (0.4, 0.2, 0.4)
PREVALENCE_TOL = 0.015
SPLIT_BUDGET = 100_000


class StratificationError(Exception):
    """Stratified split infeasible within the attempt budget."""

    def __init__(self, message: str, best_deviation: float):
        super().__init__(message)
        self.best_deviation = best_deviation


class TargetPrecisionError(Exception):
    """No operating point reaches the requested precision."""


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def all_segments(self) -> tuple[str, ...]:
        return self.train + self.val + self.test


@dataclass
class SplitPlan:
    splits: list[Split]
    seed: int
    tolerance: float
    deviations: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "tolerance": self.tolerance,
            "deviations": self.deviations,
            "splits": [
                {"train": list(s.train), "val": list(s.val), "test": list(s.test)}
                for s in self.splits
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplitPlan":
        return cls(
            splits=[
                Split(tuple(s["train"]), tuple(s["val"]), tuple(s["test"]))
                for s in data["splits"]
            ],
            seed=int(data["seed"]),
            tolerance=float(data["tolerance"]),
            deviations=list(data.get("deviations", [])),
        )


def _set_sizes(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_train = max(1, min(n_train, n - 2))
    n_val = max(1, min(n_val, n - n_train - 1))
    return n_train, n_val, n - n_train - n_val


def make_splits(
    segment_ids: list[str],
    pos_counts: dict[str, int],
    neg_counts: dict[str, int],
    n_splits: int = 10,
    ratios: tuple[float, float, float] = SPLIT_RATIOS,
    tol: float = PREVALENCE_TOL,
    seed: int = 0,
    budget: int = SPLIT_BUDGET,
) -> SplitPlan:
    """Rejection-sample segment partitions until every set's positive
    prevalence sits within ``tol`` of the overall prevalence.

    Raises StratificationError (carrying the best deviation found) when a
    split cannot be stratified within the attempt budget.
    """
    ids = sorted(segment_ids)
    if len(ids) < 5:
        raise ValueError("need at least 5 segments to split")
    pos = np.array([pos_counts[s] for s in ids], dtype=np.float64)
    neg = np.array([neg_counts[s] for s in ids], dtype=np.float64)
    total = pos + neg
    overall = pos.sum() / total.sum()
    n_train, n_val, n_test = _set_sizes(len(ids), ratios)
    rng = np.random.default_rng(seed)
    splits: list[Split] = []
    deviations: list[float] = []
    for split_idx in range(n_splits):
        best = np.inf
        found = None
        for _ in range(budget):
            perm = rng.permutation(len(ids))
            parts = (
                perm[:n_train],
                perm[n_train:n_train + n_val],
                perm[n_train + n_val:],
            )
            dev = 0.0
            for part in parts:
                denom = total[part].sum()
                prevalence = pos[part].sum() / denom if denom else 0.0
                dev = max(dev, abs(prevalence - overall))
            if dev < best:
                best = dev
            if dev <= tol:
                found = parts
                break
        if found is None:
            raise StratificationError(
                f"split {split_idx}: no stratified partition within {budget} attempts "
                f"(best deviation {best:.4f}, tolerance {tol})",
                best_deviation=float(best),
            )
        tr, va, te = (tuple(sorted(ids[i] for i in part)) for part in found)
        splits.append(Split(tr, va, te))
        deviations.append(float(best))
    return SplitPlan(splits=splits, seed=seed, tolerance=tol, deviations=deviations)


@dataclass
class CurveMetrics:
    """Threshold-sweep operating points plus the headline scalars."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    specificity: np.ndarray
    auprc: float
    auroc: float

    def precision_at_recall(self, r: float) -> float | None:
        ok = self.recall >= r
        if not ok.any():
            return None
        return float(self.precision[ok].max())

    def specificity_at_sensitivity(self, r: float) -> float | None:
        ok = self.recall >= r
        if not ok.any():
            return None
        return float(self.specificity[ok].max())


def _sweep(scores: np.ndarray, labels: np.ndarray) -> CurveMetrics:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes are required to compute curve metrics")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels == 1)
    fp = np.cumsum(sorted_labels == 0)
    # Operating points sit at the last occurrence of each distinct score.
    last = np.flatnonzero(np.diff(sorted_scores, append=-np.inf) != 0)
    thresholds = sorted_scores[last]
    tp = tp[last].astype(np.float64)
    fp = fp[last].astype(np.float64)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    specificity = 1.0 - fp / n_neg
    # Step-wise integral of the PR curve (average-precision form).
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    auprc = float(((recall - prev_recall) * precision).sum())
    # Trapezoidal integral of the ROC curve.
    fpr = fp / n_neg
    tpr = recall
    fpr_pad = np.concatenate([[0.0], fpr, [1.0]])
    tpr_pad = np.concatenate([[0.0], tpr, [1.0]])
    auroc = float(np.trapezoid(tpr_pad, fpr_pad))
    return CurveMetrics(
        thresholds=thresholds, precision=precision, recall=recall,
        specificity=specificity, auprc=auprc, auroc=auroc,
    )


def pr_metrics(scores: np.ndarray, labels: np.ndarray) -> dict:
    """PR curve, AUPRC, and best precision at recall >= 75 % / 90 %."""
    m = _sweep(scores, labels)
    return {
        "curve": m,
        "auprc": m.auprc,
        "prec_at_75_rec": m.precision_at_recall(0.75),
        "prec_at_90_rec": m.precision_at_recall(0.90),
    }


def roc_metrics(scores: np.ndarray, labels: np.ndarray) -> dict:
    """ROC curve, AUROC, and best specificity at 75 % / 90 % sensitivity."""
    m = _sweep(scores, labels)
    return {
        "curve": m,
        "auroc": m.auroc,
        "spec_at_75_sens": m.specificity_at_sensitivity(0.75),
        "spec_at_90_sens": m.specificity_at_sensitivity(0.90),
    }


@dataclass
class BootstrapResult:
    point: float
    ci_low: float
    ci_high: float
    replicates: np.ndarray
    n_resampled: int

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_replicates": int(len(self.replicates)),
            "n_resampled": self.n_resampled,
        }


def bootstrap_cis(
    split_rows: list[tuple[np.ndarray, np.ndarray]],
    metric_fn,
    n_boot: int = 100,
    frac: float = 0.5,
    seed: int = 0,
    max_redraws: int = 1000,
) -> BootstrapResult:
    """Pooled bootstrap over splits: ``n_boot`` replicates per split, each
    resampling ``frac`` of that split's test rows with replacement.

    The point estimate is the replicate mean; the interval is
    mean +/- 1.96 standard errors of that mean. Replicates that draw a
    single class are redrawn (counted in ``n_resampled``).
    """
    replicates = []
    n_resampled = 0
    for split_idx, (scores, labels) in enumerate(split_rows):
        rng = np.random.default_rng(np.random.SeedSequence((seed, split_idx)))
        n = len(scores)
        size = max(1, int(round(frac * n)))
        for _ in range(n_boot):
            for _attempt in range(max_redraws):
                idx = rng.integers(0, n, size=size)
                sub_labels = labels[idx]
                if sub_labels.min() != sub_labels.max():
                    break
                n_resampled += 1
            else:
                raise ValueError("could not draw a two-class bootstrap replicate")
            replicates.append(metric_fn(scores[idx], sub_labels))
    reps = np.asarray(replicates, dtype=np.float64)
    if reps.max() == reps.min():
        point, se = float(reps[0]), 0.0  # exactly degenerate: zero width
    else:
        point = float(reps.mean())
        se = float(reps.std(ddof=1) / np.sqrt(len(reps)))
    return BootstrapResult(
        point=point, ci_low=point - 1.96 * se, ci_high=point + 1.96 * se,
        replicates=reps, n_resampled=n_resampled,
    )


N_TIMELINESS_BINS = 8


def timeliness(
    scores: np.ndarray,
    labels: np.ndarray,
    minutes_to_event: np.ndarray,
    target_precision: float = 0.35,
) -> dict:
    """Alarm recall by hour-before-onset at a fixed-precision threshold.

    The operating point is the lowest threshold whose global precision
    reaches the target (maximizing recall at that precision). Positive
    minutes are binned by minutes until the next event start: bin h covers
    ((h-1)*60, h*60]. Bins without positives report NaN recall.
    """
    m = _sweep(scores, labels)
    ok = m.precision >= target_precision
    if not ok.any():
        raise TargetPrecisionError(
            f"no threshold reaches precision {target_precision}"
        )
    threshold = float(m.thresholds[ok].min())
    alarms = np.asarray(scores) >= threshold
    pos = np.asarray(labels) == 1
    dist = np.asarray(minutes_to_event, dtype=np.float64)
    recalls = np.full(N_TIMELINESS_BINS, np.nan)
    counts = np.zeros(N_TIMELINESS_BINS, dtype=np.int64)
    for h in range(1, N_TIMELINESS_BINS + 1):
        in_bin = pos & (dist > (h - 1) * 60) & (dist <= h * 60)
        counts[h - 1] = int(in_bin.sum())
        if counts[h - 1]:
            recalls[h - 1] = float(alarms[in_bin].mean())
    return {
        "threshold": threshold,
        "target_precision": target_precision,
        "recall_per_hour": recalls,
        "positives_per_hour": counts,
    }

"""Standardization, logistic regression, exact linear-margin Shapley
attribution, feature ranking and the two literature baselines.

The model is L2-regularized logistic regression trained by seeded
mini-batch stochastic gradient descent with a 1/sqrt(t) step decay. Its
margin is linear, so Shapley values relative to the training-mean
background have the closed form w_i * (x_i - mu_i) and satisfy the
efficiency identity exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

TOP_K_DEFAULT = 100


class TrainingDivergedError(Exception):
    """Raised when the SGD loss becomes non-finite."""


@dataclass
class Standardizer:
    """Per-feature zero-mean/unit-std transform fitted on training rows.

    Statistics ignore missing entries. After standardization a missing
    entry becomes 0, i.e. global mean imputation; constant training
    columns are flagged and always map to 0.
    """

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, rows: np.ndarray) -> "Standardizer":
        import warnings

        x = np.asarray(rows, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError("standardizer needs at least two training rows")
        with warnings.catch_warnings():
            # all-NaN columns are legitimate (absent channels) and map to 0
            warnings.simplefilter("ignore", RuntimeWarning)
            mean = np.nanmean(x, axis=0)
            std = np.nanstd(x, axis=0)
        all_missing = ~np.isfinite(mean)
        mean[all_missing] = 0.0
        std[all_missing] = 0.0
        constant = std == 0.0
        return cls(mean=mean, std=std, constant=constant)

    def apply(self, rows: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        safe = np.where(self.constant, 1.0, self.std)
        out = (x - self.mean) / safe
        out[:, self.constant] = 0.0
        out[~np.isfinite(out)] = 0.0
        return out

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "constant": self.constant.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Standardizer":
        return cls(
            mean=np.asarray(data["mean"], dtype=np.float64),
            std=np.asarray(data["std"], dtype=np.float64),
            constant=np.asarray(data["constant"], dtype=bool),
        )


def logloss_and_grad(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, lam: float
) -> tuple[float, np.ndarray, float]:
    """Mean log-loss plus (lam/2)||w||^2 (bias unregularized) and its gradient."""
    z = X @ w + b
    # log(1 + e^z) - y*z, computed stably.
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * (w @ w))
    r = expit(z) - y
    grad_w = X.T @ r / len(y) + lam * w
    grad_b = float(r.mean())
    return loss, grad_w, grad_b


@dataclass
class SgdConfig:
    lam: float = 1e-4
    epochs: int = 5
    lr: float = 0.1
    batch_size: int = 128
    seed: int = 0
    lr_decay: bool = True


@dataclass
class ModelArtifact:
    """Trained risk model: weights over selected features plus provenance."""

    weights: np.ndarray
    bias: float
    lam: float
    feature_names: tuple[str, ...]
    standardizer: Standardizer
    loss_trace: list[float] = field(default_factory=list)
    train_seed: int = 0

    def margin(self, X_standardized: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X_standardized) @ self.weights + self.bias

    def predict_proba(self, X_standardized: np.ndarray) -> np.ndarray:
        return expit(self.margin(X_standardized))

    def score_raw(self, rows: np.ndarray) -> np.ndarray:
        return self.predict_proba(self.standardizer.apply(rows))

    def to_json(self) -> str:
        return json.dumps(
            {
                "weights": self.weights.tolist(),
                "bias": self.bias,
                "lam": self.lam,
                "feature_names": list(self.feature_names),
                "standardizer": self.standardizer.to_dict(),
                "loss_trace": self.loss_trace,
                "train_seed": self.train_seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelArtifact":
        data = json.loads(text)
        return cls(
            weights=np.asarray(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
            lam=float(data["lam"]),
            feature_names=tuple(data["feature_names"]),
            standardizer=Standardizer.from_dict(data["standardizer"]),
            loss_trace=list(data["loss_trace"]),
            train_seed=int(data["train_seed"]),
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path


def train_logreg(
    X: np.ndarray,
    y: np.ndarray,
    cfg: SgdConfig,
    feature_names: tuple[str, ...] | None = None,
    standardizer: Standardizer | None = None,
) -> ModelArtifact:
    """Mini-batch SGD on standardized inputs; deterministic in the seed.

    The epoch-level training loss trace is recorded; a non-finite loss
    aborts with TrainingDivergedError.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    rng = np.random.default_rng(cfg.seed)
    trace: list[float] = []
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            step += 1
            lr = cfg.lr / np.sqrt(step) if cfg.lr_decay else cfg.lr
            z = X[idx] @ w + b
            r = expit(z) - y[idx]
            w -= lr * (X[idx].T @ r / len(idx) + cfg.lam * w)
            b -= lr * float(r.mean())
        loss, _, _ = logloss_and_grad(w, b, X, y, cfg.lam)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss after epoch {len(trace) + 1}")
        trace.append(loss)
    names = feature_names or tuple(f"f{i}" for i in range(d))
    std = standardizer or Standardizer(
        mean=np.zeros(d), std=np.ones(d), constant=np.zeros(d, dtype=bool)
    )
    return ModelArtifact(
        weights=w, bias=b, lam=cfg.lam, feature_names=tuple(names),
        standardizer=std, loss_trace=trace, train_seed=cfg.seed,
    )


def shapley_linear(
    weights: np.ndarray, x: np.ndarray, background: np.ndarray
) -> np.ndarray:
    """Exact Shapley values of the linear margin under feature independence.

    For margin w.x + b and background expectation mu the value of feature
    i is w_i * (x_i - mu_i); the values sum to margin(x) - margin(mu)
    exactly (efficiency).
    """
    return np.asarray(weights) * (np.asarray(x) - np.asarray(background))


def attribution_matrix(model: ModelArtifact, X_standardized: np.ndarray,
                       background: np.ndarray | None = None) -> np.ndarray:
    """Per-row Shapley values on the margin; background defaults to zero
    (the training mean in standardized coordinates)."""
    X = np.atleast_2d(X_standardized)
    mu = np.zeros(X.shape[1]) if background is None else background
    return model.weights * (X - mu)


def global_importance(model: ModelArtifact, X_standardized: np.ndarray) -> np.ndarray:
    """Mean |Shapley| per feature over a validation matrix."""
    return np.abs(attribution_matrix(model, X_standardized)).mean(axis=0)


def rank_features(g: np.ndarray) -> np.ndarray:
    """1-based ranks, largest importance first; ties break by column order."""
    order = np.lexsort((np.arange(len(g)), -np.asarray(g)))
    ranks = np.empty(len(g), dtype=np.int64)
    ranks[order] = np.arange(1, len(g) + 1)
    return ranks


def select_top_features(g: np.ndarray, k: int = TOP_K_DEFAULT) -> np.ndarray:
    """Indices of the k largest importances, in canonical column order."""
    ranks = rank_features(g)
    chosen = np.flatnonzero(ranks <= k)
    return chosen


def aggregate_ranks(per_split_g: list[np.ndarray]) -> np.ndarray:
    """Mean rank per feature across splits (rank 1 = most important)."""
    if not per_split_g:
        raise ValueError("need at least one split")
    ranks = np.vstack([rank_features(g) for g in per_split_g])
    return ranks.mean(axis=0)


def bl1_features(icp_metric_rows: np.ndarray) -> np.ndarray:
    """Baseline 1: medians of the 20 ICP pulse metrics over the last 15
    and 30 minutes (40 columns), with history-style gap filling.

    ``icp_metric_rows`` is (minutes, 20) with NaN for missing entries.
    Column layout: for each metric, Med@15 then Med@30.
    """
    from .history import HistoryBuffer

    rows = np.asarray(icp_metric_rows, dtype=np.float64)
    n_minutes, n_metrics = rows.shape
    buf = HistoryBuffer(n_metrics, scales=(15, 30))
    out = np.empty((n_minutes, n_metrics * 2))
    for t in range(n_minutes):
        buf.push(t, rows[t])
        values = buf.emit().values[:-2]
        # emitted layout: (metric, summary=3, scale=2); keep the medians
        out[t] = values.reshape(n_metrics, 3, 2)[:, 0, :].reshape(-1)
    return out


BL2_NO_EVENT_SENTINEL = 1e6
BL2_WINDOW = 30


def bl2_features(icp_medians: np.ndarray, events, n_minutes: int | None = None) -> np.ndarray:
    """Baseline 2: last two ICP medians within a 30-minute window and the
    time since the last event end (sentinel 1e6 when there is none)."""
    medians = np.asarray(icp_medians, dtype=np.float64)
    n = n_minutes or len(medians)
    ends = sorted(e.end_minute for e in events)
    out = np.full((n, 3), np.nan)
    for t in range(n):
        lo = max(0, t - BL2_WINDOW + 1)
        window = medians[lo:t + 1]
        valid = np.flatnonzero(np.isfinite(window))
        if len(valid) >= 1:
            out[t, 0] = window[valid[-1]]
        if len(valid) >= 2:
            out[t, 1] = window[valid[-2]]
        idx = np.searchsorted(ends, t, side="left") - 1  # last end strictly before t
        out[t, 2] = (t - ends[idx]) if idx >= 0 else BL2_NO_EVENT_SENTINEL
    return out

"""Local surrogate explanation for the simple model's prediction on one
commit, in the style of the classic tabular perturbation explainers.

Features are discretized into quartile bins computed on training data. The
instance's binary "same bin" representation is perturbed by resampling bins
uniformly; reconstructed inputs are scored by the model; a distance-kernel
weighted ridge regression on (binary representation -> score) yields one
signed weight per feature. Positive weights push toward the defective
class. Fidelity is the weighted R^2 of the surrogate on the sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FEATURE_NAMES


@dataclass(frozen=True)
class FeatureExplanation:
    feature: str
    condition: str
    weight: float
    direction: str  # "defective" or "clean"


@dataclass(frozen=True)
class Explanation:
    entries: tuple  # one FeatureExplanation per feature, |weight| descending
    fidelity: float
    intercept: float

    def as_dict(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "intercept": self.intercept,
            "entries": [
                {"feature": e.feature, "condition": e.condition,
                 "weight": e.weight, "direction": e.direction}
                for e in self.entries
            ],
        }

    def as_text(self) -> str:
        lines = [f"{'condition':<28} {'weight':>12} direction"]
        for e in self.entries:
            lines.append(f"{e.condition:<28} {e.weight:>12.6f} {e.direction}")
        lines.append(f"fidelity R^2 = {self.fidelity:.4f}")
        return "\n".join(lines)


def _quartile_bins(column: np.ndarray):
    """(boundaries, lo, hi): unique quartile cut points plus value range."""
    qs = np.percentile(column, [25, 50, 75])
    boundaries = np.unique(qs)
    return boundaries, float(column.min()), float(column.max())


def _bin_of(value: float, boundaries: np.ndarray) -> int:
    return int(np.searchsorted(boundaries, value, side="left"))


def _bin_range(idx: int, boundaries: np.ndarray, lo: float, hi: float):
    left = lo if idx == 0 else float(boundaries[idx - 1])
    right = hi if idx == len(boundaries) else float(boundaries[idx])
    return left, right


def _condition(name: str, idx: int, boundaries: np.ndarray) -> str:
    if idx == 0:
        return f"{name} <= {boundaries[0]:.2f}"
    if idx == len(boundaries):
        return f"{name} > {boundaries[-1]:.2f}"
    return f"{boundaries[idx - 1]:.2f} < {name} <= {boundaries[idx]:.2f}"


def explain_instance(predict_fn, x, train_features, n_samples: int = 1000,
                     seed: int = 0, feature_names=FEATURE_NAMES,
                     kernel_width: float | None = None, ridge: float = 1.0) -> Explanation:
    """Explain predict_fn's score at x (a feature vector) against the
    training matrix the quartile bins come from. Deterministic given seed."""
    x = np.asarray(x, dtype=np.float64)
    train = np.asarray(train_features, dtype=np.float64)
    if train.ndim != 2 or train.shape[1] != len(x):
        raise ValueError("training matrix must be (n, p) matching the instance")
    if np.all(train.std(axis=0) == 0):
        raise ValueError("degenerate training statistics: every feature is constant")
    p = len(x)
    if kernel_width is None:
        kernel_width = 0.75 * np.sqrt(p)
    rng = np.random.default_rng(seed)

    bins = [_quartile_bins(train[:, j]) for j in range(p)]
    inst_bins = np.array([_bin_of(x[j], bins[j][0]) for j in range(p)])
    n_bins = np.array([len(b[0]) + 1 for b in bins])

    # Row 0 is the instance itself; the rest resample bins uniformly and
    # draw a value inside the chosen bin.
    z = np.ones((n_samples, p))
    values = np.tile(x, (n_samples, 1))
    sampled = rng.integers(0, n_bins[None, :], size=(n_samples, p))
    uniforms = rng.random((n_samples, p))
    for j in range(p):
        boundaries, lo, hi = bins[j]
        for i in range(1, n_samples):
            b = int(sampled[i, j])
            z[i, j] = 1.0 if b == inst_bins[j] else 0.0
            left, right = _bin_range(b, boundaries, lo, hi)
            values[i, j] = left + uniforms[i, j] * (right - left)

    y = np.asarray([float(predict_fn(values[i])) for i in range(n_samples)])
    dist_sq = (1.0 - z).sum(axis=1)  # squared euclidean on binary rows
    kernel = np.exp(-dist_sq / kernel_width**2)

    # Weighted ridge with unpenalized intercept.
    design = np.concatenate([np.ones((n_samples, 1)), z], axis=1)
    wd = design * kernel[:, None]
    gram = design.T @ wd
    gram[1:, 1:] += ridge * np.eye(p)
    coef = np.linalg.solve(gram, wd.T @ y)
    intercept, weights = float(coef[0]), coef[1:]

    fitted = design @ coef
    y_mean = float((kernel * y).sum() / kernel.sum())
    ss_tot = float((kernel * (y - y_mean) ** 2).sum())
    ss_res = float((kernel * (y - fitted) ** 2).sum())
    # zero-variance targets (constant scorers) get fidelity 0 by convention;
    # the threshold is relative so float noise does not masquerade as signal
    if ss_tot <= 1e-12 * max(float((kernel * y**2).sum()), 1.0):
        fidelity = 0.0
    else:
        fidelity = 1.0 - ss_res / ss_tot

    entries = [
        FeatureExplanation(
            feature=feature_names[j],
            condition=_condition(feature_names[j], int(inst_bins[j]), bins[j][0]),
            weight=float(weights[j]),
            direction="defective" if weights[j] > 0 else "clean",
        )
        for j in range(p)
    ]
    entries.sort(key=lambda e: -abs(e.weight))
    return Explanation(entries=tuple(entries), fidelity=fidelity, intercept=intercept)

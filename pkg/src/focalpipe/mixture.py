"""Grid-distance featurization of boxes and Gaussian-mixture clustering by EM.

Each ground-truth box is described by the vector of offsets from a fixed grid
of image points to the box center. A diagonal-covariance Gaussian mixture is
fit to these vectors per image; the number of components grows
logarithmically with the number of boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .boxgeom import Box

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FeatureGrid:
    """Evenly sampled grid of reference points over an image.

    Point (r, c) sits at (((c + 0.5) / cols) * image_width,
    ((r + 0.5) / rows) * image_height).
    """

    rows: int
    cols: int
    image_width: float
    image_height: float

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one row and column")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")

    @property
    def dim(self) -> int:
        return 2 * self.rows * self.cols

    def points(self) -> np.ndarray:
        """Grid points in row-major order, shape (rows*cols, 2)."""
        cs = (np.arange(self.cols) + 0.5) / self.cols * self.image_width
        rs = (np.arange(self.rows) + 0.5) / self.rows * self.image_height
        gx, gy = np.meshgrid(cs, rs)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


@dataclass(frozen=True)
class EmConfig:
    max_iterations: int = 100
    tolerance: float = 1e-4
    covariance_floor: float = 1.0
    rng_seed: int = 0
    restarts: int = 3

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.covariance_floor <= 0:
            raise ValueError("covariance_floor must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class MixtureModel:
    """Fitted diagonal-covariance Gaussian mixture.

    weights: (k,), sums to 1. means: (k, dim). variances: (k, dim), the
    diagonals of the component covariances, floored during fitting.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    grid: Optional[FeatureGrid] = None
    log_likelihood: float = float("-inf")
    ll_history: list[float] = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_json_dict(self) -> dict:
        out = {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "log_likelihood": self.log_likelihood,
        }
        if self.grid is not None:
            out["grid"] = {
                "rows": self.grid.rows,
                "cols": self.grid.cols,
                "image_width": self.grid.image_width,
                "image_height": self.grid.image_height,
            }
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "MixtureModel":
        grid = None
        if "grid" in d:
            grid = FeatureGrid(**d["grid"])
        return cls(
            weights=np.asarray(d["weights"], dtype=float),
            means=np.asarray(d["means"], dtype=float),
            variances=np.asarray(d["variances"], dtype=float),
            grid=grid,
            log_likelihood=float(d.get("log_likelihood", float("-inf"))),
        )


class Posterior(NamedTuple):
    probs: np.ndarray
    nearest_mean_fallback: bool


def num_focal_regions(n_gt: int) -> int:
    """Cluster count for an image with n_gt ground-truth boxes.

    floor(log2(n_gt)) + 2, clamped so there are never more clusters than
    boxes.
    """
    if n_gt <= 0:
        raise ValueError("no ground truth: cannot choose a region count")
    return min(int(n_gt).bit_length() - 1 + 2, n_gt)


def featurize(boxes: Sequence[Box], grid: FeatureGrid) -> np.ndarray:
    """Distance vectors from grid points to box centers, shape (n, 2*rows*cols).

    Entry pair k of a row is (center_x - grid_x_k, center_y - grid_y_k) for
    grid point k in row-major order. Box extent is intentionally not part of
    the feature.
    """
    if not boxes:
        raise ValueError("featurize requires at least one box")
    centers = np.array([b.center for b in boxes], dtype=float)  # (n, 2)
    deltas = centers[:, None, :] - grid.points()[None, :, :]  # (n, P, 2)
    return deltas.reshape(len(boxes), grid.dim)


def _log_gaussians(x: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Per-component diagonal-Gaussian log densities; x (n, d) -> (n, k)."""
    diff = x[:, None, :] - means[None, :, :]  # (n, k, d)
    maha = np.sum(diff * diff / variances[None, :, :], axis=2)
    log_norm = np.sum(np.log(variances), axis=1) + variances.shape[1] * LOG_2PI
    return -0.5 * (maha + log_norm[None, :])


def _kmeanspp_means(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding: first mean uniform, rest by squared distance."""
    n = len(x)
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        d2 = np.min(
            np.sum((x[:, None, :] - x[chosen][None, :, :]) ** 2, axis=2), axis=1
        )
        total = d2.sum()
        if total <= 0:
            chosen.append(int(rng.integers(n)))
            continue
        chosen.append(int(rng.choice(n, p=d2 / total)))
    return x[chosen].copy()


def _em_single_run(
    x: np.ndarray, k: int, cfg: EmConfig, rng: np.random.Generator
) -> MixtureModel:
    n, d = x.shape
    means = _kmeanspp_means(x, k, rng)
    weights = np.full(k, 1.0 / k)
    global_var = np.maximum(np.var(x, axis=0), cfg.covariance_floor)
    variances = np.tile(global_var, (k, 1))

    history: list[float] = []
    prev_ll = float("-inf")
    for _ in range(cfg.max_iterations):
        log_joint = np.log(weights)[None, :] + _log_gaussians(x, means, variances)
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(np.sum(log_norm))
        history.append(ll)
        resp = np.exp(log_joint - log_norm[:, None])  # (n, k)

        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        diff2 = (x[:, None, :] - means[None, :, :]) ** 2
        variances = np.einsum("nk,nkd->kd", resp, diff2) / nk[:, None]
        variances = np.maximum(variances, cfg.covariance_floor)

        if prev_ll != float("-inf") and abs(ll - prev_ll) < cfg.tolerance:
            break
        prev_ll = ll

    final_ll = float(
        np.sum(
            logsumexp(
                np.log(weights)[None, :] + _log_gaussians(x, means, variances), axis=1
            )
        )
    )
    history.append(final_ll)
    return MixtureModel(
        weights=weights,
        means=means,
        variances=variances,
        log_likelihood=final_ll,
        ll_history=history,
    )


def fit_em(
    features: np.ndarray | Sequence[Sequence[float]],
    k: int,
    cfg: EmConfig = EmConfig(),
    grid: Optional[FeatureGrid] = None,
) -> MixtureModel:
    """Fit a k-component diagonal Gaussian mixture by expectation maximization.

    Runs cfg.restarts seeded restarts and returns the run with the best final
    log likelihood. Deterministic for a fixed cfg.rng_seed.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D array of equal-length vectors")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature values")
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(x) < k:
        raise ValueError(f"cannot fit {k} components to {len(x)} samples")

    best: Optional[MixtureModel] = None
    root = np.random.SeedSequence(cfg.rng_seed)
    for child in root.spawn(cfg.restarts):
        model = _em_single_run(x, k, cfg, np.random.default_rng(child))
        if best is None or model.log_likelihood > best.log_likelihood:
            best = model
    assert best is not None
    best.grid = grid
    return best


def posterior(model: MixtureModel, x: np.ndarray | Sequence[float]) -> Posterior:
    """Component membership probabilities for one feature vector.

    If every component density underflows to zero, falls back to a one-hot
    assignment at the nearest mean and flags the result.
    """
    v = np.asarray(x, dtype=float)
    if v.shape != (model.dim,):
        raise ValueError(f"feature length {v.shape} does not match model dim {model.dim}")
    with np.errstate(divide="ignore"):
        log_joint = np.log(model.weights) + _log_gaussians(
            v[None, :], model.means, model.variances
        )[0]
    # max-shifted log-sum-exp inline: scipy's logsumexp carries too much
    # per-call overhead for this hot single-vector path
    shift = log_joint.max()
    if np.isfinite(shift):
        norm = shift + np.log(np.exp(log_joint - shift).sum())
    else:
        norm = shift
    # fallback when the mixture density underflows to zero in linear space
    if not np.isfinite(norm) or np.exp(norm) == 0.0:
        nearest = int(np.argmin(np.sum((model.means - v[None, :]) ** 2, axis=1)))
        probs = np.zeros(model.n_components)
        probs[nearest] = 1.0
        return Posterior(probs=probs, nearest_mean_fallback=True)
    return Posterior(probs=np.exp(log_joint - norm), nearest_mean_fallback=False)


def assign_clusters(
    model: MixtureModel, features: np.ndarray | Sequence[Sequence[float]]
) -> list[int]:
    """Hard cluster assignment: argmax posterior, ties to the lowest index."""
    x = np.asarray(features, dtype=float)
    return [int(np.argmax(posterior(model, row).probs)) for row in x]

"""Fitting MS-SSIM scale weights to triplet similarity judgments.

A triplet ``(i, j, k)`` with label 1 states that image ``i`` looks more like
``j`` than like ``k``. Weights are fitted by mini-batch gradient descent on
the squared similarity gap of misordered triplets plus a barrier that keeps
every weight inside (0, 1). Gradients are taken numerically.
"""

from __future__ import annotations

import csv
import threading
import warnings
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from vizsim.imagecore import ImageRGB, to_grayscale
from vizsim.msssim import MsSsimParams, ScaleComponents, combine_yuv, scale_components, yuv_components


class WeightDomainError(ValueError):
    """Weights outside the open interval where the regularizer is defined."""


@dataclass(frozen=True)
class Triplet:
    """Anchor ``i``, candidates ``j`` and ``k``; ``label`` is 1 iff ``i`` is closer to ``j``."""

    i: Hashable
    j: Hashable
    k: Hashable
    label: int = 1

    def __post_init__(self):
        if len({self.i, self.j, self.k}) != 3:
            raise ValueError(f"triplet ids must be distinct: {(self.i, self.j, self.k)}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class TuneConfig:
    learning_rate: float = 0.5
    batch_size: int = 16
    epochs: int = 40
    grad_epsilon: float = 1e-3
    alpha: float = 0.5
    reg_scale: float = 1e-4
    seed: int = 0
    weight_bounds: tuple[float, float] = (0.01, 0.99)
    init_weight: float = 0.5

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be at least 1")
        if not self.grad_epsilon > 0:
            raise ValueError("grad_epsilon must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.alpha > 1:
            warnings.warn(
                f"alpha={self.alpha} > 1 makes the regularizer favour weights near 0 and 1",
                stacklevel=3,
            )
        if self.reg_scale < 0:
            raise ValueError("reg_scale must be non-negative")
        lo, hi = self.weight_bounds
        if not 0 < lo < hi < 1:
            raise ValueError(f"weight_bounds {self.weight_bounds} must lie strictly inside (0, 1)")
        if not lo <= self.init_weight <= hi:
            raise ValueError("init_weight outside weight_bounds")


class ImageStore:
    """Images by id, with memoized weight-independent MS-SSIM components.

    Pair components are cached under an unordered key, so ``s(a, b)`` and
    ``s(b, a)`` share one entry. The cache may be read from several threads.
    """

    def __init__(self, images: Mapping[Hashable, object], params: MsSsimParams | None = None):
        self.images = dict(images)
        self.params = params or MsSsimParams()
        self._cache: dict = {}
        self._lock = threading.Lock()

    def __contains__(self, key) -> bool:
        return key in self.images

    def _components(self, a, b):
        key = (a, b) if repr(a) <= repr(b) else (b, a)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        for x in key:
            if x not in self.images:
                raise KeyError(f"unknown image id {x!r}")
        x, y = self.images[key[0]], self.images[key[1]]
        if isinstance(x, ImageRGB):
            if self.params.color_mode == "yuv":
                parts = yuv_components(x, y, self.params)
            else:
                parts = scale_components(to_grayscale(x), to_grayscale(y), self.params)
        else:
            parts = scale_components(x, y, self.params)
        with self._lock:
            self._cache.setdefault(key, parts)
        return parts

    def similarity(self, a, b, weights: Sequence[float]) -> float:
        parts = self._components(a, b)
        if isinstance(parts, ScaleComponents):
            return parts.combine(weights)
        return combine_yuv(parts, weights)


def triplet_label(i, j, k, weights: Sequence[float], store: ImageStore) -> int:
    """1 if ``s(i, j) >= s(i, k)`` under ``weights``, else 0."""
    return int(store.similarity(i, j, weights) >= store.similarity(i, k, weights))


def regularizer(weights: Sequence[float], alpha: float) -> float:
    """``sum w^(alpha-1) (1-w)^(alpha-1)``; defined only on the open interval (0, 1)."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0) or np.any(w >= 1):
        raise WeightDomainError(f"weights {w.tolist()} must lie strictly inside (0, 1)")
    return float(np.sum(w ** (alpha - 1.0) * (1.0 - w) ** (alpha - 1.0)))


def data_loss(batch: Iterable[Triplet], weights: Sequence[float], store: ImageStore) -> float:
    total = 0.0
    for t in batch:
        sij = store.similarity(t.i, t.j, weights)
        sik = store.similarity(t.i, t.k, weights)
        if int(sij >= sik) != t.label:
            total += (sij - sik) ** 2
    return total


def triplet_loss(batch: Sequence[Triplet], weights: Sequence[float], cfg: TuneConfig, store: ImageStore) -> float:
    """Squared similarity gap over misordered triplets plus ``reg_scale * R(W)``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    reg = regularizer(weights, cfg.alpha)
    return data_loss(batch, weights, store) + cfg.reg_scale * reg


def accuracy(triplets: Sequence[Triplet], weights: Sequence[float], store: ImageStore) -> float:
    if not triplets:
        return float("nan")
    hits = sum(triplet_label(t.i, t.j, t.k, weights, store) == t.label for t in triplets)
    return hits / len(triplets)


class Gradient(NamedTuple):
    values: np.ndarray
    one_sided: tuple[bool, ...]

    @property
    def clipped(self) -> bool:
        return any(self.one_sided)


def numeric_gradient(
    loss_at: Callable[[np.ndarray], float],
    weights: Sequence[float],
    eps: float,
    domain: tuple[float, float] = (0.0, 1.0),
) -> Gradient:
    """Central differences; falls back to a one-sided step where ``w +- eps`` leaves ``domain``."""
    w = np.asarray(weights, dtype=np.float64)
    lo, hi = domain
    grad = np.zeros_like(w)
    flags = []
    for i in range(w.size):
        up_ok = w[i] + eps < hi
        down_ok = w[i] - eps > lo
        wp, wm = w.copy(), w.copy()
        if up_ok and down_ok:
            wp[i] += eps
            wm[i] -= eps
            grad[i] = (loss_at(wp) - loss_at(wm)) / (2.0 * eps)
            flags.append(False)
        elif up_ok:
            wp[i] += eps
            grad[i] = (loss_at(wp) - loss_at(wm)) / eps
            flags.append(True)
        elif down_ok:
            wm[i] -= eps
            grad[i] = (loss_at(wp) - loss_at(wm)) / eps
            flags.append(True)
        else:
            raise WeightDomainError(f"eps={eps} too large for domain {domain} at w{i + 1}={w[i]}")
    return Gradient(grad, tuple(flags))


class EpochRecord(NamedTuple):
    epoch: int
    loss: float
    holdout_accuracy: float
    weights: tuple[float, ...]


class FitResult(NamedTuple):
    weights: tuple[float, ...]
    trace: list[EpochRecord]


def sgd_fit(
    triplets: Sequence[Triplet],
    cfg: TuneConfig,
    store: ImageStore,
    holdout: Sequence[Triplet] = (),
    scales: int | None = None,
) -> FitResult:
    """Seeded mini-batch descent on :func:`triplet_loss`.

    The trace starts with the initial weights as epoch 0; each later record
    holds the full training-set loss after that epoch.
    """
    if not triplets:
        raise ValueError("need at least one triplet")
    triplets = list(triplets)
    k = scales or store.params.scales
    lo, hi = cfg.weight_bounds
    w = np.full(k, cfg.init_weight)
    rng = np.random.default_rng(cfg.seed)

    def record(epoch):
        return EpochRecord(
            epoch,
            float(triplet_loss(triplets, w, cfg, store)),
            float(accuracy(holdout, w, store)),
            tuple(float(v) for v in w),
        )

    trace = [record(0)]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(triplets))
        for start in range(0, len(order), cfg.batch_size):
            batch = [triplets[i] for i in order[start : start + cfg.batch_size]]
            g = numeric_gradient(lambda v: triplet_loss(batch, v, cfg, store), w, cfg.grad_epsilon)
            w = np.clip(w - cfg.learning_rate * g.values, lo, hi)
        trace.append(record(epoch))
    return FitResult(tuple(float(v) for v in w), trace)


# ---------------------------------------------------------------------------
# triplet sources


def triplets_from_distances(d, ids: Sequence[Hashable] | None = None) -> list[Triplet]:
    """Every non-tied ``(anchor, nearer, farther)`` triple implied by a distance matrix."""
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    ids = list(range(n)) if ids is None else list(ids)
    out = []
    for i in range(n):
        for j in range(n):
            for k in range(j + 1, n):
                if i in (j, k):
                    continue
                if d[i, j] < d[i, k]:
                    out.append(Triplet(ids[i], ids[j], ids[k], 1))
                elif d[i, k] < d[i, j]:
                    out.append(Triplet(ids[i], ids[k], ids[j], 1))
    return out


def triplets_from_clustering(
    clustering, ids: Sequence[Hashable] | None = None, limit: int | None = None, seed: int = 0
) -> list[Triplet]:
    """Anchor ``i``, positive from ``i``'s group, negative from a different group.

    Exhaustive unless ``limit`` is given, in which case a seeded sample of that
    size is returned.
    """
    labels = clustering.labels()
    n = len(labels)
    ids = list(range(n)) if ids is None else list(ids)
    out = []
    for i in range(n):
        for j in range(n):
            if j == i or labels[j] != labels[i]:
                continue
            for k in range(n):
                if labels[k] != labels[i]:
                    out.append(Triplet(ids[i], ids[j], ids[k], 1))
    if limit is not None and limit < len(out):
        pick = np.sort(np.random.default_rng(seed).choice(len(out), size=limit, replace=False))
        out = [out[p] for p in pick]
    return out


def split_holdout(triplets: Sequence[Triplet], fraction: float = 0.2, seed: int = 0):
    """Seeded train/holdout split."""
    order = np.random.default_rng(seed).permutation(len(triplets))
    n_hold = int(round(len(triplets) * fraction))
    hold = [triplets[i] for i in sorted(order[:n_hold])]
    train = [triplets[i] for i in sorted(order[n_hold:])]
    return train, hold


# ---------------------------------------------------------------------------
# synthetic stimuli


def _smooth_field(rng: np.random.Generator, size: int, blobs: int, scale: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    f = np.zeros((size, size))
    for _ in range(blobs):
        cy, cx = rng.uniform(0, size, 2)
        amp = rng.uniform(-1.0, 1.0)
        f += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * scale**2))
    return f / max(np.abs(f).max(), 1e-12)


def coarse_scale_triplets(
    n: int, size: int = 64, seed: int = 0
) -> tuple[dict[str, np.ndarray], list[Triplet]]:
    """Synthetic triplets that are only ordered correctly by coarse scales.

    Each anchor is a smooth random field. The positive adds pixel-level noise,
    which is large at full resolution but averages away after a few 2x
    downsamplings. The negative adds a broad, low-frequency bump pattern that
    barely changes 3x3 neighbourhoods but alters the coarse pyramid levels.
    Uniform weights therefore prefer the negative; the label says otherwise.
    """
    rng = np.random.default_rng(seed)
    images: dict[str, np.ndarray] = {}
    triplets = []
    for t in range(n):
        base = 0.5 + 0.3 * _smooth_field(rng, size, 6, size / 6.0)
        noisy = base + rng.uniform(0.04, 0.08) * rng.standard_normal((size, size))
        shifted = base + rng.uniform(0.15, 0.30) * _smooth_field(rng, size, 4, size / 5.0)
        ids = (f"a{t}", f"p{t}", f"n{t}")
        for key, img in zip(ids, (base, noisy, shifted)):
            images[key] = np.clip(img, 0.0, 1.0)
        triplets.append(Triplet(*ids, 1))
    return images, triplets


# ---------------------------------------------------------------------------
# files


def read_triplets_csv(path) -> list[Triplet]:
    """``anchor,positive,negative`` rows (optional ``label`` column, default 1)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"anchor", "positive", "negative"}
        if not need <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: expected columns anchor,positive,negative")
        return [
            Triplet(r["anchor"], r["positive"], r["negative"], int(r.get("label") or 1)) for r in reader
        ]


def write_triplets_csv(triplets: Iterable[Triplet], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["anchor", "positive", "negative", "label"])
        for t in triplets:
            w.writerow([t.i, t.j, t.k, t.label])


def read_manifest_csv(path) -> dict[str, str]:
    """``id,path`` rows mapping image ids to files."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"id", "path"} <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: expected columns id,path")
        return {r["id"]: r["path"] for r in reader}


def write_trace_csv(trace: Sequence[EpochRecord], path) -> None:
    """``epoch,loss,holdout_accuracy`` followed by one column per weight."""
    k = len(trace[0].weights) if trace else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "holdout_accuracy"] + [f"w{i + 1}" for i in range(k)])
        for r in trace:
            w.writerow([r.epoch, repr(r.loss), repr(r.holdout_accuracy)] + [repr(v) for v in r.weights])

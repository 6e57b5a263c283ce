"""Simulated dataset families and visual discriminability benchmarks.

Global discriminability is the mean pairwise distance among renders of
datasets simulated from one source; local discriminability is the distance
between a render and the render of the same data with two categories' Q1
values exchanged.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from vizsim.msssim import MsSsimParams, image_similarity, similarity_to_distance
from vizsim.render import ENCODINGS, DatasetTable, EncodingSpec, render

ENTROPY_SCALE = {"low": 0.5, "medium": 1.0, "high": 1.5}
# fraction of the full Q2 range used by the reference table
Q2_SPREAD = {"low": 0.5, "medium": 0.8, "high": 1.0}


class BenchmarkError(RuntimeError):
    """Rendering or scoring failed for a specific table in a benchmark."""


class CategoryModel(NamedTuple):
    mean: float
    sd: float


def fit_category_models(data: DatasetTable) -> dict:
    """Per-category mean and population standard deviation of Q1."""
    models = {}
    for label in data.category_order:
        rows = data.rows_of(label)
        if rows.size == 0:
            continue
        if rows.size < 2:
            raise ValueError(f"category {label!r} has {rows.size} row; at least 2 are needed")
        q = data.q1[rows]
        models[label] = CategoryModel(float(np.mean(q)), float(np.std(q)))
    return models


def simulate_replacements(
    data: DatasetTable,
    models: Mapping,
    n: int,
    seed: int,
    domain: tuple[float, float] = (0.0, 1.0),
    sd_scale: float = 1.0,
) -> list[DatasetTable]:
    """``n`` copies of ``data`` with Q1 redrawn from each row's category model.

    Categories and Q2 are kept. Draws are Gaussian, clamped to ``domain``,
    and consumed from one seeded generator in row order.
    """
    missing = [c for c in set(data.category) if c not in models]
    if missing:
        raise KeyError(f"no model for categories {sorted(map(str, missing))}")
    rng = np.random.default_rng(seed)
    means = np.array([models[c].mean for c in data.category])
    sds = np.array([models[c].sd for c in data.category]) * sd_scale
    out = []
    for _ in range(n):
        q1 = means + sds * rng.standard_normal(len(data))
        out.append(data.with_q1(np.clip(q1, domain[0], domain[1])))
    return out


def swap_categories(data: DatasetTable, a, b) -> DatasetTable:
    """Exchange Q1 values between categories ``a`` and ``b`` position by position."""
    if a == b:
        raise ValueError("swap needs two different categories")
    ra, rb = data.rows_of(a), data.rows_of(b)
    for lab, rows in ((a, ra), (b, rb)):
        if rows.size == 0:
            raise ValueError(f"category {lab!r} not present")
    if ra.size != rb.size:
        raise ValueError(f"cannot swap {a!r} ({ra.size} rows) with {b!r} ({rb.size} rows)")
    q1 = data.q1.copy()
    q1[ra], q1[rb] = data.q1[rb], data.q1[ra]
    return data.with_q1(q1)


def reference_table(
    cardinality: int,
    per_category: int,
    seed: int,
    base_sd: float = 0.08,
    q2_spread: float = 1.0,
) -> DatasetTable:
    """Stand-in source dataset: Gaussian Q1 clusters per category, uniform Q2.

    Category means are spread uniformly over [0.2, 0.8]; ``q2_spread`` narrows
    the Q2 range around 0.5 (1.0 uses [0.05, 0.95]).
    """
    rng = np.random.default_rng(seed)
    labels = [f"c{i:02d}" for i in range(cardinality)]
    means = rng.uniform(0.2, 0.8, cardinality)
    half = 0.45 * q2_spread
    rows = []
    for lab, mu in zip(labels, means):
        q1 = np.clip(mu + base_sd * rng.standard_normal(per_category), 0.0, 1.0)
        q2 = rng.uniform(0.5 - half, 0.5 + half, per_category)
        rows.extend((lab, float(x), float(y)) for x, y in zip(q1, q2))
    return DatasetTable.from_rows(rows, labels)


@dataclass(frozen=True)
class BenchmarkCondition:
    cardinality: int = 3
    per_category: int = 30
    encoding: str = "y_x_color"
    replicates: int = 20
    seed: int = 0
    entropy_q1: str = "medium"
    entropy_q2: str = "medium"

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.replicates < 2:
            raise ValueError("replicates must be at least 2")
        if self.cardinality < 1 or self.per_category < 2:
            raise ValueError("need cardinality >= 1 and per_category >= 2")
        for nm in ("entropy_q1", "entropy_q2"):
            if getattr(self, nm) not in ENTROPY_SCALE:
                raise ValueError(f"{nm} must be one of {sorted(ENTROPY_SCALE)}")

    def factors(self) -> dict:
        return {
            "cardinality": self.cardinality,
            "per_category": self.per_category,
            "entropy_q1": self.entropy_q1,
            "entropy_q2": self.entropy_q2,
        }


@dataclass(frozen=True)
class DiscriminabilityScore:
    condition: BenchmarkCondition
    score: float
    pair_count: int
    kind: str = "global"

    @property
    def encoding(self) -> str:
        return self.condition.encoding


def _render_all(tables: Sequence[DatasetTable], spec: EncodingSpec):
    images = []
    for idx, t in enumerate(tables):
        try:
            images.append(render(t, spec))
        except ValueError as exc:
            raise BenchmarkError(f"table {idx}: {exc}") from exc
    return images


def _distance(a, b, params: MsSsimParams) -> float:
    return similarity_to_distance(image_similarity(a, b, params))


def global_discriminability(
    cond: BenchmarkCondition,
    tables: Sequence[DatasetTable],
    params: MsSsimParams | None = None,
    spec: EncodingSpec | None = None,
) -> DiscriminabilityScore:
    """Mean distance over all unordered pairs of rendered tables."""
    if len(tables) < 2:
        raise ValueError("need at least two tables")
    params = params or MsSsimParams()
    spec = EncodingSpec(name=cond.encoding) if spec is None else spec
    images = _render_all(tables, spec)
    total, count = 0.0, 0
    for i in range(len(images)):
        for j in range(i + 1, len(images)):
            total += _distance(images[i], images[j], params)
            count += 1
    return DiscriminabilityScore(cond, total / count, count, "global")


def local_discriminability(
    cond: BenchmarkCondition,
    pairs: Sequence[tuple[DatasetTable, DatasetTable]],
    params: MsSsimParams | None = None,
    spec: EncodingSpec | None = None,
) -> DiscriminabilityScore:
    """Mean distance between each (original, swapped) pair of renders."""
    if not pairs:
        raise ValueError("need at least one pair")
    params = params or MsSsimParams()
    spec = EncodingSpec(name=cond.encoding) if spec is None else spec
    total = 0.0
    for a, b in pairs:
        ia, ib = _render_all([a, b], spec)
        total += _distance(ia, ib, params)
    return DiscriminabilityScore(cond, total / len(pairs), len(pairs), "local")


def _spec_for(cond: BenchmarkCondition, spec: EncodingSpec | None) -> EncodingSpec:
    return EncodingSpec(name=cond.encoding) if spec is None else replace(spec, name=cond.encoding)


def run_global(
    cond: BenchmarkCondition,
    params: MsSsimParams | None = None,
    spec: EncodingSpec | None = None,
    sd_multiplier: float = 1.0,
) -> DiscriminabilityScore:
    """Reference table -> fitted models -> replicates -> global score."""
    source = reference_table(cond.cardinality, cond.per_category, cond.seed, q2_spread=Q2_SPREAD[cond.entropy_q2])
    models = fit_category_models(source)
    tables = simulate_replacements(
        source, models, cond.replicates, cond.seed + 1, sd_scale=ENTROPY_SCALE[cond.entropy_q1] * sd_multiplier
    )
    return global_discriminability(cond, tables, params, _spec_for(cond, spec))


def run_local(
    cond: BenchmarkCondition,
    params: MsSsimParams | None = None,
    spec: EncodingSpec | None = None,
) -> DiscriminabilityScore:
    """``cond.replicates`` swap pairs, each from a fresh reference table and a random category pair."""
    if cond.cardinality < 2:
        raise ValueError("local discriminability needs at least two categories")
    rng = np.random.default_rng(cond.seed)
    pairs = []
    for r in range(cond.replicates):
        source = reference_table(
            cond.cardinality, cond.per_category, cond.seed + 1000 + r, q2_spread=Q2_SPREAD[cond.entropy_q2]
        )
        a, b = rng.choice(cond.cardinality, size=2, replace=False)
        labels = source.category_order
        pairs.append((source, swap_categories(source, labels[a], labels[b])))
    return local_discriminability(cond, pairs, params, _spec_for(cond, spec))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 3:
        raise ValueError("need at least 3 observations")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ValueError("zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(max(r, -1.0), 1.0)


class RankRow(NamedTuple):
    group_by: str
    group: str
    rank: int
    encoding: str
    mean_score: float
    tied: bool


def rank_encodings(scores: Sequence[DiscriminabilityScore], group_by: str | None = None) -> list[RankRow]:
    """Encodings ordered by mean score (descending) within each factor level.

    Equal means are ordered alphabetically and flagged as tied.
    """
    if not scores:
        raise ValueError("no scores to rank")
    key = group_by or "all"
    groups: dict = defaultdict(lambda: defaultdict(list))
    for s in scores:
        level = "all" if group_by is None else str(s.condition.factors()[group_by])
        groups[level][s.encoding].append(s.score)
    out = []
    for level in sorted(groups, key=_level_key):
        means = {e: float(np.mean(v)) for e, v in groups[level].items()}
        if not means:
            raise ValueError(f"empty group {level!r}")
        order = sorted(means, key=lambda e: (-means[e], e))
        for rank, e in enumerate(order, start=1):
            tied = sum(1 for m in means.values() if m == means[e]) > 1
            out.append(RankRow(key, level, rank, e, means[e], tied))
    return out


def _level_key(level: str):
    try:
        return (0, float(level), level)
    except ValueError:
        return (1, 0.0, level)


def aggregate_scores(scores: Sequence[DiscriminabilityScore], factor: str) -> dict:
    """Mean score per ``(encoding, "factor=level")``."""
    acc: dict = defaultdict(list)
    for s in scores:
        acc[(s.encoding, f"{factor}={s.condition.factors()[factor]}")].append(s.score)
    return {k: float(np.mean(v)) for k, v in acc.items()}


def correlate_with_accuracy(
    scores: Sequence[DiscriminabilityScore], accuracy: Mapping[tuple[str, str], float], factors: Sequence[str]
) -> list[tuple[str, int, float]]:
    """Pearson r between aggregated scores and empirical accuracy.

    ``accuracy`` maps ``(encoding, "factor=level")`` to an accuracy value.
    One row per factor level (correlating across encodings) plus an ``all``
    row pooling every matched point. Levels with fewer than three matched
    encodings are reported with ``nan``.
    """
    rows = []
    pooled_x, pooled_y = [], []
    for f in factors:
        agg = aggregate_scores(scores, f)
        levels = sorted({lvl for _, lvl in agg}, key=lambda s: _level_key(s.split("=", 1)[1]))
        for lvl in levels:
            keys = sorted(k for k in agg if k[1] == lvl and k in accuracy)
            xs = [agg[k] for k in keys]
            ys = [accuracy[k] for k in keys]
            pooled_x += xs
            pooled_y += ys
            try:
                r = pearson(xs, ys)
            except ValueError:
                r = float("nan")
            rows.append((lvl, len(keys), r))
    try:
        r_all = pearson(pooled_x, pooled_y)
    except ValueError:
        r_all = float("nan")
    rows.append(("all", len(pooled_x), r_all))
    return rows


def read_accuracy_csv(path) -> dict:
    """``encoding,factor,accuracy`` rows, keyed by ``(encoding, factor)``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"encoding", "factor", "accuracy"} <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: expected columns encoding,factor,accuracy")
        return {(r["encoding"], r["factor"]): float(r["accuracy"]) for r in reader}


SCORE_COLUMNS = ["kind", "encoding", "cardinality", "per_category", "entropy_q1", "entropy_q2", "replicates", "seed", "score", "pair_count"]


def write_scores_csv(scores: Sequence[DiscriminabilityScore], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCORE_COLUMNS)
        for s in scores:
            c = asdict(s.condition)
            w.writerow([s.kind, s.encoding, c["cardinality"], c["per_category"], c["entropy_q1"], c["entropy_q2"],
                        c["replicates"], c["seed"], repr(s.score), s.pair_count])


def write_rankings_csv(rows: Sequence[RankRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group_by", "group", "rank", "encoding", "mean_score", "tied"])
        for r in rows:
            w.writerow([r.group_by, r.group, r.rank, r.encoding, repr(r.mean_score), int(r.tied)])


def write_correlations_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["factor", "n", "pearson_r"])
        for f, n, r in rows:
            w.writerow([f, n, repr(r)])


def read_scores_csv(path) -> list[DiscriminabilityScore]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SCORE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for r in reader:
            cond = BenchmarkCondition(
                cardinality=int(r["cardinality"]),
                per_category=int(r["per_category"]),
                encoding=r["encoding"],
                replicates=int(r["replicates"]),
                seed=int(r["seed"]),
                entropy_q1=r["entropy_q1"],
                entropy_q2=r["entropy_q2"],
            )
            out.append(DiscriminabilityScore(cond, float(r["score"]), int(r["pair_count"]), r["kind"]))
        return out

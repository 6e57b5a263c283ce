"""Distance matrices, Ward agglomeration, consensus distances and
cluster-agreement indices."""

from __future__ import annotations

import csv
import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln

from vizsim.imagecore import ImageRGB, to_grayscale
from vizsim.msssim import (
    MsSsimParams,
    combine_yuv,
    scale_components,
    similarity_to_distance,
    yuv_components,
)


class MembershipError(ValueError):
    """An item is missing from a clustering, or a hard clustering overlaps."""


def check_distance_matrix(d, tol: float = 0.0) -> np.ndarray:
    """Validate a square, symmetric, zero-diagonal matrix with entries in [0, 1]."""
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("distance matrix has non-finite entries")
    if np.any(np.abs(d - d.T) > tol):
        raise ValueError("distance matrix is not symmetric")
    if np.any(np.diag(d) != 0):
        raise ValueError("distance matrix diagonal must be zero")
    if d.min() < 0 or d.max() > 1:
        raise ValueError("distance matrix entries must lie in [0, 1]")
    return d


@dataclass(frozen=True)
class Clustering:
    """Groups of item indices ``0..n-1``.

    Hard clusterings are disjoint and cover every item. ``overlapping=True``
    relaxes disjointness for empirical groupings (items may sit in several
    groups), but every item must still appear somewhere.
    """

    n: int
    groups: tuple[frozenset, ...]
    overlapping: bool = False

    def __post_init__(self):
        groups = tuple(frozenset(int(i) for i in g) for g in self.groups)
        groups = tuple(g for g in groups if g)
        seen: set[int] = set()
        for g in groups:
            bad = [i for i in g if not 0 <= i < self.n]
            if bad:
                raise MembershipError(f"item ids {sorted(bad)} outside 0..{self.n - 1}")
            if not self.overlapping and seen & g:
                raise MembershipError(f"items {sorted(seen & g)} appear in more than one group")
            seen |= g
        missing = set(range(self.n)) - seen
        if missing:
            raise MembershipError(f"items {sorted(missing)} are not in any group")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_labels(cls, labels: Sequence) -> "Clustering":
        by: dict = {}
        for i, lab in enumerate(labels):
            by.setdefault(lab, []).append(i)
        return cls(len(labels), tuple(frozenset(v) for v in by.values()))

    def labels(self) -> np.ndarray:
        """Group index per item (hard clusterings only)."""
        if self.overlapping:
            raise MembershipError("overlapping clustering has no single label per item")
        out = np.empty(self.n, dtype=np.int64)
        for gi, g in enumerate(self.groups):
            out[list(g)] = gi
        return out

    def membership(self) -> np.ndarray:
        m = np.zeros((self.n, len(self.groups)), dtype=np.int64)
        for gi, g in enumerate(self.groups):
            m[list(g), gi] = 1
        return m

    def canonical(self) -> tuple[tuple[int, ...], ...]:
        return tuple(sorted(tuple(sorted(g)) for g in self.groups))


# ---------------------------------------------------------------------------
# distances


def distance_matrix(images: Sequence, params: MsSsimParams | None = None) -> np.ndarray:
    """Pairwise ``(1 - MS-SSIM) / 2`` distances.

    Colour images use ``params.color_mode``; bare planes use grayscale MS-SSIM.
    Only the upper triangle is computed.
    """
    params = params or MsSsimParams()
    n = len(images)
    if n < 2:
        raise ValueError("need at least two images")
    shapes = [im.shape for im in images]
    for i in range(1, n):
        if shapes[i] != shapes[0]:
            raise ValueError(f"images 0 and {i} differ in size: {shapes[0]} vs {shapes[i]}")
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = similarity_to_distance(_pair_similarity(images[i], images[j], params))
    return d


def _pair_similarity(a, b, params: MsSsimParams) -> float:
    if isinstance(a, ImageRGB):
        if params.color_mode == "yuv":
            return combine_yuv(yuv_components(a, b, params), params.weights)
        a, b = to_grayscale(a), to_grayscale(b)
    return scale_components(a, b, params).combine(params.weights)


def consensus_distance(participant_clusterings: Sequence[Clustering]) -> np.ndarray:
    """Average over participants of ``1 - c_ij / min(c_i, c_j)``.

    ``c_i`` counts the groups containing item ``i`` and ``c_ij`` the groups
    containing both items, per participant.
    """
    if not participant_clusterings:
        raise ValueError("need at least one participant")
    n = participant_clusterings[0].n
    total = np.zeros((n, n))
    for p, cl in enumerate(participant_clusterings):
        if cl.n != n:
            raise MembershipError(f"participant {p} clusters {cl.n} items, expected {n}")
        m = cl.membership()
        ci = m.sum(axis=1)
        if np.any(ci == 0):
            raise MembershipError(f"participant {p} leaves items {np.nonzero(ci == 0)[0].tolist()} ungrouped")
        cij = m @ m.T
        total += 1.0 - cij / np.minimum.outer(ci, ci)
    d = total / len(participant_clusterings)
    np.fill_diagonal(d, 0.0)
    return d


# ---------------------------------------------------------------------------
# Ward agglomeration


class Merge(NamedTuple):
    a: int
    b: int
    height: float
    size: int


def ward_linkage(d) -> list[Merge]:
    """Ward agglomeration by Lance-Williams updates on squared distances.

    Clusters are numbered like scipy: leaves ``0..n-1``, the merge at step
    ``s`` creates cluster ``n + s``. Ties go to the lexicographically smallest
    ``(a, b)`` id pair. Heights are reported on the input (unsquared) scale.
    """
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    if d.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if n < 1:
        raise ValueError("need at least one item")
    total = 2 * n - 1
    sq = np.full((total, total), np.inf)
    sq[:n, :n] = d * d
    size = np.zeros(total, dtype=np.int64)
    size[:n] = 1
    active = np.zeros(total, dtype=bool)
    active[:n] = True
    upper = np.triu(np.ones((total, total), dtype=bool), k=1)
    merges: list[Merge] = []
    for step in range(n - 1):
        live = upper & active[:, None] & active[None, :]
        # argmin scans row-major, so ties resolve to the smallest (a, b)
        flat = int(np.argmin(np.where(live, sq, np.inf)))
        a, b = divmod(flat, total)
        v = sq[a, b]
        new = n + step
        na, nb = size[a], size[b]
        active[a] = active[b] = False
        ks = np.nonzero(active)[0]
        nk = size[ks]
        upd = ((na + nk) * sq[ks, a] + (nb + nk) * sq[ks, b] - nk * v) / (na + nb + nk)
        sq[ks, new] = sq[new, ks] = upd
        active[new] = True
        size[new] = na + nb
        merges.append(Merge(int(a), int(b), math.sqrt(max(float(v), 0.0)), int(na + nb)))
    return merges


def cut_tree(merges: Sequence[Merge], n: int, k: int) -> Clustering:
    """Flat clustering with exactly ``k`` groups from the first ``n - k`` merges."""
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    members = {i: {i} for i in range(n)}
    for step, m in enumerate(merges[: n - k]):
        members[n + step] = members.pop(m.a) | members.pop(m.b)
    groups = sorted((frozenset(g) for g in members.values()), key=min)
    return Clustering(n, tuple(groups))


def ward_cluster(d, k: int) -> tuple[list[Merge], Clustering]:
    """Ward dendrogram and its cut into ``k`` clusters."""
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    merges = ward_linkage(d)
    return merges, cut_tree(merges, n, k)


# ---------------------------------------------------------------------------
# agreement indices


class ClusterQuality(NamedTuple):
    ri: float
    ari: float
    nmi: float
    ami: float
    nmi_normalization: str = "arithmetic"
    ami_normalization: str = "max"


def _labels_of(c) -> np.ndarray:
    if isinstance(c, Clustering):
        if c.overlapping:
            raise MembershipError("agreement indices need hard clusterings")
        return c.labels()
    return np.asarray(c)


def contingency(a, b) -> np.ndarray:
    la, ia = np.unique(_labels_of(a), return_inverse=True)
    lb, ib = np.unique(_labels_of(b), return_inverse=True)
    if ia.shape != ib.shape:
        raise ValueError("clusterings cover different numbers of items")
    table = np.zeros((la.size, lb.size), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _comb2(v) -> int:
    return sum(int(x) * (int(x) - 1) // 2 for x in np.ravel(v))


def rand_index(table: np.ndarray) -> float:
    n = int(table.sum())
    total = n * (n - 1) // 2
    if total == 0:
        return 1.0
    same_both = _comb2(table)
    same_a = _comb2(table.sum(axis=1))
    same_b = _comb2(table.sum(axis=0))
    diff_both = total - same_a - same_b + same_both
    return (same_both + diff_both) / total


def adjusted_rand_index(table: np.ndarray) -> float:
    n = int(table.sum())
    total = n * (n - 1) // 2
    index = _comb2(table)
    sa = _comb2(table.sum(axis=1))
    sb = _comb2(table.sum(axis=0))
    if total == 0:
        return 1.0
    # integer pair counts, so rational arithmetic keeps the index exact
    expected = Fraction(sa * sb, total)
    top = Fraction(sa + sb, 2)
    if top == expected:
        # both partitions trivial (all singletons or one block)
        return 1.0
    return float((index - expected) / (top - expected))


def _entropy(counts: np.ndarray) -> float:
    counts = counts[counts > 0].astype(np.float64)
    n = counts.sum()
    p = counts / n
    return float(-np.sum(p * np.log(p)))


def mutual_information(table: np.ndarray) -> float:
    n = float(table.sum())
    a = table.sum(axis=1).astype(np.float64)
    b = table.sum(axis=0).astype(np.float64)
    i, j = np.nonzero(table)
    nij = table[i, j].astype(np.float64)
    mi = np.sum(nij / n * (np.log(nij) + math.log(n) - np.log(a[i]) - np.log(b[j])))
    return max(float(mi), 0.0)


def expected_mutual_information(table: np.ndarray) -> float:
    """E[MI] under the hypergeometric (fixed marginals) model."""
    n = int(table.sum())
    a = table.sum(axis=1).astype(np.int64)
    b = table.sum(axis=0).astype(np.int64)
    lg_n = gammaln(n + 1)
    emi = 0.0
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.float64)
            term = nij / n * (np.log(nij) + math.log(n) - math.log(ai) - math.log(bj))
            logp = (
                gammaln(ai + 1) + gammaln(bj + 1) + gammaln(n - ai + 1) + gammaln(n - bj + 1)
                - lg_n - gammaln(nij + 1) - gammaln(ai - nij + 1) - gammaln(bj - nij + 1)
                - gammaln(n - ai - bj + nij + 1)
            )
            emi += float(np.sum(term * np.exp(logp)))
    return emi


def _same_partition(table: np.ndarray) -> bool:
    return table.shape[0] == table.shape[1] and bool(np.all((table > 0).sum(axis=0) == 1)) and bool(
        np.all((table > 0).sum(axis=1) == 1)
    )


def cluster_quality(a, b) -> ClusterQuality:
    """Rand index, adjusted Rand index, NMI (arithmetic mean) and AMI (max).

    ``a`` and ``b`` are hard :class:`Clustering` objects or label sequences.
    """
    table = contingency(a, b)
    # contingency(b, a) is the transpose; fixing one orientation makes
    # every index bit-identical under argument swap
    flipped = table.T
    if (flipped.shape, flipped.ravel().tolist()) < (table.shape, table.ravel().tolist()):
        table = np.ascontiguousarray(flipped)
    if _same_partition(table):
        return ClusterQuality(1.0, 1.0, 1.0, 1.0)
    ri = rand_index(table)
    ari = adjusted_rand_index(table)
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    mi = mutual_information(table)
    eps = np.finfo(np.float64).eps
    if ha == 0.0 and hb == 0.0:
        nmi = ami = 1.0
    else:
        nmi = mi / max((ha + hb) / 2.0, eps)
        emi = expected_mutual_information(table)
        denom = max(ha, hb) - emi
        ami = (mi - emi) / (denom if abs(denom) > eps else eps)
    return ClusterQuality(ri, ari, float(nmi), float(ami))


# ---------------------------------------------------------------------------
# CSV interchange


def read_clustering_csv(path, n: int | None = None) -> Clustering:
    """Read ``item_id,group_id`` rows; repeated items make the clustering overlapping."""
    pairs = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"item_id", "group_id"} <= set(reader.fieldnames or ()):
            raise ValueError(f"{path}: expected columns item_id,group_id")
        for row in reader:
            pairs.append((int(row["item_id"]), row["group_id"]))
    groups: dict = {}
    items = [i for i, _ in pairs]
    for i, g in pairs:
        groups.setdefault(g, set()).add(i)
    overlapping = len(items) != len(set(items))
    if n is None:
        n = max(items) + 1 if items else 0
    return Clustering(n, tuple(frozenset(g) for g in groups.values()), overlapping=overlapping)


def write_clustering_csv(cl: Clustering, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item_id", "group_id"])
        rows = sorted((i, gi) for gi, g in enumerate(cl.groups) for i in g)
        w.writerows(rows)


def read_distance_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = [[float(v) for v in r[1:]] for r in rows[1:]]
    return check_distance_matrix(np.array(body, dtype=np.float64))


def write_distance_csv(d, path) -> None:
    d = np.asarray(d)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item"] + [str(i) for i in range(d.shape[0])])
        for i, row in enumerate(d):
            w.writerow([i] + [repr(float(v)) for v in row])


def write_dendrogram_csv(merges: Iterable[Merge], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "cluster_a", "cluster_b", "height", "size"])
        for s, m in enumerate(merges):
            w.writerow([s, m.a, m.b, repr(float(m.height)), m.size])

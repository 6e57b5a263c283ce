"""Accessory-free rasterizer for trivariate (Q1, Q2, N) scatter encodings.

Encoding names list the channels for Q1, Q2 and N in that order, e.g.
``y_x_color`` puts Q1 on vertical position, Q2 on horizontal position and
the category on colour. No axes, grids, labels or legends are drawn.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from vizsim.imagecore import BT601, ImageRGB, quantize

RGB = tuple[float, float, float]

ENCODINGS = ("y_x_color", "x_y_color", "size_y_x", "size_x_y", "x_y_row", "color_y_x")
COLOR_CATEGORY_ENCODINGS = ("y_x_color", "x_y_color")

SUPERSAMPLE = 4


class DomainError(ValueError):
    """A data value lies outside the fixed scale domain."""


class PaletteError(ValueError):
    """More categories than palette entries."""


@dataclass(frozen=True, eq=False)
class DatasetTable:
    """Rows of (category, q1, q2) plus the explicit category order."""

    category: tuple
    q1: np.ndarray
    q2: np.ndarray
    category_order: tuple

    def __post_init__(self):
        cat = tuple(self.category)
        q1 = np.array(self.q1, dtype=np.float64)
        q2 = np.array(self.q2, dtype=np.float64)
        order = tuple(self.category_order)
        if not (len(cat) == q1.shape[0] == q2.shape[0]) or q1.ndim != 1 or q2.ndim != 1:
            raise ValueError("category, q1 and q2 must be equal-length 1-D sequences")
        if len(set(order)) != len(order):
            raise ValueError("category_order has duplicates")
        if not np.all(np.isfinite(q1)) or not np.all(np.isfinite(q2)):
            raise ValueError("q1/q2 must be finite")
        known = set(order)
        for i, c in enumerate(cat):
            if c not in known:
                raise ValueError(f"row {i}: category {c!r} not in category_order")
        q1.setflags(write=False)
        q2.setflags(write=False)
        object.__setattr__(self, "category", cat)
        object.__setattr__(self, "q1", q1)
        object.__setattr__(self, "q2", q2)
        object.__setattr__(self, "category_order", order)

    def __len__(self) -> int:
        return len(self.category)

    def __eq__(self, other):
        if not isinstance(other, DatasetTable):
            return NotImplemented
        return (
            self.category == other.category
            and self.category_order == other.category_order
            and self.q1.tobytes() == other.q1.tobytes()
            and self.q2.tobytes() == other.q2.tobytes()
        )

    @classmethod
    def from_rows(cls, rows: Iterable[tuple], category_order: Sequence | None = None) -> "DatasetTable":
        rows = list(rows)
        cats = [r[0] for r in rows]
        if category_order is None:
            category_order = list(dict.fromkeys(cats))
        return cls(
            tuple(cats),
            np.array([r[1] for r in rows], dtype=np.float64),
            np.array([r[2] for r in rows], dtype=np.float64),
            tuple(category_order),
        )

    def rows(self) -> list[tuple]:
        return [(c, float(a), float(b)) for c, a, b in zip(self.category, self.q1, self.q2)]

    def category_index(self) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.category_order)}
        return np.array([lookup[c] for c in self.category], dtype=np.int64)

    def rows_of(self, label) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.category) if c == label], dtype=np.int64)

    def with_q1(self, q1) -> "DatasetTable":
        return DatasetTable(self.category, q1, self.q2, self.category_order)


def read_table_csv(path) -> DatasetTable:
    """Read a ``category,q1,q2`` CSV; category order follows first appearance."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"category", "q1", "q2"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = [(r["category"], float(r["q1"]), float(r["q2"])) for r in reader]
    return DatasetTable.from_rows(rows)


def write_table_csv(table: DatasetTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["category", "q1", "q2"])
        for c, a, b in table.rows():
            w.writerow([c, repr(a), repr(b)])


def equiluminant_palette(n: int = 30, luma: float = 0.5, seed: int = 7) -> tuple[RGB, ...]:
    """``n`` colours of identical BT.601 luma, spread around the hue circle.

    Hues advance by the golden angle from a seeded start; the chroma radius is
    the largest that keeps every hue inside the RGB cube.
    """
    start = np.random.default_rng(seed).uniform(0.0, 2.0 * math.pi)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    # conservative in-gamut radius over a dense hue sweep
    probe = np.linspace(0.0, 2.0 * math.pi, 720, endpoint=False)
    radius = min(_max_chroma(luma, t) for t in probe)
    out = []
    for i in range(n):
        rgb = _yuv_to_rgb(luma, radius, start + i * golden)
        out.append(tuple(float(v) for v in np.clip(rgb, 0.0, 1.0)))
    return tuple(out)


def _yuv_to_rgb(luma: float, radius: float, theta: float) -> np.ndarray:
    du, dv = radius * math.cos(theta), radius * math.sin(theta)
    b = luma + 2.0 * (1.0 - BT601.kb) * du
    r = luma + 2.0 * (1.0 - BT601.kr) * dv
    g = (luma - BT601.kr * r - BT601.kb * b) / BT601.kg
    return np.array([r, g, b])


def _max_chroma(luma: float, theta: float) -> float:
    lo, hi = 0.0, 0.5
    for _ in range(50):
        mid = (lo + hi) / 2
        rgb = _yuv_to_rgb(luma, mid, theta)
        if np.all(rgb >= 0.0) and np.all(rgb <= 1.0):
            lo = mid
        else:
            hi = mid
    return lo


# light-to-dark sequential ramp used when Q1 is mapped to colour
_SEQUENTIAL = np.array(
    [
        (0.993, 0.906, 0.144),
        (0.369, 0.788, 0.382),
        (0.128, 0.567, 0.551),
        (0.231, 0.322, 0.545),
        (0.267, 0.005, 0.329),
    ]
)


def sequential_color(t: float) -> RGB:
    t = min(max(float(t), 0.0), 1.0) * (len(_SEQUENTIAL) - 1)
    i = min(int(t), len(_SEQUENTIAL) - 2)
    f = t - i
    c = _SEQUENTIAL[i] * (1.0 - f) + _SEQUENTIAL[i + 1] * f
    return (float(c[0]), float(c[1]), float(c[2]))


@dataclass(frozen=True)
class EncodingSpec:
    """Visual encoding and canvas parameters.

    ``mark_color`` is used by encodings that do not put the category on
    colour. Domains are fixed so that images of different datasets share
    scales.
    """

    name: str = "y_x_color"
    width: int = 256
    height: int = 256
    mark_radius: float = 4.0
    palette: tuple[RGB, ...] = field(default_factory=equiluminant_palette)
    size_range: tuple[float, float] = (2.0, 12.0)
    domain_q1: tuple[float, float] = (0.0, 1.0)
    domain_q2: tuple[float, float] = (0.0, 1.0)
    mark_color: RGB = (0.20, 0.35, 0.60)
    quantize: bool = True

    def __post_init__(self):
        if self.name not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.name!r}; expected one of {ENCODINGS}")
        if self.width < 1 or self.height < 1:
            raise ValueError("canvas must be at least 1x1")
        if self.mark_radius <= 0:
            raise ValueError("mark_radius must be positive")
        lo, hi = self.size_range
        if not 0 < lo <= hi:
            raise ValueError(f"size_range {self.size_range} must satisfy 0 < min <= max")
        for nm in ("domain_q1", "domain_q2"):
            a, b = getattr(self, nm)
            if not a < b:
                raise ValueError(f"{nm} must be an increasing interval")
        object.__setattr__(self, "palette", tuple(tuple(map(float, c)) for c in self.palette))

    def swap_palette(self, i: int, j: int) -> "EncodingSpec":
        pal = list(self.palette)
        pal[i], pal[j] = pal[j], pal[i]
        return replace(self, palette=tuple(pal))


def _unit(v: float, dom: tuple[float, float]) -> float:
    return (v - dom[0]) / (dom[1] - dom[0])


def _check_domains(data: DatasetTable, spec: EncodingSpec) -> None:
    for var, dom in (("q1", spec.domain_q1), ("q2", spec.domain_q2)):
        vals = getattr(data, var)
        bad = np.nonzero((vals < dom[0]) | (vals > dom[1]))[0]
        if bad.size:
            i = int(bad[0])
            raise DomainError(f"row {i}: {var}={vals[i]!r} outside domain [{dom[0]}, {dom[1]}]")


def mark_layout(data: DatasetTable, spec: EncodingSpec) -> list[tuple[float, float, float, RGB]]:
    """Resolve each row to ``(cx, cy, radius, rgb)`` in pixel coordinates.

    Pixel ``(row, col)`` spans ``[col, col + 1) x [row, row + 1)``; larger values
    go right and up.
    """
    _check_domains(data, spec)
    name = spec.name
    ncat = len(data.category_order)
    if name in COLOR_CATEGORY_ENCODINGS and ncat > len(spec.palette):
        raise PaletteError(f"{ncat} categories but only {len(spec.palette)} palette entries")
    W, H = float(spec.width), float(spec.height)
    pad = spec.size_range[1] if name.startswith("size") else spec.mark_radius
    cat_idx = data.category_index()

    def xpos(t):
        return pad + t * (W - 2 * pad)

    def ypos(t, top=0.0, bottom=H):
        return bottom - pad - t * ((bottom - top) - 2 * pad)

    def band(i, extent):
        return (i + 0.5) * extent / ncat

    out = []
    for row in range(len(data)):
        t1 = _unit(data.q1[row], spec.domain_q1)
        t2 = _unit(data.q2[row], spec.domain_q2)
        c = int(cat_idx[row])
        r = spec.mark_radius
        color = spec.mark_color
        if name == "y_x_color":
            cx, cy, color = xpos(t2), ypos(t1), spec.palette[c]
        elif name == "x_y_color":
            cx, cy, color = xpos(t1), ypos(t2), spec.palette[c]
        elif name == "size_y_x":
            r = spec.size_range[0] + t1 * (spec.size_range[1] - spec.size_range[0])
            cx, cy = band(c, W), ypos(t2)
        elif name == "size_x_y":
            r = spec.size_range[0] + t1 * (spec.size_range[1] - spec.size_range[0])
            cx, cy = xpos(t2), H - band(c, H)
        elif name == "x_y_row":
            top = c * H / ncat
            bottom = (c + 1) * H / ncat
            span = max((bottom - top) - 2 * pad, 0.0)
            cx, cy = xpos(t1), bottom - (bottom - top - span) / 2 - t2 * span
        else:  # color_y_x
            cx, cy, color = band(c, W), ypos(t2), sequential_color(t1)
        out.append((cx, cy, r, color))
    return out


def _disk_coverage(cx: float, cy: float, r: float, width: int, height: int):
    """Fractional coverage of a disk over the pixels of its bounding box."""
    c0 = max(int(math.floor(cx - r)), 0)
    c1 = min(int(math.ceil(cx + r)), width)
    r0 = max(int(math.floor(cy - r)), 0)
    r1 = min(int(math.ceil(cy + r)), height)
    if c0 >= c1 or r0 >= r1:
        return None
    offs = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE
    xs = (np.arange(c0, c1)[:, None] + offs[None, :]).ravel() - cx
    ys = (np.arange(r0, r1)[:, None] + offs[None, :]).ravel() - cy
    inside = (ys[:, None] ** 2 + xs[None, :] ** 2) <= r * r
    cov = inside.reshape(r1 - r0, SUPERSAMPLE, c1 - c0, SUPERSAMPLE).mean(axis=(1, 3))
    return r0, r1, c0, c1, cov


def render(data: DatasetTable, spec: EncodingSpec | None = None) -> ImageRGB:
    """Rasterize ``data`` on a white canvas; marks are drawn in row order."""
    spec = spec or EncodingSpec()
    canvas = np.ones((spec.height, spec.width, 3), dtype=np.float64)
    for cx, cy, r, color in mark_layout(data, spec):
        hit = _disk_coverage(cx, cy, r, spec.width, spec.height)
        if hit is None:
            continue
        r0, r1, c0, c1, cov = hit
        a = cov[..., None]
        region = canvas[r0:r1, c0:c1]
        canvas[r0:r1, c0:c1] = region * (1.0 - a) + np.asarray(color) * a
    img = ImageRGB.from_array(np.clip(canvas, 0.0, 1.0))
    return quantize(img) if spec.quantize else img

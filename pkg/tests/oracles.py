"""Slow reference computations used only by the tests."""

import numpy as np


def naive_components(x, y, taps, c1, c2, c3, padding="zero"):
    """Luminance, contrast and structure per window, by explicit loops.

    Statistics use the two-pass weighted form sum w (x - mu)^2 rather than
    E[x^2] - mu^2, so this shares no arithmetic path with the library.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    size = taps.shape[0]
    r = size // 2
    if padding == "zero":
        xp, yp = np.pad(x, r), np.pad(y, r)
        rows, cols = x.shape
    else:
        xp, yp = x, y
        rows, cols = x.shape[0] - 2 * r, x.shape[1] - 2 * r
    lum = np.empty((rows, cols))
    con = np.empty((rows, cols))
    st = np.empty((rows, cols))
    for i in range(rows):
        for j in range(cols):
            wx = xp[i : i + size, j : j + size]
            wy = yp[i : i + size, j : j + size]
            mx = float(np.sum(taps * wx))
            my = float(np.sum(taps * wy))
            vx = float(np.sum(taps * (wx - mx) ** 2))
            vy = float(np.sum(taps * (wy - my) ** 2))
            cov = float(np.sum(taps * (wx - mx) * (wy - my)))
            sx, sy = np.sqrt(vx), np.sqrt(vy)
            lum[i, j] = min((2 * mx * my + c1) / (mx**2 + my**2 + c1), 1.0)
            con[i, j] = min(max((2 * sx * sy + c2) / (vx + vy + c2), 0.0), 1.0)
            st[i, j] = min(max((cov + c3) / (sx * sy + c3), -1.0), 1.0)
    return lum, con, st


def naive_ssim_map(x, y, taps, c1, c2, c3, padding="zero"):
    lum, con, st = naive_components(x, y, taps, c1, c2, c3, padding)
    return lum * con * st


def half(p):
    """2x2 block mean, dropping a trailing odd row/column."""
    h, w = p.shape
    p = p[: h // 2 * 2, : w // 2 * 2]
    return p.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def naive_ms_ssim(x, y, weights, taps, c1, c2, c3):
    """Multi-scale SSIM assembled from the naive components."""
    prod = 1.0
    for w in weights[:-1]:
        _, con, st = naive_components(x, y, taps, c1, c2, c3)
        prod *= max(float(np.mean(con * st)), 1e-6) ** w
        x, y = half(x), half(y)
    lum, con, st = naive_components(x, y, taps, c1, c2, c3)
    wk = weights[-1]
    if wk == 1:
        coarse = lum * con * st
    else:
        coarse = np.maximum(lum, 1e-6) * np.maximum(con, 1e-6) ** wk * np.maximum(st, 1e-6) ** wk
    return float(np.mean(coarse)) * prod


def brute_force_partitions(n, k):
    """All set partitions of range(n) into exactly k blocks."""

    def rec(i, blocks):
        if i == n:
            if len(blocks) == k:
                yield [list(b) for b in blocks]
            return
        for b in blocks:
            b.append(i)
            yield from rec(i + 1, blocks)
            b.pop()
        if len(blocks) < k:
            blocks.append([i])
            yield from rec(i + 1, blocks)
            blocks.pop()

    yield from rec(0, [])
